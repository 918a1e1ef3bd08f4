"""Experiment configuration: one JSON-serializable tree drives a whole run.

The semantic hash covers everything that affects results (dataset, models,
hyperparameters, seeds) but not the output directory, so re-running the same
experiment elsewhere reproduces byte-equal artifacts with matching hashes.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

from .checkpoint import config_hash_of
from .errors import ConfigError
from .gennet import GenNetConfig, Stage1Hparams
from .refinenet import RefineConfig, Stage2Hparams

DATASET_KINDS = ("toy", "cambridge-style", "sevenscenes-style")


@dataclass
class DatasetConfig:
    kind: str = "toy"
    root: str | None = None          # disk datasets: directory all paths resolve against
    pose_files: tuple = ()           # cambridge-style: pose-list files under root
    test_sequences: tuple = ()
    quat_order: str = "wxyz"
    scene_seed: int = 42             # toy: procedural scene layout
    n_primitives: int = 5
    n_train: int = 200
    n_test: int = 50
    sampler_seed: int = 7

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ConfigError(f"dataset kind must be one of {DATASET_KINDS}, got {self.kind!r}")
        object.__setattr__(self, "pose_files", tuple(self.pose_files))
        object.__setattr__(self, "test_sequences", tuple(self.test_sequences))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        d = dict(d)
        d["pose_files"] = tuple(d.get("pose_files", ()))
        d["test_sequences"] = tuple(d.get("test_sequences", ()))
        return cls(**d)


@dataclass
class ExperimentConfig:
    out_dir: str
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    gennet: GenNetConfig = field(default_factory=GenNetConfig)
    refine: RefineConfig = field(default_factory=RefineConfig)
    stage1: Stage1Hparams = field(default_factory=Stage1Hparams)
    stage2: Stage2Hparams = field(default_factory=Stage2Hparams)
    seed: int = 0
    feature_extractor: str = "random"   # "random" | "pretrained"
    snapshot_every: int = 500           # sample-grid cadence, in epochs
    nearest_alpha: float = 1.0

    def semantic_dict(self) -> dict:
        """Everything that affects results; excludes the output location."""
        return {
            "dataset": self.dataset.to_dict(),
            "gennet": self.gennet.to_dict(),
            "refine": self.refine.to_dict(),
            "stage1": self.stage1.to_dict(),
            "stage2": self.stage2.to_dict(),
            "seed": self.seed,
            "feature_extractor": self.feature_extractor,
        }

    def config_hash(self) -> str:
        return config_hash_of(self.semantic_dict())

    def to_dict(self) -> dict:
        d = self.semantic_dict()
        d["out_dir"] = self.out_dir
        d["snapshot_every"] = self.snapshot_every
        d["nearest_alpha"] = self.nearest_alpha
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(
            out_dir=d["out_dir"],
            dataset=DatasetConfig.from_dict(d["dataset"]),
            gennet=GenNetConfig.from_dict(d["gennet"]),
            refine=RefineConfig.from_dict(d["refine"]),
            stage1=Stage1Hparams(**d["stage1"]),
            stage2=Stage2Hparams(**d["stage2"]),
            seed=d.get("seed", 0),
            feature_extractor=d.get("feature_extractor", "random"),
            snapshot_every=d.get("snapshot_every", 500),
            nearest_alpha=d.get("nearest_alpha", 1.0),
        )

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        return cls.from_dict(json.loads(text))

    def validate_paths(self):
        """Referenced dataset paths must exist before any training starts."""
        if self.dataset.kind == "toy":
            return
        root = self.dataset.root
        if not root or not os.path.isdir(root):
            raise ConfigError(f"dataset root {root!r} does not exist")
        for rel in self.dataset.pose_files:
            path = os.path.join(root, rel)
            if not os.path.isfile(path):
                raise ConfigError(f"pose file {path!r} does not exist")

    @classmethod
    def toy_default(cls, out_dir: str, image_size: int = 64, seed: int = 0,
                    stage1_epochs: int = 150, stage2_epochs: int = 150,
                    n_train: int = 200, n_test: int = 50) -> "ExperimentConfig":
        """Desk-scale toy experiment that trains in minutes on a CPU."""
        return cls(
            out_dir=out_dir,
            dataset=DatasetConfig(kind="toy", n_train=n_train, n_test=n_test),
            gennet=GenNetConfig.small(image_size),
            refine=RefineConfig.small(image_size),
            stage1=Stage1Hparams(lr=5e-4, batch_size=48, epochs=stage1_epochs, seed=seed),
            stage2=Stage2Hparams(lr=2e-4, batch_size=8, epochs=stage2_epochs, seed=seed + 1),
            seed=seed,
            snapshot_every=50,
        )


def load_config(path: str) -> ExperimentConfig:
    with open(path) as fh:
        cfg = ExperimentConfig.from_json(fh.read())
    cfg.validate_paths()
    return cfg
