"""Experiment orchestration: two-stage training, evaluation, trajectories.

An :class:`Experiment` owns one output directory (guarded by a lockfile),
materializes or ingests its dataset, and writes every artifact with the
experiment's config hash embedded so evaluation can refuse mismatched
checkpoints.  Dataset image reads flow through an access log tagged with
the pipeline phase, which is how train/test hygiene is audited.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np
from filelock import FileLock, Timeout
from PIL import Image

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ExperimentConfig
from .data import (
    AccessLog,
    DatasetSplit,
    load_sample_image,
    make_split,
    model_to_uint8,
    model_to_unit,
    parse_matrix_pose,
    parse_pose_list,
)
from .errors import CheckpointError, ConfigError, EmptyDataset, LockError
from .gennet import EpochSink, GenNetPredictor, train_gennet
from .metrics import EvalReport, evaluate
from .pose import Pose, Trajectory, pose_distance
from .refinenet import RefinePredictor, train_refinenet
from .perceptual import vgg16_extractor
from .toyscene import generate_toy_scene, materialize_toy_dataset


def nearest_poses(query: Pose, train, k: int, alpha: float = 1.0):
    """Top-k training samples by pose distance, ascending; ties keep dataset order.

    Returns (sample, distance) pairs; asking for more than exist truncates.
    """
    train = list(train)
    if k < 1:
        raise ValueError("k must be >= 1")
    if not train:
        raise EmptyDataset("no training samples to search")
    dists = np.array([pose_distance(query, s.pose, alpha) for s in train])
    order = np.argsort(dists, kind="stable")[:k]
    return [(train[i], float(dists[i])) for i in order]


class _CsvLossSink(EpochSink):
    def __init__(self, path: str, config_hash: str, snapshot_every: int,
                 snapshot_fn=None, checkpoint_fn=None, start_epoch: int = 0):
        self.path = path
        self.snapshot_every = snapshot_every
        self.snapshot_fn = snapshot_fn
        self.checkpoint_fn = checkpoint_fn
        mode = "a" if start_epoch > 0 and os.path.exists(path) else "w"
        self._fh = open(path, mode, newline="")
        self._writer = csv.writer(self._fh)
        if mode == "w":
            self._fh.write(f"# config_hash={config_hash}\n")
            self._writer.writerow(["epoch", "loss", "d_loss"])

    def on_epoch(self, epoch, loss, model, **extras):
        self._writer.writerow([epoch, f"{loss:.6f}",
                               f"{extras.get('d_loss', ''):.6f}" if "d_loss" in extras else ""])
        self._fh.flush()
        if self.snapshot_every and epoch % self.snapshot_every == 0:
            if self.snapshot_fn is not None:
                self.snapshot_fn(epoch, model)
            if self.checkpoint_fn is not None:
                self.checkpoint_fn(epoch, model, extras.get("optimizer"))

    def close(self):
        self._fh.close()


class Experiment:
    """All operations over one experiment output directory."""

    STAGE1 = "stage1"
    STAGE2_PL = "stage2_pl"
    STAGE2_WO_PL = "stage2_wo_pl"

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.out_dir = config.out_dir
        os.makedirs(self.out_dir, exist_ok=True)
        self.hash = config.config_hash()
        self.access_log = AccessLog()
        self._lock = FileLock(os.path.join(self.out_dir, ".lock"))
        with open(os.path.join(self.out_dir, "config.json"), "w") as fh:
            obj = config.to_dict()
            obj["config_hash"] = self.hash
            json.dump(obj, fh, indent=2)

    # -- dataset -----------------------------------------------------------

    def dataset_dir(self) -> str:
        return os.path.join(self.out_dir, "dataset")

    def load_split(self) -> DatasetSplit:
        ds = self.config.dataset
        if ds.kind == "toy":
            pose_list = os.path.join(self.dataset_dir(), "poses.txt")
            if not os.path.exists(pose_list):
                spec = generate_toy_scene(ds.scene_seed, ds.n_primitives,
                                          self.config.gennet.output_size)
                materialize_toy_dataset(spec, ds.n_train, ds.n_test,
                                        ds.sampler_seed, self.dataset_dir())
            with open(pose_list) as fh:
                samples = parse_pose_list(fh, quat_order=ds.quat_order)
            return make_split(samples, test_sequences={"toy_test"})
        if ds.kind == "cambridge-style":
            self.config.validate_paths()
            samples = []
            for rel in ds.pose_files:
                with open(os.path.join(ds.root, rel)) as fh:
                    samples.extend(parse_pose_list(fh, quat_order=ds.quat_order))
            return make_split(samples, test_sequences=set(ds.test_sequences))
        if ds.kind == "sevenscenes-style":
            self.config.validate_paths()
            samples = self._scan_matrix_dataset(ds.root)
            return make_split(samples, test_sequences=set(ds.test_sequences))
        raise ConfigError(f"unhandled dataset kind {ds.kind!r}")

    @staticmethod
    def _scan_matrix_dataset(root: str):
        """Sequences are subdirectories; each frame is image + 4x4 pose file."""
        from .data import SceneSample

        samples = []
        for seq in sorted(os.listdir(root)):
            seq_dir = os.path.join(root, seq)
            if not os.path.isdir(seq_dir):
                continue
            for name in sorted(os.listdir(seq_dir)):
                if not name.endswith(".pose.txt"):
                    continue
                stem = name[:-len(".pose.txt")]
                image_rel = None
                for suffix in (".color.png", ".png", ".color.jpg", ".jpg"):
                    cand = os.path.join(seq, stem + suffix)
                    if os.path.exists(os.path.join(root, cand)):
                        image_rel = cand
                        break
                if image_rel is None:
                    continue
                with open(os.path.join(seq_dir, name)) as fh:
                    pose = parse_matrix_pose(fh)
                samples.append(SceneSample(image_ref=image_rel, pose=pose,
                                           sequence_id=seq))
        if not samples:
            raise EmptyDataset(f"no pose files found under {root!r}")
        return samples

    def _loader(self, phase: str):
        ds = self.config.dataset
        root = self.dataset_dir() if ds.kind == "toy" else ds.root
        size = self.config.gennet.output_size

        def load(sample):
            return load_sample_image(sample, size=size, root=root,
                                     access_log=self.access_log, phase=phase)

        return load

    def save_access_log(self):
        path = os.path.join(self.out_dir, "access_log.json")
        with open(path, "w") as fh:
            json.dump({"config_hash": self.hash, "entries": self.access_log.entries},
                      fh, indent=2)
        return path

    # -- checkpoints ---------------------------------------------------------

    def _ckpt_base(self, stage: str) -> str:
        return os.path.join(self.out_dir, stage, "checkpoint")

    def checkpoint_path(self, stage: str) -> str:
        return self._ckpt_base(stage) + ".npz"

    def load_stage_checkpoint(self, stage: str) -> Checkpoint:
        ckpt = load_checkpoint(self._ckpt_base(stage))
        if ckpt.extra.get("experiment_hash") != self.hash:
            raise CheckpointError(
                f"{stage} checkpoint was produced by a different experiment config "
                f"(hash {ckpt.extra.get('experiment_hash')!r} != {self.hash!r})")
        return ckpt

    def _save_stage_checkpoint(self, ckpt: Checkpoint, stage: str):
        ckpt.extra["experiment_hash"] = self.hash
        save_checkpoint(ckpt, self._ckpt_base(stage))

    # -- stages --------------------------------------------------------------

    def run_stage1(self, resume: bool = True) -> Checkpoint:
        """Train the coarse generator; writes loss CSV, sample grids, checkpoint."""
        with self._acquire():
            split = self.load_split()
            stage_dir = os.path.join(self.out_dir, self.STAGE1)
            os.makedirs(stage_dir, exist_ok=True)
            resume_from = None
            if resume and os.path.exists(self.checkpoint_path(self.STAGE1)):
                resume_from = self.load_stage_checkpoint(self.STAGE1)
                if resume_from.step >= self.config.stage1.epochs:
                    return resume_from
            samples_dir = os.path.join(stage_dir, "samples")
            os.makedirs(samples_dir, exist_ok=True)
            grid_poses = [s.pose for s in split.train[:4]]
            targets = [self._loader("train_stage1")(s) for s in split.train[:4]]

            def snapshot(epoch, model):
                self._save_sample_grid(model, grid_poses, targets,
                                       os.path.join(samples_dir, f"epoch_{epoch:05d}.png"))

            def periodic_checkpoint(epoch, model, optimizer):
                # an interrupted run resumes from the last of these
                from .checkpoint import checkpoint_from_module

                ckpt = checkpoint_from_module(
                    model, kind="gennet", config=self.config.gennet.to_dict(),
                    step=epoch, seed=self.config.stage1.seed, optimizer=optimizer,
                    extra={"hparams": self.config.stage1.to_dict()})
                self._save_stage_checkpoint(ckpt, self.STAGE1)

            sink = _CsvLossSink(os.path.join(stage_dir, "loss.csv"), self.hash,
                                self.config.snapshot_every, snapshot_fn=snapshot,
                                checkpoint_fn=periodic_checkpoint,
                                start_epoch=resume_from.step if resume_from else 0)
            try:
                ckpt = train_gennet(split, self.config.stage1, self.config.gennet,
                                    sink=sink, image_loader=self._loader("train_stage1"),
                                    resume_from=resume_from)
            finally:
                sink.close()
            self._save_stage_checkpoint(ckpt, self.STAGE1)
            self.save_access_log()
            return ckpt

    def run_stage2(self, stage1_ckpt: Checkpoint | None = None,
                   no_perceptual: bool = False) -> Checkpoint:
        """Train the adversarial refiner against the frozen stage-1 network."""
        with self._acquire():
            if stage1_ckpt is None:
                stage1_ckpt = self.load_stage_checkpoint(self.STAGE1)
            split = self.load_split()
            stage = self.STAGE2_WO_PL if no_perceptual else self.STAGE2_PL
            stage_dir = os.path.join(self.out_dir, stage)
            os.makedirs(stage_dir, exist_ok=True)
            refine_cfg = self.config.refine
            if no_perceptual:
                refine_cfg = refine_cfg.without_perceptual()
            fx = None
            if refine_cfg.lambda2 != 0.0 or refine_cfg.lambda3 != 0.0:
                fx = self._feature_extractor()
            sink = _CsvLossSink(os.path.join(stage_dir, "loss.csv"), self.hash,
                                snapshot_every=0)
            try:
                ckpt = train_refinenet(stage1_ckpt, split, refine_cfg,
                                       self.config.stage2, fx=fx, sink=sink,
                                       image_loader=self._loader("train_stage2"))
            finally:
                sink.close()
            ckpt.extra["variant"] = "refined_wo_pl" if no_perceptual else "refined_pl"
            self._save_stage_checkpoint(ckpt, stage)
            self.save_access_log()
            return ckpt

    def _feature_extractor(self):
        return vgg16_extractor(self.config.feature_extractor, seed=self.config.seed)

    # -- evaluation ------------------------------------------------------------

    def run_eval(self, ckpts: dict | None = None) -> EvalReport:
        """Synthesize every test pose per variant and compute the metric table.

        ``ckpts`` maps variant name -> checkpoint; by default uses whatever
        stages exist on disk (coarse always, refined variants when trained).
        """
        with self._acquire():
            if ckpts is None:
                ckpts = {"coarse": self.load_stage_checkpoint(self.STAGE1)}
                for stage, variant in ((self.STAGE2_PL, "refined_pl"),
                                       (self.STAGE2_WO_PL, "refined_wo_pl")):
                    if os.path.exists(self.checkpoint_path(stage)):
                        ckpts[variant] = self.load_stage_checkpoint(stage)
            if "coarse" not in ckpts:
                raise CheckpointError("evaluation needs the stage-1 checkpoint")
            for ckpt in ckpts.values():
                if ckpt.extra.get("experiment_hash") not in (None, self.hash):
                    raise CheckpointError("checkpoint/config hash mismatch")

            split = self.load_split()
            loader = self._loader("eval")
            refs = [model_to_unit(loader(s)) for s in split.test]
            predictor = GenNetPredictor(ckpts["coarse"])
            coarse_chw = [predictor(s.pose) for s in split.test]
            variants = {"coarse": [model_to_unit(np.transpose(c, (1, 2, 0)))
                                   for c in coarse_chw]}
            for name, ckpt in ckpts.items():
                if name == "coarse":
                    continue
                refiner = RefinePredictor(ckpt)
                variants[name] = [model_to_unit(np.transpose(refiner(c), (1, 2, 0)))
                                  for c in coarse_chw]
            report = evaluate(variants, refs)
            eval_dir = os.path.join(self.out_dir, "eval")
            os.makedirs(eval_dir, exist_ok=True)
            with open(os.path.join(eval_dir, "report.json"), "w") as fh:
                fh.write(report.to_json(config_hash=self.hash))
            with open(os.path.join(eval_dir, "report.txt"), "w") as fh:
                fh.write(f"# config_hash={self.hash}\n" + report.to_table() + "\n")
            self.save_access_log()
            return report

    # -- synthesis --------------------------------------------------------------

    def predictors(self, stage: str = "refined"):
        gen = GenNetPredictor(self.load_stage_checkpoint(self.STAGE1))
        refiner = None
        if stage == "refined":
            refiner = RefinePredictor(self.load_stage_checkpoint(self.STAGE2_PL))
        return gen, refiner

    def render_trajectory(self, trajectory: Trajectory, frames_dir: str,
                          stage: str = "refined") -> list:
        """One PNG per frame, synthesized independently (no temporal coupling)."""
        gen, refiner = self.predictors(stage)
        return render_trajectory_frames(gen, refiner, trajectory, frames_dir)

    def _save_sample_grid(self, model, poses, targets, path):
        import torch

        was_training = model.training
        model.eval()
        with torch.no_grad():
            vecs = torch.from_numpy(np.stack([p.flatten() for p in poses]).astype(np.float32))
            preds = model(vecs).numpy()
        if was_training:
            model.train()
        rows = []
        for pred, target in zip(preds, targets):
            pred_img = model_to_uint8(np.transpose(pred, (1, 2, 0)))
            target_img = model_to_uint8(target)
            rows.append(np.concatenate([pred_img, target_img], axis=1))
        Image.fromarray(np.concatenate(rows, axis=0)).save(path)

    def _acquire(self):
        try:
            return self._lock.acquire(timeout=0.5)
        except Timeout as exc:
            raise LockError(f"output directory {self.out_dir!r} is locked by "
                            f"another experiment process") from exc


def render_trajectory_frames(gen: GenNetPredictor, refiner: RefinePredictor | None,
                             trajectory: Trajectory, frames_dir: str) -> list:
    os.makedirs(frames_dir, exist_ok=True)
    paths = []
    for i, pose in enumerate(trajectory.poses):
        img = gen(pose)
        if refiner is not None:
            img = refiner(img)
        path = os.path.join(frames_dir, f"frame_{i:05d}.png")
        Image.fromarray(model_to_uint8(np.transpose(img, (1, 2, 0)))).save(path)
        paths.append(path)
    return paths


def run_stage1(config: ExperimentConfig, resume: bool = True) -> Checkpoint:
    return Experiment(config).run_stage1(resume=resume)


def run_stage2(config: ExperimentConfig, stage1_ckpt: Checkpoint | None = None,
               no_perceptual: bool = False) -> Checkpoint:
    return Experiment(config).run_stage2(stage1_ckpt, no_perceptual=no_perceptual)


def run_eval(config: ExperimentConfig, ckpts: dict | None = None) -> EvalReport:
    return Experiment(config).run_eval(ckpts)
