"""Dataset ingestion: pose-list parsing, image preprocessing, and splits.

Two on-disk layouts are supported:

* Pose-list text files (one image per line: relative path + 7 reals), the
  layout used by urban relocalization datasets and by materialized toy
  scenes.
* 4x4 homogeneous pose matrices stored as 16 whitespace-separated reals,
  the layout used by tracked RGB-D indoor datasets.

All images are preprocessed to model space: bilinear resize to a square
raster, then mapped linearly from [0, 255] to [-1, 1].
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from PIL import Image

from .errors import (
    ChannelError,
    DegenerateRotation,
    EmptyDataset,
    EmptySplit,
    InvalidRotation,
    ParseError,
    UnknownSequence,
)
from .pose import Pose, matrix_to_quat

QUAT_ORDERS = ("wxyz", "xyzw")

ImageRef = Union[str, np.ndarray]


@dataclass(frozen=True, eq=False)
class SceneSample:
    """One training/evaluation unit: an image (path or raster) and its pose."""

    image_ref: ImageRef
    pose: Pose
    sequence_id: str

    def __post_init__(self):
        if not self.sequence_id:
            raise ValueError("sequence_id must be non-empty")

    def ref_key(self) -> str:
        """Stable identifier for audit logs and duplicate checks."""
        if isinstance(self.image_ref, str):
            return self.image_ref
        return f"<raster:{self.sequence_id}:{id(self.image_ref)}>"


@dataclass(frozen=True)
class DatasetSplit:
    """Sequence-disjoint train/test partition."""

    train: tuple
    test: tuple

    def __post_init__(self):
        train = tuple(self.train)
        test = tuple(self.test)
        train_refs = {s.ref_key() for s in train}
        test_refs = {s.ref_key() for s in test}
        if train_refs & test_refs:
            raise ValueError("train and test share image references")
        train_seqs = {s.sequence_id for s in train}
        test_seqs = {s.sequence_id for s in test}
        if train_seqs & test_seqs:
            raise ValueError(f"sequences appear on both sides: {train_seqs & test_seqs}")
        object.__setattr__(self, "train", train)
        object.__setattr__(self, "test", test)


def _quat_tokens_to_wxyz(vals, order: str):
    if order == "wxyz":
        return vals
    if order == "xyzw":
        return [vals[3], vals[0], vals[1], vals[2]]
    raise ValueError(f"quat_order must be one of {QUAT_ORDERS}, got {order!r}")


def parse_pose_list(stream, quat_order: str = "wxyz") -> list:
    """Parse a pose-list text stream into SceneSamples.

    Each data line holds 8 whitespace-separated tokens: a relative image path
    followed by tx ty tz and a quaternion in ``quat_order``.  Lines before the
    first valid data line are treated as header and skipped.  The sequence id
    is the first path component.
    """
    if quat_order not in QUAT_ORDERS:
        raise ValueError(f"quat_order must be one of {QUAT_ORDERS}, got {quat_order!r}")
    if isinstance(stream, str):
        lines = stream.splitlines()
    else:
        lines = stream.read().splitlines()

    samples = []
    header_done = False
    for lineno, raw in enumerate(lines, start=1):
        tokens = raw.split()
        if not tokens:
            continue
        if len(tokens) != 8:
            if header_done:
                raise ParseError(f"line {lineno}: expected 8 tokens, got {len(tokens)}")
            continue
        try:
            vals = [float(tok) for tok in tokens[1:]]
        except ValueError as exc:
            if header_done:
                raise ParseError(f"line {lineno}: {exc}") from exc
            continue
        header_done = True
        path = tokens[0]
        quat = _quat_tokens_to_wxyz(vals[3:], quat_order)
        try:
            pose = Pose(translation=vals[:3], rotation=quat)
        except DegenerateRotation as exc:
            raise DegenerateRotation(f"line {lineno}: {exc}") from exc
        sequence_id = path.replace("\\", "/").split("/")[0]
        samples.append(SceneSample(image_ref=path, pose=pose, sequence_id=sequence_id))
    if not samples:
        raise EmptyDataset("pose list contains no data lines")
    return samples


def parse_matrix_pose(stream) -> Pose:
    """Parse a 4x4 row-major homogeneous pose matrix into a Pose.

    The last row must be (0, 0, 0, 1) within 1e-4 and the upper-left 3x3
    block a proper rotation.
    """
    text = stream if isinstance(stream, str) else stream.read()
    tokens = text.split()
    if len(tokens) != 16:
        raise ParseError(f"expected 16 reals for a 4x4 pose, got {len(tokens)} tokens")
    try:
        vals = np.array([float(t) for t in tokens], dtype=np.float64)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc
    M = vals.reshape(4, 4)
    if not np.allclose(M[3], [0.0, 0.0, 0.0, 1.0], atol=1e-4):
        raise InvalidRotation(f"last row must be (0,0,0,1), got {M[3]}")
    quat = matrix_to_quat(M[:3, :3])
    return Pose(translation=M[:3, 3], rotation=quat)


def preprocess_image(raster: np.ndarray, size: int = 256) -> np.ndarray:
    """Resize a HxWx3 uint8 raster bilinearly and map [0, 255] -> [-1, 1].

    Returns a float32 size x size x 3 array in model space.
    """
    raster = np.asarray(raster)
    if raster.ndim != 3 or raster.shape[2] != 3:
        raise ChannelError(f"expected HxWx3 input, got shape {raster.shape}")
    if raster.shape[0] < 1 or raster.shape[1] < 1:
        raise ChannelError("image must be at least 1x1")
    if raster.dtype != np.uint8:
        raster = np.clip(raster, 0, 255).astype(np.uint8)
    if raster.shape[:2] != (size, size):
        img = Image.fromarray(raster, mode="RGB")
        img = img.resize((size, size), resample=Image.BILINEAR)
        raster = np.asarray(img)
    return (raster.astype(np.float32) / 127.5) - 1.0


def model_to_unit(img: np.ndarray) -> np.ndarray:
    """Map model-space values in [-1, 1] to metric-space [0, 1]."""
    return np.clip((np.asarray(img, dtype=np.float32) + 1.0) * 0.5, 0.0, 1.0)


def unit_to_uint8(img: np.ndarray) -> np.ndarray:
    """Quantize a [0, 1] image to uint8."""
    return np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)


def model_to_uint8(img: np.ndarray) -> np.ndarray:
    """Quantize a [-1, 1] image to uint8 (inverse of preprocess scaling)."""
    return np.clip(np.round((np.asarray(img) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def make_split(samples, test_sequences) -> DatasetSplit:
    """Partition samples by sequence id into a sequence-disjoint split."""
    samples = list(samples)
    test_sequences = set(test_sequences)
    observed = {s.sequence_id for s in samples}
    unknown = test_sequences - observed
    if unknown:
        raise UnknownSequence(f"unknown test sequences: {sorted(unknown)}")
    train = [s for s in samples if s.sequence_id not in test_sequences]
    test = [s for s in samples if s.sequence_id in test_sequences]
    if not train:
        raise EmptySplit("no training samples left after split")
    if not test:
        raise EmptySplit("no test samples selected")
    return DatasetSplit(train=tuple(train), test=tuple(test))


@dataclass
class AccessLog:
    """Records every dataset image read, tagged with the pipeline phase.

    Used to audit train/test hygiene: test images must never be read during
    a training phase.
    """

    entries: list = field(default_factory=list)

    def record(self, ref_key: str, sequence_id: str, phase: str):
        self.entries.append({"ref": ref_key, "sequence_id": sequence_id, "phase": phase})

    def reads_for_phase(self, phase_prefix: str) -> set:
        return {e["ref"] for e in self.entries if e["phase"].startswith(phase_prefix)}

    def sequences_for_phase(self, phase_prefix: str) -> set:
        return {e["sequence_id"] for e in self.entries if e["phase"].startswith(phase_prefix)}


def load_sample_image(sample: SceneSample, size: int,
                      root: str | None = None,
                      access_log: AccessLog | None = None,
                      phase: str = "unspecified") -> np.ndarray:
    """Load and preprocess a sample's image to [-1, 1] model space.

    Path refs are resolved against ``root``; raster refs are used directly.
    Every call is recorded in ``access_log`` when one is given.
    """
    if access_log is not None:
        access_log.record(sample.ref_key(), sample.sequence_id, phase)
    if isinstance(sample.image_ref, str):
        path = sample.image_ref if root is None else os.path.join(root, sample.image_ref)
        with Image.open(path) as img:
            raster = np.asarray(img.convert("RGB"))
    else:
        raster = sample.image_ref
    return preprocess_image(raster, size=size)
