"""Procedural desk-scale toy scene with a deterministic pinhole renderer.

The renderer exists so training and evaluation can be exercised end to end
in minutes: a handful of flat-shaded primitives (spheres and axis-aligned
boxes) above a checkerboard ground plane, rasterized by pinhole projection
with painter's-algorithm ordering.  No anti-aliasing, no lighting model, no
randomness at render time — identical (spec, pose) inputs produce
bit-identical images.

Spheres are drawn as discs of radius ``f * R / depth`` around the projected
center; boxes as the filled convex hull of their eight projected corners.
The checkerboard parity uses ``|x|`` so the ground pattern is exactly
mirror-symmetric about the x = 0 plane.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import DatasetSplit, SceneSample
from .pose import Pose, matrix_to_quat, quat_to_matrix

FOV_DEGREES = 60.0  # fixed pinhole horizontal field of view
_NEAR = 1e-3


@dataclass(frozen=True)
class Primitive:
    kind: str  # "sphere" | "box"
    position: tuple  # world-frame center
    size: tuple  # (radius,) for spheres, half-extents (hx, hy, hz) for boxes
    color: tuple  # RGB in [0, 1]

    def __post_init__(self):
        if self.kind not in ("sphere", "box"):
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "size", tuple(float(v) for v in self.size))
        object.__setattr__(self, "color", tuple(float(v) for v in self.color))


@dataclass(frozen=True)
class ToySceneSpec:
    """Deterministic description of a toy scene; equal specs render equal bits."""

    seed: int
    image_size: int = 64
    primitives: tuple = field(default_factory=tuple)
    ground_y: float = 0.0
    ground_tile: float = 1.6
    ground_colors: tuple = ((0.72, 0.70, 0.62), (0.45, 0.47, 0.50))
    sky_color: tuple = (0.55, 0.70, 0.92)

    def __post_init__(self):
        object.__setattr__(self, "primitives", tuple(self.primitives))

    def to_json(self) -> str:
        return json.dumps({
            "seed": self.seed,
            "image_size": self.image_size,
            "ground_y": self.ground_y,
            "ground_tile": self.ground_tile,
            "ground_colors": [list(c) for c in self.ground_colors],
            "sky_color": list(self.sky_color),
            "primitives": [
                {"kind": p.kind, "position": list(p.position),
                 "size": list(p.size), "color": list(p.color)}
                for p in self.primitives
            ],
        }, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ToySceneSpec":
        obj = json.loads(text)
        prims = tuple(
            Primitive(kind=p["kind"], position=p["position"], size=p["size"], color=p["color"])
            for p in obj["primitives"]
        )
        return cls(
            seed=int(obj["seed"]),
            image_size=int(obj["image_size"]),
            primitives=prims,
            ground_y=float(obj["ground_y"]),
            ground_tile=float(obj["ground_tile"]),
            ground_colors=tuple(tuple(c) for c in obj["ground_colors"]),
            sky_color=tuple(obj["sky_color"]),
        )

    def mirrored_x(self) -> "ToySceneSpec":
        """Scene layout reflected through the x = 0 plane."""
        prims = tuple(
            Primitive(kind=p.kind,
                      position=(-p.position[0], p.position[1], p.position[2]),
                      size=p.size, color=p.color)
            for p in self.primitives
        )
        return ToySceneSpec(seed=self.seed, image_size=self.image_size,
                            primitives=prims, ground_y=self.ground_y,
                            ground_tile=self.ground_tile,
                            ground_colors=self.ground_colors,
                            sky_color=self.sky_color)


def generate_toy_scene(seed: int, n_primitives: int = 5, image_size: int = 64) -> ToySceneSpec:
    """Sample a random but fully determined primitive layout.

    Primitives sit near the scene center and are large enough that their
    image position carries most of the pose signal.
    """
    rng = np.random.default_rng(seed)
    prims = []
    for i in range(n_primitives):
        kind = "sphere" if i % 2 == 0 else "box"
        position = (rng.uniform(-1.1, 1.1), rng.uniform(0.3, 1.3), rng.uniform(-1.1, 1.1))
        if kind == "sphere":
            size = (rng.uniform(0.35, 0.65),)
        else:
            size = tuple(rng.uniform(0.3, 0.55, size=3))
        color = tuple(rng.uniform(0.15, 0.95, size=3))
        prims.append(Primitive(kind=kind, position=position, size=size, color=color))
    return ToySceneSpec(seed=seed, image_size=image_size, primitives=tuple(prims))


def focal_length(image_size: int) -> float:
    return (image_size / 2.0) / math.tan(math.radians(FOV_DEGREES) / 2.0)


def toy_render(spec: ToySceneSpec, pose: Pose) -> np.ndarray:
    """Render the scene from ``pose`` into a [-1, 1] float32 HxWx3 raster."""
    size = spec.image_size
    f = focal_length(size)
    R = quat_to_matrix(pose.rotation)  # camera-to-world
    t = pose.translation

    # Pixel-center offsets from the principal point; v grows downward.
    idx = np.arange(size, dtype=np.float64) + 0.5 - size / 2.0
    u_grid, v_grid = np.meshgrid(idx, idx)  # u along columns, v along rows

    img = np.empty((size, size, 3), dtype=np.float64)
    img[:] = np.asarray(spec.sky_color)

    # Ground plane: per-pixel ray to y = ground_y, checkered by |x| and z.
    d_cam = np.stack([u_grid / f, -v_grid / f, -np.ones_like(u_grid)], axis=-1)
    d_world = d_cam @ R.T
    denom = d_world[..., 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = (spec.ground_y - t[1]) / denom
    hit = lam > _NEAR
    hx = t[0] + lam * d_world[..., 0]
    hz = t[2] + lam * d_world[..., 2]
    with np.errstate(invalid="ignore"):
        parity = (np.floor(np.abs(hx) / spec.ground_tile)
                  + np.floor(hz / spec.ground_tile)).astype(np.int64) % 2
    ground = np.where((hit & (parity == 0))[..., None],
                      np.asarray(spec.ground_colors[0]),
                      np.asarray(spec.ground_colors[1]))
    img = np.where(hit[..., None], ground, img)

    # Painter's algorithm: farthest primitive first, by center depth.
    centers_cam = (np.array([p.position for p in spec.primitives]) - t) @ R if spec.primitives else np.zeros((0, 3))
    depths = -centers_cam[:, 2] if len(centers_cam) else np.zeros(0)
    order = np.argsort(-depths, kind="stable")
    for i in order:
        prim = spec.primitives[i]
        depth = depths[i]
        if depth <= _NEAR:
            continue
        if prim.kind == "sphere":
            _draw_sphere(img, u_grid, v_grid, f, centers_cam[i], prim)
        else:
            _draw_box(img, u_grid, v_grid, f, R, t, prim)
    return img.astype(np.float32) * 2.0 - 1.0


def _draw_sphere(img, u_grid, v_grid, f, center_cam, prim):
    depth = -center_cam[2]
    u0 = f * center_cam[0] / depth
    v0 = -f * center_cam[1] / depth
    r = f * prim.size[0] / depth
    mask = (u_grid - u0) ** 2 + (v_grid - v0) ** 2 <= r * r
    img[mask] = np.asarray(prim.color)


def _draw_box(img, u_grid, v_grid, f, R, t, prim):
    hx, hy, hz = prim.size
    cx, cy, cz = prim.position
    corners = np.array([
        [cx + sx * hx, cy + sy * hy, cz + sz * hz]
        for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)
    ])
    cam = (corners - t) @ R
    depths = -cam[:, 2]
    if np.any(depths <= _NEAR):
        return
    pts = np.stack([f * cam[:, 0] / depths, -f * cam[:, 1] / depths], axis=-1)
    hull = _convex_hull(pts)
    if len(hull) < 3:
        return
    mask = _fill_convex(u_grid, v_grid, hull)
    img[mask] = np.asarray(prim.color)


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices in order."""
    pts = sorted(map(tuple, points))
    if len(pts) <= 2:
        return np.asarray(pts)

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.asarray(lower[:-1] + upper[:-1])


def _fill_convex(u_grid, v_grid, hull: np.ndarray) -> np.ndarray:
    """Pixel centers inside (or on) the convex polygon, orientation-agnostic."""
    n = len(hull)
    pos = np.ones(u_grid.shape, dtype=bool)
    neg = np.ones(u_grid.shape, dtype=bool)
    for k in range(n):
        x1, y1 = hull[k]
        x2, y2 = hull[(k + 1) % n]
        cross = (x2 - x1) * (v_grid - y1) - (y2 - y1) * (u_grid - x1)
        pos &= cross >= 0
        neg &= cross <= 0
    return pos | neg


def look_at_pose(eye, target, up=(0.0, 1.0, 0.0)) -> Pose:
    """Build a camera pose at ``eye`` looking toward ``target``.

    Camera looks down its local -z; +y is 'up' in the image.
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    up = np.asarray(up, dtype=np.float64)
    forward = target - eye
    fn = np.linalg.norm(forward)
    if fn < 1e-12:
        raise ValueError("eye and target coincide")
    forward = forward / fn
    side = np.cross(forward, up)
    sn = np.linalg.norm(side)
    if sn < 1e-9:
        raise ValueError("view direction parallel to up vector")
    side = side / sn
    cam_up = np.cross(side, forward)
    R = np.stack([side, cam_up, -forward], axis=1)
    return Pose(translation=eye, rotation=matrix_to_quat(R))


def sample_view_poses(rng: np.random.Generator, n: int,
                      center=(0.0, 0.6, 0.0), radius: float = 4.0,
                      elevation_deg=(12.0, 32.0),
                      target_jitter: float = 0.08) -> list:
    """Poses on a jittered view sphere looking near the scene center.

    Radius jitters by +/-20%; the look-at target jitters by
    ``target_jitter`` per axis.
    """
    center = np.asarray(center, dtype=np.float64)
    poses = []
    for _ in range(n):
        azimuth = rng.uniform(0.0, 2.0 * math.pi)
        elevation = rng.uniform(math.radians(elevation_deg[0]),
                                math.radians(elevation_deg[1]))
        r = radius * (1.0 + rng.uniform(-0.2, 0.2))
        eye = center + r * np.array([
            math.cos(elevation) * math.sin(azimuth),
            math.sin(elevation),
            math.cos(elevation) * math.cos(azimuth),
        ])
        target = center + rng.uniform(-target_jitter, target_jitter, size=3)
        poses.append(look_at_pose(eye, target))
    return poses


def toy_dataset(spec: ToySceneSpec, n_train: int, n_test: int,
                pose_sampler_seed: int) -> DatasetSplit:
    """Render an in-memory sequence-disjoint toy split.

    Images are stored as uint8 rasters so in-memory and materialized toy
    datasets preprocess identically.
    """
    if n_train < 1 or n_test < 1:
        raise ValueError("n_train and n_test must be >= 1")
    rng = np.random.default_rng(pose_sampler_seed)
    train_poses = sample_view_poses(rng, n_train)
    test_poses = sample_view_poses(rng, n_test)

    def render_u8(pose):
        img = toy_render(spec, pose)
        return np.clip(np.round((img + 1.0) * 127.5), 0, 255).astype(np.uint8)

    train = tuple(
        SceneSample(image_ref=render_u8(p), pose=p, sequence_id="toy_train")
        for p in train_poses
    )
    test = tuple(
        SceneSample(image_ref=render_u8(p), pose=p, sequence_id="toy_test")
        for p in test_poses
    )
    return DatasetSplit(train=train, test=test)


def materialize_toy_dataset(spec: ToySceneSpec, n_train: int, n_test: int,
                            pose_sampler_seed: int, out_dir) -> str:
    """Write the toy dataset as PNGs plus a pose-list file.

    The layout matches real datasets (sequence directories and an 8-token
    pose list), so materialized toy data flows through the same ingestion
    path.  Returns the pose-list path.
    """
    import os

    from PIL import Image

    split = toy_dataset(spec, n_train, n_test, pose_sampler_seed)
    os.makedirs(out_dir, exist_ok=True)
    lines = ["Toy scene dataset", f"seed {spec.seed} sampler {pose_sampler_seed}",
             "ImageFile, Camera Position [X Y Z W P Q R]"]
    counters = {}
    for sample in split.train + split.test:
        seq_dir = os.path.join(out_dir, sample.sequence_id)
        os.makedirs(seq_dir, exist_ok=True)
        idx = counters.get(sample.sequence_id, 0)
        counters[sample.sequence_id] = idx + 1
        rel = f"{sample.sequence_id}/frame_{idx:05d}.png"
        Image.fromarray(sample.image_ref).save(os.path.join(out_dir, rel))
        vec = sample.pose.flatten()
        lines.append(rel + " " + " ".join(repr(float(v)) for v in vec))
    pose_list = os.path.join(out_dir, "poses.txt")
    with open(pose_list, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    with open(os.path.join(out_dir, "scene.json"), "w") as fh:
        fh.write(spec.to_json())
    return pose_list
