import math

import numpy as np
import pytest

from pose2view.data import parse_pose_list, make_split, load_sample_image
from pose2view.pose import Pose
from pose2view.toyscene import (
    Primitive,
    ToySceneSpec,
    focal_length,
    generate_toy_scene,
    look_at_pose,
    materialize_toy_dataset,
    toy_dataset,
    toy_render,
)


def camera_on_z(z, size=64):
    # identity rotation looks down -z, straight at the origin
    return Pose(translation=[0.0, 0.0, z], rotation=[1.0, 0.0, 0.0, 0.0])


def single_sphere_spec(radius=0.5, color=(1.0, 0.0, 0.0), size=64):
    # ground far below so only sky + sphere are visible
    return ToySceneSpec(
        seed=0, image_size=size, ground_y=-100.0,
        primitives=(Primitive(kind="sphere", position=(0, 0, 0),
                              size=(radius,), color=color),),
    )


class TestToyRender:
    def test_deterministic_bits(self):
        spec = generate_toy_scene(seed=3, image_size=48)
        pose = camera_on_z(4.0)
        a = toy_render(spec, pose)
        b = toy_render(spec, pose)
        assert a.dtype == np.float32
        assert np.array_equal(a, b)

    def test_range(self):
        spec = generate_toy_scene(seed=5, image_size=32)
        img = toy_render(spec, camera_on_z(4.0))
        assert img.min() >= -1.0 and img.max() <= 1.0

    def test_sphere_disc_center_and_radius(self):
        size = 64
        radius = 0.5
        z = 4.0
        spec = single_sphere_spec(radius=radius, size=size)
        img = toy_render(spec, camera_on_z(z))
        red = np.all(np.isclose(img, [1.0, -1.0, -1.0]), axis=-1)
        assert red.any()
        rows, cols = np.nonzero(red)
        # pixel-center coordinates relative to the principal point
        u = cols + 0.5 - size / 2
        v = rows + 0.5 - size / 2
        assert abs(u.mean()) < 0.5 and abs(v.mean()) < 0.5
        r_expected = focal_length(size) * radius / z
        # every covered pixel center within the disc; area matches projection
        assert np.all(u ** 2 + v ** 2 <= r_expected ** 2 + 1e-9)
        assert red.sum() == pytest.approx(math.pi * r_expected ** 2, rel=0.15)

    def test_sphere_disc_shift_matches_projection(self):
        size = 64
        radius = 0.5
        z = 4.0
        spec = single_sphere_spec(radius=radius, size=size)
        base = toy_render(spec, camera_on_z(z))
        shifted = toy_render(spec, Pose(translation=[radius, 0, z],
                                        rotation=[1, 0, 0, 0]))
        for img, expected_u in ((base, 0.0),
                                (shifted, -focal_length(size) * radius / z)):
            red = np.all(np.isclose(img, [1.0, -1.0, -1.0]), axis=-1)
            _, cols = np.nonzero(red)
            u = cols + 0.5 - size / 2
            assert u.mean() == pytest.approx(expected_u, abs=0.5)

    def test_mirror_symmetry_exact(self):
        spec = generate_toy_scene(seed=11, image_size=48)
        mirrored = spec.mirrored_x()
        # pitch-only rotations commute with the x-mirror
        for pitch_deg, cam_x in ((0.0, 1.3), (-20.0, 0.7), (15.0, -2.1)):
            half = math.radians(pitch_deg) / 2
            q = [math.cos(half), math.sin(half), 0.0, 0.0]
            pose = Pose(translation=[cam_x, 1.5, 5.0], rotation=q)
            pose_m = Pose(translation=[-cam_x, 1.5, 5.0], rotation=q)
            img = toy_render(spec, pose)
            img_m = toy_render(mirrored, pose_m)
            assert np.array_equal(img_m, img[:, ::-1, :])

    def test_box_renders_and_occludes(self):
        spec = ToySceneSpec(
            seed=0, image_size=64, ground_y=-100.0,
            primitives=(
                Primitive(kind="box", position=(0, 0, 0), size=(0.4, 0.4, 0.4),
                          color=(0.0, 1.0, 0.0)),
                Primitive(kind="sphere", position=(0, 0, -3.0), size=(0.5,),
                          color=(1.0, 0.0, 0.0)),
            ),
        )
        img = toy_render(spec, camera_on_z(4.0))
        green = np.all(np.isclose(img, [-1.0, 1.0, -1.0]), axis=-1)
        red = np.all(np.isclose(img, [1.0, -1.0, -1.0]), axis=-1)
        assert green.any()
        # the nearer box hides the sphere center; painter's order holds
        c = 32
        assert green[c, c] and not red[c, c]

    def test_ground_checkerboard_visible(self):
        spec = ToySceneSpec(seed=0, image_size=64, primitives=())
        pose = look_at_pose(eye=(0.0, 2.0, 6.0), target=(0.0, 0.0, 0.0))
        img = toy_render(spec, pose)
        colors = {tuple(np.round(c, 3)) for c in img.reshape(-1, 3)}
        assert len(colors) >= 3  # sky plus both checker colors


class TestToyDataset:
    def test_split_sizes(self):
        spec = generate_toy_scene(seed=1, image_size=32)
        split = toy_dataset(spec, n_train=8, n_test=2, pose_sampler_seed=9)
        assert len(split.train) == 8
        assert len(split.test) == 2
        assert {s.sequence_id for s in split.train} == {"toy_train"}
        assert {s.sequence_id for s in split.test} == {"toy_test"}

    def test_seeded_repeatability(self):
        spec = generate_toy_scene(seed=1, image_size=32)
        a = toy_dataset(spec, 4, 2, pose_sampler_seed=5)
        b = toy_dataset(spec, 4, 2, pose_sampler_seed=5)
        for s, t in zip(a.train + a.test, b.train + b.test):
            np.testing.assert_array_equal(s.pose.flatten(), t.pose.flatten())
            np.testing.assert_array_equal(s.image_ref, t.image_ref)

    def test_pose_sets_disjoint_and_unit_quats(self):
        spec = generate_toy_scene(seed=1, image_size=32)
        split = toy_dataset(spec, 6, 3, pose_sampler_seed=2)
        train_t = {tuple(s.pose.translation) for s in split.train}
        test_t = {tuple(s.pose.translation) for s in split.test}
        assert not (train_t & test_t)
        for s in split.train + split.test:
            assert abs(np.linalg.norm(s.pose.rotation) - 1) < 1e-6


class TestMaterialize:
    def test_roundtrip_through_pose_list(self, tmp_path):
        spec = generate_toy_scene(seed=2, image_size=32)
        pose_list = materialize_toy_dataset(spec, 3, 2, pose_sampler_seed=4,
                                            out_dir=tmp_path)
        with open(pose_list) as fh:
            samples = parse_pose_list(fh)
        assert len(samples) == 5
        split = make_split(samples, test_sequences={"toy_test"})
        assert len(split.train) == 3 and len(split.test) == 2
        # images decode through the standard loader and match the in-memory set
        mem = toy_dataset(spec, 3, 2, pose_sampler_seed=4)
        disk_img = load_sample_image(split.train[0], size=32, root=str(tmp_path))
        mem_img = load_sample_image(mem.train[0], size=32)
        np.testing.assert_array_equal(disk_img, mem_img)
        np.testing.assert_allclose(split.train[0].pose.flatten(),
                                   mem.train[0].pose.flatten())
