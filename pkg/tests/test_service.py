import io
import json

import numpy as np
import pytest
from fastapi.testclient import TestClient
from PIL import Image

from pose2view.data import load_sample_image
from pose2view.gennet import GenNetConfig, Stage1Hparams, train_gennet
from pose2view.refinenet import RefineConfig, Stage2Hparams, train_refinenet
from pose2view.service import ServiceState, create_app, load_models
from pose2view.toyscene import generate_toy_scene, toy_dataset

SIZE = 16


@pytest.fixture(scope="module")
def bundle():
    spec = generate_toy_scene(seed=8, image_size=SIZE)
    split = toy_dataset(spec, n_train=5, n_test=2, pose_sampler_seed=2)
    gcfg = GenNetConfig(fc_dims=(64, 32), upsample_channels=(32, 32, 16, 16),
                        output_size=SIZE)
    stage1 = train_gennet(split, Stage1Hparams(epochs=2, batch_size=5, seed=0), gcfg)
    rcfg = RefineConfig(lambda1=10.0, lambda2=0.0, lambda3=0.0, image_size=SIZE,
                        base_width=8, max_width=16, disc_base_width=8, disc_layers=2)
    stage2 = train_refinenet(stage1, split, rcfg,
                             Stage2Hparams(epochs=1, batch_size=5, seed=1))
    models = load_models(stage1, stage2, train_samples=split.train,
                         scene_name="toy",
                         thumbnail_loader=lambda s: load_sample_image(s, size=SIZE))
    return models, split


@pytest.fixture()
def client(bundle):
    models, _ = bundle
    state = ServiceState(models=models)
    return TestClient(create_app(state))


@pytest.fixture()
def unloaded_client():
    return TestClient(create_app(ServiceState(models=None)))


def synth_body(pose=None, stage="coarse"):
    if pose is None:
        return {"translation": [0.0, 1.0, 4.0], "quaternion": [1.0, 0.0, 0.0, 0.0],
                "stage": stage}
    return {"translation": [float(v) for v in pose.translation],
            "quaternion": [float(v) for v in pose.rotation], "stage": stage}


class TestSynthesize:
    def test_png_decodes_to_model_size(self, client):
        r = client.post("/api/v1/synthesize", json=synth_body())
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        img = Image.open(io.BytesIO(r.content))
        assert img.size == (SIZE, SIZE)
        assert np.asarray(img).shape == (SIZE, SIZE, 3)

    def test_byte_identical_repeats(self, client):
        a = client.post("/api/v1/synthesize", json=synth_body())
        b = client.post("/api/v1/synthesize", json=synth_body())
        assert a.content == b.content

    def test_refined_stage(self, client):
        r = client.post("/api/v1/synthesize", json=synth_body(stage="refined"))
        assert r.status_code == 200
        again = client.post("/api/v1/synthesize", json=synth_body(stage="refined"))
        assert r.content == again.content

    def test_degenerate_quaternion_400(self, client):
        body = synth_body()
        body["quaternion"] = [0.0, 0.0, 0.0, 0.0]
        r = client.post("/api/v1/synthesize", json=body)
        assert r.status_code == 400
        assert r.json()["field"] == "quaternion"

    def test_norm_tolerance_boundary(self, client):
        body = synth_body()
        body["quaternion"] = [1.0005, 0.0, 0.0, 0.0]  # within 1e-3
        assert client.post("/api/v1/synthesize", json=body).status_code == 200
        body["quaternion"] = [1.01, 0.0, 0.0, 0.0]
        assert client.post("/api/v1/synthesize", json=body).status_code == 400

    def test_malformed_json_400_with_field(self, client):
        r = client.post("/api/v1/synthesize", json={"translation": [0, 0]})
        assert r.status_code == 400
        assert "error" in r.json()

    def test_pose_echo_headers(self, client):
        body = synth_body()
        r = client.post("/api/v1/synthesize", json=body)
        assert json.loads(r.headers["X-Pose-Translation"]) == body["translation"]
        assert json.loads(r.headers["X-Pose-Quaternion"]) == body["quaternion"]
        assert r.headers["X-Config-Hash"]

    def test_503_before_load(self, unloaded_client):
        r = unloaded_client.post("/api/v1/synthesize", json=synth_body())
        assert r.status_code == 503


class TestTrajectory:
    def test_two_keyposes_one_per_segment(self, client):
        body = {"keyposes": [{"t": [0, 1, 4], "q": [1, 0, 0, 0]},
                             {"t": [1, 1, 4], "q": [1, 0, 0, 0]}],
                "frames_per_segment": 1, "stage": "coarse"}
        r = client.post("/api/v1/trajectory", json=body)
        assert r.status_code == 200
        obj = r.json()
        assert obj["frame_count"] == 2
        assert len(obj["frames"]) == 2

    def test_frames_equal_individual_synthesize(self, client):
        body = {"keyposes": [{"t": [0, 1, 4], "q": [1, 0, 0, 0]},
                             {"t": [1, 1, 4], "q": [1, 0, 0, 0]}],
                "frames_per_segment": 1}
        frames = client.post("/api/v1/trajectory", json=body).json()["frames"]
        for url, kp in zip(frames, body["keyposes"]):
            frame_png = client.get(url).content
            single = client.post("/api/v1/synthesize", json={
                "translation": kp["t"], "quaternion": kp["q"], "stage": "coarse"})
            assert frame_png == single.content

    def test_single_keypose_400(self, client):
        r = client.post("/api/v1/trajectory",
                        json={"keyposes": [{"t": [0, 0, 0], "q": [1, 0, 0, 0]}],
                              "frames_per_segment": 1})
        assert r.status_code == 400

    def test_503_before_load(self, unloaded_client):
        r = unloaded_client.post("/api/v1/trajectory",
                                 json={"keyposes": [], "frames_per_segment": 1})
        assert r.status_code == 503


class TestSceneInfo:
    def test_bounds_enclose_train_translations(self, client, bundle):
        models, split = bundle
        info = client.get("/api/v1/scene-info").json()
        lo = np.asarray(info["pose_bounds"]["min"])
        hi = np.asarray(info["pose_bounds"]["max"])
        for s in split.train:
            assert np.all(s.pose.translation >= lo - 1e-9)
            assert np.all(s.pose.translation <= hi + 1e-9)
        assert info["nearest_available"] is True
        assert info["config_hash"] == models.config_hash
        assert info["stages"] == ["coarse", "refined"]

    def test_503_before_load(self, unloaded_client):
        assert unloaded_client.get("/api/v1/scene-info").status_code == 503


class TestNearest:
    def test_exact_training_pose_first(self, client, bundle):
        _, split = bundle
        sample = split.train[2]
        pose_str = ",".join(repr(float(v)) for v in sample.pose.flatten())
        r = client.get(f"/api/v1/nearest?k=3&pose={pose_str}")
        assert r.status_code == 200
        hits = r.json()["nearest"]
        assert len(hits) == 3
        assert hits[0]["distance"] == 0.0
        np.testing.assert_allclose(hits[0]["t"], sample.pose.translation)

    def test_truncates_to_train_size(self, client, bundle):
        _, split = bundle
        pose_str = ",".join("0" for _ in range(3)) + ",1,0,0,0"
        hits = client.get(f"/api/v1/nearest?k=50&pose={pose_str}").json()["nearest"]
        assert len(hits) == len(split.train)

    def test_thumbnails_served(self, client):
        pose_str = "0,0,0,1,0,0,0"
        hits = client.get(f"/api/v1/nearest?k=1&pose={pose_str}").json()["nearest"]
        url = hits[0]["thumbnail"]
        assert url is not None
        img = client.get(url)
        assert img.status_code == 200
        assert Image.open(io.BytesIO(img.content)).size == (SIZE, SIZE)

    def test_bad_pose_param(self, client):
        assert client.get("/api/v1/nearest?k=3&pose=1,2,3").status_code == 400
        assert client.get("/api/v1/nearest?k=3&pose=a,b,c,d,e,f,g").status_code == 400
        # degenerate quaternion
        assert client.get("/api/v1/nearest?k=3&pose=0,0,0,0,0,0,0").status_code == 400


class TestConcurrency:
    def test_concurrent_identical_requests_identical_bytes(self, bundle):
        import concurrent.futures

        models, _ = bundle
        state = ServiceState(models=models, max_inflight=2)
        client = TestClient(create_app(state))
        with concurrent.futures.ThreadPoolExecutor(max_workers=6) as pool:
            futs = [pool.submit(
                lambda: client.post("/api/v1/synthesize", json=synth_body()).content)
                for _ in range(6)]
            results = {f.result() for f in futs}
        assert len(results) == 1
