import numpy as np
import pytest
import torch

from pose2view.checkpoint import load_checkpoint, save_checkpoint
from pose2view.errors import ConfigError, DivergenceError, EmptyDataset, ShapeError
from pose2view.gennet import (
    GenNetConfig,
    GenNetPredictor,
    Stage1Hparams,
    build_gennet,
    gennet_infer,
    l1_loss,
    train_gennet,
)
from pose2view.pose import Pose
from pose2view.toyscene import generate_toy_scene, toy_dataset


class TestConfig:
    def test_default_is_256(self):
        cfg = GenNetConfig()
        assert len(cfg.upsample_channels) == 8
        assert cfg.output_size == 256

    def test_block_count_must_match_size(self):
        with pytest.raises(ConfigError):
            GenNetConfig(upsample_channels=(64, 64), output_size=256)

    def test_dropout_range(self):
        with pytest.raises(ConfigError):
            GenNetConfig(dropout_p=1.0)

    def test_dict_roundtrip(self):
        cfg = GenNetConfig.small(64)
        assert GenNetConfig.from_dict(cfg.to_dict()) == cfg


class TestArchitecture:
    def test_forward_shape_and_range(self):
        model = build_gennet(GenNetConfig())
        model.eval()
        out = model(torch.randn(1, 7))
        assert out.shape == (1, 3, 256, 256)
        assert out.min() >= -1.0 and out.max() <= 1.0

    def test_fc_weight_counts_no_bias(self):
        model = build_gennet(GenNetConfig())
        linears = [m for m in model.modules() if isinstance(m, torch.nn.Linear)]
        assert [l.weight.numel() for l in linears] == [7 * 2048, 2048 * 1024]
        assert all(l.bias is None for l in linears)

    def test_spatial_doubles_per_block(self):
        cfg = GenNetConfig.small(64)
        model = build_gennet(cfg)
        model.eval()
        x = model.fc(torch.randn(2, 7)).view(2, -1, 1, 1)
        for k, block in enumerate(model.up_blocks, start=1):
            x = block(x)
            assert x.shape[-1] == 2 ** k
        assert x.shape[-1] == cfg.output_size

    def test_no_batchnorm_variant_has_no_norm_params(self):
        model = build_gennet(GenNetConfig.small(64))
        assert any(isinstance(m, (torch.nn.BatchNorm1d, torch.nn.BatchNorm2d))
                   for m in model.modules())
        cfg = GenNetConfig(fc_dims=(256, 128), upsample_channels=(64, 64, 32, 32),
                           output_size=16, use_batchnorm=False)
        bare = build_gennet(cfg)
        assert not any(isinstance(m, (torch.nn.BatchNorm1d, torch.nn.BatchNorm2d))
                       for m in bare.modules())

    def test_small_variant_shape(self):
        model = build_gennet(GenNetConfig.small(64))
        model.eval()
        assert model(torch.randn(3, 7)).shape == (3, 3, 64, 64)

    def test_bad_pose_shape(self):
        model = build_gennet(GenNetConfig.small(64))
        with pytest.raises(ShapeError):
            model(torch.randn(2, 5))


class TestL1Loss:
    def test_identical(self):
        x = torch.randn(2, 3, 4, 4)
        assert float(l1_loss(x, x)) == 0.0

    def test_ones_vs_minus_ones(self):
        a = torch.ones(2, 3, 4, 4)
        assert float(l1_loss(a, -a)) == pytest.approx(2.0)

    def test_constant_offset(self):
        a = torch.randn(2, 3, 4, 4)
        assert float(l1_loss(a + 0.5, a)) == pytest.approx(0.5, abs=1e-6)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            l1_loss(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 4, 5))

    def test_gradient_matches_finite_differences(self):
        torch.manual_seed(0)
        pred = torch.randn(2, 2, 3, dtype=torch.float64, requires_grad=True)
        target = torch.randn(2, 2, 3, dtype=torch.float64)
        loss = l1_loss(pred, target)
        loss.backward()
        eps = 1e-6
        grad = pred.grad.clone()
        for idx in np.ndindex(*pred.shape):
            if abs(float(pred.detach()[idx] - target[idx])) < 1e-3:
                continue  # |.| is non-differentiable at zero difference
            with torch.no_grad():
                p_hi = pred.clone(); p_hi[idx] += eps
                p_lo = pred.clone(); p_lo[idx] -= eps
                fd = (l1_loss(p_hi, target) - l1_loss(p_lo, target)) / (2 * eps)
            assert float(grad[idx]) == pytest.approx(float(fd), rel=1e-4)


@pytest.fixture(scope="module")
def tiny_fixture():
    spec = generate_toy_scene(seed=21, image_size=16)
    return toy_dataset(spec, n_train=4, n_test=2, pose_sampler_seed=3)


TINY_CFG = GenNetConfig(fc_dims=(64, 32), upsample_channels=(32, 32, 16, 16),
                        output_size=16)


class TestTraining:
    def test_zero_epochs_equals_initialization(self, tiny_fixture):
        losses = []

        class Sink:
            def on_epoch(self, epoch, loss, model, **kw):
                losses.append(loss)

        ckpt = train_gennet(tiny_fixture, Stage1Hparams(epochs=0, seed=5),
                            TINY_CFG, sink=Sink())
        assert losses == []
        torch.manual_seed(5)
        fresh = build_gennet(TINY_CFG)
        for name, tensor in fresh.state_dict().items():
            np.testing.assert_array_equal(ckpt.tensors[name], tensor.numpy())

    def test_seeded_runs_identical_loss_curves(self, tiny_fixture):
        curves = []
        for _ in range(2):
            log = []

            class Sink:
                def on_epoch(self, epoch, loss, model, **kw):
                    log.append(loss)

            train_gennet(tiny_fixture, Stage1Hparams(epochs=5, batch_size=2, seed=7),
                         TINY_CFG, sink=Sink())
            curves.append(log)
        assert curves[0] == curves[1]

    def test_empty_dataset(self, tiny_fixture):
        from pose2view.data import DatasetSplit
        empty = DatasetSplit(train=(), test=tiny_fixture.test)
        with pytest.raises(EmptyDataset):
            train_gennet(empty, Stage1Hparams(epochs=1), TINY_CFG)

    def test_divergence_detected(self, tiny_fixture):
        # NaN targets force a non-finite loss on the first step
        def loader(sample):
            return np.full((16, 16, 3), np.nan, dtype=np.float32)

        with pytest.raises(DivergenceError, match="step 0"):
            train_gennet(tiny_fixture, Stage1Hparams(epochs=1), TINY_CFG,
                         image_loader=loader)

    def test_resume_continues_from_step(self, tiny_fixture):
        hp = Stage1Hparams(epochs=3, batch_size=2, seed=11)
        first = train_gennet(tiny_fixture, hp, TINY_CFG)
        assert first.step == 3
        resumed = train_gennet(tiny_fixture, Stage1Hparams(epochs=6, batch_size=2, seed=11),
                               TINY_CFG, resume_from=first)
        assert resumed.step == 6


class TestInference:
    def test_eval_mode_bit_identical(self, tiny_fixture):
        ckpt = train_gennet(tiny_fixture, Stage1Hparams(epochs=1, seed=2), TINY_CFG)
        pose = tiny_fixture.test[0].pose
        a = gennet_infer(ckpt, pose)
        b = gennet_infer(ckpt, pose)
        assert np.array_equal(a, b)

    def test_output_contract(self, tiny_fixture):
        ckpt = train_gennet(tiny_fixture, Stage1Hparams(epochs=0, seed=2), TINY_CFG)
        out = gennet_infer(ckpt, Pose.identity())
        assert out.shape == (3, 16, 16)
        assert out.min() >= -1.0 and out.max() <= 1.0

    def test_checkpoint_roundtrip_through_disk(self, tiny_fixture, tmp_path):
        ckpt = train_gennet(tiny_fixture, Stage1Hparams(epochs=1, seed=2), TINY_CFG)
        base = str(tmp_path / "stage1")
        save_checkpoint(ckpt, base)
        back = load_checkpoint(base)
        assert back.config_hash == ckpt.config_hash
        assert back.step == ckpt.step
        pose = tiny_fixture.test[0].pose
        np.testing.assert_array_equal(gennet_infer(back, pose), gennet_infer(ckpt, pose))

    def test_dropout_disabled_in_eval(self, tiny_fixture):
        ckpt = train_gennet(tiny_fixture, Stage1Hparams(epochs=0, seed=3), TINY_CFG)
        predictor = GenNetPredictor(ckpt)
        outs = {predictor(Pose.identity()).tobytes() for _ in range(3)}
        assert len(outs) == 1
