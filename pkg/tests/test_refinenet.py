import numpy as np
import pytest
import torch

from pose2view.errors import CheckpointError, ConfigError
from pose2view.gennet import GenNetConfig, Stage1Hparams, train_gennet
from pose2view.perceptual import IdentityExtractor, random_extractor
from pose2view.refinenet import (
    PatchDiscriminator,
    RefineConfig,
    RefinePredictor,
    Stage2Hparams,
    UnetGenerator,
    build_refiner,
    refine_infer,
    refiner_objective,
    train_refinenet,
)
from pose2view.toyscene import generate_toy_scene, toy_dataset


class TestRefineConfig:
    def test_negative_lambda_rejected(self):
        with pytest.raises(ConfigError):
            RefineConfig(lambda2=-1.0)

    def test_bad_size_rejected(self):
        with pytest.raises(ConfigError):
            RefineConfig(image_size=100)

    def test_no_perceptual_variant(self):
        cfg = RefineConfig.small(64).without_perceptual()
        assert cfg.lambda2 == 0.0 and cfg.lambda3 == 0.0
        assert cfg.lambda1 == RefineConfig.small(64).lambda1

    def test_dict_roundtrip(self):
        cfg = RefineConfig.small(64)
        assert RefineConfig.from_dict(cfg.to_dict()) == cfg


class TestArchitecture:
    def test_generator_shape_preserved_256(self):
        gen = UnetGenerator(RefineConfig())
        gen.eval()
        with torch.no_grad():
            out = gen(torch.rand(1, 3, 256, 256) * 2 - 1)
        assert out.shape == (1, 3, 256, 256)
        assert out.min() >= -1.0 and out.max() <= 1.0

    def test_discriminator_patch_map_30x30(self):
        disc = PatchDiscriminator(in_channels=6, base_width=64, n_layers=3)
        disc.eval()
        with torch.no_grad():
            score = disc(torch.randn(1, 3, 256, 256), torch.randn(1, 3, 256, 256))
        assert score.shape == (1, 1, 30, 30)

    def test_generator_no_dropout_anywhere(self):
        gen, disc = build_refiner(RefineConfig.small(64))
        assert not any(isinstance(m, torch.nn.Dropout) for m in gen.modules())

    def test_generator_deterministic(self):
        gen, _ = build_refiner(RefineConfig.small(64))
        gen.eval()
        x = torch.rand(1, 3, 64, 64) * 2 - 1
        with torch.no_grad():
            a = gen(x)
            b = gen(x)
        assert torch.equal(a, b)

    def test_unet_skip_concat_channels(self):
        cfg = RefineConfig.small(64)
        gen, _ = build_refiner(cfg)
        widths = gen.encoder_widths
        cats = []

        def hook(module, args, output):
            if not module.outermost:
                cats.append((args[0].shape[1], output.shape[1]))

        from pose2view.refinenet import UnetBlock
        for m in gen.modules():
            if isinstance(m, UnetBlock):
                m.register_forward_hook(hook)
        gen.eval()
        with torch.no_grad():
            gen(torch.rand(1, 3, 64, 64))
        # each non-outermost level: output channels = input (skip) + decoder output
        assert len(cats) == cfg.num_downs - 1
        for in_ch, out_ch in cats:
            assert out_ch == 2 * in_ch  # decoder mirrors the encoder width
        assert sorted(in_ch for in_ch, _ in cats) == sorted(widths[:-1])

    def test_bottleneck_reaches_1x1(self):
        cfg = RefineConfig.small(64)
        gen, _ = build_refiner(cfg)
        sizes = []

        def hook(module, args, output):
            sizes.append(args[0].shape[-1])

        from pose2view.refinenet import UnetBlock
        for m in gen.modules():
            if isinstance(m, UnetBlock):
                m.register_forward_hook(hook)
        gen.eval()
        with torch.no_grad():
            gen(torch.rand(1, 3, 64, 64))
        assert min(sizes) == 2  # innermost block sees 2x2 and halves it to 1x1 inside


class TestObjective:
    def _tensors(self, size=16):
        torch.manual_seed(0)
        coarse = torch.rand(2, 3, size, size) * 2 - 1
        refined = torch.rand(2, 3, size, size) * 2 - 1
        real = torch.rand(2, 3, size, size) * 2 - 1
        return coarse, refined, real

    def test_zero_lambdas_pure_adversarial(self):
        coarse, refined, real = self._tensors()
        cfg = RefineConfig(lambda1=0.0, lambda2=0.0, lambda3=0.0, image_size=16,
                           base_width=8, max_width=16, disc_base_width=8,
                           disc_layers=2)
        _, disc = build_refiner(cfg)
        fx = IdentityExtractor()
        g, d = refiner_objective(coarse, refined, real, disc, fx, cfg)
        from pose2view.refinenet import gan_loss
        expected = gan_loss(disc(coarse, refined), True, "vanilla")
        assert float(g) == pytest.approx(float(expected), rel=1e-6)

    def test_reconstruction_terms_vanish_when_equal(self):
        coarse, _, real = self._tensors()
        cfg = RefineConfig(lambda1=7.0, lambda2=3.0, lambda3=2.0, image_size=16,
                           base_width=8, max_width=16, disc_base_width=8,
                           disc_layers=2)
        _, disc = build_refiner(cfg)
        fx = IdentityExtractor()
        g_eq, _ = refiner_objective(coarse, real, real, disc, fx, cfg)
        cfg0 = RefineConfig(lambda1=0.0, lambda2=0.0, lambda3=0.0, image_size=16,
                            base_width=8, max_width=16, disc_base_width=8,
                            disc_layers=2)
        g_adv, _ = refiner_objective(coarse, real, real, disc, fx, cfg0)
        assert float(g_eq) == pytest.approx(float(g_adv), rel=1e-6)

    def test_doubling_lambda2_doubles_style_contribution(self):
        coarse, refined, real = self._tensors()
        fx = IdentityExtractor()

        def g_for(lam2):
            cfg = RefineConfig(lambda1=0.0, lambda2=lam2, lambda3=0.0, image_size=16,
                               base_width=8, max_width=16, disc_base_width=8,
                               disc_layers=2)
            torch.manual_seed(3)
            _, disc = build_refiner(cfg)
            g, _ = refiner_objective(coarse, refined, real, disc, fx, cfg)
            return float(g)

        base = g_for(0.0)
        once = g_for(10.0) - base
        twice = g_for(20.0) - base
        assert twice == pytest.approx(2 * once, rel=1e-5)


@pytest.fixture(scope="module")
def tiny_two_stage():
    spec = generate_toy_scene(seed=31, image_size=16)
    split = toy_dataset(spec, n_train=4, n_test=2, pose_sampler_seed=13)
    cfg = GenNetConfig(fc_dims=(64, 32), upsample_channels=(32, 32, 16, 16),
                       output_size=16)
    ckpt = train_gennet(split, Stage1Hparams(epochs=5, seed=1), cfg)
    return split, ckpt


TINY_REFINE = RefineConfig(lambda1=100.0, lambda2=1.0, lambda3=1.0, image_size=16,
                           base_width=8, max_width=32, disc_base_width=8,
                           disc_layers=2)


class TestTraining:
    def test_gennet_frozen_byte_identical(self, tiny_two_stage):
        split, stage1 = tiny_two_stage
        digest_before = stage1.params_digest()
        fx = random_extractor(seed=0)
        ckpt = train_refinenet(stage1, split, TINY_REFINE,
                               Stage2Hparams(epochs=3, batch_size=4, seed=2), fx=fx)
        assert stage1.params_digest() == digest_before
        assert ckpt.extra["stage1_params_digest"] == digest_before

    def test_requires_gennet_checkpoint(self, tiny_two_stage):
        split, _ = tiny_two_stage
        with pytest.raises(CheckpointError):
            train_refinenet(None, split, TINY_REFINE, Stage2Hparams(epochs=1))

    def test_size_mismatch_rejected(self, tiny_two_stage):
        split, stage1 = tiny_two_stage
        with pytest.raises(ConfigError):
            train_refinenet(stage1, split, RefineConfig.small(64),
                            Stage2Hparams(epochs=1))

    def test_refined_inference_deterministic(self, tiny_two_stage):
        split, stage1 = tiny_two_stage
        fx = random_extractor(seed=0)
        ckpt = train_refinenet(stage1, split, TINY_REFINE,
                               Stage2Hparams(epochs=2, batch_size=4, seed=5), fx=fx)
        predictor = RefinePredictor(ckpt)
        coarse = np.random.default_rng(0).uniform(-1, 1, size=(3, 16, 16)).astype(np.float32)
        a = predictor(coarse)
        b = predictor(coarse)
        assert np.array_equal(a, b)
        assert a.shape == (3, 16, 16)
        c = refine_infer(ckpt, coarse)
        assert np.array_equal(a, c)

    def test_no_perceptual_flag_variant(self, tiny_two_stage):
        split, stage1 = tiny_two_stage
        cfg = TINY_REFINE.without_perceptual()
        ckpt = train_refinenet(stage1, split, cfg,
                               Stage2Hparams(epochs=1, batch_size=4, seed=2))
        assert ckpt.config["lambda2"] == 0.0
        assert ckpt.config["lambda3"] == 0.0
