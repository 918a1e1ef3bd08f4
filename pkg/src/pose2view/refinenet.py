"""Stage-2 refiner: conditional adversarial network over frozen coarse output.

The generator is an 8-down/8-up U-Net (no dropout, so inference is
deterministic); the discriminator is a patch classifier over the channel
concatenation of the conditioning coarse image and a candidate image, with a
70x70 receptive field producing a 30x30 score map on 256 inputs.  The
generator objective adds weighted L1, Gram-style, and content terms to the
adversarial loss; the stage-1 network stays frozen throughout.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .checkpoint import (
    Checkpoint,
    checkpoint_from_module,
    load_into_module,
)
from .data import load_sample_image
from .errors import (
    CheckpointError,
    ConfigError,
    DivergenceError,
    EmptyDataset,
    ShapeError,
)
from .gennet import GenNetPredictor, init_weights, l1_loss
from .perceptual import FeatureExtractor, content_loss, style_loss, vgg16_extractor

GAN_LOSS_KINDS = ("vanilla", "lsgan")


@dataclass(frozen=True)
class RefineConfig:
    lambda1: float = 100.0   # L1 weight (pix2pix default; unweighted adv term)
    lambda2: float = 5e4     # style weight
    lambda3: float = 10.0    # content weight
    base_width: int = 64
    max_width: int = 512
    image_size: int = 256
    disc_base_width: int = 64
    disc_layers: int = 3
    gan_loss_kind: str = "vanilla"

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3) < 0:
            raise ConfigError("loss weights must be non-negative")
        n = int(np.log2(self.image_size))
        if 2 ** n != self.image_size or n < 3:
            raise ConfigError(f"image_size must be a power of 2 >= 8, got {self.image_size}")
        if self.base_width < 1 or self.max_width < self.base_width:
            raise ConfigError("bad generator widths")
        if self.gan_loss_kind not in GAN_LOSS_KINDS:
            raise ConfigError(f"gan_loss_kind must be one of {GAN_LOSS_KINDS}")
        # the two stride-1 tail convs need >= 3px after the strided stack
        if self.image_size < 3 * 2 ** self.disc_layers:
            raise ConfigError(
                f"disc_layers={self.disc_layers} too deep for {self.image_size}px input")

    @property
    def num_downs(self) -> int:
        # encode all the way to a 1x1 bottleneck
        return int(np.log2(self.image_size))

    @classmethod
    def small(cls, image_size: int = 64, **kw) -> "RefineConfig":
        defaults = dict(base_width=32, max_width=128, disc_base_width=32,
                        image_size=image_size,
                        disc_layers=3 if image_size >= 24 else 2)
        defaults.update(kw)
        return cls(**defaults)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RefineConfig":
        return cls(**d)

    def without_perceptual(self) -> "RefineConfig":
        d = self.to_dict()
        d["lambda2"] = 0.0
        d["lambda3"] = 0.0
        return RefineConfig(**d)


class UnetBlock(nn.Module):
    """One encoder/decoder level with a skip concatenation around its child."""

    def __init__(self, outer_nc, inner_nc, input_nc=None, submodule=None,
                 outermost=False, innermost=False):
        super().__init__()
        self.outermost = outermost
        if input_nc is None:
            input_nc = outer_nc
        downconv = nn.Conv2d(input_nc, inner_nc, kernel_size=4, stride=2,
                             padding=1, bias=innermost or outermost)
        downrelu = nn.LeakyReLU(0.2, inplace=True)
        uprelu = nn.ReLU(inplace=True)

        if outermost:
            upconv = nn.ConvTranspose2d(inner_nc * 2, outer_nc, 4, 2, 1)
            model = [downconv, submodule, uprelu, upconv, nn.Tanh()]
        elif innermost:
            upconv = nn.ConvTranspose2d(inner_nc, outer_nc, 4, 2, 1, bias=False)
            model = [downrelu, downconv, uprelu, upconv, nn.BatchNorm2d(outer_nc)]
        else:
            upconv = nn.ConvTranspose2d(inner_nc * 2, outer_nc, 4, 2, 1, bias=False)
            model = [downrelu, downconv, nn.BatchNorm2d(inner_nc), submodule,
                     uprelu, upconv, nn.BatchNorm2d(outer_nc)]
        self.model = nn.Sequential(*model)

    def forward(self, x):
        if self.outermost:
            return self.model(x)
        return torch.cat([x, self.model(x)], dim=1)


class UnetGenerator(nn.Module):
    def __init__(self, config: RefineConfig, in_channels: int = 3, out_channels: int = 3):
        super().__init__()
        n = config.num_downs
        widths = [min(config.base_width * 2 ** i, config.max_width) for i in range(n)]
        block = UnetBlock(widths[n - 2], widths[n - 1], innermost=True)
        for i in range(n - 2, 0, -1):
            block = UnetBlock(widths[i - 1], widths[i], submodule=block)
        self.model = UnetBlock(out_channels, widths[0], input_nc=in_channels,
                               submodule=block, outermost=True)
        self.encoder_widths = widths

    def forward(self, x):
        if x.shape[-1] != x.shape[-2]:
            raise ShapeError(f"expected square input, got {tuple(x.shape)}")
        return self.model(x)


class PatchDiscriminator(nn.Module):
    """Patch classifier over (condition, candidate) channel concatenation."""

    def __init__(self, in_channels: int = 6, base_width: int = 64, n_layers: int = 3):
        super().__init__()
        layers = [nn.Conv2d(in_channels, base_width, 4, stride=2, padding=1),
                  nn.LeakyReLU(0.2, inplace=True)]
        mult = 1
        for k in range(1, n_layers):
            prev, mult = mult, min(2 ** k, 8)
            layers += [nn.Conv2d(base_width * prev, base_width * mult, 4,
                                 stride=2, padding=1, bias=False),
                       nn.BatchNorm2d(base_width * mult),
                       nn.LeakyReLU(0.2, inplace=True)]
        prev, mult = mult, min(2 ** n_layers, 8)
        layers += [nn.Conv2d(base_width * prev, base_width * mult, 4,
                             stride=1, padding=1, bias=False),
                   nn.BatchNorm2d(base_width * mult),
                   nn.LeakyReLU(0.2, inplace=True),
                   nn.Conv2d(base_width * mult, 1, 4, stride=1, padding=1)]
        self.model = nn.Sequential(*layers)

    def forward(self, condition, candidate):
        return self.model(torch.cat([condition, candidate], dim=1))


def build_refiner(config: RefineConfig):
    """Build the (generator, discriminator) pair with pix2pix init."""
    gen = UnetGenerator(config)
    disc = PatchDiscriminator(in_channels=6, base_width=config.disc_base_width,
                              n_layers=config.disc_layers)
    init_weights(gen)
    init_weights(disc)
    return gen, disc


def gan_loss(logits: torch.Tensor, target_is_real: bool, kind: str = "vanilla") -> torch.Tensor:
    target = torch.full_like(logits, 1.0 if target_is_real else 0.0)
    if kind == "vanilla":
        return nn.functional.binary_cross_entropy_with_logits(logits, target)
    if kind == "lsgan":
        return nn.functional.mse_loss(logits, target)
    raise ConfigError(f"unknown gan loss kind {kind!r}")


def _generator_loss(coarse, refined, real, disc, fx, config):
    g = gan_loss(disc(coarse, refined), True, config.gan_loss_kind)
    g = g + config.lambda1 * l1_loss(refined, real)
    if config.lambda2 != 0.0:
        g = g + config.lambda2 * style_loss(refined, real, fx)
    if config.lambda3 != 0.0:
        g = g + config.lambda3 * content_loss(refined, real, fx)
    return g


def _discriminator_loss(coarse, refined, real, disc, config):
    d_real = gan_loss(disc(coarse, real), True, config.gan_loss_kind)
    d_fake = gan_loss(disc(coarse, refined.detach()), False, config.gan_loss_kind)
    return 0.5 * (d_real + d_fake)


def refiner_objective(coarse, refined, real, disc: PatchDiscriminator,
                      fx: FeatureExtractor, config: RefineConfig):
    """Generator and discriminator losses for one batch.

    The condition image is the coarse input.  The generator loss is
    adversarial + lambda1*L1 + lambda2*style + lambda3*content; the
    discriminator loss is the mean of its real and fake classification
    terms.
    """
    for name, t in (("coarse", coarse), ("refined", refined), ("real", real)):
        if tuple(t.shape) != tuple(coarse.shape):
            raise ShapeError(f"{name} shape {tuple(t.shape)} mismatches {tuple(coarse.shape)}")
    g = _generator_loss(coarse, refined, real, disc, fx, config)
    d = _discriminator_loss(coarse, refined, real, disc, config)
    return g, d


@dataclass
class Stage2Hparams:
    lr: float = 2e-4
    batch_size: int = 8
    beta1: float = 0.5
    beta2: float = 0.999
    epochs: int = 200
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def train_refinenet(gennet_ckpt: Checkpoint, split, config: RefineConfig,
                    hparams: Stage2Hparams, fx: FeatureExtractor | None = None,
                    sink=None, image_loader=None) -> Checkpoint:
    """Alternating D/G Adam training of the refiner over frozen coarse images.

    Coarse inputs are computed once with the stage-1 network in eval mode;
    its parameters are never part of either optimizer, so they are
    bit-identical before and after.
    """
    if gennet_ckpt is None or gennet_ckpt.kind != "gennet":
        raise CheckpointError("stage-2 training needs a stage-1 (gennet) checkpoint")
    samples = list(split.train)
    if not samples:
        raise EmptyDataset("training split is empty")

    predictor = GenNetPredictor(gennet_ckpt)
    size = predictor.config.output_size
    if size != config.image_size:
        raise ConfigError(
            f"stage-1 output {size}px != refiner image_size {config.image_size}px")

    torch.manual_seed(hparams.seed)
    gen, disc = build_refiner(config)
    if fx is None and (config.lambda2 != 0.0 or config.lambda3 != 0.0):
        fx = vgg16_extractor("random", seed=hparams.seed)

    opt_g = torch.optim.Adam(gen.parameters(), lr=hparams.lr,
                             betas=(hparams.beta1, hparams.beta2))
    opt_d = torch.optim.Adam(disc.parameters(), lr=hparams.lr,
                             betas=(hparams.beta1, hparams.beta2))

    loader = image_loader or (lambda s: load_sample_image(s, size=size))
    real = np.stack([loader(s) for s in samples]).astype(np.float32)
    real = torch.from_numpy(np.transpose(real, (0, 3, 1, 2)))
    coarse = torch.from_numpy(predictor.batch([s.pose for s in samples]))

    n = len(samples)
    shuffle_rng = np.random.default_rng(hparams.seed + 1)
    gen.train()
    disc.train()
    step = 0
    for epoch in range(hparams.epochs):
        perm = shuffle_rng.permutation(n)
        g_losses, d_losses = [], []
        for lo in range(0, n, hparams.batch_size):
            idx = perm[lo:lo + hparams.batch_size]
            c = coarse[idx]
            r = real[idx]
            refined = gen(c)
            # discriminator first, then the generator against the updated D
            d_loss = _discriminator_loss(c, refined, r, disc, config)
            if not torch.isfinite(d_loss):
                raise DivergenceError(f"non-finite D loss at step {step} (epoch {epoch})")
            opt_d.zero_grad()
            d_loss.backward()
            opt_d.step()
            g_loss = _generator_loss(c, refined, r, disc, fx, config)
            if not torch.isfinite(g_loss):
                raise DivergenceError(f"non-finite G loss at step {step} (epoch {epoch})")
            opt_g.zero_grad()
            g_loss.backward()
            opt_g.step()
            step += 1
            g_losses.append(float(g_loss.detach()))
            d_losses.append(float(d_loss.detach()))
        if sink is not None:
            sink.on_epoch(epoch + 1, float(np.mean(g_losses)), gen,
                          d_loss=float(np.mean(d_losses)))
    gen.eval()
    disc.eval()

    merged = nn.ModuleDict({"generator": gen, "discriminator": disc})
    return checkpoint_from_module(merged, kind="refinenet", config=config.to_dict(),
                                  step=hparams.epochs, seed=hparams.seed,
                                  extra={
                                      "hparams": hparams.to_dict(),
                                      "stage1_params_digest": gennet_ckpt.params_digest(),
                                      "stage1_config_hash": gennet_ckpt.config_hash,
                                  })


class RefinePredictor:
    """Loads a stage-2 checkpoint once; deterministic eval-mode refinement."""

    def __init__(self, ckpt: Checkpoint):
        if ckpt.kind != "refinenet":
            raise CheckpointError(f"expected a refinenet checkpoint, got kind={ckpt.kind!r}")
        self.config = RefineConfig.from_dict(ckpt.config)
        self.checkpoint = ckpt
        gen, disc = build_refiner(self.config)
        merged = nn.ModuleDict({"generator": gen, "discriminator": disc})
        load_into_module(ckpt, merged)
        self.generator = gen
        self.generator.eval()
        for p in self.generator.parameters():
            p.requires_grad_(False)

    def __call__(self, coarse: np.ndarray) -> np.ndarray:
        """Refine a CHW [-1, 1] coarse image; returns float32 CHW in [-1, 1]."""
        x = torch.from_numpy(np.asarray(coarse, dtype=np.float32)).unsqueeze(0)
        with torch.no_grad():
            out = self.generator(x)
        return out[0].numpy()


def refine_infer(checkpoint: Checkpoint, coarse: np.ndarray) -> np.ndarray:
    return RefinePredictor(checkpoint)(coarse)
