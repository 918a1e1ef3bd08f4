"""Stage-1 generator: a 7-vector camera pose expands to a coarse image.

Two bias-free fully connected layers widen the pose along the channel
dimension, the result is reshaped to a 1x1 feature map, and a chain of
nearest-neighbor-upsample + 3x3 conv blocks doubles the spatial size up to
the output resolution.  A 1x1 conv with Tanh compresses to RGB.  Trained
with plain L1 against the target images.
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
    restore_optimizer,
)
from .data import load_sample_image
from .errors import ConfigError, DivergenceError, EmptyDataset, ShapeError
from .pose import Pose

POSE_DIM = 7


@dataclass(frozen=True)
class GenNetConfig:
    fc_dims: tuple = (2048, 1024)
    upsample_channels: tuple = (512, 256, 256, 256, 256, 256, 128, 64)
    dropout_p: float = 0.2
    use_batchnorm: bool = True
    output_size: int = 256

    def __post_init__(self):
        object.__setattr__(self, "fc_dims", tuple(int(d) for d in self.fc_dims))
        object.__setattr__(self, "upsample_channels",
                           tuple(int(c) for c in self.upsample_channels))
        if len(self.fc_dims) < 1 or any(d < 1 for d in self.fc_dims):
            raise ConfigError(f"bad fc_dims {self.fc_dims}")
        if any(c < 1 for c in self.upsample_channels):
            raise ConfigError(f"bad upsample_channels {self.upsample_channels}")
        # spatial size starts at 1x1 and doubles per upsample block
        if 2 ** len(self.upsample_channels) != self.output_size:
            raise ConfigError(
                f"2^{len(self.upsample_channels)} blocks != output_size {self.output_size}")
        if not (0.0 <= self.dropout_p < 1.0):
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")

    @classmethod
    def small(cls, output_size: int = 64) -> "GenNetConfig":
        """Desk-scale variant for fast overfit/generalization fixtures."""
        n_blocks = int(np.log2(output_size))
        if 2 ** n_blocks != output_size:
            raise ConfigError(f"output_size must be a power of 2, got {output_size}")
        channels = tuple([128] * max(0, n_blocks - 4) + [64, 64, 32, 32][:n_blocks])
        return cls(fc_dims=(256, 128), upsample_channels=channels,
                   output_size=output_size)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GenNetConfig":
        return cls(fc_dims=tuple(d["fc_dims"]),
                   upsample_channels=tuple(d["upsample_channels"]),
                   dropout_p=d["dropout_p"], use_batchnorm=d["use_batchnorm"],
                   output_size=d["output_size"])


class GenNet(nn.Module):
    def __init__(self, config: GenNetConfig):
        super().__init__()
        self.config = config
        use_bn = config.use_batchnorm

        fc_layers = []
        prev = POSE_DIM
        for dim in config.fc_dims:
            fc_layers.append(nn.Linear(prev, dim, bias=False))
            if use_bn:
                fc_layers.append(nn.BatchNorm1d(dim))
            fc_layers.append(nn.ReLU(inplace=True))
            fc_layers.append(nn.Dropout(config.dropout_p))
            prev = dim
        self.fc = nn.Sequential(*fc_layers)

        blocks = []
        channels = prev
        for out_ch in config.upsample_channels:
            block = [
                nn.Upsample(scale_factor=2, mode="nearest"),
                nn.Conv2d(channels, out_ch, kernel_size=3, stride=1, padding=1),
            ]
            if use_bn:
                block.append(nn.BatchNorm2d(out_ch))
            block.append(nn.ReLU(inplace=True))
            blocks.append(nn.Sequential(*block))
            channels = out_ch
        self.up_blocks = nn.ModuleList(blocks)
        self.head = nn.Sequential(nn.Conv2d(channels, 3, kernel_size=1), nn.Tanh())

    def forward(self, pose_vec: torch.Tensor) -> torch.Tensor:
        if pose_vec.ndim != 2 or pose_vec.shape[1] != POSE_DIM:
            raise ShapeError(f"expected (B, {POSE_DIM}) pose batch, got {tuple(pose_vec.shape)}")
        x = self.fc(pose_vec)
        x = x.view(x.shape[0], -1, 1, 1)
        for block in self.up_blocks:
            x = block(x)
        return self.head(x)


def init_weights(module: nn.Module):
    """pix2pix-style init: conv/linear ~ N(0, 0.02), norm scale ~ N(1, 0.02)."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            nn.init.normal_(m.weight, 0.0, 0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, (nn.BatchNorm1d, nn.BatchNorm2d)):
            nn.init.normal_(m.weight, 1.0, 0.02)
            nn.init.zeros_(m.bias)


def build_gennet(config: GenNetConfig) -> GenNet:
    model = GenNet(config)
    init_weights(model)
    return model


def l1_loss(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if tuple(pred.shape) != tuple(target.shape):
        raise ShapeError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return (pred - target).abs().mean()


@dataclass
class Stage1Hparams:
    lr: float = 1e-4
    batch_size: int = 48
    beta1: float = 0.5
    beta2: float = 0.999
    epochs: int = 1000
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


class EpochSink:
    """Training observer; override to log losses or emit mid-run artifacts."""

    def on_epoch(self, epoch: int, loss: float, model: nn.Module, **extras):
        pass


def _default_loader(size):
    return lambda sample: load_sample_image(sample, size=size)


def _stack_training_data(samples, loader):
    poses = np.stack([s.pose.flatten() for s in samples]).astype(np.float32)
    images = np.stack([loader(s) for s in samples]).astype(np.float32)
    images = np.transpose(images, (0, 3, 1, 2))  # NHWC -> NCHW
    return torch.from_numpy(poses), torch.from_numpy(images)


def train_gennet(split, hparams: Stage1Hparams, config: GenNetConfig,
                 sink: EpochSink | None = None,
                 image_loader=None,
                 resume_from: Checkpoint | None = None) -> Checkpoint:
    """Adam-minimize L1 between generated and target images.

    The checkpoint's ``step`` counts completed epochs; with ``epochs=0`` the
    returned checkpoint is exactly the seeded initialization.  Identical
    seeds give identical loss curves.
    """
    samples = list(split.train)
    if not samples:
        raise EmptyDataset("training split is empty")
    if hparams.batch_size < 1:
        raise ConfigError("batch_size must be >= 1")

    torch.manual_seed(hparams.seed)
    model = build_gennet(config)
    optimizer = torch.optim.Adam(model.parameters(), lr=hparams.lr,
                                 betas=(hparams.beta1, hparams.beta2))
    start_epoch = 0
    if resume_from is not None:
        from .checkpoint import config_hash_of

        if config_hash_of(resume_from.config) != config_hash_of(config.to_dict()):
            raise ConfigError("resume checkpoint was trained with a different config")
        load_into_module(resume_from, model)
        restore_optimizer(resume_from, model, optimizer)
        start_epoch = resume_from.step

    loader = image_loader or _default_loader(config.output_size)
    poses, images = _stack_training_data(samples, loader)
    n = len(samples)
    shuffle_rng = np.random.default_rng(hparams.seed + 1)
    # replay shuffles consumed before the resume point to stay on-curve
    for _ in range(start_epoch):
        shuffle_rng.permutation(n)

    model.train()
    step = 0
    for epoch in range(start_epoch, hparams.epochs):
        perm = shuffle_rng.permutation(n)
        batch_losses = []
        for lo in range(0, n, hparams.batch_size):
            idx = perm[lo:lo + hparams.batch_size]
            pred = model(poses[idx])
            loss = l1_loss(pred, images[idx])
            if not torch.isfinite(loss):
                raise DivergenceError(f"non-finite loss at step {step} (epoch {epoch})")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            step += 1
            batch_losses.append(float(loss.detach()))
        if sink is not None:
            sink.on_epoch(epoch + 1, float(np.mean(batch_losses)), model,
                          optimizer=optimizer)
    model.eval()
    return checkpoint_from_module(model, kind="gennet", config=config.to_dict(),
                                  step=max(start_epoch, hparams.epochs),
                                  seed=hparams.seed, optimizer=optimizer,
                                  extra={"hparams": hparams.to_dict()})


class GenNetPredictor:
    """Loads a stage-1 checkpoint once; thread-safe read-only inference."""

    def __init__(self, ckpt: Checkpoint):
        if ckpt.kind != "gennet":
            from .errors import CheckpointError
            raise CheckpointError(f"expected a gennet checkpoint, got kind={ckpt.kind!r}")
        self.config = GenNetConfig.from_dict(ckpt.config)
        self.checkpoint = ckpt
        self.model = GenNet(self.config)
        load_into_module(ckpt, self.model)
        self.model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)

    def __call__(self, pose: Pose) -> np.ndarray:
        """Synthesize the coarse image: float32 CHW in [-1, 1]."""
        vec = torch.from_numpy(pose.flatten().astype(np.float32)).unsqueeze(0)
        with torch.no_grad():
            out = self.model(vec)
        return out[0].numpy()

    def batch(self, poses) -> np.ndarray:
        vecs = torch.from_numpy(
            np.stack([p.flatten() for p in poses]).astype(np.float32))
        with torch.no_grad():
            out = self.model(vecs)
        return out.numpy()


def gennet_infer(checkpoint: Checkpoint, pose: Pose) -> np.ndarray:
    """One-shot eval-mode synthesis of a coarse CHW image in [-1, 1]."""
    return GenNetPredictor(checkpoint)(pose)
