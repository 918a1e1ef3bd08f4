"""Perceptual losses: Gram-matrix style loss and single-tap content loss.

Both are computed on the activations of a frozen convolutional feature
extractor with four tap points.  The production extractor mirrors the VGG16
convolutional stack (taps after relu1_2, relu2_2, relu3_3, relu4_3 with 64,
128, 256, 512 channels); pretrained classification weights are used when
available, and a fixed seeded-random initialization of the same topology is
the offline substitute.  The loss math is identical either way.
"""

from __future__ import annotations

import torch
from torch import nn

VGG_TAP_NAMES = ("relu1_2", "relu2_2", "relu3_3", "relu4_3")
VGG_TAP_CHANNELS = (64, 128, 256, 512)

# channel statistics the pretrained classifier was trained with, on [0, 1]
_IMAGENET_MEAN = (0.485, 0.456, 0.406)
_IMAGENET_STD = (0.229, 0.224, 0.225)


class FeatureExtractor(nn.Module):
    """Frozen conv backbone exposing a list of tap activations.

    ``stages[i]`` maps the previous tap output to tap ``i``.  ``content_tap``
    selects which tap the content loss uses.  ``normalize`` maps model-space
    [-1, 1] images to whatever range the backbone expects.
    """

    def __init__(self, stages, tap_names, content_tap: int = 1,
                 input_range: str = "unit_centered"):
        super().__init__()
        self.stages = nn.ModuleList(stages)
        self.tap_names = tuple(tap_names)
        self.content_tap = content_tap
        self.input_range = input_range
        if input_range == "imagenet":
            self.register_buffer("_mean", torch.tensor(_IMAGENET_MEAN).view(1, 3, 1, 1))
            self.register_buffer("_std", torch.tensor(_IMAGENET_STD).view(1, 3, 1, 1))
        self.eval()
        for p in self.parameters():
            p.requires_grad_(False)

    def normalize(self, x: torch.Tensor) -> torch.Tensor:
        if self.input_range == "imagenet":
            return ((x + 1.0) * 0.5 - self._mean) / self._std
        return x

    def forward(self, x: torch.Tensor) -> list:
        taps = []
        for stage in self.stages:
            x = stage(x)
            taps.append(x)
        return taps

    def train(self, mode: bool = True):  # weights stay frozen; ignore mode
        return super().train(False)


def _conv_relu_stack(in_ch, out_chs, pool_first: bool):
    layers = []
    if pool_first:
        layers.append(nn.MaxPool2d(2, 2))
    prev = in_ch
    for ch in out_chs:
        layers += [nn.Conv2d(prev, ch, kernel_size=3, padding=1), nn.ReLU(inplace=True)]
        prev = ch
    return nn.Sequential(*layers)


def vgg16_extractor(weights: str = "random", seed: int = 0) -> FeatureExtractor:
    """Four-tap VGG16-topology extractor.

    ``weights='pretrained'`` loads torchvision's classification weights
    (requires a weight download); ``'random'`` uses a fixed seeded
    initialization with the identical topology.
    """
    stages = [
        _conv_relu_stack(3, (64, 64), pool_first=False),     # relu1_2
        _conv_relu_stack(64, (128, 128), pool_first=True),   # relu2_2
        _conv_relu_stack(128, (256, 256, 256), pool_first=True),  # relu3_3
        _conv_relu_stack(256, (512, 512, 512), pool_first=True),  # relu4_3
    ]
    fx = FeatureExtractor(stages, VGG_TAP_NAMES, content_tap=1, input_range="imagenet")
    if weights == "pretrained":
        _load_torchvision_vgg16(fx)
    elif weights == "random":
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            for m in fx.modules():
                if isinstance(m, nn.Conv2d):
                    nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
                    nn.init.zeros_(m.bias)
    else:
        raise ValueError(f"weights must be 'random' or 'pretrained', got {weights!r}")
    for p in fx.parameters():
        p.requires_grad_(False)
    return fx


def _load_torchvision_vgg16(fx: FeatureExtractor):
    from torchvision.models import VGG16_Weights, vgg16

    backbone = vgg16(weights=VGG16_Weights.IMAGENET1K_V1).features
    ours = [m for m in fx.modules() if isinstance(m, nn.Conv2d)]
    theirs = [m for m in backbone if isinstance(m, nn.Conv2d)][:len(ours)]
    with torch.no_grad():
        for dst, src in zip(ours, theirs):
            dst.weight.copy_(src.weight)
            dst.bias.copy_(src.bias)


def random_extractor(in_channels: int = 3, widths=((8, 8), (16, 16)),
                     seed: int = 0, content_tap: int = 1) -> FeatureExtractor:
    """Small seeded-random extractor for desk-scale tests.

    One tap per entry of ``widths``; taps after the first are preceded by a
    2x2 max-pool so tap sizes strictly decrease.
    """
    stages = []
    prev = in_channels
    for i, chans in enumerate(widths):
        stages.append(_conv_relu_stack(prev, chans, pool_first=i > 0))
        prev = chans[-1]
    fx = FeatureExtractor(stages, tuple(f"tap{i + 1}" for i in range(len(widths))),
                          content_tap=content_tap, input_range="unit_centered")
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        for m in fx.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
                nn.init.zeros_(m.bias)
    for p in fx.parameters():
        p.requires_grad_(False)
    return fx


class IdentityExtractor(FeatureExtractor):
    """Single tap equal to the input; used for hand-checkable loss values."""

    def __init__(self):
        super().__init__([nn.Identity()], ("identity",), content_tap=0,
                         input_range="unit_centered")


def gram_matrix(features: torch.Tensor) -> torch.Tensor:
    """Channel inner-product matrix normalized by C*H*W.

    Accepts (C, H, W) or (B, C, H, W); returns (C, C) or (B, C, C).
    """
    f = torch.as_tensor(features)
    squeeze = f.ndim == 3
    if squeeze:
        f = f.unsqueeze(0)
    if f.ndim != 4:
        raise ValueError(f"expected (C,H,W) or (B,C,H,W), got {tuple(f.shape)}")
    b, c, h, w = f.shape
    flat = f.reshape(b, c, h * w)
    g = torch.bmm(flat, flat.transpose(1, 2)) / float(c * h * w)
    return g[0] if squeeze else g


def _paired_taps(img_a, img_b, fx: FeatureExtractor):
    a = torch.as_tensor(img_a)
    b = torch.as_tensor(img_b)
    if a.ndim == 3:
        a = a.unsqueeze(0)
    if b.ndim == 3:
        b = b.unsqueeze(0)
    return fx(fx.normalize(a)), fx(fx.normalize(b))


def style_loss(img_a, img_b, fx: FeatureExtractor) -> torch.Tensor:
    """Sum over taps of the squared Frobenius norm of Gram differences.

    Batched inputs average the per-image loss over the batch.
    """
    taps_a, taps_b = _paired_taps(img_a, img_b, fx)
    total = None
    for fa, fb in zip(taps_a, taps_b):
        diff = gram_matrix(fa) - gram_matrix(fb)
        term = (diff ** 2).sum(dim=(-2, -1)).mean()
        total = term if total is None else total + term
    return total


def content_loss(img_a, img_b, fx: FeatureExtractor) -> torch.Tensor:
    """Mean-normalized squared feature distance at the content tap only."""
    taps_a, taps_b = _paired_taps(img_a, img_b, fx)
    fa = taps_a[fx.content_tap]
    fb = taps_b[fx.content_tap]
    c, h, w = fa.shape[-3:]
    per_image = ((fa - fb) ** 2).sum(dim=(-3, -2, -1)) / float(c * h * w)
    return per_image.mean()
