"""Image-quality metrics: SSIM, PSNR, L1, Brenner sharpness, and reports.

All reference metrics operate on [0, 1] images (grayscale internally where
single-channel statistics are needed).  Brenner is a no-reference sharpness
measure computed on [0, 255] grayscale values, keeping its magnitude in the
hundreds for natural images.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate

from .errors import AlignmentError, ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2  # (k1 * L)^2 with L = 1
SSIM_C2 = 0.03 ** 2


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Convert an HxWx3 [0, 1] image to real-valued [0, 255] grayscale.

    Uses the Rec. 601 luma weights; no quantization.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"expected HxWx3 image, got shape {img.shape}")
    return 255.0 * (0.299 * img[..., 0] + 0.587 * img[..., 1] + 0.114 * img[..., 2])


def _as_gray01(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 3:
        return to_grayscale(img) / 255.0
    if img.ndim == 2:
        return img
    raise ShapeError(f"expected HxW or HxWx3 image, got shape {img.shape}")


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    ax = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(img: np.ndarray, ref: np.ndarray, windowed: bool = True) -> float:
    """Structural similarity between two [0, 1] images.

    ``windowed=True`` (default) averages the similarity over 11x11 Gaussian
    windows (sigma 1.5) fully inside the frame; ``windowed=False`` evaluates
    the formula once with global image statistics.
    """
    a = _as_gray01(img)
    b = _as_gray01(ref)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    if windowed:
        if min(a.shape) < SSIM_WINDOW:
            raise ShapeError(f"image smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")
        w = _gaussian_window()
        pad = SSIM_WINDOW // 2
        sl = (slice(pad, a.shape[0] - pad), slice(pad, a.shape[1] - pad))
        mu_a = correlate(a, w)[sl]
        mu_b = correlate(b, w)[sl]
        e_aa = correlate(a * a, w)[sl]
        e_bb = correlate(b * b, w)[sl]
        e_ab = correlate(a * b, w)[sl]
        var_a = e_aa - mu_a ** 2
        var_b = e_bb - mu_b ** 2
        cov = e_ab - mu_a * mu_b
    else:
        mu_a, mu_b = a.mean(), b.mean()
        var_a, var_b = a.var(), b.var()
        cov = ((a - mu_a) * (b - mu_b)).mean()
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a ** 2 + mu_b ** 2 + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return float(np.mean(num / den))


def psnr(img: np.ndarray, ref: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB on [0, 1] images (MAX = 1).

    Returns ``math.inf`` when the images are identical; never raises for
    zero error.
    """
    a = np.asarray(img, dtype=np.float64)
    b = np.asarray(ref, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 20.0 * math.log10(1.0 / math.sqrt(mse))


def l1(img: np.ndarray, ref: np.ndarray) -> float:
    """Mean absolute difference."""
    a = np.asarray(img, dtype=np.float64)
    b = np.asarray(ref, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def brenner(img: np.ndarray) -> float:
    """Brenner sharpness: sum of squared two-row-apart grayscale differences.

    Input is HxW grayscale with values in [0, 255].  The offset runs along
    the first (row) index: ``sum_{h=0}^{H-3} sum_w |f(h+2, w) - f(h, w)|^2``,
    which for 256x256 images matches the bounds h in [0, 253], w in [0, 255].
    """
    f = np.asarray(img, dtype=np.float64)
    if f.ndim != 2:
        raise ShapeError(f"expected HxW grayscale, got shape {f.shape}")
    if f.shape[0] < 3:
        raise ShapeError("need at least 3 rows for the two-row difference")
    d = f[2:, :] - f[:-2, :]
    return float(np.sum(d * d))


@dataclass(frozen=True)
class VariantStats:
    """Per-variant metric means over a test set."""

    mean_ssim: float
    mean_psnr: float | None  # None when every pair had zero error
    psnr_infinite_count: int
    mean_l1: float
    mean_brenner: float

    def to_dict(self) -> dict:
        return {
            "ssim": self.mean_ssim,
            "psnr": self.mean_psnr,
            "psnr_infinite_count": self.psnr_infinite_count,
            "l1": self.mean_l1,
            "brenner": self.mean_brenner,
        }


@dataclass(frozen=True)
class EvalReport:
    """Per-variant metric table over an aligned test stream."""

    variants: dict
    sample_count: int

    def to_dict(self) -> dict:
        return {
            "sample_count": self.sample_count,
            "variants": {k: v.to_dict() for k, v in self.variants.items()},
        }

    def to_json(self, **extra) -> str:
        obj = self.to_dict()
        obj.update(extra)
        return json.dumps(obj, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        obj = json.loads(text)
        variants = {
            k: VariantStats(
                mean_ssim=v["ssim"], mean_psnr=v["psnr"],
                psnr_infinite_count=v["psnr_infinite_count"],
                mean_l1=v["l1"], mean_brenner=v["brenner"],
            )
            for k, v in obj["variants"].items()
        }
        return cls(variants=variants, sample_count=obj["sample_count"])

    def to_table(self) -> str:
        """Aligned plain-text table: metric rows by variant columns."""
        names = list(self.variants)
        width = max(12, *(len(n) + 2 for n in names)) if names else 12
        header = "Metric".ljust(10) + "".join(n.rjust(width) for n in names)
        rows = [header, "-" * len(header)]
        def fmt(v):
            if v is None:
                return "inf"
            return f"{v:.4f}"
        for label, attr in (("SSIM", "mean_ssim"), ("PSNR", "mean_psnr"),
                            ("L1", "mean_l1"), ("Brenner", "mean_brenner")):
            cells = [fmt(getattr(self.variants[n], attr)) for n in names]
            rows.append(label.ljust(10) + "".join(c.rjust(width) for c in cells))
        rows.append(f"samples: {self.sample_count}")
        return "\n".join(rows)


def evaluate(variants: dict, refs) -> EvalReport:
    """Compute the metric table for aligned image streams.

    ``variants`` maps a variant name to a sequence of [0, 1] images, each
    aligned with ``refs``.  Infinite PSNR samples are excluded from the PSNR
    mean and counted separately.
    """
    refs = list(refs)
    if not refs:
        raise AlignmentError("empty reference stream")
    stats = {}
    for name, images in variants.items():
        images = list(images)
        if len(images) != len(refs):
            raise AlignmentError(
                f"variant {name!r} has {len(images)} images for {len(refs)} references")
        ssims, psnrs, l1s, brenners = [], [], [], []
        inf_count = 0
        for img, ref in zip(images, refs):
            ssims.append(ssim(img, ref))
            p = psnr(img, ref)
            if math.isinf(p):
                inf_count += 1
            else:
                psnrs.append(p)
            l1s.append(l1(img, ref))
            brenners.append(brenner(_as_gray01(img) * 255.0))
        stats[name] = VariantStats(
            mean_ssim=float(np.mean(ssims)),
            mean_psnr=float(np.mean(psnrs)) if psnrs else None,
            psnr_infinite_count=inf_count,
            mean_l1=float(np.mean(l1s)),
            mean_brenner=float(np.mean(brenners)),
        )
    return EvalReport(variants=stats, sample_count=len(refs))
