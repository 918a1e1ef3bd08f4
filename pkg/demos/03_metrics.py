"""Image-quality metrics: SSIM, PSNR, L1, and the Brenner sharpness measure.

Run: python demos/03_metrics.py
"""

import numpy as np

from pose2view import brenner, evaluate, psnr, ssim, to_grayscale

rng = np.random.default_rng(0)
ref = rng.uniform(size=(64, 64, 3))  # metric space is [0, 1]

# SSIM is 1 for identical images and decays with structural distortion;
# PSNR is infinite at zero error (reported as an exclusion count, never an
# exception).
print("ssim(ref, ref) =", ssim(ref, ref))
print("psnr(ref, ref) =", psnr(ref, ref))

noisy = np.clip(ref + rng.normal(scale=0.05, size=ref.shape), 0, 1)
blurred = ref.copy()
blurred[1:-1] = (ref[:-2] + ref[1:-1] + ref[2:]) / 3
for name, img in (("noisy", noisy), ("blurred", blurred)):
    print(f"{name}: ssim {ssim(img, ref):.4f}  psnr {psnr(img, ref):.2f} dB")

# Brenner sums squared two-row-apart grayscale differences: a no-reference
# sharpness score.  Blurring lowers it, high-frequency noise raises it.
g = to_grayscale(ref)
print("\nbrenner(ref)     =", round(brenner(g)))
print("brenner(blurred) =", round(brenner(to_grayscale(blurred))))
print("brenner(noisy)   =", round(brenner(to_grayscale(noisy))))

# evaluate() builds the per-variant metric table used by experiment eval:
# means over an aligned test stream, with infinite-PSNR samples counted
# separately.
report = evaluate(
    {"identity": [ref, ref], "noisy": [noisy, noisy], "blurred": [blurred, blurred]},
    [ref, ref],
)
print("\n" + report.to_table())
print("\nJSON:", report.to_json()[:120], "...")
