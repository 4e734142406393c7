"""Image similarity measures for real-vs-simulated patch comparison.

``nmse`` and ``psnr`` treat their first argument as the reference; ``ssim``
is symmetric once ``data_range`` is fixed.  When ``data_range`` is omitted it
defaults to the maximum of the reference, so passing it explicitly is the way
to get argument-order independence (e.g. ``65535`` for 16-bit data).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import UsageError
from .physics import GaussianKernelSpec, convolve_gaussian

__all__ = ["PatchSpec", "MetricReport", "nmse", "ssim", "psnr", "compare_patches"]

SSIM_WINDOW = GaussianKernelSpec(1.5)


@dataclass(frozen=True)
class PatchSpec:
    x: int
    y: int
    width: int
    height: int

    def extract(self, img: np.ndarray) -> np.ndarray:
        h, w = img.shape
        if self.x < 0 or self.y < 0 or self.width < 1 or self.height < 1:
            raise UsageError(f"invalid patch {self}")
        if self.x + self.width > w or self.y + self.height > h:
            raise UsageError(f"patch {self} exceeds image of shape {img.shape}")
        return img[self.y : self.y + self.height, self.x : self.x + self.width]

    @classmethod
    def parse(cls, text: str) -> "PatchSpec":
        """Parse ``"x,y,width,height"``."""
        try:
            x, y, w, h = (int(v) for v in text.split(","))
        except ValueError:
            raise UsageError(f"patch must be 'x,y,width,height', got {text!r}") from None
        return cls(x, y, w, h)


@dataclass(frozen=True)
class MetricReport:
    nmse: float
    ssim: float
    psnr: float

    def to_dict(self) -> dict:
        return asdict(self)


def _pair(reference, test):
    ref = np.asarray(reference, dtype=float)
    tst = np.asarray(test, dtype=float)
    if ref.shape != tst.shape:
        raise UsageError(f"image shapes differ: {ref.shape} vs {tst.shape}")
    if ref.ndim != 2:
        raise UsageError(f"expected 2-D images, got shape {ref.shape}")
    return ref, tst


def _default_range(ref: np.ndarray, data_range):
    if data_range is None:
        data_range = float(ref.max())
    if not data_range > 0:
        raise UsageError(f"data_range must be > 0, got {data_range}")
    return float(data_range)


def nmse(reference, test) -> float:
    """``mean((ref - test)**2) / mean(ref**2)``."""
    ref, tst = _pair(reference, test)
    denom = np.mean(ref * ref)
    if denom == 0:
        raise UsageError("nmse is undefined for an all-zero reference")
    return float(np.mean((ref - tst) ** 2) / denom)


def ssim(reference, test, window: GaussianKernelSpec = SSIM_WINDOW, k1: float = 0.01, k2: float = 0.03, data_range=None) -> float:
    """Mean structural similarity with Gaussian-weighted local statistics.

    Local moments use the same clamp-to-edge Gaussian filtering as the rest
    of the package, so the map covers every pixel without cropping.
    """
    ref, tst = _pair(reference, test)
    if min(ref.shape) < window.size:
        raise UsageError(f"images of shape {ref.shape} are smaller than the {window.size}-px window")
    L = _default_range(ref, data_range)
    c1, c2 = (k1 * L) ** 2, (k2 * L) ** 2

    blur = lambda a: convolve_gaussian(a, window)  # noqa: E731
    mu_x, mu_y = blur(ref), blur(tst)
    var_x = blur(ref * ref) - mu_x * mu_x
    var_y = blur(tst * tst) - mu_y * mu_y
    cov = blur(ref * tst) - mu_x * mu_y
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def psnr(reference, test, data_range=None) -> float:
    """Peak SNR in dB; ``math.inf`` for identical images."""
    ref, tst = _pair(reference, test)
    L = _default_range(ref, data_range)
    mse = float(np.mean((ref - tst) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(L * L / mse)


def compare_patches(reference, test, patches=None, data_range=None, window: GaussianKernelSpec = SSIM_WINDOW) -> list[MetricReport]:
    """One :class:`MetricReport` per patch (whole image when ``patches`` is empty).

    The default data range is taken from the whole reference image so every
    patch is scored on the same scale.
    """
    ref, tst = _pair(reference, test)
    L = _default_range(ref, data_range)
    patches = list(patches or [PatchSpec(0, 0, ref.shape[1], ref.shape[0])])
    reports = []
    for p in patches:
        a, b = p.extract(ref), p.extract(tst)
        reports.append(MetricReport(nmse(a, b), ssim(a, b, window, data_range=L), psnr(a, b, L)))
    return reports
