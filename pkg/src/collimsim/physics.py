"""Collimator damping with focal-spot blur and the convolution scatter model.

All images are 2-D float arrays of linear detector intensity, shape
``(height, width)``.  Functions never modify their inputs.

The scatter model works on the fraction ``t = I / I0`` of the primary
(unattenuated) intensity ``I0``::

    potential  S_p = c * t**alpha * ln(1/t)**beta
    estimate   S_e = (S_p * G_s) * I0          (* = Gaussian convolution)

Collimation multiplies the scatter-free image by the Gaussian-blurred
transmission map, then adds the scatter estimate of the collimated image.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import ndimage, signal

from .errors import ConfigurationError, UsageError

log = logging.getLogger(__name__)

__all__ = [
    "GaussianKernelSpec",
    "ScatterParams",
    "gaussian_kernel",
    "convolve_gaussian",
    "blur_mask",
    "apply_collimation",
    "estimate_primary_intensity",
    "scatter_potential",
    "estimate_scatter",
    "remove_scatter",
    "simulate_collimated",
    "deep_shadow",
    "scatter_fraction",
]

POTENTIAL_FLOOR = 1e-6
CLAMP_WARN_FRACTION = 1e-3
# Above this radius the FFT route beats direct separable correlation.
FFT_RADIUS = 64


@dataclass(frozen=True)
class GaussianKernelSpec:
    sigma: float

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise ConfigurationError(f"Gaussian sigma must be finite and > 0, got {self.sigma}")

    @property
    def radius(self) -> int:
        return math.ceil(3.0 * self.sigma)

    @property
    def size(self) -> int:
        return 2 * self.radius + 1


def gaussian_kernel(spec: GaussianKernelSpec) -> np.ndarray:
    """Normalized 1-D Gaussian weights of length ``2 * radius + 1``.

    Truncated at 3 sigma and renormalized, so weights sum to one.
    """
    x = np.arange(-spec.radius, spec.radius + 1, dtype=float)
    w = np.exp(-(x * x) / (2.0 * spec.sigma**2))
    return w / w.sum()


def _as_image(img, name="image") -> np.ndarray:
    arr = np.asarray(img, dtype=float)
    if arr.ndim != 2 or arr.size == 0:
        raise UsageError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise UsageError(f"{name} contains non-finite values")
    return arr


def _same_shape(a: np.ndarray, b: np.ndarray, what: str) -> None:
    if a.shape != b.shape:
        raise UsageError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def _fft_pass(x: np.ndarray, w: np.ndarray, axis: int) -> np.ndarray:
    r = w.size // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    kernel = w[None, :] if axis == 1 else w[:, None]
    return signal.fftconvolve(np.pad(x, pad, mode="edge"), kernel, mode="valid", axes=axis)


def convolve_gaussian(img, spec: GaussianKernelSpec) -> np.ndarray:
    """Separable Gaussian blur with clamp-to-edge boundaries.

    Rows are filtered first, then columns.  The image minimum is subtracted
    before filtering and added back afterwards, which makes constant images
    (and the all-open transmission map in particular) come back bit-exact.
    """
    arr = _as_image(img)
    w = gaussian_kernel(spec)
    base = arr.min()
    x = arr - base
    if spec.radius > FFT_RADIUS:
        out = _fft_pass(_fft_pass(x, w, axis=1), w, axis=0)
    else:
        out = ndimage.correlate1d(x, w, axis=1, mode="nearest")
        out = ndimage.correlate1d(out, w, axis=0, mode="nearest")
    return out + base


def blur_mask(damped, focal_blur: GaussianKernelSpec) -> np.ndarray:
    """Focal-spot blurred transmission map, kept inside its original range."""
    m = _as_image(damped, "transmission map")
    if m.min() <= 0 or m.max() > 1:
        raise ConfigurationError("transmission values must lie in (0, 1]")
    return np.clip(convolve_gaussian(m, focal_blur), m.min(), m.max())


def apply_collimation(img, damped, focal_blur: GaussianKernelSpec) -> np.ndarray:
    """Damp ``img`` by the blurred transmission map."""
    arr = _as_image(img)
    m = _as_image(damped, "transmission map")
    _same_shape(arr, m, "apply_collimation")
    return blur_mask(m, focal_blur) * arr


@dataclass(frozen=True)
class ScatterParams:
    """Hyperparameters of the convolution scatter model.

    ``primary_intensity`` may be left as ``None`` in configuration and filled
    in per image with :meth:`resolved`; the evaluation functions require it.
    """

    exponent_alpha: float = 0.5
    exponent_beta: float = 1.0
    magnitude_c: float = 0.0
    kernel: GaussianKernelSpec = field(default_factory=lambda: GaussianKernelSpec(24.0))
    primary_intensity: float | None = None

    def __post_init__(self):
        for name in ("exponent_alpha", "exponent_beta", "magnitude_c"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigurationError(f"{name} must be finite")
        if self.magnitude_c < 0:
            raise ConfigurationError(f"magnitude_c must be >= 0, got {self.magnitude_c}")
        if self.exponent_beta < 0:
            raise ConfigurationError(f"exponent_beta must be >= 0, got {self.exponent_beta}")
        i0 = self.primary_intensity
        if i0 is not None and not (math.isfinite(i0) and i0 > 0):
            raise ConfigurationError(f"primary_intensity must be > 0, got {i0}")

    def resolved(self, img=None) -> "ScatterParams":
        """Copy with ``primary_intensity`` set, estimating it from ``img`` if unset."""
        if self.primary_intensity is not None:
            return self
        if img is None:
            raise ConfigurationError("primary_intensity unset and no image to estimate it from")
        return replace(self, primary_intensity=estimate_primary_intensity(img))

    def _i0(self) -> float:
        if self.primary_intensity is None:
            raise ConfigurationError("primary_intensity is unresolved; call ScatterParams.resolved()")
        return self.primary_intensity


def estimate_primary_intensity(img, percentile: float = 99.5) -> float:
    """Primary intensity guess for an open-field image: a high percentile."""
    value = float(np.percentile(_as_image(img), percentile))
    if value <= 0:
        raise ConfigurationError("cannot estimate a positive primary intensity from this image")
    return value


def scatter_potential(img, params: ScatterParams) -> np.ndarray:
    """Per-pixel scatter potential.

    ``I / I0`` is clamped to ``[1e-6, 1]`` first; the model is undefined for
    zero intensity and for intensities above the primary.
    """
    arr = _as_image(img)
    t = np.clip(arr / params._i0(), POTENTIAL_FLOOR, 1.0)
    return params.magnitude_c * t**params.exponent_alpha * np.log(1.0 / t) ** params.exponent_beta


def estimate_scatter(img, params: ScatterParams) -> np.ndarray:
    """Scatter intensity map: blurred potential scaled by ``I0``."""
    sp = scatter_potential(img, params)
    return np.maximum(convolve_gaussian(sp, params.kernel), 0.0) * params._i0()


def remove_scatter(img, params: ScatterParams, *, return_clamped_fraction: bool = False):
    """Subtract the estimated scatter, clamping negative results to zero.

    A warning is logged when more than 0.1 % of pixels clamp, which usually
    means ``magnitude_c`` is too large for this image.  With
    ``return_clamped_fraction`` the fraction is returned alongside the image.
    """
    arr = _as_image(img)
    diff = arr - estimate_scatter(arr, params)
    clamped = float(np.mean(diff < 0))
    if clamped > CLAMP_WARN_FRACTION:
        log.warning("scatter removal clamped %.3f%% of pixels; magnitude_c may be miscalibrated", 100 * clamped)
    out = np.maximum(diff, 0.0)
    return (out, clamped) if return_clamped_fraction else out


def simulate_collimated(img_scatter_free, damped, focal_blur: GaussianKernelSpec, params: ScatterParams) -> np.ndarray:
    """Collimate a scatter-free image and add the scatter of the result."""
    collimated = apply_collimation(img_scatter_free, damped, focal_blur)
    return collimated + estimate_scatter(collimated, params)


def deep_shadow(blurred_mask, damping: float, tol: float = 1e-3) -> np.ndarray:
    """Pixels fully inside the shadow, beyond the reach of the edge blur."""
    return np.asarray(blurred_mask) < damping + tol


def scatter_fraction(scatter, blurred_mask, damping: float, primary_intensity: float) -> float:
    """Mean scatter over the deep shadow, as a fraction of ``I0``.

    Returns ``nan`` when there is no deep-shadow pixel.
    """
    region = deep_shadow(blurred_mask, damping)
    if not region.any():
        return float("nan")
    return float(np.mean(np.asarray(scatter)[region]) / primary_intensity)
