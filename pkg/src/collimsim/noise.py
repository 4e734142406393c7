"""Noise compensation for damped regions.

Scaling a Poisson-distributed signal by a transmission ``alpha`` scales its
standard deviation too, so a collimated region keeps the open-field SNR
``sqrt(lam)`` instead of dropping to the ``sqrt(alpha * lam)`` of a real
exposure with ``alpha * lam`` photons.  Adding zero-mean Gaussian noise with::

    sigma_x**2 = alpha * lam * (1 - alpha)          (photon units)

restores ``Var = alpha * lam``.  ``mode="paper-printed"`` uses
``sigma_x = sqrt(lam * (1 - alpha))`` instead, kept for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UsageError

__all__ = ["NoiseParams", "MODES", "compute_sigma_x", "add_compensation_noise"]

MODES = ("variance-matching", "paper-printed")


@dataclass(frozen=True)
class NoiseParams:
    photon_rate_lambda: float = 5000.0
    mode: str = "variance-matching"
    enabled: bool = True

    def __post_init__(self):
        lam = self.photon_rate_lambda
        if not (math.isfinite(lam) and lam > 0):
            raise ConfigurationError(f"photon_rate_lambda must be > 0, got {lam}")
        if self.mode not in MODES:
            raise ConfigurationError(f"noise mode must be one of {MODES}, got {self.mode!r}")


def compute_sigma_x(damping_alpha, lam: float, mode: str = "variance-matching"):
    """Standard deviation, in photons, of the compensating Gaussian term.

    Accepts a scalar or an array of transmissions; returns the same kind.
    """
    if mode not in MODES:
        raise ConfigurationError(f"noise mode must be one of {MODES}, got {mode!r}")
    if not (math.isfinite(lam) and lam > 0):
        raise ConfigurationError(f"lambda must be > 0, got {lam}")
    alpha = np.asarray(damping_alpha, dtype=float)
    if np.any(~np.isfinite(alpha)) or np.any(alpha <= 0) or np.any(alpha > 1):
        raise ConfigurationError("damping alpha must lie in (0, 1]")
    if mode == "variance-matching":
        sigma = np.sqrt(alpha * lam * (1.0 - alpha))
    else:
        sigma = np.sqrt(lam * (1.0 - alpha))
    return float(sigma) if sigma.ndim == 0 else sigma


def add_compensation_noise(
    img,
    transmission,
    params: NoiseParams,
    rng: np.random.Generator,
    primary_intensity: float,
) -> np.ndarray:
    """Add per-pixel compensation noise where the transmission is below one.

    ``primary_intensity / lam`` converts photons to intensity units.  Normal
    draws are taken only for damped pixels, in row-major order, so pixels with
    transmission 1 are returned untouched.  The result is clamped at zero.
    """
    arr = np.asarray(img, dtype=float)
    alpha = np.asarray(transmission, dtype=float)
    if arr.shape != alpha.shape:
        raise UsageError(f"image {arr.shape} and transmission {alpha.shape} differ in shape")
    if not (math.isfinite(primary_intensity) and primary_intensity > 0):
        raise ConfigurationError(f"primary_intensity must be > 0, got {primary_intensity}")
    if not params.enabled:
        return arr.copy()
    gain = primary_intensity / params.photon_rate_lambda
    sigma = gain * compute_sigma_x(alpha, params.photon_rate_lambda, params.mode)
    out = arr.copy()
    damped = sigma > 0
    out[damped] += sigma[damped] * rng.standard_normal(int(damped.sum()))
    np.maximum(out, 0.0, out=out)
    return out
