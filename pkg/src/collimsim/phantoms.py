"""Deterministic synthetic open-field images used as fixtures and demos.

No clinical data ships with the package.  These phantoms are smooth
transmission maps times a primary intensity, in linear detector units.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

PRIMARY = 50_000.0

__all__ = ["PRIMARY", "flat_field", "disk", "step", "thorax", "fixtures"]


def _grid(shape):
    h, w = shape
    y, x = np.mgrid[0:h, 0:w].astype(float)
    return (x + 0.5) / w, (y + 0.5) / h


def flat_field(shape=(256, 256), primary=PRIMARY, transmission=1.0):
    return np.full(shape, primary * transmission)


def disk(shape=(64, 64), primary=PRIMARY, background=0.3, radius=0.3):
    """Bright disk (full transmission) on an attenuating background."""
    x, y = _grid(shape)
    inside = (x - 0.5) ** 2 + (y - 0.5) ** 2 <= radius**2
    return primary * np.where(inside, 1.0, background)


def step(shape=(64, 64), primary=PRIMARY, left=0.25, right=0.8):
    """Vertical step in transmission halfway across the image."""
    x, _ = _grid(shape)
    return primary * np.where(x < 0.5, left, right)


def thorax(shape=(256, 256), primary=PRIMARY):
    """Crude chest radiograph: air border, body, two lungs, spine, ribs."""
    x, y = _grid(shape)
    t = np.ones(shape)
    body = ((x - 0.5) / 0.42) ** 2 + ((y - 0.55) / 0.47) ** 2 <= 1
    t[body] = 0.3
    for cx in (0.33, 0.67):
        lung = ((x - cx) / 0.13) ** 2 + ((y - 0.48) / 0.28) ** 2 <= 1
        t[lung] = 0.65
    spine = body & (np.abs(x - 0.5) < 0.045)
    t[spine] = 0.12
    ribs = body & ~spine & (np.sin(2 * np.pi * y * 9) > 0.85)
    t[ribs] *= 0.8
    t = ndimage.gaussian_filter(t, sigma=max(shape) / 256.0, mode="nearest")
    return primary * t


def fixtures():
    """The ten open-field fixture images: several phantoms at several sizes."""
    return [
        flat_field((32, 32)),
        flat_field((64, 48), transmission=0.8),
        disk((64, 64)),
        disk((96, 128), radius=0.25),
        step((64, 64)),
        step((80, 120), left=0.1, right=0.95),
        thorax((128, 128)),
        thorax((256, 256)),
        thorax((200, 160)),
        disk((256, 256), background=0.5),
    ]
