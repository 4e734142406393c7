"""
The convolution scatter model
=============================

Scatter is estimated from the image itself: a per-pixel potential
``c * t**alpha * ln(1/t)**beta`` of the transmission ``t = I / I0``,
smeared by a wide Gaussian.  Removing it from an open-field image and
adding back the scatter of the collimated result keeps the shadows
physically consistent.
"""

from dataclasses import replace

import numpy as np

from collimsim import phantoms
from collimsim.config import PipelineConfig
from collimsim.physics import estimate_scatter, remove_scatter, scatter_potential

img = phantoms.thorax((256, 256))
params = PipelineConfig().scatter.resolved(img)
print(f"I0 = {params.primary_intensity:.0f}, c = {params.magnitude_c:.5f}")

# Open air has t = 1 and therefore no potential at all.
sp = scatter_potential(img, params)
print(f"potential: air {sp[0, 0]:.2e}, max {sp.max():.4f}")

s = estimate_scatter(img, params)
print(f"scatter estimate: {s.min() / params.primary_intensity:.4f} .. {s.max() / params.primary_intensity:.4f} of I0")

# The estimate is linear in c.
s2 = estimate_scatter(img, replace(params, magnitude_c=2 * params.magnitude_c))
print("doubling c doubles the scatter:", np.allclose(s2, 2 * s, rtol=1e-12))

clean = remove_scatter(img, params)
print(f"mean intensity before/after removal: {img.mean():.1f} / {clean.mean():.1f}")
