"""
Sampling random collimator masks
================================

A collimator shadow is a convex quadrilateral: a rectangle with a random
centroid and size, rotated, with each corner nudged a little.  Every
geometric quantity comes from a truncated normal distribution.
"""

import numpy as np

from collimsim.maskgen import SamplingDistributions, rasterize, sample_spec

rng = np.random.default_rng(0)
dists = SamplingDistributions()
shape = (24, 48)

# Draw one spec and look at it.  Pixel units, radians.
spec = sample_spec(dists, shape, rng)
print(spec)

# The label is 0 inside the quadrilateral (the shadow) and 1 elsewhere.
mask = rasterize(spec, shape)
for row in mask:
    print("".join("#" if v == 0 else "." for v in row))

###############################################################################
# Shadow area over many draws
# ---------------------------
# The mean shadow fraction settles quickly; masks touching the border are
# clipped, which is how one-sided collimation shows up.

areas = [(rasterize(sample_spec(dists, shape, rng), shape) == 0).mean() for _ in range(2000)]
print(f"shadow fraction: mean {np.mean(areas):.3f}, min {np.min(areas):.3f}, max {np.max(areas):.3f}")
