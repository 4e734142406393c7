"""Random collimator geometry and its rasterization into binary label masks.

A collimator shadow is modelled as one convex quadrilateral: an axis-aligned
rectangle around a sampled centroid, rotated about that centroid, with each of
its four corners then jittered independently (the "distortion").  Pixels whose
centre falls inside the quadrilateral are shadow (0); everything else is open
field (1).

Coordinates follow image conventions: ``x`` runs along columns, ``y`` along
rows, and pixel ``(row i, col j)`` has its centre at ``(j + 0.5, i + 0.5)``.
Image dimensions are always passed numpy-style as ``(height, width)``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, fields

import numpy as np
from scipy import special

from .errors import ConfigurationError, UsageError

__all__ = [
    "TruncatedNormal",
    "SamplingDistributions",
    "CollimatorSpec",
    "sample_truncated_normal",
    "sample_spec",
    "mean_spec",
    "quad_corners",
    "is_convex",
    "rasterize",
    "mask_to_damped",
    "mask_to_uint8",
    "rle_encode",
    "rle_decode",
]

MAX_REJECTION_ATTEMPTS = 10_000
MAX_OFFSET_RETRIES = 100


@dataclass(frozen=True)
class TruncatedNormal:
    """Normal(mean, stddev) restricted to ``[low, high]``.

    ``low == high`` is accepted as a degenerate, fixed value; sampling it
    returns ``low`` without consuming random draws.
    """

    mean: float
    stddev: float
    low: float
    high: float

    def validate(self, name: str = "distribution") -> None:
        values = (self.mean, self.stddev, self.low, self.high)
        if not all(math.isfinite(v) for v in values):
            raise ConfigurationError(f"{name}: non-finite parameter in {values}")
        if self.stddev <= 0:
            raise ConfigurationError(f"{name}: stddev must be > 0, got {self.stddev}")
        if self.low > self.high:
            raise ConfigurationError(f"{name}: low {self.low} exceeds high {self.high}")

    @property
    def is_fixed(self) -> bool:
        return self.low == self.high

    def truncated_mean(self) -> float:
        """Mean of the truncated distribution (closed form)."""
        if self.is_fixed:
            return self.low
        a = (self.low - self.mean) / self.stddev
        b = (self.high - self.mean) / self.stddev
        z = special.ndtr(b) - special.ndtr(a)
        phi = lambda t: math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)  # noqa: E731
        return self.mean + self.stddev * (phi(a) - phi(b)) / z

    def to_dict(self) -> dict:
        return {"mean": self.mean, "stddev": self.stddev, "low": self.low, "high": self.high}

    @classmethod
    def from_dict(cls, d: dict) -> "TruncatedNormal":
        try:
            return cls(float(d["mean"]), float(d["stddev"]), float(d["low"]), float(d["high"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigurationError(f"bad truncated-normal entry {d!r}: {exc}") from None


# Rejection proposals, in standardized units (a, b) = bounds relative to the mean.
_NORMAL, _UNIFORM, _EXPONENTIAL = "normal", "uniform", "exponential"


@functools.lru_cache(maxsize=256)
def _choose_proposal(a: float, b: float) -> tuple[str, bool]:
    """Pick the proposal with the highest acceptance rate for ``[a, b]``.

    Returns ``(kind, mirrored)``; ``mirrored`` means sample on ``[-b, -a]``
    and negate, so the exponential proposal only needs a lower tail.
    """
    mirrored = b < 0
    if mirrored:
        a, b = -b, -a
    mass = float(special.ndtr(b) - special.ndtr(a))
    if mass <= 0.0:
        # Far tail where ndtr underflows: only the exponential proposal works.
        return _EXPONENTIAL, mirrored
    zstar = min(max(0.0, a), b)
    rates = {
        _NORMAL: mass,
        _UNIFORM: mass * math.sqrt(2 * math.pi) / ((b - a) * math.exp(-0.5 * zstar * zstar)),
    }
    if a > 0:
        lam = 0.5 * (a + math.sqrt(a * a + 4.0))
        rates[_EXPONENTIAL] = mass * lam * math.sqrt(2 * math.pi) * math.exp(lam * a - 0.5 * lam * lam)
    return max(rates, key=rates.get), mirrored


def _propose(kind: str, a: float, b: float, rng: np.random.Generator, n: int):
    """Draw ``n`` candidates on ``[a, b]`` and their acceptance flags."""
    if kind == _NORMAL:
        z = rng.standard_normal(n)
        return z, (z >= a) & (z <= b)
    if kind == _UNIFORM:
        z = rng.uniform(a, b, n)
        zstar = min(max(0.0, a), b)
        u = rng.random(n)
        return z, u <= np.exp(0.5 * (zstar * zstar - z * z))
    lam = 0.5 * (a + math.sqrt(a * a + 4.0))
    z = a + rng.exponential(1.0 / lam, n)
    u = rng.random(n)
    return z, (u <= np.exp(-0.5 * (z - lam) ** 2)) & (z <= b)


def sample_truncated_normal(params: TruncatedNormal, rng: np.random.Generator, size: int | None = None):
    """Draw from a truncated normal by exact rejection sampling.

    The proposal (plain normal, uniform on the interval, or a shifted
    exponential for tail intervals) is chosen per interval to keep acceptance
    high.  At most ``MAX_REJECTION_ATTEMPTS`` proposals are spent per
    requested value.

    Parameters
    ----------
    params : TruncatedNormal
    rng : numpy.random.Generator
    size : int, optional
        Number of draws.  ``None`` returns a Python float.

    Raises
    ------
    ConfigurationError
        On invalid parameters or if the attempt budget is exhausted.
    """
    params.validate()
    n = 1 if size is None else int(size)
    if params.is_fixed:
        out = np.full(n, params.low)
        return float(out[0]) if size is None else out
    a = (params.low - params.mean) / params.stddev
    b = (params.high - params.mean) / params.stddev
    kind, mirrored = _choose_proposal(a, b)
    lo, hi = (-b, -a) if mirrored else (a, b)

    out = np.empty(n)
    filled = 0
    budget = MAX_REJECTION_ATTEMPTS * n
    while filled < n:
        if budget <= 0:
            raise ConfigurationError(
                f"truncated normal {params} exhausted {MAX_REJECTION_ATTEMPTS} attempts per draw"
            )
        batch = 1 if size is None else min(budget, max(2 * (n - filled), 64))
        z, ok = _propose(kind, lo, hi, rng, batch)
        budget -= batch
        z = z[ok][: n - filled]
        out[filled : filled + z.size] = z
        filled += z.size
    if mirrored:
        out = -out
    out = np.clip(params.mean + params.stddev * out, params.low, params.high)
    return float(out[0]) if size is None else out


def _default_sampling():
    return {
        "centroid_x": TruncatedNormal(0.5, 0.1, 0.1, 0.9),
        "centroid_y": TruncatedNormal(0.5, 0.1, 0.1, 0.9),
        "width": TruncatedNormal(0.55, 0.15, 0.2, 0.9),
        "height": TruncatedNormal(0.55, 0.15, 0.2, 0.9),
        "rotation": TruncatedNormal(0.0, 0.1, -math.radians(15.0), math.radians(15.0)),
        "corner_jitter": TruncatedNormal(0.01, 0.01, 0.0, 0.03),
        "damping": TruncatedNormal(0.03, 0.005, 0.02, 0.04),
    }


@dataclass(frozen=True)
class SamplingDistributions:
    """Distributions of every sampled collimator quantity.

    Geometry is expressed relative to the image so one configuration works for
    any resolution: centroids and sizes as fractions of width (x) or height
    (y), corner jitter as a fraction of the image diagonal, rotation in
    radians, damping as a transmission fraction.
    """

    centroid_x: TruncatedNormal = field(default_factory=lambda: _default_sampling()["centroid_x"])
    centroid_y: TruncatedNormal = field(default_factory=lambda: _default_sampling()["centroid_y"])
    width: TruncatedNormal = field(default_factory=lambda: _default_sampling()["width"])
    height: TruncatedNormal = field(default_factory=lambda: _default_sampling()["height"])
    rotation: TruncatedNormal = field(default_factory=lambda: _default_sampling()["rotation"])
    corner_jitter: TruncatedNormal = field(default_factory=lambda: _default_sampling()["corner_jitter"])
    damping: TruncatedNormal = field(default_factory=lambda: _default_sampling()["damping"])

    def validate(self) -> None:
        for f in fields(self):
            tn = getattr(self, f.name)
            tn.validate(f.name)
            if not tn.low <= tn.mean <= tn.high:
                raise ConfigurationError(f"{f.name}: mean {tn.mean} outside [{tn.low}, {tn.high}]")
        if self.width.low <= 0 or self.height.low <= 0:
            raise ConfigurationError("width/height lower bounds must be > 0")
        if self.corner_jitter.low < 0:
            raise ConfigurationError("corner_jitter lower bound must be >= 0")
        if not (0 < self.damping.low and self.damping.high <= 1):
            raise ConfigurationError(f"damping bounds must lie in (0, 1], got {self.damping}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name).to_dict() for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "SamplingDistributions":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown sampling keys: {sorted(unknown)}")
        return cls(**{k: TruncatedNormal.from_dict(v) for k, v in d.items()})


@dataclass(frozen=True)
class CollimatorSpec:
    """One sampled collimator instance, in pixels and radians."""

    centroid_x: float
    centroid_y: float
    width: float
    height: float
    rotation: float = 0.0
    corner_offsets: tuple[float, ...] = (0.0,) * 8
    damping: float = 0.03

    def __post_init__(self):
        object.__setattr__(self, "corner_offsets", tuple(float(v) for v in self.corner_offsets))
        if len(self.corner_offsets) != 8:
            raise ConfigurationError("corner_offsets needs 8 values (dx, dy per corner)")
        vals = (self.centroid_x, self.centroid_y, self.width, self.height, self.rotation, self.damping)
        if not all(math.isfinite(v) for v in vals + self.corner_offsets):
            raise ConfigurationError(f"non-finite collimator spec {self}")
        if self.width <= 0 or self.height <= 0:
            raise ConfigurationError(f"width and height must be > 0, got {self.width}, {self.height}")
        if not 0 < self.damping <= 1:
            raise ConfigurationError(f"damping must lie in (0, 1], got {self.damping}")

    def to_dict(self) -> dict:
        return {
            "centroid_x": self.centroid_x,
            "centroid_y": self.centroid_y,
            "width": self.width,
            "height": self.height,
            "rotation": self.rotation,
            "corner_offsets": list(self.corner_offsets),
            "damping": self.damping,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CollimatorSpec":
        return cls(**{**d, "corner_offsets": tuple(d.get("corner_offsets", (0.0,) * 8))})


def _check_dims(image_dims) -> tuple[int, int]:
    try:
        h, w = (int(v) for v in image_dims)
    except (TypeError, ValueError):
        raise UsageError(f"image_dims must be (height, width), got {image_dims!r}") from None
    if h < 1 or w < 1:
        raise UsageError(f"image dimensions must be >= 1, got {(h, w)}")
    return h, w


def quad_corners(spec: CollimatorSpec) -> np.ndarray:
    """Corner coordinates ``(4, 2)`` as ``(x, y)``, in traversal order.

    Order before rotation: top-left, top-right, bottom-right, bottom-left.
    ``corner_offsets`` holds ``(dx0, dy0, dx1, dy1, ...)`` in that order.
    """
    hw, hh = 0.5 * spec.width, 0.5 * spec.height
    local = np.array([[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]])
    c, s = math.cos(spec.rotation), math.sin(spec.rotation)
    x = spec.centroid_x + local[:, 0] * c - local[:, 1] * s
    y = spec.centroid_y + local[:, 0] * s + local[:, 1] * c
    return np.stack([x, y], axis=1) + np.asarray(spec.corner_offsets).reshape(4, 2)


def _turns(corners: np.ndarray) -> np.ndarray:
    edges = np.roll(corners, -1, axis=0) - corners
    nxt = np.roll(edges, -1, axis=0)
    return edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]


def is_convex(corners: np.ndarray) -> bool:
    """True for a strictly convex, non-self-intersecting quadrilateral.

    For four vertices, equal-signed non-zero turns at every corner rule out
    both reflex corners and the bow-tie case.
    """
    t = _turns(np.asarray(corners, dtype=float))
    return bool(np.all(t > 0) or np.all(t < 0))


def sample_spec(dists: SamplingDistributions, image_dims, rng: np.random.Generator) -> CollimatorSpec:
    """Sample one collimator for an image of shape ``(height, width)``.

    Draw order is part of the reproducibility contract and must not change:
    centroid_x, centroid_y, width, height, rotation, corner_jitter, damping
    (one truncated-normal draw each), then the eight corner offsets as one
    ``rng.uniform(-j, j, 8)`` call where ``j`` is the jitter in pixels.  If the
    jittered quad is not convex the offsets alone are redrawn, up to
    ``MAX_OFFSET_RETRIES`` times.
    """
    h, w = _check_dims(image_dims)
    dists.validate()
    diag = math.hypot(w, h)
    cx = sample_truncated_normal(dists.centroid_x, rng) * w
    cy = sample_truncated_normal(dists.centroid_y, rng) * h
    width = sample_truncated_normal(dists.width, rng) * w
    height = sample_truncated_normal(dists.height, rng) * h
    rotation = sample_truncated_normal(dists.rotation, rng)
    jitter = sample_truncated_normal(dists.corner_jitter, rng) * diag
    damping = sample_truncated_normal(dists.damping, rng)

    base = CollimatorSpec(cx, cy, width, height, rotation, (0.0,) * 8, damping)
    if jitter == 0.0:
        return base
    for _ in range(MAX_OFFSET_RETRIES):
        offsets = tuple(rng.uniform(-jitter, jitter, 8))
        spec = CollimatorSpec(cx, cy, width, height, rotation, offsets, damping)
        if is_convex(quad_corners(spec)):
            return spec
    raise ConfigurationError(
        f"no convex quadrilateral after {MAX_OFFSET_RETRIES} offset draws (jitter {jitter:.3g} px "
        f"for a {width:.3g} x {height:.3g} px rectangle); reduce corner_jitter"
    )


def mean_spec(dists: SamplingDistributions, image_dims) -> CollimatorSpec:
    """The collimator obtained when every distribution sits at its mean."""
    h, w = _check_dims(image_dims)
    return CollimatorSpec(
        dists.centroid_x.mean * w,
        dists.centroid_y.mean * h,
        dists.width.mean * w,
        dists.height.mean * h,
        dists.rotation.mean,
        (0.0,) * 8,
        dists.damping.mean,
    )


def rasterize(spec: CollimatorSpec, image_dims) -> np.ndarray:
    """Binary mask of the collimator shadow (0 = shadow, 1 = open field).

    A pixel is shadow when its centre lies inside or on the boundary of the
    quadrilateral.  Parts of the quad outside the image are simply clipped.

    Returns
    -------
    numpy.ndarray
        ``uint8`` array of shape ``image_dims``.
    """
    h, w = _check_dims(image_dims)
    corners = quad_corners(spec)
    if not is_convex(corners):
        raise ConfigurationError(f"collimator quadrilateral is not convex: {corners.tolist()}")
    sign = 1.0 if _turns(corners)[0] > 0 else -1.0
    x = np.arange(w, dtype=float)[None, :] + 0.5
    y = np.arange(h, dtype=float)[:, None] + 0.5
    inside = np.ones((h, w), dtype=bool)
    for k in range(4):
        px, py = corners[k]
        qx, qy = corners[(k + 1) % 4]
        cross = (qx - px) * (y - py) - (qy - py) * (x - px)
        inside &= sign * cross >= 0
    return np.where(inside, 0, 1).astype(np.uint8)


def mask_to_damped(mask: np.ndarray, damping: float) -> np.ndarray:
    """Transmission map: ``damping`` in the shadow, 1 in the open field."""
    if not (math.isfinite(damping) and 0 < damping <= 1):
        raise ConfigurationError(f"damping must lie in (0, 1], got {damping}")
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise UsageError(f"mask must be 2-D, got shape {mask.shape}")
    return np.where(mask == 0, float(damping), 1.0)


def mask_to_uint8(mask: np.ndarray) -> np.ndarray:
    """Export form of a label mask: 0 = shadow, 255 = open field."""
    return (np.asarray(mask) != 0).astype(np.uint8) * np.uint8(255)


def rle_encode(mask: np.ndarray) -> dict:
    """Run-length encode a binary mask in row-major order.

    ``{"shape": [h, w], "first": v, "runs": [n0, n1, ...]}`` where runs
    alternate in value starting with ``first``.
    """
    flat = (np.asarray(mask).ravel() != 0).astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    return {
        "shape": list(np.shape(mask)),
        "first": int(flat[0]) if flat.size else 1,
        "runs": np.diff(bounds).astype(int).tolist(),
    }


def rle_decode(rle: dict) -> np.ndarray:
    h, w = rle["shape"]
    runs = np.asarray(rle["runs"], dtype=np.int64)
    if runs.sum() != h * w:
        raise UsageError(f"run lengths sum to {runs.sum()}, expected {h * w}")
    values = (np.arange(runs.size) + rle["first"]) % 2
    return np.repeat(values, runs).astype(np.uint8).reshape(h, w)
