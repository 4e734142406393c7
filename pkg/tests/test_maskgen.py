import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from collimsim.errors import ConfigurationError
from collimsim.maskgen import (
    CollimatorSpec,
    SamplingDistributions,
    TruncatedNormal,
    is_convex,
    mask_to_damped,
    mask_to_uint8,
    mean_spec,
    quad_corners,
    rasterize,
    rle_decode,
    rle_encode,
    sample_spec,
    sample_truncated_normal,
)
from oracles import polygon_mask, truncnorm_mean_quad, truncnorm_var_quad


# -- truncated normal ---------------------------------------------------------

def test_collapsed_interval(rng):
    v = sample_truncated_normal(TruncatedNormal(0, 1, 0, 1e-4), rng)
    assert 0 <= v <= 1e-4


def test_degenerate_stddev(rng):
    v = sample_truncated_normal(TruncatedNormal(5, 1e-9, 0, 10), rng)
    assert abs(v - 5) < 1e-6


def test_fixed_value_consumes_no_draws():
    a, b = np.random.default_rng(1), np.random.default_rng(1)
    assert sample_truncated_normal(TruncatedNormal(1.0, 0.1, 1.0, 1.0), a) == 1.0
    assert a.random() == b.random()


def test_symmetric_interval_mean(rng):
    draws = sample_truncated_normal(TruncatedNormal(0, 1, -1, 1), rng, size=1_000_000)
    assert draws.min() >= -1 and draws.max() <= 1
    assert abs(draws.mean()) < 0.005


@pytest.mark.parametrize(
    "params",
    [
        TruncatedNormal(0.0, 1.0, -1.0, 1.0),  # normal proposal
        TruncatedNormal(0.0, 1.0, 0.2, 0.5),  # uniform proposal
        TruncatedNormal(0.0, 1.0, 3.0, 8.0),  # upper tail, exponential
        TruncatedNormal(0.0, 1.0, -9.0, -4.0),  # lower tail, mirrored
        TruncatedNormal(0.0, 1.0, 12.0, 13.0),  # ndtr underflow region
    ],
)
def test_moments_match_quadrature(params, rng):
    draws = sample_truncated_normal(params, rng, size=200_000)
    assert draws.min() >= params.low and draws.max() <= params.high
    mu = truncnorm_mean_quad(*params.to_dict().values())
    var = truncnorm_var_quad(*params.to_dict().values())
    se = math.sqrt(var / draws.size)
    assert abs(draws.mean() - mu) < 4 * se
    assert abs(draws.var() / var - 1) < 0.02


def test_truncated_mean_closed_form_matches_quadrature():
    tn = TruncatedNormal(0.55, 0.15, 0.2, 0.9)
    assert tn.truncated_mean() == pytest.approx(truncnorm_mean_quad(0.55, 0.15, 0.2, 0.9), rel=1e-10)


def test_scalar_draws_respect_bounds(rng):
    tn = TruncatedNormal(0.03, 0.005, 0.02, 0.04)
    vals = [sample_truncated_normal(tn, rng) for _ in range(2000)]
    assert min(vals) >= 0.02 and max(vals) <= 0.04


@pytest.mark.parametrize("bad", [
    TruncatedNormal(float("nan"), 1, 0, 1),
    TruncatedNormal(0, float("inf"), 0, 1),
    TruncatedNormal(0, 0, 0, 1),
    TruncatedNormal(0, 1, 2, 1),
])
def test_invalid_parameters(bad, rng):
    with pytest.raises(ConfigurationError):
        sample_truncated_normal(bad, rng)


# -- spec sampling --------------------------------------------------------------

def test_sample_spec_deterministic():
    d = SamplingDistributions()
    a = sample_spec(d, (256, 256), np.random.default_rng(42))
    b = sample_spec(d, (256, 256), np.random.default_rng(42))
    assert a == b


def test_degenerate_distributions_give_means(rng):
    tiny = lambda m, lo, hi: TruncatedNormal(m, 1e-12, lo, hi)  # noqa: E731
    d = SamplingDistributions(
        centroid_x=tiny(0.4, 0.1, 0.9),
        centroid_y=tiny(0.6, 0.1, 0.9),
        width=tiny(0.5, 0.2, 0.9),
        height=tiny(0.3, 0.2, 0.9),
        rotation=tiny(0.1, -0.2, 0.2),
        corner_jitter=TruncatedNormal(0.0, 0.01, 0.0, 0.0),
        damping=tiny(0.03, 0.02, 0.04),
    )
    spec = sample_spec(d, (100, 200), rng)
    assert spec.centroid_x == pytest.approx(80.0, abs=1e-8)
    assert spec.centroid_y == pytest.approx(60.0, abs=1e-8)
    assert spec.width == pytest.approx(100.0, abs=1e-8)
    assert spec.height == pytest.approx(30.0, abs=1e-8)
    assert spec.rotation == pytest.approx(0.1, abs=1e-10)
    assert spec.corner_offsets == (0.0,) * 8
    assert spec.damping == pytest.approx(0.03, abs=1e-10)


def test_sampled_field_means_match_truncated_means():
    d = SamplingDistributions()
    shape = (200, 300)
    rng = np.random.default_rng(7)
    specs = [sample_spec(d, shape, rng) for _ in range(10_000)]
    h, w = shape
    cases = {
        "centroid_x": ([s.centroid_x / w for s in specs], d.centroid_x),
        "width": ([s.width / w for s in specs], d.width),
        "height": ([s.height / h for s in specs], d.height),
        "rotation": ([s.rotation for s in specs], d.rotation),
        "damping": ([s.damping for s in specs], d.damping),
    }
    for name, (vals, tn) in cases.items():
        vals = np.asarray(vals)
        mu = truncnorm_mean_quad(tn.mean, tn.stddev, tn.low, tn.high)
        se = vals.std() / math.sqrt(vals.size)
        assert abs(vals.mean() - mu) < 3 * se, name


def test_sampled_specs_within_bounds():
    d = SamplingDistributions()
    shape = (128, 160)
    rng = np.random.default_rng(3)
    diag = math.hypot(160, 128)
    for _ in range(3000):
        s = sample_spec(d, shape, rng)
        assert 0.1 * 160 <= s.centroid_x <= 0.9 * 160
        assert 0.2 * 128 <= s.height <= 0.9 * 128
        assert abs(s.rotation) <= math.radians(15)
        assert max(abs(o) for o in s.corner_offsets) <= 0.03 * diag
        assert 0.02 <= s.damping <= 0.04
        assert is_convex(quad_corners(s))


class _BowtieStream:
    """Stands in for a Generator: every offset draw swaps two corners."""

    calls = 0

    def uniform(self, low, high, n):
        self.calls += 1
        # Move the top-right corner below the bottom-right one.
        return np.array([0, 0, 0, 20, 0, -20, 0, 0], dtype=float)


def test_nonconvex_offsets_exhaust_retries():
    fixed = lambda v: TruncatedNormal(v, 0.01, v, v)  # noqa: E731
    d = SamplingDistributions(
        centroid_x=fixed(0.5), centroid_y=fixed(0.5), width=fixed(0.3), height=fixed(0.3),
        rotation=fixed(0.0), corner_jitter=fixed(0.3), damping=fixed(0.03),
    )
    stream = _BowtieStream()
    with pytest.raises(ConfigurationError, match="convex"):
        sample_spec(d, (64, 64), stream)
    assert stream.calls == 100


def test_invalid_damping_bounds():
    with pytest.raises(ConfigurationError):
        SamplingDistributions(damping=TruncatedNormal(0.5, 0.1, 0.0, 1.0)).validate()
    with pytest.raises(ConfigurationError):
        SamplingDistributions(damping=TruncatedNormal(1.0, 0.1, 0.5, 1.5)).validate()


# -- rasterization -----------------------------------------------------------

def test_columns_zero_to_three():
    spec = CollimatorSpec(centroid_x=2.0, centroid_y=4.0, width=4.0, height=8.0)
    mask = rasterize(spec, (8, 8))
    assert (mask == 0).sum() == 32
    assert np.all(mask[:, :4] == 0) and np.all(mask[:, 4:] == 1)


def test_quarter_turn_of_centred_square():
    a = rasterize(CollimatorSpec(32.0, 32.0, 20.4, 20.4), (64, 64))
    b = rasterize(CollimatorSpec(32.0, 32.0, 20.4, 20.4, rotation=math.pi / 2), (64, 64))
    assert np.array_equal(a, b)


def test_rotation_roundtrip():
    base = CollimatorSpec(30.3, 27.7, 25.1, 17.9)
    theta = 0.37
    corners = quad_corners(CollimatorSpec(30.3, 27.7, 25.1, 17.9, rotation=theta))
    # Rotate the rotated corners back by -theta about the centroid.
    c, s = math.cos(-theta), math.sin(-theta)
    d = corners - [30.3, 27.7]
    back = np.stack([30.3 + d[:, 0] * c - d[:, 1] * s, 27.7 + d[:, 0] * s + d[:, 1] * c], axis=1)
    assert np.array_equal(polygon_mask(back, (64, 64)), rasterize(base, (64, 64)))


def test_matches_point_in_polygon_oracle():
    rng = np.random.default_rng(99)
    d = SamplingDistributions(corner_jitter=TruncatedNormal(0.02, 0.02, 0.0, 0.05))
    for _ in range(40):
        spec = sample_spec(d, (64, 64), rng)
        assert np.array_equal(rasterize(spec, (64, 64)), polygon_mask(quad_corners(spec), (64, 64)))


def test_clipping_and_polarity():
    mask = rasterize(CollimatorSpec(0.0, 0.0, 20.0, 20.0), (16, 16))
    assert mask.dtype == np.uint8 and set(np.unique(mask)) == {0, 1}
    assert (mask == 0).sum() == 100  # 10x10 quarter inside the image


def test_nonconvex_spec_rejected():
    spec = CollimatorSpec(10.0, 10.0, 10.0, 10.0, corner_offsets=(12, 12, 0, 0, 0, 0, 0, 0))
    with pytest.raises(ConfigurationError):
        rasterize(spec, (20, 20))


def test_bowtie_not_convex():
    assert not is_convex(np.array([[0, 0], [1, 1], [1, 0], [0, 1]], dtype=float))
    assert is_convex(np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float))


def test_rasterize_is_bit_identical():
    spec = CollimatorSpec(40.2, 33.1, 50.0, 31.0, 0.2, (1, -2, 0.5, 0.3, -1, 1, 0, 0.7), 0.03)
    assert rasterize(spec, (80, 80)).tobytes() == rasterize(spec, (80, 80)).tobytes()


@settings(max_examples=60, deadline=None)
@given(
    cx=st.floats(-10, 74), cy=st.floats(-10, 74),
    w=st.floats(1, 90), h=st.floats(1, 90),
)
def test_axis_aligned_area_within_perimeter(cx, cy, w, h):
    mask = rasterize(CollimatorSpec(cx, cy, w, h), (64, 64))
    x0, x1 = np.clip([cx - w / 2, cx + w / 2], 0, 64)
    y0, y1 = np.clip([cy - h / 2, cy + h / 2], 0, 64)
    area = (x1 - x0) * (y1 - y0)
    assert abs((mask == 0).sum() - area) <= 2 * (w + h)


# -- damping, export ------------------------------------------------------------

def test_mask_to_damped_cases():
    assert np.array_equal(mask_to_damped(np.ones((4, 4)), 0.03), np.ones((4, 4)))
    assert np.all(mask_to_damped(np.zeros((4, 4)), 0.03) == 0.03)
    checker = (np.indices((4, 4)).sum(axis=0) % 2).astype(np.uint8)
    damped = mask_to_damped(checker, 0.5)
    assert np.array_equal(damped, np.where(checker == 0, 0.5, 1.0))


@pytest.mark.parametrize("bad", [0.0, -0.1, 1.5, float("nan")])
def test_mask_to_damped_rejects(bad):
    with pytest.raises(ConfigurationError):
        mask_to_damped(np.ones((2, 2)), bad)


def test_uint8_export():
    m = np.array([[0, 1], [1, 0]], dtype=np.uint8)
    assert mask_to_uint8(m).tolist() == [[0, 255], [255, 0]]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=60))
def test_rle_roundtrip(bits):
    m = np.array(bits, dtype=np.uint8).reshape(1, -1)
    assert np.array_equal(rle_decode(rle_encode(m)), m)


def test_rle_format():
    m = np.array([[0, 0, 1], [1, 1, 0]], dtype=np.uint8)
    assert rle_encode(m) == {"shape": [2, 3], "first": 0, "runs": [2, 3, 1]}
