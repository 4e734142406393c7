"""End-to-end collimator simulation and dataset emission.

One sample runs four stages in fixed order:

1. ``label``: sample a collimator, rasterize the binary label, build the
   transmission map.
2. ``remove_scatter``: strip the scatter already present in the open-field
   input.
3. ``collimate``: apply the blurred transmission to the scatter-free image
   and add the scatter of the collimated result.
4. ``noise``: add compensation noise where the transmission is below one.

Every random draw comes from a stream derived from
``(seed, input_index, sample_index, stage)``, so a sample never depends on
how many other inputs or samples exist, nor on execution order.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import imageio
from .config import PipelineConfig
from .errors import CalibrationError, CollimsimError, ConfigurationError
from .maskgen import (
    CollimatorSpec,
    SamplingDistributions,
    mask_to_damped,
    mask_to_uint8,
    mean_spec,
    rasterize,
    rle_encode,
    sample_spec,
    sample_truncated_normal,
)
from .noise import add_compensation_noise
from .physics import (
    GaussianKernelSpec,
    ScatterParams,
    apply_collimation,
    blur_mask,
    estimate_scatter,
    remove_scatter,
    scatter_fraction,
)

log = logging.getLogger(__name__)

__all__ = [
    "STAGES",
    "SampleRecord",
    "StageOutputs",
    "DatasetResult",
    "stage_rng",
    "simulate_stages",
    "run_pipeline",
    "calibrate_scatter_c",
    "generate_dataset",
    "MANIFEST_NAME",
    "read_manifest",
    "reference_collimator",
]

STAGES = ("label", "remove_scatter", "collimate", "noise")
_STAGE_TAGS = {"label": 0, "focal_blur": 1, "noise": 2}
MANIFEST_NAME = "manifest.jsonl"


def stage_rng(seed: int, input_index: int, sample_index: int, stage: str) -> np.random.Generator:
    """Independent random stream for one stage of one sample."""
    ss = np.random.SeedSequence(seed, spawn_key=(input_index, sample_index, _STAGE_TAGS[stage]))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass
class SampleRecord:
    """Provenance of one generated sample.

    Together with the input image and a configuration whose ``digest()``
    equals ``config_digest``, the seed fields regenerate the sample exactly.
    """

    input_index: int
    sample_index: int
    input_path: str | None
    image_path: str | None
    mask_path: str | None
    seed: int
    config_digest: str
    stages: list[str]
    spec: dict
    focal_blur_sigma: float
    primary_intensity: float
    magnitude_c: float
    scatter_fraction: float | None
    clamped_fraction: float
    clamp_flag: bool
    mask_rle: dict = field(repr=False)

    def to_json(self) -> str:
        return json.dumps(asdict(self), allow_nan=False)

    @classmethod
    def from_json(cls, line: str) -> "SampleRecord":
        return cls(**json.loads(line))


@dataclass
class StageOutputs:
    spec: CollimatorSpec
    focal_blur_sigma: float
    params: ScatterParams
    mask: np.ndarray
    damped: np.ndarray
    blurred: np.ndarray
    scatter_free: np.ndarray
    clamped_fraction: float
    collimated: np.ndarray
    scatter: np.ndarray
    simulated: np.ndarray
    output: np.ndarray


def simulate_stages(image, config: PipelineConfig, sample_index: int = 0, input_index: int = 0) -> StageOutputs:
    """Run every stage and keep all intermediate images."""
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ConfigurationError(f"input must be a 2-D image, got shape {image.shape}")
    seed = config.seed

    spec = sample_spec(config.sampling, image.shape, stage_rng(seed, input_index, sample_index, "label"))
    if spec.damping >= 1.0:
        # A fully transmitting collimator casts no shadow, so there is nothing to label.
        mask = np.ones(image.shape, dtype=np.uint8)
    else:
        mask = rasterize(spec, image.shape)
    damped = mask_to_damped(mask, spec.damping)
    sigma = sample_truncated_normal(config.focal_blur, stage_rng(seed, input_index, sample_index, "focal_blur"))
    focal = GaussianKernelSpec(sigma)
    blurred = blur_mask(damped, focal)

    params = config.scatter.resolved(image)
    scatter_free, clamped = remove_scatter(image, params, return_clamped_fraction=True)
    collimated = blurred * scatter_free
    scatter = estimate_scatter(collimated, params)
    simulated = collimated + scatter

    output = add_compensation_noise(
        simulated, blurred, config.noise, stage_rng(seed, input_index, sample_index, "noise"), params.primary_intensity
    )
    return StageOutputs(spec, sigma, params, mask, damped, blurred, scatter_free, clamped,
                        collimated, scatter, simulated, output)


def run_pipeline(image, config: PipelineConfig, sample_index: int = 0, input_index: int = 0, input_path=None):
    """Simulate one collimated sample from an open-field image.

    Returns
    -------
    output : numpy.ndarray
        Simulated collimated image.
    mask : numpy.ndarray
        Sharp geometric label, ``uint8``, 0 = shadow.
    record : SampleRecord
        Provenance; ``image_path``/``mask_path`` are filled in by
        :func:`generate_dataset`.
    """
    st = simulate_stages(image, config, sample_index, input_index)
    frac = scatter_fraction(st.scatter, st.blurred, st.spec.damping, st.params.primary_intensity)
    record = SampleRecord(
        input_index=input_index,
        sample_index=sample_index,
        input_path=None if input_path is None else str(input_path),
        image_path=None,
        mask_path=None,
        seed=config.seed,
        config_digest=config.digest(),
        stages=list(STAGES),
        spec=st.spec.to_dict(),
        focal_blur_sigma=st.focal_blur_sigma,
        primary_intensity=st.params.primary_intensity,
        magnitude_c=st.params.magnitude_c,
        scatter_fraction=None if np.isnan(frac) else frac,
        clamped_fraction=st.clamped_fraction,
        clamp_flag=st.clamped_fraction > 1e-3,
        mask_rle=rle_encode(st.mask),
    )
    return st.output, st.mask, record


def reference_collimator(shape) -> tuple[np.ndarray, float]:
    """Transmission map and damping of the default mean collimator."""
    spec = mean_spec(SamplingDistributions(), shape)
    return mask_to_damped(rasterize(spec, shape), spec.damping), spec.damping


def calibrate_scatter_c(
    reference,
    params: ScatterParams,
    target_fraction: float,
    damped=None,
    focal_blur: GaussianKernelSpec = GaussianKernelSpec(1.5),
    bracket: tuple[float, float] = (0.0, 10.0),
    rel_tol: float = 1e-3,
    max_iter: int = 200,
) -> float:
    """Find the scatter magnitude ``c`` that hits a deep-shadow scatter fraction.

    The reference image is collimated with ``damped`` (by default the mean
    collimator of the default sampling distributions) and the mean scatter
    over its deep shadow, relative to ``I0``, is driven to ``target_fraction``
    by bisection on ``c`` within ``bracket``.

    Raises
    ------
    CalibrationError
        If the bracket does not contain the target or there is no deep shadow.
    """
    if not target_fraction >= 0:
        raise ConfigurationError(f"target_fraction must be >= 0, got {target_fraction}")
    if target_fraction == 0:
        return 0.0
    reference = np.asarray(reference, dtype=float)
    params = params.resolved(reference)
    if damped is None:
        damped, damping = reference_collimator(reference.shape)
    else:
        damped = np.asarray(damped, dtype=float)
        damping = float(damped.min())
    if damping >= 1.0:
        raise CalibrationError("reference collimation has no deep-shadow pixels")
    blurred = blur_mask(damped, focal_blur)
    collimated = apply_collimation(reference, damped, focal_blur)

    def measure(c: float) -> float:
        s = estimate_scatter(collimated, replace(params, magnitude_c=c))
        return scatter_fraction(s, blurred, damping, params.primary_intensity)

    lo, hi = bracket
    f_lo, f_hi = measure(lo), measure(hi)
    if np.isnan(f_hi):
        raise CalibrationError("reference collimation has no deep-shadow pixels")
    if not f_lo <= target_fraction <= f_hi:
        raise CalibrationError(
            f"bracket c in [{lo}, {hi}] gives scatter fractions [{f_lo:.4g}, {f_hi:.4g}], "
            f"which does not contain the target {target_fraction}"
        )
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f = measure(mid)
        if abs(f - target_fraction) <= rel_tol * target_fraction:
            return mid
        if f < target_fraction:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(f"bisection did not converge in {max_iter} iterations (c in [{lo}, {hi}])")


@dataclass
class DatasetResult:
    records: list[SampleRecord]
    failures: list[tuple[str, str]]
    manifest_path: Path

    @property
    def ok(self) -> bool:
        return not self.failures


def _image_suffix(bit_depth: int) -> str:
    return ".f32" if bit_depth == 32 else ".pgm"


def _process_input(index: int, path: str, config: PipelineConfig, out_dir: Path):
    """All samples of one input; returns (records, failures)."""
    records, failures = [], []
    try:
        image = imageio.load_image(path)
    except CollimsimError as exc:
        log.error("skipping input %s: %s", path, exc)
        return records, [(str(path), str(exc))]
    stem = Path(path).stem
    for s in range(config.samples_per_input):
        name = f"{stem}_i{index:04d}_s{s:04d}"
        try:
            output, mask, record = run_pipeline(image, config, sample_index=s, input_index=index, input_path=path)
            record.image_path = name + _image_suffix(config.output_bit_depth)
            record.mask_path = name + "_mask.pgm"
            imageio.save_image(output, out_dir / record.image_path, config.output_bit_depth)
            imageio.save_image(mask_to_uint8(mask), out_dir / record.mask_path, 8)
            records.append(record)
        except CollimsimError as exc:
            log.error("sample %s failed: %s", name, exc)
            failures.append((name, str(exc)))
    return records, failures


def generate_dataset(inputs, config: PipelineConfig, out_dir=None, jobs: int = 1) -> DatasetResult:
    """Emit ``samples_per_input`` samples per input plus a JSON-lines manifest.

    Failing inputs or samples are logged and skipped; check
    :attr:`DatasetResult.failures`.  Paths in the manifest are relative to
    ``out_dir`` and records are ordered by (input index, sample index), so
    reruns produce byte-identical output for any ``jobs``.
    """
    inputs = [str(p) for p in inputs]
    if not inputs:
        raise ConfigurationError("generate_dataset needs at least one input")
    out_dir = Path(out_dir if out_dir is not None else config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    tasks = list(enumerate(inputs))
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda t: _process_input(t[0], t[1], config, out_dir), tasks))
    else:
        results = [_process_input(i, p, config, out_dir) for i, p in tasks]

    records = sorted((r for rs, _ in results for r in rs), key=lambda r: (r.input_index, r.sample_index))
    failures = [f for _, fs in results for f in fs]
    manifest = out_dir / MANIFEST_NAME
    with open(manifest, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")
    return DatasetResult(records, failures, manifest)


def read_manifest(path) -> list[SampleRecord]:
    with open(path, encoding="utf-8") as fh:
        return [SampleRecord.from_json(line) for line in fh if line.strip()]
