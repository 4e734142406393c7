"""Pipeline configuration: one YAML file, every default spelled out.

``default_config_text()`` renders the annotated default file written by the
``init-config`` command; ``load_config`` reads it back.  Unknown keys are
rejected so typos do not silently fall back to defaults.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import yaml

from .errors import ConfigurationError
from .maskgen import SamplingDistributions, TruncatedNormal
from .noise import NoiseParams
from .physics import GaussianKernelSpec, ScatterParams

__all__ = ["PipelineConfig", "DEFAULT_MAGNITUDE_C", "load_config", "default_config_text"]

# Calibrated on phantoms.thorax((256, 256)) with the mean collimator of the
# default sampling distributions to a deep-shadow scatter fraction of 0.016.
DEFAULT_MAGNITUDE_C = 0.0308912

MAX_SEED = 2**64 - 1


def _default_scatter():
    return ScatterParams(magnitude_c=DEFAULT_MAGNITUDE_C)


@dataclass(frozen=True)
class PipelineConfig:
    sampling: SamplingDistributions = field(default_factory=SamplingDistributions)
    focal_blur: TruncatedNormal = field(default_factory=lambda: TruncatedNormal(1.5, 0.3, 0.5, 3.0))
    scatter: ScatterParams = field(default_factory=_default_scatter)
    scatter_target_fraction: float = 0.016
    scatter_band: tuple[float, float] = (0.012, 0.02)
    noise: NoiseParams = field(default_factory=NoiseParams)
    seed: int = 20240917
    samples_per_input: int = 1
    output_bit_depth: int = 16
    input_paths: tuple[str, ...] = ()
    output_dir: str = "out"

    def __post_init__(self):
        object.__setattr__(self, "input_paths", tuple(self.input_paths))
        object.__setattr__(self, "scatter_band", tuple(float(v) for v in self.scatter_band))
        self.validate()

    def validate(self) -> None:
        self.sampling.validate()
        self.focal_blur.validate("focal_blur")
        if self.focal_blur.low <= 0:
            raise ConfigurationError("focal_blur lower bound must be > 0")
        lo, hi = self.scatter_band
        if not 0 <= lo <= hi:
            raise ConfigurationError(f"scatter_band must satisfy 0 <= low <= high, got {self.scatter_band}")
        if not (math.isfinite(self.scatter_target_fraction) and self.scatter_target_fraction >= 0):
            raise ConfigurationError("scatter_target_fraction must be >= 0")
        if not (isinstance(self.seed, int) and 0 <= self.seed <= MAX_SEED):
            raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if not (isinstance(self.samples_per_input, int) and self.samples_per_input >= 1):
            raise ConfigurationError(f"samples_per_input must be >= 1, got {self.samples_per_input!r}")
        if self.output_bit_depth not in (8, 16, 32):
            raise ConfigurationError(f"output_bit_depth must be 8, 16 or 32, got {self.output_bit_depth!r}")

    def with_overrides(self, **changes) -> "PipelineConfig":
        return replace(self, **{k: v for k, v in changes.items() if v is not None})

    def to_dict(self) -> dict:
        s = self.scatter
        return {
            "seed": self.seed,
            "samples_per_input": self.samples_per_input,
            "output_bit_depth": self.output_bit_depth,
            "input_paths": list(self.input_paths),
            "output_dir": self.output_dir,
            "sampling": self.sampling.to_dict(),
            "focal_blur": self.focal_blur.to_dict(),
            "scatter": {
                "exponent_alpha": s.exponent_alpha,
                "exponent_beta": s.exponent_beta,
                "magnitude_c": s.magnitude_c,
                "kernel_sigma": s.kernel.sigma,
                "primary_intensity": s.primary_intensity,
                "target_fraction": self.scatter_target_fraction,
                "band": list(self.scatter_band),
            },
            "noise": {
                "enabled": self.noise.enabled,
                "photon_rate_lambda": self.noise.photon_rate_lambda,
                "mode": self.noise.mode,
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d or {})
        known = {"seed", "samples_per_input", "output_bit_depth", "input_paths", "output_dir",
                 "sampling", "focal_blur", "scatter", "noise"}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown configuration keys: {sorted(unknown)}")
        defaults = cls()
        kw = {}
        for key in ("seed", "samples_per_input", "output_bit_depth", "output_dir"):
            if key in d:
                kw[key] = d[key]
        if "input_paths" in d:
            kw["input_paths"] = tuple(str(p) for p in d["input_paths"] or ())
        if "sampling" in d:
            merged = {**defaults.sampling.to_dict(), **(d["sampling"] or {})}
            kw["sampling"] = SamplingDistributions.from_dict(merged)
        if "focal_blur" in d:
            kw["focal_blur"] = TruncatedNormal.from_dict(d["focal_blur"])
        try:
            if "scatter" in d:
                sc = dict(d["scatter"] or {})
                extra = set(sc) - {"exponent_alpha", "exponent_beta", "magnitude_c", "kernel_sigma",
                                   "primary_intensity", "target_fraction", "band"}
                if extra:
                    raise ConfigurationError(f"unknown scatter keys: {sorted(extra)}")
                base = defaults.scatter
                i0 = sc.get("primary_intensity", base.primary_intensity)
                kw["scatter"] = ScatterParams(
                    exponent_alpha=float(sc.get("exponent_alpha", base.exponent_alpha)),
                    exponent_beta=float(sc.get("exponent_beta", base.exponent_beta)),
                    magnitude_c=float(sc.get("magnitude_c", base.magnitude_c)),
                    kernel=GaussianKernelSpec(float(sc.get("kernel_sigma", base.kernel.sigma))),
                    primary_intensity=None if i0 is None else float(i0),
                )
                if "target_fraction" in sc:
                    kw["scatter_target_fraction"] = float(sc["target_fraction"])
                if "band" in sc:
                    kw["scatter_band"] = tuple(sc["band"])
            if "noise" in d:
                nz = dict(d["noise"] or {})
                extra = set(nz) - {"enabled", "photon_rate_lambda", "mode"}
                if extra:
                    raise ConfigurationError(f"unknown noise keys: {sorted(extra)}")
                kw["noise"] = NoiseParams(
                    photon_rate_lambda=float(nz.get("photon_rate_lambda", defaults.noise.photon_rate_lambda)),
                    mode=str(nz.get("mode", defaults.noise.mode)),
                    enabled=bool(nz.get("enabled", defaults.noise.enabled)),
                )
            return cls(**kw)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigurationError):
                raise
            raise ConfigurationError(f"invalid configuration: {exc}") from None

    def digest(self) -> str:
        """Hash of every setting that influences generated pixels."""
        d = self.to_dict()
        for key in ("input_paths", "output_dir", "samples_per_input"):
            d.pop(key)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def load_config(path) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror or exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: invalid YAML: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")
    return PipelineConfig.from_dict(data or {})


def _tn(tn: TruncatedNormal) -> str:
    return f"{{mean: {tn.mean!r}, stddev: {tn.stddev!r}, low: {tn.low!r}, high: {tn.high!r}}}"


def default_config_text(config: PipelineConfig | None = None) -> str:
    """Annotated YAML for ``config`` (the defaults when omitted)."""
    c = config or PipelineConfig()
    s, n, sd = c.scatter, c.noise, c.sampling
    i0 = "null" if s.primary_intensity is None else repr(s.primary_intensity)
    paths = "[]" if not c.input_paths else "\n" + "\n".join(f"  - {json.dumps(p)}" for p in c.input_paths)
    return f"""\
# Collimator simulation configuration.
# Truncated normals are written {{mean, stddev, low, high}}; low == high fixes a value.

seed: {c.seed}                 # master seed (unsigned 64-bit)
samples_per_input: {c.samples_per_input}
output_bit_depth: {c.output_bit_depth}           # 8 or 16 -> PGM, 32 -> raw float32
input_paths: {paths}
output_dir: {json.dumps(c.output_dir)}

# Collimator geometry. Centroid and size are fractions of image width (x) or
# height (y); corner_jitter is a fraction of the image diagonal; rotation is in
# radians (+-15 deg = +-0.2618); damping is the shadow transmission.
sampling:
  centroid_x: {_tn(sd.centroid_x)}
  centroid_y: {_tn(sd.centroid_y)}
  width: {_tn(sd.width)}
  height: {_tn(sd.height)}
  rotation: {_tn(sd.rotation)}
  corner_jitter: {_tn(sd.corner_jitter)}
  damping: {_tn(sd.damping)}

# Focal-spot edge blur, Gaussian sigma in pixels, drawn once per sample.
focal_blur: {_tn(c.focal_blur)}

# Convolution scatter model: c * (I/I0)^alpha * ln(I0/I)^beta, blurred by a
# Gaussian of kernel_sigma pixels and scaled by I0.
scatter:
  exponent_alpha: {s.exponent_alpha!r}
  exponent_beta: {s.exponent_beta!r}
  magnitude_c: {s.magnitude_c!r}       # see `collimsim calibrate`
  kernel_sigma: {s.kernel.sigma!r}
  primary_intensity: {i0}      # null -> 99.5th percentile of each input
  target_fraction: {c.scatter_target_fraction!r}     # calibration target, deep-shadow scatter / I0
  band: [{c.scatter_band[0]!r}, {c.scatter_band[1]!r}]

# Compensation noise in damped regions. mode: variance-matching | paper-printed
noise:
  enabled: {str(n.enabled).lower()}
  photon_rate_lambda: {n.photon_rate_lambda!r}   # open-field photons per pixel
  mode: {n.mode}
"""
