"""Physics-based simulation of collimator shadows on open-field X-ray images."""

from .config import PipelineConfig, default_config_text, load_config
from .errors import CalibrationError, CollimsimError, ConfigurationError, ImageIOError, UsageError
from .imageio import load_image, save_image
from .maskgen import (
    CollimatorSpec,
    SamplingDistributions,
    TruncatedNormal,
    mask_to_damped,
    rasterize,
    sample_spec,
    sample_truncated_normal,
)
from .metrics import PatchSpec, MetricReport, compare_patches, nmse, psnr, ssim
from .noise import NoiseParams, add_compensation_noise, compute_sigma_x
from .physics import (
    GaussianKernelSpec,
    ScatterParams,
    apply_collimation,
    convolve_gaussian,
    estimate_scatter,
    gaussian_kernel,
    remove_scatter,
    scatter_potential,
    simulate_collimated,
)
from .pipeline import SampleRecord, calibrate_scatter_c, generate_dataset, run_pipeline

__version__ = "0.1.0"
