"""
Comparing real and simulated patches
====================================

nMSE, SSIM and PSNR are computed per patch.  Here a "real" collimated
image is stood in for by a second simulation with a different noise draw.
"""

from collimsim import phantoms
from collimsim.config import PipelineConfig
from collimsim.metrics import PatchSpec, compare_patches
from collimsim.noise import NoiseParams
from collimsim.pipeline import run_pipeline

img = phantoms.thorax((256, 256))
a, _, _ = run_pipeline(img, PipelineConfig(seed=1))
b, _, _ = run_pipeline(img, PipelineConfig(seed=1, noise=NoiseParams(enabled=False)))

patches = [PatchSpec(10, 10, 40, 40), PatchSpec(108, 108, 40, 40), PatchSpec(0, 0, 256, 256)]
print(f"{'patch':>18} {'nMSE':>10} {'SSIM':>7} {'PSNR':>8}")
for p, r in zip(patches, compare_patches(b, a, patches)):
    print(f"{str((p.x, p.y, p.width, p.height)):>18} {r.nmse:>10.2e} {r.ssim:>7.4f} {r.psnr:>8.2f}")
