"""Element-local Galerkin operator layers with interface numerical
fluxes, applied to spatially varying defocus deblurring.

The package bundles a small reverse-mode autodiff engine, grid
partitioning, a defocus blur simulator, the operator layers themselves,
a training loop with AdamW and a cosine schedule, restoration metrics,
and a deterministic command-line pipeline.
"""

from .autodiff import (ContractError, GradCheckEntry, Parameter, Tape, Tensor,
                       backward, fft2, grad_check, layernorm, matmul, pointwise)
from .blur import (BlurConfig, DatasetItem, PatternSpec, blur, gen_dataset,
                   gen_pattern, gen_sigma_map, load_dataset)
from .config import ConfigError, ExperimentConfig, format_config, parse_config
from .metrics import (EdgeBandReport, MetricReport, edge_band_psnr,
                      effective_rank, psnr, ssim)
from .model import Model, ModelConfig, build_model, forward_model, restore
from .operator import (FluxConfig, GalerkinHeadWeights, LayerWeights,
                       assemble_element, boundary_exterior, dg_layer,
                       face_coefficients, global_galerkin_layer,
                       numerical_flux, volume_coefficients)
from .partition import ElementPartition, FaceSpec, face_samples
from .training import (AdamWConfig, AdamWState, CosineSchedule, LossConfig,
                       TrainConfig, adamw_step, evaluate, multiscale_loss,
                       train)

__version__ = "0.1.0"
