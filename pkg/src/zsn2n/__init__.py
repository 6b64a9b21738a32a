"""Single-image denoising by fitting a tiny residual network to pair-downsampled views."""

from .denoiser import (
    DenoiseReport,
    FitConfig,
    LossBreakdown,
    NetworkParams,
    OptimizerState,
    adam_step,
    denoise,
    init_params,
    loss_and_grad,
    network_forward,
    param_count,
)
from .downsample import DownsampledPair, downsample_pair
from .imageio import load_image, save_image
from .noise_lab import NoiseSpec, QualityMetrics, add_noise, psnr, rng_stream
from .tensor_core import ConvKernel, conv2d_backward, conv2d_forward, relu_backward, relu_forward

__version__ = "0.1.0"
