"""Saliency prediction from simulated V1 lateral interactions.

The package turns an RGB image into a saliency map by running a
firing-rate model of primary visual cortex over an undecimated wavelet
decomposition of the image's opponent color channels, and ships the
evaluation and stimulus tooling around it:

* :mod:`v1sal.color`     – image loading, gamma, opponent channels
* :mod:`v1sal.wavelet`   – a-trous pyramid, ON/OFF rectification
* :mod:`v1sal.kernels`   – excitatory/inhibitory lateral weight tables
* :mod:`v1sal.dynamics`  – the two-population lattice integrator
* :mod:`v1sal.integrate` – plane fusion, channel merge, normalization
* :mod:`v1sal.metrics`   – fixation metrics (AUC, sAUC, NSS, CC, SIM,
  KL, InfoGain) and density maps
* :mod:`v1sal.stimgen`   – parametric singleton-search stimuli
* :mod:`v1sal.pipeline`  – end-to-end engine, config, datasets
* :mod:`v1sal.cli`       – the ``v1sal`` batch commands
"""

from .color import OpponentImage, RgbImage, from_array, gamma_correct, load_image, resize_max_side, to_opponent
from .dynamics import (
    GX_LI98,
    GY_LI98,
    ConspicuityResponse,
    LatticeParams,
    LatticeState,
    PiecewiseLinear,
    conspicuity,
    simulate_channel,
    step,
)
from .errors import DivergenceError, PlacementError, ValidationError
from .integrate import combine_channels, fuse_planes, smooth, upsample, znorm
from .kernels import CouplingKernels, build_kernels, geometry, j_weight, w_weight
from .metrics import (
    FixationSet,
    MetricReport,
    auc_judd,
    auc_shuffled,
    cc,
    density_map,
    info_gain,
    kl,
    nss,
    sim,
)
from .pipeline import DatasetManifest, RunConfig, SaliencyEngine, SaliencyResult, build_manifest, load_config
from .stimgen import (
    Stimulus,
    StimulusSpec,
    asymmetry_stimulus,
    brightness_stimulus,
    color_stimulus,
    condition_catalog,
    orientation_stimulus,
    save_stimulus,
    size_stimulus,
)
from .wavelet import WaveletPyramid, decompose, num_scales, split_on_off, synthesize

__version__ = "0.1.0"

__all__ = [
    "CouplingKernels",
    "ConspicuityResponse",
    "DatasetManifest",
    "DivergenceError",
    "FixationSet",
    "GX_LI98",
    "GY_LI98",
    "LatticeParams",
    "LatticeState",
    "MetricReport",
    "OpponentImage",
    "PiecewiseLinear",
    "PlacementError",
    "RgbImage",
    "RunConfig",
    "SaliencyEngine",
    "SaliencyResult",
    "Stimulus",
    "StimulusSpec",
    "ValidationError",
    "WaveletPyramid",
    "auc_judd",
    "auc_shuffled",
    "asymmetry_stimulus",
    "brightness_stimulus",
    "build_kernels",
    "build_manifest",
    "cc",
    "color_stimulus",
    "combine_channels",
    "condition_catalog",
    "conspicuity",
    "decompose",
    "density_map",
    "from_array",
    "fuse_planes",
    "gamma_correct",
    "geometry",
    "info_gain",
    "j_weight",
    "kl",
    "load_config",
    "load_image",
    "num_scales",
    "nss",
    "orientation_stimulus",
    "resize_max_side",
    "save_stimulus",
    "sim",
    "simulate_channel",
    "size_stimulus",
    "smooth",
    "split_on_off",
    "step",
    "synthesize",
    "to_opponent",
    "upsample",
    "w_weight",
    "znorm",
]
