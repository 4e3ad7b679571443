"""fbinet: forward-backward saliency for sequential CNNs, plus gradient baselines."""

from .baselines import backward_pass, explain_deconvnet, explain_guided, unpool_switches
from .errors import FbinetError, FormatError, ShapeError, ValidationError
from .fbi import (
    FbiConfig,
    SaliencyMap,
    deconv_adjoint,
    dense_adjoint,
    explain_fbi,
    fb_mask,
    flatten_adjoint,
    relu_adjoint,
    select_top_maps,
    softmax_adjoint,
    unpool_adjoint,
)
from .model import (
    ActivationTrace,
    Architecture,
    LayerSpec,
    LayerTrace,
    Prediction,
    WeightArchive,
    forward_trace,
    load_architecture,
    load_weights,
    save_weights,
    validate,
)
from .pnm import ImageU8, load_pnm, preprocess, render_grayscale, render_overlay, save_pnm
from .tensor import (
    ConvGeometry,
    affine,
    conv2d,
    conv2d_transpose_flipped,
    matvec_t,
    maxpool2d,
    relu,
    softmax,
    tensor,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationTrace",
    "Architecture",
    "ConvGeometry",
    "FbiConfig",
    "FbinetError",
    "FormatError",
    "ImageU8",
    "LayerSpec",
    "LayerTrace",
    "Prediction",
    "SaliencyMap",
    "ShapeError",
    "ValidationError",
    "WeightArchive",
    "affine",
    "backward_pass",
    "conv2d",
    "conv2d_transpose_flipped",
    "deconv_adjoint",
    "dense_adjoint",
    "explain_deconvnet",
    "explain_fbi",
    "explain_guided",
    "fb_mask",
    "flatten_adjoint",
    "forward_trace",
    "load_architecture",
    "load_pnm",
    "load_weights",
    "matvec_t",
    "maxpool2d",
    "preprocess",
    "relu",
    "relu_adjoint",
    "render_grayscale",
    "render_overlay",
    "save_pnm",
    "save_weights",
    "select_top_maps",
    "softmax",
    "softmax_adjoint",
    "tensor",
    "unpool_adjoint",
    "unpool_switches",
    "validate",
]
