# pickplace/nn/__init__.py
"""Small NumPy network toolkit: conv kernels, hourglass FCNs, losses, Adam, checkpoints."""
from .checkpoint import load_checkpoint, save_checkpoint
from .fcn import FcnSpec, LayerSpec, fcn_backward, fcn_forward, fcn_init, hourglass_spec, param_count
from .gradcheck import finite_diff_grad_check
from .layers import conv2d_backward, conv2d_forward, upsample2x_backward, upsample2x_forward
from .losses import pixel_cross_entropy
from .optim import AdamState, adam_update
from .tensor import ParamSet, Tensor, set_finite_checks

__all__ = [
    "AdamState", "FcnSpec", "LayerSpec", "ParamSet", "Tensor", "adam_update", "conv2d_backward",
    "conv2d_forward", "fcn_backward", "fcn_forward", "fcn_init", "finite_diff_grad_check",
    "hourglass_spec", "load_checkpoint", "param_count", "pixel_cross_entropy", "save_checkpoint",
    "set_finite_checks", "upsample2x_backward", "upsample2x_forward",
]
