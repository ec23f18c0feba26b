from .tensor import Tensor, Function, grad, no_grad, tensor
from .nn import Module, ModuleList, Parameter, Conv1d, ConvTranspose1d, Linear
from .optim import AdamW, AdamWState, adamw_step
from .gradcheck import gradcheck, GradcheckReport
from . import functional

__all__ = [
    "Tensor", "Function", "grad", "no_grad", "tensor",
    "Module", "ModuleList", "Parameter", "Conv1d", "ConvTranspose1d", "Linear",
    "AdamW", "AdamWState", "adamw_step",
    "gradcheck", "GradcheckReport", "functional",
]
