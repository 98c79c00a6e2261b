"""
Functional layer helpers over a ParamSet

Images cross the public API as NHWC tensors; convolutions run on torch's NCHW
layout. Parameters are looked up by path: ``<layer>/kernel``, ``<layer>/bias``
and, for batch norm, ``<layer>/scale``, ``<layer>/shift``,
``<layer>/running_mean``, ``<layer>/running_var``. Layers that feed a batch
norm carry no bias.
"""
from enum import Enum
from typing import List, Mapping, Optional, Sequence, Tuple

import torch
import torch.nn.functional as F

from geogan.errors import ShapeError

BN_MOMENTUM = 0.1
BN_EPS = 1e-5

Trace = Optional[List[Tuple[str, Tuple[int, ...]]]]


class BNMode(str, Enum):
    """
    How batch norm layers behave during a forward pass

    TRAIN uses batch statistics and updates the running statistics, FROZEN uses
    batch statistics without touching them (the non-owning training phase),
    EVAL uses the running statistics.
    """
    TRAIN = "train"
    FROZEN = "frozen"
    EVAL = "eval"


def to_nchw(x: torch.Tensor) -> torch.Tensor:
    return x.permute(0, 3, 1, 2)


def to_nhwc(x: torch.Tensor) -> torch.Tensor:
    return x.permute(0, 2, 3, 1)


def check_shape(x: torch.Tensor, layer: str, expected: Sequence[Optional[int]]) -> None:
    """Raise ShapeError unless x matches `expected` (None matches any size)"""
    ok = x.dim() == len(expected) and all(
        e is None or e == s for e, s in zip(expected, x.shape)
    )
    if not ok:
        pattern = "x".join("N" if e is None else str(e) for e in expected)
        raise ShapeError(layer, pattern, tuple(x.shape))


def record(trace: Trace, name: str, x_nchw: torch.Tensor) -> None:
    """Append the NHWC shape of an NCHW activation to a shape trace"""
    if trace is not None:
        n, c, h, w = x_nchw.shape
        trace.append((name, (n, h, w, c)))


def conv(
    params: Mapping[str, torch.Tensor],
    name: str,
    x: torch.Tensor,
    stride: int = 1,
    padding=0
) -> torch.Tensor:
    kernel = params[f"{name}/kernel"]
    if x.shape[1] != kernel.shape[1]:
        raise ShapeError(name, f"{kernel.shape[1]} input channels", tuple(x.shape))
    return F.conv2d(x, kernel, params.get(f"{name}/bias"), stride=stride, padding=padding)


def deconv(
    params: Mapping[str, torch.Tensor],
    name: str,
    x: torch.Tensor,
    stride: int = 1,
    padding: int = 0,
    output_padding: int = 0
) -> torch.Tensor:
    kernel = params[f"{name}/kernel"]
    if x.shape[1] != kernel.shape[0]:
        raise ShapeError(name, f"{kernel.shape[0]} input channels", tuple(x.shape))
    return F.conv_transpose2d(
        x, kernel, params[f"{name}/bias"],
        stride=stride, padding=padding, output_padding=output_padding
    )


def dense(params: Mapping[str, torch.Tensor], name: str, x: torch.Tensor) -> torch.Tensor:
    weight = params[f"{name}/kernel"]
    if x.dim() != 2 or x.shape[1] != weight.shape[1]:
        raise ShapeError(name, f"Nx{weight.shape[1]}", tuple(x.shape))
    return F.linear(x, weight, params.get(f"{name}/bias"))


def batch_norm(
    params: Mapping[str, torch.Tensor],
    name: str,
    x: torch.Tensor,
    mode: BNMode = BNMode.EVAL
) -> torch.Tensor:
    """Batch norm over dim 1 of an NC or NCHW tensor"""
    scale = params[f"{name}/scale"]
    shift = params[f"{name}/shift"]
    running_mean = params[f"{name}/running_mean"]
    running_var = params[f"{name}/running_var"]

    # a single value per channel has no batch statistics
    per_channel = x.numel() // x.shape[1]
    if mode == BNMode.EVAL or per_channel < 2:
        return F.batch_norm(
            x, running_mean, running_var, scale, shift,
            training=False, eps=BN_EPS
        )
    if mode == BNMode.TRAIN:
        return F.batch_norm(
            x, running_mean, running_var, scale, shift,
            training=True, momentum=BN_MOMENTUM, eps=BN_EPS
        )
    return F.batch_norm(x, None, None, scale, shift, training=True, eps=BN_EPS)


def leaky(x: torch.Tensor, slope: float) -> torch.Tensor:
    return F.leaky_relu(x, negative_slope=slope)


def deconv_padding(kernel: int) -> Tuple[int, int]:
    """(padding, output_padding) making a stride-2 transposed conv double its input"""
    if kernel % 2 == 0:
        return (kernel - 2) // 2, 0
    return (kernel - 1) // 2, 1
