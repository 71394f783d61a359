"""Efficient convolutional building blocks.

Partial convolution (pconv) applies a k x k convolution to the first c_p of
c channels and passes the remaining c - c_p through untouched, so its cost
falls with the square of the partial ratio p = c_p / c relative to a full
convolution over the same map. Pointwise convolution (pwconv) is per-pixel
channel mixing. A FasterNet block chains pconv -> pwconv (expand) -> BN ->
relu -> pwconv (project) around an identity skip:

    out = x + pw2(relu(bn(pw1(pconv(x)))))

Initialization draws weights from uniform [-sqrt(6/fan_in), +sqrt(6/fan_in)]
with fan_in = c_in * k^2; biases start at zero and BN at gamma=1, beta=0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .tensor_ops import (
    BNParams,
    ConvSpec,
    Tensor4,
    as_tensor4,
    batchnorm,
    batchnorm_grad,
    batchnorm_grad_eval,
    conv2d,
    conv2d_grad,
    record_macs,
    relu,
    relu_grad,
    residual_add,
)


@dataclass(frozen=True)
class PConvSpec:
    """Partial convolution over the first c_p of c channels.

    k must be odd; padding (k-1)/2 preserves the spatial extent. No bias.
    """

    c: int
    c_p: int
    k: int = 3

    def __post_init__(self):
        if self.c < 1:
            raise ValidationError(f"PConvSpec.c must be >= 1, got {self.c}")
        if not 1 <= self.c_p <= self.c:
            raise ValidationError(f"PConvSpec.c_p must satisfy 1 <= c_p <= c, got c_p={self.c_p} c={self.c}")
        if self.k < 1 or self.k % 2 == 0:
            raise ValidationError(f"PConvSpec.k must be odd and >= 1, got {self.k}")

    @property
    def padding(self) -> int:
        return (self.k - 1) // 2

    @property
    def partial_ratio(self) -> float:
        """p = c_p / c; the FLOPs reduction factor vs a full conv is p**2."""
        return self.c_p / self.c

    def conv_spec(self) -> ConvSpec:
        return ConvSpec(c_in=self.c_p, c_out=self.c_p, k=self.k, stride=1, padding=self.padding)


@dataclass(frozen=True)
class PWConvSpec:
    """Pointwise (1x1) convolution: per-pixel linear map over channels."""

    c_in: int
    c_out: int

    def __post_init__(self):
        if self.c_in < 1 or self.c_out < 1:
            raise ValidationError("PWConvSpec channel counts must be >= 1")


def pconv(x: Tensor4, weights: np.ndarray, spec: PConvSpec) -> Tensor4:
    """Convolve channels [0, c_p); copy channels [c_p, c) bit-identically."""
    x = as_tensor4(x)
    if x.shape[1] != spec.c:
        raise ValidationError(f"input channel dim {x.shape[1]} does not match PConvSpec.c {spec.c}")
    expect = (spec.c_p, spec.c_p, spec.k, spec.k)
    if weights.shape != expect:
        raise ValidationError(f"pconv weights shape {weights.shape} != expected {expect}")
    out = x.copy()
    out[:, : spec.c_p] = conv2d(x[:, : spec.c_p], weights, None, spec.conv_spec())
    return out


def pconv_grad(
    x: Tensor4, weights: np.ndarray, spec: PConvSpec, grad_out: Tensor4
) -> tuple[Tensor4, np.ndarray]:
    """Backward of pconv: pass-through channels carry grad_out unchanged."""
    x = as_tensor4(x)
    if grad_out.shape != x.shape:
        raise ValidationError(f"grad_out shape {grad_out.shape} != input shape {x.shape}")
    grad_x = grad_out.copy()
    gx, gw, _ = conv2d_grad(x[:, : spec.c_p], weights, spec.conv_spec(), grad_out[:, : spec.c_p])
    grad_x[:, : spec.c_p] = gx
    return grad_x, gw


def pwconv(x: Tensor4, weights: np.ndarray, bias: np.ndarray | None) -> Tensor4:
    """Per-pixel channel mixing: out[n,o,h,w] = sum_i w[o,i] * x[n,i,h,w] + b[o]."""
    x = as_tensor4(x)
    if weights.ndim != 2 or weights.shape[1] != x.shape[1]:
        raise ValidationError(
            f"pwconv weights shape {weights.shape} incompatible with input channels {x.shape[1]}"
        )
    if bias is not None and bias.shape != (weights.shape[0],):
        raise ValidationError(f"pwconv bias shape {bias.shape} != ({weights.shape[0]},)")
    n, _, h, w = x.shape
    out = np.einsum("oi,nihw->nohw", weights, x, optimize=True)
    record_macs(n * h * w * weights.size)
    if bias is not None:
        out = out + bias[None, :, None, None]
    return out


def pwconv_grad(
    x: Tensor4, weights: np.ndarray, grad_out: Tensor4
) -> tuple[Tensor4, np.ndarray, np.ndarray]:
    """Gradients of sum(grad_out * pwconv(x, w, b)) w.r.t. x, w, b."""
    x = as_tensor4(x)
    n, _, h, w = x.shape
    if grad_out.shape != (n, weights.shape[0], h, w):
        raise ValidationError(
            f"grad_out shape {grad_out.shape} != expected {(n, weights.shape[0], h, w)}"
        )
    grad_w = np.einsum("nohw,nihw->oi", grad_out, x, optimize=True)
    grad_b = grad_out.sum(axis=(0, 2, 3))
    grad_x = np.einsum("oi,nohw->nihw", weights, grad_out, optimize=True)
    return grad_x, grad_w, grad_b


@dataclass(frozen=True)
class FasterNetBlockSpec:
    """Channel count c, partial width c_p, pconv kernel k, expansion e."""

    c: int
    c_p: int
    k: int = 3
    e: int = 2

    def __post_init__(self):
        PConvSpec(self.c, self.c_p, self.k)  # reuse its range checks
        if self.e < 1:
            raise ValidationError(f"FasterNetBlockSpec.e must be >= 1, got {self.e}")

    def pconv_spec(self) -> PConvSpec:
        return PConvSpec(self.c, self.c_p, self.k)

    @property
    def hidden(self) -> int:
        return self.e * self.c


@dataclass
class FasterNetBlockParams:
    """Weights for one FasterNet block; see init_params for the layout."""

    pconv_w: np.ndarray
    pw1_w: np.ndarray
    pw1_b: np.ndarray
    bn1: BNParams
    pw2_w: np.ndarray
    pw2_b: np.ndarray


def fasternet_block(
    x: Tensor4, params: FasterNetBlockParams, spec: FasterNetBlockSpec, training: bool = True
) -> Tensor4:
    """out = x + pw2(relu(bn(pw1(pconv(x))))). Shape-preserving by construction."""
    out, _ = fasternet_block_forward(x, params, spec, training)
    return out


def fasternet_block_forward(
    x: Tensor4, params: FasterNetBlockParams, spec: FasterNetBlockSpec, training: bool = True
):
    """Forward returning the cache needed by fasternet_block_grad."""
    t0 = pconv(x, params.pconv_w, spec.pconv_spec())
    t1 = pwconv(t0, params.pw1_w, params.pw1_b)
    t2, mean, var = batchnorm(t1, params.bn1, training)
    t3 = relu(t2)
    t4 = pwconv(t3, params.pw2_w, params.pw2_b)
    out = residual_add(x, t4)
    cache = (x, t0, t1, t2, t3, mean, var, training)
    return out, cache


def fasternet_block_grad(
    cache, params: FasterNetBlockParams, spec: FasterNetBlockSpec, grad_out: Tensor4
):
    """Backward of the block. Returns (grad_x, grads dict keyed like the params)."""
    x, t0, t1, t2, t3, mean, var, training = cache
    d4 = grad_out
    d3, gw2, gb2 = pwconv_grad(t3, params.pw2_w, d4)
    d2 = relu_grad(t2, d3)
    if training:
        d1, ggamma, gbeta = batchnorm_grad(t1, params.bn1, mean, var, d2)
    else:
        d1, ggamma, gbeta = batchnorm_grad_eval(t1, params.bn1, d2)
    d0, gw1, gb1 = pwconv_grad(t0, params.pw1_w, d1)
    dx_branch, gpc = pconv_grad(x, params.pconv_w, spec.pconv_spec(), d0)
    grad_x = grad_out + dx_branch
    grads = {
        "pconv_w": gpc,
        "pw1_w": gw1,
        "pw1_b": gb1,
        "bn1_gamma": ggamma,
        "bn1_beta": gbeta,
        "pw2_w": gw2,
        "pw2_b": gb2,
    }
    return grad_x, grads


def _uniform_fan_in(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(spec, seed_or_rng=0):
    """Deterministically initialize parameters for a layer spec.

    ConvSpec -> (kernel, bias); PWConvSpec -> (weights, bias);
    PConvSpec -> weights; FasterNetBlockSpec -> FasterNetBlockParams.
    Weights ~ U[-sqrt(6/fan_in), +sqrt(6/fan_in)] with fan_in = c_in * k^2;
    biases zero; BN gamma=1, beta=0, running stats (0, 1).
    Accepts either an integer seed or an existing numpy Generator.
    """
    rng = (
        seed_or_rng
        if isinstance(seed_or_rng, np.random.Generator)
        else np.random.default_rng(seed_or_rng)
    )
    if isinstance(spec, ConvSpec):
        fan_in = spec.c_in * spec.k * spec.k
        w = _uniform_fan_in(rng, (spec.c_out, spec.c_in, spec.k, spec.k), fan_in)
        return w, np.zeros(spec.c_out)
    if isinstance(spec, PWConvSpec):
        w = _uniform_fan_in(rng, (spec.c_out, spec.c_in), spec.c_in)
        return w, np.zeros(spec.c_out)
    if isinstance(spec, PConvSpec):
        fan_in = spec.c_p * spec.k * spec.k
        return _uniform_fan_in(rng, (spec.c_p, spec.c_p, spec.k, spec.k), fan_in)
    if isinstance(spec, FasterNetBlockSpec):
        return FasterNetBlockParams(
            pconv_w=init_params(spec.pconv_spec(), rng),
            pw1_w=_uniform_fan_in(rng, (spec.hidden, spec.c), spec.c),
            pw1_b=np.zeros(spec.hidden),
            bn1=BNParams.identity(spec.hidden),
            pw2_w=_uniform_fan_in(rng, (spec.c, spec.hidden), spec.hidden),
            pw2_b=np.zeros(spec.c),
        )
    raise ValidationError(f"init_params does not know spec type {type(spec).__name__}")
