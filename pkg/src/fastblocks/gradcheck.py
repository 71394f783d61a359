"""Finite-difference verification of analytic backward passes.

A checkable unit is anything with `name`, `input_shape`, `forward(x)`,
`backward(grad_out)`, `params()` and `param_grads()` — every Layer and the
Model composite qualify. The check fixes a random cotangent v, defines the
scalar loss L = sum(v * forward(x)), takes the analytic dL/d(element) from one
backward pass, and compares it against central differences (h = 1e-5, 64-bit)
element by element. Large units are probed on a seeded random subset of at
least 100 elements; small units exhaustively.

Error metric: |analytic - numeric| / max(|analytic|, |numeric|), falling back
to the absolute difference when that denominator is below 1e-8. Any
non-finite value encountered anywhere is a hard failure naming the location.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GradCheckFailure(RuntimeError):
    """A non-finite value appeared during gradient checking."""


@dataclass(frozen=True)
class GradReport:
    """Outcome of one gradcheck run."""

    unit_name: str
    max_rel_error: float
    param_count_checked: int
    passed: bool

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return (
            f"{self.unit_name:<28s} max_rel_error={self.max_rel_error:.3e} "
            f"checked={self.param_count_checked:<5d} {status}"
        )


def _require_finite(arr: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(np.asarray(arr)))[0]
        raise GradCheckFailure(f"non-finite value in {where} at index {tuple(bad)}")


def gradcheck(unit, input_seed: int = 0, tolerance: float = 1e-4, step: float = 1e-5,
              max_elements: int = 256) -> GradReport:
    """Compare unit.backward against central finite differences.

    Perturbs input elements and every parameter tensor; checks all elements
    when the unit has at most `max_elements` of them, otherwise a seeded
    random subset of at least 100.
    """
    rng = np.random.default_rng(input_seed)
    x = rng.standard_normal(unit.input_shape)
    # Keep clear of the relu/abs kinks so the finite difference sees one branch.
    x += 0.1 * np.sign(x)

    y = unit.forward(x)
    _require_finite(y, f"{unit.name} forward output")
    v = rng.standard_normal(y.shape)

    grad_x = unit.backward(v.copy())
    _require_finite(grad_x, f"{unit.name} input gradient")
    analytic = [("input", x, np.array(grad_x, copy=True))]
    for key, p in unit.params().items():
        g = unit.param_grads()[key]
        _require_finite(g, f"{unit.name} gradient of {key}")
        analytic.append((key, p, np.array(g, copy=True)))

    def loss() -> float:
        out = unit.forward(x)
        _require_finite(out, f"{unit.name} forward output")
        return float(np.sum(v * out))

    total = sum(t.size for _, t, _ in analytic)
    plan: list[tuple[int, np.ndarray]] = []  # (flat index, tensor) per probe
    if total <= max_elements:
        for _, t, _ in analytic:
            plan.extend((i, t) for i in range(t.size))
        per_tensor = None
    else:
        budget = max(max_elements, 100)
        per_tensor = {}
        for name, t, _ in analytic:
            n = max(1, round(budget * t.size / total))
            per_tensor[name] = rng.choice(t.size, size=min(n, t.size), replace=False)

    max_err = 0.0
    checked = 0
    for name, t, g in analytic:
        flat = t.reshape(-1)
        gflat = g.reshape(-1)
        indices = range(t.size) if per_tensor is None else per_tensor[name]
        for i in indices:
            orig = flat[i]
            flat[i] = orig + step
            lp = loss()
            flat[i] = orig - step
            lm = loss()
            flat[i] = orig
            numeric = (lp - lm) / (2.0 * step)
            if not np.isfinite(numeric):
                raise GradCheckFailure(f"non-finite finite-difference for {unit.name} {name}[{i}]")
            ana = gflat[i]
            denom = max(abs(ana), abs(numeric))
            err = abs(ana - numeric) if denom < 1e-8 else abs(ana - numeric) / denom
            if err > max_err:
                max_err = err
            checked += 1

    # Restore the unit's cached state to match the unperturbed input.
    unit.forward(x)
    return GradReport(
        unit_name=unit.name,
        max_rel_error=float(max_err),
        param_count_checked=checked,
        passed=bool(max_err <= tolerance),
    )


class _FunctionalUnit:
    """Adapter exposing a single layer as a checkable unit with a fixed input shape."""

    def __init__(self, name, layer, input_shape):
        self.name = name
        self.layer = layer
        self.input_shape = input_shape

    def forward(self, x):
        return self.layer.forward(x, training=True)

    def backward(self, grad_out):
        return self.layer.backward(grad_out)

    def params(self):
        return self.layer.params()

    def param_grads(self):
        return self.layer.param_grads()


def standard_suite(seed: int = 0) -> list:
    """The stock set of checkable units: every differentiable building block
    plus a three-layer composite, with seeded random parameters."""
    from . import attention, blocks, layers
    from .config import parse_model_config
    from .model import build_model
    from .tensor_ops import BNParams, ConvSpec

    rng = np.random.default_rng(seed)

    def bn_params(c):
        # Scales away from zero keep |gamma| differentiable at the probe points.
        return BNParams(
            gamma=rng.uniform(0.5, 1.5, c) * rng.choice([-1.0, 1.0], c),
            beta=rng.uniform(-0.5, 0.5, c),
            running_mean=np.zeros(c),
            running_var=np.ones(c),
        )

    units = [
        _FunctionalUnit(
            "conv2d(3->4,k3,s2,p1)",
            layers.Conv2d(ConvSpec(3, 4, 3, stride=2, padding=1), rng=rng),
            (2, 3, 7, 7),
        ),
        _FunctionalUnit(
            "batchnorm(c=5)",
            layers.BatchNorm(5, BNParams(
                gamma=rng.uniform(0.5, 1.5, 5),
                beta=rng.uniform(-0.5, 0.5, 5),
                running_mean=np.zeros(5),
                running_var=np.ones(5),
            )),
            (3, 5, 4, 4),
        ),
        _FunctionalUnit(
            "pwconv(6->3)",
            layers.PWConv(blocks.PWConvSpec(6, 3), rng=rng),
            (2, 6, 5, 5),
        ),
        _FunctionalUnit(
            "pconv(c=6,cp=2,k=3)",
            layers.PConv(blocks.PConvSpec(6, 2, 3), rng=rng),
            (2, 6, 6, 6),
        ),
        _FunctionalUnit(
            "fasternet(c=4,cp=2,e=2)",
            layers.FasterNetBlock(blocks.FasterNetBlockSpec(4, 2, 3, 2), rng=rng),
            (2, 4, 5, 5),
        ),
        _FunctionalUnit(
            "nam_channel(c=6)",
            layers.NAMChannel(6, attention.NAMChannelParams(bn_params(6))),
            (3, 6, 4, 4),
        ),
        _FunctionalUnit(
            "nam_spatial(4x4)",
            layers.NAMSpatial(4, 4, attention.NAMSpatialParams(bn_params(16), 4, 4)),
            (2, 3, 4, 4),
        ),
    ]

    composite_cfg = "\n".join(
        [
            "input 3 6 6",
            "conv cin=3 cout=4 k=3 s=1 p=1",
            "bn c=4",
            "relu",
        ]
    )
    composite = build_model(parse_model_config(composite_cfg, name="conv-bn-relu"), seed=seed)
    composite.input_shape = (2, 3, 6, 6)
    composite.name = "composite(conv-bn-relu)"
    units.append(composite)
    return units
