"""Learnable path compensation.

Each scan point holds three logits; their softmax mixes the distance-power
weights ``d**1, d**2, d**4`` that undo a ``1/r**z`` fall-off. The mixed
compensation is added back onto the input (residual form).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .geometry import DistanceGrid, TransientVolume

EXPONENTS = (1, 2, 4)


@dataclass(frozen=True, eq=False)
class CompensationWeights:
    values: np.ndarray  # (3, nt), one row per exponent in EXPONENTS

    @property
    def w1(self) -> np.ndarray:
        return self.values[0]

    @property
    def w2(self) -> np.ndarray:
        return self.values[1]

    @property
    def w4(self) -> np.ndarray:
        return self.values[2]

    def channel(self, exponent: int) -> int:
        return EXPONENTS.index(exponent)


@dataclass
class LpcParams:
    logits: np.ndarray  # (3, nx, ny)

    @classmethod
    def zeros(cls, nx: int, ny: int) -> "LpcParams":
        return cls(np.zeros((3, nx, ny)))

    @classmethod
    def one_hot(cls, nx: int, ny: int, exponent: int, strength: float = 100.0) -> "LpcParams":
        logits = np.full((3, nx, ny), -strength)
        logits[EXPONENTS.index(exponent)] = strength
        return cls(logits)

    def probabilities(self) -> np.ndarray:
        z = self.logits - self.logits.max(axis=0, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=0, keepdims=True)

    def selected_exponents(self) -> np.ndarray:
        return np.asarray(EXPONENTS)[np.argmax(self.logits, axis=0)]


def compensation_weights(dg: DistanceGrid | np.ndarray) -> CompensationWeights:
    d = np.asarray(dg.values if isinstance(dg, DistanceGrid) else dg, dtype=float)
    return CompensationWeights(np.stack([d**e for e in EXPONENTS]))


def _unwrap(tv):
    return tv.data if isinstance(tv, TransientVolume) else np.asarray(tv)


def _check(x: np.ndarray, params: LpcParams, w: CompensationWeights):
    if params.logits.shape != (3,) + x.shape[:2] or w.values.shape != (3, x.shape[2]):
        raise ShapeMismatch(
            f"volume {x.shape}, logits {params.logits.shape}, weights {w.values.shape} are inconsistent"
        )


def mixed_weight(params: LpcParams, w: CompensationWeights) -> np.ndarray:
    """Per-pixel expected compensation ``sum_r p_r w_r[t]``, shape ``(nx, ny, nt)``."""
    p = params.probabilities()
    assert np.allclose(p.sum(axis=0), 1.0) and np.all((p >= 0) & (p <= 1))
    return np.einsum("rxy,rt->xyt", p, w.values)


def lpc_forward(tv, params: LpcParams, w: CompensationWeights):
    x = _unwrap(tv)
    _check(x, params, w)
    out = x * (1.0 + mixed_weight(params, w))
    if isinstance(tv, TransientVolume):
        return tv.with_data(out, "complex_phasor" if np.iscomplexobj(out) else "clean_real")
    return out


def lpc_backward(tv, params: LpcParams, w: CompensationWeights, upstream_grad: np.ndarray) -> np.ndarray:
    """Gradient of a real loss w.r.t. the logits, shape ``(3, nx, ny)``."""
    x = _unwrap(tv)
    _check(x, params, w)
    g = _unwrap(upstream_grad)
    if g.shape != x.shape:
        raise ShapeMismatch(f"upstream gradient {g.shape} vs volume {x.shape}")
    p = params.probabilities()
    gx = np.real(np.conj(g) * x) if np.iscomplexobj(g) or np.iscomplexobj(x) else g * x
    wbar_proj = np.einsum("xyt,xyt->xy", gx, mixed_weight(params, w))
    w_proj = np.einsum("xyt,rt->rxy", gx, w.values)
    return p * (w_proj - wbar_proj)


def fixed_compensation(tv, w: CompensationWeights, exponent: int):
    """Single-exponent compensation ``x * d**exponent`` with no residual term."""
    x = _unwrap(tv)
    out = x * w.values[w.channel(exponent)]
    if isinstance(tv, TransientVolume):
        return tv.with_data(out, "complex_phasor" if np.iscomplexobj(out) else "clean_real", compensation=exponent)
    return out
