"""Adaptive phasor field: a learnable illumination window width.

The raw parameter ``s`` maps to ``sigma = sigma_min + unit * softplus(s)``.
``unit`` carries the time scale (one bin width by default) so that ``s``
stays O(1) during optimization.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeMismatch
from .geometry import TransientVolume
from .phasor import (
    SpectrumWindow,
    analytic_weights,
    apply_illumination,
    gaussian_amplitude_dsigma,
    gaussian_window,
)


def softplus(s):
    return np.logaddexp(0.0, s)


def sigmoid(s):
    return 0.5 * (1 + np.tanh(0.5 * s))


@dataclass
class ApfParams:
    s: float = 0.0
    sigma_min: float = 0.0
    unit: float = 1.0

    @classmethod
    def for_bins(cls, bin_width_s: float, s: float = 0.0) -> "ApfParams":
        return cls(float(s), bin_width_s / 4, bin_width_s)

    @classmethod
    def from_sigma(cls, sigma_s: float, bin_width_s: float) -> "ApfParams":
        """Parameters whose mapped sigma equals ``sigma_s``."""
        base = cls.for_bins(bin_width_s)
        excess = (sigma_s - base.sigma_min) / base.unit
        if not excess > 0:
            raise ValueError(f"sigma {sigma_s} is below the floor {base.sigma_min}")
        base.s = float(excess + np.log(-np.expm1(-excess)))  # inverse softplus
        return base


def apf_sigma(params: ApfParams) -> float:
    return float(params.sigma_min + params.unit * softplus(params.s))


def apf_dsigma_ds(params: ApfParams) -> float:
    return float(params.unit * sigmoid(params.s))


def apf_window(
    nt: int, bin_width_s: float, params: ApfParams, omega_c: float, band_threshold: float = 0.01, mask=None
) -> SpectrumWindow:
    return gaussian_window(apf_sigma(params), nt, bin_width_s, omega_c, band_threshold, mask)


def apf_forward(
    tv: TransientVolume, params: ApfParams, omega_c: float, band_threshold: float = 0.01, mask=None
) -> TransientVolume:
    window = apf_window(tv.nt, tv.bin_width_s, params, omega_c, band_threshold, mask)
    return apply_illumination(tv, window)


def apf_backward(
    tv: TransientVolume,
    params: ApfParams,
    omega_c: float,
    band_threshold: float,
    upstream_grad: np.ndarray,
    mask=None,
) -> float:
    """dL/ds for a real loss with complex upstream gradient ``dL/dRe + j dL/dIm``.

    The band mask is held fixed at the forward pass value.
    """
    if upstream_grad.shape != tv.data.shape:
        raise ShapeMismatch(f"upstream gradient {upstream_grad.shape} vs volume {tv.data.shape}")
    window = apf_window(tv.nt, tv.bin_width_s, params, omega_c, band_threshold, mask)
    complex_input = np.iscomplexobj(tv.data)
    spec = np.fft.fft(tv.data, axis=-1)
    g_spec = np.fft.fft(upstream_grad, axis=-1) / tv.nt
    dresp = analytic_weights(tv.nt, complex_input) * window.band_mask * \
        gaussian_amplitude_dsigma(window.sigma_s, window.omegas, window.omega_c)
    dsigma = float(np.real(np.conj(g_spec) * spec * dresp).sum())
    return dsigma * apf_dsigma_ds(params)
