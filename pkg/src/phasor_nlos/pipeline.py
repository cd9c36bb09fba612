"""End-to-end chain: compensation -> illumination -> RSD -> rendering.

The forward pass caches what the hand-written backward pass needs. Gradients
flow into the LPC logits and the APF parameter ``s``; the band mask is frozen
at its forward-pass value.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .apf import ApfParams, apf_dsigma_ds, apf_sigma
from .forward import GroundTruth, NoiseConfig, Scene, add_spad_noise, ground_truth_views, render_transient
from .geometry import ApertureGrid, ReconGeometry, distance_grid
from .lpc import LpcParams, compensation_weights, fixed_compensation, lpc_forward, mixed_weight
from .phasor import (
    ReconVolume,
    SpectrumWindow,
    Views,
    adjoint_propagate,
    analytic_weights,
    carrier_from_wavelength,
    default_sigma,
    default_wavelength,
    gaussian_amplitude_dsigma,
    gaussian_window,
    propagate_spectra,
    propagate_spectra_direct,
    render_views,
    soft_views_backward,
    workers,
)


@dataclass(frozen=True)
class PipelineConfig:
    grid: ApertureGrid
    geom: ReconGeometry
    nt: int = 512
    bin_width_s: float = 33e-12
    wavelength_m: float | None = None
    band_threshold: float = 0.01
    tau: float = 0.05

    @property
    def wavelength(self) -> float:
        return self.wavelength_m if self.wavelength_m is not None else default_wavelength(self.grid)

    @property
    def omega_c(self) -> float:
        return carrier_from_wavelength(self.wavelength)

    @property
    def default_sigma(self) -> float:
        return default_sigma(self.wavelength)

    def weights(self):
        return compensation_weights(distance_grid(self.nt, self.bin_width_s))

    def window(self, sigma_s: float, mask=None) -> SpectrumWindow:
        return gaussian_window(sigma_s, self.nt, self.bin_width_s, self.omega_c, self.band_threshold, mask)


@dataclass(frozen=True, eq=False)
class Sample:
    data: np.ndarray
    gt: GroundTruth
    name: str = "sample"
    meta: dict = field(default_factory=dict)


def make_sample(scene: Scene, cfg: PipelineConfig, snr_db: float | None = None, seed: int = 0) -> Sample:
    tv = render_transient(scene, cfg.grid, cfg.nt, cfg.bin_width_s)
    if snr_db is not None:
        tv = add_spad_noise(tv, NoiseConfig(snr_db, seed))
    return Sample(tv.data, ground_truth_views(scene, cfg.grid, cfg.geom), scene.name, dict(tv.meta))


def matched_sample(
    scene: Scene, cfg: PipelineConfig, exponent: int | None = None, snr_db: float | None = None, seed: int = 0
) -> Sample:
    """Sample supervised by the pipeline's own views under the true compensation.

    The target is the soft rendering of the clean measurement with every
    scan point locked onto ``exponent`` (the scene's shared fall-off
    exponent by default) at the default window width. Only the material
    choice separates a candidate from the target, which makes the exponent
    identifiable from the loss.
    """
    if exponent is None:
        found = set(scene.exponents.tolist())
        if len(found) != 1:
            raise ValueError(f"scene mixes fall-off exponents {sorted(found)}; pass one explicitly")
        exponent = int(found.pop())
    clean = render_transient(scene, cfg.grid, cfg.nt, cfg.bin_width_s)
    lock = LpcParams.one_hot(cfg.grid.nx, cfg.grid.ny, exponent)
    views = forward(clean.data, lock, ApfParams.from_sigma(cfg.default_sigma, cfg.bin_width_s), cfg).views
    gt = GroundTruth(views.intensity, views.depth, views.intensity >= 1e-3)
    data = clean
    if snr_db is not None:
        data = add_spad_noise(clean, NoiseConfig(snr_db, seed))
    return Sample(data.data, gt, scene.name, {**data.meta, "supervision": f"matched:{exponent}"})


def compensate(data: np.ndarray, cfg: PipelineConfig, compensation=None) -> np.ndarray:
    """Apply no compensation (None), a fixed exponent (int) or learned LPC logits."""
    if compensation is None:
        return data
    w = cfg.weights()
    if isinstance(compensation, LpcParams):
        return lpc_forward(data, compensation, w)
    return fixed_compensation(data, w, int(compensation))


def reconstruct(
    data: np.ndarray,
    cfg: PipelineConfig,
    compensation=None,
    sigma_s: float | None = None,
    oracle: bool = False,
) -> ReconVolume:
    y = compensate(data, cfg, compensation)
    window = cfg.window(sigma_s if sigma_s is not None else cfg.default_sigma)
    spectra, om = _spectra(scipy.fft.fft(y, axis=-1, workers=workers()), window, cfg.bin_width_s)
    prop = propagate_spectra_direct if oracle else propagate_spectra
    return ReconVolume(prop(spectra, om, cfg.grid, cfg.geom), cfg.geom)


def _spectra(y_spec: np.ndarray, window: SpectrumWindow, dt: float):
    idx = window.retained()
    om = window.omegas[idx]
    z = y_spec[..., idx] * window.response()[idx]
    return z * np.exp(-0.5j * om * dt), om


@dataclass(eq=False)
class Trace:
    y_spec: np.ndarray
    window: SpectrumWindow
    idx: np.ndarray
    omegas: np.ndarray
    volume: np.ndarray
    views: Views


def forward(data: np.ndarray, lpc: LpcParams, apf: ApfParams, cfg: PipelineConfig, mask=None) -> Trace:
    """Soft-rendered views of ``data`` under the current parameters."""
    y = lpc_forward(data, lpc, cfg.weights())
    y_spec = scipy.fft.fft(y, axis=-1, workers=workers())
    window = cfg.window(apf_sigma(apf), mask)
    spectra, om = _spectra(y_spec, window, cfg.bin_width_s)
    vol = propagate_spectra(spectra, om, cfg.grid, cfg.geom)
    views = render_views(ReconVolume(vol, cfg.geom), "soft", cfg.tau)
    return Trace(y_spec, window, window.retained(), om, vol, views)


def backward(
    data: np.ndarray,
    lpc: LpcParams,
    apf: ApfParams,
    cfg: PipelineConfig,
    trace: Trace,
    g_i: np.ndarray,
    g_d: np.ndarray,
):
    """Pull view gradients back to ``(d/dlogits, d/ds)``."""
    g_vol = soft_views_backward(trace.volume, cfg.geom.zs, cfg.tau, g_i, g_d)
    g_spectra = adjoint_propagate(g_vol, trace.omegas, cfg.grid, cfg.geom)

    window, idx, nt = trace.window, trace.idx, cfg.nt
    g_z = np.zeros(data.shape, dtype=complex)
    g_z[..., idx] = g_spectra * np.exp(0.5j * trace.omegas * cfg.bin_width_s)

    d_resp = analytic_weights(nt) * window.band_mask * gaussian_amplitude_dsigma(
        window.sigma_s, window.omegas, window.omega_c
    )
    g_sigma = float(np.real(np.conj(g_z) * trace.y_spec * d_resp).sum())
    g_s = g_sigma * apf_dsigma_ds(apf)

    g_y = nt * np.real(scipy.fft.ifft(g_z * window.response(), axis=-1, workers=workers()))
    w = cfg.weights()
    gx = g_y * data
    p = lpc.probabilities()
    wbar_proj = np.einsum("xyt,xyt->xy", gx, mixed_weight(lpc, w))
    w_proj = np.einsum("xyt,rt->rxy", gx, w.values)
    return p * (w_proj - wbar_proj), g_s
