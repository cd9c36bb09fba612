"""Gaussian virtual illumination, temporal filtering and RSD propagation.

Spectra are kept in FFT order (``np.fft.fftfreq``). Time axes encode round
trips, so a monochromatic component at angular frequency ``omega`` behaves
like a wave with wavenumber ``omega / (c/2)`` in one-way distance.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.fft

from .errors import DegenerateWindow, NonPositiveDepth, ShapeMismatch
from .geometry import (
    C_LIGHT,
    ApertureGrid,
    ReconGeometry,
    TransientVolume,
    scan_positions,
    voxel_centers,
)

HALF_C = C_LIGHT / 2


def workers() -> int:
    """Worker count for scipy.fft, capped by ``NLOS_THREADS`` (0 means all cores)."""
    try:
        n = int(os.environ.get("NLOS_THREADS", "0"))
    except ValueError:
        n = 0
    return n if n > 0 else -1


def omega_grid(nt: int, bin_width_s: float) -> np.ndarray:
    return 2 * np.pi * np.fft.fftfreq(nt, bin_width_s)


def carrier_from_wavelength(wavelength_m: float) -> float:
    return 2 * np.pi * HALF_C / wavelength_m


def default_wavelength(grid: ApertureGrid) -> float:
    return 4 * max(grid.spacing_x, grid.spacing_y)


def default_sigma(wavelength_m: float) -> float:
    """Window spanning roughly three carrier cycles."""
    return 3 * wavelength_m / HALF_C / (2 * np.pi)


@dataclass(frozen=True)
class IlluminationSpec:
    central_wavelength_m: float
    sigma_s: float
    x_vp: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (self.central_wavelength_m > 0 and self.sigma_s > 0):
            raise ValueError("wavelength and sigma must be positive")

    @property
    def omega_c(self) -> float:
        return carrier_from_wavelength(self.central_wavelength_m)

    @property
    def bandwidth(self) -> float:
        # reporting convention 1/(2 pi sigma); the exact half-power half-width is sqrt(ln 2)/sigma
        return 1 / (2 * np.pi * self.sigma_s)

    @classmethod
    def default(cls, grid: ApertureGrid) -> "IlluminationSpec":
        lam = default_wavelength(grid)
        return cls(lam, default_sigma(lam), tuple(grid.center))


def gaussian_amplitude(sigma: float, omega: np.ndarray, omega_c: float) -> np.ndarray:
    return sigma * np.sqrt(2 * np.pi) * np.exp(-0.5 * sigma**2 * (omega - omega_c) ** 2)


def gaussian_amplitude_dsigma(sigma: float, omega: np.ndarray, omega_c: float) -> np.ndarray:
    u = sigma**2 * (omega - omega_c) ** 2
    return np.sqrt(2 * np.pi) * np.exp(-0.5 * u) * (1 - u)


def analytic_weights(nt: int, complex_input: bool = False) -> np.ndarray:
    """One-sided spectrum weights.

    Real input: positive bins doubled, DC and Nyquist kept, negative zeroed,
    so a real tone maps to a full-amplitude complex exponential. Complex
    input is taken as already analytic: non-negative bins pass unchanged.
    """
    m = np.fft.fftfreq(nt) * nt
    w = np.zeros(nt)
    if complex_input:
        w[m >= 0] = 1.0
        if nt % 2 == 0:
            w[nt // 2] = 1.0
        return w
    w[m > 0] = 2.0
    w[0] = 1.0
    if nt % 2 == 0:
        w[nt // 2] = 1.0
    return w


@dataclass(frozen=True, eq=False)
class SpectrumWindow:
    amplitudes: np.ndarray
    omegas: np.ndarray
    band_mask: np.ndarray
    sigma_s: float
    omega_c: float
    bin_width_s: float
    band_threshold: float

    @property
    def nt(self) -> int:
        return self.amplitudes.size

    @property
    def peak_index(self) -> int:
        return int(np.argmax(self.amplitudes))

    @property
    def band_count(self) -> int:
        return int(self.band_mask.sum())

    def response(self, complex_input: bool = False) -> np.ndarray:
        """Full filter applied to a transient spectrum."""
        return analytic_weights(self.nt, complex_input) * self.band_mask * self.amplitudes

    def retained(self) -> np.ndarray:
        """Indices of frequencies that reach the propagation step, ascending in omega."""
        idx = np.flatnonzero(self.band_mask & (analytic_weights(self.nt) > 0))
        return idx[np.argsort(self.omegas[idx], kind="stable")]


def gaussian_window(
    sigma_s: float,
    nt: int,
    bin_width_s: float,
    omega_c: float,
    band_threshold: float = 0.01,
    mask: np.ndarray | None = None,
) -> SpectrumWindow:
    """Gaussian spectral window centered at the carrier.

    ``mask`` freezes the retained band (used when differentiating in sigma).
    """
    if not sigma_s > 0:
        raise ValueError(f"sigma must be positive, got {sigma_s}")
    if not 0 < band_threshold < 1:
        raise ValueError(f"band_threshold must lie in (0, 1), got {band_threshold}")
    omegas = omega_grid(nt, bin_width_s)
    amp = gaussian_amplitude(sigma_s, omegas, omega_c)
    if not amp.max() > 0:
        raise DegenerateWindow(f"window amplitude underflows everywhere (sigma={sigma_s:g}s)")
    if mask is None:
        mask = amp >= band_threshold * amp.max()
    mask = np.asarray(mask, dtype=bool)
    if mask.sum() < 3:
        raise DegenerateWindow(f"only {int(mask.sum())} frequencies survive the band mask (sigma={sigma_s:g}s)")
    return SpectrumWindow(amp, omegas, mask, float(sigma_s), float(omega_c), float(bin_width_s), band_threshold)


def filter_spectrum(data: np.ndarray, response: np.ndarray) -> np.ndarray:
    spec = scipy.fft.fft(data, axis=-1, workers=workers())
    return scipy.fft.ifft(spec * response, axis=-1, workers=workers())


def apply_illumination(tv: TransientVolume, window: SpectrumWindow) -> TransientVolume:
    """Convolve every scan-point histogram with the virtual illumination wavepacket."""
    if tv.nt != window.nt:
        raise ShapeMismatch(f"volume has {tv.nt} bins, window was built for {window.nt}")
    if not np.isclose(tv.bin_width_s, window.bin_width_s, rtol=1e-12, atol=0):
        raise ShapeMismatch("bin width of volume and window differ")
    out = filter_spectrum(tv.data, window.response(np.iscomplexobj(tv.data)))
    return tv.with_data(out, "complex_phasor", sigma_s=window.sigma_s, omega_c=window.omega_c)


def illumination_kernel(window: SpectrumWindow, complex_input: bool = False) -> np.ndarray:
    """Time-domain wavepacket; filtering equals circular convolution with it."""
    return np.fft.ifft(window.response(complex_input))


# -- propagation ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ReconVolume:
    values: np.ndarray
    geom: ReconGeometry


def _check_depth(geom: ReconGeometry):
    if geom.z_min_m <= 0:
        raise NonPositiveDepth(f"z_min must be > 0, got {geom.z_min_m}")


def aperture_spectra(data: np.ndarray, bin_width_s: float, window: SpectrumWindow) -> tuple[np.ndarray, np.ndarray]:
    """Per-scan-point phasors at the retained frequencies, ``(..., nx, ny, F)``.

    Sample ``n`` is taken at its bin center ``(n + 1/2) dt``, matching the
    distance grid convention.
    """
    idx = window.retained()
    om = window.omegas[idx]
    spec = scipy.fft.fft(data, axis=-1, workers=workers())[..., idx]
    return spec * np.exp(-0.5j * om * bin_width_s), om


def _lateral_offsets(n: int, size: int, spacing: float) -> np.ndarray:
    idx = np.arange(size)
    return np.where(idx < (size + 1) // 2, idx, idx - size) * spacing


def _kernel_radii(grid: ApertureGrid, geom: ReconGeometry, shape: tuple[int, int]) -> np.ndarray:
    ox = _lateral_offsets(grid.nx, shape[0], grid.spacing_x)
    oy = _lateral_offsets(grid.ny, shape[1], grid.spacing_y)
    return np.sqrt(ox[:, None] ** 2 + oy[None, :] ** 2 + geom.zs[:, None, None] ** 2)


def _check_lattice(grid: ApertureGrid, geom: ReconGeometry, lateral: tuple[int, int]):
    if (geom.nvx, geom.nvy) != (grid.nx, grid.ny):
        raise ShapeMismatch(
            f"fast propagation needs voxel columns on the scan lattice: "
            f"{geom.nvx}x{geom.nvy} voxels vs {grid.nx}x{grid.ny} scan points"
        )
    if lateral != (grid.nx, grid.ny):
        raise ShapeMismatch(f"field lateral shape {lateral} does not match aperture {grid.nx}x{grid.ny}")


def propagate_spectra(
    spectra: np.ndarray,
    omegas: np.ndarray,
    grid: ApertureGrid,
    geom: ReconGeometry,
    conjugate: bool = False,
) -> np.ndarray:
    """Sum spherical wavelets from the aperture into every depth plane.

    ``spectra`` has shape ``(..., nx, ny, F)``; the result ``(..., nvx, nvy, nvz)``.
    Each plane is a linear 2-D convolution with ``exp(jkr)/r`` evaluated through
    zero-padded FFTs. ``conjugate=True`` uses ``exp(-jkr)/r``.
    """
    _check_depth(geom)
    _check_lattice(grid, geom, spectra.shape[-3:-1])
    nx, ny = grid.nx, grid.ny
    shape = (scipy.fft.next_fast_len(2 * nx - 1), scipy.fft.next_fast_len(2 * ny - 1))
    r = _kernel_radii(grid, geom, shape)
    sign = -1.0 if conjugate else 1.0
    batch = spectra.shape[:-3]
    out = np.zeros(batch + (geom.nvz, nx, ny), dtype=complex)
    w = workers()
    for f in np.argsort(omegas, kind="stable"):
        k = omegas[f] / HALF_C
        fk = scipy.fft.fft2(np.exp(sign * 1j * k * r) / r, workers=w)
        fp = scipy.fft.fft2(spectra[..., f], s=shape, axes=(-2, -1), workers=w)
        planes = scipy.fft.ifft2(fp[..., None, :, :] * fk, axes=(-2, -1), workers=w)
        out += planes[..., :nx, :ny]
    return np.moveaxis(out, -3, -1)


def adjoint_propagate(
    grad: np.ndarray, omegas: np.ndarray, grid: ApertureGrid, geom: ReconGeometry
) -> np.ndarray:
    """Adjoint of :func:`propagate_spectra` for real losses.

    Maps a voxel gradient ``(..., nvx, nvy, nvz)`` to aperture phasor
    gradients ``(..., nx, ny, F)``. The kernel is symmetric in lateral offset,
    so the adjoint is the same convolution with the conjugate wavelet, summed
    over depth planes.
    """
    _check_depth(geom)
    _check_lattice(grid, geom, grad.shape[-3:-1])
    nx, ny = grid.nx, grid.ny
    shape = (scipy.fft.next_fast_len(2 * nx - 1), scipy.fft.next_fast_len(2 * ny - 1))
    r = _kernel_radii(grid, geom, shape)
    planes = np.moveaxis(grad, -1, -3)  # (..., nvz, nx, ny)
    w = workers()
    fg = scipy.fft.fft2(planes, s=shape, axes=(-2, -1), workers=w)
    out = np.zeros(grad.shape[:-3] + (nx, ny, omegas.size), dtype=complex)
    for f in np.argsort(omegas, kind="stable"):
        k = omegas[f] / HALF_C
        fk = scipy.fft.fft2(np.exp(-1j * k * r) / r, workers=w)
        acc = scipy.fft.ifft2((fg * fk).sum(axis=-3), axes=(-2, -1), workers=w)
        out[..., f] = acc[..., :nx, :ny]
    return out


def propagate_spectra_direct(
    spectra: np.ndarray, omegas: np.ndarray, grid: ApertureGrid, geom: ReconGeometry
) -> np.ndarray:
    """Explicit double sum over scan points and voxels, no FFT.

    Distances come straight from :func:`scan_positions` and
    :func:`voxel_centers`, so any voxel lattice is accepted.
    """
    _check_depth(geom)
    if spectra.shape[-3:-1] != (grid.nx, grid.ny):
        raise ShapeMismatch(f"field lateral shape {spectra.shape[-3:-1]} does not match aperture")
    # scan_positions is iy-major; reorder the field to match
    field = np.swapaxes(spectra, -3, -2).reshape(spectra.shape[:-3] + (grid.nx * grid.ny, omegas.size))
    scan = scan_positions(grid)
    centers = voxel_centers(geom, grid)
    out = np.zeros(spectra.shape[:-3] + (geom.nvx, geom.nvy, geom.nvz), dtype=complex)
    order = np.argsort(omegas, kind="stable")
    ks = omegas[order] / HALF_C
    steps = np.diff(ks)
    uniform = steps.size > 0 and np.allclose(steps, steps[0], rtol=1e-12, atol=0)
    for iz in range(geom.nvz):
        vox = centers[:, :, iz].reshape(-1, 3)
        r = np.sqrt(((vox[:, None, :] - scan[None, :, :]) ** 2).sum(-1))  # (V, S)
        inv_r = 1.0 / r
        phase = np.exp(1j * ks[0] * r)
        step = np.exp(1j * steps[0] * r) if uniform else None
        acc = np.zeros(field.shape[:-2] + (vox.shape[0],), dtype=complex)
        for i, f in enumerate(order):
            if i > 0:
                phase = phase * step if uniform else np.exp(1j * ks[i] * r)
            acc += field[..., f] @ (phase * inv_r).T
        out[..., iz] = acc.reshape(field.shape[:-2] + (geom.nvx, geom.nvy))
    return out


def dft_spectra(data: np.ndarray, bin_width_s: float, window: SpectrumWindow) -> tuple[np.ndarray, np.ndarray]:
    """Explicit-sum counterpart of :func:`aperture_spectra`; accepts batched data."""
    idx = window.retained()
    om = window.omegas[idx]
    t = (np.arange(data.shape[-1]) + 0.5) * bin_width_s
    basis = np.exp(-1j * np.outer(t, om))
    return data @ basis, om


def rsd_propagate(phasor: TransientVolume, geom: ReconGeometry, window: SpectrumWindow) -> ReconVolume:
    if phasor.kind != "complex_phasor":
        raise ValueError(f"expected a complex_phasor volume, got {phasor.kind}")
    spectra, om = aperture_spectra(phasor.data, phasor.bin_width_s, window)
    return ReconVolume(propagate_spectra(spectra, om, phasor.aperture, geom), geom)


def rsd_propagate_direct(phasor: TransientVolume, geom: ReconGeometry, window: SpectrumWindow) -> ReconVolume:
    if phasor.kind != "complex_phasor":
        raise ValueError(f"expected a complex_phasor volume, got {phasor.kind}")
    spectra, om = dft_spectra(phasor.data, phasor.bin_width_s, window)
    return ReconVolume(propagate_spectra_direct(spectra, om, phasor.aperture, geom), geom)


# -- rendering --------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Views:
    intensity: np.ndarray
    depth: np.ndarray


def normalized_magnitude(values: np.ndarray) -> np.ndarray:
    mag = np.abs(values)
    peak = mag.max()
    # non-finite peaks propagate so callers can detect them
    return np.zeros_like(mag) if peak == 0 else mag / peak


def _softmax(x: np.ndarray, axis: int) -> np.ndarray:
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    return e / e.sum(axis=axis, keepdims=True)


def render_views(
    vol: ReconVolume, mode: Literal["hard", "soft"] = "hard", tau: float = 0.05, floor: float = 1e-3
) -> Views:
    """Intensity and depth images from a reconstructed volume."""
    a = normalized_magnitude(vol.values)
    zs = vol.geom.zs
    if mode == "hard":
        intensity = a.max(axis=-1)
        depth = np.where(intensity >= floor, zs[np.argmax(a, axis=-1)], 0.0)
        return Views(intensity, depth)
    if mode != "soft":
        raise ValueError(f"unknown render mode {mode!r}")
    if not tau > 0:
        raise ValueError("soft rendering needs tau > 0")
    w = _softmax(a / tau, axis=-1)
    return Views((w * a).sum(-1), (w * zs).sum(-1))


def soft_views_backward(
    values: np.ndarray, zs: np.ndarray, tau: float, grad_i: np.ndarray, grad_d: np.ndarray
) -> np.ndarray:
    """Gradient of a real loss w.r.t. the complex volume through soft rendering.

    Returned as ``dL/dRe + j dL/dIm``.
    """
    mag = np.abs(values)
    flat = int(np.argmax(mag))
    peak = mag.flat[flat]
    if peak == 0:
        return np.zeros_like(values, dtype=complex)
    a = mag / peak
    w = _softmax(a / tau, axis=-1)
    intensity = (w * a).sum(-1, keepdims=True)
    depth = (w * zs).sum(-1, keepdims=True)
    ga = grad_i[..., None] * (w + w * (a - intensity) / tau) + grad_d[..., None] * w * (zs - depth) / tau
    gmag = ga / peak
    gmag.flat[flat] -= (ga * a).sum() / peak
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(mag > 0, values / np.where(mag > 0, mag, 1), 0)
    return gmag * unit
