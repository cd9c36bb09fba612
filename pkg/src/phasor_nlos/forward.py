"""Confocal transient rendering with per-point fall-off, plus SPAD Poisson noise."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSnr, OutOfRange
from .geometry import C_LIGHT, ApertureGrid, ReconGeometry, TransientVolume


@dataclass(frozen=True)
class ScenePoint:
    position_m: tuple[float, float, float]
    albedo: float = 1.0
    falloff_exponent: float = 2.0

    def __post_init__(self):
        pos = tuple(float(v) for v in self.position_m)
        if len(pos) != 3 or not pos[2] > 0:
            raise ValueError(f"scene point must be a 3-vector with z > 0, got {self.position_m}")
        if self.albedo < 0:
            raise ValueError(f"albedo must be >= 0, got {self.albedo}")
        if not 0 < self.falloff_exponent <= 8:
            raise ValueError(f"fall-off exponent must lie in (0, 8], got {self.falloff_exponent}")
        object.__setattr__(self, "position_m", pos)


@dataclass(frozen=True)
class Scene:
    points: tuple[ScenePoint, ...]
    name: str = "scene"

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))

    def __add__(self, other: "Scene") -> "Scene":
        return Scene(self.points + other.points, f"{self.name}+{other.name}")

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.position_m for p in self.points], dtype=float).reshape(-1, 3)

    @property
    def albedos(self) -> np.ndarray:
        return np.array([p.albedo for p in self.points], dtype=float)

    @property
    def exponents(self) -> np.ndarray:
        return np.array([p.falloff_exponent for p in self.points], dtype=float)


@dataclass(frozen=True)
class NoiseConfig:
    """SPAD noise settings.

    ``background`` overrides the SNR-derived background rate when given.
    """

    snr_db: float | None = 10.0
    seed: int = 0
    background: float | None = None


def render_transient(
    scene: Scene, grid: ApertureGrid, nt: int, bin_width_s: float, falloff: bool = True
) -> TransientVolume:
    """Accumulate ``albedo / r**z`` into the bin of each round trip.

    With ``falloff=False`` every return carries its bare albedo, which is what
    a perfect path compensation would recover.
    """
    if not scene.points:
        raise ValueError("cannot render an empty scene")
    xs, ys = np.meshgrid(grid.xs, grid.ys, indexing="ij")  # (nx, ny)
    pos = scene.positions
    dx = xs[..., None] - pos[:, 0]
    dy = ys[..., None] - pos[:, 1]
    r = np.sqrt(dx**2 + dy**2 + pos[:, 2] ** 2)  # (nx, ny, P)
    r = np.maximum(r, 0.5 * min(grid.spacing_x, grid.spacing_y))
    bins = np.floor(2 * r / (C_LIGHT * bin_width_s)).astype(np.int64)
    late = bins >= nt
    if late.any():
        p = int(np.argwhere(late)[0][2])
        raise OutOfRange(
            f"point {p} at {scene.points[p].position_m} needs bin {int(bins[..., p].max())} "
            f"but the window has {nt} bins"
        )
    values = np.empty_like(r)
    for p, point in enumerate(scene.points):
        # one point at a time so each deposit is independent of its neighbours
        values[..., p] = point.albedo / r[..., p] ** point.falloff_exponent if falloff else point.albedo
    data = np.zeros((grid.nx, grid.ny, nt))
    ix, iy = np.indices((grid.nx, grid.ny))
    ix = np.broadcast_to(ix[..., None], bins.shape)
    iy = np.broadcast_to(iy[..., None], bins.shape)
    np.add.at(data, (ix, iy, bins), values)
    return TransientVolume(data, bin_width_s, grid, "clean_real", {"scene": scene.name})


def background_from_snr(data: np.ndarray, snr_db: float) -> float:
    """Background rate B = mean of the strictly positive bins / 10^(snr/10)."""
    positive = data[data > 0]
    with np.errstate(all="ignore"):
        mean = positive.mean() if positive.size else np.nan
        b = float(mean / 10 ** (snr_db / 10))
    if not np.isfinite(b):
        raise InvalidSnr(f"snr_db={snr_db} yields non-finite background {b}")
    return b


def add_spad_noise(tv: TransientVolume, cfg: NoiseConfig) -> TransientVolume:
    """Draw Poisson(H + B) counts bin by bin.

    Each scan point gets its own stream seeded from ``(seed, ix, iy)``, so any
    slice can be regenerated independently of the others.
    """
    if tv.kind == "complex_phasor":
        raise ValueError("noise applies to real intensity volumes")
    if cfg.background is not None:
        b = float(cfg.background)
        if not np.isfinite(b) or b < 0:
            raise InvalidSnr(f"background must be finite and >= 0, got {b}")
    else:
        b = background_from_snr(tv.data, cfg.snr_db)
    lam = tv.data + b
    out = np.empty_like(lam)
    for ix in range(lam.shape[0]):
        for iy in range(lam.shape[1]):
            seq = np.random.SeedSequence(cfg.seed, spawn_key=(ix, iy))
            out[ix, iy] = np.random.Generator(np.random.PCG64(seq)).poisson(lam[ix, iy])
    return tv.with_data(out, "noisy_counts", background=b, snr_db=cfg.snr_db, seed=cfg.seed)


@dataclass(frozen=True)
class GroundTruth:
    intensity: np.ndarray
    depth: np.ndarray
    mask: np.ndarray = field(repr=False)


def ground_truth_views(scene: Scene, grid: ApertureGrid, geom: ReconGeometry) -> GroundTruth:
    """Supervision images from the voxelized albedo.

    Intensity is the max-projection normalized to 1; depth is the plane center
    of the strongest voxel per column and 0 on empty columns.
    """
    vol = np.zeros((geom.nvx, geom.nvy, geom.nvz))
    ox, oy, _ = grid.origin_m
    sx = grid.extent_m / (geom.nvx - 1)
    sy = grid.extent_m / (geom.nvy - 1)
    for p in scene.points:
        x, y, z = p.position_m
        i = int(np.clip(np.floor((x - ox) / sx + 0.5), 0, geom.nvx - 1))
        j = int(np.clip(np.floor((y - oy) / sy + 0.5), 0, geom.nvy - 1))
        k = int(np.clip(np.floor((z - geom.z_min_m) / geom.dz), 0, geom.nvz - 1))
        vol[i, j, k] = max(vol[i, j, k], p.albedo)
    proj = vol.max(axis=2)
    peak = proj.max()
    intensity = proj / peak if peak > 0 else proj
    mask = proj > 0
    depth = np.where(mask, geom.zs[np.argmax(vol, axis=2)], 0.0)
    return GroundTruth(intensity, depth, mask)
