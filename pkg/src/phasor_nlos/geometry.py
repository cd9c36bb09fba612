"""Scan lattice, reconstruction grid and the confocal time/distance mapping.

Frame: the relay wall is the plane z = 0 and the hidden volume lives at z > 0.
Time bins store round-trip flight time, so one-way distance is c*t/2.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

C_LIGHT = 2.99792458e8

Kind = Literal["clean_real", "noisy_counts", "complex_phasor"]
KINDS: tuple[str, ...] = ("clean_real", "noisy_counts", "complex_phasor")


@dataclass(frozen=True)
class ApertureGrid:
    nx: int
    ny: int
    extent_m: float = 2.0
    origin_m: tuple[float, float, float] | None = None

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"aperture needs at least 2x2 scan points, got {self.nx}x{self.ny}")
        if not self.extent_m > 0:
            raise ValueError(f"extent_m must be positive, got {self.extent_m}")
        if self.origin_m is None:
            half = self.extent_m / 2
            object.__setattr__(self, "origin_m", (-half, -half, 0.0))
        origin = tuple(float(v) for v in self.origin_m)
        if len(origin) != 3 or origin[2] != 0.0:
            raise ValueError("origin_m must be a 3-vector on the z = 0 wall plane")
        object.__setattr__(self, "origin_m", origin)

    @property
    def spacing_x(self) -> float:
        return self.extent_m / (self.nx - 1)

    @property
    def spacing_y(self) -> float:
        return self.extent_m / (self.ny - 1)

    @property
    def xs(self) -> np.ndarray:
        return self.origin_m[0] + np.arange(self.nx) * self.spacing_x

    @property
    def ys(self) -> np.ndarray:
        return self.origin_m[1] + np.arange(self.ny) * self.spacing_y

    @property
    def center(self) -> np.ndarray:
        ox, oy, _ = self.origin_m
        return np.array([ox + self.extent_m / 2, oy + self.extent_m / 2, 0.0])


@dataclass(frozen=True)
class ReconGeometry:
    """Voxel grid of the hidden volume.

    Laterally the voxel columns sit on the scan lattice (``nvx`` nodes across
    the aperture extent); axially ``nvz`` cells split ``[z_min_m, z_max_m]``
    and each plane sits at its cell center.
    """

    nvx: int
    nvy: int
    nvz: int
    z_min_m: float = 0.25
    z_max_m: float = 2.25

    def __post_init__(self):
        if min(self.nvx, self.nvy) < 2 or self.nvz < 1:
            raise ValueError("need nvx, nvy >= 2 and nvz >= 1")
        if self.z_min_m < 0 or not self.z_max_m > self.z_min_m:
            raise ValueError(f"bad depth range [{self.z_min_m}, {self.z_max_m}]")

    @property
    def dz(self) -> float:
        return (self.z_max_m - self.z_min_m) / self.nvz

    @property
    def zs(self) -> np.ndarray:
        return self.z_min_m + (np.arange(self.nvz) + 0.5) * self.dz

    @classmethod
    def matching(cls, grid: ApertureGrid, nvz: int, z_min_m: float = 0.25, z_max_m: float = 2.25):
        return cls(grid.nx, grid.ny, nvz, z_min_m, z_max_m)


@dataclass(frozen=True)
class DistanceGrid:
    values: np.ndarray
    bin_width_s: float

    @property
    def step(self) -> float:
        return C_LIGHT * self.bin_width_s / 2


@dataclass(frozen=True, eq=False)
class TransientVolume:
    """Confocal histogram cube indexed ``(ix, iy, it)``."""

    data: np.ndarray
    bin_width_s: float
    aperture: ApertureGrid
    kind: Kind = "clean_real"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        data = self.data
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        if data.ndim != 3:
            raise ValueError(f"transient data must be 3-D, got shape {data.shape}")
        nx, ny, nt = data.shape
        if (nx, ny) != (self.aperture.nx, self.aperture.ny):
            raise ValueError(f"data shape {data.shape} does not match aperture {self.aperture.nx}x{self.aperture.ny}")
        if nt < 8:
            raise ValueError(f"need at least 8 time bins, got {nt}")
        if not self.bin_width_s > 0:
            raise ValueError("bin_width_s must be positive")
        if self.kind == "complex_phasor":
            return
        if np.iscomplexobj(data):
            raise ValueError(f"kind {self.kind} requires real data")
        if np.any(data < 0):
            raise ValueError(f"kind {self.kind} requires non-negative data")
        if self.kind == "noisy_counts" and np.any(data != np.round(data)):
            raise ValueError("noisy_counts data must hold integer values")

    @property
    def nt(self) -> int:
        return self.data.shape[2]

    def with_data(self, data: np.ndarray, kind: Kind | None = None, **meta) -> "TransientVolume":
        return TransientVolume(data, self.bin_width_s, self.aperture, kind or self.kind, {**self.meta, **meta})


def scan_positions(grid: ApertureGrid) -> np.ndarray:
    """Scan points as an ``(ny*nx, 3)`` array, iy outer and ix inner."""
    yy, xx = np.meshgrid(grid.ys, grid.xs, indexing="ij")
    return np.stack([xx.ravel(), yy.ravel(), np.zeros(xx.size)], axis=1)


def distance_grid(nt: int, bin_width_s: float) -> DistanceGrid:
    if nt < 1 or not bin_width_s > 0:
        raise ValueError("need nt >= 1 and bin_width_s > 0")
    values = C_LIGHT * (np.arange(nt) + 0.5) * bin_width_s / 2
    return DistanceGrid(values, bin_width_s)


def distance_to_bin(r, bin_width_s: float):
    """Round-trip bin index of one-way distance ``r`` (inverse of distance_grid)."""
    return np.floor(2 * np.asarray(r) / (C_LIGHT * bin_width_s)).astype(np.int64)


def voxel_centers(geom: ReconGeometry, grid: ApertureGrid) -> np.ndarray:
    """Voxel centers as an ``(nvx, nvy, nvz, 3)`` array."""
    ox, oy, _ = grid.origin_m
    xs = ox + np.arange(geom.nvx) * grid.extent_m / (geom.nvx - 1)
    ys = oy + np.arange(geom.nvy) * grid.extent_m / (geom.nvy - 1)
    X, Y, Z = np.meshgrid(xs, ys, geom.zs, indexing="ij")
    return np.stack([X, Y, Z], axis=-1)


def voxel_size(geom: ReconGeometry, grid: ApertureGrid) -> tuple[float, float, float]:
    return (grid.extent_m / (geom.nvx - 1), grid.extent_m / (geom.nvy - 1), geom.dz)
