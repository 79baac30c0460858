"""Hyperspectral scan cubes: band maps and their file format."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CUBE_MAGIC = b"QHC1\0\0\0\0"


@dataclass
class HyperspectralCube:
    x_grid: np.ndarray  # µm
    y_grid: np.ndarray  # µm
    lambda_grid: np.ndarray  # nm, bin centres
    counts: np.ndarray  # [x, y, lambda]

    def __post_init__(self):
        self.x_grid = np.asarray(self.x_grid, dtype=float)
        self.y_grid = np.asarray(self.y_grid, dtype=float)
        self.lambda_grid = np.asarray(self.lambda_grid, dtype=float)
        self.counts = np.asarray(self.counts)
        for name in ("x_grid", "y_grid", "lambda_grid"):
            g = getattr(self, name)
            if g.ndim != 1 or g.size < 1 or np.any(np.diff(g) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
        shape = (self.x_grid.size, self.y_grid.size, self.lambda_grid.size)
        if self.counts.shape != shape:
            raise ValueError(f"counts shape {self.counts.shape} does not match grids {shape}")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @property
    def lambda_edges(self) -> np.ndarray:
        g = self.lambda_grid
        if g.size == 1:
            return np.array([g[0] - 0.5, g[0] + 0.5])
        mid = (g[1:] + g[:-1]) / 2
        return np.concatenate([[g[0] - (mid[0] - g[0])], mid, [g[-1] + (g[-1] - mid[-1])]])

    def to_bytes(self) -> bytes:
        head = CUBE_MAGIC + struct.pack("<3Q", *self.counts.shape)
        axes = b"".join(np.ascontiguousarray(g, dtype="<f8").tobytes() for g in (self.x_grid, self.y_grid, self.lambda_grid))
        return head + axes + np.ascontiguousarray(self.counts, dtype="<u4").tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "HyperspectralCube":
        if data[:8] != CUBE_MAGIC:
            raise ValueError("not a hyperspectral cube file")
        nx, ny, nl = struct.unpack("<3Q", data[8:32])
        off = 32
        axes = []
        for n in (nx, ny, nl):
            axes.append(np.frombuffer(data, dtype="<f8", count=n, offset=off).copy())
            off += 8 * n
        counts = np.frombuffer(data, dtype="<u4", count=nx * ny * nl, offset=off).reshape(nx, ny, nl).copy()
        return cls(*axes, counts)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "HyperspectralCube":
        return cls.from_bytes(Path(path).read_bytes())


def band_weights(cube: HyperspectralCube, band) -> np.ndarray:
    """Fraction of each spectral bin lying inside ``band`` = (lo, hi) in nm."""
    lo, hi = band
    if hi <= lo:
        raise ValueError("band must satisfy lo < hi")
    edges = cube.lambda_edges
    overlap = np.clip(np.minimum(edges[1:], hi) - np.maximum(edges[:-1], lo), 0, None)
    w = overlap / np.diff(edges)
    if not np.any(w > 0):
        raise ValueError(f"band {band} does not overlap the spectral grid")
    return w


def band_integrate(cube: HyperspectralCube, band) -> np.ndarray:
    """Per-pixel counts in the band; edge bins contribute by overlap fraction."""
    return cube.counts.astype(float) @ band_weights(cube, band)


def band_map_csv(cube: HyperspectralCube, image: np.ndarray) -> str:
    lines = ["x_um,y_um,value"]
    for i, x in enumerate(cube.x_grid):
        for j, y in enumerate(cube.y_grid):
            lines.append(f"{x:.17g},{y:.17g},{image[i, j]:.17g}")
    return "\n".join(lines) + "\n"


def synthetic_lens_cube(
    n_xy: int = 41,
    extent_um: float = 10.0,
    lens_centers=((-2.5, 0.0), (2.5, 0.0)),
    qd_lens: int = 0,
    psf_fwhm_um: float = 0.604,
    lens_radius_um: float = 1.5,
    peak_counts: float = 1000.0,
    seed: int | None = 0,
) -> HyperspectralCube:
    """Toy scan of a microlens array: laser reflection between lenses,
    matrix luminescence on the lenses, QD line at 780 nm in one lens only."""
    x = np.linspace(-extent_um / 2, extent_um / 2, n_xy)
    y = x.copy()
    lam = np.arange(620.0, 800.0, 1.0)
    xx, yy = np.meshgrid(x, y, indexing="ij")
    lens = np.zeros_like(xx)
    for cx, cy in lens_centers:
        lens = np.maximum(lens, ((xx - cx) ** 2 + (yy - cy) ** 2 <= lens_radius_um**2).astype(float))
    sig = psf_fwhm_um / (2 * np.sqrt(2 * np.log(2)))
    qx, qy = lens_centers[qd_lens]
    qd = np.exp(-((xx - qx) ** 2 + (yy - qy) ** 2) / (2 * sig**2))

    def line(center, width):
        return np.exp(-((lam - center) ** 2) / (2 * width**2))

    spec = (
        (1 - lens)[..., None] * line(635.0, 1.0)
        + lens[..., None] * line(740.0, 5.0)
        + qd[..., None] * line(780.0, 0.5)
    ) * peak_counts
    counts = spec if seed is None else np.random.default_rng(seed).poisson(spec)
    return HyperspectralCube(x, y, lam, np.asarray(counts, dtype=np.uint32))
