"""Synthetic FTIR-like scenes with known clean signal, plume mask and target.

Randomness comes from numpy's PCG64 seeded through ``SeedSequence``.  Each
stream is addressed by a ``spawn_key``: ``(0,)`` for the background grid and
``(1, x, y)`` for the noise of 0-based pixel ``(x, y)``, so the noise at a
pixel never depends on image size, generation order or worker count.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .cube import HyperCube, PixelMask, WavenumberAxis, band_index_nearest

__all__ = [
    "SceneSpec",
    "SceneBundle",
    "default_scene_spec",
    "generate_scene",
    "add_noise",
    "mse",
    "gaussian_peak",
    "peak_band",
    "plume_contrast",
]

_BACKGROUND_STREAM = 0
_NOISE_STREAM = 1
_GRID = 4  # coarse grid of background coefficients, bilinearly upsampled


@dataclass(frozen=True)
class SceneSpec:
    height: int = 128
    width: int = 128
    bands: int = 128
    axis_start: float = 900.0
    axis_step: float = 360.0 / 127.0
    background_order: int = 3
    background_scale: float = 1.0
    plume_center: tuple[float, float] | None = None  # 1-based pixel; None = image center
    plume_radius: float = 24.0
    peak_center: float = 950.0
    peak_fwhm: float = 12.0
    peak_amplitude: float = 1.6
    noise_sigma: float = math.sqrt(0.9)
    seed: int = 0

    def __post_init__(self):
        if min(self.height, self.width, self.bands) < 1:
            raise ValueError("scene dimensions must be >= 1")
        if self.background_order < 0:
            raise ValueError("background_order must be >= 0")
        if self.plume_radius < 1:
            raise ValueError("plume_radius must be >= 1")
        if not self.peak_fwhm > 0:
            raise ValueError("peak_fwhm must be > 0")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be >= 0")

    @property
    def axis(self) -> WavenumberAxis:
        return WavenumberAxis(self.axis_start, self.axis_step, self.bands)

    @property
    def center(self) -> tuple[float, float]:
        if self.plume_center is not None:
            return tuple(self.plume_center)
        return ((self.height + 1) / 2.0, (self.width + 1) / 2.0)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SceneSpec":
        fields = json.loads(text)
        if fields.get("plume_center") is not None:
            fields["plume_center"] = tuple(fields["plume_center"])
        return cls(**fields)


def default_scene_spec(size: int = 128, **overrides) -> SceneSpec:
    """Scene geometry of the reference experiment scaled to ``size`` pixels/bands.

    The axis always spans 900-1260 cm^-1 and the plume radius scales with
    the image.
    """
    spec = SceneSpec(
        height=size,
        width=size,
        bands=size,
        axis_step=360.0 / (size - 1),
        plume_radius=24.0 * size / 128.0,
    )
    return replace(spec, **overrides)


@dataclass(frozen=True)
class SceneBundle:
    clean: HyperCube
    noisy: HyperCube
    mask: PixelMask
    target: np.ndarray
    spec: SceneSpec


def gaussian_peak(wavenumbers: np.ndarray, center: float, fwhm: float) -> np.ndarray:
    s = fwhm / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    return np.exp(-0.5 * ((wavenumbers - center) / s) ** 2)


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _bilinear(grid: np.ndarray, h: int, w: int) -> np.ndarray:
    """Upsample a (g, g, c) grid to (h, w, c) by bilinear interpolation."""
    g = grid.shape[0]
    gx = np.linspace(0, g - 1, h)
    gy = np.linspace(0, g - 1, w)
    x0 = np.minimum(np.floor(gx).astype(int), g - 2)
    y0 = np.minimum(np.floor(gy).astype(int), g - 2)
    fx = (gx - x0)[:, None, None]
    fy = (gy - y0)[None, :, None]
    a = grid[x0][:, y0]
    b = grid[x0 + 1][:, y0]
    c = grid[x0][:, y0 + 1]
    d = grid[x0 + 1][:, y0 + 1]
    return (1 - fx) * (1 - fy) * a + fx * (1 - fy) * b + (1 - fx) * fy * c + fx * fy * d


def _background(spec: SceneSpec) -> np.ndarray:
    rng = _rng(spec.seed, _BACKGROUND_STREAM)
    order = spec.background_order
    # offset plus slowly decaying higher-order terms, in units of background_scale
    scales = np.array([4.0] + [1.0 / j for j in range(1, order + 1)])
    grid = rng.standard_normal((_GRID, _GRID, order + 1)) * scales
    grid[..., 0] += 10.0
    coef = _bilinear(grid, spec.height, spec.width)
    u = np.linspace(-1.0, 1.0, spec.bands)
    basis = np.vander(u, order + 1, increasing=True)  # (N, order+1)
    return spec.background_scale * (coef @ basis.T)


def _plume_falloff(spec: SceneSpec) -> np.ndarray:
    cx, cy = spec.center
    x = np.arange(1, spec.height + 1)[:, None]
    y = np.arange(1, spec.width + 1)[None, :]
    r = np.hypot(x - cx, y - cy) / spec.plume_radius
    return np.where(r < 1.0, 0.5 * (1.0 + np.cos(np.pi * np.minimum(r, 1.0))), 0.0)


def generate_scene(spec: SceneSpec) -> SceneBundle:
    """Build clean and noisy cubes, the plume mask (falloff > 0.5) and the unit-norm target."""
    falloff = _plume_falloff(spec)
    if not np.any(falloff > 0):
        raise ValueError("plume disk lies entirely outside the image")
    axis = spec.axis
    shape = gaussian_peak(axis.values, spec.peak_center, spec.peak_fwhm)
    clean = _background(spec)
    inside = falloff > 0
    clean[inside] += (spec.peak_amplitude * falloff[inside])[:, None] * shape
    clean_cube = HyperCube(clean, axis)
    noisy = add_noise(clean_cube, spec.noise_sigma, spec.seed)
    target = shape / np.linalg.norm(shape)
    return SceneBundle(clean_cube, noisy, PixelMask(falloff > 0.5), target, spec)


def add_noise(cube: HyperCube, sigma: float, seed: int) -> HyperCube:
    """Add i.i.d. N(0, sigma^2) noise, one RNG substream per pixel."""
    if not sigma >= 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return cube
    h, w, n = cube.shape
    noise = np.empty((h, w, n))
    for x in range(h):
        for y in range(w):
            noise[x, y] = _rng(seed, _NOISE_STREAM, x, y).standard_normal(n)
    return cube.with_data(cube.data + sigma * noise)


def mse(a: HyperCube, b: HyperCube) -> float:
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean((a.data - b.data) ** 2))


def peak_band(spec: SceneSpec) -> int:
    return band_index_nearest(spec.axis, spec.peak_center)


def plume_contrast(cube: HyperCube, spec: SceneSpec, mask: PixelMask) -> np.ndarray:
    """Mean spectrum of ``mask`` pixels minus the mean over the ring R <= r < 1.5 R.

    The ring sits just outside the plume disk, so the smooth background
    largely cancels and the plume's spectral feature remains.
    """
    cx, cy = spec.center
    x = np.arange(1, spec.height + 1)[:, None]
    y = np.arange(1, spec.width + 1)[None, :]
    r = np.hypot(x - cx, y - cy)
    ring = (r >= spec.plume_radius) & (r < 1.5 * spec.plume_radius)
    if not ring.any() or not mask.flags.any():
        raise ValueError("plume or surrounding ring has no pixels")
    return cube.data[mask.flags].mean(axis=0) - cube.data[ring].mean(axis=0)
