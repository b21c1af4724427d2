"""Reference denoisers: per-band spatial Gaussian filter and MNF truncation."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .cube import HyperCube, _check_k, mirror_pad, window_stack
from .mmse import ROW_CHUNK, gaussian_weight_kernel

__all__ = [
    "GaussianFilterConfig",
    "MnfConfig",
    "denoise_gaussian",
    "estimate_noise_cov",
    "mnf_transform",
    "denoise_mnf",
]


@dataclass(frozen=True)
class GaussianFilterConfig:
    k: int = 3
    spatial_std: float = 1.0

    def __post_init__(self):
        if self.k < 3 or self.k % 2 == 0:
            raise ValueError(f"k must be an odd integer >= 3, got {self.k}")
        if not self.spatial_std > 0:
            raise ValueError(f"spatial_std must be > 0, got {self.spatial_std}")


@dataclass(frozen=True)
class MnfConfig:
    """MNF truncation settings.

    ``mode="windowed"`` runs MNF inside every pixel's k x k window (the
    k-dependent variant whose cost the FLOP model counts) and keeps the
    center row; ``mode="global"`` uses one covariance pair for the image.
    Components are kept when their noise-normalized eigenvalue exceeds
    ``snr_min``, unless ``retained`` fixes the count.
    """

    k: int = 3
    retained: int | None = None
    snr_min: float = 2.0
    mode: str = "windowed"

    def __post_init__(self):
        if self.k < 3 or self.k % 2 == 0:
            raise ValueError(f"k must be an odd integer >= 3, got {self.k}")
        if self.retained is not None and self.retained < 1:
            raise ValueError(f"retained must be >= 1, got {self.retained}")
        if self.mode not in ("windowed", "global"):
            raise ValueError(f"unknown MNF mode {self.mode!r}")


def denoise_gaussian(cube: HyperCube, config: GaussianFilterConfig = GaussianFilterConfig()) -> HyperCube:
    """Convolve every band with the normalized k x k Gaussian, mirror padding.

    Accumulated as ``z + sum_o w_o (shift_o(z) - z)`` so spatially constant
    input comes back bit-identical.
    """
    k = config.k
    r = k // 2
    w = gaussian_weight_kernel(k, config.spatial_std).omega.reshape(k, k)
    data = cube.data
    h, wd, _ = data.shape
    padded = mirror_pad(data, r)
    acc = np.zeros_like(data)
    for dx in range(k):
        for dy in range(k):
            if dx == r and dy == r:
                continue
            acc += w[dx, dy] * (padded[dx : dx + h, dy : dy + wd] - data)
    return cube.with_data(data + acc)


def estimate_noise_cov(cube: HyperCube) -> np.ndarray:
    """Half the sample covariance of horizontal neighbor differences z(x,y) - z(x,y+1)."""
    if cube.width < 2:
        raise ValueError("need width >= 2 to form horizontal differences")
    d = (cube.data[:, :-1] - cube.data[:, 1:]).reshape(-1, cube.bands)
    d = d - d.mean(axis=0)
    return 0.5 * (d.T @ d) / max(d.shape[0] - 1, 1)


def _ridge(cov: np.ndarray, scale: float) -> float:
    tr = np.trace(cov)
    return scale * tr / cov.shape[0] if tr > 0 else np.finfo(float).eps


def mnf_transform(cube: HyperCube):
    """Global MNF: returns (mean, eigenvalues descending, eigenvectors as columns).

    The eigenvectors solve ``data_cov e = lam noise_cov e`` and are
    noise-orthonormal (``E^T noise_cov E = I``).
    """
    x = cube.data.reshape(-1, cube.bands)
    mean = x.mean(axis=0)
    xc = x - mean
    data_cov = xc.T @ xc / max(x.shape[0] - 1, 1)
    noise_cov = estimate_noise_cov(cube)
    noise_cov = noise_cov + _ridge(noise_cov, 1e-8) * np.eye(cube.bands)
    if not (np.all(np.isfinite(data_cov)) and np.all(np.isfinite(noise_cov))):
        raise ValueError("non-finite covariance in MNF")
    lam, vecs = scipy.linalg.eigh(data_cov, noise_cov)
    return mean, lam[::-1], vecs[:, ::-1]


def _mnf_global(cube: HyperCube, config: MnfConfig) -> HyperCube:
    mean, lam, vecs = mnf_transform(cube)
    n = cube.bands
    if config.retained is not None:
        keep = np.arange(n) < config.retained
    else:
        keep = lam > config.snr_min
    x = cube.data.reshape(-1, n) - mean
    noise_cov = estimate_noise_cov(cube)
    noise_cov = noise_cov + _ridge(noise_cov, 1e-8) * np.eye(n)
    # E^{-1} = E^T noise_cov for noise-orthonormal E
    back = vecs[:, keep].T @ noise_cov
    out = mean + (x @ vecs[:, keep]) @ back
    return cube.with_data(out.reshape(cube.shape))


def _mnf_rows(data, padded, rows, k, noise_trace, retained, snr_min, out):
    z = window_stack(data, k, rows, padded)
    h, w, k2, n = z.shape
    mean = z.mean(axis=2)
    zc = (z - mean[:, :, None, :]).reshape(h * w, k2, n)
    gram = zc @ zc.swapaxes(-1, -2)
    lam, u = np.linalg.eigh(gram)  # ascending
    # for independent pixels E[Vc Vc^T] = tr(noise_cov) (I - 11^T/k2)
    if retained is not None:
        keep = np.arange(k2)[::-1] < retained
        keep = np.broadcast_to(keep, lam.shape) & (lam > 0)
    else:
        keep = lam > snr_min * noise_trace
    c = (k2 - 1) // 2
    row_w = np.einsum("pj,pij->pi", u[:, c, :] * keep, u)
    out[rows] = mean + (row_w[:, None, :] @ zc)[:, 0, :].reshape(h, w, n)


def _mnf_windowed(cube: HyperCube, config: MnfConfig, workers: int) -> HyperCube:
    _check_k(config.k, cube.bands)
    noise_trace = float(np.trace(estimate_noise_cov(cube)))
    data = cube.data
    padded = mirror_pad(data, config.k // 2)
    out = np.empty(data.shape)
    blocks = [slice(i, min(i + ROW_CHUNK, cube.height)) for i in range(0, cube.height, ROW_CHUNK)]
    args = (config.k, noise_trace, config.retained, config.snr_min, out)
    if workers <= 1:
        for rows in blocks:
            _mnf_rows(data, padded, rows, *args)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(lambda rows: _mnf_rows(data, padded, rows, *args), blocks))
    return cube.with_data(out)


def denoise_mnf(cube: HyperCube, config: MnfConfig = MnfConfig(), workers: int = 1) -> HyperCube:
    """Project onto MNF components, zero the noise-dominated ones, back-project.

    In windowed mode the eigenproblem of each window is solved in the
    k^2-dimensional sample space. With spatially independent noise of
    covariance ``Sn`` the centered window's noise Gram matrix has expectation
    ``tr(Sn) (I - 11^T / k^2)``, so a component's noise-normalized eigenvalue
    is its Gram eigenvalue over ``tr(Sn)``; ``Sn`` comes from
    :func:`estimate_noise_cov`.
    """
    if cube.bands < 2:
        raise ValueError("MNF needs at least 2 bands")
    if config.retained is not None and config.retained > cube.bands:
        raise ValueError(f"retained={config.retained} exceeds N={cube.bands}")
    if config.mode == "global":
        return _mnf_global(cube, config)
    return _mnf_windowed(cube, config, workers)
