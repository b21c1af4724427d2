"""Windowed MMSE noise reduction for hyperspectral cubes.

Every pixel's k x k neighborhood is treated as k^2 samples of that pixel's
spectrum. With the centered sample matrix ``Zc`` (k^2 x N), the estimate of
the window's signal is

    S = mean + Zc @ pinv(C) @ (C - sigma^2 I_N),          C = Zc.T Zc / (k^2 - 1)

which is algebraically the same as the k^2-dimensional form

    S = mean + (G - sigma^2 I) @ pinv(G) @ Zc,            G = Zc Zc.T / (k^2 - 1)

and as singular-value shrinkage ``d -> d - (k^2 - 1) sigma^2 / d`` of ``Zc``.
The denoised pixel is a spatially weighted sum of the rows of ``S``.

Singular directions are "retained" when their covariance eigenvalue exceeds
``rcond`` times the largest one and also the rounding floor of centering
(see :func:`rounding_floor`); the same rule is used by every form so the
three agree to rounding error.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cube import HyperCube, WindowSample, _check_k, mirror_pad, window_stack

__all__ = [
    "MmseConfig",
    "WeightKernel",
    "WindowStats",
    "SvdFactors",
    "sample_mean",
    "centered",
    "sample_cov",
    "dual_cov",
    "window_stats",
    "svd_factors",
    "pseudo_inverse",
    "rounding_floor",
    "shrink_singular_values",
    "mmse_window_direct",
    "mmse_window_dual",
    "mmse_window_svd",
    "mmse_window_fast",
    "gaussian_weight_kernel",
    "identity_kernel",
    "denoise_mmse",
    "estimate_sigma",
]

DEFAULT_SIGMA = math.sqrt(0.9)
# image rows per work item; fixed so results never depend on worker count
ROW_CHUNK = 8


@dataclass(frozen=True)
class MmseConfig:
    """Parameters of the windowed MMSE denoiser.

    ``kernel`` selects the spatial weight: ``"gaussian"`` (normalized Gaussian
    of ``weight_std`` pixels) or ``"identity"`` (one-hot at the center).
    """

    k: int = 3
    sigma: float = DEFAULT_SIGMA
    weight_std: float = 1.0
    rcond: float = 1e-10
    clamp_negative: bool = False
    kernel: str = "gaussian"

    def __post_init__(self):
        if self.k < 3 or self.k % 2 == 0:
            raise ValueError(f"k must be an odd integer >= 3, got {self.k}")
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if not 0 < self.rcond < 1:
            raise ValueError(f"rcond must lie in (0, 1), got {self.rcond}")
        if self.kernel not in ("gaussian", "identity"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.kernel == "gaussian" and not self.weight_std > 0:
            raise ValueError(f"weight_std must be > 0, got {self.weight_std}")

    def weights(self) -> "WeightKernel":
        if self.kernel == "identity":
            return identity_kernel(self.k)
        return gaussian_weight_kernel(self.k, self.weight_std)


@dataclass(frozen=True)
class WeightKernel:
    """Row weights ``omega_c`` (length k^2) applied to a window's denoised rows."""

    k: int
    omega: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class WindowStats:
    mean: np.ndarray
    centered: np.ndarray
    cov: np.ndarray
    dual_cov: np.ndarray


@dataclass(frozen=True)
class SvdFactors:
    """Thin SVD ``Zc = u @ diag(singular_values) @ vt`` of a centered window."""

    u: np.ndarray
    singular_values: np.ndarray
    vt: np.ndarray


def _matrix(window) -> np.ndarray:
    m = window.matrix if isinstance(window, WindowSample) else window
    return np.asarray(m, dtype=np.float64)


def sample_mean(window) -> np.ndarray:
    return _matrix(window).mean(axis=0)


def centered(window) -> np.ndarray:
    z = _matrix(window)
    return z - z.mean(axis=0)


def sample_cov(window) -> np.ndarray:
    """N x N sample covariance with the unbiased ``1/(k^2 - 1)`` normalization."""
    zc = centered(window)
    return zc.T @ zc / (zc.shape[0] - 1)


def dual_cov(window) -> np.ndarray:
    """k^2 x k^2 Gram form ``Zc Zc^T / (k^2 - 1)``; shares the nonzero spectrum of :func:`sample_cov`."""
    zc = centered(window)
    return zc @ zc.T / (zc.shape[0] - 1)


def window_stats(window) -> WindowStats:
    zc = centered(window)
    m = zc.shape[0] - 1
    return WindowStats(_matrix(window).mean(axis=0), zc, zc.T @ zc / m, zc @ zc.T / m)


def svd_factors(window) -> SvdFactors:
    u, s, vt = np.linalg.svd(centered(window), full_matrices=False)
    return SvdFactors(u, s, vt)


def _check_symmetric(m: np.ndarray, tol: float = 1e-10) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    scale = max(np.abs(m).max(), np.finfo(float).tiny)
    if np.abs(m - m.T).max() > tol * scale:
        raise ValueError("pseudo_inverse expects a symmetric matrix")


def pseudo_inverse(m: np.ndarray, rcond: float = 1e-10, atol: float = 0.0) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric matrix.

    Singular values at or below ``max(rcond * max(singular value), atol)``
    are treated as zero.
    """
    m = np.asarray(m, dtype=np.float64)
    _check_symmetric(m)
    u, s, vt = np.linalg.svd(m)
    keep = _retained(s, rcond, atol)
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    return (vt.T * inv) @ u.T


def _retained(eigs: np.ndarray, rcond: float, atol=0.0) -> np.ndarray:
    top = eigs.max(axis=-1, keepdims=True) if eigs.size else 0.0
    atol = np.asarray(atol)[..., None] if np.ndim(atol) else atol
    return (eigs > rcond * top) & (eigs > atol) & (eigs > 0)


def rounding_floor(scale, n_samples: int, n_bands: int):
    """Covariance eigenvalue below which a direction is centering round-off.

    Subtracting a mean computed in floating point leaves residues of order
    ``n_samples * eps * scale`` per element, ``scale`` being the largest
    magnitude in the window. A (nearly) constant window would otherwise keep
    those directions and divide by them.
    """
    resid = n_samples * np.finfo(float).eps * np.asarray(scale, dtype=np.float64)
    return n_bands * resid**2 / (n_samples - 1)


def _window_floor(z: np.ndarray):
    return rounding_floor(np.abs(z).max(axis=(-2, -1)), z.shape[-2], z.shape[-1])


def shrink_singular_values(
    d: np.ndarray,
    sigma: float,
    n_samples: int,
    rcond: float = 1e-10,
    clamp: bool = False,
    atol: float = 0.0,
) -> np.ndarray:
    """Apply ``d -> d - (n_samples - 1) sigma^2 / d`` to the retained singular values.

    Retention compares covariance eigenvalues ``d^2 / (n_samples - 1)`` with
    ``rcond`` times the largest and with ``atol``; discarded values map to 0.
    With ``clamp`` negative results are set to 0.
    """
    d = np.asarray(d, dtype=np.float64)
    keep = _retained(d * d / (n_samples - 1), rcond, atol)
    out = np.zeros_like(d)
    out[keep] = d[keep] - (n_samples - 1) * sigma**2 / d[keep]
    if clamp:
        np.maximum(out, 0.0, out=out)
    return out


def mmse_window_direct(window, sigma: float, rcond: float = 1e-10) -> np.ndarray:
    """MMSE estimate of all k^2 window rows, computed with N x N matrices."""
    z = _matrix(window)
    mean = z.mean(axis=0)
    zc = z - mean
    cov = zc.T @ zc / (z.shape[0] - 1)
    gain = pseudo_inverse(cov, rcond, _window_floor(z)) @ (cov - sigma**2 * np.eye(cov.shape[0]))
    return mean + zc @ gain


def mmse_window_dual(window, sigma: float, rcond: float = 1e-10) -> np.ndarray:
    """Same estimate through the k^2 x k^2 dual covariance."""
    z = _matrix(window)
    mean = z.mean(axis=0)
    zc = z - mean
    g = zc @ zc.T / (z.shape[0] - 1)
    gain = (g - sigma**2 * np.eye(g.shape[0])) @ pseudo_inverse(g, rcond, _window_floor(z))
    return mean + gain @ zc


def mmse_window_svd(
    window, sigma: float, rcond: float = 1e-10, clamp: bool = False
) -> np.ndarray:
    """Same estimate as singular-value shrinkage of the centered window."""
    z = _matrix(window)
    mean = z.mean(axis=0)
    u, d, vt = np.linalg.svd(z - mean, full_matrices=False)
    shrunk = shrink_singular_values(d, sigma, z.shape[0], rcond, clamp, _window_floor(z))
    return mean + (u * shrunk) @ vt


mmse_window_fast = mmse_window_svd


def gaussian_weight_kernel(k: int, weight_std: float = 1.0) -> WeightKernel:
    """Normalized isotropic Gaussian over the k x k window, flattened row-major."""
    if k < 1 or k % 2 == 0:
        raise ValueError(f"k must be a positive odd integer, got {k}")
    if not weight_std > 0:
        raise ValueError(f"weight_std must be > 0, got {weight_std}")
    off = np.arange(k) - k // 2
    r2 = off[:, None] ** 2 + off[None, :] ** 2
    w = np.exp(-r2 / (2.0 * weight_std**2)).ravel()
    return WeightKernel(k, w / w.sum())


def identity_kernel(k: int) -> WeightKernel:
    w = np.zeros(k * k)
    w[(k * k - 1) // 2] = 1.0
    return WeightKernel(k, w)


def _row_weights_eigh(gram, omega, sigma, rcond, clamp, floor):
    lam, u = np.linalg.eigh(gram)
    keep = _retained(lam, rcond, floor)
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = np.where(keep, 1.0 - sigma**2 / lam, 0.0)
    if clamp:
        np.maximum(gain, 0.0, out=gain)
    # omega @ U diag(gain) U^T
    coef = (omega @ u) * gain
    return np.einsum("pj,pij->pi", coef, u)


def _row_weights_inverse(gram, omega, sigma, rcond, clamp, floor):
    """Weights via a plain inverse; None if any window needs the eigen route.

    Centered rows make the ones vector a null vector of ``gram``. When that is
    the only null direction, ``pinv(gram) = inv(gram + J) - J`` with
    ``J = 11^T / k^2``. A Cholesky factorization of ``gram + J - tau (I - J)``
    certifies every nonzero eigenvalue exceeds ``tau``: with
    ``tau >= rcond * trace`` and ``tau >= floor`` nothing would be cut, and with
    ``tau >= sigma^2`` no gain is negative, so clamping is a no-op.
    """
    p, k2, _ = gram.shape
    if p == 0:
        return np.empty((0, k2))
    jmat = np.full((k2, k2), 1.0 / k2)
    eye = np.eye(k2)
    tau = np.maximum(rcond * np.trace(gram, axis1=1, axis2=2), floor)
    if clamp:
        tau = np.maximum(tau, sigma**2)
    try:
        np.linalg.cholesky(gram + jmat - tau[:, None, None] * (eye - jmat))
    except np.linalg.LinAlgError:
        return None
    rhs = np.broadcast_to(omega, (p, k2))[..., None]
    x = np.linalg.solve(gram + jmat, rhs)[..., 0]
    return omega - sigma**2 * (x - omega.sum() / k2)


def _denoise_rows(data, padded, peak, rows, k, sigma, rcond, clamp, omega, solver, out):
    z = window_stack(data, k, rows, padded)  # (h, W, k2, N)
    h, w, k2, n = z.shape
    mean = z.mean(axis=2)
    zc = (z - mean[:, :, None, :]).reshape(h * w, k2, n)
    gram = zc @ zc.swapaxes(-1, -2) / (k2 - 1)
    # largest magnitude in each window, from the padded per-pixel maxima
    scale = np.lib.stride_tricks.sliding_window_view(peak[rows.start : rows.stop + k - 1], (k, k))
    floor = rounding_floor(scale.max(axis=(-2, -1)).ravel(), k2, n)
    if solver == "inverse":
        # mirrored border windows repeat rows, so only interior windows can
        # have the full rank the inverse route needs
        r = k // 2
        xs = np.arange(rows.start, rows.stop)
        interior = ((xs >= r) & (xs < data.shape[0] - r))[:, None] & (
            (np.arange(w) >= r) & (np.arange(w) < w - r)
        )[None, :]
        interior = interior.ravel()
        row_w = np.empty((h * w, k2))
        inner = _row_weights_inverse(gram[interior], omega, sigma, rcond, clamp, floor[interior])
        if inner is None:
            inner = _row_weights_eigh(gram[interior], omega, sigma, rcond, clamp, floor[interior])
        row_w[interior] = inner
        if not interior.all():
            border = ~interior
            row_w[border] = _row_weights_eigh(gram[border], omega, sigma, rcond, clamp, floor[border])
    else:
        row_w = _row_weights_eigh(gram, omega, sigma, rcond, clamp, floor)
    shrunk = (row_w[:, None, :] @ zc)[:, 0, :]
    out[rows] = mean + shrunk.reshape(h, w, n)


def denoise_mmse(
    cube: HyperCube,
    config: MmseConfig = MmseConfig(),
    workers: int = 1,
    solver: str = "inverse",
) -> HyperCube:
    """Denoise every pixel with the weighted windowed MMSE estimate.

    Parameters
    ----------
    cube : HyperCube
        Noisy input; requires ``config.k ** 2 < cube.bands``.
    config : MmseConfig
        Window size, noise level, spatial weights and pseudo-inverse cutoff.
    workers : int
        Number of threads. Work is split into fixed blocks of image rows and
        ``workers`` only changes how many run at once, so the output is
        bitwise independent of it.
    solver : {"inverse", "eigh"}
        ``"inverse"`` solves one k^2 x k^2 linear system per window and falls
        back to the eigendecomposition only for blocks containing
        rank-deficient (or clamp-affected) windows; ``"eigh"`` always uses
        the eigendecomposition. Both give the same estimate up to rounding.

    Returns
    -------
    HyperCube
        Denoised cube with the same shape and axis.
    """
    if solver not in ("inverse", "eigh"):
        raise ValueError(f"unknown solver {solver!r}")
    _check_k(config.k, cube.bands)
    omega = config.weights().omega
    data = cube.data
    padded = mirror_pad(data, config.k // 2)
    peak = np.abs(padded).max(axis=2)
    out = np.empty(data.shape)
    blocks = [slice(i, min(i + ROW_CHUNK, cube.height)) for i in range(0, cube.height, ROW_CHUNK)]
    args = (config.k, config.sigma, config.rcond, config.clamp_negative, omega, solver, out)
    if workers <= 1:
        for rows in blocks:
            _denoise_rows(data, padded, peak, rows, *args)
    else:
        with ThreadPoolExecutor(workers) as pool:
            list(pool.map(lambda rows: _denoise_rows(data, padded, peak, rows, *args), blocks))
    return cube.with_data(out)


def estimate_sigma(cube: HyperCube) -> float:
    """Robust per-element noise std from band-to-band first differences.

    Differencing removes the smooth spectral signal; the median absolute
    deviation of the differences, scaled by ``1 / (0.6745 * sqrt(2))``, then
    estimates the white-noise standard deviation.
    """
    if cube.bands < 2:
        raise ValueError("need at least 2 bands to estimate sigma")
    d = np.diff(cube.data, axis=2).ravel()
    mad = np.median(np.abs(d - np.median(d)))
    return float(mad / (0.6745 * math.sqrt(2.0)))
