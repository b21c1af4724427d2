"""Adaptive subspace detection (ASD) and ROC scoring.

The detector is the single-target GLRT: the squared cosine between the
background-centered pixel and the target after whitening by the background
covariance. Scores lie in [0, 1] and are invariant to scaling of either vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from threadpoolctl import threadpool_limits

from .cube import HyperCube, PixelMask

__all__ = [
    "BackgroundStats",
    "DetectionMap",
    "RocCurve",
    "background_stats",
    "asd_score",
    "detect_asd",
    "roc",
]

RIDGE_SCALE = 1e-6


@dataclass(frozen=True)
class BackgroundStats:
    mean: np.ndarray
    cov: np.ndarray
    ridge: float
    chol: np.ndarray = field(repr=False)  # lower Cholesky factor of cov + ridge*I


@dataclass(frozen=True)
class DetectionMap:
    scores: np.ndarray
    ridge: float = 0.0

    @property
    def height(self) -> int:
        return self.scores.shape[0]

    @property
    def width(self) -> int:
        return self.scores.shape[1]


@dataclass(frozen=True)
class RocCurve:
    """Points are (pfa, pd) pairs from threshold +inf down to the lowest score."""

    pfa: np.ndarray
    pd: np.ndarray
    thresholds: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.pfa.tolist(), self.pd.tolist()))


def background_stats(cube: HyperCube, exclude: PixelMask | None = None) -> BackgroundStats:
    """Mean and covariance over pixels not in ``exclude``, plus a ridge.

    The ridge is ``1e-6 * trace(cov) / N`` (or machine epsilon for a zero
    covariance) so ``cov + ridge * I`` is always positive definite.
    """
    x = cube.data.reshape(-1, cube.bands)
    if exclude is not None:
        if exclude.flags.shape != cube.shape[:2]:
            raise ValueError("exclude mask does not match cube dimensions")
        x = x[~exclude.flags.ravel()]
    n = cube.bands
    if x.shape[0] < n + 1:
        raise ValueError(f"need at least N+1={n + 1} background pixels, got {x.shape[0]}")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (x.shape[0] - 1)
    cov = 0.5 * (cov + cov.T)
    tr = float(np.trace(cov))
    ridge = RIDGE_SCALE * tr / n if tr > 0 else float(np.finfo(float).eps)
    chol = np.linalg.cholesky(cov + ridge * np.eye(n))
    return BackgroundStats(mean, cov, ridge, chol)


def _whiten(bg: BackgroundStats, v: np.ndarray) -> np.ndarray:
    # v: (..., N) -> L^{-1} v along the last axis
    flat = v.reshape(-1, v.shape[-1]).T
    # scipy's bundled OpenBLAS can crash in multi-threaded trsm with many
    # right-hand sides; the solve is cheap, so run it single-threaded
    with threadpool_limits(limits=1, user_api="blas"):
        w = scipy.linalg.solve_triangular(bg.chol, flat, lower=True)
    return w.T.reshape(v.shape)


def _scores(centered: np.ndarray, target_w: np.ndarray, bg: BackgroundStats) -> np.ndarray:
    zw = _whiten(bg, centered)
    num = (zw @ target_w) ** 2
    den = (target_w @ target_w) * np.einsum("...i,...i->...", zw, zw)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(den > 0, num / den, 0.0)
    return np.clip(s, 0.0, 1.0)


def asd_score(z: np.ndarray, bg: BackgroundStats, target: np.ndarray) -> float:
    target = np.asarray(target, dtype=np.float64)
    if not np.any(target):
        raise ValueError("target spectrum must be nonzero")
    tw = _whiten(bg, target)
    return float(_scores(np.asarray(z, dtype=np.float64) - bg.mean, tw, bg))


def detect_asd(
    cube: HyperCube, target: np.ndarray, exclude_for_stats: PixelMask | None = None
) -> DetectionMap:
    target = np.asarray(target, dtype=np.float64)
    if target.shape != (cube.bands,):
        raise ValueError(f"target has {target.size} values, cube has {cube.bands} bands")
    if not np.any(target):
        raise ValueError("target spectrum must be nonzero")
    bg = background_stats(cube, exclude_for_stats)
    tw = _whiten(bg, target)
    scores = _scores(cube.data - bg.mean, tw, bg)
    return DetectionMap(scores, bg.ridge)


def roc(det: DetectionMap, truth: PixelMask) -> RocCurve:
    """ROC by sweeping every distinct score from high to low.

    Tied scores form a single step, so the curve does not depend on how ties
    are ordered. The area is the trapezoid integral of the points.
    """
    scores = np.asarray(det.scores, dtype=np.float64).ravel()
    labels = truth.flags.ravel()
    if labels.shape != scores.shape:
        raise ValueError("truth mask does not match detection map")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("truth mask needs at least one positive and one negative pixel")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    lab = labels[order]
    tp = np.cumsum(lab)
    fp = np.cumsum(~lab)
    last = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]  # last index of each tie group
    pd = np.r_[0.0, tp[last] / n_pos]
    pfa = np.r_[0.0, fp[last] / n_neg]
    thr = np.r_[np.inf, s[last]]
    return RocCurve(pfa, pd, thr, float(np.trapezoid(pd, pfa)))
