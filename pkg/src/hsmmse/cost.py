"""Closed-form FLOP model of the three denoisers and a wall-time benchmark.

Leading-order FLOP counts for an H x W x N cube and k x k windows:

    mmse      H W (4 k^4 N + 6 k^6)
    gaussian  H W 2 k^2 N
    mnf       H W (4 k^4 N + 17 k^6)

Lower-order terms are not modeled, so measured counts of a concrete
implementation come out higher. The gap between MMSE and MNF is the cost of
a k^2 x k^2 eigendecomposition (about 9 n^3 for n x n) versus an inversion
(about 2 n^3).
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

from threadpoolctl import threadpool_limits

from .baselines import GaussianFilterConfig, MnfConfig, denoise_gaussian, denoise_mnf
from .cube import HyperCube
from .mmse import MmseConfig, denoise_mmse

__all__ = [
    "ALGORITHMS",
    "FlopModel",
    "BenchRecord",
    "model_flops",
    "default_params",
    "run_denoiser",
    "run_benchmark",
    "bench_report",
]

ALGORITHMS = ("mmse", "gaussian", "mnf")


@dataclass(frozen=True)
class FlopModel:
    algorithm: str
    h: int
    w: int
    n: int
    k: int

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if min(self.h, self.w, self.n, self.k) < 1:
            raise ValueError("all dimensions must be >= 1")
        if self.k % 2 == 0:
            raise ValueError(f"k must be odd, got {self.k}")
        if self.k * self.k >= self.n:
            raise ValueError(f"need k^2 < n, got k={self.k}, n={self.n}")


def model_flops(m: FlopModel) -> int:
    k2 = m.k * m.k
    if m.algorithm == "mmse":
        per_pixel = 4 * k2 * k2 * m.n + 6 * k2**3
    elif m.algorithm == "gaussian":
        per_pixel = 2 * k2 * m.n
    else:
        per_pixel = 4 * k2 * k2 * m.n + 17 * k2**3
    return m.h * m.w * per_pixel


@dataclass(frozen=True)
class BenchRecord:
    algorithm: str
    wall_time: float
    model_flops: int
    cube_shape: tuple[int, int, int]
    k: int
    repetitions: int
    threads: int = 1


def default_params(algorithm: str, k: int = 3, sigma: float | None = None):
    if algorithm == "mmse":
        extra = {} if sigma is None else {"sigma": sigma}
        return MmseConfig(k=k, clamp_negative=True, **extra)
    if algorithm == "gaussian":
        return GaussianFilterConfig(k=k)
    if algorithm == "mnf":
        return MnfConfig(k=k)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def run_denoiser(algorithm: str, cube: HyperCube, params=None, workers: int = 1) -> HyperCube:
    if params is None:
        params = default_params(algorithm)
    if algorithm == "mmse":
        return denoise_mmse(cube, params, workers=workers)
    if algorithm == "gaussian":
        return denoise_gaussian(cube, params)
    if algorithm == "mnf":
        return denoise_mnf(cube, params, workers=workers)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def run_benchmark(
    algorithm: str, cube: HyperCube, params=None, repetitions: int = 5, threads: int = 1
) -> BenchRecord:
    """Median wall time of ``repetitions`` runs, with BLAS and workers pinned to ``threads``."""
    if repetitions < 3:
        raise ValueError(f"need at least 3 repetitions, got {repetitions}")
    if params is None:
        params = default_params(algorithm)
    times = []
    with threadpool_limits(limits=threads):
        for _ in range(repetitions):
            t0 = time.perf_counter()
            run_denoiser(algorithm, cube, params, workers=threads)
            times.append(time.perf_counter() - t0)
    h, w, n = cube.shape
    flops = model_flops(FlopModel(algorithm, h, w, n, params.k))
    return BenchRecord(algorithm, statistics.median(times), flops, (h, w, n), params.k, repetitions, threads)


def bench_report(records: list[BenchRecord], fmt: str = "csv") -> str:
    """Table of algorithm, median seconds and model GFLOP, sorted by model FLOPs."""
    if not records:
        raise ValueError("no benchmark records")
    rows = sorted(records, key=lambda r: r.model_flops)
    cells = [(r.algorithm, f"{r.wall_time:.4f}", f"{r.model_flops / 1e9:.3f}") for r in rows]
    header = ("algorithm", "time_s", "model_gflop")
    if fmt == "csv":
        return "\n".join(",".join(c) for c in [header, *cells]) + "\n"
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |", "|---|---|---|"]
        lines += ["| " + " | ".join(c) + " |" for c in cells]
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")
