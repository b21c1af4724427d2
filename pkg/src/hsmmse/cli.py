"""Command-line front end: synth, denoise, detect, roc, bench, flops, spectra, pipeline.

Exit codes: 0 on success, 2 on usage errors, 1 on runtime errors. Errors are
written to stderr as one JSON line with a ``stage`` field.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .baselines import GaussianFilterConfig, MnfConfig
from .cost import ALGORITHMS, FlopModel, bench_report, model_flops, run_benchmark, run_denoiser
from .cube import (
    HyperCube,
    PixelMask,
    load_cube,
    load_mask,
    load_spectrum_csv,
    save_cube,
    save_mask,
    save_spectrum_csv,
)
from .detect import DetectionMap, detect_asd, roc
from .mmse import DEFAULT_SIGMA, MmseConfig, estimate_sigma
from .synth import SceneSpec, default_scene_spec, generate_scene, mse


class StageError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("usage", message)
        sys.exit(2)


def _emit_error(stage: str, message: str) -> None:
    sys.stderr.write(json.dumps({"stage": stage, "error": message}) + "\n")


# --- file helpers -------------------------------------------------------------


def save_scores(det: DetectionMap, path) -> None:
    """Raw H x W little-endian float32 plus a ``<path>.json`` sidecar."""
    path = Path(path)
    path.write_bytes(np.ascontiguousarray(det.scores, dtype="<f4").tobytes())
    meta = {"height": det.height, "width": det.width, "dtype": "f32le", "ridge": det.ridge}
    Path(str(path) + ".json").write_text(json.dumps(meta, sort_keys=True) + "\n")


def load_scores(path) -> DetectionMap:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    h, w = meta["height"], meta["width"]
    raw = path.read_bytes()
    if len(raw) != 4 * h * w:
        raise ValueError(f"{path}: expected {4 * h * w} bytes, found {len(raw)}")
    scores = np.frombuffer(raw, dtype="<f4").reshape(h, w).astype(np.float64)
    return DetectionMap(scores, meta.get("ridge", 0.0))


def write_roc_csv(curve, path) -> None:
    lines = ["threshold,pfa,pd"]
    for t, f, d in zip(curve.thresholds, curve.pfa, curve.pd):
        lines.append(f"{'inf' if math.isinf(t) else repr(float(t))},{float(f)!r},{float(d)!r}")
    lines.append(f"# auc={curve.auc!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def _load_target(path, cube: HyperCube) -> np.ndarray:
    _, values = load_spectrum_csv(path)
    if values.size != cube.bands:
        raise ValueError(f"target has {values.size} values, cube has {cube.bands} bands")
    return values


def _parse_pixel(text: str) -> tuple[int, int]:
    try:
        x, y = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"pixel must be 'x,y', got {text!r}") from None
    return x, y


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


# --- subcommands --------------------------------------------------------------


def _scene_spec(args) -> SceneSpec:
    if args.spec:
        spec = SceneSpec.from_json(Path(args.spec).read_text())
    else:
        spec = default_scene_spec(args.size)
    overrides = {"seed": args.seed}
    if args.amplitude is not None:
        overrides["peak_amplitude"] = args.amplitude
    if args.noise_sigma is not None:
        overrides["noise_sigma"] = args.noise_sigma
    return replace(spec, **overrides)


def _write_scene(bundle, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    save_cube(bundle.clean, out / "clean.hcb")
    save_cube(bundle.noisy, out / "noisy.hcb")
    save_mask(bundle.mask, out / "mask.pgm")
    save_spectrum_csv(bundle.clean.axis, bundle.target, out / "target.csv")
    (out / "spec.json").write_text(bundle.spec.to_json() + "\n")


def cmd_synth(args) -> None:
    bundle = generate_scene(_scene_spec(args))
    _write_scene(bundle, Path(args.out_dir))


def _denoise_params(args, cube: HyperCube):
    if args.algo == "mmse":
        sigma = args.sigma
        if sigma is None:
            sigma = estimate_sigma(cube)
            print(f"estimated sigma: {sigma:.6f}")
        return MmseConfig(
            k=args.k,
            sigma=sigma,
            weight_std=args.weight_std,
            rcond=args.rcond,
            clamp_negative=args.clamp,
            kernel="identity" if args.identity_kernel else "gaussian",
        )
    if args.algo == "gaussian":
        return GaussianFilterConfig(k=args.k, spatial_std=args.spatial_std)
    return MnfConfig(k=args.k, retained=args.retained, snr_min=args.snr_min, mode=args.mnf_mode)


def cmd_denoise(args) -> None:
    cube = load_cube(args.input)
    params = _denoise_params(args, cube)
    out = run_denoiser(args.algo, cube, params, workers=args.threads)
    save_cube(out, args.output)


def cmd_detect(args) -> None:
    cube = load_cube(args.cube)
    target = _load_target(args.target, cube)
    exclude = load_mask(args.exclude) if args.exclude else None
    save_scores(detect_asd(cube, target, exclude), args.out)


def cmd_roc(args) -> None:
    curve = roc(load_scores(args.scores), load_mask(args.truth))
    write_roc_csv(curve, args.out)
    print(f"auc={curve.auc:.6f}")


def cmd_bench(args) -> None:
    cube = load_cube(args.cube)
    records = []
    for algo in args.algos:
        params = _bench_params(algo, args.k, args.sigma)
        records.append(run_benchmark(algo, cube, params, args.reps, args.threads))
    text = bench_report(records)
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)


def _bench_params(algo: str, k: int, sigma: float):
    if algo == "mmse":
        return MmseConfig(k=k, sigma=sigma, clamp_negative=True)
    if algo == "gaussian":
        return GaussianFilterConfig(k=k)
    return MnfConfig(k=k)


def cmd_flops(args) -> None:
    for algo in ALGORITHMS:
        print(f"{algo},{model_flops(FlopModel(algo, args.h, args.w, args.n, args.k))}")


def spectra_rows(cubes: dict[str, HyperCube], pixels: list[tuple[int, int]]) -> list[str]:
    """Long-form ``source,x,y,wavenumber,value`` lines for overlay plots."""
    rows = ["source,x,y,wavenumber,value"]
    for name, cube in cubes.items():
        wn = cube.axis.values
        for x, y in pixels:
            spec = cube.spectrum(x, y)
            rows.extend(f"{name},{x},{y},{float(w)!r},{float(v)!r}" for w, v in zip(wn, spec))
    return rows


def cmd_spectra(args) -> None:
    cubes = {Path(p).stem: load_cube(p) for p in args.cubes}
    Path(args.out).write_text("\n".join(spectra_rows(cubes, args.pixel)) + "\n")


def sample_plume_pixels(mask: PixelMask, count: int = 10) -> list[tuple[int, int]]:
    """``count`` mask pixels evenly spaced in row-major order, 1-based."""
    xs, ys = np.nonzero(mask.flags)
    idx = np.linspace(0, xs.size - 1, min(count, xs.size)).round().astype(int)
    return [(int(xs[i]) + 1, int(ys[i]) + 1) for i in idx]


def run_pipeline(spec: SceneSpec, out: Path, threads: int = 1, reps: int = 3, bench: bool = True) -> dict:
    """Synthesize, denoise three ways, detect, score and benchmark; returns the summary."""
    out.mkdir(parents=True, exist_ok=True)
    timings = {}
    stage = "synth"
    try:
        t0 = time.perf_counter()
        bundle = generate_scene(spec)
        _write_scene(bundle, out)
        timings["synth_s"] = time.perf_counter() - t0

        sigma = spec.noise_sigma if spec.noise_sigma > 0 else DEFAULT_SIGMA
        params = {algo: _bench_params(algo, 3, sigma) for algo in ALGORITHMS}
        cubes = {"raw": bundle.noisy}
        for algo in ALGORITHMS:
            stage = f"denoise:{algo}"
            t0 = time.perf_counter()
            cubes[algo] = run_denoiser(algo, bundle.noisy, params[algo], workers=threads)
            timings[f"{algo}_s"] = time.perf_counter() - t0
            save_cube(cubes[algo], out / f"{algo}.hcb")

        summary = {"spec": json.loads(spec.to_json())}
        for name, cube in cubes.items():
            stage = f"detect:{name}"
            det = detect_asd(cube, bundle.target)
            save_scores(det, out / f"scores_{name}.f32")
            stage = f"roc:{name}"
            curve = roc(det, bundle.mask)
            write_roc_csv(curve, out / f"roc_{name}.csv")
            summary[f"auc_{name}"] = curve.auc
            summary[f"mse_{name}"] = mse(cube, bundle.clean)

        stage = "spectra"
        pixels = sample_plume_pixels(bundle.mask)
        (out / "spectra.csv").write_text("\n".join(spectra_rows(cubes, pixels)) + "\n")

        if bench:
            stage = "bench"
            records = [
                run_benchmark(algo, bundle.noisy, params[algo], reps, threads)
                for algo in ALGORITHMS
            ]
            (out / "bench.csv").write_text(bench_report(records))
            timings.update({f"bench_{r.algorithm}_s": r.wall_time for r in records})
    except Exception as exc:
        raise StageError(stage, f"{type(exc).__name__}: {exc}") from exc

    summary["timings"] = timings
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def cmd_pipeline(args) -> None:
    summary = run_pipeline(_scene_spec(args), Path(args.out_dir), args.threads, args.reps, not args.no_bench)
    for key in ("auc_raw", "auc_mmse", "auc_gaussian", "auc_mnf"):
        print(f"{key}={summary[key]:.4f}")


# --- parser -------------------------------------------------------------------


def _add_scene_args(p) -> None:
    p.add_argument("--size", type=_positive_int, default=128, help="height = width = bands")
    p.add_argument("--spec", help="SceneSpec JSON file (overrides --size)")
    p.add_argument("--amplitude", type=float, help="plume peak amplitude")
    p.add_argument("--noise-sigma", type=float, help="noise standard deviation")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="hsmmse", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"hsmmse {__version__}")
    parser.add_argument("--threads", type=_positive_int, default=1, help="worker threads (default 1)")
    parser.add_argument("--seed", type=int, default=0, help="seed for all randomness")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="write a synthetic scene")
    _add_scene_args(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("denoise", help="denoise a cube")
    p.add_argument("--algo", choices=ALGORITHMS, required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--sigma", type=float, help="noise std; estimated from the cube if omitted")
    p.add_argument("--weight-std", type=float, default=1.0)
    p.add_argument("--identity-kernel", action="store_true", help="one-hot center weight")
    p.add_argument("--rcond", type=float, default=1e-10)
    p.add_argument("--clamp", action="store_true", help="clamp negative shrinkage at 0")
    p.add_argument("--spatial-std", type=float, default=1.0)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--retained", type=_positive_int)
    group.add_argument("--snr-min", type=float, default=2.0)
    p.add_argument("--mnf-mode", choices=("windowed", "global"), default="windowed")
    p.add_argument("input")
    p.add_argument("output")
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("detect", help="ASD detection map")
    p.add_argument("--cube", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--exclude")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("roc", help="ROC curve and AUC")
    p.add_argument("--scores", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_roc)

    p = sub.add_parser("bench", help="wall-time benchmark")
    p.add_argument("--cube", required=True)
    p.add_argument("--algos", type=lambda s: s.split(","), default=list(ALGORITHMS))
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--sigma", type=float, default=DEFAULT_SIGMA)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("flops", help="model FLOP counts")
    p.add_argument("--h", type=_positive_int, default=128)
    p.add_argument("--w", type=_positive_int, default=128)
    p.add_argument("--n", type=_positive_int, default=128)
    p.add_argument("--k", type=_positive_int, default=3)
    p.set_defaults(func=cmd_flops)

    p = sub.add_parser("spectra", help="long-form spectra CSV for overlay plots")
    p.add_argument("--cubes", nargs="+", required=True)
    p.add_argument("--pixel", type=_parse_pixel, action="append", required=True, help="x,y (1-based)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spectra)

    p = sub.add_parser("pipeline", help="end-to-end synthetic experiment")
    _add_scene_args(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--no-bench", action="store_true")
    p.set_defaults(func=cmd_pipeline)
    return parser


def _validate(args) -> None:
    k = getattr(args, "k", None)
    if k is not None and (k < 3 or k % 2 == 0):
        raise StageError("usage", f"--k must be an odd integer >= 3, got {k}")
    for name in ("sigma", "noise_sigma"):
        v = getattr(args, name, None)
        if v is not None and v < 0:
            raise StageError("usage", f"--{name.replace('_', '-')} must be >= 0")
    if getattr(args, "reps", 3) < 3:
        raise StageError("usage", "--reps must be >= 3")
    if args.command == "bench":
        bad = [a for a in args.algos if a not in ALGORITHMS]
        if bad:
            raise StageError("usage", f"unknown algorithms {bad}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _validate(args)
    except StageError as exc:
        _emit_error(exc.stage, str(exc))
        return 2
    try:
        with threadpool_limits(limits=args.threads):
            args.func(args)
    except StageError as exc:
        _emit_error(exc.stage, str(exc))
        return 1
    except Exception as exc:  # noqa: BLE001 - every failure becomes a JSON error line
        _emit_error(args.command, f"{type(exc).__name__}: {exc}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
