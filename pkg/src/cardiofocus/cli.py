"""Command-line entry point: simulate | focus | track | recover | evaluate | bench."""

from __future__ import annotations

import os

# cap BLAS/FFT threads before numpy is imported
_threads = os.environ.get("CARDIOFOCUS_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from .baselines import Method, accumulate_extract, cluster_extract, evaluation_budget
from .cft import CftParams, SearchSpace, cft_focus, cft_track
from .config import RadarConfig, SpatialPoint
from .cost import envelope, point_cost, signal_peaks
from .cube import DataCube
from .dsp import localize_cube, point_displacement
from .fixtures import default_fixture, far_offset_fixture
from .metrics import PeakSet, evaluate_peaks
from .scene import Scene, simulate_data_cube
from .signals import DisplacementSeries, load_displacement_csv, save_displacement_csv
from .sparse import SparseProblem, make_sparse_target, pulse_dictionary, ssr_solve, write_matrix_csv

BENCH_COLUMNS = ("method", "trial", "range_m", "move_m", "peak_err_ms", "mdr", "evals", "wall_s")
FIXTURES = {"default": default_fixture, "far": far_offset_fixture}


class CliError(Exception):
    pass


def _check_threads() -> None:
    if _threads is not None:
        try:
            ok = int(_threads) >= 1
        except ValueError:
            ok = False
        if not ok:
            raise CliError(f"CARDIOFOCUS_THREADS must be a positive integer, got {_threads!r}")


def read_json(path) -> dict:
    """Parse a JSON file, turning syntax errors into file:line:column messages."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise CliError(f"{path}: {exc.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise CliError(f"{path}: expected a JSON object at the top level")
    return data


def _load_with(path, loader, what: str):
    data = read_json(path)
    try:
        return loader(data)
    except (ValueError, TypeError) as exc:
        raise CliError(f"{path}: invalid {what}: {exc}") from None


def _params(args) -> CftParams:
    return CftParams(snr_d=args.snr_d, k_max=args.k_max, rng_seed=args.seed)


def _omega(args, center) -> SearchSpace:
    return SearchSpace(center, tuple(args.omega))


def _load_cube(path) -> DataCube:
    try:
        return DataCube.load(path)
    except (OSError, ValueError) as exc:
        raise CliError(f"{path}: {exc}") from None


def _write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def cmd_simulate(args) -> None:
    if args.fixture:
        fx = FIXTURES[args.fixture](args.seed or 0, duration_s=args.duration)
        scene, cfg = fx.scene, fx.config
        if args.scene_out:
            _write_json(args.scene_out, scene.to_dict())
    else:
        if not (args.scene and args.config):
            raise CliError("simulate needs scene.json and config.json, or --fixture")
        scene = _load_with(args.scene, Scene.from_dict, "scene")
        cfg = _load_with(args.config, RadarConfig.from_dict, "config")
        if args.seed is not None:
            from dataclasses import replace

            scene = replace(scene, rng_seed=args.seed)
    try:
        cube = simulate_data_cube(scene, cfg)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    cube.save(args.out)


def _e0(args, cube) -> SpatialPoint:
    return SpatialPoint(*args.e0) if args.e0 else localize_cube(cube)


def cmd_focus(args) -> None:
    cube = _load_cube(args.cube)
    e0 = _e0(args, cube)
    t0 = time.perf_counter()
    e, c, state = cft_focus(e0, lambda p: point_cost(cube, p).cost, _params(args), _omega(args, e0))
    wall = time.perf_counter() - t0
    if args.trace:
        state.to_csv(args.trace)
    if args.signal:
        save_displacement_csv(point_displacement(cube, e), args.signal)
    _write_json(
        args.out,
        {
            "e0": list(e0),
            "e_b": list(e),
            "cost": c if np.isfinite(c) else None,
            "eval_count": state.eval_count,
            "iterations": state.iteration,
            "converged": bool(c < args.snr_d),
            "wall_s": wall,
        },
    )


def cmd_track(args) -> None:
    cube = _load_cube(args.cube)
    e0 = _e0(args, cube)
    try:
        results = cft_track(cube, e0, _params(args), args.segment, _omega(args, e0))
    except ValueError as exc:
        raise CliError(str(exc)) from None
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["segment", "x", "y", "z", "cost", "eval_count"])
        for r in results:
            w.writerow([r.index, *(repr(v) for v in r.e_b), repr(r.cost_b), r.eval_count])


def cmd_recover(args) -> None:
    try:
        sig = load_displacement_csv(args.signal)
    except (OSError, ValueError) as exc:
        raise CliError(f"{args.signal}: {exc}") from None
    env = envelope(sig)
    target = make_sparse_target(env, signal_peaks(sig))
    phi = pulse_dictionary(len(env), args.width, env.rate_hz)
    code = ssr_solve(SparseProblem(env.samples, phi, args.lambda_l1), max_iter=args.max_iter, penalty_weight=args.lambda_s)
    out = code.to_dict()
    out["target"] = target.values.tolist()
    out["target_empty"] = target.empty
    out["support"] = code.support().tolist()
    _write_json(args.out, out)
    if args.dictionary:
        write_matrix_csv(args.dictionary, phi)


def _truth_peaks(path) -> PeakSet:
    def load(d):
        if "beat_times_s" not in d:
            raise ValueError("missing field 'beat_times_s'")
        return PeakSet(np.asarray(d["beat_times_s"], dtype=float))

    return _load_with(path, load, "truth schedule")


def cmd_evaluate(args) -> None:
    try:
        sig = load_displacement_csv(args.signal)
    except (OSError, ValueError) as exc:
        raise CliError(f"{args.signal}: {exc}") from None
    truth = _truth_peaks(args.truth)
    pred = PeakSet.from_indices(signal_peaks(sig), sig.rate_hz)
    report = evaluate_peaks(pred, truth)
    _write_json(args.out, report.to_dict())
    if args.cycles:
        report.write_cycles_csv(args.cycles)


def _segment_peaks(signals: list[DisplacementSeries], seg_s: float) -> PeakSet:
    times = [signal_peaks(s) / s.rate_hz + i * seg_s for i, s in enumerate(signals)]
    return PeakSet(np.concatenate(times) if times else np.empty(0))


def bench_trial(fx, seed: int, params: CftParams, segment_s: float = 4.0) -> list[dict]:
    """Run CFT and both baselines on one fixture; one row per method."""
    cube = fx.cube()
    cfg = fx.config
    rough = localize_cube(cube)
    truth = PeakSet(fx.schedule.beat_times_s)
    seg_len = int(round(segment_s * cfg.frame_rate_hz))
    n_seg = cube.n_frames // seg_len
    truth = PeakSet(truth.times_s[truth.times_s < n_seg * segment_s])
    segments = [cube.segment(i * seg_len, (i + 1) * seg_len) for i in range(n_seg)]
    base = {"trial": seed, "range_m": round(fx.cardiac_point.range_m, 6), "move_m": 0.0}

    rows = []
    t0 = time.perf_counter()
    track = cft_track(cube, rough, params, segment_s)
    sigs = [point_displacement(seg, r.e_b) for seg, r in zip(segments, track)]
    wall = time.perf_counter() - t0
    rows.append(("cft", sigs, evaluation_budget(Method.CFT, traces=track), wall))
    for method, fn in ((Method.ACCUMULATE, accumulate_extract), (Method.CLUSTER, cluster_extract)):
        t0 = time.perf_counter()
        sigs = [fn(seg, rough) for seg in segments]
        rows.append((method.value, sigs, evaluation_budget(method, n_seg), time.perf_counter() - t0))

    out = []
    for name, sigs, evals, wall in rows:
        rep = evaluate_peaks(_segment_peaks(sigs, segment_s), truth)
        out.append(
            {
                "method": name,
                **base,
                "peak_err_ms": rep.mean_peak_error_ms,
                "mdr": rep.mdr,
                "evals": evals,
                "wall_s": wall,
            }
        )
    return out


def cmd_bench(args) -> None:
    def load(d):
        suite = d.get("suite", "default")
        if suite not in FIXTURES:
            raise ValueError(f"field 'suite' must be one of {sorted(FIXTURES)}, got {suite!r}")
        seeds = d.get("seeds", list(range(int(d.get("trials", 10)))))
        if not isinstance(seeds, list) or not all(isinstance(s, int) for s in seeds):
            raise ValueError("field 'seeds' must be a list of integers")
        return suite, seeds, float(d.get("duration_s", 4.0))

    suite, seeds, duration = _load_with(args.suite, load, "bench suite")
    params = _params(args)
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=BENCH_COLUMNS)
        w.writeheader()
        for seed in seeds:
            fx = FIXTURES[suite](seed, duration_s=duration)
            for row in bench_trial(fx, seed, params):
                w.writerow({k: ("" if row[k] is None else row[k]) for k in BENCH_COLUMNS})


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cardiofocus", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def search_flags(sp):
        sp.add_argument("--snr-d", type=float, default=0.01, help="stop once the cost drops below this")
        sp.add_argument("--k-max", type=int, default=100, help="iteration cap per search")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--omega", type=float, nargs=3, default=(0.2, 0.1, 0.2), metavar=("HX", "HY", "HZ"), help="search-box half extents in meters")
        sp.add_argument("--e0", type=float, nargs=3, metavar=("X", "Y", "Z"), help="start point (default: RA-map peak)")

    sp = sub.add_parser("simulate", help="render a scene into a data cube")
    sp.add_argument("scene", nargs="?")
    sp.add_argument("config", nargs="?")
    sp.add_argument("--fixture", choices=sorted(FIXTURES))
    sp.add_argument("--duration", type=float, default=4.0)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--scene-out")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("focus", help="find the cardio-focused point in a cube")
    sp.add_argument("cube")
    search_flags(sp)
    sp.add_argument("--trace")
    sp.add_argument("--signal", help="write the cleaned signal at the focused point as CSV")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_focus)

    sp = sub.add_parser("track", help="focus segment by segment")
    sp.add_argument("cube")
    search_flags(sp)
    sp.add_argument("--segment", type=float, default=4.0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_track)

    sp = sub.add_parser("recover", help="sparse heartbeat recovery from a signal CSV")
    sp.add_argument("signal")
    sp.add_argument("--lambda-l1", type=float, default=2.0)
    sp.add_argument("--lambda-s", type=float, default=0.01)
    sp.add_argument("--width", type=float, default=0.05, help="dictionary pulse width (s)")
    sp.add_argument("--max-iter", type=int, default=2000)
    sp.add_argument("--dictionary")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_recover)

    sp = sub.add_parser("evaluate", help="peak error and MDR of a signal against truth beats")
    sp.add_argument("signal")
    sp.add_argument("truth")
    sp.add_argument("--cycles")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("bench", help="CFT vs accumulation vs clustering on a fixture suite")
    sp.add_argument("suite")
    sp.add_argument("--snr-d", type=float, default=0.01)
    sp.add_argument("--k-max", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _check_threads()
        args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
