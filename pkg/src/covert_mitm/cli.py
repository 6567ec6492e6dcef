"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical abort,
4 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import __version__
from .detectors import (
    calibrate_threshold,
    cusum_init,
    cusum_statistics,
    pasad_scores,
    pasad_train,
    resolution_floor,
)
from .experiments import (
    DetectorParams,
    GridSpec,
    SimulationAborted,
    SimulationConfig,
    alpha_grid,
    calibrate_detectors,
    evaluate,
    grid_to_csv,
    noise_grid,
    run_closed_loop,
    run_grid,
)
from .theory import leakage_suite, monte_carlo_stealth, nominal_component, stealth_bound_suite

log = logging.getLogger("covert_mitm")

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_VERIFY = 0, 2, 3, 4

CONFIG_KEYS = {"simulation", "detector", "grid", "calibration", "out"}
GRID_KEYS = {"gamma_refs", "axis2_values", "workers"}
CALIBRATION_KEYS = {"seeds"}

TRACE_COLUMNS = (
    "t", "y", "y_m", "y_ma", "u_c", "u", "mu", "gamma", "pasad_stat", "cusum_pos", "cusum_neg",
)


class ConfigError(ValueError):
    pass


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(doc, CONFIG_KEYS, "top-level")
    _reject_unknown(doc.get("grid", {}), GRID_KEYS, "grid")
    _reject_unknown(doc.get("calibration", {}), CALIBRATION_KEYS, "calibration")
    return doc


def _reject_unknown(doc: dict, known: set, where: str):
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown {where} keys: {sorted(unknown)}")


def build_settings(args) -> tuple[SimulationConfig, DetectorParams, dict]:
    doc = load_config(args.config)
    try:
        sim = SimulationConfig.from_dict(doc.get("simulation", {}))
        det = DetectorParams.from_dict(doc.get("detector", {}))
        if args.seed is not None:
            sim = replace(sim, seed=args.seed)
        if args.noise_convention is not None:
            sim = replace(sim, noise_convention=args.noise_convention)
        if args.margin is not None:
            det = replace(det, margin=args.margin)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return sim, det, doc


def _out_path(args, doc: dict, default: str) -> Path:
    return Path(args.out or doc.get("out") or default)


def _manifest_path(out: Path) -> Path:
    return out.with_suffix(".json") if out.suffix != ".json" else out.with_name(out.stem + ".manifest.json")


def _write_json(path: Path, doc: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _manifest(sim: SimulationConfig, det: DetectorParams, **extra) -> dict:
    return {"metadata": sim.metadata(), "detector": asdict(det), **extra}


def trace_csv(trace, pasad_stat, cusum_pos, cusum_neg) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    cols = (trace.y, trace.y_m, trace.y_ma, trace.u_c, trace.u, trace.mu, trace.gamma,
            pasad_stat, cusum_pos, cusum_neg)
    for t in range(len(trace)):
        writer.writerow([t] + ["" if np.isnan(c[t]) else repr(float(c[t])) for c in cols])
    return buf.getvalue()


def cmd_simulate(args) -> int:
    sim, det, doc = build_settings(args)
    out = _out_path(args, doc, "trace.csv")
    calibration = calibrate_detectors(sim, det)
    trace = run_closed_loop(sim)
    result = evaluate(trace, calibration)
    stat = pasad_scores(calibration.pasad, trace.y_ma)
    s_pos, s_neg = cusum_statistics(calibration.cusum, trace.y_ma)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(trace_csv(trace, stat, s_pos, s_neg), encoding="utf-8")
    _write_json(
        _manifest_path(out),
        _manifest(sim, det, calibration=calibration.to_dict(), result=asdict(result)),
    )
    log.info("wrote %s (PASAD max %.3g, CUSUM max %.3g)", out, result.pasad_max, result.cusum_max)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    sim, det, doc = build_settings(args)
    out = _out_path(args, doc, "thresholds.json")
    n_seeds = int(doc.get("calibration", {}).get("seeds", 1))
    if n_seeds < 1:
        raise ConfigError("calibration.seeds must be >= 1")
    seeds = [sim.seed + i for i in range(n_seeds)]
    base = run_closed_loop(sim.attack_free())
    training = base.y_ma[: sim.train_samples]
    L = det.L if det.L is not None else sim.train_samples // 2
    pasad = pasad_train(training, L, det.r)
    cusum = cusum_init(training, det.k_factor)
    p_stats, c_pos, c_neg = [], [], []
    for seed in seeds:
        trace = base if seed == sim.seed else run_closed_loop(replace(sim, seed=seed).attack_free())
        p_stats.append(pasad_scores(pasad, trace.y_ma)[sim.train_samples :])
        sp, sn = cusum_statistics(cusum, trace.y_ma)
        c_pos.append(sp[sim.train_samples :])
        c_neg.append(sn[sim.train_samples :])
    p_stats, c_pos, c_neg = map(np.concatenate, (p_stats, c_pos, c_neg))
    p_floor = resolution_floor(pasad, base.y_ma, det.resolution)
    c_floor = resolution_floor(cusum, base.y_ma, det.resolution)
    pasad = pasad.with_threshold(
        calibrate_threshold(p_stats, det.margin, p_floor), margin=det.margin, seeds=seeds
    )
    if det.cusum_per_side:
        cusum = replace(cusum, threshold=calibrate_threshold(c_pos, det.margin, c_floor),
                        threshold_neg=calibrate_threshold(c_neg, det.margin, c_floor))
    else:
        cusum = replace(
            cusum, threshold=calibrate_threshold(np.maximum(c_pos, c_neg), det.margin, c_floor)
        )
    cusum.metadata.update(margin=det.margin, seeds=seeds)
    _write_json(
        out,
        _manifest(
            sim,
            det,
            seeds=seeds,
            pasad_threshold=pasad.threshold,
            cusum_threshold=cusum.threshold,
            cusum_threshold_neg=cusum.threshold_neg,
            pasad_model=pasad.to_dict(),
            cusum_model=cusum.to_dict(),
        ),
    )
    log.info("wrote %s (PASAD %.3g, CUSUM %.3g)", out, pasad.threshold, cusum.threshold)
    return EXIT_OK


def _grid(args, kind: str) -> int:
    sim, det, doc = build_settings(args)
    grid_doc = doc.get("grid", {})
    spec = (alpha_grid if kind == "alpha" else noise_grid)(args.coarse, sim)
    try:
        if "gamma_refs" in grid_doc or "axis2_values" in grid_doc:
            spec = GridSpec(
                tuple(grid_doc.get("gamma_refs", spec.gamma_refs)),
                spec.axis2,
                tuple(grid_doc.get("axis2_values", spec.axis2_values)),
                spec.base,
            )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    workers = args.workers if args.workers is not None else grid_doc.get("workers")
    out = _out_path(args, doc, f"grid_{kind}.csv")
    rows, calibrations = run_grid(spec, det, workers=workers)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(grid_to_csv(rows, spec.axis2), encoding="utf-8")
    _write_json(
        _manifest_path(out),
        _manifest(
            spec.base,
            det,
            grid={"axis1": "gamma_ref", "axis2": spec.axis2, "shape": spec.shape,
                  "gamma_refs": spec.gamma_refs, "axis2_values": spec.axis2_values},
            calibrations={repr(k): (c.to_dict() if c else None) for k, c in calibrations.items()},
            aborted_cells=sum(r.result.aborted for r in rows),
        ),
    )
    log.info("wrote %s (%d cells)", out, len(rows))
    return EXIT_OK


def cmd_grid_alpha(args) -> int:
    return _grid(args, "alpha")


def cmd_grid_noise(args) -> int:
    return _grid(args, "noise")


def run_verification(trials: int = 100_000, seed: int = 0) -> dict:
    base = replace(SimulationConfig(), noise_power=0.0, gamma_ref=0.25, seed=seed)
    leakage = leakage_suite(base=base)

    trace = run_closed_loop(replace(base, alpha=1.05))
    leak = trace.y_ma - nominal_component(trace)
    r = leak[base.attack_start : base.attack_start + 100]
    sigmas = np.logspace(-4, -2, 5)
    stealth_bound = stealth_bound_suite(r, sigmas, (-0.5, 0.5, 1.0, 2.0, 4.0), trials=trials, seed=seed)

    rn = float(np.linalg.norm(r))
    degenerate = [
        {"case": "sigma=0, delta>||r||", "fraction": monte_carlo_stealth(r, 0.0, 1.01 * rn, 1000, seed), "expected": 1.0},
        {"case": "sigma=0, delta<||r||", "fraction": monte_carlo_stealth(r, 0.0, 0.99 * rn, 1000, seed), "expected": 0.0},
    ]
    for case in degenerate:
        case["passed"] = case["fraction"] == case["expected"]

    passed = (
        all(x["passed"] for x in leakage)
        and all(x["passed"] for x in stealth_bound)
        and all(x["passed"] for x in degenerate)
    )
    return {"leakage": leakage, "stealth_bound": stealth_bound, "degenerate": degenerate, "passed": passed}


def cmd_verify(args) -> int:
    out = Path(args.out or "verify.json")
    report = run_verification(trials=args.trials, seed=args.seed or 0)
    report.update(software_version=__version__, seed=args.seed or 0, trials=args.trials)
    _write_json(out, report)
    for rec in report["leakage"]:
        log.info("leakage alpha=%.2f rel.err %.2e %s", rec["alpha"], rec["relative_error"],
                 "ok" if rec["passed"] else "FAIL")
    bad = [c for c in report["stealth_bound"] if not c["passed"]]
    log.info("stealth bound: %d/%d valid cells dominate the bound",
             sum(c["valid"] and c["passed"] for c in report["stealth_bound"]),
             sum(c["valid"] for c in report["stealth_bound"]))
    if bad or not report["passed"]:
        return EXIT_VERIFY
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="covert-mitm", description="Covert attack simulation, detector calibration and verification.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, grid=False):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output path")
        p.add_argument("--seed", type=int, help="override the noise seed")
        p.add_argument("--margin", type=float, help="threshold margin above the attack-free maximum")
        p.add_argument("--noise-convention", choices=("psd", "variance"))
        p.add_argument("-v", "--verbose", action="store_true")
        if grid:
            p.add_argument("--coarse", action="store_true", help="11x11 instead of 101x101")
            p.add_argument("--workers", type=int, help="worker processes")

    p = sub.add_parser("simulate", help="single run: trace CSV + manifest")
    common(p)
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("calibrate", help="attack-free thresholds JSON")
    common(p)
    p.set_defaults(func=cmd_calibrate)
    p = sub.add_parser("grid-alpha", help="gamma_ref x alpha grid")
    common(p, grid=True)
    p.set_defaults(func=cmd_grid_alpha)
    p = sub.add_parser("grid-noise", help="gamma_ref x noise power grid")
    common(p, grid=True)
    p.set_defaults(func=cmd_grid_noise)
    p = sub.add_parser("verify", help="residual-leakage and stealth-bound checks")
    p.add_argument("--out", help="report path")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=100_000)
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationAborted as exc:
        print(f"simulation aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
