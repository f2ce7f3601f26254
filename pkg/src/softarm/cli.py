"""Command-line entry points: ``softarm simulate|identify|track|compare|bench``.

Exit codes are 0 on success, 2 when the configuration or an input file is
invalid and 3 when a run fails (singular configuration, non-finite state,
rank-deficient identification).  Failures print one JSON object to stderr.
Set ``SOFTARM_LOG_LEVEL`` (DEBUG, INFO, WARNING, ...) for progress messages.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import dynamics, presets
from .errors import InvalidInputError, SoftArmError
from .identification import CoefficientSplit, SampleBatch, identify
from .simulator import TrajectoryLog, integrate, metrics

log = logging.getLogger("softarm")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _load(args) -> cfgmod.ExperimentConfig:
    if args.config is None:
        return cfgmod.reference_config()
    return cfgmod.load_config(args.config)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _run(cfg, kind, payload, seed):
    plant = cfgmod.build_plant(cfg, payload)
    controller = cfgmod.build_controller(cfg, kind)
    q0, qd0 = cfgmod.build_initial_state(cfg)
    sim = cfgmod.build_sim(cfg, seed)
    log.info("running %s controller, payload %.4g kg, %.3g s", kind, plant.payload_at(0.0),
             sim.duration)
    return integrate(plant, controller, sim, q0, qd0)


def _track_metrics(cfg, run_log, kind, payload):
    bl = cfg.controller.adaptive.boundary_layer if kind == "adaptive" else None
    if bl is not None:
        bl = np.broadcast_to(np.asarray(bl, dtype=float), (2 * len(cfg.arm.segments),))
    m = metrics(run_log, threshold=cfg.metrics.threshold, window_start=cfg.metrics.window_start,
                boundary_layer=bl)
    m.update(controller=kind, payload=payload)
    if cfg.metrics.rms_bound is not None:
        m["within_bound"] = m["rms_error"] <= cfg.metrics.rms_bound
    return m


# -- commands ---------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _load(args)
    kind = args.controller or cfg.controller.kind
    payload = cfg.plant.payload if args.payload is None else args.payload
    run_log = _run(cfg, kind, payload, args.seed)
    path = _out_dir(args) / cfg.output.log
    run_log.to_csv(path)
    log.info("wrote %d rows to %s", len(run_log), path)
    return EXIT_OK


def cmd_identify(args) -> int:
    cfg = _load(args)
    model = cfgmod.build_model(cfg)
    try:
        run_log = TrajectoryLog.from_csv(args.log)
    except OSError as exc:
        raise InvalidInputError(f"cannot read log {args.log}: {exc.strerror}") from None
    spec = cfg.identify
    split = (CoefficientSplit.masses_known(model) if spec.known is None
             else CoefficientSplit.from_known(model.n, spec.known))
    report = identify(SampleBatch.from_log(run_log), model, split, spec.cutoff, spec.held_pressures)
    path = _out_dir(args) / cfg.output.report
    report.to_json(path)
    log.info("identified %s from %d samples", sorted(report.coefficients), report.sample_count)
    return EXIT_OK


def cmd_track(args) -> int:
    cfg = _load(args)
    kind = args.controller or (cfg.controller.kind if cfg.controller.kind != "feedforward"
                               else "adaptive")
    payload = cfg.plant.payload if args.payload is None else args.payload
    run_log = _run(cfg, kind, payload, args.seed)
    out = _out_dir(args)
    run_log.to_csv(out / cfg.output.log)
    m = _track_metrics(cfg, run_log, kind, payload)
    _write_json(out / cfg.output.metrics, m)
    log.info("%s rms error %.3g", kind, m["rms_error"])
    return EXIT_OK


def cmd_compare(args) -> int:
    """Every controller against every payload, same seed, one JSON table."""
    cfg = _load(args)
    payloads = [args.payload] if args.payload is not None else cfg.compare.payloads
    kinds = [args.controller] if args.controller else cfg.compare.controllers
    rows = []
    for kind in kinds:
        for payload in payloads:
            run_log = _run(cfg, kind, payload, args.seed)
            m = _track_metrics(cfg, run_log, kind, payload)
            if cfg.compare.window_start is not None:
                m.update(metrics(run_log, cfg.metrics.threshold, cfg.compare.window_start),
                         controller=kind, payload=payload)
            rows.append(m)
    _write_json(_out_dir(args) / cfg.output.compare, {"runs": rows})
    return EXIT_OK


def bench_dynamics(n: int, samples: int, seed: int = 0, warmup: int = 50):
    """Per-call latency of the dynamic terms plus regressor at random states.

    Returns a dict with ``p50_us``, ``p95_us``, ``p99_us`` and a SHA-256
    digest of the sampled states, which depends only on ``n``, ``samples``
    and ``seed``.
    """
    model = presets.default_arm(n)
    rng = np.random.default_rng(seed)
    states = rng.uniform(-1.0, 1.0, (samples, 3, 2 * n))
    states[:, 0, 0::2] *= np.pi
    states[:, 0, 1::2] = 0.2 + 0.8 * np.abs(states[:, 0, 1::2])  # keep away from theta = 0

    def call(x):
        q, qd, qdd = x
        dynamics.dynamic_terms(model, q, qd)
        dynamics.regressor(model, q, qd, qd, qdd)

    for x in states[:warmup]:
        call(x)
    times = np.empty(samples)
    for i, x in enumerate(states):
        t0 = time.perf_counter_ns()
        call(x)
        times[i] = (time.perf_counter_ns() - t0) * 1e-3
    p50, p95, p99 = np.percentile(times, [50, 95, 99])
    return {"n": n, "samples": samples, "p50_us": float(p50), "p95_us": float(p95),
            "p99_us": float(p99), "states_sha256": hashlib.sha256(states.tobytes()).hexdigest()}


def cmd_bench(args) -> int:
    cfg = _load(args)
    seed = cfg.sim.seed if args.seed is None else args.seed
    report = [bench_dynamics(n, cfg.bench.samples, seed, cfg.bench.warmup)
              for n in cfg.bench.segments]
    for r in report:
        log.info("n=%d p50 %.1f us p99 %.1f us", r["n"], r["p50_us"], r["p99_us"])
    _write_json(_out_dir(args) / cfg.output.bench, {"runs": report})
    return EXIT_OK


# -- plumbing ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="softarm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, controller=True):
        p.add_argument("--config", help="YAML experiment file (default: the reference arm)")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--seed", type=int, help="override sim.seed")
        if controller:
            p.add_argument("--controller", choices=["adaptive", "invdyn"],
                           help="override controller.kind")
            p.add_argument("--payload", type=float, help="tip payload in kg")

    common(sub.add_parser("simulate", help="run the configured loop and write the log"))
    p = sub.add_parser("identify", help="estimate stiffness and damping from a log")
    common(p, controller=False)
    p.add_argument("--log", required=True, help="TrajectoryLog CSV to identify from")
    common(sub.add_parser("track", help="closed-loop tracking run with metrics"))
    common(sub.add_parser("compare", help="controllers across the payload sweep"))
    common(sub.add_parser("bench", help="latency of the dynamic terms"), controller=False)
    return parser


COMMANDS = {"simulate": cmd_simulate, "identify": cmd_identify, "track": cmd_track,
            "compare": cmd_compare, "bench": cmd_bench}


def _fail(code, exc) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("field", "time", "condition_number", "unidentifiable", "stage"):
        value = getattr(exc, attr, None)
        if value is not None:
            payload[attr] = value
    sys.stderr.write(json.dumps(payload) + "\n")
    return code


def main(argv=None) -> int:
    level = os.environ.get("SOFTARM_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=level if isinstance(logging.getLevelName(level), int) else "WARNING",
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    if getattr(args, "payload", None) is not None and args.payload < 0:
        return _fail(EXIT_CONFIG, cfgmod.ConfigError("--payload must be >= 0", "payload"))
    try:
        return COMMANDS[args.command](args)
    except InvalidInputError as exc:
        return _fail(EXIT_CONFIG, exc)
    except SoftArmError as exc:
        return _fail(EXIT_RUNTIME, exc)


if __name__ == "__main__":
    sys.exit(main())
