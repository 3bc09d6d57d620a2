"""Command-line front end: simulate, estimate, and Monte Carlo compare.

Subcommands:
  sim         write a synthetic sensor stream (JSON Lines) from a config
  estimate    run one filter variant over a stream, write per-step metrics CSV
  montecarlo  run the Monte Carlo comparison, write aggregate CSV + SVG plots
              and evaluate the pass/fail gates

Exit codes: 0 success, 2 config/IO error, 3 data error, 4 gate failure.
Every command is deterministic given (config, seed) and writes a manifest
next to its outputs.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
from . import __version__
from .filter import (
    FilterConfig,
    StreamEstimator,
    UpdateSchedule,
    Variant,
    error_vs_truth,
    state_from_truth,
)
from .harness import (
    METRIC_NAMES,
    TrialConfig,
    evaluate_gates,
    initial_covariance,
    monte_carlo,
    nees,
    write_aggregate_csv,
    write_trial_csv,
)
from .models import NoiseParams
from .plots import write_report_svgs
from .sim import (
    GaitConfig,
    MAX_PITCH_AMPLITUDE,
    Rates,
    SurfaceConfig,
    generate_truth,
    synthesize_sensors,
)
from .streams import StreamFormatError, TruthSample, read_jsonl, write_jsonl

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_GATE = 4


class ConfigError(ValueError):
    """Invalid configuration; message names the offending field."""


DEFAULT_CONFIG: dict = {
    "surface": {
        "pitch_amplitude": math.radians(3.0),
        "pitch_angular_freq": 1.5 * math.pi,
        "pivot": [0.0, 0.0, 0.0],
        "belt_speed": 0.0,
    },
    "gait": {
        "step_period": 0.6,
        "step_length": 0.25,
        "stance_width": 0.2,
        "base_height": 0.95,
        "sway_amplitude": 0.03,
        "bob_amplitude": 0.015,
        "surge_amplitude": 0.01,
        "lean_amplitude_deg": 3.0,
        "duration": 30.0,
    },
    "rates": {"imu_hz": 400, "kin_hz": 100},
    "noise": {
        "gyro_density": 1e-5,
        "accel_density": 1e-4,
        "contact_vel_density": 1e-4,
        "fk_pos_var": 1e-4,
        "surface_orient_var": 1e-4,
        "jump_pos_var": 1e-6,
    },
    "filter": {"epsilon": 1e-9, "update_schedule": "every-step"},
    "trials": {
        "n_trials": 100,
        "yaw_range_deg": 30.0,
        "roll_pitch_range_deg": 10.0,
        "vel_range": 0.5,
        "pos_range": 0.5,
        "foot_range": 0.5,
        "static_control": True,
    },
}


def _merge(defaults: dict, override: dict, path: str = "") -> dict:
    out = dict(defaults)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"{where}: unknown field")
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: expected an object")
            out[key] = _merge(defaults[key], value, where)
        else:
            out[key] = value
    return out


def _num(cfg: dict, section: str, key: str, lo=None, hi=None) -> float:
    value = cfg[section][key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
    value = float(value)
    if lo is not None and value < lo:
        raise ConfigError(f"{section}.{key}: must be >= {lo}, got {value}")
    if hi is not None and value > hi:
        raise ConfigError(f"{section}.{key}: must be <= {hi}, got {value}")
    return value


def load_config(path: str | None) -> dict:
    if path is None:
        return json.loads(json.dumps(DEFAULT_CONFIG))
    try:
        with open(path) as fh:
            user = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError("config root must be a JSON object")
    return _merge(DEFAULT_CONFIG, user)


def build_surface(cfg: dict) -> SurfaceConfig:
    amp = _num(cfg, "surface", "pitch_amplitude", 0.0, MAX_PITCH_AMPLITUDE)
    pivot = cfg["surface"]["pivot"]
    if (not isinstance(pivot, (list, tuple)) or len(pivot) != 3
            or not all(isinstance(v, (int, float)) for v in pivot)):
        raise ConfigError("surface.pivot: expected 3 numbers")
    return SurfaceConfig(
        pitch_amplitude=amp,
        pitch_angular_freq=_num(cfg, "surface", "pitch_angular_freq", 0.0),
        pivot=tuple(float(v) for v in pivot),
        belt_speed=_num(cfg, "surface", "belt_speed"),
    )


def build_gait(cfg: dict) -> GaitConfig:
    return GaitConfig(
        step_period=_num(cfg, "gait", "step_period", 1e-3),
        step_length=_num(cfg, "gait", "step_length", 0.0),
        stance_width=_num(cfg, "gait", "stance_width", 0.0),
        base_height=_num(cfg, "gait", "base_height", 0.0),
        sway_amplitude=_num(cfg, "gait", "sway_amplitude", 0.0),
        bob_amplitude=_num(cfg, "gait", "bob_amplitude", 0.0),
        surge_amplitude=_num(cfg, "gait", "surge_amplitude", 0.0),
        lean_amplitude_deg=_num(cfg, "gait", "lean_amplitude_deg", 0.0),
        duration=_num(cfg, "gait", "duration", 1e-3),
    )


def build_rates(cfg: dict) -> Rates:
    try:
        return Rates(imu_hz=int(_num(cfg, "rates", "imu_hz", 1)),
                     kin_hz=int(_num(cfg, "rates", "kin_hz", 1)))
    except ValueError as exc:
        raise ConfigError(f"rates: {exc}") from exc


def build_noise(cfg: dict) -> NoiseParams:
    return NoiseParams.from_scalars(
        gyro=_num(cfg, "noise", "gyro_density", 0.0),
        accel=_num(cfg, "noise", "accel_density", 0.0),
        contact_vel=_num(cfg, "noise", "contact_vel_density", 0.0),
        fk_pos=_num(cfg, "noise", "fk_pos_var", 0.0),
        surface_orient=_num(cfg, "noise", "surface_orient_var", 0.0),
        jump_pos=_num(cfg, "noise", "jump_pos_var", 0.0),
    )


def build_schedule(cfg: dict) -> UpdateSchedule:
    raw = cfg["filter"]["update_schedule"]
    try:
        return UpdateSchedule(raw)
    except ValueError as exc:
        options = ", ".join(s.value for s in UpdateSchedule)
        raise ConfigError(
            f"filter.update_schedule: expected one of [{options}], got {raw!r}"
        ) from exc


def build_trials(cfg: dict, seed: int) -> TrialConfig:
    n = int(_num(cfg, "trials", "n_trials", 1))
    return TrialConfig(
        n_trials=n,
        yaw_range_deg=_num(cfg, "trials", "yaw_range_deg", 0.0),
        roll_pitch_range_deg=_num(cfg, "trials", "roll_pitch_range_deg", 0.0),
        vel_range=_num(cfg, "trials", "vel_range", 0.0),
        pos_range=_num(cfg, "trials", "pos_range", 0.0),
        foot_range=_num(cfg, "trials", "foot_range", 0.0),
        master_seed=seed,
    )


def _atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-manifest-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_manifest(path: str, command: str, config: dict, seed: int,
                   outputs: list[str], started: float) -> None:
    manifest = {
        "tool": "drs-inekf",
        "version": __version__,
        "command": command,
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        "seed": seed,
        "config": config,
        "outputs": [os.path.abspath(p) for p in outputs],
        "duration_s": round(time.time() - started, 3),
    }
    _atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _ensure_out_dir(path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)


def cmd_sim(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    surface = build_surface(cfg)
    gait = build_gait(cfg)
    rates = build_rates(cfg)
    noise = build_noise(cfg)
    truth = generate_truth(gait, surface, seed=args.seed)
    try:
        records = synthesize_sensors(truth, noise, rates, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _ensure_out_dir(args.out)
    write_jsonl(records, args.out)
    write_manifest(args.out + ".manifest.json", "sim", cfg, args.seed,
                   [args.out], started)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def cmd_estimate(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    noise = build_noise(cfg)
    epsilon = _num(cfg, "filter", "epsilon", 1e-15)
    schedule = build_schedule(cfg)
    variant = Variant(args.variant)
    records = read_jsonl(args.stream)
    truths = [r for r in records if isinstance(r, TruthSample)]
    if not truths:
        raise StreamFormatError("stream contains no truth records")
    tcfg = build_trials(cfg, args.seed)
    state = state_from_truth(truths[0], initial_covariance(tcfg))
    est = StreamEstimator(state, FilterConfig(noise=noise, variant=variant,
                                              update_schedule=schedule,
                                              epsilon=epsilon))
    _ensure_out_dir(args.out)
    import csv

    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "variant"] + list(METRIC_NAMES))
        for rec in records:
            est.step(rec)
            if isinstance(rec, TruthSample):
                m = error_vs_truth(est.state, rec.element)
                writer.writerow(
                    [f"{rec.t:.6f}", variant.value]
                    + [f"{v:.9g}" for v in
                       (m.pos_err, m.vel_err, abs(m.roll_deg), abs(m.pitch_deg),
                        abs(m.yaw_deg), nees(m.xi, est.state.cov, epsilon))])
    write_manifest(args.out + ".manifest.json", "estimate", cfg, args.seed,
                   [args.out], started)
    print(f"wrote metrics for {len(truths)} truth samples to {args.out}")
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    started = time.time()
    cfg = load_config(args.config)
    surface = build_surface(cfg)
    gait = build_gait(cfg)
    rates = build_rates(cfg)
    noise = build_noise(cfg)
    epsilon = _num(cfg, "filter", "epsilon", 1e-15)
    schedule = build_schedule(cfg)
    tcfg = build_trials(cfg, args.seed)
    out_dir = args.out
    try:
        os.makedirs(out_dir, exist_ok=True)
        os.makedirs(os.path.join(out_dir, "trials"), exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out_dir}: {exc}") from exc

    print(f"running {tcfg.n_trials} trials (rocking surface), jobs={args.jobs}")
    rocking, results = monte_carlo(tcfg, gait, surface, noise, rates,
                                   jobs=args.jobs, epsilon=epsilon,
                                   schedule=schedule)
    static = None
    if cfg["trials"]["static_control"] and surface.pitch_amplitude > 0.0:
        print(f"running {tcfg.n_trials} trials (static level control)")
        static_surface = SurfaceConfig(pitch_amplitude=0.0,
                                       pitch_angular_freq=surface.pitch_angular_freq,
                                       pivot=surface.pivot,
                                       belt_speed=surface.belt_speed)
        static, _ = monte_carlo(tcfg, gait, static_surface, noise, rates,
                                jobs=args.jobs, epsilon=epsilon,
                                schedule=schedule)

    outputs = []
    aggregate_path = os.path.join(out_dir, "aggregate.csv")
    write_aggregate_csv(aggregate_path, rocking)
    outputs.append(aggregate_path)
    if static is not None:
        static_path = os.path.join(out_dir, "aggregate_static.csv")
        write_aggregate_csv(static_path, static)
        outputs.append(static_path)
    for result in results:
        path = os.path.join(out_dir, "trials", f"trial_{result.trial:03d}.csv")
        write_trial_csv(path, result)
        outputs.append(path)
    outputs.extend(write_report_svgs(rocking, os.path.join(out_dir, "plots")))

    gates = evaluate_gates(rocking, static)
    width = max(len(g.name) for g in gates)
    print()
    print(f"{'gate':<{width}}  status  detail")
    failed = []
    for g in gates:
        status = "PASS" if g.passed else "FAIL"
        if not g.gating:
            status = "info"
        elif not g.passed:
            failed.append(g.name)
        print(f"{g.name:<{width}}  {status:<6}  {g.detail}")
    gates_path = os.path.join(out_dir, "gates.json")
    _atomic_write(gates_path, json.dumps(
        [{"name": g.name, "passed": g.passed, "gating": g.gating,
          "detail": g.detail} for g in gates], indent=2) + "\n")
    outputs.append(gates_path)
    write_manifest(os.path.join(out_dir, "manifest.json"), "montecarlo", cfg,
                   args.seed, outputs, started)
    if failed:
        print(f"\nFAILED gates: {', '.join(failed)}", file=sys.stderr)
        return EXIT_GATE
    print("\nall gates passed")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drs-inekf",
        description="Invariant EKF for bipedal walking on moving rigid "
                    "surfaces: simulation, estimation, Monte Carlo comparison.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (defaults apply)")
    common.add_argument("--seed", type=int, default=0, help="master seed")
    common.add_argument("--print-config", action="store_true",
                        help="print the full default config and exit")

    p_sim = sub.add_parser("sim", parents=[common],
                           help="write a synthetic sensor stream")
    p_sim.add_argument("--out", default="stream.jsonl")
    p_sim.set_defaults(func=cmd_sim)

    p_est = sub.add_parser("estimate", parents=[common],
                           help="run one filter variant over a stream")
    p_est.add_argument("--stream", required=True)
    p_est.add_argument("--variant", default=Variant.PROPOSED.value,
                       choices=[v.value for v in Variant])
    p_est.add_argument("--out", default="metrics.csv")
    p_est.set_defaults(func=cmd_estimate)

    p_mc = sub.add_parser("montecarlo", parents=[common],
                          help="Monte Carlo comparison with pass/fail gates")
    p_mc.add_argument("--out", default="mc_out")
    p_mc.add_argument("--jobs", type=int, default=1,
                      help="parallel trial workers")
    p_mc.set_defaults(func=cmd_montecarlo)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "print_config", False):
        print(json.dumps(DEFAULT_CONFIG, indent=2, sort_keys=True))
        return EXIT_OK
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StreamFormatError as exc:
        print(f"stream error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # estimator hard errors carry data context
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
