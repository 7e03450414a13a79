"""Command line interface.

Subcommands: simulate (write a trace CSV), estimate (stream a trace through
one estimator and write a snapshot), sweep (outlier-ratio benchmark CSV) and
states (reconstruct states from a snapshot and a trace). Exit codes: 0 on
success, 2 on configuration errors, 3 on numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .bench import (
    EstimatorSpec,
    load_config,
    make_estimator,
    reconstruct_states,
    run_sweep,
    states_csv_text,
)
from .estimator import SNAPSHOT_VERSION, AirlsEstimator, save_snapshot
from .exceptions import ConfigError, SingularNormalMatrixError
from .sim import generate_trajectory, read_trace, write_trace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="airls", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="generate a measurement trace CSV")
    p_sim.add_argument("--config", required=True, help="TOML experiment config")
    p_sim.add_argument("--out", required=True, help="output trace CSV")
    p_sim.add_argument("--ratio", type=float, default=None, help="override outlier ratio")
    p_sim.add_argument("--seed", type=int, default=None, help="override noise seed")
    p_sim.add_argument("--n", type=int, default=None, help="override number of steps")

    p_est = sub.add_parser("estimate", help="stream a trace through one estimator")
    p_est.add_argument("--estimator", required=True, help="estimator name (airls|rtls|rls or config section)")
    p_est.add_argument("--trace", required=True, help="input trace CSV")
    p_est.add_argument("--snapshot", required=True, help="output snapshot JSON")
    p_est.add_argument("--config", default=None, help="optional TOML config with estimator settings")

    p_sweep = sub.add_parser("sweep", help="run the outlier-ratio sweep")
    p_sweep.add_argument("--config", required=True, help="TOML experiment config")
    p_sweep.add_argument("--out", required=True, help="output sweep CSV")
    p_sweep.add_argument("--fast", action="store_true", help="cap N at 5000 for CI runs")

    p_states = sub.add_parser("states", help="reconstruct states from a snapshot")
    p_states.add_argument("--snapshot", required=True, help="snapshot JSON from `estimate`")
    p_states.add_argument("--trace", required=True, help="trace CSV to reconstruct")
    p_states.add_argument("--out", required=True, help="output states CSV")
    return parser


def _cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    noise = cfg.noise
    if args.ratio is not None:
        noise = noise.with_ratio(args.ratio)
    if args.seed is not None:
        noise = noise.with_ratio(noise.outlier_ratio, seed=args.seed)
    n_steps = args.n if args.n is not None else cfg.N
    samples = generate_trajectory(cfg.system, cfg.x0, cfg.input_std, n_steps, noise)
    write_trace(args.out, samples)
    print(f"wrote {len(samples)} samples to {args.out}")
    return EXIT_OK


def _snapshot_payload(est) -> dict:
    """Snapshot fields for the baselines (the robust estimator has its own)."""
    m = 2 * est.n + est.n_u
    if est.kind == "rtls":
        C = est.state.C_tilde
    else:
        # The plain RLS baseline keeps no m x m correlation; the field is
        # zero-filled and only theta_hat/dimensions are meaningful.
        C = np.zeros((m, m))
    return {
        "version": SNAPSHOT_VERSION,
        "n": est.n,
        "n_u": est.n_u,
        "beta": est.config.beta,
        "alpha": est.config.alpha,
        "K": 1,
        "L_Z": 1,
        "L_Theta": 1,
        "theta_hat": est.theta().ravel().tolist(),
        "C": C.ravel().tolist(),
        "step": est.state.step,
    }


def _cmd_estimate(args) -> int:
    samples = read_trace(args.trace)
    n = samples[0].x.shape[0]
    n_u = samples[0].u.shape[0]
    spec = None
    if args.config is not None:
        cfg = load_config(args.config)
        for s in cfg.estimators:
            if s.name == args.estimator:
                spec = s
                break
    if spec is None:
        spec = EstimatorSpec(name=args.estimator, kind=args.estimator, options={})
    est = make_estimator(spec, n, n_u)
    for s in samples:
        est.step(s)
    if isinstance(est, AirlsEstimator):
        save_snapshot(args.snapshot, est.state, est.config)
    else:
        with open(args.snapshot, "w") as f:
            json.dump(_snapshot_payload(est), f)
    print(f"estimated {spec.name} over {len(samples)} samples -> {args.snapshot}")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    rows, _ = run_sweep(cfg, out_path=args.out, fast=args.fast)
    print(f"wrote {len(rows)} sweep rows to {args.out}")
    return EXIT_OK


def _cmd_states(args) -> int:
    with open(args.snapshot) as f:
        payload = json.load(f)
    if payload.get("version") != SNAPSHOT_VERSION:
        raise ConfigError(f"unsupported snapshot version {payload.get('version')!r}")
    n, n_u = int(payload["n"]), int(payload["n_u"])
    theta = np.array(payload["theta_hat"], dtype=float).reshape(n, n + n_u)
    alpha = float(payload.get("alpha") or 1e-8)
    samples = read_trace(args.trace)
    rows = reconstruct_states(theta, samples, alpha=alpha)
    with open(args.out, "w", newline="") as f:
        f.write(states_csv_text(rows))
    print(f"wrote {len(rows)} state rows to {args.out}")
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "estimate": _cmd_estimate,
    "sweep": _cmd_sweep,
    "states": _cmd_states,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SingularNormalMatrixError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    raise SystemExit(main())
