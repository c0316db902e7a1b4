"""Batch front end: bounds, spanning studies, quantized episodes, verification.

Subcommands emit line-delimited JSON records; exit codes are 0 (success),
2 (config/parse error), 3 (guarantee violation), 4 (infeasible instance).
"""

from __future__ import annotations

import argparse
import json
import math
import sys as _sys
from typing import Optional

import numpy as np
import yaml

from .entropy import (CandidateClass, InstanceTooLargeError,
                      build_spanning_instance, lower_bound,
                      min_spanning_cardinality, upper_bound)
from .geometry import Box, CompactSet
from .quantized import (GuaranteeViolationError, ProtocolError, bit_rate,
                        decode, load_step_records,
                        reference_controller_double_integrator,
                        run_episode, verify_guarantees)
from .recurrence import RecurrenceSpec, first_return_time, lipschitz_region
from .systems import ControlSignal, ControlSystem, make_system

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GUARANTEE = 3
EXIT_INFEASIBLE = 4


class ConfigError(ValueError):
    pass


def _record(obj, out):
    out.write(json.dumps(obj, sort_keys=True) + "\n")


def load_config(path: Optional[str], overrides: dict) -> dict:
    cfg = {}
    if path:
        try:
            with open(path) as fh:
                cfg = yaml.safe_load(fh) or {}
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except yaml.YAMLError as exc:
            raise ConfigError(f"config parse error in {path}: {exc}")
        if not isinstance(cfg, dict):
            raise ConfigError(f"config root in {path} must be a mapping")
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = value
    return cfg


def build_system(cfg: dict) -> ControlSystem:
    spec = cfg.get("system")
    if spec is None:
        raise ConfigError("missing 'system' section")
    if isinstance(spec, str):
        spec = {"name": spec}
    name = spec.get("name")
    if not name:
        raise ConfigError("system section needs a 'name'")
    params = spec.get("params", {}) or {}
    try:
        return make_system(name, **params)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"system: {exc}")


def build_Q(cfg: dict, n: int) -> CompactSet:
    boxes_cfg = cfg.get("Q")
    if not boxes_cfg:
        raise ConfigError("missing 'Q' box list")
    boxes = []
    for k, b in enumerate(boxes_cfg):
        try:
            boxes.append(Box(b["center"], b["radius"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"Q[{k}]: {exc}")
    Q = CompactSet(tuple(boxes))
    if Q.dim != n:
        raise ConfigError(f"Q dimension {Q.dim} does not match the system ({n})")
    return Q


def _require(cfg: dict, key: str, cast=float):
    if key not in cfg:
        raise ConfigError(f"missing required config key '{key}'")
    try:
        return cast(cfg[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config key '{key}': {exc}")


def corner_return_sweep(sys: ControlSystem, Q: CompactSet, tau: float,
                        values_per_axis: int = 9, dt: float = 0.01,
                        horizon_factor: float = 4.0) -> list:
    """Minimum first-return time from each corner of Q over constant controls.

    A corner whose best sampled return exceeds tau is evidence (within the
    candidate class) that Q is not recurrent for that window.
    """
    horizon = max(horizon_factor * tau, 5.0)
    u_grid = CandidateClass(values_per_axis, horizon).input_values(sys.U)
    results = []
    for box in Q.boxes:
        for corner in box.corners():
            best = math.inf
            for u in u_grid:
                t = first_return_time(sys, corner, ControlSignal.constant(u, horizon),
                                      Q, horizon, dt)
                if t is not None:
                    best = min(best, t)
                if best <= tau:
                    break
            results.append((corner, best))
    return results


def cmd_bounds(cfg: dict, out) -> int:
    sys_ = build_system(cfg)
    Q = build_Q(cfg, sys_.n)
    tau = _require(cfg, "tau")
    constants, region = lipschitz_region(sys_, Q, tau,
                                         seed=int(cfg.get("seed", 0)))
    upper = upper_bound(constants.L_tau, Q)
    lower = lower_bound(sys_, Q, constants.delta_tau,
                        samples_per_axis=int(cfg.get("samples_per_axis", 5)))
    sweep = corner_return_sweep(sys_, Q, tau,
                                values_per_axis=int(cfg.get("sweep_values", 9)),
                                dt=float(cfg.get("sweep_dt", 0.01)))
    bad = [(c, t) for c, t in sweep if t > tau + 1e-6]
    finite = not bad
    witness = None
    if bad:
        # worst corner; ties resolve toward the lexicographically largest
        witness = max(bad, key=lambda ct: (ct[1], tuple(ct[0])))[0]
    _record({"kind": "bounds", "system": sys_.name, "tau": tau,
             "F_Q": constants.F_Q, "L_tau": constants.L_tau,
             "delta_tau": constants.delta_tau,
             "upper_bits_per_s": upper, "lower_bits_per_s": lower,
             "verdict": "finite" if finite else "infinite",
             "witness": None if witness is None else list(witness),
             "corner_min_returns": [
                 {"corner": list(c), "min_return": (t if math.isfinite(t) else None)}
                 for c, t in sweep],
             "region_lo": list(region.lo), "region_hi": list(region.hi)}, out)
    return EXIT_OK


def cmd_spanning(cfg: dict, out) -> int:
    sys_ = build_system(cfg)
    Q = build_Q(cfg, sys_.n)
    horizons = cfg.get("horizons")
    if not horizons:
        raise ConfigError("missing 'horizons' list")
    eps_list = cfg.get("eps_list") or [_require(cfg, "eps")]
    tau_list = cfg.get("tau_list") or [_require(cfg, "tau")]
    cand_cfg = cfg.get("candidate") or {}
    cclass = CandidateClass(
        values_per_axis=int(cand_cfg.get("values_per_axis", 3)),
        segment_duration=float(cand_cfg.get("segment_duration", 1.0)))
    init_delta = float(cfg.get("init_delta", 0.25))
    max_candidates = int(cfg.get("max_candidates", 24))
    max_points = int(cfg.get("max_points", 64))
    mode = cfg.get("mode", "recurrence")
    if mode not in ("recurrence", "invariance"):
        raise ConfigError("mode must be 'recurrence' or 'invariance'")

    any_infeasible = False
    rate_points = {}
    for eps in eps_list:
        for tau in tau_list:
            for T in horizons:
                spec = RecurrenceSpec(Q, tau=0.0 if mode == "invariance" else tau,
                                      eps=eps, T=float(T))
                rec = {"kind": "spanning", "T": float(T), "eps": float(eps),
                       "tau": float(tau), "mode": mode}
                try:
                    inst = build_spanning_instance(
                        sys_, Q, spec, init_delta, cclass,
                        max_candidates=max_candidates, max_points=max_points)
                except InstanceTooLargeError as exc:
                    rec.update({"exact": False, "greedy_only": True,
                                "note": str(exc)})
                    _record(rec, out)
                    continue
                r, chosen = min_spanning_cardinality(inst)
                feasible = math.isfinite(r)
                any_infeasible |= not feasible
                rec.update({"exact": True,
                            "r": (int(r) if feasible else None),
                            "feasible": feasible, "chosen": chosen,
                            "n_candidates": len(inst.candidates),
                            "n_points": len(inst.initial_points)})
                _record(rec, out)
                if feasible:
                    rate_points.setdefault((eps, tau), []).append(
                        (float(T), math.log2(r)))
    for (eps, tau), pts in sorted(rate_points.items()):
        if len({T for T, _ in pts}) >= 3:
            slope = float(np.polyfit([p[0] for p in pts],
                                     [p[1] for p in pts], 1)[0])
            _record({"kind": "rate_fit", "eps": eps, "tau": tau,
                     "rate_bits_per_s": slope, "n_points": len(pts)}, out)
    return EXIT_INFEASIBLE if any_infeasible else EXIT_OK


def _build_controller(cfg: dict, sys_: ControlSystem, Q: CompactSet,
                      tau: float, eps: float):
    if sys_.name != "double_integrator":
        raise ConfigError(
            "a validated reference controller is only available for the "
            "double_integrator system")
    return reference_controller_double_integrator(
        Q, tau, eps,
        dt=float(cfg.get("validation_dt", 0.01)),
        grid_delta=float(cfg.get("validation_grid_delta", 0.25)))


def cmd_simulate(cfg: dict, out) -> int:
    sys_ = build_system(cfg)
    Q = build_Q(cfg, sys_.n)
    tau = _require(cfg, "tau")
    eps = _require(cfg, "eps")
    alpha = float(cfg.get("alpha", 0.0))
    dt = float(cfg.get("dt", 1e-3))
    steps = int(cfg.get("steps", 100))
    seed = int(cfg.get("seed", 0))
    if "x0" in cfg:
        x0 = np.asarray(cfg["x0"], dtype=float)
    else:
        rng = np.random.default_rng(seed)
        box = Q.boxes[0]
        x0 = rng.uniform(box.lo + 0.1 * box.radius, box.hi - 0.1 * box.radius)
    controller = _build_controller(cfg, sys_, Q, tau, eps)
    log = run_episode(sys_, Q, controller, x0, eps, tau, alpha, steps, dt,
                      seed=seed)
    log_path = cfg.get("log_path")
    if log_path:
        log.to_jsonl(log_path)
    csv_path = cfg.get("csv_path")
    if csv_path:
        _export_csv(log, csv_path)
    rate = bit_rate(log) if steps >= 10 else None
    report = verify_guarantees(log)
    rec = {"kind": "episode_summary", "system": sys_.name, "steps": steps,
           "tau": tau, "eps": eps, "alpha": alpha, "dt": dt, "seed": seed,
           "x0": list(x0), "total_bits": log.total_bits,
           "log_path": log_path,
           "guarantees": {
               "state_in_ball": report.state_in_ball.passed,
               "tracking": report.tracking.passed,
               "hat_recurrent": bool(report.hat_recurrent.passed),
               "true_recurrent": bool(report.true_recurrent.passed),
               "worst_tracking_margin": report.tracking.worst_margin,
               "worst_ball_margin": report.state_in_ball.worst_margin}}
    if rate is not None:
        rec["bit_rate"] = {"measured": rate.measured_rate,
                           "steady_bits_per_step": rate.steady_bits_per_step,
                           "steady_rate": rate.steady_rate,
                           "asymptote": rate.asymptote,
                           "ceiling_gap": rate.ceiling_gap}
    else:
        rec["transient_only"] = True
    _record(rec, out)
    return EXIT_OK if report.all_passed else EXIT_GUARANTEE


def _export_csv(log, path: str):
    t_hat, x_hat = log.hat_trajectory()
    _, x_pl = log.plant_trajectory()
    n = x_hat.shape[1]
    header = ("t," + ",".join(f"x{i+1}" for i in range(n)) + ","
              + ",".join(f"xhat{i+1}" for i in range(n)))
    data = np.column_stack([t_hat, x_pl, x_hat])
    np.savetxt(path, data, delimiter=",", header=header, comments="")


def cmd_verify(log_path: str, cfg: dict, out) -> int:
    try:
        config, steps = load_step_records(log_path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read log: {exc}")
    failures = []

    # structural checks straight off the records
    alpha, tau, eps = config["alpha"], config["tau"], config["eps"]
    for k, s in enumerate(steps):
        if s.i != k:
            failures.append(f"record {k}: step index {s.i} out of order")
        expected_r = eps * math.exp(-k * alpha * tau)
        if abs(s.r - expected_r) > 1e-12 * max(expected_r, 1e-300):
            failures.append(f"step {k}: radius {s.r} != eps*exp(-i*alpha*tau)")
        try:
            if decode(s.bits, s.cover_size) != s.index:
                failures.append(f"step {k}: bits decode to a different index")
        except ProtocolError as exc:
            failures.append(f"step {k}: {exc}")
        margin = float(np.max(np.abs(s.x - s.S_center) - s.S_radius))
        if margin > 1e-9:
            failures.append(f"step {k}: x_i outside S_i by {margin:.3g}")

    # deterministic re-run for the trajectory clauses
    sys_ = make_system(config["system"])
    Q = CompactSet.box(config["Q_center"], config["Q_radius"])
    controller = _build_controller(cfg, sys_, Q, tau, eps)
    log = run_episode(sys_, Q, controller, np.asarray(config["x0"]), eps, tau,
                      alpha, len(steps), config["dt"], seed=config.get("seed", 0))
    for s, rs in zip(steps, log.steps):
        if s.index != rs.index or s.bits != rs.bits or \
                np.max(np.abs(s.x - rs.x)) > 1e-9:
            failures.append(f"step {s.i}: log diverges from deterministic re-run")
            break
    report = verify_guarantees(log)
    ok = not failures and report.all_passed
    _record({"kind": "verify", "log_path": log_path, "passed": bool(ok),
             "record_failures": failures,
             "clauses": {
                 "state_in_ball": report.state_in_ball.passed,
                 "tracking": report.tracking.passed,
                 "hat_recurrent": bool(report.hat_recurrent.passed),
                 "true_recurrent": bool(report.true_recurrent.passed)}}, out)
    return EXIT_OK if ok else EXIT_GUARANTEE


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="recurq",
        description="recurrence entropy bounds and quantized recurrence control")
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--out", help="output path (default stdout)")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--dt", type=float, help="override config dt")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("bounds", help="entropy bounds and finiteness verdict")
    sub.add_parser("spanning", help="spanning-set covers over a (T, eps, tau) grid")
    sub.add_parser("simulate", help="run a quantized-control episode")
    p_verify = sub.add_parser("verify", help="re-check an episode log")
    p_verify.add_argument("log", help="episode log (JSONL)")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config, {"seed": args.seed, "dt": args.dt})
    except ConfigError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return EXIT_CONFIG

    out = open(args.out, "w") if args.out else _sys.stdout
    try:
        if args.command == "bounds":
            return cmd_bounds(cfg, out)
        if args.command == "spanning":
            return cmd_spanning(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "verify":
            return cmd_verify(args.log, cfg, out)
        raise AssertionError(args.command)
    except ConfigError as exc:
        print(f"config error: {exc}", file=_sys.stderr)
        return EXIT_CONFIG
    except GuaranteeViolationError as exc:
        print(f"guarantee violation: {exc}", file=_sys.stderr)
        return EXIT_GUARANTEE
    finally:
        if args.out:
            out.close()


if __name__ == "__main__":
    raise SystemExit(main())
