"""
Command-line entry point.

Subcommands::

    chiralres synth --protocol analytic --s 2 --out s2.json
    chiralres simulate s2.json --out s2.csv
    chiralres verify s2.json --out s2_report.json
    chiralres compare --s-min 0.2 --s-max 5 --s-step 0.2 --out compare.csv
    chiralres sweep-theta --s-min 0.86 --s-max 1 --s-step 0.01
    chiralres baselines --s 0.5 1 2

Exit codes: 0 ok, 1 I/O or parse error, 2 domain error, 3 simulation does
not reproduce the declared objective, 4 certificate did not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .analytic import S_MIN, analytic_schedule, constant_schedule, delta_limit_duration, terminal_polar_angle
from .baselines import BaselineKind, baseline_duration, baseline_schedule
from .errors import BracketError, DomainError, PhaseSearchError
from .io import ScheduleFormatError, csv_text, dumps_json, dumps_schedule, load_schedule
from .optimizer import OptimizerConfig, minimize_time
from .pmp import certificate_search
from .spin import Chirality, propagate_schedule_3lv, schedule_objective, terminal_bloch

log = logging.getLogger("chiralres")

EXIT_OK, EXIT_IO, EXIT_DOMAIN, EXIT_MISMATCH, EXIT_CERT = 0, 1, 2, 3, 4
OBJECTIVE_TOL = 1e-7
THETA_TOL = 1e-8
PROTOCOLS = ("analytic", "constant", "numeric") + tuple(k.value for k in BaselineKind) + ("QPSQ", "PSQ2")

# flag name -> default, shared by flags and the --config file
DEFAULTS: dict[str, Any] = {
    "s": None,
    "s_min": None,
    "s_max": None,
    "s_step": None,
    "omega0": 1.0,
    "protocol": "analytic",
    "out": None,
    "seed": 0,
    "segments": 64,
    "samples": 64,
}


class CLIError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise CLIError(EXIT_IO, f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise CLIError(EXIT_IO, f"config {path}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise CLIError(EXIT_IO, f"config {path}: top level must be an object")
    return {k.replace("-", "_"): v for k, v in data.items()}


def _resolve(args: argparse.Namespace) -> dict:
    """Merge defaults < config file < command-line flags."""
    cfg = dict(DEFAULTS)
    cfg["optimizer"] = {}
    cfg.update(_load_config(getattr(args, "config", None)))
    for key, value in vars(args).items():
        if key in ("config", "command", "func") or value is None:
            continue
        cfg[key] = value
    return cfg


def _optimizer_config(cfg: dict) -> OptimizerConfig:
    block = dict(cfg.get("optimizer") or {})
    block.setdefault("seed", int(cfg["seed"]))
    block.setdefault("n_segments", int(cfg["segments"]))
    block["seed"] = int(cfg["seed"]) if cfg.get("seed") is not None else block["seed"]
    block["n_segments"] = int(cfg["segments"]) if cfg.get("segments") is not None else block["n_segments"]
    try:
        return OptimizerConfig.from_dict(block)
    except (TypeError, ValueError) as exc:
        raise CLIError(EXIT_IO, f"optimizer config: {exc}") from None


def s_grid(cfg: dict) -> list[float]:
    """Explicit ``s`` values, or an inclusive ``[s_min, s_max]`` grid with ``s_step``."""
    s = cfg.get("s")
    if s is not None:
        values = [float(v) for v in (s if isinstance(s, (list, tuple)) else [s])]
        if not values:
            raise CLIError(EXIT_DOMAIN, "empty s list")
        return values
    lo, hi, step = cfg.get("s_min"), cfg.get("s_max"), cfg.get("s_step")
    if lo is None or hi is None or step is None:
        raise CLIError(EXIT_DOMAIN, "give --s or all of --s-min/--s-max/--s-step")
    lo, hi, step = float(lo), float(hi), float(step)
    if not step > 0:
        raise CLIError(EXIT_DOMAIN, f"--s-step must be positive, got {step}")
    if hi < lo:
        raise CLIError(EXIT_DOMAIN, f"empty range: s_max={hi} < s_min={lo}")
    n = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 12) for i in range(n)]


def _single_s(cfg: dict) -> float:
    s = cfg.get("s")
    if isinstance(s, (list, tuple)):
        if len(s) != 1:
            raise CLIError(EXIT_DOMAIN, "exactly one --s value is needed here")
        s = s[0]
    if s is None:
        raise CLIError(EXIT_DOMAIN, "--s is required")
    return float(s)


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text, encoding="utf-8")
    except OSError as exc:
        raise CLIError(EXIT_IO, f"cannot write {out}: {exc.strerror}") from None


def _read_schedule(path: str):
    try:
        return load_schedule(path)
    except ScheduleFormatError as exc:
        raise CLIError(EXIT_IO, str(exc)) from None


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def build_schedule(protocol: str, s: float | None, omega0: float, opt_cfg: OptimizerConfig | None = None):
    """Schedule for ``protocol``; raises :class:`DomainError` outside its range."""
    if protocol == "constant":
        return constant_schedule(omega0).schedule
    if s is None:
        raise DomainError(f"--s is required for protocol {protocol!r}")
    if protocol == "analytic":
        if s < S_MIN:
            raise DomainError(
                f"no closed form for s={s} < {S_MIN}; use --protocol numeric"
            )
        sol = analytic_schedule(s, omega0)
        sched = sol.schedule
        sched.meta["trace"] = sol.trace.to_dict()
        return sched
    if protocol == "numeric":
        try:
            res = minimize_time(s, omega0, opt_cfg)
        except BracketError as exc:
            raise DomainError(str(exc)) from None
        sched = res.schedule
        sched.meta.update(protocol="numeric", s=s, optimizer=res.summary())
        if not res.converged:
            log.warning("optimizer did not converge at s=%g (residual %.3g)", s, res.constraint_residual)
        return sched
    try:
        kind = BaselineKind.parse(protocol)
    except ValueError:
        raise DomainError(f"unknown protocol {protocol!r}") from None
    try:
        return baseline_schedule(kind, s, omega0)
    except PhaseSearchError as exc:
        raise DomainError(str(exc)) from None


def cmd_synth(cfg: dict) -> int:
    protocol = str(cfg["protocol"])
    s = None if protocol == "constant" else _single_s(cfg)
    sched = build_schedule(protocol, s, float(cfg["omega0"]), _optimizer_config(cfg))
    sched.meta["objective"] = schedule_objective(sched) if sched.segments else 0.0
    sched.meta.setdefault("trace", None)
    _emit(dumps_schedule(sched), cfg.get("out"))
    return EXIT_OK


SIMULATE_COLUMNS = ("t", "x_plus", "y_plus", "z_plus", "x_minus", "y_minus", "z_minus", "p3_plus", "p3_minus")


def simulate_rows(sched, samples: int = 64) -> np.ndarray:
    """Trajectory table in :data:`SIMULATE_COLUMNS` order from the three-level model."""
    left = propagate_schedule_3lv(sched, Chirality.L, samples_per_segment=samples)
    right = propagate_schedule_3lv(sched, Chirality.R, samples_per_segment=samples)
    n = len(left.times)
    if sched.reducible:
        bl, br = left.bloch(), right.bloch()
    else:
        bl = br = np.full((n, 3), np.nan)
    p3l = np.abs(left.states[:, 2]) ** 2
    p3r = np.abs(right.states[:, 2]) ** 2
    return np.column_stack([left.times, bl, br, p3l, p3r])


def cmd_simulate(cfg: dict) -> int:
    sched = _read_schedule(cfg["schedule"])
    rows = simulate_rows(sched, int(cfg["samples"]))
    _emit(csv_text(SIMULATE_COLUMNS, rows), cfg.get("out"))
    declared = sched.meta.get("objective")
    if declared is not None:
        reached = abs(rows[-1, 7] - rows[-1, 8])
        if abs(reached - float(declared)) > OBJECTIVE_TOL:
            raise CLIError(
                EXIT_MISMATCH,
                f"simulated objective {reached:.12g} differs from declared {float(declared):.12g}",
            )
    return EXIT_OK


COMPARE_COLUMNS = ("s", "T_optimal", "T_PQS", "T_PSQ", "T_QPSQ", "T_PSQ2", "T_lower_bound", "source")


def compare_row(s: float, omega0: float, opt_cfg: OptimizerConfig) -> tuple[list, bool]:
    baselines = [baseline_duration(k, s, omega0) for k in BaselineKind]
    ok = True
    if s >= S_MIN:
        T, source = analytic_schedule(s, omega0).total_T, "analytic"
    else:
        try:
            res = minimize_time(s, omega0, opt_cfg)
            T, ok = res.total_T, res.converged
            source = "numeric" if ok else "numeric-unconverged"
        except BracketError:
            T, ok, source = math.nan, False, "numeric-failed"
    return [s, T, *baselines, delta_limit_duration(omega0), source], ok


def cmd_compare(cfg: dict) -> int:
    grid = s_grid(cfg)
    omega0 = float(cfg["omega0"])
    if any(not s > 0 for s in grid):
        raise CLIError(EXIT_DOMAIN, "all s values must be positive")
    opt_cfg = _optimizer_config(cfg)
    rows, warnings = [], 0
    for s in grid:
        row, ok = compare_row(s, omega0, opt_cfg)
        rows.append(row)
        warnings += not ok
    _emit(csv_text(COMPARE_COLUMNS, rows), cfg.get("out"))
    if warnings:
        print(f"warning: {warnings} row(s) without a converged optimum", file=sys.stderr)
    return EXIT_OK


def cmd_sweep_theta(cfg: dict) -> int:
    grid = s_grid(cfg)
    bad = [s for s in grid if not S_MIN <= s <= 1.0]
    if bad:
        raise CLIError(EXIT_DOMAIN, f"s values outside [{S_MIN}, 1]: {bad}")
    rows = []
    for s in grid:
        theta = terminal_polar_angle(s)
        _, r_minus = terminal_bloch(analytic_schedule(s).schedule)
        theta_sim = float(np.arccos(np.clip(r_minus[2], -1.0, 1.0)))
        if abs(theta - theta_sim) > THETA_TOL:
            raise CLIError(EXIT_MISMATCH, f"s={s}: theta {theta:.12g} vs simulated {theta_sim:.12g}")
        rows.append([s, theta])
    _emit(csv_text(("s", "theta"), rows), cfg.get("out"))
    return EXIT_OK


def cmd_verify(cfg: dict) -> int:
    sched = _read_schedule(cfg["schedule"])
    report = certificate_search(sched, seed=int(cfg["seed"]))
    doc = report.to_dict()
    doc["protocol"] = sched.meta.get("protocol")
    doc["s"] = sched.meta.get("s", sched.ratio)
    _emit(dumps_json(doc), cfg.get("out"))
    if not report.converged:
        print(f"certificate not converged: {report.message}", file=sys.stderr)
        return EXIT_CERT
    return EXIT_OK


def cmd_baselines(cfg: dict) -> int:
    grid = s_grid(cfg)
    omega0 = float(cfg["omega0"])
    rows = []
    for s in grid:
        if not s > 0:
            raise CLIError(EXIT_DOMAIN, f"s must be positive, got {s}")
        durations = {k: baseline_duration(k, s, omega0) for k in BaselineKind}
        best = min(durations, key=durations.get)
        rows.append([s, *durations.values(), best.value])
    _emit(csv_text(("s", "T_PQS", "T_PSQ", "T_QPSQ", "T_PSQ2", "fastest"), rows), cfg.get("out"))
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file mirroring the flags; flags take precedence")
    common.add_argument("--omega0", type=float, help="Raman amplitude bound (default 1)")
    common.add_argument("--out", help="output path (default: stdout)")
    common.add_argument("--seed", type=int, help="optimizer / certificate seed (default 0)")
    common.add_argument("--segments", type=int, help="free-form segment count (default 64)")
    common.add_argument("-v", "--verbose", action="store_true")

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--s", type=float, nargs="+", help="explicit ratio values Omega1/Omega0")
    grid.add_argument("--s-min", type=float)
    grid.add_argument("--s-max", type=float)
    grid.add_argument("--s-step", type=float)

    ap = argparse.ArgumentParser(prog="chiralres", description="Minimum-time chiral resolution schedules.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="build a schedule file")
    p.add_argument("--s", type=float, nargs=1)
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("simulate", parents=[common], help="trajectory CSV of a schedule file")
    p.add_argument("schedule")
    p.add_argument("--samples", type=int, help="samples per segment (default 64)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", parents=[common, grid], help="optimal vs baseline durations")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep-theta", parents=[common, grid], help="terminal polar angle of R")
    p.set_defaults(func=cmd_sweep_theta)

    p = sub.add_parser("verify", parents=[common], help="PMP certificate report")
    p.add_argument("schedule")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("baselines", parents=[common, grid], help="baseline durations table")
    p.set_defaults(func=cmd_baselines)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    func = args.func
    try:
        cfg = _resolve(args)
        return func(cfg)
    except CLIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    raise SystemExit(main())
