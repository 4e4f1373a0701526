"""
Numerical minimum-time control.

Two levels:

- *Free form.* Controls are piecewise constant on ``n`` uniform segments of a
  fixed horizon ``T``. :func:`feasibility_at_fixed_T` minimizes the terminal
  cost ``J = (1 - x_+(T))^2 + x_-(T)^2`` inside the amplitude box, with the
  gradient assembled from segment integrals of the switching functions
  (``dJ/dOmega_p = int S_x / 2`` and so on, with cost adjoints
  ``lambda_pm(T) = dJ/dr_pm(T)``). :func:`minimize_time` bisects on ``T``.
- *Fixed structure.* Given the sequence of bang/zero control triples,
  :func:`optimize_timings` finds stage durations of minimum total time that
  hit ``x_+(T) = 1``, ``x_-(T) = 0`` exactly.

The free-form solution is turned into a structure by :func:`extract_structure`
and refined with :func:`optimize_timings`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import least_squares, minimize

from ._kernels import constraints_uniform, cost_and_gradient_uniform
from .analytic import delta_limit_duration
from .baselines import best_baseline
from .errors import BracketError, DomainError
from .pmp import switching_functions
from .spin import PulseSchedule, chiral_fields, rotation_integrals, rotation_matrices, schedule_from_controls

log = logging.getLogger(__name__)

E_Z = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class StructureSpec:
    """Stage pattern with each control in {-bound, 0, +bound}."""

    stages: tuple[tuple[float, float, float], ...]
    durations: tuple[float, ...]
    omega0: float = 1.0
    omega1: float = 1.0
    unresolved_fraction: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(tuple(float(v) for v in st) for st in self.stages))
        object.__setattr__(self, "durations", tuple(float(d) for d in self.durations))
        if len(self.stages) != len(self.durations):
            raise ValueError("one duration per stage is required")
        bounds = (self.omega0, self.omega1, self.omega0)
        for st in self.stages:
            for v, b in zip(st, bounds):
                if not any(math.isclose(v, a, abs_tol=1e-12 * b) for a in (-b, 0.0, b)):
                    raise ValueError(f"stage value {v} is not in {{-{b}, 0, {b}}}")
        if any(d < 0 for d in self.durations):
            raise ValueError("stage durations must be >= 0")

    @property
    def controls(self) -> np.ndarray:
        return np.array(self.stages, dtype=float).reshape(-1, 3)

    def describe(self) -> list[str]:
        names = ("P", "Q", "S")
        bounds = (self.omega0, self.omega1, self.omega0)
        out = []
        for st in self.stages:
            parts = []
            for name, v, b in zip(names, st, bounds):
                parts.append(f"{name}{'+' if v > 0 else '-' if v < 0 else '0'}")
            out.append(" ".join(parts))
        return out


@dataclass
class OptimizationResult:
    schedule: PulseSchedule
    total_T: float
    constraint_residual: float
    iterations: int
    converged: bool
    extracted_structure: StructureSpec | None = None
    free_form_T: float | None = None
    refined: bool = False
    free_form_controls: np.ndarray | None = field(default=None, repr=False)
    bisection_T: float | None = None

    def summary(self) -> dict:
        st = self.extracted_structure
        return {
            "total_T": self.total_T,
            "free_form_T": self.free_form_T,
            "bisection_T": self.bisection_T,
            "refined": self.refined,
            "converged": self.converged,
            "constraint_residual": self.constraint_residual,
            "iterations": self.iterations,
            "structure": None if st is None else st.describe(),
            "unresolved_fraction": None if st is None else st.unresolved_fraction,
        }


@dataclass(frozen=True)
class OptimizerConfig:
    n_segments: int = 64
    restarts: int = 8
    seed: int = 0
    feas_threshold: float = 1e-8
    bisection_rtol: float = 1e-3
    structure_tol: float = 0.05
    refine: bool = True
    maxiter: int = 3000

    @classmethod
    def from_dict(cls, data: dict | None) -> "OptimizerConfig":
        data = dict(data or {})
        aliases = {"segments": "n_segments"}
        kw = {aliases.get(k, k): v for k, v in data.items()}
        unknown = set(kw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown optimizer settings: {sorted(unknown)}")
        return cls(**kw)


class Feasibility(NamedTuple):
    J_min: float
    controls: np.ndarray
    iterations: int = 0


# --------------------------------------------------------------------------
# dynamics kernels
# --------------------------------------------------------------------------


def _forward(controls: np.ndarray, durations: np.ndarray):
    fields = chiral_fields(controls)
    rots = rotation_matrices(fields, durations[None, :])
    n = len(durations)
    r = np.empty((2, n + 1, 3))
    r[:, 0] = E_Z
    for k in range(n):
        r[:, k + 1] = (rots[:, k] @ r[:, k, :, None])[..., 0]
    return fields, rots, r


def terminal_cost(controls: np.ndarray, T: float) -> float:
    controls = np.asarray(controls, dtype=float)
    dt = np.full(len(controls), T / len(controls))
    _, _, r = _forward(controls, dt)
    return float((1 - r[0, -1, 0]) ** 2 + r[1, -1, 0] ** 2)


def cost_and_gradient(controls: np.ndarray, T: float) -> tuple[float, np.ndarray]:
    """Terminal cost and its exact gradient for a uniform ``(n, 3)`` control table."""
    J, grad = cost_and_gradient_uniform(np.ascontiguousarray(controls, dtype=float), float(T))
    return float(J), grad


def cost_and_gradient_numpy(controls: np.ndarray, T: float) -> tuple[float, np.ndarray]:
    """Vectorized reference for :func:`cost_and_gradient` built on the spin-core helpers."""
    controls = np.asarray(controls, dtype=float)
    n = len(controls)
    dt = np.full(n, T / n)
    fields, rots, r = _forward(controls, dt)
    xp, xm = r[0, -1, 0], r[1, -1, 0]
    J = (1 - xp) ** 2 + xm**2
    lam = np.empty((2, n + 1, 3))
    lam[:, n] = [[-2 * (1 - xp), 0.0, 0.0], [2 * xm, 0.0, 0.0]]
    rots_t = np.swapaxes(rots, -1, -2)
    for k in range(n - 1, -1, -1):
        lam[:, k] = (rots_t[:, k] @ lam[:, k + 1, :, None])[..., 0]
    L0 = np.cross(r[:, :-1], lam[:, :-1])
    Lint = (rotation_integrals(fields, dt[None, :]) @ L0[..., None])[..., 0]
    grad = 0.5 * switching_functions(Lint[0] + Lint[1], Lint[0] - Lint[1])
    return float(J), grad


def terminal_constraints(controls: np.ndarray, durations: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(y_+(T), z_+(T), x_-(T))`` and its Jacobian with respect to the durations."""
    controls = np.asarray(controls, dtype=float)
    durations = np.asarray(durations, dtype=float)
    fields, rots, r = _forward(controls, durations)
    n = len(durations)
    jac = np.empty((2, 3, n))
    for c in range(2):
        after = np.eye(3)
        for k in range(n - 1, -1, -1):
            jac[c, :, k] = after @ (0.5 * np.cross(fields[c, k], r[c, k + 1]))
            after = after @ rots[c, k]
    vals = np.array([r[0, -1, 1], r[0, -1, 2], r[1, -1, 0]])
    return vals, np.stack([jac[0, 1], jac[0, 2], jac[1, 0]])


def terminal_vectors(controls, durations) -> tuple[np.ndarray, np.ndarray]:
    _, _, r = _forward(np.asarray(controls, dtype=float), np.asarray(durations, dtype=float))
    return r[0, -1], r[1, -1]


def _residual_norm(controls, durations) -> float:
    rp, rm = terminal_vectors(controls, durations)
    return float(max(abs(1 - rp[0]), abs(rp[1]), abs(rp[2]), abs(rm[0])))


# --------------------------------------------------------------------------
# free form
# --------------------------------------------------------------------------


def _box(n: int, omega0: float, omega1: float):
    lo = np.tile([-omega0, -omega1, -omega0], n)
    return [(l, -l) for l in lo]


def _lbfgsb(x0: np.ndarray, T: float, bounds, maxiter: int):
    n = len(x0) // 3

    def fun(x):
        J, g = cost_and_gradient(x.reshape(n, 3), T)
        return J, g.ravel()

    return minimize(
        fun, x0, jac=True, method="L-BFGS-B", bounds=bounds,
        options={"maxiter": maxiter, "ftol": 1e-22, "gtol": 1e-14, "maxcor": 30},
    )


def feasibility_at_fixed_T(
    s: float,
    omega0: float,
    T: float,
    n_segments: int = 64,
    restarts: int = 8,
    seed: int = 0,
    init: np.ndarray | None = None,
    stop_below: float = 0.0,
    maxiter: int = 3000,
) -> Feasibility:
    """Smallest terminal cost reachable in time ``T`` with ``n_segments`` uniform segments.

    Restarts draw uniform controls from ``numpy.random.default_rng(seed)``;
    ``init`` (if given) is tried first. The search stops early once
    ``J < stop_below``. Ties go to the lowest restart index.
    """
    if not T > 0:
        raise DomainError(f"horizon must be positive, got {T}")
    if n_segments < 4:
        raise DomainError("at least 4 segments are required")
    omega1 = s * omega0
    bounds = _box(n_segments, omega0, omega1)
    hi = np.array([b[1] for b in bounds])
    rng = np.random.default_rng(seed)
    starts = []
    if init is not None:
        starts.append(np.clip(np.asarray(init, dtype=float).ravel(), -hi, hi))
    n_random = max(restarts, 0 if starts else 1)
    starts.extend(rng.uniform(-1, 1, size=(n_random, 3 * n_segments)) * hi)
    best = None
    iters = 0
    for x0 in starts:
        res = _lbfgsb(x0, T, bounds, maxiter)
        iters += int(res.nit)
        if best is None or res.fun < best.fun:
            best = res
        if best.fun < stop_below:
            break
    return Feasibility(float(best.fun), best.x.reshape(n_segments, 3), iters)


def _polish_controls(
    controls: np.ndarray, T: float, omega0: float, omega1: float, max_iter: int = 60
) -> np.ndarray:
    """Projected minimum-norm Gauss-Newton on ``(y_+, z_+, x_-) = 0`` inside the box.

    Controls sitting on a bound with the step pointing outward are frozen
    for that iteration.
    """
    n = len(controls)
    hi = np.tile([omega0, omega1, omega0], n)
    x = np.clip(np.asarray(controls, dtype=float).ravel(), -hi, hi)
    for _ in range(max_iter):
        c, jac = constraints_uniform(x.reshape(n, 3), T)
        if np.max(np.abs(c)) < 1e-14:
            break
        jac = jac.reshape(3, -1)
        free = np.ones(x.size, dtype=bool)
        for _ in range(3):
            step = np.zeros_like(x)
            step[free] = -np.linalg.lstsq(jac[:, free], c, rcond=None)[0]
            blocked = free & (((x >= hi) & (step > 0)) | ((x <= -hi) & (step < 0)))
            if not blocked.any():
                break
            free &= ~blocked
        x = np.clip(x + step, -hi, hi)
    return x.reshape(n, 3)


def canonical_sign(controls: np.ndarray) -> np.ndarray:
    """Flip P and S together so that the first nonzero Raman field is negative.

    Reflecting y -> -y maps both trajectories onto solutions with P and S
    negated and leaves the terminal cost unchanged.
    """
    controls = np.array(controls, dtype=float)
    raman = controls[:, [0, 2]].ravel()
    nz = raman[np.abs(raman) > 1e-9]
    if nz.size and nz[0] > 0:
        controls[:, [0, 2]] *= -1
    return controls


def extract_structure(
    controls: np.ndarray,
    bounds: Sequence[float],
    tol: float = 0.05,
    dt: float | np.ndarray = 1.0,
) -> StructureSpec:
    """Classify each control into {-bound, 0, +bound} and run-length encode.

    ``bounds`` is ``(omega0, omega1)``; ``tol`` is relative to each bound.
    Segments with any control outside tolerance are unresolved: their time is
    split between the neighbouring stages and their share is reported as
    ``unresolved_fraction``.
    """
    controls = np.asarray(controls, dtype=float)
    omega0, omega1 = bounds
    b = np.array([omega0, omega1, omega0])
    n = len(controls)
    dts = np.broadcast_to(np.asarray(dt, dtype=float), (n,))
    levels = np.round(controls / b)
    ok = np.all(np.abs(controls - levels * b) <= tol * b, axis=1) & np.all(np.abs(levels) <= 1, axis=1)
    total = float(np.sum(dts))
    unresolved = float(np.sum(dts[~ok]) / total) if total > 0 else 0.0

    stages: list[list] = []  # [triple, duration]
    pending = 0.0
    for k in range(n):
        if not ok[k]:
            pending += dts[k]
            continue
        triple = tuple(levels[k] * b + 0.0)
        if stages and stages[-1][0] == triple:
            stages[-1][1] += pending + dts[k]
        elif stages:
            stages[-1][1] += pending / 2
            stages.append([triple, pending / 2 + dts[k]])
        else:
            stages.append([triple, pending + dts[k]])
        pending = 0.0
    if stages:
        stages[-1][1] += pending
    return StructureSpec(
        stages=[st for st, _ in stages],
        durations=[d for _, d in stages],
        omega0=omega0,
        omega1=omega1,
        unresolved_fraction=unresolved,
    )


# --------------------------------------------------------------------------
# fixed structure
# --------------------------------------------------------------------------


def optimize_timings(
    structure: StructureSpec,
    s: float,
    omega0: float = 1.0,
    init_durations: Sequence[float] | None = None,
    tol: float = 1e-8,
) -> OptimizationResult:
    """Minimum-time stage durations for a fixed bang/zero pattern."""
    if not structure.stages:
        raise DomainError("structure has no stages")
    controls = structure.controls
    d0 = np.asarray(init_durations if init_durations is not None else structure.durations, dtype=float)
    if np.any(d0 < 0):
        raise DomainError("initial durations must be >= 0")

    fun = lambda d: terminal_constraints(controls, d)[0]
    jac = lambda d: terminal_constraints(controls, d)[1]
    sol = least_squares(fun, d0, jac=jac, bounds=(0, np.inf), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    d = sol.x
    iters = int(sol.nfev)
    if len(d) > 3:
        opt = minimize(
            lambda x: float(np.sum(x)), d, jac=lambda x: np.ones_like(x), method="SLSQP",
            bounds=[(0, None)] * len(d), constraints=[{"type": "eq", "fun": fun, "jac": jac}],
            options={"ftol": 1e-15, "maxiter": 500},
        )
        iters += int(opt.nit)
        if np.max(np.abs(fun(opt.x))) < 1e-6:
            tight = least_squares(fun, np.maximum(opt.x, 0), jac=jac, bounds=(0, np.inf),
                                  xtol=1e-15, ftol=1e-15, gtol=1e-15)
            if _residual_norm(controls, tight.x) < tol and np.sum(tight.x) < np.sum(d) + 1e-12:
                d = tight.x
    residual = _residual_norm(controls, d)
    sched = schedule_from_controls(
        controls, d, omega0, s * omega0, meta={"protocol": "numeric", "s": s}
    )
    return OptimizationResult(
        schedule=sched,
        total_T=float(np.sum(d)),
        constraint_residual=residual,
        iterations=iters,
        converged=bool(residual < tol),
        extracted_structure=structure,
    )


# --------------------------------------------------------------------------
# minimum time
# --------------------------------------------------------------------------


def minimize_time(s: float, omega0: float = 1.0, config: OptimizerConfig | None = None) -> OptimizationResult:
    """Bisect on the horizon, extract the bang/zero structure, refine the timings.

    The bracket is ``[pi / (sqrt 2 Omega_0), fastest baseline duration]``.
    """
    if not s > 0:
        raise DomainError(f"bound ratio s must be positive, got {s}")
    cfg = config or OptimizerConfig()
    omega1 = s * omega0
    n = cfg.n_segments

    def feas(T, init=None, stop=True):
        return feasibility_at_fixed_T(
            s, omega0, T, n, cfg.restarts, cfg.seed, init=init,
            stop_below=cfg.feas_threshold * 1e-3 if stop else 0.0, maxiter=cfg.maxiter,
        )

    lo = delta_limit_duration(omega0)
    kind, hi = best_baseline(s, omega0)
    top = feas(hi)
    iters = top.iterations
    if top.J_min >= cfg.feas_threshold:
        raise BracketError(
            f"no feasible control found at the upper bracket T={hi:.6g} ({kind.value}); J_min={top.J_min:.3g}"
        )
    bottom = feas(lo, init=top.controls)
    iters += bottom.iterations
    if bottom.J_min < cfg.feas_threshold:
        raise BracketError(f"lower bracket T={lo:.6g} appears feasible (J_min={bottom.J_min:.3g})")

    best_controls = top.controls
    while hi - lo > cfg.bisection_rtol * hi:
        mid = 0.5 * (lo + hi)
        res = feas(mid, init=best_controls)
        iters += res.iterations
        log.debug("s=%g T=%.6f J=%.3g", s, mid, res.J_min)
        if res.J_min < cfg.feas_threshold:
            hi, best_controls = mid, res.controls
        else:
            lo = mid

    candidates = []
    # J < threshold leaves residuals of order sqrt(J); find the shortest
    # horizon at which a table polishes to an exact solution
    T_bisect = hi

    def exact_at(T, table):
        trial = _polish_controls(table, T, omega0, omega1)
        dt_ = np.full(n, T / n)
        ok = _residual_norm(trial, dt_) < 1e-10 and terminal_vectors(trial, dt_)[0][0] > 0
        return ok, trial

    ok, polished = exact_at(T_bisect, best_controls)
    T_exact, T_bad = T_bisect, None
    step = cfg.bisection_rtol
    for _ in range(8):
        if ok:
            break
        T_bad = T_exact
        T_try = T_bisect * (1 + step)
        step *= 2
        ok, trial = exact_at(T_try, feas(T_try, init=polished).controls)
        if ok or T_bad == T_bisect:
            T_exact, polished = T_try, trial
    if ok and T_bad is not None:
        while T_exact - T_bad > cfg.bisection_rtol * T_exact:
            mid = 0.5 * (T_bad + T_exact)
            ok_mid, trial = exact_at(mid, feas(mid, init=polished).controls)
            if ok_mid:
                T_exact, polished = mid, trial
            else:
                T_bad = mid
    polished = canonical_sign(polished)
    dt = np.full(n, T_exact / n)
    free_res = _residual_norm(polished, dt)
    free_sched = schedule_from_controls(polished, dt, omega0, omega1, meta={"protocol": "numeric", "s": s})
    if free_res < 1e-8:
        candidates.append((T_exact, free_sched, free_res, False))

    # the table at the bisection horizon is usually the closest to bang/zero form
    structure = extract_structure(polished, (omega0, omega1), cfg.structure_tol, dt)
    best_refined = math.inf
    sources = [(canonical_sign(best_controls), T_bisect), (polished, T_exact)]
    for table, T_src in sources if cfg.refine else ():
        spec = extract_structure(table, (omega0, omega1), cfg.structure_tol, np.full(n, T_src / n))
        if not spec.stages:
            continue
        ref = optimize_timings(spec, s, omega0)
        iters += ref.iterations
        if ref.converged:
            candidates.append((ref.total_T, ref.schedule, ref.constraint_residual, True))
            if ref.total_T < best_refined:
                best_refined, structure = ref.total_T, spec

    if not candidates:
        return OptimizationResult(free_sched, T_exact, free_res, iters, False, structure, T_exact, False, polished, T_bisect)
    T_best, sched, resid, refined = min(candidates, key=lambda c: c[0])
    if refined:
        sched = PulseSchedule(
            sched.omega0_bound, sched.omega1_bound,
            [seg for seg in sched.segments if seg.duration > 1e-12], meta=sched.meta,
        )
    return OptimizationResult(
        sched, float(T_best), resid, iters, True, structure, T_exact, refined, polished, T_bisect
    )
