"""
Maximum-principle machinery for the minimum-time resolution problem.

States ``r_pm`` and adjoints ``lambda_pm`` obey the same rotation
``dv/dt = B_pm x v / 2``. With ``L_pm = r_pm x lambda_pm``,
``S = L_+ + L_-`` and ``D = L_+ - L_-`` the control Hamiltonian reads::

    H_c = -1 + (S_x Omega_p + D_y Omega_q + S_z Omega_s) / 2

so ``S_x``, ``D_y`` and ``S_z`` are the switching functions of P, Q and S.

:func:`certificate_search` looks for initial adjoints under which a given
schedule satisfies the necessary conditions: ``H_c = 0`` throughout,
transversality ``lambda_-y(T) = lambda_-z(T) = 0``, bang controls agreeing in
sign with their switching functions, and switching functions vanishing
wherever a control is not at a bound. A converged report means the schedule
is *consistent with* the maximum principle; it is not a proof of optimality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize

from .spin import (
    Chirality,
    PulseSchedule,
    PulseSegment,
    chiral_fields,
    rotation_matrices,
    schedule_objective,
)

E_Z = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class AdjointPair:
    lambda_plus: np.ndarray
    lambda_minus: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.lambda_plus, self.lambda_minus])

    @classmethod
    def from_vector(cls, v) -> "AdjointPair":
        v = np.asarray(v, dtype=float)
        return cls(v[:3].copy(), v[3:].copy())


@dataclass(frozen=True)
class VectorTrajectory:
    times: np.ndarray
    segment: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class SwitchTrajectory:
    """Sampled switching vectors. ``segment[i]`` is the segment owning sample i;
    segment boundaries appear once for each neighbouring segment."""

    times: np.ndarray
    segment: np.ndarray
    S: np.ndarray
    D: np.ndarray
    L_plus: np.ndarray
    L_minus: np.ndarray
    r_plus: np.ndarray
    r_minus: np.ndarray


@dataclass
class CertificateReport:
    hc_residual: float
    sign_violations: int
    singular_violations: float
    transversality_residual: float
    found_adjoints: AdjointPair | None
    converged: bool
    max_sign_violation: float = 0.0
    total_residual: float = float("inf")
    min_switch_magnitude: float = float("nan")
    message: str = ""
    arcs: list = field(default_factory=list)

    @property
    def verdict(self) -> str:
        return "consistent with PMP" if self.converged else "not certified"

    def to_dict(self) -> dict:
        adj = self.found_adjoints
        return {
            "verdict": self.verdict,
            "converged": self.converged,
            "hc_residual": self.hc_residual,
            "sign_violations": self.sign_violations,
            "max_sign_violation": self.max_sign_violation,
            "singular_violations": self.singular_violations,
            "transversality_residual": self.transversality_residual,
            "total_residual": self.total_residual,
            "min_switch_magnitude": self.min_switch_magnitude,
            "found_adjoints": None
            if adj is None
            else {"lambda_plus": adj.lambda_plus.tolist(), "lambda_minus": adj.lambda_minus.tolist()},
            "arcs": self.arcs,
            "message": self.message,
        }


def _skew(v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1], out[..., 0, 2] = -v[..., 2], v[..., 1]
    out[..., 1, 0], out[..., 1, 2] = v[..., 2], -v[..., 0]
    out[..., 2, 0], out[..., 2, 1] = -v[..., 1], v[..., 0]
    return out


def _sampled_flows(sched: PulseSchedule, samples: int):
    """Flow matrices ``Phi(t)`` (state at t = Phi(t) state at 0) for both
    chiralities at ``samples + 1`` points per segment.

    Returns times ``(n, m)``, flows ``(2, n, m, 3, 3)`` and end flow ``(2, 3, 3)``.
    """
    durs = sched.durations
    n = len(durs)
    frac = np.arange(samples + 1) / samples
    offs = durs[:, None] * frac[None, :]
    starts = np.concatenate([[0.0], np.cumsum(durs)[:-1]])
    fields = chiral_fields(sched.controls())
    local = rotation_matrices(np.broadcast_to(fields[:, :, None, :], (2, n, samples + 1, 3)), offs[None])
    flows = np.empty_like(local)
    end = np.empty((2, 3, 3))
    for c in range(2):
        acc = np.eye(3)
        for k in range(n):
            flows[c, k] = local[c, k] @ acc
            acc = flows[c, k, -1]
        end[c] = acc
    return starts[:, None] + offs, flows, end


def _vector_path(sched: PulseSchedule, chi, v0, samples: int) -> VectorTrajectory:
    v0 = np.asarray(v0, dtype=float)
    if not sched.segments:
        return VectorTrajectory(np.array([0.0]), np.array([-1]), v0[None].copy())
    times, flows, _ = _sampled_flows(sched, samples)
    c = 0 if int(chi) == 1 else 1
    vals = flows[c] @ v0
    n, m = times.shape
    seg = np.repeat(np.arange(n), m)
    return VectorTrajectory(times.ravel(), seg, vals.reshape(-1, 3))


def propagate_adjoint(
    sched: PulseSchedule, chi: Chirality | int, lambda0, samples_per_segment: int = 128
) -> VectorTrajectory:
    """Exact adjoint trajectory; the adjoint rotates exactly like the state."""
    return _vector_path(sched, chi, lambda0, samples_per_segment)


def switching_functions(S: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Stack ``(S_x, D_y, S_z)``, the coefficients of ``(Omega_p, Omega_q, Omega_s)``."""
    return np.stack([S[..., 0], D[..., 1], S[..., 2]], axis=-1)


def switch_trajectory(
    sched: PulseSchedule, adj0: AdjointPair, samples_per_segment: int = 128
) -> SwitchTrajectory:
    """Sample ``S`` and ``D`` as cross products of propagated states and adjoints,
    both started at ``t = 0`` (states from the north pole)."""
    rp = _vector_path(sched, Chirality.L, E_Z, samples_per_segment)
    rm = _vector_path(sched, Chirality.R, E_Z, samples_per_segment)
    lp = _vector_path(sched, Chirality.L, adj0.lambda_plus, samples_per_segment)
    lm = _vector_path(sched, Chirality.R, adj0.lambda_minus, samples_per_segment)
    Lp = np.cross(rp.values, lp.values)
    Lm = np.cross(rm.values, lm.values)
    return SwitchTrajectory(rp.times, rp.segment, Lp + Lm, Lp - Lm, Lp, Lm, rp.values, rm.values)


def sd_rhs(S, D, controls) -> tuple[np.ndarray, np.ndarray]:
    """Right-hand sides of the six sum/difference equations."""
    S, D, u = (np.asarray(a, dtype=float) for a in (S, D, controls))
    op, oq, os_ = u[..., 0], u[..., 1], u[..., 2]
    sx, sy, sz = S[..., 0], S[..., 1], S[..., 2]
    dx, dy, dz = D[..., 0], D[..., 1], D[..., 2]
    dS = np.stack(
        [-0.5 * (os_ * sy - oq * dz), 0.5 * (os_ * sx - op * sz), -0.5 * (oq * dx - op * sy)], axis=-1
    )
    dD = np.stack(
        [-0.5 * (os_ * dy - oq * sz), 0.5 * (os_ * dx - op * dz), -0.5 * (oq * sx - op * dy)], axis=-1
    )
    return dS, dD


def control_hamiltonian(S, D, seg: PulseSegment | np.ndarray) -> np.ndarray | float:
    """``-1 + (S_x Omega_p + D_y Omega_q + S_z Omega_s) / 2``."""
    if isinstance(seg, PulseSegment):
        u = np.array([seg.omega_p, seg.omega_q, seg.omega_s])
    else:
        u = np.asarray(seg, dtype=float)
    val = -1.0 + 0.5 * np.sum(switching_functions(np.asarray(S), np.asarray(D)) * u, axis=-1)
    return float(val) if np.ndim(val) == 0 else val


# --------------------------------------------------------------------------
# certificate search
# --------------------------------------------------------------------------


def _arc_signs(controls: np.ndarray, omega0: float, omega1: float) -> np.ndarray:
    """+-1 where a control sits on its bound, 0 where it does not (singular)."""
    bounds = np.array([omega0, omega1, omega0])
    on_bound = np.abs(controls) >= bounds * (1 - 1e-9)
    return np.where(on_bound, np.sign(controls), 0.0)


class _CertificateProblem:
    """Everything that does not depend on the unknown initial adjoints."""

    def __init__(self, sched: PulseSchedule, samples: int):
        segs = [s for s in sched.segments if s.duration > 0]
        self.sched = PulseSchedule(sched.omega0_bound, sched.omega1_bound, segs)
        self.controls = self.sched.controls()
        self.signs = _arc_signs(self.controls, sched.omega0_bound, sched.omega1_bound)
        self.samples = samples
        times, flows, end = _sampled_flows(self.sched, samples)
        self.times = times
        n, m = times.shape
        # r(t) x (Phi(t) lambda0) = [r(t)]_x Phi(t) lambda0 is linear in lambda0
        r = flows @ E_Z
        self.M = _skew(r) @ flows  # (2, n, m, 3, 3)
        self.end = end
        w = 1 / np.sqrt(m)
        self.weight = w
        mid = m // 2
        self.mid = mid

    def switch(self, lam: np.ndarray) -> np.ndarray:
        """Switching functions ``(n, m, 3)`` for stacked adjoints ``lam`` (6,)."""
        Lp = self.M[0] @ lam[:3]
        Lm = self.M[1] @ lam[3:]
        return switching_functions(Lp + Lm, Lp - Lm)

    def h0(self, unit: np.ndarray) -> float:
        g = self.switch(unit)[0, 0]
        return 0.5 * float(g @ self.controls[0])

    def scaled(self, v: np.ndarray) -> np.ndarray | None:
        nrm = np.linalg.norm(v)
        if nrm == 0:
            return None
        unit = v / nrm
        h = self.h0(unit)
        if h <= 1e-12:
            return None
        return unit / h

    def residual(self, v: np.ndarray) -> np.ndarray:
        n, m = self.times.shape
        size = 2 + n + 2 * n * m * 3
        lam = self.scaled(v)
        if lam is None:
            nrm = np.linalg.norm(v)
            h = self.h0(v / nrm) if nrm > 0 else 0.0
            return np.full(size, 10.0 + (1e-12 - h))
        g = self.switch(lam)
        hc = -1 + 0.5 * np.sum(g * self.controls[:, None, :], axis=-1)
        lam_end = self.end[1] @ lam[3:]
        singular = np.where(self.signs[:, None, :] == 0, g, 0.0) * self.weight
        viol = np.maximum(0.0, -self.signs[:, None, :] * g) * self.weight
        return np.concatenate([lam_end[1:], hc[:, self.mid], singular.ravel(), viol.ravel()])

    def report(self, v: np.ndarray | None, tol: float) -> CertificateReport:
        lam = None if v is None else self.scaled(v)
        if lam is None:
            return CertificateReport(
                np.inf, 0, np.inf, np.inf, None, False, message="no admissible adjoint normalization found"
            )
        g = self.switch(lam)
        hc = -1 + 0.5 * np.sum(g * self.controls[:, None, :], axis=-1)
        lam_end = self.end[1] @ lam[3:]
        sing_mask = np.broadcast_to(self.signs[:, None, :] == 0, g.shape)
        singular = float(np.max(np.abs(g[sing_mask]))) if sing_mask.any() else 0.0
        interior = np.zeros(g.shape, dtype=bool)
        interior[:, 1:-1, :] = True
        signed = -self.signs[:, None, :] * g
        bang = (self.signs[:, None, :] != 0) & interior
        n_viol = int(np.count_nonzero(bang & (signed > 1e-9)))
        max_viol = float(np.max(np.where(bang, np.maximum(signed, 0.0), 0.0))) if bang.any() else 0.0
        trans = float(np.hypot(lam_end[1], lam_end[2]))
        hc_res = float(np.max(np.abs(hc)))
        total = hc_res + singular + trans + max_viol
        arcs = [
            {"segment": k, "p": _arc_name(sg[0]), "q": _arc_name(sg[1]), "s": _arc_name(sg[2])}
            for k, sg in enumerate(self.signs)
        ]
        return CertificateReport(
            hc_residual=hc_res,
            sign_violations=n_viol,
            singular_violations=singular,
            transversality_residual=trans,
            found_adjoints=AdjointPair.from_vector(lam),
            converged=bool(total < tol),
            max_sign_violation=max_viol,
            total_residual=total,
            min_switch_magnitude=float(np.min(np.max(np.abs(g), axis=-1))),
            arcs=arcs,
        )


def _arc_name(sign: float) -> str:
    return {1.0: "bang+", -1.0: "bang-"}.get(float(sign), "singular")


def certificate_search(
    sched: PulseSchedule,
    n_starts: int = 32,
    seed: int = 0,
    samples_per_segment: int = 128,
    tol: float = 1e-5,
    min_objective: float = 1 - 1e-6,
) -> CertificateReport:
    """Search initial adjoints certifying ``sched`` against the necessary conditions.

    Starts are ``n_starts`` random unit 6-vectors from ``numpy.random.default_rng(seed)``;
    each is refined by least squares and the best one polished with Nelder-Mead.
    Non-convergence is reported, never raised.
    """
    if not sched.reducible:
        return CertificateReport(
            np.inf, 0, np.inf, np.inf, None, False,
            message="precondition failed: non-default phases; the adjoint model needs a two-level schedule",
        )
    obj = schedule_objective(sched) if sched.segments else 0.0
    if obj < min_objective:
        return CertificateReport(
            np.inf, 0, np.inf, np.inf, None, False,
            message=f"precondition failed: schedule objective {obj:.12g} < {min_objective}",
        )
    problem = _CertificateProblem(sched, samples_per_segment)
    rng = np.random.default_rng(seed)
    starts = rng.normal(size=(n_starts, 6))
    starts /= np.linalg.norm(starts, axis=1, keepdims=True)

    best_v, best_cost = None, np.inf
    for x0 in starts:
        try:
            sol = least_squares(problem.residual, x0, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=600)
        except ValueError:  # pragma: no cover - non-finite residual
            continue
        if sol.cost < best_cost:
            best_v, best_cost = sol.x, sol.cost
        if problem.report(sol.x, tol).converged:
            break
    if best_v is not None:
        rep = problem.report(best_v, tol)
        if not rep.converged:
            cost = lambda v: float(np.sum(problem.residual(v) ** 2))
            polish = minimize(cost, best_v, method="Nelder-Mead",
                              options={"xatol": 1e-13, "fatol": 1e-20, "maxiter": 4000})
            if polish.fun < best_cost:
                best_v = polish.x
    rep = problem.report(best_v, tol)
    if not rep.message:
        rep.message = rep.verdict
    return rep


# --------------------------------------------------------------------------
# first-order timing probe
# --------------------------------------------------------------------------


@dataclass
class ProbeReport:
    base_T: float
    min_T: float
    passed: bool
    entries: list


def local_optimality_probe(sched: PulseSchedule, delta: float = 1e-3, feas_tol: float = 1e-9) -> ProbeReport:
    """Perturb each stage duration by ``+-delta`` and re-solve the others.

    For every perturbation the remaining durations are re-optimized for
    minimum total time subject to ``x_+(T) = 1`` and ``x_-(T) = 0``. The probe
    passes when no feasible perturbed schedule is shorter than the original
    by more than 1e-6. Infeasible perturbations are recorded as such.
    """
    from .optimizer import terminal_constraints, terminal_vectors

    controls = sched.controls()
    d0 = sched.durations
    base_T = float(np.sum(d0))
    entries = []
    min_T = base_T
    for i in range(len(d0)):
        for sign in (+1, -1):
            di = d0[i] + sign * delta
            if di < 0:
                entries.append({"stage": i, "shift": sign * delta, "status": "negative"})
                continue
            free = [k for k in range(len(d0)) if k != i]

            def full(x, di=di, free=free, i=i):
                d = np.empty_like(d0)
                d[i] = di
                d[free] = x
                return d

            def eq(x, full=full):
                return terminal_constraints(controls, full(x))[0]

            def eq_jac(x, full=full, free=free):
                return terminal_constraints(controls, full(x))[1][:, free]

            x0 = d0[free]
            if not free:
                T_new, ok = di, float(np.max(np.abs(eq(x0)))) < feas_tol
                x = x0
            else:
                ls = least_squares(eq, x0, jac=eq_jac, bounds=(0, np.inf), xtol=1e-15, ftol=1e-15, gtol=1e-15)
                x = ls.x
                if len(free) > 1:
                    res = minimize(
                        lambda y: float(np.sum(y)), x, jac=lambda y: np.ones_like(y), method="SLSQP",
                        bounds=[(0, None)] * len(free),
                        constraints=[{"type": "eq", "fun": eq, "jac": eq_jac}],
                        options={"ftol": 1e-14, "maxiter": 300},
                    )
                    if np.max(np.abs(eq(res.x))) < feas_tol and np.sum(res.x) < np.sum(x):
                        x = res.x
                ok = float(np.max(np.abs(eq(x)))) < feas_tol
                T_new = di + float(np.sum(x))
            rp, _ = terminal_vectors(controls, full(x))
            ok = ok and rp[0] > 0
            entries.append({"stage": i, "shift": sign * delta, "status": "feasible" if ok else "infeasible",
                            "T": T_new if ok else None})
            if ok:
                min_T = min(min_T, T_new)
    return ProbeReport(base_T, min_T, bool(min_T >= base_T - 1e-6), entries)

