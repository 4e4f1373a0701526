"""
Closed-form minimum-time schedules.

Three regimes of the bound ratio ``s = Omega_1 / Omega_0``:

- ``s == 1``: constant controls ``P = S = -Omega_0``, ``Q = +Omega_0``.
- ``s >= 1``: Q-bang / Q-singular / Q-bang with both Raman fields at
  ``-Omega_0`` throughout.
- ``S_MIN <= s <= 1``: Q at ``+Omega_1`` throughout while the Raman fields go
  P-only / P and S / S-only.

Every intermediate angle of the derivation is returned in a
:class:`DerivationTrace` so that it can be inspected and tested.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError
from .spin import PulseSchedule, PulseSegment

S_MIN = 0.86
"""Smallest ratio for which the symmetric three-stage lower-branch form is used."""

_CONSTANT_T = 4 * math.pi / (3 * math.sqrt(3))


@dataclass(frozen=True)
class DerivationTrace:
    s: float
    branch: str
    phi1: float = math.nan
    phi2: float = math.nan
    w: float = math.nan
    n_x: float = math.nan
    n_y: float = math.nan
    chi_angle: float = math.nan
    delta: float = math.nan
    delta_s: float = math.nan
    delta_c: float = math.nan
    cond2_sign: int = 0

    def to_dict(self) -> dict:
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: dict) -> "DerivationTrace":
        kw = {k: (math.nan if v is None else v) for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**kw)


@dataclass(frozen=True)
class AnalyticSolution:
    schedule: PulseSchedule
    tau: float
    total_T: float
    trace: DerivationTrace


def _check_omega0(omega0: float) -> None:
    if not omega0 > 0:
        raise DomainError(f"omega0 must be positive, got {omega0}")


def constant_schedule(omega0: float = 1.0) -> AnalyticSolution:
    """Single stage ``P = S = -Omega_0``, ``Q = +Omega_0`` for ``4 pi / (3 sqrt 3 Omega_0)``."""
    _check_omega0(omega0)
    T = _CONSTANT_T / omega0
    trace = DerivationTrace(s=1.0, branch="constant", n_x=-1 / math.sqrt(3), n_y=1 / math.sqrt(3))
    sched = PulseSchedule(
        omega0,
        omega0,
        [PulseSegment(T, -omega0, omega0, -omega0)],
        meta={"protocol": "constant", "s": 1.0},
    )
    return AnalyticSolution(sched, tau=T / 2, total_T=T, trace=trace)


def _greater_trace(s: float, phi1: float, phi2: float) -> DerivationTrace:
    root = math.sqrt(s * s + 2)
    n_x, n_y = -1 / root, s / root
    sin2, cos2 = math.sin(phi2), math.cos(phi2)
    rhs = 1 / (2 * n_y) - n_x * math.sqrt(2) * sin2
    delta = 2 * n_x**2 * sin2**2 + cos2**2
    delta_s = n_x * sin2 / math.sqrt(2) + cos2 * rhs
    delta_c = 0.5 * cos2 - n_x * math.sqrt(2) * sin2 * rhs
    return DerivationTrace(
        s=s, branch="greater", phi1=phi1, phi2=phi2, n_x=n_x, n_y=n_y,
        delta=delta, delta_s=delta_s, delta_c=delta_c,
    )


def schedule_greater(s: float, omega0: float = 1.0) -> AnalyticSolution:
    """Symmetric Q-bang / Q-off / Q-bang schedule for ``s >= 1``."""
    _check_omega0(omega0)
    if not s >= 1.0:
        raise DomainError(f"the s >= 1 construction needs s >= 1, got {s}; use the lower branch")
    root = math.sqrt(s * s + 2)
    # shorter root of sin^2(phi2) + (sqrt2/s) sin(phi2) - (1 - 1/s^2)/2 = 0
    sin_phi2 = (1 - 1 / s) / math.sqrt(2)
    phi2 = math.asin(sin_phi2)
    half_phi1 = math.atan(root / (s + math.sqrt(2 * (s * s + 2 * s - 1))))
    tau = 4 / (omega0 * root) * half_phi1
    middle = 2 * math.sqrt(2) / omega0 * phi2
    trace = _greater_trace(s, 2 * half_phi1, phi2)
    o1 = s * omega0
    segs = [
        PulseSegment(tau, -omega0, o1, -omega0),
        PulseSegment(middle, -omega0, 0.0, -omega0),
        PulseSegment(tau, -omega0, o1, -omega0),
    ]
    sched = PulseSchedule(omega0, o1, segs, meta={"protocol": "analytic-greater", "s": s})
    return AnalyticSolution(sched, tau=tau, total_T=2 * tau + middle, trace=trace)


def _lower_trace(s: float, phi1: float, phi2: float) -> DerivationTrace:
    root = math.sqrt(s * s + 2)
    w = math.sqrt((s * s + 2) / (s * s + 1))
    n_x, n_y = -1 / root, s / root
    s2, c2 = math.sin(2 * phi1), math.cos(2 * phi1)
    delta = 2 * n_y * (w**2 * s2**2 + c2**2)
    chosen = None
    for sign in (1, -1):
        delta_s = -sign * (w * n_y * s2 - c2)
        delta_c = sign * (w * s2 + n_y * c2)
        if math.atan2(delta_s, delta_c) >= -1e-12:
            chosen = (sign, delta_s, delta_c)
            break
    if chosen is None:  # pragma: no cover - both signs give negative durations
        raise DomainError(f"no admissible sign in the R-terminal condition at s={s}")
    sign, delta_s, delta_c = chosen
    return DerivationTrace(
        s=s, branch="lower", phi1=phi1, phi2=phi2, w=w, n_x=n_x, n_y=n_y,
        chi_angle=math.atan(n_y), delta=delta, delta_s=delta_s, delta_c=delta_c,
        cond2_sign=sign,
    )


def schedule_lower(s: float, omega0: float = 1.0, s_min: float = S_MIN) -> AnalyticSolution:
    """P-only / P+S / S-only schedule with Q on throughout, for ``s_min <= s <= 1``."""
    _check_omega0(omega0)
    if not s_min <= s <= 1.0:
        raise DomainError(
            f"the s < 1 closed form is only used for {s_min} <= s <= 1, got {s}; "
            "use the numeric optimizer"
        )
    radicand = s**4 + 2 * s * s - 1
    if radicand < 0:
        raise DomainError(f"s^4 + 2 s^2 - 1 < 0 at s={s}; the closed form has no real solution")
    sin_2phi1 = math.sqrt((1 - s**4) / 2) / s
    if sin_2phi1 > 1:
        raise DomainError(f"sin(2 phi1) = {sin_2phi1} > 1 at s={s}")
    tau = 2 / (omega0 * math.sqrt(s * s + 1)) * math.asin(sin_2phi1)
    root = math.sqrt(s * s + 2)
    # arctan(sqrt(x / y)) as atan2 so that s = 1 (y = 0) is exact
    first = math.atan2(math.sqrt(radicand), math.sqrt((s * s + 2) * (1 - s * s)))
    middle = 4 / (omega0 * root) * (first - math.atan(s / root))
    phi1 = omega0 * tau * math.sqrt(s * s + 1) / 4
    phi2 = omega0 * middle * root / 4
    trace = _lower_trace(s, phi1, phi2)
    o1 = s * omega0
    segs = [
        PulseSegment(tau, -omega0, o1, 0.0),
        PulseSegment(middle, -omega0, o1, -omega0),
        PulseSegment(tau, 0.0, o1, -omega0),
    ]
    sched = PulseSchedule(omega0, o1, segs, meta={"protocol": "analytic-lower", "s": s})
    return AnalyticSolution(sched, tau=tau, total_T=2 * tau + middle, trace=trace)


def analytic_schedule(s: float, omega0: float = 1.0) -> AnalyticSolution:
    """Pick the closed form valid at ``s``; raises :class:`DomainError` below ``S_MIN``."""
    if s >= 1.0:
        return schedule_greater(s, omega0)
    return schedule_lower(s, omega0)


def delta_limit_duration(omega0: float = 1.0) -> float:
    """Lower bound ``pi / (sqrt 2 Omega_0)`` on the resolution time for finite ``Omega_1``."""
    _check_omega0(omega0)
    return math.pi / (math.sqrt(2) * omega0)


def delta_limit_schedule(s: float, omega0: float = 1.0) -> PulseSchedule:
    """Finite-``s`` version of the impulsive construction.

    Q pulses of area pi/2 at both ends of a Raman stage of duration
    ``pi / (sqrt 2 Omega_0)``, with ``P = S = -Omega_0`` kept on for the whole
    sequence. The Q pulses are only "instantaneous" in the limit, so perfect
    resolution is reached only as ``s -> infinity``.
    """
    _check_omega0(omega0)
    if not s >= 1.0:
        raise DomainError(f"delta-pulse construction needs s >= 1, got {s}")
    o1 = s * omega0
    q = PulseSegment(math.pi / (2 * o1), -omega0, o1, -omega0)
    mid = PulseSegment(delta_limit_duration(omega0), -omega0, 0.0, -omega0)
    return PulseSchedule(omega0, o1, [q, mid, q], meta={"protocol": "delta-limit", "s": s})


def appendix_R_amplitudes(trace: DerivationTrace) -> tuple[float, float, float, float]:
    """``(Re A_-, Im A_-, Re B_-, Im B_-)`` at the final time, lower branch only."""
    if trace.branch != "lower":
        raise DomainError(f"R-amplitude expressions need a lower-branch trace, got {trace.branch!r}")
    w, nx, ny = trace.w, trace.n_x, trace.n_y
    c1, s1 = math.cos(trace.phi1), math.sin(trace.phi1)
    c2, s2 = math.cos(trace.phi2), math.sin(trace.phi2)
    re_a = (
        c1**2 * c2
        - (2 / w) * c1 * s1 * s2
        - w**2 * ny**2 * s1**2 * c2
        + w**2 * nx**2 * ny * s1**2 * s2
    )
    im_a = (
        -nx * c1**2 * s2
        - w * nx * c1 * s1 * c2
        + w**2 * nx**3 * s1**2 * s2
        - w * nx * ny * c1 * s1 * s2
        - w**2 * nx * ny * s1**2 * c2
    )
    re_b = (
        -ny * c1**2 * s2
        - 2 * w * ny * c1 * s1 * c2
        + 2 * w * nx**2 * c1 * s1 * s2
        + w**2 * ny * s1**2 * s2
        + w**2 * nx**2 * s1**2 * c2
    )
    # Im B_- coincides with Im A_- for this pulse family
    return re_a, im_a, re_b, im_a


def terminal_polar_angle(s: float) -> float:
    """Polar angle of the R-enantiomer's final Bloch vector on the yz-meridian."""
    re_a, _, re_b, _ = appendix_R_amplitudes(schedule_lower(s).trace)
    return float(np.arccos(np.clip(re_a**2 - re_b**2, -1.0, 1.0)))
