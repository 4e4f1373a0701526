"""
Rectangular-pulse protocols used as the comparison set.

Each protocol runs every pulse at its maximum amplitude: ``Omega_0`` for P
and S, ``Omega_1 = s Omega_0`` for Q. Pulse areas follow the usual
convention, a pi pulse being a full population transfer under ``H / 2``
couplings.

Relative phases are not fixed by the protocol descriptions in a way that
maps uniquely onto this Hamiltonian, so :func:`baseline_schedule` searches
offsets in {0, pi/2, pi, 3pi/2} (first pulse held at 0) and keeps the first
assignment that reaches perfect resolution in the three-level model.
"""

from __future__ import annotations

import enum
import itertools
import math

from .errors import DomainError, PhaseSearchError
from .spin import PulseSchedule, PulseSegment, schedule_objective

PHASE_GRID = (0.0, math.pi / 2, math.pi, 3 * math.pi / 2)
SEARCH_TOL = 1e-8


class BaselineKind(enum.Enum):
    PQS = "PQS"  # pi/2 - pi - pi/2 with Q in the middle
    PSQ = "PSQ"  # pi/2 - pi - pi/2 with Q last
    Q_PS_Q = "Q_PS_Q"  # single - Raman - single
    PS_Q = "PS_Q"  # Raman - single

    @classmethod
    def parse(cls, name: str | "BaselineKind") -> "BaselineKind":
        if isinstance(name, cls):
            return name
        key = str(name).upper().replace("-", "_").replace("(", "").replace(")", "")
        aliases = {"QPSQ": "Q_PS_Q", "PSQ2": "PS_Q", "RAMAN_SINGLE": "PS_Q", "SINGLE_RAMAN_SINGLE": "Q_PS_Q"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown baseline protocol {name!r}") from None


def _check(s: float, omega0: float) -> None:
    if not s > 0:
        raise DomainError(f"bound ratio s must be positive, got {s}")
    if not omega0 > 0:
        raise DomainError(f"omega0 must be positive, got {omega0}")


def baseline_duration(kind: BaselineKind | str, s: float, omega0: float = 1.0) -> float:
    kind = BaselineKind.parse(kind)
    _check(s, omega0)
    pi = math.pi
    if kind is BaselineKind.PQS:
        return pi / omega0 * (1 + 1 / s)
    if kind is BaselineKind.PSQ:
        return pi / (2 * omega0) * (3 + 1 / s)
    if kind is BaselineKind.Q_PS_Q:
        return pi / omega0 * (1 / math.sqrt(2) + 1 / s)
    return pi / omega0 * (math.sqrt(2 + math.sqrt(2)) + 1 / (2 * s))


def best_baseline(s: float, omega0: float = 1.0) -> tuple[BaselineKind, float]:
    return min(((k, baseline_duration(k, s, omega0)) for k in BaselineKind), key=lambda kv: kv[1])


# A stage is a list of (field, amplitude, area); the field letters index the
# phase offsets being searched.
def _stages(kind: BaselineKind, s: float, omega0: float):
    o1 = s * omega0
    pi = math.pi
    if kind is BaselineKind.PQS:
        return [[("p", omega0, pi / 2)], [("q", o1, pi)], [("s", omega0, pi / 2)]]
    if kind is BaselineKind.PSQ:
        return [[("p", omega0, pi / 2)], [("s", omega0, pi)], [("q", o1, pi / 2)]]
    if kind is BaselineKind.Q_PS_Q:
        area = pi / math.sqrt(2)
        return [[("q", o1, pi / 2)], [("p", omega0, area), ("s", omega0, area)], [("q", o1, pi / 2)]]
    ratio = math.sqrt(2) - 1
    return [
        [("p", omega0, pi * math.sqrt(2 + math.sqrt(2))), ("s", ratio * omega0, pi * math.sqrt(2 - math.sqrt(2)))],
        [("q", o1, pi / 2)],
    ]


def _build(stages, offsets, omega0: float, o1: float, meta: dict) -> PulseSchedule:
    segs = []
    it = iter(offsets)
    for stage in stages:
        amp = {"p": 0.0, "q": 0.0, "s": 0.0}
        phase = {"p": 0.0, "q": math.pi / 2, "s": 0.0}
        duration = None
        for name, amplitude, area in stage:
            amp[name] = amplitude
            phase[name] += next(it)
            d = area / amplitude
            if duration is not None and not math.isclose(d, duration, rel_tol=1e-12):
                raise AssertionError("simultaneous pulses must share a duration")
            duration = d
        segs.append(
            PulseSegment(duration, amp["p"], amp["q"], amp["s"], phase["p"], phase["q"], phase["s"])
        )
    return PulseSchedule(omega0, o1, segs, meta=meta)


def baseline_schedule(kind: BaselineKind | str, s: float, omega0: float = 1.0) -> PulseSchedule:
    """Three-level schedule of ``kind`` with a phase assignment found by search.

    Raises :class:`PhaseSearchError` if no assignment on the grid reaches
    objective ``>= 1 - 1e-8``.
    """
    kind = BaselineKind.parse(kind)
    _check(s, omega0)
    stages = _stages(kind, s, omega0)
    n_pulses = sum(len(st) for st in stages)
    labels = [f"{i}{name}" for i, st in enumerate(stages) for name, _, _ in st]
    for rest in itertools.product(PHASE_GRID, repeat=n_pulses - 1):
        offsets = (0.0,) + rest
        sched = _build(stages, offsets, omega0, s * omega0, {})
        obj = schedule_objective(sched)
        if obj >= 1 - SEARCH_TOL:
            sched.meta.update(
                protocol=kind.value,
                s=s,
                objective=obj,
                phase_offsets=dict(zip(labels, offsets)),
            )
            return sched
    raise PhaseSearchError(f"no valid phase assignment found for {kind.value} at s={s}")
