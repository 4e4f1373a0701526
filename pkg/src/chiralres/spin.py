"""
Exact propagation of the enantiomer pair.

Both enantiomers are closed-loop three-level systems driven by the pump (P),
Stokes (S) and direct (Q) fields. With real amplitudes and the Q-field phase
at pi/2 the pair reduces to two non-interacting spins-1/2 with Bloch vectors
``r_pm`` rotating about ``B_pm = (Omega_p, +-Omega_q, Omega_s)``.

Conventions
-----------
- Two-level Hamiltonian: ``H_pm = (Omega_p sx +- Omega_q sy + Omega_s sz) / 4``.
- Bloch vector of ``(A, B)``: ``x = 2 Re(A* B)``, ``y = 2 Im(A* B)``,
  ``z = |A|^2 - |B|^2``. Its equation of motion is ``dr/dt = B x r / 2``.
- Three-level amplitudes ``(a, b, c)`` map to the Bloch vector as
  ``x = -c``, ``y = -i b``, ``z = a``.
- ``Omega_0 = 1`` is the default unit; durations are reported as ``Omega_0 T``.

Every propagator is exact for a piecewise-constant control; nothing in this
module time-steps an ODE.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import NormalizationError

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)

# Bound checks allow for round-off in values such as (sqrt(2) - 1) * Omega_0.
_BOUND_SLACK = 1e-12
_NORM_TOL = 1e-10


class Chirality(enum.IntEnum):
    """Handedness; the value is the sign multiplying the Q-field."""

    L = 1
    R = -1


@dataclass(frozen=True)
class PulseSegment:
    """Constant fields held for ``duration``.

    Phases only enter the three-level model. The defaults (P and S at 0, Q at
    pi/2) are the ones for which the two-level reduction holds.
    """

    duration: float
    omega_p: float = 0.0
    omega_q: float = 0.0
    omega_s: float = 0.0
    phase_p: float = 0.0
    phase_q: float = math.pi / 2
    phase_s: float = 0.0

    def __post_init__(self):
        if not self.duration >= 0.0 or not math.isfinite(self.duration):
            raise ValueError(f"segment duration must be finite and >= 0, got {self.duration}")

    def field(self, chi: Chirality | int = Chirality.L) -> np.ndarray:
        """Rotation vector ``B`` seen by the given enantiomer."""
        return np.array([self.omega_p, int(chi) * self.omega_q, self.omega_s], dtype=float)

    @property
    def reducible(self) -> bool:
        """True when the phases allow the two-level (Bloch) description."""
        return (
            math.isclose(math.remainder(self.phase_p, 2 * math.pi), 0.0, abs_tol=1e-12)
            and math.isclose(math.remainder(self.phase_s, 2 * math.pi), 0.0, abs_tol=1e-12)
            and math.isclose(
                math.remainder(self.phase_q - math.pi / 2, 2 * math.pi), 0.0, abs_tol=1e-12
            )
        )


@dataclass(frozen=True)
class PulseSchedule:
    """Ordered segments together with the amplitude bounds they must respect.

    ``omega0_bound`` bounds the Raman fields P and S, ``omega1_bound`` bounds Q.
    ``meta`` carries provenance such as the protocol name or a derivation
    trace; it does not take part in equality.
    """

    omega0_bound: float
    omega1_bound: float
    segments: tuple[PulseSegment, ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.omega0_bound > 0 or not self.omega1_bound > 0:
            raise ValueError("amplitude bounds must be positive")
        b0 = self.omega0_bound * (1 + _BOUND_SLACK)
        b1 = self.omega1_bound * (1 + _BOUND_SLACK)
        for k, seg in enumerate(self.segments):
            if abs(seg.omega_p) > b0 or abs(seg.omega_s) > b0 or abs(seg.omega_q) > b1:
                raise ValueError(
                    f"segment {k} violates the bounds |P|,|S| <= {self.omega0_bound}, "
                    f"|Q| <= {self.omega1_bound}: {seg}"
                )

    @property
    def ratio(self) -> float:
        return self.omega1_bound / self.omega0_bound

    @property
    def total_duration(self) -> float:
        return float(math.fsum(seg.duration for seg in self.segments))

    @property
    def durations(self) -> np.ndarray:
        return np.array([seg.duration for seg in self.segments], dtype=float)

    @property
    def reducible(self) -> bool:
        return all(seg.reducible for seg in self.segments)

    def controls(self) -> np.ndarray:
        """``(n, 3)`` array of (Omega_p, Omega_q, Omega_s) per segment."""
        if not self.segments:
            return np.zeros((0, 3))
        return np.array([[s.omega_p, s.omega_q, s.omega_s] for s in self.segments], dtype=float)

    def boundaries(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.durations)])


def schedule_from_controls(
    controls: Sequence[Sequence[float]] | np.ndarray,
    durations: Iterable[float],
    omega0: float,
    omega1: float,
    meta: dict | None = None,
) -> PulseSchedule:
    """Build a phase-free schedule from a control table and stage durations."""
    segs = [
        PulseSegment(float(d), float(p), float(q), float(s))
        for (p, q, s), d in zip(np.asarray(controls, dtype=float), durations)
    ]
    return PulseSchedule(omega0, omega1, segs, meta=dict(meta or {}))


@dataclass(frozen=True)
class TwoLevelState:
    A: complex
    B: complex

    def __post_init__(self):
        norm = abs(self.A) ** 2 + abs(self.B) ** 2
        if abs(norm - 1.0) > _NORM_TOL:
            raise NormalizationError(f"two-level state has norm^2 {norm!r}")

    @classmethod
    def ground(cls) -> "TwoLevelState":
        return cls(1.0 + 0j, 0j)

    def as_array(self) -> np.ndarray:
        return np.array([self.A, self.B], dtype=complex)


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)


@dataclass(frozen=True)
class ThreeLevelState:
    a: complex
    b: complex
    c: complex

    def __post_init__(self):
        norm = abs(self.a) ** 2 + abs(self.b) ** 2 + abs(self.c) ** 2
        if abs(norm - 1.0) > _NORM_TOL:
            raise NormalizationError(f"three-level state has norm^2 {norm!r}")

    @classmethod
    def ground(cls) -> "ThreeLevelState":
        return cls(1.0 + 0j, 0j, 0j)

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c], dtype=complex)

    def to_bloch(self) -> np.ndarray:
        """Complex ``(-c, -i b, a)``; real whenever the reduction applies."""
        return np.array([-self.c, -1j * self.b, self.a], dtype=complex)


# --------------------------------------------------------------------------
# two-level propagators
# --------------------------------------------------------------------------


def axis_angle_propagator(axis: Sequence[float], angle: float) -> np.ndarray:
    """``cos(angle) I - i sin(angle) (n . sigma)`` for a unit axis ``n``."""
    n = np.asarray(axis, dtype=float)
    if n.shape != (3,) or abs(np.linalg.norm(n) - 1.0) > 1e-10:
        raise ValueError(f"rotation axis must be a unit 3-vector, got {axis!r}")
    n_sigma = n[0] * SIGMA_X + n[1] * SIGMA_Y + n[2] * SIGMA_Z
    return math.cos(angle) * IDENTITY2 - 1j * math.sin(angle) * n_sigma


def segment_propagator_2lv(seg: PulseSegment, chi: Chirality | int) -> np.ndarray:
    """Exact ``exp(-i H_pm duration)`` for one constant segment."""
    b = seg.field(chi)
    omega = float(np.linalg.norm(b))
    if omega == 0.0 or seg.duration == 0.0:
        return IDENTITY2.copy()
    return axis_angle_propagator(b / omega, omega * seg.duration / 4)


def schedule_propagator_2lv(sched: PulseSchedule, chi: Chirality | int) -> np.ndarray:
    u = IDENTITY2.copy()
    for seg in sched.segments:
        u = segment_propagator_2lv(seg, chi) @ u
    return u


@dataclass(frozen=True)
class Trajectory:
    """Sampled amplitudes; ``segment`` gives the segment index of each sample
    (-1 for the initial point)."""

    times: np.ndarray
    states: np.ndarray
    segment: np.ndarray

    @property
    def final(self):
        psi = self.states[-1]
        if psi.shape[0] == 2:
            return TwoLevelState(complex(psi[0]), complex(psi[1]))
        return ThreeLevelState(complex(psi[0]), complex(psi[1]), complex(psi[2]))

    def norms(self) -> np.ndarray:
        return np.sum(np.abs(self.states) ** 2, axis=1)

    def bloch(self) -> np.ndarray:
        """``(N, 3)`` Bloch vectors.

        Two-level samples use the amplitude formulas, three-level samples the
        ``(-c, -i b, a)`` map, which is only real-valued for reducible
        schedules; its real part is returned.
        """
        if self.states.shape[1] == 2:
            return bloch_array(self.states)
        a, b, c = self.states.T
        return np.stack([-c, -1j * b, a], axis=1).real


def _sample_offsets(duration: float, samples: int) -> np.ndarray:
    if samples <= 0:
        return np.array([duration])
    return duration * np.arange(1, samples + 1) / samples


def propagate_schedule(
    sched: PulseSchedule,
    chi: Chirality | int,
    initial: TwoLevelState | None = None,
    samples_per_segment: int = 64,
) -> Trajectory:
    """Propagate ``initial`` (default ``(1, 0)``) through ``sched``.

    Samples are taken at ``samples_per_segment`` evenly spaced points inside
    every segment, the last one being the segment end; ``0`` keeps only the
    segment boundaries.
    """
    psi = (initial or TwoLevelState.ground()).as_array()
    times, states, index = [0.0], [psi], [-1]
    t0 = 0.0
    for k, seg in enumerate(sched.segments):
        b = seg.field(chi)
        omega = float(np.linalg.norm(b))
        n = b / omega if omega > 0 else np.array([0.0, 0.0, 1.0])
        for dt in _sample_offsets(seg.duration, samples_per_segment):
            u = axis_angle_propagator(n, omega * dt / 4)
            times.append(t0 + dt)
            states.append(u @ psi)
            index.append(k)
        psi = states[-1]
        t0 += seg.duration
    return Trajectory(np.array(times), np.array(states), np.array(index))


def final_state_2lv(
    sched: PulseSchedule, chi: Chirality | int, initial: TwoLevelState | None = None
) -> TwoLevelState:
    psi = schedule_propagator_2lv(sched, chi) @ (initial or TwoLevelState.ground()).as_array()
    return TwoLevelState(complex(psi[0]), complex(psi[1]))


# --------------------------------------------------------------------------
# three-level propagators
# --------------------------------------------------------------------------


def hamiltonian_3lv(seg: PulseSegment, chi: Chirality | int) -> np.ndarray:
    h = np.zeros((3, 3), dtype=complex)
    h[0, 1] = seg.omega_p * np.exp(1j * seg.phase_p)
    h[0, 2] = int(chi) * seg.omega_q * np.exp(1j * seg.phase_q)
    h[1, 2] = seg.omega_s * np.exp(1j * seg.phase_s)
    return (h + h.conj().T) / 2


def _eig_3lv(seg: PulseSegment, chi: Chirality | int):
    return np.linalg.eigh(hamiltonian_3lv(seg, chi))


def segment_propagator_3lv(
    seg: PulseSegment, chi: Chirality | int, duration: float | None = None
) -> np.ndarray:
    """``exp(-i H duration)`` via Hermitian eigendecomposition."""
    dt = seg.duration if duration is None else duration
    evals, evecs = _eig_3lv(seg, chi)
    return (evecs * np.exp(-1j * evals * dt)) @ evecs.conj().T


def propagate_schedule_3lv(
    sched: PulseSchedule,
    chi: Chirality | int,
    initial: ThreeLevelState | None = None,
    samples_per_segment: int = 64,
) -> Trajectory:
    psi = (initial or ThreeLevelState.ground()).as_array()
    times, states, index = [0.0], [psi], [-1]
    t0 = 0.0
    for k, seg in enumerate(sched.segments):
        evals, evecs = _eig_3lv(seg, chi)
        coeffs = evecs.conj().T @ psi
        for dt in _sample_offsets(seg.duration, samples_per_segment):
            times.append(t0 + dt)
            states.append(evecs @ (np.exp(-1j * evals * dt) * coeffs))
            index.append(k)
        psi = states[-1]
        t0 += seg.duration
    return Trajectory(np.array(times), np.array(states), np.array(index))


def final_state_3lv(
    sched: PulseSchedule, chi: Chirality | int, initial: ThreeLevelState | None = None
) -> ThreeLevelState:
    psi = (initial or ThreeLevelState.ground()).as_array()
    for seg in sched.segments:
        psi = segment_propagator_3lv(seg, chi) @ psi
    return ThreeLevelState(*(complex(v) for v in psi))


# --------------------------------------------------------------------------
# Bloch picture and objective
# --------------------------------------------------------------------------


def bloch_array(amps: np.ndarray) -> np.ndarray:
    amps = np.atleast_2d(amps)
    a, b = amps[:, 0], amps[:, 1]
    ab = np.conj(a) * b
    return np.stack([2 * ab.real, 2 * ab.imag, np.abs(a) ** 2 - np.abs(b) ** 2], axis=1)


def bloch_from_amplitudes(state: TwoLevelState) -> BlochVector:
    x, y, z = bloch_array(state.as_array())[0]
    return BlochVector(float(x), float(y), float(z))


def resolution_objective(final_l: TwoLevelState, final_r: TwoLevelState) -> float:
    """``|x_+^2 - x_-^2|``, equal to the difference of the level-3 populations."""
    xl = bloch_from_amplitudes(final_l).x
    xr = bloch_from_amplitudes(final_r).x
    return abs(xl**2 - xr**2)


def objective_3lv(final_l: ThreeLevelState, final_r: ThreeLevelState) -> float:
    return abs(abs(final_l.c) ** 2 - abs(final_r.c) ** 2)


def schedule_objective(sched: PulseSchedule) -> float:
    """Resolution objective of a schedule.

    Reducible schedules use the two-level model; anything with non-default
    phases goes through the three-level one.
    """
    if sched.reducible:
        return resolution_objective(final_state_2lv(sched, Chirality.L), final_state_2lv(sched, Chirality.R))
    return objective_3lv(final_state_3lv(sched, Chirality.L), final_state_3lv(sched, Chirality.R))


def terminal_bloch(sched: PulseSchedule) -> tuple[np.ndarray, np.ndarray]:
    """Final Bloch vectors ``(r_+, r_-)`` from the two-level model."""
    return (
        bloch_from_amplitudes(final_state_2lv(sched, Chirality.L)).as_array(),
        bloch_from_amplitudes(final_state_2lv(sched, Chirality.R)).as_array(),
    )


# --------------------------------------------------------------------------
# SO(3) rotations shared by the adjoint and optimizer code
# --------------------------------------------------------------------------


def rotation_matrices(fields: np.ndarray, durations: np.ndarray) -> np.ndarray:
    """Rotation matrices solving ``dv/dt = B x v / 2`` over each duration.

    ``fields`` has shape ``(..., 3)`` and ``durations`` broadcasts against
    ``fields[..., 0]``. Returns ``(..., 3, 3)``.
    """
    fields = np.asarray(fields, dtype=float)
    durations = np.broadcast_to(np.asarray(durations, dtype=float), fields.shape[:-1])
    mag = np.linalg.norm(fields, axis=-1)
    safe = np.where(mag > 0, mag, 1.0)
    n = fields / safe[..., None]
    theta = mag * durations / 2
    c, s = np.cos(theta), np.sin(theta)
    nx, ny, nz = n[..., 0], n[..., 1], n[..., 2]
    k = np.zeros(fields.shape[:-1] + (3, 3))
    k[..., 0, 1], k[..., 0, 2] = -nz, ny
    k[..., 1, 0], k[..., 1, 2] = nz, -nx
    k[..., 2, 0], k[..., 2, 1] = -ny, nx
    nn = n[..., :, None] * n[..., None, :]
    eye = np.eye(3)
    return c[..., None, None] * eye + s[..., None, None] * k + (1 - c)[..., None, None] * nn


def rotation_integrals(fields: np.ndarray, durations: np.ndarray) -> np.ndarray:
    """``int_0^dt R(t) dt`` for the rotations of :func:`rotation_matrices`."""
    fields = np.asarray(fields, dtype=float)
    durations = np.broadcast_to(np.asarray(durations, dtype=float), fields.shape[:-1])
    mag = np.linalg.norm(fields, axis=-1)
    safe = np.where(mag > 0, mag, 1.0)
    n = fields / safe[..., None]
    theta = mag * durations / 2
    # sin(theta)/omega and (1 - cos(theta))/omega written via sinc to stay finite at omega -> 0
    a = durations * np.sinc(theta / np.pi)
    b = durations * (theta / 2) * np.sinc(theta / (2 * np.pi)) ** 2
    nx, ny, nz = n[..., 0], n[..., 1], n[..., 2]
    k = np.zeros(fields.shape[:-1] + (3, 3))
    k[..., 0, 1], k[..., 0, 2] = -nz, ny
    k[..., 1, 0], k[..., 1, 2] = nz, -nx
    k[..., 2, 0], k[..., 2, 1] = -ny, nx
    nn = n[..., :, None] * n[..., None, :]
    eye = np.eye(3)
    return (
        a[..., None, None] * (eye - nn)
        + durations[..., None, None] * nn
        + b[..., None, None] * k
    )


def chiral_fields(controls: np.ndarray) -> np.ndarray:
    """``(2, n, 3)`` fields for (L, R) from an ``(n, 3)`` control table."""
    controls = np.asarray(controls, dtype=float)
    out = np.stack([controls, controls])
    out[1, :, 1] *= -1
    return out


def bloch_path(sched: PulseSchedule, chi: Chirality | int, r0=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Bloch vectors at the segment boundaries via SO(3) rotations."""
    if not sched.segments:
        return np.array([r0], dtype=float)
    f = chiral_fields(sched.controls())[0 if int(chi) == 1 else 1]
    rots = rotation_matrices(f, sched.durations)
    out = [np.asarray(r0, dtype=float)]
    for rot in rots:
        out.append(rot @ out[-1])
    return np.array(out)
