import json

import numpy as np
import pytest
from dataclasses import replace
from scipy.integrate import solve_ivp

from chiralres.analytic import constant_schedule, schedule_greater, schedule_lower
from chiralres.spin import Chirality, PulseSchedule, PulseSegment
from chiralres.pmp import (
    AdjointPair,
    certificate_search,
    control_hamiltonian,
    local_optimality_probe,
    propagate_adjoint,
    sd_rhs,
    switch_trajectory,
    switching_functions,
)

RNG_ADJ = AdjointPair(np.array([0.3, -0.5, 0.8]), np.array([-0.2, 0.4, 0.1]))


@pytest.fixture(scope="module")
def certificates():
    return {
        "constant": (constant_schedule().schedule, certificate_search(constant_schedule().schedule)),
        "s2": (schedule_greater(2.0).schedule, certificate_search(schedule_greater(2.0).schedule)),
        "s0.9": (schedule_lower(0.9).schedule, certificate_search(schedule_lower(0.9).schedule)),
    }


# ---------------------------------------------------------------- adjoints and switching vectors


def test_zero_adjoint_stays_zero():
    traj = propagate_adjoint(schedule_greater(2.0).schedule, Chirality.L, np.zeros(3))
    assert np.all(traj.values == 0)
    sw = switch_trajectory(schedule_greater(2.0).schedule, AdjointPair(np.zeros(3), np.zeros(3)))
    assert np.all(sw.S == 0) and np.all(sw.D == 0)


def test_adjoint_along_field_is_fixed():
    sched = constant_schedule().schedule
    b = sched.segments[0].field(Chirality.R)
    traj = propagate_adjoint(sched, Chirality.R, b)
    assert np.allclose(traj.values, b, atol=1e-12)


def test_adjoint_norm_preserved():
    sched = schedule_greater(2.0).schedule
    lam0 = np.array([0.4, -1.2, 0.3])
    for chi in (Chirality.L, Chirality.R):
        vals = propagate_adjoint(sched, chi, lam0).values
        assert np.allclose(np.linalg.norm(vals, axis=1), np.linalg.norm(lam0), atol=1e-10)


def test_switch_vectors_are_sum_and_difference():
    sw = switch_trajectory(schedule_lower(0.9).schedule, RNG_ADJ, samples_per_segment=16)
    assert np.allclose(sw.S, sw.L_plus + sw.L_minus, atol=1e-12)
    assert np.allclose(sw.D, sw.L_plus - sw.L_minus, atol=1e-12)


def test_switch_vectors_satisfy_sd_equations():
    sched = schedule_lower(0.9).schedule
    sw = switch_trajectory(sched, RNG_ADJ, samples_per_segment=400)
    controls = sched.controls()
    for k in range(len(sched.segments)):
        idx = np.flatnonzero(sw.segment == k)
        t, S, D = sw.times[idx], sw.S[idx], sw.D[idx]
        dS = np.gradient(S, t, axis=0, edge_order=2)
        dD = np.gradient(D, t, axis=0, edge_order=2)
        rS, rD = sd_rhs(S, D, controls[k])
        inner = slice(2, -2)
        assert np.max(np.abs(dS[inner] - rS[inner])) < 1e-6
        assert np.max(np.abs(dD[inner] - rD[inner])) < 1e-6


def test_angular_momentum_ode_dual_path():
    sched = schedule_greater(2.0).schedule
    sw = switch_trajectory(sched, RNG_ADJ, samples_per_segment=8)
    L = [np.cross([0, 0, 1.0], RNG_ADJ.lambda_plus), np.cross([0, 0, 1.0], RNG_ADJ.lambda_minus)]
    for c, chi in enumerate((1, -1)):
        for seg in sched.segments:
            b = seg.field(chi)
            sol = solve_ivp(lambda t, y: 0.5 * np.cross(b, y), (0, seg.duration), L[c], rtol=1e-12, atol=1e-14)
            L[c] = sol.y[:, -1]
    assert np.allclose(sw.L_plus[-1], L[0], atol=1e-8)
    assert np.allclose(sw.L_minus[-1], L[1], atol=1e-8)
    assert np.allclose(sw.S[-1], L[0] + L[1], atol=1e-8)


def test_switching_function_components():
    S = np.array([1.0, 2.0, 3.0])
    D = np.array([4.0, 5.0, 6.0])
    assert np.allclose(switching_functions(S, D), [1.0, 5.0, 3.0])


def test_control_hamiltonian_algebra():
    seg = PulseSegment(1.0, -1.0, 2.0, -1.0)
    assert control_hamiltonian(np.zeros(3), np.zeros(3), seg) == -1.0
    S = np.array([-1.0, 0.0, -1.0])
    assert control_hamiltonian(S, np.zeros(3), seg) == pytest.approx(0.0)
    batch = control_hamiltonian(np.zeros((4, 3)), np.zeros((4, 3)), [1.0, 1.0, 1.0])
    assert batch.shape == (4,)


# ---------------------------------------------------------------- certificates


@pytest.mark.parametrize("name", ["constant", "s2", "s0.9"])
def test_certificate_converges(certificates, name):
    _, rep = certificates[name]
    assert rep.converged, rep.message
    assert rep.total_residual < 1e-5
    assert rep.hc_residual < 1e-6
    assert rep.transversality_residual < 1e-5
    assert rep.sign_violations == 0
    assert rep.verdict == "consistent with PMP"
    assert "optimal" not in rep.verdict.replace("consistent", "")


@pytest.mark.parametrize("name", ["constant", "s2", "s0.9"])
def test_certificate_hamiltonian_constant_zero(certificates, name):
    sched, rep = certificates[name]
    sw = switch_trajectory(sched, rep.found_adjoints)
    hc = control_hamiltonian(sw.S, sw.D, sched.controls()[sw.segment])
    assert np.max(np.abs(hc - hc[0])) < 1e-6
    assert np.max(np.abs(hc)) < 1e-6


@pytest.mark.parametrize("name", ["constant", "s2", "s0.9"])
def test_certificate_switching_properties(certificates, name):
    sched, rep = certificates[name]
    sw = switch_trajectory(sched, rep.found_adjoints)
    g = switching_functions(sw.S, sw.D)
    u = sched.controls()[sw.segment]
    # never all three below 1e-6 at once
    assert np.min(np.max(np.abs(g), axis=1)) > 1e-6
    # zero controls sit on singular arcs
    singular = u == 0
    assert np.all(np.abs(g[singular]) < 1e-5)
    # bang controls follow the sign of their switching function
    wrong = ~singular & (np.sign(g) != np.sign(u))
    assert np.all(np.abs(g[wrong]) < 1e-6)


def test_certificate_singular_arc_s2(certificates):
    sched, rep = certificates["s2"]
    sw = switch_trajectory(sched, rep.found_adjoints)
    middle = sw.segment == 1
    assert sched.segments[1].omega_q == 0
    assert np.max(np.abs(sw.D[middle, 1])) < 1e-5
    assert rep.singular_violations < 1e-5


def test_certificate_transversality(certificates):
    sched, rep = certificates["s0.9"]
    lam_m = propagate_adjoint(sched, Chirality.R, rep.found_adjoints.lambda_minus).values[-1]
    assert abs(lam_m[1]) < 1e-5 and abs(lam_m[2]) < 1e-5


def test_certificate_report_serializes(certificates):
    _, rep = certificates["s2"]
    doc = json.loads(json.dumps(rep.to_dict()))
    assert doc["converged"] is True
    assert len(doc["found_adjoints"]["lambda_plus"]) == 3
    assert [a["q"] for a in doc["arcs"]] == ["bang+", "singular", "bang+"]


def test_certificate_is_deterministic():
    a = certificate_search(schedule_greater(1.5).schedule, seed=3)
    b = certificate_search(schedule_greater(1.5).schedule, seed=3)
    assert np.array_equal(a.found_adjoints.as_vector(), b.found_adjoints.as_vector())


def test_perturbed_schedule_fails_precondition():
    sched = schedule_greater(2.0).schedule
    segs = list(sched.segments)
    segs[1] = replace(segs[1], duration=segs[1].duration * 1.1)
    rep = certificate_search(PulseSchedule(sched.omega0_bound, sched.omega1_bound, segs))
    assert not rep.converged
    assert "precondition" in rep.message
    assert rep.verdict == "not certified"


def test_phased_schedule_not_certified():
    seg = PulseSegment(1.0, 1.0, 0.0, 0.0, phase_p=1.0)
    rep = certificate_search(PulseSchedule(1.0, 1.0, [seg]))
    assert not rep.converged and "precondition" in rep.message


def test_adjoint_pair_vector_round_trip():
    v = RNG_ADJ.as_vector()
    again = AdjointPair.from_vector(v)
    assert np.array_equal(again.as_vector(), v)


# ---------------------------------------------------------------- timing probe


@pytest.mark.parametrize("sol", [schedule_greater(2.0), schedule_lower(0.9)], ids=["s2", "s0.9"])
def test_probe_passes_on_analytic(sol):
    rep = local_optimality_probe(sol.schedule, delta=1e-3)
    assert rep.passed
    assert rep.min_T >= rep.base_T - 1e-6
    assert rep.base_T == pytest.approx(sol.total_T)


def test_probe_detects_slack():
    sched = schedule_greater(2.0).schedule
    idle = PulseSchedule(sched.omega0_bound, sched.omega1_bound, [PulseSegment(0.2)] + list(sched.segments))
    rep = local_optimality_probe(idle, delta=1e-3)
    assert not rep.passed
    assert rep.min_T < rep.base_T - 1e-6
