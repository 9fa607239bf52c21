import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kernellab.constants import (ConstantLedger, coulhon_raynaud, critical_exponent,
                                 proof_constants, theory_vs_fit)
from kernellab.errors import SupercriticalError


def test_critical_exponent_values():
    assert critical_exponent(1.0) == pytest.approx(2.0)
    assert critical_exponent(1e-12) == pytest.approx(1.0, abs=1e-5)
    with pytest.raises(SupercriticalError):
        critical_exponent(4.0)
    with pytest.raises(SupercriticalError):
        critical_exponent(0.0)


def test_proof_constants_reference_point():
    led = proof_constants(3, 1.0, 1.0, 1.0)
    assert led.delta_a == 1.0
    assert led.p_c == 2.0
    assert led.beta_star == 15.0 / 8.0
    assert led.K1 == 3.0
    assert led.K2 == 4.0
    assert led.C_delta_a == 1.25
    assert led.c4 == 1.25


def test_omega_vanishes_without_c():
    led = proof_constants(3, 1.0, 1.0, 1.0, c_delta=0.0)
    assert led.omega == 0.0
    led2 = proof_constants(3, 1.0, 1.0, 1.0, c_delta=2.0)
    assert led2.omega == pytest.approx(1.0)


def test_delta_a_reduction():
    led = proof_constants(3, 0.5, 1.0, 1.0)
    assert led.delta_a == pytest.approx(4.0)
    assert led.p_c is None  # gated at delta_a >= 4


@given(st.floats(min_value=0.01, max_value=10.0))
@settings(max_examples=50, deadline=None)
def test_gate_exactly_at_four(delta_a):
    led = proof_constants(3, 1.0, 2.0, delta_a)
    gated = (led.p_c, led.K1, led.K2)
    if delta_a < 4.0:
        assert all(v is not None for v in gated)
    else:
        assert all(v is None for v in gated)


@given(st.floats(min_value=0.05, max_value=3.9), st.floats(min_value=0.05, max_value=3.9))
@settings(max_examples=50, deadline=None)
def test_pc_monotone_in_delta_a(a, b):
    lo, hi = sorted((a, b))
    assert critical_exponent(lo) <= critical_exponent(hi) + 1e-12


@given(st.floats(min_value=0.1, max_value=6.0), st.floats(min_value=0.1, max_value=6.0),
       st.floats(min_value=1.0, max_value=4.0))
@settings(max_examples=50, deadline=None)
def test_beta_star_monotone(da1, da2, xi):
    lo, hi = sorted((da1, da2))
    led_lo = proof_constants(3, 1.0, xi, lo)
    led_hi = proof_constants(3, 1.0, xi, hi)
    assert led_lo.beta_star <= led_hi.beta_star
    assert proof_constants(3, 1.0, xi, lo).beta_star \
        <= proof_constants(3, 1.0, 2.0 * xi, lo).beta_star


def test_omega_decreasing_in_delta_a():
    oms = [proof_constants(3, 1.0, 1.0, da, c_delta=1.0).omega
           for da in (0.5, 1.0, 2.0, 3.0)]
    assert all(b < a for a, b in zip(oms, oms[1:]))


def test_coulhon_raynaud_case_one():
    # p=1, q=2, r=inf: beta = 1/2, exponent 2 nu, M = 2^{4 nu} M1 M2^2
    nu, m1, m2 = 0.75, 2.0, 3.0
    exponent, M = coulhon_raynaud(1, 2, math.inf, nu, m1, m2)
    assert exponent == pytest.approx(2 * nu)
    assert M == pytest.approx(2.0 ** (4 * nu) * m1 * m2**2)


def test_coulhon_raynaud_case_two():
    # p=2, q=4, r=8: beta = 2/3, exponent 3 nu, M = 2^{9 nu} M1 M2^3
    nu, m1, m2 = 0.4, 1.5, 0.7
    exponent, M = coulhon_raynaud(2, 4, 8, nu, m1, m2)
    assert exponent == pytest.approx(3 * nu, rel=1e-12)
    assert M == pytest.approx(2.0 ** (9 * nu) * m1 * m2**3, rel=1e-12)


def test_coulhon_raynaud_rejects_bad_ordering():
    with pytest.raises(ValueError):
        coulhon_raynaud(2, 2, 4, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        coulhon_raynaud(0.5, 2, 4, 1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        coulhon_raynaud(1, 2, 4, -1.0, 1.0, 1.0)


def test_coulhon_raynaud_on_solver_norms():
    """Measured heat-semigroup norms reproduce a valid extrapolated chain.

    Operator-norm hypotheses measured from b=0 radial solves: the L^1
    contraction constant M1 and the 1->2 (= 2->inf by self-adjointness)
    smoothing constant M2 at rate nu = d/4, both read off near-Dirac data.
    The extrapolated constant M must then bound ||u(t)||_inf / ||f||_1 at
    rate d/2 for an independent spread-out initial state.
    """
    from kernellab.evolve import ParabolicProblem, SolverConfig, dirac_cell_average, solve
    from kernellab.fields import make_matrix
    from kernellab.grids import RadialGrid

    grid = RadialGrid(512, 10.0)
    prob = ParabolicProblem(make_matrix("identity", 3), None)
    cfg = SolverConfig(n_steps=400, check_boundary=False)
    nu = 3.0 / 4.0
    m1 = 1.0
    m2 = 0.0
    dirac = dirac_cell_average(grid, np.zeros(3), 1e-3)
    mass0 = grid.integrate(dirac)
    for t in (0.25, 0.5, 1.0):
        u = solve(prob, dirac, grid, 0.0, t, cfg).values
        m1 = max(m1, grid.integrate(np.abs(u)) / mass0)
        l2 = math.sqrt(grid.integrate(u**2))
        m2 = max(m2, l2 * (t + 1e-3) ** nu / mass0)
    exponent, M = coulhon_raynaud(1, 2, math.inf, nu, m1, m2)
    assert exponent == pytest.approx(1.5)

    r = grid.centers
    f0 = np.exp(-(r**2) / 0.08)
    l1 = grid.integrate(f0)
    for t in (0.25, 0.5, 1.0):
        u = solve(prob, f0, grid, 0.0, t, cfg).values
        assert float(u.max()) <= M * t ** (-exponent) * l1 * (1.0 + 1e-9)


def test_ledger_roundtrip_bit_exact():
    led = proof_constants(3, 0.9, 1.7, 1.3, c_delta=0.2, nu=0.05, lam=1.0,
                          c_N=0.125, c_hat=0.3, c_plus_measured=2.3)
    doc = json.loads(json.dumps(led.to_dict()))
    led2 = ConstantLedger.from_dict(doc)
    assert led2.to_dict() == led.to_dict()


def test_beta_uses_measured_c_plus():
    led = proof_constants(3, 1.0, 1.0, 1.0, c_plus_measured=2.3)
    assert led.beta == pytest.approx(max(15.0 / 8.0, (4 * 2.3) ** 2))
    assert led.c_beta == pytest.approx(
        (4 * math.pi * led.beta) ** (-1.5) * math.exp(-0.25))


def test_theory_vs_fit_directions():
    from kernellab.kernelfit import BoundFit

    def fit(side, feasible):
        return BoundFit(side=side, c_mult=1.0, c_rate=1.0, c_exp=0.0,
                        region={}, residual=1.0, feasible=feasible, n_samples=3)

    led = proof_constants(3, 1.0, 1.0, 0.25)
    rep = theory_vs_fit(led, {"lower": fit("lower", True),
                              "upper": fit("upper", True)}, "baseline")
    assert rep["pass"]
    rep = theory_vs_fit(led, {"lower": fit("lower", False)}, "thm1-lower",
                        div_sign="nonnegative")
    assert not rep["pass"]
    rep = theory_vs_fit(led, {"upper": fit("upper", True)}, "counterexample-ugb")
    assert not rep["pass"]  # guaranteed-infeasible regime came back feasible
    rep = theory_vs_fit(led, {"upper": fit("upper", False)}, "counterexample-ugb")
    assert rep["pass"]
