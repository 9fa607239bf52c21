import math

import numpy as np
import pytest

from kernellab.errors import AdmissibilityError, MassDeficitError
from kernellab.evolve import ParabolicProblem, SolverConfig, estimate_kernel
from kernellab.fields import hardy_drift, make_matrix
from kernellab.grids import RadialGrid, centered_box
from kernellab.kernelfit import gaussian_kernel
from kernellab.nashlab import (entropy, entropy_moment_check, g_function, moment,
                               nash_series, nee_stability, q_tilde)

I3 = make_matrix("identity", 3)


def gaussian_slice(t, n=2048, rmax=12.0):
    g = RadialGrid(n, rmax)
    return gaussian_kernel(1.0, t, g.centers, 3), g


def test_entropy_gaussian_closed_form():
    # Q = (d/2) log(4 pi t) + d/2 for the heat kernel
    for t in (0.5, 1.0, 2.0):
        u, g = gaussian_slice(t)
        expected = 1.5 * math.log(4 * math.pi * t) + 1.5
        assert entropy(u, g) == pytest.approx(expected, rel=1e-4)


def test_entropy_minus_reference_is_time_independent():
    vals = []
    for t in (0.5, 1.0, 2.0):
        u, g = gaussian_slice(t)
        vals.append(entropy(u, g) - q_tilde(t, 3))
    assert np.ptp(vals) < 1e-3


def test_entropy_uniform_density():
    # uniform on a ball of volume V: Q = log V
    g = RadialGrid(2048, 2.0)
    vol = 4.0 / 3.0 * math.pi
    u = np.where(g.centers < 1.0, 1.0 / vol, 0.0)
    u /= g.integrate(u)
    assert entropy(u, g) == pytest.approx(math.log(vol), abs=5e-3)


def test_entropy_requires_unit_mass():
    u, g = gaussian_slice(1.0)
    with pytest.raises(MassDeficitError):
        entropy(2.0 * u, g)


def test_moment_gaussian_monte_carlo_oracle():
    # M = E|z| for z ~ N(0, 2t I_3); Monte Carlo oracle with 10^6 samples
    rng = np.random.default_rng(42)
    t = 0.7
    z = rng.standard_normal((1_000_000, 3)) * math.sqrt(2 * t)
    oracle = float(np.mean(np.linalg.norm(z, axis=1)))
    u, g = gaussian_slice(t)
    m = moment(u, g)
    assert m == pytest.approx(oracle, rel=5e-3)
    assert m == pytest.approx(4.0 * math.sqrt(t / math.pi), rel=1e-3)


def test_moment_dirac_limit():
    g = RadialGrid(4096, 4.0)
    from kernellab.evolve import dirac_cell_average

    prev = math.inf
    for tau0 in (0.01, 0.0025, 0.000625):
        u = dirac_cell_average(g, np.zeros(3), tau0)
        m = moment(u, g)
        assert m < prev
        assert m == pytest.approx(4.0 * math.sqrt(tau0 / math.pi), rel=0.01)
        prev = m


def test_gaussian_moment_band():
    # M / sqrt(t) constant for the heat kernel: c_- = c_+ = 4 / sqrt(pi)
    for t in (0.25, 1.0):
        u, g = gaussian_slice(t)
        assert moment(u, g) / math.sqrt(t) == pytest.approx(
            4.0 / math.sqrt(math.pi), rel=1e-3)


def test_g_function_gaussian_closed_form():
    # x = y = o = 0: <k_beta(tau') log k_1(tau)> =
    #   -(d/2) log(4 pi tau) - d beta tau' / (2 tau)
    beta, tau, taup = 2.0, 0.8, 0.3
    u, g = gaussian_slice(tau, n=4096, rmax=16.0)
    val = g_function(u, g, beta, taup, np.zeros(3), np.zeros(3))
    expected = -1.5 * math.log(4 * math.pi * tau) - 3.0 * beta * taup / (2 * tau)
    assert val == pytest.approx(expected, rel=1e-3)


def test_g_function_constant_density():
    g = centered_box(4.0, 24)
    u = np.full(g.size, 0.37)
    val = g_function(u, g, 2.0, 0.2, np.zeros(3), np.zeros(3))
    # tolerance set by the midpoint quadrature of the Gaussian weight
    assert val == pytest.approx(math.log(0.37), rel=1e-3)


def test_g_function_admissibility():
    u, g = gaussian_slice(1.0)
    with pytest.raises(AdmissibilityError):
        g_function(u, g, 2.0, 0.01, np.zeros(3), np.array([1.0, 0, 0]))


def test_g_function_lower_bound_on_kernel_run():
    # the fitted constant C in G(t_s) >= -Qtilde(t - t_s) - C is order one
    # and stable under refinement
    cs = []
    for n in (512, 1024):
        k = estimate_kernel(ParabolicProblem(I3, None), 0.0, 1.0, np.zeros(3),
                            RadialGrid(n, 8.0), SolverConfig(n_steps=800),
                            direction="adjoint", snapshot_times=[0.5])
        u_ts = k.snapshots[0.5]
        tau_remaining = 0.5 + k.tau0
        ghat = g_function(u_ts, k.grid, beta=2.0, tau=tau_remaining,
                          x=np.zeros(3), y=np.zeros(3))
        c_fit = -(ghat + q_tilde(tau_remaining, 3))
        cs.append(c_fit)
        assert math.isfinite(c_fit) and abs(c_fit) < 10.0
    assert cs[0] == pytest.approx(cs[1], abs=0.05)


def test_nash_series_baseline_matches_theory():
    k = estimate_kernel(ParabolicProblem(I3, None), 0.0, 1.0, np.zeros(3),
                        RadialGrid(1024, 8.0), SolverConfig(n_steps=1000),
                        direction="adjoint", snapshot_times=[0.25, 0.5, 0.75])
    diag = nash_series(k)
    # C_NEE is the exact Gaussian constant (d/2) log(4 pi) + d/2
    assert diag.C_NEE == pytest.approx(1.5 * math.log(4 * math.pi) + 1.5, rel=1e-3)
    assert diag.c_minus == pytest.approx(4.0 / math.sqrt(math.pi), rel=1e-2)
    assert diag.c_plus == pytest.approx(4.0 / math.sqrt(math.pi), rel=1e-2)
    assert diag.c_minus > 0
    rep = entropy_moment_check(diag)
    assert rep["pass"]
    ratios = [row["ratio"] for row in rep["per_time"]]
    assert np.ptp(ratios) / ratios[0] < 1e-2  # scale-invariant for the Gaussian


def test_entropy_moment_uniform_ball():
    # closed forms: Q = log V, M = (3/4) R for the uniform ball
    g = RadialGrid(4096, 2.0)
    R = 1.0
    vol = 4.0 / 3.0 * math.pi * R**3
    u = np.where(g.centers < R, 1.0 / vol, 0.0)
    u /= g.integrate(u)
    q = entropy(u, g)
    m = moment(u, g)
    assert m == pytest.approx(0.75 * R, rel=1e-3)
    ratio = math.exp(q / 3.0) / m
    assert ratio == pytest.approx(vol ** (1.0 / 3.0) / 0.75, rel=1e-2)
    assert math.isfinite(ratio)


def test_entropy_maximal_for_gaussian():
    # among densities with the same second moment the Gaussian maximizes Q
    k = estimate_kernel(ParabolicProblem(I3, hardy_drift(3, 1.0)), 0.0, 1.0,
                        np.zeros(3), RadialGrid(2048, 8.0),
                        SolverConfig(n_steps=1000), direction="adjoint")
    u = k.values
    g = k.grid
    m2 = float((g.centers**2 * u) @ g.volumes)
    s2 = m2 / 3.0
    gaussian_entropy = 1.5 * math.log(2 * math.pi * s2) + 1.5
    assert entropy(u, g) <= gaussian_entropy + 1e-6


def test_nash_series_requires_adjoint():
    k = estimate_kernel(ParabolicProblem(I3, None), 0.0, 0.5, np.zeros(3),
                        RadialGrid(256, 6.0), SolverConfig(n_steps=200),
                        direction="forward")
    with pytest.raises(ValueError, match="adjoint"):
        nash_series(k)


def test_nee_stability_and_dissipation():
    ks = []
    for n in (512, 1024):
        ks.append(estimate_kernel(ParabolicProblem(I3, None), 0.0, 1.0,
                                  np.zeros(3), RadialGrid(n, 8.0),
                                  SolverConfig(n_steps=600),
                                  direction="adjoint", snapshot_times=[0.5]))
    d1 = nash_series(ks[0], with_dissipation=True)
    d2 = nash_series(ks[1], with_dissipation=True)
    rep = nee_stability(d1, d2)
    assert rep["pass"]
    assert d2.dissipation is not None and np.all(d2.dissipation > 0)
