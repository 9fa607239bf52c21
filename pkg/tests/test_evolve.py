import math

import numpy as np
import pytest

from kernellab.errors import BoundaryLeakError, CFLError, GridError
from kernellab.evolve import (ParabolicProblem, SolverConfig, dirac_cell_average,
                              estimate_kernel, lp_decay_check, lp_norm,
                              mollifier_consistency, solve)
from kernellab.fields import (constant_drift, hardy_drift, make_matrix,
                              radial_tanh_drift, tanh_axis_drift)
from kernellab.grids import RadialGrid, centered_box
from kernellab.kernelfit import gaussian_kernel
from kernellab.mollify import mollify
from scipy.special import gammainc

I3 = make_matrix("identity", 3)


def exact_cell_avg(grid: RadialGrid, tau: float) -> np.ndarray:
    mass = gammainc(grid.dim / 2.0, grid.edges**2 / (4.0 * tau))
    return np.diff(mass) / grid.volumes


@pytest.fixture(scope="module")
def baseline_kernel():
    grid = RadialGrid(512, 8.0)
    cfg = SolverConfig(n_steps=4000)
    return estimate_kernel(ParabolicProblem(I3, None), 0.0, 1.0, np.zeros(3),
                           grid, cfg, direction="adjoint",
                           snapshot_times=[0.5, 0.75])


def test_baseline_matches_gaussian(baseline_kernel):
    k = baseline_kernel
    exact = exact_cell_avg(k.grid, k.effective_time)
    rel = np.max(np.abs(k.values - exact)) / exact.max()
    assert rel <= 1e-3
    assert k.mass == pytest.approx(1.0, abs=1e-12)


def test_dirac_cell_average_mass():
    g = RadialGrid(256, 6.0)
    f0 = dirac_cell_average(g, np.zeros(3), 0.01)
    assert g.integrate(f0) == pytest.approx(1.0, abs=1e-9)
    gb = centered_box(3.0, 16)
    fb = dirac_cell_average(gb, np.array([0.2, -0.1, 0.0]), 0.01)
    assert gb.integrate(fb) == pytest.approx(1.0, abs=1e-9)


def test_galilean_shift_constant_drift():
    # constant drift: kernel is the shifted Gaussian
    g = centered_box(8.0, 1024, dim=1)
    prob = ParabolicProblem(make_matrix("identity", 1), constant_drift(1, 0.5))
    k = estimate_kernel(prob, 0.0, 1.0, [0.0], g, SolverConfig(n_steps=2000),
                        direction="forward")
    xs = g.points()[:, 0]
    exact = gaussian_kernel(1.0, k.effective_time, np.abs(xs - 0.5), 1)
    assert np.max(np.abs(k.values - exact)) / exact.max() < 5e-3


def test_lambda_annihilates_constants():
    # forward evolution of f = 1 stays exactly 1 (no zeroth-order term)
    g = RadialGrid(128, 4.0)
    prob = ParabolicProblem(I3, radial_tanh_drift(3, 1.0))
    cfg = SolverConfig(n_steps=50, check_boundary=False)
    res = solve(prob, np.ones(g.n), g, 0.0, 0.5, cfg, direction="forward")
    assert np.allclose(res.values, 1.0, atol=1e-10)


def test_positivity_all_variants():
    g = RadialGrid(512, 8.0)
    mf = mollify(hardy_drift(3, 1.0), 0.05, g)
    bd = mf.as_drift_field()
    dp, dm = mf.div_split_scalar_fields()
    f0 = dirac_cell_average(g, np.zeros(3), 0.01)
    for variant in ("lambda", "lambda-star", "h-plus", "h-minus", "h-minus-pprime"):
        prob = ParabolicProblem(I3, bd, variant, p_prime=2.0,
                                div_plus=dp, div_minus=dm)
        for direction in ("forward", "adjoint"):
            res = solve(prob, f0, g, 0.0, 1.0, SolverConfig(n_steps=300),
                        direction=direction)
            assert res.values.min() >= 0.0


def test_symmetric_kernel_directions_agree():
    # b = 0: the generator is self-adjoint, both slices coincide
    g = RadialGrid(256, 8.0)
    cfg = SolverConfig(n_steps=300)
    prob = ParabolicProblem(I3, None)
    fw = estimate_kernel(prob, 0.0, 1.0, np.zeros(3), g, cfg, direction="forward")
    ad = estimate_kernel(prob, 0.0, 1.0, np.zeros(3), g, cfg, direction="adjoint")
    assert np.max(np.abs(fw.values - ad.values)) / ad.values.max() < 1e-3


def test_duality_forward_vs_adjoint_3d():
    # u(t, x; s, y): forward slice from y read at x vs adjoint slice from x
    # read at y; two independent discretizations of the same kernel value
    b = tanh_axis_drift(3, 1.0)
    prob = ParabolicProblem(I3, b)
    g = centered_box(6.0, 24)
    cfg = SolverConfig(n_steps=120, boundary_tol=5e-3)
    # both reference points sit on cell centers so the two slices sample
    # the same kernel entry
    y = np.array([0.25, 0.25, 0.25])
    x = np.array([-0.75, 0.25, 0.25])
    fw = estimate_kernel(prob, 0.0, 0.8, y, g, cfg, direction="forward")
    ad = estimate_kernel(prob, 0.0, 0.8, x, g, cfg, direction="adjoint")
    pts = g.points()
    ix = np.argmin(np.sum((pts - x) ** 2, axis=1))
    iy = np.argmin(np.sum((pts - y) ** 2, axis=1))
    assert fw.values[ix] == pytest.approx(ad.values[iy], rel=0.02)
    assert ad.mass == pytest.approx(1.0, abs=1e-3)


def test_conservation_row_mass():
    # variant lambda, adjoint slice: row mass 1 within mass tolerance
    for drift in (None, radial_tanh_drift(3, 1.0)):
        g = RadialGrid(512, 10.0)
        prob = ParabolicProblem(I3, drift)
        k = estimate_kernel(prob, 0.0, 1.0, np.zeros(3), g,
                            SolverConfig(n_steps=400), direction="adjoint")
        assert abs(k.mass - 1.0) <= 1e-3


def test_reproduction_composition():
    # evolution over [0, 1] vs composition [0, 0.5] then [0.5, 1]
    g = RadialGrid(512, 8.0)
    prob = ParabolicProblem(I3, radial_tanh_drift(3, 0.5))
    f0 = dirac_cell_average(g, np.zeros(3), 0.01)
    whole = solve(prob, f0, g, 0.0, 1.0, SolverConfig(n_steps=400)).values
    half = solve(prob, f0, g, 0.0, 0.5, SolverConfig(n_steps=280)).values
    comp = solve(prob, half, g, 0.5, 1.0, SolverConfig(n_steps=280)).values
    assert np.max(np.abs(comp - whole)) / whole.max() < 2e-3


def test_variant_ordering_by_potential():
    # V1 >= V2 pointwise implies kernel1 <= kernel2 pointwise
    g = RadialGrid(640, 10.0)
    cfg = SolverConfig(n_steps=300)
    mf = mollify(hardy_drift(3, 1.0), 0.05, g)
    bd = mf.as_drift_field()
    dp, dm = mf.div_split_scalar_fields()
    k_lam = estimate_kernel(ParabolicProblem(I3, bd, "lambda", div_plus=dp,
                                             div_minus=dm),
                            0.0, 1.0, np.zeros(3), g, cfg)
    k_hp = estimate_kernel(ParabolicProblem(I3, bd, "h-plus", div_plus=dp,
                                            div_minus=dm),
                           0.0, 1.0, np.zeros(3), g, cfg)
    assert np.all(k_hp.values <= k_lam.values * (1.0 + 1e-9))

    bt = radial_tanh_drift(3, 1.0)
    k_l = estimate_kernel(ParabolicProblem(I3, bt, "lambda"),
                          0.0, 1.0, np.zeros(3), g, cfg)
    k_hm = estimate_kernel(ParabolicProblem(I3, bt, "h-minus"),
                           0.0, 1.0, np.zeros(3), g, cfg)
    k_hp2 = estimate_kernel(ParabolicProblem(I3, bt, "h-minus-pprime", p_prime=2.0),
                            0.0, 1.0, np.zeros(3), g, cfg)
    assert np.all(k_l.values <= k_hm.values * (1.0 + 1e-9))
    assert np.all(k_hm.values <= k_hp2.values * (1.0 + 1e-9))


def test_ultracontractivity_constant_stable(baseline_kernel):
    g2 = RadialGrid(256, 8.0)
    k2 = estimate_kernel(ParabolicProblem(I3, None), 0.0, 1.0, np.zeros(3), g2,
                         SolverConfig(n_steps=2000), direction="adjoint",
                         snapshot_times=[0.5, 0.75])
    assert k2.c_hat == pytest.approx(baseline_kernel.c_hat, rel=0.10)
    # on-diagonal bound: sup u <= c_hat tau^{-d/2} holds by construction
    assert baseline_kernel.values.max() <= \
        baseline_kernel.c_hat * baseline_kernel.effective_time ** -1.5 * (1 + 1e-12)


def test_lp_decay_heat_semigroup():
    g = RadialGrid(512, 10.0)
    prob = ParabolicProblem(I3, None)
    f0 = np.exp(-g.centers**2)
    for p in (1.5, 2.0, 4.0):
        rep = lp_decay_check(prob, f0, p, 1.0, g, SolverConfig(n_steps=300,
                                                               check_boundary=False))
        assert rep["pass"] and rep["monotone"]


def test_lp_decay_hardy_attracting():
    # delta = 0.25, c = 0, p = 4 >= p_c = 4/3: norms must not grow;
    # oracle: two resolutions agreeing on monotonicity
    for n in (1024, 2048):
        g = RadialGrid(n, 8.0)
        prob = ParabolicProblem(I3, hardy_drift(3, 0.25))
        f0 = np.exp(-((g.centers - 1.0) ** 2) / 0.1)
        rep = lp_decay_check(prob, f0, 4.0, 0.5, g,
                             SolverConfig(n_steps=500, check_boundary=False),
                             tol=1e-6)
        assert rep["monotone"], rep["rows"]


def test_lp_decay_rejects_subcritical_p():
    g = RadialGrid(128, 8.0)
    prob = ParabolicProblem(I3, hardy_drift(3, 1.0))
    with pytest.raises(ValueError, match="critical"):
        lp_decay_check(prob, np.exp(-g.centers**2), 1.5, 0.5, g)


def test_adjoint_l1_contraction():
    # the conservative companion evolution contracts (conserves) L^1
    g = RadialGrid(512, 10.0)
    prob = ParabolicProblem(I3, radial_tanh_drift(3, 1.0), "lambda-star")
    f0 = np.exp(-g.centers**2)
    res = solve(prob, f0, g, 0.0, 1.0, SolverConfig(n_steps=300,
                                                    check_boundary=False),
                direction="forward")
    assert lp_norm(res.values, g, 1.0) <= lp_norm(f0, g, 1.0) * (1.0 + 1e-9)


def test_mollifier_consistency_hardy():
    # Cauchy behavior in the mollification width: consecutive L^2 differences
    # decrease along the tail.  The measured decrease per epsilon halving is
    # ~sqrt(2) (the |x|^{-1} profile rescales self-similarly under E_eps), so
    # that is the rate the refinement study supports.
    g = RadialGrid(1024, 8.0)
    eps_list = [0.4, 0.2, 0.1, 0.05]
    problems = {}
    for eps in eps_list:
        bd = mollify(hardy_drift(3, 0.25), eps, g).as_drift_field()
        problems[eps] = ParabolicProblem(I3, bd)
    f0 = np.exp(-((g.centers - 1.5) ** 2) / 0.2)
    rep = mollifier_consistency(problems, f0, 0.5, g,
                                SolverConfig(n_steps=300, check_boundary=False))
    assert rep["pass"]
    diffs = [d["l2"] for d in rep["diffs"]]
    assert all(b <= a / 1.25 for a, b in zip(diffs, diffs[1:]))


def test_mollifier_consistency_needs_three():
    g = RadialGrid(64, 4.0)
    prob = ParabolicProblem(I3, None)
    with pytest.raises(ValueError, match="3"):
        mollifier_consistency({0.1: prob}, np.ones(g.n), 0.5, g)


def test_smooth_bounded_drift_consistency_is_tiny():
    # E_eps b -> b uniformly for smooth bounded b: differences are negligible
    # (|E_eps b - b| ~ eps |b''|) once eps is below the field's scale
    g = RadialGrid(512, 8.0)
    b = radial_tanh_drift(3, 1.0)
    problems = {}
    for eps in (1e-4, 5e-5, 2.5e-5):
        bd = mollify(b, eps, g).as_drift_field()
        problems[eps] = ParabolicProblem(I3, bd)
    f0 = np.exp(-((g.centers - 1.5) ** 2) / 0.2)
    rep = mollifier_consistency(problems, f0, 0.25, g,
                                SolverConfig(n_steps=100, check_boundary=False))
    assert all(d["l2"] < 5e-5 for d in rep["diffs"])
    assert rep["pass"]


def test_cfl_guard_for_crank_nicolson():
    g = RadialGrid(256, 8.0)
    prob = ParabolicProblem(I3, None)
    f0 = dirac_cell_average(g, np.zeros(3), 0.01)
    with pytest.raises(CFLError):
        solve(prob, f0, g, 0.0, 1.0,
              SolverConfig(scheme="crank-nicolson", n_steps=100))


def test_crank_nicolson_accuracy():
    g = RadialGrid(256, 8.0)
    prob = ParabolicProblem(I3, None)
    cfg = SolverConfig(scheme="crank-nicolson")  # auto dt satisfies the CFL bound
    k = estimate_kernel(prob, 0.0, 1.0, np.zeros(3), g, cfg, direction="adjoint")
    exact = exact_cell_avg(k.grid, k.effective_time)
    assert np.max(np.abs(k.values - exact)) / exact.max() < 2e-3


def test_boundary_leak_error():
    g = RadialGrid(64, 1.5)  # much too small for t = 1
    prob = ParabolicProblem(I3, None)
    f0 = dirac_cell_average(g, np.zeros(3), 0.005)
    with pytest.raises(BoundaryLeakError, match="larger|enlarge"):
        solve(prob, f0, g, 0.0, 1.0, SolverConfig(n_steps=100))


def test_solver_input_validation():
    g = RadialGrid(64, 4.0)
    prob = ParabolicProblem(I3, None)
    with pytest.raises(ValueError):
        solve(prob, np.ones(g.n), g, 1.0, 0.5)
    with pytest.raises(ValueError):
        solve(prob, -np.ones(g.n), g, 0.0, 0.5)
    with pytest.raises(GridError):
        solve(prob, np.ones(64), RadialGrid(64, 4.0, rmin=1e-4, spacing="geometric"),
              0.0, 0.5)
    with pytest.raises(ValueError):
        ParabolicProblem(I3, None, "bogus-variant")


def test_box_rejects_offdiagonal_matrix():
    tile = np.eye(3)
    tile[0, 1] = tile[1, 0] = 0.2
    a = make_matrix("checkerboard", 3, a=tile, b=tile)
    prob = ParabolicProblem(a, None)
    g = centered_box(2.0, 8)
    with pytest.raises(GridError, match="diagonal"):
        solve(prob, np.ones(g.size), g, 0.0, 0.1,
              SolverConfig(n_steps=5, check_boundary=False))


def test_checkerboard_diffusion_runs():
    a = make_matrix("checkerboard", 3, a=np.eye(3), b=2.0 * np.eye(3))
    g = centered_box(6.0, 24)
    prob = ParabolicProblem(a, None)
    k = estimate_kernel(prob, 0.0, 0.5, np.zeros(3), g,
                        SolverConfig(n_steps=100, boundary_tol=1e-3),
                        direction="adjoint")
    assert k.mass == pytest.approx(1.0, abs=1e-9)
    assert k.values.min() >= 0.0
