"""Positivity-preserving solver for the drift-diffusion Cauchy problems.

Operator convention: the generator is

    T = -div(a grad .) + b . grad + V,

evolved as d/dt u = -T u.  Variants fix the zero-order term V from the
divergence split of the drift: the plain evolution has V = 0, its conservative
companion has V = div b, and the auxiliary upper/lower-bound operators add
+div b_+, -div b_-, or -p' div b_- (mollified pieces for singular drifts;
pass the mollified field and its split potentials).

Two slice directions are supported.  "forward" evolves a Dirac started at the
source point over the arrival variable's equation; "adjoint" evolves the
kernel slice over the backward variable, i.e. d/dtau v = div(a grad v + b v)
- V v, which is in conservation form and keeps the row mass at exactly 1 for
the V = 0 variant (the discrete fluxes telescope).

Scheme: backward Euler with first-order upwind transport on an M-matrix
(unconditional positivity); Crank-Nicolson is available as the accuracy
option and guards its explicit half-step by a CFL check plus a positivity
assertion.  Dirac data enter as exact cell averages of k_1(tau0, . - point).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import erf, gammainc

from .errors import BoundaryLeakError, CFLError, GridError, KernelLabError
from .fields import DiffusionMatrix, DriftField, ScalarField
from .grids import BoxGrid, Grid, RadialGrid

VARIANTS = ("lambda", "lambda-star", "h-plus", "h-minus", "h-minus-pprime")


@dataclass
class SolverConfig:
    scheme: str = "backward-euler"  # or "crank-nicolson"
    dt: float | None = None
    n_steps: int | None = None
    tau0_factor: float = 0.01
    lin_tol: float = 1e-10
    mass_tol: float = 1e-3
    boundary_tol: float = 1e-6
    direct_solver_max: int = 160_000
    check_boundary: bool = True


@dataclass
class ParabolicProblem:
    """Operator -div(a grad) + b.grad + V with V fixed by the variant tag."""

    matrix: DiffusionMatrix
    drift: DriftField | None = None
    variant: str = "lambda"
    p_prime: float = 2.0
    div_plus: ScalarField | None = None
    div_minus: ScalarField | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.variant == "h-minus-pprime" and self.p_prime < 1.0:
            raise ValueError("p' must be >= 1")

    def _div_split_values(self, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
        if self.drift is None:
            z = np.zeros(_ncells(grid))
            return z, z.copy()
        if self.div_plus is not None or self.div_minus is not None:
            zero = ScalarField(self.drift.dim, lambda x: np.zeros(len(x)),
                               radial_profile=lambda r: np.zeros_like(r))
            plus = (self.div_plus or zero).on_grid(grid).ravel()
            minus = (self.div_minus or zero).on_grid(grid).ravel()
            return plus, minus
        plus_f, minus_f = self.drift.div_split_fields()
        return plus_f.on_grid(grid).ravel(), minus_f.on_grid(grid).ravel()

    def potential_on_grid(self, grid: Grid) -> np.ndarray:
        n = _ncells(grid)
        if self.variant in ("lambda", "lambda-star") or self.drift is None:
            # lambda-star carries div b implicitly through its flux form
            return np.zeros(n)
        plus, minus = self._div_split_values(grid)
        if self.variant == "h-plus":
            return plus
        if self.variant == "h-minus":
            return -minus
        return -self.p_prime * minus

    def transport(self, direction: str) -> tuple[str, float]:
        """(form, drift sign) of the first-order term for a slice direction.

        The plain variant is advective in the forward slice and conservative
        (velocity -b) in the adjoint slice; its conservative companion swaps
        the two, which keeps the discrete fluxes in telescoping form exactly
        where the continuum operator conserves mass.
        """
        if self.variant == "lambda-star":
            return ("conservative", +1.0) if direction == "forward" \
                else ("advective", -1.0)
        return ("advective", +1.0) if direction == "forward" \
            else ("conservative", -1.0)

    def label(self) -> str:
        tag = self.variant
        if self.variant == "h-minus-pprime":
            tag += f"({self.p_prime:g})"
        return tag


@dataclass
class SolveResult:
    values: np.ndarray
    times: list
    snapshots: dict
    mass_initial: float
    mass_final: float
    dt: float
    n_steps: int
    scheme: str


@dataclass
class HeatKernelEstimate:
    """Gridded kernel slice with provenance.

    forward: values over the arrival variable from a Dirac at `point`;
    adjoint: values over the backward variable (row mass 1 for variant lambda).
    Effective Gaussian time of a snapshot at elapsed tau is tau + tau0.
    """

    variant: str
    direction: str
    s: float
    t: float
    tau0: float
    point: np.ndarray
    grid: Grid
    values: np.ndarray
    mass: float
    scheme: str
    c_hat: float
    snapshots: dict = dc_field(default_factory=dict)
    snapshot_masses: dict = dc_field(default_factory=dict)

    @property
    def elapsed(self) -> float:
        return self.t - self.s

    @property
    def effective_time(self) -> float:
        return self.elapsed + self.tau0

    def sidecar(self) -> dict:
        return {"variant": self.variant, "direction": self.direction,
                "s": self.s, "t": self.t, "tau0": self.tau0,
                "y": np.asarray(self.point).tolist(),
                "grid": self.grid.to_config(), "mass": self.mass,
                "scheme": self.scheme, "c_hat": self.c_hat,
                "snapshot_times": sorted(self.snapshots)}


def _ncells(grid: Grid) -> int:
    return grid.n if isinstance(grid, RadialGrid) else grid.size


# ---------------------------------------------------------------------------
# operator assembly: d/dt u = L u
# ---------------------------------------------------------------------------

def _radial_generator(problem: ParabolicProblem, grid: RadialGrid,
                      drift_sign: float) -> sp.csc_matrix:
    """Advective-form generator d/dt u = L u with drift drift_sign * b."""
    if grid.spacing != "uniform":
        raise GridError("the evolution solver runs on uniform radial grids")
    a = problem.matrix
    if a.isotropic_profile is None:
        raise GridError("radial solves need an isotropic diffusion matrix")
    n = grid.n
    centers, edges, areas, vols = grid.centers, grid.edges, grid.face_areas, grid.volumes
    a_face = np.asarray(a.isotropic_profile(edges), float)
    rows, cols, vals = [], [], []

    def add(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(v)

    # diffusion through interior faces, zero flux at the ends
    for j in range(1, n):
        g = a_face[j] * areas[j] / (centers[j] - centers[j - 1])
        add(j - 1, j - 1, -g / vols[j - 1])
        add(j - 1, j, g / vols[j - 1])
        add(j, j, -g / vols[j])
        add(j, j - 1, g / vols[j])

    if problem.drift is not None:
        prof = problem.drift.radial_profile
        if prof is None:
            raise GridError("radial solves need a radial drift profile")
        b_c = drift_sign * np.asarray(prof(centers), float)
        for i in range(n):
            bi = b_c[i]
            if bi > 0 and i >= 1:
                dx = centers[i] - centers[i - 1]
                add(i, i, -bi / dx)
                add(i, i - 1, bi / dx)
            elif bi < 0 and i <= n - 2:
                dx = centers[i + 1] - centers[i]
                add(i, i, bi / dx)
                add(i, i + 1, -bi / dx)

    V = problem.potential_on_grid(grid)
    for i in range(n):
        if V[i] != 0.0:
            add(i, i, -V[i])
    return sp.csc_matrix(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))


def _box_generator(problem: ParabolicProblem, grid: BoxGrid,
                   drift_sign: float) -> sp.csc_matrix:
    """Advective-form generator d/dt u = L u with drift drift_sign * b."""
    dim = grid.dim
    shape = grid.shape
    size = grid.size
    pts = grid.points()
    a_diag_full = problem.matrix(pts)
    a_diag = np.einsum("nii->ni", a_diag_full)
    if not np.allclose(a_diag_full, _diag_embed(a_diag), atol=1e-12):
        raise GridError("box solves support diagonal diffusion matrices only")

    idx = np.arange(size).reshape(shape)
    entries_r, entries_c, entries_v = [], [], []

    def add(r, c, v):
        entries_r.append(np.asarray(r).ravel())
        entries_c.append(np.asarray(c).ravel())
        entries_v.append(np.broadcast_to(np.asarray(v), np.asarray(r).shape).ravel())

    b_vals = None
    if problem.drift is not None:
        b_vals = problem.drift(pts)

    for axis in range(dim):
        h = grid.h[axis]
        lo_idx = np.take(idx, range(0, shape[axis] - 1), axis=axis)
        hi_idx = np.take(idx, range(1, shape[axis]), axis=axis)
        a_ax = a_diag[:, axis].reshape(shape)
        a_lo = np.take(a_ax, range(0, shape[axis] - 1), axis=axis)
        a_hi = np.take(a_ax, range(1, shape[axis]), axis=axis)
        a_face = 2.0 * a_lo * a_hi / (a_lo + a_hi)  # harmonic mean at faces
        g = a_face / h**2
        add(lo_idx, lo_idx, -g)
        add(lo_idx, hi_idx, g)
        add(hi_idx, hi_idx, -g)
        add(hi_idx, lo_idx, g)

        if b_vals is not None:
            b_ax = (drift_sign * b_vals[:, axis]).reshape(shape)
            b_at_hi = np.take(b_ax, range(1, shape[axis]), axis=axis)
            pos = np.maximum(b_at_hi, 0.0) / h
            add(hi_idx, hi_idx, -pos)
            add(hi_idx, lo_idx, pos)
            b_at_lo = np.take(b_ax, range(0, shape[axis] - 1), axis=axis)
            neg = np.maximum(-b_at_lo, 0.0) / h
            add(lo_idx, lo_idx, -neg)
            add(lo_idx, hi_idx, neg)

    V = problem.potential_on_grid(grid)
    nz = np.nonzero(V)[0]
    if len(nz):
        add(nz, nz, -V[nz])

    rows = np.concatenate(entries_r)
    cols = np.concatenate(entries_c)
    vals = np.concatenate(entries_v)
    return sp.csc_matrix(sp.coo_matrix((vals, (rows, cols)), shape=(size, size)))


def _diag_embed(d: np.ndarray) -> np.ndarray:
    n, k = d.shape
    out = np.zeros((n, k, k))
    ii = np.arange(k)
    out[:, ii, ii] = d
    return out


def build_generator(problem: ParabolicProblem, grid: Grid,
                    direction: str = "forward") -> sp.csc_matrix:
    """Generator of the requested slice direction.

    Conservative-form operators are realized as the exact volume-weighted
    transpose of the advective generator with the opposite drift sign: the
    transpose of upwind advection is donor-cell flux transport, so discrete
    duality (forward slice = adjoint slice of the transposed kernel) and the
    conservation law hold to roundoff rather than to scheme order.
    """
    if direction not in ("forward", "adjoint"):
        raise ValueError("direction must be 'forward' or 'adjoint'")
    form, sign = problem.transport(direction)
    build = _radial_generator if isinstance(grid, RadialGrid) else _box_generator
    if not isinstance(grid, (RadialGrid, BoxGrid)):
        raise GridError(f"unsupported grid {type(grid)}")
    if form == "advective":
        return build(problem, grid, sign)
    L = build(problem, grid, -sign)
    if isinstance(grid, RadialGrid):
        vols = grid.volumes
        inv = sp.diags(1.0 / vols)
        return (inv @ L.T @ sp.diags(vols)).tocsc()
    return L.T.tocsc()  # uniform cells: the volume weights cancel


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

def _auto_dt(problem: ParabolicProblem, grid: Grid, elapsed: float,
             V: np.ndarray) -> float:
    h = grid.h if isinstance(grid, RadialGrid) else min(grid.h)
    d = grid.dim
    dt = min(h**2 / (2.0 * d * problem.matrix.xi), elapsed / 200.0)
    vneg = float(np.max(np.maximum(-V, 0.0), initial=0.0))
    if vneg > 0:
        dt = min(dt, 0.5 / vneg)  # keep I - dt L an M-matrix under sources
    return dt


class _LinearStepper:
    """Solves (I - dt L) u_next = rhs, factorized once when affordable."""

    def __init__(self, L: sp.csc_matrix, dt: float, direct_max: int,
                 tol: float, symmetric: bool):
        n = L.shape[0]
        self.A = (sp.identity(n, format="csc") - dt * L).tocsc()
        self.tol = tol
        self.symmetric = symmetric
        self.lu = None
        if n <= direct_max:
            self.lu = spla.splu(self.A)
        else:
            inv_diag = 1.0 / self.A.diagonal()
            self.prec = spla.LinearOperator(self.A.shape,
                                            lambda v, dI=inv_diag: dI * v)

    def solve(self, rhs: np.ndarray, x0: np.ndarray) -> np.ndarray:
        if self.lu is not None:
            return self.lu.solve(rhs)
        method = spla.cg if self.symmetric else spla.bicgstab
        try:
            x, info = method(self.A, rhs, x0=x0, rtol=self.tol, atol=0.0,
                             M=self.prec)
        except TypeError:  # older scipy spells rtol as tol
            x, info = method(self.A, rhs, x0=x0, tol=self.tol, atol=0.0,
                             M=self.prec)
        if info != 0:
            raise KernelLabError(f"linear solve failed to converge (info={info})")
        return x


def solve(problem: ParabolicProblem, f0: np.ndarray, grid: Grid,
          s: float, t: float, config: SolverConfig | None = None,
          direction: str = "forward", snapshot_times=None) -> SolveResult:
    """Evolve d/dt u = -(T u) from u(s) = f0 to time t.

    f0 must be nonnegative (positivity-preserving contract); snapshot_times
    are elapsed times in (0, t-s] at which intermediate states are recorded.
    """
    config = config or SolverConfig()
    if not t > s:
        raise ValueError("need t > s")
    f0 = np.asarray(f0, float).ravel()
    if np.min(f0) < -1e-13 * max(1.0, float(np.max(np.abs(f0)))):
        raise ValueError("initial data must be nonnegative")
    elapsed = t - s
    L = build_generator(problem, grid, direction)
    V = problem.potential_on_grid(grid)

    if config.dt is not None:
        dt = config.dt
    elif config.n_steps is not None:
        dt = elapsed / config.n_steps
    else:
        dt = _auto_dt(problem, grid, elapsed, V)
    n_steps = max(1, int(math.ceil(elapsed / dt - 1e-12)))
    dt = elapsed / n_steps

    symmetric = problem.drift is None
    scheme = config.scheme
    if scheme == "backward-euler":
        stepper = _LinearStepper(L, dt, config.direct_solver_max,
                                 config.lin_tol, symmetric)
        explicit = None
    elif scheme == "crank-nicolson":
        _check_cfl(problem, grid, dt)
        stepper = _LinearStepper(L, 0.5 * dt, config.direct_solver_max,
                                 config.lin_tol, symmetric)
        explicit = sp.identity(L.shape[0], format="csr") + (0.5 * dt) * L.tocsr()
    else:
        raise ValueError(f"unknown scheme {scheme!r}")

    wanted = sorted(snapshot_times or [])
    snaps: dict[float, np.ndarray] = {}
    u = f0.copy()
    mass0 = grid.integrate(u)
    for k in range(1, n_steps + 1):
        rhs = u if explicit is None else explicit @ u
        u = stepper.solve(rhs, u)
        if scheme == "crank-nicolson":
            floor = -1e-10 * max(float(u.max()), 1e-300)
            if float(u.min()) < floor:
                raise CFLError("Crank-Nicolson produced negative values; "
                               "reduce dt or use backward-euler")
            np.clip(u, 0.0, None, out=u)
        tau = k * dt
        while wanted and tau >= wanted[0] - 1e-12:
            snaps[tau] = u.copy()
            wanted.pop(0)
    if config.check_boundary:
        frac = grid.boundary_fraction(u)
        if frac > config.boundary_tol:
            raise BoundaryLeakError(
                f"boundary mass fraction {frac:.2e} exceeds {config.boundary_tol:.0e}; "
                "enlarge the domain")
    return SolveResult(values=u, times=[s, t], snapshots=snaps,
                       mass_initial=mass0, mass_final=grid.integrate(u),
                       dt=dt, n_steps=n_steps, scheme=scheme)


def _check_cfl(problem: ParabolicProblem, grid: Grid, dt: float):
    h = grid.h if isinstance(grid, RadialGrid) else min(grid.h)
    d = grid.dim
    diff_limit = h**2 / (d * problem.matrix.xi)
    if dt > diff_limit * (1.0 + 1e-9):
        raise CFLError(f"explicit half-step violates the diffusion bound: "
                       f"dt={dt:.3e} > {diff_limit:.3e}")


# ---------------------------------------------------------------------------
# Dirac data and kernel estimation
# ---------------------------------------------------------------------------

def dirac_cell_average(grid: Grid, point, tau0: float) -> np.ndarray:
    """Exact cell averages of k_1(tau0, . - point)."""
    if isinstance(grid, RadialGrid):
        if np.linalg.norm(np.asarray(point, float)) > 1e-12:
            raise GridError("radial Dirac data must sit at the origin")
        mass = gammainc(grid.dim / 2.0, grid.edges**2 / (4.0 * tau0))
        return np.diff(mass) / grid.volumes
    point = np.asarray(point, float)
    axes_mass = []
    for ax in range(grid.dim):
        e = grid.axis_edges(ax)
        cdf = 0.5 * (1.0 + erf((e - point[ax]) / math.sqrt(4.0 * tau0)))
        axes_mass.append(np.diff(cdf) / grid.h[ax])
    out = axes_mass[0]
    for m in axes_mass[1:]:
        out = np.multiply.outer(out, m)
    return out.ravel()


def estimate_kernel(problem: ParabolicProblem, s: float, t: float, point,
                    grid: Grid, config: SolverConfig | None = None,
                    direction: str = "adjoint",
                    snapshot_times=None) -> HeatKernelEstimate:
    """Kernel slice from Dirac-approximating data k_1(tau0, . - point).

    adjoint slices (default) resolve the conservation-law variable; forward
    slices resolve the arrival variable of the same kernel.
    """
    config = config or SolverConfig()
    elapsed = t - s
    tau0 = config.tau0_factor * elapsed
    f0 = dirac_cell_average(grid, point, tau0)
    res = solve(problem, f0, grid, s, t, config, direction=direction,
                snapshot_times=snapshot_times)
    d = grid.dim
    c_hat = float(np.max(res.values) * (elapsed + tau0) ** (d / 2.0))
    for tau, vals in res.snapshots.items():
        c_hat = max(c_hat, float(np.max(vals) * (tau + tau0) ** (d / 2.0)))
    return HeatKernelEstimate(
        variant=problem.label(), direction=direction, s=s, t=t, tau0=tau0,
        point=np.atleast_1d(np.asarray(point, float)), grid=grid,
        values=res.values, mass=res.mass_final,
        scheme=f"{res.scheme}/upwind dt={res.dt:.3e} x{res.n_steps}",
        c_hat=c_hat, snapshots=res.snapshots,
        snapshot_masses={tau: grid.integrate(v) for tau, v in res.snapshots.items()})


# ---------------------------------------------------------------------------
# L^p decay and mollifier consistency
# ---------------------------------------------------------------------------

def lp_norm(values: np.ndarray, grid: Grid, p: float) -> float:
    if math.isinf(p):
        return float(np.max(np.abs(values)))
    w = grid.volumes if isinstance(grid, RadialGrid) else grid.cell_volume
    return float(np.sum(np.abs(values) ** p * w) ** (1.0 / p))


def lp_decay_check(problem: ParabolicProblem, f0: np.ndarray, p: float,
                   horizon: float, grid: Grid,
                   config: SolverConfig | None = None,
                   n_checks: int = 10, tol: float = 1e-8) -> dict:
    """Track ||u(t)||_p against the exponential envelope of the L^p estimate.

    For c(delta_a) = 0 the envelope is flat and the norm must not increase.
    """
    from .constants import critical_exponent

    if problem.variant != "lambda":
        raise ValueError("the decay estimate applies to the plain variant")
    drift = problem.drift
    sigma = problem.matrix.sigma
    delta_a = (drift.delta or 0.0) / sigma**2 if drift is not None else 0.0
    c_a = (drift.c_delta if drift is not None else 0.0) / sigma
    if delta_a > 0:
        p_c = critical_exponent(delta_a)
        if p < p_c - 1e-12:
            raise ValueError(f"p={p} below the critical exponent p_c={p_c:.4g}")
        rate = c_a / (p * math.sqrt(delta_a))
    else:
        rate = 0.0 if c_a == 0.0 else None
    taus = np.linspace(horizon / n_checks, horizon, n_checks)
    res = solve(problem, f0, grid, 0.0, horizon, config, direction="forward",
                snapshot_times=list(taus))
    norm0 = lp_norm(f0, grid, p)
    rows = []
    ok = True
    for tau in sorted(res.snapshots):
        nrm = lp_norm(res.snapshots[tau], grid, p)
        if rate is None:
            envelope = None
            good = True
        else:
            envelope = norm0 * math.exp(rate * tau)
            good = nrm <= envelope * (1.0 + tol)
        ok = ok and good
        rows.append({"tau": tau, "norm": nrm, "envelope": envelope, "pass": good})
    monotone = all(rows[i + 1]["norm"] <= rows[i]["norm"] * (1.0 + tol)
                   for i in range(len(rows) - 1))
    return {"p": p, "rate": rate, "rows": rows,
            "monotone": monotone and rows[0]["norm"] <= norm0 * (1.0 + tol),
            "pass": ok}


def mollifier_consistency(problems: dict, f0: np.ndarray, t: float, grid: Grid,
                          config: SolverConfig | None = None) -> dict:
    """Cauchy-style consistency of solutions as the mollification width drops.

    problems maps epsilon -> ParabolicProblem (decreasing epsilon order is
    enforced); asserts the L^2 distance between consecutive solutions
    decreases along the tail.
    """
    eps_list = sorted(problems, reverse=True)
    if len(eps_list) < 3:
        raise ValueError("need at least 3 epsilon values")
    sols = {}
    for eps in eps_list:
        sols[eps] = solve(problems[eps], f0, grid, 0.0, t, config,
                          direction="forward").values
    diffs = []
    for e1, e2 in zip(eps_list, eps_list[1:]):
        diffs.append({"eps_coarse": e1, "eps_fine": e2,
                      "l2": lp_norm(sols[e1] - sols[e2], grid, 2.0)})
    tail_ok = all(diffs[i + 1]["l2"] <= diffs[i]["l2"] * (1.0 + 1e-9)
                  for i in range(len(diffs) - 1))
    return {"epsilons": eps_list, "diffs": diffs, "pass": tail_ok}
