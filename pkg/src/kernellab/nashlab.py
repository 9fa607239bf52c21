"""Entropy / moment / G-function diagnostics of kernel slices.

The entropy Q = -<u log u> and the moment M = <|x - .| u> are quadratures of
an adjoint kernel slice whose mass must sit at 1 (they are meaningless
without the conservation law).  Against the reference curve
Qtilde(tau) = (d/2) log tau the diagnostics that the bound machinery needs
are: |Q - Qtilde| bounded, M/sqrt(tau) pinched in [c_minus, c_plus], and
e^{Q/d} <= c M.

The G-function is the Gaussian-weighted log-average
<k_beta(tau, o - .) log u>, admissible only while 2|x - y| <= sqrt(beta tau);
the integrand is floored far below the kernel peak, mirroring the
inf-over-regularizations definition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import AdmissibilityError, GridError, MassDeficitError
from .evolve import HeatKernelEstimate
from .grids import BoxGrid, Grid, RadialGrid
from .kernelfit import gaussian_kernel

LOG_FLOOR_REL = 1e-30


def _mass_guard(u: np.ndarray, grid: Grid, mass_tol: float) -> None:
    mass = grid.integrate(u)
    if abs(mass - 1.0) > mass_tol:
        raise MassDeficitError(
            f"slice mass {mass:.6f} deviates from 1 beyond {mass_tol:g}")


def entropy(u: np.ndarray, grid: Grid, mass_tol: float = 2e-3) -> float:
    """Q = -<u log u> with 0 log 0 = 0; requires mass within mass_tol of 1."""
    u = np.asarray(u, float).ravel()
    _mass_guard(u, grid, mass_tol)
    w = grid.volumes if isinstance(grid, RadialGrid) else grid.cell_volume
    pos = u > 0
    vals = np.zeros_like(u)
    vals[pos] = u[pos] * np.log(u[pos])
    return -float(np.sum(vals * w)) if isinstance(grid, RadialGrid) \
        else -float(np.sum(vals) * w)


def moment(u: np.ndarray, grid: Grid, center=None, mass_tol: float = 2e-3) -> float:
    """M = <|center - .| u>; radial slices are centered at the origin."""
    u = np.asarray(u, float).ravel()
    _mass_guard(u, grid, mass_tol)
    if isinstance(grid, RadialGrid):
        if center is not None and np.linalg.norm(np.asarray(center)) > 1e-12:
            raise GridError("radial moments are taken about the origin")
        return float((grid.centers * u) @ grid.volumes)
    center = np.zeros(grid.dim) if center is None else np.asarray(center, float)
    dist = np.linalg.norm(grid.points() - center, axis=1)
    return float(np.sum(dist * u) * grid.cell_volume)


def q_tilde(tau: float, d: int) -> float:
    return 0.5 * d * math.log(tau)


def g_function(u: np.ndarray, grid: Grid, beta: float, tau: float,
               x, y, floor_rel: float = LOG_FLOOR_REL) -> float:
    """<k_beta(tau, o - .) log(u v floor)> with o = (x + y)/2.

    Admissible only for 2|x - y| <= sqrt(beta tau).
    """
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    if 2.0 * np.linalg.norm(x - y) > math.sqrt(beta * tau) + 1e-12:
        raise AdmissibilityError(
            f"2|x-y| = {2 * np.linalg.norm(x - y):.4g} exceeds "
            f"sqrt(beta tau) = {math.sqrt(beta * tau):.4g}")
    o = 0.5 * (x + y)
    u = np.asarray(u, float).ravel()
    if isinstance(grid, RadialGrid):
        if np.linalg.norm(o) > 1e-12:
            raise GridError("radial G-function needs x = y = origin")
        z = grid.centers
        w = grid.volumes
    else:
        z = np.linalg.norm(grid.points() - o, axis=1)
        w = np.full(grid.size, grid.cell_volume)
    gam = gaussian_kernel(beta, tau, z, grid.dim)
    floor = floor_rel * float(u.max())
    logu = np.log(np.maximum(u, floor))
    return float((gam * logu) @ w)


# ---------------------------------------------------------------------------
# time-series diagnostics
# ---------------------------------------------------------------------------

@dataclass
class NashDiagnostics:
    """Entropy/moment series of one kernel run, with the derived envelopes."""

    taus: np.ndarray               # effective times (elapsed + tau0)
    Q: np.ndarray
    Q_tilde: np.ndarray
    M: np.ndarray
    moment_ratio: np.ndarray       # M / sqrt(tau)
    emc_ratio: np.ndarray          # e^{Q/d} / M
    dim: int
    dissipation: np.ndarray | None = None
    g_values: dict = dc_field(default_factory=dict)

    @property
    def C_NEE(self) -> float:
        return float(np.max(np.abs(self.Q - self.Q_tilde)))

    @property
    def c_minus(self) -> float:
        return float(np.min(self.moment_ratio))

    @property
    def c_plus(self) -> float:
        return float(np.max(self.moment_ratio))

    def summary(self) -> dict:
        return {"C_NEE": self.C_NEE, "c_minus": self.c_minus,
                "c_plus": self.c_plus,
                "emc_sup": float(np.max(self.emc_ratio)),
                "n_times": int(len(self.taus))}

    def rows(self) -> list[dict]:
        out = []
        for i, tau in enumerate(self.taus):
            row = {"tau": float(tau), "Q": float(self.Q[i]),
                   "Q_tilde": float(self.Q_tilde[i]), "M": float(self.M[i]),
                   "moment_ratio": float(self.moment_ratio[i]),
                   "emc_ratio": float(self.emc_ratio[i])}
            if self.dissipation is not None:
                row["dissipation"] = float(self.dissipation[i])
            out.append(row)
        return out


def nash_series(kernel: HeatKernelEstimate, mass_tol: float = 2e-3,
                with_dissipation: bool = False) -> NashDiagnostics:
    """Q/M series over the kernel's snapshots plus its final state.

    The kernel must be an adjoint slice of the conservative variant (unit row
    mass); dissipation needs a smooth drift and is skipped by default.
    """
    if kernel.direction != "adjoint":
        raise ValueError("Nash diagnostics consume adjoint (row) slices")
    grid = kernel.grid
    d = grid.dim
    states = [(tau + kernel.tau0, v) for tau, v in sorted(kernel.snapshots.items())]
    states.append((kernel.effective_time, kernel.values))
    taus, Q, M, N = [], [], [], []
    for tau, vals in states:
        taus.append(tau)
        Q.append(entropy(vals, grid, mass_tol))
        M.append(moment(vals, grid, mass_tol=mass_tol))
        if with_dissipation:
            N.append(_dissipation(vals, grid))
    taus = np.asarray(taus)
    Q = np.asarray(Q)
    M = np.asarray(M)
    qt = np.asarray([q_tilde(t, d) for t in taus])
    return NashDiagnostics(
        taus=taus, Q=Q, Q_tilde=qt, M=M,
        moment_ratio=M / np.sqrt(taus),
        emc_ratio=np.exp(Q / d) / M, dim=d,
        dissipation=np.asarray(N) if with_dissipation else None)


def _dissipation(u: np.ndarray, grid: Grid) -> float:
    """<|grad u|^2 / u> on faces (isotropic a = 1 normalization)."""
    if isinstance(grid, RadialGrid):
        du = np.diff(u) / np.diff(grid.centers)
        uf = 0.5 * (u[:-1] + u[1:])
        vols = 0.5 * (grid.volumes[:-1] + grid.volumes[1:])
        pos = uf > 0
        return float(np.sum(du[pos] ** 2 / uf[pos] * vols[pos]))
    if isinstance(grid, BoxGrid):
        v = u.reshape(grid.shape)
        total = 0.0
        for axis in range(grid.dim):
            du = np.diff(v, axis=axis) / grid.h[axis]
            uf = 0.5 * (np.take(v, range(0, grid.n[axis] - 1), axis=axis)
                        + np.take(v, range(1, grid.n[axis]), axis=axis))
            pos = uf > 0
            total += float(np.sum(du[pos] ** 2 / uf[pos])) * grid.cell_volume
        return total
    raise GridError(f"unsupported grid {type(grid)}")


def entropy_moment_check(diag: NashDiagnostics) -> dict:
    """sup_t e^{Q/d} / M: finite and reported per time."""
    sup = float(np.max(diag.emc_ratio))
    return {"check": "entropy-moment", "sup_ratio": sup,
            "per_time": [{"tau": float(t), "ratio": float(v)}
                         for t, v in zip(diag.taus, diag.emc_ratio)],
            "pass": bool(np.isfinite(sup))}


def nee_stability(diag_coarse: NashDiagnostics, diag_fine: NashDiagnostics,
                  rel_tol: float = 0.10) -> dict:
    """Refinement stability of sup |Q - Qtilde| (and of the moment band)."""
    a, b = diag_coarse.C_NEE, diag_fine.C_NEE
    drift = abs(b - a) / max(abs(a), 1e-300)
    return {"check": "nee-stability", "coarse": a, "fine": b,
            "rel_change": drift, "pass": bool(drift <= rel_tol)}
