"""Gaussian envelope fitting and pointwise kernel comparisons.

An envelope fit is a certificate, not a regression: the returned constants
satisfy the defining inequality on every sample of the fit region.  The rate
constant is searched on a logarithmic grid in [sigma/4, 4 xi]; the
multiplicative constant is then extremal over the samples, and the
exponential-in-time rate (only fitted when the scenario carries c(delta) or
lambda(nu) > 0) comes from the piecewise-linear program in log space.

Feasibility on a finite sample set is decided by an inner-radius refinement
study: if the extremal constant keeps growing as the region is allowed to
reach smaller |y|, no finite constant works in the limit and the side is
declared infeasible (the expected outcome in the counterexample scenarios,
where the ratio to the Gaussian grows like a power of 1/|y|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import CheckFailure, GridError
from .evolve import HeatKernelEstimate
from .grids import RadialGrid

RATE_GRID_POINTS = 25
GROWTH_THRESHOLD = 1.5   # total extremal-constant growth across the inner ladder
OUTER_THRESHOLD = 1.3    # constant inflation when the outer half joins the region
HARD_CAP = 1e3           # sanity cap on multiplicative constants
FLOOR_REL = 1e-12


def gaussian_kernel(mu: float, t: float, z, d: int = 3) -> np.ndarray:
    """k_mu(t, z) = (4 pi mu t)^{-d/2} exp(-|z|^2 / (4 mu t)); z = |x - y|."""
    if mu <= 0 or t <= 0:
        raise ValueError("mu and t must be positive")
    z = np.asarray(z, float)
    return (4.0 * math.pi * mu * t) ** (-d / 2.0) * np.exp(-(z**2) / (4.0 * mu * t))


@dataclass
class BoundFit:
    side: str                 # "lower" or "upper"
    c_mult: float             # c1 or c3
    c_rate: float             # c2 or c4
    c_exp: float              # c0 or c5
    region: dict
    residual: float
    feasible: bool
    n_samples: int
    growth_trace: list = dc_field(default_factory=list)
    most_violating: dict | None = None

    def to_record(self) -> dict:
        return {"side": self.side, "c_mult": self.c_mult, "c_rate": self.c_rate,
                "c_exp": self.c_exp, "region": self.region,
                "residual": self.residual, "feasible": self.feasible,
                "n_samples": self.n_samples, "growth_trace": self.growth_trace,
                "most_violating": self.most_violating}

    def envelope(self, tau: float, r, d: int = 3) -> np.ndarray:
        sign = -1.0 if self.side == "lower" else 1.0
        return (self.c_mult * gaussian_kernel(self.c_rate, tau, r, d)
                * math.exp(sign * self.c_exp * tau))


@dataclass
class WeightProfile:
    p_hat: float
    r_lo: float
    r_hi: float
    residual: float
    theory_exponent: float | None = None
    radii: np.ndarray | None = None
    ratios: np.ndarray | None = None

    def to_record(self) -> dict:
        return {"p_hat": self.p_hat, "r_lo": self.r_lo, "r_hi": self.r_hi,
                "residual": self.residual, "theory_exponent": self.theory_exponent,
                "radii": None if self.radii is None else list(self.radii),
                "ratios": None if self.ratios is None else list(self.ratios)}


def _collect_samples(kernels) -> list[tuple[float, np.ndarray, np.ndarray]]:
    """(tau_eff, radii, values) triples from final states and snapshots."""
    samples = []
    for k in kernels:
        if not isinstance(k.grid, RadialGrid):
            raise GridError("envelope fitting consumes radial kernel slices")
        r = k.grid.centers
        for tau in sorted(k.snapshots):
            samples.append((tau + k.tau0, r, np.asarray(k.snapshots[tau])))
        samples.append((k.effective_time, r, np.asarray(k.values)))
    return samples


def _extremal_constants(samples, side: str, c_rate: float, d: int,
                        r_lo: float, r_hi: float, fit_rate: bool,
                        tail_factor: float = 6.0):
    """Per-time extremal ratios and the (c_mult, c_exp) solving the log-space
    program; returns (c_mult, c_exp, per_time, extreme_sample)."""
    per_time = []
    extreme = None
    for tau, r, u in samples:
        cap = min(r_hi, tail_factor * math.sqrt(c_rate * tau))
        mask = (r >= r_lo) & (r <= cap) & (u > 0)
        if not np.any(mask):
            continue
        ratio = u[mask] / gaussian_kernel(c_rate, tau, r[mask], d)
        if side == "lower":
            j = int(np.argmin(ratio))
        else:
            j = int(np.argmax(ratio))
        val = float(ratio[j])
        per_time.append((tau, val))
        if extreme is None or ((side == "lower") == (val < extreme["ratio"])):
            extreme = {"tau": tau, "r": float(r[mask][j]), "ratio": val}
    if not per_time:
        raise CheckFailure("fit region contains no samples")
    taus = np.array([pt[0] for pt in per_time])
    vals = np.array([pt[1] for pt in per_time])
    logs = np.log(np.maximum(vals, 1e-300))
    if not fit_rate:
        c_exp = 0.0
        c_mult = float(vals.min()) if side == "lower" else float(vals.max())
        return c_mult, c_exp, per_time, extreme
    # piecewise-linear program: rate candidates are the pairwise slopes
    cands = {0.0}
    for i in range(len(taus)):
        for j in range(i + 1, len(taus)):
            if taus[i] != taus[j]:
                slope = (logs[i] - logs[j]) / (taus[j] - taus[i])
                if slope > 0:
                    cands.add(float(slope))
    tbar = float(taus.mean())
    best = None
    for c0 in cands:
        if side == "lower":
            logc = float(np.min(logs + c0 * taus))
            score = logc - c0 * tbar
        else:
            logc = float(np.max(logs - c0 * taus))
            score = -(logc + c0 * tbar)
        if best is None or score > best[0]:
            best = (score, logc, c0)
    _, logc, c_exp = best
    return float(math.exp(logc)), float(c_exp), per_time, extreme


def _candidate_diagnosis(samples, side, c_rate, d, r_lo, r_hi, fit_rate,
                         grid_floor, growth_threshold, outer_threshold):
    """Extremal constant of one rate candidate plus its stability diagnosis.

    A candidate is admissible only when its constant is stable against (a)
    letting the region reach the smallest resolved radii (the singular-weight
    mechanism) and (b) the outer half of its own tail cap (the mechanism by
    which a rate-deficient candidate hides violations behind its cap).
    """
    c_mult, c_exp, per_time, extreme = _extremal_constants(
        samples, side, c_rate, d, r_lo, r_hi, fit_rate)
    cuts = list(np.geomspace(max(16.0 * grid_floor, r_lo * 4.0), grid_floor, 5))
    trace = []
    for cut in cuts:
        cm, _, _, _ = _extremal_constants(samples, side, c_rate, d,
                                          cut, r_hi, fit_rate)
        trace.append({"r_cut": float(cut), "c_mult": cm})
    consts = [t["c_mult"] for t in trace]
    cap = min(r_hi, 6.0 * math.sqrt(c_rate * max(pt[0] for pt in per_time)))
    half_ok = cap / 2.0 > 4.0 * r_lo
    if half_ok:
        c_half, _, _, _ = _extremal_constants(samples, side, c_rate, d,
                                              r_lo, cap / 2.0, fit_rate)
    if side == "upper":
        monotone = all(b >= a * 0.98 for a, b in zip(consts, consts[1:]))
        inner_div = (monotone and consts[-1] > consts[0] * growth_threshold) \
            or consts[-1] > HARD_CAP
        outer_div = half_ok and c_mult > c_half * outer_threshold
    else:
        monotone = all(b <= a * 1.02 for a, b in zip(consts, consts[1:]))
        inner_div = (monotone and consts[-1] * growth_threshold < consts[0]) \
            or consts[-1] < 1.0 / HARD_CAP
        outer_div = half_ok and c_mult * outer_threshold < c_half
    return {"c_mult": c_mult, "c_exp": c_exp, "c_rate": c_rate,
            "per_time": per_time, "extreme": extreme, "trace": trace,
            "inner_diverging": bool(inner_div), "outer_diverging": bool(outer_div),
            "admissible": not (inner_div or outer_div)}


def fit_bound(kernels, side: str, *, sigma: float = 1.0, xi: float = 1.0,
              r_lo: float = 0.0, r_hi: float = math.inf,
              fit_rate: bool = False, d: int | None = None,
              growth_threshold: float = GROWTH_THRESHOLD,
              outer_threshold: float = OUTER_THRESHOLD) -> BoundFit:
    """Extremal Gaussian envelope over the sampled fit region.

    kernels: HeatKernelEstimate list (>= 3 time samples between finals and
    snapshots).  The rate constant ranges over a logarithmic grid in
    [sigma/4, 4 xi]; the fit is feasible iff some rate candidate carries a
    stable extremal constant (see _candidate_diagnosis), and the returned
    constants then satisfy the inequality on every sample of the region.
    """
    if side not in ("lower", "upper"):
        raise ValueError("side must be 'lower' or 'upper'")
    samples = _collect_samples(kernels)
    if len(samples) < 3:
        raise ValueError("need kernel estimates at >= 3 times")
    d = d or kernels[0].grid.dim
    grid_floor = float(kernels[0].grid.centers[0])
    r_lo_eff = max(r_lo, grid_floor)
    r_hi_eff = min(r_hi, float(kernels[0].grid.rmax))

    rates = np.geomspace(sigma / 4.0, 4.0 * xi, RATE_GRID_POINTS)
    diags = [_candidate_diagnosis(samples, side, float(c), d, r_lo_eff,
                                  r_hi_eff, fit_rate, grid_floor,
                                  growth_threshold, outer_threshold)
             for c in rates]
    admissible = [dg for dg in diags if dg["admissible"]]
    feasible = bool(admissible)
    pool = admissible if feasible else diags
    if side == "lower":
        best = max(pool, key=lambda dg: dg["c_mult"])
    else:
        best = min(pool, key=lambda dg: dg["c_mult"])
    residual = float(best["per_time"][-1][1])
    return BoundFit(
        side=side, c_mult=best["c_mult"], c_rate=best["c_rate"],
        c_exp=best["c_exp"],
        region={"r_lo": r_lo_eff, "r_hi": r_hi_eff,
                "times": [pt[0] for pt in best["per_time"]]},
        residual=residual, feasible=feasible, n_samples=len(samples),
        growth_trace=best["trace"], most_violating=best["extreme"])


def ratio_growth(kernel: HeatKernelEstimate, c_rate: float,
                 radii: np.ndarray, d: int | None = None) -> dict:
    """Max of u / k_{c_rate} near each radius, with the log-log growth slope.

    Quantifies the counterexample mechanism: a positive slope against 1/|y|
    is the failure of the Gaussian upper bound near the singularity.
    """
    if not isinstance(kernel.grid, RadialGrid):
        raise GridError("ratio growth wants a radial kernel slice")
    d = d or kernel.grid.dim
    r = kernel.grid.centers
    tau = kernel.effective_time
    ratio = kernel.values / gaussian_kernel(c_rate, tau, r, d)
    radii = np.asarray(sorted(radii))
    vals = []
    for r0 in radii:
        mask = (r >= r0 / 1.3) & (r <= r0 * 1.3)
        if not np.any(mask):
            raise ValueError(f"no grid points near radius {r0:g}")
        vals.append(float(ratio[mask].max()))
    vals = np.asarray(vals)
    slope = float(np.polyfit(np.log(radii), np.log(vals), 1)[0])
    return {"radii": list(radii), "max_ratio": list(vals),
            "power_of_inverse_radius": -slope}


def fit_weight_exponent(kernel: HeatKernelEstimate, r_lo: float, r_hi: float,
                        c_ref: float = 1.0, n_radii: int = 24,
                        theory_exponent: float | None = None,
                        monotone_slack: float = 5e-3) -> WeightProfile:
    """Slope of log(u / k_{c_ref}) against log |y| on [r_lo, r_hi].

    Requires at least 5 resolved radii and a monotone ratio profile; the
    returned p_hat is minus the regression slope, so the singular attracting
    weight gives p_hat > 0 and the vanishing repelling weight p_hat < 0.
    """
    if not isinstance(kernel.grid, RadialGrid):
        raise GridError("weight fitting wants a radial kernel slice")
    if not r_hi <= math.sqrt(kernel.effective_time) + 1e-12:
        raise ValueError("fit radii must stay inside |y| <= sqrt(t)")
    r = kernel.grid.centers
    mask = (r >= r_lo) & (r <= r_hi)
    radii_all = r[mask]
    if len(radii_all) < 5:
        raise ValueError(f"only {len(radii_all)} radii resolved in "
                         f"[{r_lo:g}, {r_hi:g}]; need >= 5")
    take = np.unique(np.geomspace(1, len(radii_all), n_radii).astype(int) - 1)
    radii = radii_all[take]
    tau = kernel.effective_time
    vals = kernel.values[mask][take]
    ratio = vals / gaussian_kernel(c_ref, tau, radii, kernel.grid.dim)
    diffs = np.diff(np.log(np.maximum(ratio, 1e-300)))
    if not (np.all(diffs <= monotone_slack) or np.all(diffs >= -monotone_slack)):
        raise CheckFailure("nonmonotone ratio profile; kernel under-resolved "
                           "or scenario outside the weighted regime")
    x = np.log(radii)
    y = np.log(np.maximum(ratio, 1e-300))
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return WeightProfile(p_hat=float(-slope), r_lo=float(radii[0]),
                         r_hi=float(radii[-1]), residual=resid,
                         theory_exponent=theory_exponent,
                         radii=radii, ratios=ratio)


# ---------------------------------------------------------------------------
# pointwise comparisons
# ---------------------------------------------------------------------------

def _aligned(*kernels) -> None:
    g0 = kernels[0].grid.to_config()
    t0 = kernels[0].effective_time
    for k in kernels[1:]:
        if k.grid.to_config() != g0:
            raise ValueError("kernel comparisons need matching grids")
        if abs(k.effective_time - t0) > 1e-9 * t0:
            raise ValueError("kernel comparisons need matching times")


def pointwise_domination(smaller: HeatKernelEstimate, larger: HeatKernelEstimate,
                         *, floor_rel: float = FLOOR_REL, tol: float = 0.05,
                         label: str = "domination") -> dict:
    """Check smaller <= larger on all cells above the solver floor."""
    _aligned(smaller, larger)
    a = np.asarray(smaller.values).ravel()
    b = np.asarray(larger.values).ravel()
    floor = floor_rel * max(float(a.max()), float(b.max()))
    mask = (a > floor) | (b > floor)
    excess = (a - b * (1.0 + tol))[mask]
    n_bad = int(np.sum(excess > 0))
    worst = None
    if n_bad:
        j = int(np.argmax(excess))
        idx = np.nonzero(mask)[0][j]
        worst = {"cell": int(idx), "smaller": float(a[idx]), "larger": float(b[idx]),
                 "ratio": float(a[idx] / max(b[idx], 1e-300))}
    report = {"check": label, "n_cells": int(mask.sum()), "n_violations": n_bad,
              "tol": tol, "worst": worst, "pass": n_bad == 0}
    if n_bad:
        raise CheckFailure(f"{label}: {n_bad} cells violate beyond tolerance "
                           f"(worst ratio {worst['ratio']:.4g})", report=report)
    return report


def domination_check(adjoint_kernel: HeatKernelEstimate,
                     kernel: HeatKernelEstimate, *, tol: float = 0.05,
                     floor_rel: float = FLOOR_REL) -> dict:
    """Duhamel domination u_* <= u for div b >= 0 (swap arguments for the
    repelling configuration)."""
    return pointwise_domination(adjoint_kernel, kernel, tol=tol,
                                floor_rel=floor_rel, label="duhamel-domination")


def sandwich_check(h1: HeatKernelEstimate, u: HeatKernelEstimate,
                   hp: HeatKernelEstimate, p: float, *, tol: float = 0.05,
                   floor_rel: float = FLOOR_REL) -> dict:
    """Pointwise h1 <= u^{1/p} hp^{1/p'} on above-floor cells."""
    if p <= 1:
        raise ValueError("need p > 1")
    _aligned(h1, u, hp)
    pprime = p / (p - 1.0)
    a = np.asarray(h1.values).ravel()
    ub = np.asarray(u.values).ravel()
    c = np.asarray(hp.values).ravel()
    floor = floor_rel * float(max(a.max(), ub.max(), c.max()))
    mask = (a > floor) & (ub > floor) & (c > floor)
    rhs = ub[mask] ** (1.0 / p) * c[mask] ** (1.0 / pprime)
    excess = a[mask] - rhs * (1.0 + tol)
    n_bad = int(np.sum(excess > 0))
    worst = None
    if n_bad:
        j = int(np.argmax(excess))
        idx = np.nonzero(mask)[0][j]
        worst = {"cell": int(idx), "lhs": float(a[idx]),
                 "rhs": float(rhs[j]), "ratio": float(a[idx] / max(rhs[j], 1e-300))}
    report = {"check": "lie-trotter-sandwich", "p": p, "pprime": pprime,
              "n_cells": int(mask.sum()), "n_violations": n_bad, "tol": tol,
              "worst": worst, "pass": n_bad == 0}
    if n_bad:
        raise CheckFailure(f"sandwich: {n_bad} cells violate beyond tolerance",
                           report=report)
    return report
