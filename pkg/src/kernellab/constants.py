"""Generic constants of the bound machinery, computed as pure functions.

Everything here is deterministic arithmetic on the inputs
(d, sigma, xi, delta, c(delta), nu, lambda):

    delta_a = delta / sigma^2          (relative form bound w.r.t. A)
    p_c     = 2 / (2 - sqrt(delta_a))  (defined only for delta_a < 4)
    c_p(p)  = 1/p_c - 1/p
    beta*   = (3/2) (1 + delta_a/4) xi
    K1      = sqrt(2 p_c) (1 + sqrt(delta_a/4)),   K2 = 1 + K1/sqrt(delta_a)
    omega   = c(delta_a) / (2 delta_a)
    C_da    = 1 + delta_a/4,   c4 = C_da xi
    c_g     = 2 sigma c_N / p_c

plus the Coulhon-Raynaud extrapolation arithmetic.  The Nash constant c_N and
the on-diagonal constant c_hat are measured quantities; they enter with
provenance strings rather than derivations.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import SupercriticalError


def critical_exponent(delta_a: float) -> float:
    """p_c = 2/(2 - sqrt(delta_a)); requires 0 < delta_a < 4."""
    if not 0.0 < delta_a < 4.0:
        raise SupercriticalError(
            f"supercritical form-bound delta_a={delta_a:g}: "
            "lower-bound theory inapplicable (requires delta < 4 sigma^2)")
    return 2.0 / (2.0 - math.sqrt(delta_a))


def c_p(p: float, delta_a: float) -> float:
    """c_p = 1/p_c - 1/p = 1/p' - sqrt(delta_a/4); nonnegative for p >= p_c."""
    return 1.0 / critical_exponent(delta_a) - 1.0 / p


@dataclass
class ConstantLedger:
    """All proof-defined constants derivable from the scenario inputs.

    Entries gated on delta_a < 4 are None in the supercritical regime.
    Measured slots (c_N, c_hat, c_plus) are inputs with provenance, not
    derivations.
    """

    d: int
    sigma: float
    xi: float
    delta: float
    c_delta: float = 0.0
    nu: float | None = None
    lam: float | None = None
    c_N: float | None = None
    c_hat: float | None = None
    c_plus_measured: float | None = None
    provenance: dict = field(default_factory=dict)

    # derived (populated by __post_init__)
    delta_a: float = field(init=False)
    c_delta_a: float = field(init=False)
    p_c: float | None = field(init=False)
    K1: float | None = field(init=False)
    K2: float | None = field(init=False)
    c_g: float | None = field(init=False)
    beta_star: float = field(init=False)
    omega: float | None = field(init=False)
    C_delta_a: float = field(init=False)
    c4: float = field(init=False)
    beta: float | None = field(init=False)
    c_beta: float | None = field(init=False)
    c_of_beta: float | None = field(init=False)

    def __post_init__(self):
        if self.d < 3:
            raise ValueError("d >= 3 required")
        if not (0.0 < self.sigma <= self.xi):
            raise ValueError("need 0 < sigma <= xi")
        if self.delta < 0 or self.c_delta < 0:
            raise ValueError("delta and c(delta) must be >= 0")
        da = self.delta / self.sigma**2
        self.delta_a = da
        # quadratic-form bookkeeping of the delta -> delta_a reduction
        self.c_delta_a = self.c_delta / self.sigma
        self.beta_star = 1.5 * (1.0 + da / 4.0) * self.xi
        self.C_delta_a = 1.0 + da / 4.0
        self.c4 = self.C_delta_a * self.xi
        self.omega = (self.c_delta_a / (2.0 * da)) if da > 0 else None
        if 0.0 < da < 4.0:
            pc = critical_exponent(da)
            self.p_c = pc
            self.K1 = math.sqrt(2.0 * pc) * (1.0 + math.sqrt(da / 4.0))
            self.K2 = 1.0 + self.K1 / math.sqrt(da)
            self.c_g = (2.0 * self.sigma * self.c_N / pc) if self.c_N else None
        else:
            self.p_c = self.K1 = self.K2 = self.c_g = None
        # beta = max(beta*, (4 c_+)^2) once c_+ has been measured
        if self.c_plus_measured is not None:
            self.beta = max(self.beta_star, (4.0 * self.c_plus_measured) ** 2)
            self.c_beta = (4.0 * math.pi * self.beta) ** (-self.d / 2.0) * math.exp(-0.25)
            if self.c_hat and self.p_c is not None:
                r = max(2.0, self.p_c)
                self.c_of_beta = (self.sigma * self.c_beta / (4.0 * self.beta * self.c_hat)
                                  * 2.0 ** (-self.d / (2.0 * (r - 1.0))))
            else:
                self.c_of_beta = None
        else:
            self.beta = self.c_beta = self.c_of_beta = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ConstantLedger":
        keys = ("d", "sigma", "xi", "delta", "c_delta", "nu", "lam",
                "c_N", "c_hat", "c_plus_measured", "provenance")
        return cls(**{k: data[k] for k in keys if k in data})


def proof_constants(d: int, sigma: float, xi: float, delta: float,
                    c_delta: float = 0.0, nu: float | None = None,
                    lam: float | None = None, **measured) -> ConstantLedger:
    """Populate the full ledger from scenario inputs."""
    return ConstantLedger(d=d, sigma=sigma, xi=xi, delta=delta, c_delta=c_delta,
                          nu=nu, lam=lam, **measured)


def coulhon_raynaud(p: float, q: float, r: float, nu: float,
                    M1: float, M2: float) -> tuple[float, float]:
    """Extrapolation arithmetic: given L^p stability with constant M1 and
    L^q -> L^r smoothing (t-s)^{-nu} with constant M2, returns the exponent
    nu/(1-beta) and constant M of the extrapolated L^p -> L^r bound, where
    beta = (r/q)(q-p)/(r-p) (limit (q-p)/q for r = infinity)."""
    if not (1.0 <= p < q < r):
        raise ValueError(f"need 1 <= p < q < r, got ({p}, {q}, {r})")
    if nu <= 0 or M1 <= 0 or M2 <= 0:
        raise ValueError("nu, M1, M2 must be positive")
    if math.isinf(r):
        beta = (q - p) / q
    else:
        beta = (r / q) * (q - p) / (r - p)
    exponent = nu / (1.0 - beta)
    M = 2.0 ** (nu / (1.0 - beta) ** 2) * M1 * M2 ** (1.0 / (1.0 - beta))
    return exponent, M


def calibrate_nash_constant(bank, grid) -> tuple[float, dict]:
    """Empirical Nash constant: minimize ||grad psi||^2 ||psi||_1^{4/d} /
    ||psi||_2^{2+4/d} over the test-function bank.

    Returns (c_N, provenance).  The minimum over a finite bank is an upper
    bound for the true infimum; downstream checks use the same bank.
    """
    from .quadform import bank_norms

    d = grid.dim
    best = math.inf
    best_name = None
    for name, psi in bank:
        grad2, l1, l2sq = bank_norms(psi, grid)
        if l1 <= 0 or l2sq <= 0:
            continue
        ratio = grad2 * l1 ** (4.0 / d) / l2sq ** (1.0 + 2.0 / d)
        if ratio < best:
            best, best_name = ratio, name
    prov = {"method": "empirical min over test bank", "argmin": best_name,
            "grid": grid.to_config()}
    return float(best), prov


# ---------------------------------------------------------------------------
# theory vs fitted constants
# ---------------------------------------------------------------------------

def theory_vs_fit(ledger: ConstantLedger, fits: dict, regime: str,
                  div_sign: str = "unknown") -> dict:
    """Direction-consistency between guaranteed regimes and fitted envelopes.

    fits maps side -> BoundFit (or None if not attempted).  Only feasibility
    directions are asserted; fitted constants are reported side by side with
    the ledger without claiming numeric equality.
    """
    checks = []

    def expect_feasible(side, why):
        fit = fits.get(side)
        ok = fit is not None and fit.feasible
        checks.append({"check": f"{side}-feasible", "reason": why, "pass": bool(ok)})

    if regime == "baseline":
        expect_feasible("lower", "b=0 De Giorgi-Nash regime")
        expect_feasible("upper", "b=0 De Giorgi-Nash regime")
    elif regime == "thm1-lower" and ledger.delta_a < 4.0 and div_sign == "nonnegative":
        expect_feasible("lower", "delta_a < 4 and div b >= 0")
    elif regime == "thm3-two-sided" and ledger.nu is not None:
        expect_feasible("lower", "two-sided regime")
        expect_feasible("upper", "two-sided regime")
    elif regime == "thm2-upper" and ledger.nu is not None:
        expect_feasible("upper", "div b_+ in Kato class")
    elif regime == "counterexample-ugb":
        fit = fits.get("upper")
        checks.append({"check": "upper-infeasible-expected",
                       "reason": "singular weight blows up at the origin",
                       "pass": bool(fit is not None and not fit.feasible)})
    elif regime == "counterexample-lgb":
        fit = fits.get("lower")
        checks.append({"check": "lower-infeasible-expected",
                       "reason": "weight vanishes at the origin",
                       "pass": bool(fit is not None and not fit.feasible)})

    table = {}
    for side, fit in fits.items():
        if fit is None:
            continue
        table[side] = {"c_mult": fit.c_mult, "c_rate": fit.c_rate,
                       "c_exp": fit.c_exp, "feasible": fit.feasible}
    report = {
        "regime": regime,
        "ledger": {"delta_a": ledger.delta_a, "beta_star": ledger.beta_star,
                   "p_c": ledger.p_c, "c4": ledger.c4},
        "fits": table,
        "checks": checks,
        "pass": all(c["pass"] for c in checks),
    }
    return report
