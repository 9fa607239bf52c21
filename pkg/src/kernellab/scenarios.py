"""Scenario configuration, hypothesis gating, the run pipeline, persistence.

A scenario is a small YAML document naming a matrix, a drift, a theorem-regime
tag, a time window, and expectations per envelope side.  Validation happens
before any solve: a regime tag that contradicts the declared field metadata
(e.g. thm1-lower with a repelling drift) refuses to run.

Runs are content-addressed: the run directory is keyed by the hash of the
canonical scenario document, every persisted artifact is listed in the
manifest with its own digest, and the manifest digest is computed over
everything except the volatile timestamp block, so identical scenario +
version reproduce identical digests.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import time
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .constants import proof_constants, theory_vs_fit
from .errors import CheckFailure, ScenarioValidationError
from .evolve import HeatKernelEstimate, ParabolicProblem, SolverConfig, estimate_kernel
from .fields import DriftField, parse_field, parse_matrix
from .grids import RadialGrid, grid_from_config
from .kernelfit import (domination_check, fit_bound, fit_weight_exponent,
                        gaussian_kernel, ratio_growth, sandwich_check)
from .mollify import mollify, verify_preservation
from .nashlab import nash_series, nee_stability
from .quadform import estimate_kato_norm

REGIMES = ("baseline", "thm1-lower", "thm2-upper", "thm3-two-sided",
           "counterexample-ugb", "counterexample-lgb")


@dataclass
class Scenario:
    name: str
    regime: str = "baseline"
    matrix: str = "identity:d=3"
    drift: str | None = None
    window: tuple[float, float] = (0.0, 1.0)
    mollify_eps: float | None = None     # solver-side mollification width
    epsilons: list = dc_field(default_factory=list)   # preservation sweep
    grid: dict = dc_field(default_factory=dict)
    solver: dict = dc_field(default_factory=dict)
    fit: dict = dc_field(default_factory=dict)
    weight: dict = dc_field(default_factory=dict)
    stages: dict = dc_field(default_factory=dict)
    expect: dict = dc_field(default_factory=dict)
    sandwich_p: float = 2.0

    def canonical(self) -> dict:
        doc = asdict(self)
        doc["window"] = list(self.window)
        doc["version"] = __version__
        return doc

    def hash(self) -> str:
        return hashlib.sha256(canonical_json(self.canonical()).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, doc: dict) -> "Scenario":
        doc = dict(doc)
        doc.pop("version", None)
        if "window" in doc:
            doc["window"] = tuple(doc["window"])
        return cls(**doc)

    @classmethod
    def from_yaml(cls, path) -> "Scenario":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(yaml.safe_load(fh))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def validate(scenario: Scenario) -> DriftField | None:
    """Hypothesis gate: every violated assumption is reported at once."""
    violations = []
    if scenario.regime not in REGIMES:
        violations.append(f"unknown regime {scenario.regime!r}")
    matrix = parse_matrix(scenario.matrix)
    drift = parse_field(scenario.drift) if scenario.drift else None
    s, t = scenario.window
    if not 0.0 <= s < t:
        violations.append(f"window must satisfy 0 <= s < t, got {scenario.window}")
    sigma2 = matrix.sigma**2
    if scenario.regime == "baseline":
        if drift is not None and drift.delta not in (0.0, None):
            violations.append("baseline regime expects b = 0")
    elif drift is None:
        violations.append(f"regime {scenario.regime} needs a drift field")
    else:
        delta = drift.delta
        if scenario.regime == "thm1-lower":
            if delta is None or not delta < 4.0 * sigma2:
                violations.append(
                    f"thm1-lower but delta_a >= 4 (delta={delta}, sigma^2={sigma2})")
            if drift.div_sign != "nonnegative":
                violations.append(
                    f"thm1-lower requires div b >= 0, field declares {drift.div_sign}")
        elif scenario.regime == "thm2-upper":
            if delta is None:
                violations.append("thm2-upper requires a declared form bound")
            if drift.div_sign not in ("nonpositive", "nonnegative") \
                    and drift.kato_nu is None:
                violations.append("thm2-upper requires Kato control of div b_+")
        elif scenario.regime == "thm3-two-sided":
            if delta is None:
                violations.append("thm3-two-sided requires a declared form bound")
            if drift.divergence is None:
                violations.append("thm3-two-sided requires divergence metadata")
        elif scenario.regime == "counterexample-ugb":
            if drift.div_sign != "nonnegative" or not drift.singular_points:
                violations.append(
                    "counterexample-ugb expects an attracting singular drift")
        elif scenario.regime == "counterexample-lgb":
            if drift.div_sign != "nonpositive" or not drift.singular_points:
                violations.append(
                    "counterexample-lgb expects a repelling singular drift")
    if violations:
        raise ScenarioValidationError(violations)
    return drift


# ---------------------------------------------------------------------------
# run pipeline
# ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    scenario_hash: str
    version: str
    scenario: dict
    ledger: dict
    artifacts: dict = dc_field(default_factory=dict)   # path -> sha256
    checks: dict = dc_field(default_factory=dict)      # name -> {pass, ...}
    digest: str = ""
    volatile: dict = dc_field(default_factory=dict)

    def all_pass(self) -> bool:
        return all(entry.get("pass", False) for entry in self.checks.values())

    def finalize(self) -> None:
        body = {"scenario_hash": self.scenario_hash, "version": self.version,
                "scenario": self.scenario, "ledger": self.ledger,
                "artifacts": self.artifacts, "checks": self.checks}
        self.digest = hashlib.sha256(canonical_json(body).encode()).hexdigest()

    def to_dict(self) -> dict:
        return {"scenario_hash": self.scenario_hash, "version": self.version,
                "scenario": self.scenario, "ledger": self.ledger,
                "artifacts": self.artifacts, "checks": self.checks,
                "digest": self.digest, "volatile": self.volatile}


class _RunWriter:
    """Single writer for a run directory; records artifact digests."""

    def __init__(self, root: Path):
        self.root = root
        self.root.mkdir(parents=True, exist_ok=True)
        self.artifacts: dict[str, str] = {}

    def _register(self, rel: str) -> None:
        self.artifacts[rel] = _sha256_file(self.root / rel)

    def write_json(self, rel: str, obj) -> None:
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n",
                        encoding="utf-8")
        self._register(rel)

    def write_csv(self, rel: str, header: list[str], rows) -> None:
        path = self.root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
        self._register(rel)

    def write_kernel(self, rel_base: str, kernel: HeatKernelEstimate) -> None:
        path = self.root / (rel_base + ".npy")
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            np.save(fh, kernel.values)
        self._register(rel_base + ".npy")
        # snapshots as plain .npy files: the zip-based format embeds
        # timestamps, which would break byte-level reproducibility
        for i, tau in enumerate(sorted(kernel.snapshots)):
            rel = f"{rel_base}.snap{i}.npy"
            with open(self.root / rel, "wb") as fh:
                np.save(fh, kernel.snapshots[tau])
            self._register(rel)
        self.write_json(rel_base + ".json", kernel.sidecar())


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return v


def run(scenario: Scenario, out_dir, resolution: int | None = None,
        strict: bool = False) -> RunManifest:
    """Validate, execute the staged pipeline, persist under the run directory."""
    drift = validate(scenario)
    matrix = parse_matrix(scenario.matrix)
    s, t = scenario.window
    elapsed = t - s

    run_dir = Path(out_dir) / "runs" / scenario.hash()
    writer = _RunWriter(run_dir)
    started = time.time()

    grid_cfg = {"kind": "radial",
                "n": resolution or scenario.grid.get("n", 1024),
                "rmax": scenario.grid.get(
                    "rmax", 8.0 * math.sqrt(matrix.xi * elapsed)),
                "dim": 3}
    grid_cfg.update({k: v for k, v in scenario.grid.items() if k != "n"})
    if resolution:
        grid_cfg["n"] = resolution
    grid = grid_from_config(grid_cfg)
    config = SolverConfig(**scenario.solver)

    checks: dict[str, dict] = {}
    stages = dict(scenario.stages)

    # --- constants ledger -------------------------------------------------
    ledger = proof_constants(
        d=grid.dim, sigma=matrix.sigma, xi=matrix.xi,
        delta=(drift.delta or 0.0) if drift else 0.0,
        c_delta=drift.c_delta if drift else 0.0,
        nu=drift.kato_nu if drift else None,
        lam=drift.kato_lambda if drift else None)

    # --- mollifier preservation sweep --------------------------------------
    if scenario.epsilons and drift is not None and drift.delta:
        report = verify_preservation(drift, scenario.epsilons, grid)
        writer.write_json("mollify/preservation.json", report)
        checks["mollifier-preservation"] = {"pass": report["pass"]}

    # --- solver-side drift -------------------------------------------------
    solver_drift = drift
    div_plus = div_minus = None
    if drift is not None and scenario.mollify_eps:
        mf = mollify(drift, scenario.mollify_eps, grid)
        solver_drift = mf.as_drift_field()
        if mf.div_plus_values is not None:
            div_plus, div_minus = mf.div_split_scalar_fields()
    elif drift is not None and drift.divergence is not None:
        div_plus, div_minus = drift.div_split_fields()

    problem = ParabolicProblem(matrix, solver_drift, "lambda",
                               div_plus=div_plus, div_minus=div_minus)

    # --- kernel runs --------------------------------------------------------
    snap = [0.5 * elapsed, 0.75 * elapsed]
    kernel = estimate_kernel(problem, s, t, np.zeros(3), grid, config,
                             direction="adjoint", snapshot_times=snap)
    writer.write_kernel("kernels/lambda-adjoint", kernel)
    mass_err = abs(kernel.mass - 1.0)
    checks["conservation"] = {"pass": bool(mass_err <= config.mass_tol),
                              "mass": kernel.mass}

    # --- envelope fits ------------------------------------------------------
    h = grid.h
    fit_lo_r = scenario.fit.get("r_lo", 2.0 * h)
    fit_hi_r = scenario.fit.get("r_hi", math.inf)
    fit_rate = bool((drift.c_delta if drift else 0.0) > 0)
    fits = {}
    for side in ("lower", "upper"):
        want = scenario.expect.get(side)
        if want is None and scenario.regime == "baseline":
            want = "feasible"
        if want is None:
            continue
        fit = fit_bound([kernel], side, sigma=matrix.sigma, xi=matrix.xi,
                        r_lo=fit_lo_r, r_hi=fit_hi_r, fit_rate=fit_rate)
        fits[side] = fit
        writer.write_json(f"bounds/{side}.json", fit.to_record())
        checks[f"expect-{side}-{want}"] = {
            "pass": bool(fit.feasible == (want == "feasible")),
            "feasible": fit.feasible, "c_mult": fit.c_mult,
            "c_rate": fit.c_rate}

    _write_profiles(writer, kernel, fits)

    # --- weight exponent ----------------------------------------------------
    if stages.get("weight", bool(drift is not None and drift.singular_points)):
        wcfg = dict(scenario.weight)
        r_lo = wcfg.get("r_lo", 12.0 * h)
        r_hi = wcfg.get("r_hi", 0.4 * math.sqrt(kernel.effective_time))
        theory = None
        if drift is not None and drift.delta:
            theory = math.sqrt(drift.delta) * (grid.dim - 2) / 2.0
            if drift.div_sign == "nonpositive":
                theory = -theory
        profile = fit_weight_exponent(kernel, r_lo, r_hi, theory_exponent=theory)
        writer.write_json("weight/weight.json", profile.to_record())
        writer.write_csv("weight/profile.csv", ["radius", "ratio"],
                         zip(profile.radii, profile.ratios))
        entry = {"p_hat": profile.p_hat, "theory": theory}
        if theory is not None and scenario.regime == "counterexample-ugb":
            entry["pass"] = bool(abs(profile.p_hat - theory) <= 0.10 * abs(theory))
        elif scenario.regime == "counterexample-lgb":
            entry["pass"] = bool(profile.p_hat < 0)
        else:
            entry["pass"] = True
        checks["weight-exponent"] = entry
        growth = ratio_growth(kernel, 4.0 * matrix.xi,
                              np.geomspace(max(r_lo, 4 * h), r_hi, 8))
        writer.write_json("weight/growth.json", growth)

    # --- Nash diagnostics ----------------------------------------------------
    if stages.get("nash", True):
        diag = nash_series(kernel, mass_tol=5e-3)
        coarse_grid = RadialGrid(grid.n // 2, grid.rmax, grid.rmin, grid.dim)
        coarse_cfg = SolverConfig(**{**scenario.solver,
                                     "n_steps": max(200, (config.n_steps or 400) // 2)})
        kernel_coarse = estimate_kernel(problem, s, t, np.zeros(3), coarse_grid,
                                        coarse_cfg, direction="adjoint",
                                        snapshot_times=snap)
        diag_coarse = nash_series(kernel_coarse, mass_tol=5e-3)
        stab = nee_stability(diag_coarse, diag)
        writer.write_csv("nash/series.csv",
                         list(diag.rows()[0].keys()),
                         [list(r.values()) for r in diag.rows()])
        summary = diag.summary()
        summary["stability"] = stab
        summary["beta"] = max(ledger.beta_star, (4.0 * diag.c_plus) ** 2)
        writer.write_json("nash/summary.json", summary)
        checks["nash-nee-stability"] = {"pass": stab["pass"],
                                        "C_NEE": diag.C_NEE,
                                        "rel_change": stab["rel_change"]}
        checks["nash-moment-band"] = {"pass": bool(diag.c_minus > 0),
                                      "c_minus": diag.c_minus,
                                      "c_plus": diag.c_plus}
        ledger = proof_constants(
            d=grid.dim, sigma=matrix.sigma, xi=matrix.xi,
            delta=(drift.delta or 0.0) if drift else 0.0,
            c_delta=drift.c_delta if drift else 0.0,
            nu=drift.kato_nu if drift else None,
            lam=drift.kato_lambda if drift else None,
            c_hat=kernel.c_hat, c_plus_measured=diag.c_plus)

    # --- Duhamel domination ---------------------------------------------------
    if stages.get("domination", False):
        star = ParabolicProblem(matrix, solver_drift, "lambda-star",
                                div_plus=div_plus, div_minus=div_minus)
        kernel_star = estimate_kernel(star, s, t, np.zeros(3), grid, config,
                                      direction="adjoint", snapshot_times=snap)
        writer.write_kernel("kernels/lambda-star-adjoint", kernel_star)
        try:
            if drift is not None and drift.div_sign == "nonpositive":
                rep = domination_check(kernel, kernel_star)
            else:
                rep = domination_check(kernel_star, kernel)
            checks["duhamel-domination"] = {"pass": True,
                                            "n_cells": rep["n_cells"]}
        except CheckFailure as exc:
            checks["duhamel-domination"] = {"pass": False, **(exc.report or {})}

    # --- Lie-Trotter sandwich ---------------------------------------------------
    if stages.get("sandwich", False):
        p = scenario.sandwich_p
        pprime = p / (p - 1.0)
        h1 = ParabolicProblem(matrix, solver_drift, "h-minus",
                              div_plus=div_plus, div_minus=div_minus)
        hp = ParabolicProblem(matrix, solver_drift, "h-minus-pprime",
                              p_prime=pprime, div_plus=div_plus, div_minus=div_minus)
        k_h1 = estimate_kernel(h1, s, t, np.zeros(3), grid, config,
                               direction="adjoint")
        k_hp = estimate_kernel(hp, s, t, np.zeros(3), grid, config,
                               direction="adjoint")
        writer.write_kernel("kernels/h-minus-adjoint", k_h1)
        writer.write_kernel("kernels/h-minus-pprime-adjoint", k_hp)
        try:
            rep = sandwich_check(k_h1, kernel, k_hp, p)
            checks["lie-trotter-sandwich"] = {"pass": True,
                                              "n_cells": rep["n_cells"]}
        except CheckFailure as exc:
            checks["lie-trotter-sandwich"] = {"pass": False, **(exc.report or {})}

    # --- Kato probe for two-sided regimes ---------------------------------------
    if scenario.regime == "thm3-two-sided" and drift is not None \
            and drift.divergence is not None:
        plus_f, minus_f = drift.div_split_fields()
        absdiv = plus_f  # |div b| for sign-definite fields is the nonzero part
        if drift.div_sign == "nonpositive":
            absdiv = minus_f
        probe_grid = RadialGrid(512, grid.rmax, rmin=grid.rmax / 1024.0, dim=3)
        kato = estimate_kato_norm(absdiv, drift.kato_lambda or 1.0, probe_grid,
                                  refinements=2)
        writer.write_json("estimates/kato.json", kato.to_record())
        checks["kato-finite"] = {"pass": bool(not kato.diverging),
                                 "nu_hat": kato.nu_hat}

    # --- reconciliation -----------------------------------------------------
    tvf = theory_vs_fit(ledger, fits, scenario.regime,
                        div_sign=drift.div_sign if drift else "nonnegative")
    writer.write_json("theory_vs_fit.json", tvf)
    checks["theory-vs-fit"] = {"pass": tvf["pass"]}

    writer.write_json("ledger.json", ledger.to_dict())
    _write_summary(writer, scenario, fits, checks)

    manifest = RunManifest(
        scenario_hash=scenario.hash(), version=__version__,
        scenario=scenario.canonical(), ledger=ledger.to_dict(),
        artifacts=writer.artifacts, checks=checks)
    manifest.finalize()
    manifest.volatile = {"started": started, "finished": time.time()}
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    if strict and not manifest.all_pass():
        failed = [k for k, v in checks.items() if not v.get("pass")]
        raise CheckFailure(f"strict run failed checks: {failed}",
                           report=manifest.to_dict())
    return manifest


def _write_profiles(writer: _RunWriter, kernel: HeatKernelEstimate, fits: dict):
    grid = kernel.grid
    r = grid.centers
    tau = kernel.effective_time
    rows = []
    base = gaussian_kernel(1.0, tau, r, grid.dim)
    lo = fits.get("lower")
    up = fits.get("upper")
    for i in range(len(r)):
        rows.append([r[i], float(kernel.values[i]), float(base[i]),
                     float(lo.envelope(tau, r[i], grid.dim)) if lo else "",
                     float(up.envelope(tau, r[i], grid.dim)) if up else ""])
    writer.write_csv("tables/profiles.csv",
                     ["radius", "kernel", "k1", "lower_env", "upper_env"], rows)


def _write_summary(writer: _RunWriter, scenario: Scenario, fits: dict,
                   checks: dict):
    lo, up = fits.get("lower"), fits.get("upper")
    row = [scenario.name, scenario.hash(), scenario.regime,
           lo.c_mult if lo else "", lo.c_rate if lo else "",
           (lo.feasible if lo else ""),
           up.c_mult if up else "", up.c_rate if up else "",
           (up.feasible if up else ""),
           all(v.get("pass", False) for v in checks.values())]
    writer.write_csv("tables/summary.csv",
                     ["name", "hash", "regime", "c1", "c2", "lower_feasible",
                      "c3", "c4", "upper_feasible", "all_pass"], [row])


def run_file(path, out_dir, resolution=None, strict=False) -> RunManifest:
    return run(Scenario.from_yaml(path), out_dir, resolution, strict)


def run_many(paths, out_dir, jobs: int = 1, resolution=None,
             strict=False) -> list[RunManifest]:
    if jobs <= 1:
        return [run_file(p, out_dir, resolution, strict) for p in paths]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_file, p, out_dir, resolution, strict)
                   for p in paths]
        return [f.result() for f in futures]
