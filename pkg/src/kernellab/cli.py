"""Command-line surface: thin wrappers over the module operations.

Exit code 0 iff all declared expectations of the invoked runs are met.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .constants import coulhon_raynaud, proof_constants
from .errors import KernelLabError
from .fields import parse_field
from .grids import RadialGrid
from .kernelfit import fit_bound
from .mollify import mollify, verify_preservation
from .quadform import estimate_form_bound, estimate_kato_norm, default_formbound_grid
from .fields import ScalarField
from .scenarios import RunManifest, run_many


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="kernellab",
        description="Heat-kernel bound experiments for singular drift-diffusion")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute scenario files end to end")
    p_run.add_argument("--scenario", action="append", required=True,
                       help="scenario YAML path (repeatable)")
    p_run.add_argument("--out", default="runs-out", help="output directory")
    p_run.add_argument("--resolution", type=int, default=None)
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--strict", action="store_true",
                       help="fail on any tolerance breach")

    p_fit = sub.add_parser("fit-bounds", help="refit envelopes of a stored run")
    p_fit.add_argument("--run", required=True, help="run directory")
    p_fit.add_argument("--side", choices=["lower", "upper"], required=True)
    p_fit.add_argument("--r-lo", type=float, default=0.0)
    p_fit.add_argument("--r-hi", type=float, default=math.inf)

    p_nash = sub.add_parser("nash", help="print Nash diagnostics of a stored run")
    p_nash.add_argument("--run", required=True)

    p_fb = sub.add_parser("estimate-formbound", help="form-bound of a catalog field")
    p_fb.add_argument("--field", required=True, help="e.g. hardy:d=3,delta=1,sign=+")
    p_fb.add_argument("--c", type=float, default=0.0)
    p_fb.add_argument("--rmax", type=float, default=8.0)
    p_fb.add_argument("--levels", type=int, default=3)

    p_kato = sub.add_parser("estimate-kato", help="Kato norm of div b_+ of a field")
    p_kato.add_argument("--field", required=True)
    p_kato.add_argument("--lam", type=float, default=0.0)
    p_kato.add_argument("--rmax", type=float, default=8.0)
    p_kato.add_argument("--n", type=int, default=1024)

    p_mol = sub.add_parser("mollify", help="mollify a field and check the claims")
    p_mol.add_argument("--field", required=True)
    p_mol.add_argument("--epsilon", type=float, action="append", required=True)
    p_mol.add_argument("--rmax", type=float, default=8.0)
    p_mol.add_argument("--n", type=int, default=2048)
    p_mol.add_argument("--verify", action="store_true",
                       help="run the preservation checks")

    p_const = sub.add_parser("constants", help="print the constant ledger")
    p_const.add_argument("--d", type=int, default=3)
    p_const.add_argument("--sigma", type=float, default=1.0)
    p_const.add_argument("--xi", type=float, default=1.0)
    p_const.add_argument("--delta", type=float, required=True)
    p_const.add_argument("--c-delta", type=float, default=0.0)
    p_const.add_argument("--nu", type=float, default=None)
    p_const.add_argument("--lam", type=float, default=None)
    p_const.add_argument("--coulhon-raynaud", nargs=6, type=float, default=None,
                         metavar=("P", "Q", "R", "NU", "M1", "M2"),
                         help="also evaluate the extrapolation formula")

    p_rep = sub.add_parser("report", help="summarize a stored run")
    p_rep.add_argument("--run", required=True)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except KernelLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(args) -> int:
    if args.command == "run":
        manifests = run_many(args.scenario, args.out, jobs=args.jobs,
                             resolution=args.resolution, strict=False)
        ok = True
        for m in manifests:
            status = "PASS" if m.all_pass() else "FAIL"
            print(f"[{status}] {m.scenario['name']}  ({m.scenario_hash})")
            for name, entry in sorted(m.checks.items()):
                mark = "ok " if entry.get("pass") else "FAIL"
                print(f"    {mark} {name}")
            ok = ok and m.all_pass()
        if args.strict and not ok:
            return 1
        return 0 if ok else 1

    if args.command == "fit-bounds":
        kernel = _load_kernel(Path(args.run), "kernels/lambda-adjoint")
        man = _load_manifest(Path(args.run))
        sigma = man["ledger"]["sigma"]
        xi = man["ledger"]["xi"]
        fit = fit_bound([kernel], args.side, sigma=sigma, xi=xi,
                        r_lo=args.r_lo, r_hi=args.r_hi)
        print(json.dumps(fit.to_record(), indent=2, sort_keys=True))
        return 0

    if args.command == "nash":
        path = Path(args.run) / "nash" / "summary.json"
        print(path.read_text(), end="")
        return 0

    if args.command == "estimate-formbound":
        field = parse_field(args.field)
        est = estimate_form_bound(field, args.c, default_formbound_grid(args.rmax),
                                  refinements=args.levels)
        print(json.dumps(est.to_record(), indent=2, sort_keys=True))
        return 0

    if args.command == "estimate-kato":
        field = parse_field(args.field)
        plus, _ = field.div_split_fields()
        grid = RadialGrid(args.n, args.rmax, rmin=args.rmax / (2.0 * args.n))
        est = estimate_kato_norm(plus, args.lam, grid)
        print(json.dumps(est.to_record(), indent=2, sort_keys=True))
        return 0

    if args.command == "mollify":
        field = parse_field(args.field)
        grid = RadialGrid(args.n, args.rmax)
        if args.verify:
            report = verify_preservation(field, args.epsilon, grid)
            print(json.dumps(report, indent=2, sort_keys=True))
            return 0 if report["pass"] else 1
        out = []
        for eps in args.epsilon:
            mf = mollify(field, eps, grid)
            out.append({"epsilon": eps, "sup": mf.sup_norm,
                        "certificate": mf.sup_certificate})
        print(json.dumps(out, indent=2, sort_keys=True))
        return 0

    if args.command == "constants":
        ledger = proof_constants(args.d, args.sigma, args.xi, args.delta,
                                 args.c_delta, args.nu, args.lam)
        doc = ledger.to_dict()
        if args.coulhon_raynaud:
            p, q, r, nu, m1, m2 = args.coulhon_raynaud
            exponent, M = coulhon_raynaud(p, q, math.inf if r <= 0 else r,
                                          nu, m1, m2)
            doc["coulhon_raynaud"] = {"exponent": exponent, "M": M}
        print(json.dumps(doc, indent=2, sort_keys=True))
        return 0

    if args.command == "report":
        man = _load_manifest(Path(args.run))
        print(f"scenario: {man['scenario']['name']}  regime: "
              f"{man['scenario']['regime']}  hash: {man['scenario_hash']}")
        print(f"version:  {man['version']}   digest: {man['digest'][:16]}...")
        for name, entry in sorted(man["checks"].items()):
            mark = "ok " if entry.get("pass") else "FAIL"
            print(f"  {mark} {name}")
        n_art = len(man["artifacts"])
        print(f"artifacts: {n_art} files")
        return 0 if all(e.get("pass") for e in man["checks"].values()) else 1

    raise AssertionError(f"unhandled command {args.command}")


def _load_manifest(run_dir: Path) -> dict:
    return json.loads((run_dir / "manifest.json").read_text())


def _load_kernel(run_dir: Path, rel_base: str):
    from .evolve import HeatKernelEstimate
    from .grids import grid_from_config

    sidecar = json.loads((run_dir / (rel_base + ".json")).read_text())
    values = np.load(run_dir / (rel_base + ".npy"))
    grid = grid_from_config(sidecar["grid"])
    snapshots = {}
    for i, tau in enumerate(sidecar.get("snapshot_times", [])):
        snap_path = run_dir / f"{rel_base}.snap{i}.npy"
        if snap_path.exists():
            snapshots[tau] = np.load(snap_path)
    return HeatKernelEstimate(
        variant=sidecar["variant"], direction=sidecar["direction"],
        s=sidecar["s"], t=sidecar["t"], tau0=sidecar["tau0"],
        point=np.asarray(sidecar["y"]), grid=grid, values=values,
        mass=sidecar["mass"], scheme=sidecar["scheme"], c_hat=sidecar["c_hat"],
        snapshots=snapshots)


if __name__ == "__main__":
    sys.exit(main())
