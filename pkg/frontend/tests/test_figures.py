"""Figure rendering against real run directories.

The runs are produced through the primary package's CLI (the external
interface); the renderer itself never touches the solver.  The acceptance
checks: all four kinds render on a baseline + Hardy run pair, re-rendering
is byte-identical, and the run directories stay untouched.
"""

import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from kernelfigures import FigureRequest, MissingArtifactError, render
from kernelfigures.cli import main as cli_main

BASELINE = {
    "name": "fig-baseline",
    "regime": "baseline",
    "matrix": "identity:d=3",
    "drift": None,
    "window": [0.0, 1.0],
    "grid": {"n": 256, "rmax": 8.0},
    "solver": {"n_steps": 600},
    "expect": {"lower": "feasible", "upper": "feasible"},
}
HARDY = {
    "name": "fig-hardy",
    "regime": "counterexample-ugb",
    "matrix": "identity:d=3",
    "drift": "hardy:d=3,delta=1,sign=+",
    "window": [0.0, 1.0],
    "grid": {"n": 1024, "rmax": 8.0},
    "solver": {"n_steps": 800},
    "expect": {"lower": "feasible", "upper": "infeasible"},
    "stages": {"weight": True},
}

KINDS = ("envelope", "weight-fit", "nash-series", "constants-table")


def _tree_digest(root: Path) -> dict:
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(
                path.read_bytes()).hexdigest()
    return out


@pytest.fixture(scope="session")
def run_pair(tmp_path_factory):
    base = tmp_path_factory.mktemp("runs")
    paths = []
    for doc in (BASELINE, HARDY):
        scen = base / f"{doc['name']}.yaml"
        scen.write_text(yaml.safe_dump(doc))
        paths.append(scen)
    subprocess.run(
        [sys.executable, "-m", "kernellab.cli", "run",
         "--scenario", str(paths[0]), "--scenario", str(paths[1]),
         "--out", str(base / "out")],
        check=True, capture_output=True)
    run_root = base / "out" / "runs"
    dirs = sorted(run_root.iterdir())
    assert len(dirs) == 2
    by_name = {}
    for d in dirs:
        man = json.loads((d / "manifest.json").read_text())
        by_name[man["scenario"]["name"]] = d
    return by_name


def test_all_kinds_render_both_runs(run_pair, tmp_path):
    for name, run_dir in run_pair.items():
        man = json.loads((run_dir / "manifest.json").read_text())
        kinds = [k for k in KINDS
                 if k != "weight-fit" or "weight/weight.json" in man["artifacts"]]
        for kind in kinds:
            out = render(FigureRequest(run_dir, kind,
                                       tmp_path / f"{name}-{kind}.png"))
            assert out.exists() and out.stat().st_size > 2000


def test_rerender_is_byte_identical(run_pair, tmp_path):
    run_dir = run_pair["fig-hardy"]
    for kind in KINDS:
        for fmt in ("raster", "vector"):
            a = render(FigureRequest(run_dir, kind, tmp_path / f"a-{kind}-{fmt}",
                                     fmt))
            b = render(FigureRequest(run_dir, kind, tmp_path / f"b-{kind}-{fmt}",
                                     fmt))
            assert a.read_bytes() == b.read_bytes(), (kind, fmt)


def test_run_directory_untouched(run_pair, tmp_path):
    run_dir = run_pair["fig-baseline"]
    before = _tree_digest(run_dir)
    for kind in ("envelope", "nash-series", "constants-table"):
        render(FigureRequest(run_dir, kind, tmp_path / f"ro-{kind}.png"))
    assert _tree_digest(run_dir) == before


def test_missing_artifact_is_named(run_pair, tmp_path):
    run_dir = run_pair["fig-baseline"]  # baseline has no weight fit
    with pytest.raises(MissingArtifactError, match="weight/weight.json"):
        render(FigureRequest(run_dir, "weight-fit", tmp_path / "x.png"))


def test_cli_roundtrip(run_pair, tmp_path, capsys):
    run_dir = run_pair["fig-hardy"]
    code = cli_main(["--run", str(run_dir), "--kind", "envelope",
                     "--out", str(tmp_path / "cli-envelope.png")])
    out = capsys.readouterr().out.strip()
    assert code == 0 and Path(out).exists()
    code = cli_main(["--run", str(tmp_path), "--kind", "envelope",
                     "--out", str(tmp_path / "nope.png")])
    assert code == 2


def test_caption_embeds_scenario_hash(run_pair, tmp_path):
    run_dir = run_pair["fig-hardy"]
    man = json.loads((run_dir / "manifest.json").read_text())
    out = render(FigureRequest(run_dir, "envelope", tmp_path / "cap.svg",
                               "vector"))
    assert man["scenario_hash"] in out.read_text()
