"""Render the four figure kinds from a run directory.

Kinds:
    envelope        kernel cross-section against the fitted Gaussian envelopes
    weight-fit      log-log ratio profile with the fitted slope annotation
    nash-series     Q - Qtilde flat band and M / sqrt(tau) band panels
    constants-table ledger constants next to the fitted bound constants

Every figure embeds the scenario hash and a ledger snippet in a caption
block, uses a pinned style, and renders byte-identically for identical
inputs (fixed svg hashsalt, no date metadata).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

KINDS = ("envelope", "weight-fit", "nash-series", "constants-table")

_STYLE = {
    "figure.figsize": (7.0, 4.6),
    "figure.dpi": 120,
    "savefig.dpi": 120,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "svg.hashsalt": "kernellab-figures",
}


class MissingArtifactError(FileNotFoundError):
    """A figure input is absent from the run manifest or the disk."""


@dataclass
class FigureRequest:
    run_dir: Path
    kind: str
    out_path: Path
    fmt: str = "raster"  # or "vector"

    def __post_init__(self):
        self.run_dir = Path(self.run_dir)
        self.out_path = Path(self.out_path)
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if self.fmt not in ("raster", "vector"):
            raise ValueError("format must be 'raster' or 'vector'")


def _load_manifest(run_dir: Path) -> dict:
    path = run_dir / "manifest.json"
    if not path.exists():
        raise MissingArtifactError(f"manifest.json not found under {run_dir}")
    return json.loads(path.read_text())


def _artifact(run_dir: Path, manifest: dict, rel: str) -> Path:
    if rel not in manifest.get("artifacts", {}):
        raise MissingArtifactError(
            f"artifact {rel!r} is not listed in the run manifest")
    path = run_dir / rel
    if not path.exists():
        raise MissingArtifactError(f"artifact {rel!r} listed but missing on disk")
    return path


def _read_csv(path: Path) -> dict[str, list]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        cols: dict[str, list] = {name: [] for name in reader.fieldnames}
        for row in reader:
            for k, v in row.items():
                cols[k].append(float(v) if v not in ("", None) else math.nan)
    return cols


def _caption(manifest: dict) -> str:
    led = manifest.get("ledger", {})
    bits = [f"run {manifest.get('scenario_hash', '?')}",
            f"regime {manifest.get('scenario', {}).get('regime', '?')}"]
    for key in ("delta_a", "p_c", "beta_star", "c4"):
        val = led.get(key)
        if val is not None:
            bits.append(f"{key}={val:.4g}")
    return "  |  ".join(bits)


def _finish(fig, request: FigureRequest, manifest: dict) -> Path:
    fig.text(0.01, 0.01, _caption(manifest), fontsize=6.5, family="monospace")
    request.out_path.parent.mkdir(parents=True, exist_ok=True)
    ext = ".svg" if request.fmt == "vector" else ".png"
    out = request.out_path
    if out.suffix.lower() not in (".png", ".svg"):
        out = out.with_suffix(ext)
    metadata = {"Date": None} if out.suffix.lower() == ".svg" else None
    fig.savefig(out, metadata=metadata)
    plt.close(fig)
    return out


def render(request: FigureRequest) -> Path:
    """Render one figure; returns the written path."""
    manifest = _load_manifest(request.run_dir)
    with plt.rc_context(_STYLE):
        if request.kind == "envelope":
            fig = _render_envelope(request.run_dir, manifest)
        elif request.kind == "weight-fit":
            fig = _render_weight(request.run_dir, manifest)
        elif request.kind == "nash-series":
            fig = _render_nash(request.run_dir, manifest)
        else:
            fig = _render_constants(request.run_dir, manifest)
        return _finish(fig, request, manifest)


def _render_envelope(run_dir: Path, manifest: dict):
    cols = _read_csv(_artifact(run_dir, manifest, "tables/profiles.csv"))
    r = cols["radius"]
    fig, ax = plt.subplots()
    ax.semilogy(r, cols["kernel"], color="black", lw=1.2, label="kernel slice")
    if not all(math.isnan(v) for v in cols["lower_env"]):
        ax.semilogy(r, cols["lower_env"], color="tab:blue", lw=0.9, ls="--",
                    label="lower envelope")
    if not all(math.isnan(v) for v in cols["upper_env"]):
        ax.semilogy(r, cols["upper_env"], color="tab:red", lw=0.9, ls="--",
                    label="upper envelope")
    peak = max(v for v in cols["kernel"] if not math.isnan(v))
    ax.set_ylim(peak * 1e-10, peak * 30.0)
    ax.set_xlabel("|y|")
    ax.set_ylabel("value")
    ax.set_title("kernel cross-section vs fitted Gaussian envelopes")
    ax.legend(loc="upper right")
    return fig


def _render_weight(run_dir: Path, manifest: dict):
    weight = json.loads(_artifact(run_dir, manifest, "weight/weight.json").read_text())
    cols = _read_csv(_artifact(run_dir, manifest, "weight/profile.csv"))
    fig, ax = plt.subplots()
    ax.loglog(cols["radius"], cols["ratio"], "o", ms=3.5, color="black",
              label="u / k ratio")
    p_hat = weight["p_hat"]
    r0 = cols["radius"][len(cols["radius"]) // 2]
    y0 = cols["ratio"][len(cols["ratio"]) // 2]
    xs = [min(cols["radius"]), max(cols["radius"])]
    ys = [y0 * (x / r0) ** (-p_hat) for x in xs]
    ax.loglog(xs, ys, color="tab:red", lw=1.0,
              label=f"slope = {-p_hat:+.3f}")
    if weight.get("theory_exponent") is not None:
        ax.loglog(xs, [y0 * (x / r0) ** (-weight["theory_exponent"]) for x in xs],
                  color="tab:blue", lw=0.8, ls=":",
                  label=f"theory slope = {-weight['theory_exponent']:+.3f}")
    ax.set_xlabel("|y|")
    ax.set_ylabel("kernel / Gaussian")
    ax.set_title("weight-exponent fit")
    ax.legend(loc="best")
    return fig


def _render_nash(run_dir: Path, manifest: dict):
    cols = _read_csv(_artifact(run_dir, manifest, "nash/series.csv"))
    summary = json.loads(_artifact(run_dir, manifest, "nash/summary.json").read_text())
    taus = cols["tau"]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.6, 4.0))
    gap = [q - qt for q, qt in zip(cols["Q"], cols["Q_tilde"])]
    ax1.plot(taus, gap, "o-", ms=3.5, color="black")
    ax1.axhline(summary["C_NEE"], color="tab:red", lw=0.8, ls="--",
                label=f"sup |Q - Qtilde| = {summary['C_NEE']:.3f}")
    ax1.set_xlabel("tau")
    ax1.set_ylabel("Q - Qtilde")
    ax1.set_title("entropy against the reference curve")
    ax1.legend(loc="best")
    ax2.plot(taus, cols["moment_ratio"], "s-", ms=3.5, color="black")
    for val, name in ((summary["c_minus"], "c-"), (summary["c_plus"], "c+")):
        ax2.axhline(val, color="tab:blue", lw=0.8, ls=":")
        ax2.annotate(f"{name} = {val:.3f}", (taus[0], val), fontsize=7,
                     va="bottom")
    ax2.set_xlabel("tau")
    ax2.set_ylabel("M / sqrt(tau)")
    ax2.set_title("moment band")
    fig.tight_layout(rect=(0, 0.04, 1, 1))
    return fig


def _render_constants(run_dir: Path, manifest: dict):
    led = manifest.get("ledger", {})
    rows = []
    for key in ("delta_a", "c_delta_a", "p_c", "beta_star", "K1", "K2",
                "C_delta_a", "c4", "omega", "beta", "c_beta"):
        val = led.get(key)
        rows.append((key, "-" if val is None else f"{val:.6g}"))
    for side, tag in (("lower", "(c1, c2, c0)"), ("upper", "(c3, c4, c5)")):
        rel = f"bounds/{side}.json"
        if rel in manifest.get("artifacts", {}):
            fit = json.loads((run_dir / rel).read_text())
            label = f"{side} fit {tag}"
            if fit["feasible"]:
                rows.append((label, f"({fit['c_mult']:.4g}, {fit['c_rate']:.4g}, "
                                    f"{fit['c_exp']:.4g})"))
            else:
                rows.append((label, "infeasible"))
    fig, ax = plt.subplots(figsize=(6.0, 0.32 * len(rows) + 1.2))
    ax.axis("off")
    table = ax.table(cellText=[[k, v] for k, v in rows],
                     colLabels=["constant", "value"],
                     loc="center", cellLoc="left")
    table.auto_set_font_size(False)
    table.set_fontsize(8)
    table.scale(1.0, 1.25)
    ax.set_title("proof constants and fitted envelope constants", fontsize=9)
    return fig
