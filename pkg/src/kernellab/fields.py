"""Catalog of diffusion matrices a(x) and drift fields b(x).

The drift catalog centers on the critically singular Hardy field

    b(x) = +/- sqrt(delta) * (d-2)/2 * |x|^{-2} x,

which carries the form bound delta with c(delta) = 0 and divergence
+/- sqrt(delta) * (d-2)^2/2 * |x|^{-2}.  Divergence of non-smooth catalog
fields is supplied as metadata (the distributional divergence), not computed
numerically.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

from .errors import FieldEvaluationError, GridError
from .grids import BoxGrid, Grid, RadialGrid

SIGN_TAGS = ("nonnegative", "nonpositive", "mixed", "unknown")


@dataclass
class DiffusionMatrix:
    """Uniformly elliptic symmetric matrix field with sigma I <= a(x) <= xi I."""

    dim: int
    sigma: float
    xi: float
    func: Callable[[np.ndarray], np.ndarray]
    kind: str = "custom"
    discontinuous: bool = False
    isotropic_profile: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if not (0.0 < self.sigma <= self.xi):
            raise ValueError("need 0 < sigma <= xi")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at points of shape (N, dim); returns (N, dim, dim)."""
        x = np.atleast_2d(np.asarray(x, float))
        return self.func(x)

    def diagonal(self, x: np.ndarray) -> np.ndarray:
        """Diagonal entries a_ii(x), shape (N, dim)."""
        return np.einsum("nii->ni", self(x))

    def is_isotropic(self) -> bool:
        return self.isotropic_profile is not None


@dataclass
class ScalarField:
    """A scalar potential V(x) with optional radial profile and singularities."""

    dim: int
    func: Callable[[np.ndarray], np.ndarray]
    radial_profile: Callable[[np.ndarray], np.ndarray] | None = None
    singular_points: list = dc_field(default_factory=list)
    name: str = ""

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        _guard_singular(x, self.singular_points)
        return self.func(x)

    def on_grid(self, grid: Grid) -> np.ndarray:
        return evaluate_scalar_on_grid(self, grid)


@dataclass
class DriftField:
    """Vector field b(x) with evaluation, divergence, and analytic metadata.

    delta / c_delta are the declared form-bound constants; div_sign tags the
    distributional sign of div b.  kato_nu / kato_lambda, when set, declare
    the Kato constants of div b_+ (or of |div b| for sign-definite fields).
    """

    dim: int
    func: Callable[[np.ndarray], np.ndarray]
    divergence: Callable[[np.ndarray], np.ndarray] | None = None
    delta: float | None = None
    c_delta: float = 0.0
    div_sign: str = "unknown"
    singular_points: list = dc_field(default_factory=list)
    kato_nu: float | None = None
    kato_lambda: float | None = None
    radial_profile: Callable[[np.ndarray], np.ndarray] | None = None
    div_radial_profile: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = ""

    def __post_init__(self):
        if self.div_sign not in SIGN_TAGS:
            raise ValueError(f"div_sign must be one of {SIGN_TAGS}")
        if self.delta is not None and self.delta < 0:
            raise ValueError("declared form bound must be >= 0")
        if self.c_delta < 0:
            raise ValueError("c(delta) must be >= 0")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, float))
        _guard_singular(x, self.singular_points)
        return self.func(x)

    def magnitude_squared(self, x: np.ndarray) -> np.ndarray:
        b = self(x)
        return np.einsum("ni,ni->n", b, b)

    def is_radial(self) -> bool:
        return self.radial_profile is not None

    def divergence_field(self) -> ScalarField:
        if self.divergence is None:
            raise FieldEvaluationError(f"field {self.name!r} has no divergence metadata")
        return ScalarField(self.dim, self.divergence,
                           radial_profile=self.div_radial_profile,
                           singular_points=list(self.singular_points),
                           name=f"div({self.name})")

    def div_split_fields(self) -> tuple[ScalarField, ScalarField]:
        """Distributional split div b = div b_+ - div b_-, as scalar fields."""
        dv = self.divergence_field()
        plus = ScalarField(self.dim, lambda x: np.maximum(dv.func(x), 0.0),
                           radial_profile=(None if dv.radial_profile is None
                                           else lambda r: np.maximum(dv.radial_profile(r), 0.0)),
                           singular_points=list(self.singular_points),
                           name=f"div+({self.name})")
        minus = ScalarField(self.dim, lambda x: np.maximum(-dv.func(x), 0.0),
                            radial_profile=(None if dv.radial_profile is None
                                            else lambda r: np.maximum(-dv.radial_profile(r), 0.0)),
                            singular_points=list(self.singular_points),
                            name=f"div-({self.name})")
        return plus, minus


def _guard_singular(x: np.ndarray, singular_points, rtol: float = 1e-12):
    for p in singular_points:
        p = np.asarray(p, float)
        d2 = np.sum((x - p) ** 2, axis=-1)
        if np.any(d2 <= rtol**2):
            raise FieldEvaluationError(
                f"evaluation at declared singular point {p.tolist()}")


# ---------------------------------------------------------------------------
# matrices
# ---------------------------------------------------------------------------

def make_matrix(kind: str, dim: int = 3, **params) -> DiffusionMatrix:
    """Build a catalog matrix: identity, diagonal-constant, or checkerboard."""
    if kind == "identity":
        eye = np.eye(dim)

        def func(x):
            return np.broadcast_to(eye, (len(x), dim, dim)).copy()

        return DiffusionMatrix(dim, 1.0, 1.0, func, kind="identity",
                               isotropic_profile=lambda r: np.ones_like(r))

    if kind == "diagonal-constant":
        entries = np.asarray(params["entries"], float)
        if entries.shape != (dim,):
            raise ValueError(f"need {dim} diagonal entries")
        if np.any(entries <= 0):
            raise ValueError("diagonal entries must be positive")
        mat = np.diag(entries)
        iso = bool(np.all(entries == entries[0]))

        def func(x):
            return np.broadcast_to(mat, (len(x), dim, dim)).copy()

        return DiffusionMatrix(
            dim, float(entries.min()), float(entries.max()), func,
            kind="diagonal-constant",
            isotropic_profile=(lambda r, v=float(entries[0]): np.full_like(r, v)) if iso else None)

    if kind == "checkerboard":
        tile_a = _check_spd(np.asarray(params["a"], float), dim)
        tile_b = _check_spd(np.asarray(params["b"], float), dim)
        cell = float(params.get("cell", 1.0))
        eigs = np.concatenate([np.linalg.eigvalsh(tile_a), np.linalg.eigvalsh(tile_b)])

        def func(x):
            parity = np.sum(np.floor(x / cell), axis=1).astype(int) % 2
            out = np.where(parity[:, None, None] == 0, tile_a, tile_b)
            return out

        return DiffusionMatrix(dim, float(eigs.min()), float(eigs.max()), func,
                               kind="checkerboard", discontinuous=True)

    raise ValueError(f"unknown matrix kind {kind!r}")


def _check_spd(m: np.ndarray, dim: int) -> np.ndarray:
    if m.shape != (dim, dim):
        raise ValueError(f"parameter matrix must be {dim}x{dim}")
    if not np.allclose(m, m.T, rtol=0, atol=1e-12):
        raise ValueError("parameter matrix must be symmetric")
    if np.any(np.linalg.eigvalsh(m) <= 0):
        raise ValueError("parameter matrix must be positive definite")
    return m


# ---------------------------------------------------------------------------
# drift catalog
# ---------------------------------------------------------------------------

def hardy_drift(d: int, delta: float, sign: str = "attracting") -> DriftField:
    """The Hardy drift b(x) = +/- sqrt(delta) (d-2)/2 |x|^{-2} x.

    Attracting (+) has div b = sqrt(delta) (d-2)^2/2 |x|^{-2} >= 0; repelling
    flips both signs.  Form bound delta with c(delta) = 0 by the Hardy
    inequality; singular at the origin.
    """
    if d < 3:
        raise ValueError("hardy drift requires d >= 3")
    if delta <= 0:
        raise ValueError("delta must be positive")
    if sign not in ("attracting", "repelling"):
        raise ValueError("sign must be 'attracting' or 'repelling'")
    sgn = 1.0 if sign == "attracting" else -1.0
    amp = np.sqrt(delta) * (d - 2) / 2.0
    div_amp = sgn * np.sqrt(delta) * (d - 2) ** 2 / 2.0

    def func(x):
        r2 = np.sum(x * x, axis=1, keepdims=True)
        return sgn * amp * x / r2

    def div(x):
        r2 = np.sum(x * x, axis=1)
        return div_amp / r2

    return DriftField(
        dim=d, func=func, divergence=div, delta=float(delta), c_delta=0.0,
        div_sign="nonnegative" if sgn > 0 else "nonpositive",
        singular_points=[np.zeros(d)],
        radial_profile=lambda r: sgn * amp / r,
        div_radial_profile=lambda r: div_amp / r**2,
        name=f"hardy:d={d},delta={delta:g},sign={'+' if sgn > 0 else '-'}")


def zero_drift(d: int = 3) -> DriftField:
    return DriftField(d, lambda x: np.zeros_like(x), divergence=lambda x: np.zeros(len(x)),
                      delta=0.0, div_sign="nonnegative",
                      radial_profile=lambda r: np.zeros_like(r),
                      div_radial_profile=lambda r: np.zeros_like(r),
                      name=f"zero:d={d}")


def constant_drift(d: int, velocity) -> DriftField:
    v = np.zeros(d)
    v[: len(np.atleast_1d(velocity))] = np.atleast_1d(velocity)
    speed2 = float(v @ v)
    return DriftField(d, lambda x: np.broadcast_to(v, x.shape).copy(),
                      divergence=lambda x: np.zeros(len(x)),
                      delta=0.0, c_delta=speed2, div_sign="nonnegative",
                      name=f"constant:d={d},v={v.tolist()}")


def linear_drift(d: int = 3) -> DriftField:
    """b(x) = x, with div b = d everywhere; smooth test field."""
    return DriftField(d, lambda x: x.copy(), divergence=lambda x: np.full(len(x), float(d)),
                      div_sign="nonnegative",
                      radial_profile=lambda r: r.copy(),
                      div_radial_profile=lambda r: np.full_like(r, float(d)),
                      name=f"linear:d={d}")


def radial_tanh_drift(d: int = 3, amp: float = 1.0) -> DriftField:
    """Smooth bounded field b = -amp tanh(r) x/r with div b <= 0 everywhere.

    div b = -amp (sech^2 r + (d-1) tanh(r)/r) < 0, bounded; the canonical
    smooth scenario with nontrivial div b_- and div b_+ = 0.
    """

    def prof(r):
        return -amp * np.tanh(r)

    def div_prof(r):
        r = np.asarray(r, float)
        ratio = np.where(r > 1e-8, np.tanh(r) / np.maximum(r, 1e-300), 1.0 - r**2 / 3.0)
        return -amp * (1.0 / np.cosh(r) ** 2 + (d - 1) * ratio)

    def func(x):
        r = np.sqrt(np.sum(x * x, axis=1, keepdims=True))
        unit = np.where(r > 1e-12, x / np.maximum(r, 1e-300), 0.0)
        return prof(r) * unit

    def div(x):
        r = np.sqrt(np.sum(x * x, axis=1))
        return div_prof(r)

    return DriftField(d, func, divergence=div, delta=0.0, c_delta=amp**2,
                      div_sign="nonpositive",
                      radial_profile=prof, div_radial_profile=div_prof,
                      name=f"radial-tanh:d={d},amp={amp:g}")


def tanh_axis_drift(d: int = 3, amp: float = 1.0) -> DriftField:
    """b(x) = -amp tanh(x_1) e_1; div b = -amp sech^2(x_1) <= 0, bounded."""

    def func(x):
        out = np.zeros_like(x)
        out[:, 0] = -amp * np.tanh(x[:, 0])
        return out

    def div(x):
        return -amp / np.cosh(x[:, 0]) ** 2

    return DriftField(d, func, divergence=div, delta=0.0, c_delta=amp**2,
                      div_sign="nonpositive", name=f"tanh-x1:d={d},amp={amp:g}")


def parse_field(spec: str) -> DriftField:
    """Parse catalog identifiers like 'hardy:d=3,delta=1,sign=+'."""
    head, _, tail = spec.partition(":")
    kv = {}
    if tail:
        for item in tail.split(","):
            k, _, v = item.partition("=")
            kv[k.strip()] = v.strip()
    d = int(kv.get("d", 3))
    if head == "hardy":
        sign = {"+": "attracting", "-": "repelling",
                "attracting": "attracting", "repelling": "repelling"}[kv.get("sign", "+")]
        return hardy_drift(d, float(kv.get("delta", 1.0)), sign)
    if head == "zero":
        return zero_drift(d)
    if head == "constant":
        return constant_drift(d, float(kv.get("v", 1.0)))
    if head == "linear":
        return linear_drift(d)
    if head == "radial-tanh":
        return radial_tanh_drift(d, float(kv.get("amp", 1.0)))
    if head == "tanh-x1":
        return tanh_axis_drift(d, float(kv.get("amp", 1.0)))
    raise ValueError(f"unknown field spec {spec!r}")


def parse_matrix(spec: str) -> DiffusionMatrix:
    """Parse catalog identifiers like 'identity:d=3' or 'diag:d=3,entries=2|3|4'."""
    head, _, tail = spec.partition(":")
    kv = {}
    if tail:
        for item in tail.split(","):
            k, _, v = item.partition("=")
            kv[k.strip()] = v.strip()
    d = int(kv.get("d", 3))
    if head == "identity":
        return make_matrix("identity", d)
    if head in ("diag", "diagonal-constant"):
        entries = [float(v) for v in kv["entries"].split("|")]
        return make_matrix("diagonal-constant", d, entries=entries)
    if head == "checkerboard":
        va, vb = float(kv.get("a", 1.0)), float(kv.get("b", 2.0))
        return make_matrix("checkerboard", d, a=va * np.eye(d), b=vb * np.eye(d),
                           cell=float(kv.get("cell", 1.0)))
    raise ValueError(f"unknown matrix spec {spec!r}")


# ---------------------------------------------------------------------------
# numeric divergence
# ---------------------------------------------------------------------------

def numeric_divergence(b: DriftField, grid: Grid) -> dict:
    """Centered-difference divergence with the positive/negative split.

    Returns {'div': field, 'plus': 0 v div, 'minus': plus - div} on grid cells.
    Grid cells must stay at least one cell away from declared singular points.
    """
    if isinstance(grid, RadialGrid):
        r = grid.centers
        _guard_grid_singular_radial(b, grid)
        if b.radial_profile is None:
            raise GridError("radial numeric divergence needs a radial field")
        br = b.radial_profile(r)
        rb = r ** (grid.dim - 1) * br
        div = np.gradient(rb, r) / r ** (grid.dim - 1)
    elif isinstance(grid, BoxGrid):
        _guard_grid_singular_box(b, grid)
        mesh = grid.meshgrid()
        pts = grid.points()
        div = np.zeros(grid.size)
        for axis in range(grid.dim):
            h = grid.h[axis]
            for sgn in (+1.0, -1.0):
                shifted = pts.copy()
                shifted[:, axis] += sgn * h
                div += sgn * b(shifted)[:, axis] / (2.0 * h)
        div = div.reshape(grid.shape)
    else:
        raise GridError(f"unsupported grid {type(grid)}")
    plus = np.maximum(div, 0.0)
    return {"div": div, "plus": plus, "minus": plus - div}


def _guard_grid_singular_radial(b: DriftField, grid: RadialGrid):
    for p in b.singular_points:
        rp = float(np.linalg.norm(p))
        if rp < grid.rmin:
            continue  # excluded by the inner offset
        i = int(np.searchsorted(grid.edges, rp, side="right")) - 1
        if 0 <= i < grid.n:
            raise GridError(
                f"grid cell {i} (r in [{grid.edges[i]:.3g}, {grid.edges[i+1]:.3g}]) "
                f"contains singular point at r={rp:.3g}")


def _guard_grid_singular_box(b: DriftField, grid: BoxGrid):
    for p in b.singular_points:
        p = np.asarray(p, float)
        if np.all(p > np.asarray(grid.lo)) and np.all(p < np.asarray(grid.hi)):
            idx = tuple(int((p[k] - grid.lo[k]) / grid.h[k]) for k in range(grid.dim))
            raise GridError(f"grid cell {idx} contains singular point {p.tolist()}")


def evaluate_scalar_on_grid(V: ScalarField, grid: Grid) -> np.ndarray:
    if isinstance(grid, RadialGrid):
        if V.radial_profile is not None:
            return V.radial_profile(grid.centers)
        pts = np.zeros((grid.n, V.dim))
        pts[:, 0] = grid.centers
        return V(pts)
    return V(grid.points()).reshape(grid.shape)


def evaluate_drift_on_grid(b: DriftField, grid: Grid) -> np.ndarray:
    """Radial grids: b_r at cell centers; box grids: (N, dim) at centers."""
    if isinstance(grid, RadialGrid):
        if b.radial_profile is None:
            raise GridError("field has no radial profile; use a box grid")
        return b.radial_profile(grid.centers)
    return b(grid.points())
