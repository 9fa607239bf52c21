"""Cell-centered grids: boxes in 1-3 dimensions and radial shells.

Radial grids represent rotation-invariant fields in d ambient dimensions as
1D profiles in r = |x| with volume weight r^{d-1}; cell volumes and face areas
are exact shell quantities so that finite-volume sums telescope.  A radial
grid may be uniformly or geometrically spaced; geometric spacing is what makes
critically singular |x|^{-1}-type profiles resolvable over many decades within
a few thousand cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridError


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass(frozen=True)
class RadialGrid:
    """Shells [edges[i], edges[i+1]] around the origin in R^dim."""

    n: int
    rmax: float
    rmin: float = 0.0
    dim: int = 3
    spacing: str = "uniform"  # or "geometric" (requires rmin > 0)
    edges: np.ndarray = field(init=False, repr=False, compare=False)
    centers: np.ndarray = field(init=False, repr=False, compare=False)
    volumes: np.ndarray = field(init=False, repr=False, compare=False)
    face_areas: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 2:
            raise GridError("radial grid needs at least 2 cells")
        if not 0.0 <= self.rmin < self.rmax:
            raise GridError(f"need 0 <= rmin < rmax, got [{self.rmin}, {self.rmax}]")
        if self.dim < 3:
            raise GridError("radial reduction assumes ambient dimension >= 3")
        if self.spacing == "uniform":
            edges = np.linspace(self.rmin, self.rmax, self.n + 1)
            centers = 0.5 * (edges[:-1] + edges[1:])
        elif self.spacing == "geometric":
            if self.rmin <= 0.0:
                raise GridError("geometric radial grid requires rmin > 0")
            edges = self.rmin * (self.rmax / self.rmin) ** (np.arange(self.n + 1) / self.n)
            centers = np.sqrt(edges[:-1] * edges[1:])
        else:
            raise GridError(f"unknown radial spacing {self.spacing!r}")
        sd = sphere_area(self.dim)
        volumes = (sd / self.dim) * (edges[1:] ** self.dim - edges[:-1] ** self.dim)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "volumes", volumes)
        object.__setattr__(self, "face_areas", sd * edges ** (self.dim - 1))

    @property
    def kind(self) -> str:
        return "radial"

    @property
    def h(self) -> float:
        """Uniform spacing; for geometric grids the smallest cell width."""
        if self.spacing == "uniform":
            return (self.rmax - self.rmin) / self.n
        return float(self.edges[1] - self.edges[0])

    def integrate(self, values: np.ndarray) -> float:
        return float(np.asarray(values) @ self.volumes)

    def boundary_fraction(self, values: np.ndarray) -> float:
        """Fraction of |values| mass in the outermost cell."""
        total = self.integrate(np.abs(values))
        if total == 0.0:
            return 0.0
        return float(abs(values[-1]) * self.volumes[-1] / total)

    def refined(self, deepen: bool = False, deepen_factor: float = 100.0) -> RadialGrid:
        """Double the cell count; optionally push rmin further toward 0."""
        rmin = self.rmin
        if deepen and rmin > 0.0:
            rmin = rmin / (deepen_factor if self.spacing == "geometric" else 2.0)
        return RadialGrid(2 * self.n, self.rmax, rmin, self.dim, self.spacing)

    def to_config(self) -> dict:
        return {"kind": "radial", "n": self.n, "rmax": self.rmax,
                "rmin": self.rmin, "dim": self.dim, "spacing": self.spacing}


@dataclass(frozen=True)
class BoxGrid:
    """Cell-centered tensor grid on a box in R^dim, dim in {1, 2, 3}."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]
    n: tuple[int, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        n = tuple(int(v) for v in np.atleast_1d(self.n))
        if not len(lo) == len(hi) == len(n):
            raise GridError("lo, hi, n must have matching lengths")
        if len(lo) not in (1, 2, 3):
            raise GridError("box grids support 1 to 3 axes")
        if any(a >= b for a, b in zip(lo, hi)):
            raise GridError("need lo < hi on every axis")
        if any(m < 2 for m in n):
            raise GridError("need at least 2 cells per axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        object.__setattr__(self, "n", n)

    @property
    def kind(self) -> str:
        return "box"

    @property
    def dim(self) -> int:
        return len(self.n)

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((b - a) / m for a, b, m in zip(self.lo, self.hi, self.n))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def size(self) -> int:
        return int(np.prod(self.n))

    def axis_centers(self, axis: int) -> np.ndarray:
        h = self.h[axis]
        return self.lo[axis] + h * (np.arange(self.n[axis]) + 0.5)

    def axis_edges(self, axis: int) -> np.ndarray:
        return self.lo[axis] + self.h[axis] * np.arange(self.n[axis] + 1)

    def meshgrid(self) -> list[np.ndarray]:
        axes = [self.axis_centers(k) for k in range(self.dim)]
        return list(np.meshgrid(*axes, indexing="ij"))

    def points(self) -> np.ndarray:
        """Cell centers as an (N, dim) array in C order."""
        mesh = self.meshgrid()
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.sum(values) * self.cell_volume)

    def boundary_fraction(self, values: np.ndarray) -> float:
        """Fraction of |values| mass within one cell of the boundary."""
        v = np.abs(np.asarray(values).reshape(self.shape))
        total = v.sum()
        if total == 0.0:
            return 0.0
        inner = v
        for axis in range(self.dim):
            sl = [slice(None)] * self.dim
            sl[axis] = slice(1, -1)
            inner = inner[tuple(sl)]
        return float((total - inner.sum()) / total)

    def refined(self) -> BoxGrid:
        return BoxGrid(self.lo, self.hi, tuple(2 * m for m in self.n))

    def to_config(self) -> dict:
        return {"kind": "box", "lo": list(self.lo), "hi": list(self.hi),
                "n": list(self.n)}


def centered_box(half_width: float, n: int, dim: int = 3) -> BoxGrid:
    """Cube [-half_width, half_width]^dim with n cells per axis."""
    return BoxGrid((-half_width,) * dim, (half_width,) * dim, (n,) * dim)


def grid_from_config(cfg: dict) -> RadialGrid | BoxGrid:
    kind = cfg.get("kind", "radial")
    if kind == "radial":
        return RadialGrid(
            n=int(cfg["n"]),
            rmax=float(cfg["rmax"]),
            rmin=float(cfg.get("rmin", 0.0)),
            dim=int(cfg.get("dim", 3)),
            spacing=cfg.get("spacing", "uniform"),
        )
    if kind == "box":
        if "half_width" in cfg:
            return centered_box(float(cfg["half_width"]), int(cfg["n"]),
                                int(cfg.get("dim", 3)))
        return BoxGrid(tuple(cfg["lo"]), tuple(cfg["hi"]), tuple(cfg["n"]))
    raise GridError(f"unknown grid kind {kind!r}")


Grid = RadialGrid | BoxGrid
