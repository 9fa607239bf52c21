import math

import numpy as np
import pytest

from kernellab.errors import GridError
from kernellab.grids import BoxGrid, RadialGrid, centered_box, grid_from_config, sphere_area


def test_radial_volumes_sum_to_ball():
    g = RadialGrid(128, 2.0, dim=3)
    assert g.volumes.sum() == pytest.approx(4.0 / 3.0 * math.pi * 8.0, rel=1e-12)
    assert g.integrate(np.ones(g.n)) == pytest.approx(4.0 / 3.0 * math.pi * 8.0)


def test_radial_geometric_spacing():
    g = RadialGrid(100, 1.0, rmin=1e-5, spacing="geometric")
    ratios = g.edges[1:] / g.edges[:-1]
    assert np.allclose(ratios, ratios[0])
    assert g.edges[0] == pytest.approx(1e-5)
    assert g.edges[-1] == pytest.approx(1.0)


def test_radial_refinement_deepens():
    g = RadialGrid(64, 1.0, rmin=1e-3, spacing="geometric")
    g2 = g.refined(deepen=True)
    assert g2.n == 128
    assert g2.rmin == pytest.approx(1e-5)
    gu = RadialGrid(64, 1.0, rmin=1e-3).refined(deepen=True)
    assert gu.rmin == pytest.approx(5e-4)


def test_radial_validation():
    with pytest.raises(GridError):
        RadialGrid(1, 1.0)
    with pytest.raises(GridError):
        RadialGrid(16, 1.0, rmin=2.0)
    with pytest.raises(GridError):
        RadialGrid(16, 1.0, rmin=0.0, spacing="geometric")
    with pytest.raises(GridError):
        RadialGrid(16, 1.0, dim=2)


def test_sphere_area():
    assert sphere_area(3) == pytest.approx(4.0 * math.pi)
    assert sphere_area(4) == pytest.approx(2.0 * math.pi**2)


def test_box_basics():
    g = centered_box(2.0, 8, dim=3)
    assert g.size == 512
    assert g.cell_volume == pytest.approx(0.5**3)
    assert g.integrate(np.ones(g.shape)) == pytest.approx(64.0)
    pts = g.points()
    assert pts.shape == (512, 3)
    assert np.abs(pts).max() < 2.0


def test_box_boundary_fraction():
    g = centered_box(1.0, 10, dim=2)
    v = np.zeros(g.shape)
    v[5, 5] = 1.0
    assert g.boundary_fraction(v) == 0.0
    v[0, 3] = 1.0
    assert g.boundary_fraction(v) == pytest.approx(0.5)


def test_box_validation():
    with pytest.raises(GridError):
        BoxGrid((0.0,), (1.0, 2.0), (4, 4))
    with pytest.raises(GridError):
        BoxGrid((1.0,), (0.0,), (4,))
    with pytest.raises(GridError):
        BoxGrid((0.0,) * 4, (1.0,) * 4, (4,) * 4)


def test_grid_from_config_roundtrip():
    for g in (RadialGrid(32, 3.0, rmin=1e-4, spacing="geometric"),
              centered_box(5.0, 6, dim=3)):
        g2 = grid_from_config(g.to_config())
        assert g2.to_config() == g.to_config()
