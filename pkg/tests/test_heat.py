import json

import numpy as np
import pytest

from hkelab.conditions import ScaleFunction, check_hke, fit_walk_dimension
from hkelab.conditions.heat import diffusive_radii, volume_radius
from hkelab.energy import EnergyForm, assemble_generator
from hkelab.space import MetricMeasureGraph, build_gasket, build_path
from hkelab.spectral import eigendecompose


def _spec(g):
    return eigendecompose(assemble_generator(EnergyForm(g)))


def test_diffusive_window():
    assert diffusive_radii(build_path(65)) == (2.0, 16.0)
    with pytest.raises(ValueError, match="diffusive window is empty"):
        diffusive_radii(build_gasket(3))
    lo, hi = diffusive_radii(build_gasket(3), allow_point=True)
    assert lo == hi == 0.25


def test_volume_radius_on_path():
    g = build_path(41)
    # closed balls around the centre hold 1, 3, 5, ... vertices; knots sit at half-integers
    assert np.allclose(volume_radius(g, 20, [3.0, 5.0, 9.0]), [1.5, 2.5, 4.5])
    assert np.isnan(volume_radius(g, 20, [1e6]))[0]


def test_walk_dimension_of_path():
    g = build_path(128)
    rep = fit_walk_dimension(g, _spec(g))
    assert 1.9 <= rep.constants["beta"] <= 2.1
    assert rep.verdict == "fitted" and rep.constants["c"] <= rep.constants["C"]


def test_walk_dimension_is_invariant_under_time_rescaling():
    g = build_gasket(4)
    h = MetricMeasureGraph(g.n, g.edges, 7.0 * g.conductance, g.length, g.mu)
    b1 = fit_walk_dimension(g, _spec(g)).constants["beta"]
    b2 = fit_walk_dimension(h, _spec(h)).constants["beta"]
    assert np.isclose(b1, b2, rtol=1e-12)


def test_hke_on_path_has_gaussian_tail():
    g = build_path(96)
    rep = check_hke(g, _spec(g), 2.0)
    assert rep.verdict == "pass"
    # p_t(x, y) ~ exp(-d^2 / 4t) gives slope -1/4 against s = d^2 / t
    assert abs(rep.constants["tail_slope"] + 0.25) < 0.05
    json.dumps(rep.to_dict())


def test_hke_argument_checks():
    g = build_path(40)
    spec = _spec(g)
    with pytest.raises(ValueError):
        check_hke(g, spec, 1.0)
    partial = eigendecompose(assemble_generator(EnergyForm(g)), k=5)
    with pytest.raises(ValueError):
        check_hke(g, partial, 2.0)
    with pytest.raises(ValueError):
        fit_walk_dimension(g, partial)


def test_hke_with_table_scale():
    g = build_path(64)
    psi = ScaleFunction.table([0.5, 1.0, 100.0], [0.25, 1.0, 1e4])
    rep = check_hke(g, _spec(g), 2.0, psi=psi)
    assert rep.verdict == "pass"
