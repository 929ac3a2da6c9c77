import numpy as np
import pytest

from hkelab.conditions import ScaleFunction
from hkelab.cutoff import (
    CutoffFunction, cutoff_violation, harmonic_cutoff, holder_report, resolvent_cutoff,
    sharp_maximal, two_point_check,
)
from hkelab.space import Ball, ball, build_gasket, build_lattice2d, build_path

from oracles import binary_tree, series_capacity_path, tree_capacity


def test_harmonic_cutoff_on_path_is_piecewise_linear():
    g = build_path(21)
    xi = harmonic_cutoff(g, ball(g, 10, 3.0), ball(g, 10, 6.0))
    assert np.allclose(xi.values[12:17], [1.0, 0.75, 0.5, 0.25, 0.0])
    assert np.isclose(xi.params["energy"], 0.5)
    assert np.isclose(xi.params["energy"], series_capacity_path(21, 10, 3.0, 2.0))


def test_tree_capacity():
    g = binary_tree(4)
    for k in (1, 2, 3):
        xi = harmonic_cutoff(g, ball(g, 0, 0.5), ball(g, 0, k + 0.5))
        # grounded set starts at depth k + 1
        assert np.isclose(xi.params["energy"], tree_capacity(4, k + 1), rtol=1e-13)


def test_cutoff_invariants_enforced():
    g = build_path(6)
    inner, outer = ball(g, 2, 1.0), ball(g, 2, 2.0)
    with pytest.raises(ValueError):
        CutoffFunction(np.ones(6), inner, outer, "bad")
    assert cutoff_violation(np.r_[0, 0.5, 1, 0.5, 0, 0], inner, outer) == 0.0
    with pytest.raises(ValueError):
        harmonic_cutoff(g, inner, inner)
    with pytest.raises(ValueError):
        harmonic_cutoff(g, inner, Ball(2, 99.0, np.arange(6)))


@pytest.mark.parametrize("g", [build_path(64), build_lattice2d(10), build_gasket(3)],
                         ids=["path", "lattice", "gasket"])
def test_resolvent_cutoff(g):
    psi = ScaleFunction.power(2.0)
    R0 = g.diam / 4
    xi = resolvent_cutoff(g, 0, R0, psi)
    assert cutoff_violation(xi.values, xi.inner, xi.outer) == 0.0
    assert np.all(xi.values[ball(g, 0, 0.5 * R0).members] == 1.0)
    assert xi.params["sigma"] >= 0.5 and xi.params["phi"] in ("harmonic", "indicator")


def test_resolvent_cutoff_argument_checks():
    g = build_path(8)
    psi = ScaleFunction.power(2.0)
    with pytest.raises(ValueError):
        resolvent_cutoff(g, 0, 2.0, psi, kappa=0.0)
    with pytest.raises(ValueError):
        resolvent_cutoff(g, 0, -1.0, psi)


def test_holder_of_linear_and_sqrt():
    g = build_path(200)
    rep = holder_report(g, np.arange(200.0) / 199, R=199)
    assert np.isclose(rep.fitted_exponent, 1.0) and np.isclose(rep.fitted_constant, 1.0)
    rep = holder_report(g, np.sqrt(np.arange(200.0)), R=199)
    assert 0.45 < rep.fitted_exponent < 0.55
    const = holder_report(g, np.ones(200), R=10)
    assert const.flags == ["constant"]


def test_holder_window_excludes_saturation():
    g = build_path(200)
    ramp = np.clip((np.arange(200.0) - 50) / 20, 0, 1)
    # the envelope is s/20 up to s = 20 and flat beyond
    assert np.isclose(holder_report(g, ramp, R=40).fitted_exponent, 1.0)
    assert holder_report(g, ramp, R=40, window=1.0).fitted_exponent < 0.9
    assert "under_resolved" in holder_report(g, ramp, R=3).flags


def test_sharp_maximal_of_linear_function():
    g = build_path(9)
    f = np.arange(9.0)
    M = sharp_maximal(g, f, 2.0, 1.0, 100.0)
    # the ball {x-1, x, x+1} has variance 2/3 and radius just above 1
    assert np.isclose(M.values[4], max((k * k - 1) / 12 / ((k - 1) / 2) for k in (3, 5, 7, 9)))
    rep = two_point_check(g, f, M)
    assert rep.holds and np.isfinite(rep.constant)
    with pytest.raises(ValueError):
        sharp_maximal(g, f, 2.0, 0.0, 1.0)
