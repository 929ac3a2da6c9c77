import numpy as np
import pytest

from hkelab.conditions import (
    BorelMeasure, ScaleFunction, check_cap_upper, check_pi, critical_exponent, cs_self_improvement,
    dirac_theta_morrey, morrey_check, pi_ball_constant, sobolev_poincare_q, sp_T1, sp_T2,
    sp_equivalence_probe,
)
from hkelab.conditions.poincare import check_balance, self_improvement_limit
from hkelab.cutoff import resolvent_cutoff
from hkelab.space import build_gasket, build_lattice2d, build_path

from oracles import series_capacity_path

PSI2 = ScaleFunction.power(2.0)


def test_whole_ball_constant_is_inverse_gap():
    g = build_path(20)
    c = pi_ball_constant(g, 0, 25.0, 1.0, ScaleFunction.constant(1.0))
    assert np.isclose(c, 1 / (2 * (1 - np.cos(np.pi / 20))))
    assert np.isclose(pi_ball_constant(build_path(2), 0, 3.0, 1.0, ScaleFunction.constant(1.0)), 0.5)


def test_check_pi_witness_reproduces_constant():
    g = build_path(40)
    rep = check_pi(g, PSI2)
    w = rep.worst_witness
    again = pi_ball_constant(g, w["center"], w["radius"], 1.0, PSI2)
    assert rep.verdict == "pass" and np.isclose(again, rep.constants["C"], rtol=1e-12)
    assert np.isclose(rep.rows[:, 4].max(), rep.constants["C"])


def test_larger_sigma_never_increases_constant():
    g = build_gasket(2)
    assert check_pi(g, PSI2, sigma=2.0).constants["C"] <= check_pi(g, PSI2).constants["C"] * (1 + 1e-12)
    with pytest.raises(ValueError):
        check_pi(g, PSI2, sigma=0.5)


def test_pi_other_exponent_is_a_suite_bound():
    rep = check_pi(build_path(16), PSI2, p=3.0, seed=1)
    assert rep.verdict == "fitted" and rep.constants["C"] > 0


def test_capacity_upper_matches_series_oracle():
    n = 21
    g = build_path(n)
    rep = check_cap_upper(g, PSI2, kappa=2.0)
    best = 0.0
    for x in range(n):
        for r in g.radii_grid():
            if g.ball_counts([2 * r])[x, 0] == n:
                continue
            vol = g.ball_measure([r])[x, 0]
            best = max(best, series_capacity_path(n, x, r, 2.0) * r ** 2 / vol)
    assert np.isclose(rep.constants["C"], best, rtol=1e-12)
    assert any("skipped" in f for f in rep.flags)


def test_t1_dirac_closed_form():
    g = build_path(9)
    nu = BorelMeasure.dirac(g.n, 4)
    rep = sp_T1(g, nu, ScaleFunction.constant(1.0), PSI2, radii=[0.5, 1.5, 2.5], centers=[4])
    # nu(B) = 1, mu(B) = 1, 3, 5 and Psi = r^2
    assert np.isclose(rep.constants["K"], max(1 / np.sqrt(v / r ** 2) for v, r in [(1, .5), (3, 1.5), (5, 2.5)]))


def test_t2_zero_measure_and_probe():
    g = build_path(12)
    rep = sp_T2(g, BorelMeasure.zero(g.n), ScaleFunction.constant(1.0))
    assert rep.constants["C"] == 0.0
    probe = sp_equivalence_probe(g, BorelMeasure.dirac(g.n, 6), ScaleFunction.constant(1.0), PSI2)
    assert probe["T1"].constants["K"] > 0 and probe["T2"].constants["C"] > 0
    assert np.isclose(probe["band"]["C_over_K"] * probe["band"]["K_over_C"], 1.0)


def test_morrey_applicability():
    path = build_path(32)
    rep = morrey_check(path, PSI2)
    assert rep.verdict == "pass" and np.isfinite(rep.constants["C"])
    assert morrey_check(build_lattice2d(10), PSI2).verdict == "inapplicable"
    theta = dirac_theta_morrey(path, PSI2)
    assert np.isclose(theta(np.array([2.0]), 10)[0], np.sqrt(4.0 / 3.0))


def test_sobolev_q2_is_pi():
    g = build_path(24)
    sob = sobolev_poincare_q(g, PSI2, q=2.0)
    pi = check_pi(g, PSI2, radii=g.radii_grid()[g.radii_grid() < g.diam])
    assert np.isclose(sob.constants["C"] ** 2, pi.constants["C"], rtol=1e-10)
    assert sob.condition_tag == "SOBOLEV"
    low = sobolev_poincare_q(g, PSI2, q=1.5)
    assert any("q < p" in f for f in low.flags)


def test_exponent_formulas():
    assert critical_exponent(2.0, 2.0, 2.5) == np.inf
    assert np.isclose(critical_exponent(2.0, 1.585, 1.0), 2 * 1.585 / 0.585)
    assert self_improvement_limit(0.5, 1.0, 2.0) == np.inf
    assert np.isclose(self_improvement_limit(0.5, 3.0, 2.0), 3.0)


def test_cs_self_improvement_runs():
    g = build_path(32)
    xi = resolvent_cutoff(g, 16, 8.0, PSI2)
    rep = cs_self_improvement(g, xi, 8.0, PSI2, delta=1.0, q=2.5)
    assert rep.condition_tag == "CS_SELF_IMPROVE" and np.isfinite(rep.constants["C"])
    with pytest.raises(ValueError):
        cs_self_improvement(g, xi, 8.0, PSI2, delta=1.0, q=2.0)


def test_balance_with_reference_measure():
    g = build_path(32)
    rep = check_balance(g, BorelMeasure.reference(g), PSI2, p=2.0, q=3.0, t=2.5)
    assert rep.constants["K"] > 0 and np.isfinite(rep.constants["K_bumped"])
    rep = check_balance(g, BorelMeasure.dirac(g.n, 3), PSI2, p=2.0, q=3.0, t=2.5)
    assert any("degenerate" in f for f in rep.flags)
