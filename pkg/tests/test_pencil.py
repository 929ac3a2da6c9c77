import numpy as np
import pytest

from hkelab.conditions.pencil import (
    DENSE_PENCIL, ITERATIVE_COLUMNS, ball_pencil, default_suite, pencil_sup, weighted_pencil_sup,
)
from hkelab.energy import EnergyForm, p_energy_measure
from hkelab.space import build_gasket, build_lattice2d, build_path

from oracles import brute_force_ball_sup, random_graph


def test_whole_path_is_inverse_spectral_gap():
    for n in (2, 5, 30):
        g = build_path(n)
        theta = pencil_sup(g, ball_pencil(g, 0, n + 1.0), g.mu).theta
        assert np.isclose(theta, 1 / (2 * (1 - np.cos(np.pi / n))), rtol=1e-12)


def test_iterative_path_matches_closed_form():
    n = 3 * ITERATIVE_COLUMNS
    g = build_path(n)
    theta = pencil_sup(g, ball_pencil(g, 0, n + 1.0), g.mu).theta
    assert np.isclose(theta, 1 / (2 * (1 - np.cos(np.pi / n))), rtol=1e-10)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_matches_brute_force_on_random_graphs(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(9, rng)
    nu = rng.random(g.n)
    for x in (0, 4):
        for r in g.radii_grid()[::2]:
            for sigma in (1.0, 1.5):
                exact = pencil_sup(g, ball_pencil(g, x, r, sigma), nu).theta
                assert np.isclose(brute_force_ball_sup(g, x, r, sigma, nu, restarts=3), exact,
                                  rtol=1e-6, atol=1e-12)


def test_maximizer_attains_the_sup():
    g = build_gasket(2)
    bp = ball_pencil(g, 3, 0.6, 2.0)
    res = pencil_sup(g, bp, g.mu)
    f = res.vector
    B = bp.B
    fB = np.dot(g.mu[B], f[B]) / g.mu[B].sum()
    num = np.dot(g.mu[B], (f[B] - fB) ** 2)
    den = p_energy_measure(EnergyForm(g), f).weights[bp.S].sum()
    assert np.isclose(num / den, res.theta, rtol=1e-10)


def test_dense_and_sparse_blocks_agree(monkeypatch):
    g = build_lattice2d(8)
    dense = pencil_sup(g, ball_pencil(g, 27, 3.0, 2.0), g.mu).theta
    import hkelab.conditions.pencil as pencil
    monkeypatch.setattr(pencil, "DENSE_PENCIL", 0)
    sparse = pencil.pencil_sup(g, pencil.ball_pencil(g, 27, 3.0, 2.0), g.mu).theta
    assert np.isclose(dense, sparse, rtol=1e-12)
    assert DENSE_PENCIL > 0


def test_pointwise_mode_dominates_the_mean():
    g = build_path(12)
    bp = ball_pencil(g, 5, 3.0)
    point = pencil_sup(g, bp, g.mu, pointwise=True)
    assert point.theta > 0 and point.column in bp.B


def test_weighted_pencil_single_vertex():
    g = build_path(3)
    bp = ball_pencil(g, 1, 0.5, 2.0)
    # S = {1}: the outside neighbours copy f(1), so Gamma<f>(S) = 0 and the sup is d / mass
    res = weighted_pencil_sup(bp, np.array([2.0]), np.array([1.0]))
    assert np.isclose(res.theta, 2.0)


def test_default_suite_is_seeded():
    g = build_gasket(2)
    a, b = default_suite(g, seed=4), default_suite(g, seed=4)
    assert a.names == b.names and np.array_equal(a.functions, b.functions)
    assert not np.array_equal(a.functions, default_suite(g, seed=5).functions)
