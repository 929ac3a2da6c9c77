import numpy as np
import pytest

from hkelab.space import (
    Ball, GraphSizeError, MetricMeasureGraph, ball, ball_diameter, build_family, build_gasket,
    build_lattice2d, build_path, build_vicsek, doubling_report, gasket_vertex_count, load_graph,
    save_graph,
)


def test_path_distances_and_balls():
    g = build_path(10)
    assert g.n == 10 and g.diam == 9.0
    assert np.array_equal(g.distances_from(3), np.abs(np.arange(10) - 3.0))
    b = ball(g, 3, 2.0)
    assert list(b.members) == [2, 3, 4]
    assert 4 in b and 5 not in b
    assert g.ball_counts([1.0, 2.0, 2.5])[0].tolist() == [1, 2, 3]
    assert g.ball_measure([100.0])[5, 0] == 10.0


def test_ball_sums_stack_matches_loop(rng):
    g = build_lattice2d(5)
    w = rng.random((3, g.n))
    radii = [0.5, 1.5, 3.0]
    out = g.ball_sums(w, radii)
    for k in range(3):
        for x in (0, 7, 24):
            for j, r in enumerate(radii):
                assert np.isclose(out[k, x, j], w[k, g.dist[x] < r].sum())


def test_lattice_geometry():
    g = build_lattice2d(4)
    assert g.n == 16 and len(g.edges) == 24
    assert g.diam == 6.0


@pytest.mark.parametrize("level", [0, 1, 2, 3])
def test_gasket_counts_and_mass(level):
    g = build_gasket(level)
    assert g.n == gasket_vertex_count(level) == (3 ** (level + 1) + 3) // 2
    assert len(g.edges) == 3 ** (level + 1)
    assert np.isclose(g.total_mass, 1.0)
    assert np.isclose(g.diam, 1.0)
    assert np.allclose(g.conductance, (5 / 3) ** level)


def test_gasket_corner_and_junction_masses():
    g = build_gasket(2)
    # corners sit in one cell, junctions in two
    assert np.isclose(g.mu.min(), 1 / 27) and np.isclose(g.mu.max(), 2 / 27)


def test_non_renormalized_gasket_has_unit_conductance():
    assert np.allclose(build_gasket(3, renormalize=False).conductance, 1.0)


@pytest.mark.parametrize("level", [0, 1, 2])
def test_vicsek_is_a_tree(level):
    g = build_vicsek(level)
    assert g.n == 4 * 5 ** level + 1
    assert len(g.edges) == g.n - 1
    assert np.isclose(g.total_mass, 1.0)
    assert np.isclose(g.diam, 2.0)


def test_validation_errors():
    with pytest.raises(ValueError):
        MetricMeasureGraph(3, [[0, 1]], [1.0], [1.0], np.ones(3))
    with pytest.raises(ValueError):
        MetricMeasureGraph(2, [[0, 1]], [0.0], [1.0], np.ones(2))
    with pytest.raises(ValueError):
        MetricMeasureGraph(2, [[0, 0]], [1.0], [1.0], np.ones(2))
    with pytest.raises(ValueError):
        build_family("torus", 3)
    with pytest.raises(ValueError):
        ball(build_path(3), 0, 0.0)
    with pytest.raises(GraphSizeError):
        build_gasket(12)


def test_save_load_round_trip(tmp_path):
    g = build_vicsek(1)
    save_graph(g, tmp_path / "v.graph")
    h = load_graph(tmp_path / "v.graph")
    assert h.n == g.n
    assert np.array_equal(h.edges, g.edges)
    assert np.array_equal(h.mu, g.mu) and np.array_equal(h.conductance, g.conductance)
    assert np.array_equal(h.dist, g.dist)


def test_load_graph_rejects_bad_counts(tmp_path):
    (tmp_path / "bad.graph").write_text("2 1\n0 1 1.0 1.0\n0 1.0\n")
    with pytest.raises(ValueError):
        load_graph(tmp_path / "bad.graph")


def test_doubling_on_path():
    rep = doubling_report(build_path(64))
    # open balls of radius r and 2r on Z: at most (4r - 1)/(2r - 1) <= 3
    assert 1.0 < rep.D <= 3.0
    assert rep.lambda_perf > 0
    assert 0.7 < rep.Q_L <= rep.Q_U < 1.3


def test_doubling_on_lattice_exponent():
    rep = doubling_report(build_lattice2d(16))
    assert 1.4 < rep.Q_L <= rep.Q_U < 2.5


def test_ball_diameter():
    g = build_path(6)
    assert ball_diameter(g, np.array([1, 4])) == 3.0
    assert ball_diameter(g, np.array([2])) == 0.0


def test_radii_grid_hits_every_ball():
    g = build_path(5)
    grid = g.radii_grid()
    for x in range(g.n):
        seen = set(g.ball_counts(grid)[x].tolist())
        fine = set(g.ball_counts(np.linspace(1e-3, g.diam, 997))[x].tolist())
        assert seen == fine
