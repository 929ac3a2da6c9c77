import json

import pytest

from hkelab.conditions import ScaleFunction, main_theorem_pipeline
from hkelab.conditions.pipeline import ce_sweep, default_cutoff_grid, doubling_condition
from hkelab.space import build_gasket, build_path


def test_pipeline_on_path_fits_beta():
    rep = main_theorem_pipeline(build_path(64))
    assert rep.verdict == "pass" and rep.consistent
    assert set(rep.steps) == {"doubling", "pi", "ce", "walk_dimension", "hke"}
    assert 1.9 < rep.steps["walk_dimension"].constants["beta"] < 2.1
    json.dumps(rep.to_dict())


def test_pipeline_small_gasket_needs_a_scale_function():
    g = build_gasket(3)
    with pytest.raises(ValueError):
        main_theorem_pipeline(g)
    rep = main_theorem_pipeline(g, ScaleFunction.power(2.3219))
    assert rep.steps["walk_dimension"].verdict == "inapplicable"
    assert rep.verdict == "pass"


def test_ce_sweep_summary_bounds_every_cutoff():
    g = build_path(48)
    centers, scales = default_cutoff_grid(g)
    assert len(centers) == 3 and len(scales) == 3
    summary, reps = ce_sweep(g, ScaleFunction.power(2.0), centers, scales)
    assert summary.constants["n_cutoffs"] == 9 == len(reps)
    d = summary.constants["delta"]
    for r in reps:
        rows = r.rows[r.rows[:, 4] > 0]
        assert (rows[:, 4] / (rows[:, 1] / r.constants["R0"]) ** d).max() <= summary.constants["C"] * (1 + 1e-12)


def test_doubling_condition_report():
    rep = doubling_condition(build_gasket(3))
    assert rep.verdict == "pass" and rep.constants["D"] > 1


def test_ce_sweep_records_harmonic_cutoffs():
    g = build_path(32)
    rep, cutoffs = ce_sweep(g, ScaleFunction.power(2.0), [0, 16], [4.0, 8.0])
    harmonic = rep.extra["harmonic"]
    # every ball pair here leaves room for a Dirichlet boundary
    assert len(harmonic) == len(cutoffs) == 4
    assert all(h["delta"] > 0 for h in harmonic)
