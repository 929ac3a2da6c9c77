import numpy as np
import pytest

from hkelab.conditions import ScaleFunction, ScaleTableError, phi_numeric, phi_power, volume_scale
from hkelab.conditions.scale import tail_variable
from hkelab.space import build_path


def test_power_and_inverse():
    psi = ScaleFunction.power(2.5, prefactor=3.0)
    r = np.array([0.1, 1.0, 7.0])
    assert np.allclose(psi.inverse(psi(r)), r)
    assert psi.beta_L == psi.beta_U == 2.5
    assert psi.check_doubling(np.geomspace(0.01, 10, 20))


def test_table_interpolation_and_exponents():
    psi = ScaleFunction.table([1.0, 2.0, 4.0], [1.0, 4.0, 32.0])
    assert np.isclose(psi.beta_L, 2.0) and np.isclose(psi.beta_U, 3.0)
    assert np.isclose(psi(np.sqrt(2.0)), 2.0)
    # log-log extrapolation with the end slopes
    assert np.isclose(psi(8.0), 256.0) and np.isclose(psi(0.5), 0.25)
    assert np.allclose(psi.inverse(psi([0.3, 1.5, 9.0])), [0.3, 1.5, 9.0])


def test_table_file_errors_carry_line_numbers(tmp_path):
    p = tmp_path / "psi.txt"
    p.write_text("# r psi\n1 1\n\n2 4\n3 2\n")
    with pytest.raises(ScaleTableError, match="line 5"):
        ScaleFunction.from_file(p)
    p.write_text("1 1\n2 x\n")
    with pytest.raises(ScaleTableError, match="line 2"):
        ScaleFunction.from_file(p)
    p.write_text("1 1 1\n")
    with pytest.raises(ScaleTableError, match="line 1"):
        ScaleFunction.from_file(p)
    p.write_text("1, 1\n2, 8\n")
    assert np.isclose(ScaleFunction.from_file(p).beta_U, 3.0)


def test_constructor_checks():
    with pytest.raises(ValueError):
        ScaleFunction.power(0.0)
    with pytest.raises(ValueError):
        ScaleFunction.constant(-1.0)
    with pytest.raises(ScaleTableError):
        ScaleFunction.table([1.0], [1.0])


def test_phi_closed_form_matches_numeric():
    psi = ScaleFunction.power(2.3)
    for s in (0.01, 0.5, 3.0, 40.0):
        assert np.isclose(phi_power(s, 2.3), phi_numeric(s, psi), rtol=1e-9)
    assert phi_numeric(0.0, psi) == 0.0
    with pytest.raises(ValueError):
        phi_power(1.0, 1.0)


def test_tail_variable_power_law():
    psi = ScaleFunction.power(2.0)
    # t Phi(d/t) = d^2 / (4 t) for Psi = r^2
    assert np.isclose(tail_variable(3.0, 2.0, psi), 9 / 8)
    table = ScaleFunction.table([0.1, 1.0, 10.0], [0.01, 1.0, 100.0])
    assert np.isclose(tail_variable(3.0, 2.0, table), 9 / 8, rtol=1e-8)


def test_volume_scale_is_ball_measure():
    g = build_path(9)
    v = volume_scale(g)
    assert not v.radial
    assert v(np.array([2.0]), 4)[0] == 3.0
    with pytest.raises(ValueError):
        v(np.array([2.0]))


def test_batch_phi_matches_scalar():
    from hkelab.conditions.scale import phi_numeric_batch
    psi = ScaleFunction.table([0.1, 1.0, 10.0], [0.02, 1.0, 300.0])
    s = np.array([[0.0, 0.02], [1.5, 30.0]])
    ref = np.vectorize(lambda v: phi_numeric(v, psi))(s)
    assert np.allclose(phi_numeric_batch(s, psi), ref, rtol=1e-10, atol=1e-14)
