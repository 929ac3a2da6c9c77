import numpy as np
import pytest

from hkelab.energy import EnergyForm, assemble_generator
from hkelab.space import build_gasket, build_lattice2d, build_path, build_vicsek
from hkelab.spectral import (
    SolverError, eigendecompose, harmonic_extension, heat_kernel, heat_kernel_diagonal,
    heat_kernel_matrix, laplace_resolvent, lanczos_smallest, resolvent_identity_check,
    resolvent_residual, resolvent_solve, save_heat_trace, save_spectrum, semigroup_apply,
)


def _gen(g):
    return assemble_generator(EnergyForm(g))


def test_path_eigenvalues_closed_form():
    n = 40
    spec = eigendecompose(_gen(build_path(n)))
    k = np.arange(n)
    assert np.allclose(spec.eigenvalues, 2 * (1 - np.cos(k * np.pi / n)), atol=1e-12)
    assert spec.complete


def test_eigenvectors_mu_orthonormal():
    g = build_gasket(2)
    spec = eigendecompose(_gen(g))
    gram = spec.eigenvectors.T @ (g.mu[:, None] * spec.eigenvectors)
    assert np.allclose(gram, np.eye(g.n), atol=1e-12)
    assert np.all(spec.eigenvectors[:, 0] > 0)


def test_heat_kernel_consistency():
    g = build_vicsek(1)
    spec = eigendecompose(_gen(g))
    P = heat_kernel_matrix(spec, 0.3)
    assert np.allclose(P, P.T)
    assert np.isclose(heat_kernel(spec, 0.3, 2, 5), P[2, 5])
    assert np.allclose(heat_kernel_diagonal(spec, [0.3])[0], np.diag(P))
    # stochastic completeness and semigroup property
    assert np.allclose(P @ g.mu, 1.0, atol=1e-12)
    assert np.allclose((P * g.mu) @ heat_kernel_matrix(spec, 0.2), heat_kernel_matrix(spec, 0.5), atol=1e-12)
    with pytest.raises(ValueError):
        heat_kernel_matrix(spec, 0.0)


def test_semigroup_apply_matches_expm(rng):
    from scipy.linalg import expm
    g = build_path(12)
    gen = _gen(g)
    f = rng.standard_normal(g.n)
    spec = eigendecompose(gen)
    assert np.allclose(semigroup_apply(spec, 0.7, f), expm(-0.7 * gen.matrix.toarray()) @ f, atol=1e-12)


@pytest.mark.parametrize("method", ["cg", "direct"])
def test_resolvent(method, rng):
    g = build_gasket(3)
    gen = _gen(g)
    phi = rng.random(g.n)
    h = resolvent_solve(gen, 0.5, phi, method=method)
    assert resolvent_residual(gen, 0.5, phi, h) < 1e-10
    assert resolvent_identity_check(gen, 0.5, phi, rng.standard_normal(g.n), h) < 1e-9
    spec = eigendecompose(gen)
    assert np.allclose(laplace_resolvent(spec, 0.5, phi), h, rtol=1e-8, atol=1e-10)
    with pytest.raises(ValueError):
        resolvent_solve(gen, 0.0, phi)


def test_resolvent_of_constant():
    gen = _gen(build_lattice2d(5))
    assert np.allclose(resolvent_solve(gen, 2.0, np.ones(25)), 0.5)


def test_harmonic_extension_is_linear_on_path():
    gen = _gen(build_path(9))
    u = harmonic_extension(gen, {0: 0.0, 8: 1.0})
    assert np.allclose(u, np.arange(9) / 8)
    with pytest.raises(ValueError):
        harmonic_extension(gen, {})


def test_lanczos_matches_dense():
    g = build_lattice2d(12)
    gen = _gen(g)
    full = eigendecompose(gen)
    part = eigendecompose(gen, k=6, dense_cap=10)
    assert part.method_tag == "iterative"
    assert np.allclose(part.eigenvalues, full.eigenvalues[:6], atol=1e-9)
    with pytest.raises(ValueError):
        eigendecompose(gen, dense_cap=10)


def test_exports(tmp_path):
    spec = eigendecompose(_gen(build_path(5)))
    ev, vec = save_spectrum(spec, tmp_path / "p5")
    assert len(ev.read_text().splitlines()) == 5
    assert np.allclose(np.loadtxt(vec), spec.eigenvectors)
    out = save_heat_trace(spec, [0.1, 1.0], [[0, 0], [0, 4]], tmp_path / "trace.csv")
    lines = out.read_text().splitlines()
    assert lines[0] == "t,x,y,p" and len(lines) == 5
