"""Graph Dirichlet forms, p-energy measures and the generator.

Every edge contributes ``c_uv |f(u) - f(v)|^p``; the energy measure puts half
of that on each endpoint.  With this split the identity

    sum_x phi(x) Gamma<f>(x) = E(f, f phi) - 1/2 E(f^2, phi)

holds exactly for p = 2, which is what makes the graph model a faithful
stand-in for a strongly local form.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import sparse

from .space import MetricMeasureGraph


@dataclass(frozen=True)
class EnergyForm:
    """Energy ``E_p`` on all vertex functions of ``graph``."""

    graph: MetricMeasureGraph
    p: float = 2.0

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError(f"energy exponent must satisfy p >= 1, got {self.p}")

    def edge_differences(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        e = self.graph.edges
        return f[..., e[:, 0]] - f[..., e[:, 1]]


@dataclass(frozen=True)
class EnergyMeasure:
    """Per-vertex weights of ``Gamma_p<f>``."""

    weights: np.ndarray

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def __call__(self, region) -> float:
        """Mass of a vertex set (index array or boolean mask)."""
        return float(self.weights[np.asarray(region)].sum())


@dataclass(frozen=True)
class Generator:
    """``L = M^{-1}(D - C)`` together with the pieces it is built from."""

    graph: MetricMeasureGraph
    matrix: sparse.csr_matrix
    laplacian: sparse.csr_matrix
    mu: np.ndarray

    def apply(self, f) -> np.ndarray:
        return self.matrix @ np.asarray(f, dtype=float)

    def inner(self, f, g) -> float:
        """``<f, g>_mu``."""
        return float(np.dot(np.asarray(f) * self.mu, np.asarray(g)))


def _check_vector(form: EnergyForm, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != form.graph.n:
        raise ValueError(f"vertex function has length {f.shape[-1]}, graph has {form.graph.n}")
    return f


def energy(form: EnergyForm, f, g=None) -> float:
    """``E(f, g) = sum_edges c (f_u - f_v)(g_u - g_v)``; ``E_p(f)`` when ``g`` is omitted."""
    f = _check_vector(form, f)
    df = form.edge_differences(f)
    c = form.graph.conductance
    if g is None:
        if form.p == 2:
            return float(np.dot(c, df * df))
        return float(np.dot(c, np.abs(df) ** form.p))
    if form.p != 2:
        raise ValueError("the bilinear energy E(f, g) is only defined for p = 2")
    dg = form.edge_differences(_check_vector(form, g))
    return float(np.dot(c, df * dg))


def p_energy_measure(form: EnergyForm, f) -> EnergyMeasure:
    """``Gamma_p<f>(x) = 1/2 sum_y c_xy |f(x) - f(y)|^p``."""
    f = _check_vector(form, f)
    g = form.graph
    half = 0.5 * g.conductance * np.abs(form.edge_differences(f)) ** form.p
    w = np.bincount(g.edges[:, 0], half, minlength=g.n) + np.bincount(g.edges[:, 1], half, minlength=g.n)
    return EnergyMeasure(w)


def energy_measure_batch(form: EnergyForm, fs) -> np.ndarray:
    """Energy measures of the rows of ``fs`` (k, n) as a (k, n) array."""
    fs = np.atleast_2d(_check_vector(form, fs))
    g = form.graph
    half = 0.5 * g.conductance * np.abs(form.edge_differences(fs)) ** form.p
    inc = _incidence(g)
    return np.asarray((inc @ half.T).T)


def _incidence(g: MetricMeasureGraph) -> sparse.csr_matrix:
    m = len(g.edges)
    rows = np.concatenate([g.edges[:, 0], g.edges[:, 1]])
    cols = np.concatenate([np.arange(m), np.arange(m)])
    return sparse.csr_matrix((np.ones(2 * m), (rows, cols)), shape=(g.n, m))


@dataclass(frozen=True)
class MarkovVerdict:
    holds: bool
    contracted: float
    original: float


def check_markov(form: EnergyForm, f) -> MarkovVerdict:
    """Compare ``E(f+ ^ 1)`` with ``E(f)``."""
    if form.p != 2:
        raise ValueError("the Markov check is stated for p = 2")
    f = _check_vector(form, f)
    before = energy(form, f)
    after = energy(form, np.clip(f, 0.0, 1.0))
    return MarkovVerdict(after <= before * (1 + 1e-14) + 1e-300, after, before)


class LocalityPreconditionError(ValueError):
    """``f`` is not constant on the region and its neighbours."""


def check_strong_locality(form: EnergyForm, f, region) -> float:
    """Return ``Gamma<f>(region)``, which must vanish when ``f`` is locally constant.

    Raises :class:`LocalityPreconditionError` if ``f`` varies on the region
    together with its graph neighbours, since the statement says nothing
    there.
    """
    f = _check_vector(form, f)
    g = form.graph
    mask = np.zeros(g.n, dtype=bool)
    mask[np.asarray(region)] = True
    if not mask.any():
        return 0.0
    closure = mask.copy()
    a = g.adjacency_matrix()
    closure |= np.asarray(a @ mask.astype(float)).ravel() > 0
    vals = f[closure]
    if np.any(vals != vals[0]):
        raise LocalityPreconditionError("f is not constant on the region and its neighbours")
    return float(p_energy_measure(form, f).weights[mask].sum())


def energy_measure_identity_check(form: EnergyForm, f, phi) -> float:
    """``|sum phi Gamma<f> - (E(f, f phi) - E(f^2, phi)/2)|``."""
    if form.p != 2:
        raise ValueError("the energy-measure identity is stated for p = 2")
    f = _check_vector(form, f)
    phi = _check_vector(form, phi)
    lhs = float(np.dot(phi, p_energy_measure(form, f).weights))
    rhs = energy(form, f, f * phi) - 0.5 * energy(form, f * f, phi)
    return abs(lhs - rhs)


def assemble_generator(form: EnergyForm) -> Generator:
    if form.p != 2:
        raise ValueError("the generator is defined for p = 2")
    g = form.graph
    lap = g.laplacian
    mat = (sparse.diags(1.0 / g.mu) @ lap).tocsr()
    return Generator(g, mat, lap, g.mu)


# -- vertex function files -----------------------------------------------------

def save_vertex_function(values, path) -> None:
    values = np.asarray(values, dtype=float)
    Path(path).write_text("".join(f"{i} {v!r}\n" for i, v in enumerate(values.tolist())))


def load_vertex_function(path, n: int | None = None) -> np.ndarray:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    idx = np.array([int(r[0]) for r in rows])
    size = n if n is not None else (idx.max() + 1 if len(idx) else 0)
    out = np.zeros(size)
    out[idx] = [float(r[1]) for r in rows]
    return out
