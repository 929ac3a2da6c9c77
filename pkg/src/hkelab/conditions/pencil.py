"""Exact ball suprema for p = 2 and test-function suites for other exponents.

For a ball ``B`` and its dilate ``S = sigma B`` the quantity

    sup_f  sum_{z in B} nu_z (f_z - f_B)^2  /  Gamma<f>(S)

is a generalized eigenvalue problem.  ``Gamma<f>(S)`` involves ``f`` on the
outside neighbours ``W`` of ``S`` only through half-edges, and each ``f_w``
can be minimized out in closed form (a conductance-weighted mean), leaving a
form ``A`` on ``S``.  Both forms kill constants, so grounding one vertex of
``B`` deflates the constant direction and leaves a definite pencil.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as splinalg

from ..energy import EnergyForm, assemble_generator, energy_measure_batch
from ..space import MetricMeasureGraph
from ..spectral import eigendecompose, resolvent_solve


@dataclass
class BallPencil:
    """Reduced energy form on ``S = B(x, sigma r)`` with ``W`` eliminated."""

    center: int
    B: np.ndarray          # members of the ball (graph ids)
    S: np.ndarray          # members of the dilated ball, B first
    W: np.ndarray          # outside neighbours of S
    A: object              # form on S (B first, same order); dense array or sparse csc
    C_SW: object
    s_w: np.ndarray

    def grounded_solver(self):
        """Factor ``A_g`` (the centre, index 0 of ``S``, grounded) and return a solve function."""
        Ag = self.A[1:, 1:]
        if Ag.shape[0] == 0:
            return lambda U: np.zeros_like(np.asarray(U, dtype=float))
        if isinstance(Ag, np.ndarray):
            fac = linalg.cho_factor(Ag, check_finite=False)
            return lambda U: linalg.cho_solve(fac, np.asarray(U, dtype=float), check_finite=False)
        lu = splinalg.splu(Ag.tocsc())
        return lambda U: lu.solve(np.asarray(U, dtype=float))

    def grounded_solve(self, U: np.ndarray) -> np.ndarray:
        """Solve ``A_g Y = U`` with the centre (index 0 of ``S``) grounded."""
        return self.grounded_solver()(U)

    def extend(self, fS: np.ndarray, n: int) -> np.ndarray:
        """Full vertex function: ``fS`` on ``S``, energy-minimizing means on ``W``."""
        f = np.zeros(n)
        f[self.S] = fS
        if len(self.W):
            f[self.W] = (self.C_SW.T @ fS) / self.s_w
        return f


def _prefix(g: MetricMeasureGraph, x: int, r: float) -> np.ndarray:
    order, sd = g._sorted_rows
    k = int(np.searchsorted(sd[x], r, side="left"))
    return order[x][:k]


DENSE_PENCIL = 400


def _dense_blocks(lap: sparse.csr_matrix, S: np.ndarray, n: int):
    """``L_SS`` and ``-L_SW`` as dense arrays, read directly from the CSR arrays."""
    starts, ends = lap.indptr[S], lap.indptr[S + 1]
    counts = ends - starts
    rows = np.repeat(np.arange(len(S)), counts)
    k = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts) + np.repeat(starts, counts)
    cols, vals = lap.indices[k], lap.data[k]
    pos = np.full(n, -1)
    pos[S] = np.arange(len(S))
    ps = pos[cols]
    inside = ps >= 0
    L_SS = np.zeros((len(S), len(S)))
    np.add.at(L_SS, (rows[inside], ps[inside]), vals[inside])
    W, wi = np.unique(cols[~inside], return_inverse=True)
    C_SW = np.zeros((len(S), len(W)))
    np.add.at(C_SW, (rows[~inside], wi), -vals[~inside])
    return L_SS, W, C_SW


def ball_pencil(g: MetricMeasureGraph, x: int, r: float, sigma: float = 1.0) -> BallPencil:
    B = _prefix(g, x, r)
    S = _prefix(g, x, sigma * r)
    # the centre has distance 0 and ties sort stably, so B[0] == S[0] == x
    if B[0] != x:
        pos = int(np.flatnonzero(B == x)[0])
        B[[0, pos]] = B[[pos, 0]]
        pos = int(np.flatnonzero(S == x)[0])
        S[[0, pos]] = S[[pos, 0]]
    lap = g.laplacian
    if len(S) <= DENSE_PENCIL:
        L_SS, W, C_SW = _dense_blocks(lap.tocsr(), S, g.n)
        s_w = C_SW.sum(axis=0)
        A = L_SS - 0.5 * np.diag(C_SW.sum(axis=1))
        if len(W):
            A -= 0.5 * (C_SW / s_w) @ C_SW.T
        return BallPencil(int(x), B, S, W, 0.5 * (A + A.T), C_SW, s_w)
    inS = np.zeros(g.n, dtype=bool)
    inS[S] = True
    L_SS = lap[S][:, S]
    cols = lap[S]
    nb = np.unique(cols.indices)
    W = nb[~inS[nb]]
    C_SW = (-lap[S][:, W]).tocsr()
    s_w = np.asarray(C_SW.sum(axis=0)).ravel()
    out_deg = np.asarray(C_SW.sum(axis=1)).ravel()
    A = L_SS - 0.5 * sparse.diags(out_deg)
    if len(W):
        A = A - 0.5 * (C_SW @ sparse.diags(1.0 / s_w) @ C_SW.T)
    return BallPencil(int(x), B, S, W, sparse.csc_matrix(A), C_SW, s_w)


@dataclass
class PencilResult:
    theta: float
    vector: np.ndarray     # maximizing f on all vertices (zero far from the ball)
    column: int            # for pointwise mode: the maximizing vertex


def _centered_columns(bp: BallPencil, mu: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Columns ``e_z - a`` (``a`` = normalized mu on B) in grounded S coordinates."""
    nB, nS = len(bp.B), len(bp.S)
    a = mu[bp.B] / mu[bp.B].sum()
    U = np.zeros((nS, len(cols)))
    U[:nB, :] = -a[:, None]
    U[cols, np.arange(len(cols))] += 1.0
    return U[1:]


ITERATIVE_COLUMNS = 48


def _pencil_top_iterative(g: MetricMeasureGraph, bp: BallPencil, wB: np.ndarray,
                          cols: np.ndarray) -> PencilResult:
    """Top eigenpair of ``D^1/2 U^T A_g^-1 U D^1/2`` by Lanczos on the implicit operator."""
    nB, nS = len(bp.B), len(bp.S)
    a = g.mu[bp.B] / g.mu[bp.B].sum()
    sq = np.sqrt(wB[cols])
    solve = bp.grounded_solver()

    def lift(v):
        # U (sq * v) in grounded S coordinates
        u = np.zeros(nS)
        z = sq * v
        u[:nB] -= a * z.sum()
        u[cols] += z
        return u[1:]

    def apply(v):
        y = np.r_[0.0, solve(lift(np.ravel(v)))]
        return sq * (y[cols] - np.dot(a, y[:nB]))

    op = splinalg.LinearOperator((len(cols), len(cols)), matvec=apply, dtype=float)
    vals, vecs = splinalg.eigsh(op, k=1, which="LA", v0=np.random.default_rng(0).standard_normal(len(cols)), tol=1e-14)
    w = vecs[:, 0]
    fS = np.r_[0.0, solve(lift(w))]
    return PencilResult(max(float(vals[0]), 0.0), bp.extend(fS, g.n), -1)


def pencil_sup(g: MetricMeasureGraph, bp: BallPencil, nu: np.ndarray, pointwise: bool = False) -> PencilResult:
    """``sup_f sum_B nu (f - f_B)^2 / Gamma<f>(S)``.

    With ``pointwise`` the sup of ``(f(z) - f_B)^2 / Gamma<f>(S)`` over
    ``z in B`` is returned instead (the Dirac sweep of a Morrey estimate).
    """
    nB = len(bp.B)
    if nB == 1:
        return PencilResult(0.0, np.zeros(g.n), 0)
    wB = nu[bp.B]
    cols = np.arange(nB) if pointwise else np.flatnonzero(wB > 0)
    if len(cols) == 0:
        return PencilResult(0.0, np.zeros(g.n), 0)
    if not pointwise and len(cols) > ITERATIVE_COLUMNS:
        return _pencil_top_iterative(g, bp, wB, cols)
    U = _centered_columns(bp, g.mu, cols)
    Y = bp.grounded_solve(U)
    G = U.T @ Y
    G = 0.5 * (G + G.T)
    if pointwise:
        k = int(np.argmax(np.diag(G)))
        theta = float(G[k, k])
        fS = np.r_[0.0, Y[:, k]]
        return PencilResult(theta, bp.extend(fS, g.n), int(bp.B[cols[k]]))
    sq = np.sqrt(wB[cols])
    Wm = sq[:, None] * G * sq[None, :]
    if len(cols) == 1:
        theta, w = float(Wm[0, 0]), np.ones(1)
    else:
        vals, vecs = linalg.eigh(Wm, subset_by_index=[len(cols) - 1, len(cols) - 1])
        theta, w = float(vals[0]), vecs[:, 0]
    fS = np.r_[0.0, Y @ (sq * w)]
    return PencilResult(max(theta, 0.0), bp.extend(fS, g.n), -1)


# -- test-function suites ----------------------------------------------------------

@dataclass
class TestSuite:
    names: list
    functions: np.ndarray  # (k, n)

    def __len__(self):
        return len(self.names)


def default_suite(g: MetricMeasureGraph, seed: int = 0, n_eig: int = 6, n_random: int = 6,
                  n_smoothed: int = 3, spectrum=None) -> TestSuite:
    """Eigenvectors, coordinates, distance functions, smoothed indicators, random vectors.

    All randomness comes from ``np.random.default_rng(seed)``.
    """
    rng = np.random.default_rng(seed)
    names, fs = [], []
    gen = assemble_generator(EnergyForm(g))
    if n_eig and g.n > 1:
        spec = spectrum if spectrum is not None else eigendecompose(gen, k=min(n_eig + 1, g.n))
        for k in range(1, min(n_eig + 1, spec.k)):
            names.append(f"eig{k}")
            fs.append(spec.eigenvectors[:, k])
    if g.coords is not None:
        for j, lab in enumerate("xy"):
            c = g.coords[:, j]
            if np.ptp(c) > 0:
                names.append(f"coord_{lab}")
                fs.append(c.copy())
    for x in sorted({0, g.n // 2, g.n - 1}):
        names.append(f"dist{x}")
        fs.append(g.distances_from(x).copy())
    lam = 1.0 / max(g.diam / 4, g.min_edge) ** 2 * float(g.conductance.mean() / g.mu.mean())
    for x in np.linspace(0, g.n - 1, n_smoothed).astype(int) if n_smoothed else []:
        ind = (g.distances_from(int(x)) < g.diam / 4).astype(float)
        names.append(f"smooth{int(x)}")
        fs.append(resolvent_solve(gen, lam, ind))
    for i in range(n_random):
        names.append(f"rand{i}")
        fs.append(rng.standard_normal(g.n))
    names.append("const")
    fs.append(np.ones(g.n))
    return TestSuite(names, np.array(fs))


def suite_energy_measures(g: MetricMeasureGraph, suite: TestSuite, p: float) -> np.ndarray:
    return energy_measure_batch(EnergyForm(g, p), suite.functions)


def weighted_pencil_sup(bp: BallPencil, d: np.ndarray, mass: np.ndarray) -> PencilResult:
    """``sup_f sum_B d f^2 / (Gamma<f>(S) + sum_S mass f^2)`` with ``mass > 0`` on ``S``.

    The mass term makes the form definite, so no grounding is needed.
    ``d`` and ``mass`` are indexed like ``bp.B`` and ``bp.S``.
    """
    cols = np.flatnonzero(d > 0)
    nS = len(bp.S)
    if len(cols) == 0:
        return PencilResult(0.0, np.zeros(nS), -1)
    if isinstance(bp.A, np.ndarray):
        Q = bp.A + np.diag(mass)
        E = np.zeros((nS, len(cols)))
        E[cols, np.arange(len(cols))] = 1.0
        Y = linalg.cho_solve(linalg.cho_factor(Q, check_finite=False), E, check_finite=False)
    else:
        Q = (bp.A + sparse.diags(mass)).tocsc()
        E = np.zeros((nS, len(cols)))
        E[cols, np.arange(len(cols))] = 1.0
        Y = splinalg.splu(Q).solve(E)
    G = Y[cols]
    G = 0.5 * (G + G.T)
    sq = np.sqrt(d[cols])
    vals, vecs = linalg.eigh(sq[:, None] * G * sq[None, :],
                             subset_by_index=[len(cols) - 1, len(cols) - 1])
    return PencilResult(float(vals[0]), Y @ (sq * vecs[:, 0]), -1)
