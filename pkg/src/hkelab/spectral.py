"""Spectra, heat kernels, resolvents and harmonic extensions.

The generator ``L = M^{-1} Lap`` is self-adjoint in the ``mu`` inner product,
so everything is done on the symmetric matrix ``S = M^{-1/2} Lap M^{-1/2}``
and mapped back with ``phi = M^{-1/2} psi``.  Returned eigenvectors are
``mu``-orthonormal.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy import integrate, linalg, sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as splinalg

from .energy import Generator

log = logging.getLogger(__name__)

DENSE_CAP = 4096


class SolverError(RuntimeError):
    """An iterative method failed; ``residuals`` carries the diagnostic."""

    def __init__(self, msg: str, residuals=None):
        super().__init__(msg)
        self.residuals = residuals


@dataclass
class Spectrum:
    """Eigenpairs of ``L`` with ``mu``-orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    mu: np.ndarray
    method_tag: str = "dense"
    residuals: np.ndarray = field(default=None, repr=False)

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    @property
    def complete(self) -> bool:
        return self.k == len(self.mu)


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    # largest-magnitude entry positive (first on ties), so phi_0 > 0
    idx = np.argmax(np.abs(vecs) - 1e-12 * np.arange(vecs.shape[0])[:, None], axis=0)
    s = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    s[s == 0] = 1.0
    return vecs * s


def _symmetrized(gen: Generator) -> sparse.csr_matrix:
    r = sparse.diags(1.0 / np.sqrt(gen.mu))
    return (r @ gen.laplacian @ r).tocsr()


def _residuals(gen: Generator, lam, phi) -> np.ndarray:
    res = gen.matrix @ phi - phi * lam
    return np.sqrt(np.einsum("ij,i,ij->j", res, gen.mu, res))


def eigendecompose(gen: Generator, k: int | None = None, dense_cap: int = DENSE_CAP,
                   tol: float = 1e-10, seed: int = 0) -> Spectrum:
    """Full spectrum for ``n <= dense_cap``, else the ``k`` smallest pairs by Lanczos."""
    n = gen.graph.n
    if n <= dense_cap:
        s = _symmetrized(gen).toarray()
        lam, psi = linalg.eigh(s)
        tag = "dense"
        if k is not None:
            lam, psi = lam[:k], psi[:, :k]
    else:
        if k is None:
            raise ValueError(f"n = {n} exceeds the dense cap {dense_cap}; pass k")
        lam, psi = lanczos_smallest(_symmetrized(gen), k, tol=tol, seed=seed)
        tag = "iterative"
    phi = _fix_signs(psi) / np.sqrt(gen.mu)[:, None]
    res = _residuals(gen, lam, phi)
    if tag == "iterative" and np.any(res > 1e-8):
        raise SolverError("Lanczos pairs did not reach the residual bound", res)
    return Spectrum(lam, phi, gen.mu.copy(), tag, res)


def lanczos_smallest(s: sparse.spmatrix, k: int, tol: float = 1e-10, seed: int = 0,
                     max_steps: int | None = None):
    """Smallest ``k`` eigenpairs of a symmetric PSD matrix.

    Lanczos with full reorthogonalization on ``(S + eps I)^{-1}``, whose
    largest eigenvalues are the smallest of ``S``.  The shift keeps the
    factorization nonsingular on the constant null direction.
    """
    n = s.shape[0]
    eps = 1e-8 * max(abs(s.diagonal()).max(), 1.0)
    lu = splinalg.splu((s + eps * sparse.identity(n)).tocsc())
    rng = np.random.default_rng(seed)
    m = min(n, max_steps or max(2 * k + 20, 40))
    while True:
        q = np.zeros((n, m + 1))
        alpha, beta = np.zeros(m), np.zeros(m)
        v = rng.standard_normal(n)
        q[:, 0] = v / np.linalg.norm(v)
        steps = m
        for j in range(m):
            w = lu.solve(q[:, j])
            alpha[j] = q[:, j] @ w
            w -= q[:, :j + 1] @ (q[:, :j + 1].T @ w)
            w -= q[:, :j + 1] @ (q[:, :j + 1].T @ w)
            beta[j] = np.linalg.norm(w)
            if beta[j] < 1e-14:
                steps = j + 1
                break
            q[:, j + 1] = w / beta[j]
        theta, y = linalg.eigh_tridiagonal(alpha[:steps], beta[:steps - 1])
        order = np.argsort(theta)[::-1][:k]
        theta, y = theta[order], y[:, order]
        ritz_res = np.abs(beta[steps - 1] * y[-1, :])
        if np.all(ritz_res <= tol * np.abs(theta)) or steps < m or m >= n:
            vecs = q[:, :steps] @ y
            # block inverse iteration + Rayleigh-Ritz on S sharpens the pairs
            for _ in range(2):
                vecs, _ = np.linalg.qr(lu.solve(vecs))
            lam, z = linalg.eigh(vecs.T @ (s @ vecs))
            return lam, vecs @ z
        m = min(n, 2 * m)


# -- heat kernel -------------------------------------------------------------------

def _check_time(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("heat kernel time must be positive")
    return t


def heat_kernel(spec: Spectrum, t, x, y):
    """``p_t(x, y) = sum_k exp(-lambda_k t) phi_k(x) phi_k(y)``; broadcasts over inputs."""
    t = _check_time(t)
    x, y = np.asarray(x), np.asarray(y)
    w = np.exp(-np.multiply.outer(t, spec.eigenvalues))
    px, py = spec.eigenvectors[x], spec.eigenvectors[y]
    return np.sum(w * px * py, axis=-1)


def heat_kernel_matrix(spec: Spectrum, t: float) -> np.ndarray:
    t = float(_check_time(t))
    phi = spec.eigenvectors
    return (phi * np.exp(-spec.eigenvalues * t)) @ phi.T


def heat_kernel_diagonal(spec: Spectrum, ts) -> np.ndarray:
    """``p_t(x, x)`` for every ``t`` in ``ts`` (rows) and every vertex (columns)."""
    ts = np.atleast_1d(_check_time(ts))
    return np.exp(-np.outer(ts, spec.eigenvalues)) @ (spec.eigenvectors ** 2).T


def semigroup_apply(spec: Spectrum, t: float, f) -> np.ndarray:
    """``P_t f`` via the spectral sum (exact when the spectrum is complete)."""
    coef = spec.eigenvectors.T @ (spec.mu * np.asarray(f, dtype=float))
    return spec.eigenvectors @ (np.exp(-spec.eigenvalues * t) * coef)


# -- resolvent -----------------------------------------------------------------------

@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float


def pcg(a: sparse.spmatrix, b: np.ndarray, precond: np.ndarray, tol: float = 1e-12,
        maxiter: int | None = None, norm_weight: np.ndarray | None = None) -> CGResult:
    """Conjugate gradients with diagonal preconditioner ``precond`` (inverse diagonal).

    Convergence is measured as ``sqrt(r^T W r) <= tol sqrt(b^T W b)`` with
    ``W = diag(norm_weight)`` (identity by default).
    """
    n = len(b)
    maxiter = maxiter or 20 * n + 100
    w = np.ones(n) if norm_weight is None else norm_weight
    bnorm = np.sqrt(b @ (w * b))
    x = np.zeros(n)
    if bnorm == 0:
        return CGResult(x, 0, 0.0)
    r = b.copy()
    z = precond * r
    p = z.copy()
    rz = r @ z
    history = []
    best, best_x, stale = np.inf, x.copy(), 0
    for it in range(1, maxiter + 1):
        ap = a @ p
        step = rz / (p @ ap)
        x += step * p
        r -= step * ap
        rn = np.sqrt(r @ (w * r)) / bnorm
        restart = it % 50 == 0
        if restart:
            # recompute the true residual; restart the directions once progress stalls
            r = b - a @ x
            rn = np.sqrt(r @ (w * r)) / bnorm
            if rn < best:
                best, best_x, stale = rn, x.copy(), 0
            else:
                stale += 1
            restart = stale > 0
        history.append(rn)
        if rn <= tol:
            return CGResult(x, it, rn)
        if stale >= 10:
            # stuck at the rounding floor: a direct solve is as accurate as it gets
            xd = splinalg.spsolve(sparse.csc_matrix(a), b)
            rd = b - a @ xd
            rnd = np.sqrt(rd @ (w * rd)) / bnorm
            if rnd <= max(tol, best):
                return CGResult(xd, it, float(rnd))
            break
        z = precond * r
        rz_new = r @ z
        p = z.copy() if restart else z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"PCG did not reach tol {tol} in {maxiter} iterations", np.array(history))


def resolvent_solve(gen: Generator, lam: float, phi, tol: float = 1e-12,
                    method: str = "cg") -> np.ndarray:
    """``G_lam phi = (L + lam)^{-1} phi``.

    Solves the SPD system ``(Lap + lam M) h = M phi``.  The residual is
    measured in the ``mu`` norm of ``(L + lam) h - phi``.
    """
    if not lam > 0:
        raise ValueError("resolvent parameter must be positive")
    phi = np.asarray(phi, dtype=float)
    mu = gen.mu
    a = (gen.laplacian + sparse.diags(lam * mu)).tocsr()
    b = mu * phi
    if method == "direct":
        h = splinalg.spsolve(a.tocsc(), b)
    elif method == "cg":
        if gen.graph.n == 1:
            return phi / lam
        # W = M^{-1} turns the Euclidean residual into the mu norm of (L + lam)h - phi
        h = pcg(a, b, 1.0 / a.diagonal(), tol=tol, norm_weight=1.0 / mu).x
    else:
        raise ValueError(f"unknown method {method!r}")
    return h


def resolvent_residual(gen: Generator, lam: float, phi, h) -> float:
    """Relative ``mu``-norm residual of ``(L + lam) h = phi``."""
    phi = np.asarray(phi, dtype=float)
    r = gen.apply(h) + lam * h - phi
    den = np.sqrt(gen.inner(phi, phi))
    return float(np.sqrt(gen.inner(r, r)) / den) if den > 0 else float(np.sqrt(gen.inner(r, r)))


def resolvent_identity_check(gen: Generator, lam: float, phi, g, h=None) -> float:
    """``|E(h, g) - (<phi, g>_mu - lam <h, g>_mu)|`` with ``h = G_lam phi``."""
    phi = np.asarray(phi, dtype=float)
    g = np.asarray(g, dtype=float)
    if h is None:
        h = resolvent_solve(gen, lam, phi)
    e_hg = float(h @ (gen.laplacian @ g))
    return abs(e_hg - (gen.inner(phi, g) - lam * gen.inner(h, g)))


def laplace_resolvent(spec: Spectrum, lam: float, phi, epsrel: float = 1e-11) -> np.ndarray:
    """``int_0^inf exp(-lam t) P_t phi dt`` by adaptive quadrature of the spectral sum."""
    coef = spec.eigenvectors.T @ (spec.mu * np.asarray(phi, dtype=float))
    vec = spec.eigenvectors
    ev = spec.eigenvalues

    def integrand(t):
        return vec @ (np.exp(-(ev + lam) * t) * coef)

    val, _ = integrate.quad_vec(integrand, 0.0, np.inf, epsrel=epsrel, epsabs=0.0, limit=2000)
    return val


# -- harmonic extension --------------------------------------------------------------

def harmonic_extension(gen: Generator, boundary: Mapping[int, float] | tuple) -> np.ndarray:
    """Energy minimizer with prescribed values on ``boundary``.

    ``boundary`` is a ``{vertex: value}`` map or a pair ``(indices, values)``.
    Free vertices satisfy ``(Lu)(x) = 0``.
    """
    if isinstance(boundary, Mapping):
        idx = np.fromiter(boundary.keys(), dtype=np.int64, count=len(boundary))
        vals = np.fromiter(boundary.values(), dtype=float, count=len(boundary))
    else:
        idx, vals = np.asarray(boundary[0], dtype=np.int64), np.asarray(boundary[1], dtype=float)
        idx, vals = np.broadcast_arrays(idx, vals)
    if len(idx) == 0:
        raise ValueError("harmonic extension needs a nonempty boundary")
    n = gen.graph.n
    fixed = np.zeros(n, dtype=bool)
    fixed[idx] = True
    u = np.zeros(n)
    u[idx] = vals
    free = np.flatnonzero(~fixed)
    if len(free) == 0:
        return u
    lap = gen.laplacian
    lff = lap[free][:, free]
    ncomp, lab = csgraph.connected_components(lff, directed=False)
    touches = np.zeros(ncomp, dtype=bool)
    coupling = np.asarray(abs(lap[free][:, np.flatnonzero(fixed)]).sum(axis=1)).ravel() > 0
    touches[lab[coupling]] = True
    if not touches.all():
        raise ValueError("a free component has no contact with the boundary")
    rhs = -(lap[free][:, fixed] @ u[fixed])
    u[free] = splinalg.spsolve(lff.tocsc(), rhs)
    return u


# -- exports -----------------------------------------------------------------------

def save_spectrum(spec: Spectrum, prefix) -> tuple[Path, Path]:
    """Write ``<prefix>.eigenvalues.txt`` (``k lambda_k``) and ``<prefix>.eigenvectors.txt``."""
    prefix = Path(prefix)
    ev = prefix.with_name(prefix.name + ".eigenvalues.txt")
    vec = prefix.with_name(prefix.name + ".eigenvectors.txt")
    ev.write_text("".join(f"{k} {v!r}\n" for k, v in enumerate(spec.eigenvalues.tolist())))
    np.savetxt(vec, spec.eigenvectors, fmt="%.17g")
    return ev, vec


def save_heat_trace(spec: Spectrum, ts, pairs, path) -> Path:
    """CSV with columns ``t,x,y,p`` over the given times and vertex pairs."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    lines = ["t,x,y,p"]
    vals = heat_kernel(spec, ts[:, None], pairs[None, :, 0], pairs[None, :, 1])
    for i, t in enumerate(ts):
        for j, (x, y) in enumerate(pairs):
            lines.append(f"{float(t)!r},{x},{y},{float(vals[i, j])!r}")
    Path(path).write_text("\n".join(lines) + "\n")
    return Path(path)
