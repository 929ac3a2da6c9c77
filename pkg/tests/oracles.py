"""Independent reference computations used by the tests.

Nothing here calls the pencil reduction or the eigensolvers of the package.
"""
import numpy as np

from hkelab.space import MetricMeasureGraph


def binary_tree(depth: int) -> MetricMeasureGraph:
    """Complete binary tree with unit data; vertex ``k`` has children ``2k+1, 2k+2``."""
    n = 2 ** (depth + 1) - 1
    edges = [(k, c) for k in range(n) for c in (2 * k + 1, 2 * k + 2) if c < n]
    m = len(edges)
    return MetricMeasureGraph(n, edges, np.ones(m), np.ones(m), np.ones(n), family_tag="custom")


def tree_capacity(depth: int, k: int) -> float:
    """Capacity between the root and all vertices at depth ``k``: parallel levels in series."""
    resistance = sum(1.0 / 2 ** (j + 1) for j in range(k))
    return 1.0 / resistance


def random_graph(n: int, rng) -> MetricMeasureGraph:
    """Random spanning tree plus extra edges, random conductances, lengths and measure."""
    edges = {(int(rng.integers(0, k)), k) for k in range(1, n)}
    for _ in range(int(rng.integers(0, n))):
        u, v = sorted(rng.choice(n, 2, replace=False).tolist())
        edges.add((u, v))
    edges = sorted(edges)
    m = len(edges)
    return MetricMeasureGraph(n, edges, rng.uniform(0.5, 2.0, m), rng.integers(1, 3, m).astype(float),
                              rng.uniform(0.5, 2.0, n))


def _quadratic_forms(g, x, r, sigma, nu):
    d = g.dist[x]
    inB = d < r
    inS = d < sigma * r
    touched = inS.copy()
    for u, v in g.edges:
        if inS[u] or inS[v]:
            touched[u] = touched[v] = True
    idx = np.flatnonzero(touched)
    pos = {v: i for i, v in enumerate(idx)}
    k = len(idx)
    Q = np.zeros((k, k))
    for (u, v), c in zip(g.edges, g.conductance):
        w = 0.5 * c * (int(inS[u]) + int(inS[v]))
        if w == 0:
            continue
        i, j = pos[u], pos[v]
        Q[i, i] += w
        Q[j, j] += w
        Q[i, j] -= w
        Q[j, i] -= w
    a = np.zeros(k)
    a[[pos[v] for v in np.flatnonzero(inB)]] = g.mu[inB] / g.mu[inB].sum()
    # centring map f -> f - f_B restricted to B, weighted by nu
    T = np.eye(k) - np.ones((k, 1)) * a[None, :]
    wv = np.zeros(k)
    wv[[pos[v] for v in np.flatnonzero(inB)]] = nu[inB]
    P = T.T @ (wv[:, None] * T)
    return P, Q


def _line_max(P, Q, f, d):
    """Step ``t`` maximizing ``(f + t d).P.(f + t d) / (f + t d).Q.(f + t d)`` in closed form."""
    a, b, c = d @ P @ d, d @ P @ f, f @ P @ f
    dd, e, h = d @ Q @ d, d @ Q @ f, f @ Q @ f
    best_t, best = 0.0, c / h
    for t in np.roots([a * e - b * dd, a * h - c * dd, b * h - c * e]):
        if abs(t.imag) > 0:
            continue
        t = t.real
        den = dd * t * t + 2 * e * t + h
        if den > 1e-8 * h:
            val = (a * t * t + 2 * b * t + c) / den
            if val > best:
                best_t, best = t, val
    return best_t, best


def _ascent(P, Q, f, iters: int = 3000, tol: float = 1e-15):
    """Polak-Ribiere conjugate gradients with exact line maximization of the quotient."""
    f = f / np.sqrt(f @ Q @ f)
    val = f @ P @ f
    grad_prev, d = None, None
    for it in range(iters):
        grad = 2 * (P @ f - val * (Q @ f))
        if grad_prev is None or it % len(f) == 0:
            d = grad
        else:
            beta = max(0.0, grad @ (grad - grad_prev) / (grad_prev @ grad_prev))
            d = grad + beta * d
        if not np.any(d):
            break
        t, new = _line_max(P, Q, f, d)
        f = f + t * d
        f /= np.sqrt(f @ Q @ f)
        new = f @ P @ f
        grad_prev = grad
        if new - val <= tol * new and it % len(f) == len(f) - 1:
            val = max(val, new)
            break
        val = max(val, new)
    return float(val)


def brute_force_ball_sup(g, x, r, sigma, nu, restarts: int = 6, seed: int = 0) -> float:
    """``sup_f sum_B nu (f - f_B)^2 / Gamma<f>(sigma B)`` by random starts.

    Each random start is climbed by conjugate gradients with exact line
    maximization; the best value over all starts is returned.
    """
    P, Q = _quadratic_forms(g, x, r, sigma, nu)
    if not np.any(P):
        return 0.0
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(restarts):
        f0 = rng.standard_normal(len(P))
        if f0 @ Q @ f0 > 0:
            best = max(best, _ascent(P, Q, f0))
    return best


def series_capacity_path(n: int, x: int, r: float, kappa: float) -> float:
    """Capacity of ``B(x, r)`` in ``B(x, kappa r)`` on the unit path: two resistors in parallel."""
    inner = [v for v in range(n) if abs(v - x) < r]
    outer = [v for v in range(n) if abs(v - x) < kappa * r]
    cap = 0.0
    if outer[0] > 0:
        cap += 1.0 / (inner[0] - (outer[0] - 1))
    if outer[-1] < n - 1:
        cap += 1.0 / ((outer[-1] + 1) - inner[-1])
    return cap
