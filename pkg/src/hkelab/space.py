"""Finite metric measure graphs approximating fractal spaces.

A :class:`MetricMeasureGraph` carries the vertex measure, the edge
conductances (the form data) and the edge lengths (the metric data).  Distances
are shortest-path distances under the edge lengths.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

# Vertex cap for the builders; gasket level 9 already has 29 526 vertices.
MAX_VERTICES = 200_000
# Beyond this many vertices distances are computed per source on demand.
DENSE_DISTANCE_CAP = 20_000


class GraphSizeError(MemoryError):
    """Raised when a requested construction exceeds :data:`MAX_VERTICES`."""


@dataclass(eq=False)
class MetricMeasureGraph:
    """Weighted graph ``(X, d, mu)`` plus conductances.

    Parameters
    ----------
    n : int
        Number of vertices, labelled ``0..n-1``.
    edges : ndarray (m, 2)
        Undirected edges ``(u, v)`` with ``u != v``.
    conductance, length : ndarray (m,)
        Strictly positive edge conductances and lengths.
    mu : ndarray (n,)
        Strictly positive vertex measure.
    coords : ndarray (n, 2), optional
        Plot positions.
    family_tag : str
        One of ``path``, ``lattice2d``, ``gasket``, ``vicsek``, ``custom``.
    """

    n: int
    edges: np.ndarray
    conductance: np.ndarray
    length: np.ndarray
    mu: np.ndarray
    coords: Optional[np.ndarray] = None
    family_tag: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.conductance = np.asarray(self.conductance, dtype=float).ravel()
        self.length = np.asarray(self.length, dtype=float).ravel()
        self.mu = np.asarray(self.mu, dtype=float).ravel()
        m = len(self.edges)
        if self.n < 1:
            raise ValueError("graph needs at least one vertex")
        if self.conductance.shape != (m,) or self.length.shape != (m,):
            raise ValueError("conductance and length must have one entry per edge")
        if self.mu.shape != (self.n,):
            raise ValueError("mu must have one entry per vertex")
        if m and (self.edges.min() < 0 or self.edges.max() >= self.n):
            raise ValueError("edge endpoint out of range")
        if np.any(self.edges[:, 0] == self.edges[:, 1]):
            raise ValueError("self-loops are not allowed")
        if np.any(self.conductance <= 0) or np.any(self.length <= 0):
            raise ValueError("conductances and lengths must be strictly positive")
        if np.any(self.mu <= 0):
            raise ValueError("vertex measure must be strictly positive")
        if self.n > 1:
            ncomp, _ = csgraph.connected_components(self.adjacency_matrix(), directed=False)
            if ncomp != 1:
                raise ValueError(f"graph is disconnected ({ncomp} components)")

    # -- matrices ---------------------------------------------------------

    def adjacency_matrix(self, weights: str = "conductance") -> sparse.csr_matrix:
        """Symmetric sparse matrix with ``conductance`` or ``length`` weights."""
        w = self.conductance if weights == "conductance" else self.length
        u, v = self.edges[:, 0], self.edges[:, 1]
        a = sparse.coo_matrix(
            (np.concatenate([w, w]), (np.concatenate([u, v]), np.concatenate([v, u]))),
            shape=(self.n, self.n),
        )
        return a.tocsr()

    @cached_property
    def laplacian(self) -> sparse.csr_matrix:
        """Combinatorial Laplacian ``D - C`` of the conductances."""
        c = self.adjacency_matrix()
        deg = np.asarray(c.sum(axis=1)).ravel()
        return (sparse.diags(deg) - c).tocsr()

    @cached_property
    def neighbors(self) -> list:
        c = self.adjacency_matrix()
        return [c.indices[c.indptr[i]:c.indptr[i + 1]] for i in range(self.n)]

    # -- metric -----------------------------------------------------------

    @cached_property
    def dist(self) -> np.ndarray:
        """All-pairs shortest-path distances (dense, cached)."""
        if self.n > DENSE_DISTANCE_CAP:
            raise GraphSizeError(
                f"{self.n} vertices exceeds the dense distance cap; use distances_from()"
            )
        if self.n == 1:
            return np.zeros((1, 1))
        return csgraph.shortest_path(self.adjacency_matrix("length"), method="D", directed=False)

    def distances_from(self, x: int) -> np.ndarray:
        if "dist" in self.__dict__ or self.n <= DENSE_DISTANCE_CAP:
            return self.dist[x]
        return csgraph.dijkstra(self.adjacency_matrix("length"), directed=False, indices=x)

    @cached_property
    def diam(self) -> float:
        return float(self.dist.max())

    @property
    def total_mass(self) -> float:
        return float(self.mu.sum())

    @cached_property
    def min_edge(self) -> float:
        return float(self.length.min()) if len(self.length) else 0.0

    @cached_property
    def _sorted_rows(self):
        order = np.argsort(self.dist, axis=1, kind="stable")
        sd = np.take_along_axis(self.dist, order, axis=1)
        return order, sd

    def ball_sums(self, weights: np.ndarray, radii) -> np.ndarray:
        """``W[x, j] = sum of weights over B(x, radii[j])`` for every vertex ``x``.

        ``weights`` may be one vector (n,) or a stack (k, n); the result then
        has shape (k, n, len(radii)).
        """
        order, sd = self._sorted_rows
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        w = np.asarray(weights, dtype=float)
        single = w.ndim == 1
        w = np.atleast_2d(w)
        cs = np.concatenate(
            [np.zeros((w.shape[0], self.n, 1)), np.cumsum(w[:, order], axis=2)], axis=2
        )
        counts = np.stack([np.searchsorted(row, radii, side="left") for row in sd])
        out = np.take_along_axis(cs, np.broadcast_to(counts, (w.shape[0],) + counts.shape), axis=2)
        return out[0] if single else out

    def ball_counts(self, radii) -> np.ndarray:
        """Number of members of ``B(x, r)`` for every vertex and radius."""
        _, sd = self._sorted_rows
        radii = np.atleast_1d(np.asarray(radii, dtype=float))
        return np.stack([np.searchsorted(row, radii, side="left") for row in sd])

    def ball_measure(self, radii) -> np.ndarray:
        return self.ball_sums(self.mu, radii)

    def distinct_distances(self) -> np.ndarray:
        d = np.unique(np.round(self.dist, 12))
        return d[d > 0]

    def radii_grid(self, r_max: Optional[float] = None, r_min: float = 0.0) -> np.ndarray:
        """Distinct pairwise distances plus midpoints, within ``(r_min, r_max]``.

        With the strict ball convention ``d < r`` the value ``d_k`` selects the
        ball without the sphere at ``d_k`` and the midpoint selects the one
        with it, so every combinatorially distinct ball is hit.
        """
        d = self.distinct_distances()
        d = np.concatenate([d, [d[-1] * 1.5 if len(d) else 1.0]])
        mids = 0.5 * (d[1:] + d[:-1])
        first = np.array([0.5 * d[0]]) if len(d) else np.array([])
        grid = np.unique(np.concatenate([first, d, mids]))
        if r_max is None:
            r_max = self.diam
        return grid[(grid > r_min) & (grid <= r_max * (1 + 1e-12))]

    def rescaled(self, length_factor: float = 1.0, mu_factor: float = 1.0,
                 conductance_factor: float = 1.0) -> "MetricMeasureGraph":
        return MetricMeasureGraph(
            self.n, self.edges.copy(), self.conductance * conductance_factor,
            self.length * length_factor, self.mu * mu_factor,
            None if self.coords is None else self.coords * length_factor,
            self.family_tag, dict(self.meta),
        )


@dataclass(frozen=True)
class Ball:
    """Open ball ``B(center, radius) = {y : d(center, y) < radius}``."""

    center: int
    radius: float
    members: np.ndarray

    def __contains__(self, y) -> bool:
        i = np.searchsorted(self.members, y)
        return bool(i < len(self.members) and self.members[i] == y)

    def mask(self, n: int) -> np.ndarray:
        m = np.zeros(n, dtype=bool)
        m[self.members] = True
        return m

    def __len__(self):
        return len(self.members)


def ball(g: MetricMeasureGraph, x: int, r: float) -> Ball:
    if r <= 0:
        raise ValueError("ball radius must be positive")
    d = g.distances_from(x)
    return Ball(int(x), float(r), np.flatnonzero(d < r))


def ball_diameter(g: MetricMeasureGraph, members: np.ndarray) -> float:
    if len(members) < 2:
        return 0.0
    return float(g.dist[np.ix_(members, members)].max())


# -- builders ----------------------------------------------------------------

def _check_cap(n: int) -> None:
    if n > MAX_VERTICES:
        raise GraphSizeError(f"construction needs {n} vertices (cap {MAX_VERTICES})")


def build_path(n: int, edge_length: float = 1.0) -> MetricMeasureGraph:
    """Path graph on ``n`` vertices with unit conductances and unit measure."""
    if n < 2:
        raise ValueError("a path needs at least 2 vertices")
    if edge_length <= 0:
        raise ValueError("edge_length must be positive")
    _check_cap(n)
    edges = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    coords = np.column_stack([np.arange(n) * edge_length, np.zeros(n)])
    return MetricMeasureGraph(
        n, edges, np.ones(n - 1), np.full(n - 1, float(edge_length)), np.ones(n),
        coords, "path", {"size": n, "edge_length": edge_length},
    )


def build_lattice2d(n: int) -> MetricMeasureGraph:
    """``n x n`` grid with unit data (L1 path metric)."""
    if n < 2:
        raise ValueError("lattice side must be at least 2")
    _check_cap(n * n)
    idx = np.arange(n * n).reshape(n, n)
    horiz = np.column_stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()])
    vert = np.column_stack([idx[:-1, :].ravel(), idx[1:, :].ravel()])
    edges = np.vstack([horiz, vert])
    m = len(edges)
    ii, jj = np.divmod(np.arange(n * n), n)
    coords = np.column_stack([jj, ii]).astype(float)
    return MetricMeasureGraph(
        n * n, edges, np.ones(m), np.ones(m), np.ones(n * n), coords, "lattice2d", {"size": n},
    )


def gasket_vertex_count(level: int) -> int:
    return 3 * (3 ** level + 1) // 2


def build_gasket(level: int, renormalize: bool = True) -> MetricMeasureGraph:
    """Level-``level`` Sierpinski gasket graph.

    Edge length ``2**-level`` (diameter 1), conductance ``(5/3)**level``
    (``1`` when ``renormalize`` is false), and each of the ``3**level`` cells
    spreads mass ``3**-level`` equally over its three corners, so that
    ``mu(X) = 1``.
    """
    if level < 0:
        raise ValueError("level must be nonnegative")
    _check_cap(gasket_vertex_count(level))
    side = 2 ** level
    # cell = (anchor, size) with corners anchor, anchor + (size, 0), anchor + (0, size)
    anchors = np.zeros((1, 2), dtype=np.int64)
    size = side
    for _ in range(level):
        size //= 2
        offs = np.array([[0, 0], [size, 0], [0, size]], dtype=np.int64)
        anchors = (anchors[:, None, :] + offs[None, :, :]).reshape(-1, 2)
    tri = np.array([[0, 0], [size, 0], [0, size]], dtype=np.int64)
    cells = anchors[:, None, :] + tri[None, :, :]
    keys = cells[:, :, 0] * (side + 1) + cells[:, :, 1]
    uniq, inv = np.unique(keys.ravel(), return_inverse=True)
    corner_ids = inv.reshape(-1, 3)
    n = len(uniq)
    e = np.concatenate([corner_ids[:, [0, 1]], corner_ids[:, [1, 2]], corner_ids[:, [0, 2]]])
    e = np.sort(e, axis=1)
    ncell = len(cells)
    mu = np.bincount(corner_ids.ravel(), minlength=n) * (1.0 / (3.0 * ncell))
    ij = np.column_stack(np.divmod(uniq, side + 1)).astype(float) / side
    coords = np.column_stack([ij[:, 0] + 0.5 * ij[:, 1], ij[:, 1] * np.sqrt(3) / 2])
    cond = (5.0 / 3.0) ** level if renormalize else 1.0
    return MetricMeasureGraph(
        n, e, np.full(len(e), cond), np.full(len(e), 2.0 ** -level), mu, coords, "gasket",
        {"level": level, "renormalize": renormalize},
    )


def build_vicsek(level: int, renormalize: bool = True) -> MetricMeasureGraph:
    """Level-``level`` (plus-shaped) Vicsek tree.

    Each cell is a plus: a center joined to the four side midpoints.  A cell
    splits into its center and four side-adjacent sub-cells, glued at the
    shared arm ends.  Edge length ``3**-level``, conductance ``3**level``,
    and each of the ``5**level`` cells spreads mass ``5**-level`` equally
    over its five vertices.
    """
    if level < 0:
        raise ValueError("level must be nonnegative")
    _check_cap(4 * 5 ** level + 1)
    side = 2 * 3 ** level  # smallest cells have side 2, so an arm is one unit
    corners = np.array([[0, 0]], dtype=np.int64)
    size = side
    for _ in range(level):
        s = size // 3
        offs = np.array([[s, s], [0, s], [2 * s, s], [s, 0], [s, 2 * s]], dtype=np.int64)
        corners = (corners[:, None, :] + offs[None, :, :]).reshape(-1, 2)
        size = s
    half = size // 2
    arms = np.array([[half, half], [0, half], [size, half], [half, 0], [half, size]], dtype=np.int64)
    pts = corners[:, None, :] + arms[None, :, :]
    keys = pts[..., 0] * (side + 1) + pts[..., 1]
    uniq, inv = np.unique(keys.ravel(), return_inverse=True)
    ids = inv.reshape(-1, 5)
    n = len(uniq)
    e = np.concatenate([ids[:, [0, k]] for k in range(1, 5)])
    e = np.sort(e, axis=1)
    mu = np.bincount(ids.ravel(), minlength=n) * (1.0 / (5.0 * len(ids)))
    coords = np.column_stack(np.divmod(uniq, side + 1)).astype(float) / side
    cond = 3.0 ** level if renormalize else 1.0
    return MetricMeasureGraph(
        n, e, np.full(len(e), cond), np.full(len(e), 3.0 ** -level), mu, coords, "vicsek",
        {"level": level, "renormalize": renormalize},
    )


FAMILIES = {
    "path": build_path,
    "lattice2d": build_lattice2d,
    "gasket": build_gasket,
    "vicsek": build_vicsek,
}


def build_family(family: str, size: int, **options) -> MetricMeasureGraph:
    try:
        builder = FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown family {family!r}; expected one of {sorted(FAMILIES)}") from None
    return builder(size, **options)


# -- doubling diagnostics ----------------------------------------------------

@dataclass
class DoublingReport:
    D: float
    Q_L: float
    Q_U: float
    lambda_perf: float
    radii_grid: np.ndarray
    witness: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "D": self.D, "Q_L": self.Q_L, "Q_U": self.Q_U, "lambda_perf": self.lambda_perf,
            "n_radii": int(len(self.radii_grid)), "witness": self.witness,
        }


def _envelope_slope(s: np.ndarray, y: np.ndarray, upper: bool) -> float:
    """Least-squares slope through the per-abscissa max (or min) of ``y``."""
    key = np.round(s, 9)
    xs, inv = np.unique(key, return_inverse=True)
    env = np.full(len(xs), -np.inf if upper else np.inf)
    if upper:
        np.maximum.at(env, inv, y)
    else:
        np.minimum.at(env, inv, y)
    if len(xs) < 2:
        return float("nan")
    return float(np.polyfit(xs, env, 1)[0])


def _volume_exponents(g: MetricMeasureGraph, xs) -> tuple[float, float]:
    """Lower and upper volume exponents from envelope slopes.

    Radii are the midpoints between consecutive distinct distances, so every
    ball is evaluated away from a jump of ``r -> mu(B(x,r))``.  Pairs
    ``r < R`` with ``R/r >= 2`` and ``R <= diam/4`` enter; when fewer than
    three radii survive the cap is relaxed to ``diam/2``.
    """
    d = g.distinct_distances()
    mids = 0.5 * (d[1:] + d[:-1])
    rm = mids[mids <= g.diam / 4]
    if len(rm) < 3:
        rm = mids[mids <= g.diam / 2]
    if len(rm) < 2:
        return float("nan"), float("nan")
    vm = np.log(g.ball_measure(rm)[xs])
    i, j = np.triu_indices(len(rm), k=1)
    keep = rm[j] >= 2 * rm[i] * (1 - 1e-12)
    if keep.sum() < 2:
        keep[:] = True
    i, j = i[keep], j[keep]
    s = np.broadcast_to(np.log(rm[j] / rm[i]), (len(xs), len(i))).ravel()
    y = (vm[:, j] - vm[:, i]).ravel()
    return _envelope_slope(s, y, upper=False), _envelope_slope(s, y, upper=True)


def doubling_report(g: MetricMeasureGraph, radii=None, centers=None,
                    perf_centers: int = 64) -> DoublingReport:
    """Doubling constant, volume exponents and uniform-perfectness constant.

    ``D`` is the max of ``mu(B(x,2r)) / mu(B(x,r))`` over the sampled pairs.
    The volume exponents come from :func:`_volume_exponents` and do not use
    ``radii``.  ``lambda_perf`` is the min of
    ``diam B(x,r) / r`` over balls with more than one point and ``r < diam``,
    evaluated on at most ``perf_centers`` evenly strided centers.
    """
    if radii is None:
        radii = g.radii_grid()
    radii = np.asarray(radii, dtype=float)
    if len(radii) == 0:
        raise ValueError("radii grid is empty")
    if np.any(radii <= 0) or np.any(radii > g.diam * (1 + 1e-12)):
        raise ValueError("radii must lie in (0, diam]")
    xs = np.arange(g.n) if centers is None else np.asarray(centers)
    v1 = g.ball_measure(radii)[xs]
    v2 = g.ball_measure(2 * radii)[xs]
    ratio = v2 / v1
    k = np.unravel_index(np.argmax(ratio), ratio.shape)
    D = float(ratio[k])

    q_l, q_u = _volume_exponents(g, xs)

    stride = max(1, len(xs) // perf_centers)
    lam = 2.0
    lam_w = None
    perf_r = radii[(radii > g.min_edge) & (radii < g.diam)]
    for x in xs[::stride]:
        order = np.argsort(g.dist[x], kind="stable")
        dx = g.dist[x][order]
        counts = np.searchsorted(dx, perf_r, side="left")
        # running diameter of the growing ball
        run = np.zeros(g.n)
        cur = 0.0
        for t in range(1, g.n):
            cur = max(cur, float(g.dist[order[t], order[:t]].max()))
            run[t] = cur
        for r, c in zip(perf_r, counts):
            if c < 2:
                continue
            val = run[c - 1] / r
            if val < lam:
                lam, lam_w = val, (int(x), float(r))
    return DoublingReport(
        D=D, Q_L=q_l, Q_U=q_u, lambda_perf=float(lam), radii_grid=radii,
        witness={"doubling": [int(xs[k[0]]), float(radii[k[1]])],
                 "perfectness": list(lam_w) if lam_w else None},
    )


# -- graph file format -------------------------------------------------------

def save_graph(g: MetricMeasureGraph, path) -> None:
    """Write ``n m``, then ``u v conductance length`` lines, then ``vertex mu [x y]``."""
    lines = [f"{g.n} {len(g.edges)}"]
    for (u, v), c, l in zip(g.edges, g.conductance, g.length):
        lines.append(f"{u} {v} {float(c)!r} {float(l)!r}")
    for i in range(g.n):
        if g.coords is not None:
            lines.append(f"{i} {float(g.mu[i])!r} {float(g.coords[i, 0])!r} {float(g.coords[i, 1])!r}")
        else:
            lines.append(f"{i} {float(g.mu[i])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_graph(path, family_tag: str = "custom") -> MetricMeasureGraph:
    """Read the text format written by :func:`save_graph`; validation happens on construction."""
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 2:
        raise ValueError("graph file must start with a 'n m' header line")
    n, m = int(rows[0][0]), int(rows[0][1])
    if len(rows) != 1 + m + n:
        raise ValueError(f"expected {1 + m + n} non-empty lines, found {len(rows)}")
    er = rows[1:1 + m]
    vr = rows[1 + m:]
    edges = np.array([[int(r[0]), int(r[1])] for r in er], dtype=np.int64).reshape(-1, 2)
    cond = np.array([float(r[2]) for r in er])
    length = np.array([float(r[3]) for r in er])
    mu = np.empty(n)
    coords = np.zeros((n, 2)) if all(len(r) >= 4 for r in vr) else None
    for r in vr:
        i = int(r[0])
        mu[i] = float(r[1])
        if coords is not None:
            coords[i] = float(r[2]), float(r[3])
    return MetricMeasureGraph(n, edges, cond, length, mu, coords, family_tag)
