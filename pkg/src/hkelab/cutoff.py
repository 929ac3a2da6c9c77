"""Cutoff functions and their regularity.

Two constructions: the equilibrium potential between two balls (the capacity
minimizer) and the truncated resolvent

    xi = (h / (K Psi(R0)) - 1)^+ ^ 1,    h = G_lambda phi,  lambda = 1/Psi(R0),

where ``phi`` is a cutoff for ``B(x0, kappa R0/16) ⊆ B(x0, kappa R0/8)``.
The regularity side measures Hölder envelopes and sharp maximal functions.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .energy import EnergyForm, Generator, assemble_generator, p_energy_measure
from .space import Ball, MetricMeasureGraph, ball
from .spectral import harmonic_extension, resolvent_solve

CUTOFF_TOL = 1e-12


@dataclass
class CutoffFunction:
    """``values`` is 1 on ``inner``, 0 off ``outer`` and lies in [0, 1]."""

    values: np.ndarray
    inner: Ball
    outer: Ball
    construction_tag: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        violation = cutoff_violation(self.values, self.inner, self.outer)
        if violation > CUTOFF_TOL:
            raise ValueError(f"cutoff invariants violated by {violation:.3e}")


def cutoff_violation(values, inner: Ball, outer: Ball) -> float:
    """Largest deviation from the cutoff invariants (0 when they hold)."""
    v = np.asarray(values, dtype=float)
    off = np.ones(len(v), dtype=bool)
    off[outer.members] = False
    parts = [np.max(-v, initial=0.0), np.max(v - 1.0, initial=0.0)]
    if len(inner.members):
        parts.append(np.max(np.abs(v[inner.members] - 1.0)))
    if off.any():
        parts.append(np.max(np.abs(v[off])))
    return float(max(parts))


def _generator(g: MetricMeasureGraph, gen: Optional[Generator]) -> Generator:
    return gen if gen is not None else assemble_generator(EnergyForm(g))


def harmonic_cutoff(g: MetricMeasureGraph, inner: Ball, outer: Ball,
                    gen: Optional[Generator] = None) -> CutoffFunction:
    """Equilibrium potential of ``inner`` relative to ``outer``.

    The energy of the result is the capacity of the pair and is stored in
    ``params["energy"]``.
    """
    inner_mask = inner.mask(g.n)
    outer_mask = outer.mask(g.n)
    if np.any(inner_mask & ~outer_mask):
        raise ValueError("inner ball is not contained in the outer ball")
    if np.array_equal(inner_mask, outer_mask):
        raise ValueError("inner and outer balls coincide; the cutoff is degenerate")
    if outer_mask.all():
        raise ValueError("outer ball is the whole space; no Dirichlet boundary")
    gen = _generator(g, gen)
    fixed = inner_mask | ~outer_mask
    idx = np.flatnonzero(fixed)
    u = harmonic_extension(gen, (idx, inner_mask[idx].astype(float)))
    # the maximum principle holds exactly; only round-off leaves [0, 1]
    u = np.clip(u, 0.0, 1.0)
    cap = float(u @ (gen.laplacian @ u))
    return CutoffFunction(u, inner, outer, "harmonic", {"energy": cap})


@dataclass
class ResolventCutoff(CutoffFunction):
    """Resolvent cutoff together with the potential ``h`` it was cut from."""

    h: np.ndarray = None
    phi: np.ndarray = None


def resolvent_cutoff(g: MetricMeasureGraph, x0: int, R0: float, psi: Callable,
                     kappa: float = 0.5, gen: Optional[Generator] = None,
                     phi=None, method: str = "cg") -> ResolventCutoff:
    """Truncated-resolvent cutoff around ``x0`` at scale ``R0``.

    ``K`` is the largest constant with ``h >= 2 K Psi(R0)`` on
    ``B(x0, kappa R0)``, so ``xi = 1`` there.  ``sigma`` is the smallest
    ratio with ``{h > K Psi(R0)} ⊆ B(x0, sigma R0)``; it is measured, and the
    flag ``localized`` is false when the support of ``xi`` is all of ``X``.

    If the two balls defining ``phi`` coincide (tiny ``kappa R0``), the
    indicator of the smaller ball is used, which is a valid cutoff for the
    same pair.  An explicit ``phi`` overrides the construction.
    """
    if not 0 < kappa <= 1:
        raise ValueError("kappa must lie in (0, 1]")
    if not R0 > 0:
        raise ValueError("R0 must be positive")
    gen = _generator(g, gen)
    d0 = g.distances_from(x0)
    psi_r = float(psi(R0))
    phi_tag = "explicit"
    if phi is None:
        b_in = ball(g, x0, kappa * R0 / 16)
        b_out = ball(g, x0, kappa * R0 / 8)
        if len(b_in) == len(b_out) or len(b_out) == g.n:
            phi = b_in.mask(g.n).astype(float)
            phi_tag = "indicator"
        else:
            phi = harmonic_cutoff(g, b_in, b_out, gen).values
            phi_tag = "harmonic"
    phi = np.asarray(phi, dtype=float)
    h = resolvent_solve(gen, 1.0 / psi_r, phi, method=method)
    inner = ball(g, x0, kappa * R0)
    if not np.all(h[inner.members] > 0):
        raise AssertionError("resolvent of a nonnegative nonzero cutoff must be positive")
    K = float(np.min(h[inner.members]) / (2.0 * psi_r))
    xi = np.minimum(np.maximum(h / (K * psi_r) - 1.0, 0.0), 1.0)
    # min over the inner ball gives h/(K Psi) >= 2; pin the value against one rounding step
    xi[inner.members] = 1.0
    support = h > K * psi_r
    reach = float(d0[support].max())
    sigma = reach / R0
    localized = not support.all()
    outer = ball(g, x0, reach * (1 + 1e-9) + 1e-300) if localized else Ball(x0, np.inf, np.arange(g.n))
    params = {"lambda": 1.0 / psi_r, "K": K, "sigma": sigma, "kappa": kappa, "R0": R0,
              "x0": int(x0), "localized": localized, "phi": phi_tag,
              "sigma_exceeds_diam": sigma > g.diam / R0}
    return ResolventCutoff(xi, inner, outer, "resolvent", params, h=h, phi=phi)


# -- Hölder envelope -------------------------------------------------------------

@dataclass
class HolderReport:
    fitted_exponent: float
    fitted_constant: float
    scale: float
    fit_residual: float
    grid: np.ndarray = field(repr=False, default=None)
    envelope: np.ndarray = field(repr=False, default=None)
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "exponent": self.fitted_exponent, "constant": self.fitted_constant,
            "scale": self.scale, "residual": self.fit_residual, "flags": list(self.flags),
            "grid": [] if self.grid is None else self.grid.tolist(),
            "envelope": [] if self.envelope is None else self.envelope.tolist(),
        }


def _pair_envelope(g: MetricMeasureGraph, f: np.ndarray, R: float):
    iu = np.triu_indices(g.n, k=1)
    d = g.dist[iu]
    keep = d <= R * (1 + 1e-12)
    d = d[keep]
    diff = np.abs(f[iu[0][keep]] - f[iu[1][keep]])
    key = np.round(d, 12)
    s, inv = np.unique(key, return_inverse=True)
    env = np.zeros(len(s))
    np.maximum.at(env, inv, diff)
    return d, diff, s, env


def holder_report(g: MetricMeasureGraph, f, R: float, jump_threshold: float = 0.1,
                  window: float = 0.5) -> HolderReport:
    """Fit ``|f(y) - f(z)| <= C (d(y,z)/R)^alpha``.

    ``alpha`` is the least-squares slope of the log envelope against
    ``log(s/R)`` over distances ``s <= window R``, where the estimate is
    local; beyond that the envelope of a cutoff saturates at its full drop.
    ``C`` is the smallest constant valid for every pair with ``d <= R``.
    Fits on fewer than three distinct distances are flagged ``under_resolved``.
    """
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)):
        raise ValueError("f must be bounded")
    if not 0 < window <= 1:
        raise ValueError("window must lie in (0, 1]")
    d, diff, s, env = _pair_envelope(g, f, R)
    if not np.any(env > 0):
        return HolderReport(np.inf, 0.0, R, 0.0, s, env, ["constant"])
    pos = (env > 0) & (s <= window * R * (1 + 1e-12))
    flags = []
    if pos.sum() < 3:
        flags.append("under_resolved")
    if pos.sum() >= 2:
        x, y = np.log(s[pos] / R), np.log(env[pos])
        alpha, b = np.polyfit(x, y, 1)
        pred = alpha * x + b
        ss = np.sum((y - y.mean()) ** 2)
        r2 = 1.0 - np.sum((y - pred) ** 2) / ss if ss > 0 else 1.0
    else:
        alpha, r2 = 0.0, 0.0
        flags.append("single_scale")
    alpha = max(float(alpha), 0.0)
    nz = diff > 0
    C = float(np.max(diff[nz] / (d[nz] / R) ** alpha))
    if alpha < jump_threshold:
        flags.append("jump")
    return HolderReport(alpha, C, R, float(r2), s, env, flags)


# -- maximal functions ------------------------------------------------------------

@dataclass
class MaximalFunction:
    values: np.ndarray
    params: dict


def _prefix_oscillation(fs: np.ndarray, ms: np.ndarray, p: float) -> np.ndarray:
    """``mean_{B_k} |f - f_{B_k}|^p`` for every prefix ``B_k`` of a sorted row."""
    cm = np.cumsum(ms)
    mean = np.cumsum(ms * fs) / cm
    if p == 2:
        # mean of the squared deviation without O(n^2) work
        var = np.cumsum(ms * fs * fs) / cm - mean ** 2
        return np.maximum(var, 0.0)
    dev = np.abs(fs[None, :] - mean[:, None]) ** p * ms[None, :]
    tri = np.cumsum(dev, axis=1)
    return np.diagonal(tri) / cm


def sharp_maximal(g: MetricMeasureGraph, f, p: float, delta: float, R: float) -> MaximalFunction:
    """``M(x) = sup_{x in B(y,r), r <= R} r^{-delta} mean_B |f - f_B|^p``.

    The balls ``B(y, r)`` with ``d_k < r <= d_{k+1}`` share members, so the
    sup over that range is the limit ``r -> d_k^+``, giving weight
    ``d_k^{-delta}``.  Only members with ``d_k < R`` qualify.
    """
    if p < 1 or delta <= 0 or R <= 0:
        raise ValueError("need p >= 1, delta > 0 and R > 0")
    f = np.asarray(f, dtype=float)
    order, sd = g._sorted_rows
    M = np.zeros(g.n)
    for y in range(g.n):
        o = order[y]
        dk = sd[y]
        osc = _prefix_oscillation(f[o], g.mu[o], p)
        # a prefix is a ball only at the last vertex of each distance tie
        last = np.r_[dk[1:] != dk[:-1], True]
        # the ball of members with d <= d_k corresponds to r slightly above d_k
        ok = last & (dk < R) & (dk > 0)
        val = np.where(ok, osc * np.where(dk > 0, dk, 1.0) ** (-delta), 0.0)
        # vertex at position j lies in every ball with index >= j
        suffix = np.maximum.accumulate(val[::-1])[::-1]
        M[o] = np.maximum(M[o], suffix)
    return MaximalFunction(M, {"p": p, "delta": delta, "R": R})


def energy_maximal(g: MetricMeasureGraph, f, p: float, psi: Callable, theta: Callable,
                   R: float) -> MaximalFunction:
    """``M_E(x) = sup (Theta^p mu(B) / Psi)^{-1} Gamma_p<f>(B)`` over balls with ``r < R/5``.

    Radii run over the distinct distances and midpoints below ``R/5``.
    """
    form = EnergyForm(g, p)
    gam = p_energy_measure(form, f).weights
    radii = g.radii_grid(r_max=R / 5)
    radii = radii[radii < R / 5]
    if len(radii) == 0:
        return MaximalFunction(np.zeros(g.n), {"p": p, "R": R})
    G = g.ball_sums(gam, radii)
    V = g.ball_measure(radii)
    ratio = G / (np.asarray([theta(r) for r in radii]) ** p * V / np.asarray([psi(r) for r in radii]))
    order, sd = g._sorted_rows
    M = np.zeros(g.n)
    for y in range(g.n):
        counts = np.searchsorted(sd[y], radii, side="left")
        val = np.zeros(g.n)
        np.maximum.at(val, counts - 1, ratio[y])
        suffix = np.maximum.accumulate(val[::-1])[::-1]
        M[order[y]] = np.maximum(M[order[y]], suffix)
    return MaximalFunction(M, {"p": p, "R": R})


@dataclass
class TwoPointReport:
    constant: float
    holds: bool
    pairs: int
    witness: Optional[tuple]


def two_point_check(g: MetricMeasureGraph, f, M: MaximalFunction) -> TwoPointReport:
    """Smallest ``C`` with ``|f(x)-f(y)| <= C d^{delta/p} (M(x)^{1/p} + M(y)^{1/p})``.

    All pairs with ``0 < d(x, y) < R/4`` are swept.  ``holds`` is false only
    if some pair has a difference but a vanishing right-hand side.
    """
    f = np.asarray(f, dtype=float)
    p, delta, R = M.params["p"], M.params["delta"], M.params["R"]
    iu = np.triu_indices(g.n, k=1)
    d = g.dist[iu]
    keep = d < R / 4
    x, y, d = iu[0][keep], iu[1][keep], d[keep]
    lhs = np.abs(f[x] - f[y])
    mp = M.values ** (1.0 / p)
    rhs = d ** (delta / p) * (mp[x] + mp[y])
    bad = (lhs > 0) & (rhs == 0)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        return TwoPointReport(np.inf, False, int(keep.sum()), (int(x[i]), int(y[i])))
    pos = lhs > 0
    if not pos.any():
        return TwoPointReport(0.0, True, int(keep.sum()), None)
    ratio = np.where(pos, lhs / np.where(rhs > 0, rhs, 1.0), 0.0)
    i = int(np.argmax(ratio))
    return TwoPointReport(float(ratio[i]), True, int(keep.sum()), (int(x[i]), int(y[i])))
