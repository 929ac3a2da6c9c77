"""Walk-dimension fits and sub-Gaussian heat kernel checks."""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..space import MetricMeasureGraph
from ..spectral import Spectrum, heat_kernel_diagonal, heat_kernel_matrix
from .report import ConditionReport
from .scale import ScaleFunction, tail_variable

# largest accepted ratio C/c of the near-diagonal band
HKE_BAND_MAX = 50.0
# off-diagonal samples with (d^beta/t)^(1/(beta-1)) above this are left out of the tail fit
TAIL_S_MAX = 8.0


def diffusive_radii(g: MetricMeasureGraph, allow_point: bool = False) -> tuple[float, float]:
    """``[2 min edge, diam/4]``; raises when the graph is too small for it.

    With ``allow_point`` a window that has shrunk to one radius is accepted.
    """
    lo, hi = 2.0 * g.min_edge, g.diam / 4.0
    if lo > hi * (1 + 1e-12) or (not allow_point and not hi > lo * (1 + 1e-12)):
        raise ValueError(
            f"diffusive window is empty: diam/4 = {hi:g} <= 2 min edge = {lo:g}; "
            f"use a graph whose diameter exceeds 8 edge lengths"
        )
    return lo, hi


def volume_radius(g: MetricMeasureGraph, x: int, volumes) -> np.ndarray:
    """Radius ``r`` with ``mu(B(x, r)) = volume``, by log-log interpolation.

    The knots are ``((d_k + d_{k+1})/2, mu(closed ball of radius d_k))`` over
    the distinct distances ``d_k`` from ``x``; volumes outside the knot range
    give ``nan``.
    """
    dx = g.distances_from(x)
    order = np.argsort(dx, kind="stable")
    ds = dx[order]
    cum = np.cumsum(g.mu[order])
    key = np.round(ds, 12)
    dk = np.unique(key)
    # closed-ball volume at each distinct distance: cumulative mass at its last occurrence
    idx = np.searchsorted(key, dk, side="right") - 1
    vol = cum[idx]
    if len(dk) < 2:
        return np.full(np.shape(volumes), np.nan)
    mids = 0.5 * (dk[:-1] + dk[1:])
    lv = np.log(vol[:-1])
    return np.exp(np.interp(np.log(volumes), lv, np.log(mids), left=np.nan, right=np.nan))


def _time_grid(spec: Spectrum, n_times: int) -> np.ndarray:
    lam = spec.eigenvalues
    pos = lam[lam > 1e-12 * lam[-1]]
    if len(pos) == 0:
        raise ValueError("spectrum has no positive eigenvalue")
    return np.geomspace(0.1 / lam[-1], 10.0 / pos[0], n_times)


def fit_walk_dimension(g: MetricMeasureGraph, spec: Spectrum, centers=None, n_times: int = 200,
                       scan=np.linspace(1.5, 3.5, 201)) -> ConditionReport:
    """Fit ``beta`` from the on-diagonal heat kernel.

    For each ``t`` and centre ``x`` the radius ``r(t, x)`` solves
    ``mu(B(x, r)) = 1/p_t(x, x)``.  Samples with ``r`` in the diffusive range
    ``[2 min edge, diam/4]`` are kept, ``log r`` is averaged over centres at
    each ``t`` and regressed on ``log t``; ``beta`` is the inverse slope and
    the intercept gives ``Psi(r) = A r^beta``.  The time grid is built from
    the spectrum, so rescaling time leaves ``beta`` unchanged.

    The report also carries the band ``[c, C]`` of
    ``p_t(x,x) mu(B(x, Psi^{-1}(t)))`` over the window and, for reference,
    the ``beta`` that minimizes the spread of ``log p_t(x,x) mu(B(x, (t/A)^{1/beta}))``.
    """
    if not spec.complete:
        raise ValueError("walk-dimension fit needs the complete spectrum")
    lo, hi = diffusive_radii(g)
    xs = np.arange(g.n) if centers is None else np.asarray(centers)
    ts = _time_grid(spec, n_times)
    P = heat_kernel_diagonal(spec, ts)[:, xs]
    rh = np.stack([volume_radius(g, int(x), 1.0 / P[:, a]) for a, x in enumerate(xs)], axis=1)
    ok = np.isfinite(rh) & (rh >= lo) & (rh <= hi)
    keep_t = ok.any(axis=1)
    if keep_t.sum() < 3:
        raise ValueError("diffusive window holds fewer than three times; use a larger graph")
    lr = np.where(ok, np.log(np.where(ok, rh, 1.0)), 0.0)
    mean_lr = lr.sum(axis=1)[keep_t] / ok.sum(axis=1)[keep_t]
    lt = np.log(ts[keep_t])
    slope, icpt = np.polyfit(lt, mean_lr, 1)
    beta = 1.0 / slope
    log_a = -icpt / slope
    res = mean_lr - (slope * lt + icpt)
    A = float(np.exp(log_a))
    t_lo, t_hi = A * lo ** beta, A * hi ** beta
    tw = np.geomspace(t_lo, t_hi, 32)
    Pw = heat_kernel_diagonal(spec, tw)[:, xs]
    rw = (tw / A) ** (1.0 / beta)
    band = Pw * g.ball_measure(rw)[xs].T
    i, j = np.unravel_index(int(np.argmin(band)), band.shape)
    c_lo, c_hi = float(band.min()), float(band.max())
    spreads = []
    for b in scan:
        rb = (tw / A) ** (1.0 / b)
        val = np.log(Pw * g.ball_measure(rb)[xs].T)
        spreads.append(float(np.std(val)))
    b_scan = float(scan[int(np.argmin(spreads))])
    rows = np.column_stack([np.tile(xs, len(tw)), np.repeat(rw, len(xs)), Pw.ravel(),
                            1.0 / g.ball_measure(rw)[xs].T.ravel(), band.ravel()])
    return ConditionReport(
        "HKE", {"beta": float(beta), "prefactor": A, "c": c_lo, "C": c_hi,
                "t_min": float(t_lo), "t_max": float(t_hi), "beta_scan": b_scan},
        {"center": int(xs[j]), "time": float(tw[i])}, "fitted",
        residual=float(np.sqrt(np.mean(res ** 2))), mode="walk_dimension", rows=rows,
        extra={"r_window": [lo, hi], "n_times_used": int(keep_t.sum()),
               "log_t": lt, "mean_log_r": mean_lr},
    )


def check_hke(g: MetricMeasureGraph, spec: Spectrum, beta: float, kappa: float = 1.0,
              psi: Optional[ScaleFunction] = None, centers=None, n_times: int = 16,
              band_max: float = HKE_BAND_MAX, s_max: float = TAIL_S_MAX) -> ConditionReport:
    """Near-diagonal band and tail decay of ``p_t(x, y) mu(B(x, Psi^{-1}(t)))``.

    ``Psi = r^beta`` unless given; times run over ``[Psi(2 min edge), Psi(diam/4)]``.
    Near-diagonal: ``c`` is the min over ``d(x, y) <= kappa Psi^{-1}(t)``, ``C``
    the max on the diagonal; pass when ``c > 0`` and ``C/c <= band_max``.
    Tail: least-squares slope of ``log(p V)`` against
    ``s = (d^beta/t)^{1/(beta-1)}`` for off-diagonal pairs with ``s <= s_max``,
    plus the same slope in the ``t Phi(d/t)`` normalization.  The tail must
    have a negative slope for a pass.
    """
    if beta <= 1:
        raise ValueError("beta must exceed 1")
    if not spec.complete:
        raise ValueError("heat kernel check needs the complete spectrum")
    psi = psi if psi is not None else ScaleFunction.power(beta)
    lo, hi = diffusive_radii(g, allow_point=True)
    hi = max(hi, lo)
    xs = np.arange(g.n) if centers is None else np.asarray(centers)
    ts = np.geomspace(float(psi(lo)), float(psi(hi)), n_times)
    D = g.dist[xs]
    c_lo, c_hi = np.inf, 0.0
    wit = {}
    S, Y, Phi = [], [], []
    rows = []
    for t in ts:
        r = float(psi.inverse(t))
        V = g.ball_measure([r])[xs, 0]
        pV = heat_kernel_matrix(spec, t)[xs] * V[:, None]
        near = D <= kappa * r
        k = np.unravel_index(int(np.argmin(np.where(near, pV, np.inf))), pV.shape)
        if pV[k] < c_lo:
            c_lo, wit = float(pV[k]), {"x": int(xs[k[0]]), "y": int(k[1]), "time": float(t)}
        diag = pV[np.arange(len(xs)), xs]
        c_hi = max(c_hi, float(diag.max()))
        s = (D ** beta / t) ** (1.0 / (beta - 1.0))
        m = (D > 0) & (s <= s_max) & (pV > 0)
        S.append(s[m])
        Y.append(np.log(pV[m]))
        Phi.append(tail_variable(D[m], t, psi))
        rows.append(np.column_stack([xs, np.full(len(xs), r), diag / V, 1.0 / V, diag]))
    S, Y, Phi = np.concatenate(S), np.concatenate(Y), np.concatenate(Phi)
    if len(S) > 1:
        slope, icpt = np.polyfit(S, Y, 1)
        slope_phi = float(np.polyfit(Phi, Y, 1)[0])
        C_tail = float(np.max(np.exp(Y - slope * S)))
    else:
        slope, slope_phi, C_tail = np.nan, np.nan, np.nan
    band = c_hi / c_lo if c_lo > 0 else np.inf
    near_ok = c_lo > 0 and band <= band_max
    tail_ok = bool(np.isfinite(slope) and slope < 0 and np.isfinite(C_tail))
    flags = [] if near_ok else ["near-diagonal band failed"]
    if hi <= lo:
        flags.append("window is a single radius")
    if not tail_ok:
        flags.append("tail fit failed")
    return ConditionReport(
        "HKE", {"beta": beta, "kappa": kappa, "c": c_lo, "C": c_hi, "band": band,
                "tail_slope": float(slope), "tail_slope_phi": slope_phi, "C_tail": C_tail,
                "t_min": float(ts[0]), "t_max": float(ts[-1])},
        wit, "pass" if near_ok and tail_ok else "fail", mode="heat_kernel",
        rows=np.concatenate(rows), flags=flags,
        extra={"near_diagonal_pass": bool(near_ok), "tail_pass": tail_ok},
    )
