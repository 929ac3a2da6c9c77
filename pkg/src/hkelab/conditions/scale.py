"""Scale functions ``Psi(x, r)`` and the associated ``Phi``."""
from __future__ import annotations

from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy import optimize


class ScaleTableError(ValueError):
    """A tabulated scale function is malformed; ``line`` is 1-based."""

    def __init__(self, msg: str, line: Optional[int] = None):
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.line = line


class ScaleFunction:
    """Increasing positive ``r -> Psi(r)``, optionally depending on the centre.

    Use the constructors :meth:`power`, :meth:`table`, :meth:`from_file`,
    :meth:`constant` and :meth:`from_callable`.  Calling ``psi(r, x)``
    broadcasts over ``r``; ``x`` is ignored by radial kinds.

    Attributes
    ----------
    beta_L, beta_U : float
        Certified exponents: ``(R/r)^beta_L <= Psi(R)/Psi(r) <= (R/r)^beta_U``
        holds with constant 1 on the stored data.
    """

    def __init__(self, kind: str, beta_L: float, beta_U: float, *, beta=None, prefactor=1.0,
                 r=None, values=None, func=None, radial=True, label=None):
        self.kind = kind
        self.beta_L = float(beta_L)
        self.beta_U = float(beta_U)
        self.beta = beta
        self.prefactor = float(prefactor)
        self._r = r
        self._v = values
        self._func = func
        self.radial = radial
        self.label = label or kind

    # -- constructors ------------------------------------------------------

    @classmethod
    def power(cls, beta: float, prefactor: float = 1.0) -> "ScaleFunction":
        if beta <= 0 or prefactor <= 0:
            raise ValueError("power scale function needs beta > 0 and prefactor > 0")
        return cls("power", beta, beta, beta=float(beta), prefactor=prefactor,
                   label=f"r^{beta:g}")

    @classmethod
    def constant(cls, value: float = 1.0) -> "ScaleFunction":
        """``Theta == value``; exponents are 0, so this is only used as a weight."""
        if value <= 0:
            raise ValueError("constant must be positive")
        return cls("constant", 0.0, 0.0, prefactor=value, label=f"const {value:g}")

    @classmethod
    def table(cls, r, values) -> "ScaleFunction":
        r = np.asarray(r, dtype=float)
        v = np.asarray(values, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or len(r) < 2:
            raise ScaleTableError("table needs at least two (r, Psi) rows")
        for i in range(len(r)):
            if r[i] <= 0 or v[i] <= 0:
                raise ScaleTableError("radius and value must be positive", i + 1)
            if i and (r[i] <= r[i - 1] or v[i] <= v[i - 1]):
                raise ScaleTableError("table is not strictly increasing", i + 1)
        slopes = np.diff(np.log(v)) / np.diff(np.log(r))
        return cls("tabulated", slopes.min(), slopes.max(), r=r, values=v, label="table")

    @classmethod
    def from_file(cls, path) -> "ScaleFunction":
        """Read ``r psi`` rows; blank lines and ``#`` comments are skipped."""
        rs, vs = [], []
        last_line = None
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) != 2:
                raise ScaleTableError("expected two columns 'r psi'", lineno)
            try:
                r, v = float(parts[0]), float(parts[1])
            except ValueError:
                raise ScaleTableError("non-numeric entry", lineno) from None
            if r <= 0 or v <= 0:
                raise ScaleTableError("radius and value must be positive", lineno)
            if rs and (r <= rs[-1] or v <= vs[-1]):
                raise ScaleTableError("table is not strictly increasing", lineno)
            rs.append(r)
            vs.append(v)
            last_line = lineno
        if len(rs) < 2:
            raise ScaleTableError("table needs at least two rows", last_line)
        return cls.table(rs, vs)

    @classmethod
    def from_callable(cls, func: Callable, beta_L: float, beta_U: float,
                      radial: bool = False, label: str = "callable") -> "ScaleFunction":
        """Wrap ``func(r, x)``; the exponents are the caller's claim."""
        return cls("callable", beta_L, beta_U, func=func, radial=radial, label=label)

    # -- evaluation ----------------------------------------------------------

    def __call__(self, r, x=None):
        r = np.asarray(r, dtype=float)
        if self.kind == "power":
            return self.prefactor * r ** self.beta
        if self.kind == "constant":
            return np.full(r.shape, self.prefactor) if r.ndim else self.prefactor
        if self.kind == "tabulated":
            lr, lv = np.log(self._r), np.log(self._v)
            s0 = (lv[1] - lv[0]) / (lr[1] - lr[0])
            s1 = (lv[-1] - lv[-2]) / (lr[-1] - lr[-2])
            x_ = np.log(r)
            out = np.interp(x_, lr, lv)
            out = np.where(x_ < lr[0], lv[0] + s0 * (x_ - lr[0]), out)
            out = np.where(x_ > lr[-1], lv[-1] + s1 * (x_ - lr[-1]), out)
            return np.exp(out)
        if not self.radial and x is None:
            raise ValueError(f"scale function {self.label!r} depends on the centre; pass x")
        return np.asarray(self._func(r, x), dtype=float)

    def inverse(self, t):
        """``Psi^{-1}(t)`` for radial kinds."""
        t = np.asarray(t, dtype=float)
        if self.kind == "power":
            return (t / self.prefactor) ** (1.0 / self.beta)
        if self.kind == "tabulated":
            lr, lv = np.log(self._r), np.log(self._v)
            s0 = (lv[1] - lv[0]) / (lr[1] - lr[0])
            s1 = (lv[-1] - lv[-2]) / (lr[-1] - lr[-2])
            y = np.log(t)
            out = np.interp(y, lv, lr)
            out = np.where(y < lv[0], lr[0] + (y - lv[0]) / s0, out)
            out = np.where(y > lv[-1], lr[-1] + (y - lv[-1]) / s1, out)
            return np.exp(out)
        raise ValueError(f"no inverse for scale function kind {self.kind!r}")

    def check_doubling(self, radii, C: float = 1.0, x=None) -> bool:
        """Check ``C^-1 (R/r)^beta_L <= Psi(R)/Psi(r) <= C (R/r)^beta_U`` on a grid."""
        radii = np.sort(np.asarray(radii, dtype=float))
        v = np.log(self(radii, x))
        lr = np.log(radii)
        i, j = np.triu_indices(len(radii), k=1)
        lhs = v[j] - v[i]
        s = lr[j] - lr[i]
        tol = 1e-12 * (1 + np.abs(lhs))
        return bool(np.all(lhs >= self.beta_L * s - np.log(C) - tol)
                    and np.all(lhs <= self.beta_U * s + np.log(C) + tol))

    def describe(self) -> dict:
        d = {"kind": self.kind, "beta_L": self.beta_L, "beta_U": self.beta_U, "label": self.label}
        if self.kind == "power":
            d.update(beta=self.beta, prefactor=self.prefactor)
        if self.kind == "tabulated":
            d.update(r=self._r.tolist(), values=self._v.tolist())
        return d

    def __repr__(self):
        return f"ScaleFunction({self.label}, beta_L={self.beta_L:g}, beta_U={self.beta_U:g})"


def volume_scale(g, beta_L: Optional[float] = None, beta_U: Optional[float] = None) -> ScaleFunction:
    """``Psi(x, r) = mu(B(x, r))``, the conformal case."""
    def f(r, x):
        r = np.asarray(r, dtype=float)
        return g.ball_sums(g.mu, np.atleast_1d(r))[x].reshape(r.shape)

    if beta_L is None or beta_U is None:
        from ..space import doubling_report
        rep = doubling_report(g)
        beta_L, beta_U = rep.Q_L, rep.Q_U
    return ScaleFunction.from_callable(f, beta_L, beta_U, radial=False, label="volume")


# -- Phi(s) = sup_r (s/r - 1/Psi(r)) -----------------------------------------------

def phi_power(s, beta: float):
    """Closed form for ``Psi = r^beta``: ``(beta - 1) (s/beta)^(beta/(beta-1))``."""
    if beta <= 1:
        raise ValueError("Phi is finite only for beta > 1")
    s = np.asarray(s, dtype=float)
    return (beta - 1.0) * np.power(np.maximum(s, 0.0) / beta, beta / (beta - 1.0))


def phi_numeric(s: float, psi: Callable) -> float:
    """Direct maximization of ``s/r - 1/Psi(r)`` over ``log r``."""
    if s <= 0:
        return 0.0

    def neg(u):
        r = np.exp(u)
        return -(s / r - 1.0 / float(psi(r)))

    # coarse scan, then bounded refinement around the best grid point
    grid = np.linspace(-40.0, 40.0, 801)
    vals = np.array([neg(u) for u in grid])
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = optimize.minimize_scalar(neg, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-12})
    return float(max(-res.fun, -vals[k], 0.0))


def phi_numeric_batch(s, psi: Callable, chunk: int = 2048) -> np.ndarray:
    """:func:`phi_numeric` for many ``s``: grid scan, then golden-section refinement in ``log r``."""
    s = np.asarray(s, dtype=float)
    flat = s.ravel()
    out = np.zeros_like(flat)
    grid = np.linspace(-40.0, 40.0, 801)
    inv_psi = 1.0 / np.asarray(psi(np.exp(grid)), dtype=float)
    rinv = np.exp(-grid)

    def val(u, sv):
        return sv / np.exp(u) - 1.0 / np.asarray(psi(np.exp(u)), dtype=float)

    gr = (np.sqrt(5.0) - 1.0) / 2.0
    for a in range(0, len(flat), chunk):
        sv = flat[a:a + chunk]
        pos = sv > 0
        scan = sv[:, None] * rinv[None, :] - inv_psi[None, :]
        k = np.argmax(scan, axis=1)
        best = scan[np.arange(len(sv)), k]
        lo, hi = grid[np.maximum(k - 1, 0)], grid[np.minimum(k + 1, len(grid) - 1)]
        c, d = hi - gr * (hi - lo), lo + gr * (hi - lo)
        fc, fd = val(c, sv), val(d, sv)
        for _ in range(80):
            left = fc > fd
            hi = np.where(left, d, hi)
            lo = np.where(left, lo, c)
            c, d = hi - gr * (hi - lo), lo + gr * (hi - lo)
            fc, fd = val(c, sv), val(d, sv)
        out[a:a + chunk] = np.where(pos, np.maximum(np.maximum(best, np.maximum(fc, fd)), 0.0), 0.0)
    return out.reshape(s.shape)


def tail_variable(d, t, psi: ScaleFunction):
    """``t Phi(d/t)``; for power ``Psi`` this is a fixed multiple of ``(d^beta/t)^(1/(beta-1))``."""
    d = np.asarray(d, dtype=float)
    t = np.asarray(t, dtype=float)
    if psi.kind == "power" and psi.prefactor == 1.0:
        return t * phi_power(d / t, psi.beta)
    return t * phi_numeric_batch(d / t, psi)
