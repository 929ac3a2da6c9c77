"""Reports, measures and the ball sweeps shared by all checkers."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..energy import EnergyMeasure
from ..space import MetricMeasureGraph

EXHAUSTIVE_LIMIT = 100_000
RADII_PER_DECADE = 16


def _clean(v):
    """JSON-safe copy; non-finite floats become strings so output stays strict."""
    if isinstance(v, dict):
        return {str(k): _clean(v[k]) for k in sorted(v, key=str)}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return [_clean(x) for x in v.tolist()]
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isfinite(f):
            return f
        return "nan" if math.isnan(f) else ("inf" if f > 0 else "-inf")
    return v


@dataclass
class ConditionReport:
    """Fitted constants, verdict and the worst-case witness of one check.

    ``rows`` keeps the raw sweep (``y, r, lhs, rhs, ratio``) so every constant
    can be recomputed from the CSV alone.
    """

    condition_tag: str
    constants: dict
    worst_witness: dict
    verdict: str
    residual: Optional[float] = None
    mode: str = "exhaustive"
    flags: list = field(default_factory=list)
    rows: Optional[np.ndarray] = field(default=None, repr=False)
    extra: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict in ("pass", "fitted")

    def to_dict(self) -> dict:
        return _clean({
            "condition": self.condition_tag, "constants": self.constants,
            "witness": self.worst_witness, "verdict": self.verdict,
            "residual": self.residual, "mode": self.mode, "flags": list(self.flags),
            "extra": self.extra,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def write_csv(self, path) -> Path:
        header = "y,r,lhs,rhs,ratio"
        rows = np.zeros((0, 5)) if self.rows is None else np.asarray(self.rows, dtype=float)
        lines = [header] + [f"{int(a)},{b!r},{c!r},{d!r},{e!r}" for a, b, c, d, e in rows.tolist()]
        Path(path).write_text("\n".join(lines) + "\n")
        return Path(path)


@dataclass(frozen=True)
class BorelMeasure:
    """Nonnegative vertex weights."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("measure weights must be finite and nonnegative")
        object.__setattr__(self, "weights", w)

    @classmethod
    def dirac(cls, n: int, x: int) -> "BorelMeasure":
        w = np.zeros(n)
        w[x] = 1.0
        return cls(w)

    @classmethod
    def zero(cls, n: int) -> "BorelMeasure":
        return cls(np.zeros(n))

    @classmethod
    def reference(cls, g: MetricMeasureGraph) -> "BorelMeasure":
        return cls(g.mu.copy())

    @classmethod
    def energy(cls, em: EnergyMeasure) -> "BorelMeasure":
        return cls(np.asarray(em.weights, dtype=float).copy())

    def scaled(self, a: float) -> "BorelMeasure":
        return BorelMeasure(self.weights * a)

    @property
    def total(self) -> float:
        return float(self.weights.sum())


def ball_sweep(g: MetricMeasureGraph, r_max: Optional[float] = None, r_min: float = 0.0,
               centers=None, limit: int = EXHAUSTIVE_LIMIT):
    """Centres and radii for a sup over balls.

    Exhaustive (distinct distances and midpoints) when the ball count is at
    most ``limit``, otherwise a geometric grid with 16 radii per decade.
    Returns ``(centers, radii, mode)``.
    """
    centers = np.arange(g.n) if centers is None else np.asarray(centers, dtype=np.int64)
    if r_max is None:
        r_max = g.diam
    radii = g.radii_grid(r_max=r_max, r_min=r_min)
    mode = "exhaustive"
    if len(centers) * len(radii) > limit:
        lo = max(r_min, 0.5 * g.min_edge)
        k = max(2, int(np.ceil(RADII_PER_DECADE * np.log10(r_max / lo))) + 1)
        radii = np.geomspace(lo, r_max, k)
        radii = radii[radii > r_min]
        mode = "sampled"
    return centers, radii, mode


def scale_values(psi, radii, centers) -> np.ndarray:
    """``Psi(x, r)`` as an array (len(centers), len(radii))."""
    radii = np.asarray(radii, dtype=float)
    if getattr(psi, "radial", True):
        return np.broadcast_to(np.asarray(psi(radii), dtype=float), (len(centers), len(radii))).copy()
    return np.stack([np.asarray(psi(radii, int(x)), dtype=float) for x in centers])


def envelope_fit(x: np.ndarray, y: np.ndarray, decimals: int = 9):
    """Least-squares line through the per-abscissa max of ``y``.

    Returns ``(slope, intercept, rms_residual, abscissae, envelope)``.
    """
    key = np.round(x, decimals)
    xs, inv = np.unique(key, return_inverse=True)
    env = np.full(len(xs), -np.inf)
    np.maximum.at(env, inv, y)
    if len(xs) < 2:
        return float("nan"), float("nan"), float("nan"), xs, env
    slope, icpt = np.polyfit(xs, env, 1)
    res = env - (slope * xs + icpt)
    return float(slope), float(icpt), float(np.sqrt(np.mean(res ** 2))), xs, env
