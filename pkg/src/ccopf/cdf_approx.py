"""Concave piecewise-linear under-estimator of the standard normal CDF on [0, inf).

Construction is a greedy forward chord sweep: from the previous breakpoint,
the next one is the largest point such that the connecting chord stays
within the tolerance of the true CDF (the chord of a concave function
under-estimates it on the chord interval, and the gap there is unimodal).
The sweep stops once the remaining tail mass is within tolerance and a
horizontal segment closes the approximation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

__all__ = ["PwlCdf", "build_pwl", "eval_pwl"]

# beyond this point 1 - Phi underflows past any representable tolerance
_T_CAP = 8.3
_SQRT2PI = np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class PwlCdf:
    """Segments of the under-estimator: value(x) = min_s (a_s x + b_s), x >= 0."""

    breakpoints: np.ndarray  # t_0 = 0 < t_1 < ... < t_{S-1}
    slopes: np.ndarray       # a_1..a_S, strictly decreasing, a_S = 0
    intercepts: np.ndarray   # b_1..b_S, b_S = Phi(t_{S-1})
    delta: float

    @property
    def n_segments(self) -> int:
        return self.slopes.size

    def __call__(self, x) -> np.ndarray | float:
        return eval_pwl(self, x)

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "t": self.breakpoints.tolist(),
            "a": self.slopes.tolist(),
            "b": self.intercepts.tolist(),
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def from_dict(cls, d: dict) -> "PwlCdf":
        return cls(breakpoints=np.array(d["t"]), slopes=np.array(d["a"]),
                   intercepts=np.array(d["b"]), delta=float(d["delta"]))


def _chord_gap(lo: float, hi: float) -> float:
    """Max of Phi - chord on [lo, hi] for the chord through the interval ends.

    The gap peaks where the normal density equals the chord slope; on
    [0, inf) the density is strictly decreasing, so the peak is available
    in closed form.
    """
    a = (ndtr(hi) - ndtr(lo)) / (hi - lo)
    xstar = np.sqrt(max(-2.0 * np.log(a * _SQRT2PI), 0.0))
    xstar = min(max(xstar, lo), hi)
    return float(ndtr(xstar) - (ndtr(lo) + a * (xstar - lo)))


def build_pwl(delta: float) -> PwlCdf:
    """Build the under-estimator to tolerance delta (0 < delta < 0.5)."""
    if not 0.0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 0.5)")
    ts = [0.0]
    while 1.0 - ndtr(ts[-1]) > delta:
        lo = ts[-1]
        hi = min(lo + 0.5, _T_CAP)
        while hi < _T_CAP and _chord_gap(lo, hi) < delta:
            hi = min(hi + 0.5, _T_CAP)
        if _chord_gap(lo, hi) < delta:
            ts.append(hi)  # chord reaches the numerical tail within tolerance
            break
        ts.append(brentq(lambda t: _chord_gap(lo, t) - delta, lo + 1e-12, hi, xtol=1e-13))
    t = np.array(ts)
    phi_t = ndtr(t)
    slopes = np.append(np.diff(phi_t) / np.diff(t), 0.0)
    intercepts = np.append(phi_t[1:] - slopes[:-1] * t[1:], phi_t[-1])
    return PwlCdf(breakpoints=t, slopes=slopes, intercepts=intercepts, delta=delta)


def eval_pwl(pwl: PwlCdf, x) -> np.ndarray | float:
    """Pointwise minimum of the affine segments; defined for x >= 0 only."""
    x = np.asarray(x, dtype=float)
    if (x < 0).any():
        raise ValueError("the under-estimator domain is [0, inf)")
    vals = np.min(pwl.slopes * x[..., None] + pwl.intercepts, axis=-1)
    return float(vals) if vals.ndim == 0 else vals
