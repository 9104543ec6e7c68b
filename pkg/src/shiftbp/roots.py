"""Bracketed bisection for the three scalar equations of the model.

* extinction probability: ``F0(s) = s`` on (0, 1)
* decay rate: ``sum_i M_i s**(i-1) = 1`` on (0, 1)
* prepend solve: ``u = T1(u, tail)``, the first coordinate that makes a
  given tail a fixed point at index 1
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import BracketError, NoRootInRegime
from .genfun import UVector
from .law import MomentSummary, OffspringLaw

XTOL = 1e-14
RTOL = 4 * np.finfo(float).eps
MAXITER = 200


@dataclass(frozen=True)
class RootResult:
    value: float
    iterations: int
    bracket_width_final: float
    residual: float


def bisect(f: Callable[[float], float], lo: float, hi: float, *, xtol: float = XTOL,
           rtol: float = RTOL, maxiter: int = MAXITER) -> RootResult:
    """Bisection on a sign change of ``f`` over ``[lo, hi]``.

    Stops when the bracket is narrower than ``xtol + rtol * |x|`` or the
    midpoint no longer moves.  An exact zero at an endpoint is returned as is.
    """
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return RootResult(lo, 0, hi - lo, 0.0)
    if fhi == 0.0:
        return RootResult(hi, 0, hi - lo, 0.0)
    if (flo > 0) == (fhi > 0):
        raise BracketError(f"no sign change on [{lo}, {hi}]: f={flo}, {fhi}")
    it = 0
    while it < maxiter:
        it += 1
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        fm = f(mid)
        if fm == 0.0:
            return RootResult(mid, it, hi - lo, 0.0)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi, fhi = mid, fm
        if hi - lo <= xtol + rtol * max(abs(lo), abs(hi)):
            break
    if abs(flo) <= abs(fhi):
        return RootResult(lo, it, hi - lo, abs(flo))
    return RootResult(hi, it, hi - lo, abs(fhi))


def solve_extinction(summary: MomentSummary) -> RootResult:
    """Global extinction probability ``q``: the smallest root of ``F0(s) = s``."""
    if not summary.supercritical:
        return RootResult(1.0, 0, 0.0, 0.0)
    # F0(s) - s is convex with a unique minimum where F0' = 1; it is negative there.
    turn = bisect(lambda s: summary.total_pgf_deriv(s) - 1.0, 0.0, 1.0, xtol=1e-15, rtol=0.0)
    res = bisect(lambda s: summary.total_pgf_value(s) - s, 0.0, turn.value)
    return res


def solve_decay_rate(summary: MomentSummary) -> RootResult:
    """Root ``gamma`` of ``sum_i M_i s**(i-1) = 1`` in (0, 1).

    Raises:
        NoRootInRegime: when ``M <= 1`` or ``M_1 >= 1``.
    """
    if not summary.supercritical:
        raise NoRootInRegime(f"M = {summary.total_mean} <= 1: decay rate undefined")
    if summary.means[0] >= 1.0:
        raise NoRootInRegime(f"M1 = {summary.means[0]} >= 1: decay rate undefined")
    return bisect(lambda s: summary.mean_poly(s) - 1.0, 0.0, 1.0)


def solve_prepend(law: OffspringLaw, tail: Sequence[float] | UVector, *, M1: float | None = None) -> RootResult:
    """Solve ``v = T1(v, tail)`` for the coordinate placed before ``tail``.

    Only the first ``K - 1`` tail coordinates matter.  The map has slope at
    most ``M1 < 1`` in ``v``, so the root lies in ``[T1(0), T1(0)/(1 - M1)]``;
    bisecting inside that bracket keeps full relative precision for tiny
    tails.

    Raises:
        BracketError: if the sign conditions fail, which happens only for
            laws violating the standing assumptions.
    """
    K = law.K
    t = tail.coords(K - 1) if isinstance(tail, UVector) else np.asarray(tail, dtype=float)[: K - 1]
    if t.size < K - 1:
        raise ValueError(f"tail must provide {K - 1} coordinates")
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise ValueError("tail coordinates must lie in [0, 1]")
    if M1 is None:
        M1 = float(sum(e.prob * e.counts[0] for e in law.entries if e.counts))
    if not M1 < 1.0:
        raise BracketError(f"M1 = {M1} >= 1: prepend map is not a contraction")

    tail_logs = [math.log1p(-v) if v < 1.0 else -1e300 for v in t]
    groups = []
    for prob, pairs in law.sparse_entries:
        if not pairs:
            continue
        c1 = 0
        rest = 0.0
        for k, c in pairs:
            if k == 0:
                c1 = c
            else:
                rest += c * tail_logs[k - 1]
        groups.append((prob, c1, rest))

    def T1(v: float) -> float:
        lv = math.log1p(-v) if v < 1.0 else -1e300
        total = 0.0
        for prob, c1, rest in groups:
            total -= prob * math.expm1(c1 * lv + rest if c1 else rest)
        return total

    base = T1(0.0)
    if base <= 0.0:
        return RootResult(0.0, 0, 0.0, 0.0)
    # relative padding keeps the endpoint signs clear of rounding when the root sits on a bound
    lo = base * (1.0 - 1e-12)
    hi = min(1.0, base / (1.0 - M1) * (1.0 + 1e-12))
    res = bisect(lambda v: v - T1(v), lo, hi, xtol=0.0)
    if res.residual > 1e-13:
        raise BracketError(f"prepend solve residual {res.residual} above 1e-13")
    return res
