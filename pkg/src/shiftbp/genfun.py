"""Generating operator in survival coordinates.

Everything works with ``u = 1 - s``.  The survival map is evaluated as
``-sum_e p_e * expm1(sum_k j_k * log1p(-u_k))`` so that coordinates many
orders of magnitude below machine epsilon keep full relative precision.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import QuadratureError, ValidationError
from .law import MomentSummary, OffspringLaw

_NEG_HUGE = -1e300


@dataclass(frozen=True, eq=False)
class UVector:
    """Finite head ``u[1..N]`` closed by a geometric tail ``u[j] = u[N] * ratio**(j - N)``."""

    head: np.ndarray
    tail_ratio: float

    def __post_init__(self):
        head = np.array(self.head, dtype=float).ravel()
        if head.size == 0:
            raise ValidationError("UVector head must be non-empty")
        if np.any(~np.isfinite(head)) or np.any(head < 0.0) or np.any(head > 1.0):
            raise ValidationError("UVector coordinates must lie in [0, 1]")
        if not 0.0 < self.tail_ratio <= 1.0:
            raise ValidationError(f"tail ratio {self.tail_ratio} not in (0, 1]")
        head.flags.writeable = False
        object.__setattr__(self, "head", head)
        object.__setattr__(self, "tail_ratio", float(self.tail_ratio))

    @property
    def N(self) -> int:
        return self.head.size

    def __eq__(self, other):
        if not isinstance(other, UVector):
            return NotImplemented
        return self.tail_ratio == other.tail_ratio and np.array_equal(self.head, other.head)

    def __hash__(self):
        return hash((self.tail_ratio, self.head.tobytes()))

    @classmethod
    def geometric(cls, first: float, ratio: float, n_head: int) -> "UVector":
        """``u[j] = first * ratio**(j - 1)``."""
        return cls(first * ratio ** np.arange(n_head), ratio)

    @classmethod
    def constant(cls, value: float, n_head: int) -> "UVector":
        return cls(np.full(n_head, value), 1.0)

    def coord(self, i: int) -> float:
        if i < 1:
            raise IndexError("coordinates are 1-based")
        if i <= self.N:
            return float(self.head[i - 1])
        return float(self.head[-1] * self.tail_ratio ** (i - self.N))

    def window(self, start: int, length: int) -> np.ndarray:
        """Coordinates ``start .. start + length - 1`` (1-based), tail closure included."""
        if start < 1:
            raise IndexError("coordinates are 1-based")
        stop = start + length - 1
        if stop <= self.N:
            return self.head[start - 1 : stop].copy()
        inner = self.head[start - 1 :] if start <= self.N else np.empty(0)
        first_tail = max(start, self.N + 1)
        powers = np.arange(first_tail - self.N, stop - self.N + 1)
        return np.concatenate([inner, self.head[-1] * self.tail_ratio ** powers])

    def coords(self, n: int) -> np.ndarray:
        return self.window(1, n)

    def prepend(self, value: float) -> "UVector":
        return UVector(np.concatenate([[value], self.head]), self.tail_ratio)

    def shift_left(self, count: int = 1) -> "UVector":
        if count >= self.N:
            raise ValidationError("cannot drop the whole head")
        return UVector(self.head[count:], self.tail_ratio)

    def is_decreasing(self, n: int | None = None) -> bool:
        vals = self.coords(n or self.N)
        return bool(np.all(np.diff(vals) < 0))

    @property
    def amplitude(self) -> float:
        """``A`` such that the tail reads ``A * ratio**j``."""
        return float(self.head[-1] * self.tail_ratio ** (-self.N))


# ---------------------------------------------------------------------------
# operator evaluation


def eval_pgf(law: OffspringLaw, s_window: Sequence[float]) -> float:
    """Offspring p.g.f. of a type-1 particle at ``s_1..s_K`` (exact polynomial)."""
    s = np.asarray(s_window, dtype=float)
    if s.size < law.K:
        raise ValueError(f"window of length {s.size} shorter than K={law.K}")
    total = 0.0
    for prob, pairs in law.sparse_entries:
        term = prob
        for k, c in pairs:
            term *= s[k] ** c
        total += term
    return total


def survival_scalar(law: OffspringLaw, u_window: Sequence[float]) -> float:
    """``1 - F(1 - u)`` for one window ``u_1..u_K``."""
    logs = []
    for v in u_window[: law.K]:
        logs.append(math.log1p(-v) if v < 1.0 else _NEG_HUGE)
    total = 0.0
    for prob, pairs in law.sparse_entries:
        if not pairs:
            continue
        acc = 0.0
        for k, c in pairs:
            acc += c * logs[k]
        total -= prob * math.expm1(acc)
    return total


def survival_windows(law: OffspringLaw, windows: np.ndarray) -> np.ndarray:
    """Vectorized :func:`survival_scalar` over rows of an ``(n, K)`` array."""
    with np.errstate(divide="ignore"):
        logs = np.maximum(np.log1p(-np.minimum(windows, 1.0)), _NEG_HUGE)
    expo = logs @ law.count_matrix.T.astype(float)
    return -(np.expm1(expo) @ law.probs)


def eval_survival_map(law: OffspringLaw, u: UVector, i: int) -> float:
    """Coordinate ``i`` of ``T(u) = 1 - F(1 - u)``; reads ``u[i .. i+K-1]``."""
    if i < 1:
        raise IndexError("coordinates are 1-based")
    return survival_scalar(law, u.window(i, law.K))


def survival_map_range(law: OffspringLaw, u: UVector, start: int, count: int) -> np.ndarray:
    vals = u.window(start, count + law.K - 1)
    return survival_windows(law, sliding_window_view(vals, law.K))


# ---------------------------------------------------------------------------
# residuals


@dataclass(frozen=True)
class ResidualReport:
    """``residuals[i-1] = u[i] - T(u)[i]`` on the closure-free window."""

    residuals: np.ndarray
    l2_window: float
    sup_window: float
    tail_estimate: float

    @property
    def window(self) -> int:
        return self.residuals.size

    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "l2_window": self.l2_window,
            "sup_window": self.sup_window,
            "tail_estimate": self.tail_estimate,
        }


def residuals(law: OffspringLaw, u: UVector, W: int = 32) -> ResidualReport:
    n = u.N - law.K
    if n < 1:
        raise ValidationError(f"head length {u.N} leaves no residual window for K={law.K}")
    res = u.coords(n) - survival_map_range(law, u, 1, n)
    extra = u.window(n + 1, W) - survival_map_range(law, u, n + 1, W)
    tail_sq = float(np.sum(extra**2))
    mags = np.abs(extra)
    if W >= 2 and mags[-2] > 0 and mags[-1] < mags[-2]:
        r = mags[-1] / mags[-2]
        tail_sq += mags[-1] ** 2 * r**2 / (1.0 - r**2)
    elif W >= 2 and mags[-1] > 0:
        tail_sq = math.inf
    return ResidualReport(
        residuals=res,
        l2_window=float(np.sqrt(np.sum(res**2))),
        sup_window=float(np.max(np.abs(res))),
        tail_estimate=math.sqrt(tail_sq),
    )


# ---------------------------------------------------------------------------
# remainder coefficients of the linearization at 1


def adaptive_simpson(f: Callable[[float], float], a: float, b: float,
                     tol: float = 1e-10, max_depth: int = 40) -> float:
    """Adaptive Simpson quadrature with Richardson correction.

    Raises:
        QuadratureError: if an interval still misses its share of ``tol``
            at ``max_depth`` subdivisions.
    """
    fa, fb = f(a), f(b)
    m = 0.5 * (a + b)
    fm = f(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    total = 0.0
    stack = [(a, b, fa, fm, fb, whole, tol, 0)]
    while stack:
        a0, b0, fa0, fm0, fb0, s0, tol0, depth = stack.pop()
        m0 = 0.5 * (a0 + b0)
        lm, rm = 0.5 * (a0 + m0), 0.5 * (m0 + b0)
        flm, frm = f(lm), f(rm)
        h = (b0 - a0) / 12.0
        left = h * (fa0 + 4.0 * flm + fm0)
        right = h * (fm0 + 4.0 * frm + fb0)
        delta = left + right - s0
        if abs(delta) <= 15.0 * tol0:
            total += left + right + delta / 15.0
            continue
        if depth >= max_depth:
            raise QuadratureError(f"tolerance {tol} not reached on [{a0}, {b0}] at depth {depth}")
        stack.append((a0, m0, fa0, flm, fm0, left, 0.5 * tol0, depth + 1))
        stack.append((m0, b0, fm0, frm, fb0, right, 0.5 * tol0, depth + 1))
    return total


def remainder_coeff(law: OffspringLaw, k: int, j: int, u_window: Sequence[float],
                    tol: float = 1e-10) -> float:
    """Remainder ``E_{k,j}`` of the linearization of ``f_k`` at ``1 - u``.

    ``f_k`` is the p.g.f. conditioned on largest displacement ``k``.  The
    integral form is exact; all support points sharing ``k`` are combined
    into one integrand.
    """
    if not 1 <= j <= k <= law.K:
        raise ValueError(f"need 1 <= j <= k <= K, got j={j}, k={k}")
    group = [e for e in law.entries if e.max_index == k]
    h_k = math.fsum(e.prob for e in group)
    if h_k <= 0:
        raise ValueError(f"no support with largest displacement {k}")
    u = [float(v) for v in u_window[:k]]
    if len(u) < k:
        raise ValueError(f"u window shorter than k={k}")
    terms = []
    mean = 0.0
    for e in group:
        cj = e.counts[j - 1]
        if cj == 0:
            continue
        weight = e.prob / h_k * cj
        mean += weight
        expo = [(u[l], e.counts[l] - (1 if l == j - 1 else 0)) for l in range(k)]
        terms.append((weight, [(v, c) for v, c in expo if c > 0 and v != 0.0]))
    if not terms:
        return 0.0

    def integrand(x: float) -> float:
        acc = 0.0
        for weight, factors in terms:
            val = weight
            for v, c in factors:
                val *= (1.0 - v * x) ** c
            acc += val
        return acc

    return mean - adaptive_simpson(integrand, 0.0, 1.0, tol=tol)


@dataclass(frozen=True)
class IdentityCheck:
    passed: bool
    max_deviation: float


def remainder_identity_check(law: OffspringLaw, u_window: Sequence[float], tol: float = 1e-8,
                             summary: MomentSummary | None = None) -> IdentityCheck:
    """Check ``1 - f_k(1-u) = sum_j (a_kj - E_kj) u_j`` for every populated ``k``."""
    from .law import moments

    summary = summary or moments(law)
    u = np.asarray(u_window, dtype=float)
    worst = 0.0
    for k in range(1, law.K + 1):
        h_k = summary.top_probs[k]
        if h_k <= 0:
            continue
        lhs = 0.0
        for e in law.entries:
            if e.max_index != k:
                continue
            acc = sum(c * math.log1p(-u[l]) if u[l] < 1.0 else (_NEG_HUGE if c else 0.0)
                      for l, c in enumerate(e.counts))
            lhs -= e.prob / h_k * math.expm1(acc)
        rhs = 0.0
        for j in range(1, k + 1):
            a_kj = summary.cond_means[k, j]
            if a_kj == 0:
                continue
            rhs += (a_kj - remainder_coeff(law, k, j, u)) * u[j - 1]
        worst = max(worst, abs(lhs - rhs))
    return IdentityCheck(worst <= tol, worst)


# ---------------------------------------------------------------------------
# ratio diagnostics


@dataclass(frozen=True)
class RatioDiagnostics:
    """``alpha[i-1] = u[i+1]/u[i]`` and ``U[i-1] = sum_k M_k prod_{l<k} alpha_{i+l-1}``."""

    alpha: np.ndarray
    U: np.ndarray
    lower_bound: float
    start: int = 1

    def within_bounds(self, rtol: float = 1e-12) -> bool:
        lo = self.lower_bound * (1.0 - rtol)
        return bool(np.all(self.alpha >= lo) and np.all(self.alpha <= 1.0 + rtol))

    def to_dict(self) -> dict:
        half = self.alpha.size // 2
        return {
            "window": self.alpha.size,
            "lower_bound": self.lower_bound,
            "alpha_min_second_half": float(np.min(self.alpha[half:])),
            "alpha_max_second_half": float(np.max(self.alpha[half:])),
            "max_U_dev_second_half": float(np.max(np.abs(self.U[half:] - 1.0))),
        }


def ratio_diag(summary: MomentSummary, u: UVector, window: int, start: int = 1) -> RatioDiagnostics:
    K = summary.K
    vals = u.window(start, window + K)
    if np.any(vals[:-1] <= 0):
        raise ValidationError("ratio diagnostics need strictly positive coordinates")
    alpha = vals[1:] / vals[:-1]
    U = np.full(window, summary.means[0])
    prod = np.ones(window)
    for k in range(2, K + 1):
        prod = prod * alpha[k - 2 : k - 2 + window]
        U += summary.means[k - 1] * prod
    M1 = summary.means[0]
    lower = (1.0 - M1) / (summary.total_mean - M1)
    return RatioDiagnostics(alpha=alpha[:window], U=U, lower_bound=lower, start=start)


def write_diagnostics_csv(path: str | Path, law: OffspringLaw, summary: MomentSummary, u: UVector) -> None:
    """Per-coordinate series: i, u_i, s_i, residual_i, alpha_i, U_i."""
    rep = residuals(law, u)
    n = rep.window
    diag = ratio_diag(summary, u, n) if np.all(u.coords(n + 1) > 0) else None
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "u_i", "s_i", "residual_i", "alpha_i", "U_i"])
        for i in range(1, n + 1):
            ui = u.coord(i)
            writer.writerow([
                i, repr(ui), repr(1.0 - ui), repr(float(rep.residuals[i - 1])),
                repr(float(diag.alpha[i - 1])) if diag else "",
                repr(float(diag.U[i - 1])) if diag else "",
            ])
