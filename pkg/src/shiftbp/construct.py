"""Numerical construction of non-trivial fixed points of the survival map.

A geometric seed ``x[j] = A * gamma**j`` is cut at index ``n`` and fixed-point
coordinates are solved backwards in front of it (the ladder).  Scanning tail
starts ``m`` and stopping each ladder the first time the l2 norm crosses a
target ``y0`` gives vectors that settle down coordinatewise; the limit is a
fixed point that is neither ``0`` nor ``(1 - q) * 1``.  Prepending further
solved coordinates, or dropping leading ones, yields more fixed points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterator

import numpy as np

from .errors import NoConvergence, NotFound, RegimeError, ValidationError
from .genfun import (
    RatioDiagnostics,
    ResidualReport,
    UVector,
    ratio_diag,
    residuals,
    survival_windows,
)
from .law import MomentSummary, OffspringLaw, moments
from .roots import solve_decay_rate, solve_extinction, solve_prepend

RESIDUAL_TOL = 1e-8
DEFAULT_STEP = 5
DEFAULT_M_MAX = 600
DEFAULT_PREPEND_CAP = 5000
DEFAULT_CONV_TOL = 1e-10
DEFAULT_COMPARE_WIDTH = 32


@dataclass(frozen=True)
class TailSeed:
    """Geometric sequence ``x[j] = amplitude * ratio**j`` for ``j >= 1``."""

    amplitude: float
    ratio: float

    def __post_init__(self):
        if not 0.0 < self.amplitude < 1.0:
            raise ValidationError(f"seed amplitude {self.amplitude} not in (0, 1)")
        if not 0.0 < self.ratio < 1.0:
            raise ValidationError(f"seed ratio {self.ratio} not in (0, 1)")

    def x(self, j: int) -> float:
        return self.amplitude * self.ratio**j

    def tail(self, n: int, length: int) -> np.ndarray:
        return self.amplitude * self.ratio ** np.arange(n, n + length, dtype=float)

    def tail_norm_sq(self, n: int) -> float:
        return self.amplitude**2 * self.ratio ** (2 * n) / (1.0 - self.ratio**2)


@dataclass(frozen=True)
class _Setup:
    law: OffspringLaw
    summary: MomentSummary
    q: float
    gamma: float


def _setup(law: OffspringLaw) -> _Setup:
    summary = moments(law)
    if not summary.supercritical:
        raise RegimeError(f"M = {summary.total_mean} <= 1: only the trivial fixed point exists")
    gamma = solve_decay_rate(summary).value
    q = solve_extinction(summary).value
    return _Setup(law, summary, q, gamma)


def default_seed(law: OffspringLaw) -> TailSeed:
    st = _setup(law)
    return TailSeed((1.0 - st.q) / 2.0, st.gamma)


class _Ladder:
    """Incremental backward solver in front of ``x[n], x[n+1], ...``."""

    def __init__(self, law: OffspringLaw, seed: TailSeed, n: int, M1: float):
        self.law = law
        self.M1 = M1
        self.front = list(seed.tail(n, law.K - 1)[::-1])  # reversed: front[-1] is the leading coordinate
        self.etas: list[float] = []
        self.res: list[float] = []
        self.norm_sq = seed.tail_norm_sq(n)

    def push(self) -> float:
        K = self.law.K
        window = self.front[: -K:-1] if K > 1 else []
        r = solve_prepend(self.law, window, M1=self.M1)
        self.front.append(r.value)
        self.etas.append(r.value)
        self.res.append(r.residual)
        self.norm_sq += r.value**2
        return r.value


@dataclass(frozen=True)
class LadderState:
    """Ladder values ``etas[i-1]`` (first solved is ``etas[0]``) in front of ``x[n:]``."""

    n: int
    etas: np.ndarray
    solver_residuals: np.ndarray
    seed: TailSeed

    @property
    def depth(self) -> int:
        return self.etas.size

    def head(self) -> np.ndarray:
        """Coordinates in vector order: the last solved value comes first."""
        return self.etas[::-1].copy()


def build_ladder(law: OffspringLaw, seed: TailSeed, n: int, depth: int) -> LadderState:
    if depth < 1 or n < 1:
        raise ValueError("need n >= 1 and depth >= 1")
    st = _setup(law)
    lad = _Ladder(law, seed, n, float(st.summary.means[0]))
    for _ in range(depth):
        lad.push()
    return LadderState(n, np.array(lad.etas), np.array(lad.res), seed)


def detect_ladder_start(law: OffspringLaw, seed: TailSeed, n_max: int) -> int:
    """Smallest ``n0`` such that the first ladder value beats ``x[n]`` for every ``n0 <= n <= n_max``.

    Raises:
        NotFound: if the condition already fails at ``n_max``; shrink the
            seed amplitude.
    """
    st = _setup(law)
    M1 = float(st.summary.means[0])
    n0 = None
    for n in range(n_max, 0, -1):
        lad = _Ladder(law, seed, n, M1)
        if lad.push() > seed.x(n):
            n0 = n
        else:
            break
    if n0 is None:
        raise NotFound(f"first ladder value never exceeds the seed up to n_max={n_max}")
    return n0


@dataclass(frozen=True)
class Crossing:
    """Vector ``(eta[k], ..., eta[1], x[m], x[m+1], ...)`` whose norm first exceeds ``y0``."""

    m: int
    k: int
    etas: np.ndarray = field(repr=False)
    norm: float
    prev_norm: float
    seed: TailSeed = field(repr=False)

    def coords(self, n: int) -> np.ndarray:
        head = self.etas[::-1][:n]
        if head.size == n:
            return head.copy()
        return np.concatenate([head, self.seed.tail(self.m, n - head.size)])

    def vector(self, n_head: int) -> UVector:
        return UVector(self.coords(n_head), self.seed.ratio)


@dataclass(frozen=True)
class ScanParams:
    y0: float | None = None
    step: int = DEFAULT_STEP
    m_max: int = DEFAULT_M_MAX
    prepend_cap: int = DEFAULT_PREPEND_CAP


def iter_crossings(law: OffspringLaw, seed: TailSeed, params: ScanParams = ScanParams(),
                   n0: int | None = None) -> Iterator[Crossing]:
    st = _setup(law)
    M1 = float(st.summary.means[0])
    if n0 is None:
        n0 = detect_ladder_start(law, seed, params.m_max)
    y0 = params.y0 if params.y0 is not None else math.sqrt(seed.tail_norm_sq(n0))
    target = y0 * y0
    k_prev = 0
    m = n0 + params.step
    while m <= params.m_max:
        lad = _Ladder(law, seed, m, M1)
        if lad.norm_sq > target:
            m += params.step
            continue
        prev = lad.norm_sq
        while lad.norm_sq <= target:
            if len(lad.etas) >= params.prepend_cap:
                raise NotFound(
                    f"prepend cap {params.prepend_cap} reached at tail start m={m} "
                    f"(norm {math.sqrt(lad.norm_sq):.6g} <= y0 {y0:.6g})"
                )
            prev = lad.norm_sq
            lad.push()
        k = len(lad.etas)
        if k > k_prev:
            k_prev = k
            yield Crossing(m, k, np.array(lad.etas), math.sqrt(lad.norm_sq), math.sqrt(prev), seed)
        m += params.step


def crossing_scan(law: OffspringLaw, seed: TailSeed, params: ScanParams = ScanParams()) -> list[Crossing]:
    """All norm-crossing vectors along the tail-start schedule ``n0 + j * step``."""
    return list(iter_crossings(law, seed, params))


# ---------------------------------------------------------------------------
# candidates


@dataclass(frozen=True, eq=False)
class Candidate:
    u: UVector
    residual_report: ResidualReport
    ratio_diag: RatioDiagnostics
    provenance: dict[str, Any]
    converged: bool
    law_name: str
    law_digest: str
    gamma: float
    q: float

    def to_document(self) -> dict[str, Any]:
        return {
            "law": {"name": self.law_name, "hash": self.law_digest},
            "u_head": [float(v) for v in self.u.head],
            "tail": {"ratio": self.u.tail_ratio, "amplitude": self.u.amplitude},
            "gamma": self.gamma,
            "q": self.q,
            "residual": self.residual_report.to_dict(),
            "ratio": self.ratio_diag.to_dict(),
            "provenance": self.provenance,
            "converged": self.converged,
        }

    @classmethod
    def from_document(cls, doc: dict[str, Any], law: OffspringLaw) -> "Candidate":
        if doc["law"]["hash"] != law.digest:
            raise ValidationError("candidate was built for a different law (hash mismatch)")
        u = UVector(np.array(doc["u_head"], dtype=float), float(doc["tail"]["ratio"]))
        return package_candidate(law, moments(law), u, doc["provenance"], doc["converged"],
                                 float(doc["gamma"]), float(doc["q"]))


def package_candidate(law: OffspringLaw, summary: MomentSummary, u: UVector, provenance: dict,
                      converged: bool, gamma: float, q: float) -> Candidate:
    rep = residuals(law, u)
    diag = ratio_diag(summary, u, rep.window)
    return Candidate(u, rep, diag, provenance, converged, law.name, law.digest, gamma, q)


def _certifies(c: Candidate) -> bool:
    u1 = c.u.coord(1)
    return c.residual_report.sup_window <= RESIDUAL_TOL and 0.0 < u1 < 1.0 - c.q


def construct_fixed_point(law: OffspringLaw, *, seed_amplitude: float | None = None,
                          scan: ScanParams = ScanParams(), conv_tol: float = DEFAULT_CONV_TOL,
                          compare_width: int = DEFAULT_COMPARE_WIDTH,
                          n_head: int | None = None) -> Candidate:
    """Run the crossing scan until successive crossings agree on ``compare_width`` coordinates.

    Raises:
        RegimeError: for non-supercritical laws.
        NoConvergence: when the schedule is exhausted, or the successive
            differences stall at floating-point resolution above
            ``conv_tol``; the best candidate rides on the exception.
    """
    st = _setup(law)
    A = seed_amplitude if seed_amplitude is not None else (1.0 - st.q) / 2.0
    seed = TailSeed(A, st.gamma)
    n0 = detect_ladder_start(law, seed, scan.m_max)
    N = n_head if n_head is not None else max(200, n0 + 8 * law.K)
    y0 = scan.y0 if scan.y0 is not None else math.sqrt(seed.tail_norm_sq(n0))
    scan = ScanParams(y0, scan.step, scan.m_max, scan.prepend_cap)

    def provenance(cross: Crossing, trace: list) -> dict:
        return {
            "seed": {"amplitude": A, "ratio": st.gamma},
            "scan": {"y0": y0, "step": scan.step, "m_max": scan.m_max,
                     "prepend_cap": scan.prepend_cap, "ladder_start": n0},
            "conv_tol": conv_tol,
            "compare_width": compare_width,
            "prepend_count": cross.k,
            "tail_start": cross.m,
            "norm": cross.norm,
            "trace": trace,
        }

    prev = None
    last = None
    trace: list[dict] = []
    stalls = 0
    for cross in iter_crossings(law, seed, scan, n0=n0):
        last = cross
        cur = cross.coords(compare_width)
        if prev is None:
            prev = cur
            trace.append({"m": cross.m, "k": cross.k, "diff": None})
            continue
        diff = float(np.max(np.abs(cur - prev)))
        prev = cur
        trace.append({"m": cross.m, "k": cross.k, "diff": diff})
        resolution = 8 * np.finfo(float).eps * float(np.max(np.abs(cur)))
        if diff < conv_tol and conv_tol >= resolution:
            cand = package_candidate(law, st.summary, cross.vector(N), provenance(cross, trace),
                                     True, st.gamma, st.q)
            if _certifies(cand):
                return cand
        stalls = stalls + 1 if diff <= resolution else 0
        if stalls >= 3:
            break

    if last is None:
        raise NotFound("crossing scan produced no vectors; increase m_max")
    best = package_candidate(law, st.summary, last.vector(N), provenance(last, trace),
                             False, st.gamma, st.q)
    raise NoConvergence(
        f"no convergence to conv_tol={conv_tol:g} (last successive difference "
        f"{trace[-1]['diff']!r} at m={last.m})",
        best,
    )


# ---------------------------------------------------------------------------
# families


@dataclass(frozen=True)
class FamilyReport:
    direction: str
    base: Candidate
    members: list[Candidate]
    ordered: list[bool]

    @property
    def all_ordered(self) -> bool:
        return all(self.ordered)

    def to_document(self, compare_width: int = DEFAULT_COMPARE_WIDTH) -> dict[str, Any]:
        return {
            "law": {"name": self.base.law_name, "hash": self.base.law_digest},
            "direction": self.direction,
            "count": len(self.members),
            "ordered": self.ordered,
            "all_ordered": self.all_ordered,
            "members": [
                {
                    "index": i + 1,
                    "first_coords": [float(v) for v in m.u.coords(compare_width)],
                    "sup_residual": m.residual_report.sup_window,
                    "document": m.to_document(),
                }
                for i, m in enumerate(self.members)
            ],
        }


def family(law: OffspringLaw, base: Candidate, count: int, direction: str = "prepend",
           compare_width: int = DEFAULT_COMPARE_WIDTH) -> FamilyReport:
    """Fixed points obtained from ``base`` by repeated prepend solves or left shifts.

    Raises:
        ValidationError: if ``base`` is unconverged, a member's residual
            exceeds 1e-8, or a prepended first coordinate reaches ``1 - q``.
    """
    if not base.converged:
        raise ValidationError("family needs a converged base candidate")
    if direction not in ("prepend", "shift_left"):
        raise ValueError(f"unknown direction {direction!r}")
    summary = moments(law)
    M1 = float(summary.means[0])
    members: list[Candidate] = []
    ordered: list[bool] = []
    cur = base.u
    prev_coords = cur.coords(compare_width)
    for idx in range(1, count + 1):
        if direction == "prepend":
            cur = cur.prepend(solve_prepend(law, cur, M1=M1).value)
        else:
            cur = cur.shift_left()
        prov = {"base": base.provenance, "direction": direction, "index": idx}
        member = package_candidate(law, summary, cur, prov, True, base.gamma, base.q)
        if member.residual_report.sup_window > RESIDUAL_TOL:
            raise ValidationError(
                f"member {idx}: residual {member.residual_report.sup_window:.3g} above {RESIDUAL_TOL}")
        if direction == "prepend" and not cur.coord(1) < 1.0 - base.q:
            raise ValidationError(f"member {idx}: first coordinate reached 1 - q")
        coords = cur.coords(compare_width)
        if direction == "prepend":
            ordered.append(bool(np.all(coords > prev_coords)))
        else:
            ordered.append(bool(np.all(coords < prev_coords)))
        prev_coords = coords
        members.append(member)
    return FamilyReport(direction, base, members, ordered)


# ---------------------------------------------------------------------------
# independent oracle


def pinned_tail_picard(law: OffspringLaw, tail: np.ndarray, depth: int, *, tol: float = 1e-14,
                       max_iter: int = 200_000) -> np.ndarray:
    """Solve the head of length ``depth`` by Jacobi sweeps ``u[i] <- T(u)[i]`` with a pinned tail.

    ``tail`` holds the coordinates from ``depth + 1`` on (at least ``K - 1``).
    Starts from zero and stops once a sweep moves no coordinate by more
    than ``tol``.
    """
    K = law.K
    pinned = np.asarray(tail, dtype=float)[: K - 1]
    head = np.zeros(depth)
    for _ in range(max_iter):
        full = np.concatenate([head, pinned])
        new = survival_windows(law, np.lib.stride_tricks.sliding_window_view(full, K)[:depth])
        move = float(np.max(np.abs(new - head)))
        head = new
        if move <= tol:
            return head
    raise NotFound(f"Picard iteration did not stall within {max_iter} sweeps")
