"""Shift-invariant offspring laws: parsing, moments and assumption checks.

A law lists finitely many offspring configurations.  ``counts[k-1]`` is the
number of children placed at displacement ``k``, i.e. at type ``i + k - 1``
for a parent of type ``i``.  Because reproduction depends only on the
displacement, one law describes every type.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import ParseError, ValidationError

PROB_SUM_TOL = 1e-12
DEFAULT_N_TRUNC = 64
REGIME_TOL = 1e-12


@dataclass(frozen=True, order=True)
class OffspringEntry:
    counts: tuple[int, ...]
    prob: float

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def max_index(self) -> int:
        """Largest displacement with a nonzero count (0 for the empty brood)."""
        return len(self.counts)


@dataclass(frozen=True)
class OffspringLaw:
    """Validated finite-support offspring law.

    Entries are stored with trailing zeros stripped and sorted by counts;
    build instances through :func:`make_law` or :func:`load_law`.
    """

    name: str
    entries: tuple[OffspringEntry, ...]
    K: int

    @cached_property
    def probs(self) -> np.ndarray:
        return np.array([e.prob for e in self.entries], dtype=float)

    @cached_property
    def count_matrix(self) -> np.ndarray:
        """Dense ``(n_entries, K)`` array of counts."""
        mat = np.zeros((len(self.entries), self.K), dtype=np.int64)
        for row, e in enumerate(self.entries):
            mat[row, : len(e.counts)] = e.counts
        return mat

    @cached_property
    def sparse_entries(self) -> tuple[tuple[float, tuple[tuple[int, int], ...]], ...]:
        """``(prob, ((offset, count), ...))`` with zero counts dropped; offsets are 0-based."""
        return tuple(
            (e.prob, tuple((k, c) for k, c in enumerate(e.counts) if c > 0))
            for e in self.entries
        )

    def to_document(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "offspring": [
                {"counts": list(e.counts) + [0] * (self.K - len(e.counts)), "prob": e.prob}
                for e in self.entries
            ],
        }

    def dumps(self) -> str:
        """Canonical serialization; the law hash is computed from this text."""
        return json.dumps(self.to_document(), sort_keys=True, separators=(",", ":"))

    @cached_property
    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()


def _canonical_counts(raw: Sequence[int]) -> tuple[int, ...]:
    counts = list(raw)
    while counts and counts[-1] == 0:
        counts.pop()
    return tuple(counts)


def make_law(name: str, offspring: Sequence[tuple[Sequence[int], float]]) -> OffspringLaw:
    """Canonicalize and validate ``(counts, prob)`` pairs into a law.

    Raises:
        ValidationError: on negative or non-integer counts, probabilities
            outside (0, 1], duplicates, a probability sum off by more than
            1e-12, a missing empty-brood entry, or a law with no children at all.
    """
    entries = []
    seen = set()
    for idx, (raw_counts, prob) in enumerate(offspring):
        for c in raw_counts:
            if isinstance(c, bool) or not isinstance(c, (int, np.integer)):
                raise ValidationError(f"entry {idx}: counts must be integers, got {c!r}")
            if c < 0:
                raise ValidationError(f"entry {idx}: negative count {c}")
        prob = float(prob)
        if not math.isfinite(prob) or prob <= 0.0 or prob > 1.0:
            raise ValidationError(f"entry {idx}: probability {prob} not in (0, 1]")
        counts = _canonical_counts(int(c) for c in raw_counts)
        if counts in seen:
            raise ValidationError(f"entry {idx}: duplicate counts {list(counts)}")
        seen.add(counts)
        entries.append(OffspringEntry(counts, prob))

    total = math.fsum(e.prob for e in entries)
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise ValidationError(f"probabilities sum to {total!r}, not 1 (tolerance {PROB_SUM_TOL})")
    if () not in seen:
        raise ValidationError("A2 violated: no zero-offspring entry with positive probability")
    K = max(len(e.counts) for e in entries)
    if K == 0:
        raise ValidationError("degenerate law: every entry has zero offspring")
    entries.sort(key=lambda e: e.counts)
    return OffspringLaw(name=str(name), entries=tuple(entries), K=K)


def parse_law_document(doc: Any) -> OffspringLaw:
    if not isinstance(doc, dict):
        raise ParseError("law document must be a JSON object")
    if "offspring" not in doc:
        raise ParseError("law document lacks 'offspring'")
    name = doc.get("name", "unnamed")
    if not isinstance(name, str):
        raise ParseError("'name' must be a string")
    rows = doc["offspring"]
    if not isinstance(rows, list) or not rows:
        raise ParseError("'offspring' must be a non-empty list")
    pairs = []
    for idx, row in enumerate(rows):
        if not isinstance(row, dict) or "counts" not in row or "prob" not in row:
            raise ParseError(f"offspring[{idx}] must be an object with 'counts' and 'prob'")
        counts, prob = row["counts"], row["prob"]
        if not isinstance(counts, list):
            raise ParseError(f"offspring[{idx}].counts must be a list")
        if isinstance(prob, bool) or not isinstance(prob, (int, float)):
            raise ParseError(f"offspring[{idx}].prob must be a number")
        pairs.append((counts, prob))
    return make_law(name, pairs)


def load_law(source: str | Path) -> OffspringLaw:
    """Load a law from a JSON string or a path to a JSON file."""
    text = None
    if isinstance(source, Path):
        text = source.read_text(encoding="utf-8")
    else:
        stripped = source.lstrip()
        if stripped.startswith("{"):
            text = source
        else:
            path = Path(source)
            if not path.is_file():
                raise ParseError(f"no such law file: {source}")
            text = path.read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}") from exc
    return parse_law_document(doc)


@dataclass(frozen=True)
class MomentSummary:
    """Moment data of a law.

    ``top_probs[k]`` is the probability that the largest occupied
    displacement is ``k`` (index 0 is the empty brood).  ``cond_means[k][j]``
    is the mean count at displacement ``j`` given that largest displacement
    ``k`` (1-based, zero where ``top_probs[k] == 0``).  ``means[i-1]`` is the
    mean number of children at displacement ``i``.
    """

    top_probs: np.ndarray
    cond_means: np.ndarray
    means: np.ndarray
    total_mean: float
    total_pgf: np.ndarray
    mean_matrix: np.ndarray = field(repr=False)

    @property
    def K(self) -> int:
        return len(self.means)

    @property
    def supercritical(self) -> bool:
        return self.total_mean > 1.0 + REGIME_TOL

    def total_pgf_value(self, s: float) -> float:
        acc = 0.0
        for c in self.total_pgf[::-1]:
            acc = acc * s + c
        return acc

    def total_pgf_deriv(self, s: float) -> float:
        acc = 0.0
        n = len(self.total_pgf)
        for d in range(n - 1, 0, -1):
            acc = acc * s + d * self.total_pgf[d]
        return acc

    def mean_poly(self, s: float) -> float:
        """Sum of ``means[i-1] * s**(i-1)`` by Horner's scheme."""
        acc = 0.0
        for m in self.means[::-1]:
            acc = acc * s + m
        return acc


def toeplitz_mean_matrix(means: Sequence[float], size: int) -> np.ndarray:
    mat = np.zeros((size, size))
    for k, m in enumerate(means):
        if k >= size:
            break
        idx = np.arange(size - k)
        mat[idx, idx + k] = m
    return mat


def moments(law: OffspringLaw, n_trunc: int = DEFAULT_N_TRUNC) -> MomentSummary:
    K = law.K
    top = np.zeros(K + 1)
    weighted = np.zeros((K + 1, K + 1))
    max_total = max(e.total for e in law.entries)
    pgf = np.zeros(max_total + 1)
    for e in law.entries:
        k = e.max_index
        top[k] += e.prob
        for j, c in enumerate(e.counts, start=1):
            weighted[k, j] += e.prob * c
        pgf[e.total] += e.prob
    cond = np.zeros_like(weighted)
    nz = top > 0
    cond[nz] = weighted[nz] / top[nz, None]
    # M_i straight from the entries; sum_k h_k a_{k,i} agrees up to rounding
    means = law.probs @ law.count_matrix.astype(float)
    total_mean = float(math.fsum(means))
    return MomentSummary(
        top_probs=top,
        cond_means=cond,
        means=means,
        total_mean=total_mean,
        total_pgf=pgf,
        mean_matrix=toeplitz_mean_matrix(means, n_trunc),
    )


@dataclass(frozen=True)
class A1Check:
    passed: bool
    witness: tuple[int, int] | None = None


def a1_oracle(summary: MomentSummary, n_max: int) -> A1Check:
    """Brute-force reachability over the boolean semiring.

    Checks that for every ``1 <= i <= k <= n_max`` some power of the truncated
    mean matrix has a positive ``(i, k)`` entry.
    """
    size = summary.mean_matrix.shape[0]
    if size < 3 * n_max:
        raise ValueError(f"mean matrix of size {size} too small for n_max={n_max}")
    adj = (summary.mean_matrix > 0).astype(np.int64)
    power = adj.copy()
    reach = adj > 0
    # paths never leave [i, k], so lengths up to size cover everything
    for _ in range(size - 1):
        power = ((power @ adj) > 0).astype(np.int64)
        if not power.any():
            break
        reach |= power > 0
    for i in range(n_max):
        for k in range(i, n_max):
            if not reach[i, k]:
                return A1Check(False, (i + 1, k + 1))
    return A1Check(True)


@dataclass(frozen=True)
class Verdict:
    passed: bool
    detail: str = ""


@dataclass(frozen=True)
class AssumptionReport:
    a1: Verdict
    a1_oracle: A1Check
    a2: Verdict
    a3: Verdict
    regime: str

    @property
    def all_passed(self) -> bool:
        return self.a1.passed and self.a2.passed and self.a3.passed

    def to_dict(self) -> dict[str, Any]:
        return {
            "a1": {"pass": self.a1.passed, "witness": self.a1.detail,
                   "oracle_pass": self.a1_oracle.passed,
                   "oracle_witness": list(self.a1_oracle.witness) if self.a1_oracle.witness else None},
            "a2": {"pass": self.a2.passed, "detail": self.a2.detail},
            "a3": {"pass": self.a3.passed, "detail": self.a3.detail},
            "regime": self.regime,
        }


SUPERCRITICAL = "Supercritical"
NON_SUPERCRITICAL = "NonSupercritical"


def check_assumptions(law: OffspringLaw, summary: MomentSummary, n_max: int = 10) -> AssumptionReport:
    M1 = summary.means[0]
    M2 = summary.means[1] if summary.K >= 2 else 0.0
    if M1 <= 0:
        a1 = Verdict(False, "type i unreachable from itself (M1 = 0)")
    elif M2 <= 0:
        a1 = Verdict(False, "type i+1 unreachable from type i (M2 = 0)")
    else:
        a1 = Verdict(True)
    oracle = a1_oracle(summary, min(n_max, summary.mean_matrix.shape[0] // 3))

    has_empty = any(e.counts == () for e in law.entries)
    has_branching = any(e.total >= 2 for e in law.entries)
    if not has_empty:
        a2 = Verdict(False, "P(0) = 0")
    elif not has_branching:
        # without branching every particle has at most one child, so M < 1 and the
        # process is subcritical; the condition only matters for supercritical laws
        a2 = Verdict(True, "no entry with two or more children (vacuous: M < 1)")
    else:
        a2 = Verdict(True)

    a3 = Verdict(True) if M1 < 1.0 else Verdict(False, f"M1 = {M1} >= 1")
    regime = SUPERCRITICAL if summary.supercritical else NON_SUPERCRITICAL
    return AssumptionReport(a1=a1, a1_oracle=oracle, a2=a2, a3=a3, regime=regime)


def random_law(rng: np.random.Generator, max_k: int = 4, *, supercritical: bool | None = None,
               max_tries: int = 1000) -> OffspringLaw:
    """Draw a random law satisfying A1-A3.

    ``supercritical`` forces the regime when not None.  Used by the property
    suites and by ``verify``.
    """
    for _ in range(max_tries):
        K = int(rng.integers(2, max_k + 1))
        support = {(): None, (1,): None, (0, 1): None}
        for _ in range(int(rng.integers(1, 4))):
            counts = list(rng.integers(0, 3, size=K))
            counts[-1] = int(rng.integers(1, 3))
            if sum(counts) < 2:
                counts[-1] = 2
            support[_canonical_counts(counts)] = None
        keys = list(support)
        weights = rng.dirichlet(np.ones(len(keys)))
        weights = np.maximum(weights, 1e-3)
        weights /= weights.sum()
        probs = [float(round(w, 12)) for w in weights[:-1]]
        probs.append(1.0 - math.fsum(probs))
        if probs[-1] <= 0:
            continue
        law = make_law("random", list(zip([list(k) for k in keys], probs)))
        s = moments(law)
        if not s.means[0] < 1.0:
            continue
        if supercritical is True and not s.total_mean > 1.05:
            continue
        if supercritical is False and not s.total_mean < 0.95:
            continue
        return law
    raise RuntimeError("could not draw a law with the requested regime")
