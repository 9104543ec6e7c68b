"""Property checks bundled by ``shiftbp verify``."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .construct import TailSeed, build_ladder, detect_ladder_start, pinned_tail_picard
from .errors import ShiftBPError
from .genfun import UVector, eval_survival_map, remainder_identity_check
from .law import MomentSummary, OffspringLaw, moments
from .roots import solve_decay_rate, solve_extinction, solve_prepend

PASS, FAIL, SKIPPED = "pass", "fail", "skipped"


@dataclass
class CheckResult:
    name: str
    status: str
    detail: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "status": self.status, **self.detail}


def random_decreasing(rng: np.random.Generator, n: int, top: float = 0.9) -> np.ndarray:
    """Strictly decreasing positive vector of length ``n`` below ``top``."""
    ratios = rng.uniform(0.3, 0.99, size=n)
    return top * rng.uniform(0.05, 1.0) * np.cumprod(ratios)


def check_roots(summary: MomentSummary) -> list[CheckResult]:
    q = solve_extinction(summary)
    out = [CheckResult("extinction_residual",
                       PASS if abs(summary.total_pgf_value(q.value) - q.value) <= 1e-12 else FAIL,
                       {"q": q.value, "residual": abs(summary.total_pgf_value(q.value) - q.value)})]
    if summary.supercritical:
        g = solve_decay_rate(summary)
        r = abs(summary.mean_poly(g.value) - 1.0)
        out.append(CheckResult("decay_rate_residual", PASS if r <= 1e-12 else FAIL,
                               {"gamma": g.value, "residual": r}))
    else:
        out.append(CheckResult("decay_rate_residual", SKIPPED, {"reason": "M <= 1"}))
    return out


def check_remainder_identity(law: OffspringLaw, summary: MomentSummary, rng: np.random.Generator,
                             cases: int) -> CheckResult:
    worst = 0.0
    failures = 0
    for _ in range(cases):
        u = rng.uniform(0.0, 1.0, size=law.K) * (1 - 1e-9)
        res = remainder_identity_check(law, u, tol=1e-8, summary=summary)
        worst = max(worst, res.max_deviation)
        failures += not res.passed
    return CheckResult("remainder_identity", PASS if failures == 0 else FAIL,
                       {"cases": cases, "failures": failures, "max_deviation": worst})


def check_domination(law: OffspringLaw, summary: MomentSummary, rng: np.random.Generator,
                     cases: int) -> CheckResult:
    failures = 0
    for _ in range(cases):
        u = UVector(random_decreasing(rng, law.K + 4), rng.uniform(0.2, 0.99))
        for i in range(1, 5):
            if eval_survival_map(law, u, i) > summary.total_mean * u.coord(i) * (1 + 1e-12):
                failures += 1
    return CheckResult("domination", PASS if failures == 0 else FAIL, {"cases": cases, "failures": failures})


def check_map_monotone(law: OffspringLaw, rng: np.random.Generator, cases: int) -> CheckResult:
    failures = 0
    for _ in range(cases):
        v = rng.uniform(0.0, 1.0, size=law.K + 4)
        u = v * rng.uniform(0.0, 1.0, size=v.size)
        U, V = UVector(u, 0.5), UVector(v, 0.5)
        for i in range(1, 5):
            if eval_survival_map(law, U, i) > eval_survival_map(law, V, i) + 1e-15:
                failures += 1
    return CheckResult("survival_map_monotone", PASS if failures == 0 else FAIL,
                       {"cases": cases, "failures": failures})


def check_prepend_monotone(law: OffspringLaw, summary: MomentSummary, rng: np.random.Generator,
                           cases: int) -> CheckResult:
    failures = 0
    strict = law.K >= 2 and summary.means[1] > 0
    for _ in range(cases):
        t1 = rng.uniform(0.0, 0.99, size=max(law.K - 1, 1))
        t2 = t1 * rng.uniform(0.0, 1.0, size=t1.size)
        if law.K >= 2:
            t2[0] = t1[0] * rng.uniform(0.0, 0.999)
        a = solve_prepend(law, t1).value
        b = solve_prepend(law, t2).value
        if a < b or (strict and not a > b):
            failures += 1
    return CheckResult("prepend_monotone", PASS if failures == 0 else FAIL,
                       {"cases": cases, "failures": failures, "strict": strict})


def check_ladder_ratio(law: OffspringLaw, summary: MomentSummary) -> CheckResult:
    if not summary.supercritical:
        return CheckResult("ladder_ratio", SKIPPED, {"reason": "M <= 1"})
    gamma = solve_decay_rate(summary).value
    q = solve_extinction(summary).value
    seed = TailSeed((1 - q) / 2, gamma)
    devs = []
    for n in (50, 100, 200):
        lad = build_ladder(law, seed, n, 1)
        devs.append(abs(lad.etas[0] / seed.x(n) - 1.0 / gamma))
    ok = devs[0] > devs[1] > devs[2] and devs[2] <= 1e-3
    return CheckResult("ladder_ratio", PASS if ok else FAIL, {"n": [50, 100, 200], "deviation": devs})


def check_picard_oracle(law: OffspringLaw, summary: MomentSummary, depth: int = 12) -> CheckResult:
    if not summary.supercritical:
        return CheckResult("picard_oracle", SKIPPED, {"reason": "M <= 1"})
    gamma = solve_decay_rate(summary).value
    q = solve_extinction(summary).value
    seed = TailSeed((1 - q) / 2, gamma)
    n = detect_ladder_start(law, seed, 200) + 3
    lad = build_ladder(law, seed, n, depth)
    picard = pinned_tail_picard(law, seed.tail(n, law.K), depth)
    dev = float(np.max(np.abs(lad.head() - picard)))
    return CheckResult("picard_oracle", PASS if dev <= 1e-9 else FAIL, {"n": n, "depth": depth, "max_deviation": dev})


def run_suite(law: OffspringLaw, seed: int = 0, cases: int = 100) -> list[CheckResult]:
    summary = moments(law)
    rng = np.random.default_rng(seed)
    results = check_roots(summary)
    steps = [
        ("remainder_identity", lambda: check_remainder_identity(law, summary, rng, cases)),
        ("domination", lambda: check_domination(law, summary, rng, cases)),
        ("survival_map_monotone", lambda: check_map_monotone(law, rng, cases)),
        ("prepend_monotone", lambda: check_prepend_monotone(law, summary, rng, cases)),
        ("ladder_ratio", lambda: check_ladder_ratio(law, summary)),
        ("picard_oracle", lambda: check_picard_oracle(law, summary)),
    ]
    for name, run in steps:
        try:
            results.append(run())
        except ShiftBPError as exc:
            results.append(CheckResult(name, FAIL, {"error": str(exc)}))
    return results
