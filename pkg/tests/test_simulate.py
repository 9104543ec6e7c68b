import math

import numpy as np
import pytest

from shiftbp.errors import ValidationError
from shiftbp.law import random_law
from shiftbp.simulate import (
    Arithmetic,
    FiniteRange,
    Global,
    Population,
    SimConfig,
    _StreamCursor,
    estimate_extinction,
    merge_estimates,
    parse_typeset,
    run_trial,
    step,
    trial_rng,
    wilson_interval,
)


class _FixedDraws:
    """Stand-in generator returning scripted binomial draws."""

    def __init__(self, draws):
        self.draws = list(draws)

    def binomial(self, n, p):
        return min(n, self.draws.pop(0))


def test_step_zero_entry(lstar):
    # canonical entry order: (), (0, 2), (1,)
    out = step(Population({1: 1}), lstar, _FixedDraws([1]))
    assert out.total == 0 and out.generation == 1


def test_step_double_jump(lstar):
    out = step(Population({1: 1}), lstar, _FixedDraws([0, 1]))
    assert out.counts == {2: 2}


def test_step_mean(lstar):
    n = 100_000
    rng = np.random.default_rng(5)
    out = step(Population({1: n}), lstar, rng)
    # the total after one step from n particles is a sum of n iid totals (variance 0.76 each)
    sigma = math.sqrt(0.76 / n)
    assert abs(out.total / n - 1.2) <= 3 * sigma


def test_entry_frequencies_chi_square(lstar):
    n = 1_000_000
    out = step(Population({1: n}), lstar, np.random.default_rng(6))
    observed = np.array([n - out.counts.get(1, 0) - out.counts.get(2, 0) // 2,
                         out.counts.get(1, 0), out.counts.get(2, 0) // 2])
    expected = n * np.array([0.3, 0.2, 0.5])
    z = (observed - expected) / np.sqrt(expected * (1 - expected / n))
    assert np.all(np.abs(z) <= 4)
    chi2 = float(np.sum((observed - expected) ** 2 / expected))
    assert chi2 < 18.4  # 0.9999 quantile with 2 degrees of freedom


def test_children_never_below_parent():
    rng = np.random.default_rng(12)
    for _ in range(30):
        law = random_law(rng, 5)
        pop = Population({int(t): int(c) for t, c in zip(rng.integers(1, 20, 4), rng.integers(1, 50, 4))})
        out = step(pop, law, rng)
        if out.counts:
            assert min(out.counts) >= min(pop.counts)
            assert max(out.counts) <= max(pop.counts) + law.K - 1


def test_parse_typeset():
    assert parse_typeset("global") == Global()
    assert parse_typeset("finite:1..10") == FiniteRange(1, 10)
    assert parse_typeset("mod:0,2") == Arithmetic(0, 2)
    for bad in ("finite:3..1", "mod:1,0", "local", "finite:a..b"):
        with pytest.raises(ValidationError):
            parse_typeset(bad)


def test_config_validation():
    with pytest.raises(ValidationError):
        SimConfig(0)
    with pytest.raises(ValidationError):
        SimConfig(10, max_generations=0)


def test_stream_cursor_matches_fresh_generator():
    cur = _StreamCursor(42)
    for i in (0, 7, 3, 10**9):
        assert np.array_equal(cur.at(i).random(5), trial_rng(42, i).random(5))


def test_engines_agree(lstar):
    for typeset in (Global(), FiniteRange(1, 4), Arithmetic(1, 3)):
        cfg = SimConfig(40, seed=3, max_generations=60, max_population=5000, typeset=typeset)
        for i in range(40):
            assert run_trial(lstar, cfg, i, engine="python") == run_trial(lstar, cfg, i)


def test_trial_deterministic(lstar):
    cfg = SimConfig(5, seed=99)
    assert [run_trial(lstar, cfg, i) for i in range(5)] == [run_trial(lstar, cfg, i) for i in range(5)]


def test_estimate_deterministic_and_mergeable(lstar):
    cfg = SimConfig(4000, seed=11, max_generations=200, max_population=10_000)
    full = estimate_extinction(lstar, cfg)
    again = estimate_extinction(lstar, cfg, workers=1)
    a = estimate_extinction(lstar, cfg, 0, 1500)
    b = estimate_extinction(lstar, cfg, 1500, 4000)
    merged = merge_estimates(b, a)
    assert full.counts == again.counts == merged.counts
    assert full.p_hat == merged.p_hat and full.wilson_ci_95 == merged.wilson_ci_95
    assert sum(full.counts.values()) == 4000


def test_merge_rejects_gaps(lstar):
    cfg = SimConfig(100, seed=1)
    a = estimate_extinction(lstar, cfg, 0, 10)
    c = estimate_extinction(lstar, cfg, 20, 30)
    with pytest.raises(ValidationError):
        merge_estimates(a, c)
    with pytest.raises(ValidationError):
        merge_estimates(a, estimate_extinction(lstar, SimConfig(100, seed=2), 10, 20))


def test_python_engine_estimate(lstar):
    cfg = SimConfig(200, seed=4, max_generations=100, max_population=10_000)
    assert estimate_extinction(lstar, cfg, engine="python").counts == estimate_extinction(lstar, cfg).counts


def test_subcritical_always_extinct(lsub):
    est = estimate_extinction(lsub, SimConfig(10_000, seed=0))
    assert est.counts["extinct"] == 10_000 and not est.censored


def test_finite_range_always_left(lstar):
    est = estimate_extinction(lstar, SimConfig(10_000, seed=0, typeset=FiniteRange(1, 10)))
    assert est.p_hat == 1.0 and est.counts["survived"] == 0


def test_consistency_with_extinction_probability(lstar):
    trials = 20_000
    est = estimate_extinction(lstar, SimConfig(trials, seed=8))
    assert abs(est.p_hat - 0.6) <= 4 * math.sqrt(0.24 / trials)
    lo, hi = est.wilson_ci_95
    assert lo <= est.p_hat <= hi
    doc = est.to_document()
    assert doc["censored"] and doc["caveat"]
    assert doc["config"]["typeset"] == "global"


@pytest.mark.parametrize("k,n", [(0, 10), (10, 10), (3, 10), (600, 1000)])
def test_wilson_interval(k, n):
    lo, hi = wilson_interval(k, n)
    assert 0.0 <= lo <= k / n <= hi <= 1.0


def test_wilson_reference_value():
    # 95% Wilson interval for 60/100
    lo, hi = wilson_interval(60, 100)
    assert lo == pytest.approx(0.502002, abs=1e-6)
    assert hi == pytest.approx(0.690599, abs=1e-6)


def test_threads_env(monkeypatch):
    from shiftbp.simulate import default_workers

    monkeypatch.setenv("SHIFTBP_THREADS", "1")
    assert default_workers() == 1
