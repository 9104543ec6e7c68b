"""Monte Carlo estimation of global, partial and local extinction.

Each trial starts from one particle and draws from its own Philox stream
keyed by the run seed with the trial index in the high counter word, so
any sharding of the trial range reproduces the same per-trial outcomes.
"""

from __future__ import annotations

import math
import os
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Any, Union

import numpy as np

from . import _kernel
from .errors import ValidationError
from .law import OffspringLaw

Z95 = NormalDist().inv_cdf(0.975)


@dataclass(frozen=True)
class Global:
    def describe(self) -> str:
        return "global"


@dataclass(frozen=True)
class FiniteRange:
    lo: int
    hi: int

    def __post_init__(self):
        if not 1 <= self.lo <= self.hi:
            raise ValidationError(f"finite typeset needs 1 <= lo <= hi, got {self.lo}..{self.hi}")

    def describe(self) -> str:
        return f"finite:{self.lo}..{self.hi}"


@dataclass(frozen=True)
class Arithmetic:
    residue: int
    modulus: int

    def __post_init__(self):
        if self.modulus < 1:
            raise ValidationError("modulus must be positive")

    def describe(self) -> str:
        return f"mod:{self.residue},{self.modulus}"


TypesetSpec = Union[Global, FiniteRange, Arithmetic]


def parse_typeset(text: str) -> TypesetSpec:
    """Parse ``global``, ``finite:LO..HI`` or ``mod:R,M``."""
    text = text.strip()
    if text == "global":
        return Global()
    m = re.fullmatch(r"finite:(\d+)\.\.(\d+)", text)
    if m:
        return FiniteRange(int(m.group(1)), int(m.group(2)))
    m = re.fullmatch(r"mod:(\d+),(\d+)", text)
    if m:
        return Arithmetic(int(m.group(1)), int(m.group(2)))
    raise ValidationError(f"bad typeset {text!r}; expected global, finite:LO..HI or mod:R,M")


@dataclass(frozen=True)
class SimConfig:
    trials: int
    seed: int = 0
    max_generations: int = 500
    max_population: int = 1_000_000
    typeset: TypesetSpec = field(default_factory=Global)
    initial_type: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValidationError("trials must be >= 1")
        if self.max_generations < 1 or self.max_population < 1:
            raise ValidationError("caps must be positive")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")
        if self.initial_type < 1:
            raise ValidationError("initial type must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "trials": self.trials,
            "seed": self.seed,
            "max_generations": self.max_generations,
            "max_population": self.max_population,
            "typeset": self.typeset.describe(),
            "initial_type": self.initial_type,
        }


def trial_rng(seed: int, trial_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, trial_index]))


class _StreamCursor:
    """Reusable generator repositioned onto the stream of each trial.

    Resetting the counter is several times cheaper than building a new
    Philox and yields the same stream as :func:`trial_rng`.
    """

    def __init__(self, seed: int):
        self.bitgen = np.random.Philox(key=seed)
        self.rng = np.random.Generator(self.bitgen)
        self._key = self.bitgen.state["state"]["key"]

    def at(self, trial_index: int) -> np.random.Generator:
        self.bitgen.state = {
            "bit_generator": "Philox",
            "state": {"counter": np.array([0, 0, 0, trial_index], dtype=np.uint64), "key": self._key},
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self.rng


def _cond_probs(law: OffspringLaw) -> np.ndarray:
    p = law.probs
    out = np.empty_like(p)
    for e in range(p.size):
        rest = math.fsum(p[e:])
        out[e] = 1.0 if rest <= p[e] else p[e] / rest
    return out


@dataclass
class Population:
    counts: dict[int, int]
    generation: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def step(pop: Population, law: OffspringLaw, rng: np.random.Generator,
         cond_probs: np.ndarray | None = None) -> Population:
    """One generation: every particle independently picks one offspring entry.

    Per type, the entry counts are drawn as a multinomial by sequential
    binomials in canonical entry order.
    """
    if cond_probs is None:
        cond_probs = _cond_probs(law)
    n_entries = len(law.entries)
    children: dict[int, int] = {}
    for typ in sorted(pop.counts):
        remaining = pop.counts[typ]
        if remaining == 0:
            continue
        for e, (_, pairs) in enumerate(law.sparse_entries):
            if remaining == 0:
                break
            if e == n_entries - 1 or cond_probs[e] >= 1.0:
                d = remaining
            else:
                d = int(rng.binomial(remaining, cond_probs[e]))
            remaining -= d
            if d == 0:
                continue
            for k, c in pairs:
                child = typ + k
                children[child] = children.get(child, 0) + d * c
    return Population({t: c for t, c in children.items() if c > 0}, pop.generation + 1)


@dataclass(frozen=True)
class Outcome:
    kind: str  # "extinct", "local_extinct" or "survived"
    generation: int


_KINDS = {_kernel.EXTINCT: "extinct", _kernel.LOCAL_EXTINCT: "local_extinct", _kernel.SURVIVED: "survived"}


def _classify_python(pop: Population, config: SimConfig) -> str | None:
    ts = config.typeset
    if pop.total == 0:
        return "extinct"
    if isinstance(ts, FiniteRange) and not any(ts.lo <= t <= ts.hi for t in pop.counts):
        return "local_extinct"
    if pop.generation >= config.max_generations or pop.total >= config.max_population:
        if isinstance(ts, Arithmetic):
            hit = any(t % ts.modulus == ts.residue % ts.modulus for t in pop.counts)
            return "survived" if hit else "local_extinct"
        return "survived"
    return None


class _Packed:
    """Flat arrays of a law for the compiled kernel."""

    def __init__(self, law: OffspringLaw):
        self.probs = law.probs
        self.cond = _cond_probs(law)
        ptr, disp, cnt = [0], [], []
        for _, pairs in law.sparse_entries:
            for k, c in pairs:
                disp.append(k)
                cnt.append(c)
            ptr.append(len(disp))
        self.ptr = np.array(ptr, dtype=np.int64)
        self.disp = np.array(disp, dtype=np.int64)
        self.cnt = np.array(cnt, dtype=np.int64)
        self.K = law.K


def _mode(ts: TypesetSpec) -> tuple[int, int, int]:
    if isinstance(ts, FiniteRange):
        return _kernel.FINITE, ts.lo, ts.hi
    if isinstance(ts, Arithmetic):
        return _kernel.ARITHMETIC, ts.residue, ts.modulus
    return _kernel.GLOBAL, 0, 1


def run_trial(law: OffspringLaw, config: SimConfig, trial_index: int, *, engine: str = "compiled",
              packed: _Packed | None = None) -> Outcome:
    """Simulate one trial until extinction, local extinction or a cap.

    ``engine="python"`` steps a :class:`Population` with :func:`step`; the
    compiled engine gives identical outcomes and is the default.
    """
    rng = trial_rng(config.seed, trial_index)
    if engine == "python":
        pop = Population({config.initial_type: 1})
        cond = _cond_probs(law)
        while True:
            kind = _classify_python(pop, config)
            if kind is not None:
                return Outcome(kind, pop.generation)
            pop = step(pop, law, rng, cond)
    if engine != "compiled":
        raise ValueError(f"unknown engine {engine!r}")
    pk = packed or _Packed(law)
    mode, a, b = _mode(config.typeset)
    code, gen = _kernel.run_trial_kernel(
        rng, pk.probs, pk.cond, pk.ptr, pk.disp, pk.cnt, pk.K, config.initial_type,
        config.max_generations, config.max_population, mode, a, b)
    return Outcome(_KINDS[int(code)], int(gen))


def wilson_interval(successes: int, n: int, z: float = Z95) -> tuple[float, float]:
    if n <= 0:
        raise ValueError("n must be positive")
    p = successes / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    # the exact interval always contains p; clamp away rounding at the edges
    return max(0.0, min(p, centre - half)), min(1.0, max(p, centre + half))


@dataclass(frozen=True)
class ExtinctionEstimate:
    p_hat: float
    wilson_ci_95: tuple[float, float]
    counts: dict[str, int]
    config: SimConfig
    shard: tuple[int, int]

    @property
    def n(self) -> int:
        return self.shard[1] - self.shard[0]

    @property
    def censored(self) -> bool:
        return self.counts["survived"] > 0

    def to_document(self) -> dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "shard": list(self.shard),
            "p_hat": self.p_hat,
            "ci": list(self.wilson_ci_95),
            "counts": dict(self.counts),
            "censored": self.censored,
            "caveat": ("survival is a proxy: trials counted as surviving hit the generation "
                       "or population cap") if self.censored else None,
        }


def _from_counts(counts: dict[str, int], config: SimConfig, shard: tuple[int, int]) -> ExtinctionEstimate:
    n = shard[1] - shard[0]
    hits = counts["extinct"] + counts["local_extinct"]
    return ExtinctionEstimate(hits / n, wilson_interval(hits, n), dict(counts), config, shard)


def default_workers() -> int:
    env = os.environ.get("SHIFTBP_THREADS")
    cpus = os.cpu_count() or 1
    if env:
        try:
            return max(1, min(int(env), cpus))
        except ValueError:
            pass
    return cpus


def estimate_extinction(law: OffspringLaw, config: SimConfig, start: int = 0, stop: int | None = None,
                        *, workers: int | None = None, engine: str = "compiled") -> ExtinctionEstimate:
    """Extinct fraction over trials ``start .. stop-1`` with a Wilson 95% interval.

    Extinct means globally extinct, or locally extinct for finite and
    arithmetic typesets.
    """
    stop = config.trials if stop is None else stop
    if not 0 <= start < stop <= config.trials:
        raise ValueError(f"bad shard [{start}, {stop}) for {config.trials} trials")
    workers = workers or default_workers()
    packed = _Packed(law)

    def run(lo: int, hi: int) -> Counter:
        tally = Counter()
        if engine == "python":
            for i in range(lo, hi):
                tally[run_trial(law, config, i, engine="python").kind] += 1
            return tally
        cursor = _StreamCursor(config.seed)
        mode, a, b = _mode(config.typeset)
        kernel = _kernel.run_trial_kernel
        codes = [0, 0, 0]
        for i in range(lo, hi):
            code, _ = kernel(cursor.at(i), packed.probs, packed.cond, packed.ptr, packed.disp, packed.cnt,
                             packed.K, config.initial_type, config.max_generations,
                             config.max_population, mode, a, b)
            codes[code] += 1
        for code, kind in _KINDS.items():
            tally[kind] += codes[code]
        return tally

    if workers <= 1 or stop - start < 2 * workers:
        tally = run(start, stop)
    else:
        edges = np.linspace(start, stop, workers + 1).astype(int)
        with ThreadPoolExecutor(workers) as pool:
            parts = pool.map(run, edges[:-1], edges[1:])
            tally = sum(parts, Counter())
    counts = {k: int(tally.get(k, 0)) for k in ("extinct", "local_extinct", "survived")}
    return _from_counts(counts, config, (start, stop))


def merge_estimates(*estimates: ExtinctionEstimate) -> ExtinctionEstimate:
    """Combine estimates over adjacent shards of the same configuration."""
    if not estimates:
        raise ValueError("nothing to merge")
    parts = sorted(estimates, key=lambda e: e.shard)
    config = parts[0].config
    for a, b in zip(parts, parts[1:]):
        if b.config != config:
            raise ValidationError("cannot merge estimates with different configurations")
        if a.shard[1] != b.shard[0]:
            raise ValidationError(f"shards {a.shard} and {b.shard} are not adjacent")
    counts = Counter()
    for e in parts:
        counts.update(e.counts)
    merged = {k: int(counts.get(k, 0)) for k in ("extinct", "local_extinct", "survived")}
    return _from_counts(merged, config, (parts[0].shard[0], parts[-1].shard[1]))
