"""Compiled single-trial simulator.

Consumes the generator in exactly the order used by ``simulate.step`` so the
two paths produce identical outcomes for the same stream.
"""

import numba
import numpy as np

GLOBAL, FINITE, ARITHMETIC = 0, 1, 2
EXTINCT, LOCAL_EXTINCT, SURVIVED = 0, 1, 2


@numba.njit(cache=True, nogil=True)
def run_trial_kernel(rng, probs, cond_probs, ptr, disp, cnt, K, initial_type,
                     max_gen, max_pop, mode, a, b):
    """Return ``(outcome_code, generation)`` for one trial."""
    n_entries = probs.shape[0]
    size = max_gen * (K - 1) + 2
    pop = np.zeros(size, np.int64)
    nxt = np.zeros(size, np.int64)
    draws = np.zeros(n_entries, np.int64)
    pop[0] = 1
    lo = 0
    hi = 0
    total = 1
    gen = 0
    while True:
        if total == 0:
            return EXTINCT, gen
        if mode == FINITE:
            inside = False
            for t in range(lo, hi + 1):
                typ = initial_type + t
                if pop[t] > 0 and a <= typ <= b:
                    inside = True
                    break
            if not inside:
                return LOCAL_EXTINCT, gen
        if gen >= max_gen or total >= max_pop:
            if mode == ARITHMETIC:
                for t in range(lo, hi + 1):
                    if pop[t] > 0 and (initial_type + t) % b == a % b:
                        return SURVIVED, gen
                return LOCAL_EXTINCT, gen
            return SURVIVED, gen

        new_hi = hi + K - 1
        for t in range(lo, new_hi + 1):
            nxt[t] = 0
        for t in range(lo, hi + 1):
            c = pop[t]
            if c == 0:
                continue
            remaining = c
            for e in range(n_entries):
                if remaining == 0:
                    draws[e] = 0
                    continue
                if e == n_entries - 1:
                    draws[e] = remaining
                else:
                    p = cond_probs[e]
                    if p >= 1.0:
                        draws[e] = remaining
                    else:
                        draws[e] = rng.binomial(remaining, p)
                remaining -= draws[e]
            for e in range(n_entries):
                d = draws[e]
                if d == 0:
                    continue
                for z in range(ptr[e], ptr[e + 1]):
                    nxt[t + disp[z]] += d * cnt[z]
        total = 0
        new_lo = -1
        last = lo
        for t in range(lo, new_hi + 1):
            v = nxt[t]
            pop[t] = v
            if v > 0:
                total += v
                if new_lo < 0:
                    new_lo = t
                last = t
        gen += 1
        if total > 0:
            lo = new_lo
            hi = last
