import numpy as np
import pytest

from shiftbp.construct import (
    Candidate,
    ScanParams,
    TailSeed,
    build_ladder,
    construct_fixed_point,
    crossing_scan,
    default_seed,
    detect_ladder_start,
    family,
    iter_crossings,
    pinned_tail_picard,
)
from shiftbp.errors import NoConvergence, NotFound, RegimeError, ValidationError
from shiftbp.genfun import survival_scalar


def test_tail_seed():
    s = TailSeed(0.5, 0.8)
    assert s.x(3) == pytest.approx(0.5 * 0.8**3)
    assert np.allclose(s.tail(2, 3), [0.5 * 0.8**2, 0.5 * 0.8**3, 0.5 * 0.8**4])
    assert s.tail_norm_sq(10) == pytest.approx(np.sum(s.tail(10, 2000) ** 2))
    with pytest.raises(ValidationError):
        TailSeed(1.2, 0.8)


def test_default_seed(lstar):
    s = default_seed(lstar)
    assert s.amplitude == pytest.approx(0.2)
    assert s.ratio == pytest.approx(0.8)


def test_ladder_ratio_at_30(lstar):
    seed = TailSeed(0.5, 0.8)
    lad = build_ladder(lstar, seed, 30, 1)
    assert lad.etas[0] / seed.x(30) == pytest.approx(1.25, abs=1e-3)


def test_ladder_increasing_and_exact(lstar):
    seed = default_seed(lstar)
    n0 = detect_ladder_start(lstar, seed, 200)
    lad = build_ladder(lstar, seed, n0 + 2, 5)
    assert np.all(np.diff(lad.etas) > 0)
    assert lad.etas[0] > seed.x(n0 + 2)
    assert np.all(lad.solver_residuals <= 1e-13)
    full = np.concatenate([lad.head(), seed.tail(n0 + 2, 1)])
    for i in range(5):
        assert abs(full[i] - survival_scalar(lstar, full[i : i + 2])) <= 1e-13


def test_ladder_decreases_in_n(lstar):
    seed = default_seed(lstar)
    a = build_ladder(lstar, seed, 20, 4).etas
    b = build_ladder(lstar, seed, 21, 4).etas
    assert np.all(b < a)


def test_regime_errors(lsub):
    seed = TailSeed(0.2, 0.5)
    with pytest.raises(RegimeError):
        build_ladder(lsub, seed, 10, 1)
    with pytest.raises(RegimeError):
        detect_ladder_start(lsub, seed, 100)
    with pytest.raises(RegimeError):
        crossing_scan(lsub, seed)
    with pytest.raises(RegimeError):
        construct_fixed_point(lsub)


def test_detect_start_stable(lstar):
    seed = default_seed(lstar)
    n0 = detect_ladder_start(lstar, seed, 200)
    assert detect_ladder_start(lstar, seed, 300) == n0
    for n in range(n0, 201):
        assert build_ladder(lstar, seed, n, 1).etas[0] > seed.x(n)


def test_crossing_norms(lstar):
    seed = default_seed(lstar)
    y0 = float(np.sqrt(seed.tail_norm_sq(detect_ladder_start(lstar, seed, 600))))
    crossings = crossing_scan(lstar, seed, ScanParams(m_max=200))
    assert len(crossings) > 5
    for c in crossings:
        assert y0 < c.norm < y0 + 1
        assert c.prev_norm <= y0
        assert c.norm == pytest.approx(np.sqrt(np.sum(c.coords(c.k + 4000) ** 2)), rel=1e-12)
    ms = [c.m for c in crossings]
    ks = [c.k for c in crossings]
    assert ms == sorted(set(ms)) and ks == sorted(set(ks))


def test_norm_monotone_in_m_and_k(lstar):
    seed = default_seed(lstar)
    k = 10
    norms_m = [np.linalg.norm(np.concatenate([build_ladder(lstar, seed, m, k).etas, seed.tail(m, 3000)]))
               for m in (20, 25, 30)]
    assert norms_m[0] > norms_m[1] > norms_m[2]
    etas = build_ladder(lstar, seed, 20, 12).etas
    tail = np.sum(seed.tail(20, 3000) ** 2)
    norms_k = [np.sqrt(np.sum(etas[:j] ** 2) + tail) for j in range(1, 13)]
    assert np.all(np.diff(norms_k) > 0)


def test_prepend_cap_raises(lstar):
    with pytest.raises(NotFound):
        list(iter_crossings(lstar, default_seed(lstar), ScanParams(prepend_cap=2)))


def test_construct_lstar(lstar_candidate):
    c = lstar_candidate
    assert c.converged
    assert c.residual_report.sup_window <= 1e-8
    assert 0 < c.u.coord(1) < 0.4
    assert c.u.tail_ratio == pytest.approx(0.8)
    assert c.u.is_decreasing()
    assert c.provenance["trace"][-1]["diff"] < 1e-10
    # s-space form r = 1 - u stays below 1 (u > 0) and tends to 1
    u = c.u.coords(c.u.N)
    assert np.all(u > 0) and u[-1] < 1e-10


def test_construct_unreachable_tolerance(lstar):
    with pytest.raises(NoConvergence) as info:
        construct_fixed_point(lstar, conv_tol=1e-30)
    best = info.value.candidate
    assert best is not None and not best.converged
    assert best.provenance["trace"]


def test_candidate_round_trip(lstar, lstar_candidate):
    doc = lstar_candidate.to_document()
    again = Candidate.from_document(doc, lstar)
    assert again.u == lstar_candidate.u
    assert again.converged and again.gamma == lstar_candidate.gamma
    assert again.to_document() == doc


def test_candidate_hash_mismatch(lsub, lstar_candidate):
    with pytest.raises(ValidationError):
        Candidate.from_document(lstar_candidate.to_document(), lsub)


def test_family_prepend(lstar, lstar_candidate):
    rep = family(lstar, lstar_candidate, 20)
    firsts = [m.u.coord(1) for m in rep.members]
    assert rep.all_ordered and len(rep.members) == 20
    assert np.all(np.diff(firsts) > 0) and firsts[-1] < 0.4
    assert firsts[-1] > 0.39


def test_family_shift_left(lstar, lstar_candidate):
    rep = family(lstar, lstar_candidate, 1, "shift_left")
    m = rep.members[0]
    assert m.u.coord(1) == lstar_candidate.u.coord(2)
    assert m.residual_report.sup_window <= 1e-8
    assert rep.all_ordered


def test_family_requires_converged(lstar):
    with pytest.raises(NoConvergence) as info:
        construct_fixed_point(lstar, conv_tol=1e-30)
    with pytest.raises(ValidationError):
        family(lstar, info.value.candidate, 2)


def test_family_document(lstar, lstar_candidate):
    doc = family(lstar, lstar_candidate, 3).to_document()
    assert doc["count"] == 3 and doc["all_ordered"]
    assert doc["law"]["hash"] == lstar.digest


def test_picard_matches_closed_form(lstar):
    # for L* the head solves u_i = (u_{i+1} - u_{i+1}^2/2) / 0.8 backwards
    tail = [0.05]
    picard = pinned_tail_picard(lstar, tail, 6)
    expect = [0.05]
    for _ in range(6):
        t = expect[-1]
        expect.append((t - 0.5 * t * t) / 0.8)
    assert np.allclose(picard, expect[:0:-1], rtol=0, atol=1e-12)
