import csv

import numpy as np
import pytest

from shiftbp.errors import QuadratureError, ValidationError
from shiftbp.genfun import (
    UVector,
    adaptive_simpson,
    eval_pgf,
    eval_survival_map,
    ratio_diag,
    remainder_coeff,
    remainder_identity_check,
    residuals,
    survival_map_range,
    survival_scalar,
    write_diagnostics_csv,
)
from shiftbp.law import moments, random_law


def test_uvector_validation():
    with pytest.raises(ValidationError):
        UVector([0.5, 1.2], 0.5)
    with pytest.raises(ValidationError):
        UVector([0.5], 0.0)
    with pytest.raises(ValidationError):
        UVector([], 0.5)


def test_uvector_tail_closure():
    u = UVector([0.5, 0.4], 0.5)
    assert u.coord(2) == 0.4
    assert u.coord(4) == pytest.approx(0.1)
    assert np.allclose(u.window(2, 3), [0.4, 0.2, 0.1])
    assert u.amplitude * 0.5**4 == pytest.approx(u.coord(4))


def test_uvector_prepend_shift_inverse():
    u = UVector.geometric(0.3, 0.8, 10)
    assert u.prepend(0.35).shift_left() == u
    assert u.shift_left(3).coord(1) == pytest.approx(u.coord(4))


def test_uvector_head_is_read_only():
    u = UVector([0.3, 0.2], 0.5)
    with pytest.raises(ValueError):
        u.head[0] = 0.1


@pytest.mark.parametrize("s,expected", [((1, 1), 1.0), ((0, 0), 0.3), ((0.6, 0.6), 0.6)])
def test_eval_pgf_examples(lstar, s, expected):
    assert eval_pgf(lstar, s) == pytest.approx(expected, abs=1e-15)


def test_survival_is_one_minus_pgf():
    rng = np.random.default_rng(1)
    for _ in range(20):
        law = random_law(rng, 4)
        u = rng.uniform(0, 1, law.K)
        assert survival_scalar(law, u) == pytest.approx(1 - eval_pgf(law, 1 - u), abs=1e-14)


@pytest.mark.parametrize("value", [0.4, 0.0])
def test_survival_map_constant_fixed_points(lstar, value):
    u = UVector.constant(value, 5)
    for i in (1, 3, 7):
        assert eval_survival_map(lstar, u, i) == pytest.approx(value, abs=1e-15)


def test_survival_map_linear_example(lstar):
    u = UVector([0.11875, 0.1], 0.5)
    assert eval_survival_map(lstar, u, 1) == pytest.approx(0.11875, abs=1e-15)


def test_survival_map_shift_identity(lstar):
    u = UVector.geometric(0.3, 0.7, 12)
    for i in range(1, 8):
        assert eval_survival_map(lstar, u, i + 1) == pytest.approx(eval_survival_map(lstar, u.shift_left(), i))


def test_survival_map_at_one():
    rng = np.random.default_rng(2)
    law = random_law(rng, 3)
    assert survival_scalar(law, np.ones(law.K)) == pytest.approx(1.0 - law.entries[0].prob)


def test_range_matches_scalar(lstar):
    u = UVector.geometric(0.2, 0.8, 6)
    vec = survival_map_range(lstar, u, 1, 10)
    assert np.allclose(vec, [eval_survival_map(lstar, u, i) for i in range(1, 11)], rtol=0, atol=1e-16)


def test_residuals_constant(lstar):
    rep = residuals(lstar, UVector.constant(0.4, 50))
    assert rep.sup_window <= 1e-15
    assert rep.window == 48


def test_residuals_geometric_seed(lstar):
    u = UVector.geometric(0.1, 0.8, 60)
    rep = residuals(lstar, u)
    j = np.arange(1, rep.window + 1)
    expected = 0.5 * (0.1 * 0.8**j) ** 2
    assert np.allclose(rep.residuals[:20], expected[:20], rtol=1e-10, atol=0)
    assert rep.l2_window == pytest.approx(np.sqrt(np.sum(rep.residuals**2)))
    assert rep.tail_estimate > 0


def test_residuals_need_window(lstar):
    with pytest.raises(ValidationError):
        residuals(lstar, UVector([0.1, 0.05], 0.8))


def test_adaptive_simpson():
    assert adaptive_simpson(np.sin, 0.0, np.pi) == pytest.approx(2.0, abs=1e-10)
    assert adaptive_simpson(lambda x: x**3, 0.0, 1.0) == pytest.approx(0.25, abs=1e-14)


def test_adaptive_simpson_depth_limit():
    with pytest.raises(QuadratureError):
        adaptive_simpson(lambda x: abs(x - 1 / 3) ** 0.1, 0.0, 1.0, tol=1e-15, max_depth=5)


def test_remainder_examples(lstar):
    assert remainder_coeff(lstar, 1, 1, [0.3]) == pytest.approx(0.0, abs=1e-12)
    assert remainder_coeff(lstar, 2, 2, [0.7, 0.1]) == pytest.approx(0.1, abs=1e-10)
    assert remainder_coeff(lstar, 2, 1, [0.5, 0.5]) == 0.0


def test_remainder_index_checks(lstar):
    with pytest.raises(ValueError):
        remainder_coeff(lstar, 1, 2, [0.1, 0.1])


def test_identity_lstar(lstar):
    res = remainder_identity_check(lstar, [0.2, 0.1], tol=1e-8)
    assert res.passed and res.max_deviation <= 1e-10


def test_identity_at_zero():
    rng = np.random.default_rng(8)
    for _ in range(5):
        law = random_law(rng, 4)
        res = remainder_identity_check(law, np.zeros(law.K))
        assert res.passed and res.max_deviation == 0.0


def test_identity_at_survival_level(lstar):
    assert remainder_identity_check(lstar, [0.4, 0.4]).passed


def test_ratio_diag_geometric(lstar):
    u = UVector.geometric(0.2, 0.8, 40)
    d = ratio_diag(moments(lstar), u, 30)
    assert np.allclose(d.alpha, 0.8)
    assert np.allclose(d.U, 1.0)
    assert d.lower_bound == pytest.approx(0.8)


def test_ratio_diag_constant(lstar):
    d = ratio_diag(moments(lstar), UVector.constant(0.3, 10), 5)
    assert np.allclose(d.alpha, 1.0)
    assert np.allclose(d.U, 1.2)


def test_ratio_diag_requires_positive(lstar):
    with pytest.raises(ValidationError):
        ratio_diag(moments(lstar), UVector([0.1, 0.0, 0.0], 0.5), 2)


def test_diagnostics_csv(tmp_path, lstar):
    u = UVector.geometric(0.2, 0.8, 20)
    path = tmp_path / "d.csv"
    write_diagnostics_csv(path, lstar, moments(lstar), u)
    rows = list(csv.DictReader(path.open()))
    assert list(rows[0]) == ["i", "u_i", "s_i", "residual_i", "alpha_i", "U_i"]
    assert float(rows[0]["s_i"]) == pytest.approx(0.8)
    assert len(rows) == 20 - lstar.K
