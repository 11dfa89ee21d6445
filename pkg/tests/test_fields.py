import math

import numpy as np
import pytest

from degell.errors import ComparabilityError, EvaluationError, ExpressionError
from degell.fields import (
    MatrixField,
    ScalarExpr,
    check_subunit,
    estimate_comparability,
    eval_matrix,
    halton_points,
    quadratic_form,
    unit_directions,
)


def test_expr_basics():
    assert ScalarExpr("2 + 3*4").evaluate([[0.0]])[0] == 14.0
    assert ScalarExpr("x^2").evaluate([[3.0]])[0] == 9.0
    assert ScalarExpr("min(x, 0.5) + max(y, 2)").evaluate([[1.0, 1.0]])[0] == 2.5
    np.testing.assert_allclose(
        ScalarExpr("sin(x)*cos(y)").evaluate([[0.3, 0.7]])[0],
        math.sin(0.3) * math.cos(0.7),
    )
    assert ScalarExpr("-1").evaluate([[0.0]])[0] == -1.0
    assert ScalarExpr("exp(0)").evaluate([[5.0]])[0] == 1.0
    assert ScalarExpr("(1+x)^0.5").evaluate([[3.0]])[0] == 2.0


def test_expr_parse_errors():
    for bad in ["si n(x)", "1 +", "foo(x)", "min(x)", "x^(y)", "2 **3", ""]:
        with pytest.raises(ExpressionError):
            ScalarExpr(bad)


def test_expr_nonfinite_evaluation():
    expr = ScalarExpr("1/x")
    with pytest.raises(EvaluationError) as err:
        expr.evaluate([[0.0]])
    assert err.value.point == (0.0,)


def test_eval_matrix_constant_identity():
    np.testing.assert_allclose(eval_matrix(MatrixField.identity(1), [0.3]), [[1.0]])


def test_eval_matrix_grushin():
    grushin = MatrixField.from_entries(2, e11="1", e22="x^2")
    np.testing.assert_allclose(
        eval_matrix(grushin, [0.5, 0.2]), [[1.0, 0.0], [0.0, 0.25]]
    )


def test_eval_matrix_singular_entry():
    field = MatrixField.from_entries(1, e11="1/x")
    with pytest.raises(EvaluationError):
        eval_matrix(field, [0.0])


@pytest.fixture
def points2d():
    return halton_points(((0.0, 1.0), (0.0, 1.0)), 60, seed=0)


def test_subunit_axis_field(points2d):
    rep = check_subunit([ScalarExpr("1"), ScalarExpr("0")], MatrixField.identity(2), points2d)
    assert rep.ok
    assert rep.worst_ratio <= 1.0 + 1e-12


def test_subunit_violation_witness(points2d):
    rep = check_subunit([ScalarExpr("2"), ScalarExpr("0")], MatrixField.identity(2), points2d)
    assert not rep.ok
    point, direction = rep.witness
    np.testing.assert_allclose(direction, [1.0, 0.0], atol=1e-12)


def test_subunit_grushin_equality(points2d):
    grushin = MatrixField.from_entries(2, e11="1", e22="x^2")
    rep = check_subunit([ScalarExpr("0"), ScalarExpr("x")], grushin, points2d)
    assert rep.ok
    np.testing.assert_allclose(rep.worst_ratio, 1.0, atol=1e-10)


def test_subunit_direction_negation_invariance(points2d):
    # quadratic forms are even in the direction; the checker must inherit it
    grushin = MatrixField.from_entries(2, e11="1+y", e22="x^2")
    w = np.column_stack(
        [ScalarExpr("0.5").evaluate(points2d), ScalarExpr("0.7*x").evaluate(points2d)]
    )
    dirs = unit_directions(2, 12)
    lhs_pos = (w @ dirs.T) ** 2
    lhs_neg = (w @ (-dirs).T) ** 2
    rhs_pos = quadratic_form(grushin.evaluate(points2d), dirs)
    rhs_neg = quadratic_form(grushin.evaluate(points2d), -dirs)
    np.testing.assert_array_equal(lhs_pos, lhs_neg)
    np.testing.assert_array_equal(rhs_pos, rhs_neg)


def test_subunit_scaling_property(points2d):
    grushin = MatrixField.from_entries(2, e11="1", e22="x^2")
    rng = np.random.default_rng(7)
    for _ in range(5):
        s = rng.uniform(0.0, 1.0)
        rep = check_subunit(
            [ScalarExpr("0"), ScalarExpr(f"{s!r}*x")], grushin, points2d
        )
        assert rep.ok


def test_comparability_identical(points2d):
    eye = MatrixField.identity(2)
    assert estimate_comparability(eye, eye, points2d) == (1.0, 1.0)


def test_comparability_scalar_multiple(points2d):
    c1, C1 = estimate_comparability(
        MatrixField.scaled_identity(2, "2"), MatrixField.identity(2), points2d
    )
    np.testing.assert_allclose([c1, C1], [2.0, 2.0])


def test_comparability_grushin_vs_identity(points2d):
    grushin = MatrixField.from_entries(2, e11="1", e22="x^2")
    c1, C1 = estimate_comparability(grushin, MatrixField.identity(2), points2d)
    assert 0.0 < c1 < 1.0
    assert C1 <= 1.0 + 1e-12


def test_comparability_self_is_exact_even_degenerate(points2d):
    grushin = MatrixField.from_entries(2, e11="1", e22="x^2")
    pts = np.vstack([points2d, [[0.0, 0.5]]])  # degeneracy line included
    assert estimate_comparability(grushin, grushin, pts) == (1.0, 1.0)


def test_comparability_violation():
    # P vanishes in a direction where Q does not, away from both being zero
    p = MatrixField.from_entries(2, e11="1")  # rank one
    q = MatrixField.identity(2)
    pts = halton_points(((0.0, 1.0), (0.0, 1.0)), 16, seed=1)
    with pytest.raises(ComparabilityError) as err:
        estimate_comparability(p, q, pts)
    assert err.value.witness is not None


def test_unit_directions_1d():
    np.testing.assert_array_equal(unit_directions(1), [[1.0], [-1.0]])


def test_halton_deterministic():
    a = halton_points(((0.0, 1.0),), 10, seed=3)
    b = halton_points(((0.0, 1.0),), 10, seed=3)
    np.testing.assert_array_equal(a, b)
    assert np.all((a >= 0.0) & (a <= 1.0))
