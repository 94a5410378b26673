import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hilbspec.core import (
    ContractError,
    CurvePanel,
    DimensionMismatchError,
    HVector,
    OperatorRep,
    Quadrature,
    apply_operator,
    center_panel,
    compose,
    hs_norm,
    identity_operator,
    inner_product,
    norm,
    tensor,
    trapezoid_weights,
    zero_operator,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def vec(q, f):
    return HVector(f(q.points), q)


class TestQuadrature:
    def test_trapezoid_weights_sum_to_interval(self, irregular_grid):
        assert irregular_grid.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_two_point_grid(self):
        q = Quadrature.trapezoid([0.0, 1.0])
        np.testing.assert_array_equal(q.weights, [0.5, 0.5])

    def test_irregular_weights_match_hand_computation(self):
        np.testing.assert_allclose(trapezoid_weights([0.0, 0.1, 0.4, 1.0]), [0.05, 0.2, 0.45, 0.3])

    def test_euclidean_unit_weights(self):
        q = Quadrature.euclidean(4)
        np.testing.assert_array_equal(q.weights, np.ones(4))

    @pytest.mark.parametrize(
        "points, weights, mode",
        [
            ([0.0, 0.5, 0.5], [0.25, 0.25, 0.0], "trapezoid-on-grid"),
            ([0.0, 1.0], [0.5, 0.4], "trapezoid-on-grid"),
            ([0.0, 1.0], [1.0, 2.0], "euclidean"),
            ([0.0, 1.0], [0.5, -0.5], "euclidean"),
        ],
    )
    def test_rejects_invalid(self, points, weights, mode):
        with pytest.raises(ValueError):
            Quadrature(np.array(points), np.array(weights), mode)

    def test_scalar_series_uses_euclidean(self):
        assert Quadrature.euclidean(1).m == 1
        with pytest.raises(ValueError):
            Quadrature.trapezoid([0.0])


class TestInnerProduct:
    def test_constant_one(self):
        q = Quadrature.uniform(5)
        one = HVector(np.ones(5), q)
        assert inner_product(one, one) == pytest.approx(1.0, abs=1e-15)

    def test_sine_unit_norm(self, unit_grid):
        f = vec(unit_grid, lambda u: np.sqrt(2) * np.sin(2 * np.pi * u))
        assert inner_product(f, f) == pytest.approx(1.0, abs=1e-4)
        assert norm(f) == pytest.approx(1.0, abs=1e-4)

    def test_sine_cosine_orthogonal(self, unit_grid):
        f = vec(unit_grid, lambda u: np.sqrt(2) * np.sin(2 * np.pi * u))
        g = vec(unit_grid, lambda u: np.sqrt(2) * np.cos(2 * np.pi * u))
        assert inner_product(f, g) == pytest.approx(0.0, abs=1e-4)

    def test_norm_trivial(self):
        q = Quadrature.uniform(11)
        assert norm(HVector(np.full(11, 2.0), q)) == pytest.approx(2.0, abs=1e-14)
        assert norm(HVector(np.zeros(11), q)) == 0.0

    def test_mismatched_grids(self):
        f = HVector(np.ones(5), Quadrature.uniform(5))
        g = HVector(np.ones(6), Quadrature.uniform(6))
        with pytest.raises(DimensionMismatchError):
            inner_product(f, g)

    def test_equal_but_distinct_quadratures_are_compatible(self):
        f = HVector(np.ones(5), Quadrature.uniform(5))
        g = HVector(np.ones(5), Quadrature.uniform(5))
        assert inner_product(f, g) == pytest.approx(1.0)

    @given(
        arrays(float, 7, elements=finite),
        arrays(float, 7, elements=finite),
        arrays(float, 7, elements=finite),
        finite,
        finite,
    )
    def test_bilinear_and_symmetric(self, a, b, c, s, t):
        q = Quadrature.trapezoid([0.0, 0.1, 0.3, 0.35, 0.6, 0.9, 1.0])
        f, g, h = HVector(a, q), HVector(b, q), HVector(c, q)
        lhs = inner_product(s * f + t * g, h)
        rhs = s * inner_product(f, h) + t * inner_product(g, h)
        scale = 1 + abs(s) * norm(f) * norm(h) + abs(t) * norm(g) * norm(h)
        assert abs(lhs - rhs) <= 1e-12 * scale
        assert inner_product(f, g) == inner_product(g, f)


class TestCentering:
    def test_two_rows(self):
        panel = CurvePanel(np.array([[1.0, 1.0], [3.0, 3.0]]), Quadrature.euclidean(2))
        centered, mean = center_panel(panel)
        np.testing.assert_array_equal(centered.values, [[-1.0, -1.0], [1.0, 1.0]])
        np.testing.assert_array_equal(mean.coeffs, [2.0, 2.0])
        assert centered.centered

    def test_idempotent(self, rng):
        q = Quadrature.uniform(17)
        panel = CurvePanel(rng.normal(3.0, 2.0, (30, 17)), q)
        once, _ = center_panel(panel)
        twice, mean = center_panel(once)
        np.testing.assert_allclose(twice.values, once.values, atol=1e-12)
        np.testing.assert_allclose(mean.coeffs, 0.0, atol=1e-12)

    def test_counterexample_degenerate_direction(self):
        rng = np.random.default_rng(7)
        xi = np.column_stack([rng.standard_normal(10_000), np.ones(10_000)])
        centered, mean = center_panel(CurvePanel(xi, Quadrature.euclidean(2)))
        assert mean.coeffs[0] == pytest.approx(0.0, abs=0.05)
        assert mean.coeffs[1] == 1.0
        assert centered.values[:, 1].var() == 0.0

    def test_centered_flag_is_checked(self):
        with pytest.raises(ContractError):
            CurvePanel(np.array([[1.0], [2.0]]), Quadrature.euclidean(1), centered=True)

    @pytest.mark.parametrize("bad", [np.nan, np.inf])
    def test_panel_rejects_non_finite(self, bad):
        with pytest.raises(ValueError):
            CurvePanel(np.array([[1.0, bad], [0.0, 0.0]]), Quadrature.euclidean(2))

    def test_panel_needs_two_rows(self):
        with pytest.raises(ValueError):
            CurvePanel(np.ones((1, 3)), Quadrature.euclidean(3))


class TestOperators:
    def test_identity_euclidean(self, rng):
        q = Quadrature.euclidean(6)
        h = HVector(rng.standard_normal(6), q)
        out = apply_operator(OperatorRep(np.eye(6), q), h)
        np.testing.assert_array_equal(out.coeffs, h.coeffs)

    def test_identity_trapezoid(self, rng, irregular_grid):
        h = HVector(rng.standard_normal(irregular_grid.m), irregular_grid)
        np.testing.assert_allclose(apply_operator(identity_operator(irregular_grid), h).coeffs, h.coeffs)

    def test_rank_one(self, rng, irregular_grid):
        a, b, h = (HVector(rng.standard_normal(irregular_grid.m), irregular_grid) for _ in range(3))
        out = apply_operator(tensor(a, b), h)
        np.testing.assert_allclose(out.coeffs, a.coeffs * inner_product(b, h), rtol=1e-12)

    def test_zero(self, rng, irregular_grid):
        h = HVector(rng.standard_normal(irregular_grid.m), irregular_grid)
        assert not np.any(apply_operator(zero_operator(irregular_grid), h).coeffs)

    def test_apply_mismatch(self):
        A = zero_operator(Quadrature.uniform(4))
        with pytest.raises(DimensionMismatchError):
            apply_operator(A, HVector(np.ones(5), Quadrature.uniform(5)))

    def test_adjoint_identity(self, rng, irregular_grid):
        m = irregular_grid.m
        for _ in range(20):
            A = OperatorRep(rng.standard_normal((m, m)), irregular_grid)
            f, g = (HVector(rng.standard_normal(m), irregular_grid) for _ in range(2))
            lhs = inner_product(apply_operator(A, f), g)
            rhs = inner_product(f, apply_operator(A.adjoint, g))
            assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))

    def test_compose_matches_sequential_application(self, rng, irregular_grid):
        m = irregular_grid.m
        A, B = (OperatorRep(rng.standard_normal((m, m)), irregular_grid) for _ in range(2))
        h = HVector(rng.standard_normal(m), irregular_grid)
        np.testing.assert_allclose(
            apply_operator(compose(A, B), h).coeffs, apply_operator(A, apply_operator(B, h)).coeffs, rtol=1e-10
        )


def _orthonormal_columns(q, rng, k):
    # discrete orthonormal basis of the weighted space: e_j = D^{-1/2} (orthonormal columns)
    Qm, _ = np.linalg.qr(rng.standard_normal((q.m, k)))
    return (Qm / np.sqrt(q.weights)[:, None]).T


class TestHilbertSchmidt:
    def test_zero(self, irregular_grid):
        assert hs_norm(zero_operator(irregular_grid)) == 0.0

    def test_unit_rank_one(self, unit_grid):
        phi = vec(unit_grid, lambda u: np.sqrt(2) * np.sin(2 * np.pi * u))
        phi = phi * (1 / norm(phi))
        assert hs_norm(tensor(phi, phi)) == pytest.approx(1.0, abs=1e-12)

    def test_two_components(self, unit_grid):
        p1 = vec(unit_grid, lambda u: np.sqrt(2) * np.sin(2 * np.pi * u))
        p2 = vec(unit_grid, lambda u: np.sqrt(2) * np.cos(2 * np.pi * u))
        A = tensor(p1, p1) + 2 * tensor(p2, p2)
        assert hs_norm(A) == pytest.approx(np.sqrt(5), abs=1e-6)

    def test_matches_basis_sum(self, rng, irregular_grid):
        m = irregular_grid.m
        E = _orthonormal_columns(irregular_grid, rng, m)
        for _ in range(10):
            A = OperatorRep(rng.standard_normal((m, m)), irregular_grid)
            basis_sum = sum(norm(apply_operator(A, HVector(e, irregular_grid))) ** 2 for e in E)
            assert hs_norm(A) == pytest.approx(np.sqrt(basis_sum), rel=1e-8)
