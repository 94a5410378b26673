import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hilbspec.core import ContractError, HVector, Quadrature, apply_operator, compose, hs_norm, norm
from hilbspec.subspace import (
    SubspaceBasis,
    gram_schmidt,
    project,
    projector,
    projector_distance,
    subspace_metric,
)


def basis_of(rows, q):
    return SubspaceBasis(np.atleast_2d(rows), q)


class TestProjector:
    def test_rank_one(self, unit_grid):
        phi = np.sqrt(2) * np.sin(np.pi * unit_grid.points)
        phi /= np.sqrt(np.sum(unit_grid.weights * phi**2))
        P = projector(basis_of(phi, unit_grid))
        np.testing.assert_allclose(P.kernel, np.outer(phi, phi))
        assert hs_norm(P) == pytest.approx(1.0, abs=1e-12)

    def test_full_basis_is_identity(self, irregular_grid):
        q = irregular_grid
        B = gram_schmidt(np.eye(q.m), q)
        assert B.dim == q.m
        P = projector(B)
        h = HVector(np.cos(3 * q.points), q)
        np.testing.assert_allclose(apply_operator(P, h).coeffs, h.coeffs, atol=1e-10)

    def test_idempotent(self, rng, irregular_grid):
        B = gram_schmidt(rng.standard_normal((3, irregular_grid.m)), irregular_grid)
        P = projector(B)
        np.testing.assert_allclose(compose(P, P).kernel, P.kernel, atol=1e-10)


class TestDistance:
    def test_orthogonal_lines(self):
        q = Quadrature.euclidean(2)
        d = projector_distance(basis_of([1.0, 0.0], q), basis_of([0.0, 1.0], q))
        assert d == pytest.approx(np.sqrt(2), abs=1e-12)

    @pytest.mark.parametrize("alpha", [0.0, 0.1, 0.7, np.pi / 2, 2.5])
    def test_angle(self, alpha):
        q = Quadrature.euclidean(2)
        d = subspace_metric(basis_of([1.0, 0.0], q), basis_of([np.cos(alpha), np.sin(alpha)], q))
        assert d == pytest.approx(np.sqrt(2) * abs(np.sin(alpha)), abs=1e-12)

    def test_same_subspace_different_basis(self, rng, irregular_grid):
        q = irregular_grid
        U = gram_schmidt(rng.standard_normal((3, q.m)), q)
        Qrot, _ = np.linalg.qr(rng.standard_normal((3, 3)))
        V = SubspaceBasis(Qrot @ U.vectors, q)
        assert projector_distance(U, V) < 1e-10

    def test_mismatched_grids(self):
        a = basis_of([1.0, 0.0], Quadrature.euclidean(2))
        b = basis_of([np.sqrt(2), 0.0], Quadrature.uniform(2))
        with pytest.raises(ValueError):
            projector_distance(a, b)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 12), st.integers(1, 4), st.integers(0, 2**32 - 1))
    def test_metric_axioms(self, m, k, seed):
        rng = np.random.default_rng(seed)
        q = Quadrature.uniform(m)
        k = min(k, m)
        A, B, C = (gram_schmidt(rng.standard_normal((k, m)), q) for _ in range(3))
        dab, dbc, dac = projector_distance(A, B), projector_distance(B, C), projector_distance(A, C)
        assert dab == pytest.approx(projector_distance(B, A), abs=1e-12)
        assert dac <= dab + dbc + 1e-10
        assert projector_distance(A, A) < 1e-10
        assert dab <= np.sqrt(A.dim + B.dim) + 1e-10


class TestProject:
    def test_example(self):
        q = Quadrature.euclidean(2)
        proj, size = project(HVector(np.array([1.0, 0.0]), q), basis_of(np.array([1.0, 1.0]) / np.sqrt(2), q))
        np.testing.assert_allclose(proj.coeffs, [0.5, 0.5])
        assert size == pytest.approx(1 / np.sqrt(2))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 15), st.integers(1, 5), st.integers(0, 2**32 - 1))
    def test_contraction_and_orthogonality(self, m, k, seed):
        rng = np.random.default_rng(seed)
        q = Quadrature.uniform(m)
        B = gram_schmidt(rng.standard_normal((min(k, m), m)), q)
        h = HVector(rng.standard_normal(m), q)
        proj, size = project(h, B)
        assert size <= norm(h) + 1e-12
        assert size == pytest.approx(norm(proj), rel=1e-10, abs=1e-14)
        resid = (h - proj).coeffs
        assert np.abs(B.vectors @ (q.weights * resid)).max() <= 1e-10 * max(1.0, norm(h))


class TestGramSchmidt:
    def test_drops_dependent(self):
        q = Quadrature.euclidean(3)
        B = gram_schmidt(np.array([[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.0, 0.0, 3.0], [0.0, 0.0, 0.0]]), q)
        assert B.dim == 2

    def test_rejects_non_orthonormal(self):
        with pytest.raises(ContractError):
            SubspaceBasis(np.array([[1.0, 1.0]]), Quadrature.euclidean(2))

    def test_from_vectors(self, unit_grid):
        v = HVector(np.ones(unit_grid.m), unit_grid)
        assert SubspaceBasis.from_vectors([v]).dim == 1
