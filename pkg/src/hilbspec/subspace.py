"""Orthogonal projectors and the projector distance between subspaces."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from hilbspec.core import (
    ContractError,
    HVector,
    OperatorRep,
    Quadrature,
    _check_same,
    hs_norm,
)

ORTHONORMAL_ATOL = 1e-8


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    """Quadrature-orthonormal basis vectors stored as rows of ``vectors``."""

    vectors: np.ndarray
    quadrature: Quadrature

    def __post_init__(self):
        V = np.array(self.vectors, dtype=float).reshape(-1, self.quadrature.m)
        gram = (V * self.quadrature.weights) @ V.T
        if np.abs(gram - np.eye(V.shape[0])).max(initial=0.0) > ORTHONORMAL_ATOL:
            raise ContractError("basis vectors are not orthonormal; use gram_schmidt first")
        V.setflags(write=False)
        object.__setattr__(self, "vectors", V)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @classmethod
    def from_vectors(cls, vectors: Sequence[HVector]) -> "SubspaceBasis":
        if not vectors:
            raise ValueError("need at least one vector to infer the quadrature")
        q = vectors[0].quadrature
        for v in vectors:
            _check_same(q, v.quadrature)
        return cls(np.array([v.coeffs for v in vectors]), q)


def gram_schmidt(vectors: np.ndarray, quadrature: Quadrature, rtol: float = 1e-10) -> SubspaceBasis:
    """Orthonormalize the rows of ``vectors`` with two Gram-Schmidt passes.

    Rows that are numerically dependent on earlier ones are dropped.
    """
    w = quadrature.weights
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    out = []
    for v in V:
        size = np.sqrt(np.sum(w * v * v))
        u = v.copy()
        for _ in range(2):
            for e in out:
                u -= np.sum(w * e * u) * e
        r = np.sqrt(np.sum(w * u * u))
        if size == 0.0 or r <= rtol * size:
            continue
        out.append(u / r)
    return SubspaceBasis(np.array(out).reshape(len(out), quadrature.m), quadrature)


def projector(basis: SubspaceBasis) -> OperatorRep:
    """Kernel ``sum_j psi_j(u) psi_j(v)`` of the orthogonal projector."""
    V = basis.vectors
    return OperatorRep(V.T @ V, basis.quadrature)


def projector_distance(U: SubspaceBasis, V: SubspaceBasis) -> float:
    """Hilbert-Schmidt norm of ``Pi_U - Pi_V``."""
    _check_same(U.quadrature, V.quadrature)
    return hs_norm(projector(U) - projector(V))


def subspace_metric(U: SubspaceBasis, V: SubspaceBasis) -> float:
    """Metric on finite-dimensional subspaces; the projector distance."""
    return projector_distance(U, V)


def project(h: HVector, basis: SubspaceBasis) -> Tuple[HVector, float]:
    """Orthogonal projection of ``h`` onto the span and its norm."""
    _check_same(h.quadrature, basis.quadrature)
    w = basis.quadrature.weights
    coef = basis.vectors @ (w * h.coeffs)
    proj = coef @ basis.vectors if basis.dim else np.zeros(h.coeffs.shape)
    return HVector(proj, basis.quadrature), float(np.linalg.norm(coef))
