"""Eigenanalysis of the lag-filtered operator: spectrum, dimension, scores."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Literal, Optional, Sequence, Tuple, Union

import numpy as np

from hilbspec.core import (
    ContractError,
    CurvePanel,
    DimensionMismatchError,
    HVector,
    OperatorRep,
    Quadrature,
    _check_same,
)

# eigenvalues below RANK_RTOL * largest are treated as numerically zero
RANK_RTOL = 1e-10
# negative eigenvalues within this fraction of the largest are rounding noise
NEG_CLIP_RTOL = 1e-12
SYMMETRY_RTOL = 1e-8
TIE_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Nonincreasing positive eigenvalues and quadrature-orthonormal eigenvectors.

    ``vectors[j]`` holds the grid samples of the ``j``-th eigenvector.
    ``ties`` lists index blocks whose eigenvalues coincide to ``TIE_RTOL``;
    inside such a block only the span is meaningful. ``ambiguous_signs``
    records indices that :func:`sign_align` could not orient.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    quadrature: Quadrature
    ties: Tuple[Tuple[int, ...], ...] = ()
    ambiguous_signs: Tuple[int, ...] = ()

    def __post_init__(self):
        vals = np.array(self.eigenvalues, dtype=float).reshape(-1)
        vecs = np.array(self.vectors, dtype=float).reshape(vals.size, self.quadrature.m)
        if np.any(np.diff(vals) > 0):
            raise ContractError("eigenvalues must be nonincreasing")
        if np.any(vals < 0):
            raise ContractError("eigenvalues must be nonnegative")
        vals.setflags(write=False)
        vecs.setflags(write=False)
        object.__setattr__(self, "eigenvalues", vals)
        object.__setattr__(self, "vectors", vecs)

    @property
    def count(self) -> int:
        return self.eigenvalues.size

    @property
    def eigenvectors(self) -> List[HVector]:
        return [HVector(v, self.quadrature) for v in self.vectors]

    def eigenvalue(self, j: int) -> float:
        """1-based eigenvalue, zero past the retained spectrum."""
        return float(self.eigenvalues[j - 1]) if j <= self.count else 0.0

    def truncate(self, k: int) -> "EigenSystem":
        k = min(k, self.count)
        ties = tuple(b for b in (tuple(i for i in blk if i < k) for blk in self.ties) if len(b) > 1)
        return EigenSystem(
            self.eigenvalues[:k],
            self.vectors[:k],
            self.quadrature,
            ties,
            tuple(i for i in self.ambiguous_signs if i < k),
        )


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    """Scores ``W[t, j] = <zeta_t^c, psi_j>`` plus the mean they are relative to."""

    values: np.ndarray
    mean: HVector

    @property
    def d(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class DimensionEstimate:
    d: int
    method: str
    degenerate: bool = False
    criterion: Tuple[float, ...] = ()


def _tie_blocks(vals: np.ndarray) -> Tuple[Tuple[int, ...], ...]:
    if vals.size < 2:
        return ()
    close = np.abs(np.diff(vals)) <= TIE_RTOL * vals[0]
    blocks, current = [], [0]
    for j, tied in enumerate(close, start=1):
        if tied:
            current.append(j)
        else:
            if len(current) > 1:
                blocks.append(tuple(current))
            current = [j]
    if len(current) > 1:
        blocks.append(tuple(current))
    return tuple(blocks)


def canonical_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip each row so its largest-magnitude entry is positive."""
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=1)
    signs = np.sign(vectors[np.arange(vectors.shape[0]), idx])
    signs[signs == 0] = 1.0
    return vectors * signs[:, None]


def spectrum_from_symmetric(B: np.ndarray, rank_rtol: float = RANK_RTOL) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a symmetric PSD matrix, sorted descending and rank-truncated.

    Returns the kept eigenvalues and the matching eigenvector columns.
    """
    vals, vecs = np.linalg.eigh(B)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    top = vals[0] if vals.size else 0.0
    scale = max(top, np.abs(vals).max(initial=0.0))
    if scale == 0.0:
        return np.empty(0), np.empty((B.shape[0], 0))
    if vals[-1] < -NEG_CLIP_RTOL * scale:
        raise ContractError(
            f"operator is not positive semidefinite (eigenvalue {vals[-1]:.3e}, largest {top:.3e})"
        )
    keep = vals > rank_rtol * top
    return vals[keep], vecs[:, keep]


def eigendecompose(S: OperatorRep, rank_rtol: float = RANK_RTOL) -> EigenSystem:
    """Eigenpairs of a symmetric PSD integral operator on the grid.

    The weighted problem ``K D psi = theta psi`` is solved through the
    symmetric matrix ``D^{1/2} K D^{1/2}``; eigenvectors are mapped back
    with ``D^{-1/2}`` so they are orthonormal in the quadrature inner product.
    Eigenvalues below ``rank_rtol`` times the largest are dropped.
    """
    K = S.kernel
    scale = np.abs(K).max(initial=0.0)
    if scale == 0.0:
        return EigenSystem(np.empty(0), np.empty((0, S.quadrature.m)), S.quadrature)
    if np.abs(K - K.T).max() > SYMMETRY_RTOL * scale:
        raise ContractError("eigendecompose needs a symmetric kernel")
    sw = np.sqrt(S.quadrature.weights)
    B = sw[:, None] * K * sw[None, :]
    B = (B + B.T) / 2
    vals, Y = spectrum_from_symmetric(B, rank_rtol)
    vectors = canonical_signs((Y / sw[:, None]).T)
    return EigenSystem(vals, vectors, S.quadrature, _tie_blocks(vals))


def _reference_matrix(reference, quadrature: Quadrature) -> np.ndarray:
    if isinstance(reference, EigenSystem):
        _check_same(reference.quadrature, quadrature)
        return reference.vectors
    if isinstance(reference, np.ndarray):
        return np.atleast_2d(reference)
    rows = []
    for h in reference:
        _check_same(h.quadrature, quadrature)
        rows.append(h.coeffs)
    return np.array(rows).reshape(len(rows), quadrature.m)


def sign_align(
    estimated: EigenSystem,
    reference: Union[Sequence[HVector], EigenSystem, np.ndarray],
) -> EigenSystem:
    """Flip estimated eigenvectors so ``<psi_hat_j, ref_j> >= 0``.

    Only the leading ``len(reference)`` vectors are touched. A vector exactly
    orthogonal to its reference is left as is and listed in
    ``ambiguous_signs``.
    """
    ref = _reference_matrix(reference, estimated.quadrature)
    if ref.shape[0] > estimated.count:
        raise DimensionMismatchError("more reference vectors than estimated eigenvectors")
    w = estimated.quadrature.weights
    vecs = estimated.vectors.copy()
    ambiguous = []
    for j, r in enumerate(ref):
        ip = float(np.sum(w * vecs[j] * r))
        size = np.sqrt(np.sum(w * vecs[j] ** 2) * np.sum(w * r**2))
        if abs(ip) <= 1e-12 * size:
            ambiguous.append(j)
        elif ip < 0:
            vecs[j] = -vecs[j]
    return replace(estimated, vectors=vecs, ambiguous_signs=tuple(ambiguous))


def estimate_dimension(
    eig: EigenSystem,
    method: Literal["ratio", "threshold"] = "ratio",
    tau: Optional[float] = None,
    j_max: Optional[int] = None,
) -> DimensionEstimate:
    """Estimate the latent dimension from the eigenvalue sequence.

    ``ratio`` maximizes ``theta_j / (theta_{j+1} + eps)`` over ``j <= j_max``
    with ``eps = 1e-12 * theta_1``; eigenvalues past the retained spectrum
    count as zero. ``threshold`` returns the smallest ``d`` whose cumulative
    share of the eigenvalue sum reaches ``1 - tau``.
    """
    vals = eig.eigenvalues
    if vals.size == 0 or vals[0] <= 0:
        return DimensionEstimate(0, method, degenerate=True)
    if method == "ratio":
        if j_max is None:
            j_max = default_j_max(eig.count)
        if j_max < 1:
            raise ContractError("j_max must be at least 1")
        padded = np.zeros(j_max + 1)
        k = min(vals.size, j_max + 1)
        padded[:k] = vals[:k]
        eps = 1e-12 * vals[0]
        ratios = padded[:-1] / (padded[1:] + eps)
        return DimensionEstimate(int(np.argmax(ratios)) + 1, method, criterion=tuple(ratios.tolist()))
    if method == "threshold":
        if tau is None or not 0.0 <= tau < 1.0:
            raise ContractError("threshold rule needs tau in [0, 1)")
        shares = np.cumsum(vals) / vals.sum()
        d = int(np.searchsorted(shares, 1.0 - tau, side="left")) + 1
        return DimensionEstimate(min(d, vals.size), method, criterion=tuple(shares.tolist()))
    raise ContractError(f"unknown dimension method {method!r}")


def default_j_max(count: int) -> int:
    return max(1, min(10, count - 1))


def compute_scores(
    panel: CurvePanel, eig: EigenSystem, d: int, mean: Optional[HVector] = None
) -> ScoreMatrix:
    if not panel.centered:
        raise ContractError("scores are computed from a centered panel; call center_panel first")
    if d > eig.count or d < 0:
        raise ContractError(f"requested {d} scores but only {eig.count} eigenvectors are available")
    _check_same(panel.quadrature, eig.quadrature)
    if mean is None:
        mean = HVector(np.zeros(panel.m), panel.quadrature)
    W = (panel.values * panel.quadrature.weights) @ eig.vectors[:d].T
    return ScoreMatrix(W, mean)


def reconstruct(scores: ScoreMatrix, eig: EigenSystem, d: int) -> CurvePanel:
    """Rows ``mean + sum_{j<=d} W[t, j] psi_j``."""
    if d > scores.d or d > eig.count:
        raise ContractError("reconstruction order exceeds available scores")
    _check_same(scores.mean.quadrature, eig.quadrature)
    values = scores.mean.coeffs + scores.values[:, :d] @ eig.vectors[:d]
    return CurvePanel(values, eig.quadrature)
