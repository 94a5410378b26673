"""Discretized Hilbert space: quadrature grids, curve panels and integral operators.

Every element of ``H`` is stored as its samples on a grid ``u_1 < ... < u_m``;
the inner product is the weighted sum ``sum_i w_i f_i g_i``. Operators are
stored as kernel samples ``K[i, j] = K(u_i, u_j)`` acting by
``(A h)_i = sum_j K[i, j] w_j h_j``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Tuple

import numpy as np


class DimensionMismatchError(ValueError):
    """Raised when objects living on different grids are combined."""


class ContractError(ValueError):
    """Raised when an operation's precondition is violated."""


class QuadratureMode(str, Enum):
    TRAPEZOID = "trapezoid-on-grid"
    EUCLIDEAN = "euclidean"


def _frozen_array(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def trapezoid_weights(points) -> np.ndarray:
    """Trapezoid-rule weights for an arbitrary strictly increasing grid."""
    u = np.asarray(points, dtype=float)
    if u.ndim != 1 or u.size < 2:
        raise ValueError("trapezoid weights need at least two grid points")
    du = np.diff(u)
    if np.any(du <= 0):
        raise ValueError("grid points must be strictly increasing")
    w = np.empty_like(u)
    w[0] = du[0] / 2
    w[-1] = du[-1] / 2
    w[1:-1] = (du[:-1] + du[1:]) / 2
    return w


@dataclass(frozen=True, eq=False)
class Quadrature:
    """Grid points and positive integration weights defining ``<.,.>``.

    Use :meth:`trapezoid` for curve data and :meth:`euclidean` for plain
    vectors in ``R^m`` (all weights one).
    """

    points: np.ndarray
    weights: np.ndarray
    mode: QuadratureMode = QuadratureMode.TRAPEZOID

    def __post_init__(self):
        points = _frozen_array(self.points, "points")
        weights = _frozen_array(self.weights, "weights")
        mode = QuadratureMode(self.mode)
        if points.ndim != 1 or points.size < 1:
            raise ValueError("points must be a non-empty 1-d array")
        if weights.shape != points.shape:
            raise DimensionMismatchError("points and weights differ in length")
        if np.any(np.diff(points) <= 0):
            raise ValueError("grid points must be strictly increasing")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be strictly positive")
        if mode is QuadratureMode.EUCLIDEAN and np.any(weights != 1.0):
            raise ValueError("euclidean quadrature requires unit weights")
        if mode is QuadratureMode.TRAPEZOID:
            if points.size < 2:
                raise ValueError("trapezoid quadrature needs m >= 2; use euclidean for m = 1")
            span = points[-1] - points[0]
            if abs(weights.sum() - span) > 1e-12 * max(1.0, abs(span)):
                raise ValueError("trapezoid weights must sum to the interval length")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "mode", mode)

    @classmethod
    def trapezoid(cls, points) -> "Quadrature":
        return cls(np.asarray(points, dtype=float), trapezoid_weights(points), QuadratureMode.TRAPEZOID)

    @classmethod
    def uniform(cls, m: int, a: float = 0.0, b: float = 1.0) -> "Quadrature":
        return cls.trapezoid(np.linspace(a, b, m))

    @classmethod
    def euclidean(cls, m: int) -> "Quadrature":
        return cls(np.arange(m, dtype=float), np.ones(m), QuadratureMode.EUCLIDEAN)

    @property
    def m(self) -> int:
        return self.points.size

    def __eq__(self, other):
        if not isinstance(other, Quadrature):
            return NotImplemented
        return (
            self is other
            or (
                self.mode == other.mode
                and np.array_equal(self.points, other.points)
                and np.array_equal(self.weights, other.weights)
            )
        )

    __hash__ = object.__hash__


def _check_same(q1: Quadrature, q2: Quadrature) -> None:
    if q1 is not q2 and q1 != q2:
        raise DimensionMismatchError(
            f"objects live on different quadratures (m={q1.m} vs m={q2.m})"
        )


@dataclass(frozen=True, eq=False)
class HVector:
    """An element of ``H`` given by its grid samples."""

    coeffs: np.ndarray
    quadrature: Quadrature

    def __post_init__(self):
        coeffs = _frozen_array(self.coeffs, "coeffs")
        if coeffs.shape != (self.quadrature.m,):
            raise DimensionMismatchError(
                f"vector of length {coeffs.size} does not match grid size {self.quadrature.m}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    def __add__(self, other: "HVector") -> "HVector":
        _check_same(self.quadrature, other.quadrature)
        return HVector(self.coeffs + other.coeffs, self.quadrature)

    def __sub__(self, other: "HVector") -> "HVector":
        _check_same(self.quadrature, other.quadrature)
        return HVector(self.coeffs - other.coeffs, self.quadrature)

    def __mul__(self, scalar: float) -> "HVector":
        return HVector(self.coeffs * float(scalar), self.quadrature)

    __rmul__ = __mul__

    def __neg__(self) -> "HVector":
        return HVector(-self.coeffs, self.quadrature)


@dataclass(frozen=True, eq=False)
class CurvePanel:
    """``n`` observations on a common grid; row ``t`` is the curve at time ``t``."""

    values: np.ndarray
    quadrature: Quadrature
    centered: bool = False

    def __post_init__(self):
        values = _frozen_array(self.values, "panel values")
        if values.ndim != 2:
            raise ValueError("panel values must be a 2-d array")
        n, m = values.shape
        if n < 2:
            raise ValueError("a panel needs at least two observations")
        if m != self.quadrature.m:
            raise DimensionMismatchError(f"panel has {m} columns but grid has {self.quadrature.m} points")
        if self.centered:
            scale = np.abs(values).max(axis=0)
            if np.any(np.abs(values.mean(axis=0)) > 1e-10 * scale):
                raise ContractError("panel flagged centered but column means are not zero")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def row(self, t: int) -> HVector:
        return HVector(self.values[t], self.quadrature)


@dataclass(frozen=True, eq=False)
class OperatorRep:
    """Integral operator on ``H`` represented by its kernel samples."""

    kernel: np.ndarray
    quadrature: Quadrature

    def __post_init__(self):
        kernel = _frozen_array(self.kernel, "kernel")
        m = self.quadrature.m
        if kernel.shape != (m, m):
            raise DimensionMismatchError(f"kernel of shape {kernel.shape} does not match grid size {m}")
        object.__setattr__(self, "kernel", kernel)

    @property
    def adjoint(self) -> "OperatorRep":
        return OperatorRep(self.kernel.T, self.quadrature)

    def __add__(self, other: "OperatorRep") -> "OperatorRep":
        _check_same(self.quadrature, other.quadrature)
        return OperatorRep(self.kernel + other.kernel, self.quadrature)

    def __sub__(self, other: "OperatorRep") -> "OperatorRep":
        _check_same(self.quadrature, other.quadrature)
        return OperatorRep(self.kernel - other.kernel, self.quadrature)

    def __mul__(self, scalar: float) -> "OperatorRep":
        return OperatorRep(self.kernel * float(scalar), self.quadrature)

    __rmul__ = __mul__

    def __matmul__(self, other: "OperatorRep") -> "OperatorRep":
        return compose(self, other)


def inner_product(f: HVector, g: HVector) -> float:
    _check_same(f.quadrature, g.quadrature)
    return float(np.sum(f.quadrature.weights * (f.coeffs * g.coeffs)))


def norm(f: HVector) -> float:
    return float(np.sqrt(max(inner_product(f, f), 0.0)))


def center_panel(panel: CurvePanel) -> Tuple[CurvePanel, HVector]:
    """Subtract the sample mean curve from every row.

    Returns
    -------
    centered : CurvePanel
        Panel with zero column means, flagged ``centered``.
    mean : HVector
        The subtracted sample mean ``(1/n) sum_t zeta_t``.
    """
    mean = panel.values.mean(axis=0)
    centered = panel.values - mean
    # a second pass removes the rounding residue of the first
    residue = centered.mean(axis=0)
    centered = centered - residue
    return CurvePanel(centered, panel.quadrature, centered=True), HVector(mean + residue, panel.quadrature)


def apply_operator(A: OperatorRep, h: HVector) -> HVector:
    _check_same(A.quadrature, h.quadrature)
    return HVector(A.kernel @ (A.quadrature.weights * h.coeffs), A.quadrature)


def compose(A: OperatorRep, B: OperatorRep) -> OperatorRep:
    """Kernel of ``A o B``: ``(K_A D K_B)`` with ``D = diag(w)``."""
    _check_same(A.quadrature, B.quadrature)
    return OperatorRep((A.kernel * A.quadrature.weights) @ B.kernel, A.quadrature)


def hs_norm(A: OperatorRep) -> float:
    """Hilbert-Schmidt norm ``sqrt(sum_ij w_i w_j K_ij^2)``."""
    sw = np.sqrt(A.quadrature.weights)
    return float(np.linalg.norm(sw[:, None] * A.kernel * sw[None, :]))


def tensor(a: HVector, b: HVector) -> OperatorRep:
    """Rank-one operator ``h -> <b, h> a``."""
    _check_same(a.quadrature, b.quadrature)
    return OperatorRep(np.outer(a.coeffs, b.coeffs), a.quadrature)


def identity_operator(quadrature: Quadrature) -> OperatorRep:
    return OperatorRep(np.diag(1.0 / quadrature.weights), quadrature)


def zero_operator(quadrature: Quadrature) -> OperatorRep:
    return OperatorRep(np.zeros((quadrature.m, quadrature.m)), quadrature)
