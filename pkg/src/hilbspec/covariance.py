"""Lagged autocovariance operators and the noise-filtered operator ``S_hat``.

With centered observations ``zeta_1..zeta_n``, the lag-``k`` estimator is

    R_k(h) = 1/(n-k) * sum_{t=1}^{n-k} <zeta_t, h> zeta_{t+k}

and ``S_hat = c * sum_{k=1}^p R_k R_k^*``. Measurement noise that is white in
time does not enter ``R_k`` for ``k >= 1`` in expectation, so the spectrum of
``S_hat`` tracks the signal alone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Tuple

import numpy as np

from hilbspec.core import ContractError, CurvePanel, OperatorRep
from hilbspec.spectral import (
    RANK_RTOL,
    EigenSystem,
    _tie_blocks,
    canonical_signs,
    eigendecompose,
    spectrum_from_symmetric,
)

PINV_RTOL = 1e-10


class Normalizer(str, Enum):
    SUM = "sum"
    MEAN = "mean"
    PAPER = "paper"


_NORMALIZER_ALIASES = {"mean-over-lags": "mean", "paper-remark": "paper"}


@dataclass(frozen=True)
class LagSpec:
    """Maximum lag ``p`` and the constant in front of ``sum_k R_k R_k^*``.

    ``sum`` uses 1, ``mean`` uses ``1/p`` and ``paper`` uses ``1/(n - p)``.
    The choice rescales every eigenvalue by one common factor.
    """

    p: int = 1
    normalizer: Normalizer = Normalizer.MEAN

    def __post_init__(self):
        if isinstance(self.p, bool) or int(self.p) != self.p or self.p < 1:
            raise ValueError("maximum lag p must be a positive integer")
        norm = self.normalizer
        if isinstance(norm, str):
            norm = Normalizer(_NORMALIZER_ALIASES.get(norm, norm))
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "normalizer", norm)

    def constant(self, n: int) -> float:
        if self.normalizer is Normalizer.SUM:
            return 1.0
        if self.normalizer is Normalizer.MEAN:
            return 1.0 / self.p
        return 1.0 / (n - self.p)

    def check(self, n: int) -> None:
        if self.p > n - 1:
            raise ContractError(f"insufficient sample for lag {self.p}: need n >= {self.p + 1}, got n = {n}")


@dataclass(frozen=True, eq=False)
class GramPair:
    """``G[t, s] = <zeta_t, zeta_s>`` and ``H_k[t, s] = <zeta_{t+k}, zeta_{s+k}>``, ``t, s <= n - p``."""

    G: np.ndarray
    H: Tuple[np.ndarray, ...]


def _require_centered(panel: CurvePanel) -> None:
    if not panel.centered:
        raise ContractError("autocovariance estimators need a centered panel; call center_panel first")


def full_gram(panel: CurvePanel) -> np.ndarray:
    """All pairwise inner products ``<zeta_t, zeta_s>``, ``n x n``."""
    Z = panel.values
    F = (Z * panel.quadrature.weights) @ Z.T
    return (F + F.T) / 2


def lag_autocov(panel: CurvePanel, k: int) -> OperatorRep:
    """Kernel ``K(u, v) = 1/(n-k) sum_t zeta_{t+k}(u) zeta_t(v)``."""
    _require_centered(panel)
    n = panel.n
    if k < 0 or k > n - 1:
        raise ContractError(f"lag {k} out of range for n = {n}")
    Z = panel.values
    K = Z[k:].T @ Z[: n - k] / (n - k)
    if k == 0:
        K = (K + K.T) / 2
    return OperatorRep(K, panel.quadrature)


def s_hat_grid(panel: CurvePanel, lags: LagSpec = LagSpec()) -> OperatorRep:
    """``c * sum_{k<=p} R_k R_k^*`` as an ``m x m`` kernel."""
    _require_centered(panel)
    lags.check(panel.n)
    w = panel.quadrature.weights
    S = np.zeros((panel.m, panel.m))
    for k in range(1, lags.p + 1):
        K = lag_autocov(panel, k).kernel
        S += (K * w) @ K.T
    S *= lags.constant(panel.n)
    return OperatorRep((S + S.T) / 2, panel.quadrature)


def gram_matrices(panel: CurvePanel, lags: LagSpec = LagSpec()) -> GramPair:
    _require_centered(panel)
    lags.check(panel.n)
    F = full_gram(panel)
    size = panel.n - lags.p
    G = F[:size, :size]
    H = tuple(F[k : k + size, k : k + size] for k in range(1, lags.p + 1))
    return GramPair(G, H)


def _psd_sqrt_and_pinv(H: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    mu, V = np.linalg.eigh(H)
    s = np.sqrt(np.clip(mu, 0.0, None))
    keep = s > PINV_RTOL * s.max(initial=0.0)
    s_inv = np.zeros_like(s)
    s_inv[keep] = 1.0 / s[keep]
    return (V * s) @ V.T, (V * s_inv) @ V.T


def s_hat_dual(panel: CurvePanel, lags: LagSpec = LagSpec(), rank_rtol: float = RANK_RTOL) -> EigenSystem:
    """Nonzero spectrum of ``S_hat`` without forming the ``m x m`` kernel.

    All eigenvectors lie in the span of ``zeta_2..zeta_n``; writing
    ``psi = sum_t b_t zeta_{t+1}`` turns ``S_hat psi = theta psi`` into
    ``Q H b = theta b`` with ``H`` the Gram matrix of ``zeta_2..zeta_n`` and
    ``Q = c * sum_k (n-k)^{-2} G_k`` (``G_k`` the Gram matrix of
    ``zeta_1..zeta_{n-k}``, embedded at offset ``k - 1``). The symmetric
    form ``H^{1/2} Q H^{1/2}`` is diagonalized and ``b = pinv(H^{1/2}) y``.
    For ``p = 1`` this is ``(n-1)^{-2} H_1^{1/2} G H_1^{1/2}``.
    """
    _require_centered(panel)
    lags.check(panel.n)
    n, q = panel.n, panel.quadrature
    F = full_gram(panel)
    Q = np.zeros((n - 1, n - 1))
    for k in range(1, lags.p + 1):
        Q[k - 1 :, k - 1 :] += F[: n - k, : n - k] / (n - k) ** 2
    H_half, H_half_pinv = _psd_sqrt_and_pinv(F[1:, 1:])
    C = H_half @ Q @ H_half
    C = (C + C.T) / 2
    vals, Y = spectrum_from_symmetric(C, rank_rtol)
    if vals.size == 0:
        return EigenSystem(np.empty(0), np.empty((0, panel.m)), q)
    B = H_half_pinv @ Y
    vectors = B.T @ panel.values[1:]
    norms = np.sqrt((vectors**2) @ q.weights)
    vectors = canonical_signs(vectors / norms[:, None])
    return _rescaled(EigenSystem(vals, vectors, q, _tie_blocks(vals)), lags.constant(n))


def _rescaled(eig: EigenSystem, c: float) -> EigenSystem:
    # the normalizer is one positive scalar: solve once, scale eigenvalues
    return replace(eig, eigenvalues=eig.eigenvalues * c)


def s_hat_eigensystem(panel: CurvePanel, lags: LagSpec = LagSpec(), path: str = "auto") -> Tuple[EigenSystem, str]:
    """Spectrum of ``S_hat`` via the grid or the dual path.

    ``auto`` picks the dual path when ``m > 512`` or ``m > 4 n``. Both paths
    solve the unnormalized problem, so eigenvectors do not depend on the
    normalizer at all.
    """
    if path == "auto":
        path = "dual" if panel.m > 512 or panel.m > 4 * panel.n else "grid"
    if path == "dual":
        return s_hat_dual(panel, lags), path
    if path == "grid":
        unscaled = LagSpec(lags.p, Normalizer.SUM)
        eig = eigendecompose(s_hat_grid(panel, unscaled))
        return _rescaled(eig, lags.constant(panel.n)), path
    raise ValueError(f"unknown path {path!r}")
