"""Finite-rank curve processes with known spectra and a Monte Carlo rate harness.

The signal is ``xi_t = sum_j Z_tj phi_j`` with independent stationary Gaussian
AR(1) scores ``Z_{t+1,j} = a_j Z_tj + eta`` of variance ``lambda_j``. Then
``R_1 = sum_j a_j lambda_j phi_j (x) phi_j`` and the lag-filtered operator has
eigenvalues ``(a_j lambda_j)^2`` with eigenvectors ``phi_j``. Curves live on a
uniform grid of ``m`` points in ``[0, 1]`` with trapezoid weights.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import legendre
from scipy import signal, stats

from hilbspec.core import (
    ContractError,
    CurvePanel,
    HVector,
    OperatorRep,
    Quadrature,
    center_panel,
    hs_norm,
)
from hilbspec.covariance import LagSpec, lag_autocov, s_hat_grid
from hilbspec.spectral import eigendecompose, estimate_dimension, sign_align
from hilbspec.subspace import SubspaceBasis, gram_schmidt, project, projector_distance

logger = logging.getLogger(__name__)

DEFAULT_SEED = 20240607
MIN_REPS = 100
MAX_FAILURE_FRACTION = 0.01


class NoiseKind(str, Enum):
    NONE = "none"
    GRID_WHITE = "grid-white"
    FINITE_RANK = "finite-rank"


class BasisKind(str, Enum):
    FOURIER = "fourier"
    LEGENDRE = "legendre"


_BASIS_ALIASES = {"legendre-like": "legendre"}


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement noise, independent across time and of the signal.

    ``grid-white`` draws iid ``N(0, sigma^2)`` at every grid point.
    ``finite-rank`` draws iid ``N(0, sigma^2)`` scores on ``phi_{d+1..d+r}``.
    """

    kind: NoiseKind = NoiseKind.NONE
    sigma: float = 0.0
    r: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "r", int(self.r))
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ValueError("noise sigma must be a finite nonnegative number")
        if self.kind is NoiseKind.FINITE_RANK and self.r < 1:
            raise ValueError("finite-rank noise needs r >= 1")
        if self.r < 0:
            raise ValueError("noise rank r must be nonnegative")


@dataclass(frozen=True)
class DgpSpec:
    """Data-generating process; field names match the JSON schema."""

    d: int
    lambdas: Tuple[float, ...]
    ar_coeffs: Tuple[float, ...]
    basis: BasisKind = BasisKind.FOURIER
    m: int = 101
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    n: int = 256
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        lambdas = tuple(float(x) for x in self.lambdas)
        coeffs = tuple(float(x) for x in self.ar_coeffs)
        basis = self.basis
        if isinstance(basis, str):
            basis = BasisKind(_BASIS_ALIASES.get(basis, basis))
        noise = self.noise if isinstance(self.noise, NoiseSpec) else NoiseSpec(**self.noise)
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "ar_coeffs", coeffs)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "noise", noise)
        for name in ("d", "m", "n", "seed"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ValueError(f"{name} must be an integer")
            object.__setattr__(self, name, int(value))

        if self.d < 1:
            raise ValueError("d must be at least 1")
        if len(lambdas) != self.d or len(coeffs) != self.d:
            raise ValueError("lambdas and ar_coeffs must both have length d")
        if any(not np.isfinite(x) or x <= 0 for x in lambdas):
            raise ValueError("lambdas must be positive")
        if any(a <= b for a, b in zip(lambdas, lambdas[1:])):
            raise ValueError("lambdas must be strictly decreasing")
        if any(not -1 < a < 1 for a in coeffs):
            raise ValueError("AR coefficients must lie in (-1, 1)")
        if any(a == 0 for a in coeffs):
            raise ValueError("AR coefficients must be nonzero: a zero lag-1 correlation makes ran(R_1) smaller than ran(R_0)")
        extra = noise.r if noise.kind is NoiseKind.FINITE_RANK else 0
        if self.m < self.d + extra + 1:
            raise ValueError(f"grid size m = {self.m} too small for d + r = {self.d + extra}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, data: dict) -> "DgpSpec":
        allowed = {"d", "lambdas", "ar_coeffs", "basis", "m", "noise", "n", "seed"}
        unknown = set(data) - allowed
        if unknown:
            raise ValueError(f"unknown DGP spec keys: {sorted(unknown)}")
        missing = {"d", "lambdas", "ar_coeffs"} - set(data)
        if missing:
            raise ValueError(f"missing DGP spec keys: {sorted(missing)}")
        noise = dict(data.get("noise", {}))
        bad = set(noise) - {"kind", "sigma", "r"}
        if bad:
            raise ValueError(f"unknown noise keys: {sorted(bad)}")
        kwargs = dict(data)
        kwargs["noise"] = NoiseSpec(**noise)
        return cls(**kwargs)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lambdas"] = list(self.lambdas)
        out["ar_coeffs"] = list(self.ar_coeffs)
        out["basis"] = self.basis.value
        out["noise"] = {"kind": self.noise.kind.value, "sigma": self.noise.sigma, "r": self.noise.r}
        return out

    @property
    def quadrature(self) -> Quadrature:
        return Quadrature.uniform(self.m)


def basis_functions(kind: BasisKind, quadrature: Quadrature, count: int) -> SubspaceBasis:
    """First ``count`` basis functions, orthonormalized on the grid.

    Fourier: ``sqrt(2) sin(2 pi k u)``, ``sqrt(2) cos(2 pi k u)`` for
    ``k = 1, 2, ...``. Legendre: ``sqrt(2k+1) P_k(2u - 1)`` for ``k = 0, 1, ...``.
    Both are re-orthonormalized in the quadrature inner product so the
    discrete truth is exact.
    """
    u = quadrature.points
    a, b = u[0], u[-1]
    x = (u - a) / (b - a)
    rows = []
    if BasisKind(kind) is BasisKind.FOURIER:
        k = 1
        while len(rows) < count:
            rows.append(np.sqrt(2) * np.sin(2 * np.pi * k * x))
            rows.append(np.sqrt(2) * np.cos(2 * np.pi * k * x))
            k += 1
    else:
        for k in range(count):
            c = np.zeros(k + 1)
            c[k] = np.sqrt(2 * k + 1)
            rows.append(legendre.legval(2 * x - 1, c))
    basis = gram_schmidt(np.array(rows[:count]) / np.sqrt(b - a), quadrature)
    if basis.dim < count:
        raise ValueError(f"grid of size {quadrature.m} cannot resolve {count} {BasisKind(kind).value} functions")
    return basis


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Analytic spectrum of the lag-filtered operator for a DGP.

    ``theta`` is nonincreasing and ``psi[j]`` is its eigenvector; ``order``
    maps sorted position to the original score index.
    """

    theta: np.ndarray
    psi: np.ndarray
    S_true: OperatorRep
    M_basis: SubspaceBasis
    order: Tuple[int, ...]

    @property
    def d(self) -> int:
        return self.theta.size

    @property
    def eigenvectors(self) -> List[HVector]:
        return [HVector(v, self.M_basis.quadrature) for v in self.psi]


class SimulatedPanel(NamedTuple):
    panel: CurvePanel
    truth: GroundTruth
    scores: np.ndarray


def _dgp_basis(spec: DgpSpec, extra: int = 0) -> SubspaceBasis:
    r = spec.noise.r if spec.noise.kind is NoiseKind.FINITE_RANK else 0
    count = min(spec.m - 1, spec.d + max(r, extra))
    return basis_functions(spec.basis, spec.quadrature, max(count, spec.d + r))


def true_spectrum(spec: DgpSpec, lags: LagSpec = LagSpec()) -> GroundTruth:
    """Closed-form eigenpairs of ``c * sum_{k<=p} R_k R_k^*``.

    ``R_k = sum_j a_j^k lambda_j phi_j (x) phi_j``, so the eigenvalue for
    ``phi_j`` is ``c * sum_k (a_j^k lambda_j)^2``; with ``p = 1`` and the
    default normalizer this is ``(a_j lambda_j)^2``.
    """
    a = np.array(spec.ar_coeffs)
    lam = np.array(spec.lambdas)
    powers = np.arange(1, lags.p + 1)[:, None]
    theta = lags.constant(spec.n) * np.sum((a[None, :] ** powers * lam[None, :]) ** 2, axis=0)
    order = np.argsort(-theta, kind="stable")
    theta = theta[order]
    if np.any(np.isclose(theta[:-1], theta[1:], rtol=1e-9, atol=0.0)):
        raise ContractError("tied eigenvalues: the |a_j lambda_j| must be distinct for identifiable eigenvectors")
    basis = _dgp_basis(spec)
    phi = basis.vectors[: spec.d]
    psi = phi[order]
    S = (psi.T * theta) @ psi
    return GroundTruth(
        theta=theta,
        psi=psi,
        S_true=OperatorRep(S, spec.quadrature),
        M_basis=SubspaceBasis(phi, spec.quadrature),
        order=tuple(int(i) for i in order),
    )


def ar1_scores(rng: np.random.Generator, n: int, lambdas: Sequence[float], coeffs: Sequence[float]) -> np.ndarray:
    """``n x d`` stationary Gaussian AR(1) paths with variances ``lambdas``."""
    lam = np.asarray(lambdas, dtype=float)
    a = np.asarray(coeffs, dtype=float)
    shocks = rng.standard_normal((n, lam.size))
    shocks[0] *= np.sqrt(lam)
    shocks[1:] *= np.sqrt(lam * (1 - a**2))
    Z = np.empty_like(shocks)
    for j in range(lam.size):
        Z[:, j] = signal.lfilter([1.0], [1.0, -a[j]], shocks[:, j])
    return Z


def generate_panel(spec: DgpSpec, lags: LagSpec = LagSpec()) -> SimulatedPanel:
    """Draw ``zeta_t = xi_t + eps_t`` on the grid, ``t = 1..n``.

    Reproducible under ``spec.seed``. The panel is returned uncentered.
    """
    truth = true_spectrum(spec, lags)
    rng = np.random.default_rng(spec.seed)
    Z = ar1_scores(rng, spec.n, spec.lambdas, spec.ar_coeffs)
    phi = truth.M_basis.vectors
    values = Z @ phi
    noise = spec.noise
    if noise.kind is NoiseKind.GRID_WHITE and noise.sigma > 0:
        values = values + noise.sigma * rng.standard_normal((spec.n, spec.m))
    elif noise.kind is NoiseKind.FINITE_RANK and noise.sigma > 0:
        extra = _dgp_basis(spec).vectors[spec.d : spec.d + noise.r]
        values = values + noise.sigma * rng.standard_normal((spec.n, noise.r)) @ extra
    return SimulatedPanel(CurvePanel(values, spec.quadrature), truth, Z)


def signal_part(sim: SimulatedPanel) -> np.ndarray:
    """Noise-free curves ``xi_t`` of a simulated panel."""
    return sim.scores @ sim.truth.M_basis.vectors


class OrthogonalityCheck(NamedTuple):
    variances: np.ndarray
    max_variance: float


def kernel_orthogonality_check(spec: DgpSpec, n_draws: int, directions: int = 2) -> OrthogonalityCheck:
    """Sample variance of ``<zeta_t, phi_{d+i}>`` for directions outside ``M``.

    With no noise the curves lie in ``span(phi_1..phi_d)`` and the variances
    vanish up to rounding; with noise they do not.
    """
    if directions < 1:
        raise ValueError("need at least one test direction")
    sim = generate_panel(replace(spec, n=n_draws))
    basis = _dgp_basis(spec, extra=directions)
    dirs = basis.vectors[spec.d : spec.d + directions]
    if spec.noise.kind is NoiseKind.FINITE_RANK:
        dirs = basis.vectors[spec.d : spec.d + max(directions, spec.noise.r)][:directions]
    proj = (sim.panel.values * spec.quadrature.weights) @ dirs.T
    variances = proj.var(axis=0, ddof=1)
    return OrthogonalityCheck(variances, float(variances.max()))


class CounterexampleResult(NamedTuple):
    mean: np.ndarray
    kernel_direction: np.ndarray
    orthogonal_fraction_raw: float
    orthogonal_fraction_centered: float
    centered_variance: np.ndarray


def centering_counterexample(n_draws: int = 10_000, seed: int = DEFAULT_SEED) -> CounterexampleResult:
    """``xi = (N(0,1), 1)`` in ``R^2``: uncentered draws never lie in ``ker(R)^perp``.

    ``R`` is the covariance matrix, ``diag(1, 0)`` in the limit. The raw draws
    all have ``<xi, e_2> = 1``; after subtracting the sample mean the second
    coordinate is identically zero.
    """
    rng = np.random.default_rng(seed)
    xi = np.column_stack([rng.standard_normal(n_draws), np.ones(n_draws)])
    panel = CurvePanel(xi, Quadrature.euclidean(2))
    centered, mean = center_panel(panel)
    R = lag_autocov(centered, 0).kernel
    vals, vecs = np.linalg.eigh(R)
    null = vecs[:, vals <= 1e-12 * vals.max()]
    if null.shape[1] == 0:
        raise RuntimeError("sample covariance has no kernel")
    e = null[:, 0]

    def fraction(rows: np.ndarray) -> float:
        ip = np.abs(rows @ null)
        tol = 1e-10 * np.maximum(np.linalg.norm(rows, axis=1), 1.0)
        return float(np.mean(np.all(ip <= tol[:, None], axis=1)))

    return CounterexampleResult(
        mean=mean.coeffs,
        kernel_direction=e,
        orthogonal_fraction_raw=fraction(xi),
        orthogonal_fraction_centered=fraction(centered.values),
        centered_variance=centered.values.var(axis=0),
    )


# ---------------------------------------------------------------------------
# Monte Carlo rate harness


STATISTICS = (
    "s_hat_hs_error",
    "eigenvalue_error",
    "eigenvector_error",
    "theta_next",
    "proj_next",
    "subspace_distance",
)
DIMENSION_STAT = "dimension_accuracy"

# target log-log slopes and acceptance bands (harness parameters)
DEFAULT_BANDS: Dict[str, Tuple[float, float]] = {
    "s_hat_hs_error": (-0.65, -0.35),
    "eigenvalue_error": (-0.65, -0.35),
    "eigenvector_error": (-0.65, -0.35),
    "theta_next": (-1.35, -0.65),
    "proj_next": (-0.65, -0.35),
    "subspace_distance": (-0.65, -0.35),
}


class RateRunError(RuntimeError):
    pass


def replicate_seed(master_seed: int, n: int, rep: int) -> int:
    """Seed for one replicate; depends only on ``(master_seed, n, rep)``."""
    return int(np.random.SeedSequence([master_seed, n, rep]).generate_state(1, dtype=np.uint64)[0])


def replicate_statistics(
    spec: DgpSpec,
    lags: LagSpec = LagSpec(),
    dim_method: str = "ratio",
    tau: Optional[float] = None,
    j_max: Optional[int] = None,
) -> Dict[str, float]:
    """All tracked error statistics for one simulated panel."""
    sim = generate_panel(spec, lags)
    truth = sim.truth
    d = truth.d
    centered, _ = center_panel(sim.panel)
    S_hat = s_hat_grid(centered, lags)
    eig = eigendecompose(S_hat)
    if eig.count < d:
        raise RuntimeError(f"estimated rank {eig.count} below true dimension {d}")
    eig = sign_align(eig, truth.psi)
    w = spec.quadrature.weights
    vec_err = np.sqrt(((eig.vectors[:d] - truth.psi) ** 2) @ w)
    M_hat = SubspaceBasis(eig.vectors[:d], spec.quadrature)
    out = {
        "s_hat_hs_error": hs_norm(S_hat - truth.S_true),
        "eigenvalue_error": float(np.max(np.abs(eig.eigenvalues[:d] - truth.theta))),
        "eigenvector_error": float(vec_err.max()),
        "theta_next": eig.eigenvalue(d + 1),
        "proj_next": project(eig.eigenvectors[d], truth.M_basis)[1] if eig.count > d else float("nan"),
        "subspace_distance": projector_distance(M_hat, truth.M_basis),
    }
    d_hat = estimate_dimension(eig, dim_method, tau=tau, j_max=j_max).d
    out[DIMENSION_STAT] = float(d_hat == d)
    return out


def _replicate_task(args) -> Tuple[Optional[Dict[str, float]], Optional[str]]:
    spec, lags, dim_method, tau, j_max = args
    try:
        return replicate_statistics(spec, lags, dim_method, tau, j_max), None
    except Exception as exc:  # a failed replicate is recorded, not fatal
        return None, f"{type(exc).__name__}: {exc}"


def _median(values: Sequence[float]) -> float:
    """Median of the finite values; NaN when there are none."""
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    return float(np.median(arr)) if arr.size else float("nan")


def loglog_slope(n_list: Sequence[int], values: Sequence[float]) -> Tuple[float, float]:
    """OLS slope of ``log value`` on ``log n`` and its standard error."""
    y = np.asarray(values, dtype=float)
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        return float("nan"), float("nan")
    fit = stats.linregress(np.log(np.asarray(n_list, dtype=float)), np.log(y))
    return float(fit.slope), float(fit.stderr)


@dataclass
class RateReport:
    """Per-``n`` medians of each statistic with fitted log-log slopes."""

    n_list: Tuple[int, ...]
    reps: int
    medians: Dict[str, List[float]]
    dimension_accuracy: List[float]
    slopes: Dict[str, Tuple[float, float]]
    failures: Dict[int, int]
    master_seed: int
    failure_messages: List[str] = field(default_factory=list)

    def slope_within(self, bands: Dict[str, Tuple[float, float]] = DEFAULT_BANDS) -> Dict[str, bool]:
        out = {}
        for name, (lo, hi) in bands.items():
            slope = self.slopes.get(name, (float("nan"), float("nan")))[0]
            out[name] = bool(np.isfinite(slope) and lo <= slope <= hi)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["statistic", "n", "value", "reps_ok", "failures"])
        for name in STATISTICS:
            for n, value in zip(self.n_list, self.medians[name]):
                writer.writerow([name, n, format(value, ".17g"), self.reps - self.failures[n], self.failures[n]])
        for n, value in zip(self.n_list, self.dimension_accuracy):
            writer.writerow([DIMENSION_STAT, n, format(value, ".17g"), self.reps - self.failures[n], self.failures[n]])
        return buf.getvalue()

    def to_json(self) -> str:
        payload = {
            "n_list": list(self.n_list),
            "reps": self.reps,
            "master_seed": self.master_seed,
            "slopes": {k: {"slope": s, "stderr": e} for k, (s, e) in self.slopes.items()},
            "failures": {str(k): v for k, v in self.failures.items()},
        }
        return json.dumps(payload, indent=2, sort_keys=True, allow_nan=True) + "\n"


def run_rates(
    template: DgpSpec,
    n_list: Sequence[int],
    reps: int,
    master_seed: int = DEFAULT_SEED,
    workers: int = 1,
    lags: LagSpec = LagSpec(),
    dim_method: str = "ratio",
    tau: Optional[float] = None,
    j_max: Optional[int] = None,
    force: bool = False,
) -> RateReport:
    """Monte Carlo medians of every tracked error across sample sizes.

    Replicate ``i`` at size ``n`` uses ``replicate_seed(master_seed, n, i)``,
    so the report does not depend on ``workers`` or scheduling order.
    """
    n_list = tuple(int(n) for n in n_list)
    if not force:
        if reps < MIN_REPS:
            raise ValueError(f"reps below minimum ({MIN_REPS})")
        if len(n_list) < 4:
            raise ValueError("need at least four sample sizes")
    if len(n_list) < 2:
        raise ValueError("need at least two sample sizes to fit a slope")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("sample sizes must be increasing")

    tasks = [
        (replace(template, n=n, seed=replicate_seed(master_seed, n, i)), lags, dim_method, tau, j_max)
        for n in n_list
        for i in range(reps)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_replicate_task, tasks, chunksize=max(1, len(tasks) // (8 * workers))))
    else:
        results = [_replicate_task(t) for t in tasks]

    medians: Dict[str, List[float]] = {name: [] for name in STATISTICS}
    accuracy: List[float] = []
    failures: Dict[int, int] = {}
    messages: List[str] = []
    for block, n in enumerate(n_list):
        chunk = results[block * reps : (block + 1) * reps]
        ok = [r for r, _ in chunk if r is not None]
        errs = [msg for _, msg in chunk if msg is not None]
        failures[n] = len(errs)
        messages.extend(f"n={n}: {msg}" for msg in errs)
        if len(errs) > MAX_FAILURE_FRACTION * reps:
            raise RateRunError(f"{len(errs)} of {reps} replicates failed at n={n}; first error: {errs[0]}")
        for name in STATISTICS:
            medians[name].append(_median([r[name] for r in ok]))
        accuracy.append(float(np.mean([r[DIMENSION_STAT] for r in ok])) if ok else float("nan"))
        if errs:
            logger.warning("%d replicate(s) failed at n=%d", len(errs), n)

    slopes = {name: loglog_slope(n_list, medians[name]) for name in STATISTICS}
    return RateReport(n_list, reps, medians, accuracy, slopes, failures, master_seed, messages)


# ---------------------------------------------------------------------------
# Noise filtering comparison


class NoiseFilteringResult(NamedTuple):
    s_hat_relative_error: float
    r0_relative_bias: float
    per_component_error: np.ndarray
    per_component_bias: np.ndarray


def noise_filtering_study(
    template: DgpSpec, reps: int = 200, master_seed: int = DEFAULT_SEED, lags: LagSpec = LagSpec()
) -> NoiseFilteringResult:
    """Lag-filtered eigenvalue error against the noise bias of the lag-0 estimator.

    Returns the mean over replicates and ``j <= d`` of ``|theta_hat_j -
    theta_j| / theta_j`` and the relative bias ``mean(lambda_hat_j -
    lambda_j) / lambda_j`` of the top eigenvalues of ``R_0``, where ``R_0``'s
    truth is the score variance ``lambda_j``.
    """
    d = template.d
    lam_sorted = np.sort(np.array(template.lambdas))[::-1]
    errs = np.empty((reps, d))
    r0 = np.empty((reps, d))
    for i in range(reps):
        spec = replace(template, seed=replicate_seed(master_seed, template.n, i))
        sim = generate_panel(spec, lags)
        centered, _ = center_panel(sim.panel)
        eig = eigendecompose(s_hat_grid(centered, lags))
        theta_hat = np.array([eig.eigenvalue(j) for j in range(1, d + 1)])
        errs[i] = np.abs(theta_hat - sim.truth.theta) / sim.truth.theta
        eig0 = eigendecompose(lag_autocov(centered, 0))
        lam_hat = np.array([eig0.eigenvalue(j) for j in range(1, d + 1)])
        r0[i] = (lam_hat - lam_sorted) / lam_sorted
    per_err = errs.mean(axis=0)
    per_bias = r0.mean(axis=0)
    return NoiseFilteringResult(float(per_err.mean()), float(per_bias.mean()), per_err, per_bias)
