"""Command-line interface: ``estimate``, ``simulate`` and ``rates``.

Exit codes: 0 success, 2 validation error, 3 slope assertion failed,
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from hilbspec.core import CurvePanel, Quadrature, QuadratureMode, center_panel
from hilbspec.covariance import LagSpec, Normalizer, s_hat_eigensystem
from hilbspec.simulate import (
    DEFAULT_BANDS,
    DEFAULT_SEED,
    MIN_REPS,
    DgpSpec,
    RateRunError,
    generate_panel,
    run_rates,
)
from hilbspec.spectral import compute_scores, default_j_max, estimate_dimension

logger = logging.getLogger("hilbspec")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ASSERTION = 3
EXIT_IO = 4


class ValidationError(ValueError):
    pass


class PanelParseError(ValidationError):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# panel files


def ingest_panel(path, format: str = "csv") -> CurvePanel:
    """Read a panel CSV.

    The first row holds the grid points (trapezoid weights are built from
    them) or the single word ``euclidean`` for unit weights. Every further
    row is one observation, in time order.
    """
    if format != "csv":
        raise ValidationError(f"unsupported panel format {format!r}")
    with open(path, newline="") as fh:
        rows = [(i, row) for i, row in enumerate(csv.reader(fh), start=1) if any(c.strip() for c in row)]
    if not rows:
        raise PanelParseError(f"{path}: empty file")
    header_line, header = rows[0]
    cells = [c.strip() for c in header]
    euclidean = cells[0].lower() == "euclidean"
    points = None
    if not euclidean:
        try:
            points = np.array([float(c) for c in cells])
        except ValueError as exc:
            raise PanelParseError(f"{path}:{header_line}: grid row is not numeric ({exc})") from None
        if not np.all(np.isfinite(points)):
            raise PanelParseError(f"{path}:{header_line}: grid contains non-finite values")
        bad = np.nonzero(np.diff(points) <= 0)[0]
        if bad.size:
            raise PanelParseError(
                f"{path}:{header_line}: grid is not strictly increasing at column {bad[0] + 2}"
            )
    data = []
    width = None if euclidean else points.size
    for line, row in rows[1:]:
        if width is None:
            width = len(row)
        if len(row) != width:
            raise PanelParseError(f"{path}:{line}: expected {width} values, found {len(row)}")
        values = []
        for col, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise PanelParseError(f"{path}:{line}: column {col}: cannot parse {cell.strip()!r}") from None
            if not np.isfinite(v):
                raise PanelParseError(f"{path}:{line}: column {col}: non-finite value {cell.strip()!r}")
            values.append(v)
        data.append(values)
    if len(data) < 2:
        raise PanelParseError(f"{path}: need at least two observation rows, found {len(data)}")
    if euclidean:
        quadrature = Quadrature.euclidean(width)
    else:
        if points.size < 2:
            raise PanelParseError(f"{path}:{header_line}: a trapezoid grid needs two points; use 'euclidean'")
        quadrature = Quadrature.trapezoid(points)
    return CurvePanel(np.array(data), quadrature)


def emit_panel(panel: CurvePanel, path) -> None:
    """Write a panel in the format read by :func:`ingest_panel`."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        if panel.quadrature.mode is QuadratureMode.EUCLIDEAN:
            writer.writerow(["euclidean"])
        else:
            writer.writerow([_fmt(u) for u in panel.quadrature.points])
        for row in panel.values:
            writer.writerow([_fmt(v) for v in row])


def _write_table(path: Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([c if isinstance(c, (int, str)) else _fmt(c) for c in row])


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    command: str
    input: Optional[str] = None
    spec: Optional[str] = None
    out: str = "out"
    lags: int = 1
    normalizer: str = "mean"
    dim: str = "ratio"
    tau: Optional[float] = None
    j_max: Optional[int] = None
    path: str = "auto"
    seed: Optional[int] = None
    n_list: Tuple[int, ...] = ()
    reps: int = 200
    workers: int = 1
    formats: Tuple[str, ...] = ("csv", "json")
    assert_bands: bool = False
    force: bool = False

    @classmethod
    def from_mapping(cls, data: Dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown configuration keys: {sorted(unknown)}")
        config = cls(**data)
        config.validate()
        return config

    def validate(self) -> None:
        if self.command not in ("estimate", "simulate", "rates"):
            raise ValidationError(f"unknown command {self.command!r}")
        if self.command == "estimate" and not self.input:
            raise ValidationError("estimate needs --input")
        if self.command in ("simulate", "rates") and not self.spec:
            raise ValidationError(f"{self.command} needs --spec")
        if self.lags < 1:
            raise ValidationError("--lags must be at least 1")
        try:
            Normalizer(self.normalizer)
        except ValueError:
            raise ValidationError(f"unknown normalizer {self.normalizer!r}") from None
        if self.dim not in ("ratio", "threshold"):
            raise ValidationError(f"unknown dimension method {self.dim!r}")
        if self.dim == "threshold" and (self.tau is None or not 0 <= self.tau < 1):
            raise ValidationError("--dim threshold needs --tau in [0, 1)")
        if self.j_max is not None and self.j_max < 1:
            raise ValidationError("--j-max must be at least 1")
        if self.path not in ("auto", "grid", "dual"):
            raise ValidationError(f"unknown path {self.path!r}")
        if self.seed is not None and not 0 <= self.seed < 2**64:
            raise ValidationError("--seed must be a 64-bit unsigned integer")
        bad = set(self.formats) - {"csv", "json"}
        if bad or not self.formats:
            raise ValidationError(f"--format must list csv and/or json, got {','.join(self.formats)}")
        if self.command == "rates":
            if len(self.n_list) < 2:
                raise ValidationError("--n needs at least two sample sizes")
            if self.reps < MIN_REPS and not self.force:
                raise ValidationError(f"reps below minimum ({MIN_REPS}); pass --force to override")
            if self.workers < 1:
                raise ValidationError("--workers must be at least 1")

    @property
    def lag_spec(self) -> LagSpec:
        return LagSpec(self.lags, Normalizer(self.normalizer))


def load_dgp_spec(path, seed: Optional[int] = None) -> DgpSpec:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValidationError("DGP spec must be a JSON object")
    try:
        spec = DgpSpec.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"invalid DGP spec: {exc}") from None
    if seed is not None:
        spec = replace(spec, seed=seed)
    return spec


# ---------------------------------------------------------------------------
# commands


def run_estimate(config: RunConfig) -> Dict[str, Path]:
    """Center, estimate the spectrum, pick the dimension and write result files."""
    start = time.perf_counter()
    panel = ingest_panel(config.input)
    lags = config.lag_spec
    if panel.n < lags.p + 1:
        raise ValidationError(f"insufficient sample for lag {lags.p} (n = {panel.n})")
    centered, mean = center_panel(panel)
    eig, path = s_hat_eigensystem(centered, lags, config.path)
    j_max = config.j_max if config.j_max is not None else default_j_max(eig.count)
    dim = estimate_dimension(eig, config.dim, tau=config.tau, j_max=j_max)
    scores = compute_scores(centered, eig, dim.d, mean)

    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in ("eigenvalues.csv", "eigenfunctions.csv", "scores.csv", "mean.csv", "summary.json")}
    _write_table(paths["eigenvalues.csv"], ["j", "theta"], ((j + 1, v) for j, v in enumerate(eig.eigenvalues)))
    _write_table(
        paths["eigenfunctions.csv"],
        ["u"] + [f"psi_{j + 1}" for j in range(eig.count)],
        ([u, *eig.vectors[:, i]] for i, u in enumerate(panel.quadrature.points)),
    )
    _write_table(
        paths["scores.csv"],
        ["t"] + [f"W_{j + 1}" for j in range(dim.d)],
        ([t + 1, *scores.values[t]] for t in range(panel.n)),
    )
    _write_table(paths["mean.csv"], ["u", "mean"], zip(panel.quadrature.points, mean.coeffs))
    summary = {
        "d_hat": dim.d,
        "degenerate": dim.degenerate,
        "method": config.dim,
        "tau": config.tau,
        "j_max": j_max,
        "p": lags.p,
        "normalizer": lags.normalizer.value,
        "n": panel.n,
        "m": panel.m,
        "quadrature": panel.quadrature.mode.value,
        "path": path,
        "rank": eig.count,
        "runtime_seconds": time.perf_counter() - start,
    }
    paths["summary.json"].write_text(json.dumps(summary, indent=2) + "\n")
    logger.info("estimated d_hat=%d from %d eigenvalues (%s path)", dim.d, eig.count, path)
    return paths


def run_simulate(config: RunConfig) -> Dict[str, Path]:
    spec = load_dgp_spec(config.spec, config.seed)
    sim = generate_panel(spec, config.lag_spec)
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {name: out / name for name in ("panel.csv", "truth.json", "true_scores.csv", "true_eigenfunctions.csv")}
    emit_panel(sim.panel, paths["panel.csv"])
    truth = {
        "spec": spec.to_dict(),
        "theta": [float(x) for x in sim.truth.theta],
        "order": list(sim.truth.order),
        "d": sim.truth.d,
    }
    paths["truth.json"].write_text(json.dumps(truth, indent=2) + "\n")
    _write_table(
        paths["true_scores.csv"],
        ["t"] + [f"Z_{j + 1}" for j in range(spec.d)],
        ([t + 1, *sim.scores[t]] for t in range(spec.n)),
    )
    _write_table(
        paths["true_eigenfunctions.csv"],
        ["u"] + [f"psi_{j + 1}" for j in range(spec.d)],
        ([u, *sim.truth.psi[:, i]] for i, u in enumerate(spec.quadrature.points)),
    )
    return paths


def run_rates_command(config: RunConfig) -> Tuple[Dict[str, Path], bool]:
    """Run the Monte Carlo harness; returns written files and whether all bands hold."""
    template = load_dgp_spec(config.spec)
    seed = config.seed if config.seed is not None else DEFAULT_SEED
    report = run_rates(
        template,
        config.n_list,
        config.reps,
        master_seed=seed,
        workers=config.workers,
        lags=config.lag_spec,
        dim_method=config.dim,
        tau=config.tau,
        j_max=config.j_max,
        force=config.force,
    )
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    if "csv" in config.formats:
        paths["rates.csv"] = out / "rates.csv"
        paths["rates.csv"].write_text(report.to_csv())
    if "json" in config.formats:
        paths["slopes.json"] = out / "slopes.json"
        paths["slopes.json"].write_text(report.to_json())
    checks = report.slope_within(DEFAULT_BANDS)
    for name, (slope, stderr) in report.slopes.items():
        lo, hi = DEFAULT_BANDS[name]
        status = "ok" if checks[name] else "OUT"
        print(f"{name:20s} slope {slope:+.3f} (se {stderr:.3f})  band [{lo}, {hi}]  {status}")
    return paths, all(checks.values())


# ---------------------------------------------------------------------------
# argument parsing


def _int_list(text: str) -> Tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _formats(text: str) -> Tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hilbspec", description="Spectral estimation for noisy curve time series.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--lags", type=int, default=1, help="maximum lag p")
        p.add_argument("--normalizer", default="mean", choices=[n.value for n in Normalizer])

    def dimension(p):
        p.add_argument("--dim", default="ratio", choices=["ratio", "threshold"])
        p.add_argument("--tau", type=float, default=None)
        p.add_argument("--j-max", dest="j_max", type=int, default=None)

    est = sub.add_parser("estimate", help="estimate spectrum, dimension and scores of a panel")
    est.add_argument("--input", required=True)
    est.add_argument("--path", default="auto", choices=["auto", "grid", "dual"])
    common(est)
    dimension(est)

    sim = sub.add_parser("simulate", help="draw a panel from a DGP spec")
    sim.add_argument("--spec", required=True)
    common(sim)

    rates = sub.add_parser("rates", help="Monte Carlo convergence-rate experiment")
    rates.add_argument("--spec", required=True)
    rates.add_argument("--n", dest="n_list", type=_int_list, required=True)
    rates.add_argument("--reps", type=int, default=200)
    rates.add_argument("--workers", type=int, default=1)
    rates.add_argument("--format", dest="formats", type=_formats, default=("csv", "json"))
    rates.add_argument("--assert", dest="assert_bands", action="store_true")
    rates.add_argument("--force", action="store_true")
    common(rates)
    dimension(rates)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    options = {k: v for k, v in vars(args).items() if k != "verbose"}
    try:
        config = RunConfig.from_mapping(options)
        if config.command == "estimate":
            run_estimate(config)
        elif config.command == "simulate":
            run_simulate(config)
        else:
            _, passed = run_rates_command(config)
            if config.assert_bands and not passed:
                print("slope assertion failed", file=sys.stderr)
                return EXIT_ASSERTION
    except (ValidationError, RateRunError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
