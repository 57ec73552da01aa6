"""Sweep harness: for every (m, trial) cell draw Phi, fit the compressed
regressor, decode the test split with each method and write long-format CSVs.

Every random draw is seeded by ``derive_seed(master_seed, m, trial, stage)``,
so results do not depend on the order or thread in which cells run.
"""
from __future__ import annotations

import csv
import io
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import baselines
from .compression import estimate_rip, generate_phi
from .core import DomainError, derive_seed
from .data import Dataset, SyntheticSpec, db_to_snr_inv, load_xmc, make_ground_truth, sample_synthetic, split
from .metrics import output_diff, precision_at_s, prediction_loss
from .prediction import FeasibleSet, PgdConfig, pgd_predict, project_sparse
from .training import INTERPOLATION_FLOOR, resolve_ridge, train_compressed, train_uncompressed

SCHEMA = "# shore-results v1"
METHODS = ("pgd", "omp", "cd", "fista", "en")
THREADS_ENV = "SHORE_THREADS"


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentPlan:
    m_grid: list[int]
    data: str = "synthetic"  # "synthetic" or a path to an XMC file
    test_data: str | None = None
    d: int = 10_000
    K: int = 20_000
    n: int = 30_000
    s: int = 3
    db: float = 30.0
    feasible: FeasibleSet = FeasibleSet.NONNEG
    train_fraction: float = 0.8
    methods: list[str] = field(default_factory=lambda: ["pgd", "cd", "fista"])
    trials: int = 10
    master_seed: int = 0
    eta: float = 0.9
    T: int = 60
    tol: float = 1e-3
    ridge: float | str = 0.0
    rip_probes: int = 500
    fista_lambda: float | None = None
    fista_T: int = baselines.FISTA_T
    en_lambda1: float = baselines.EN_LAMBDA1
    en_lambda2: float = baselines.EN_LAMBDA2
    en_T: int = baselines.EN_T
    out_dir: str = "results"

    def __post_init__(self):
        self.feasible = FeasibleSet.parse(self.feasible)
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.m_grid or any(b <= a for a, b in zip(self.m_grid, self.m_grid[1:])):
            raise ConfigError("m_grid must be non-empty and strictly increasing")
        if self.m_grid[0] < 1:
            raise ConfigError("m_grid entries must be positive")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ConfigError(f"unknown method(s) {bad}; choose from {', '.join(METHODS)}")
        if self.ridge != "auto" and float(self.ridge) < 0:
            raise ConfigError("ridge must be >= 0 or 'auto'")

    def pgd_config(self) -> PgdConfig:
        return PgdConfig(eta=self.eta, T=self.T, early_stop_tol=self.tol, feasible=self.feasible)


# ---------------------------------------------------------------------------
# config text: one "key = value" per line, '#' starts a comment

def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def _words(text: str) -> list[str]:
    return [t for t in text.replace(",", " ").split()]


def _opt_float(text: str):
    return None if text.lower() in ("none", "auto", "") else float(text)


def _ridge(text: str):
    return "auto" if text.lower() == "auto" else float(text)


def _opt_str(text: str):
    return None if text.lower() in ("none", "") else text


_PARSERS = {
    "m_grid": _ints,
    "data": str,
    "test_data": _opt_str,
    "d": int,
    "K": int,
    "n": int,
    "s": int,
    "db": float,
    "feasible": FeasibleSet.parse,
    "train_fraction": float,
    "methods": _words,
    "trials": int,
    "master_seed": int,
    "eta": float,
    "T": int,
    "tol": float,
    "ridge": _ridge,
    "rip_probes": int,
    "fista_lambda": _opt_float,
    "fista_T": int,
    "en_lambda1": float,
    "en_lambda2": float,
    "en_T": int,
    "out_dir": str,
}


def parse_config_text(text: str) -> ExperimentPlan:
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if not sep or not key:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](val)
        except (ValueError, DomainError) as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    if "m_grid" not in values:
        raise ConfigError("missing required key 'm_grid'")
    # real data sets rarely have an invertible Gram matrix
    if values.get("data", "synthetic") != "synthetic":
        values.setdefault("ridge", "auto")
    try:
        return ExperimentPlan(**values)
    except (ValueError, DomainError) as exc:
        raise ConfigError(str(exc)) from None


def parse_config(path) -> ExperimentPlan:
    return parse_config_text(Path(path).read_text())


def _fmt_value(v) -> str:
    if isinstance(v, FeasibleSet):
        return v.value
    if isinstance(v, list):
        return ", ".join(str(x) for x in v)
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(plan: ExperimentPlan) -> str:
    """Canonical text form with every key spelled out."""
    return "".join(f"{f.name} = {_fmt_value(getattr(plan, f.name))}\n" for f in fields(plan))


# ---------------------------------------------------------------------------
# decoding dispatch shared with the CLI

def decode(method: str, phi, regressor, x, s: int, plan: ExperimentPlan):
    """Return ``(prediction, iterations)``; iterations is 0 for non-iterative methods."""
    feas = plan.feasible
    if method == "pgd":
        v, trace = pgd_predict(phi, regressor, x, s, plan.pgd_config())
        return v, trace.iterates_used
    if method == "omp":
        return baselines.omp_predict(phi, regressor, x, s, feas), 0
    if method == "cd":
        return baselines.cd_predict(phi, regressor, x, s, feas), 0
    if method == "fista":
        return baselines.fista_predict(phi, regressor, x, s, feas, plan.fista_lambda, plan.fista_T), 0
    if method == "en":
        return baselines.elasticnet_predict(phi, regressor, x, s, feas, plan.en_lambda1, plan.en_lambda2, plan.en_T), 0
    raise DomainError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------

def load_data(plan: ExperimentPlan) -> tuple[Dataset, Dataset]:
    seed = plan.master_seed
    if plan.data == "synthetic":
        spec = SyntheticSpec(
            d=plan.d, K=plan.K, n=plan.n, s=plan.s, snr_inv=db_to_snr_inv(plan.db),
            feasible=plan.feasible, seed=derive_seed(seed, 0, 0, "samples"),
            train_fraction=plan.train_fraction,
        )
        gt = make_ground_truth(plan.d, plan.K, derive_seed(seed, 0, 0, "ground_truth"))
        full = sample_synthetic(spec, gt)
    else:
        full = load_xmc(plan.data)
        if plan.test_data:
            return full, load_xmc(plan.test_data)
    return split(full, plan.train_fraction, derive_seed(seed, 0, 0, "split"))


@dataclass
class _Cell:
    m: int
    trial: int
    ratio: list = field(default_factory=list)
    metrics: list = field(default_factory=list)
    runtime: list = field(default_factory=list)
    error: tuple | None = None


def _run_cell(plan, m, trial, train, test, Xtr, Ytr, ridge, unc_loss) -> _Cell:
    cell = _Cell(m, trial)
    stage = "phi"
    try:
        phi = generate_phi(m, train.K, derive_seed(plan.master_seed, m, trial, "phi"))
        stage = "train"
        reg, rep = train_compressed(Xtr, Ytr, phi, ridge)
        stage = "rip"
        rip = estimate_rip(phi, 1, plan.rip_probes, 0.5, derive_seed(plan.master_seed, m, trial, "rip"))
        if unc_loss is not None:
            undefined = unc_loss < INTERPOLATION_FLOOR
            ratio = math.nan if undefined else rep.loss / unc_loss
            cell.ratio.append(("shore", "train_loss_ratio", ratio, int(undefined)))
            cell.ratio.append(("shore", "uncompressed_loss", unc_loss, 0))
        cell.ratio.append(("shore", "compressed_loss", rep.loss, 0))
        cell.ratio.append(("shore", "delta_hat_s1", rip.delta_hat, 0))
        for method in plan.methods:
            stage = method
            prec, diff, loss, iters = [], [], [], []
            elapsed = 0.0
            for j in range(test.n):
                x = test.X[:, j]
                t0 = time.perf_counter()
                v, it = decode(method, phi, reg, x, plan.s, plan)
                elapsed += time.perf_counter() - t0
                y = test.Y[j]
                prec.append(precision_at_s(v, y, plan.s))
                diff.append(output_diff(v, y))
                loss.append(prediction_loss(phi, reg, x, v))
                iters.append(it)
            cell.metrics.append((method, "precision_at_s", float(np.mean(prec))))
            cell.metrics.append((method, "output_diff", float(np.mean(diff))))
            cell.metrics.append((method, "prediction_loss", float(np.mean(loss))))
            if method == "pgd":
                cell.metrics.append((method, "iterations", float(np.mean(iters))))
            cell.runtime.append((method, "runtime_ms", 1e3 * elapsed / max(test.n, 1)))
    except Exception as exc:  # isolate the cell, keep sweeping
        cell.ratio, cell.metrics, cell.runtime = [], [], []
        cell.error = (stage, f"{type(exc).__name__}: {exc}")
    return cell


def _write(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    buf.write(SCHEMA + "\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(x) if isinstance(x, float) else x for x in row])
    path.write_text(buf.getvalue())


def _summary(rows, value_at: int, skip=lambda r: False):
    groups: dict = {}
    for r in rows:
        if skip(r):
            continue
        groups.setdefault((r[0], r[2], r[3]), []).append(r[value_at])
    out = []
    for (m, method, metric), vals in sorted(groups.items()):
        a = np.asarray(vals, dtype=float)
        out.append((m, method, metric, float(a.mean()), float(a.std()), len(a)))
    return out


def thread_count(threads: int | None = None) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, threads)


def run_experiment(plan: ExperimentPlan, threads: int | None = None) -> dict:
    """Run the sweep and write the CSV files into ``plan.out_dir``.

    Returns a dict with the output paths and the number of failed cells.
    """
    out = Path(plan.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    errors: list = []
    train, test = load_data(plan)
    Xtr, Ytr = train.X, train.Y_matrix()
    ridge = resolve_ridge(Xtr, plan.ridge)
    try:
        unc_loss = train_uncompressed(Xtr, Ytr, ridge)[1].loss
    except Exception as exc:
        unc_loss = None
        errors.append(("", "", "train_uncompressed", f"{type(exc).__name__}: {exc}"))

    jobs = [(m, t) for m in plan.m_grid for t in range(plan.trials)]
    args = (train, test, Xtr, Ytr, ridge, unc_loss)
    n_threads = thread_count(threads)
    if n_threads == 1:
        cells = [_run_cell(plan, m, t, *args) for m, t in jobs]
    else:
        with ThreadPoolExecutor(n_threads) as pool:
            cells = list(pool.map(lambda job: _run_cell(plan, *job, *args), jobs))

    ratio_rows, metric_rows, runtime_rows = [], [], []
    for c in cells:  # jobs order, independent of scheduling
        ratio_rows += [(c.m, c.trial, *r) for r in c.ratio]
        metric_rows += [(c.m, c.trial, *r) for r in c.metrics]
        runtime_rows += [(c.m, c.trial, *r) for r in c.runtime]
        if c.error:
            errors.append((c.m, c.trial, *c.error))

    cols = ["m", "trial", "method", "metric", "value"]
    summ = ["m", "method", "metric", "mean", "std", "count"]
    paths = {
        "ratio": out / "ratio.csv",
        "metrics": out / "metrics.csv",
        "runtime": out / "runtime.csv",
        "ratio_summary": out / "ratio_summary.csv",
        "metrics_summary": out / "metrics_summary.csv",
        "runtime_summary": out / "runtime_summary.csv",
        "errors": out / "errors.csv",
    }
    _write(paths["ratio"], cols + ["undefined"], ratio_rows)
    _write(paths["metrics"], cols, metric_rows)
    _write(paths["runtime"], cols, runtime_rows)
    _write(paths["ratio_summary"], summ, _summary(ratio_rows, 4, skip=lambda r: r[5] == 1))
    _write(paths["metrics_summary"], summ, _summary(metric_rows, 4))
    _write(paths["runtime_summary"], summ, _summary(runtime_rows, 4))
    _write(paths["errors"], ["m", "trial", "stage", "error"], errors)
    return {"paths": paths, "errors": len(errors), "ridge": ridge}


def read_results(path) -> list[dict]:
    """Read one of the long-format CSVs back as a list of dicts."""
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if first != SCHEMA:
            raise ValueError(f"{path}: unexpected schema line {first!r}")
        return list(csv.DictReader(fh))
