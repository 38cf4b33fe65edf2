"""Seeded experiment runs with persisted traces and summaries.

Output layout of :func:`run_experiment` (everything byte-deterministic for a
given configuration)::

    out_dir/
        config.json          the experiment configuration
        trace_seed<k>.csv    one row per iteration of seed k
        quantiles.csv        per-iteration median and 5%/95% quantiles
        summary.json         per-seed outcomes and aggregate statistics
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, is_dataclass, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import benchmarks
from .entropy import BaselineEntropyConfig
from .gaussian import GaussianSearchDist
from .optimizer import ALGORITHMS, OptimizerConfig, StopCondition, run, run_with_restarts
from .surrogate import NormalizationConfig

log = logging.getLogger(__name__)

TRACE_COLUMNS = ("iter", "evals", "f_mean", "f_best", "entropy", "sigma", "path_norm", "pop_mean_fitness")
QUANTITY_COLUMNS = ("f_mean", "entropy", "sigma", "pop_mean_fitness")
_NESTED = {"normalization": NormalizationConfig, "baseline_entropy": BaselineEntropyConfig}


def normalize_algorithm(name: str) -> str:
    algo = name.replace("-", "_").lower()
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {name!r}; choose from {ALGORITHMS}")
    return algo


@dataclass(frozen=True)
class ExperimentConfig:
    """One benchmark, one algorithm, several seeds.

    Each seed starts from a mean drawn uniformly from ``init_range`` in every
    coordinate with isotropic standard deviation ``init_std``.  Noisy
    objectives are observed with noise for the samples, while the value at the
    mean (used for the target check and the traces) is noiseless.
    ``overrides`` replaces :class:`OptimizerConfig` fields; nested fields use
    dotted keys such as ``"normalization.mode"``.
    """

    function: str = "rosenbrock"
    dim: int = 15
    noise_std: float = 0.0
    algorithm: str = "cas_more"
    overrides: Mapping[str, Any] = field(default_factory=dict)
    seeds: Sequence[int] = tuple(range(20))
    budget: int = 12000
    target: float | None = 1e-8
    out_dir: str | None = None
    init_range: tuple[float, float] = (-4.0, 4.0)
    init_std: float = 3.0
    restarts: bool = True
    shift_seed: int | None = None
    rotation_seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "algorithm", normalize_algorithm(self.algorithm))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        object.__setattr__(self, "init_range", tuple(float(v) for v in self.init_range))
        object.__setattr__(self, "overrides", dict(self.overrides))
        if not self.seeds:
            raise ValueError("at least one seed is required")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        if not self.budget > 0:
            raise ValueError("budget must be positive")
        if not self.init_std > 0:
            raise ValueError("init_std must be positive")
        lo, hi = self.init_range
        if not lo <= hi:
            raise ValueError("init_range must be ordered")
        benchmarks.make(self.function, self.dim)  # validates name and dimension
        self.optimizer_config(0)  # validates overrides early

    def spec(self) -> benchmarks.BenchmarkSpec:
        return benchmarks.make(
            self.function,
            self.dim,
            noise_std=self.noise_std,
            shift_seed=self.shift_seed,
            rotation_seed=self.rotation_seed,
        )

    def optimizer_config(self, seed: int) -> OptimizerConfig:
        return apply_overrides(OptimizerConfig(algorithm=self.algorithm, seed=seed), self.overrides)

    def initial(self, seed: int) -> GaussianSearchDist:
        lo, hi = self.init_range
        mean = np.random.default_rng([seed, 0]).uniform(lo, hi, self.dim)
        return GaussianSearchDist.isotropic(mean, self.init_std)

    def to_dict(self, include_out_dir: bool = True) -> dict:
        d = asdict(self)
        if not include_out_dir:
            del d["out_dir"]
        d["seeds"] = list(self.seeds)
        d["init_range"] = list(self.init_range)
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown experiment fields: {sorted(unknown)}")
        return cls(**data)


def apply_overrides(config: OptimizerConfig, overrides: Mapping[str, Any]) -> OptimizerConfig:
    """Return ``config`` with ``overrides`` applied; dotted keys address nested configs."""
    top: dict[str, Any] = {}
    nested: dict[str, dict[str, Any]] = {}
    names = {f.name for f in fields(OptimizerConfig)}
    for key, value in overrides.items():
        head, _, rest = key.partition(".")
        if head not in names:
            raise ValueError(f"unknown optimizer setting {key!r}")
        if rest:
            if head not in _NESTED:
                raise ValueError(f"{head!r} has no nested settings")
            nested.setdefault(head, {})[rest] = value
        elif head in _NESTED and isinstance(value, Mapping):
            nested.setdefault(head, {}).update(value)
        else:
            top[head] = value
    if "algorithm" in top:
        top["algorithm"] = normalize_algorithm(top["algorithm"])
    for head, values in nested.items():
        cls = _NESTED[head]
        current = getattr(config, head)
        if current is None:
            current = getattr(config.resolved(1), head)
        allowed = {f.name for f in fields(cls)}
        bad = set(values) - allowed
        if bad:
            raise ValueError(f"unknown {head} settings: {sorted(bad)}")
        top[head] = replace(current, **values)
    return replace(config, **top)


@dataclass(frozen=True)
class RunSummary:
    """Outcome of one seed.  ``error`` is set (and the rest is empty) if the run raised."""

    seed: int
    success: bool
    evals_to_target: int | None
    evaluations: int
    mean_evaluations: int
    iterations: int
    final_f_mean: float
    final_entropy: float
    best_f: float
    restarts: int
    reason: str
    error: str | None = None


@dataclass
class QuantileTable:
    """Per-iteration ``median``/``q05``/``q95`` columns for each traced quantity."""

    iterations: np.ndarray
    columns: dict[str, np.ndarray]

    @property
    def header(self) -> list[str]:
        return ["iter"] + list(self.columns)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.header)
        for i, it in enumerate(self.iterations):
            writer.writerow([int(it)] + [_fmt(col[i]) for col in self.columns.values()])
        return buf.getvalue()


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    runs: list[RunSummary]
    traces: dict[int, list[dict]]
    quantiles: QuantileTable | None
    summary: dict

    @property
    def all_completed(self) -> bool:
        return all(r.error is None for r in self.runs)


def _fmt(value) -> str:
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return repr(value)


def _trace_rows(records) -> list[dict]:
    return [
        {
            "iter": r.iteration,
            "evals": r.evaluations,
            "f_mean": r.f_mean,
            "f_best": r.f_best,
            "entropy": r.entropy,
            "sigma": r.sigma,
            "path_norm": r.path_norm,
            "pop_mean_fitness": r.pop_mean_fitness,
        }
        for r in records
    ]


def trace_csv(rows: Iterable[Mapping[str, Any]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for row in rows:
        writer.writerow([int(row["iter"]), int(row["evals"])] + [_fmt(row[c]) for c in TRACE_COLUMNS[2:]])
    return buf.getvalue()


def _column(trace, name: str) -> np.ndarray:
    return np.array([row[name] if isinstance(row, Mapping) else getattr(row, name) for row in trace], dtype=float)


def summarize(traces: Sequence[Sequence[Any]], quantities: Sequence[str] = QUANTITY_COLUMNS) -> QuantileTable:
    """Median and 5%/95% quantiles across runs at every iteration index.

    ``traces`` holds one sequence per run; entries are trace rows (mappings)
    or :class:`~casmore.optimizer.IterationRecord` objects.  Runs shorter
    than the longest one are padded with their last value.

    Raises
    ------
    ValueError
        If there is no trace or a trace is empty.
    """
    if not traces:
        raise ValueError("summarize needs at least one trace")
    if any(len(t) == 0 for t in traces):
        raise ValueError("cannot summarize an empty trace")
    length = max(len(t) for t in traces)
    columns: dict[str, np.ndarray] = {}
    for name in quantities:
        mat = np.empty((len(traces), length))
        for k, trace in enumerate(traces):
            col = _column(trace, name)
            mat[k, : col.size] = col
            mat[k, col.size :] = col[-1]
        q05, med, q95 = np.quantile(mat, [0.05, 0.5, 0.95], axis=0)
        columns[f"{name}_median"] = med
        columns[f"{name}_q05"] = q05
        columns[f"{name}_q95"] = q95
    return QuantileTable(np.arange(1, length + 1), columns)


def _run_seed(cfg: ExperimentConfig, seed: int) -> tuple[RunSummary, list[dict]]:
    spec = cfg.spec()
    noise_rng = np.random.default_rng([seed, 1])

    def objective(x):
        return benchmarks.evaluate(spec, x, noise_rng)

    opt_cfg = cfg.optimizer_config(seed)
    try:
        if cfg.restarts:
            res = run_with_restarts(
                opt_cfg,
                objective,
                cfg.budget,
                cfg.target,
                cfg.initial(seed),
                minimize=True,
                mean_objective=spec.noiseless,
            )
            records, restarts = res.trace, len(res.runs) - 1
            evaluations, reason, best_f = res.evaluations, res.reason, res.best_f
            mean_evals = sum(r.mean_evaluations for r in res.runs)
            evals_to_target = res.evals_to_target
        else:
            res1 = run(
                opt_cfg,
                objective,
                StopCondition(target=cfg.target, max_evaluations=cfg.budget),
                cfg.initial(seed),
                minimize=True,
                mean_objective=spec.noiseless,
            )
            records, restarts = res1.trace, 0
            evaluations, reason, best_f = res1.evaluations, res1.reason, res1.best_f
            mean_evals = res1.mean_evaluations
            evals_to_target = res1.evals_to_target
    except Exception as exc:  # isolate the failure to this seed
        log.exception("seed %d failed", seed)
        nan = math.nan
        error = f"{type(exc).__name__}: {exc}"
        summary = RunSummary(seed, False, None, 0, 0, 0, nan, nan, nan, 0, "error", error)
        return summary, []
    rows = _trace_rows(records)
    summary = RunSummary(
        seed=seed,
        success=evals_to_target is not None,
        evals_to_target=evals_to_target,
        evaluations=evaluations,
        mean_evaluations=mean_evals,
        iterations=len(records),
        final_f_mean=records[-1].f_mean if records else math.nan,
        final_entropy=records[-1].entropy if records else math.nan,
        best_f=best_f,
        restarts=restarts,
        reason=reason,
    )
    return summary, rows


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, Mapping):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if is_dataclass(value):
        return _json_safe(asdict(value))
    if isinstance(value, np.generic):
        return _json_safe(value.item())
    return value


def aggregate(runs: Sequence[RunSummary]) -> dict:
    """Success counts and the median evaluations to target (failures count as infinite)."""
    n = len(runs)
    wins = sum(r.success for r in runs)
    evals = [r.evals_to_target if r.success else math.inf for r in runs]
    finals = [r.final_f_mean for r in runs if r.error is None]
    return {
        "n_seeds": n,
        "n_success": wins,
        "success_fraction": f"{wins}/{n}",
        "success_rate": wins / n if n else 0.0,
        "median_evals_to_target": float(np.median(evals)) if n else math.inf,
        "median_final_f_mean": float(np.median(finals)) if finals else math.nan,
        "n_errors": sum(r.error is not None for r in runs),
    }


def _check_writable(path: Path) -> None:
    try:
        path.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=path):
            pass
    except OSError as exc:
        raise PermissionError(f"output directory {path} is not writable: {exc}") from exc


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="")


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Run every seed, write the outputs to ``cfg.out_dir`` (if set) and return them.

    A seed that raises is recorded with its error; the other seeds still run.
    ``jobs > 1`` runs seeds in worker processes; results do not depend on it.
    """
    out = Path(cfg.out_dir) if cfg.out_dir else None
    if out is not None:
        _check_writable(out)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_seed, [cfg] * len(cfg.seeds), cfg.seeds))
    else:
        results = [_run_seed(cfg, s) for s in cfg.seeds]
    runs = [r for r, _ in results]
    traces = {r.seed: rows for r, rows in results}
    usable = [rows for rows in traces.values() if rows]
    table = summarize(usable) if usable else None
    summary = {
        "config": cfg.to_dict(include_out_dir=False),
        "optimizer": cfg.optimizer_config(cfg.seeds[0]).resolved(cfg.dim).to_dict(),
        "aggregate": aggregate(runs),
        "quantiles": {
            "file": "quantiles.csv" if table is not None else None,
            "seed_count": len(usable),
        },
        "runs": [asdict(r) for r in runs],
    }
    summary = _json_safe(summary)
    if out is not None:
        _write(out / "config.json", json.dumps(_json_safe(cfg.to_dict(include_out_dir=False)), indent=2, sort_keys=True) + "\n")
        for seed, rows in traces.items():
            if rows:
                _write(out / f"trace_seed{seed}.csv", trace_csv(rows))
        if table is not None:
            _write(out / "quantiles.csv", table.to_csv())
        _write(out / "summary.json", json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return ExperimentResult(cfg, runs, traces, table, summary)


__all__ = [
    "ExperimentConfig",
    "ExperimentResult",
    "QuantileTable",
    "RunSummary",
    "TRACE_COLUMNS",
    "aggregate",
    "apply_overrides",
    "run_experiment",
    "summarize",
    "trace_csv",
]
