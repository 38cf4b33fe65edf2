"""The optimization loop.

Each iteration samples a population, stores the evaluations in the FIFO
buffer, fits the quadratic surrogate and updates the search distribution:

* ``cas_more``: KL-bounded mean update, then KL-bounded covariance update,
  then evolution-path step-size adaptation;
* ``ca_more``: the same two updates with a fixed entropy schedule acting as a
  floor instead of the step-size adaptation;
* ``more``: the original joint update with one KL bound and an entropy bound.

Internally the fitness is maximized.  ``minimize=True`` negates the
objective on the way in and reports every recorded value in the caller's
convention.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Iterable

import numpy as np

from .entropy import (
    BaselineEntropyConfig,
    EvolutionPathState,
    apply_sigma,
    baseline_beta,
    entropy_delta,
    update_path,
)
from .errors import CasMoreError, FactorizationError, FitError, SolverError
from .gaussian import GaussianSearchDist, entropy, sample
from .surrogate import Complexity, NormalizationConfig, SampleBuffer, fit, model_complexity
from .trust_region import solve_cov_update, solve_joint_more_update, solve_mean_update

log = logging.getLogger(__name__)

ALGORITHMS = ("cas_more", "ca_more", "more")

# Baseline settings picked by a grid search on 15-D Rosenbrock: the fastest
# linear entropy decrease (and, for ``more``, joint KL bound) that still
# reached the 1e-8 target on every tuning seed.
BASELINE_DEFAULTS = {
    "ca_more": {"eps": 1.0, "delta_lin": 0.18},  # eps unused by ca_more
    "more": {"eps": 1.0, "delta_lin": 0.17},
}


def default_population(n: int) -> int:
    return 4 + int(math.floor(3.0 * math.log(n)))


def default_buffer_capacity(n: int) -> int:
    return max(math.ceil(1.5 * (1 + n + n * (n + 1) / 2)), 8 * (n + 1))


def default_eps_sigma(n: int) -> float:
    return 1.5 / (10.0 + n**1.5)


def default_c_sigma(n: int) -> float:
    return 1.0 / (2.0 + n**0.75)


@dataclass(frozen=True)
class OptimizerConfig:
    """Hyper-parameters.  ``None`` means "use the default" for the dimension
    and algorithm (see :meth:`resolved`).

    ``eps`` and ``baseline_entropy`` are only used by ``more`` (joint KL bound
    and entropy schedule) and ``ca_more`` (entropy schedule); their defaults
    come from :data:`BASELINE_DEFAULTS`.  ``ridge_lambda`` is relative to the
    mean diagonal of the Gram matrix.
    """

    population: int | None = None
    buffer_capacity: int | None = None
    eps_mu: float = 0.5
    eps_sigma: float | None = None
    c_sigma: float | None = None
    alpha: float = 1.0
    theta: float = 3 * math.pi / 8
    normalization: NormalizationConfig = field(default_factory=NormalizationConfig)
    algorithm: str = "cas_more"
    baseline_entropy: BaselineEntropyConfig | None = None
    eps: float | None = None
    ridge_lambda: float = 1e-8
    seed: int | None = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.eps_mu > 0:
            raise ValueError("eps_mu must be positive")
        for name in ("eps_sigma", "eps", "c_sigma"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive")
        if self.population is not None and self.population < 1:
            raise ValueError("population must be positive")
        if self.ridge_lambda < 0:
            raise ValueError("ridge_lambda must be non-negative")

    def resolved(self, n: int) -> "OptimizerConfig":
        """Copy with every default filled in for dimension ``n``."""
        # cas_more ignores both fields; fill them anyway so every config is complete
        base = BASELINE_DEFAULTS["more" if self.algorithm == "more" else "ca_more"]
        return replace(
            self,
            population=self.population or default_population(n),
            buffer_capacity=self.buffer_capacity or default_buffer_capacity(n),
            eps_sigma=self.eps_sigma or default_eps_sigma(n),
            c_sigma=self.c_sigma or default_c_sigma(n),
            eps=self.eps or base["eps"],
            baseline_entropy=self.baseline_entropy or BaselineEntropyConfig(delta_lin=base["delta_lin"]),
        )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class IterationRecord:
    """What happened in one iteration (values in the caller's sign convention)."""

    iteration: int
    evaluations: int
    mean_evaluations: int
    f_mean: float
    f_best: float
    surrogate_at_mean: float
    entropy: float
    sigma: float
    path_norm: float
    pop_mean_fitness: float
    status: str
    complexity: str
    kl_mean: float = math.nan
    kl_cov: float = math.nan


@dataclass(frozen=True)
class StopCondition:
    """When :func:`run` stops.  ``stagnation_window=None`` means ``50 (1 + n // 10)``."""

    target: float | None = None
    max_evaluations: int | None = None
    stagnation_window: int | None = None
    stagnation_tol: float = 1e-12
    min_sigma: float = 1e-10
    max_condition: float = 1e14


class MoreOptimizer:
    """Ask/tell optimizer.

    ``ask()`` returns the next population as rows of an array; ``tell()``
    takes their fitness values and performs one update.  ``step()`` does both
    with a callable objective.
    """

    def __init__(
        self,
        initial: GaussianSearchDist,
        config: OptimizerConfig | None = None,
        *,
        minimize: bool = False,
    ):
        n = initial.dim
        self.config = (config or OptimizerConfig()).resolved(n)
        self.minimize = minimize
        self.dist = initial
        self.rng = np.random.default_rng(self.config.seed)
        self.buffer = SampleBuffer(self.config.buffer_capacity, n)
        self.path = EvolutionPathState(
            n, self.config.c_sigma, alpha=self.config.alpha, theta=self.config.theta
        )
        self.iteration = 0
        self.evaluations = 0
        self.mean_evaluations = 0
        self.failures = 0
        self.best_x: np.ndarray | None = None
        self.best_f = math.inf if minimize else -math.inf
        self.last_model = None
        self._pending: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.dist.dim

    @property
    def population(self) -> int:
        return self.config.population

    def _better(self, a: float, b: float) -> bool:
        return a < b if self.minimize else a > b

    def _observe(self, x, f: float) -> None:
        if math.isfinite(f) and self._better(f, self.best_f):
            self.best_f = float(f)
            self.best_x = np.array(x, dtype=float)

    def ask(self) -> np.ndarray:
        if self._pending is None:
            self._pending = sample(self.dist, self.population, self.rng)
        return self._pending.copy()

    def _clamp_nonfinite(self, ys: np.ndarray) -> np.ndarray:
        bad = ~np.isfinite(ys)
        if not bad.any():
            return ys
        pool = np.concatenate([self.buffer.ys, ys[~bad]])
        fill = float(pool.min() - 3.0 * pool.std()) if pool.size else 0.0
        log.warning("clamping %d non-finite fitness values to %g", int(bad.sum()), fill)
        ys = ys.copy()
        ys[bad] = fill
        return ys

    def tell(self, fitness: Iterable[float], f_mean: float = math.nan) -> IterationRecord:
        """Update from the fitness of the population returned by :meth:`ask`.

        ``f_mean`` is an optional evaluation at the *updated* mean made by the
        caller; it is only recorded.
        """
        if self._pending is None:
            raise RuntimeError("tell() called without a preceding ask()")
        xs = self._pending
        ys = np.asarray(list(fitness), dtype=float).reshape(-1)
        if ys.size != xs.shape[0]:
            raise ValueError(f"expected {xs.shape[0]} fitness values, got {ys.size}")
        self._pending = None
        for x, y in zip(xs, ys):
            self._observe(x, float(y))
        internal = self._clamp_nonfinite(-ys if self.minimize else ys)
        self.buffer.extend(xs, internal)
        self.evaluations += xs.shape[0]
        self.iteration += 1

        status, complexity, kl_mu, kl_cov, sigma, surrogate_value = self._update()
        if status not in ("updated", "insufficient", "uninformative"):
            self.failures += 1
        pop_mean = float(np.mean(-internal if self.minimize else internal))
        return IterationRecord(
            iteration=self.iteration,
            evaluations=self.evaluations,
            mean_evaluations=self.mean_evaluations,
            f_mean=float(f_mean),
            f_best=self.best_f,
            surrogate_at_mean=surrogate_value,
            entropy=entropy(self.dist),
            sigma=sigma,
            path_norm=self.path.path_norm,
            pop_mean_fitness=pop_mean,
            status=status,
            complexity=complexity,
            kl_mean=kl_mu,
            kl_cov=kl_cov,
        )

    def _update(self):
        cfg = self.config
        complexity = model_complexity(len(self.buffer), self.dim)
        if complexity is Complexity.INSUFFICIENT:
            return "insufficient", complexity.value, math.nan, math.nan, 1.0, math.nan
        try:
            model = fit(self.buffer, cfg.normalization, cfg.ridge_lambda)
        except FitError as exc:
            log.debug("surrogate fit failed: %s", exc)
            return "fit_failed", complexity.value, math.nan, math.nan, 1.0, math.nan
        self.last_model = model
        if model.uninformative:
            # all targets equal: nothing to learn, keep distribution and path
            return "uninformative", complexity.value, 0.0, 0.0, 1.0, math.nan
        old = self.dist
        sigma = 1.0
        try:
            if cfg.algorithm == "more":
                beta = baseline_beta(cfg.baseline_entropy, entropy(old))
                joint = solve_joint_more_update(old, model, cfg.eps, beta)
                new = joint.new_dist
                kl_mu = kl_cov = joint.kl_achieved
            else:
                mean_sol = solve_mean_update(old, model, cfg.eps_mu)
                cov_sol = solve_cov_update(old, model, cfg.eps_sigma)
                new = GaussianSearchDist(mean_sol.new_mean, cov_sol.new_cov)
                kl_mu, kl_cov = mean_sol.kl_achieved, cov_sol.kl_achieved
                if cfg.algorithm == "cas_more":
                    path = update_path(self.path, old, mean_sol.new_mean, cfg.eps_mu)
                    new, sigma, clamped = apply_sigma(new, entropy_delta(path), self.dim)
                    if clamped:
                        log.warning("step-size factor clamped at iteration %d", self.iteration)
                    self.path = path
                else:
                    floor = baseline_beta(cfg.baseline_entropy, entropy(old))
                    h_new = entropy(new)
                    if h_new < floor:
                        sigma = math.exp((floor - h_new) / self.dim)
                        new = GaussianSearchDist(new.mean, sigma * sigma * new.cov)
        except (SolverError, FactorizationError) as exc:
            log.debug("distribution update failed: %s", exc)
            return "solver_failed", complexity.value, math.nan, math.nan, 1.0, math.nan
        self.dist = new
        return "updated", complexity.value, kl_mu, kl_cov, sigma, model.predict(new.mean)

    def step(
        self,
        objective: Callable[[np.ndarray], float],
        *,
        mean_objective: Callable[[np.ndarray], float] | None = None,
        map_fn: Callable = map,
    ) -> IterationRecord:
        """One ask/evaluate/tell cycle followed by an evaluation at the new mean.

        ``map_fn`` may be a parallel map (e.g. ``executor.map``) if the
        objective is pure; results are consumed in sample order.
        """
        xs = self.ask()
        ys = list(map_fn(objective, list(xs)))
        record = self.tell(ys)
        f_mean = float((mean_objective or objective)(self.dist.mean))
        self.mean_evaluations += 1
        self._observe(self.dist.mean, f_mean)
        return replace(record, f_mean=f_mean, f_best=self.best_f, mean_evaluations=self.mean_evaluations)


@dataclass
class RunResult:
    dist: GaussianSearchDist
    trace: list[IterationRecord]
    reason: str
    evaluations: int
    mean_evaluations: int
    best_x: np.ndarray | None
    best_f: float
    population: int
    evals_to_target: int | None = None


def _condition_number(cov: np.ndarray) -> tuple[float, float]:
    w = np.linalg.eigvalsh(cov)
    return math.sqrt(max(w[-1], 0.0)), (w[-1] / w[0] if w[0] > 0 else math.inf)


def run(
    config: OptimizerConfig,
    objective: Callable[[np.ndarray], float],
    stop: StopCondition,
    initial: GaussianSearchDist,
    *,
    minimize: bool = False,
    mean_objective: Callable[[np.ndarray], float] | None = None,
    map_fn: Callable = map,
    callback: Callable[[IterationRecord], None] | None = None,
) -> RunResult:
    """Iterate :meth:`MoreOptimizer.step` until a stop condition fires.

    Termination reasons: ``target_reached`` (value at the mean reaches
    ``stop.target``), ``budget_exhausted``, ``degenerate_sigma`` (largest
    standard deviation below ``stop.min_sigma``), ``ill_conditioned`` and
    ``stagnation`` (the median value at the mean over the last fifth of the
    window improved by less than ``stop.stagnation_tol`` on the median over
    its first fifth).  Only sample evaluations count against the budget; the
    evaluation at the mean is tracked separately.
    """
    opt = MoreOptimizer(initial, config, minimize=minimize)
    n = initial.dim
    window = stop.stagnation_window or 50 * (1 + n // 10)
    if stop.max_evaluations is not None and stop.max_evaluations < 1:
        raise ValueError("max_evaluations must be positive")
    trace: list[IterationRecord] = []
    history: list[float] = []
    reason = None
    evals_to_target = None
    while reason is None:
        record = opt.step(objective, mean_objective=mean_objective, map_fn=map_fn)
        trace.append(record)
        history.append(record.f_mean)
        if callback is not None:
            callback(record)
        if stop.target is not None and math.isfinite(record.f_mean) and (
            record.f_mean <= stop.target if minimize else record.f_mean >= stop.target
        ):
            reason = "target_reached"
            evals_to_target = record.evaluations
            break
        if stop.max_evaluations is not None and opt.evaluations >= stop.max_evaluations:
            reason = "budget_exhausted"
            break
        max_std, cond = _condition_number(opt.dist.cov)
        if max_std < stop.min_sigma:
            reason = "degenerate_sigma"
        elif cond > stop.max_condition:
            reason = "ill_conditioned"
        elif len(history) >= window:
            # median of the newest fifth of the window against the oldest fifth
            k = max(1, window // 5)
            old = float(np.nanmedian(history[-window:][:k]))
            new = float(np.nanmedian(history[-k:]))
            gain = old - new if minimize else new - old
            if not gain >= stop.stagnation_tol:
                reason = "stagnation"
    return RunResult(
        dist=opt.dist,
        trace=trace,
        reason=reason,
        evaluations=opt.evaluations,
        mean_evaluations=opt.mean_evaluations,
        best_x=opt.best_x,
        best_f=opt.best_f,
        population=opt.population,
        evals_to_target=evals_to_target,
    )


@dataclass
class RestartResult:
    runs: list[RunResult]
    evaluations: int
    best_x: np.ndarray | None
    best_f: float
    reason: str
    evals_to_target: int | None

    @property
    def target_reached(self) -> bool:
        return self.evals_to_target is not None

    @property
    def trace(self) -> list[IterationRecord]:
        """Records of all runs, with iteration and evaluation counts made cumulative."""
        out: list[IterationRecord] = []
        it = ev = mev = 0
        for r in self.runs:
            for rec in r.trace:
                out.append(
                    replace(
                        rec,
                        iteration=it + rec.iteration,
                        evaluations=ev + rec.evaluations,
                        mean_evaluations=mev + rec.mean_evaluations,
                    )
                )
            if r.trace:
                it += r.trace[-1].iteration
                ev += r.evaluations
                mev += r.mean_evaluations
        return out


def run_with_restarts(
    config: OptimizerConfig,
    objective: Callable[[np.ndarray], float],
    total_budget: int,
    target: float | None,
    initial: GaussianSearchDist | Callable[[int], GaussianSearchDist],
    *,
    stop: StopCondition | None = None,
    minimize: bool = False,
    mean_objective: Callable[[np.ndarray], float] | None = None,
    map_fn: Callable = map,
    max_restarts: int = 100,
) -> RestartResult:
    """Restart with a doubled population until the target or the budget is reached.

    Every restart begins from a fresh distribution (``initial`` or
    ``initial(restart_index)``), an empty buffer and a zero evolution path,
    and draws its random stream from ``(seed, restart_index)``.  The buffer
    capacity is raised to the population size if it would be smaller.
    """
    n = initial.dim if isinstance(initial, GaussianSearchDist) else initial(0).dim
    base = config.resolved(n)
    if total_budget < base.population:
        raise ValueError("total budget must cover at least one population")
    stop = stop or StopCondition()
    runs: list[RunResult] = []
    used = 0
    pop = base.population
    best_x, best_f = None, (math.inf if minimize else -math.inf)
    evals_to_target = None
    reason = "budget_exhausted"
    for restart in range(max_restarts + 1):
        remaining = total_budget - used
        if remaining <= 0:
            break
        seed = None
        if base.seed is not None:
            seed = int(np.random.SeedSequence([base.seed, restart]).generate_state(1)[0])
        cfg = replace(
            base,
            population=pop,
            buffer_capacity=max(base.buffer_capacity, pop),
            seed=seed if restart else base.seed,
        )
        start = initial if isinstance(initial, GaussianSearchDist) else initial(restart)
        result = run(
            cfg,
            objective,
            replace(stop, target=target, max_evaluations=remaining),
            start,
            minimize=minimize,
            mean_objective=mean_objective,
            map_fn=map_fn,
        )
        if result.best_x is not None and (
            result.best_f < best_f if minimize else result.best_f > best_f
        ):
            best_x, best_f = result.best_x, result.best_f
        runs.append(result)
        if result.evals_to_target is not None:
            evals_to_target = used + result.evals_to_target
        used += result.evaluations
        reason = result.reason
        if reason == "target_reached":
            break
        log.info("restart %d ended with %s; doubling population to %d", restart, reason, 2 * pop)
        pop *= 2
    return RestartResult(runs, used, best_x, best_f, reason, evals_to_target)


__all__ = [
    "CasMoreError",
    "IterationRecord",
    "MoreOptimizer",
    "OptimizerConfig",
    "RestartResult",
    "RunResult",
    "StopCondition",
    "default_buffer_capacity",
    "default_c_sigma",
    "default_eps_sigma",
    "default_population",
    "run",
    "run_with_restarts",
]
