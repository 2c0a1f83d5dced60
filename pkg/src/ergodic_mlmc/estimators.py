"""The three estimators: plain Monte Carlo, multilevel, multilevel with
change of measure.

A run either follows an explicit plan (horizon, levels, path counts) or
is driven by a target accuracy ``eps``: the mean square error budget is
split evenly three ways between the finite-horizon truncation bias, the
discretization bias and the statistical variance. The horizon comes from
the model's exponential convergence rate, the finest level from first
order weak convergence, and the per-level path counts from the usual
cost-variance allocation seeded by a screening pass.

Path indices are processed in fixed-size blocks and block sums are
combined in index order, so results are bit-identical for any worker
count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from . import coupling
from .errors import ConfigError, NumericOverflowError
from .models import ModelSpec, SpringPolicy, get_model, validate_spring_policy
from .sampling import DEFAULT_MASTER_SEED, TAG_ESTIMATOR, StreamKey

__all__ = [
    "BLOCK_SIZE",
    "LevelStats",
    "MlmcConfig",
    "MlmcReport",
    "allocate_samples",
    "choose_horizon",
    "choose_max_level",
    "level_sample",
    "mlmc_estimate",
    "mc_estimate",
    "estimate",
]

# Paths per scheduling block. Block boundaries are fixed by path index,
# never by worker count, which keeps reductions deterministic.
BLOCK_SIZE = 1024

ESTIMATOR_KINDS = ("mc", "mlmc_standard", "mlmc_com")


@dataclass
class LevelStats:
    """Running power sums of one level's correction samples.

    ``sum1``..``sum4`` accumulate P, P^2, P^3, P^4; mean, variance and
    kurtosis derive from them. ``divergence_count`` counts samples whose
    terminal fine/coarse distance exceeded the model threshold.
    """

    level: int
    h: float
    n: int = 0
    sum1: float = 0.0
    sum2: float = 0.0
    sum3: float = 0.0
    sum4: float = 0.0
    cost_total: int = 0
    divergence_count: int = 0

    def add(self, samples: np.ndarray, costs: np.ndarray,
            diverged: Optional[np.ndarray] = None) -> None:
        samples = np.asarray(samples, dtype=float)
        if not np.isfinite(samples).all():
            raise NumericOverflowError(
                f"non-finite correction sample on level {self.level}")
        self.n += samples.size
        self.sum1 += float(np.sum(samples))
        self.sum2 += float(np.sum(samples ** 2))
        self.sum3 += float(np.sum(samples ** 3))
        self.sum4 += float(np.sum(samples ** 4))
        self.cost_total += int(np.sum(costs))
        if diverged is not None:
            self.divergence_count += int(np.count_nonzero(diverged))

    def merge(self, other: "LevelStats") -> None:
        if (other.level, other.h) != (self.level, self.h):
            raise ValueError("cannot merge stats of different levels")
        self.n += other.n
        self.sum1 += other.sum1
        self.sum2 += other.sum2
        self.sum3 += other.sum3
        self.sum4 += other.sum4
        self.cost_total += other.cost_total
        self.divergence_count += other.divergence_count

    @property
    def mean(self) -> float:
        return self.sum1 / self.n if self.n else math.nan

    @property
    def variance(self) -> float:
        if self.n == 0:
            return math.nan
        m1 = self.sum1 / self.n
        return max(self.sum2 / self.n - m1 * m1, 0.0)

    @property
    def kurtosis(self) -> Optional[float]:
        """Standardized fourth central moment; None below 4 samples or at
        zero variance."""
        if self.n < 4:
            return None
        m1 = self.sum1 / self.n
        raw2 = self.sum2 / self.n
        var = raw2 - m1 * m1
        if var <= 0.0:
            return None
        m4 = (self.sum4 / self.n - 4.0 * m1 * self.sum3 / self.n
              + 6.0 * m1 * m1 * raw2 - 3.0 * m1 ** 4)
        return m4 / (var * var)

    @property
    def mean_cost(self) -> float:
        return self.cost_total / self.n if self.n else math.nan

    @property
    def divergence_fraction(self) -> float:
        return self.divergence_count / self.n if self.n else math.nan

    def to_dict(self) -> dict:
        return {
            "level": self.level, "h": self.h, "n": self.n,
            "mean": self.mean, "variance": self.variance,
            "kurtosis": self.kurtosis, "mean_cost": self.mean_cost,
            "divergence_fraction": self.divergence_fraction,
            "cost_total": self.cost_total,
            "divergence_count": self.divergence_count,
        }


def allocate_samples(variances: Sequence[float], costs: Sequence[float],
                     eps: float):
    """Cost-optimal per-level path counts for a variance budget eps^2 / 3.

    ``N_l = ceil(3 eps^-2 sqrt(V_l / C_l) sum_k sqrt(V_k C_k))``, the
    Lagrange minimizer of total cost subject to ``sum V_l / N_l <=
    eps^2 / 3``, floored at one path per level. Returns ``(counts,
    degenerate)``; ``degenerate`` is True when every variance is zero and
    the counts are all ones.
    """
    v = np.asarray(variances, dtype=float)
    c = np.asarray(costs, dtype=float)
    if v.shape != c.shape or v.ndim != 1 or v.size == 0:
        raise ValueError("variances and costs must be equal-length vectors")
    if (v < 0).any() or (c <= 0).any() or eps <= 0:
        raise ValueError("need V >= 0, C > 0 and eps > 0")
    total = float(np.sum(np.sqrt(v * c)))
    if total == 0.0:
        return [1] * v.size, True
    raw = 3.0 * eps ** -2 * np.sqrt(v / c) * total
    counts = [max(1, int(math.ceil(r - 1e-9))) for r in raw]
    return counts, False


def choose_horizon(eps: float, lambda_star: float, mu_star: float,
                   min_horizon: float = 0.0) -> float:
    """Simulation horizon bounding the truncation bias by eps / sqrt(6).

    ``T = log(1/eps) / lambda_star + log(sqrt(6) mu_star) / lambda_star``,
    floored at ``min_horizon``.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if lambda_star <= 0 or mu_star <= 0:
        raise ValueError("lambda_star and mu_star must be positive")
    T = (math.log(1.0 / eps) + math.log(math.sqrt(6.0) * mu_star)) / lambda_star
    return max(T, min_horizon)


def choose_max_level(eps: float, h0: float, bias_constant: float = 1.0) -> int:
    """Smallest L with ``2^-L h0 <= bias_constant * eps`` (first order
    weak bias)."""
    if eps <= 0 or h0 <= 0 or bias_constant <= 0:
        raise ValueError("eps, h0 and bias_constant must be positive")
    L = 0
    while h0 * 2.0 ** -L > bias_constant * eps * (1.0 + 1e-12):
        L += 1
        if L > 62:
            raise ConfigError("required level exceeds 62; check eps and h0")
    return L


@dataclass
class MlmcConfig:
    """Everything one estimator run needs.

    Exactly one of ``eps`` (accuracy-driven mode) or an explicit plan
    (``horizon`` plus ``n_per_level``) must be given. Exactly one of
    ``h0`` (uniform steps) or ``delta0`` (adaptive steps) selects the
    stepping mode.
    """

    model: Union[str, ModelSpec]
    estimator: str = "mlmc_com"
    spring: SpringPolicy = field(default_factory=SpringPolicy.none)
    h0: Optional[float] = None
    delta0: Optional[float] = None
    eps: Optional[float] = None
    lambda_star: Optional[float] = None
    mu_star: float = 1.0
    horizon: Optional[float] = None
    n_per_level: Optional[List[int]] = None
    seed: int = DEFAULT_MASTER_SEED
    n_warm: int = 100
    bias_constant: float = 1.0
    max_paths_per_level: int = 10_000_000
    workers: int = 1
    x0_override: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.estimator not in ESTIMATOR_KINDS:
            raise ConfigError(
                f"unknown estimator {self.estimator!r}; expected one of "
                f"{ESTIMATOR_KINDS}")
        if (self.h0 is None) == (self.delta0 is None):
            raise ConfigError("set exactly one of h0 (uniform) or delta0 "
                              "(adaptive)")
        step = self.h0 if self.h0 is not None else self.delta0
        if step <= 0:
            raise ConfigError("h0 / delta0 must be positive")
        if (self.eps is None) == (self.horizon is None):
            raise ConfigError("set exactly one of eps (accuracy-driven) or "
                              "horizon (explicit)")
        if self.eps is not None:
            if not 0.0 < self.eps < 1.0:
                raise ConfigError(f"eps must lie in (0, 1), got {self.eps}")
            if self.lambda_star is None or self.lambda_star <= 0:
                raise ConfigError("accuracy-driven mode needs lambda_star > 0")
            if self.mu_star <= 0:
                raise ConfigError("mu_star must be positive")
            if self.n_per_level is not None:
                raise ConfigError("n_per_level belongs to the explicit plan; "
                                  "it conflicts with eps")
        else:
            if self.horizon <= 0:
                raise ConfigError("horizon must be positive")
            if self.n_per_level is not None and (
                    len(self.n_per_level) == 0
                    or any(n < 1 for n in self.n_per_level)):
                raise ConfigError("n_per_level must be nonempty, all >= 1")
        if self.n_warm < 4:
            raise ConfigError("n_warm must be at least 4")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")

    # -- resolved views ----------------------------------------------------

    def resolved_model(self) -> ModelSpec:
        model = get_model(self.model) if isinstance(self.model, str) else self.model
        if self.x0_override is not None:
            from dataclasses import replace
            model = replace(model, x0=np.asarray(self.x0_override, dtype=float))
        return model

    @property
    def adaptive(self) -> bool:
        return self.delta0 is not None

    @property
    def base_step(self) -> float:
        return self.h0 if self.h0 is not None else self.delta0

    def level_step(self, level: int) -> float:
        return self.base_step * 2.0 ** -level


@dataclass
class MlmcReport:
    """Outcome of one estimator run."""

    estimator: str
    estimate: float
    levels: List[LevelStats]
    horizon: float
    max_level: int
    total_cost: int
    statistical_error: float
    provenance: dict
    incomplete: bool = False

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator,
            "estimate": self.estimate,
            "horizon": self.horizon,
            "max_level": self.max_level,
            "total_cost": self.total_cost,
            "statistical_error": self.statistical_error,
            "incomplete": self.incomplete,
            "provenance": self.provenance,
            "levels": [s.to_dict() for s in self.levels],
        }


# ---------------------------------------------------------------------------
# level sampling


def _policy_for(config: MlmcConfig) -> SpringPolicy:
    return SpringPolicy.none() if config.estimator != "mlmc_com" else config.spring


def _keys(config: MlmcConfig, level: int, start: int, stop: int,
          tag: int) -> List[StreamKey]:
    return [StreamKey(config.seed, level, i, tag) for i in range(start, stop)]


def _level_block(config: MlmcConfig, level: int, start: int, stop: int,
                 horizon: float, tag: int):
    """Raw samples for path indices [start, stop) on one level.

    Returns (P, cost, diverged, overflowed) arrays. Level 0 is a plain
    single path; higher levels are coupled pairs under the configured
    scheme.
    """
    model = config.resolved_model()
    keys = _keys(config, level, start, stop, tag)
    if level == 0:
        if config.adaptive:
            phi, cost, overflow = coupling.simulate_adaptive_single_batch(
                model, config.delta0, horizon, keys)
        else:
            phi, cost, overflow, _, _ = coupling.simulate_single_batch(
                model, config.h0, horizon, keys)
        diverged = np.zeros(len(keys), dtype=bool)
        return phi, cost, diverged, ~np.isnan(overflow)
    policy = _policy_for(config)
    step = config.level_step(level)
    if config.adaptive:
        batch = coupling.simulate_adaptive_coupled_batch(
            model, policy, step, horizon, keys)
    else:
        batch = coupling.simulate_coupled_batch(
            model, policy, step, horizon, keys)
    diverged = batch.end_divergence > model.divergence_threshold
    diverged |= batch.overflowed
    return batch.corrections(), batch.cost, diverged, batch.overflowed


def level_sample(level: int, config: MlmcConfig, path_index: int,
                 horizon: Optional[float] = None,
                 tag: int = TAG_ESTIMATOR):
    """One correction sample ``(P, cost, diverged)`` for a path index."""
    if level < 0 or path_index < 0:
        raise ValueError("level and path_index must be >= 0")
    horizon = horizon if horizon is not None else _resolve_horizon(config)
    P, cost, diverged, overflowed = _level_block(
        config, level, path_index, path_index + 1, horizon, tag)
    if overflowed[0]:
        raise NumericOverflowError(
            f"level {level} path {path_index} became non-finite")
    return float(P[0]), int(cost[0]), bool(diverged[0])


def _run_level(config: MlmcConfig, stats: LevelStats, start: int, stop: int,
               horizon: float, tag: int,
               sim_level: Optional[int] = None) -> None:
    """Accumulate samples for indices [start, stop) into ``stats``.

    Blocks are scheduled across workers but always merged in index order.
    Non-finite samples abort with a typed error; clipping them would
    silently corrupt variance and kurtosis measurements. ``sim_level``
    overrides which sampler runs (plain Monte Carlo reuses the level-0
    single-path sampler while reporting at the finest level).
    """
    if stop <= start:
        return
    lev = stats.level if sim_level is None else sim_level
    blocks = [(b, min(b + BLOCK_SIZE, stop))
              for b in range(start, stop, BLOCK_SIZE)]

    def work(block):
        return _level_block(config, lev, block[0], block[1], horizon, tag)

    if config.workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(work, blocks))
    else:
        results = [work(b) for b in blocks]
    for P, cost, diverged, overflowed in results:
        if overflowed.any():
            raise NumericOverflowError(
                f"{int(overflowed.sum())} path(s) became non-finite on "
                f"level {stats.level}; coarsest usable step exceeded")
        stats.add(P, cost, diverged)


# ---------------------------------------------------------------------------
# estimators


def _resolve_horizon(config: MlmcConfig) -> float:
    if config.horizon is not None:
        T = config.horizon
    else:
        T = choose_horizon(config.eps, config.lambda_star, config.mu_star,
                           min_horizon=2.0 * config.base_step)
    if not config.adaptive:
        T = coupling.round_up_horizon(T, 2.0 * config.h0)
    return T


def _check_policy(config: MlmcConfig) -> None:
    if config.estimator == "mlmc_com":
        validate_spring_policy(config.spring, config.resolved_model())


def mlmc_estimate(config: MlmcConfig) -> MlmcReport:
    """Multilevel estimate (standard or change-of-measure coupling)."""
    if config.estimator == "mc":
        raise ConfigError("use mc_estimate for the plain Monte Carlo kind")
    _check_policy(config)
    horizon = _resolve_horizon(config)
    incomplete = False

    if config.eps is not None:
        L = choose_max_level(config.eps, config.base_step, config.bias_constant)
        levels = [LevelStats(level=l, h=config.level_step(l))
                  for l in range(L + 1)]
        for st in levels:
            _run_level(config, st, 0, config.n_warm, horizon, TAG_ESTIMATOR)
        counts, degenerate = allocate_samples(
            [st.variance for st in levels],
            [st.mean_cost for st in levels], config.eps)
        targets = []
        for st, n_target in zip(levels, counts):
            n_final = max(n_target, config.n_warm)
            if n_final > config.max_paths_per_level:
                n_final = config.max_paths_per_level
                incomplete = True
            targets.append(n_final)
            _run_level(config, st, config.n_warm, n_final, horizon,
                       TAG_ESTIMATOR)
        provenance = {
            "mode": "eps",
            "eps": config.eps,
            "lambda_star": config.lambda_star,
            "mu_star": config.mu_star,
            "horizon_formula": choose_horizon(
                config.eps, config.lambda_star, config.mu_star),
            "bias_constant": config.bias_constant,
            "n_warm": config.n_warm,
            "allocation": counts,
            "allocation_degenerate": degenerate,
            "targets": targets,
            "seed": config.seed,
        }
    else:
        if config.n_per_level is None:
            raise ConfigError("explicit mode needs n_per_level")
        L = len(config.n_per_level) - 1
        levels = [LevelStats(level=l, h=config.level_step(l))
                  for l in range(L + 1)]
        for st, n in zip(levels, config.n_per_level):
            _run_level(config, st, 0, n, horizon, TAG_ESTIMATOR)
        provenance = {"mode": "explicit", "horizon": config.horizon,
                      "n_per_level": list(config.n_per_level),
                      "seed": config.seed}

    est = float(sum(st.mean for st in levels))
    stat_err = math.sqrt(sum(st.variance / st.n for st in levels))
    return MlmcReport(
        estimator=config.estimator, estimate=est, levels=levels,
        horizon=horizon, max_level=levels[-1].level,
        total_cost=int(sum(st.cost_total for st in levels)),
        statistical_error=stat_err, provenance=provenance,
        incomplete=incomplete)


def mc_estimate(config: MlmcConfig) -> MlmcReport:
    """Plain Monte Carlo at the finest step, shaped like an MLMC report."""
    if config.estimator != "mc":
        raise ConfigError("mc_estimate requires estimator kind 'mc'")
    horizon = _resolve_horizon(config)
    incomplete = False
    if config.eps is not None:
        L = choose_max_level(config.eps, config.base_step, config.bias_constant)
    else:
        if config.n_per_level is None:
            raise ConfigError("explicit mode needs n_per_level")
        L = len(config.n_per_level) - 1

    # reshape the config so the single-path sampler runs at the finest step
    fine = MlmcConfig(
        model=config.model, estimator="mc",
        h0=None if config.adaptive else config.level_step(L),
        delta0=config.level_step(L) if config.adaptive else None,
        horizon=horizon, seed=config.seed,
        n_warm=config.n_warm, workers=config.workers,
        max_paths_per_level=config.max_paths_per_level,
        x0_override=config.x0_override)
    stats = LevelStats(level=L, h=config.level_step(L))
    # screening reuses the same key range the final pass extends
    if config.eps is not None:
        _run_level(fine, stats, 0, config.n_warm, horizon, TAG_ESTIMATOR,
                   sim_level=0)
        n_target = max(int(math.ceil(3.0 * stats.variance / config.eps ** 2)),
                       config.n_warm)
        if n_target > config.max_paths_per_level:
            n_target = config.max_paths_per_level
            incomplete = True
        _run_level(fine, stats, config.n_warm, n_target, horizon,
                   TAG_ESTIMATOR, sim_level=0)
        provenance = {"mode": "eps", "eps": config.eps,
                      "lambda_star": config.lambda_star,
                      "mu_star": config.mu_star, "n_warm": config.n_warm,
                      "n_target": n_target, "seed": config.seed}
    else:
        n = config.n_per_level[0]
        _run_level(fine, stats, 0, n, horizon, TAG_ESTIMATOR, sim_level=0)
        provenance = {"mode": "explicit", "horizon": config.horizon,
                      "n": n, "seed": config.seed}

    return MlmcReport(
        estimator="mc", estimate=stats.mean, levels=[stats], horizon=horizon,
        max_level=L, total_cost=stats.cost_total,
        statistical_error=math.sqrt(stats.variance / stats.n),
        provenance=provenance, incomplete=incomplete)


def estimate(config: MlmcConfig) -> MlmcReport:
    """Dispatch on the configured estimator kind."""
    if config.estimator == "mc":
        return mc_estimate(config)
    return mlmc_estimate(config)
