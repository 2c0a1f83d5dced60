"""Measurement harness: level sweeps, growth-in-T studies, rate fits,
divergence probabilities, base-step search and cost scaling.

These routines quantify the behaviour that motivates the change of
measure: per-level variance and kurtosis, how the correction variance
grows with the horizon under each coupling, how coarse the base step may
be while level 0 still dominates, and how total cost scales with the
target accuracy. Everything is deterministic given the master seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence

import numpy as np

from . import coupling
from .errors import ConfigError, ErgodicMlmcError, InvalidDataError
from .estimators import (LevelStats, MlmcConfig, _policy_for,
                         _resolve_horizon, _run_level, estimate)
from .sampling import TAG_DIAGNOSTIC, TAG_H0_SEARCH, StreamKey

__all__ = [
    "SeriesFit",
    "fit_rate",
    "level_sweep",
    "variance_vs_horizon",
    "divergence_probability",
    "H0SearchResult",
    "find_h0",
    "fit_lambda_star",
    "cost_vs_epsilon",
    "cost_exponent",
]


@dataclass
class SeriesFit:
    """Least-squares line through (possibly transformed) data.

    ``transform`` is one of ``"linear"`` (y vs x), ``"log-y"`` (ln y vs
    x) or ``"log2-y"`` (log2 y vs x). ``residual_norm`` is the RMS
    residual in the fitted space.
    """

    x: np.ndarray
    y: np.ndarray
    slope: float
    intercept: float
    residual_norm: float
    transform: str

    def to_dict(self) -> dict:
        return {"x": list(map(float, self.x)), "y": list(map(float, self.y)),
                "slope": self.slope, "intercept": self.intercept,
                "residual_norm": self.residual_norm,
                "transform": self.transform}


def fit_rate(x: Sequence[float], y: Sequence[float],
             transform: str = "linear") -> SeriesFit:
    """Fit a line to the series under the declared transform."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 3:
        raise InvalidDataError("need at least 3 (x, y) pairs of equal length")
    if transform == "linear":
        z = y
    elif transform == "log-y":
        if (y <= 0).any():
            raise InvalidDataError("log-y transform requires positive y")
        z = np.log(y)
    elif transform == "log2-y":
        if (y <= 0).any():
            raise InvalidDataError("log2-y transform requires positive y")
        z = np.log2(y)
    else:
        raise InvalidDataError(f"unknown transform {transform!r}")
    slope, intercept = np.polyfit(x, z, 1)
    resid = z - (slope * x + intercept)
    return SeriesFit(x=x, y=y, slope=float(slope), intercept=float(intercept),
                     residual_norm=float(np.sqrt(np.mean(resid ** 2))),
                     transform=transform)


def level_sweep(config: MlmcConfig, l_max: int, n: int,
                horizon: Optional[float] = None) -> List[LevelStats]:
    """Per-level statistics for levels 0..l_max with n samples each.

    Level 0 is the plain single-path sample, higher levels the coupled
    correction of the configured scheme. Simulation errors propagate.
    """
    if n < 4:
        raise ConfigError("need at least 4 samples per level")
    T = horizon if horizon is not None else _resolve_horizon(config)
    out = []
    for level in range(l_max + 1):
        st = LevelStats(level=level, h=config.level_step(level))
        _run_level(config, st, 0, n, T, TAG_DIAGNOSTIC)
        out.append(st)
    return out


def variance_vs_horizon(config: MlmcConfig, level: int,
                        horizons: Sequence[float], n: int) -> List[LevelStats]:
    """Correction statistics at one level across a grid of horizons."""
    horizons = list(horizons)
    if any(t <= 0 for t in horizons) or any(
            b <= a for a, b in zip(horizons, horizons[1:])):
        raise ConfigError("horizons must be positive and increasing")
    if level < 1:
        raise ConfigError("variance growth is a coupled-pair statistic; "
                          "level must be >= 1")
    out = []
    for T in horizons:
        st = LevelStats(level=level, h=config.level_step(level))
        _run_level(config, st, 0, n, T, TAG_DIAGNOSTIC)
        out.append(st)
    return out


def divergence_probability(config: MlmcConfig, level: int, n: int,
                           threshold: Optional[float] = None,
                           horizon: Optional[float] = None) -> float:
    """Fraction of pairs whose terminal separation exceeds the threshold.

    Defaults to the model's divergence threshold. Paths that blow up
    count as divergent rather than aborting: a blow-up is the extreme
    form of the separation this probes.
    """
    if level < 1:
        raise ConfigError("divergence is a coupled-pair statistic; "
                          "level must be >= 1")
    model = config.resolved_model()
    thr = model.divergence_threshold if threshold is None else threshold
    if thr <= 0:
        raise ConfigError("threshold must be positive")
    T = horizon if horizon is not None else _resolve_horizon(config)
    policy = _policy_for(config)
    step = config.level_step(level)
    count = 0
    for start in range(0, n, 4096):
        keys = [StreamKey(config.seed, level, i, TAG_DIAGNOSTIC)
                for i in range(start, min(start + 4096, n))]
        if config.adaptive:
            batch = coupling.simulate_adaptive_coupled_batch(
                model, policy, step, T, keys)
        else:
            batch = coupling.simulate_coupled_batch(
                model, policy, step, T, keys)
        exceeded = (batch.end_divergence > thr) | batch.overflowed
        count += int(np.count_nonzero(exceeded))
    return count / n


@dataclass
class H0SearchResult:
    """Outcome of the base-step search; ``h0`` is None when no candidate
    in range achieved a good coupling."""

    h0: Optional[float]
    horizon: float
    rows: List[dict]


def find_h0(config: MlmcConfig, horizon: float, n: int = 400,
            j_min: int = 0, j_max: int = 16,
            factor: float = 2.0) -> H0SearchResult:
    """Largest dyadic base step ``2^-j`` whose level-0 variance dominates.

    Walks j upward and accepts the first candidate with ``V0 > factor *
    V1``, the condition for level 0 to carry the variance budget.
    Candidates are rejected outright when any sample is non-finite or
    when the mean reweighting factors stray far from one: the weights
    form an exact martingale with unit mean, so a wildly off mean is a
    definitive sign the discretization is outside its stable regime, not
    a statistical accident.
    """
    if horizon <= 0 or n < 4:
        raise ConfigError("need a positive horizon and n >= 4")
    rows = []
    found = None
    for j in range(j_min, j_max + 1):
        step = 2.0 ** -j
        if horizon / (2.0 * step) < 1.0:
            continue  # not even one coarse stride in the horizon
        cfg = replace(config,
                      h0=None if config.adaptive else step,
                      delta0=step if config.adaptive else None,
                      eps=None, horizon=horizon, n_per_level=None,
                      lambda_star=None)
        model = cfg.resolved_model()
        keys0 = [StreamKey(cfg.seed, 100 + j, i, TAG_H0_SEARCH)
                 for i in range(n)]
        keys1 = [StreamKey(cfg.seed, 200 + j, i, TAG_H0_SEARCH)
                 for i in range(n)]
        T = horizon if cfg.adaptive else coupling.round_up_horizon(
            horizon, 2.0 * step)
        with np.errstate(over="ignore", invalid="ignore"):
            if cfg.adaptive:
                phi0, _, over0 = coupling.simulate_adaptive_single_batch(
                    model, step, T, keys0)
                over0 = ~np.isnan(over0)
                batch = coupling.simulate_adaptive_coupled_batch(
                    model, _policy_for(cfg), step / 2.0, T, keys1)
            else:
                phi0, _, over0, _, _ = coupling.simulate_single_batch(
                    model, step, T, keys0)
                over0 = ~np.isnan(over0)
                batch = coupling.simulate_coupled_batch(
                    model, _policy_for(cfg), step / 2.0, T, keys1)
            P = batch.corrections()
            finite = (not over0.any()) and (not batch.overflowed.any()) \
                and bool(np.isfinite(phi0).all() and np.isfinite(P).all())
            if finite:
                v0 = float(np.var(phi0))
                v1 = float(np.var(P))
                wf = float(np.mean(batch.weight_fine))
                wc = float(np.mean(batch.weight_coarse))
                weights_ok = abs(wf - 1.0) < 0.5 and abs(wc - 1.0) < 0.5
            else:
                v0 = v1 = wf = wc = float("nan")
                weights_ok = False
        accepted = finite and weights_ok and v0 > factor * v1
        rows.append({"j": j, "h0": step, "v0": v0, "v1": v1,
                     "mean_weight_fine": wf, "mean_weight_coarse": wc,
                     "finite": finite, "weights_ok": weights_ok,
                     "accepted": accepted})
        if accepted:
            found = step
            break
    return H0SearchResult(h0=found, horizon=horizon, rows=rows)


def fit_lambda_star(config: MlmcConfig, t_max: float, n: int,
                    window: Optional[float] = None,
                    burn_in: Optional[float] = None):
    """Exponential convergence rate of the observable's mean.

    Simulates ``n`` plain paths, records the ensemble mean of the
    observable at every step, brackets it between trailing-window running
    max and min, and fits ``log(max - min)`` against time after burn-in.
    The envelope gap of a signal relaxing like ``c + A exp(-r t)`` decays
    at the same rate ``r``. Returns ``(lambda_star, fit)``.

    Defaults: window ``t_max / 5``, burn-in ``t_max / 4``.
    """
    if config.h0 is None:
        raise ConfigError("the convergence-rate fit runs on uniform steps; "
                          "set h0")
    if t_max <= 0 or n < 2:
        raise ConfigError("need t_max > 0 and n >= 2")
    window = t_max / 5.0 if window is None else window
    burn_in = t_max / 4.0 if burn_in is None else burn_in
    if window <= 0:
        raise ConfigError("window must be positive")
    h = config.h0
    model = config.resolved_model()
    keys = [StreamKey(config.seed, 0, i, TAG_DIAGNOSTIC) for i in range(n)]
    _, _, overflow, t_final, trace = coupling.simulate_single_batch(
        model, h, t_max, keys, record_observable=True)
    if np.isfinite(overflow).any() or not np.isfinite(trace).all():
        raise InvalidDataError("paths blew up during the rate measurement")
    times = h * np.arange(1, trace.size + 1)
    w_steps = max(2, int(round(window / h)))
    if w_steps > trace.size:
        raise ConfigError("window longer than the simulated horizon")
    view = np.lib.stride_tricks.sliding_window_view(trace, w_steps)
    upper = view.max(axis=-1)
    lower = view.min(axis=-1)
    gap = upper - lower
    t_gap = times[w_steps - 1:]
    sel = t_gap >= burn_in
    if sel.sum() < 3:
        raise InvalidDataError("fewer than 3 envelope points after burn-in")
    if (gap[sel] <= 0).any():
        raise InvalidDataError("envelope gap vanished in the fit region; "
                               "the signal is flat at this resolution")
    fit = fit_rate(t_gap[sel], gap[sel], transform="log-y")
    return -fit.slope, fit


def cost_vs_epsilon(config: MlmcConfig, eps_grid: Sequence[float]) -> List[dict]:
    """Total cost of the configured estimator across target accuracies.

    ``eps_grid`` must be decreasing in (0, 1). Failures are recorded per
    entry rather than aborting the sweep.
    """
    eps_grid = list(eps_grid)
    if any(not 0.0 < e < 1.0 for e in eps_grid) or any(
            b >= a for a, b in zip(eps_grid, eps_grid[1:])):
        raise ConfigError("eps grid must be decreasing inside (0, 1)")
    rows = []
    for eps in eps_grid:
        cfg = replace(config, eps=eps, horizon=None, n_per_level=None)
        try:
            report = estimate(cfg)
            rows.append({"eps": eps, "total_cost": report.total_cost,
                         "estimate": report.estimate,
                         "horizon": report.horizon,
                         "max_level": report.max_level,
                         "incomplete": report.incomplete, "error": None})
        except ErgodicMlmcError as exc:
            rows.append({"eps": eps, "total_cost": None, "estimate": None,
                         "horizon": None, "max_level": None,
                         "incomplete": None, "error": str(exc)})
    return rows


def cost_exponent(rows: Sequence[dict]) -> SeriesFit:
    """Empirical exponent: slope of log cost versus log(1/eps)."""
    good = [r for r in rows if r.get("error") is None]
    if len(good) < 3:
        raise InvalidDataError("need at least 3 successful runs for the fit")
    x = np.log([1.0 / r["eps"] for r in good])
    y = np.array([float(r["total_cost"]) for r in good])
    return fit_rate(x, y, transform="log-y")
