"""Path simulation: Euler-Maruyama, spring-coupled pairs, exact reweighting.

The multilevel correction at one level is built from a fine path (step
``h``) and a coarse path (step ``2h``) driven by the same Brownian
increments. For drifts that expand nearby trajectories the plain shared
noise coupling lets the pair separate exponentially, so both paths get an
extra spring drift ``+-S (partner - self)`` pulling them together. The
simulation then no longer follows the original SDE; each path therefore
accumulates the exact likelihood ratio of the unmodified scheme with
respect to the simulated one. For one Euler step with spring vector
``s`` and increment ``dw`` this ratio is the quotient of two Gaussian
densities evaluated at the realized point, which collapses to

    exp(-<dw, s> - |s|^2 h / 2),

and the whole-path weight is the product over steps. Weights are
accumulated in log space: over long horizons the product has too many
factors to stay comfortably inside floating-point range.

The pair advances in strides of ``2h``. Within a stride the coarse path
freezes its drift and spring at the stride's entry state and applies
them over both halves, consuming the two fine increments; its weight
picks up a single factor with step ``2h`` and the summed increment. The
fine path refreshes drift and spring every ``h``, its spring seeing the
coarse path's intermediate position, and picks up one weight factor per
fine step. With the spring off (``S = 0``) all weights are exactly one
and the scheme reduces to the plain shared-noise coupling.

All state arrays broadcast over a leading batch axis; the batch engines
below run many paths in lockstep, each owning its keyed noise stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import AdaptivityFailureError, NumericOverflowError
from .models import ModelSpec, SpringPolicy, spring_coefficient
from .sampling import IncrementStream, StreamKey, make_stream

__all__ = [
    "CoupledPathState",
    "PathResult",
    "BatchPaths",
    "em_step",
    "step_log_weight",
    "coupled_pair_step",
    "initial_state",
    "round_up_horizon",
    "simulate_single_path",
    "simulate_coupled_path",
    "simulate_standard_coupled_path",
    "simulate_adaptive_coupled_path",
    "simulate_single_adaptive_path",
    "simulate_single_batch",
    "simulate_coupled_batch",
    "simulate_adaptive_single_batch",
    "simulate_adaptive_coupled_batch",
]

# Steps of per-path normals drawn per buffer refill in the batch engines.
# Any value gives identical results (streams are read sequentially); this
# only balances generator call overhead against buffer memory.
_CHUNK_STEPS = 2048

_KeyLike = Union[StreamKey, IncrementStream]


def _as_stream(key: _KeyLike) -> IncrementStream:
    if isinstance(key, StreamKey):
        return make_stream(key)
    return key  # duck-typed: anything with .standard_normals(*shape)


@dataclass
class CoupledPathState:
    """State of one fine/coarse pair at an even grid time.

    ``yc_anchor`` is the coarse state at the last stride entry; the
    coarse drift and spring stay frozen there across the stride's two
    half-updates. ``log_wf``/``log_wc`` are the accumulated log weights.
    Arrays may carry a leading batch axis.
    """

    t: float
    yf: np.ndarray
    yc: np.ndarray
    log_wf: np.ndarray
    log_wc: np.ndarray
    yc_anchor: np.ndarray
    cost: int


@dataclass
class PathResult:
    """Terminal summary of one coupled pair."""

    phi_fine: float
    phi_coarse: float
    weight_fine: float
    weight_coarse: float
    max_divergence: float
    end_divergence: float
    cost: int
    t_final: float

    @property
    def correction(self) -> float:
        """The level sample: phi_f * w_f - phi_c * w_c."""
        return self.phi_fine * self.weight_fine - self.phi_coarse * self.weight_coarse


@dataclass
class BatchPaths:
    """Struct-of-arrays result for a batch of coupled pairs."""

    phi_fine: np.ndarray
    phi_coarse: np.ndarray
    weight_fine: np.ndarray
    weight_coarse: np.ndarray
    max_divergence: np.ndarray
    end_divergence: np.ndarray
    cost: np.ndarray
    overflowed: np.ndarray       # bool per path
    overflow_time: np.ndarray    # first non-finite time, nan if none
    t_final: float

    def corrections(self) -> np.ndarray:
        return self.phi_fine * self.weight_fine - self.phi_coarse * self.weight_coarse


def em_step(x, h: float, dw, model: ModelSpec):
    """One Euler-Maruyama step ``x + f(x) h + dw``."""
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    x = np.asarray(x, dtype=float)
    out = x + model.drift(x) * h + dw
    if out.ndim == 1 and not np.isfinite(out).all():
        raise NumericOverflowError(
            f"state became non-finite in an Euler step of model {model.name!r}")
    return out


def step_log_weight(dw, spring_term, h: float):
    """Log of the one-step reweighting factor.

    ``spring_term`` is the full spring vector (coefficient times state
    difference) that shifted the step's drift; ``dw`` the Brownian
    increment actually used. Equals the log-ratio of the two Gaussian
    transition densities (unshifted over shifted) at the realized point.
    """
    dw = np.asarray(dw, dtype=float)
    s = np.asarray(spring_term, dtype=float)
    return -np.sum(dw * s, axis=-1) - np.sum(s * s, axis=-1) * (h / 2.0)


def initial_state(model: ModelSpec, batch: Optional[int] = None) -> CoupledPathState:
    """Pair state at time zero: both paths at ``x0``, weights one."""
    if batch is None:
        yf = model.x0.copy()
        zeros = 0.0
    else:
        yf = np.tile(model.x0, (batch, 1))
        zeros = np.zeros(batch)
    return CoupledPathState(
        t=0.0, yf=yf, yc=yf.copy(), log_wf=zeros + 0.0, log_wc=zeros + 0.0,
        yc_anchor=yf.copy(), cost=0)


def coupled_pair_step(state: CoupledPathState, h: float, dw_even, dw_odd,
                      model: ModelSpec, policy: SpringPolicy) -> CoupledPathState:
    """Advance a pair by one stride ``2h`` (two fine steps, one coarse).

    ``dw_even``/``dw_odd`` are the two fine Brownian increments; the
    coarse path consumes their sum. Returns a new state; the input is not
    modified. Broadcasts over a leading batch axis.
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    yf, yc = state.yf, state.yc
    dw_even = np.asarray(dw_even, dtype=float)
    dw_odd = np.asarray(dw_odd, dtype=float)

    s0 = spring_coefficient(policy, yf, yc)
    s0 = np.asarray(s0)[..., None] if np.ndim(s0) else s0
    spring_f0 = s0 * (yc - yf)
    spring_c = -spring_f0                      # frozen for the whole stride
    drift_c = model.drift(yc)                  # frozen likewise
    yf1 = yf + spring_f0 * h + model.drift(yf) * h + dw_even
    yc1 = yc + spring_c * h + drift_c * h + dw_even
    log_wf = state.log_wf + step_log_weight(dw_even, spring_f0, h)

    s1 = spring_coefficient(policy, yf1, yc1)
    s1 = np.asarray(s1)[..., None] if np.ndim(s1) else s1
    spring_f1 = s1 * (yc1 - yf1)               # sees the intermediate coarse state
    yf2 = yf1 + spring_f1 * h + model.drift(yf1) * h + dw_odd
    yc2 = yc1 + spring_c * h + drift_c * h + dw_odd
    log_wf = log_wf + step_log_weight(dw_odd, spring_f1, h)
    log_wc = state.log_wc + step_log_weight(dw_even + dw_odd, spring_c, 2.0 * h)

    new = CoupledPathState(
        t=state.t + 2.0 * h, yf=yf2, yc=yc2, log_wf=log_wf, log_wc=log_wc,
        yc_anchor=yc2.copy(), cost=state.cost + 3)
    if new.yf.ndim == 1 and not (
            np.isfinite(new.yf).all() and np.isfinite(new.yc).all()):
        raise NumericOverflowError(
            f"coupled pair became non-finite at t = {new.t}", time=new.t)
    return new


def round_up_horizon(T: float, stride: float) -> float:
    """Smallest multiple of ``stride`` that is >= T (with fp slack)."""
    if T <= 0 or stride <= 0:
        raise ValueError("horizon and stride must be positive")
    n = max(1, math.ceil(T / stride - 1e-9))
    return n * stride


# ---------------------------------------------------------------------------
# uniform-step batch engines


class _NormalBuffers:
    """Per-path chunked reads from per-path streams.

    Chunking is transparent: each path consumes its own stream strictly
    in step order, so the draw sequence is independent of chunk size and
    of which other paths are in the batch.
    """

    def __init__(self, streams: Sequence[IncrementStream], dim: int,
                 total_steps: Optional[int] = None):
        self.streams = streams
        self.dim = dim
        self.remaining = total_steps
        self.buf = None
        self.pos = 0

    def next_step(self) -> np.ndarray:
        """Standard normals of shape (batch, dim) for one step, lockstep."""
        if self.buf is None or self.pos >= self.buf.shape[1]:
            take = _CHUNK_STEPS if self.remaining is None else min(
                _CHUNK_STEPS, self.remaining)
            self.buf = np.empty((len(self.streams), take, self.dim))
            for i, s in enumerate(self.streams):
                self.buf[i] = s.standard_normals(take, self.dim)
            if self.remaining is not None:
                self.remaining -= take
            self.pos = 0
        out = self.buf[:, self.pos]
        self.pos += 1
        return out


def _streams(keys: Sequence[_KeyLike]) -> List[IncrementStream]:
    return [_as_stream(k) for k in keys]


def simulate_coupled_batch(model: ModelSpec, policy: SpringPolicy, h: float,
                           T: float, keys: Sequence[_KeyLike]) -> BatchPaths:
    """Run a batch of spring-coupled pairs on the uniform grid.

    ``T`` is rounded up to a whole number of strides ``2h``; the realized
    horizon is reported in the result. Non-finite paths are flagged, not
    raised, so the caller decides whether a blow-up is an error or a
    statistic.
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    t_final = round_up_horizon(T, 2.0 * h)
    n_strides = int(round(t_final / (2.0 * h)))
    n = len(keys)
    bufs = _NormalBuffers(_streams(keys), model.dim, total_steps=2 * n_strides)
    state = initial_state(model, batch=n)
    sqrt_h = math.sqrt(h)
    max_div = np.zeros(n)
    overflow_time = np.full(n, np.nan)
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for k in range(n_strides):
            dw_even = sqrt_h * bufs.next_step()
            dw_odd = sqrt_h * bufs.next_step()
            state = coupled_pair_step(state, h, dw_even, dw_odd, model, policy)
            bad = ~(np.isfinite(state.yf).all(axis=1)
                    & np.isfinite(state.yc).all(axis=1))
            if bad.any():
                overflow_time[bad & np.isnan(overflow_time)] = state.t
            d = np.sqrt(np.sum((state.yf - state.yc) ** 2, axis=1))
            np.maximum(max_div, d, out=max_div)
        end_div = np.sqrt(np.sum((state.yf - state.yc) ** 2, axis=1))
        phi_f = np.asarray(model.observable(state.yf), dtype=float)
        phi_c = np.asarray(model.observable(state.yc), dtype=float)
        w_f = np.exp(state.log_wf)
        w_c = np.exp(state.log_wc)
    cost = np.full(n, 3 * n_strides, dtype=np.int64)
    return BatchPaths(
        phi_fine=phi_f, phi_coarse=phi_c, weight_fine=w_f, weight_coarse=w_c,
        max_divergence=max_div, end_divergence=end_div, cost=cost,
        overflowed=~np.isnan(overflow_time), overflow_time=overflow_time,
        t_final=t_final)


def simulate_single_batch(model: ModelSpec, h: float, T: float,
                          keys: Sequence[_KeyLike],
                          record_observable: bool = False):
    """Plain Euler-Maruyama batch to horizon ``T`` (rounded up to ``h``).

    Returns ``(phi, cost, overflow_time, t_final, trace)`` where ``trace``
    is the per-step batch mean of the observable when requested (used by
    the convergence-rate diagnostic), else None.
    """
    if h <= 0:
        raise ValueError(f"step size must be positive, got {h}")
    t_final = round_up_horizon(T, h)
    n_steps = int(round(t_final / h))
    n = len(keys)
    bufs = _NormalBuffers(_streams(keys), model.dim, total_steps=n_steps)
    x = np.tile(model.x0, (n, 1))
    sqrt_h = math.sqrt(h)
    overflow_time = np.full(n, np.nan)
    trace = np.empty(n_steps) if record_observable else None
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        for k in range(n_steps):
            x = x + model.drift(x) * h + sqrt_h * bufs.next_step()
            bad = ~np.isfinite(x).all(axis=1)
            if bad.any():
                overflow_time[bad & np.isnan(overflow_time)] = (k + 1) * h
            if record_observable:
                trace[k] = np.mean(model.observable(x))
        phi = np.asarray(model.observable(x), dtype=float)
    cost = np.full(n, n_steps, dtype=np.int64)
    return phi, cost, overflow_time, t_final, trace


# ---------------------------------------------------------------------------
# adaptive-step batch engines

# The fine path steps at h = rule(x, delta), the coarse at rule(x, 2 delta);
# both advance on the union of their step times. One Brownian increment is
# generated per union sub-interval and shared, so the coarse path again
# consumes exactly the fine path's noise. Drift and spring freeze at each
# path's own step entry (the spring seeing the partner's current, possibly
# mid-step, position) and each path collects one weight factor per own step
# with its actual step length. Under a constant rule this reduces to the
# uniform scheme above.


def _spring_vectors(policy: SpringPolicy, y_self, y_other):
    s = spring_coefficient(policy, y_self, y_other)
    s = np.asarray(s)[..., None] if np.ndim(s) else s
    return s * (y_other - y_self)


def simulate_adaptive_coupled_batch(model: ModelSpec, policy: SpringPolicy,
                                    delta: float, T: float,
                                    keys: Sequence[_KeyLike]) -> BatchPaths:
    """Spring-coupled pairs with per-state adaptive steps."""
    if model.adaptive_rule is None:
        raise AdaptivityFailureError(
            f"model {model.name!r} has no adaptive timestep rule")
    if delta <= 0 or T <= 0:
        raise ValueError("delta and T must be positive")
    rule = model.adaptive_rule
    n = len(keys)
    m = model.dim
    streams = _streams(keys)
    eps_t = 1e-12 * max(1.0, T)

    yf = np.tile(model.x0, (n, 1))
    yc = yf.copy()
    log_wf = np.zeros(n)
    log_wc = np.zeros(n)
    max_div = np.zeros(n)
    cost = np.zeros(n, dtype=np.int64)
    t = np.zeros(n)
    done = np.zeros(n, dtype=bool)
    overflow_time = np.full(n, np.nan)

    def freeze(y_self, y_other, dlt, mask=None):
        drift = model.drift(y_self)
        spring = _spring_vectors(policy, y_self, y_other)
        h = rule(y_self, dlt)
        return drift, spring, np.asarray(h, dtype=float)

    drift_f, spring_f, hf = freeze(yf, yc, delta)
    drift_c, spring_c, hc = freeze(yc, yf, 2.0 * delta)
    hf = np.minimum(hf, T)
    hc = np.minimum(hc, T)
    if np.any(hf < 1e-12 * delta) or np.any(hc < 1e-12 * delta):
        raise AdaptivityFailureError("adaptive step underflow at the start")
    t_next_f = hf.copy()
    t_next_c = hc.copy()
    pend_f = np.zeros((n, m))
    pend_c = np.zeros((n, m))
    cost += 2

    buf = np.empty((n, _CHUNK_STEPS, m))
    pos = np.full(n, _CHUNK_STEPS, dtype=np.int64)
    rows = np.arange(n)
    max_iter = 50_000_000 // max(1, n)
    it = 0
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        while not done.all():
            it += 1
            if it > max_iter:
                raise AdaptivityFailureError(
                    f"adaptive coupling did not reach T={T} within "
                    f"{max_iter} events per path")
            refill = (~done) & (pos >= _CHUNK_STEPS)
            if refill.any():
                for i in np.nonzero(refill)[0]:
                    buf[i] = streams[i].standard_normals(_CHUNK_STEPS, m)
                pos[refill] = 0
            t_next = np.minimum(t_next_f, t_next_c)
            dt = np.where(done, 0.0, np.maximum(t_next - t, 0.0))
            xi = buf[rows, np.minimum(pos, _CHUNK_STEPS - 1)]
            pos[~done] += 1
            dw = np.sqrt(dt)[:, None] * xi
            live = (~done)[:, None]
            yf = np.where(live, yf + (drift_f + spring_f) * dt[:, None] + dw, yf)
            yc = np.where(live, yc + (drift_c + spring_c) * dt[:, None] + dw, yc)
            pend_f = np.where(live, pend_f + dw, pend_f)
            pend_c = np.where(live, pend_c + dw, pend_c)
            t = np.where(done, t, t_next)

            bad = (~done) & ~(np.isfinite(yf).all(axis=1)
                              & np.isfinite(yc).all(axis=1))
            if bad.any():
                overflow_time[bad] = t[bad]
                done |= bad

            fin_f = (~done) & (t_next_f <= t_next)
            fin_c = (~done) & (t_next_c <= t_next)
            if fin_f.any():
                lw = log_wf - np.sum(pend_f * spring_f, axis=1) \
                    - np.sum(spring_f * spring_f, axis=1) * hf / 2.0
                log_wf = np.where(fin_f, lw, log_wf)
            if fin_c.any():
                lw = log_wc - np.sum(pend_c * spring_c, axis=1) \
                    - np.sum(spring_c * spring_c, axis=1) * hc / 2.0
                log_wc = np.where(fin_c, lw, log_wc)
                d = np.sqrt(np.sum((yf - yc) ** 2, axis=1))
                max_div = np.where(fin_c, np.maximum(max_div, d), max_div)

            reached = (~done) & (t >= T - eps_t)
            done |= reached

            # refreeze after both finalizations so each side sees the
            # partner's updated position
            for fin, which in ((fin_f, "f"), (fin_c, "c")):
                mask = fin & ~done
                if not mask.any():
                    continue
                if which == "f":
                    drift_new = model.drift(yf)
                    spring_new = _spring_vectors(policy, yf, yc)
                    h_new = np.minimum(np.asarray(rule(yf, delta), dtype=float),
                                       T - t)
                else:
                    drift_new = model.drift(yc)
                    spring_new = _spring_vectors(policy, yc, yf)
                    h_new = np.minimum(np.asarray(rule(yc, 2.0 * delta),
                                                  dtype=float), T - t)
                if np.any(mask & ~(h_new > 1e-12 * delta)):
                    raise AdaptivityFailureError(
                        f"adaptive step underflow at t ~ {float(np.min(t[mask]))}")
                m2 = mask[:, None]
                if which == "f":
                    drift_f = np.where(m2, drift_new, drift_f)
                    spring_f = np.where(m2, spring_new, spring_f)
                    hf = np.where(mask, h_new, hf)
                    t_next_f = np.where(mask, t + h_new, t_next_f)
                    pend_f = np.where(m2, 0.0, pend_f)
                else:
                    drift_c = np.where(m2, drift_new, drift_c)
                    spring_c = np.where(m2, spring_new, spring_c)
                    hc = np.where(mask, h_new, hc)
                    t_next_c = np.where(mask, t + h_new, t_next_c)
                    pend_c = np.where(m2, 0.0, pend_c)
                cost += mask.astype(np.int64)

        end_div = np.sqrt(np.sum((yf - yc) ** 2, axis=1))
        max_div = np.maximum(max_div, np.where(np.isfinite(end_div), end_div, 0.0))
        phi_f = np.asarray(model.observable(yf), dtype=float)
        phi_c = np.asarray(model.observable(yc), dtype=float)
        w_f = np.exp(log_wf)
        w_c = np.exp(log_wc)
    return BatchPaths(
        phi_fine=phi_f, phi_coarse=phi_c, weight_fine=w_f, weight_coarse=w_c,
        max_divergence=max_div, end_divergence=end_div, cost=cost,
        overflowed=~np.isnan(overflow_time), overflow_time=overflow_time,
        t_final=T)


def simulate_adaptive_single_batch(model: ModelSpec, delta: float, T: float,
                                   keys: Sequence[_KeyLike]):
    """Plain Euler-Maruyama with adaptive steps; returns (phi, cost, overflow)."""
    if model.adaptive_rule is None:
        raise AdaptivityFailureError(
            f"model {model.name!r} has no adaptive timestep rule")
    if delta <= 0 or T <= 0:
        raise ValueError("delta and T must be positive")
    rule = model.adaptive_rule
    n = len(keys)
    m = model.dim
    streams = _streams(keys)
    eps_t = 1e-12 * max(1.0, T)
    x = np.tile(model.x0, (n, 1))
    t = np.zeros(n)
    cost = np.zeros(n, dtype=np.int64)
    done = np.zeros(n, dtype=bool)
    overflow_time = np.full(n, np.nan)
    buf = np.empty((n, _CHUNK_STEPS, m))
    pos = np.full(n, _CHUNK_STEPS, dtype=np.int64)
    rows = np.arange(n)
    max_iter = 50_000_000 // max(1, n)
    it = 0
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        while not done.all():
            it += 1
            if it > max_iter:
                raise AdaptivityFailureError(
                    f"adaptive path did not reach T={T} within {max_iter} steps")
            refill = (~done) & (pos >= _CHUNK_STEPS)
            if refill.any():
                for i in np.nonzero(refill)[0]:
                    buf[i] = streams[i].standard_normals(_CHUNK_STEPS, m)
                pos[refill] = 0
            h = np.minimum(np.asarray(rule(x, delta), dtype=float), T - t)
            h = np.where(done, 0.0, h)
            live = ~done
            if np.any(live & ~(h > 1e-12 * delta)):
                raise AdaptivityFailureError("adaptive step underflow")
            xi = buf[rows, np.minimum(pos, _CHUNK_STEPS - 1)]
            pos[live] += 1
            dw = np.sqrt(h)[:, None] * xi
            x = np.where(live[:, None], x + model.drift(x) * h[:, None] + dw, x)
            t = np.where(live, t + h, t)
            cost += live.astype(np.int64)
            bad = live & ~np.isfinite(x).all(axis=1)
            if bad.any():
                overflow_time[bad] = t[bad]
                done |= bad
            done |= t >= T - eps_t
        phi = np.asarray(model.observable(x), dtype=float)
    return phi, cost, overflow_time


# ---------------------------------------------------------------------------
# single-path wrappers


def _single_result(batch: BatchPaths) -> PathResult:
    if batch.overflowed[0]:
        raise NumericOverflowError(
            f"path became non-finite at t = {batch.overflow_time[0]}",
            time=float(batch.overflow_time[0]))
    return PathResult(
        phi_fine=float(batch.phi_fine[0]),
        phi_coarse=float(batch.phi_coarse[0]),
        weight_fine=float(batch.weight_fine[0]),
        weight_coarse=float(batch.weight_coarse[0]),
        max_divergence=float(batch.max_divergence[0]),
        end_divergence=float(batch.end_divergence[0]),
        cost=int(batch.cost[0]),
        t_final=batch.t_final)


def simulate_coupled_path(model: ModelSpec, policy: SpringPolicy, h: float,
                          T: float, key: _KeyLike) -> PathResult:
    """One spring-coupled pair with uniform steps and exact reweighting."""
    return _single_result(simulate_coupled_batch(model, policy, h, T, [key]))


def simulate_standard_coupled_path(model: ModelSpec, h: float, T: float,
                                   key: _KeyLike) -> PathResult:
    """Shared-noise pair without spring or reweighting (weights are one)."""
    return _single_result(
        simulate_coupled_batch(model, SpringPolicy.none(), h, T, [key]))


def simulate_adaptive_coupled_path(model: ModelSpec, policy: SpringPolicy,
                                   delta: float, T: float,
                                   key: _KeyLike) -> PathResult:
    """One coupled pair with adaptive steps (fine delta, coarse 2 delta)."""
    return _single_result(
        simulate_adaptive_coupled_batch(model, policy, delta, T, [key]))


def simulate_single_path(model: ModelSpec, h: float, T: float,
                         key: _KeyLike) -> Tuple[float, int]:
    """Plain Euler-Maruyama path; returns (observable at T, cost)."""
    phi, cost, overflow_time, _, _ = simulate_single_batch(model, h, T, [key])
    if not np.isnan(overflow_time[0]):
        raise NumericOverflowError(
            f"path became non-finite at t = {overflow_time[0]}",
            time=float(overflow_time[0]))
    return float(phi[0]), int(cost[0])


def simulate_single_adaptive_path(model: ModelSpec, delta: float, T: float,
                                  key: _KeyLike) -> Tuple[float, int]:
    """Adaptive-step Euler-Maruyama path; returns (observable at T, cost)."""
    phi, cost, overflow_time = simulate_adaptive_single_batch(
        model, delta, T, [key])
    if not np.isnan(overflow_time[0]):
        raise NumericOverflowError(
            f"path became non-finite at t = {overflow_time[0]}",
            time=float(overflow_time[0]))
    return float(phi[0]), int(cost[0])
