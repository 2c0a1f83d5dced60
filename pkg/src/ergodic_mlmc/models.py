"""Model registry: drifts, observables, structural metadata and step rules.

Every model is an SDE ``dX = f(X) dt + dW`` with identity diffusion. A
:class:`ModelSpec` bundles the drift ``f``, the observable whose
stationary expectation is the estimation target, and the structural
constants (one-sided Lipschitz, dissipativity, Lipschitz) used by
validation and diagnostics. Drifts and observables are vectorized: they
accept arrays of shape ``(m,)`` or ``(n, m)`` and broadcast over the
leading axis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Callable, Optional, Tuple

import numpy as np

from .errors import ConfigError

__all__ = [
    "ModelSpec",
    "SpringPolicy",
    "eval_drift",
    "eval_observable",
    "adaptive_timestep",
    "spring_coefficient",
    "saturate",
    "get_model",
    "register_model",
    "available_models",
    "with_observable",
    "validate_spring_policy",
]


@dataclass(frozen=True)
class ModelSpec:
    """Immutable description of one test problem.

    ``one_sided_lipschitz``, ``dissipativity`` and ``lipschitz`` are
    metadata for validation and warnings only; the integrators never read
    them. ``None`` means the constant is not known for this drift.
    """

    name: str
    dim: int
    drift: Callable[[np.ndarray], np.ndarray]
    observable: Callable[[np.ndarray], np.ndarray]
    x0: np.ndarray
    one_sided_lipschitz: Optional[float] = None
    dissipativity: Optional[Tuple[float, float]] = None
    lipschitz: Optional[float] = None
    adaptive_rule: Optional[Callable[[np.ndarray, float], np.ndarray]] = None
    spring_rule: Optional[Callable[[np.ndarray], np.ndarray]] = None
    divergence_threshold: float = 1.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"model dimension must be >= 1, got {self.dim}")
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=float))
        if x0.shape != (self.dim,):
            raise ValueError(
                f"x0 has shape {x0.shape}, expected ({self.dim},)")
        object.__setattr__(self, "x0", x0)


@dataclass(frozen=True)
class SpringPolicy:
    """How strongly the coupled fine/coarse pair is pulled together.

    ``kind`` is one of ``"none"``, ``"constant"`` or ``"adaptive"``. A
    constant policy carries a nonnegative coefficient; ``"none"`` behaves
    exactly like ``constant(0)``. An adaptive policy evaluates a
    state-dependent rule at the midpoint of the two paths, so the same
    coefficient multiplies both spring terms symmetrically.
    """

    kind: str = "none"
    coefficient: float = 0.0
    rule: Optional[Callable[[np.ndarray], np.ndarray]] = None

    def __post_init__(self):
        if self.kind not in ("none", "constant", "adaptive"):
            raise ValueError(f"unknown spring policy kind {self.kind!r}")
        if self.kind == "constant" and self.coefficient < 0:
            raise ValueError("spring coefficient must be nonnegative")
        if self.kind == "adaptive" and self.rule is None:
            raise ValueError("adaptive spring policy needs a rule")

    @staticmethod
    def none() -> "SpringPolicy":
        return SpringPolicy(kind="none")

    @staticmethod
    def constant(coefficient: float) -> "SpringPolicy":
        return SpringPolicy(kind="constant", coefficient=float(coefficient))

    @staticmethod
    def adaptive(rule: Callable[[np.ndarray], np.ndarray]) -> "SpringPolicy":
        return SpringPolicy(kind="adaptive", rule=rule)


def _check_state(model: ModelSpec, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (model.dim,):
        raise ValueError(
            f"state has trailing dimension {x.shape[-1:]}, "
            f"expected ({model.dim},) for model {model.name!r}")
    return x


def eval_drift(model: ModelSpec, x) -> np.ndarray:
    """Evaluate the drift at ``x`` (shape ``(m,)`` or ``(n, m)``)."""
    return model.drift(_check_state(model, np.atleast_1d(x)))


def eval_observable(model: ModelSpec, x) -> np.ndarray:
    """Evaluate the observable at ``x``; scalar for a single state."""
    return model.observable(_check_state(model, np.atleast_1d(x)))


def adaptive_timestep(model: ModelSpec, x, delta: float):
    """Evaluate the model's adaptive step rule, ``h = rule(x, delta)``.

    Raises ``ConfigError`` when the model has no rule and ``ValueError``
    for a nonpositive ``delta``.
    """
    if model.adaptive_rule is None:
        raise ConfigError(f"model {model.name!r} has no adaptive timestep rule")
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    return model.adaptive_rule(_check_state(model, np.atleast_1d(x)), delta)


def spring_coefficient(policy: SpringPolicy, yf, yc):
    """Spring coefficient for a fine/coarse state pair.

    Adaptive policies are evaluated at the midpoint ``(yf + yc) / 2`` so
    the coefficient is symmetric in the two paths.
    """
    if policy.kind == "none":
        return 0.0
    if policy.kind == "constant":
        return policy.coefficient
    yf = np.asarray(yf, dtype=float)
    yc = np.asarray(yc, dtype=float)
    if yf.shape != yc.shape:
        raise ValueError("fine and coarse states must have equal shapes")
    return policy.rule(0.5 * (yf + yc))


def validate_spring_policy(policy: SpringPolicy, model: ModelSpec) -> bool:
    """Check the contraction condition ``S > lambda / 2`` where possible.

    Returns True when the condition is verified. Emits a warning (and
    returns False) when it is violated or cannot be checked because the
    model's one-sided Lipschitz constant is unknown or the policy is
    state dependent. Violations are not fatal: sub-critical springs can
    still couple well in practice, they just lose the uniform-in-time
    guarantee.
    """
    if policy.kind == "none":
        return True
    lam = model.one_sided_lipschitz
    if lam is None:
        warnings.warn(
            f"one-sided Lipschitz constant unknown for model {model.name!r}; "
            "cannot verify the spring condition S > lambda/2", stacklevel=2)
        return False
    if policy.kind == "adaptive":
        warnings.warn(
            "state-dependent spring: the condition S > lambda/2 is not "
            "checked pointwise", stacklevel=2)
        return False
    if policy.coefficient <= lam / 2.0:
        warnings.warn(
            f"spring coefficient {policy.coefficient} does not exceed "
            f"lambda/2 = {lam / 2.0} for model {model.name!r}; the coupled "
            "pair is not guaranteed to contract", stacklevel=2)
        return False
    return True


# ---------------------------------------------------------------------------
# built-in drifts


def saturate(x, cap: float = 65.0):
    """Soft clamp ``cap * x / max(cap, |x|)``, componentwise.

    Identity for ``|x| <= cap``, saturating at ``+-cap`` beyond. Applied
    to individual coordinates of the truncated Lorenz drift to make it
    globally Lipschitz while leaving the chaotic region untouched.
    """
    x = np.asarray(x, dtype=float)
    return cap * x / np.maximum(cap, np.abs(x))


def _ou_drift(x):
    return -x


def _abs_observable(x):
    return np.abs(x[..., 0])


def _double_well_drift(x):
    return 2.0 * x - 0.5 * x ** 3


def _double_well_rule(x, delta):
    a = np.abs(x[..., 0])
    f = np.abs(2.0 * x[..., 0] - 0.5 * x[..., 0] ** 3)
    return np.maximum(1.0, a) / (8.0 * np.maximum(1.0, f)) * delta


def _double_well_spring(x):
    # max(0, f'(x)): spring only where the drift locally expands
    return np.maximum(0.0, 2.0 - 1.5 * x[..., 0] ** 2)


def _truncated_lorenz_drift(x):
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    b1 = saturate(x1)
    b2 = saturate(x2)
    return np.stack(
        [10.0 * (b2 - x1), (28.0 - x3) * b1 - x2, b1 * x2 - (8.0 / 3.0) * x3],
        axis=-1)


def _lorenz_drift(x):
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    return np.stack(
        [10.0 * (x2 - x1), x1 * (28.0 - x3) - x2, x1 * x2 - (8.0 / 3.0) * x3],
        axis=-1)


def _lorenz_rule(x, delta):
    n2 = np.sum(x * x, axis=-1)
    f = _lorenz_drift(x)
    f2 = np.sum(f * f, axis=-1)
    return np.maximum(100.0, n2) / (2.0 ** 11 * np.maximum(100.0, f2)) * delta


def _norm_observable(x):
    return np.sqrt(np.sum(x * x, axis=-1))


_REGISTRY = {}


def register_model(model: ModelSpec, overwrite: bool = False) -> ModelSpec:
    """Add a model to the registry so it can be selected by name."""
    if model.name in _REGISTRY and not overwrite:
        raise ConfigError(f"model {model.name!r} is already registered")
    _REGISTRY[model.name] = model
    return model


def get_model(name: str) -> ModelSpec:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ConfigError(
            f"unknown model {name!r}; available: {sorted(_REGISTRY)}") from None


def available_models():
    return sorted(_REGISTRY)


def with_observable(model: ModelSpec, observable) -> ModelSpec:
    """Copy of ``model`` with a different observable (models are frozen)."""
    return replace(model, observable=observable)


register_model(ModelSpec(
    name="ou",
    dim=1,
    drift=_ou_drift,
    observable=_abs_observable,
    x0=np.array([1.0]),
    one_sided_lipschitz=0.0,
    dissipativity=(1.0, 0.0),
    lipschitz=1.0,
    divergence_threshold=1.0,
))

register_model(ModelSpec(
    name="double_well",
    dim=1,
    drift=_double_well_drift,
    observable=_abs_observable,
    x0=np.array([0.0]),
    one_sided_lipschitz=2.0,
    dissipativity=(1.0, 4.5),
    lipschitz=None,
    adaptive_rule=_double_well_rule,
    spring_rule=_double_well_spring,
    divergence_threshold=1.0,
))

register_model(ModelSpec(
    name="truncated_lorenz",
    dim=3,
    drift=_truncated_lorenz_drift,
    observable=_norm_observable,
    x0=np.array([0.0, 0.0, 0.0]),
    one_sided_lipschitz=None,
    dissipativity=None,
    lipschitz=280.0,  # calibrated bound over the operating box [-200, 200]^3
    divergence_threshold=10.0,
))

register_model(ModelSpec(
    name="lorenz",
    dim=3,
    drift=_lorenz_drift,
    observable=_norm_observable,
    x0=np.array([0.0, 0.0, 0.0]),
    one_sided_lipschitz=None,
    dissipativity=None,
    lipschitz=None,
    adaptive_rule=_lorenz_rule,
    divergence_threshold=10.0,
))
