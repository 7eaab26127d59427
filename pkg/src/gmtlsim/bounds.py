"""Executable learning-rate condition and convergence bound for periodic
neighbor averaging, plus heuristics for the constants they need.

The feasibility condition on the learning rate is

    eta L + (eta^2 L^2 tau^2 / (1 - zeta))
            * (2 zeta^2 / (1 + zeta) + 2 zeta / (1 - zeta) + (tau - 1) / tau)
    <= 1,

and the averaged-model squared-gradient-norm bound is

    2 (F_init - F_inf) / (eta T) + eta L sigma^2 / K
    + eta^2 L^2 sigma^2 ((1 + zeta^2) / (1 - zeta^2) * tau - 1).

Both blow up as zeta -> 1 (no information spread); zeta == 1 is reported as
infeasible / unbounded instead of raising.  L and sigma^2 are not exactly
computable for neural objectives, so the estimators here are labeled
heuristics: L from observed gradient-difference ratios, sigma^2 from the
per-sample gradient variance at initialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class BoundInputs:
    eta: float
    L: float
    tau: int
    zeta: float
    sigma_sq: float
    K: int
    T: int
    f_init: float = 1.0
    f_inf: float = 0.0
    beta: float = 0.0  # carried from the variance assumption; unused below

    def validate(self) -> None:
        if self.eta < 0 or not math.isfinite(self.eta):
            raise ValidationError("eta must be finite and non-negative")
        if self.L <= 0 or self.sigma_sq < 0:
            raise ValidationError("L must be positive and sigma_sq non-negative")
        if not 0.0 <= self.zeta <= 1.0:
            raise ValidationError("zeta must lie in [0, 1]")
        if self.tau < 1 or self.K < 1 or self.T < 1:
            raise ValidationError("tau, K, T must be at least 1")
        if self.f_init < self.f_inf:
            raise ValidationError("f_init must not be below f_inf")


@dataclass(frozen=True)
class LrConditionResult:
    feasible: bool
    lhs: float | None
    reason: str | None = None


def lr_condition(inputs: BoundInputs) -> LrConditionResult:
    inputs.validate()
    if inputs.zeta >= 1.0:
        return LrConditionResult(
            feasible=False, lhs=None, reason="zeta == 1: condition undefined (no mixing)"
        )
    eta, L, tau, zeta = inputs.eta, inputs.L, float(inputs.tau), inputs.zeta
    bracket = 2.0 * zeta**2 / (1.0 + zeta) + 2.0 * zeta / (1.0 - zeta) + (tau - 1.0) / tau
    lhs = eta * L + (eta**2 * L**2 * tau**2 / (1.0 - zeta)) * bracket
    return LrConditionResult(feasible=lhs <= 1.0, lhs=lhs)


def convergence_bound(inputs: BoundInputs) -> float:
    """Bound on the mean squared gradient norm of the averaged model.

    Returns inf when zeta == 1 (the bound's mixing term diverges) or when
    eta == 0 (the optimization term diverges).
    """
    inputs.validate()
    if inputs.zeta >= 1.0 or inputs.eta == 0.0:
        return math.inf
    eta, L, zeta = inputs.eta, inputs.L, inputs.zeta
    tau, sigma_sq = float(inputs.tau), inputs.sigma_sq
    term_opt = 2.0 * (inputs.f_init - inputs.f_inf) / (eta * inputs.T)
    term_noise = eta * L * sigma_sq / inputs.K
    term_mixing = eta**2 * L**2 * sigma_sq * ((1.0 + zeta**2) / (1.0 - zeta**2) * tau - 1.0)
    return term_opt + term_noise + term_mixing


@dataclass
class TraceComparison:
    mean_grad_norm_sq: float
    bound: float
    feasible_lr: bool
    lhs: float | None
    exceeds_bound: bool
    rounds: int


def compare_trace(metrics, inputs: BoundInputs) -> TraceComparison:
    """Compare a logged gradient-norm trace against the evaluated bound.

    `metrics` may be MetricsRecord-like objects (with .grad_norm_sq) or raw
    floats.  The comparison is diagnostic: L and sigma^2 are estimates, so a
    trace above the bound is flagged, not fatal.
    """
    series = [
        float(getattr(m, "grad_norm_sq", m)) for m in metrics
    ]
    if not series:
        raise ValidationError("empty gradient-norm trace")
    mean = float(np.mean(series))
    cond = lr_condition(inputs)
    bound = convergence_bound(inputs)
    return TraceComparison(
        mean_grad_norm_sq=mean,
        bound=bound,
        feasible_lr=cond.feasible,
        lhs=cond.lhs,
        exceeds_bound=mean > bound,
        rounds=len(series),
    )


def estimate_lipschitz(gradient_samples: list[tuple[np.ndarray, np.ndarray]]) -> float:
    """Heuristic L: max ||g(x) - g(y)|| / ||x - y|| over sampled pairs."""
    best = 0.0
    for i in range(len(gradient_samples)):
        for j in range(i + 1, len(gradient_samples)):
            x, gx = gradient_samples[i]
            y, gy = gradient_samples[j]
            dx = float(np.linalg.norm(x - y))
            if dx > 1e-12:
                best = max(best, float(np.linalg.norm(gx - gy)) / dx)
    return best if best > 0 else 1.0


def estimate_sigma_sq(per_sample_grads: list[np.ndarray]) -> float:
    """Heuristic sigma^2: mean squared deviation of per-sample gradients
    from their mean."""
    if not per_sample_grads:
        return 0.0
    stack = np.stack(per_sample_grads)
    mean = stack.mean(axis=0)
    return float(np.mean(np.sum((stack - mean) ** 2, axis=1)))
