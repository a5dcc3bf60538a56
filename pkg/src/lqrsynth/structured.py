"""Projected gradient descent over structure-constrained feedback gains."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from .errors import DimensionError, InstabilityError
from .linalg import (STABILITY_MARGIN, Gain, as_matrix, discounted_radius,
                     gain_matrix, make_gain, require_stabilizing,
                     solve_stein_covariance, solve_stein_value,
                     state_injection)
from .trajectory import (DEFAULT_EPS, auto_horizon, rollout_adjoint_aggregate,
                         rollout_state_aggregate)


@dataclass(frozen=True)
class StructureMask:
    """Binary m x n sparsity pattern; zeros mark entries forced to zero."""

    pattern: np.ndarray

    def __post_init__(self):
        P = as_matrix(self.pattern, "mask")
        if not np.all((P == 0) | (P == 1)):
            raise ValueError("mask entries must be 0 or 1")
        object.__setattr__(self, "pattern", P)

    @classmethod
    def full(cls, m, n):
        return cls(np.ones((m, n)))

    @property
    def shape(self):
        return self.pattern.shape

    def project(self, F):
        return project_structure(F, self)

    def contains(self, F):
        F = gain_matrix(F)
        return F.shape == self.shape and np.array_equal(F * self.pattern, F)


def project_structure(F, mask):
    """Hadamard product ``F o I_K``: orthogonal projection onto the pattern."""
    F = gain_matrix(F)
    if F.shape != mask.shape:
        raise DimensionError(f"gain is {F.shape} but the mask is {mask.shape}")
    return F * mask.pattern


@dataclass(frozen=True)
class ConstantStep:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class DiminishingStep:
    """gamma_t = gamma0 / (1 + t)."""

    gamma0: float

    def __post_init__(self):
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")


@dataclass(frozen=True)
class ArmijoStep:
    """Backtracking from gamma_max by factor beta until
    ``J(F+) <= J(F) - sigma * gamma * ||d||^2`` and F+ stabilizes."""

    sigma: float = 1e-4
    beta: float = 0.5
    gamma_max: float = 1.0
    max_backtracks: int = 60

    def __post_init__(self):
        if not 0 < self.sigma < 1 or not 0 < self.beta < 1:
            raise ValueError("Armijo sigma and beta must lie in (0, 1)")
        if not self.gamma_max > 0:
            raise ValueError("gamma_max must be positive")


StepRule = Union[ConstantStep, DiminishingStep, ArmijoStep]


@dataclass(frozen=True)
class PgdConfig:
    step_rule: StepRule = field(default_factory=ArmijoStep)
    max_iter: int = 1000
    grad_tol: float = 1e-6
    horizon: Union[int, str] = "auto"
    horizon_eps: float = DEFAULT_EPS
    record_history: bool = True


@dataclass(frozen=True)
class PgdIterate:
    t: int
    F: np.ndarray
    J: float
    grad_norm: float


@dataclass
class PgdRun:
    iterates: list
    gain: Gain
    reason: str

    @property
    def steps(self):
        return self.iterates[-1].t

    @property
    def costs(self):
        return np.array([it.J for it in self.iterates])

    @property
    def final(self):
        return self.iterates[-1]


def structured_gradient(P, H, F):
    """``2 (P12' + P22 F) H``, the m x n gradient shared by both cost variants."""
    F = gain_matrix(F)
    return 2.0 * (P.M12.T + P.M22 @ F) @ H


def gradient_model_based(model, F, cost, z=None, Gamma=None):
    """Analytic gradient of the discounted cost with respect to F.

    With ``z`` (one state, or several stacked as rows) the covariance is
    driven by ``[I; F] z z' [I; F]'`` and the weight is ``S11``.  With
    ``Gamma`` the augmented initial covariance is fixed and the weight is
    ``S11 - Gamma11``.
    """
    F = gain_matrix(F, model)
    cost.check(model)
    S, P = _stein_pair(model, F, cost, z, Gamma)
    return structured_gradient(P, _weight(S, model, Gamma), F)


def _injection(model, F, z, Gamma):
    if (z is None) == (Gamma is None):
        raise ValueError("give exactly one of z or Gamma")
    if Gamma is not None:
        return as_matrix(Gamma, "Gamma")
    z = np.atleast_2d(np.asarray(z, dtype=float))
    if z.shape[1] != model.n:
        raise DimensionError(f"z must have length {model.n}, got {z.shape[1]}")
    return state_injection(F, z.T @ z)


def _weight(S, model, Gamma):
    if Gamma is None:
        return S.M11
    return S.M11 - as_matrix(Gamma)[:model.n, :model.n]


def _stein_pair(model, F, cost, z, Gamma):
    S = solve_stein_covariance(model, F, _injection(model, F, z, Gamma))
    P = solve_stein_value(model, F, cost.Lambda)
    return S, P


def exact_cost(model, F, cost, z=None, Gamma=None):
    """trace(Lambda S) with S from the exact Stein solve; inf if unstable."""
    F = gain_matrix(F, model)
    if not discounted_radius(model, F) < STABILITY_MARGIN:
        return float("inf")
    S = solve_stein_covariance(model, F, _injection(model, F, z, Gamma))
    return float(np.sum(cost.Lambda * S.M))


class Objective:
    """Cost/gradient oracle consumed by :func:`descend`."""

    def stable(self, F):
        raise NotImplementedError

    def cost(self, F):
        raise NotImplementedError

    def cost_and_gradient(self, F):
        raise NotImplementedError


class ModelObjective(Objective):
    """Exact (Stein) or simulated (rollout) evaluation with a known model."""

    def __init__(self, model, cost, z=None, Gamma=None, mode="exact",
                 horizon="auto", eps=DEFAULT_EPS):
        if mode not in ("exact", "simulated"):
            raise ValueError(f"mode must be 'exact' or 'simulated', got {mode!r}")
        if mode == "simulated" and z is None:
            raise ValueError("simulated mode needs an initial state z")
        cost.check(model)
        self.model, self.cost_spec = model, cost
        self.z, self.Gamma = z, Gamma
        self.mode, self.horizon, self.eps = mode, horizon, eps
        self.Lambda = cost.Lambda

    def stable(self, F):
        return discounted_radius(self.model, F) < STABILITY_MARGIN

    def _M(self, F):
        if self.horizon == "auto":
            return auto_horizon(self.model, F, self.eps)
        return int(self.horizon)

    def cost(self, F):
        if self.mode == "exact":
            return exact_cost(self.model, F, self.cost_spec, self.z, self.Gamma)
        S = rollout_state_aggregate(self.model, F, self.z, self._M(F))
        return float(np.sum(self.Lambda * S.M))

    def cost_and_gradient(self, F):
        if self.mode == "exact":
            S, P = _stein_pair(self.model, F, self.cost_spec, self.z, self.Gamma)
        else:
            M = self._M(F)
            S = rollout_state_aggregate(self.model, F, self.z, M)
            P = rollout_adjoint_aggregate(self.model, F, None, M, Lambda=self.Lambda)
        J = float(np.sum(self.Lambda * S.M))
        return J, structured_gradient(P, _weight(S, self.model, self.Gamma), F)


def descend(objective, mask, F0, cfg, certify: Callable[[np.ndarray], Gain]):
    """Projected gradient loop shared by the model-based and model-free runs.

    ``d_t`` is the projected gradient; for F_t in the pattern subspace,
    ``Pi(F_t - gamma g) = F_t - gamma Pi(g)`` so iterates match the
    unprojected-direction form exactly.
    """
    F = gain_matrix(F0)
    if F.shape != mask.shape:
        raise DimensionError(f"F0 is {F.shape} but the mask is {mask.shape}")
    if not mask.contains(F):
        raise ValueError("F0 violates the structure mask")
    if not objective.stable(F):
        raise InstabilityError("initial gain F0 is not stabilizing", iteration=0)

    rule = cfg.step_rule
    history = []
    reason = "max_iter"
    for t in range(cfg.max_iter + 1):
        J, grad = objective.cost_and_gradient(F)
        d = mask.project(grad)
        dnorm = float(np.linalg.norm(d))
        it = PgdIterate(t, F.copy(), J, dnorm)
        if cfg.record_history or not history:
            history.append(it)
        else:
            history[-1] = it
        if dnorm <= cfg.grad_tol:
            reason = "converged"
            break
        if t == cfg.max_iter:
            break

        if isinstance(rule, ArmijoStep):
            gamma = rule.gamma_max
            for _ in range(rule.max_backtracks):
                cand = mask.project(F - gamma * d)
                if objective.stable(cand) and \
                        objective.cost(cand) <= J - rule.sigma * gamma * dnorm ** 2:
                    break
                gamma *= rule.beta
            else:
                reason = "line_search_failed"
                break
        else:
            gamma = rule.gamma if isinstance(rule, ConstantStep) else rule.gamma0 / (1 + t)
            cand = mask.project(F - gamma * d)
            if not objective.stable(cand):
                raise InstabilityError(
                    f"iterate {t + 1} left the stabilizing set (step {gamma:.3g})",
                    iteration=t + 1)
        F = cand

    return PgdRun(history, certify(F), reason)


def pgd_run(model, cost, mask, F0, z, cfg=None, mode="exact", Gamma=None):
    """Projected gradient descent on the z-cost (or the Gamma-cost).

    ``mode="simulated"`` replaces the Stein solves by truncated rollouts of
    the closed loop and of the adjoint system.
    """
    cfg = PgdConfig() if cfg is None else cfg
    F0 = gain_matrix(F0, model)
    if mask.shape != (model.m, model.n):
        raise DimensionError(f"mask must be {model.m}x{model.n}, got {mask.shape}")
    require_stabilizing(model, F0, "F0")
    obj = ModelObjective(model, cost, z=None if Gamma is not None else z, Gamma=Gamma,
                         mode=mode, horizon=cfg.horizon, eps=cfg.horizon_eps)
    return descend(obj, mask, F0, cfg, lambda F: make_gain(model, F))


