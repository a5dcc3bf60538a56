"""Closed-loop, adjoint and augmented rollouts with discounted aggregates.

All aggregates are finite sums ``sum_k alpha^k v(k) v(k)'`` along noiseless
trajectories, so they are deterministic functions of (model, F, seeds, M).
Seeds are stacked as rows; trajectories are arrays of shape
``(steps + 1, dim, n_seeds)`` and the reduction runs over seeds in a fixed
order.
"""
from __future__ import annotations

import math
import warnings

import numpy as np

from .errors import DimensionError, InstabilityError
from .linalg import (BlockSym, as_matrix, check_gram, closed_loop,
                     closed_loop_state, discounted_radius, factor_columns,
                     gain_matrix)

DEFAULT_EPS = 1e-8
MAX_HORIZON = 200_000


def horizon_for(beta, eps=DEFAULT_EPS):
    """Smallest M with ``beta^M / (1-beta) <= eps``.

    The neglected tail ``sum_{k>M} beta^k`` is then at most ``beta * eps``.

    ``beta`` is the per-step contraction ``alpha * rho(A+BF)^2``.
    """
    if not 0.0 <= beta < 1.0:
        raise InstabilityError(
            f"tail contraction factor {beta:.6g} is not below 1", radius=math.sqrt(max(beta, 0.0)))
    if beta == 0.0:
        return 1
    M = math.ceil(math.log(eps * (1.0 - beta)) / math.log(beta))
    return int(min(max(M, 1), MAX_HORIZON))


def auto_horizon(model, F, eps=DEFAULT_EPS):
    return horizon_for(discounted_radius(model, F) ** 2, eps)


def _check_horizon(M):
    if isinstance(M, bool) or int(M) != M or M < 0:
        raise ValueError(f"horizon M must be a non-negative integer, got {M!r}")
    return int(M)


def _seeds(vectors, dim, name):
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    if V.size == 0 or V.shape[0] < 1:
        raise ValueError(f"{name} needs at least one seed vector")
    if V.shape[1] != dim:
        raise DimensionError(f"{name} vectors must have length {dim}, got {V.shape[1]}")
    return V


def _propagate(T, V0, steps):
    """Stack ``T^k V0`` for k = 0..steps; V0 holds seeds as columns."""
    out = np.empty((steps + 1,) + V0.shape)
    out[0] = V0
    for k in range(steps):
        out[k + 1] = T @ out[k]
    return out


def discounted_outer(traj, alpha, upto=None):
    """``sum_{k<=upto} alpha^k v(k) v(k)'`` summed over seeds."""
    upto = traj.shape[0] - 1 if upto is None else upto
    w = alpha ** np.arange(upto + 1)
    X = traj[:upto + 1]
    return np.einsum("k,kir,kjr->ij", w, X, X)


def discounted_cross(traj, alpha):
    """``sum_{k<=M} alpha^k v(k+1) v(k)'`` for a trajectory of M+2 samples."""
    M = traj.shape[0] - 2
    w = alpha ** np.arange(M + 1)
    return np.einsum("k,kir,kjr->ij", w, traj[1:M + 2], traj[:M + 1])


def _warn_if_unstable(model, F):
    r = discounted_radius(model, F)
    if r >= 1.0:
        warnings.warn(f"rolling out a non-stabilizing gain (sqrt(alpha)*rho = {r:.4g})",
                      RuntimeWarning, stacklevel=3)


def discounted_state_trajectory(model, F, z, M):
    """``alpha^(k/2) [x(k); F x(k)]`` for k = 0..M, shape (M+1, n+m, r).

    ``z`` is one initial state or r of them stacked as rows.  Propagating the
    sqrt(alpha)-scaled map keeps samples bounded whenever the discounted loop
    is stable, even if A+BF itself is not.
    """
    F = gain_matrix(F, model)
    Z0 = _seeds(z, model.n, "z")
    T = np.sqrt(model.alpha) * closed_loop_state(model, F)
    xs = _propagate(T, Z0.T, M)
    return np.concatenate([xs, np.einsum("ij,kjr->kir", F, xs)], axis=1)


def rollout_state_aggregate(model, F, z, M):
    """S~ = sum_{k=0}^M alpha^k [x; Fx][x; Fx]' along x(k+1) = (A+BF) x(k).

    Several initial states (rows of ``z``) are summed.
    """
    M = _check_horizon(M)
    _warn_if_unstable(model, F)
    traj = discounted_state_trajectory(model, F, z, M)
    return BlockSym(discounted_outer(traj, 1.0), model.n)


def discounted_cost(model, F, z, cost, M):
    """Truncated discounted cost; the same numbers as trace(Lambda S~)."""
    S = rollout_state_aggregate(model, F, z, M)
    return float(np.sum(cost.Lambda * S.M))


def rollout_adjoint_aggregate(model, F, xi_set, M, Lambda=None):
    """P~ = sum_i sum_{k=0}^M alpha^k xi_i(k) xi_i(k)' along xi+ = A_F' xi.

    When ``Lambda`` is given the seeds must factor it; ``xi_set=None`` picks
    the Cholesky (or PSD eigen) factor of ``Lambda``.
    """
    M = _check_horizon(M)
    k = model.n + model.m
    if xi_set is None:
        if Lambda is None:
            raise ValueError("need xi_set or Lambda")
        xi_set = factor_columns(Lambda)
    X0 = _seeds(xi_set, k, "xi_set")
    if Lambda is not None:
        check_gram(X0, as_matrix(Lambda, "Lambda"))
    _warn_if_unstable(model, F)
    traj = _propagate(np.sqrt(model.alpha) * closed_loop(model, F).T, X0.T, M)
    return BlockSym(discounted_outer(traj, 1.0), model.n)


class TrajectorySource:
    """Opaque simulator: the only window model-free code gets onto a plant.

    Subclasses implement :meth:`simulate`; nothing here exposes A or B.
    """

    n: int
    m: int
    alpha: float

    def simulate(self, F, seeds, steps):
        """Run from each seed ``v_i = [x(0); u(0)]`` with ``u(k) = F x(k)``, k >= 1.

        Returns samples v(0..steps) with shape ``(steps + 1, n + m, n_seeds)``.
        """
        raise NotImplementedError


class LinearSystemSource(TrajectorySource):
    """Noiseless simulator of ``x+ = A x + B u`` hiding its matrices."""

    def __init__(self, model):
        self.__model = model
        self.n, self.m, self.alpha = model.n, model.m, model.alpha

    def simulate(self, F, seeds, steps):
        mdl = self.__model
        F = gain_matrix(F, mdl)
        V = _seeds(seeds, self.n + self.m, "seeds").T
        steps = _check_horizon(steps)
        out = np.empty((steps + 1,) + V.shape)
        out[0] = V
        for k in range(steps):
            x = mdl.A @ out[k, :self.n] + mdl.B @ out[k, self.n:]
            out[k + 1, :self.n] = x
            out[k + 1, self.n:] = F @ x
        return out


def augmented_aggregates(traj, alpha, n):
    """(S~, W) from a trajectory of M+2 augmented samples."""
    S = discounted_outer(traj, alpha, upto=traj.shape[0] - 2)
    return BlockSym(S, n), discounted_cross(traj, alpha)


def rollout_augmented(model, F, v_set, M):
    """S~ and W along the augmented system from seeds ``v_set``.

    The k = M cross term uses v(M+1), so M+1 steps are simulated.
    """
    M = _check_horizon(M)
    _warn_if_unstable(model, F)
    traj = LinearSystemSource(model).simulate(F, v_set, M + 1)
    return augmented_aggregates(traj, model.alpha, model.n)
