"""Model-free projected gradient descent driven purely by trajectory data.

Nothing in this module touches A or B: cost, value matrix and gradient are
all assembled from the sample covariance S~ and cross-covariance W returned
by a :class:`~lqrsynth.trajectory.TrajectorySource`.
"""
from __future__ import annotations

import numpy as np

from .errors import DimensionError, ExcitationError, NumericalError
from .linalg import (STABILITY_MARGIN, BlockSym, ExcitationSpec, Gain,
                     as_matrix, gain_matrix, gram, min_eig, psd_tolerance,
                     spectral_radius, symmetrize)
from .structured import Objective, PgdConfig, descend, structured_gradient
from .trajectory import DEFAULT_EPS, augmented_aggregates, horizon_for


def _duplication(k):
    """D with vec(P) = D @ vech(P) for symmetric k x k P (row-major vec)."""
    iu = np.triu_indices(k)
    D = np.zeros((k * k, iu[0].size))
    for c, (i, j) in enumerate(zip(*iu)):
        D[i * k + j, c] = 1.0
        D[j * k + i, c] = 1.0
    return D, iu


def solve_value_from_data(S_tilde, W, cost, alpha):
    """Solve ``alpha W' P W + S~ (Lambda - P) S~ = 0`` for symmetric P.

    The unknowns are the upper-triangle entries of P; the system is solved in
    the least-squares sense and accepted only if its residual passes.
    """
    S = S_tilde.M if isinstance(S_tilde, BlockSym) else symmetrize(as_matrix(S_tilde))
    n = S_tilde.n if isinstance(S_tilde, BlockSym) else cost.n
    W = as_matrix(W, "W")
    L = cost.Lambda
    k = S.shape[0]
    if W.shape != (k, k) or L.shape != (k, k):
        raise DimensionError(f"S~, W and Lambda must all be {k}x{k}")
    lo = min_eig(S)
    if lo <= psd_tolerance(S):
        raise ExcitationError(
            f"sample covariance is near singular (min eigenvalue {lo:.3e}); "
            "increase seeds or horizon")

    D, iu = _duplication(k)
    # row-major: vec(X' P X) = (X' kron X') vec(P)
    op = alpha * np.kron(W.T, W.T) - np.kron(S, S)
    rhs = -(S @ L @ S).reshape(-1)
    A = op @ D
    p, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
    if rank < A.shape[1]:
        raise NumericalError(
            f"value equation is degenerate (rank {rank} < {A.shape[1]})")
    P = np.zeros((k, k))
    P[iu] = p
    P = P + np.triu(P, 1).T
    res = np.linalg.norm(alpha * W.T @ P @ W + S @ (L - P) @ S)
    scale = 1.0 + np.linalg.norm(L)
    if res > 1e-8 * scale * max(1.0, np.linalg.norm(S) ** 2):
        raise NumericalError(f"value equation residual {res:.3e} failed the gate")
    return BlockSym(P, n)


def gradient_model_free(P, S_tilde, F, excitation):
    """``2 P12' H + 2 P22 F H`` with ``H = S~11 - Gamma11``."""
    F = gain_matrix(F)
    n = F.shape[1]
    Gamma = excitation.Gamma if isinstance(excitation, ExcitationSpec) else excitation
    Gamma = as_matrix(Gamma, "Gamma")
    S = S_tilde if isinstance(S_tilde, BlockSym) else BlockSym(S_tilde, n)
    if P.M.shape != S.M.shape or Gamma.shape != S.M.shape or S.n != n:
        raise DimensionError("P, S~, Gamma and F have inconsistent dimensions")
    return structured_gradient(P, S.M11 - Gamma[:n, :n], F)


class DataObjective(Objective):
    """Gamma-cost evaluated from fresh rollouts of an opaque source.

    With ``horizon="auto"`` a short pilot rollout estimates the closed-loop
    map as ``W S~^{-1}`` (exact for noiseless data) and the horizon follows
    from its spectral radius.
    """

    def __init__(self, source, cost, seeds, horizon="auto", eps=DEFAULT_EPS):
        self.source = source
        self.cost_spec = cost
        self.Lambda = cost.Lambda
        self.seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
        k = source.n + source.m
        if self.seeds.shape[1] != k:
            raise DimensionError(f"seed vectors must have length {k}")
        self.Gamma = gram(self.seeds)
        if min_eig(self.Gamma) <= 0:
            raise ExcitationError("seed Gram matrix Gamma must be positive definite")
        self.horizon, self.eps = horizon, eps
        self._cache = {}

    def _rollout(self, F, M):
        traj = self.source.simulate(F, self.seeds, M + 1)
        return augmented_aggregates(traj, self.source.alpha, self.source.n)

    def radius(self, F):
        """sqrt(alpha) * rho of the closed loop, identified from a pilot run."""
        key = gain_matrix(F).tobytes()
        if key not in self._cache:
            k = self.source.n + self.source.m
            S, W = self._rollout(F, k)
            try:
                AF = W @ np.linalg.inv(S.M)
            except np.linalg.LinAlgError:
                raise ExcitationError("pilot covariance is singular") from None
            self._cache = {key: np.sqrt(self.source.alpha) * spectral_radius(AF)}
        return self._cache[key]

    def stable(self, F):
        return self.radius(F) < STABILITY_MARGIN

    def _M(self, F):
        if self.horizon == "auto":
            return horizon_for(self.radius(F) ** 2, self.eps)
        return int(self.horizon)

    def aggregates(self, F):
        return self._rollout(F, self._M(F))

    def cost(self, F):
        S, _ = self.aggregates(F)
        return float(np.sum(self.Lambda * S.M))

    def cost_and_gradient(self, F):
        S, W = self.aggregates(F)
        P = solve_value_from_data(S, W, self.cost_spec, self.source.alpha)
        J = float(np.sum(self.Lambda * S.M))
        return J, gradient_model_free(P, S, F, self.Gamma)


def pgd_modelfree_run(source, cost, mask, F0, v_set=None, cfg=None):
    """Projected gradient descent on the Gamma-cost using trajectories only.

    ``v_set`` defaults to the unit vectors, i.e. Gamma = I.
    """
    cfg = PgdConfig() if cfg is None else cfg
    k = source.n + source.m
    if (cost.n, cost.m) != (source.n, source.m):
        raise DimensionError("cost dimensions do not match the trajectory source")
    seeds = np.eye(k) if v_set is None else v_set
    obj = DataObjective(source, cost, seeds, horizon=cfg.horizon, eps=cfg.horizon_eps)

    def certify(F):
        r = obj.radius(F)
        return Gain(F.copy(), bool(r < STABILITY_MARGIN), float(r))

    return descend(obj, mask, F0, cfg, certify)
