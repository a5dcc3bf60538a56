"""Core linear algebra: system/cost containers, Stein equations, Riccati oracle.

Everything here is a pure function of its arguments.  The discount factor is
folded into the closed loop as ``sqrt(alpha) * A_F`` so that discounted and
undiscounted problems share one code path.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (ConsistencyError, ConvergenceError, DimensionError,
                     InstabilityError, NumericalError)

# rho(sqrt(alpha) (A + BF)) must be below this to count as stabilizing
STABILITY_MARGIN = 1.0 - 1e-9
TOL_PSD = 1e-9


def as_matrix(X, name="matrix"):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.ndim != 2:
        raise DimensionError(f"{name} must be two-dimensional, got shape {X.shape}")
    return X


def symmetrize(X):
    return 0.5 * (X + X.T)


def psd_tolerance(X):
    return TOL_PSD * max(1.0, abs(float(np.trace(X))))


def min_eig(X):
    return float(np.linalg.eigvalsh(symmetrize(X))[0])


def is_psd(X, tol=None):
    tol = psd_tolerance(X) if tol is None else tol
    return min_eig(X) >= -tol


@dataclass(frozen=True)
class SystemModel:
    """Linear dynamics ``x+ = A x + B u`` with discount ``alpha`` in (0, 1]."""

    A: np.ndarray
    B: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        A = as_matrix(self.A, "A")
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        B = as_matrix(B, "B")
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"A must be square, got shape {A.shape}")
        if B.shape[0] != A.shape[0]:
            raise DimensionError(
                f"B has {B.shape[0]} rows but A is {A.shape[0]}x{A.shape[0]}")
        alpha = float(self.alpha)
        if not 0.0 < alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "alpha", alpha)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def AB(self):
        """The n x (n+m) matrix ``[A B]``."""
        return np.hstack([self.A, self.B])


@dataclass(frozen=True)
class CostSpec:
    """Quadratic stage cost ``x'Qx + u'Ru``."""

    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        Q = as_matrix(self.Q, "Q")
        R = as_matrix(self.R, "R")
        for name, X in (("Q", Q), ("R", R)):
            if X.shape[0] != X.shape[1]:
                raise DimensionError(f"{name} must be square, got shape {X.shape}")
            if not np.allclose(X, X.T, atol=1e-12, rtol=0):
                raise ValueError(f"{name} must be symmetric")
        Q, R = symmetrize(Q), symmetrize(R)
        if not is_psd(Q):
            raise ValueError("Q must be positive semidefinite")
        if min_eig(R) <= 0:
            raise ValueError("R must be positive definite")
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)

    @property
    def n(self):
        return self.Q.shape[0]

    @property
    def m(self):
        return self.R.shape[0]

    @property
    def Lambda(self):
        n, m = self.n, self.m
        L = np.zeros((n + m, n + m))
        L[:n, :n] = self.Q
        L[n:, n:] = self.R
        return L

    def check(self, model):
        if (self.n, self.m) != (model.n, model.m):
            raise DimensionError(
                f"cost is sized for (n, m) = ({self.n}, {self.m}) but the model "
                f"has ({model.n}, {model.m})")


@dataclass(frozen=True)
class ExcitationSpec:
    """Initial-state data: the state Gram matrix Z and/or augmented Gamma."""

    Z: np.ndarray | None = None
    Gamma: np.ndarray | None = None

    def __post_init__(self):
        for name in ("Z", "Gamma"):
            X = getattr(self, name)
            if X is None:
                continue
            X = as_matrix(X, name)
            if X.shape[0] != X.shape[1]:
                raise DimensionError(f"{name} must be square, got shape {X.shape}")
            X = symmetrize(X)
            if min_eig(X) <= 0:
                raise ValueError(f"{name} must be positive definite")
            object.__setattr__(self, name, X)

    @classmethod
    def from_vectors(cls, zs=None, vs=None):
        """Build Z = sum z z' and/or Gamma = sum v v' from seed vectors."""
        return cls(Z=None if zs is None else gram(zs),
                   Gamma=None if vs is None else gram(vs))

    def gamma11(self, n):
        """Leading n x n block of Gamma."""
        if self.Gamma is None:
            raise ValueError("no Gamma supplied")
        return self.Gamma[:n, :n]


def gram(vectors):
    """Sum of outer products of the given vectors (rows of a 2-D array)."""
    V = np.atleast_2d(np.asarray(vectors, dtype=float))
    return V.T @ V


def check_gram(vectors, target, tol=1e-10):
    G = gram(vectors)
    if G.shape != target.shape:
        raise DimensionError(
            f"seed vectors have length {G.shape[0]}, expected {target.shape[0]}")
    err = np.linalg.norm(G - target)
    if err > tol * (1.0 + np.linalg.norm(target)):
        raise ConsistencyError(
            f"seed Gram matrix differs from its target by {err:.3e} (Frobenius)")


def factor_columns(X):
    """Vectors {v_i} (returned as rows) with sum v_i v_i' = X for PSD X.

    Cholesky when X is positive definite, a clipped eigen-factor otherwise.
    """
    X = symmetrize(as_matrix(X))
    try:
        return np.linalg.cholesky(X).T
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(X)
        return (V * np.sqrt(np.clip(w, 0.0, None))).T


@dataclass(frozen=True)
class BlockSym:
    """Symmetric (n+m) x (n+m) matrix with 2x2 block views."""

    M: np.ndarray
    n: int

    def __post_init__(self):
        M = as_matrix(self.M)
        if M.shape[0] != M.shape[1] or not 0 < self.n <= M.shape[0]:
            raise DimensionError(f"cannot split {M.shape} with n = {self.n}")
        object.__setattr__(self, "M", symmetrize(M))

    @classmethod
    def from_blocks(cls, M11, M12, M22):
        M11, M12, M22 = as_matrix(M11), as_matrix(M12), as_matrix(M22)
        return cls(np.block([[M11, M12], [M12.T, M22]]), M11.shape[0])

    @property
    def m(self):
        return self.M.shape[0] - self.n

    @property
    def M11(self):
        return self.M[:self.n, :self.n]

    @property
    def M12(self):
        return self.M[:self.n, self.n:]

    @property
    def M22(self):
        return self.M[self.n:, self.n:]


@dataclass(frozen=True)
class Gain:
    """Feedback gain F (m x n) with its stability certificate.

    Build through :func:`make_gain` so that the certificate is recomputed.
    """

    F: np.ndarray
    stabilizing: bool
    radius: float = float("nan")


def spectral_radius(M):
    M = as_matrix(M)
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"spectral radius needs a square matrix, got {M.shape}")
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


def gain_matrix(F, model=None):
    F = F.F if isinstance(F, Gain) else as_matrix(F, "F")
    if model is not None and F.shape != (model.m, model.n):
        raise DimensionError(
            f"F must be {model.m}x{model.n}, got {F.shape[0]}x{F.shape[1]}")
    return F


def closed_loop_state(model, F):
    """The n x n state map A + B F."""
    F = gain_matrix(F, model)
    return model.A + model.B @ F


def closed_loop(model, F):
    """Augmented closed loop ``A_F = [[A, B], [F A, F B]] = [I; F] [A B]``."""
    F = gain_matrix(F, model)
    IF = np.vstack([np.eye(model.n), F])
    return IF @ model.AB


def discounted_radius(model, F):
    return np.sqrt(model.alpha) * spectral_radius(closed_loop_state(model, F))


def make_gain(model, F):
    F = gain_matrix(F, model)
    r = discounted_radius(model, F)
    return Gain(F.copy(), bool(r < STABILITY_MARGIN), float(r))


def require_stabilizing(model, F, what="F"):
    r = discounted_radius(model, F)
    if not r < STABILITY_MARGIN:
        raise InstabilityError(
            f"{what} is not stabilizing: sqrt(alpha)*rho(A+BF) = {r:.6g}", radius=r)
    return r


def stein(M, N, gate=1e-6):
    """Solve ``X = M X M' + N`` by vectorisation.

    Dense (k^2 x k^2) solve; intended for k <= 20.
    """
    M, N = as_matrix(M), as_matrix(N)
    k = M.shape[0]
    if M.shape != (k, k) or N.shape != (k, k):
        raise DimensionError(f"incompatible shapes {M.shape} and {N.shape}")
    # row-major vec(M X M') = (M kron M) vec(X)
    L = np.eye(k * k) - np.kron(M, M)
    try:
        x = np.linalg.solve(L, N.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"Stein system is singular: {exc}") from None
    X = x.reshape(k, k)
    if np.allclose(N, N.T, rtol=0, atol=1e-12 * (1 + np.abs(N).max())):
        X = symmetrize(X)
    res = np.linalg.norm(M @ X @ M.T - X + N)
    if not np.isfinite(res) or res > gate * (1.0 + np.linalg.norm(N)) * max(1.0, np.linalg.norm(X)):
        raise NumericalError(f"Stein residual {res:.3e} failed the accuracy gate")
    return X


def solve_stein_covariance(model, F, N):
    """Solve ``S = alpha A_F S A_F' + N``."""
    N = as_matrix(N, "N")
    k = model.n + model.m
    if N.shape != (k, k):
        raise DimensionError(f"N must be {k}x{k}, got {N.shape}")
    require_stabilizing(model, F)
    AF = np.sqrt(model.alpha) * closed_loop(model, F)
    return BlockSym(stein(AF, N), model.n)


def solve_stein_value(model, F, Lambda):
    """Solve ``alpha A_F' P A_F - P + Lambda = 0``."""
    Lambda = as_matrix(Lambda, "Lambda")
    k = model.n + model.m
    if Lambda.shape != (k, k):
        raise DimensionError(f"Lambda must be {k}x{k}, got {Lambda.shape}")
    require_stabilizing(model, F)
    AF = np.sqrt(model.alpha) * closed_loop(model, F)
    return BlockSym(stein(AF.T, Lambda), model.n)


def state_injection(F, Z):
    """``[I; F] Z [I; F]'``, the covariance injected by initial states Z."""
    F = gain_matrix(F)
    IF = np.vstack([np.eye(F.shape[1]), F])
    return IF @ as_matrix(Z) @ IF.T


def riccati_step(model, cost, P):
    """One discounted Riccati value-iteration step; returns (P_next, F)."""
    A, B, a = model.A, model.B, model.alpha
    BtP = B.T @ P
    H = cost.R + a * BtP @ B
    F = -a * np.linalg.solve(H, BtP @ A)
    P_next = cost.Q + a * A.T @ P @ A + a * (A.T @ P @ B) @ F
    return symmetrize(P_next), F


def riccati_residual(model, cost, P):
    P_next, _ = riccati_step(model, cost, P)
    return float(np.linalg.norm(P_next - P))


def dare_oracle(model, cost, max_iter=100_000, tol=1e-12):
    """Discounted Riccati solution by value iteration from P = Q.

    Returns ``(P_star, Gain)`` with ``F = -alpha (R + alpha B'PB)^{-1} B'PA``.
    Kept deliberately independent of the Stein solvers and of any SDP so it
    can serve as ground truth for both.
    """
    cost.check(model)
    P = cost.Q.copy()
    for _ in range(max_iter):
        P_next, _ = riccati_step(model, cost, P)
        if not np.all(np.isfinite(P_next)):
            break
        done = np.linalg.norm(P_next - P) <= tol * (1.0 + np.linalg.norm(P))
        P = P_next
        if done:
            _, F = riccati_step(model, cost, P)
            gain = make_gain(model, F)
            if not gain.stabilizing:
                raise InstabilityError(
                    "Riccati iteration converged to a non-stabilizing gain; "
                    "(sqrt(alpha) A, sqrt(alpha) B) is likely not stabilizable",
                    radius=gain.radius)
            return P, gain
    raise ConvergenceError(
        f"Riccati value iteration did not converge in {max_iter} iterations")
