"""LMI formulations of LQR design and their conic solution.

Builders return an :class:`SdpProblem` (cvxpy variables, a linear objective
and named PSD / scalar constraints).  :func:`solve_sdp` is the single seam to
the conic backend.  Strict inequalities are tightened to ``X >= eps I``.
"""
from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .errors import DimensionError, RecoveryError
from .linalg import (STABILITY_MARGIN, SystemModel, as_matrix,
                     discounted_radius, gain_matrix, make_gain, min_eig,
                     solve_stein_covariance, state_injection, symmetrize)

STRICT_EPS = 1e-8
ACCEPT_TOL = 1e-6
SOLVER = "CLARABEL"
SOLVER_OPTS = {"tol_gap_abs": 1e-9, "tol_gap_rel": 1e-9, "tol_feas": 1e-9}


def extended_schur_lmi(P_prime, GA, G, P):
    """``[[P', (GA)'], [GA, G + G' - P]]``.

    With ``GA = G @ A`` this block is PSD for some G and P > 0 exactly when
    ``A' P A <= P'``.  Works on numpy arrays and on cvxpy expressions; the
    product GA is passed in whole so callers can substitute a linearising
    change of variables for it.
    """
    if any(isinstance(X, cp.Expression) for X in (P_prime, GA, G, P)):
        return cp.bmat([[P_prime, GA.T], [GA, G + G.T - P]])
    return np.block([[P_prime, GA.T], [GA, G + G.T - P]])


@dataclass(frozen=True)
class ConstraintSpec:
    """Per-coordinate energy budgets gamma_i (length n+m) and input bound rho."""

    gammas: np.ndarray
    rho: float

    def __post_init__(self):
        g = np.asarray(self.gammas, dtype=float).reshape(-1)
        if not np.all(g > 0) or not self.rho > 0:
            raise ValueError("gammas and rho must be positive")
        object.__setattr__(self, "gammas", g)
        object.__setattr__(self, "rho", float(self.rho))


@dataclass
class SdpProblem:
    kind: str
    model: SystemModel
    variables: dict
    objective: cp.Expression
    sense: str
    psd: list            # (name, symmetric affine expression) pairs
    scalar: list         # (name, cvxpy inequality) pairs
    scale: float = 1.0

    def to_cvxpy(self):
        cons = [symmetrize_expr(X) >> 0 for _, X in self.psd]
        cons += [c for _, c in self.scalar]
        goal = cp.Minimize(self.objective) if self.sense == "min" else cp.Maximize(self.objective)
        return cp.Problem(goal, cons)


@dataclass
class SdpSolution:
    status: str          # optimal | infeasible | inaccurate | error
    objective: float
    values: dict
    model: SystemModel
    kind: str
    stats: dict = field(default_factory=dict)
    message: str = ""


def symmetrize_expr(X):
    # block expressions are symmetric by construction; cvxpy wants it explicit
    return 0.5 * (X + X.T)


def _check_dims(model, cost, Z):
    cost.check(model)
    Z = symmetrize(as_matrix(Z, "Z"))
    if Z.shape != (model.n, model.n):
        raise DimensionError(f"Z must be {model.n}x{model.n}, got {Z.shape}")
    return Z


def _strict(k, scale):
    return STRICT_EPS * scale * np.eye(k)


def _design_core(model, cost, Z):
    n, m = model.n, model.m
    Z = _check_dims(model, cost, Z)
    scale = max(1.0, float(np.trace(Z)))
    S = cp.Variable((n + m, n + m), symmetric=True, name="S")
    G = cp.Variable((n, n), name="G")
    K = cp.Variable((m, n), name="K")
    AB = model.AB
    # slack-variable form of the extended Schur condition with P' = S, GA = [G K'],
    # P = [A B] S [A B]' + Z
    lmi = extended_schur_lmi(S, cp.hstack([G, K.T]), G, AB @ S @ AB.T + Z)
    psd = [("S_pos", S - _strict(n + m, scale)), ("design_lmi", lmi)]
    return S, G, K, psd, scale


def build_sdp_design(model, cost, Z):
    """min trace(Lambda S) over S > 0, G, K with the design LMI."""
    S, G, K, psd, scale = _design_core(model, cost, Z)
    return SdpProblem("design", model, {"S": S, "G": G, "K": K},
                      cp.trace(cost.Lambda @ S), "min", psd, [], scale)


def build_sdp_constrained(model, cost, Z, spec):
    """Design LMI plus energy budgets ``S_ii <= gamma_i`` and the input LMI
    ``[[rho I, K], [K', G + G' - I]] >= 0`` (implies F'F <= rho I)."""
    n, m = model.n, model.m
    if spec.gammas.shape[0] != n + m:
        raise DimensionError(f"need {n + m} energy budgets, got {spec.gammas.shape[0]}")
    S, G, K, psd, scale = _design_core(model, cost, Z)
    psd.append(("input_lmi", extended_schur_lmi(spec.rho * np.eye(m), K.T, G, np.eye(n))))
    scalar = [(f"energy_{i}", S[i, i] <= spec.gammas[i]) for i in range(n + m)]
    return SdpProblem("constrained", model, {"S": S, "G": G, "K": K},
                      cp.trace(cost.Lambda @ S), "min", psd, scalar, scale)


def build_dual_sdp(model, cost, Z):
    """max trace(Z M) with M <= P11 - P12 P22^{-1} P12' in epigraph form."""
    n, m = model.n, model.m
    Z = _check_dims(model, cost, Z)
    scale = max(1.0, float(np.trace(Z)))
    k = n + m
    P = cp.Variable((k, k), symmetric=True, name="P")
    M = cp.Variable((n, n), symmetric=True, name="M")
    P11, P12, P22 = P[:n, :n], P[:n, n:], P[n:, n:]
    AB = model.AB
    bellman = cp.bmat([[AB.T @ P11 @ AB - P + cost.Lambda, AB.T @ P12],
                       [P12.T @ AB, P22]])
    epigraph = cp.bmat([[P11 - M, P12], [P12.T, P22]])
    psd = [("P_psd", P), ("P22_pos", P22 - _strict(m, scale)),
           ("bellman_lmi", bellman), ("epigraph", epigraph)]
    return SdpProblem("dual", model, {"P": P, "M": M}, cp.trace(Z @ M), "max",
                      psd, [], scale)


_STATUS = {
    cp.OPTIMAL: "optimal",
    cp.OPTIMAL_INACCURATE: "inaccurate",
    cp.INFEASIBLE: "infeasible",
    cp.INFEASIBLE_INACCURATE: "inaccurate",
    cp.UNBOUNDED: "error",
    cp.UNBOUNDED_INACCURATE: "error",
}


def _residuals(problem):
    out = {}
    for name, X in problem.psd:
        val = X.value
        out[name] = float("nan") if val is None else min_eig(np.asarray(val))
    for name, c in problem.scalar:
        v = c.violation()
        out[name] = float("nan") if v is None else -float(np.max(v))
    return out


def _accept(problem, res):
    tol = ACCEPT_TOL * (1.0 + problem.scale)
    return all(np.isfinite(v) and v >= -tol for v in res.values())


def solve_sdp(problem, solver=SOLVER, **opts):
    """Solve with the conic backend and attach residual diagnostics.

    The backend is asked for 1e-9 accuracy.  A reduced-accuracy finish is
    promoted to ``optimal`` only when every constraint holds to 1e-6 after
    the solve; an "optimal" finish that fails that check is demoted.
    """
    prob = problem.to_cvxpy()
    settings = dict(SOLVER_OPTS) if solver == SOLVER else {}
    settings.update(opts)
    t0 = time.perf_counter()
    message = ""
    raw = None
    for attempt in (settings, {}):
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                prob.solve(solver=solver, **attempt)
            raw = prob.status
            break
        except cp.error.SolverError as exc:
            message = str(exc)
    elapsed = time.perf_counter() - t0
    if raw is None:
        return SdpSolution("error", float("nan"), {}, problem.model, problem.kind,
                           {"solve_time": elapsed}, message or "solver failed")

    status = _STATUS.get(raw, "error")
    values = {k: None if v.value is None else np.array(v.value)
              for k, v in problem.variables.items()}
    res = _residuals(problem) if status in ("optimal", "inaccurate") else {}
    if status == "inaccurate" and raw == cp.OPTIMAL_INACCURATE and _accept(problem, res):
        status = "optimal"
    elif status == "optimal" and not _accept(problem, res):
        status = "inaccurate"
    stats = {"solver_status": raw, "solve_time": elapsed,
             "iterations": prob.solver_stats.num_iters if prob.solver_stats else None,
             "min_eigs": res}
    value = float(prob.value) if status in ("optimal", "inaccurate") else float("nan")
    if status == "infeasible":
        value = float("inf") if problem.sense == "min" else float("-inf")
    return SdpSolution(status, value, values, problem.model, problem.kind, stats, message)


def recover_gain(solution, cond_limit=1e10):
    """F = K (G')^{-1} from a design solution; stability is recomputed."""
    if solution.status != "optimal":
        raise RecoveryError(f"solution status is {solution.status!r}, not optimal")
    G, K = solution.values.get("G"), solution.values.get("K")
    if G is None or K is None:
        raise RecoveryError("solution carries no G/K variables")
    cond = np.linalg.cond(G)
    if not np.isfinite(cond) or cond > cond_limit:
        raise RecoveryError(
            f"G is numerically singular (condition number {cond:.3e}); "
            "the solve was likely inaccurate")
    F = np.linalg.solve(G, K.T).T
    return make_gain(solution.model, F)


@dataclass
class DesignReport:
    radius: float
    stabilizing: bool
    cost: float
    S: np.ndarray | None
    energies: np.ndarray | None = None
    gammas: np.ndarray | None = None
    energy_ok: list | None = None
    input_gain: float | None = None
    rho: float | None = None
    input_ok: bool | None = None

    @property
    def passed(self):
        if not self.stabilizing:
            return False
        checks = list(self.energy_ok or [])
        if self.input_ok is not None:
            checks.append(self.input_ok)
        return all(checks)

    def to_dict(self):
        def f(x):
            return None if x is None else np.asarray(x).tolist()
        out = {"spectral_radius": self.radius, "stabilizing": self.stabilizing,
               "cost": self.cost if np.isfinite(self.cost) else "inf"}
        if self.gammas is not None:
            out.update(energies=f(self.energies), gammas=f(self.gammas),
                       energy_ok=self.energy_ok, input_gain=self.input_gain,
                       rho=self.rho, input_ok=self.input_ok)
        out["passed"] = self.passed
        return out


def verify_design(model, F, cost, Z, spec=None, tol=ACCEPT_TOL):
    """Re-evaluate a gain against the exact closed loop; never raises on
    instability, it flags it with an infinite cost instead."""
    F = gain_matrix(F, model)
    Z = symmetrize(as_matrix(Z, "Z"))
    r = discounted_radius(model, F)
    if not r < STABILITY_MARGIN:
        return DesignReport(r, False, float("inf"), None)
    S = solve_stein_covariance(model, F, state_injection(F, Z)).M
    rep = DesignReport(r, True, float(np.sum(cost.Lambda * S)), S)
    if spec is not None:
        e = np.diag(S).copy()
        lam = float(np.linalg.eigvalsh(F.T @ F)[-1])
        rep.energies, rep.gammas = e, spec.gammas
        rep.energy_ok = [bool(v <= g + tol * (1 + g)) for v, g in zip(e, spec.gammas)]
        rep.input_gain, rep.rho = lam, spec.rho
        rep.input_ok = bool(lam <= spec.rho + tol)
    return rep
