"""YAML run configuration: parsing and dimension checks before dispatch."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .linalg import CostSpec, ExcitationSpec, SystemModel, gram
from .sdp import ConstraintSpec
from .structured import (ArmijoStep, ConstantStep, DiminishingStep, PgdConfig,
                         StructureMask)

KINDS = ("pgd", "pgd-modelfree", "sdp", "sdp-constrained", "dual", "oracle")
SDP_KINDS = ("sdp", "sdp-constrained", "dual")


class ConfigError(Exception):
    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}" if field_name else message)
        self.field = field_name


@dataclass
class RunConfig:
    kind: str
    model: SystemModel
    cost: CostSpec
    Z: np.ndarray
    z: np.ndarray | None = None
    Gamma: np.ndarray | None = None
    v_set: np.ndarray | None = None
    mask: StructureMask | None = None
    F0: np.ndarray | None = None
    pgd: PgdConfig = field(default_factory=PgdConfig)
    mode: str = "exact"
    gammas: np.ndarray | None = None
    rho: float | None = None
    rho_sweep: tuple | None = None
    outputs: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def _matrix(block, key, shape=None, required=True, path=None):
    path = path or key
    if key not in block or block[key] is None:
        if required:
            raise ConfigError(path, "missing")
        return None
    try:
        X = np.array(block[key], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "must be a numeric array (rows of numbers)") from None
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(1, -1) if shape is None or shape[0] == 1 else X.reshape(-1, 1)
    if X.ndim != 2:
        raise ConfigError(path, f"must be two-dimensional, got {X.ndim} dimensions")
    if shape is not None and X.shape != shape:
        raise ConfigError(path, f"expected shape {shape[0]}x{shape[1]}, got {X.shape[0]}x{X.shape[1]}")
    return X


def _vectors(block, key, length, path):
    try:
        V = np.atleast_2d(np.array(block[key], dtype=float))
    except (TypeError, ValueError):
        raise ConfigError(path, "must be a list of numeric vectors") from None
    if V.ndim != 2 or V.shape[1] != length:
        raise ConfigError(path, f"each vector must have length {length}")
    return V


def _section(raw, key, required=False):
    val = raw.get(key)
    if val is None:
        if required:
            raise ConfigError(key, "missing section")
        return {}
    if not isinstance(val, dict):
        raise ConfigError(key, "must be a mapping")
    return val


def _number(block, key, path, default=None, positive=True, cast=float):
    if key not in block or block[key] is None:
        if default is None:
            raise ConfigError(path, "missing")
        return default
    try:
        v = cast(block[key])
    except (TypeError, ValueError):
        raise ConfigError(path, f"must be a number, got {block[key]!r}") from None
    if positive and not v > 0:
        raise ConfigError(path, "must be positive")
    return v


def _step_rule(block):
    rule = str(block.get("rule", "armijo")).lower()
    try:
        if rule == "armijo":
            return ArmijoStep(sigma=_number(block, "sigma", "pgd.step.sigma", 1e-4),
                              beta=_number(block, "beta", "pgd.step.beta", 0.5),
                              gamma_max=_number(block, "gamma_max", "pgd.step.gamma_max", 1.0))
        if rule == "constant":
            return ConstantStep(_number(block, "gamma", "pgd.step.gamma"))
        if rule == "diminishing":
            return DiminishingStep(_number(block, "gamma0", "pgd.step.gamma0"))
    except ValueError as exc:
        raise ConfigError("pgd.step", str(exc)) from None
    raise ConfigError("pgd.step.rule", f"unknown rule {rule!r} (armijo, constant, diminishing)")


def parse_config(raw):
    if not isinstance(raw, dict):
        raise ConfigError("", "top level must be a mapping")
    kind = raw.get("kind")
    if kind not in KINDS:
        raise ConfigError("kind", f"must be one of {', '.join(KINDS)}; got {kind!r}")

    mb = _section(raw, "model", required=True)
    A = _matrix(mb, "A", path="model.A")
    if A.shape[0] != A.shape[1]:
        raise ConfigError("model.A", f"must be square, got {A.shape[0]}x{A.shape[1]}")
    n = A.shape[0]
    B = _matrix(mb, "B", path="model.B")
    if B.shape[0] != n and B.shape == (1, n):
        B = B.T
    if B.shape[0] != n:
        raise ConfigError("model.B", f"must have {n} rows, got {B.shape[0]}")
    m = B.shape[1]
    alpha = _number(mb, "alpha", "model.alpha", 1.0)
    if not 0 < alpha <= 1:
        raise ConfigError("model.alpha", "must lie in (0, 1]")
    if kind in SDP_KINDS and alpha != 1.0:
        raise ConfigError("model.alpha", f"{kind} problems are undiscounted; alpha must be 1")
    model = SystemModel(A, B, alpha)

    cb = _section(raw, "cost", required=True)
    Q = _matrix(cb, "Q", (n, n), path="cost.Q")
    R = _matrix(cb, "R", (m, m), path="cost.R")
    try:
        cost = CostSpec(Q, R)
    except ValueError as exc:
        raise ConfigError("cost", str(exc)) from None

    eb = _section(raw, "excitation")
    z = None
    if "z" in eb:
        z = _vectors(eb, "z", n, "excitation.z")
    Z = _matrix(eb, "Z", (n, n), required=False, path="excitation.Z")
    if Z is None:
        Z = gram(z) if z is not None else np.eye(n)
    Gamma = _matrix(eb, "Gamma", (n + m, n + m), required=False, path="excitation.Gamma")
    v_set = _vectors(eb, "v", n + m, "excitation.v") if "v" in eb else None
    try:
        ExcitationSpec(Z=Z if kind in SDP_KINDS else None,
                       Gamma=Gamma if Gamma is not None else (gram(v_set) if v_set is not None else None))
    except ValueError as exc:
        raise ConfigError("excitation", str(exc)) from None
    if v_set is None and Gamma is not None:
        v_set = np.linalg.cholesky(Gamma).T

    cfg = RunConfig(kind, model, cost, Z, z=z, Gamma=Gamma, v_set=v_set, raw=raw)

    if kind in ("pgd", "pgd-modelfree"):
        mask = _matrix(raw, "mask", (m, n), required=False, path="mask")
        try:
            cfg.mask = StructureMask(np.ones((m, n)) if mask is None else mask)
        except ValueError as exc:
            raise ConfigError("mask", str(exc)) from None
        pb = _section(raw, "pgd")
        cfg.F0 = _matrix(pb, "F0", (m, n), required=False, path="pgd.F0")
        if cfg.F0 is None:
            cfg.F0 = np.zeros((m, n))
        horizon = pb.get("M", pb.get("horizon", "auto"))
        if horizon != "auto":
            horizon = int(_number(pb, "M" if "M" in pb else "horizon", "pgd.M", cast=int))
        step = pb.get("step") or {}
        if not isinstance(step, dict):
            raise ConfigError("pgd.step", "must be a mapping")
        cfg.pgd = PgdConfig(step_rule=_step_rule(step),
                            max_iter=_number(pb, "max_iter", "pgd.max_iter", 1000, cast=int),
                            grad_tol=_number(pb, "grad_tol", "pgd.grad_tol", 1e-6),
                            horizon=horizon,
                            record_history=bool(pb.get("record_history", True)))
        cfg.mode = str(pb.get("mode", "exact"))
        if cfg.mode not in ("exact", "simulated"):
            raise ConfigError("pgd.mode", "must be 'exact' or 'simulated'")
        if kind == "pgd" and z is None and "Z" not in eb:
            raise ConfigError("excitation.z", "pgd needs initial state(s) z")

    if kind == "sdp-constrained":
        sb = _section(raw, "constraint", required=True)
        g = sb.get("gammas", sb.get("gamma"))
        if g is None:
            raise ConfigError("constraint.gammas", "missing")
        try:
            g = np.array(g, dtype=float).reshape(-1)
        except (TypeError, ValueError):
            raise ConfigError("constraint.gammas", "must be numeric") from None
        if g.size == 1:
            g = np.full(n + m, g[0])
        if g.size != n + m:
            raise ConfigError("constraint.gammas", f"need {n + m} values, got {g.size}")
        sweep = sb.get("rho_sweep")
        if sweep is not None:
            if not isinstance(sweep, (list, tuple)) or len(sweep) != 3:
                raise ConfigError("constraint.rho_sweep", "must be [lo, hi, count]")
            lo, hi, cnt = sweep
            try:
                lo, hi, cnt = float(lo), float(hi), int(cnt)
            except (TypeError, ValueError):
                raise ConfigError("constraint.rho_sweep", "must be numeric") from None
            if not (0 < lo <= hi) or cnt < 1:
                raise ConfigError("constraint.rho_sweep", "need 0 < lo <= hi and count >= 1")
            cfg.rho_sweep = (lo, hi, cnt)
        rho = sb.get("rho")
        if rho is None and cfg.rho_sweep is None:
            raise ConfigError("constraint.rho", "missing (or give rho_sweep)")
        try:
            ConstraintSpec(g, 1.0 if rho is None else float(rho))
        except (TypeError, ValueError) as exc:
            raise ConfigError("constraint", str(exc)) from None
        cfg.gammas = g
        cfg.rho = None if rho is None else float(rho)

    ob = _section(raw, "output")
    cfg.outputs = {k: str(ob[k]) for k in ("report", "history", "sweep") if k in ob}
    return cfg


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise ConfigError("", f"YAML parse error at {where}{getattr(exc, 'problem', exc)}") from None
    return parse_config(raw)
