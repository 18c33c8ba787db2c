"""Outer loop of DSSAL1 over a simulated network.

One iteration:

1. every agent computes its masked product ``Q_i Z`` and the network sums them
   (the only communication of the iteration);
2. the center solves the tangent-space proximal subproblem with the Uzawa
   method and retracts ``Z + D``;
3. every agent takes one subspace-iteration step on its local eigenproblem
   and refreshes its multiplier factor.
"""
from dataclasses import dataclass, field
import math
from typing import List, Optional, Sequence

import numpy as np

from . import local
from .problem import l1, local_smooth_value
from .stiefel import polar_retract, projection_distance, projection_distance_sq
from .uzawa import MAX_INNER, SubproblemInput, SubproblemStop, solve_subproblem

# test-only hook: flips the sign of the W-terms in the masked product
_FAULT_FLIP_MASK_SIGN = False


class DivergenceError(FloatingPointError):
    """Raised when an iterate stops being finite; carries the last good ``Z``."""

    def __init__(self, message, last_good=None, records=None):
        super().__init__(message)
        self.last_good = last_good
        self.records = records or []


@dataclass
class DriverConfig:
    """Settings for :func:`run`.

    ``eps_g`` defaults to ``1e-8 n p`` and ``eta`` to ``1 / sum(beta_i)`` when
    left as ``None``.
    """

    eps_c: float = 1e-6
    eps_g: Optional[float] = None
    max_iter: int = 50000
    eta: Optional[float] = None
    beta_overrides: Optional[Sequence[float]] = None
    tau: Optional[float] = None
    inner_max_iter: int = MAX_INNER
    warm_start_dual: bool = True
    track_lagrangian: bool = True
    keep_shares: bool = False

    def resolved_eps_g(self, n, p):
        return 1e-8 * n * p if self.eps_g is None else self.eps_g


@dataclass
class IterationRecord:
    k: int
    objective: float
    consensus: float
    step_norm: float
    rounds: int
    bytes: int
    lagrangian: float = math.nan
    stationarity: float = math.nan
    inner_iters: int = 0

    FIELDS = ("k", "objective", "consensus", "step_norm", "rounds", "bytes",
              "lagrangian", "stationarity", "inner_iters")

    def as_row(self):
        return [getattr(self, f) for f in self.FIELDS]


@dataclass
class RunResult:
    Z: np.ndarray
    records: List[IterationRecord]
    converged: bool
    agents: list
    eta: float
    # per round: the point every agent multiplied and what each agent sent
    Z_history: list = field(default_factory=list)
    share_history: list = field(default_factory=list)

    @property
    def iterations(self):
        return len(self.records)


def masked_local_product(agent, Z):
    """``Q_i Z = X (W^T Z) + W (X^T Z) - beta X (X^T Z)``, cost ``O(n p^2)``."""
    X, W = agent.X, agent.W
    XtZ = X.T @ Z
    sign = -1.0 if _FAULT_FLIP_MASK_SIGN else 1.0
    return sign * (X @ (W.T @ Z) + W @ XtZ) - agent.beta * (X @ XtZ)


def feasible_mask_identity_check(agents, shards, Z):
    """Deviation of ``sum_i Q_i Z`` from ``-(I - Z Z^T) A A^T Z - (sum beta_i) Z``.

    The two agree when every ``X_i`` spans the same subspace as ``Z`` and the
    multipliers are current.
    """
    total = sum(masked_local_product(a, Z) for a in agents)
    AAtZ = sum(s.samples @ (s.samples.T @ Z) for s in shards)
    expected = -(AAtZ - Z @ (Z.T @ AAtZ)) - sum(a.beta for a in agents) * Z
    return float(np.linalg.norm(total - expected))


def consensus_distance(agents, Z):
    """Mean projection distance ``||Z Z^T - X_i X_i^T||_F`` over agents."""
    return sum(projection_distance(a.X, Z) for a in agents) / len(agents)


def epsilon_stationarity(agents, Z, D):
    """``(1/d) sum_i ||Z Z^T - X_i X_i^T||_F^2 + ||D||_F^2``."""
    cons = sum(projection_distance_sq(a.X, Z) for a in agents) / len(agents)
    return cons + float(np.sum(D * D))


def augmented_lagrangian(prob, agents, Z):
    """Augmented Lagrangian at ``(Z, {X_i}, {Lambda_i})`` via ``p x p`` Gram identities."""
    total = prob.mu * l1(Z)
    for a in agents:
        XtZ = a.X.T @ Z
        WtZ = a.W.T @ Z
        dist_sq = projection_distance_sq(a.X, Z)
        # <Lambda, X X^T> = 2 tr(W^T X) and <Lambda, Z Z^T> = 2 tr(Z^T X W^T Z)
        lam_xx = 2.0 * float(np.trace(a.W.T @ a.X))
        lam_zz = 2.0 * float(np.sum(XtZ * WtZ))
        total += (-0.5 * float(np.sum(a.X * a.cached_AAtX))
                  - 0.5 * (lam_xx - lam_zz) + 0.25 * a.beta * dist_sq)
    return total


def _objective(prob, Z):
    return sum(local_smooth_value(s, Z) for s in prob.shards) + prob.mu * l1(Z)


def init_agents(prob, Z0, beta_overrides=None):
    if beta_overrides is not None and len(beta_overrides) != prob.d:
        raise ValueError(f"need {prob.d} penalties, got {len(beta_overrides)}")
    return [local.init_agent(s, Z0, prob.mu,
                             beta=None if beta_overrides is None else beta_overrides[i])
            for i, s in enumerate(prob.shards)]


def run(prob, net, cfg, Z0, callback=None):
    """Run DSSAL1 from ``Z0``.

    Parameters
    ----------
    prob : SpcaProblem
    net : Network
        Carries the one all-reduce per iteration; must have ``d`` agents.
    cfg : DriverConfig
    Z0 : ndarray, shape (n, p)
        Common starting point; every ``X_i`` starts here as well.
    callback : callable, optional
        Called as ``callback(record, Z, agents)`` after every iteration.

    Returns
    -------
    RunResult
    """
    if net.d != prob.d:
        raise ValueError(f"network has {net.d} agents but the problem has {prob.d} shards")
    n, p = prob.n, prob.p
    Z = np.array(Z0, dtype=float, copy=True)
    if Z.shape != (n, p):
        raise ValueError(f"Z0 has shape {Z.shape}, expected {(n, p)}")
    agents = init_agents(prob, Z, cfg.beta_overrides)
    beta_sum = sum(a.beta for a in agents)
    if cfg.eta is not None:
        eta = cfg.eta
    elif beta_sum > 0:
        eta = 1.0 / beta_sum
    else:
        raise ValueError("all penalties are zero; pass an explicit eta")
    eps_g = cfg.resolved_eps_g(n, p)

    records = []
    Z_history, share_history = [], []
    upsilon = None
    prev_step = math.inf
    converged = False
    for k in range(cfg.max_iter):
        shares = [masked_local_product(a, Z) for a in agents]
        QZ = net.all_reduce_sum(shares)
        if not np.all(np.isfinite(QZ)):
            raise DivergenceError(f"non-finite shares at iteration {k}",
                                  last_good=Z, records=records)
        if cfg.keep_shares:
            Z_history.append(Z)
            share_history.append(shares)

        stop = SubproblemStop(prev_step_norm=prev_step, max_iter=cfg.inner_max_iter)
        sol = solve_subproblem(SubproblemInput(Z, QZ, eta, prob.mu), stop,
                               upsilon0=upsilon if cfg.warm_start_dual else None,
                               tau=cfg.tau)
        D = sol.D
        upsilon = sol.upsilon
        step = float(np.linalg.norm(D))
        cons = consensus_distance(agents, Z)
        obj = _objective(prob, Z)
        rec = IterationRecord(
            k=k, objective=obj, consensus=cons, step_norm=step,
            rounds=net.rounds, bytes=net.bytes,
            lagrangian=augmented_lagrangian(prob, agents, Z) if cfg.track_lagrangian else math.nan,
            stationarity=epsilon_stationarity(agents, Z, D),
            inner_iters=sol.iterations)
        if not (math.isfinite(obj) and np.all(np.isfinite(D))):
            raise DivergenceError(f"non-finite iterate at iteration {k}",
                                  last_good=Z, records=records)
        records.append(rec)
        if callback is not None:
            callback(rec, Z, agents)
        if cons <= cfg.eps_c and step <= eps_g:
            converged = True
            break

        Z = polar_retract(Z + D)
        agents = [local.local_update(a, s, Z) for a, s in zip(agents, prob.shards)]
        prev_step = step

    return RunResult(Z=Z, records=records, converged=converged, agents=agents, eta=eta,
                     Z_history=Z_history, share_history=share_history)
