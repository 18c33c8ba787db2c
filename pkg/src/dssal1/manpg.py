"""Distributed ManPG baseline and the Riemannian subgradient warm start.

Every round each agent publishes ``S_i = A_i A_i^T Z`` for the current query
point ``Z``; the center sums them and solves the same tangent-space proximal
subproblem as DSSAL1 with ``G = -sum_i S_i``.

The adaptive variant is a reconstruction, not the published ManPG-Ada
schedule: a trial step is accepted when the objective drops by at least
``1e-4 ||D||^2 / (2 eta)``, otherwise ``eta`` is halved and the subproblem is
re-solved at the same point; after two consecutive accepts ``eta`` grows by
a factor 1.05. Evaluating a trial point costs one round (its shares give the
smooth part of the objective for free).
"""
from dataclasses import dataclass, field
import math
from typing import List, Optional

import numpy as np

from .dssal1 import DivergenceError, IterationRecord
from .problem import full_grad_product, l1, min_norm_subgradient
from .stiefel import polar_retract, tangent_project
from .uzawa import SubproblemInput, SubproblemStop, solve_subproblem

ACCEPT_FRACTION = 1e-4
GROWTH = 1.05
SHRINK = 0.5


@dataclass
class ManpgConfig:
    """``eta0=None`` means ``1 / ||A||_2^2``; ``eps_g=None`` means ``1e-8 n p``."""

    eta0: Optional[float] = None
    adapt: bool = True
    eps_g: Optional[float] = None
    max_iter: int = 50000
    tau: Optional[float] = None
    # the inner solve stops once ||D^T Z + Z^T D|| <= inner_rtol * ||D_prev||
    inner_rtol: float = 1e-3
    inner_max_iter: int = 100
    keep_shares: bool = False

    def __post_init__(self):
        if self.eta0 is not None and not self.eta0 > 0:
            raise ValueError(f"eta0 must be positive, got {self.eta0}")


@dataclass
class ManpgResult:
    Z: np.ndarray
    records: List[IterationRecord]
    converged: bool
    eta: float
    Z_history: list = field(default_factory=list)
    share_history: list = field(default_factory=list)

    @property
    def iterations(self):
        return len(self.records)


def local_shares(prob, Z):
    """``[A_i A_i^T Z for each agent]``; what ManPG makes public every round."""
    return [s.samples @ (s.samples.T @ Z) for s in prob.shards]


def default_step(prob):
    return 1.0 / prob.spectral_norm_sq()


def manpg_round(prob, net, Z, cfg, eta=None, upsilon=None, prev_step=math.inf):
    """One plain ManPG round: all-reduce the shares, solve, retract.

    Returns ``(Z_next, shares, D)``.
    """
    eta = default_step(prob) if eta is None else eta
    shares = local_shares(prob, Z)
    S = net.all_reduce_sum(shares)
    sol = solve_subproblem(SubproblemInput(Z, -S, eta, prob.mu),
                           SubproblemStop(prev_step_norm=cfg.inner_rtol * prev_step,
                                              max_iter=cfg.inner_max_iter),
                           upsilon0=upsilon, tau=cfg.tau)
    return polar_retract(Z + sol.D), shares, sol.D


def manpg_run(prob, net, cfg, Z0, callback=None):
    """Run ManPG (``cfg.adapt=False``) or its adaptive variant from ``Z0``.

    Each record corresponds to one round; ``step_norm`` is ``||D||_F`` of the
    subproblem solved at the current accepted point, rescaled to the initial
    step size (``||D|| * eta0 / eta``) so that a shrunken ``eta`` cannot end
    the run early. For plain ManPG the rescaling is the identity.
    """
    if net.d != prob.d:
        raise ValueError(f"network has {net.d} agents but the problem has {prob.d} shards")
    n, p = prob.n, prob.p
    eps_g = 1e-8 * n * p if cfg.eps_g is None else cfg.eps_g
    eta = eta_ref = default_step(prob) if cfg.eta0 is None else cfg.eta0
    mu = prob.mu

    Z = np.array(Z0, dtype=float, copy=True)
    query = Z
    fbar = math.inf
    S = None
    upsilon = None
    prev_step = math.inf
    streak = 0
    records, Z_history, share_history = [], [], []
    converged = False
    for k in range(cfg.max_iter):
        shares = local_shares(prob, query)
        S_query = net.all_reduce_sum(shares)
        if cfg.keep_shares:
            Z_history.append(query)
            share_history.append(shares)
        f_query = -0.5 * float(np.sum(query * S_query)) + mu * l1(query)
        if not math.isfinite(f_query):
            raise DivergenceError(f"non-finite objective at round {k}", last_good=Z,
                                  records=records)
        if S is None:
            Z, S, fbar = query, S_query, f_query
        elif cfg.adapt:
            if fbar - f_query >= ACCEPT_FRACTION * prev_step ** 2 / (2.0 * eta):
                Z, S, fbar = query, S_query, f_query
                streak += 1
                if streak >= 2:
                    eta *= GROWTH
                    streak = 0
            else:
                eta *= SHRINK
                streak = 0
        else:
            Z, S, fbar = query, S_query, f_query

        sol = solve_subproblem(SubproblemInput(Z, -S, eta, mu),
                               SubproblemStop(prev_step_norm=cfg.inner_rtol * prev_step,
                                              max_iter=cfg.inner_max_iter),
                               upsilon0=upsilon, tau=cfg.tau)
        upsilon = sol.upsilon
        raw_step = float(np.linalg.norm(sol.D))
        step = raw_step * eta_ref / eta
        rec = IterationRecord(k=k, objective=fbar, consensus=0.0, step_norm=step,
                              rounds=net.rounds, bytes=net.bytes,
                              stationarity=step ** 2, inner_iters=sol.iterations)
        records.append(rec)
        if callback is not None:
            callback(rec, Z, None)
        if step <= eps_g:
            converged = True
            break
        query = polar_retract(Z + sol.D)
        prev_step = raw_step
    return ManpgResult(Z=Z, records=records, converged=converged, eta=eta,
                       Z_history=Z_history, share_history=share_history)


def riemannian_subgradient_warmstart(prob, Z0, iters=500, step0=None):
    """Riemannian subgradient method with steps ``step0 / sqrt(t + 1)``.

    The search direction is the tangent projection of
    ``-A A^T Z + R`` where ``R`` is the minimal-norm subgradient of the
    l1 term (entries of ``Z`` that are exactly zero get a residual-minimizing
    choice in ``[-mu, mu]``). ``step0`` defaults to ``1 / ||A||_2^2``.
    """
    Z = np.array(Z0, dtype=float, copy=True)
    if iters <= 0:
        return Z
    step0 = default_step(prob) if step0 is None else step0
    for t in range(iters):
        G = -full_grad_product(prob, Z)
        R = min_norm_subgradient(Z, G, prob.mu, iters=50)
        xi = tangent_project(Z, G + R)
        Z = polar_retract(Z - (step0 / math.sqrt(t + 1.0)) * xi)
    return Z

