"""Per-agent state and updates for DSSAL1.

Each agent keeps its local iterate ``X``, the factor ``W`` of the low-rank
multiplier ``Lambda = X W^T + W X^T``, its penalty ``beta`` and the product
``A_i A_i^T X`` left over from the last multiplier update. ``Lambda`` is
never formed.
"""
from dataclasses import dataclass, replace

import numpy as np

from .problem import local_grad_product
from .stiefel import ShapeError, polar_retract


@dataclass(frozen=True)
class AgentState:
    X: np.ndarray
    W: np.ndarray
    beta: float
    cached_AAtX: np.ndarray
    agent_id: int = 0


def multiplier_factor(X, AAtX):
    """``W = -(I - X X^T) A_i A_i^T X``."""
    return -(AAtX - X @ (X.T @ AAtX))


def init_agent(shard, Z0, mu, beta=None):
    """Agent state with ``X = Z0`` and the multiplier computed at ``Z0``."""
    X = np.array(Z0, dtype=float, copy=True)
    AAtX = local_grad_product(shard, X)
    if beta is None:
        # 0.1 * (||grad f_i(X0)||_F + mu)
        beta = 0.1 * (float(np.linalg.norm(AAtX)) + mu)
    if not beta >= 0:
        raise ValueError(f"penalty must be nonnegative, got {beta}")
    return AgentState(X=X, W=multiplier_factor(X, AAtX), beta=float(beta),
                      cached_AAtX=AAtX, agent_id=shard.agent_id)


def implicit_lambda(agent):
    """Dense ``X W^T + W X^T``; for tests and diagnostics only."""
    XWt = agent.X @ agent.W.T
    return XWt + XWt.T


def apply_H(agent, shard, Z, V):
    """``(A_i A_i^T + Lambda_i + beta Z Z^T) V`` using thin products."""
    X, W = agent.X, agent.W
    if V.shape != X.shape or Z.shape != X.shape:
        raise ShapeError(f"shapes disagree: X {X.shape}, Z {Z.shape}, V {V.shape}")
    return (local_grad_product(shard, V) + X @ (W.T @ V) + W @ (X.T @ V)
            + agent.beta * (Z @ (Z.T @ V)))


def ssi_step(agent, shard, Z_next):
    """One subspace-iteration step on ``H_i``, starting from the current ``X``.

    Uses ``Lambda X = W`` (``X^T W = 0``) and the cached ``A_i A_i^T X``, so
    the cost is ``O(n p^2)``.
    """
    X = agent.X
    C = agent.cached_AAtX + agent.W + agent.beta * (Z_next @ (Z_next.T @ X))
    return polar_retract(C)


def update_multiplier(agent, shard, X_new=None):
    """Move the agent to ``X_new`` (default: keep ``X``) and refresh ``W``."""
    X = agent.X if X_new is None else X_new
    AAtX = local_grad_product(shard, X)
    return replace(agent, X=X, W=multiplier_factor(X, AAtX), cached_AAtX=AAtX)


def local_update(agent, shard, Z_next):
    """SSI step followed by the multiplier update."""
    return update_multiplier(agent, shard, ssi_step(agent, shard, Z_next))


def local_objective(agent, shard, Z_next, X=None):
    """``h_i(X) = -1/2 tr(X^T H_i X)`` with ``H_i`` built from ``agent``."""
    X = agent.X if X is None else X
    return -0.5 * float(np.sum(X * apply_H(agent, shard, Z_next, X)))


def kkt_violation(agent, shard, Z_next, X):
    """``||(I - X X^T) H_i X||_F`` with ``H_i`` built from ``agent``."""
    HX = apply_H(agent, shard, Z_next, X)
    return float(np.linalg.norm(HX - X @ (X.T @ HX)))


def check_decrease_conditions(agent_before, agent_after, shard, Z_next,
                              c=1.0, c_prime=1.0, delta=0.9, spectral_sq=None):
    """Diagnostic check of the sufficient-decrease conditions on the local step.

    ``H_i`` is assembled from ``agent_before`` (its multiplier and penalty)
    and ``Z_next``. Returns ``(value_decrease_ok, kkt_decrease_ok)``.

    The first condition asks for
    ``h(X_old) - h(X_new) >= c / (c' ||A_i||_2^2 + beta) * ||P H X_old||^2``,
    the second for ``||P' H X_new|| <= delta ||P H X_old||``. Neither is
    enforced by the solver.
    """
    if spectral_sq is None:
        s = np.linalg.svd(shard.samples, compute_uv=False)
        spectral_sq = float(s[0] ** 2)
    X0, X1 = agent_before.X, agent_after.X
    h0 = local_objective(agent_before, shard, Z_next, X0)
    h1 = local_objective(agent_before, shard, Z_next, X1)
    g0 = kkt_violation(agent_before, shard, Z_next, X0)
    g1 = kkt_violation(agent_before, shard, Z_next, X1)
    first = h0 - h1 >= c / (c_prime * spectral_sq + agent_before.beta) * g0 ** 2
    second = g1 <= delta * g0
    return bool(first), bool(second)
