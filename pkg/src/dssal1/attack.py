"""Least-squares reconstruction of an agent's local covariance from its shares.

An eavesdropper who sees the public iterates ``Z^(1..k)`` and one agent's
shares ``S^(1..k)`` solves ``Y [Z^(1) ... Z^(k)] = [S^(1) ... S^(k)]`` for the
minimum-norm ``Y``. When the shares are a fixed linear image ``M Z`` (as in
ManPG, with ``M = A_1 A_1^T``), ``Y`` converges to ``M`` once the stacked
iterates span ``R^n``. DSSAL1 shares ``Q_1^(k) Z^(k)`` with a mask that changes
every round, so the same estimate does not approach ``A_1 A_1^T``.
"""
import numpy as np

from .stiefel import ShapeError

PINV_RCOND = 1e-10
CHECKPOINT_EVERY = 5


class AttackState:
    """Column-stacked iterates and shares of one target agent.

    Besides the raw stacks the state keeps an orthogonally compressed copy:
    ``[Z_stack; S_stack] = L Theta^T`` with ``Theta`` orthonormal, updated by
    one small QR per observation. The minimum-norm solution is invariant under
    such right rotations, so :func:`reconstruct` works on ``L`` (at most ``2n``
    columns) instead of the full history.
    """

    def __init__(self, n=None):
        self.n = n
        self._Z = []
        self._S = []
        self._L = None

    @property
    def k(self):
        return len(self._Z)

    @property
    def stacked_Z(self):
        return np.hstack(self._Z) if self._Z else np.zeros((self.n or 0, 0))

    @property
    def stacked_S(self):
        return np.hstack(self._S) if self._S else np.zeros((self.n or 0, 0))

    def observe(self, Z, S):
        Z = np.asarray(Z, dtype=float)
        S = np.asarray(S, dtype=float)
        if Z.ndim != 2 or Z.shape != S.shape:
            raise ShapeError(f"iterate has shape {Z.shape} but share has shape {S.shape}")
        if self.n is None:
            self.n = Z.shape[0]
        elif Z.shape[0] != self.n:
            raise ShapeError(f"expected {self.n} rows, got {Z.shape[0]}")
        self._Z.append(Z)
        self._S.append(S)
        block = np.vstack([Z, S])
        M = block if self._L is None else np.hstack([self._L, block])
        self._L = np.linalg.qr(M.T, mode="r").T
        return self

    @property
    def compressed(self):
        """``(Z_c, S_c)`` spanning the same row relation as the full stacks."""
        return self._L[:self.n], self._L[self.n:]

    def reconstruct(self, rcond=PINV_RCOND):
        return reconstruct(self, rcond)


def observe(state, Z, S):
    return state.observe(Z, S)


def reconstruct(state, rcond=PINV_RCOND):
    """Minimum-norm least-squares ``Y = S_stack pinv(Z_stack)``.

    Singular values of the stacked iterates below ``rcond * sigma_max`` are
    discarded.
    """
    if state.k == 0:
        raise ValueError("no observations to reconstruct from")
    Zc, Sc = state.compressed
    return Sc @ np.linalg.pinv(Zc, rcond=rcond)


def symmetrized(Y):
    return 0.5 * (Y + Y.T)


def attack_curve(Z_history, share_history, true_local, agent=0, every=CHECKPOINT_EVERY,
                 rcond=PINV_RCOND):
    """Reconstruction error ``||Y^(k) - true_local||_F`` along a run.

    Parameters
    ----------
    Z_history : list of ndarray
        The point every agent multiplied in each round.
    share_history : list of list of ndarray
        Per round, the shares of all agents.
    true_local : ndarray, shape (n, n)
        The target agent's ``A_i A_i^T``.
    agent : int
        Target agent index.
    every : int
        Error is evaluated every ``every`` rounds and at the last round.

    Returns
    -------
    list of (round, error, symmetrized_error)
        ``round`` is 1-based.
    """
    if len(Z_history) != len(share_history):
        raise ValueError("iterate and share histories have different lengths")
    state = AttackState()
    curve = []
    last = len(Z_history)
    for k, (Z, shares) in enumerate(zip(Z_history, share_history), start=1):
        state.observe(Z, shares[agent])
        if k % every == 0 or k == last:
            Y = state.reconstruct(rcond)
            curve.append((k, float(np.linalg.norm(Y - true_local)),
                          float(np.linalg.norm(symmetrized(Y) - true_local))))
    return curve


def attack_dssal1(share_history, Z_history, true_local, agent=0, every=CHECKPOINT_EVERY):
    """Same pipeline fed the masked DSSAL1 shares ``Q_i Z``."""
    return attack_curve(Z_history, share_history, true_local, agent=agent, every=every)


def true_local_covariance(shard):
    """Dense ``A_i A_i^T``; the attack's target, used only for scoring."""
    return shard.samples @ shard.samples.T
