"""The l1-regularized sparse PCA problem over column-sharded data.

The objective is ``-1/2 tr(Z^T A A^T Z) + mu ||Z||_1`` with
``A = [A_1, ..., A_d]``. ``A A^T`` is never formed; every product goes
through ``A_i (A_i^T X)``.
"""
from dataclasses import dataclass, field
from typing import List

import numpy as np

from .stiefel import ShapeError, tangent_project

SPARSITY_THRESHOLD = 1e-5


@dataclass(frozen=True)
class DataShard:
    """Local samples of one agent, stored as an ``(n, m_i)`` array."""

    samples: np.ndarray
    agent_id: int = 0

    def __post_init__(self):
        A = np.array(self.samples, dtype=float)
        if A.ndim != 2 or A.shape[1] < 1:
            raise ShapeError(f"shard must be a non-empty 2-D array, got shape {A.shape}")
        A.setflags(write=False)
        object.__setattr__(self, "samples", A)

    @property
    def n(self):
        return self.samples.shape[0]

    @property
    def m(self):
        return self.samples.shape[1]


@dataclass
class SpcaProblem:
    shards: List[DataShard]
    p: int
    mu: float
    _spectral_sq: float = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if not self.shards:
            raise ValueError("problem needs at least one shard")
        ns = {s.n for s in self.shards}
        if len(ns) != 1:
            raise ShapeError(f"shards disagree on n: {sorted(ns)}")
        if not 1 <= self.p <= self.n:
            raise ValueError(f"need 1 <= p <= n, got p={self.p}, n={self.n}")
        if self.mu < 0:
            raise ValueError(f"mu must be nonnegative, got {self.mu}")

    @property
    def n(self):
        return self.shards[0].n

    @property
    def m(self):
        return sum(s.m for s in self.shards)

    @property
    def d(self):
        return len(self.shards)

    def assembled(self):
        """The global data matrix ``A`` (concatenated shards)."""
        return np.hstack([s.samples for s in self.shards])

    def spectral_norm_sq(self):
        """``||A||_2^2``, computed once from a dense SVD of ``A``."""
        if self._spectral_sq is None:
            s = np.linalg.svd(self.assembled(), compute_uv=False)
            self._spectral_sq = float(s[0] ** 2) if s.size else 0.0
        return self._spectral_sq

    def _check(self, Z):
        Z = np.asarray(Z, dtype=float)
        if Z.ndim != 2 or Z.shape[0] != self.n:
            raise ShapeError(f"expected an array with {self.n} rows, got shape {Z.shape}")
        return Z


def local_grad_product(shard, X):
    """``A_i A_i^T X`` via two thin products (cost ``O(n p m_i)``)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != shard.n:
        raise ShapeError(f"expected an array with {shard.n} rows, got shape {X.shape}")
    A = shard.samples
    return A @ (A.T @ X)


def local_smooth_value(shard, Z):
    """``f_i(Z) = -1/2 ||A_i^T Z||_F^2``."""
    return -0.5 * float(np.sum((shard.samples.T @ Z) ** 2))


def l1(Z):
    return float(np.sum(np.abs(Z)))


def smooth_value(prob, Z):
    Z = prob._check(Z)
    return sum(local_smooth_value(s, Z) for s in prob.shards)


def objective(prob, Z):
    """Value of ``f(Z) + mu ||Z||_1``."""
    Z = prob._check(Z)
    return smooth_value(prob, Z) + prob.mu * l1(Z)


def full_grad_product(prob, Z):
    """``A A^T Z`` summed shard by shard."""
    Z = prob._check(Z)
    out = np.zeros_like(Z)
    for s in prob.shards:
        out += local_grad_product(s, Z)
    return out


def min_norm_subgradient(Z, G, mu, zero_tol=0.0, tangent_at=None, iters=500, tol=1e-14):
    """Pick ``R`` in the subdifferential of ``mu ||.||_1`` at ``Z``.

    On entries with ``|Z_ij| > zero_tol`` the choice is forced to
    ``mu * sign(Z_ij)``. On the remaining entries ``R_ij`` ranges over
    ``[-mu, mu]`` and is chosen to minimize the Riemannian residual
    ``||P_T(G + R)||_F``, with ``T`` the tangent space at ``tangent_at``
    (default ``Z``). The minimization starts from the entrywise clamp of
    ``-G`` and is refined by accelerated projected gradient (the map
    ``R -> P_T(R)`` is a projection, so a unit step is safe).
    """
    base = Z if tangent_at is None else tangent_at
    R = mu * np.sign(Z)
    free = np.abs(Z) <= zero_tol
    if not free.any() or mu == 0:
        R[free] = 0.0
        return R
    R[free] = np.clip(-G[free], -mu, mu)
    Y = R.copy()
    t = 1.0
    for _ in range(iters):
        grad = tangent_project(base, G + Y)
        R_new = R.copy()
        R_new[free] = np.clip(Y[free] - grad[free], -mu, mu)
        step = np.linalg.norm(R_new - R)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        Y = R_new + ((t - 1.0) / t_new) * (R_new - R)
        R, t = R_new, t_new
        if step <= tol * max(1.0, mu):
            # a clipped extrapolation can stall away from the optimum:
            # stop only at a projected-gradient fixed point, else restart
            grad = tangent_project(base, G + R)
            if np.linalg.norm(np.clip(R[free] - grad[free], -mu, mu) - R[free]) \
                    <= tol * max(1.0, mu):
                break
            Y, t = R.copy(), 1.0
    return R


def stationarity_residual(prob, Z, zero_tol=0.0):
    """First-order residual pair for the sparse PCA problem at ``Z``.

    Returns ``(||P_Z(-A A^T Z + R)||_F, ||Z^T R - R^T Z||_F)`` where ``P_Z`` is
    the projector onto the orthogonal complement of ``span(Z)`` and ``R`` is
    the subgradient selected by :func:`min_norm_subgradient`. Entries with
    ``|Z_ij| <= zero_tol`` are treated as zeros of ``Z``.
    """
    Z = prob._check(Z)
    G = -full_grad_product(prob, Z)
    R = min_norm_subgradient(Z, G, prob.mu, zero_tol=zero_tol)
    V = G + R
    normal_part = V - Z @ (Z.T @ V)
    ZtR = Z.T @ R
    return float(np.linalg.norm(normal_part)), float(np.linalg.norm(ZtR - ZtR.T))


def sparsity(Z, threshold=SPARSITY_THRESHOLD):
    """Fraction of entries with ``|z| < threshold``."""
    if threshold < 0:
        raise ValueError(f"threshold must be nonnegative, got {threshold}")
    Z = np.asarray(Z)
    return float(np.count_nonzero(np.abs(Z) < threshold)) / Z.size


def preprocess(A):
    """Subtract the mean sample from every sample, then scale rows to unit norm."""
    A = np.asarray(A, dtype=float)
    A = A - A.mean(axis=1, keepdims=True)
    norms = np.linalg.norm(A, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return A / norms


def split_columns(A, d):
    """Contiguous column blocks; the first ``m mod d`` blocks get one extra column."""
    A = np.asarray(A, dtype=float)
    m = A.shape[1]
    if not 1 <= d <= m:
        raise ValueError(f"need 1 <= d <= m, got d={d}, m={m}")
    base, extra = divmod(m, d)
    shards, start = [], 0
    for i in range(d):
        width = base + (1 if i < extra else 0)
        shards.append(DataShard(A[:, start:start + width].copy(), agent_id=i))
        start += width
    return shards
