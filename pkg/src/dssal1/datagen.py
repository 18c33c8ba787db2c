"""Synthetic sparse PCA instances with a prescribed singular-value decay."""
from dataclasses import dataclass

import numpy as np

from .problem import SpcaProblem, preprocess, split_columns
from .stiefel import orthonormalize


@dataclass(frozen=True)
class GenSpec:
    n: int
    m: int
    d: int
    p: int
    mu: float
    xi: float = 1.1
    seed: int = 0

    def __post_init__(self):
        if self.n > self.m:
            raise ValueError(f"need n <= m for an economy SVD, got n={self.n}, m={self.m}")
        if self.xi < 1:
            raise ValueError(f"decay rate xi must be >= 1, got {self.xi}")
        if not 1 <= self.d <= self.m:
            raise ValueError(f"need 1 <= d <= m, got d={self.d}")
        if not 1 <= self.p <= self.n:
            raise ValueError(f"need 1 <= p <= n, got p={self.p}")
        if self.mu < 0:
            raise ValueError(f"mu must be nonnegative, got {self.mu}")


def singular_values(n, xi):
    """``xi ** (1 - i)`` for ``i = 1..n``."""
    return xi ** -np.arange(n, dtype=float)


def raw_matrix(spec):
    """``U diag(sigma) V^T`` before preprocessing.

    ``U`` (n x n) and ``V`` (m x n) orthonormalize matrices with entries drawn
    uniformly from ``[-1, 1]``; both come from one generator seeded with
    ``spec.seed``, ``U`` first.
    """
    rng = np.random.default_rng(spec.seed)
    U = orthonormalize(rng.uniform(-1.0, 1.0, size=(spec.n, spec.n)))
    V = orthonormalize(rng.uniform(-1.0, 1.0, size=(spec.m, spec.n)))
    return (U * singular_values(spec.n, spec.xi)) @ V.T


def generate(spec):
    """Build the preprocessed, column-sharded problem described by ``spec``."""
    A = preprocess(raw_matrix(spec))
    return SpcaProblem(split_columns(A, spec.d), p=spec.p, mu=spec.mu)


def reshard(prob, d):
    """Same assembled data split over ``d`` agents."""
    return SpcaProblem(split_columns(prob.assembled(), d), p=prob.p, mu=prob.mu)
