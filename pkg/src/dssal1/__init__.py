"""Distributed sparse PCA on the Stiefel manifold with privacy-preserving shares.

The package simulates a network of agents that jointly solve
``min -1/2 tr(Z^T A A^T Z) + mu ||Z||_1`` over orthonormal ``Z`` while
only ever exchanging masked ``n x p`` products, and compares the resulting
method with a distributed ManPG baseline.
"""
from .datagen import GenSpec, generate
from .dssal1 import DriverConfig, RunResult, run
from .manpg import ManpgConfig, manpg_run, riemannian_subgradient_warmstart
from .network import Network
from .problem import DataShard, SpcaProblem

__version__ = "0.1.0"

__all__ = ["GenSpec", "generate", "DriverConfig", "RunResult", "run", "ManpgConfig",
           "manpg_run", "riemannian_subgradient_warmstart", "Network", "DataShard",
           "SpcaProblem"]
