"""Uzawa iteration for the tangent-space proximal subproblem

    min_D  <G, D> + ||D||_F^2 / (2 eta) + mu ||Z + D||_1
    s.t.   D^T Z + Z^T D = 0.

DSSAL1 passes ``G = Q Z`` (the aggregated masked product) and ManPG passes
``G = -A A^T Z``; the solver does not care which.
"""
from dataclasses import dataclass
import math
from typing import NamedTuple

import numpy as np

from .problem import min_norm_subgradient
from .stiefel import soft_threshold, sym, tangent_project

# production defaults
MAX_INNER = 10
# diagnostic mode: run to this feasibility
DIAG_FEAS_TOL = 1e-10
DIAG_MAX_INNER = 200000


class SubproblemDivergence(FloatingPointError):
    pass


@dataclass(frozen=True)
class SubproblemInput:
    Z: np.ndarray
    G: np.ndarray
    eta: float
    mu: float

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if self.mu < 0:
            raise ValueError(f"mu must be nonnegative, got {self.mu}")
        if self.Z.shape != self.G.shape:
            raise ValueError(f"Z has shape {self.Z.shape} but G has shape {self.G.shape}")
        if not np.all(np.isfinite(self.G)):
            raise ValueError("G has non-finite entries")


@dataclass(frozen=True)
class SubproblemStop:
    """Stopping rule for :func:`solve_subproblem`.

    In production mode the loop ends once the feasibility violation
    ``||D^T Z + Z^T D||_F`` is at most ``prev_step_norm`` (the outer step
    norm of the previous outer iteration) or after ``max_iter`` sweeps.
    ``diagnostic=True`` ignores both and runs until the violation and the
    change in ``D`` fall below ``feas_tol``.
    """

    prev_step_norm: float = math.inf
    max_iter: int = MAX_INNER
    diagnostic: bool = False
    feas_tol: float = DIAG_FEAS_TOL

    @classmethod
    def diagnostic_mode(cls, feas_tol=DIAG_FEAS_TOL, max_iter=DIAG_MAX_INNER):
        return cls(prev_step_norm=0.0, max_iter=max_iter, diagnostic=True, feas_tol=feas_tol)


class UzawaResult(NamedTuple):
    D: np.ndarray
    iterations: int
    upsilon: np.ndarray


def uzawa_primal(upsilon, inp):
    """Closed-form minimizer of the subproblem Lagrangian for fixed ``upsilon``."""
    Z = inp.Z
    return soft_threshold(Z - inp.eta * (inp.G - Z @ upsilon), inp.eta * inp.mu) - Z


def uzawa_dual(upsilon, D, Z, tau):
    """Dual ascent on the tangency constraint."""
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    ZtD = Z.T @ D
    return sym(upsilon - tau * (ZtD + ZtD.T))


def feasibility(D, Z):
    ZtD = Z.T @ D
    return float(np.linalg.norm(ZtD + ZtD.T))


def solve_subproblem(inp, stop=SubproblemStop(), upsilon0=None, tau=None):
    """Run the Uzawa method on one subproblem.

    Parameters
    ----------
    inp : SubproblemInput
    stop : SubproblemStop
    upsilon0 : ndarray, shape (p, p), optional
        Initial multiplier; zero if omitted.
    tau : float, optional
        Dual step; defaults to ``1 / (2 eta)``.

    Returns
    -------
    UzawaResult
        Final ``D``, number of inner iterations and final multiplier.
    """
    p = inp.Z.shape[1]
    if tau is None:
        tau = 1.0 / (2.0 * inp.eta)
    upsilon = np.zeros((p, p)) if upsilon0 is None else sym(np.asarray(upsilon0, dtype=float))
    D = None
    j = 0
    while j < stop.max_iter:
        # overflow is detected below and reported as a divergence
        with np.errstate(over="ignore", invalid="ignore"):
            D_new = uzawa_primal(upsilon, inp)
            upsilon = uzawa_dual(upsilon, D_new, inp.Z, tau)
        j += 1
        if not (np.all(np.isfinite(D_new)) and np.all(np.isfinite(upsilon))):
            raise SubproblemDivergence(
                f"Uzawa iterate became non-finite at inner step {j} (tau={tau:g}, eta={inp.eta:g})")
        feas = feasibility(D_new, inp.Z)
        if stop.diagnostic:
            change = math.inf if D is None else float(np.linalg.norm(D_new - D))
            D = D_new
            if feas <= stop.feas_tol and change <= stop.feas_tol:
                break
        else:
            D = D_new
            if feas <= stop.prev_step_norm:
                break
    return UzawaResult(D, j, upsilon)


def subproblem_value(inp, D):
    """``<G, D> + ||D||^2/(2 eta) + mu ||Z + D||_1``."""
    return (float(np.sum(inp.G * D)) + float(np.sum(D * D)) / (2.0 * inp.eta)
            + inp.mu * float(np.sum(np.abs(inp.Z + D))))


def kkt_residual(inp, D):
    """Distance from 0 to ``P_T(G + D/eta + mu * d||Z + D||_1)``, ``T`` tangent at ``Z``.

    Zero entries of ``Z + D`` get the subgradient element minimizing the
    residual.
    """
    base = inp.G + D / inp.eta
    R = min_norm_subgradient(inp.Z + D, base, inp.mu, tangent_at=inp.Z, iters=5000)
    return float(np.linalg.norm(tangent_project(inp.Z, base + R)))
