"""Primitives on the Stiefel manifold St(n, p) and the l1 proximal map.

Points and tangent vectors are plain ``(n, p)`` float arrays; the helpers
below check shapes and orthonormality where a caller needs a guarantee.
"""
import numpy as np

EPS = np.finfo(float).eps

# orthonormality slack per sqrt(p); skew-symmetry slack relative to ||D||_F
ORTHO_TOL = 1e-12
TANGENT_TOL = 1e-10
# a pre-retraction matrix is treated as rank deficient below this
# relative singular value, scaled by n
RANK_RTOL = 100 * EPS


class ShapeError(ValueError):
    """Raised when matrix dimensions do not agree."""


class SingularInputError(np.linalg.LinAlgError):
    """Raised when a matrix to be retracted lacks full column rank."""


def _as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def check_same_shape(a, b, names=("first", "second")):
    if a.shape != b.shape:
        raise ShapeError(
            f"{names[0]} has shape {a.shape} but {names[1]} has shape {b.shape}")


def orthonormality_error(Z):
    """Return ``||Z^T Z - I||_F``."""
    Z = _as_matrix(Z)
    return float(np.linalg.norm(Z.T @ Z - np.eye(Z.shape[1])))


def is_stiefel(Z, tol=ORTHO_TOL):
    Z = _as_matrix(Z)
    n, p = Z.shape
    return p <= n and orthonormality_error(Z) <= tol * np.sqrt(p)


def is_tangent(Z, D, tol=TANGENT_TOL):
    ZtD = Z.T @ D
    return np.linalg.norm(ZtD + ZtD.T) <= tol * max(np.linalg.norm(D), 1.0)


def sym(M):
    return 0.5 * (M + M.T)


def tangent_project(Z, Y):
    """Orthogonal projection of ``Y`` onto the tangent space at ``Z``.

    Computes ``(I - Z Z^T) Y + Z (Z^T Y - Y^T Z) / 2`` with thin products only.
    """
    Z = _as_matrix(Z, "Z")
    Y = _as_matrix(Y, "Y")
    check_same_shape(Z, Y, ("Z", "Y"))
    ZtY = Z.T @ Y
    return Y - Z @ sym(ZtY)


def polar_retract(C):
    """Nearest point on the Stiefel manifold to ``C`` in Frobenius norm.

    Parameters
    ----------
    C : ndarray, shape (n, p)
        Matrix of full column rank.

    Returns
    -------
    Q : ndarray, shape (n, p)
        ``U V^T`` from the economy SVD ``C = U S V^T``.

    Raises
    ------
    SingularInputError
        If the smallest singular value of ``C`` is negligible.
    """
    C = _as_matrix(C, "C")
    n, p = C.shape
    if p > n:
        raise ShapeError(f"cannot retract a {n}x{p} matrix with p > n")
    if not np.all(np.isfinite(C)):
        raise SingularInputError("matrix to retract has non-finite entries")
    U, s, Vt = np.linalg.svd(C, full_matrices=False)
    if s[0] == 0.0 or s[-1] <= RANK_RTOL * max(n, 1) * s[0]:
        smax = s[0] if s.size else 0.0
        raise SingularInputError(
            f"matrix to retract is rank deficient (sigma_min={s[-1]:.3e}, "
            f"sigma_max={smax:.3e})")
    return U @ Vt


def soft_threshold(X, t):
    """Entrywise shrinkage ``sign(x) * max(|x| - t, 0)``."""
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    X = np.asarray(X, dtype=float)
    if t == 0:
        return X.copy()
    return np.sign(X) * np.maximum(np.abs(X) - t, 0.0)


def projection_distance(X, Z):
    """``||X X^T - Z Z^T||_F`` for orthonormal ``X`` and ``Z``.

    Uses ``||X X^T - Z Z^T||_F^2 = 2 ||X - Z Z^T X||_F^2`` (equal to
    ``2p - 2 ||X^T Z||_F^2``, but free of cancellation near zero), so no
    ``n x n`` matrix is formed.
    """
    X = _as_matrix(X, "X")
    Z = _as_matrix(Z, "Z")
    check_same_shape(X, Z, ("X", "Z"))
    return float(np.sqrt(projection_distance_sq(X, Z)))


def projection_distance_sq(X, Z):
    R = X - Z @ (Z.T @ X)
    return 2.0 * float(np.sum(R * R))


def fix_column_signs(Q):
    """Flip columns so that each column's largest-magnitude entry is positive."""
    Q = np.array(Q, dtype=float, copy=True)
    idx = np.argmax(np.abs(Q), axis=0)
    signs = np.sign(Q[idx, np.arange(Q.shape[1])])
    signs[signs == 0] = 1.0
    return Q * signs


def orthonormalize(M):
    """Orthonormal basis of the column span of ``M`` via Householder QR."""
    M = _as_matrix(M)
    Q, _ = np.linalg.qr(M, mode="reduced")
    return fix_column_signs(Q)


def random_stiefel(n, p, seed=None):
    """Random point on St(n, p).

    Entries of an ``n x p`` matrix are drawn uniformly from ``[-1, 1]`` and
    the result is orthonormalized. ``seed`` may be an int or a
    ``numpy.random.Generator``.
    """
    if p > n:
        raise ValueError(f"need p <= n, got n={n}, p={p}")
    if p < 1:
        raise ValueError(f"need p >= 1, got p={p}")
    rng = np.random.default_rng(seed)
    return orthonormalize(rng.uniform(-1.0, 1.0, size=(n, p)))
