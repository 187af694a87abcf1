"""Singular values and the singular value function for small matrices.

The 2x2 case is solved in closed form; it is the only dimension where the
lower singular value function and the parallel-direction test are defined.
"""
from dataclasses import dataclass
import math

import numpy as np

from .errors import AlphaOutOfRange, DimensionUnsupported, NegativeAlpha, SingularMatrix

SINGULAR_TOL = 1e-14
ORTHO_TOL = 1e-10
PARALLEL_ANGLE = 1e-9


@dataclass(frozen=True)
class SingularData:
    """Singular values (nonincreasing), right singular vectors ``v`` and
    their images ``w = T v`` (rows)."""

    sigma: np.ndarray
    v: np.ndarray
    w: np.ndarray


def as_matrix(T) -> np.ndarray:
    A = np.atleast_2d(np.asarray(T, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    return A


def _check_det(A):
    if abs(np.linalg.det(A)) <= SINGULAR_TOL:
        raise SingularMatrix(f"|det| <= {SINGULAR_TOL}: {A.tolist()}")


def singular_values_2x2(T):
    """Closed-form singular values of a batch of 2x2 matrices.

    Returns an array of shape ``(..., 2)`` with ``sigma1 >= sigma2``.
    The smaller value is recovered as ``|det| / sigma1`` which keeps full
    relative accuracy even for badly conditioned matrices.
    """
    T = np.asarray(T, dtype=float)
    a, b = T[..., 0, 0], T[..., 0, 1]
    c, d = T[..., 1, 0], T[..., 1, 1]
    p = a * a + c * c
    s = b * b + d * d
    q = a * b + c * d
    h = np.hypot(0.5 * (p - s), q)
    lam1 = 0.5 * (p + s) + h
    s1 = np.sqrt(lam1)
    det = np.abs(a * d - b * c)
    with np.errstate(divide="ignore", invalid="ignore"):
        s2 = np.where(s1 > 0, det / s1, 0.0)
    return np.stack([s1, s2], axis=-1)


def batch_singular_values(T) -> np.ndarray:
    """Singular values for an array of square matrices of shape (n, D, D)."""
    T = np.asarray(T, dtype=float)
    D = T.shape[-1]
    if D == 1:
        return np.abs(T[..., 0, :])
    if D == 2:
        return singular_values_2x2(T)
    return np.linalg.svd(T, compute_uv=False)


def singular_values(T) -> SingularData:
    A = as_matrix(T)
    _check_det(A)
    D = A.shape[0]
    if D == 1:
        sigma = np.abs(A[0])
        v = np.ones((1, 1))
    elif D == 2:
        p = A[0, 0] ** 2 + A[1, 0] ** 2
        s = A[0, 1] ** 2 + A[1, 1] ** 2
        q = A[0, 0] * A[0, 1] + A[1, 0] * A[1, 1]
        h = math.hypot(0.5 * (p - s), q)
        sigma = singular_values_2x2(A)
        if h <= 1e-15 * (p + s):
            # tie: any orthonormal pair works
            v1 = np.array([1.0, 0.0])
        elif p >= s:
            v1 = np.array([h + 0.5 * (p - s), q])
        else:
            v1 = np.array([q, h + 0.5 * (s - p)])
        v1 = v1 / np.hypot(*v1)
        v = np.array([v1, [-v1[1], v1[0]]])
    else:
        _, sigma, vt = np.linalg.svd(A)
        v = vt
    w = v @ A.T
    return SingularData(sigma=np.asarray(sigma, dtype=float), v=v, w=w)


def log_phi_from_sigma(log_sigma, alpha):
    """Log of the singular value function from log singular values.

    ``log_sigma`` has shape (..., D) sorted nonincreasing along the last axis.
    """
    if alpha < 0:
        raise NegativeAlpha(f"alpha must be >= 0, got {alpha}")
    log_sigma = np.asarray(log_sigma, dtype=float)
    D = log_sigma.shape[-1]
    k = min(int(math.floor(alpha)), D - 1)
    head = log_sigma[..., :k].sum(axis=-1)
    frac = alpha - k
    if frac == 0.0:
        return head
    return head + frac * log_sigma[..., k]


def log_phi_lower_from_sigma(log_sigma, alpha):
    log_sigma = np.asarray(log_sigma, dtype=float)
    if log_sigma.shape[-1] != 2:
        raise DimensionUnsupported("the lower singular value function needs D = 2")
    if not 0.0 <= alpha <= 2.0:
        raise AlphaOutOfRange(f"alpha must lie in [0, 2], got {alpha}")
    l1, l2 = log_sigma[..., 0], log_sigma[..., 1]
    if alpha <= 1.0:
        return alpha * l2
    return l2 + (alpha - 1.0) * l1


def phi(T, alpha: float) -> float:
    """Singular value function of ``T`` at ``alpha``, evaluated in log space."""
    if alpha < 0:
        raise NegativeAlpha(f"alpha must be >= 0, got {alpha}")
    sd = singular_values(T)
    return float(np.exp(log_phi_from_sigma(np.log(sd.sigma), alpha)))


def phi_lower(T, alpha: float) -> float:
    A = as_matrix(T)
    if A.shape[0] != 2:
        raise DimensionUnsupported("phi_lower is defined for D = 2 only")
    if not 0.0 <= alpha <= 2.0:
        raise AlphaOutOfRange(f"alpha must lie in [0, 2], got {alpha}")
    sd = singular_values(A)
    return float(np.exp(log_phi_lower_from_sigma(np.log(sd.sigma), alpha)))


def _is_parallel(x, y, tol=PARALLEL_ANGLE):
    nx, ny = math.hypot(*x), math.hypot(*y)
    cross = abs(x[0] * y[1] - x[1] * y[0])
    return cross <= tol * nx * ny


def check_parallel_family(maps):
    """Find a unit vector ``v`` with every ``T(v)`` pairwise parallel.

    Candidates are the real eigenvector directions of ``T1^-1 Ti`` for the
    first ``Ti`` that is not a multiple of the identity. Returns None when no
    candidate passes within an angle of 1e-9.
    """
    mats = [as_matrix(T) for T in maps]
    if not mats:
        raise ValueError("empty map family")
    for A in mats:
        if A.shape[0] != 2:
            raise DimensionUnsupported("check_parallel_family needs D = 2")
        _check_det(A)
    e1 = np.array([1.0, 0.0])
    inv0 = np.linalg.inv(mats[0])
    candidates = None
    for A in mats[1:]:
        B = inv0 @ A
        scale = np.abs(B).max()
        if abs(B[0, 1]) <= 1e-12 * scale and abs(B[1, 0]) <= 1e-12 * scale \
                and abs(B[0, 0] - B[1, 1]) <= 1e-12 * scale:
            continue
        tr, det = B[0, 0] + B[1, 1], np.linalg.det(B)
        disc = tr * tr - 4 * det
        if disc < -1e-14 * scale * scale:
            return None
        root = math.sqrt(max(disc, 0.0))
        candidates = []
        for lam in {0.5 * (tr + root), 0.5 * (tr - root)}:
            # eigenvector from the better-conditioned row of B - lam I
            r0 = np.array([B[0, 0] - lam, B[0, 1]])
            r1 = np.array([B[1, 0], B[1, 1] - lam])
            row = r0 if np.hypot(*r0) >= np.hypot(*r1) else r1
            if np.hypot(*row) == 0:
                vec = e1
            else:
                vec = np.array([-row[1], row[0]])
            candidates.append(vec / np.hypot(*vec))
        break
    if candidates is None:
        return e1
    for v in candidates:
        images = [A @ v for A in mats]
        if all(_is_parallel(images[0], y) for y in images[1:]):
            return v
    return None
