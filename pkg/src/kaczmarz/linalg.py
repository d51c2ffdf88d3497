"""Dense linear-algebra kernels shared by the solver, bound and analysis code.

Vectors are 1-D numpy arrays, matrices 2-D, and orthonormal bases (n, p)
arrays with orthonormal columns.  Functions are pure and never mutate their
inputs.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateBlock, NotPositiveDefinite, RankDeficient

# Relative tolerance below which a row counts as linearly dependent on the
# rows already orthonormalized.
MGS_TOL = 1e-10


class QrFactors(NamedTuple):
    q: np.ndarray
    r: np.ndarray


@dataclass
class SvdFactors:
    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray
    rank: int


def _as_matrix(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2 or a.size == 0:
        raise ValueError("expected a non-empty 2-D array")
    if not np.isfinite(a).all():
        raise ValueError("entries must be finite")
    return a


def _mgs_qr(rows, tol=MGS_TOL):
    """Modified Gram-Schmidt with one reorthogonalization pass.

    Returns (u, r) with u an (n, p) orthonormal-column basis and r (p, p)
    upper triangular such that rows.T == u @ r.  Raises DegenerateBlock when
    a row's residual after projection falls under tol times its norm.
    """
    a = _as_matrix(rows)
    p, n = a.shape
    u = np.zeros((n, p))
    r = np.zeros((p, p))
    for l in range(p):
        v = a[l].copy()
        orig = np.linalg.norm(v)
        if orig == 0.0:
            raise DegenerateBlock(f"row {l} is zero")
        for _ in range(2):  # second pass reorthogonalizes
            for k in range(l):
                c = float(u[:, k] @ v)
                r[k, l] += c
                v -= c * u[:, k]
        nrm = np.linalg.norm(v)
        if nrm < tol * orig:
            raise DegenerateBlock(f"row {l} is linearly dependent on its predecessors")
        r[l, l] = nrm
        u[:, l] = v / nrm
    return u, r


def mgs_orthonormalize(rows, tol=MGS_TOL):
    """Orthonormalize a sequence of row vectors.

    Returns an (n, p) array whose columns form an orthonormal basis of the
    row span, in order of appearance.
    """
    return _mgs_qr(rows, tol)[0]


def householder_qr(m, tol=MGS_TOL):
    """Thin QR factorization with R's diagonal forced positive.

    m must have full column rank; a pivot under tol times the column norm
    raises DegenerateBlock.
    """
    a = _as_matrix(m)
    n, p = a.shape
    if n < p:
        raise DegenerateBlock("more columns than rows cannot have full column rank")
    q, r = np.linalg.qr(a)
    sign = np.sign(np.diag(r))
    sign[sign == 0] = 1.0
    q = q * sign
    r = sign[:, None] * r
    col_norms = np.linalg.norm(a, axis=0)
    bad = np.abs(np.diag(r)) < tol * np.where(col_norms > 0, col_norms, 1.0)
    if bad.any():
        raise DegenerateBlock(f"columns {np.flatnonzero(bad).tolist()} are numerically dependent")
    return QrFactors(q=q, r=r)


def cholesky(spd):
    """Lower Cholesky factor of a symmetric positive definite matrix."""
    a = _as_matrix(spd)
    if a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(1.0, float(np.abs(a).max()))
    if float(np.abs(a - a.T).max()) > 1e-12 * scale:
        raise ValueError("matrix must be symmetric")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("matrix has a nonpositive pivot") from None


def svd(m):
    """Thin SVD with singular values sorted descending.

    The numeric rank counts singular values above s[0] * max(shape) * 1e-14.
    """
    a = _as_matrix(m)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    tol_rank = s[0] * max(a.shape) * 1e-14 if s[0] > 0 else 0.0
    rank = int(np.count_nonzero(s > tol_rank))
    return SvdFactors(u=u, s=s, vt=vt, rank=rank)


def pseudo_inverse(m):
    """Moore-Penrose pseudo-inverse, zeroing singular values under the rank tolerance."""
    f = svd(m)
    inv = np.zeros_like(f.s)
    inv[: f.rank] = 1.0 / f.s[: f.rank]
    return (f.vt.T * inv) @ f.u.T


def scaled_condition_number(a):
    """Frobenius norm of a times the spectral norm of its pseudo-inverse.

    Equals ||a||_F / sigma_min; requires full column rank.
    """
    a = _as_matrix(a)
    n = a.shape[1]
    f = svd(a)
    if a.shape[0] < n or f.rank < n:
        raise RankDeficient("matrix must have full column rank")
    return float(np.linalg.norm(a, "fro") / f.s[n - 1])


def principal_angles(u1, u2):
    """Principal angles (radians, ascending) between two subspaces.

    u1 and u2 are orthonormal-column bases sharing an ambient dimension;
    returns min(p1, p2) angles in [0, pi/2].
    """
    b1 = np.asarray(u1, dtype=float)
    b2 = np.asarray(u2, dtype=float)
    if b1.ndim != 2 or b2.ndim != 2 or b1.shape[0] != b2.shape[0]:
        raise ValueError("bases must be 2-D with equal ambient dimension")
    if b1.shape[1] == 0 or b2.shape[1] == 0:
        return np.zeros(0)
    sig = np.linalg.svd(b1.T @ b2, compute_uv=False)
    return np.arccos(np.clip(sig, 0.0, 1.0))


def orthogonal_complement(stacked):
    """Orthonormal basis of the orthogonal complement of a row span.

    stacked is (r, n); returns an (n, n - rank) orthonormal-column array,
    possibly with zero columns when the rows span the whole space.
    """
    a = _as_matrix(stacked)
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    tol_rank = s[0] * max(a.shape) * 1e-14 if s.size and s[0] > 0 else 0.0
    rank = int(np.count_nonzero(s > tol_rank))
    return vt[rank:].T.copy()


def log_det_gram(x, tol=MGS_TOL):
    """ln det(x^T x) for a full-column-rank x, accumulated in log space via QR."""
    a = _as_matrix(x)
    if a.shape[0] < a.shape[1]:
        raise RankDeficient("more columns than rows")
    r = np.linalg.qr(a, mode="r")
    diag = np.abs(np.diag(r))
    col_norms = np.linalg.norm(a, axis=0)
    if np.any(diag < tol * np.where(col_norms > 0, col_norms, 1.0)):
        raise RankDeficient("columns are numerically dependent")
    return float(2.0 * np.log(diag).sum())
