"""Convergence envelopes for the solver family, and their comparison.

Every bound is reported as a per-index envelope on the squared error
||x - x*||^2, together with the scalars that produced it.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_triangular

from .errors import RankDeficient
from .linalg import (cholesky, log_det_gram, orthogonal_complement,
                     principal_angles, scaled_condition_number, svd)
from .samplers import check_partition


def _fmt(v):
    return format(float(v), ".17g")


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_json_safe(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


@dataclass
class BoundReport:
    """A labeled envelope sequence plus the inputs that produced it."""

    kind: str
    envelope: np.ndarray
    inputs: dict = field(default_factory=dict)

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("t,envelope,kind\n")
            for t, v in enumerate(self.envelope):
                fh.write(f"{t},{_fmt(v)},{self.kind}\n")

    def to_json(self):
        return {"kind": self.kind,
                "envelope": [float(v) for v in self.envelope],
                "inputs": _json_safe(self.inputs)}


def strohmer_bound(a, z0_sq, p_max):
    """Expected squared-error envelope (1 - kappa^-2)^p z0_sq for
    norm-proportional random row selection, where kappa is the scaled
    condition number ||a||_F / sigma_min."""
    if z0_sq < 0:
        raise ValueError("z0_sq must be >= 0")
    if p_max < 0:
        raise ValueError("p_max must be >= 0")
    kappa = scaled_condition_number(a)
    rate = 1.0 - 1.0 / kappa ** 2
    env = z0_sq * rate ** np.arange(p_max + 1, dtype=float)
    return BoundReport("strohmer", env,
                       {"kappa_scaled": kappa, "rate": rate, "z0_sq": z0_sq})


def galantai_bound(a, partition, z0_sq, q_max):
    """Determinant envelope (1 - det(x^T x))^q z0_sq for the cyclic block sweep.

    x stacks a_i^T l_i^{-T} per block, l_i being the Cholesky factor of
    a_i a_i^T, so each group of columns is an orthonormal basis of its block's
    row span.  Requires a square full-rank matrix.  With singleton blocks and
    unit rows, det(x^T x) reduces to det(a a^T).
    """
    a = np.asarray(a, dtype=float)
    m, n = a.shape
    if m != n:
        raise ValueError("matrix must be square")
    if z0_sq < 0 or q_max < 0:
        raise ValueError("z0_sq and q_max must be >= 0")
    blocks = check_partition(partition, m)
    cols = []
    for blk in blocks:
        ab = a[blk]
        low = cholesky(ab @ ab.T)
        cols.append(solve_triangular(low, ab, lower=True).T)
    x = np.hstack(cols)
    logdet = log_det_gram(x)  # RankDeficient when a is rank deficient
    det = math.exp(min(logdet, 0.0))
    vacuous = False
    if det < 1e-300:
        det = 0.0
        vacuous = True
        warnings.warn("Gram determinant underflowed; the envelope is vacuous",
                      RuntimeWarning, stacklevel=2)
    env = z0_sq * (1.0 - det) ** np.arange(q_max + 1, dtype=float)
    return BoundReport("galantai", env,
                       {"det_gram": det, "log_det_gram": logdet,
                        "z0_sq": z0_sq, "vacuous": vacuous})


def _subspace_angle(c, d):
    """Angle between two subspaces, taken outside any directions they share.

    Directions common to both subspaces say nothing about the sweep's
    contraction, so the angle is the smallest principal angle after removing
    the intersection: pi/2 when either subspace is trivial, 0 when one
    contains the other (a vacuous envelope).
    """
    dim_c, dim_d = c.shape[1], d.shape[1]
    if dim_c == 0 or dim_d == 0:
        return math.pi / 2.0
    angles = principal_angles(c, d)
    both = np.hstack([c, d])
    s = np.linalg.svd(both, compute_uv=False)
    tol_rank = s[0] * max(both.shape) * 1e-14 if s[0] > 0 else 0.0
    inter_dim = dim_c + dim_d - int(np.count_nonzero(s > tol_rank))
    if inter_dim >= min(dim_c, dim_d):
        return 0.0
    return float(angles[inter_dim])


def ssw_bound(partition_bases, z0_sq, q_max):
    """Angle envelope (1 - prod_j sin^2 theta_j)^q z0_sq for the cyclic sweep.

    partition_bases holds an orthonormal row-space basis per block in sweep
    order.  theta_j is the angle between the orthogonal complement of block
    j's row span and the intersection of the complements of all later blocks;
    the product runs over j = 1 .. k-1.  Zero angles make the envelope
    constant at z0_sq: vacuous but still valid.
    """
    bases = [np.asarray(u, dtype=float) for u in partition_bases]
    if not bases:
        raise ValueError("need at least one block basis")
    if z0_sq < 0 or q_max < 0:
        raise ValueError("z0_sq and q_max must be >= 0")
    n = bases[0].shape[0]
    if any(u.ndim != 2 or u.shape[0] != n for u in bases):
        raise ValueError("bases must share the ambient dimension")
    thetas = []
    for j in range(len(bases) - 1):
        comp_j = orthogonal_complement(bases[j].T)
        stacked = np.vstack([u.T for u in bases[j + 1:]])
        inter = orthogonal_complement(stacked)
        thetas.append(_subspace_angle(comp_j, inter))
    prod = 1.0
    for th in thetas:
        prod *= math.sin(th) ** 2
    factor = 1.0 - prod
    env = z0_sq * factor ** np.arange(q_max + 1, dtype=float)
    return BoundReport("ssw", env,
                       {"thetas": thetas, "sin2_product": prod, "z0_sq": z0_sq})


def rkos_expected_decay(n, p, beta_max):
    """Expected squared-error factor (1 - p/n)^beta after beta uniform random
    p-row block projections of an isotropic system, with the large-n asymptote
    exp(-beta p / n) reported alongside in the inputs."""
    if not 1 <= p <= n:
        raise ValueError("need 1 <= p <= n")
    if beta_max < 0:
        raise ValueError("beta_max must be >= 0")
    beta = np.arange(beta_max + 1, dtype=float)
    env = (1.0 - p / n) ** beta
    asym = np.exp(-beta * p / n)
    return BoundReport("rkos_expected", env,
                       {"p": p, "n": n, "asymptote": asym.tolist()})


class WelchBound(NamedTuple):
    ratio: float  # (m - n) / (n (m - 1))
    root: float   # sqrt of the ratio: the classical coherence floor


def welch_bound(m, n):
    """Coherence floor for m >= 2 unit rows in R^n, in both conventions.

    ratio is the raw quotient (m - n) / (n (m - 1)); root is its square root,
    the standard lower bound on max_{i != j} |<a_i, a_j>| for m > n.  Both are
    returned, clearly labeled, because published tables quote either form.
    """
    if m < 2 or n < 1:
        raise ValueError("need m >= 2 and n >= 1")
    ratio = (m - n) / (n * (m - 1))
    root = math.sqrt(ratio) if ratio > 0 else 0.0
    return WelchBound(ratio=float(ratio), root=float(root))


@dataclass
class BoundComparison:
    """Per-cycle comparison of the expected-decay envelope under norm sampling
    with the determinant envelope of the cyclic sweep."""

    q: np.ndarray
    random_envelope: np.ndarray   # (1 - sigma_min^2 / sum sigma_i^2)^(q m)
    cyclic_envelope: np.ndarray   # (1 - prod sigma_i^2)^q
    tighter: list                 # per-q: "random" | "cyclic" | "tie"
    sigma: np.ndarray
    det_gram: float

    def to_json(self):
        return {"q": self.q.tolist(),
                "random_envelope": [float(v) for v in self.random_envelope],
                "cyclic_envelope": [float(v) for v in self.cyclic_envelope],
                "tighter": list(self.tighter),
                "sigma": [float(v) for v in self.sigma],
                "det_gram": float(self.det_gram)}


def compare_bounds(a, q_max):
    """Compare the two per-cycle envelopes on a square full-rank matrix with
    unit rows: the norm-sampling expected decay raised to the q m steps of a
    cycle, against the cyclic determinant envelope.

    Verifies internally that prod(sigma_i^2) equals det(a a^T) in log space.
    """
    a = np.asarray(a, dtype=float)
    m, n = a.shape
    if m != n:
        raise ValueError("matrix must be square")
    if q_max < 0:
        raise ValueError("q_max must be >= 0")
    norms = np.linalg.norm(a, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-6):
        raise ValueError("rows must have unit norm")
    f = svd(a)
    if f.rank < n:
        raise RankDeficient("matrix must have full rank")
    sum_sq = float((f.s ** 2).sum())
    log_prod = float(2.0 * np.log(f.s).sum())
    log_gram = log_det_gram(a)
    if abs(log_prod - log_gram) > 1e-8:
        raise ArithmeticError(
            "singular-value product and Gram determinant disagree")
    det = math.exp(min(log_prod, 0.0))
    rate_step = 1.0 - float(f.s[-1] ** 2) / sum_sq
    q = np.arange(q_max + 1, dtype=float)
    rand_env = rate_step ** (q * m)
    cyc_env = (1.0 - det) ** q
    tighter = []
    for rv, cv in zip(rand_env, cyc_env):
        if math.isclose(rv, cv, rel_tol=1e-12, abs_tol=1e-300):
            tighter.append("tie")
        else:
            tighter.append("random" if rv < cv else "cyclic")
    return BoundComparison(q=np.arange(q_max + 1), random_envelope=rand_env,
                           cyclic_envelope=cyc_env, tighter=tighter,
                           sigma=f.s.copy(), det_gram=det)
