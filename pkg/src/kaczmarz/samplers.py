"""Row-selection policies and randomness plumbing for the solvers."""

import numpy as np

from .errors import AllParallel, DegenerateWeights, ZeroRow

# Precompute the normalized Gramian for angle-based selection up to this many
# rows; beyond it, single cosine rows are formed on the fly.
GRAM_LIMIT = 4096


def as_rng(rng):
    """Coerce None, an integer seed, or a Generator into a numpy Generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def split_seed(master_seed, *key):
    """Child generator derived by hashing (master_seed, *key).

    Distinct keys give statistically independent streams; the same key always
    reproduces the same stream.
    """
    parts = [int(master_seed)] + [int(k) for k in key]
    return np.random.default_rng(np.random.SeedSequence(parts))


def cyclic_next(j, m):
    """Row index after j completed steps of the cyclic sweep: j mod m."""
    if m < 1:
        raise ValueError("m must be positive")
    return int(j) % int(m)


def row_norm_weights(a):
    """Squared row norms, the classic norm-proportional sampling weights."""
    a = np.asarray(a, dtype=float)
    w = np.einsum("ij,ij->i", a, a)
    if np.any(w == 0):
        raise ZeroRow("zero rows cannot be sampled by norm")
    return w


def normalized_gram(a, limit=GRAM_LIMIT):
    """Normalized-row Gramian when m is small enough to store, else None."""
    a = np.asarray(a, dtype=float)
    if a.shape[0] > limit:
        return None
    norms = np.linalg.norm(a, axis=1)
    if np.any(norms == 0):
        raise ZeroRow("zero rows have no direction")
    ah = a / norms[:, None]
    return ah @ ah.T


def angle_weights(a, f, gram=None):
    """Weight sin^2(theta_i) for the angle each row makes with row f.

    gram may carry the precomputed normalized-row Gramian.  Row f and rows
    parallel to it get weight 0; raises AllParallel if no weight survives.
    Invariant under rescaling of any row.
    """
    a = np.asarray(a, dtype=float)
    m = a.shape[0]
    if not 0 <= f < m:
        raise ValueError("row index out of range")
    if gram is not None:
        cos = np.asarray(gram[f], dtype=float)
    else:
        norms = np.linalg.norm(a, axis=1)
        if np.any(norms == 0):
            raise ZeroRow("zero rows have no direction")
        cos = (a @ (a[f] / norms[f])) / norms
    w = 1.0 - np.clip(cos, -1.0, 1.0) ** 2
    np.clip(w, 0.0, 1.0, out=w)
    w[f] = 0.0
    if np.all(w <= 1e-15):
        raise AllParallel("every row is parallel to the current row")
    return w


def sample_weighted(weights, rng):
    """Draw an index with probability proportional to the given weights.

    Implemented by binary search on the cumulative sums.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty 1-D array")
    if not np.isfinite(w).all() or np.any(w < 0):
        raise DegenerateWeights("weights must be finite and non-negative")
    cum = np.cumsum(w)
    total = cum[-1]
    if not total > 0:
        raise DegenerateWeights("weights sum to zero")
    u = as_rng(rng).random() * total
    return min(int(np.searchsorted(cum, u, side="right")), w.size - 1)


def random_partition(m, p, rng):
    """Random disjoint blocks of size p covering range(m); the final block may
    be shorter when p does not divide m."""
    if not 1 <= p <= m:
        raise ValueError("need 1 <= p <= m")
    perm = as_rng(rng).permutation(m)
    return [perm[i:i + p] for i in range(0, m, p)]


def check_partition(partition, m):
    """Validate a list of index blocks: disjoint, non-empty, covering range(m)."""
    blocks = [np.asarray(blk, dtype=int) for blk in partition]
    if not blocks or any(blk.size == 0 for blk in blocks):
        raise ValueError("partition must consist of non-empty blocks")
    flat = np.concatenate(blocks)
    if not np.array_equal(np.sort(flat), np.arange(m)):
        raise ValueError("blocks must be disjoint and cover every row exactly once")
    return blocks
