"""Kaczmarz-family solvers: single-row sweeps under pluggable selection
policies, an angle-driven paired variant, deterministic block sweeps, and a
randomized orthonormalized multi-row variant.  Every driver returns the final
iterate together with a step trace.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegenerateBlock, NotPositiveDefinite, ZeroRow
from .linalg import MGS_TOL, _mgs_qr, cholesky, householder_qr, pseudo_inverse, svd
from .samplers import (angle_weights, as_rng, check_partition, cyclic_next,
                       normalized_gram, random_partition, row_norm_weights,
                       sample_weighted)


def _fmt(v):
    return format(float(v), ".17g")


@dataclass
class StopRule:
    """Stopping control: a row-step budget plus relative residual and error floors.

    max_steps counts rows touched (a block of p rows spends p steps).  The
    residual test fires when ||a x - b|| <= residual_tol * ||b||, the error
    test when ||x - x*|| <= error_tol * ||x*|| (only if x* is known).
    """

    max_steps: int
    residual_tol: float = 1e-10
    error_tol: float = 0.0

    def __post_init__(self):
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")
        if self.residual_tol < 0 or self.error_tol < 0:
            raise ValueError("tolerances must be >= 0")

    @classmethod
    def default(cls, m):
        return cls(max_steps=10 * m)


@dataclass
class IterationTrace:
    """Per-projection log of a solver run.

    step counts rows touched so far, block_step counts projection events.
    selected holds the row index (or tuple of row indices) applied at each
    event; the initial record uses an empty tuple.  error is ||x - x*|| when
    x* is known, nan otherwise; residual is ||a x - b||.
    """

    policy: str
    seed: int | None = None
    steps: list = field(default_factory=list)
    block_steps: list = field(default_factory=list)
    selected: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    elapsed_ns: list = field(default_factory=list)
    stop_reason: str = ""
    iterates: list | None = None

    def error_array(self):
        return np.asarray(self.errors, dtype=float)

    def residual_array(self):
        return np.asarray(self.residuals, dtype=float)

    def to_csv(self, path, zero_timing=False):
        """Write step,block_step,selected,error,residual,elapsed_ns records.

        zero_timing replaces wall times with 0 so identical runs produce
        byte-identical files.
        """
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("step,block_step,selected,error,residual,elapsed_ns\n")
            for k in range(len(self.steps)):
                sel = self.selected[k]
                if isinstance(sel, (tuple, list, np.ndarray)):
                    sel = ";".join(str(int(i)) for i in sel)
                else:
                    sel = str(int(sel))
                ns = 0 if zero_timing else int(self.elapsed_ns[k])
                fh.write(f"{self.steps[k]},{self.block_steps[k]},{sel},"
                         f"{_fmt(self.errors[k])},{_fmt(self.residuals[k])},{ns}\n")


class _Run:
    """Shared bookkeeping for the solver drivers."""

    def __init__(self, system, policy, stop, seed, keep_iterates, x0):
        self.a = np.asarray(system.a, dtype=float)
        self.b = np.asarray(system.b, dtype=float)
        self.x_star = (None if system.x_star is None
                       else np.asarray(system.x_star, dtype=float))
        self.m, self.n = self.a.shape
        self.stop = stop if stop is not None else StopRule.default(self.m)
        self.b_scale = float(np.linalg.norm(self.b))
        self.x_scale = (float(np.linalg.norm(self.x_star))
                        if self.x_star is not None else 0.0)
        self.x = (np.zeros(self.n) if x0 is None
                  else np.asarray(x0, dtype=float).copy())
        if self.x.shape != (self.n,):
            raise ValueError("x0 has the wrong length")
        self.trace = IterationTrace(policy=policy, seed=seed)
        if keep_iterates:
            self.trace.iterates = []
        self.steps = 0
        self.blocks = 0
        self._t0 = time.perf_counter_ns()
        self.record(())

    def record(self, selected):
        x = self.x
        err = (float(np.linalg.norm(x - self.x_star))
               if self.x_star is not None else float("nan"))
        res = float(np.linalg.norm(self.a @ x - self.b))
        tr = self.trace
        tr.steps.append(self.steps)
        tr.block_steps.append(self.blocks)
        tr.selected.append(selected)
        tr.errors.append(err)
        tr.residuals.append(res)
        tr.elapsed_ns.append(time.perf_counter_ns() - self._t0)
        if tr.iterates is not None:
            tr.iterates.append(x.copy())
        self._last_err = err
        self._last_res = res

    def stop_reason(self):
        st = self.stop
        if self._last_res <= st.residual_tol * (self.b_scale or 1.0):
            return "residual_tol"
        if self.x_star is not None and self._last_err <= st.error_tol * self.x_scale:
            return "error_tol"
        if self.steps >= st.max_steps:
            return "max_steps"
        return ""

    def finish(self, reason):
        self.trace.stop_reason = reason
        return self.x, self.trace


def kaczmarz_step(x, a_i, b_i):
    """Orthogonal projection of x onto the hyperplane <a_i, x> = b_i."""
    a_i = np.asarray(a_i, dtype=float)
    nrm2 = float(a_i @ a_i)
    if nrm2 == 0.0:
        raise ZeroRow("cannot project onto a zero row")
    x = np.asarray(x, dtype=float)
    return x + ((float(b_i) - float(a_i @ x)) / nrm2) * a_i


def run_kaczmarz(system, policy="cyclic", stop=None, rng=None, x0=None,
                 keep_iterates=False):
    """Single-row projection sweep under a selection policy.

    policy is "cyclic", "uniform", "norm2", "angle", or a length-m vector of
    custom non-negative sampling weights.  The angle policy starts from a
    uniformly drawn row and then weights candidates by sin^2 of their angle to
    the previously selected row.
    """
    seed = int(rng) if isinstance(rng, (int, np.integer)) else None
    gen = as_rng(rng)
    name = policy if isinstance(policy, str) else "custom_weights"
    run = _Run(system, name, stop, seed, keep_iterates, x0)
    a, b, m = run.a, run.b, run.m

    static = None
    gram = None
    if isinstance(policy, str):
        if policy == "cyclic":
            pass
        elif policy == "uniform":
            static = np.ones(m)
        elif policy in ("norm2", "norm_squared"):
            static = row_norm_weights(a)
        elif policy in ("angle", "angle_pair"):
            gram = normalized_gram(a)
        else:
            raise ValueError(f"unknown policy {policy!r}")
    else:
        static = np.asarray(policy, dtype=float)
        if static.shape != (m,):
            raise ValueError("custom weights must have one entry per row")

    prev = None
    while True:
        reason = run.stop_reason()
        if reason:
            break
        if isinstance(policy, str) and policy == "cyclic":
            i = cyclic_next(run.steps, m)
        elif static is not None:
            i = sample_weighted(static, gen)
        elif prev is None:
            i = int(gen.integers(m))
        else:
            i = sample_weighted(angle_weights(a, prev, gram), gen)
        run.x = kaczmarz_step(run.x, a[i], b[i])
        prev = i
        run.steps += 1
        run.blocks += 1
        run.record(i)
    return run.finish(reason)


def run_rkha(system, stop=None, rng=None, x0=None, literal=False,
             keep_iterates=False):
    """Angle-driven paired sweep.

    Each loop draws the next row g with probability proportional to sin^2 of
    its angle to the current row f, projects onto row f and then row g, and
    hands the lead to g.  Two row-steps are spent per loop.

    literal=True reproduces the stale-iterate form of the second update (its
    residual is evaluated at the pre-pair iterate), which gives up
    monotonicity; the default performs a true projection.
    """
    seed = int(rng) if isinstance(rng, (int, np.integer)) else None
    gen = as_rng(rng)
    run = _Run(system, "rkha_literal" if literal else "rkha", stop, seed,
               keep_iterates, x0)
    a, b, m = run.a, run.b, run.m
    gram = normalized_gram(a)
    f = int(gen.integers(m))
    while True:
        reason = run.stop_reason()
        if reason:
            break
        x_pair = run.x
        g = sample_weighted(angle_weights(a, f, gram), gen)
        run.x = kaczmarz_step(run.x, a[f], b[f])
        run.steps += 1
        run.blocks += 1
        run.record(f)
        reason = run.stop_reason()
        if reason:
            break
        if literal:
            a_g = a[g]
            run.x = run.x + ((b[g] - float(a_g @ x_pair)) / float(a_g @ a_g)) * a_g
        else:
            run.x = kaczmarz_step(run.x, a[g], b[g])
        run.steps += 1
        run.blocks += 1
        run.record(g)
        f = g
    return run.finish(reason)


def block_kaczmarz_step(x, a_block, b_block):
    """Orthogonal projection of x onto the solution set of a row block.

    Solves (a_block a_block^T) y = b_block - a_block x by Cholesky; if the
    Gram factorization fails but the block still has full numeric row rank,
    falls back to the pseudo-inverse.
    """
    a_blk = np.asarray(a_block, dtype=float)
    if a_blk.ndim == 1:
        a_blk = a_blk.reshape(1, -1)
    b_blk = np.atleast_1d(np.asarray(b_block, dtype=float))
    x = np.asarray(x, dtype=float)
    r = b_blk - a_blk @ x
    gram = a_blk @ a_blk.T
    gram = 0.5 * (gram + gram.T)
    try:
        low = cholesky(gram)
        y = solve_triangular(low, r, lower=True)
        y = solve_triangular(low.T, y, lower=False)
    except NotPositiveDefinite:
        if svd(a_blk).rank < a_blk.shape[0]:
            raise DegenerateBlock("block rows are numerically dependent") from None
        return x + pseudo_inverse(a_blk) @ r
    return x + a_blk.T @ y


def run_block_kaczmarz(system, partition, stop=None, x0=None,
                       keep_iterates=False):
    """Deterministic sweep over a fixed row partition, one block projection
    per event; a block of p rows spends p row-steps."""
    run = _Run(system, "block_cyclic", stop, None, keep_iterates, x0)
    blocks = check_partition(partition, run.m)
    a, b = run.a, run.b
    k = 0
    while True:
        reason = run.stop_reason()
        if reason:
            break
        blk = blocks[k % len(blocks)]
        run.x = block_kaczmarz_step(run.x, a[blk], b[blk])
        run.steps += len(blk)
        run.blocks += 1
        run.record(tuple(int(i) for i in blk))
        k += 1
    return run.finish(reason)


def rkos_project(x_prev, block_rows, block_b, tol=MGS_TOL):
    """Project x_prev onto the solution set of a block by orthonormalizing the
    block rows on the fly.

    The solution's coordinate along each new basis vector follows from the
    right-hand side alone via the triangular recursion
    beta_l = (b_l - sum_{k<l} r_kl beta_k) / r_ll, so no reference solution is
    needed.  Raises DegenerateBlock on linearly dependent rows.
    """
    rows = np.asarray(block_rows, dtype=float)
    if rows.ndim == 1:
        rows = rows.reshape(1, -1)
    bb = np.atleast_1d(np.asarray(block_b, dtype=float))
    if bb.shape[0] != rows.shape[0]:
        raise ValueError("need one right-hand-side entry per block row")
    u, rmat = _mgs_qr(rows, tol)
    p = rows.shape[0]
    beta = np.zeros(p)
    for l in range(p):
        beta[l] = (bb[l] - float(rmat[:l, l] @ beta[:l])) / rmat[l, l]
    x_prev = np.asarray(x_prev, dtype=float)
    return x_prev + u @ (beta - u.T @ x_prev)


def run_rkos(system, p, stop=None, rng=None, variant="gram_schmidt",
             with_replacement=False, max_retries=10, x0=None,
             keep_iterates=False):
    """Randomized multi-row sweep: each event picks p distinct rows,
    orthonormalizes them, and projects onto the block's solution set in one
    shot (p row-steps per event).

    variant "gram_schmidt" uses the row-by-row recursion of rkos_project;
    "qr" computes the block estimate from a thin QR of the transposed block.
    Without replacement (default), blocks come from a fresh random partition
    each cycle; with replacement, every block is an independent uniform draw
    of p distinct rows.  A degenerate block is redrawn uniformly up to
    max_retries times before the error propagates.
    """
    seed = int(rng) if isinstance(rng, (int, np.integer)) else None
    gen = as_rng(rng)
    tag = {"gram_schmidt": "rkos_gs", "gs": "rkos_gs", "qr": "rkos_qr"}.get(variant)
    if tag is None:
        raise ValueError(f"unknown variant {variant!r}")
    run = _Run(system, tag, stop, seed, keep_iterates, x0)
    m = run.m
    if not 1 <= p <= m:
        raise ValueError("need 1 <= p <= m")
    a, b = run.a, run.b
    pending = []
    while True:
        reason = run.stop_reason()
        if reason:
            break
        if not pending:
            if with_replacement:
                pending = [gen.choice(m, size=p, replace=False)]
            else:
                pending = random_partition(m, p, gen)
        blk = pending.pop(0)
        for attempt in range(max_retries + 1):
            try:
                if tag == "rkos_gs":
                    x_new = rkos_project(run.x, a[blk], b[blk])
                else:
                    q, rmat = householder_qr(a[blk].T)
                    coeff = np.linalg.solve(rmat @ rmat.T, rmat @ b[blk])
                    x_new = run.x + q @ (coeff - q.T @ run.x)
                break
            except DegenerateBlock:
                if attempt == max_retries:
                    raise
                blk = gen.choice(m, size=len(blk), replace=False)
        run.x = x_new
        run.steps += len(blk)
        run.blocks += 1
        run.record(tuple(int(i) for i in blk))
    return run.finish(reason)


def rkos_noise_propagation(a_block, eps_b):
    """Image of a right-hand-side perturbation in the iterate after one block
    projection: eps_x = q (r r^T)^{-1} r eps_b for a_block^T = q r."""
    a_blk = np.asarray(a_block, dtype=float)
    if a_blk.ndim == 1:
        a_blk = a_blk.reshape(1, -1)
    eps = np.atleast_1d(np.asarray(eps_b, dtype=float))
    if eps.shape[0] != a_blk.shape[0]:
        raise ValueError("need one perturbation entry per block row")
    q, rmat = householder_qr(a_blk.T)
    return q @ np.linalg.solve(rmat @ rmat.T, rmat @ eps)
