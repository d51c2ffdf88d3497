"""Row-geometry analysis: Gramian statistics, mutual coherence, angle spectra."""

import math
from dataclasses import dataclass

import numpy as np

from .bounds import welch_bound
from .errors import ZeroRow


def _fmt(v):
    return format(float(v), ".17g")


def gramian(a):
    """Gramian of the row-normalized matrix; entries are pairwise cosines."""
    a = np.asarray(a, dtype=float)
    norms = np.linalg.norm(a, axis=1)
    if np.any(norms == 0):
        raise ZeroRow("zero rows have no direction")
    ah = a / norms[:, None]
    g = ah @ ah.T
    return 0.5 * (g + g.T)


def _upper(g):
    g = np.asarray(g, dtype=float)
    vals = g[np.triu_indices(g.shape[0], k=1)]
    if vals.size == 0:
        raise ValueError("need at least two rows")
    return vals


def mutual_coherence(a):
    """Largest absolute cosine between two distinct rows."""
    a = np.asarray(a, dtype=float)
    if a.shape[0] < 2:
        raise ValueError("need at least two rows")
    return float(np.abs(_upper(gramian(a))).max())


def gram_stats(g):
    """(mean, median) over the strict upper triangle of a Gramian."""
    vals = _upper(g)
    return float(vals.mean()), float(np.median(vals))


@dataclass
class AngleHistogram:
    """Pairwise-angle histogram in degrees over [0, 180]."""

    bin_edges: np.ndarray  # length len(counts) + 1
    counts: np.ndarray
    normalized: bool = False

    def to_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("bin_start_deg,bin_end_deg,count\n")
            for k in range(len(self.counts)):
                cnt = _fmt(self.counts[k]) if self.normalized else int(self.counts[k])
                fh.write(f"{_fmt(self.bin_edges[k])},{_fmt(self.bin_edges[k + 1])},{cnt}\n")


def angle_histogram(g, bin_width_deg=1.0):
    """Histogram of the pairwise row angles arccos(g_ij) in degrees.

    Bins cover [0, 180]; the final bin is shortened when the width does not
    divide 180.  Counts sum to m (m - 1) / 2.
    """
    if bin_width_deg <= 0:
        raise ValueError("bin width must be positive")
    vals = np.clip(_upper(g), -1.0, 1.0)
    theta = np.degrees(np.arccos(vals))
    nbins = int(math.ceil(180.0 / bin_width_deg))
    edges = np.minimum(np.arange(nbins + 1) * bin_width_deg, 180.0)
    counts, _ = np.histogram(theta, bins=edges)
    return AngleHistogram(bin_edges=edges, counts=counts, normalized=False)


@dataclass
class CoherenceReport:
    """Coherence and Gramian statistics for one system, with the Welch floor."""

    m: int
    n: int
    coherence: float
    gram_mean: float
    gram_median: float
    welch_ratio: float
    welch_root: float

    def to_json(self):
        return {"m": self.m, "n": self.n, "coherence": self.coherence,
                "gram_mean": self.gram_mean, "gram_median": self.gram_median,
                "welch_ratio": self.welch_ratio, "welch_root": self.welch_root}


def coherence_report(a):
    """Coherence, upper-triangle Gramian statistics, and the Welch floor."""
    a = np.asarray(a, dtype=float)
    if a.shape[0] < 2:
        raise ValueError("need at least two rows")
    g = gramian(a)
    vals = _upper(g)
    wb = welch_bound(a.shape[0], a.shape[1])
    return CoherenceReport(m=int(a.shape[0]), n=int(a.shape[1]),
                           coherence=float(np.abs(vals).max()),
                           gram_mean=float(vals.mean()),
                           gram_median=float(np.median(vals)),
                           welch_ratio=wb.ratio, welch_root=wb.root)
