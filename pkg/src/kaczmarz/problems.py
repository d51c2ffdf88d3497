"""Problem generators: Gaussian test systems and grid tomography systems.

Tomography systems live on an n x n unit-pixel grid covering
[-n/2, n/2]^2; pixels are indexed row-major with row 0 at the top
(largest y).  The phantom itself is defined on [-1, 1]^2.
"""

import json
import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .errors import ZeroRow

# Head-phantom ellipse table: intensity, semi-axis a, semi-axis b,
# center x0, center y0, rotation phi in degrees.  Intensities add.
_ELLIPSES = np.array([
    [1.0,  0.6900, 0.9200,  0.00,  0.0000,   0.0],
    [-0.8, 0.6624, 0.8740,  0.00, -0.0184,   0.0],
    [-0.2, 0.1100, 0.3100,  0.22,  0.0000, -18.0],
    [-0.2, 0.1600, 0.4100, -0.22,  0.0000,  18.0],
    [0.1,  0.2100, 0.2500,  0.00,  0.3500,   0.0],
    [0.1,  0.0460, 0.0460,  0.00,  0.1000,   0.0],
    [0.1,  0.0460, 0.0460,  0.00, -0.1000,   0.0],
    [0.1,  0.0460, 0.0230, -0.08, -0.6050,   0.0],
    [0.1,  0.0230, 0.0230,  0.00, -0.6060,   0.0],
    [0.1,  0.0230, 0.0460,  0.06, -0.6050,   0.0],
])


@dataclass
class BeamGeometry:
    grid_side: int
    num_angles: int
    num_detectors: int
    mode: str  # "parallel" or "fan"
    source_radius: float | None = None


@dataclass
class LinearSystem:
    """A dense system a x = b with optional reference solution and provenance."""

    a: np.ndarray
    b: np.ndarray
    x_star: np.ndarray | None = None
    kind: str = "custom"
    seed: int | None = None
    geometry: BeamGeometry | None = None
    noisy: bool = False

    @property
    def m(self):
        return self.a.shape[0]

    @property
    def n(self):
        return self.a.shape[1]


def shepp_logan(n):
    """Rasterize the standard 10-ellipse head phantom on an n x n grid.

    Pixel (i, j) takes the summed intensity of the ellipses containing its
    center; row 0 is the top of the image.
    """
    if n < 2:
        raise ValueError("grid side must be at least 2")
    xs = (2.0 * np.arange(n) + 1.0) / n - 1.0   # column centers, left to right
    ys = 1.0 - (2.0 * np.arange(n) + 1.0) / n   # row centers, top to bottom
    gx, gy = np.meshgrid(xs, ys)
    img = np.zeros((n, n))
    for val, sa, sb, x0, y0, phi_deg in _ELLIPSES:
        phi = math.radians(phi_deg)
        c, s = math.cos(phi), math.sin(phi)
        dx = gx - x0
        dy = gy - y0
        inside = ((dx * c + dy * s) / sa) ** 2 + ((dy * c - dx * s) / sb) ** 2 <= 1.0
        img[inside] += val
    return img


def siddon_ray(p0, p1, n):
    """Exact intersection lengths of the segment p0 -> p1 with the n x n grid.

    Returns (indices, lengths): flat row-major pixel indices and the lengths
    of the segment inside each pixel.  Pixels merely touched at a corner are
    omitted; the lengths sum to the in-grid chord length of the segment.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    d = p1 - p0
    seg_len = float(np.linalg.norm(d))
    if seg_len == 0.0:
        raise ValueError("ray endpoints coincide")
    half = n / 2.0
    a_min, a_max = 0.0, 1.0
    for axis in range(2):
        if d[axis] != 0.0:
            t1 = (-half - p0[axis]) / d[axis]
            t2 = (half - p0[axis]) / d[axis]
            a_min = max(a_min, min(t1, t2))
            a_max = min(a_max, max(t1, t2))
        elif not -half <= p0[axis] <= half:
            return np.zeros(0, dtype=int), np.zeros(0)
    if a_min >= a_max:
        return np.zeros(0, dtype=int), np.zeros(0)
    pieces = [np.array([a_min, a_max])]
    planes = np.arange(-half, half + 1.0)
    for axis in range(2):
        if d[axis] != 0.0:
            alphas = (planes - p0[axis]) / d[axis]
            pieces.append(alphas[(alphas > a_min) & (alphas < a_max)])
    alphas = np.unique(np.concatenate(pieces))
    mids = p0[None, :] + 0.5 * (alphas[:-1] + alphas[1:])[:, None] * d[None, :]
    lengths = (alphas[1:] - alphas[:-1]) * seg_len
    keep = lengths > 1e-12 * seg_len
    cols = np.clip(np.floor(mids[keep, 0] + half).astype(int), 0, n - 1)
    rows = np.clip(np.floor(half - mids[keep, 1]).astype(int), 0, n - 1)
    return rows * n + cols, lengths[keep]


def gen_gaussian_system(m, n, seed):
    """Consistent Gaussian system: iid N(0, 1) rows, x* uniform on the unit sphere."""
    if not m >= n >= 1:
        raise ValueError("need m >= n >= 1")
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, n))
    x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    return LinearSystem(a=a, b=a @ x, x_star=x, kind="gaussian", seed=seed)


def _ray_rows(rays, n):
    """Dense rows for (p0, p1) rays, dropping rays that miss the grid."""
    rows = []
    for p0, p1 in rays:
        idx, w = siddon_ray(p0, p1, n)
        if idx.size == 0:
            continue
        row = np.zeros(n * n)
        np.add.at(row, idx, w)
        rows.append(row)
    if not rows:
        raise ValueError("every ray missed the grid")
    return np.asarray(rows)


def gen_parallel_beam(phantom, num_angles, num_detectors):
    """Parallel-beam scan of a phantom; view angles uniform over [0, pi).

    Detector offsets are uniform across the grid diagonal, so edge rays can
    miss the grid at shallow angles; such empty rows are dropped and m
    shrinks accordingly.
    """
    ph = np.asarray(phantom, dtype=float)
    n = ph.shape[0]
    if ph.ndim != 2 or ph.shape != (n, n):
        raise ValueError("phantom must be a square 2-D array")
    if num_angles < 1 or num_detectors < 1:
        raise ValueError("need at least one angle and one detector")
    diag = n * math.sqrt(2.0)
    rays = []
    for k in range(num_angles):
        phi = math.pi * k / num_angles
        w = np.array([math.cos(phi), math.sin(phi)])    # detector axis
        v = np.array([-math.sin(phi), math.cos(phi)])   # ray direction
        for dtc in range(num_detectors):
            t = ((dtc + 0.5) / num_detectors - 0.5) * diag
            c = t * w
            rays.append((c - diag * v, c + diag * v))
    a = _ray_rows(rays, n)
    x = ph.reshape(-1)
    geom = BeamGeometry(grid_side=n, num_angles=num_angles,
                        num_detectors=num_detectors, mode="parallel")
    return LinearSystem(a=a, b=a @ x, x_star=x, kind="parallel_beam", geometry=geom)


def gen_fan_beam(phantom, num_angles, num_detectors, source_radius):
    """Fan-beam scan: point sources on a circle, each fan spanning the grid.

    source_radius must exceed the grid's circumscribed radius n sqrt(2) / 2 so
    the source sits outside the grid.
    """
    ph = np.asarray(phantom, dtype=float)
    n = ph.shape[0]
    if ph.ndim != 2 or ph.shape != (n, n):
        raise ValueError("phantom must be a square 2-D array")
    if num_angles < 1 or num_detectors < 1:
        raise ValueError("need at least one angle and one detector")
    circum = n * math.sqrt(2.0) / 2.0
    if not source_radius > circum:
        raise ValueError(f"source radius must exceed {circum:.6g}")
    gamma = math.asin(circum / source_radius)   # half-opening of each fan
    reach = 2.0 * (source_radius + n)
    rays = []
    for k in range(num_angles):
        beta = 2.0 * math.pi * k / num_angles
        src = source_radius * np.array([math.cos(beta), math.sin(beta)])
        base = math.atan2(-src[1], -src[0])     # aim at the grid center
        for dtc in range(num_detectors):
            delta = ((dtc + 0.5) / num_detectors - 0.5) * 2.0 * gamma
            ang = base + delta
            rays.append((src, src + reach * np.array([math.cos(ang), math.sin(ang)])))
    a = _ray_rows(rays, n)
    x = ph.reshape(-1)
    geom = BeamGeometry(grid_side=n, num_angles=num_angles,
                        num_detectors=num_detectors, mode="fan",
                        source_radius=float(source_radius))
    return LinearSystem(a=a, b=a @ x, x_star=x, kind="fan_beam", geometry=geom)


def add_noise(system, rel_magnitude, seed):
    """Gaussian perturbation of b scaled so ||noise|| = rel_magnitude * ||b||.

    rel_magnitude = 0 returns an unchanged copy.  x_star is kept as the
    noise-free reference; the system is flagged noisy.
    """
    if rel_magnitude < 0:
        raise ValueError("relative magnitude must be >= 0")
    if rel_magnitude == 0:
        return replace(system)
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(system.b.shape[0])
    b_norm = np.linalg.norm(system.b)
    e_norm = np.linalg.norm(e)
    if b_norm > 0 and e_norm > 0:
        e *= rel_magnitude * b_norm / e_norm
    else:
        e[:] = 0.0
    return replace(system, b=system.b + e, noisy=True)


def normalize_rows(system):
    """Scale each row of a and entry of b by the row norm; solutions unchanged."""
    norms = np.linalg.norm(system.a, axis=1)
    if np.any(norms == 0):
        raise ZeroRow("cannot normalize an all-zero row")
    return replace(system, a=system.a / norms[:, None], b=system.b / norms)


def save_system(system, path):
    """Write a system as JSON with a flattened row-major; floats round-trip exactly."""
    doc = {
        "m": int(system.m),
        "n": int(system.n),
        "kind": system.kind,
        "a": [float(v) for v in system.a.reshape(-1)],
        "b": [float(v) for v in system.b],
    }
    if system.x_star is not None:
        doc["x_star"] = [float(v) for v in system.x_star]
    if system.seed is not None:
        doc["seed"] = int(system.seed)
    if system.geometry is not None:
        doc["geometry"] = asdict(system.geometry)
    doc["noisy"] = bool(system.noisy)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_system(path):
    """Inverse of save_system."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    m, n = int(doc["m"]), int(doc["n"])
    a = np.asarray(doc["a"], dtype=float).reshape(m, n)
    b = np.asarray(doc["b"], dtype=float)
    x = np.asarray(doc["x_star"], dtype=float) if "x_star" in doc else None
    geom = BeamGeometry(**doc["geometry"]) if doc.get("geometry") else None
    return LinearSystem(a=a, b=b, x_star=x, kind=doc.get("kind", "custom"),
                        seed=doc.get("seed"), geometry=geom,
                        noisy=bool(doc.get("noisy", False)))
