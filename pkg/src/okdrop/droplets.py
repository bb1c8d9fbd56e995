"""Droplet configurations, rescaled geometry, density measures and shape metrics.

Rescaled units: with L = |ln eps|,
    A = eps^{-2/3} L^{2/3} |Omega|,   P = eps^{-1/3} L^{1/3} |boundary of Omega|,
and the droplet measure has density eps^{-2/3} L^{-1/3} on the droplets, so that
(1/L) sum A_i equals its total mass.  An optimal droplet is a disk of radius
3^{1/3} eps^{1/3} L^{-1/3}, i.e. A = 3^{2/3} pi.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import shapely
from shapely.geometry import Point
from shapely.geometry import Polygon as ShapelyPolygon

from .errors import DomainError, GeometryError, ParameterError
from .torus import TorusParams, log_eps, wrap

OPTIMAL_AREA = 3.0 ** (2.0 / 3.0) * math.pi
OPTIMAL_PERIMETER = 2.0 * 3.0 ** (1.0 / 3.0) * math.pi


def area_scale(epsilon: float) -> float:
    L = log_eps(epsilon)
    return epsilon ** (-2.0 / 3.0) * L ** (2.0 / 3.0)


def length_scale(epsilon: float) -> float:
    L = log_eps(epsilon)
    return epsilon ** (-1.0 / 3.0) * L ** (1.0 / 3.0)


def density_scale(epsilon: float) -> float:
    L = log_eps(epsilon)
    return epsilon ** (-2.0 / 3.0) * L ** (-1.0 / 3.0)


def optimal_radius(epsilon: float) -> float:
    """Physical radius of a disk with rescaled area 3^{2/3} pi."""
    L = log_eps(epsilon)
    return 3.0 ** (1.0 / 3.0) * epsilon ** (1.0 / 3.0) * L ** (-1.0 / 3.0)


# ---- shapes -----------------------------------------------------------------------

@dataclass(frozen=True)
class Disk:
    radius: float

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise GeometryError(f"disk radius must be positive, got {self.radius!r}")

    @property
    def area(self) -> float:
        return math.pi * self.radius**2

    @property
    def perimeter(self) -> float:
        return 2.0 * math.pi * self.radius

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius


def _shoelace(v: np.ndarray) -> float:
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True)
class Polygon:
    """Simple polygon; vertices relative to the droplet center, stored counter-clockwise."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GeometryError("polygon needs at least 3 vertices of dimension 2")
        a = _shoelace(v)
        if not abs(a) > 1e-300:
            raise GeometryError("degenerate polygon (zero area)")
        if a < 0:
            v = v[::-1].copy()
        if not ShapelyPolygon(v).is_valid:
            raise GeometryError("polygon is not simple")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def area(self) -> float:
        return _shoelace(self.vertices)

    @property
    def perimeter(self) -> float:
        d = np.diff(np.vstack([self.vertices, self.vertices[:1]]), axis=0)
        return float(np.sum(np.hypot(d[:, 0], d[:, 1])))

    @property
    def diameter(self) -> float:
        v = self.vertices
        d = v[:, None, :] - v[None, :, :]
        return float(np.sqrt(np.max(np.einsum("ijk,ijk->ij", d, d))))

    def contains(self, x, y):
        """Even-odd point-in-polygon test for arrays of relative coordinates."""
        v = self.vertices
        inside = np.zeros(np.broadcast(x, y).shape, dtype=bool)
        xj, yj = v[-1]
        for xi, yi in v:
            cond = (yi > y) != (yj > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xc = (xj - xi) * (y - yi) / (yj - yi) + xi
            inside ^= cond & (x < xc)
            xj, yj = xi, yi
        return inside


Shape = Union[Disk, Polygon]


@dataclass(frozen=True)
class Droplet:
    center: np.ndarray
    shape: Shape

    def __post_init__(self):
        c = np.array(self.center, dtype=float).reshape(2)
        c.setflags(write=False)
        object.__setattr__(self, "center", c)

    @property
    def area(self) -> float:
        return self.shape.area

    @property
    def perimeter(self) -> float:
        return self.shape.perimeter

    @property
    def is_disk(self) -> bool:
        return isinstance(self.shape, Disk)

    def to_shapely(self, quad_segs: int = 64):
        if self.is_disk:
            return Point(*self.center).buffer(self.shape.radius, quad_segs=quad_segs)
        return ShapelyPolygon(self.shape.vertices + self.center)


def disk(center, radius) -> Droplet:
    return Droplet(center, Disk(float(radius)))


def polygon(center, vertices) -> Droplet:
    return Droplet(center, Polygon(vertices))


@dataclass(frozen=True)
class DropletConfig:
    """eps plus pairwise disjoint droplets on the torus of ``params``."""

    params: TorusParams
    epsilon: float
    droplets: tuple = ()
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        log_eps(self.epsilon)
        object.__setattr__(self, "droplets", tuple(self.droplets))
        if self.validate:
            check_config(self)

    def __len__(self):
        return len(self.droplets)

    @property
    def centers(self) -> np.ndarray:
        if not self.droplets:
            return np.zeros((0, 2))
        return np.array([d.center for d in self.droplets])

    @property
    def all_disks(self) -> bool:
        return all(d.is_disk for d in self.droplets)

    @property
    def radii(self) -> np.ndarray:
        return np.array([d.shape.radius for d in self.droplets])

    def with_disks(self, centers, radii, validate: bool = True) -> "DropletConfig":
        ds = tuple(disk(c, r) for c, r in zip(np.asarray(centers), np.asarray(radii)))
        return DropletConfig(self.params, self.epsilon, ds, validate)


def disk_config(params: TorusParams, epsilon: float, centers, radii, validate: bool = True) -> DropletConfig:
    centers = np.atleast_2d(np.asarray(centers, float)) if len(centers) else np.zeros((0, 2))
    radii = np.broadcast_to(np.asarray(radii, float), (len(centers),))
    ds = tuple(disk(c, r) for c, r in zip(centers, radii))
    return DropletConfig(params, epsilon, ds, validate)


def min_disk_gap(centers, radii, ell: float) -> float:
    """Smallest |c_i - c_j| - r_i - r_j over pairs (minimum image); +inf for < 2 disks."""
    n = len(centers)
    if n < 2:
        return math.inf
    d = wrap(centers[:, None, :] - centers[None, :, :], ell)
    dist = np.hypot(d[..., 0], d[..., 1])
    gap = dist - radii[:, None] - radii[None, :]
    iu = np.triu_indices(n, 1)
    return float(np.min(gap[iu]))


def check_config(cfg: DropletConfig) -> None:
    """Size and disjointness invariants (including periodic images)."""
    ell = cfg.params.ell
    for i, d in enumerate(cfg.droplets):
        if d.is_disk and d.shape.radius >= ell / 4.0:
            raise GeometryError(f"droplet {i}: disk radius must be < ell/4, got {d.shape.radius}")
        if not d.is_disk and d.shape.diameter >= ell / 4.0:
            raise GeometryError(f"droplet {i}: polygon diameter must be < ell/4")
    if len(cfg.droplets) < 2:
        return
    if cfg.all_disks:
        if min_disk_gap(cfg.centers, cfg.radii, ell) <= 0.0:
            raise GeometryError("droplets overlap")
        return
    # general shapes: compare each pair at the minimum-image offset of their centers
    geoms = []
    for d in cfg.droplets:
        if d.is_disk:
            geoms.append(Point(0.0, 0.0).buffer(d.shape.radius, quad_segs=64))
        else:
            geoms.append(ShapelyPolygon(d.shape.vertices))
    c = cfg.centers
    for i in range(len(geoms)):
        for j in range(i + 1, len(geoms)):
            off = wrap(c[j] - c[i], ell)
            gj = shapely.affinity.translate(geoms[j], off[0], off[1])
            if geoms[i].intersects(gj):
                raise GeometryError(f"droplets {i} and {j} overlap")


# ---- rescaled statistics ----------------------------------------------------------

@dataclass(frozen=True)
class RescaledStats:
    areas: np.ndarray
    perimeters: np.ndarray

    def __post_init__(self):
        if np.any(self.areas <= 0):
            raise GeometryError("rescaled areas must be positive")


def rescaled_stats(config: DropletConfig) -> RescaledStats:
    sa = area_scale(config.epsilon)
    sp = length_scale(config.epsilon)
    a = np.array([d.area for d in config.droplets], float)
    p = np.array([d.perimeter for d in config.droplets], float)
    return RescaledStats(a * sa, p * sp)


def truncated_area(A, gamma: float):
    """A below the cap 3^{2/3} pi / gamma, sqrt(cap * A) above it."""
    if not (0.0 < gamma < 1.0):
        raise ParameterError(f"gamma must lie in (0, 1), got {gamma!r}")
    A = np.asarray(A, dtype=float)
    if np.any(A <= 0):
        raise ParameterError("areas must be positive")
    cap = OPTIMAL_AREA / gamma
    out = np.where(A < cap, A, np.sqrt(cap * A))
    return float(out) if out.ndim == 0 else out


# ---- density measures -------------------------------------------------------------

@dataclass(frozen=True)
class DensityMeasure:
    """Nonnegative density on an n x n periodic node grid plus optional weighted atoms.

    Node (i, j) sits at (i h, j h) and represents the cell of side h = ell/n around it.
    """

    grid: np.ndarray
    ell: float
    atoms: tuple = ()  # (weight, (x, y))
    total_mass: float = field(default=float("nan"))

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ParameterError("density grid must be square")
        if np.any(g < -1e-12):
            raise DomainError("density samples must be nonnegative")
        object.__setattr__(self, "grid", g)
        atoms = tuple((float(w), tuple(map(float, x))) for w, x in self.atoms)
        if any(w < 0 for w, _ in atoms):
            raise DomainError("atom weights must be nonnegative")
        object.__setattr__(self, "atoms", atoms)
        mass = self.cell_area * float(g.sum()) + sum(w for w, _ in atoms)
        object.__setattr__(self, "total_mass", mass)

    @property
    def n(self) -> int:
        return self.grid.shape[0]

    @property
    def cell_area(self) -> float:
        return (self.ell / self.grid.shape[0]) ** 2

    @classmethod
    def uniform(cls, n: int, ell: float, m: float) -> "DensityMeasure":
        return cls(np.full((n, n), float(m)), ell)

    @classmethod
    def from_function(cls, n: int, ell: float, f) -> "DensityMeasure":
        x = np.arange(n) * (ell / n)
        X, Y = np.meshgrid(x, x, indexing="ij")
        return cls(np.asarray(f(X, Y), float), ell)

    def smeared(self) -> tuple["DensityMeasure", bool]:
        """Grid-only measure with each atom deposited in the cell of its nearest node.

        Returns (measure, smeared_flag).
        """
        if not self.atoms:
            return self, False
        g = self.grid.copy()
        n = self.n
        h = self.ell / n
        for w, x in self.atoms:
            i = int(np.round(x[0] / h)) % n
            j = int(np.round(x[1] / h)) % n
            g[i, j] += w / (h * h)
        warnings.warn("point masses smeared to one grid cell", stacklevel=2)
        return DensityMeasure(g, self.ell), True


def _corner_area(x, y, r):
    """Signed area of disk(0, r) intersected with the rectangle spanned by (0,0) and (x, y)."""
    sx, sy = np.sign(x), np.sign(y)
    ax = np.minimum(np.abs(x), r)
    ay = np.minimum(np.abs(y), r)
    inside = ax * ax + ay * ay <= r * r
    ts = np.sqrt(np.maximum(r * r - ay * ay, 0.0))

    def S(t):
        return 0.5 * (t * np.sqrt(np.maximum(r * r - t * t, 0.0)) + r * r * np.arcsin(np.clip(t / r, -1.0, 1.0)))

    outside = ay * ts + S(ax) - S(ts)
    return sx * sy * np.where(inside, ax * ay, outside)


def disk_coverage(center, radius: float, n: int, ell: float):
    """Exact covered area of each node cell by a disk, on the local index window.

    Returns (ii, jj, area) with ii, jj already reduced mod n.
    """
    h = ell / n
    c = np.asarray(center, float)
    i0 = int(math.floor((c[0] - radius) / h + 0.5))
    i1 = int(math.floor((c[0] + radius) / h + 0.5))
    j0 = int(math.floor((c[1] - radius) / h + 0.5))
    j1 = int(math.floor((c[1] + radius) / h + 0.5))
    ie = (np.arange(i0, i1 + 2) - 0.5) * h - c[0]
    je = (np.arange(j0, j1 + 2) - 0.5) * h - c[1]
    E1, E2 = np.meshgrid(ie, je, indexing="ij")
    C = _corner_area(E1, E2, radius)
    area = C[1:, 1:] - C[:-1, 1:] - C[1:, :-1] + C[:-1, :-1]
    # inclusion-exclusion cancels O(r^2) corner areas down to O(h^2) cells
    area = np.clip(area, 0.0, h * h)
    ii = np.arange(i0, i1 + 1) % n
    jj = np.arange(j0, j1 + 1) % n
    return ii, jj, area


def polygon_coverage(d: Droplet, n: int, ell: float, sub: int = 4):
    """Covered area of each node cell by a polygon droplet, by sub x sub supersampling."""
    h = ell / n
    v = d.shape.vertices + d.center
    lo = v.min(axis=0)
    hi = v.max(axis=0)
    i0, j0 = (np.floor(lo / h + 0.5)).astype(int)
    i1, j1 = (np.floor(hi / h + 0.5)).astype(int)
    off = (np.arange(sub) + 0.5) / sub - 0.5
    xs = (np.arange(i0, i1 + 1)[:, None] + off[None, :]).reshape(-1) * h - d.center[0]
    ys = (np.arange(j0, j1 + 1)[:, None] + off[None, :]).reshape(-1) * h - d.center[1]
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    inside = d.shape.contains(X, Y).astype(float)
    ni, nj = i1 - i0 + 1, j1 - j0 + 1
    frac = inside.reshape(ni, sub, nj, sub).mean(axis=(1, 3))
    return np.arange(i0, i1 + 1) % n, np.arange(j0, j1 + 1) % n, frac * h * h


def indicator_coverage(config: DropletConfig, grid_n: int) -> np.ndarray:
    """Fraction of each node cell covered by the union of droplets."""
    ell = config.params.ell
    cov = np.zeros((grid_n, grid_n))
    h2 = (ell / grid_n) ** 2
    for d in config.droplets:
        if d.is_disk:
            ii, jj, a = disk_coverage(d.center, d.shape.radius, grid_n, ell)
        else:
            ii, jj, a = polygon_coverage(d, grid_n, ell)
        np.add.at(cov, (ii[:, None], jj[None, :]), a / h2)
    return cov


def droplet_measure(config: DropletConfig, grid_n: int) -> DensityMeasure:
    """Rasterized droplet measure, density eps^{-2/3}|ln eps|^{-1/3} on the droplets."""
    if grid_n < 128:
        raise ParameterError("grid_n must be >= 128")
    cov = indicator_coverage(config, grid_n)
    return DensityMeasure(cov * density_scale(config.epsilon), config.params.ell)


# ---- shape metrics ----------------------------------------------------------------

def _circle_polygon(center, radius, nseg=1024):
    """Regular nseg-gon with exactly the area of the disk."""
    t = 2.0 * math.pi * np.arange(nseg) / nseg
    rr = radius * math.sqrt(2.0 * math.pi / (nseg * math.sin(2.0 * math.pi / nseg)))
    return ShapelyPolygon(np.stack([center[0] + rr * np.cos(t), center[1] + rr * np.sin(t)], -1))


def fraenkel_asymmetry(d: Droplet, tol: float = 1e-7) -> float:
    """min over centers of |E sym-diff B| / |E| with |B| = |E|."""
    if d.is_disk:
        return 0.0
    E = ShapelyPolygon(d.shape.vertices)
    area = E.area
    if area <= 0:
        raise GeometryError("degenerate droplet")
    R = math.sqrt(area / math.pi)

    def asym(c):
        inter = E.intersection(_circle_polygon(c, R)).area
        return max(2.0 * (area - inter) / area, 0.0)

    def descend(c, f):
        step = 0.25 * R
        while step > tol * R:
            moved = False
            for dx, dy in ((step, 0.0), (-step, 0.0), (0.0, step), (0.0, -step)):
                cand = (c[0] + dx, c[1] + dy)
                fc = asym(cand)
                if fc < f - 1e-15:
                    c, f, moved = cand, fc, True
                    break
            if not moved:
                step *= 0.5
        return c, f

    cen = E.centroid
    c0 = (cen.x, cen.y)
    best_c, best = descend(c0, asym(c0))
    # grid fallback over the bounding box; restart descent from the best grid center
    x0, y0, x1, y1 = E.bounds
    grid = [(x, y) for x in np.linspace(x0, x1, 7) for y in np.linspace(y0, y1, 7)]
    vals = [asym(c) for c in grid]
    k = int(np.argmin(vals))
    if vals[k] < best - 1e-12:
        c2, f2 = descend(grid[k], vals[k])
        if f2 < best:
            best = f2
    return float(min(best, 2.0))


def shape_metrics(d: Droplet, epsilon: float | None = None) -> tuple[float, float]:
    """(Fraenkel asymmetry, isoperimetric deficit P - sqrt(4 pi A)).

    The deficit is in rescaled units when ``epsilon`` is given, physical units otherwise.
    """
    a, p = d.area, d.perimeter
    if not a > 0:
        raise GeometryError("degenerate droplet")
    if d.is_disk:
        return 0.0, 0.0
    deficit = p - math.sqrt(4.0 * math.pi * a)
    if epsilon is not None:
        deficit *= length_scale(epsilon)
    return fraenkel_asymmetry(d), deficit
