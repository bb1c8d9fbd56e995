"""Recovery construction: equal-radius disks realizing a target droplet density.

The torus is tiled by square cells of side eta; cell K receives
N_K = floor(3^{-2/3} |ln eps| mu(K) / pi) disks of radius 3^{1/3} eps^{1/3} |ln eps|^{-1/3},
so each disk has rescaled area 3^{2/3} pi. Centers sit on a jittered sub-grid inside
each cell, at least min_spacing apart and min_spacing/2 away from the cell boundary.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, special

from .droplets import (
    OPTIMAL_AREA,
    DensityMeasure,
    DropletConfig,
    density_scale,
    disk_config,
    optimal_radius,
)
from .errors import ConstructionError, ParameterError
from .green import GreenEvaluator
from .limit import limit_energy
from .sharp import EnergyBreakdown, sharp_energy
from .torus import TorusParams, log_eps

SPACING_CONSTANT = 0.5  # min_spacing = SPACING_CONSTANT * ell / sqrt(N)
_FLOOR_FRACTION = 1e-3
_MAX_TRIES = 200


@dataclass(frozen=True)
class CellCount:
    index: tuple[int, int]
    mass: float
    count: int


@dataclass(frozen=True)
class RecoveryPlan:
    params: TorusParams
    epsilon: float
    eta: float
    cells_per_side: int
    cells: tuple[CellCount, ...]
    radius: float
    min_spacing: float
    seed: int = 0

    @property
    def total_count(self) -> int:
        return sum(c.count for c in self.cells)

    @property
    def total_mass(self) -> float:
        return sum(c.mass for c in self.cells)


def cell_side(epsilon: float, ell: float) -> tuple[float, int]:
    """eta = ell/ceil(ell |ln eps|^{1/4}), required to lie strictly in (|ln eps|^{-1/2}, 1)."""
    L = log_eps(epsilon)
    m = max(1, math.ceil(ell * L**0.25))
    eta = ell / m
    if not (L**-0.5 < eta < 1.0):
        raise ParameterError(f"cell side {eta:.4g} outside (|ln eps|^-1/2, 1) = ({L**-0.5:.4g}, 1) at eps={epsilon:g}")
    return eta, m


def _overlap_weights(n: int, ell: float, m: int) -> np.ndarray:
    """W[a, i] = fraction of node cell i (side h centered at i h) inside the cell [a eta, (a+1) eta)."""
    h = ell / n
    eta = ell / m
    lo = np.arange(n) * h - h / 2
    W = np.zeros((m, n))
    for a in range(m):
        a0, a1 = a * eta, (a + 1) * eta
        for shift in (-ell, 0.0, ell):
            W[a] += np.clip(np.minimum(lo + h + shift, a1) - np.maximum(lo + shift, a0), 0.0, None)
    return W / h


def _regularize(mu: DensityMeasure) -> DensityMeasure:
    """Smear atoms and mollify densities that are not bounded below on their support."""
    mu, _ = mu.smeared()
    g = mu.grid
    top = g.max() if g.size else 0.0
    if top > 0:
        pos = g[g > 0]
        if pos.min() < _FLOOR_FRACTION * top:
            warnings.warn("density not bounded below on its support; mollifying", stacklevel=3)
            g = ndimage.gaussian_filter(g, sigma=1.0, mode="wrap")
            mu = DensityMeasure(g, mu.ell)
    return mu


def partition_counts(
    mu: DensityMeasure, epsilon: float, params: TorusParams, seed: int = 0, cells_per_side: int | None = None
) -> RecoveryPlan:
    """Per-cell masses and droplet counts; cells_per_side overrides the default cell side."""
    if not math.isclose(mu.ell, params.ell, rel_tol=1e-14):
        raise ParameterError("density and torus use different side lengths")
    L = log_eps(epsilon)
    if cells_per_side is None:
        eta, m = cell_side(epsilon, params.ell)
    else:
        if int(cells_per_side) != cells_per_side or cells_per_side < 1:
            raise ParameterError("cells_per_side must be a positive integer")
        m = int(cells_per_side)
        eta = params.ell / m
    radius = optimal_radius(epsilon)
    if mu.total_mass <= 0:
        return RecoveryPlan(params, epsilon, eta, m, (), radius, math.inf, seed)
    mu = _regularize(mu)
    W = _overlap_weights(mu.n, params.ell, m)
    masses = W @ mu.grid @ W.T * mu.cell_area
    coef = L / (3.0 ** (2.0 / 3.0) * math.pi)
    cells = []
    for a in range(m):
        for b in range(m):
            # tiny negative round-off before the floor would drop a whole droplet
            cells.append(CellCount((a, b), float(masses[a, b]), int(math.floor(coef * masses[a, b] + 1e-12))))
    total = sum(c.count for c in cells)
    spacing = SPACING_CONSTANT * params.ell / math.sqrt(total) if total else math.inf
    return RecoveryPlan(params, epsilon, eta, m, tuple(cells), radius, spacing, seed)


def _torus_pairwise_min(pts: np.ndarray, ell: float) -> float:
    if len(pts) < 2:
        return math.inf
    d = pts[:, None, :] - pts[None, :, :]
    d -= ell * np.round(d / ell)
    r = np.hypot(d[..., 0], d[..., 1])
    r[np.diag_indices(len(pts))] = np.inf
    return float(r.min())


def _place_cell(cell: CellCount, plan: RecoveryPlan) -> np.ndarray:
    eta = plan.eta
    x0 = np.array(cell.index, float) * eta
    k = cell.count
    if k == 1:
        return (x0 + eta / 2)[None, :]
    d = plan.min_spacing
    inner = eta - d  # margin d/2 on each side keeps cross-cell pairs >= d apart
    if inner <= 0:
        raise ConstructionError(f"cell {cell.index}: side {eta:.4g} below min_spacing {d:.4g}")
    s = math.ceil(math.sqrt(k))
    pitch = inner / s
    jitter = max(0.0, 0.25 * (pitch - d))
    rng = np.random.default_rng([plan.seed, cell.index[0] * plan.cells_per_side + cell.index[1]])
    I, J = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
    sites = x0 + d / 2 + (np.stack([I.ravel(), J.ravel()], -1) + 0.5) * pitch
    for _ in range(_MAX_TRIES):
        chosen = sites if k == s * s else sites[np.sort(rng.choice(s * s, size=k, replace=False))]
        pts = chosen + rng.uniform(-jitter, jitter, chosen.shape)
        if _torus_pairwise_min(pts, plan.params.ell) >= d:
            return pts
    raise ConstructionError(f"cell {cell.index}: cannot place {k} droplets {d:.4g} apart")


def place_droplets(plan: RecoveryPlan) -> np.ndarray:
    """Centers for every cell, in row-major cell order; reproducible for a given seed."""
    if plan.total_count == 0:
        return np.zeros((0, 2))
    if 2.0 * plan.radius >= plan.min_spacing:
        raise ConstructionError(f"radius {plan.radius:.4g} too large for min_spacing {plan.min_spacing:.4g}")
    pts = np.concatenate([_place_cell(c, plan) for c in plan.cells if c.count > 0]) % plan.params.ell
    # single-droplet cells skip the in-cell check; verify the spacing contract globally
    dmin = _torus_pairwise_min(pts, plan.params.ell)
    if dmin < plan.min_spacing * (1 - 1e-12):
        raise ConstructionError(f"placed droplets only {dmin:.4g} apart, below min_spacing {plan.min_spacing:.4g}")
    return pts


def build_recovery_with_plan(
    mu: DensityMeasure, epsilon: float, params: TorusParams, seed: int = 0
) -> tuple[DropletConfig, RecoveryPlan]:
    plan = partition_counts(mu, epsilon, params, seed)
    centers = place_droplets(plan)
    return disk_config(params, epsilon, centers, np.full(len(centers), plan.radius)), plan


def build_recovery(mu: DensityMeasure, epsilon: float, params: TorusParams, seed: int = 0) -> DropletConfig:
    """Equal optimal-radius disks realizing mu at scale eps."""
    return build_recovery_with_plan(mu, epsilon, params, seed)[0]


def measure_fourier(config: DropletConfig, k) -> np.ndarray:
    """Fourier coefficients (1/ell^2) int e^{-i k.x} dmu^eps for wavevectors k[..., 2] (disks)."""
    k = np.atleast_2d(np.asarray(k, float))
    kn = np.hypot(k[:, 0], k[:, 1])
    out = np.zeros(len(k), complex)
    s = density_scale(config.epsilon)
    for d in config.droplets:
        a = d.shape.radius
        x = kn * a
        form = np.where(x > 0, 2.0 * special.j1(x) / np.where(x > 0, x, 1.0), 1.0)
        out += s * math.pi * a * a * form * np.exp(-1j * (k @ d.center))
    return out / config.params.area


def density_fourier(mu: DensityMeasure, k) -> np.ndarray:
    """Fourier coefficients of a grid density at wavevectors that are multiples of 2 pi/ell."""
    k = np.atleast_2d(np.asarray(k, float))
    x = np.arange(mu.n) * (mu.ell / mu.n)
    out = []
    for kx, ky in k:
        ph = np.exp(-1j * kx * x)[:, None] * np.exp(-1j * ky * x)[None, :]
        out.append(np.sum(mu.grid * ph) * mu.cell_area)
    return np.array(out) / mu.ell**2


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    log_eps: float
    count: int
    eta: float
    radius: float
    mass: float
    perimeter_term: float
    area_term: float
    self_interaction: float
    pair_interaction: float
    total_rescaled: float
    limit_target: float  # E0[mu] - background
    gap: float

    @property
    def relative_gap(self) -> float:
        return self.gap / abs(self.limit_target) if self.limit_target else math.inf


def sweep_row(config: DropletConfig, plan: RecoveryPlan, g: GreenEvaluator, target: float) -> tuple[SweepRow, EnergyBreakdown]:
    e = sharp_energy(config, g)
    L = log_eps(config.epsilon)
    mass = OPTIMAL_AREA * len(config) / L
    row = SweepRow(
        config.epsilon, L, len(config), plan.eta, plan.radius, mass,
        e.perimeter_term, e.area_term, e.self_interaction, e.pair_interaction,
        e.total_rescaled, target, abs(e.total_rescaled - target),
    )
    return row, e


def recovery_sweep(mu: DensityMeasure, eps_list, params: TorusParams, g: GreenEvaluator, seed: int = 0):
    """Gamma-limit experiment: one (row, config) per eps, gap against E0[mu] minus background."""
    target = limit_energy(mu, params) - params.background
    out = []
    for eps in eps_list:
        cfg, plan = build_recovery_with_plan(mu, eps, params, seed)
        row, _ = sweep_row(cfg, plan, g, target)
        out.append((row, cfg))
    return out
