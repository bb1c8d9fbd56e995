"""Diffuse-interface energy on a periodic grid, lifting of sharp droplets, truncation.

    E[u] = int eps^2/2 |grad u|^2 + W(u) + 1/2 (u - ubar)(-Lap)^{-1}(u - ubar) dx
with W(u) = (9/32)(1 - u^2)^2 and mean(u) = ubar = -1 + eps^{2/3}|ln eps|^{1/3} delta_bar.
The nonlocal operator is the unscreened inverse Laplacian on mean-zero data; screening
in the sharp limit comes from W''(-1) = 9/4 = 1/kappa^2 at kappa = 2/3.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy import fft, integrate
from shapely.geometry import Point
from shapely.geometry import Polygon as ShapelyPolygon

from .droplets import DensityMeasure, DropletConfig, density_scale
from .errors import ConstraintError, LiftingError, ParameterError, StepSizeError
from .green import GreenEvaluator
from .sharp import background_density, sharp_energy
from .torus import TorusParams, fft_workers, grid_coords, log_eps, wrap

WELL_COEFFICIENT = 9.0 / 32.0
STABILIZATION = 9.0 / 8.0  # half of max |W''| on [-1, 1]
_MEAN_TOL = 1e-10


def well(u):
    u = np.asarray(u, float)
    # (1 - u)(1 + u) keeps 1 + u exact near the majority well
    return WELL_COEFFICIENT * ((1.0 - u) * (1.0 + u)) ** 2


def well_derivative(u):
    u = np.asarray(u, float)
    return 4.0 * WELL_COEFFICIENT * u * (u - 1.0) * (u + 1.0)


@dataclass(frozen=True)
class DoubleWellReport:
    lam: float
    well_coefficient: float  # W = c (1 - u^2)^2 after rescaling
    ell_factor: float  # ell = ell_factor * ell_tilde
    eps_factor: float  # eps = eps_factor * eps_tilde
    second_derivative_at_one: float
    kappa: float  # 1/sqrt(W''(1))
    profile_integral: float  # int_{-1}^{1} sqrt(2 W) du
    normalized: bool


def normalize_double_well(lam: float) -> DoubleWellReport:
    """Rescale W~ = (1 - u^2)^2/4 by lam: W = lam^2 W~, ell = lam ell~, eps = lam^2 eps~."""
    if not lam > 0:
        raise ParameterError("lambda must be positive")
    c = lam * lam / 4.0
    w2 = 8.0 * c
    prof = integrate.quad(lambda u: math.sqrt(2.0 * c) * (1.0 - u * u), -1.0, 1.0, epsabs=1e-14)[0]
    ok = math.isclose(w2, 9.0 / 4.0, rel_tol=1e-12) and math.isclose(prof, 1.0, rel_tol=1e-12)
    return DoubleWellReport(lam, c, lam, lam * lam, w2, 1.0 / math.sqrt(w2), prof, ok)


# ---- fields ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseField:
    grid: np.ndarray
    epsilon: float
    params: TorusParams
    mass_constrained: bool = True

    def __post_init__(self):
        g = np.asarray(self.grid, float)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ParameterError("phase field grid must be square")
        object.__setattr__(self, "grid", g)
        if self.mass_constrained and abs(g.mean() - self.ubar) >= _MEAN_TOL:
            raise ConstraintError(f"mean {g.mean():.15g} differs from {self.ubar:.15g}")

    @property
    def n(self) -> int:
        return self.grid.shape[0]

    @property
    def h(self) -> float:
        return self.params.ell / self.n

    @property
    def ubar(self) -> float:
        return background_density(self.epsilon, self.params)

    @property
    def sup_norm(self) -> float:
        return float(np.abs(self.grid).max())


def uniform_field(n: int, epsilon: float, params: TorusParams) -> PhaseField:
    return PhaseField(np.full((n, n), background_density(epsilon, params)), epsilon, params)


@dataclass(frozen=True)
class DiffuseBreakdown:
    gradient_term: float
    well_term: float
    nonlocal_term: float
    total: float
    rescaled: float  # eps^{-4/3} |ln eps|^{-2/3} total

    def as_dict(self) -> dict:
        return asdict(self)


class _Spectrum:
    """Half-plane (rfft2) wavenumber tables for an n x n grid of side ell."""

    def __init__(self, n: int, ell: float):
        self.n, self.ell = n, ell
        k1 = 2.0 * np.pi * np.fft.fftfreq(n, d=ell / n)
        kr = 2.0 * np.pi * np.fft.rfftfreq(n, d=ell / n)
        self.k2 = k1[:, None] ** 2 + kr[None, :] ** 2
        self.inv = np.zeros_like(self.k2)
        self.inv[self.k2 > 0] = 1.0 / self.k2[self.k2 > 0]
        # each interior half-plane column stands for a conjugate pair
        self.weight = np.full(self.k2.shape, 2.0)
        self.weight[:, 0] = 1.0
        if n % 2 == 0:
            self.weight[:, -1] = 1.0
        self.workers = fft_workers()

    def forward(self, u):
        return fft.rfft2(u, workers=self.workers)

    def inverse(self, U):
        return fft.irfft2(U, s=(self.n, self.n), workers=self.workers)

    def parts(self, U, eps: float) -> tuple[float, float]:
        """(eps^2/2 int |grad u|^2, 1/2 int u (-Lap)^{-1} u) from the rfft2 of u; mean ignored."""
        p = self.weight * np.abs(U) ** 2 * (self.ell / self.n**2) ** 2
        grad = 0.5 * eps * eps * float(np.sum(self.k2 * p))
        return grad, 0.5 * float(np.sum(self.inv * p))


def _check_resolution(n: int, ell: float, eps: float) -> None:
    if eps / (ell / n) < 2.0:
        warnings.warn(f"interface under-resolved: eps/h = {eps * n / ell:.3g} < 2", stacklevel=3)


def diffuse_energy(field: PhaseField) -> DiffuseBreakdown:
    """Spectral gradient and nonlocal terms, pointwise double well."""
    if not field.mass_constrained:
        raise ConstraintError("the nonlocal term needs a mass-constrained field")
    u = field.grid
    ell, eps = field.params.ell, field.epsilon
    _check_resolution(field.n, ell, eps)
    sp = _Spectrum(field.n, ell)
    return _breakdown(sp, sp.forward(u), u, eps, field.h)


def _breakdown(sp: _Spectrum, U, u, eps: float, h: float) -> DiffuseBreakdown:
    grad, nl = sp.parts(U, eps)
    w = float(np.sum(well(u))) * h * h
    total = grad + w + nl
    L = log_eps(eps)
    return DiffuseBreakdown(grad, w, nl, total, total * eps ** (-4.0 / 3.0) * L ** (-2.0 / 3.0))


# ---- lifting ----------------------------------------------------------------------------

def _polygon_distance(P: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Unsigned distance from points P (m, 2) to the closed polyline through vertices v."""
    best = np.full(len(P), np.inf)
    for a, b in zip(v, np.roll(v, -1, axis=0)):
        e = b - a
        t = np.clip(((P - a) @ e) / float(e @ e), 0.0, 1.0)
        q = a + t[:, None] * e
        best = np.minimum(best, np.hypot(P[:, 0] - q[:, 0], P[:, 1] - q[:, 1]))
    return best


def _signed_distance(config: DropletConfig, n: int) -> np.ndarray:
    """Signed torus distance to the union of droplet boundaries, positive inside.

    For disjoint droplets the max over droplets of the per-droplet signed distance is
    exact: inside a droplet its own boundary is the nearest, outside all of them the
    nearest boundary wins.
    """
    ell = config.params.ell
    X, Y = grid_coords(n, ell)
    pts = np.stack([X.ravel(), Y.ravel()], -1)
    d = np.full(len(pts), -np.inf)
    for drop in config.droplets:
        rel = wrap(pts - drop.center, ell)
        if drop.is_disk:
            di = drop.shape.radius - np.hypot(rel[:, 0], rel[:, 1])
        else:
            di = _polygon_distance(rel, drop.shape.vertices)
            inside = drop.shape.contains(rel[:, 0], rel[:, 1])
            di = np.where(inside, di, -di)
        d = np.maximum(d, di)
    return d.reshape(n, n)


def _min_boundary_gap(config: DropletConfig) -> float:
    ell = config.params.ell
    drops = config.droplets
    best = math.inf
    for i in range(len(drops)):
        for j in range(i + 1, len(drops)):
            shift = wrap(drops[j].center - drops[i].center, ell)
            a, b = drops[i], drops[j]
            if a.is_disk and b.is_disk:
                gap = float(np.hypot(*shift)) - a.shape.radius - b.shape.radius
            else:
                pa = _local_shape(a, np.zeros(2))
                pb = _local_shape(b, shift)
                gap = pa.distance(pb)
            best = min(best, gap)
    return best


def _local_shape(d, offset):
    if d.is_disk:
        return Point(*offset).buffer(d.shape.radius, quad_segs=64)
    return ShapelyPolygon(d.shape.vertices + offset)


def _taper(u0: np.ndarray) -> np.ndarray:
    """Weight of the majority-phase shift: 1 at u = -1, 0 for u >= 0, C^1 at u = 0."""
    t = np.clip(-u0, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def lift_config(config: DropletConfig, grid_n: int) -> PhaseField:
    """tanh(3 d/(4 eps)) profile across each droplet boundary, then a mass fix on {u < 0}.

    The shift added to the majority phase is c * taper(u0), with c chosen so the mean
    equals ubar; the taper keeps u continuous across the zero level set.
    """
    eps = config.epsilon
    p = config.params
    if len(config) > 1 and _min_boundary_gap(config) < 8.0 * eps:
        raise LiftingError("droplet interfaces closer than 8 eps")
    _check_resolution(grid_n, p.ell, eps)
    if len(config):
        u0 = np.tanh(3.0 * _signed_distance(config, grid_n) / (4.0 * eps))
    else:
        u0 = np.full((grid_n, grid_n), -1.0)
    w = _taper(u0)
    ubar = background_density(eps, p)
    c = (ubar - u0.mean()) / w.mean()
    u = u0 + c * w
    # one correction absorbs round-off in the mean; skipped when already exact to avoid ulp noise
    drift = ubar - u.mean()
    if abs(drift) > 1e-13:
        u += drift * w / w.mean()
    return PhaseField(u, eps, p)


# ---- truncation --------------------------------------------------------------------------

def truncate_field(field: PhaseField) -> tuple[np.ndarray, DensityMeasure]:
    """Binary field (+1 where u > 0, -1 elsewhere) and its droplet measure."""
    u0 = np.where(field.grid > 0.0, 1.0, -1.0)
    mu = DensityMeasure(0.5 * density_scale(field.epsilon) * (1.0 + u0), field.params.ell)
    return u0, mu


def interface_volume(field: PhaseField, delta: float) -> float:
    """|{-1 + delta <= u <= 1 - delta}|."""
    u = field.grid
    return float(np.count_nonzero((u >= -1.0 + delta) & (u <= 1.0 - delta))) * field.h**2


def interface_constant(field: PhaseField, delta: float) -> float:
    """Measured C in |{-1+delta <= u <= 1-delta}| <= C eps^{4/3} |ln eps|^{2/3} delta^{-2}."""
    eps = field.epsilon
    scale = eps ** (4.0 / 3.0) * log_eps(eps) ** (2.0 / 3.0) / delta**2
    return interface_volume(field, delta) / scale


# ---- relaxation --------------------------------------------------------------------------

def stability_bound(stabilization: float = STABILIZATION) -> float:
    """Largest dt with guaranteed energy decay for |u| <= 1 (inf once S >= max|W''|/2)."""
    excess = 0.5 * 8.0 * WELL_COEFFICIENT - stabilization  # max|W''| = W''(+-1) = 8 c
    return math.inf if excess <= 0 else 1.0 / excess


def relax_field(
    field: PhaseField,
    steps: int,
    dt: float,
    stabilization: float = STABILIZATION,
    history: list | None = None,
) -> PhaseField:
    """Stabilized semi-implicit spectral steps of the mass-projected L^2 gradient flow.

    (1 + dt (eps^2 k^2 + 1/k^2 + S)) u_new^ = (1 + dt S) u^ - dt P[W'(u)]^,  k != 0,
    with the k = 0 mode (the mean) left unchanged.
    """
    if not field.mass_constrained:
        raise ConstraintError("relax_field needs a mass-constrained field")
    if not dt > 0:
        raise ParameterError("dt must be positive")
    eps, ell, n = field.epsilon, field.params.ell, field.n
    _check_resolution(n, ell, eps)
    sp = _Spectrum(n, ell)
    denom = 1.0 + dt * (eps * eps * sp.k2 + sp.inv + stabilization)
    ubar = field.ubar
    u = field.grid.copy()
    U = sp.forward(u)
    E = _breakdown(sp, U, u, eps, field.h).total
    if history is not None:
        history.append(E)
    for _ in range(steps):
        F = sp.forward(well_derivative(u))
        Un = ((1.0 + dt * stabilization) * U - dt * F) / denom
        Un[0, 0] = U[0, 0]  # the mean is frozen, which is the projection
        un = sp.inverse(Un)
        drift = ubar - un.mean()
        un += drift
        Un[0, 0] += drift * n * n
        En = _breakdown(sp, Un, un, eps, field.h).total
        if En > E + 1e-14 * abs(E):
            raise StepSizeError(f"energy increased at dt = {dt:g}", suggested_dt=0.5 * dt)
        u, U, E = un, Un, En
        if history is not None:
            history.append(E)
    return PhaseField(u, eps, field.params)


# ---- comparison ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ComparisonReport:
    epsilon: float
    grid_n: int
    sharp: float  # physical E^eps of the droplet configuration
    diffuse: float  # physical diffuse energy of the lifted field
    ratio: float
    relaxed_diffuse: float
    relaxed_ratio: float
    sup_norm: float
    relaxed_sup_norm: float

    def as_dict(self) -> dict:
        return asdict(self)


def compare_energies(
    config: DropletConfig, g: GreenEvaluator, grid_n: int, relax_steps: int = 10, dt: float = 1.0
) -> ComparisonReport:
    """Diffuse energy of the lift over the sharp energy, before and after flow polishing."""
    E_sharp = sharp_energy(config, g).total_physical
    field = lift_config(config, grid_n)
    if field.sup_norm > 1.0 + 1e-6:
        warnings.warn(f"lifted field exceeds 1 in sup norm ({field.sup_norm:.6g})", stacklevel=2)
    E_lift = diffuse_energy(field).total
    relaxed = relax_field(field, relax_steps, dt) if relax_steps > 0 else field
    E_rel = diffuse_energy(relaxed).total
    return ComparisonReport(
        config.epsilon, grid_n, E_sharp, E_lift, E_lift / E_sharp, E_rel, E_rel / E_sharp,
        field.sup_norm, relaxed.sup_norm,
    )
