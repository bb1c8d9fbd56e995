"""Gamma-limit functional over droplet densities.

E0[mu] = delta_bar^2 ell^2/(2 kappa^2) + (3^{2/3} - 2 delta_bar/kappa^2) int dmu + 2 iint G dmu dmu,
equivalently, with -Lap v + kappa^2 v = mu,
E0 = ell^2 delta_bar^2/(2 kappa^2) + (3^{2/3} kappa^2 - 2 delta_bar) int v + 2 int |grad v|^2 + kappa^2 v^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .droplets import OPTIMAL_AREA, DensityMeasure
from .errors import ConsistencyError, DomainError, ParameterError
from .torus import TorusParams, grid_wavenumbers, log_eps

DROPLET_MIN_VALUE = 3.0 ** (2.0 / 3.0)  # min over x of f(x), reached at x = OPTIMAL_AREA
_COULOMB_RTOL = 1e-6
_LOCAL_RTOL = 1e-8


@dataclass(frozen=True)
class PotentialField:
    grid: np.ndarray
    params: TorusParams
    smeared: bool = False

    @property
    def n(self) -> int:
        return self.grid.shape[0]

    def integral(self) -> float:
        return float(self.grid.sum()) * (self.params.ell / self.n) ** 2


def _grid_density(mu: DensityMeasure, params: TorusParams) -> tuple[DensityMeasure, bool]:
    if not math.isclose(mu.ell, params.ell, rel_tol=1e-14):
        raise ParameterError("density and torus use different side lengths")
    return mu.smeared()


def _symbol(n: int, params: TorusParams):
    KX, KY = grid_wavenumbers(n, params.ell)
    return KX, KY, params.kappa**2 + KX**2 + KY**2


def solve_potential(mu: DensityMeasure, params: TorusParams) -> PotentialField:
    """Spectral solution of -Lap v + kappa^2 v = mu on the node grid."""
    m, flag = _grid_density(mu, params)
    _, _, sym = _symbol(m.n, params)
    v = np.fft.ifft2(np.fft.fft2(m.grid) / sym).real
    return PotentialField(v, params, flag)


def potential_residual(v: PotentialField, mu: DensityMeasure) -> float:
    """Max-norm of -Lap v + kappa^2 v - mu with the spectral Laplacian."""
    m, _ = _grid_density(mu, v.params)
    _, _, sym = _symbol(v.n, v.params)
    lhs = np.fft.ifft2(np.fft.fft2(v.grid) * sym).real
    return float(np.max(np.abs(lhs - m.grid)))


def _coulomb_spectral(grid: np.ndarray, params: TorusParams) -> float:
    n = grid.shape[0]
    h = params.ell / n
    _, _, sym = _symbol(n, params)
    F = np.fft.fft2(grid)
    return float(h**4 / params.ell**2 * np.sum(np.abs(F) ** 2 / sym))


def field_energy(v: np.ndarray, params: TorusParams) -> float:
    """Grid integral of |grad v|^2 + kappa^2 v^2 with spectral gradients.

    The gradient is kept complex so the Nyquist modes keep their derivative; the
    node sum then equals the discrete Parseval sum exactly.
    """
    n = v.shape[0]
    F = np.fft.fft2(v)
    KX, KY = grid_wavenumbers(n, params.ell)
    vx = np.fft.ifft2(1j * KX * F)
    vy = np.fft.ifft2(1j * KY * F)
    h = params.ell / n
    return float(h * h * np.sum(np.abs(vx) ** 2 + np.abs(vy) ** 2 + params.kappa**2 * v**2))


def coulomb_energy(mu: DensityMeasure, params: TorusParams, rtol: float = _COULOMB_RTOL) -> float:
    """iint G dmu dmu: spectral sum (returned) checked against the field energy of v."""
    m, _ = _grid_density(mu, params)
    primary = _coulomb_spectral(m.grid, params)
    v = solve_potential(m, params)
    check = field_energy(v.grid, params)
    scale = max(abs(primary), abs(check))
    if scale > 0 and abs(primary - check) > rtol * scale:
        raise ConsistencyError(f"Coulomb energy routes disagree: {primary!r} vs {check!r}")
    return primary


def limit_energy(mu: DensityMeasure, params: TorusParams) -> float:
    """E0[mu], nonlocal form, checked against the local form in the limit potential."""
    if np.any(mu.grid < -1e-12):
        raise DomainError("density samples must be nonnegative")
    m, _ = _grid_density(mu, params)
    kappa2 = params.kappa**2
    mass = m.total_mass
    coul = coulomb_energy(m, params)
    E = params.background + (DROPLET_MIN_VALUE - 2.0 * params.delta_bar / kappa2) * mass + 2.0 * coul
    v = solve_potential(m, params)
    local = (
        params.background
        + (DROPLET_MIN_VALUE * kappa2 - 2.0 * params.delta_bar) * v.integral()
        + 2.0 * field_energy(v.grid, params)
    )
    if abs(E - local) > _LOCAL_RTOL * max(abs(E), abs(local), params.background):
        raise ConsistencyError(f"local and nonlocal limit energies disagree: {E!r} vs {local!r}")
    return float(E)


def constant_limit_energy(m: float, params: TorusParams) -> float:
    """E0 of the constant density m, in closed form (int G = 1/kappa^2)."""
    area = params.area
    return (
        params.background
        + (DROPLET_MIN_VALUE - 2.0 * params.delta_bar / params.kappa**2) * m * area
        + 2.0 * m * m * area / params.kappa**2
    )


def critical_delta(params: TorusParams) -> float:
    return 0.5 * DROPLET_MIN_VALUE * params.kappa**2


def optimal_constant_density(params: TorusParams) -> tuple[float, float, float]:
    """(mu_bar, minimal energy per unit area, delta_c) over constant densities."""
    dc = critical_delta(params)
    d = params.delta_bar
    k2 = params.kappa**2
    if d <= dc:
        return 0.0, d * d / (2.0 * k2), dc
    return 0.5 * (d - dc), dc * (2.0 * d - dc) / (2.0 * k2), dc


def golden_section(f, a: float, b: float, tol: float = 1e-12, max_iter: int = 500) -> float:
    """Minimize a unimodal f on [a, b]; returns the midpoint of the final bracket."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def parabolic_polish(f, x: float, h: float, steps: int = 2, lower: float | None = None) -> float:
    """Newton steps on symmetric differences; third-derivative bias O(h^2), rounding O(ulp/h)."""
    for _ in range(steps):
        f0, fp, fm = f(x), f(x + h), f(x - h)
        curv = fp - 2.0 * f0 + fm
        if curv <= 0:
            break
        x -= 0.5 * h * (fp - fm) / curv
        if lower is not None:
            x = max(x, lower)
    return x


def minimize_constant_density(params: TorusParams, grid_n: int = 64, m_max: float | None = None) -> float:
    """Numerical argmin over m >= 0 of limit_energy(uniform m): golden section, then a parabolic polish."""
    if m_max is None:
        m_max = max(1.0, 2.0 * params.delta_bar)

    def f(m):
        return limit_energy(DensityMeasure.uniform(grid_n, params.ell, max(m, 0.0)), params)

    m = golden_section(f, 0.0, m_max)
    h = 1e-4 * m_max
    if m <= h:
        return 0.0 if f(0.0) <= f(h) else m
    return parabolic_polish(f, m, min(h, 0.5 * m), lower=0.0)


def droplet_profile_f(x):
    """f(x) = 2 sqrt(pi)/sqrt(x) + x/(3 pi) with f'' = 3 sqrt(pi)/(2 x^{5/2}).

    Returns (f, f'', argmin, min_value); argmin = 3^{2/3} pi and min_value = 3^{2/3}.
    """
    x = np.asarray(x, float)
    if np.any(x <= 0):
        raise DomainError("droplet profile defined for x > 0")
    f = 2.0 * math.sqrt(math.pi) / np.sqrt(x) + x / (3.0 * math.pi)
    f2 = 3.0 * math.sqrt(math.pi) / (2.0 * x**2.5)
    if f.ndim == 0:
        f, f2 = float(f), float(f2)
    return f, f2, OPTIMAL_AREA, DROPLET_MIN_VALUE


def delta_bar_for_count(count: float, epsilon: float, ell: float, kappa: float) -> float:
    """delta_bar whose optimal constant density puts `count` optimal droplets on the torus at eps.

    count = 3^{-2/3} |ln eps| mu_bar ell^2 / pi and mu_bar = (delta_bar - delta_c)/2.
    """
    mu_bar = count * OPTIMAL_AREA / (log_eps(epsilon) * ell * ell)
    return 0.5 * DROPLET_MIN_VALUE * kappa**2 + 2.0 * mu_bar
