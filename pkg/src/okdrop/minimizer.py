"""Descent on droplet ensembles, almost-minimizer statistics and the lower-bound defect.

For disks the rescaled energy is an explicit function of centers c_i and radii a_i:
    Ebar = (1/L) sum_i (P_i - 2 delta_bar A_i / kappa^2)
         + 2 s^2 [ sum_i (W(a_i) + q_i^2 S0) + sum_{i != j} q_i q_j G(c_i - c_j) ]
with s the density scale, q the screened disk charge, W the free-space disk self
energy and S0 the regular value of G at the origin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .droplets import (
    OPTIMAL_AREA,
    DropletConfig,
    area_scale,
    density_scale,
    disk_config,
    length_scale,
    optimal_radius,
    rescaled_stats,
    shape_metrics,
)
from .errors import ParameterError, RelaxationError
from .green import GreenEvaluator
from .sharp import (
    _check_compatible,
    droplet_rule,
    disk_charge,
    disk_charge_derivative,
    free_disk_self,
    free_disk_self_derivative,
    raw_interaction_matrix,
    regular_origin_value,
    sharp_energy,
)
from .torus import log_eps, wrap

RADIUS_FLOOR = 1e-3  # in units of the optimal radius
_STALL_STEPS = 10  # consecutive accepted steps without a relative decrease above 1e-15


class DiskEnergy:
    """Ebar and its gradients for disk ensembles at fixed (params, eps)."""

    def __init__(self, g: GreenEvaluator, epsilon: float):
        self.g = g
        self.params = g.params
        self.epsilon = epsilon
        self.L = log_eps(epsilon)
        self.s2 = density_scale(epsilon) ** 2
        self.ls = length_scale(epsilon)
        self.As = area_scale(epsilon)
        self.S0 = regular_origin_value(g)
        self.kappa = self.params.kappa
        self.area_coef = 2.0 * self.params.delta_bar / self.kappa**2

    def _pairs(self, centers):
        n = len(centers)
        iu, ju = np.triu_indices(n, 1)
        return iu, ju, centers[iu] - centers[ju]

    def energy(self, centers, radii) -> float:
        c = np.asarray(centers, float)
        a = np.asarray(radii, float)
        q = disk_charge(a, self.kappa)
        local = np.sum(2.0 * np.pi * a * self.ls - self.area_coef * np.pi * a * a * self.As) / self.L
        inter = np.sum(free_disk_self(a, self.kappa) + q * q * self.S0)
        if len(a) > 1:
            iu, ju, d = self._pairs(c)
            inter += 2.0 * np.sum(q[iu] * q[ju] * self.g.value(d))
        return float(local + 2.0 * self.s2 * inter)

    def center_gradient(self, centers, radii) -> np.ndarray:
        """dEbar/dc_i = 4 s^2 q_i sum_j q_j grad G(c_i - c_j)."""
        c = np.asarray(centers, float)
        a = np.asarray(radii, float)
        n = len(a)
        grad = np.zeros((n, 2))
        if n < 2:
            return grad
        q = disk_charge(a, self.kappa)
        iu, ju, d = self._pairs(c)
        _, gG = self.g.value_and_gradient(d)
        w = (q[iu] * q[ju])[:, None] * gG
        np.add.at(grad, iu, w)
        np.add.at(grad, ju, -w)
        return 4.0 * self.s2 * grad

    def radius_gradient(self, centers, radii) -> np.ndarray:
        c = np.asarray(centers, float)
        a = np.asarray(radii, float)
        q = disk_charge(a, self.kappa)
        dq = disk_charge_derivative(a, self.kappa)
        local = (2.0 * np.pi * self.ls - 2.0 * self.area_coef * np.pi * a * self.As) / self.L
        pot = np.full(len(a), self.S0) * q  # sum_j q_j G_ij with the regular self value on the diagonal
        if len(a) > 1:
            iu, ju, d = self._pairs(c)
            Gv = self.g.value(d)
            np.add.at(pot, iu, q[ju] * Gv)
            np.add.at(pot, ju, q[iu] * Gv)
        inter = free_disk_self_derivative(a, self.kappa) + 2.0 * dq * pot
        return local + 2.0 * self.s2 * inter


def _valid(centers, radii, ell) -> bool:
    if np.any(radii >= ell / 4):
        return False
    n = len(radii)
    if n < 2:
        return True
    d = centers[:, None, :] - centers[None, :, :]
    d -= ell * np.round(d / ell)
    r = np.hypot(d[..., 0], d[..., 1])
    gap = r - radii[:, None] - radii[None, :]
    gap[np.diag_indices(n)] = np.inf
    return bool(gap.min() > 0)


def _min_pair_distance(centers, ell) -> float:
    n = len(centers)
    if n < 2:
        return math.inf
    d = centers[:, None, :] - centers[None, :, :]
    d -= ell * np.round(d / ell)
    r = np.hypot(d[..., 0], d[..., 1])
    r[np.diag_indices(n)] = np.inf
    return float(r.min())


@dataclass
class TraceRow:
    step: int
    energy: float
    max_gradient: float
    min_pair_distance: float
    area_mean: float
    area_std: float


def _trace_row(step, E, gmax, centers, radii, epsilon, ell):
    A = np.pi * radii**2 * area_scale(epsilon)
    return TraceRow(step, E, gmax, _min_pair_distance(centers, ell), float(A.mean()), float(A.std()))


def _descend(x0, f, grad, valid, project, max_steps, tol, step0, on_accept=None):
    """Projected gradient descent with Barzilai-Borwein trial steps and halving backtracking.

    Accepts only steps that keep the state valid and do not increase f.
    """
    x = x0.copy()
    fx = f(x)
    gx = grad(x)
    t = step0
    history = [fx]
    stalled = 0
    for k in range(max_steps):
        gmax = float(np.max(np.abs(gx))) if gx.size else 0.0
        if gmax < tol or stalled >= _STALL_STEPS:
            break
        tt = t
        for _ in range(60):
            xn = project(x - tt * gx)
            if valid(xn):
                fn = f(xn)
                if fn <= fx:
                    break
            tt *= 0.5
        else:
            break  # no admissible decrease at any step size: stationary to rounding
        gn = grad(xn)
        sv, yv = (xn - x).ravel(), (gn - gx).ravel()
        sy = float(sv @ yv)
        t = float(sv @ sv) / sy if sy > 0 else 2.0 * tt
        if fn > fx:
            raise RelaxationError("energy increased across an accepted step")
        stalled = stalled + 1 if fx - fn <= 1e-15 * abs(fx) else 0
        x, fx, gx = xn, fn, gn
        history.append(fx)
        if on_accept is not None:
            on_accept(k + 1, x, fx, gx)
    return x, history


def relax_centers(
    config: DropletConfig,
    g: GreenEvaluator,
    max_steps: int = 500,
    step: float | None = None,
    tol: float = 1e-8,
    trace: list | None = None,
) -> DropletConfig:
    """Gradient descent of Ebar in the centers (radii fixed)."""
    if not config.all_disks:
        raise ParameterError("relax_centers requires disks")
    _check_compatible(config, g)
    if len(config) < 2:
        return config
    model = DiskEnergy(g, config.epsilon)
    ell = config.params.ell
    radii = config.radii
    if not _valid(config.centers, radii, ell):
        raise RelaxationError("initial configuration overlaps")

    def on_accept(k, x, fx, gx):
        if trace is not None:
            trace.append(_trace_row(k, fx, float(np.max(np.abs(gx))), x, radii, config.epsilon, ell))

    g0 = model.center_gradient(config.centers, radii)
    if step is None:
        gm = float(np.max(np.abs(g0)))
        step = 1e-3 * ell / gm if gm > 0 else 1.0
    x, _ = _descend(
        config.centers,
        lambda c: model.energy(c, radii),
        lambda c: model.center_gradient(c, radii),
        lambda c: _valid(c, radii, ell),
        lambda c: c,
        max_steps,
        tol,
        step,
        on_accept,
    )
    return config.with_disks(wrap(x, ell) % ell, radii)


def relax_areas(
    config: DropletConfig,
    g: GreenEvaluator,
    max_steps: int = 500,
    tol: float = 1e-10,
    trace: list | None = None,
) -> DropletConfig:
    """Gradient descent of Ebar in the radii (centers fixed), radii floored at 1e-3 r_opt."""
    if not config.all_disks:
        raise ParameterError("relax_areas requires disks")
    _check_compatible(config, g)
    if len(config) == 0:
        return config
    model = DiskEnergy(g, config.epsilon)
    ell = config.params.ell
    centers = config.centers
    unit = 1.0 / length_scale(config.epsilon)  # physical length of one rescaled unit
    floor = RADIUS_FLOOR * optimal_radius(config.epsilon) / unit
    if not _valid(centers, config.radii, ell):
        raise RelaxationError("initial configuration overlaps")

    def on_accept(k, R, fx, gx):
        if trace is not None:
            trace.append(_trace_row(k, fx, float(np.max(np.abs(gx))), centers, R * unit, config.epsilon, ell))

    R, _ = _descend(
        config.radii / unit,
        lambda R: model.energy(centers, R * unit),
        # projected gradient: components pushing below the floor are dropped
        lambda R: _floor_grad(R, unit * model.radius_gradient(centers, R * unit), floor),
        lambda R: _valid(centers, R * unit, ell),
        lambda R: np.maximum(R, floor),
        max_steps,
        tol,
        0.1,
        on_accept,
    )
    return config.with_disks(centers, R * unit)


def _floor_grad(R, gr, floor):
    gr = gr.copy()
    gr[(R <= floor) & (gr > 0)] = 0.0
    return gr


def relax_joint(
    config: DropletConfig,
    g: GreenEvaluator,
    rounds: int = 20,
    center_steps: int = 200,
    area_steps: int = 200,
    trace: list | None = None,
) -> DropletConfig:
    """Alternating block descent: centers, then radii, repeated."""
    cfg = config
    model = DiskEnergy(g, config.epsilon)
    E = model.energy(cfg.centers, cfg.radii)
    for _ in range(rounds):
        cfg = relax_centers(cfg, g, max_steps=center_steps, trace=trace)
        cfg = relax_areas(cfg, g, max_steps=area_steps, trace=trace)
        En = model.energy(cfg.centers, cfg.radii)
        if E - En <= 1e-14 * abs(E):
            break
        E = En
    return cfg


# ---- lower-bound defect -------------------------------------------------------------

def smoothstep_cutoff(r, rho: float):
    """Cubic smoothstep: 0 below rho/2, 1 above rho."""
    t = np.clip((np.asarray(r, float) - 0.5 * rho) / (0.5 * rho), 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def _extent(d) -> float:
    if d.is_disk:
        return d.shape.radius
    return float(np.max(np.hypot(*d.shape.vertices.T)))


def truncated_interaction(config: DropletConfig, g: GreenEvaluator, rho: float, quad_order: int = 16) -> np.ndarray:
    """Matrix of iint G_rho over Omega_i x Omega_j with G_rho = G phi_rho(|x - y|).

    Pairs entirely beyond rho reuse the full interaction, pairs entirely inside rho/2
    vanish, and the rest use tensor Gauss rules. G_rho varies on the scale rho, so
    droplets much smaller than rho get a low-order rule.
    """
    full = raw_interaction_matrix(config, g)
    n = len(config)
    T = np.zeros((n, n))
    ell = config.params.ell
    ext = [_extent(d) for d in config.droplets]
    rules = {}

    def rule(k):
        if k not in rules:
            order = quad_order if ext[k] > rho / 20 else min(quad_order, 6)
            rules[k] = droplet_rule(config.droplets[k], order)
        return rules[k]

    todo = []
    for i in range(n):
        for j in range(i, n):
            D = float(np.hypot(*wrap(config.droplets[i].center - config.droplets[j].center, ell)))
            lo = max(0.0, D - ext[i] - ext[j])
            hi = D + ext[i] + ext[j]
            if lo >= rho:
                T[i, j] = T[j, i] = full[i, j]
            elif hi > 0.5 * rho:
                todo.append((i, j))
    for i, j in todo:
        xi, wi = rule(i)
        xj, wj = rule(j)
        disp = wrap(xi[:, None, :] - xj[None, :, :], ell).reshape(-1, 2)
        r = np.hypot(disp[:, 0], disp[:, 1])
        phi = smoothstep_cutoff(r, rho)
        vals = np.zeros_like(r)
        on = phi > 0
        vals[on] = g.value(disp[on]) * phi[on]
        T[i, j] = T[j, i] = float(wi @ vals.reshape(len(xi), len(xj)) @ wj)
    return T


def defect_M(config: DropletConfig, g: GreenEvaluator, gamma: float, eta: float = 0.05, rho: float | None = None) -> float:
    """M = Ebar - (1/L)(3^{2/3} - 2 delta_bar/kappa^2 - eta) sum A_i - 2 iint G_rho dmu dmu."""
    ell = config.params.ell
    if rho is None:
        rho = ell / 8
    if not 0 < rho < ell / 4:
        raise ParameterError("rho must lie in (0, ell/4)")
    if not 0 < gamma < 1.0 / 3.0:
        raise ParameterError("gamma must lie in (0, 1/3)")
    if not eta > 0:
        raise ParameterError("eta must be positive")
    if len(config) == 0:
        return 0.0
    _check_compatible(config, g)
    p = config.params
    e = sharp_energy(config, g)
    L = log_eps(config.epsilon)
    area_sum = sum(d.area for d in config.droplets) * area_scale(config.epsilon)
    T = truncated_interaction(config, g, rho)
    far = 2.0 * density_scale(config.epsilon) ** 2 * float(T.sum())
    return e.total_rescaled - (3.0 ** (2.0 / 3.0) - 2.0 * p.delta_bar / p.kappa**2 - eta) * area_sum / L - far


# ---- statistics ------------------------------------------------------------------------

@dataclass(frozen=True)
class EnsembleStats:
    gamma: float
    in_window_count: int
    area_mean: float
    area_variance: float
    out_window_mass: float
    deficit_sum: float
    count_density: float


def ensemble_stats(config: DropletConfig, gamma: float) -> EnsembleStats:
    if not 0 < gamma < 1:
        raise ParameterError("gamma must lie in (0, 1)")
    L = log_eps(config.epsilon)
    st = rescaled_stats(config)
    A = np.asarray(st.areas)
    inside = (A >= OPTIMAL_AREA * gamma) & (A <= OPTIMAL_AREA / gamma)
    k = int(inside.sum())
    deficits = [shape_metrics(d, config.epsilon)[1] for d in config.droplets]
    return EnsembleStats(
        gamma=gamma,
        in_window_count=k,
        area_mean=float(A[inside].mean()) if k else 0.0,
        area_variance=float(A[inside].var()) if k else 0.0,
        out_window_mass=float(A[~inside].sum()) / L,
        deficit_sum=float(sum(deficits)) / L,
        count_density=OPTIMAL_AREA * k / L,
    )


def nearest_neighbor_cv(config: DropletConfig) -> float:
    """Coefficient of variation of nearest-neighbor center distances (torus metric)."""
    c = config.centers
    ell = config.params.ell
    d = c[:, None, :] - c[None, :, :]
    d -= ell * np.round(d / ell)
    r = np.hypot(d[..., 0], d[..., 1])
    r[np.diag_indices(len(c))] = np.inf
    nn = r.min(axis=1)
    return float(nn.std() / nn.mean())


def random_disk_start(
    params, epsilon: float, n: int, seed: int = 0, spacing: float | None = None, area_range=(0.5, 2.0)
) -> DropletConfig:
    """n disks with centers drawn by rejection (pairwise >= spacing) and rescaled areas
    uniform in area_range times the optimal area."""
    ell = params.ell
    if spacing is None:
        spacing = 0.4 * ell / math.sqrt(max(n, 1))
    rng = np.random.default_rng(seed)
    pts: list[np.ndarray] = []
    for _ in range(100000):
        if len(pts) == n:
            break
        p = rng.uniform(0, ell, 2)
        if all(np.hypot(*wrap(p - q, ell)) > spacing for q in pts):
            pts.append(p)
    else:
        raise ParameterError(f"cannot draw {n} centers {spacing:.4g} apart")
    A = OPTIMAL_AREA * rng.uniform(area_range[0], area_range[1], n)
    radii = np.sqrt(A / np.pi) / length_scale(epsilon)
    return disk_config(params, epsilon, np.array(pts).reshape(-1, 2), radii)
