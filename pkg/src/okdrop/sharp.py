"""Sharp-interface energy of droplet configurations.

Rescaled energy, with L = |ln eps| and mu_i the rescaled droplet measures,
    Ebar = (1/L) sum_i (P_i - 2 delta_bar A_i / kappa^2) + 2 sum_{i,j} iint G dmu_i dmu_j,
physical energy
    E = eps^{4/3} L^{2/3} (delta_bar^2 ell^2 / (2 kappa^2) + Ebar).

Disk integrals are exact.  Away from its singularity G solves the screened equation, so
the screened mean-value property gives int_{D(c,a)} G(x - y) dy = q(a) G(x - c) with
q(a) = 2 pi a I1(kappa a) / kappa.  Hence two disjoint disks interact through
q_i q_j G(c_i - c_j), and a disk's self term splits into the free-space Yukawa part
(closed form in Bessel functions) plus q^2 times the regular value of G - K0/(2 pi) at 0.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
import shapely
from scipy import optimize, special
from shapely.geometry import Polygon as ShapelyPolygon

from .droplets import DropletConfig, Droplet, area_scale, density_scale, length_scale
from .errors import GeometryError, ParameterError
from .green import EULER_GAMMA, GreenEvaluator
from .torus import TorusParams, log_eps


def background_density(epsilon: float, params: TorusParams) -> float:
    """Mean order parameter -1 + eps^{2/3} |ln eps|^{1/3} delta_bar."""
    L = log_eps(epsilon)
    return -1.0 + epsilon ** (2.0 / 3.0) * L ** (1.0 / 3.0) * params.delta_bar


# ---- disk closed forms ------------------------------------------------------------

def disk_charge(a, kappa: float):
    """q(a) = int over D_a of the screened mean-value weight = 2 pi a I1(kappa a)/kappa."""
    a = np.asarray(a, float)
    return 2.0 * np.pi * a * special.iv(1, kappa * a) / kappa


def disk_charge_derivative(a, kappa: float):
    """dq/da = 2 pi a I0(kappa a)."""
    a = np.asarray(a, float)
    return 2.0 * np.pi * a * special.iv(0, kappa * a)


def regular_origin_value(g: GreenEvaluator) -> float:
    """lim_{x->0} G(x) - K0(kappa|x|)/(2 pi) = R(0) + (ln(kappa/2) + gamma)/(2 pi)."""
    return g.r0 + (math.log(g.params.kappa / 2.0) + EULER_GAMMA) / (2.0 * np.pi)


def free_disk_self(a, kappa: float):
    """iint over D_a x D_a of K0(kappa|x-y|)/(2 pi)."""
    a = np.asarray(a, float)
    z = kappa * a
    # K1(z) I1(z) with exponential scalings cancelling
    return np.pi * a * a / kappa**2 * (1.0 - 2.0 * special.k1e(z) * special.ive(1, z))


def free_disk_self_derivative(a, kappa: float):
    """d/da of free_disk_self: both variables see the rim, so 2 * 2 pi a * u(a) with
    rim potential u(a) = (1 - z K1(z) I0(z))/kappa^2."""
    a = np.asarray(a, float)
    z = kappa * a
    return 4.0 * np.pi * a / kappa**2 * (1.0 - z * special.k1e(z) * special.ive(0, z))


def disk_self_integral(a, g: GreenEvaluator):
    """iint over D_a x D_a of G(x - y)."""
    kappa = g.params.kappa
    q = disk_charge(a, kappa)
    return free_disk_self(a, kappa) + q * q * regular_origin_value(g)


def disk_log_self(a):
    """iint over D_a x D_a of ln|x - y| = pi^2 a^4 (ln a - 1/4)."""
    a = np.asarray(a, float)
    return np.pi**2 * a**4 * (np.log(a) - 0.25)


# ---- quadrature rules -------------------------------------------------------------

def disk_rule(center, radius: float, order: int):
    """Polar Gauss rule on a disk: Gauss-Legendre in r (weight r), 2*order angles."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    r = 0.5 * radius * (xg + 1.0)
    wr = 0.5 * radius * wg * r
    nt = 2 * order
    th = 2.0 * np.pi * (np.arange(nt) + 0.5) / nt
    R, TH = np.meshgrid(r, th, indexing="ij")
    W = np.repeat(wr[:, None], nt, axis=1) * (2.0 * np.pi / nt)
    pts = np.stack([center[0] + R * np.cos(TH), center[1] + R * np.sin(TH)], -1).reshape(-1, 2)
    return pts, W.reshape(-1)


def _triangle_rule(order: int):
    """Collapsed (Duffy) Gauss rule on the reference triangle (0,0),(1,0),(0,1)."""
    xg, wg = np.polynomial.legendre.leggauss(order)
    u = 0.5 * (xg + 1.0)
    wu = 0.5 * wg
    U, V = np.meshgrid(u, u, indexing="ij")
    W = np.outer(wu, wu) * (1.0 - U)
    return np.stack([U.ravel(), (V * (1.0 - U)).ravel()], -1), W.ravel()


def triangulate(vertices) -> list[np.ndarray]:
    tris = shapely.constrained_delaunay_triangles(ShapelyPolygon(vertices))
    return [np.array(t.exterior.coords)[:3] for t in tris.geoms]


def polygon_rule(center, vertices, order: int):
    ref, wref = _triangle_rule(order)
    pts, wts = [], []
    for t in triangulate(vertices):
        a, b, c = t
        J = np.column_stack([b - a, c - a])
        det = abs(np.linalg.det(J))
        pts.append(a + ref @ J.T)
        wts.append(wref * det)
    return np.concatenate(pts) + np.asarray(center), np.concatenate(wts)


def droplet_rule(d: Droplet, order: int):
    if d.is_disk:
        return disk_rule(d.center, d.shape.radius, order)
    return polygon_rule(d.center, d.shape.vertices, order)


def polygon_log_potential(vertices, x):
    """Phi(x) = int_P ln|x - y| dy for points x[..., 2], via the boundary identity
    Phi(x) = sum over edges of (h_e / 4) int_e (2 ln|y - x| - 1) ds,
    h_e = signed distance from x to the edge line (outward normal)."""
    v = np.asarray(vertices, float)
    x = np.asarray(x, float)
    out = np.zeros(x.shape[:-1])
    nv = len(v)
    for k in range(nv):
        A, B = v[k], v[(k + 1) % nv]
        e = B - A
        ln = math.hypot(*e)
        t = e / ln
        n = np.array([t[1], -t[0]])  # outward for counter-clockwise polygons
        dA = A - x
        h = dA @ n
        s1 = dA @ t
        s2 = s1 + ln

        def prim(s):
            r2 = h * h + s * s
            with np.errstate(divide="ignore", invalid="ignore"):
                val = np.where(r2 > 0, s * np.log(np.where(r2 > 0, r2, 1.0)), 0.0) - 3.0 * s
                val = val + np.where(h != 0, 2.0 * h * np.arctan(s / np.where(h != 0, h, 1.0)), 0.0)
            return val

        out += h * (prim(s2) - prim(s1)) / 4.0
    return out


# ---- interaction matrix -----------------------------------------------------------

def _pair_quadrature(g: GreenEvaluator, xi, wi, xj, wj):
    d = xi[:, None, :] - xj[None, :, :]
    vals = g.value(d.reshape(-1, 2)).reshape(len(xi), len(xj))
    return float(wi @ vals @ wj)


def _self_quadrature(g: GreenEvaluator, d: Droplet, order: int):
    """Self double integral: log part exact (disk) or by boundary identity (polygon), R by quadrature."""
    pts, w = droplet_rule(d, order)
    diff = pts[:, None, :] - pts[None, :, :]
    R = g.remainder(diff.reshape(-1, 2))[0].reshape(len(pts), len(pts))
    rpart = float(w @ R @ w)
    if d.is_disk:
        logpart = float(disk_log_self(d.shape.radius))
    else:
        # outer integral on a finer rule; Phi is continuous with log-type edge behaviour
        po, wo = polygon_rule(np.zeros(2), d.shape.vertices, max(2 * order, 16))
        logpart = float(wo @ polygon_log_potential(d.shape.vertices, po))
    return -logpart / (2.0 * np.pi) + rpart


def raw_interaction_matrix(config: DropletConfig, g: GreenEvaluator, quad_order: int = 8, method: str = "exact"):
    """Matrix of iint G over Omega_i x Omega_j (physical, unscaled)."""
    if quad_order < 4:
        raise ParameterError("quad_order must be >= 4")
    if method not in ("exact", "quadrature"):
        raise ParameterError(f"unknown method {method!r}")
    n = len(config.droplets)
    M = np.zeros((n, n))
    if n == 0:
        return M
    kappa = g.params.kappa
    ds = config.droplets
    is_disk = np.array([d.is_disk for d in ds])
    exact = method == "exact"
    centers = config.centers
    if exact and is_disk.any():
        idx = np.flatnonzero(is_disk)
        a = np.array([ds[i].shape.radius for i in idx])
        q = disk_charge(a, kappa)
        M[idx, idx] = disk_self_integral(a, g)
        if len(idx) > 1:
            iu, ju = np.triu_indices(len(idx), 1)
            disp = centers[idx[iu]] - centers[idx[ju]]
            vals = g.value(disp) * q[iu] * q[ju]
            M[idx[iu], idx[ju]] = vals
            M[idx[ju], idx[iu]] = vals
    rules = {}
    for i in range(n):
        if exact and is_disk[i]:
            continue
        M[i, i] = _self_quadrature(g, ds[i], quad_order)
    for i in range(n):
        for j in range(i + 1, n):
            if exact and is_disk[i] and is_disk[j]:
                continue
            for k in (i, j):
                if k not in rules:
                    rules[k] = droplet_rule(ds[k], quad_order)
            xi, wi = rules[i]
            xj, wj = rules[j]
            M[i, j] = M[j, i] = _pair_quadrature(g, xi, wi, xj, wj)
    return M


def interaction_matrix(config: DropletConfig, g: GreenEvaluator, quad_order: int = 8, method: str = "exact"):
    """Symmetric matrix of 2 iint G dmu_i dmu_j (rescaled droplet measures)."""
    _check_compatible(config, g)
    s = density_scale(config.epsilon)
    return 2.0 * s * s * raw_interaction_matrix(config, g, quad_order, method)


def _check_compatible(config: DropletConfig, g: GreenEvaluator):
    if config.params.ell != g.params.ell or config.params.kappa != g.params.kappa:
        raise ParameterError("config and Green's function use different torus parameters")


# ---- energy -----------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyBreakdown:
    background: float
    perimeter_term: float
    area_term: float
    self_interaction: float
    pair_interaction: float
    total_rescaled: float
    total_physical: float

    def as_dict(self) -> dict:
        return asdict(self)


def assemble_energy(params: TorusParams, epsilon: float, perim_sum: float, area_sum: float, M) -> EnergyBreakdown:
    """Energy from rescaled perimeter and area sums and the interaction matrix."""
    L = log_eps(epsilon)
    M = np.asarray(M)
    perimeter_term = perim_sum / L
    area_term = -2.0 * params.delta_bar / params.kappa**2 * area_sum / L
    self_i = float(np.trace(M)) if M.size else 0.0
    pair_i = float(M.sum() - self_i) if M.size else 0.0
    total = perimeter_term + area_term + self_i + pair_i
    phys = epsilon ** (4.0 / 3.0) * L ** (2.0 / 3.0) * (params.background + total)
    return EnergyBreakdown(params.background, perimeter_term, area_term, self_i, pair_i, total, phys)


def sharp_energy(config: DropletConfig, g: GreenEvaluator, quad_order: int = 8, method: str = "exact") -> EnergyBreakdown:
    """Rescaled and physical sharp-interface energy of a droplet configuration."""
    eps = config.epsilon
    area_sum = sum(d.area for d in config.droplets) * area_scale(eps)
    perim_sum = sum(d.perimeter for d in config.droplets) * length_scale(eps)
    M = interaction_matrix(config, g, quad_order, method)
    return assemble_energy(config.params, eps, perim_sum, area_sum, M)


def green_minimum(g: GreenEvaluator, n: int = 128) -> float:
    """min G over the torus: grid argmin polished by a bounded local search."""
    G = g.grid_values(n)
    G.reshape(-1)[0] = np.inf  # the origin entry holds R(0), not G
    i, j = np.unravel_index(int(np.argmin(G)), G.shape)
    h = g.params.ell / n
    x0 = np.array([i * h, j * h])
    res = optimize.minimize(
        lambda x: g.value(x[None, :])[0],
        x0,
        jac=lambda x: g.value_and_gradient(x[None, :])[1][0],
        method="L-BFGS-B",
        bounds=[(x0[0] - h, x0[0] + h), (x0[1] - h, x0[1] + h)],
    )
    return float(min(res.fun, G[i, j]))
