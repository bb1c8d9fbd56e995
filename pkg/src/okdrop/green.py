"""Screened Green's function of -Laplace + kappa^2 on the flat torus, and the half-kernel H.

Three independent representations are used:

* near field, |x| <= ell/4: G = -ln|x|/(2 pi) + R(x).  R is evaluated with an Ewald
  (heat-kernel) split, in which the free-space logarithm is removed analytically
  from the central image, so R is smooth and finite at 0.
* far field, |x| > ell/4: a mixed Fourier series, exact Fourier modes along the
  shorter displacement axis and the closed-form 1-D periodic resolvent along the
  longer one.  Converges geometrically because the longer axis is bounded away
  from 0.
* grids: the same Ewald split with the reciprocal part assembled by one inverse FFT.

Ewald split used throughout.  With T > 0,
    1/(kappa^2 + k^2) = int_0^T e^{-t(kappa^2+k^2)} dt + e^{-T(kappa^2+k^2)}/(kappa^2+k^2).
The first piece is a sum over lattice images of
    F(r) = 1/(4 pi) sum_j (-kappa^2 T)^j / j! E_{j+1}(r^2 / 4T),
the second a rapidly convergent Fourier series.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .errors import ParameterError, SingularityError
from .torus import TorusParams, grid_coords, grid_wavenumbers, wrap

EULER_GAMMA = float(np.euler_gamma)
# Analytic continuations of sum'_{n in Z^2} |n|^{-s} (square-lattice Epstein zeta):
# 4 zeta(s/2) beta(s/2) at s = 1 and s = -1.  Used for singularity-corrected lattice sums.
EPSTEIN_1 = -3.9002649200019558828
EPSTEIN_M1 = -0.22882431037721895335

_U_CUT = 40.0  # images with r^2/4T beyond this contribute < e^-40
_CHUNK = 4096  # points per vectorized block in pointwise evaluation


def _series_terms(a: float) -> int:
    """Number of terms j >= 1 so that a^j / j! < 1e-18."""
    term, j = 1.0, 0
    while True:
        j += 1
        term *= a / j
        if term < 1e-18 and j > a:
            return j


def _ein(u):
    """Entire exponential integral Ein(u) = int_0^u (1-e^-t)/t dt = E1(u) + gamma + ln u."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    small = u < 1.0
    us = u[small]
    term = us.copy()
    acc = us.copy()
    for k in range(2, 30):
        term = -term * us * (k - 1) / (k * k)
        acc += term
    out[small] = acc
    ul = u[~small]
    out[~small] = special.exp1(ul) + EULER_GAMMA + np.log(ul)
    return out


def _expn_ladder(u, e1, jmax):
    """E_1..E_{jmax+1}(u) by forward recurrence from E_1 (u > 0).

    Forward recurrence loses accuracy like u^j/j!, which is harmless here because the
    term weights (kappa^2 T)^j / j! decay much faster than that grows.
    """
    emu = np.exp(-u)
    out = [e1]
    e = e1
    for n in range(1, jmax + 1):
        e = (emu - u * e) / n
        out.append(e)
    return out


@dataclass(frozen=True)
class EwaldSplit:
    """Parameters of one Ewald split of the torus Green's function."""

    params: TorusParams
    T: float
    nterms: int
    coeff: np.ndarray = field(repr=False)  # (-kappa^2 T)^j / j!, j = 0..nterms

    @classmethod
    def make(cls, params: TorusParams, T: float) -> "EwaldSplit":
        a = params.kappa**2 * T
        nt = _series_terms(a)
        coeff = np.empty(nt + 1)
        coeff[0] = 1.0
        for j in range(1, nt + 1):
            coeff[j] = coeff[j - 1] * (-a) / j
        return cls(params, T, nt, coeff)

    def real_image(self, r2):
        """F(r) for one image at squared distance r2 > 0, and dF/dr / r."""
        T = self.T
        u = np.asarray(r2, float) / (4.0 * T)
        e1 = special.exp1(u)
        ladder = _expn_ladder(u, e1, self.nterms)
        val = np.zeros_like(u)
        for j in range(self.nterms + 1):
            val += self.coeff[j] * ladder[j]
        # dF/du = -1/(4pi) sum_j c_j E_j(u), with E_0(u) = e^-u / u; du/dr = r/(2T)
        dfdu = self.coeff[0] * np.exp(-u) / u
        for j in range(1, self.nterms + 1):
            dfdu += self.coeff[j] * ladder[j - 1]
        g_over_r = -dfdu / (4.0 * np.pi) / (2.0 * T)
        return val / (4.0 * np.pi), g_over_r

    def central_regular(self, r2):
        """Central-image part of R: F(r) + ln(r)/(2 pi), and its gradient factor (grad = factor * x)."""
        T = self.T
        u = np.asarray(r2, float) / (4.0 * T)
        ein = _ein(u)
        pos = u > 0
        # E_1 = Ein - gamma - ln u; it only enters multiplied by u or by x, both 0 at the origin
        e1 = np.where(pos, ein - EULER_GAMMA - np.log(np.where(pos, u, 1.0)), 0.0)
        emu = np.exp(-u)
        ladder = [e1, emu - (u * (ein - EULER_GAMMA) - special.xlogy(u, u))]
        for n in range(2, self.nterms + 1):
            ladder.append((emu - u * ladder[-1]) / n)
        val = -EULER_GAMMA + math.log(4.0 * T) + ein
        for j in range(1, self.nterms + 1):
            val = val + self.coeff[j] * ladder[j]
        # j = 0 combined with the log: (1 - e^-u)/(2 pi r^2) = exprel(-u)/(8 pi T)
        g = special.exprel(-u)
        for j in range(1, self.nterms + 1):
            g = g - self.coeff[j] * ladder[j - 1]
        return val / (4.0 * np.pi), g / (8.0 * np.pi * T)

    def recip_coefficients(self, kx, ky):
        k2 = kx * kx + ky * ky
        s = self.params.kappa**2 + k2
        return np.exp(-self.T * s) / s


def _recip_cutoff(T: float, ell: float) -> int:
    """Largest mode index m with e^{-T (2 pi m / ell)^2} above ~1e-18."""
    return int(math.ceil(math.sqrt(41.0 / T) * ell / (2.0 * np.pi)))


@dataclass(frozen=True)
class GreenEvaluator:
    """Immutable evaluator of G and grad G on the torus.

    ``spectral_table`` holds 1/(kappa^2 + |k|^2) on the mode_count x mode_count FFT
    grid of the dual lattice.  ``near_field`` is the Ewald split used for R(x).
    """

    params: TorusParams
    mode_count: int
    spectral_table: np.ndarray = field(repr=False)
    near_field: EwaldSplit = field(repr=False)
    r0: float = 0.0
    _recip_mat: np.ndarray = field(repr=False, default=None)
    _recip_k: np.ndarray = field(repr=False, default=None)
    _far_k: np.ndarray = field(repr=False, default=None)
    _far_w: np.ndarray = field(repr=False, default=None)

    # ---- near field -------------------------------------------------------------
    def remainder(self, x):
        """R(x) = G(x) + ln|x|/(2 pi) and its gradient, for displacements x[..., 2] in the cell."""
        x = wrap(x, self.params.ell)
        shape = x.shape[:-1]
        x = x.reshape(-1, 2)
        ew = self.near_field
        ell = self.params.ell
        val, gf = ew.central_regular(np.einsum("ij,ij->i", x, x))
        grad = gf[:, None] * x
        r2max = 4.0 * ew.T * _U_CUT
        for n1 in (-1, 0, 1):
            for n2 in (-1, 0, 1):
                if n1 == 0 and n2 == 0:
                    continue
                d = x - ell * np.array([n1, n2], float)
                r2 = np.einsum("ij,ij->i", d, d)
                m = r2 < r2max
                if not np.any(m):
                    continue
                v, g = ew.real_image(r2[m])
                val[m] += v
                grad[m] += g[:, None] * d[m]
        rv, rg = self._recip_eval(x)
        val = val + rv
        grad = grad + rg
        return val.reshape(shape), grad.reshape(shape + (2,))

    def _recip_eval(self, x):
        k = self._recip_k
        c1, s1 = np.cos(np.outer(x[:, 0], k)), np.sin(np.outer(x[:, 0], k))
        c2, s2 = np.cos(np.outer(x[:, 1], k)), np.sin(np.outer(x[:, 1], k))
        M = self._recip_mat
        c1M = c1 @ M
        val = np.einsum("ij,ij->i", c1M, c2)
        g1 = -np.einsum("ij,ij->i", (s1 * k) @ M, c2)
        g2 = -np.einsum("ij,ij->i", c1M, s2 * k)
        return val, np.stack([g1, g2], axis=-1)

    # ---- far field --------------------------------------------------------------
    def far_field(self, x):
        """Mixed Fourier / 1-D resolvent series; accurate when max(|x1|, |x2|) is not small."""
        x = wrap(x, self.params.ell)
        shape = x.shape[:-1]
        x = x.reshape(-1, 2)
        ell = self.params.ell
        swap = np.abs(x[:, 1]) > np.abs(x[:, 0])
        a = np.where(swap, x[:, 1], x[:, 0])
        b = np.where(swap, x[:, 0], x[:, 1])
        s = np.abs(a)
        k = self._far_k
        q = np.sqrt(self.params.kappa**2 + k * k)
        w = self._far_w
        e1 = np.exp(-np.outer(s, q))
        e2 = np.exp(-np.outer(ell - s, q))
        den = 2.0 * q * (-np.expm1(-q * ell))
        gm = (e1 + e2) / den
        dgm = q * (e2 - e1) / den
        cb = np.cos(np.outer(b, k)) * w
        sb = np.sin(np.outer(b, k)) * (w * k)
        val = np.einsum("ij,ij->i", cb, gm) / ell
        ga = np.sign(a) * np.einsum("ij,ij->i", cb, dgm) / ell
        gb = -np.einsum("ij,ij->i", sb, gm) / ell
        g1 = np.where(swap, gb, ga)
        g2 = np.where(swap, ga, gb)
        return val.reshape(shape), np.stack([g1, g2], axis=-1).reshape(shape + (2,))

    # ---- public -----------------------------------------------------------------
    def value_and_gradient(self, x):
        """G(x) and grad G(x) for an array of displacements x[..., 2] (all nonzero mod ell)."""
        x = wrap(x, self.params.ell)
        shape = x.shape[:-1]
        x = x.reshape(-1, 2)
        r2 = np.einsum("ij,ij->i", x, x)
        if np.any(r2 == 0.0):
            raise SingularityError("G is singular at lattice points")
        if len(x) > _CHUNK:
            parts = [self.value_and_gradient(x[i : i + _CHUNK]) for i in range(0, len(x), _CHUNK)]
            val = np.concatenate([q[0] for q in parts])
            grad = np.concatenate([q[1] for q in parts])
            return val.reshape(shape), grad.reshape(shape + (2,))
        val = np.empty(len(x))
        grad = np.empty((len(x), 2))
        near = r2 <= (self.params.ell / 4.0) ** 2
        if np.any(near):
            xn = x[near]
            rv, rg = self.remainder(xn)
            val[near] = rv - np.log(r2[near]) / (4.0 * np.pi)
            grad[near] = rg - xn / (2.0 * np.pi * r2[near][:, None])
        if np.any(~near):
            fv, fg = self.far_field(x[~near])
            val[~near] = fv
            grad[~near] = fg
        return val.reshape(shape), grad.reshape(shape + (2,))

    def value(self, x):
        return self.value_and_gradient(x)[0]

    def grid_values(self, n: int):
        """G on the n x n node grid (node (0,0) at the origin); the origin entry holds R(0)."""
        return green_grid(self.params, n)


def build_green(params: TorusParams, mode_count: int = 256) -> GreenEvaluator:
    """Build a Green's function evaluator with ``mode_count`` Fourier modes per axis."""
    if not isinstance(params, TorusParams):
        raise ParameterError("params must be a TorusParams")
    if not (isinstance(mode_count, (int, np.integer)) and mode_count >= 16 and mode_count % 2 == 0):
        raise ParameterError(f"mode_count must be an even integer >= 16, got {mode_count!r}")
    ell, kappa = params.ell, params.kappa
    kx, ky = grid_wavenumbers(mode_count, ell)
    table = 1.0 / (kappa**2 + kx * kx + ky * ky)

    tau = min(0.004, 1.0 / (kappa * ell) ** 2)
    ew = EwaldSplit.make(params, tau * ell * ell)
    mmax = _recip_cutoff(ew.T, ell)
    m = np.arange(mmax + 1)
    k = 2.0 * np.pi * m / ell
    wts = np.where(m == 0, 1.0, 2.0)
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    recip = ew.recip_coefficients(K1, K2) * np.outer(wts, wts) / (ell * ell)

    mf = np.arange(mode_count // 2 + 1)
    far_k = 2.0 * np.pi * mf / ell
    far_w = np.where(mf == 0, 1.0, 2.0)

    g = GreenEvaluator(params, int(mode_count), table, ew, 0.0, recip, k, far_k, far_w)
    r0 = float(g.remainder(np.zeros((1, 2)))[0][0])
    object.__setattr__(g, "r0", r0)
    return g


def green_at(g: GreenEvaluator, x):
    """Value and gradient of G at a single torus displacement x (x != 0)."""
    v, gr = g.value_and_gradient(np.asarray(x, float).reshape(1, 2))
    return float(v[0]), gr[0]


# ---- grid Ewald -------------------------------------------------------------------

def _grid_split(params: TorusParams, n: int) -> EwaldSplit:
    # smallest T whose reciprocal part is resolved by the grid band
    mhalf = n // 2 - 1
    T_min = 41.0 * (params.ell / (2.0 * np.pi * mhalf)) ** 2
    T = max(T_min, 1e-5 * params.ell**2)
    T = min(T, 0.004 * params.ell**2, 1.0 / params.kappa**2)
    T = max(T, T_min)
    return EwaldSplit.make(params, T)


def _image_offsets(params: TorusParams, n: int, rcut: float):
    X, Y = grid_coords(n, params.ell)
    X = wrap(X, params.ell)
    Y = wrap(Y, params.ell)
    c = int(math.ceil(rcut / params.ell)) + 1
    for n1 in range(-c, c + 1):
        for n2 in range(-c, c + 1):
            dx = X - n1 * params.ell
            dy = Y - n2 * params.ell
            yield n1, n2, dx, dy


def green_grid(params: TorusParams, n: int) -> np.ndarray:
    """G sampled on an n x n node grid; the origin entry is R(0) (the regular part)."""
    ew = _grid_split(params, n)
    ell = params.ell
    out = np.zeros((n, n))
    r2max = 4.0 * ew.T * _U_CUT
    center = None
    for n1, n2, dx, dy in _image_offsets(params, n, math.sqrt(r2max)):
        r2 = dx * dx + dy * dy
        m = r2 < r2max
        if n1 == 0 and n2 == 0:
            m[0, 0] = False
            center = ew.central_regular(np.zeros(1))[0][0]
        if np.any(m):
            out[m] += ew.real_image(r2[m])[0]
    out[0, 0] += center
    kx, ky = grid_wavenumbers(n, ell)
    c = ew.recip_coefficients(kx, ky)
    out += np.real(np.fft.ifft2(c)) * (n * n) / (ell * ell)
    return out


# ---- H kernel ---------------------------------------------------------------------

def _h_real_image(r, kappa, T):
    """Real-space Ewald piece of H for one image at distance r > 0."""
    sT = math.sqrt(T)
    a = r / (2.0 * sT)
    b = kappa * sT
    pref = np.exp(-a * a - b * b) / (4.0 * np.pi * r)
    return pref * (special.erfcx(a + b) + special.erfcx(a - b))


def _h_split_T(params: TorusParams, n: int) -> float:
    mhalf = n // 2 - 1
    T_min = 41.0 * (params.ell / (2.0 * np.pi * mhalf)) ** 2
    return max(T_min, min(0.004 * params.ell**2, 1.0 / params.kappa**2))


def h_grid(params: TorusParams, n: int):
    """H on the n x n node grid and its regular value at 0.

    Returns (H, H_reg0) where H[0, 0] is set to 0 and H_reg0 = lim (H(x) - 1/(2 pi |x|)).
    """
    ell, kappa = params.ell, params.kappa
    T = _h_split_T(params, n)
    rcut = 2.0 * math.sqrt(T * _U_CUT)
    out = np.zeros((n, n))
    for n1, n2, dx, dy in _image_offsets(params, n, rcut):
        r = np.hypot(dx, dy)
        m = r < rcut
        if n1 == 0 and n2 == 0:
            m[0, 0] = False
        if np.any(m):
            out[m] += _h_real_image(r[m], kappa, T)
    kx, ky = grid_wavenumbers(n, ell)
    s = np.sqrt(kappa**2 + kx * kx + ky * ky)
    rec = np.real(np.fft.ifft2(special.erfc(np.sqrt(T) * s) / s)) * (n * n) / (ell * ell)
    out += rec
    central = -kappa * math.erf(kappa * math.sqrt(T)) / (2.0 * np.pi) - math.exp(-kappa * kappa * T) / (
        2.0 * np.pi**1.5 * math.sqrt(T)
    )
    # images other than the central one at the origin node are already in out[0,0]
    reg0 = central + out[0, 0]
    out[0, 0] = 0.0
    return out, reg0


def h_tail_bound(params: TorusParams, image_cutoff: int) -> float:
    """Upper bound on the H lattice sum beyond |n|_inf = image_cutoff, for x in the fundamental cell.

    Shell s holds 8s images, each at distance >= (s - 1/sqrt 2) ell from x.  Consecutive
    shell bounds have ratio <= e^{-kappa ell}(s+1)/s, which decreases in s, so once it is
    below 1 the rest of the series is dominated by a geometric tail.
    """
    ell, kappa = params.ell, params.kappa
    total = 0.0
    s = image_cutoff + 1
    while True:
        d = (s - 1.0 / math.sqrt(2.0)) * ell
        term = 8 * s * math.exp(-kappa * d) / (2.0 * np.pi * d)
        total += term
        ratio = math.exp(-kappa * ell) * (s + 1) / s
        if ratio < 1.0:
            tail = term * ratio / (1.0 - ratio)
            if tail < 1e-3 * total or tail < 1e-300:
                return total + tail
        s += 1


def default_image_cutoff(params: TorusParams, tol: float = 1e-10) -> int:
    c = 2
    while h_tail_bound(params, c) >= tol:
        c += 1
    return c


def h_kernel_at(params: TorusParams, x, image_cutoff: int | None = None) -> float:
    """Direct lattice sum H(x) = 1/(2 pi) sum_{|n|_inf <= cutoff} e^{-kappa|x - n ell|}/|x - n ell|."""
    if image_cutoff is None:
        image_cutoff = default_image_cutoff(params)
    if image_cutoff < 2:
        raise ParameterError("image_cutoff must be >= 2")
    ell = params.ell
    x = wrap(np.asarray(x, float), ell)
    if np.all(x == 0.0):
        raise SingularityError("H is singular at lattice points")
    idx = np.arange(-image_cutoff, image_cutoff + 1)
    N1, N2 = np.meshgrid(idx, idx, indexing="ij")
    r = np.hypot(x[0] - N1 * ell, x[1] - N2 * ell)
    return float(np.sum(np.exp(-params.kappa * r) / r) / (2.0 * np.pi))


# ---- self test --------------------------------------------------------------------

def log_cell_integral(h: float) -> float:
    """int over the square [-h/2, h/2]^2 of ln|x| dx."""
    a = 0.5 * h
    return 2.0 * a * a * (math.log(2.0 * a * a) - 3.0 + np.pi / 2.0)


def _laplacian4(f, h):
    """Fourth-order periodic five-point-per-axis Laplacian."""
    near = sum(np.roll(f, s, a) for s in (1, -1) for a in (0, 1))
    far = sum(np.roll(f, s, a) for s in (2, -2) for a in (0, 1))
    return (16.0 * near - far - 60.0 * f) / (12.0 * h * h)


def green_selftest(g: GreenEvaluator, grid_n: int = 512, exclusion_cells: int = 4) -> dict:
    """Residuals of the identities int G = 1/kappa^2, H*H = G and boundedness of R.

    Returns a flat name -> number map.
    """
    if grid_n < 128 or grid_n & (grid_n - 1):
        raise ParameterError("grid_n must be a power of two >= 128")
    p = g.params
    ell, kappa = p.ell, p.kappa
    n = grid_n
    h = ell / n
    G = green_grid(p, n)
    r0 = G[0, 0]

    # (a) midpoint quadrature, singular cell integrated exactly
    total = h * h * (G.sum() - r0)
    total += -log_cell_integral(h) / (2.0 * np.pi) + h * h * r0
    res_a = abs(total - 1.0 / kappa**2)

    # (b) punctured discrete convolution plus lattice-zeta corrections at both singular
    # points.  Near each singularity the integrand is H(other)/(2 pi |y|) times a smooth
    # factor, and h^2 sum' |nh|^{-s} phi(nh) - int = h^{2-s} E(s) phi(0)
    # + h^{4-s} E(s-2) Lap(phi)(0)/4 + ...; the kappa^2 |y| term of H is a s = -1 piece.
    H, hreg0 = h_grid(p, n)
    Hf = np.fft.fft2(H)
    conv = np.real(np.fft.ifft2(Hf * Hf)) * h * h
    lapH = _laplacian4(H, h)
    corr = h * h * hreg0 - h * EPSTEIN_1 / (2.0 * np.pi) - h**3 * EPSTEIN_M1 * kappa**2 / (4.0 * np.pi)
    hh = conv + 2.0 * H * corr - 2.0 * h**3 * EPSTEIN_M1 / (8.0 * np.pi) * lapH
    X, Y = grid_coords(n, ell)
    rr = np.hypot(wrap(X, ell), wrap(Y, ell))
    mask = rr > exclusion_cells * h * (1.0 + 1e-12)
    res_b = float(np.max(np.abs(hh - G)[mask]))

    # (c) sup |R| on the disk of radius ell/8
    disk = rr <= ell / 8.0
    with np.errstate(divide="ignore"):
        R = G + np.log(np.where(rr > 0, rr, 1.0)) / (2.0 * np.pi)
    R[0, 0] = r0
    sup_r = float(np.max(np.abs(R[disk])))

    return {
        "grid_n": float(n),
        "integral_G": float(total),
        "residual_integral": float(res_a),
        "residual_HH": res_b,
        "sup_R_eighth": sup_r,
        "R0": float(g.r0),
        "min_G": float(np.min(G.reshape(-1)[1:])),
    }
