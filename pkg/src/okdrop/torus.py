"""Torus parameters and periodic geometry helpers."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class TorusParams:
    """Side length ``ell``, screening constant ``kappa`` and background parameter ``delta_bar``."""

    ell: float = 1.0
    kappa: float = 2.0 / 3.0
    delta_bar: float = 1.0

    def __post_init__(self):
        for name in ("ell", "kappa", "delta_bar"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ParameterError(f"{name} must be a positive finite number, got {v!r}")

    @property
    def area(self) -> float:
        return self.ell * self.ell

    @property
    def background(self) -> float:
        """Scale term delta_bar^2 ell^2 / (2 kappa^2)."""
        return self.delta_bar**2 * self.ell**2 / (2.0 * self.kappa**2)


def wrap(x, ell: float) -> np.ndarray:
    """Reduce displacements to the fundamental cell [-ell/2, ell/2)."""
    x = np.asarray(x, dtype=float)
    return x - ell * np.floor(x / ell + 0.5)


def torus_distance(a, b, ell: float) -> np.ndarray:
    """Minimum-image distance between points a and b (broadcasting over leading axes)."""
    d = wrap(np.asarray(a, float) - np.asarray(b, float), ell)
    return np.hypot(d[..., 0], d[..., 1])


def log_eps(epsilon: float) -> float:
    """|ln eps|, validating eps in (0, 1/e)."""
    if not (0.0 < epsilon < math.exp(-1.0)):
        raise ParameterError(f"epsilon must lie in (0, 1/e), got {epsilon!r}")
    return -math.log(epsilon)


def grid_wavenumbers(n: int, ell: float):
    """Angular wavenumbers (kx, ky) of an n x n periodic grid, FFT ordering, 'ij' indexing."""
    k1 = 2.0 * np.pi * np.fft.fftfreq(n, d=ell / n)
    return np.meshgrid(k1, k1, indexing="ij")


def grid_coords(n: int, ell: float):
    """Node coordinates (x, y) of an n x n grid with node (0, 0) at the origin."""
    x1 = np.arange(n) * (ell / n)
    return np.meshgrid(x1, x1, indexing="ij")


def fft_workers() -> int:
    """Worker count for scipy.fft, capped by the OKDROP_THREADS environment variable."""
    cap = os.environ.get("OKDROP_THREADS")
    n = os.cpu_count() or 1
    if cap:
        try:
            n = max(1, min(n, int(cap)))
        except ValueError:
            raise ParameterError(f"OKDROP_THREADS must be an integer, got {cap!r}") from None
    return n
