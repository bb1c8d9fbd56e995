"""Connected components of binary fields on the periodic grid (4-connectivity)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ParameterError


class UnionFind:
    """Disjoint sets over 0..n-1 with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, a: int) -> int:
        p = self.parent
        while p[a] != a:
            p[a] = p[p[a]]
            a = p[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


@dataclass(frozen=True)
class Component:
    pixels: np.ndarray  # (k, 2) grid indices
    area: float
    perimeter: float
    wraps_x: bool  # crosses the seam between index n-1 and 0 along axis 0
    wraps_y: bool


def periodic_labels(binary) -> tuple[np.ndarray, int]:
    """Label array (0 = background, 1..k) with components merged across both seams."""
    b = np.asarray(binary, dtype=bool)
    if b.ndim != 2 or b.shape[0] != b.shape[1]:
        raise ParameterError("binary grid must be square")
    if b.shape[0] < 16:
        raise ParameterError("grid must be at least 16 x 16")
    lab, k = ndimage.label(b)  # default structure is 4-connectivity
    if k == 0:
        return lab, 0
    uf = UnionFind(k + 1)
    for a, c in ((lab[-1, :], lab[0, :]), (lab[:, -1], lab[:, 0])):
        both = (a > 0) & (c > 0)
        for i, j in zip(a[both], c[both]):
            uf.union(int(i), int(j))
    roots = np.array([uf.find(i) for i in range(k + 1)])
    uniq = np.unique(roots[1:])
    remap = np.zeros(k + 1, dtype=np.int64)
    remap[uniq] = np.arange(1, len(uniq) + 1)
    return remap[roots][lab], len(uniq)


def label_components(binary, ell: float = 1.0) -> list[Component]:
    """Periodic components with areas, perimeters (edge count x cell size) and seam flags."""
    b = np.asarray(binary, dtype=bool)
    lab, k = periodic_labels(b)
    n = b.shape[0]
    h = ell / n
    if k == 0:
        return []
    counts = np.bincount(lab.ravel(), minlength=k + 1)
    edges = np.zeros(k + 1, dtype=np.int64)
    for axis in (0, 1):
        for shift in (1, -1):
            nb = np.roll(b, shift, axis=axis)
            exposed = b & ~nb
            edges += np.bincount(lab[exposed], minlength=k + 1)
    wx = np.zeros(k + 1, dtype=bool)
    wy = np.zeros(k + 1, dtype=bool)
    same_x = (lab[-1, :] == lab[0, :]) & (lab[0, :] > 0)
    wx[lab[0, :][same_x]] = True
    same_y = (lab[:, -1] == lab[:, 0]) & (lab[:, 0] > 0)
    wy[lab[:, 0][same_y]] = True
    order = np.argsort(lab.ravel(), kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)])
    idx = np.stack(np.unravel_index(order, b.shape), -1)
    out = []
    for c in range(1, k + 1):
        out.append(
            Component(
                pixels=idx[starts[c] : starts[c + 1]],
                area=float(counts[c]) * h * h,
                perimeter=float(edges[c]) * h,
                wraps_x=bool(wx[c]),
                wraps_y=bool(wy[c]),
            )
        )
    return out
