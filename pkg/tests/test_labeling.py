from collections import Counter, deque

import numpy as np
import pytest

from okdrop.errors import ParameterError
from okdrop.labeling import UnionFind, label_components, periodic_labels


def flood_fill_count(b):
    """Oracle: iterative flood fill with periodic 4-neighborhoods."""
    n = b.shape[0]
    seen = np.zeros_like(b, dtype=bool)
    sizes = []
    for i in range(n):
        for j in range(n):
            if b[i, j] and not seen[i, j]:
                q = deque([(i, j)])
                seen[i, j] = True
                size = 0
                while q:
                    a, c = q.popleft()
                    size += 1
                    for da, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                        x, y = (a + da) % n, (c + dc) % n
                        if b[x, y] and not seen[x, y]:
                            seen[x, y] = True
                            q.append((x, y))
                sizes.append(size)
    return sizes


def test_single_block():
    b = np.zeros((32, 32), bool)
    b[5:9, 10:16] = True
    comps = label_components(b, ell=2.0)
    assert len(comps) == 1
    h = 2.0 / 32
    assert comps[0].area == pytest.approx(24 * h * h)
    assert comps[0].perimeter == pytest.approx(20 * h)
    assert not comps[0].wraps_x and not comps[0].wraps_y


def test_block_across_seams():
    b = np.zeros((32, 32), bool)
    b[:, 30:] = False
    b[10:14, 30:] = True
    b[10:14, :3] = True
    comps = label_components(b)
    assert len(comps) == 1
    assert comps[0].wraps_y and not comps[0].wraps_x
    b2 = np.zeros((32, 32), bool)
    b2[30:, 30:] = True
    b2[:2, :2] = True
    b2[30:, :2] = True
    b2[:2, 30:] = True
    comps = label_components(b2)
    assert len(comps) == 1 and comps[0].wraps_x and comps[0].wraps_y
    assert comps[0].area == pytest.approx(16 / 32**2)


def test_diagonal_pixels_not_connected():
    b = np.zeros((16, 16), bool)
    b[3, 3] = b[4, 4] = True
    assert len(label_components(b)) == 2


def test_random_blobs_against_flood_fill():
    rng = np.random.default_rng(11)
    for trial in range(50):
        n = 48
        b = np.zeros((n, n), bool)
        for _ in range(rng.integers(1, 12)):
            ci, cj = rng.integers(0, n, 2)
            r = rng.uniform(1, 5)
            I, J = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
            di = (I - ci + n / 2) % n - n / 2
            dj = (J - cj + n / 2) % n - n / 2
            b |= di**2 + dj**2 <= r * r
        b &= rng.uniform(size=b.shape) > 0.05  # ragged edges
        comps = label_components(b)
        oracle = flood_fill_count(b)
        assert len(comps) == len(oracle)
        h2 = 1.0 / n**2
        assert Counter(round(c.area / h2) for c in comps) == Counter(oracle)


def test_shift_invariance():
    rng = np.random.default_rng(12)
    b = rng.uniform(size=(40, 40)) > 0.7
    base = sorted(c.area for c in label_components(b))
    for s in [(3, 0), (0, 17), (21, 39)]:
        shifted = sorted(c.area for c in label_components(np.roll(b, s, axis=(0, 1))))
        assert shifted == pytest.approx(base)


def test_empty_and_validation():
    assert label_components(np.zeros((16, 16), bool)) == []
    with pytest.raises(ParameterError):
        periodic_labels(np.zeros((8, 8), bool))


def test_union_find():
    uf = UnionFind(6)
    uf.union(0, 1)
    uf.union(2, 3)
    uf.union(1, 3)
    assert uf.find(0) == uf.find(2)
    assert uf.find(4) != uf.find(0)
