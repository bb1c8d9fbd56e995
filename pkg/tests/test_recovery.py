import math

import numpy as np
import pytest

from okdrop.droplets import OPTIMAL_AREA, DensityMeasure, optimal_radius, rescaled_stats
from okdrop.errors import ConstructionError, ParameterError
from okdrop.green import build_green
from okdrop.limit import optimal_constant_density
from okdrop.minimizer import defect_M
from okdrop.recovery import (
    CellCount,
    RecoveryPlan,
    build_recovery,
    build_recovery_with_plan,
    cell_side,
    density_fourier,
    measure_fourier,
    partition_counts,
    place_droplets,
    recovery_sweep,
)
from okdrop.sharp import sharp_energy
from okdrop.torus import TorusParams

# many droplets per cell: ell = 2, kappa = 2/3, delta_bar = 15.5 (mu_bar ~ 7.5)
PR = TorusParams(2.0, 2.0 / 3.0, 15.5)
EPS_SWEEP = [1e-3, 1e-6, 1e-9, 1e-12]


@pytest.fixture(scope="module")
def uniform_mu():
    return DensityMeasure.uniform(128, PR.ell, optimal_constant_density(PR)[0])


@pytest.fixture(scope="module")
def gR():
    return build_green(PR)


def brute_min_distance(c, ell):
    best = math.inf
    for i in range(len(c)):
        for j in range(i + 1, len(c)):
            d = (c[i] - c[j] + ell / 2) % ell - ell / 2
            best = min(best, math.hypot(*d))
    return best


def test_cell_side_window():
    for eps in (1e-3, 1e-6, 1e-12, 1e-30):
        L = -math.log(eps)
        eta, m = cell_side(eps, 1.0)
        assert L**-0.5 < eta < 1 and m * eta == pytest.approx(1.0)
        assert m == math.ceil(L**0.25)
    with pytest.raises(ParameterError):
        cell_side(0.3, 1.0)  # |ln eps|^-1/2 ~ 0.9 exceeds ell/2


def test_plan_invariants(uniform_mu):
    for eps in EPS_SWEEP:
        plan = partition_counts(uniform_mu, eps, PR)
        assert plan.radius == optimal_radius(eps)
        assert plan.radius == 3 ** (1 / 3) * eps ** (1 / 3) * (-math.log(eps)) ** (-1 / 3)
        assert plan.min_spacing == pytest.approx(0.5 * PR.ell / math.sqrt(plan.total_count))
        assert plan.total_mass == pytest.approx(uniform_mu.total_mass, rel=1e-12)


def test_uniform_counts(uniform_mu):
    m = uniform_mu.grid[0, 0]
    for eps in EPS_SWEEP:
        plan = partition_counts(uniform_mu, eps, PR)
        ideal = 3 ** (-2 / 3) * (-math.log(eps)) / math.pi * m * PR.area
        ncell = plan.cells_per_side**2
        assert ideal - ncell <= plan.total_count <= ideal


def test_zero_mass():
    mu = DensityMeasure.uniform(64, PR.ell, 0.0)
    cfg = build_recovery(mu, 1e-6, PR)
    assert len(cfg) == 0


def test_halving_eta(uniform_mu):
    eps = 1e-9
    a = partition_counts(uniform_mu, eps, PR, cells_per_side=4)
    b = partition_counts(uniform_mu, eps, PR, cells_per_side=8)
    assert len(b.cells) == 4 * len(a.cells)
    assert abs(b.total_count - a.total_count) <= len(b.cells)


def test_count_one_midpoint():
    plan = RecoveryPlan(PR, 1e-6, 0.5, 4, (CellCount((1, 2), 1.0, 1),), optimal_radius(1e-6), 0.1, 0)
    c = place_droplets(plan)
    assert np.allclose(c, [[0.75, 1.25]])


def test_spacing_bruteforce(uniform_mu):
    cfg, plan = build_recovery_with_plan(uniform_mu, 1e-6, PR, seed=42)
    assert len(cfg) == plan.total_count > 10
    assert brute_min_distance(cfg.centers, PR.ell) >= plan.min_spacing


def test_spacing_nonuniform():
    mu = DensityMeasure.from_function(128, 2.0, lambda x, y: 7.5 * (1 + 0.3 * np.cos(np.pi * x)))
    cfg, plan = build_recovery_with_plan(mu, 1e-9, PR, seed=3)
    assert brute_min_distance(cfg.centers, PR.ell) >= plan.min_spacing


def test_determinism(uniform_mu):
    a = build_recovery(uniform_mu, 1e-9, PR, seed=42)
    b = build_recovery(uniform_mu, 1e-9, PR, seed=42)
    c = build_recovery(uniform_mu, 1e-9, PR, seed=43)
    assert np.array_equal(a.centers, b.centers)
    assert len(a) == len(c)
    assert not np.array_equal(a.centers, c.centers)


def test_infeasible_cell_names_cell():
    plan = RecoveryPlan(PR, 1e-6, 0.1, 20, (CellCount((3, 5), 1.0, 4),), optimal_radius(1e-6), 0.2, 0)
    with pytest.raises(ConstructionError, match=r"\(3, 5\)"):
        place_droplets(plan)


def test_all_areas_optimal(uniform_mu):
    cfg = build_recovery(uniform_mu, 1e-6, PR, seed=1)
    A = np.asarray(rescaled_stats(cfg).areas)
    assert np.allclose(A, OPTIMAL_AREA, rtol=1e-12)


def test_mass_convergence(uniform_mu):
    target = uniform_mu.total_mass
    gaps = []
    for eps in EPS_SWEEP:
        cfg = build_recovery(uniform_mu, eps, PR)
        mass = float(np.sum(rescaled_stats(cfg).areas)) / -math.log(eps)
        gaps.append(abs(mass - target) / target)
    assert all(a > b for a, b in zip(gaps, gaps[1:]))


def test_fourier_moments_decrease(uniform_mu):
    ks = np.array([[2 * np.pi * a / PR.ell, 2 * np.pi * b / PR.ell] for a in range(-2, 3) for b in range(-2, 3) if a * a + b * b <= 4])
    ref = density_fourier(uniform_mu, ks)
    errs = []
    for eps in EPS_SWEEP:
        cfg = build_recovery(uniform_mu, eps, PR, seed=42)
        errs.append(float(np.max(np.abs(measure_fourier(cfg, ks) - ref))))
    assert all(a > b for a, b in zip(errs, errs[1:]))


def test_measure_fourier_zero_mode(uniform_mu):
    cfg = build_recovery(uniform_mu, 1e-6, PR)
    mass = OPTIMAL_AREA * len(cfg) / -math.log(1e-6)
    assert measure_fourier(cfg, [[0.0, 0.0]])[0].real == pytest.approx(mass / PR.area, rel=1e-12)


def test_energy_split(uniform_mu, gR):
    for eps in (1e-6, 1e-12):
        cfg = build_recovery(uniform_mu, eps, PR)
        e = sharp_energy(cfg, gR)
        mass = OPTIMAL_AREA * len(cfg) / -math.log(eps)
        assert e.perimeter_term == pytest.approx(2 * 3 ** (-1 / 3) * mass, rel=1e-12)
        assert e.area_term == pytest.approx(-2 * PR.delta_bar / PR.kappa**2 * mass, rel=1e-12)


def test_defect_nonnegative_on_recovery(uniform_mu, gR):
    for eps in (1e-4, 1e-6):
        cfg = build_recovery(uniform_mu, eps, PR, seed=42)
        assert defect_M(cfg, gR, 1 / 6, 0.05, PR.ell / 8) >= 0


def test_sweep_rows(uniform_mu, gR):
    rows = recovery_sweep(uniform_mu, EPS_SWEEP, PR, gR, seed=42)
    assert [r.count for r, _ in rows] == [len(c) for _, c in rows]
    for r, _ in rows:
        assert r.total_rescaled == pytest.approx(r.perimeter_term + r.area_term + r.self_interaction + r.pair_interaction)
        assert r.gap == abs(r.total_rescaled - r.limit_target)


def test_mismatched_ell(uniform_mu):
    with pytest.raises(ParameterError):
        partition_counts(uniform_mu, 1e-6, TorusParams(1.0, 2 / 3, 1.0))
