import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dytb.accretive import counterexample_system, random_bounded_system, t1_system
from dytb.lattice import Cube, Grid
from dytb.measure import AtomicMeasure, Canvas
from dytb.martingale import (
    AccretivityError,
    counterexample_dual_growth,
    decompose,
    delta,
    delta_adjoint,
    dual_growth_closed_form,
    gcar_sequence,
    phi_split,
    restricted_dual_ratio,
    shu_split,
    square_function_ratio,
    truncated_average_profile,
)
from dytb.stopping import build_linf, carleson_constant


@pytest.fixture
def ce8():
    canvas = Canvas(1, 8)
    mu = AtomicMeasure.lebesgue(canvas)
    system, forest = counterexample_system(6, canvas)
    return canvas, mu, system, forest


def test_t1_delta_is_haar_difference(lebesgue6, canvas6, unit_grid6):
    system = t1_system(unit_grid6, canvas6)
    forest = build_linf(system, lebesgue6, unit_grid6)
    f = np.zeros(canvas6.shape)
    f[:32] = 1.0                                 # indicator of [0, 1/2)
    d = delta(unit_grid6.top_cube(), f, system, forest, lebesgue6)
    assert np.allclose(d[:32], 0.5, atol=1e-14)
    assert np.allclose(d[32:], -0.5, atol=1e-14)


def test_t1_delta_children_minus_parent(lebesgue6, canvas6, unit_grid6, rng):
    system = t1_system(unit_grid6, canvas6)
    forest = build_linf(system, lebesgue6, unit_grid6)
    f = rng.standard_normal(canvas6.shape)
    cube = unit_grid6.cube(2, (1,))
    d = delta(cube, f, system, forest, lebesgue6)
    for child in cube.children():
        sl = canvas6.clip_box(child.box())
        expected = lebesgue6.cube_average(f, child) - lebesgue6.cube_average(f, cube)
        assert np.allclose(d[sl], expected, atol=1e-13)


def test_adjoint_duality_over_systems(ce8, rng):
    canvas, mu, system, forest = ce8
    for cube in [Cube(system.grid, 1, (0,)), Cube(system.grid, 3, (0,)),
                 Cube(system.grid, 4, (7,))]:
        for _ in range(5):
            f = rng.standard_normal(canvas.shape)
            g = rng.standard_normal(canvas.shape)
            lhs = mu.inner(delta(cube, f, system, forest, mu), g)
            rhs = mu.inner(f, delta_adjoint(cube, g, system, forest, mu))
            assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-14)


def test_delta_mean_zero(ce8, rng):
    canvas, mu, system, forest = ce8
    f = rng.standard_normal(canvas.shape)
    for cube in [Cube(system.grid, 0, (0,)), Cube(system.grid, 2, (0,))]:
        d = delta(cube, f, system, forest, mu)
        assert float((mu.weights * d).sum()) == pytest.approx(0.0, abs=1e-14)


def test_reconstruction_three_generators(rng):
    canvas = Canvas(1, 8)
    grid = Grid(1, 8, 8, (0,))
    mu = AtomicMeasure.random_weights(canvas, 17)
    leb = AtomicMeasure.lebesgue(canvas)
    ce_sys, ce_forest = counterexample_system(6, canvas)
    cases = [
        (t1_system(grid, canvas), None, mu),
        (random_bounded_system(grid, mu, 0.5, 5), None, mu),
        (ce_sys, ce_forest, leb),
    ]
    for system, forest, meas in cases:
        forest = forest or build_linf(system, meas, grid)
        for _ in range(5):
            f = rng.standard_normal(canvas.shape)
            recon = decompose(f, system, forest, meas).reconstruct()
            mask = meas.weights > 0
            rel = np.abs((recon - f)[mask]).max() / np.abs(f[mask]).max()
            assert rel <= 1e-12


def test_decompose_matches_reference_delta(ce8, rng):
    canvas, mu, system, forest = ce8
    f = rng.standard_normal(canvas.shape)
    coeffs = decompose(f, system, forest, mu)
    for key in [(0, (0,)), (2, (0,)), (4, (3,)), (7, (100,))]:
        cube = Cube(system.grid, *key)
        assert np.allclose(coeffs.delta_of(cube),
                           delta(cube, f, system, forest, mu), atol=1e-14)


def test_top_profile_reproduces_own_generator(ce8):
    canvas, mu, system, forest = ce8
    f = system.b1(system.grid.top_cube())
    coeffs = decompose(f, system, forest, mu)
    assert np.allclose(coeffs.e0, f, atol=1e-13)
    for _, sl, vals in coeffs.iter_pieces():
        assert np.abs(vals).max() <= 1e-13
    assert square_function_ratio(f, system, forest, mu) <= 1e-20


def test_truncation_matches_one_shot_profile(ce8, rng):
    canvas, mu, system, forest = ce8
    f = rng.standard_normal(canvas.shape)
    coeffs = decompose(f, system, forest, mu)
    for k in range(9):
        partial = coeffs.partial_sum(k)
        profile = truncated_average_profile(f, system, forest, mu, k)
        assert np.abs(partial - profile).max() <= 1e-12 * np.abs(f).max()


def test_accretivity_error_names_cube(lebesgue6, canvas6, unit_grid6, rng):
    system = t1_system(unit_grid6, canvas6)
    forest = build_linf(system, lebesgue6, unit_grid6)
    victim = unit_grid6.cube(1, (0,))
    dead = system.b1(unit_grid6.top_cube()).copy()
    sl = canvas6.clip_box(victim.box())
    dead[sl] = 0.0                     # average vanishes on the victim child
    system._cache[(1, unit_grid6.top_cube().key)] = dead
    f = rng.standard_normal(canvas6.shape)
    with pytest.raises(AccretivityError) as err:
        delta(unit_grid6.top_cube(), f, system, forest, lebesgue6)
    assert err.value.cube.key == victim.key


def test_square_function_t1_at_most_one(lebesgue6, canvas6, unit_grid6, rng):
    system = t1_system(unit_grid6, canvas6)
    forest = build_linf(system, lebesgue6, unit_grid6)
    for _ in range(20):
        f = rng.standard_normal(canvas6.shape)
        assert square_function_ratio(f, system, forest, lebesgue6) <= 1.0 + 1e-12


def test_square_function_bounded_over_ensemble(rng):
    canvas = Canvas(1, 8)
    grid = Grid(1, 8, 8, (0,))
    mu = AtomicMeasure.lebesgue(canvas)
    worst = 0.0
    for seed in range(10):
        system = random_bounded_system(grid, mu, 0.5, seed)
        forest = build_linf(system, mu, grid)
        for _ in range(10):
            f = rng.standard_normal(canvas.shape)
            worst = max(worst, square_function_ratio(f, system, forest, mu))
    assert worst <= 20.0


def test_square_function_depth_stable_with_block_patterns():
    # same block layout refined: ratios agree across depths
    vals = []
    for level in (6, 8, 10):
        canvas = Canvas(1, level)
        grid = Grid(1, level, level, (0,))
        mu = AtomicMeasure.lebesgue(canvas)
        system = random_bounded_system(grid, mu, 0.5, 77, pattern_level=6)
        forest = build_linf(system, mu, grid)
        f = np.repeat(np.random.default_rng(123).standard_normal(64),
                      canvas.cells_per_axis // 64)
        vals.append(square_function_ratio(f, system, forest, mu))
    assert max(vals) <= 1.1 * min(vals)


def test_restricted_dual_t1(lebesgue6, canvas6, unit_grid6, rng):
    system = t1_system(unit_grid6, canvas6)
    forest = build_linf(system, lebesgue6, unit_grid6)
    f = rng.standard_normal(canvas6.shape)
    ratio = restricted_dual_ratio(unit_grid6.top_cube(), f, system, forest, lebesgue6)
    assert ratio <= 1.0 + 1e-12


def test_restricted_dual_counterexample_finite_per_ancestor(ce8):
    canvas, mu, system, forest = ce8
    N = 6
    f = np.zeros(canvas.shape)
    f[:canvas.cells_per_axis >> N] = 2.0 ** (N / 2.0)
    ratios = []
    for j in range(N):
        p = Cube(system.grid, j, (0,))
        ratios.append(restricted_dual_ratio(p, f, system, forest, mu))
    assert all(np.isfinite(r) for r in ratios)
    assert max(ratios) <= 10.0


def test_restricted_dual_zero_denominator_raises(ce8):
    canvas, mu, system, forest = ce8
    f = np.zeros(canvas.shape)
    f[-1] = 1.0                     # supported away from [0, 2^-2)
    with pytest.raises(ValueError):
        restricted_dual_ratio(Cube(system.grid, 2, (0,)), f, system, forest, mu)


def test_dual_growth_matches_grid_machinery():
    N = 6
    canvas = Canvas(1, 8)
    mu = AtomicMeasure.lebesgue(canvas)
    system, forest = counterexample_system(N, canvas)
    f = np.zeros(canvas.shape)
    f[:canvas.cells_per_axis >> N] = 2.0 ** (N / 2.0)
    res = counterexample_dual_growth(N)
    total_grid = 0.0
    for level in range(8):
        for cube in system.grid.cubes(level):
            ds = delta_adjoint(cube, f, system, forest, mu)
            total_grid += mu.inner(ds, ds)
    assert total_grid == pytest.approx(res.total, rel=1e-12)
    for j in range(1, N + 1):
        qj = Cube(system.grid, j, (0,))
        prev = Cube(system.grid, j - 1, (0,))
        ds = delta_adjoint(prev, f, system, forest, mu)
        sl = mu.canvas.clip_box(qj.box())
        val = float((mu.weights[sl] * ds[sl] ** 2).sum())
        assert val == pytest.approx(res.per_j[j - 1], rel=1e-12)


def test_dual_growth_closed_form_values():
    a = dual_growth_closed_form(2)
    assert a[0] == pytest.approx(0.8, rel=1e-12)
    assert a[1] == pytest.approx(1.1715728752538097, rel=1e-12)
    assert a[2] == pytest.approx(2.0, rel=1e-12)
    res = counterexample_dual_growth(2)
    assert res.restricted_total == pytest.approx(0.2406, abs=5e-5)
    assert np.allclose(res.a_values, a, rtol=1e-12)


def test_dual_growth_norm_one_and_linear():
    for n in (4, 8, 16, 24):
        res = counterexample_dual_growth(n)
        assert res.f_norm == pytest.approx(1.0, rel=1e-12)
    t8 = counterexample_dual_growth(8).total
    t24 = counterexample_dual_growth(24).total
    assert t24 / t8 >= 2.5


def test_gcar_zero_for_t1(lebesgue6, canvas6, unit_grid6):
    system = t1_system(unit_grid6, canvas6)
    forest = build_linf(system, lebesgue6, unit_grid6)
    assert gcar_sequence(system, forest, lebesgue6) == {}


def test_gcar_counterexample_values_and_stability():
    constants = []
    for level in (6, 8, 10):
        canvas = Canvas(1, level)
        mu = AtomicMeasure.lebesgue(canvas)
        system, forest = counterexample_system(4, canvas)
        seq = gcar_sequence(system, forest, mu)
        assert seq            # drops happen across the nested intervals
        assert all(v >= 0 for v in seq.values())
        assert (0, (0,)) not in seq
        constants.append(carleson_constant(seq, mu, system.grid).constant)
    assert max(constants) <= 1.1 * min(constants)
    assert max(constants) == pytest.approx(min(constants), rel=1e-12)


def test_phi_split_t1_trivial(lebesgue6, canvas6, unit_grid6, rng):
    system = t1_system(unit_grid6, canvas6)
    forest = build_linf(system, lebesgue6, unit_grid6)
    f = rng.standard_normal(canvas6.shape)
    res = phi_split(unit_grid6.cube(2, (3,)), f, system, forest, lebesgue6)
    assert res.relative <= 1e-12


def test_phi_split_counterexample_nontrivial(ce8, rng):
    canvas, mu, system, forest = ce8
    f = rng.standard_normal(canvas.shape)
    for j in (1, 2, 3):
        cube = Cube(system.grid, j - 1, (0,))      # stopping child below
        res = phi_split(cube, f, system, forest, mu)
        assert res.relative <= 1e-12
        assert res.scale > 0


def test_phi_split_zero_function(ce8):
    canvas, mu, system, forest = ce8
    res = phi_split(Cube(system.grid, 1, (0,)), np.zeros(canvas.shape),
                    system, forest, mu)
    assert res.residual == 0.0


def test_shu_split_cases(ce8, rng):
    canvas, mu, system, forest = ce8
    f = rng.standard_normal(canvas.shape)
    # transition child (ancestor changes) and plain child (same ancestor)
    for cube, idx in [(Cube(system.grid, 1, (0,)), 0),
                      (Cube(system.grid, 1, (0,)), 1),
                      (Cube(system.grid, 3, (1,)), 0)]:
        res = shu_split(cube, idx, f, system, forest, mu)
        assert res.relative <= 1e-12


def test_shu_split_constant_function_t1(lebesgue6, canvas6, unit_grid6):
    system = t1_system(unit_grid6, canvas6)
    forest = build_linf(system, lebesgue6, unit_grid6)
    f = np.full(canvas6.shape, 4.0)
    res = shu_split(unit_grid6.cube(1, (0,)), 1, f, system, forest, lebesgue6)
    assert res.residual <= 1e-14
