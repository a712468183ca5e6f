import math
from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dytb.lattice import (
    AlignmentError,
    Cube,
    Grid,
    GoodnessRecord,
    bad_at_scale,
    build_grid,
    cube_distance_sq,
    goodness_class,
    goodness_record,
    is_bad,
    skeleton_distance,
    skeleton_distance_sq,
    within_threshold,
)


def brute_skeleton_dist_sq(cube, other, scale):
    """Oracle: enumerate every other-grid cube of the given scale and every
    face of each of its children, and take the exact minimal distance."""
    level = other.top_exp - (scale.bit_length() - 1)
    qbox = cube.box()
    best = None
    for idx in product(range(1 << level), repeat=other.dim):
        parent = Cube(other, level, idx)
        for child in parent.children():
            cbox = child.box()
            for axis in range(other.dim):
                for face_val in (cbox[axis][0], cbox[axis][1]):
                    d = 0
                    for a in range(other.dim):
                        if a == axis:
                            d += max(0, qbox[a][0] - face_val, face_val - qbox[a][1]) ** 2
                        else:
                            d += max(0, cbox[a][0] - qbox[a][1], qbox[a][0] - cbox[a][1]) ** 2
                    if best is None or d < best:
                        best = d
    return best


def test_build_grid_enumerates_seven_cubes():
    grid = build_grid((0,), 2, 2, 1)
    cubes = list(grid.all_cubes())
    assert len(cubes) == 7
    assert grid.top_cube().box() == ((0, 4),)
    assert [c.box() for c in grid.cubes(1)] == [((0, 2),), ((2, 4),)]


def test_build_grid_translation():
    base = build_grid((0,), 2, 2, 1)
    moved = build_grid((1,), 2, 2, 1)
    for a, b in zip(base.all_cubes(), moved.all_cubes()):
        assert b.box() == tuple((lo + 1, hi + 1) for lo, hi in a.box())


def test_build_grid_rejects_unaligned_shift():
    with pytest.raises(AlignmentError):
        build_grid((1,), 3, 2, 1)   # leaf side 2, shift 1


def test_grid_json_round_trip():
    grid = build_grid((4,), 4, 3, 1)
    assert Grid.from_json(grid.to_json()) == grid


def test_children_partition_parent():
    grid = build_grid((0, 0), 3, 3, 2)
    parent = grid.cube(1, (0, 1))
    boxes = [c.box() for c in parent.children()]
    cells = set()
    for box in boxes:
        for x in range(box[0][0], box[0][1]):
            for y in range(box[1][0], box[1][1]):
                cells.add((x, y))
    pbox = parent.box()
    expected = {(x, y) for x in range(pbox[0][0], pbox[0][1])
                for y in range(pbox[1][0], pbox[1][1])}
    assert cells == expected


def test_ancestor_contains_and_scales():
    grid = build_grid((0,), 5, 5, 1)
    q = grid.cube(5, (17,))
    for j in range(6):
        a = q.ancestor(j)
        assert a.contains(q)
        assert a.side_units == q.side_units << j


def test_skeleton_distance_touching_is_zero():
    grid = build_grid((0,), 6, 6, 1)
    q = grid.cube(6, (0,))            # [0, 2^-6) touches the origin
    assert skeleton_distance(q, grid, 16) == 0.0


def test_skeleton_distance_matches_brute_force_1d():
    grid = build_grid((0,), 6, 6, 1)
    other = build_grid((3,), 6, 6, 1)
    for idx in (0, 7, 24, 31, 63):
        for level in (6, 5):
            q = Cube(grid, level, (idx >> (6 - level),))
            for scale in (8, 16, 32):
                assert (skeleton_distance_sq(q, other, scale)
                        == brute_skeleton_dist_sq(q, other, scale))


def test_skeleton_distance_matches_brute_force_2d():
    grid = build_grid((0, 0), 4, 4, 2)
    other = build_grid((1, 3), 4, 4, 2)
    for idx in ((0, 0), (5, 11), (15, 15), (7, 2)):
        q = Cube(grid, 4, idx)
        for scale in (4, 8):
            assert (skeleton_distance_sq(q, other, scale)
                    == brute_skeleton_dist_sq(q, other, scale))


def test_skeleton_distance_interior_offset():
    # identical grids: a level-2 cube sits strictly inside a level-1 child,
    # so its distance to the scale-top skeleton is its offset from the
    # nearest child boundary
    grid = build_grid((0,), 6, 6, 1)
    q = grid.cube(6, (24,))        # [24, 25) in units; boundaries at 0, 32, 64
    d = skeleton_distance_sq(q, grid, 64)
    assert d == brute_skeleton_dist_sq(q, grid, 64) == 7 ** 2


def test_skeleton_scale_below_cube_rejected():
    grid = build_grid((0,), 6, 6, 1)
    q = grid.cube(2, (1,))
    with pytest.raises(ValueError):
        skeleton_distance(q, grid, q.side_units // 2)


def test_threshold_formula_value():
    # side(Q) = 2^-6, side(R) = 2^-2 on the unit top: threshold equals 2^-2,
    # so in units of the finest cell the squared threshold is 16^2
    assert within_threshold(16 ** 2, 1, 16, 1, Fraction(1, 4))
    assert not within_threshold(17 ** 2, 1, 16, 1, Fraction(1, 4))


def test_threshold_tie_counts_as_within():
    # d^4 = 16 * side_q * side_r^3 exactly: d = 16, side_q = 1, side_r = 16
    assert within_threshold(256, 1, 16, 1, Fraction(1, 4))


def test_is_bad_touching_skeleton():
    grid = build_grid((0,), 8, 8, 1)
    q = grid.cube(8, (64,))   # left face on a scale-8 boundary
    assert is_bad(q, grid, 1, Fraction(1, 4))


def test_is_bad_requires_r_at_least_one():
    grid = build_grid((0,), 4, 4, 1)
    with pytest.raises(ValueError):
        is_bad(grid.cube(4, (3,)), grid, 0, Fraction(1, 4))


@given(st.integers(min_value=0, max_value=63),
       st.sampled_from([Fraction(1, 8), Fraction(1, 4), Fraction(3, 8)]),
       st.sampled_from([Fraction(1, 4), Fraction(3, 8), Fraction(49, 100)]))
@settings(max_examples=60, deadline=None)
def test_badness_monotone_in_gamma(idx, g_small, g_large):
    # enlarging gamma toward 1/2 can only turn good cubes bad
    if g_small > g_large:
        g_small, g_large = g_large, g_small
    grid = build_grid((0,), 6, 6, 1)
    other = build_grid((5,), 6, 6, 1)
    q = Cube(grid, 6, (idx,))
    for scale in (4, 16, 64):
        if bad_at_scale(q, other, scale, g_small):
            assert bad_at_scale(q, other, scale, g_large)


def test_is_bad_deterministic():
    grid = build_grid((0,), 6, 6, 1)
    other = build_grid((7,), 6, 6, 1)
    q = grid.cube(6, (22,))
    results = {is_bad(q, other, 2, Fraction(1, 4)) for _ in range(5)}
    assert len(results) == 1


def test_goodness_class_scan():
    grid = build_grid((0,), 16, 16, 1)
    other = build_grid((0,), 16, 16, 1)
    q = Cube(grid, 16, ((1 << 15) + 37,))
    alpha = goodness_class(q, other, Fraction(1, 4))
    if alpha is not None:
        # the class is the first scale from which every larger scale is good
        for m in range(alpha, 17):
            assert not bad_at_scale(q, other, 1 << m, Fraction(1, 4))
        if alpha > 1:
            assert bad_at_scale(q, other, 1 << (alpha - 1), Fraction(1, 4))


def test_goodness_class_none_when_bad_at_top():
    grid = build_grid((0,), 6, 6, 1)
    q = grid.cube(6, (32,))    # touches the top-scale skeleton at every scale
    assert goodness_class(q, grid, Fraction(1, 4)) is None


def test_goodness_record_clamps_to_r():
    grid = build_grid((0,), 6, 6, 1)
    other = build_grid((3,), 6, 6, 1)
    rec = goodness_record(grid.cube(6, (21,)), other, 4, Fraction(1, 4))
    assert rec.alpha_class is None or rec.effective_class >= 4


def test_cube_distance_sq():
    grid = build_grid((0,), 4, 4, 1)
    assert cube_distance_sq(grid.cube(4, (0,)), grid.cube(4, (5,))) == 16
    assert cube_distance_sq(grid.cube(4, (3,)), grid.cube(2, (0,))) == 0
