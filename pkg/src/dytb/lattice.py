"""Dyadic cube geometry on an integer lattice.

All coordinates are integers counted in units of the finest reference cell,
so containment, skeleton distances and badness thresholds are decided with
exact integer arithmetic.  A threshold comparison ``d <= 2 sqrt(n) *
side(Q)**g * side(R)**(1-g)`` with rational exponent ``g = p/q`` is resolved
by comparing ``(d^2)^q`` against ``(4n)^q side(Q)^{2p} side(R)^{2(q-p)}``,
both exact integers.  Grids and cubes are immutable and hashable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Iterator, Optional

Box = tuple[tuple[int, int], ...]


class AlignmentError(ValueError):
    """Grid shift is not a multiple of the grid's finest cell side."""


def as_gamma(gamma) -> Fraction:
    """Coerce a badness exponent to an exact Fraction in (0, 1/2)."""
    g = gamma if isinstance(gamma, Fraction) else Fraction(str(gamma))
    if not Fraction(0) < g < Fraction(1, 2):
        raise ValueError(f"gamma must lie in (0, 1/2), got {gamma!r}")
    return g


@dataclass(frozen=True)
class Grid:
    """Shifted dyadic grid over ``shift + [0, 2**top_exp)**dim``.

    Levels run 0..depth; a level-k cube has side ``2**(top_exp - k)`` units.
    The shift must be a multiple of the leaf side so that any two grids of
    equal leaf size intersect in whole leaves.
    """

    dim: int
    top_exp: int
    depth: int
    shift: tuple[int, ...]

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dimension must be >= 1")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.top_exp < self.depth:
            raise ValueError("top_exp must be >= depth (leaf side >= 1 unit)")
        if len(self.shift) != self.dim:
            raise ValueError("shift length must match dimension")
        leaf = self.leaf_units
        for s in self.shift:
            if s % leaf:
                raise AlignmentError(
                    f"shift {self.shift} is not a multiple of the finest cell side {leaf}"
                )

    @property
    def side_units(self) -> int:
        return 1 << self.top_exp

    @property
    def leaf_units(self) -> int:
        return 1 << (self.top_exp - self.depth)

    def level_side(self, level: int) -> int:
        if not 0 <= level <= self.depth:
            raise ValueError(f"level {level} outside 0..{self.depth}")
        return 1 << (self.top_exp - level)

    def top_cube(self) -> "Cube":
        return Cube(self, 0, (0,) * self.dim)

    def cube(self, level: int, index: tuple[int, ...]) -> "Cube":
        return Cube(self, level, tuple(index))

    def cubes(self, level: int) -> Iterator["Cube"]:
        n = 1 << level
        self.level_side(level)
        for idx in product(range(n), repeat=self.dim):
            yield Cube(self, level, idx)

    def all_cubes(self, max_level: Optional[int] = None) -> Iterator["Cube"]:
        top = self.depth if max_level is None else min(max_level, self.depth)
        for level in range(top + 1):
            yield from self.cubes(level)

    def cube_containing(self, point_units: tuple[int, ...], level: int) -> Optional["Cube"]:
        """Level-`level` cube whose half-open box contains the lattice point, or None."""
        side = self.level_side(level)
        idx = []
        for a in range(self.dim):
            off = point_units[a] - self.shift[a]
            if not 0 <= off < self.side_units:
                return None
            idx.append(off // side)
        return Cube(self, level, tuple(idx))

    def to_json(self) -> str:
        return json.dumps(
            {"shift": list(self.shift), "top_scale": self.top_exp,
             "depth": self.depth, "dimension": self.dim},
            sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Grid":
        d = json.loads(text)
        return cls(dim=d["dimension"], top_exp=d["top_scale"],
                   depth=d["depth"], shift=tuple(d["shift"]))


def build_grid(shift: tuple[int, ...], top_scale: int, depth: int, dimension: int) -> Grid:
    """Construct a grid, rejecting shifts that are not leaf-aligned."""
    return Grid(dim=dimension, top_exp=top_scale, depth=depth, shift=tuple(shift))


@dataclass(frozen=True)
class Cube:
    grid: Grid
    level: int
    index: tuple[int, ...]

    def __post_init__(self):
        if not 0 <= self.level <= self.grid.depth:
            raise ValueError(f"level {self.level} outside grid depth {self.grid.depth}")
        n = 1 << self.level
        for i in self.index:
            if not 0 <= i < n:
                raise ValueError(f"index {self.index} outside level {self.level}")

    @property
    def side_units(self) -> int:
        return self.grid.level_side(self.level)

    def box(self) -> Box:
        s = self.side_units
        return tuple((self.grid.shift[a] + self.index[a] * s,
                      self.grid.shift[a] + (self.index[a] + 1) * s)
                     for a in range(self.grid.dim))

    @property
    def key(self) -> tuple[int, tuple[int, ...]]:
        return (self.level, self.index)

    @property
    def cube_id(self) -> str:
        return f"{self.level}:{','.join(map(str, self.index))}"

    def parent(self) -> "Cube":
        if self.level == 0:
            raise ValueError("top cube has no parent")
        return Cube(self.grid, self.level - 1, tuple(i >> 1 for i in self.index))

    def ancestor(self, j: int) -> "Cube":
        """The j-fold dyadic ancestor (side 2**j times larger)."""
        if not 0 <= j <= self.level:
            raise ValueError(f"ancestor offset {j} outside 0..{self.level}")
        return Cube(self.grid, self.level - j, tuple(i >> j for i in self.index))

    def children(self) -> list["Cube"]:
        if self.level >= self.grid.depth:
            return []
        return [Cube(self.grid, self.level + 1,
                     tuple(2 * self.index[a] + b[a] for a in range(self.grid.dim)))
                for b in product((0, 1), repeat=self.grid.dim)]

    def contains(self, other: "Cube") -> bool:
        ob, sb = other.box(), self.box()
        return all(sl <= ol and oh <= sh for (sl, sh), (ol, oh) in zip(sb, ob))


def parse_cube_id(grid: Grid, cube_id: str) -> Cube:
    level_s, idx_s = cube_id.split(":")
    return Cube(grid, int(level_s), tuple(int(t) for t in idx_s.split(",")))


# ---------------------------------------------------------------------------
# exact distances


def _interval_gap(lo: int, hi: int, lo2: int, hi2: int) -> int:
    # distance between the closed intervals [lo, hi] and [lo2, hi2]
    return max(0, lo2 - hi, lo - hi2)


def _lattice_gap(lo: int, hi: int, origin: int, spacing: int, lo_cl: int, hi_cl: int) -> int:
    """Gap from closed interval [lo, hi] to the nearest point of
    ``origin + spacing*Z`` restricted to [lo_cl, hi_cl]."""
    m_min = -((origin - lo_cl) // spacing)   # ceil((lo_cl - origin) / spacing)
    m_max = (hi_cl - origin) // spacing
    if m_min > m_max:
        raise ValueError("no lattice point inside the clamp range")
    candidates = set()
    for t in (lo, hi):
        m = (t - origin) // spacing
        for mm in (m, m + 1):
            candidates.add(min(max(mm, m_min), m_max))
    # the gap is unimodal in m, so clamped unconstrained minimizers suffice
    return min(_interval_gap(lo, hi, origin + m * spacing, origin + m * spacing)
               for m in candidates)


def cube_gap_sq(a: Box, b: Box) -> int:
    """Squared Euclidean distance between two closed boxes (integer)."""
    return sum(_interval_gap(al, ah, bl, bh) ** 2 for (al, ah), (bl, bh) in zip(a, b))


def cube_distance_sq(q: Cube, r: Cube) -> int:
    return cube_gap_sq(q.box(), r.box())


def cube_distance(q: Cube, r: Cube) -> float:
    """d(Q, R) in canvas units."""
    return cube_distance_sq(q, r) ** 0.5


def skeleton_distance_sq(cube: Cube, other: Grid, scale_units: int) -> int:
    """Exact squared distance from `cube` to the union of child boundaries of
    all `other`-grid cubes with side `scale_units`."""
    if cube.grid.dim != other.dim:
        raise ValueError("dimension mismatch")
    if scale_units < cube.side_units:
        raise ValueError("skeleton scale below the cube side; badness is only defined upward")
    valid = {other.level_side(k) for k in range(other.depth + 1)}
    if scale_units not in valid:
        raise ValueError(f"scale {scale_units} is not a level side of the other grid")
    if scale_units < 2:
        raise ValueError("scale must span at least two finest cells")
    spacing = scale_units // 2
    qbox = cube.box()
    n = other.dim
    top = tuple((other.shift[a], other.shift[a] + other.side_units) for a in range(n))
    best = None
    for a in range(n):
        # hyperplanes perpendicular to axis a, spanning the top cube elsewhere
        g = _lattice_gap(qbox[a][0], qbox[a][1], other.shift[a], spacing,
                         top[a][0], top[a][1]) ** 2
        for b in range(n):
            if b != a:
                g += _interval_gap(qbox[b][0], qbox[b][1], top[b][0], top[b][1]) ** 2
        if best is None or g < best:
            best = g
    return best


def skeleton_distance(cube: Cube, other: Grid, scale_units: int) -> float:
    """d(Q, union of child skeletons at the given scale), in canvas units."""
    return skeleton_distance_sq(cube, other, scale_units) ** 0.5


def within_threshold(dist_sq: int, side_q: int, side_r: int, dim: int, gamma) -> bool:
    """Exact test of d <= 2*sqrt(n) * side_q**gamma * side_r**(1-gamma).

    Equality counts as within (ties are classified bad).
    """
    g = as_gamma(gamma)
    p, q = g.numerator, g.denominator
    lhs = dist_sq ** q
    rhs = (4 * dim) ** q * side_q ** (2 * p) * side_r ** (2 * (q - p))
    return lhs <= rhs


def _scale_ladder(cube: Cube, other: Grid, min_side: int) -> list[int]:
    sides = sorted(other.level_side(k) for k in range(other.depth + 1))
    return [s for s in sides if s >= max(min_side, 2)]


def bad_at_scale(cube: Cube, other: Grid, scale_units: int, gamma) -> bool:
    dsq = skeleton_distance_sq(cube, other, scale_units)
    return within_threshold(dsq, cube.side_units, scale_units, cube.grid.dim, gamma)


def is_bad_at_or_above(cube: Cube, other: Grid, min_scale_units: int, gamma) -> bool:
    """True iff the skeleton condition holds at some other-grid scale >= min_scale_units."""
    return any(bad_at_scale(cube, other, s, gamma)
               for s in _scale_ladder(cube, other, min_scale_units))


def is_bad(cube: Cube, other: Grid, r: int, gamma) -> bool:
    """Badness of `cube` relative to `other`: some other-grid cube at least
    2**r times larger has its child skeleton within the threshold distance."""
    if r < 1:
        raise ValueError("separation parameter r must be >= 1")
    return is_bad_at_or_above(cube, other, (1 << r) * cube.side_units, gamma)


def goodness_class(cube: Cube, other: Grid, gamma) -> Optional[int]:
    """Smallest k such that the cube is good at every other-grid scale
    >= 2**k times its side (scanning up to the other grid's top cube).

    Returns None when the cube is bad at the top scale.
    """
    side = cube.side_units
    flags = {}
    for s in _scale_ladder(cube, other, 2 * side):
        m = s.bit_length() - side.bit_length()
        flags[m] = bad_at_scale(cube, other, s, gamma)
    if not flags:
        return 1
    top_m = max(flags)
    if flags[top_m]:
        return None
    bad_ms = [m for m, f in flags.items() if f]
    return (max(bad_ms) + 1) if bad_ms else min(flags)


@dataclass(frozen=True)
class GoodnessRecord:
    """Per-cube goodness bookkeeping used by the good-part sums."""

    cube: Cube
    other: Grid
    r: int
    gamma: Fraction
    alpha_class: Optional[int]

    @property
    def effective_class(self) -> Optional[int]:
        # the good-part sums never use a class below the separation parameter
        if self.alpha_class is None:
            return None
        return max(self.alpha_class, self.r)


def goodness_record(cube: Cube, other: Grid, r: int, gamma) -> GoodnessRecord:
    g = as_gamma(gamma)
    return GoodnessRecord(cube=cube, other=other, r=r, gamma=g,
                          alpha_class=goodness_class(cube, other, g))
