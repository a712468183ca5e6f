"""Adapted two-level averaging differences, the telescoping decomposition,
square-function statistics, algebraic splittings and the linear-growth
computation for the explicit dual counterexample family."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from dytb.lattice import Cube, Grid
from dytb.measure import AtomicMeasure
from dytb.stopping import StoppingForest

__all__ = [
    "AccretivityError", "MartingaleCoefficients", "delta", "delta_adjoint",
    "decompose", "truncated_average_profile", "square_function_ratio",
    "restricted_dual_ratio", "counterexample_dual_growth", "DualGrowthResult",
    "dual_growth_closed_form", "gcar_sequence", "phi_split", "shu_split",
    "SplitResidual",
]

MARGIN = 1e-10


class AccretivityError(ArithmeticError):
    """A required test-function average is numerically zero on some cube."""

    def __init__(self, cube: Cube, value: float):
        self.cube = cube
        self.value = value
        super().__init__(f"test-function average {value:.3e} on cube {cube.cube_id} "
                         "is below the accretivity margin")


def _avg(mu: AtomicMeasure, arr: np.ndarray, cube: Cube) -> Optional[float]:
    return mu.cube_average(arr, cube)


def _checked_ratio(mu: AtomicMeasure, f: np.ndarray, b: np.ndarray, cube: Cube) -> float:
    """<f>_Q / <b>_Q with the accretivity margin enforced on the denominator."""
    fa = mu.cube_average(f, cube)
    ba = mu.cube_average(b, cube)
    sl = mu.canvas.clip_box(cube.box())
    bscale = float(np.abs(b[sl]).max()) if sl is not None else 0.0
    if abs(ba) < MARGIN * max(bscale, 1.0):
        raise AccretivityError(cube, ba)
    return fa / ba


def delta(cube: Cube, f: np.ndarray, system, forest: StoppingForest,
          mu: AtomicMeasure, which: int = 1) -> np.ndarray:
    """Two-level adapted difference on `cube`: per child Q', the child-level
    adapted average minus the cube-level one, cut to Q'.  Zero-mass children
    contribute nothing."""
    out = np.zeros(mu.canvas.shape)
    if mu.cube_mass(cube) <= 0 or not cube.children():
        return out
    banc = system.b(which, forest.ancestor(cube))
    r0 = _checked_ratio(mu, f, banc, cube)
    for child in cube.children():
        if mu.cube_mass(child) <= 0:
            continue
        sl = mu.canvas.clip_box(child.box())
        banc_c = system.b(which, forest.ancestor(child))
        r1 = _checked_ratio(mu, f, banc_c, child)
        out[sl] = r1 * banc_c[sl] - r0 * banc[sl]
    return out


def delta_adjoint(cube: Cube, g: np.ndarray, system, forest: StoppingForest,
                  mu: AtomicMeasure, which: int = 1) -> np.ndarray:
    """Adjoint difference: piecewise constants on the children built from
    weighted averages, satisfying <delta f, g> = <f, delta* g> exactly."""
    out = np.zeros(mu.canvas.shape)
    if mu.cube_mass(cube) <= 0 or not cube.children():
        return out
    banc = system.b(which, forest.ancestor(cube))
    r0 = _checked_ratio(mu, banc * g, banc, cube)
    for child in cube.children():
        if mu.cube_mass(child) <= 0:
            continue
        sl = mu.canvas.clip_box(child.box())
        banc_c = system.b(which, forest.ancestor(child))
        r1 = _checked_ratio(mu, banc_c * g, banc_c, child)
        out[sl] = r1 - r0
    return out


@dataclass
class MartingaleCoefficients:
    """Top-level profile plus per-cube difference pieces, grouped by level."""

    grid: Grid
    canvas_shape: tuple
    e0: np.ndarray
    pieces: dict[int, list[tuple[Cube, tuple, np.ndarray]]]  # level -> (cube, slices, values)
    truncation_level: int

    def partial_sum(self, k: Optional[int] = None) -> np.ndarray:
        k = self.truncation_level if k is None else k
        out = self.e0.copy()
        for level in range(min(k, self.truncation_level)):
            for _, sl, vals in self.pieces.get(level, []):
                out[sl] += vals
        return out

    def reconstruct(self) -> np.ndarray:
        return self.partial_sum(None)

    def delta_of(self, cube: Cube) -> np.ndarray:
        out = np.zeros(self.canvas_shape)
        for c, sl, vals in self.pieces.get(cube.level, []):
            if c.key == cube.key:
                out[sl] = vals
                return out
        return out

    def iter_pieces(self):
        for level in sorted(self.pieces):
            yield from self.pieces[level]


def _embed_in_grid(grid: Grid, mu: AtomicMeasure, arr: np.ndarray) -> np.ndarray:
    """Place a canvas array inside the grid's coordinate box (units)."""
    span = grid.side_units
    n = mu.canvas.cells_per_axis
    base = np.zeros((span,) * grid.dim)
    dst, src = [], []
    for a in range(grid.dim):
        lo = -grid.shift[a]
        t0, t1 = max(lo, 0), min(lo + n, span)
        if t0 >= t1:
            return base
        dst.append(slice(t0, t1))
        src.append(slice(t0 - lo, t1 - lo))
    base[tuple(dst)] = arr[tuple(src)]
    return base


def _block_reduce(arr: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return arr
    for a in range(arr.ndim):
        shape = arr.shape[:a] + (arr.shape[a] // factor, factor) + arr.shape[a + 1:]
        arr = arr.reshape(shape).sum(axis=a + 1)
    return arr


class _LevelSums:
    """Per-level cube sums of a cell array over a grid, built bottom-up."""

    def __init__(self, grid: Grid, mu: AtomicMeasure, arr: np.ndarray):
        leaf = _block_reduce(_embed_in_grid(grid, mu, arr), grid.leaf_units)
        levels = [None] * (grid.depth + 1)
        levels[grid.depth] = leaf
        for k in range(grid.depth - 1, -1, -1):
            levels[k] = _block_reduce(levels[k + 1], 2)
        self.levels = levels

    def at(self, cube: Cube) -> float:
        return float(self.levels[cube.level][cube.index])


def decompose(f: np.ndarray, system, forest: StoppingForest, mu: AtomicMeasure,
              which: int = 1, upto_level: Optional[int] = None) -> MartingaleCoefficients:
    """Full adapted decomposition of f on the forest's grid down to
    `upto_level` (default: the grid floor).  At the floor the pieces plus the
    top profile reconstruct f exactly on cells carrying mass."""
    grid = forest.grid
    k_max = grid.depth if upto_level is None else min(upto_level, grid.depth)
    canvas = mu.canvas
    masses = _LevelSums(grid, mu, mu.weights)
    f_int = _LevelSums(grid, mu, mu.weights * f)
    b_int: dict = {}
    b_max: dict = {}
    wpos = mu.weights > 0

    def anc_data(anc: Cube):
        got = b_int.get(anc.key)
        if got is None:
            barr = system.b(which, anc)
            got = _LevelSums(grid, mu, mu.weights * barr)
            b_int[anc.key] = got
            vals = np.abs(barr[wpos])
            b_max[anc.key] = float(vals.max()) if vals.size else 0.0
        return got

    def ratio(cube: Cube, anc: Cube, mass: float) -> float:
        bavg = anc_data(anc).at(cube) / mass
        if abs(bavg) < MARGIN * max(b_max[anc.key], 1.0):
            raise AccretivityError(cube, bavg)
        return (f_int.at(cube) / mass) / bavg

    top = grid.top_cube()
    top_anc = forest.ancestor(top)
    e0 = ratio(top, top_anc, masses.at(top)) * system.b(which, top_anc)
    pieces: dict[int, list] = {}
    for level in range(k_max):
        rows = []
        for cube in grid.cubes(level):
            m = masses.at(cube)
            if m <= 0:
                continue
            sl_q = canvas.clip_box(cube.box())
            piece = np.zeros(tuple(s.stop - s.start for s in sl_q))
            anc = forest.ancestor(cube)
            banc = system.b(which, anc)
            r0 = ratio(cube, anc, m)
            touched = False
            for child in cube.children():
                mc = masses.at(child)
                if mc <= 0:
                    continue
                sl = canvas.clip_box(child.box())
                loc = tuple(slice(c.start - q.start, c.stop - q.start)
                            for q, c in zip(sl_q, sl))
                anc_c = forest.ancestor(child)
                banc_c = system.b(which, anc_c)
                r1 = ratio(child, anc_c, mc)
                piece[loc] = r1 * banc_c[sl] - r0 * banc[sl]
                touched = True
            if touched:
                rows.append((cube, sl_q, piece))
        if rows:
            pieces[level] = rows
    return MartingaleCoefficients(grid=grid, canvas_shape=canvas.shape, e0=e0,
                                  pieces=pieces, truncation_level=k_max)


def truncated_average_profile(f: np.ndarray, system, forest: StoppingForest,
                              mu: AtomicMeasure, k: int, which: int = 1) -> np.ndarray:
    """Level-k adapted average: on each level-k cube, the plain average of f
    divided by the average of the ancestor test function, times that test
    function.  Computed in one shot, independently of the telescoping sum."""
    grid = forest.grid
    out = np.zeros(mu.canvas.shape)
    for cube in grid.cubes(k):
        if mu.cube_mass(cube) <= 0:
            continue
        sl = mu.canvas.clip_box(cube.box())
        banc = system.b(which, forest.ancestor(cube))
        out[sl] = _checked_ratio(mu, f, banc, cube) * banc[sl]
    return out


def square_function_ratio(f: np.ndarray, system, forest: StoppingForest,
                          mu: AtomicMeasure, which: int = 1) -> float:
    nf2 = mu.inner(f, f)
    if nf2 <= 0:
        raise ValueError("f must have positive norm")
    coeffs = decompose(f, system, forest, mu, which)
    total = 0.0
    for _, sl, vals in coeffs.iter_pieces():
        total += float((mu.weights[sl] * vals * vals).sum())
    return total / nf2


def restricted_dual_ratio(P: Cube, f: np.ndarray, system, forest: StoppingForest,
                          mu: AtomicMeasure, which: int = 1) -> float:
    """Sum of squared adjoint differences over cubes whose forest ancestor is
    P, divided by the squared norm of f restricted to P."""
    sl = mu.canvas.clip_box(P.box())
    denom = float((mu.weights[sl] * f[sl] ** 2).sum()) if sl is not None else 0.0
    if denom <= 0:
        raise ValueError(f"f carries no mass on {P.cube_id}")
    total = 0.0
    grid = forest.grid
    for level in range(P.level, grid.depth):
        for cube in grid.cubes(level):
            if not P.contains(cube) or mu.cube_mass(cube) <= 0:
                continue
            if forest.ancestor(cube).key != P.key:
                continue
            ds = delta_adjoint(cube, f, system, forest, mu, which)
            total += mu.inner(ds, ds)
    return total / denom


# ---------------------------------------------------------------------------
# explicit growth family


def dual_growth_closed_form(N: int) -> np.ndarray:
    """Oracle values A_j = 2^{j/2} / (1 + 2^{(j-N)/2} - 2^{j-N}), j = 0..N."""
    j = np.arange(N + 1, dtype=float)
    return 2.0 ** (j / 2) / (1.0 + 2.0 ** ((j - N) / 2) - 2.0 ** (j - N))


@dataclass
class DualGrowthResult:
    N: int
    a_values: np.ndarray          # adapted averages on the nested intervals
    per_j: np.ndarray             # squared jump on the stopping child, j = 1..N
    sibling_j: np.ndarray         # squared jump on the complementary child
    restricted_total: float       # sum of per_j
    total: float                  # full dual square sum over every cube
    f_norm: float


def counterexample_dual_growth(N: int) -> DualGrowthResult:
    """Adjoint-difference growth of the explicit family against the unit-norm
    spike 2^{N/2} on [0, 2^-N), computed from exact piece integrals.

    Every adjoint difference is supported on the two children of some nested
    interval; other cubes contribute zero, so the full square sum equals the
    two-children total.  It grows linearly in N while the function norm is 1.
    """
    if N < 2:
        raise ValueError("N must be >= 2")
    spike = 2.0 ** -N
    f_spike = 2.0 ** (N / 2.0)
    a_op = np.empty(N + 1)
    for j in range(N + 1):
        v_spike = 2.0 ** ((N - j) / 2.0)
        int_b = v_spike * spike + (2.0 ** -j - spike)
        int_bf = v_spike * f_spike * spike
        a_op[j] = int_bf / int_b
    jj = np.arange(1, N + 1)
    per_j = (a_op[1:] - a_op[:-1]) ** 2 * 2.0 ** (-jj.astype(float))
    sibling = a_op[:-1] ** 2 * 2.0 ** (-jj.astype(float))
    f_norm = (f_spike ** 2 * spike) ** 0.5
    return DualGrowthResult(N=N, a_values=a_op, per_j=per_j, sibling_j=sibling,
                            restricted_total=float(per_j.sum()),
                            total=float(per_j.sum() + sibling.sum()),
                            f_norm=f_norm)


def gcar_sequence(system, forest: StoppingForest, nu: AtomicMeasure,
                  which: int = 1, max_level: Optional[int] = None) -> dict:
    """Squared drop of the ancestor test-function average from parent to cube,
    weighted by the cube mass.  The top cube has no parent and is excluded."""
    grid = forest.grid
    top_level = grid.depth if max_level is None else min(max_level, grid.depth)
    out = {}
    for level in range(1, top_level + 1):
        for cube in grid.cubes(level):
            if nu.cube_mass(cube) <= 0:
                continue
            banc = system.b(which, forest.ancestor(cube))
            a_here = nu.cube_average(banc, cube)
            a_par = nu.cube_average(banc, cube.parent())
            if a_par is None:
                continue
            val = (a_here - a_par) ** 2 * nu.cube_mass(cube)
            if val:
                out[cube.key] = val
    return out


@dataclass
class SplitResidual:
    residual: float
    scale: float

    @property
    def relative(self) -> float:
        return self.residual / max(self.scale, 1e-300)


def _essential_max(mu: AtomicMeasure, arr: np.ndarray) -> float:
    m = mu.weights > 0
    return float(np.abs(arr[m]).max()) if m.any() else 0.0


def phi_split(cube: Cube, f: np.ndarray, system, forest: StoppingForest,
              mu: AtomicMeasure, which: int = 1) -> SplitResidual:
    """Residual of: difference piece = its own second application plus one
    correction per stopping child, where the correction swaps the ancestor
    test function for the child's own."""
    d1 = delta(cube, f, system, forest, mu, which)
    d2 = delta(cube, d1, system, forest, mu, which)
    banc = system.b(which, forest.ancestor(cube))
    r0 = _checked_ratio(mu, f, banc, cube) if mu.cube_mass(cube) > 0 else 0.0
    corr = np.zeros(mu.canvas.shape)
    for child in cube.children():
        if mu.cube_mass(child) <= 0:
            continue
        if forest.ancestor(child).key != child.key:
            continue
        sl = mu.canvas.clip_box(child.box())
        bp = system.b(which, child)
        ratio = _checked_ratio(mu, banc, bp, child)
        corr[sl] = r0 * (ratio * bp[sl] - banc[sl])
    resid = d1 - d2 - corr
    scale = max(_essential_max(mu, d1), _essential_max(mu, d2), _essential_max(mu, corr), 1e-300)
    return SplitResidual(residual=_essential_max(mu, resid), scale=scale)


def shu_split(cube: Cube, child_index: int, f: np.ndarray, system,
              forest: StoppingForest, mu: AtomicMeasure, which: int = 1) -> SplitResidual:
    """Residual of the three-piece rewrite of a difference piece on one child:
    a same-ancestor jump, plus entering and leaving terms where the ancestor
    changes across the level."""
    children = cube.children()
    child = children[child_index]
    d1 = delta(cube, f, system, forest, mu, which)
    sl = mu.canvas.clip_box(child.box())
    lhs = np.zeros(mu.canvas.shape)
    if sl is not None:
        lhs[sl] = d1[sl]
    rhs = np.zeros(mu.canvas.shape)
    if mu.cube_mass(child) > 0 and mu.cube_mass(cube) > 0:
        anc_q = forest.ancestor(cube)
        anc_c = forest.ancestor(child)
        b_q = system.b(which, anc_q)
        b_c = system.b(which, anc_c)
        r_cube = _checked_ratio(mu, f, b_q, cube)
        r_child = _checked_ratio(mu, f, b_c, child)
        if anc_c.key == anc_q.key:
            s_avg, h_avg, u_avg = r_child - r_cube, 0.0, 0.0
        else:
            s_avg, h_avg, u_avg = 0.0, r_child, -r_cube
        rhs[sl] = b_c[sl] * (s_avg + h_avg) + b_q[sl] * u_avg
    wmask = np.zeros(mu.canvas.shape, dtype=bool)
    if sl is not None:
        wmask[sl] = mu.weights[sl] > 0
    resid = np.abs(lhs - rhs)[wmask]
    residual = float(resid.max()) if resid.size else 0.0
    scale = max(_essential_max(mu, lhs), _essential_max(mu, rhs), 1e-300)
    return SplitResidual(residual=residual, scale=scale)
