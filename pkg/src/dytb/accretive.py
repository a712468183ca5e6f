"""Per-cube test function systems: the indicator system, seeded bounded
perturbations with exact mean normalization, and the explicit growth family
whose dual square sum increases linearly with the nesting depth."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from dytb.lattice import Cube, Grid, parse_cube_id
from dytb.measure import AtomicMeasure, Canvas
from dytb.stopping import StoppingForest

__all__ = [
    "AccretiveSystem", "t1_system", "random_bounded_system",
    "counterexample_system", "validate", "ValidationReport",
    "save_system", "load_system",
]


class AccretiveSystem:
    """Two families of cube-supported test functions b1_Q, b2_Q.

    mode 'Linf' declares a sup-norm bound C; mode 'L2' declares a normalized
    square-integral bound C and a testing exponent s > 2.  Functions are cell
    arrays on the canvas, generated lazily and cached per cube.
    """

    def __init__(self, mode: str, C: float, grid: Grid, canvas: Canvas,
                 gen1: Callable[[Cube], np.ndarray],
                 gen2: Optional[Callable[[Cube], np.ndarray]] = None,
                 s: Optional[float] = None, label: str = "",
                 injected_forest: Optional[StoppingForest] = None):
        if mode not in ("Linf", "L2"):
            raise ValueError("mode must be 'Linf' or 'L2'")
        if mode == "L2" and (s is None or s <= 2):
            raise ValueError("L2 systems declare a testing exponent s > 2")
        self.mode = mode
        self.C = C
        self.s = s
        self.grid = grid
        self.canvas = canvas
        self.label = label
        self.injected_forest = injected_forest
        self._gen = {1: gen1, 2: gen2 or gen1}
        self._cache: dict[tuple[int, tuple], np.ndarray] = {}

    def b(self, which: int, cube: Cube) -> np.ndarray:
        key = (which, cube.key)
        got = self._cache.get(key)
        if got is None:
            got = self._gen[which](cube)
            self._cache[key] = got
        return got

    def b1(self, cube: Cube) -> np.ndarray:
        return self.b(1, cube)

    def b2(self, cube: Cube) -> np.ndarray:
        return self.b(2, cube)


def _indicator(canvas: Canvas, cube: Cube) -> np.ndarray:
    out = np.zeros(canvas.shape)
    sl = canvas.clip_box(cube.box())
    if sl is not None:
        out[sl] = 1.0
    return out


def t1_system(grid: Grid, canvas: Canvas) -> AccretiveSystem:
    """b_Q = indicator of Q; every invariant holds with constant 1."""
    return AccretiveSystem("Linf", 1.0, grid, canvas,
                           lambda cube: _indicator(canvas, cube), label="t1")


def _paired_signs(weights_flat: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Seeded +-1 pattern with exact zero weighted sum, built by pairing cells
    of equal weight; unpairable leftovers get 0."""
    sigma = np.zeros(weights_flat.shape[0])
    order = np.argsort(weights_flat, kind="stable")
    i = 0
    npos = len(order)
    while i + 1 < npos:
        a, b = order[i], order[i + 1]
        if weights_flat[a] == weights_flat[b]:
            s = 1.0 if rng.integers(0, 2) else -1.0
            sigma[a], sigma[b] = s, -s
            i += 2
        else:
            i += 1
    # shuffle the pair layout so sub-blocks see nonzero partial sums
    perm = rng.permutation(npos)
    out = np.zeros_like(sigma)
    vals = sigma[order]
    out[order[perm]] = vals
    return out


def random_bounded_system(grid: Grid, mu: AtomicMeasure, eps: float, seed: int,
                          pattern_level: Optional[int] = None) -> AccretiveSystem:
    """b_Q = 1 + eps * sigma_Q on Q with a seeded sign pattern of exact zero
    mu-mean, so the cube normalization is exact and sup |b_Q| <= 1 + eps.

    `pattern_level` draws the signs blockwise at that canvas level, which
    keeps the system identical across refinements of the same layout.
    """
    if not 0 <= eps < 1:
        raise ValueError("eps must lie in [0, 1)")
    canvas = mu.canvas

    def make_gen(which: int) -> Callable[[Cube], np.ndarray]:
        def gen(cube: Cube) -> np.ndarray:
            out = np.zeros(canvas.shape)
            sl = canvas.clip_box(cube.box())
            if sl is None:
                return out
            out[sl] = 1.0
            if eps == 0.0:
                return out
            w = mu.weights[sl]
            rng = np.random.default_rng([seed, which, cube.level, *cube.index])
            if pattern_level is None or pattern_level >= canvas.level:
                if w.size < 2:
                    return out
                sigma = _paired_signs(w.reshape(-1), rng).reshape(w.shape)
            else:
                block = 1 << (canvas.level - pattern_level)
                shape = w.shape
                if any(s % block for s in shape):
                    raise ValueError("cube is not aligned to the pattern level")
                coarse_shape = tuple(s // block for s in shape)
                red = w.copy()
                for ax in range(canvas.dim):
                    ns = red.shape[:ax] + (coarse_shape[ax], block) + red.shape[ax + 1:]
                    red = red.reshape(ns).sum(axis=ax + 1)
                if red.size < 2:
                    return out
                sig_c = _paired_signs(red.reshape(-1), rng).reshape(coarse_shape)
                sigma = sig_c
                for ax in range(canvas.dim):
                    sigma = np.repeat(sigma, block, axis=ax)
            out[sl] += eps * sigma
            return out
        return gen

    return AccretiveSystem("Linf", 1.0 + eps, grid, canvas, make_gen(1), make_gen(2),
                           label=f"random_bounded:{eps}:{seed}")


def counterexample_system(N: int, canvas: Canvas,
                          grid: Optional[Grid] = None) -> tuple[AccretiveSystem, StoppingForest]:
    """Growth family on [0,1): on the nested intervals Q_j = [0, 2^-j) the
    test function is 2^{(N-j)/2} on [0, 2^-N) and 1 on the rest; elsewhere it
    is the plain indicator.  Ships with its designated stopping forest whose
    generations are exactly the Q_j.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if canvas.dim != 1:
        raise ValueError("the growth family is one dimensional")
    if canvas.level < N:
        raise ValueError(f"canvas depth {canvas.level} is below N={N}")
    grid = grid or Grid(dim=1, top_exp=canvas.level, depth=canvas.level, shift=(0,))
    if grid.shift != (0,) or grid.top_exp != canvas.level:
        raise ValueError("the growth family needs the unshifted unit grid")
    ncells = canvas.cells_per_axis

    def gen(cube: Cube) -> np.ndarray:
        out = np.zeros(canvas.shape)
        sl = canvas.clip_box(cube.box())
        if sl is None:
            return out
        level, index = cube.level, cube.index[0]
        if index == 0 and level <= N:
            j = level
            n_spike = ncells >> N          # cells in [0, 2^-N)
            n_cube = ncells >> j
            out[:n_spike] = 2.0 ** ((N - j) / 2.0)
            out[n_spike:n_cube] = 1.0
        else:
            out[sl] = 1.0
        return out

    system = AccretiveSystem("L2", 2.0, grid, canvas, gen, s=4.0,
                             label=f"counterexample:{N}")
    generations = [[Cube(grid, j, (0,))] for j in range(1, N + 1)]
    forest = StoppingForest(grid, generations, {"mode": "injected", "N": N})
    system.injected_forest = forest
    return system, forest


@dataclass
class ValidationReport:
    mode: str
    worst_support_leak: float
    worst_size: float
    worst_normalization_dev: float
    failures: list[tuple[str, str]]
    checked_cubes: int
    passed: bool


def validate(system: AccretiveSystem, mu: AtomicMeasure,
             max_level: Optional[int] = None, tol: float = 1e-12) -> ValidationReport:
    """Check support, size and normalization cube by cube; the operator-side
    testing condition is measured separately by the operator module."""
    leak = size = dev = 0.0
    failures: list[tuple[str, str]] = []
    count = 0
    for which in (1, 2):
        for cube in system.grid.all_cubes(max_level):
            b = system.b(which, cube)
            count += 1
            sl = mu.canvas.clip_box(cube.box())
            outside = np.abs(b).sum() - (np.abs(b[sl]).sum() if sl is not None else 0.0)
            leak = max(leak, outside)
            if outside > 0:
                failures.append((cube.cube_id, "support"))
            m = mu.cube_mass(cube)
            if m <= 0:
                continue
            if system.mode == "Linf":
                sz = float(np.abs(b[sl])[mu.weights[sl] > 0].max())
            else:
                sz = mu.cube_integral(b * b, cube) / m
            size = max(size, sz)
            if sz > system.C + tol:
                failures.append((cube.cube_id, "size"))
            d = abs(mu.cube_integral(b, cube) / m - 1.0)
            dev = max(dev, d)
            if d > tol:
                failures.append((cube.cube_id, "normalization"))
    return ValidationReport(mode=system.mode, worst_support_leak=leak, worst_size=size,
                            worst_normalization_dev=dev, failures=failures,
                            checked_cubes=count, passed=not failures)


def save_system(system: AccretiveSystem, csv_path, header_path,
                max_level: Optional[int] = None) -> None:
    """Rows (cube_id, cell_index, value) for both families plus a JSON header."""
    with open(header_path, "w") as fh:
        json.dump({"mode": system.mode, "C": system.C, "s": system.s,
                   "label": system.label, "grid": json.loads(system.grid.to_json()),
                   "canvas": {"dim": system.canvas.dim, "level": system.canvas.level}},
                  fh, sort_keys=True)
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["family", "cube_id", "cell_index", "value"])
        for which in (1, 2):
            for cube in system.grid.all_cubes(max_level):
                flat = system.b(which, cube).reshape(-1)
                for i in np.nonzero(flat)[0]:
                    writer.writerow([which, cube.cube_id, int(i), format(flat[i], ".17g")])


def load_system(csv_path, header_path) -> AccretiveSystem:
    with open(header_path) as fh:
        head = json.load(fh)
    canvas = Canvas(dim=head["canvas"]["dim"], level=head["canvas"]["level"])
    grid = Grid.from_json(json.dumps(head["grid"]))
    table: dict[tuple[int, str], np.ndarray] = {}
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for fam, cid, idx, val in reader:
            arr = table.setdefault((int(fam), cid), np.zeros(canvas.shape))
            arr.reshape(-1)[int(idx)] = float(val)

    def make_gen(which: int):
        def gen(cube: Cube) -> np.ndarray:
            got = table.get((which, cube.cube_id))
            return got if got is not None else np.zeros(canvas.shape)
        return gen

    return AccretiveSystem(head["mode"], head["C"], grid, canvas,
                           make_gen(1), make_gen(2), s=head.get("s"),
                           label=head.get("label", "loaded"))
