"""Stopping-time families, the ancestor map, packing diagnostics and the
Carleson machinery (constants, embedding ratios, the telescoping square sum).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from dytb.lattice import Cube, Grid, parse_cube_id
from dytb.measure import AtomicMeasure, maximal_function

__all__ = [
    "StoppingForest", "build_linf", "build_l2", "packing_ratio",
    "PackingReport", "CarlesonReport", "carleson_constant",
    "embedding_ratio", "usfe_value",
]

CubeKey = tuple[int, tuple[int, ...]]


class StoppingForest:
    """Nested generations of selected cubes starting from the top cube.

    `ancestor(Q)` returns the smallest forest cube containing Q; the top cube
    is always generation zero so the map is total on the grid.
    """

    def __init__(self, grid: Grid, generations: list[list[Cube]], params: Optional[dict] = None):
        if not generations or generations[0] != [grid.top_cube()]:
            generations = [[grid.top_cube()]] + list(generations or [])
        self.grid = grid
        self.generations = generations
        self.params = dict(params or {})
        self._members: dict[CubeKey, int] = {}
        for j, gen in enumerate(generations):
            for c in gen:
                if c.key in self._members:
                    raise ValueError(f"cube {c.cube_id} appears in two generations")
                self._members[c.key] = j
        self._anc_cache: dict[CubeKey, Cube] = {}

    def is_member(self, cube: Cube) -> bool:
        return cube.key in self._members

    def generation_of(self, cube: Cube) -> Optional[int]:
        return self._members.get(cube.key)

    def members(self) -> list[Cube]:
        return [c for gen in self.generations for c in gen]

    def ancestor(self, cube: Cube) -> Cube:
        """Smallest forest cube containing `cube` (the cube itself if selected)."""
        key = cube.key
        got = self._anc_cache.get(key)
        if got is not None:
            return got
        chain = []
        cur = cube
        while True:
            if cur.key in self._anc_cache:
                anc = self._anc_cache[cur.key]
                break
            if cur.key in self._members:
                anc = cur
                break
            chain.append(cur.key)
            cur = cur.parent()
        for k in chain:
            self._anc_cache[k] = anc
        self._anc_cache[key] = anc
        return anc

    def next_generation_inside(self, cube: Cube) -> list[Cube]:
        j = self.generation_of(cube)
        if j is None:
            raise ValueError(f"{cube.cube_id} is not a forest cube")
        if j + 1 >= len(self.generations):
            return []
        return [c for c in self.generations[j + 1] if cube.contains(c)]

    def to_json(self) -> str:
        return json.dumps({
            "grid": json.loads(self.grid.to_json()),
            "generations": [[c.cube_id for c in gen] for gen in self.generations],
            "params": self.params,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "StoppingForest":
        d = json.loads(text)
        grid = Grid.from_json(json.dumps(d["grid"]))
        gens = [[parse_cube_id(grid, cid) for cid in gen] for gen in d["generations"]]
        return cls(grid, gens[1:], d.get("params"))


def _select_maximal(parent: Cube, stop_pred: Callable[[Cube], bool]) -> list[Cube]:
    """Maximal strict subcubes of `parent` satisfying the predicate."""
    found = []
    stack = list(parent.children())
    while stack:
        q = stack.pop()
        if stop_pred(q):
            found.append(q)
        else:
            stack.extend(q.children())
    return found


def _grow_forest(grid: Grid, make_pred, params: dict) -> StoppingForest:
    generations: list[list[Cube]] = []
    frontier = [grid.top_cube()]
    while frontier:
        nxt: list[Cube] = []
        for parent in frontier:
            nxt.extend(_select_maximal(parent, make_pred(parent)))
        if not nxt:
            break
        generations.append(sorted(nxt, key=lambda c: c.key))
        frontier = nxt
    return StoppingForest(grid, generations, params)


def build_linf(system, mu: AtomicMeasure, grid: Grid) -> StoppingForest:
    """Sup-norm stopping time: under each selected cube P, select the maximal
    cubes Q with |int_Q b1_P dmu| < mu(Q)/2, recursing to the grid floor."""
    if system.mode != "Linf":
        raise ValueError("build_linf needs a sup-norm system")

    def make_pred(parent: Cube):
        b = system.b(1, parent)

        def pred(q: Cube) -> bool:
            m = mu.cube_mass(q)
            if m <= 0:
                return False
            return abs(mu.cube_integral(b, q)) < 0.5 * m
        return pred

    return _grow_forest(grid, make_pred, {"mode": "linf", "threshold": 0.5})


def build_l2(system, nu: AtomicMeasure, T, grid: Grid, delta: float, s: float,
             side: int = 1) -> StoppingForest:
    """Square-integrable stopping time with three failure conditions per cube:
    large maximal function, large operator testing integral, or small average.

    `side=1` uses b1 with T; `side=2` uses b2 with the adjoint.  A system that
    carries a designated forest (the explicit growth family does) returns it
    unchanged.
    """
    injected = getattr(system, "injected_forest", None)
    if injected is not None:
        return injected
    if system.mode != "L2":
        raise ValueError("build_l2 needs a square-integrable system")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if s <= 2:
        raise ValueError("testing exponent s must exceed 2")
    apply_op = T.apply if side == 1 else T.apply_adjoint
    inv_delta = 1.0 / delta

    def make_pred(parent: Cube):
        b = system.b(side, parent)
        mb = maximal_function(nu, b)
        tb = np.abs(apply_op(b))

        def pred(q: Cube) -> bool:
            m = nu.cube_mass(q)
            if m <= 0:
                return False
            if nu.cube_integral(mb * mb, q) > inv_delta * m:
                return True
            if nu.cube_integral(tb ** s, q) > inv_delta * m:
                return True
            return abs(nu.cube_integral(b, q)) < delta * m
        return pred

    return _grow_forest(grid, make_pred, {"mode": "l2", "delta": delta, "s": s, "side": side})


@dataclass
class PackingReport:
    tau: float
    witness: Optional[str]
    by_generation: dict[int, float]

    def decay_ok(self, tol: float = 1e-12) -> bool:
        return all(r <= self.tau ** max(j - 1, 0) + tol for j, r in self.by_generation.items())


def packing_ratio(forest: StoppingForest, mu: AtomicMeasure) -> PackingReport:
    """One-generation mass ratios under every forest cube, plus the j-step
    ratios used for the geometric decay report."""
    tau, witness = 0.0, None
    by_gen: dict[int, list[float]] = {}
    for t, gen in enumerate(forest.generations):
        for p in gen:
            mp = mu.cube_mass(p)
            if mp <= 0:
                continue
            for j in range(1, len(forest.generations) - t):
                inside = [c for c in forest.generations[t + j] if p.contains(c)]
                if not inside:
                    break
                ratio = sum(mu.cube_mass(c) for c in inside) / mp
                by_gen.setdefault(j, []).append(ratio)
                if j == 1 and ratio > tau:
                    tau, witness = ratio, p.cube_id
    return PackingReport(tau=tau, witness=witness,
                         by_generation={j: max(v) for j, v in sorted(by_gen.items())})


@dataclass
class CarlesonReport:
    constant: float
    witness: Optional[str]
    sequence_id: str
    infinite: bool = False


def carleson_constant(a: dict[CubeKey, float], mu: AtomicMeasure, grid: Grid,
                      sequence_id: str = "") -> CarlesonReport:
    """Exact best constant in sum_{S inside Q} a_S <= C mu(Q) over all cubes.

    A zero-mass cube enclosing positive sequence mass makes the constant
    infinite and is reported as the witness.
    """
    if any(v < 0 for v in a.values()):
        raise ValueError("Carleson sequences are nonnegative")
    depth = grid.depth
    # subtree sums, finest level upward
    below: dict[CubeKey, float] = {}
    best, witness, infinite = 0.0, None, False
    for level in range(depth, -1, -1):
        for cube in grid.cubes(level):
            s = a.get(cube.key, 0.0)
            if level < depth:
                for ch in cube.children():
                    s += below.get(ch.key, 0.0)
            if s == 0.0:
                continue
            below[cube.key] = s
            m = mu.cube_mass(cube)
            if m <= 0:
                infinite = True
                witness = cube.cube_id
            elif not infinite and s / m > best:
                best, witness = s / m, cube.cube_id
    return CarlesonReport(constant=float("inf") if infinite else best,
                          witness=witness, sequence_id=sequence_id, infinite=infinite)


def embedding_ratio(a: dict[CubeKey, float], f: np.ndarray, mu: AtomicMeasure,
                    grid: Grid) -> float:
    """sum_Q a_Q <f>_Q^2 divided by ||f||^2; zero-mass cubes are skipped."""
    nf2 = mu.inner(f, f)
    if nf2 <= 0:
        raise ValueError("f must have positive norm")
    total = 0.0
    for (level, index), val in sorted(a.items()):
        if val == 0.0:
            continue
        avg = mu.cube_average(f, Cube(grid, level, index))
        if avg is None:
            continue
        total += val * avg * avg
    return total / nf2


def usfe_value(f: np.ndarray, mu: AtomicMeasure, grid: Grid) -> float:
    """Sum of |<f>_Q - <f>_parent|^2 mu(Q) over all cubes strictly below the
    top, down to the grid floor.  Equals ||f||^2 - <f>_top^2 mu(top) exactly
    at finite depth (zero-mass cubes skipped)."""
    total = 0.0
    for level in range(1, grid.depth + 1):
        for cube in grid.cubes(level):
            m = mu.cube_mass(cube)
            if m <= 0:
                continue
            avg = mu.cube_average(f, cube)
            pavg = mu.cube_average(f, cube.parent())
            total += (avg - pavg) ** 2 * m
    return total
