"""Atomic measures on the finest cells of a reference canvas, dominating
functions and the ball diagnostics built on them.

The canvas is the unit box [0,1)**dim split into 2**level cells per axis.
Cell functions and weights are numpy arrays of that shape.  Cube masses are
exact finite sums.  Ball masses spread each cell's weight uniformly over the
cell in one dimension (interval overlap, exact for Lebesgue weights); in
higher dimensions a ball collects the whole weight of every cell whose
center it covers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from dytb.lattice import Box, Cube

__all__ = [
    "Canvas", "AtomicMeasure", "DominatingFunction", "lambda_model",
    "verify_upper_doubling", "symmetrize", "maximal_function",
    "doubling_constant", "load_measure_csv", "save_measure_csv",
]


@dataclass(frozen=True)
class Canvas:
    dim: int
    level: int

    def __post_init__(self):
        if self.dim < 1 or self.level < 1:
            raise ValueError("canvas needs dim >= 1 and level >= 1")

    @property
    def cells_per_axis(self) -> int:
        return 1 << self.level

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.cells_per_axis,) * self.dim

    @property
    def ncells(self) -> int:
        return self.cells_per_axis ** self.dim

    @property
    def h(self) -> float:
        """Physical cell side; the canvas spans the unit box."""
        return 2.0 ** -self.level

    def centers(self) -> np.ndarray:
        """Physical cell centers, shape (ncells, dim), C order."""
        return _centers(self.dim, self.level)

    def clip_box(self, box: Box) -> Optional[tuple[slice, ...]]:
        n = self.cells_per_axis
        out = []
        for lo, hi in box:
            lo, hi = max(lo, 0), min(hi, n)
            if lo >= hi:
                return None
            out.append(slice(lo, hi))
        return tuple(out)


@lru_cache(maxsize=32)
def _centers(dim: int, level: int) -> np.ndarray:
    n = 1 << level
    h = 2.0 ** -level
    axes = [(np.arange(n) + 0.5) * h] * dim
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


class AtomicMeasure:
    """Nonnegative weights on the finest canvas cells."""

    def __init__(self, canvas: Canvas, weights: np.ndarray):
        weights = np.asarray(weights, dtype=float)
        if weights.shape != canvas.shape:
            raise ValueError(f"weights shape {weights.shape} != canvas shape {canvas.shape}")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        if weights.sum() <= 0:
            raise ValueError("total mass must be positive")
        self.canvas = canvas
        self.weights = weights

    # -- constructors -------------------------------------------------------

    @classmethod
    def lebesgue(cls, canvas: Canvas) -> "AtomicMeasure":
        w = np.full(canvas.shape, canvas.h ** canvas.dim)
        return cls(canvas, w)

    @classmethod
    def random_weights(cls, canvas: Canvas, seed: int, lo: float = 0.5, hi: float = 1.5) -> "AtomicMeasure":
        rng = np.random.default_rng([seed, 0xA70])
        w = rng.uniform(lo, hi, size=canvas.shape) * canvas.h ** canvas.dim
        return cls(canvas, w)

    @classmethod
    def sparse_atoms(cls, canvas: Canvas, seed: int, natoms: int = 8) -> "AtomicMeasure":
        rng = np.random.default_rng([seed, 0x5BA])
        w = np.zeros(canvas.shape)
        flat = w.reshape(-1)
        idx = rng.choice(canvas.ncells, size=min(natoms, canvas.ncells), replace=False)
        flat[idx] = rng.uniform(0.5, 1.5, size=len(idx))
        return cls(canvas, w)

    # -- sums ---------------------------------------------------------------

    def total(self) -> float:
        return float(self.weights.sum())

    def box_sum(self, arr: np.ndarray, box: Box) -> float:
        sl = self.canvas.clip_box(box)
        if sl is None:
            return 0.0
        return float(arr[sl].sum())

    def box_mass(self, box: Box) -> float:
        return self.box_sum(self.weights, box)

    def cube_mass(self, cube: Cube) -> float:
        return self.box_mass(cube.box())

    def cube_integral(self, f: np.ndarray, cube: Cube) -> float:
        sl = self.canvas.clip_box(cube.box())
        if sl is None:
            return 0.0
        return float((self.weights[sl] * f[sl]).sum())

    def cube_average(self, f: np.ndarray, cube: Cube) -> Optional[float]:
        """mu-average of f over the cube, or None when the cube has no mass."""
        sl = self.canvas.clip_box(cube.box())
        if sl is None:
            return None
        m = float(self.weights[sl].sum())
        if m <= 0:
            return None
        return float((self.weights[sl] * f[sl]).sum()) / m

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        return float((self.weights * f * g).sum())

    def norm2(self, f: np.ndarray) -> float:
        return self.inner(f, f) ** 0.5

    # -- balls ---------------------------------------------------------------

    def ball_mass(self, x: np.ndarray, r: float, f: Optional[np.ndarray] = None) -> float:
        """Mass of the ball B(x, r); with f, the integral of f over the ball.

        1D balls are intervals and use exact cell-overlap fractions.  For
        dim >= 2 the ball collects whole cells by center (closed condition).
        """
        x = np.asarray(x, dtype=float)
        vals = self.weights if f is None else self.weights * f
        if self.canvas.dim == 1:
            h = self.canvas.h
            n = self.canvas.cells_per_axis
            lo, hi = x[0] - r, x[0] + r
            edges = np.arange(n + 1) * h
            overlap = np.clip(np.minimum(hi, edges[1:]) - np.maximum(lo, edges[:-1]), 0.0, h) / h
            return float((vals * overlap).sum())
        centers = self.canvas.centers()
        d2 = ((centers - x[None, :]) ** 2).sum(axis=1)
        return float(vals.reshape(-1)[d2 <= r * r].sum())


# ---------------------------------------------------------------------------
# dominating functions


@dataclass(frozen=True)
class DominatingFunction:
    """Radius-monotone majorant lambda(x, r) with doubling constant C_lambda.

    `d` is log2 of the doubling constant kept exact; gamma = alpha/(2 alpha + 2 d)
    is the badness exponent derived from the kernel smoothness alpha.
    """

    name: str
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    C_lambda: float
    d: Fraction
    alpha: Fraction = Fraction(1)

    @property
    def gamma(self) -> Fraction:
        return self.alpha / (2 * self.alpha + 2 * self.d)

    def __call__(self, points: np.ndarray, radii) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        radii = np.broadcast_to(np.asarray(radii, dtype=float), (points.shape[0],))
        out = self.fn(points, radii)
        return np.asarray(out, dtype=float)


def lambda_model(spec: str, alpha=Fraction(1)) -> DominatingFunction:
    """Named dominating functions: 'lebesgue', 'power:m[:c]', 'affine[:a:b]'."""
    parts = spec.split(":")
    name, args = parts[0], parts[1:]
    alpha = Fraction(str(alpha))
    if name == "lebesgue":
        def fn(p, r):
            return 2.0 * r
        return DominatingFunction("lebesgue", fn, 2.0, Fraction(1), alpha)
    if name == "power":
        m = Fraction(args[0]) if args else Fraction(1)
        c = float(args[1]) if len(args) > 1 else 1.0
        mf = float(m)

        def fn(p, r, c=c, mf=mf):
            return c * r ** mf
        return DominatingFunction(f"power:{m}", fn, float(2 ** m), m, alpha)
    if name == "affine":
        a = float(args[0]) if args else 1.0
        b = float(args[1]) if len(args) > 1 else 1.0

        def fn(p, r, a=a, b=b):
            return r * (a + b * np.linalg.norm(p, axis=1))
        return DominatingFunction(f"affine:{a}:{b}", fn, 2.0, Fraction(1), alpha)
    raise ValueError(f"unknown dominating-function model {spec!r}")


@dataclass
class UpperDoublingReport:
    worst_ratio: float
    worst_point: tuple
    worst_radius: float
    samples: int
    passed: bool


def verify_upper_doubling(mu: AtomicMeasure, lam: DominatingFunction,
                          sample_count: int, seed: int) -> UpperDoublingReport:
    """Worst mu(B(x,r)) / lambda(x,r) over sampled cell centers and dyadic radii."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng([seed, 0x0D0])
    canvas = mu.canvas
    centers = canvas.centers()
    picks = rng.choice(canvas.ncells, size=min(sample_count, canvas.ncells), replace=False)
    radii = [canvas.h * (1 << m) for m in range(canvas.level + 1)]
    worst, wx, wr = 0.0, centers[0], radii[0]
    for i in picks:
        x = centers[i]
        for r in radii:
            lam_v = float(lam(x[None, :], np.array([r]))[0])
            ratio = mu.ball_mass(x, r) / lam_v
            if ratio > worst:
                worst, wx, wr = ratio, x, r
    return UpperDoublingReport(worst_ratio=worst, worst_point=tuple(wx),
                               worst_radius=wr, samples=len(picks) * len(radii),
                               passed=worst <= 1.0 + 1e-12)


def symmetrize(lam: DominatingFunction, canvas: Canvas) -> DominatingFunction:
    """Symmetrized majorant: infimum of lambda(z, r + |x-z|) over z in the
    cell-center set plus x itself.  Keeps doubling data of the original."""
    zs = canvas.centers()

    def fn(points: np.ndarray, radii: np.ndarray) -> np.ndarray:
        out = np.empty(points.shape[0])
        for i, (x, r) in enumerate(zip(points, radii)):
            dist = np.linalg.norm(zs - x[None, :], axis=1)
            vals = lam(zs, r + dist)
            out[i] = min(float(vals.min()), float(lam(x[None, :], np.array([r]))[0]))
        return out

    return DominatingFunction(f"sym({lam.name})", fn, lam.C_lambda, lam.d, lam.alpha)


def maximal_function(nu: AtomicMeasure, f: np.ndarray) -> np.ndarray:
    """Centered maximal function of |f| at cell centers.

    The radius ladder per center is every distance at which the ball gains a
    cell boundary (1D: center offsets plus half cell widths), so the finite
    supremum agrees with the continuous one for cell-constant f.
    """
    canvas = nu.canvas
    out = np.zeros(canvas.shape)
    absf = np.abs(f)
    if canvas.dim == 1:
        n = canvas.cells_per_axis
        h = canvas.h
        w = nu.weights
        wf = w * absf
        edges = np.arange(n + 1) * h
        for i in range(n):
            x = (i + 0.5) * h
            radii = np.unique(np.abs(edges - x))
            radii = radii[radii > 0]
            lo = x - radii[:, None]
            hi = x + radii[:, None]
            overlap = np.clip(np.minimum(hi, edges[None, 1:]) - np.maximum(lo, edges[None, :-1]), 0.0, h) / h
            num = overlap @ wf
            den = overlap @ w
            ok = den > 0
            out[i] = (num[ok] / den[ok]).max() if ok.any() else 0.0
        return out
    centers = canvas.centers()
    w = nu.weights.reshape(-1)
    wf = (nu.weights * absf).reshape(-1)
    for i in range(canvas.ncells):
        d2 = ((centers - centers[i][None, :]) ** 2).sum(axis=1)
        order = np.argsort(d2, kind="stable")
        cum_w = np.cumsum(w[order])
        cum_wf = np.cumsum(wf[order])
        ok = cum_w > 0
        vals = cum_wf[ok] / cum_w[ok]
        out.reshape(-1)[i] = vals.max() if ok.any() else 0.0
    return out


def doubling_constant(nu: AtomicMeasure, sample_count: int, seed: int = 0) -> float:
    """Max sampled ratio nu(B(x, 2r)) / nu(B(x, r)) over dyadic radii."""
    rng = np.random.default_rng([seed, 0xDB1])
    canvas = nu.canvas
    centers = canvas.centers()
    picks = rng.choice(canvas.ncells, size=min(sample_count, canvas.ncells), replace=False)
    worst = 0.0
    for i in picks:
        x = centers[i]
        for m in range(canvas.level):
            r = canvas.h * (1 << m)
            small = nu.ball_mass(x, r)
            if small > 0:
                worst = max(worst, nu.ball_mass(x, 2 * r) / small)
    return worst


# ---------------------------------------------------------------------------
# measure file format: one row per cell, index columns then weight


def save_measure_csv(mu: AtomicMeasure, path) -> None:
    canvas = mu.canvas
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"i{a}" for a in range(canvas.dim)] + ["weight"])
        flat = mu.weights.reshape(-1)
        for j, idx in enumerate(np.ndindex(canvas.shape)):
            writer.writerow(list(idx) + [format(flat[j], ".17g")])


def load_measure_csv(canvas: Canvas, path) -> AtomicMeasure:
    w = np.zeros(canvas.shape)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if len(header) != canvas.dim + 1:
            raise ValueError("measure file does not match the canvas dimension")
        for row in reader:
            idx = tuple(int(t) for t in row[:canvas.dim])
            w[idx] = float(row[canvas.dim])
    return AtomicMeasure(canvas, w)
