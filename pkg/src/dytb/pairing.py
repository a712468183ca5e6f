"""Decomposition ledger for the bilinear form <Tf, g> over two shifted grids,
the telescoping paraproduct identity, Carleson sequences fed by the adjoint,
separated-cube bounds with their Schur-type matrix, and the shift Monte Carlo
studies with exact enumeration oracles."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from dytb.lattice import (
    Cube,
    Grid,
    as_gamma,
    bad_at_scale,
    cube_gap_sq,
    goodness_class,
    is_bad_at_or_above,
    within_threshold,
)
from dytb.measure import AtomicMeasure, DominatingFunction
from dytb.martingale import (
    _checked_ratio,
    decompose,
    delta_adjoint,
    truncated_average_profile,
)
from dytb.operator import OperatorMatrix
from dytb.stopping import StoppingForest

__all__ = [
    "PairingLedger", "split_pairing", "CollapseReport", "paraproduct_collapse",
    "ar_br_sequences", "LongRangeReport", "long_range_ratio", "SchurMatrix",
    "schur_matrix", "schur_norm", "McReport", "BadnessTemplate",
    "badness_probability_mc", "exact_badness_probability", "BoundaryTemplate",
    "boundary_mass_mc", "exact_boundary_probability",
]


# ---------------------------------------------------------------------------
# ledger


@dataclass
class PairingLedger:
    sigma1: float
    sigma2_good: float
    sigma2_bad: float
    sigma3: float
    symmetric_part: float
    edge_EQ0: float
    edge_ER0: float
    edge_both: float
    direct: float
    params: dict
    bucket_counts: dict[str, int]
    case_counts: Optional[dict[str, int]] = None

    @property
    def total(self) -> float:
        return (self.sigma1 + self.sigma2_good + self.sigma2_bad + self.sigma3
                + self.symmetric_part + self.edge_EQ0 + self.edge_ER0 - self.edge_both)

    @property
    def scale(self) -> float:
        return max(abs(self.sigma1), abs(self.sigma2_good), abs(self.sigma2_bad),
                   abs(self.sigma3), abs(self.symmetric_part), abs(self.edge_EQ0),
                   abs(self.edge_ER0), abs(self.edge_both), abs(self.direct), 1e-300)

    @property
    def bookkeeping_residual(self) -> float:
        return abs(self.total - self.direct) / self.scale

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in
             ("sigma1", "sigma2_good", "sigma2_bad", "sigma3", "symmetric_part",
              "edge_EQ0", "edge_ER0", "edge_both", "direct")}
        d["total"] = self.total
        d["bookkeeping_residual"] = self.bookkeeping_residual
        d["bucket_counts"] = self.bucket_counts
        d["params"] = self.params
        if self.case_counts is not None:
            d["case_counts"] = self.case_counts
        return d


def _piece_matrix(coeffs, weights_flat: np.ndarray, ncells: int):
    cubes, rows = [], []
    for cube, sl, vals in coeffs.iter_pieces():
        full = np.zeros(coeffs.canvas_shape)
        full[sl] = vals
        cubes.append(cube)
        rows.append(full.reshape(-1) * weights_flat)
    if not rows:
        return cubes, np.zeros((0, ncells))
    return cubes, np.stack(rows)


def split_pairing(T: OperatorMatrix, f: np.ndarray, g: np.ndarray,
                  sys1, sys2, forest1: StoppingForest, forest2: StoppingForest,
                  mu: AtomicMeasure, r: int, gamma, k: Optional[int] = None,
                  detailed: bool = False) -> PairingLedger:
    """Assign every pair of difference pieces to exactly one bucket and
    balance the books against the directly evaluated truncated pairing.

    Buckets for side(Q) <= side(R): separated (distance beyond the threshold),
    much-smaller good / bad (split by badness at scale side(R) and larger),
    and comparable-size near pairs.  Pairs with side(R) < side(Q) land in one
    symmetric bucket.  The three boundary products of the truncated profiles
    complete the identity.
    """
    g_frac = as_gamma(gamma)
    grid_d, grid_dp = forest1.grid, forest2.grid
    if k is None:
        k = min(grid_d.depth, grid_dp.depth)
    c1 = decompose(f, sys1, forest1, mu, which=1, upto_level=k)
    c2 = decompose(g, sys2, forest2, mu, which=2, upto_level=k)
    wflat = mu.weights.reshape(-1)
    qcubes, fmat = _piece_matrix(c1, wflat, mu.canvas.ncells)
    rcubes, gmat = _piece_matrix(c2, wflat, mu.canvas.ncells)
    # value[iR, iQ] = <T(delta_Q f), delta_R g>_mu
    vals = gmat @ (T.kmat @ fmat.T) if qcubes and rcubes else np.zeros((len(rcubes), len(qcubes)))

    # suffix badness flags per Q over the other grid's scale ladder
    dp_sides = sorted({grid_dp.level_side(j) for j in range(grid_dp.depth + 1)})
    bad_above: dict = {}
    for q in qcubes:
        floor_side = (1 << r) * q.side_units
        ladder = [s for s in dp_sides if s >= max(floor_side, 2)]
        flags = [bad_at_scale(q, grid_dp, s, g_frac) for s in ladder]
        suffix = {}
        acc = False
        for s, fl in zip(reversed(ladder), reversed(flags)):
            acc = acc or fl
            suffix[s] = acc
        bad_above[q.key] = suffix

    n = grid_d.dim
    sums = {"sigma1": 0.0, "sigma2_good": 0.0, "sigma2_bad": 0.0,
            "sigma3": 0.0, "symmetric_part": 0.0}
    counts = {key: 0 for key in sums}
    cases = {"stopped_child": 0, "transparent_child": 0} if detailed else None
    for iq, q in enumerate(qcubes):
        sq = q.side_units
        for ir, rr in enumerate(rcubes):
            sr = rr.side_units
            v = float(vals[ir, iq])
            if sr < sq:
                key = "symmetric_part"
            else:
                dsq = cube_gap_sq(q.box(), rr.box())
                if not within_threshold(dsq, sq, sr, n, g_frac):
                    key = "sigma1"
                elif (sq << r) <= sr:
                    key = "sigma2_bad" if bad_above[q.key].get(sr, False) else "sigma2_good"
                else:
                    key = "sigma3"
            sums[key] += v
            counts[key] += 1
            if detailed and key == "sigma2_good":
                child = next((c for c in rr.children() if c.contains(q)), None)
                if child is None:
                    cases["outside"] = cases.get("outside", 0) + 1
                elif forest2.ancestor(child).key == child.key:
                    cases["stopped_child"] += 1
                else:
                    cases["transparent_child"] += 1

    e_f0 = truncated_average_profile(f, sys1, forest1, mu, 0, which=1)
    e_g0 = truncated_average_profile(g, sys2, forest2, mu, 0, which=2)
    e_fk = truncated_average_profile(f, sys1, forest1, mu, k, which=1)
    e_gk = truncated_average_profile(g, sys2, forest2, mu, k, which=2)
    ledger = PairingLedger(
        sigma1=sums["sigma1"], sigma2_good=sums["sigma2_good"],
        sigma2_bad=sums["sigma2_bad"], sigma3=sums["sigma3"],
        symmetric_part=sums["symmetric_part"],
        edge_EQ0=T.pair(e_f0, e_gk), edge_ER0=T.pair(e_fk, e_g0),
        edge_both=T.pair(e_f0, e_g0), direct=T.pair(e_fk, e_gk),
        params={"r": r, "gamma": str(g_frac), "k": k,
                "grid_d": grid_d.to_json(), "grid_dp": grid_dp.to_json(),
                "kernel": T.kernel_name},
        bucket_counts=counts, case_counts=cases)
    return ledger


# ---------------------------------------------------------------------------
# paraproduct collapse


@dataclass
class CollapseReport:
    max_residual: float
    max_relative: float
    n_good: int
    n_skipped: int
    params: dict

    @property
    def passed(self) -> bool:
        return self.max_relative <= 1e-12


def _container(grid: Grid, q: Cube, side: int) -> Cube:
    level = grid.top_exp - side.bit_length() + 1
    box = q.box()
    idx = tuple((box[a][0] - grid.shift[a]) // side for a in range(grid.dim))
    return Cube(grid, level, idx)


def paraproduct_collapse(g: np.ndarray, sys2, forest2: StoppingForest,
                         grid_d: Grid, grid_dp: Grid, mu: AtomicMeasure,
                         r: int, gamma, max_level: Optional[int] = None,
                         class_override: Optional[int] = None) -> CollapseReport:
    """For every good cube of the first grid inside the second grid's top
    cube, sum the two-term adapted average differences over the containing
    cubes from its goodness scale upward and compare against the collapsed
    form: the entry-scale term minus the top term.

    `class_override` forces the entry class for every eligible cube instead
    of its measured goodness class; the telescoping identity is the same, so
    this exercises the collapse on geometries where no cube clears the
    goodness threshold."""
    g_frac = as_gamma(gamma)
    top_dp = grid_dp.top_cube()
    k_cap = grid_d.depth if max_level is None else min(max_level, grid_d.depth)
    worst = 0.0
    worst_rel = 0.0
    n_good = n_skip = 0

    def term(c: Cube) -> np.ndarray:
        banc = sys2.b(2, forest2.ancestor(c))
        return _checked_ratio(mu, g, banc, c) * banc

    for level in range(k_cap + 1):
        for q in grid_d.cubes(level):
            if mu.cube_mass(q) <= 0 or not top_dp.contains(q):
                n_skip += 1
                continue
            alpha = (class_override if class_override is not None
                     else goodness_class(q, grid_dp, g_frac))
            if alpha is None:
                n_skip += 1
                continue
            n_good += 1
            alpha = max(alpha, r)
            m_top = grid_dp.top_exp - (q.side_units.bit_length() - 1)
            lhs = np.zeros(mu.canvas.shape)
            terms_scale = 0.0
            for m in range(alpha, m_top + 1):
                t_small = term(_container(grid_dp, q, q.side_units << (m - 1)))
                t_big = term(_container(grid_dp, q, q.side_units << m))
                lhs += t_small - t_big
                terms_scale = max(terms_scale, float(np.abs(t_small).max()),
                                  float(np.abs(t_big).max()))
            if alpha > m_top:
                rhs = np.zeros(mu.canvas.shape)
            else:
                rhs = term(_container(grid_dp, q, q.side_units << (alpha - 1))) - term(top_dp)
                terms_scale = max(terms_scale, float(np.abs(rhs).max()))
            mask = mu.weights > 0
            resid = float(np.abs((lhs - rhs)[mask]).max()) if mask.any() else 0.0
            worst = max(worst, resid)
            worst_rel = max(worst_rel, resid / max(terms_scale, 1e-300))
    return CollapseReport(max_residual=worst, max_relative=worst_rel, n_good=n_good,
                          n_skipped=n_skip,
                          params={"r": r, "gamma": str(g_frac), "max_level": k_cap})


# ---------------------------------------------------------------------------
# Carleson sequences driven by the adjoint


def ar_br_sequences(T: OperatorMatrix, sys1, forest1: StoppingForest,
                    sys2, forest2: StoppingForest, mu: AtomicMeasure,
                    fmap: dict) -> tuple[dict, dict]:
    """Two sequences on the second grid: for each target cube R, the summed
    squared adjoint differences of T* applied to the ancestor test function,
    and the summed restricted norms over stopping children.

    `fmap` maps first-grid cubes to containing second-grid cubes.  The size
    exponent used downstream in normalized testing is s; the derived Hoelder
    companion p = s/2 is recorded for context.
    """
    a_seq: dict = {}
    b_seq: dict = {}
    cache: dict = {}
    for q, rr in fmap.items():
        if not rr.contains(q):
            raise ValueError(f"target {rr.cube_id} does not contain {q.cube_id}")
        if mu.cube_mass(q) <= 0:
            continue
        ra = forest2.ancestor(rr)
        u = cache.get(ra.key)
        if u is None:
            u = T.apply_adjoint(sys2.b(2, ra))
            cache[ra.key] = u
        ds = delta_adjoint(q, u, sys1, forest1, mu, which=1)
        a_seq[rr.key] = a_seq.get(rr.key, 0.0) + mu.inner(ds, ds)
        for child in q.children():
            if mu.cube_mass(child) <= 0:
                continue
            if forest1.ancestor(child).key != child.key:
                continue
            sl = mu.canvas.clip_box(child.box())
            b_seq[rr.key] = b_seq.get(rr.key, 0.0) + float(
                (mu.weights[sl] * u[sl] ** 2).sum())
    return a_seq, b_seq


# ---------------------------------------------------------------------------
# separated cubes


@dataclass
class LongRangeReport:
    value: float
    bound_near: float
    bound_sym: float
    ratio_near: float
    ratio_sym: float
    distance: float
    distance_sym: float


def long_range_ratio(T: OperatorMatrix, Q: Cube, R: Cube, phi: np.ndarray,
                     psi: np.ndarray, lam: DominatingFunction, mu: AtomicMeasure,
                     alpha: float = 1.0, enforce_separation: bool = True) -> LongRangeReport:
    """|<T phi, psi>| against the separation bound (first form, using d(Q,R))
    and the symmetric form (using D = side(Q) + side(R) + d).  phi must have
    zero mean; the cubes must satisfy the separation inequality."""
    if Q.side_units > R.side_units:
        raise ValueError("expected side(Q) <= side(R)")
    int_abs = float((mu.weights * np.abs(phi)).sum())
    if abs(float((mu.weights * phi).sum())) > 1e-12 * max(int_abs, 1e-300):
        raise ValueError("phi must have zero mean against the measure")
    dsq = cube_gap_sq(Q.box(), R.box())
    if enforce_separation and within_threshold(dsq, Q.side_units, R.side_units,
                                               Q.grid.dim, lam.gamma):
        raise ValueError("cubes are closer than the separation threshold")
    h = mu.canvas.h
    d = math.sqrt(dsq) * h
    lq, lr = Q.side_units * h, R.side_units * h
    dd = lq + lr + d
    sl = mu.canvas.clip_box(Q.box())
    if sl is None:
        raise ValueError("Q carries no canvas cells")
    centers = mu.canvas.centers()
    inq = np.zeros(mu.canvas.shape, dtype=bool)
    inq[sl] = True
    zq = centers[inq.reshape(-1)]
    mq, mr = mu.cube_mass(Q), mu.cube_mass(R)
    nphi, npsi = mu.norm2(phi), mu.norm2(psi)
    value = abs(T.pair(phi, psi))
    sup_d = float(lam(zq, np.full(len(zq), d)).max()) if d > 0 else float("inf")
    sup_dd = float(lam(zq, np.full(len(zq), dd)).max())
    common = math.sqrt(mq * mr) * nphi * npsi
    bound_near = (lq ** alpha / (d ** alpha * sup_d)) * common if d > 0 else float("inf")
    bound_sym = ((lq * lr) ** (alpha / 2.0) / (dd ** alpha * sup_dd)) * common
    tiny = 1e-300
    return LongRangeReport(value=value, bound_near=bound_near, bound_sym=bound_sym,
                           ratio_near=value / max(bound_near, tiny),
                           ratio_sym=value / max(bound_sym, tiny),
                           distance=d, distance_sym=dd)


@dataclass
class SchurMatrix:
    entries: np.ndarray
    row_cubes: list[Cube]
    col_cubes: list[Cube]


def schur_matrix(grid_d: Grid, grid_dp: Grid, lam: DominatingFunction,
                 mu: AtomicMeasure, alpha: float = 1.0,
                 max_level: Optional[int] = None) -> SchurMatrix:
    """Nonnegative interaction weights over cube pairs with side(Q) <= side(R):
    (side products)^{alpha/2} * sqrt of mass products over D^alpha * sup of the
    majorant on Q at radius D; zero otherwise."""
    h = mu.canvas.h
    centers = mu.canvas.centers()

    def live(grid):
        cap = grid.depth if max_level is None else min(max_level, grid.depth)
        out = []
        for level in range(cap + 1):
            for c in grid.cubes(level):
                if mu.cube_mass(c) > 0:
                    out.append(c)
        return out

    qs, rs = live(grid_d), live(grid_dp)
    mat = np.zeros((len(qs), len(rs)))
    cell_in = {}
    for i, q in enumerate(qs):
        sl = mu.canvas.clip_box(q.box())
        inq = np.zeros(mu.canvas.shape, dtype=bool)
        inq[sl] = True
        cell_in[i] = centers[inq.reshape(-1)]
    for i, q in enumerate(qs):
        mq = mu.cube_mass(q)
        lq = q.side_units * h
        zq = cell_in[i]
        for j, rr in enumerate(rs):
            if q.side_units > rr.side_units:
                continue
            lr = rr.side_units * h
            d = math.sqrt(cube_gap_sq(q.box(), rr.box())) * h
            dd = lq + lr + d
            sup = float(lam(zq, np.full(len(zq), dd)).max())
            mat[i, j] = ((lq * lr) ** (alpha / 2.0) / (dd ** alpha * sup)
                         * math.sqrt(mq * mu.cube_mass(rr)))
    return SchurMatrix(entries=mat, row_cubes=qs, col_cubes=rs)


def schur_norm(grid_d: Grid, grid_dp: Grid, lam: DominatingFunction,
               mu: AtomicMeasure, alpha: float = 1.0,
               max_level: Optional[int] = None, tol: float = 1e-8,
               max_iter: int = 20000) -> float:
    """Largest singular value of the interaction matrix by power iteration."""
    mat = schur_matrix(grid_d, grid_dp, lam, mu, alpha, max_level).entries
    if mat.size == 0 or not mat.any():
        return 0.0
    x = np.ones(mat.shape[1]) / math.sqrt(mat.shape[1])
    sigma = 0.0
    for _ in range(max_iter):
        y = mat @ x
        z = mat.T @ y
        nz = np.linalg.norm(z)
        if nz == 0:
            return 0.0
        new_sigma = math.sqrt(nz)   # ||A^T A x|| -> sigma^2 for unit x
        x = z / nz
        if abs(new_sigma - sigma) <= tol * max(new_sigma, 1.0):
            return new_sigma
        sigma = new_sigma
    return sigma


# ---------------------------------------------------------------------------
# shift Monte Carlo studies


@dataclass
class McReport:
    fraction: float
    stderr: float
    exact: float
    trials: int
    seed: int
    params: dict

    @property
    def within_3se(self) -> bool:
        return abs(self.fraction - self.exact) <= 3.0 * self.stderr + 1e-12


@dataclass(frozen=True)
class BadnessTemplate:
    """One-dimensional shift study layout: a fixed unit cube placed off the
    center of a grid of side 2**top_exp, probed against independently shifted
    copies."""
    top_exp: int = 13
    center_offset: int = 37


def _fixed_probe(template: BadnessTemplate) -> tuple[Grid, Cube]:
    m = template.top_exp
    base = Grid(dim=1, top_exp=m, depth=m, shift=(0,))
    q_pos = (1 << (m - 1)) + template.center_offset
    return base, Cube(base, m, (q_pos,))


def _int_root(w: int, deg: int) -> int:
    """Largest g >= 0 with g**deg <= w (exact integer arithmetic)."""
    if w < 0:
        raise ValueError("negative radicand")
    g = int(round(w ** (1.0 / deg)))
    while g > 0 and g ** deg > w:
        g -= 1
    while (g + 1) ** deg <= w:
        g += 1
    return g


def exact_badness_probability(k: int, r: int, gamma,
                              template: Optional[BadnessTemplate] = None,
                              scales: str = "at_or_above") -> float:
    """Exact fraction of aligned shifts for which the fixed cube falls within
    the skeleton threshold, by exact interval arithmetic on shift residues.

    Per scale the favorable shifts form one integer window per skeleton
    period; the union over scales is merged over one period of the largest
    spacing, which every smaller spacing divides.
    """
    template = template or BadnessTemplate()
    g = as_gamma(gamma)
    p, q = g.numerator, g.denominator
    m = template.top_exp
    q_lo = (1 << (m - 1)) + template.center_offset
    side = 1
    e_lo = max(k, r)
    if e_lo > m:
        return 0.0
    exps = [e_lo] if scales == "exact" else list(range(e_lo, m + 1))
    p_max = 1 << (max(exps) - 1)
    intervals: list[tuple[int, int]] = []
    for e in exps:
        spacing = 1 << (e - 1)
        # floor of the threshold: gap <= T iff gap <= floor(T) for integer gaps
        w = 4 ** q * side ** (2 * p) * (1 << e) ** (2 * (q - p))
        floor_t = _int_root(w, 2 * q)
        length = side + 2 * floor_t + 1
        if length >= spacing:
            return 1.0
        start = (q_lo - floor_t) % spacing
        for rep in range(p_max // spacing):
            a = start + rep * spacing
            b = a + length - 1
            if b < p_max:
                intervals.append((a, b))
            else:
                intervals.append((a, p_max - 1))
                intervals.append((0, b - p_max))
    intervals.sort()
    covered = 0
    cur_a, cur_b = None, None
    for a, b in intervals:
        if cur_a is None:
            cur_a, cur_b = a, b
        elif a <= cur_b + 1:
            cur_b = max(cur_b, b)
        else:
            covered += cur_b - cur_a + 1
            cur_a, cur_b = a, b
    if cur_a is not None:
        covered += cur_b - cur_a + 1
    return covered / p_max


def badness_probability_mc(k: int, r: int, gamma, trials: int, seed: int,
                           template: Optional[BadnessTemplate] = None,
                           scales: str = "at_or_above") -> McReport:
    """Monte Carlo estimate over uniformly random aligned shifts of the
    probability that the fixed probe cube is within the skeleton threshold of
    the shifted grid at scale 2**k times its side (and larger scales, unless
    `scales='exact'`), with the exact enumeration value alongside."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    template = template or BadnessTemplate()
    g = as_gamma(gamma)
    base, probe = _fixed_probe(template)
    m = template.top_exp
    half = 1 << (m - 2)
    rng = np.random.default_rng([seed, 0xBAD])
    shifts = rng.integers(-half, half, size=trials)
    cache: dict[int, bool] = {}
    hits = 0
    min_scale = probe.side_units << max(k, r)
    for u in shifts:
        u = int(u)
        got = cache.get(u)
        if got is None:
            other = Grid(dim=1, top_exp=m, depth=m, shift=(u,))
            if scales == "exact":
                got = bad_at_scale(probe, other, min_scale, g)
            else:
                got = is_bad_at_or_above(probe, other, min_scale, g)
            cache[u] = got
        hits += got
    frac = hits / trials
    se = math.sqrt(max(frac * (1.0 - frac), 1.0 / trials) / trials)
    exact = exact_badness_probability(k, r, g, template, scales)
    return McReport(fraction=frac, stderr=se, exact=exact, trials=trials, seed=seed,
                    params={"k": k, "r": r, "gamma": str(g), "scales": scales,
                            "top_exp": m, "center_offset": template.center_offset})


@dataclass(frozen=True)
class BoundaryTemplate:
    """Layout for the ring study: point at a fixed half-integer position,
    containing cube of side 2**scale_exp units under a random aligned shift."""
    scale_exp: int = 12
    point_offset: int = 37

    @property
    def point(self) -> float:
        return (1 << (self.scale_exp - 1)) + self.point_offset + 0.5


def exact_boundary_probability(eta: float, template: Optional[BoundaryTemplate] = None) -> float:
    """Exact fraction of aligned shifts putting the fixed point inside the
    concentric ring (1+eta)Q minus (1-eta)Q of its containing cube."""
    template = template or BoundaryTemplate()
    if not 0 <= eta < 1:
        raise ValueError("eta must lie in [0, 1)")
    side = 1 << template.scale_exp
    x = template.point
    margin = 0.5 * eta * side
    count = 0
    for u in range(side):
        y = (x - u) % side
        count += (y <= margin) or (y >= side - margin)
    return count / side


def boundary_mass_mc(eta: float, trials: int, seed: int,
                     template: Optional[BoundaryTemplate] = None) -> McReport:
    """Monte Carlo estimate over aligned shifts of the probability that the
    fixed point lies in the eta-ring of its containing cube at a fixed scale.
    The continuum value is eta; the exact aligned-shift value is enumerated."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    template = template or BoundaryTemplate()
    if not 0 <= eta < 1:
        raise ValueError("eta must lie in [0, 1)")
    side = 1 << template.scale_exp
    x = template.point
    rng = np.random.default_rng([seed, 0xB0D])
    shifts = rng.integers(-side, 0, size=trials)
    hits = 0
    for u in shifts:
        idx = math.floor((x - u) / side)
        center = u + (idx + 0.5) * side
        if abs(x - center) >= 0.5 * (1.0 - eta) * side:
            hits += 1
    frac = hits / trials
    se = math.sqrt(max(frac * (1.0 - frac), 1.0 / trials) / trials)
    exact = exact_boundary_probability(eta, template)
    return McReport(fraction=frac, stderr=se, exact=exact, trials=trials, seed=seed,
                    params={"eta": eta, "scale_exp": template.scale_exp,
                            "point": x, "closed_form": eta})
