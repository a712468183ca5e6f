"""Batch experiment driver.  Every subcommand reads one JSON config (plus
flag and DYTB_* environment overrides), writes CSV/JSON reports stamped with
the config hash, and exits 0 exactly when its invariants hold."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from dytb import accretive, lattice, martingale, measure, operator, pairing, stopping
from dytb.config import ConfigError, ExperimentConfig


def _fmt(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _write_json(path: Path, cfg: ExperimentConfig, payload: dict) -> None:
    doc = {"config_hash": cfg.hash, "config": json.loads(cfg.to_json())}
    doc.update(payload)
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1, default=str)


# ---------------------------------------------------------------------------
# object builders


def build_measure(cfg: ExperimentConfig) -> measure.AtomicMeasure:
    canvas = measure.Canvas(cfg.dim, cfg.canvas_level)
    spec = cfg.measure
    if spec == "lebesgue":
        return measure.AtomicMeasure.lebesgue(canvas)
    if spec == "random":
        return measure.AtomicMeasure.random_weights(canvas, cfg.measure_seed)
    if spec == "sparse":
        return measure.AtomicMeasure.sparse_atoms(canvas, cfg.measure_seed)
    if spec.startswith("csv:"):
        return measure.load_measure_csv(canvas, spec[4:])
    raise ConfigError(f"unknown measure {spec!r}")


def unit_grid(cfg: ExperimentConfig) -> lattice.Grid:
    return lattice.Grid(dim=cfg.dim, top_exp=cfg.canvas_level,
                        depth=min(cfg.depth, cfg.canvas_level), shift=(0,) * cfg.dim)


def build_system(cfg: ExperimentConfig, mu: measure.AtomicMeasure, grid: lattice.Grid):
    spec = cfg.system
    if spec == "t1":
        return accretive.t1_system(grid, mu.canvas), None
    if spec.startswith("random_bounded"):
        eps = float(spec.split(":")[1]) if ":" in spec else 0.5
        return accretive.random_bounded_system(grid, mu, eps, cfg.system_seed), None
    if spec.startswith("counterexample"):
        n = int(spec.split(":")[1]) if ":" in spec else cfg.N
        system, forest = accretive.counterexample_system(n, mu.canvas, grid)
        return system, forest
    raise ConfigError(f"unknown system {spec!r}")


def build_forest(cfg: ExperimentConfig, system, mu, grid, T=None) -> stopping.StoppingForest:
    mode = cfg.forest_mode
    if mode == "injected":
        if system.injected_forest is None:
            raise ConfigError("system carries no designated forest")
        return system.injected_forest
    if mode == "linf":
        return stopping.build_linf(system, mu, grid)
    if mode == "l2":
        if T is None:
            T = build_operator(cfg, mu)
        return stopping.build_l2(system, mu, T, grid, cfg.delta, cfg.s)
    raise ConfigError(f"unknown forest mode {mode!r}")


def build_lambda(cfg: ExperimentConfig) -> measure.DominatingFunction:
    return measure.lambda_model(cfg.lambda_model, alpha=Fraction(cfg.alpha))


def build_operator(cfg: ExperimentConfig, mu: measure.AtomicMeasure) -> operator.OperatorMatrix:
    kern = operator.kernel_model(cfg.kernel, mu.canvas, build_lambda(cfg))
    return operator.assemble(kern, mu)


def _rng(cfg: ExperimentConfig, tag: int) -> np.random.Generator:
    return np.random.default_rng([cfg.seed, tag])


def _random_cell_fn(cfg: ExperimentConfig, canvas: measure.Canvas, rng) -> np.ndarray:
    return rng.standard_normal(canvas.shape)


# ---------------------------------------------------------------------------
# subcommands; each returns (passed, payload, tables)


def cmd_decompose(cfg: ExperimentConfig, out: Path) -> bool:
    mu = build_measure(cfg)
    grid = unit_grid(cfg)
    system, injected = build_system(cfg, mu, grid)
    forest = injected if injected is not None else build_forest(cfg, system, mu, grid)
    f = _random_cell_fn(cfg, mu.canvas, _rng(cfg, 1))
    coeffs = martingale.decompose(f, system, forest, mu)
    recon = coeffs.reconstruct()
    mask = mu.weights > 0
    scale = max(float(np.abs(f[mask]).max()), 1e-300)
    residual = float(np.abs((recon - f)[mask]).max()) / scale
    rows = []
    for cube, sl, vals in coeffs.iter_pieces():
        full = np.zeros(mu.canvas.shape)
        full[sl] = vals
        flat = full.reshape(-1)
        for i in np.nonzero(flat)[0]:
            rows.append((cube.cube_id, int(i), flat[i]))
    _write_csv(out / "coefficients.csv", ["cube_id", "cell_index", "value"], rows)
    passed = residual <= 1e-12
    _write_json(out / "decompose.json", cfg,
                {"residual": residual, "passed": passed,
                 "forest_members": len(forest.members())})
    return passed


def cmd_sqf(cfg: ExperimentConfig, out: Path) -> bool:
    mu = build_measure(cfg)
    grid = unit_grid(cfg)
    system, injected = build_system(cfg, mu, grid)
    forest = injected if injected is not None else build_forest(cfg, system, mu, grid)
    rng = _rng(cfg, 2)
    rows = []
    for t in range(32):
        f = _random_cell_fn(cfg, mu.canvas, rng)
        rows.append((t, martingale.square_function_ratio(f, system, forest, mu)))
    _write_csv(out / "sqf.csv", ["trial", "ratio"], rows)
    worst = max(r for _, r in rows)
    passed = np.isfinite(worst)
    _write_json(out / "sqf.json", cfg, {"max_ratio": worst, "passed": bool(passed)})
    return bool(passed)


def cmd_dual_growth(cfg: ExperimentConfig, out: Path) -> bool:
    res = martingale.counterexample_dual_growth(cfg.N)
    oracle = martingale.dual_growth_closed_form(cfg.N)
    jump = (oracle[1:] - oracle[:-1]) ** 2 * 2.0 ** -np.arange(1, cfg.N + 1, dtype=float)
    rel = np.abs(res.per_j - jump) / np.maximum(np.abs(jump), 1e-300)
    rows = [(j + 1, res.per_j[j], jump[j], rel[j]) for j in range(cfg.N)]
    _write_csv(out / "dual_growth.csv", ["j", "value", "closed_form", "rel_err"], rows)
    passed = bool(rel.max() <= 1e-12 and abs(res.f_norm - 1.0) <= 1e-12)
    _write_json(out / "dual_growth.json", cfg,
                {"total": res.total, "restricted_total": res.restricted_total,
                 "total_over_N": res.total / cfg.N, "passed": passed})
    print(f"total/N = {res.total / cfg.N:.6f}")
    return passed


def cmd_stopping(cfg: ExperimentConfig, out: Path) -> bool:
    mu = build_measure(cfg)
    grid = unit_grid(cfg)
    system, injected = build_system(cfg, mu, grid)
    forest = injected if injected is not None else build_forest(cfg, system, mu, grid)
    pack = stopping.packing_ratio(forest, mu)
    (out / "forest.json").write_text(forest.to_json())
    rows = [(j, ratio) for j, ratio in pack.by_generation.items()]
    _write_csv(out / "packing.csv", ["generation_step", "max_ratio"], rows)
    passed = pack.decay_ok() and (pack.tau < 1.0 or not pack.by_generation)
    _write_json(out / "stopping.json", cfg,
                {"tau_measured": pack.tau, "witness": pack.witness, "passed": passed})
    return passed


def cmd_carleson(cfg: ExperimentConfig, out: Path) -> bool:
    mu = build_measure(cfg)
    grid = unit_grid(cfg)
    system, injected = build_system(cfg, mu, grid)
    forest = injected if injected is not None else build_forest(cfg, system, mu, grid)
    seq = {c.key: mu.cube_mass(c) for c in forest.members() if mu.cube_mass(c) > 0}
    rep = stopping.carleson_constant(seq, mu, grid, "selected-cube-masses")
    pack = stopping.packing_ratio(forest, mu)
    bound = 1.0 + 1.0 / (1.0 - pack.tau) if pack.tau < 1 else float("inf")
    rng = _rng(cfg, 3)
    rows = []
    for t in range(32):
        f = _random_cell_fn(cfg, mu.canvas, rng)
        rows.append((t, stopping.embedding_ratio(seq, f, mu, grid)))
    _write_csv(out / "embedding.csv", ["trial", "ratio"], rows)
    emb_ok = all(v <= 4.0 * rep.constant + 1e-9 for _, v in rows)
    passed = (not rep.infinite) and rep.constant <= bound + 1e-12 and emb_ok
    _write_json(out / "carleson.json", cfg,
                {"constant": rep.constant, "witness": rep.witness,
                 "tau_measured": pack.tau, "geometric_bound": bound,
                 "passed": passed})
    return passed


def cmd_usfe(cfg: ExperimentConfig, out: Path) -> bool:
    mu = build_measure(cfg)
    grid = unit_grid(cfg)
    rng = _rng(cfg, 4)
    top = grid.top_cube()
    rows, worst = [], 0.0
    for t in range(32):
        f = _random_cell_fn(cfg, mu.canvas, rng)
        val = stopping.usfe_value(f, mu, grid)
        avg = mu.cube_average(f, top)
        ref = mu.inner(f, f) - avg * avg * mu.cube_mass(top)
        rel = abs(val - ref) / max(abs(ref), 1e-300)
        worst = max(worst, rel)
        rows.append((t, val, ref, rel))
    _write_csv(out / "usfe.csv", ["trial", "value", "reference", "rel_err"], rows)
    passed = worst <= 1e-12
    _write_json(out / "usfe.json", cfg, {"worst_rel_err": worst, "passed": passed})
    return passed


def cmd_kernel_verify(cfg: ExperimentConfig, out: Path) -> bool:
    canvas = measure.Canvas(cfg.dim, cfg.canvas_level)
    kern = operator.kernel_model(cfg.kernel, canvas, build_lambda(cfg))
    rep = operator.verify_standard_kernel(kern, cfg.trials, cfg.seed, canvas)
    passed = all(np.isfinite(v) for v in (rep.c_size, rep.c_xreg, rep.c_yreg))
    _write_json(out / "kernel_verify.json", cfg,
                {"c_size": rep.c_size, "c_xreg": rep.c_xreg, "c_yreg": rep.c_yreg,
                 "triples": rep.triples, "passed": bool(passed)})
    return bool(passed)


def _two_grid_setup(cfg: ExperimentConfig):
    mu = build_measure(cfg)
    canvas = mu.canvas
    top_exp = canvas.level + 1
    grid_d = lattice.Grid(dim=1, top_exp=top_exp, depth=top_exp, shift=(cfg.shift_d,))
    grid_dp = lattice.Grid(dim=1, top_exp=top_exp, depth=top_exp, shift=(cfg.shift_dp,))
    if cfg.shift_d > 0 or cfg.shift_d + (1 << top_exp) < canvas.cells_per_axis:
        raise ConfigError("first grid does not cover the canvas")
    if cfg.shift_dp > 0 or cfg.shift_dp + (1 << top_exp) < canvas.cells_per_axis:
        raise ConfigError("second grid does not cover the canvas")
    T = build_operator(cfg, mu)
    sys1 = accretive.t1_system(grid_d, canvas)
    sys2 = accretive.t1_system(grid_dp, canvas)
    forest1 = stopping.build_linf(sys1, mu, grid_d)
    forest2 = stopping.build_linf(sys2, mu, grid_dp)
    return mu, grid_d, grid_dp, T, sys1, sys2, forest1, forest2


def cmd_pairing_split(cfg: ExperimentConfig, out: Path) -> bool:
    mu, grid_d, grid_dp, T, sys1, sys2, forest1, forest2 = _two_grid_setup(cfg)
    rng = _rng(cfg, 5)
    f = rng.standard_normal(mu.canvas.shape)
    g = rng.standard_normal(mu.canvas.shape)
    ledger = pairing.split_pairing(T, f, g, sys1, sys2, forest1, forest2, mu,
                                   cfg.r, Fraction(cfg.gamma), detailed=True)
    rows = [(k, v) for k, v in sorted(ledger.as_dict().items())
            if isinstance(v, float)]
    _write_csv(out / "ledger.csv", ["bucket", "value"], rows)
    passed = ledger.bookkeeping_residual <= 1e-12
    _write_json(out / "pairing_split.json", cfg,
                {**ledger.as_dict(), "passed": passed})
    return passed


def cmd_collapse(cfg: ExperimentConfig, out: Path) -> bool:
    mu, grid_d, grid_dp, T, sys1, sys2, forest1, forest2 = _two_grid_setup(cfg)
    rng = _rng(cfg, 6)
    g = rng.standard_normal(mu.canvas.shape)
    rep = pairing.paraproduct_collapse(g, sys2, forest2, grid_d, grid_dp, mu,
                                       cfg.r, Fraction(cfg.gamma))
    _write_json(out / "collapse.json", cfg,
                {"max_residual": rep.max_residual, "max_relative": rep.max_relative,
                 "n_good": rep.n_good, "n_skipped": rep.n_skipped,
                 "passed": rep.passed})
    return rep.passed


def cmd_badness_mc(cfg: ExperimentConfig, out: Path) -> bool:
    rep = pairing.badness_probability_mc(cfg.k, cfg.r, Fraction(cfg.gamma),
                                         cfg.trials, cfg.seed)
    _write_csv(out / "badness_mc.csv",
               ["k", "fraction", "stderr", "exact"],
               [(cfg.k, rep.fraction, rep.stderr, rep.exact)])
    _write_json(out / "badness_mc.json", cfg,
                {"fraction": rep.fraction, "stderr": rep.stderr, "exact": rep.exact,
                 "within_3se": rep.within_3se, "passed": rep.within_3se,
                 "params": rep.params})
    return rep.within_3se


def cmd_boundary_mc(cfg: ExperimentConfig, out: Path) -> bool:
    rep = pairing.boundary_mass_mc(cfg.eta, cfg.trials, cfg.seed)
    _write_csv(out / "boundary_mc.csv",
               ["eta", "fraction", "stderr", "exact"],
               [(cfg.eta, rep.fraction, rep.stderr, rep.exact)])
    _write_json(out / "boundary_mc.json", cfg,
                {"fraction": rep.fraction, "stderr": rep.stderr, "exact": rep.exact,
                 "within_3se": rep.within_3se, "passed": rep.within_3se,
                 "params": rep.params})
    return rep.within_3se


def cmd_schur(cfg: ExperimentConfig, out: Path) -> bool:
    lam = build_lambda(cfg)
    rows = []
    for depth in cfg.depths:
        local = ExperimentConfig.from_json(cfg.to_json())
        local.canvas_level = depth
        local.depth = depth
        mu = build_measure(local)
        top_exp = depth + 1
        grid_d = lattice.Grid(dim=1, top_exp=top_exp, depth=top_exp,
                              shift=(-(1 << (depth - 1)),))
        grid_dp = lattice.Grid(dim=1, top_exp=top_exp, depth=top_exp,
                               shift=(-(1 << (depth - 2)),))
        rows.append((depth, pairing.schur_norm(grid_d, grid_dp, lam, mu,
                                               alpha=float(Fraction(cfg.alpha)))))
    _write_csv(out / "schur.csv", ["depth", "norm"], rows)
    norms = [v for _, v in rows]
    spread = max(norms) / max(min(norms), 1e-300)
    passed = all(np.isfinite(v) and v > 0 for v in norms)
    _write_json(out / "schur.json", cfg,
                {"norms": dict(rows), "spread": spread, "passed": bool(passed)})
    return bool(passed)


COMMANDS = {
    "decompose": cmd_decompose,
    "sqf": cmd_sqf,
    "dual-growth": cmd_dual_growth,
    "stopping": cmd_stopping,
    "carleson": cmd_carleson,
    "usfe": cmd_usfe,
    "kernel-verify": cmd_kernel_verify,
    "pairing-split": cmd_pairing_split,
    "collapse": cmd_collapse,
    "badness-mc": cmd_badness_mc,
    "boundary-mc": cmd_boundary_mc,
    "schur": cmd_schur,
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="JSON config file")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--depth", type=int, default=None)
    common.add_argument("--canvas-level", type=int, default=None, dest="canvas_level")
    common.add_argument("--trials", type=int, default=None)
    common.add_argument("--N", type=int, default=None, dest="N")
    common.add_argument("--k", type=int, default=None)
    common.add_argument("--r", type=int, default=None)
    common.add_argument("--gamma", default=None)
    common.add_argument("--eta", type=float, default=None)
    common.add_argument("--kernel", default=None)
    common.add_argument("--measure", default=None)
    common.add_argument("--system", default=None)
    common.add_argument("--forest-mode", default=None, dest="forest_mode")
    parser = argparse.ArgumentParser(prog="dytb", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.load(args.config)
        cfg.apply_env()
        cfg.apply_overrides(
            out=args.out, seed=args.seed, depth=args.depth,
            canvas_level=args.canvas_level, trials=args.trials, N=args.N,
            k=args.k, r=args.r, gamma=args.gamma, eta=args.eta,
            kernel=args.kernel, measure=args.measure, system=args.system,
            forest_mode=args.forest_mode)
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        passed = COMMANDS[args.command](cfg, out)
        dt = time.perf_counter() - t0
        status = "pass" if passed else "FAIL"
        print(f"{args.command}: {status} ({dt:.2f}s, config {cfg.hash}, out {out})")
        return 0 if passed else 1
    except ConfigError as e:
        json.dump({"error": str(e), "type": "config"}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    except (ValueError, OSError) as e:
        json.dump({"error": str(e), "type": type(e).__name__}, sys.stderr)
        sys.stderr.write("\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
