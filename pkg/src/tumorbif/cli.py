"""Command-line interface: ``tumorbif <subcommand> [options]``.

Exit codes: 0 success, 1 a check failed, 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np
from scipy.special import iv

from . import io
from .continuation import default_K, fit_asymptotics, trace_branch
from .field import FieldGrid, FieldSolver, multiplier_check
from .geometry import ShapeCoeffs
from .model import DomainError, NutrientFn, ParameterError
from .modes import solve_modes, verify_estimates
from .radial import SolverError, find_RA
from .spectrum import (InconclusiveError, SpectrumError, bif_values, build_table, catalog, check_feri,
                       crandall_rabinowitz, find_k1, g_bullet, mu)

log = logging.getLogger("tumorbif")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class CheckFailed(Exception):
    pass


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML/JSON run configuration")
    p.add_argument("--out", help="result directory (default: $TUMORBIF_RESULTS or ./results)")
    p.add_argument("--A", type=float, help="apoptosis/mitosis balance, 0 < A < f(1)")
    p.add_argument("--f", choices=["identity", "michaelis_menten"], help="nutrient consumption law")
    p.add_argument("--sigma", type=float, help="Michaelis-Menten rate")
    p.add_argument("--k-max", type=int, help="largest mode index")
    p.add_argument("--n-r", type=int, help="radial collocation nodes")
    p.add_argument("--n-theta", type=int, help="angular collocation nodes")
    p.add_argument("--format", choices=["yaml", "json"], default="yaml", help="result file format")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tumorbif", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("radial", help="radial equilibrium R_A and profile v0")
    _common(p)

    p = sub.add_parser("modes", help="mode ODE boundary values and estimates")
    _common(p)

    p = sub.add_parser("spectrum", help="denominators d_k, bifurcation values G_k, k1 and G_bullet")
    _common(p)
    p.add_argument("--G", type=float, help="evaluate mu_k at this G")

    p = sub.add_parser("bifpoints", help="catalog of bifurcation points in the l-symmetric class")
    _common(p)
    p.add_argument("--l", type=int, default=2)
    p.add_argument("--count", type=int, default=3)
    p.add_argument("--strict", action="store_true", help="use kl >= k1 + 1 and G > G_bullet")

    p = sub.add_parser("verify-multiplier", help="finite-difference linearization of Phi versus mu_k(G)")
    _common(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--G", type=float, required=True)
    p.add_argument("--eps", type=float, default=1e-4)
    p.add_argument("--rel-tol", type=float, help="relative error bound (default from config)")

    p = sub.add_parser("trace", help="trace the branch emanating from (G_kl, 0)")
    _common(p)
    p.add_argument("--l", type=int, default=2)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--eps-max", type=float, default=0.05)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--K", type=int, help="number of cosine coefficients beyond a_0")
    p.add_argument("--no-recheck", action="store_true", help="skip the fine-grid residual re-evaluation")
    p.add_argument("--workers", type=int, help="threads for Jacobian columns")

    p = sub.add_parser("diagram", help="SVG bifurcation diagram and domain outlines")
    _common(p)
    p.add_argument("--l", type=int, default=2)
    p.add_argument("--count", type=int, default=3)
    p.add_argument("--branch", action="append", default=[], help="branch result file (repeatable)")

    p = sub.add_parser("check-all", help="run the property checks and aggregate pass/fail")
    _common(p)
    p.add_argument("--quick", action="store_true", help="skip the field-solver checks")
    return parser


def _config(args) -> io.RunConfig:
    cfg = io.load_config(args.config)
    model = {"A": args.A}
    if args.f is not None or args.sigma is not None:
        f = dict(cfg.model.get("f") or {})
        if args.f is not None:
            f["kind"] = args.f
        if args.sigma is not None:
            f["sigma"] = args.sigma
        model["f"] = f
    if getattr(args, "G", None) is not None:
        model["G"] = args.G
    cfg = cfg.override("model", **model)
    cfg = cfg.override("numerics", k_max=args.k_max, n_r=args.n_r, n_theta=args.n_theta,
                       K=getattr(args, "K", None))
    task = {k: v for k, v in vars(args).items()
            if k not in {"config", "out", "A", "f", "sigma", "k_max", "n_r", "n_theta", "format", "verbose",
                         "command", "G", "K"}}
    return cfg.override("tasks", **{args.command: task})


def _save(args, cfg, name, kind, payload, started, **extra) -> Path:
    out = io.result_dir(args.out or "results")
    ext = ".json" if args.format == "json" else ".yaml"
    res = io.ResultFile(kind=kind, config=cfg.to_dict(), payload=payload,
                        provenance=io.provenance(cfg, started, **extra))
    return io.write_result(out / f"{name}{ext}", res)


def _equilibrium(cfg):
    return find_RA(cfg.A, cfg.nutrient(), grid_size=int(cfg.numerics["radial_grid"]))


def _grid(cfg):
    return FieldGrid(int(cfg.numerics["n_r"]), int(cfg.numerics["n_theta"]))


def cmd_radial(args, cfg, started):
    eq = _equilibrium(cfg)
    out = io.result_dir(args.out or "results")
    io.write_csv(out / "radial_profile.csv", ["s", "v0", "dv0_ds"], zip(eq.nodes, eq.v0, eq.dv0))
    path = _save(args, cfg, "radial", "radial",
                 {"R_A": eq.R_A, "c_A": eq.c_A, "residual": eq.residual}, started)
    print(f"R_A = {eq.R_A:.15g}  c_A = {eq.c_A:.15g}  flux residual = {eq.residual:.2e}")
    print(f"wrote {path} and {out / 'radial_profile.csv'}")


def cmd_modes(args, cfg, started):
    eq = _equilibrium(cfg)
    k_max = int(cfg.numerics["k_max"])
    sols = solve_modes(range(k_max + 2), eq)
    rep = verify_estimates(k_max, eq, sols=sols)
    out = io.result_dir(args.out or "results")
    rows = [(s.n, s.u1, s.du1, s.ratio) for s in sols[: k_max + 1]]
    io.write_csv(out / "modes.csv", ["n", "u_n(1)", "u_n'(1)", "ratio"], rows)
    _save(args, cfg, "modes", "modes", {"M": rep.M, "violations": rep.violations, "flags": rep.flags,
                                        "trend": rep.trend}, started)
    for line in rep.lines():
        print(line)
    print(f"{len(rows)} modes written to {out / 'modes.csv'}")
    if not rep.ok:
        raise CheckFailed("mode estimates violated")


def cmd_spectrum(args, cfg, started):
    eq = _equilibrium(cfg)
    table = build_table(eq, int(cfg.numerics["k_max"]))
    G = cfg.G
    Gk = bif_values(table)
    out = io.result_dir(args.out or "results")
    rows = [(k, table.d(k), Gk[k], mu(k, G, table)) for k in range(table.k_max + 1)]
    io.write_csv(out / "spectrum.csv", ["k", "d_k", "G_k", f"mu_k(G={G:g})"], rows)
    k1 = find_k1(table)
    gb = g_bullet(table, k1)
    feri = check_feri(table)
    _save(args, cfg, "spectrum", "spectrum", {"k1": k1, "G_bullet": gb, "d0_nonzero": feri,
                                              "d": table.denom, "G_k": Gk}, started)
    print(f"R_A = {eq.R_A:.12g}  k1 = {k1}  G_bullet = {gb:.10g}  d_0 = {table.d(0):.6g}")
    for k in range(min(table.k_max, 8) + 1):
        print(f"k={k:3d}  d_k={table.d(k): .10f}  G_k={Gk[k]: .10g}")
    if not feri:
        raise CheckFailed("d_0 vanishes")


def _catalog(cfg, l, count, strict=False):
    eq = _equilibrium(cfg)
    table = build_table(eq, int(cfg.numerics["k_max"]))
    return eq, table, catalog(l, count, table, strict=strict)


def cmd_bifpoints(args, cfg, started):
    eq, table, pts = _catalog(cfg, args.l, args.count, args.strict)
    out = io.result_dir(args.out or "results")
    rows, records = [], []
    for p in pts:
        cr = crandall_rabinowitz(p, table)
        rows.append((p.mode, p.l, p.k, p.G, cr["dG_mu"], cr["kernel_one_dimensional"]))
        records.append({"mode": p.mode, "l": p.l, "k": p.k, "G": p.G, "checks": cr})
        print(f"mode {p.mode:3d} (l={p.l}, k={p.k})  G = {p.G:.10g}  dG mu = {cr['dG_mu']:.4g}  "
              f"simple = {cr['kernel_one_dimensional']}")
    io.write_csv(out / "bifpoints.csv", ["mode", "l", "k", "G", "dG_mu", "simple"], rows)
    _save(args, cfg, "bifpoints", "bifpoints", records, started)
    if not all(r["checks"]["kernel_one_dimensional"] and r["checks"]["transversal"] for r in records):
        raise CheckFailed("a catalog point fails the simple-eigenvalue hypotheses")


def cmd_verify_multiplier(args, cfg, started):
    eq = _equilibrium(cfg)
    table = build_table(eq, max(int(cfg.numerics["k_max"]), args.k + 1))
    solver = FieldSolver(eq, grid=_grid(cfg), linear_tol=cfg.numerics["tolerances"]["linear"],
                         newton_tol=cfg.numerics["tolerances"]["newton"])
    rel_tol = args.rel_tol if args.rel_tol is not None else cfg.numerics["tolerances"]["multiplier"]
    chk = multiplier_check(args.G, args.k, solver, table, eps=args.eps, rel_tol=rel_tol)
    _save(args, cfg, f"multiplier_k{args.k}", "multiplier",
          {"k": chk.k, "G": chk.G, "measured": chk.measured, "reference": chk.reference,
           "rel_error": chk.rel_error, "leakage": chk.leakage, "passed": chk.passed}, started)
    print(f"measured = {chk.measured:.12g}  reference = {chk.reference:.12g}  rel_error = {chk.rel_error:.3e}")
    if not chk.passed:
        raise CheckFailed(f"multiplier mismatch (rel_error {chk.rel_error:.3e}, leakage {chk.leakage:.3e})")


def cmd_trace(args, cfg, started):
    eq = _equilibrium(cfg)
    table = build_table(eq, int(cfg.numerics["k_max"]))
    mode = args.k * args.l
    pts = [p for p in catalog(args.l, table.k_max // args.l, table) if p.mode == mode] \
        if mode >= 2 else []
    if not pts:
        raise io.ConfigError(f"mode {mode} is not a catalog point for l = {args.l}")
    solver = FieldSolver(eq, grid=_grid(cfg).symmetric(args.l), linear_tol=cfg.numerics["tolerances"]["linear"],
                         newton_tol=cfg.numerics["tolerances"]["newton"])
    K = cfg.numerics.get("K")
    K = default_K(args.l, solver.grid.n_theta) if K is None else int(K)
    branch = trace_branch(pts[0], args.eps_max, args.steps, solver, K=K,
                          tol=cfg.numerics["tolerances"]["branch"], recheck=not args.no_recheck,
                          workers=args.workers)
    payload = io.branch_records(branch)
    if len(branch.points) >= 6:
        fit = fit_asymptotics(branch)
        payload["fit"] = {"g0": fit.g0, "g1": fit.g1, "defect": fit.defect}
        print(f"fit: g0 = {fit.g0:.10g} (G_kl = {branch.G_kl:.10g}), |g1| = {fit.g1:.4g}, "
              f"defect = {fit.defect:.4g}")
    path = _save(args, cfg, f"branch_l{args.l}_k{args.k}", "branch", payload, started)
    for p in branch.points:
        print(f"eps = {p.eps:.5f}  G = {p.G:.10g}  residual = {p.residual:.2e}  fine = {p.fine_residual:.2e}")
    print(f"wrote {path}")
    tol = cfg.numerics["tolerances"]["branch"]
    if branch.warnings or any(p.residual > tol for p in branch.points):
        raise CheckFailed("branch incomplete or residual above tolerance")


def cmd_diagram(args, cfg, started):
    branches = []
    for path in args.branch:
        res = io.read_result(path)
        if res.kind != "branch":
            raise io.ConfigError(f"{path} is not a branch result")
        branches.append(io.branch_from_records(res.payload))
    eq, table, pts = _catalog(cfg, args.l, args.count)
    out = io.result_dir(args.out or "results")
    diag = io.emit_diagram(pts, branches, out / "diagram.svg")
    written = [diag]
    for b in branches:
        for i in sorted({0, len(b.points) // 2, len(b.points) - 1}):
            p = b.points[i]
            written.append(io.emit_outline(p.rho, eq.R_A, out / f"outline_mode{b.mode}_{i:03d}.svg"))
    for w in written:
        print(f"wrote {w}")


def _check_all(cfg, quick: bool):
    """(name, passed, detail) for a fast pass over the module properties."""
    results = []

    def record(name, ok, detail=""):
        results.append((name, bool(ok), detail))

    A1 = io.CANONICAL_A
    eq1 = find_RA(A1)
    record("radial: R_A = 1 for A = 2 I1(1)/I0(1)", abs(eq1.R_A - 1) <= 1e-8, f"R_A - 1 = {eq1.R_A - 1:.2e}")
    sols = solve_modes(range(34), eq1)
    errs = []
    for s in sols[:33]:
        n = s.n
        fac = np.prod(np.arange(1, n + 1, dtype=float)) * 2.0**n
        errs.append(max(abs(s.u1 / (fac * iv(n, 1.0)) - 1), abs(s.du1 / (fac * iv(n + 1, 1.0)) - 1)))
    record("modes: Bessel formulas n <= 32", max(errs) <= 1e-8, f"max rel err {max(errs):.2e}")

    worst = 0.0
    for f in (NutrientFn.identity(), NutrientFn.michaelis_menten(2.0)):
        f1 = float(f.f(np.array(1.0)))
        for frac in (0.2, 0.5, 0.8):
            eq = find_RA(frac * f1, f)
            t = build_table(eq, 4, f)
            worst = max(worst, abs(t.d(1)))
    record("spectrum: mu_1 = 0", worst <= 1e-7, f"max |d_1| = {worst:.2e}")

    rep = verify_estimates(32, eq1, sols=sols)
    record("modes: monotonicity and 1/k bounds", rep.ok, "; ".join(rep.violations[:2]))

    table = build_table(eq1, 64)
    try:
        k1 = find_k1(table)
        record("spectrum: monotone tail k1", True, f"k1 = {k1}")
    except InconclusiveError as exc:
        record("spectrum: monotone tail k1", False, str(exc))

    As = np.linspace(0.1, 0.9, 6)
    Rs = [find_RA(a).R_A for a in As]
    record("radial: R_A decreasing in A", np.all(np.diff(Rs) < 0), "")

    if not quick:
        solver = FieldSolver(eq1, grid=_grid(cfg))
        zero = ShapeCoeffs.zero(2, 4)
        sup = max(solver.assemble_phi(G, zero).sup for G in (0.0, 10.0, 200.0))
        record("field: trivial branch Phi(G, 0) = 0", sup <= 1e-7, f"max |Phi| = {sup:.2e}")
        chk = multiplier_check(5.0, 2, solver, table)
        record("field: multiplier k=2, G=5", chk.passed, f"rel err {chk.rel_error:.2e}")
    return results


def cmd_check_all(args, cfg, started):
    results = _check_all(cfg, args.quick)
    for name, ok, detail in results:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f"  ({detail})" if detail else ""))
    _save(args, cfg, "check_all", "check-all",
          [{"name": n, "passed": ok, "detail": d} for n, ok, d in results], started)
    n_fail = sum(not ok for _, ok, _ in results)
    print(f"{len(results) - n_fail}/{len(results)} checks passed")
    if n_fail:
        raise CheckFailed(f"{n_fail} checks failed")


COMMANDS = {
    "radial": cmd_radial,
    "modes": cmd_modes,
    "spectrum": cmd_spectrum,
    "bifpoints": cmd_bifpoints,
    "verify-multiplier": cmd_verify_multiplier,
    "trace": cmd_trace,
    "diagram": cmd_diagram,
    "check-all": cmd_check_all,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    try:
        cfg = _config(args)
        COMMANDS[args.command](args, cfg, started)
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except (io.ConfigError, ParameterError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, SpectrumError) as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
