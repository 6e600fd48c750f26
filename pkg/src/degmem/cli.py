"""Command-line driver: ``degmem <subcommand> --config FILE --out DIR``.

Exit codes
----------
0  all monitors passed
1  a monitor failed (weight inequality, monotone sweep, ratio growth)
2  configuration or parse error
3  weight parameters not admissible
4  memory kernel fails the decay test (override with --override-kernel-check)
5  no room for the gluing intervals
6  an iteration did not converge
7  a fixed-point iterate left the ball of radius R
"""

import argparse
import os
import platform
import sys
import time
from dataclasses import replace

import numpy as np
import scipy

from . import __version__
from .coeffs import InvalidDegeneracyError, coefficient_from_record, d_star
from .control import (PenaltyConfig, carleman_ratio_monitor, default_s, epsilon_sweep,
                      synthesize_control, control_estimate_ratio)
from .errors import (ConfigurationError, ConvergenceError, DivergentIntegralError, GeometryError,
                     KernelInadmissibleError, RadiusError, WeightAdmissibilityError)
from .io import load_config, write_json_atomic, write_keyvalue, write_table
from .kernel import kernel_from_record
from .memory import (FixedPointConfig, admissible_decay_M, fixed_point_solve, kernel_admissible,
                     smallness_condition)
from .pde import default_bc, make_grid, write_trajectory
from .strategy import glue_double_degenerate, two_phase_control
from .weights import build_weights, choose_gamma_d, verify_weight_inequalities, write_weight_dump

EXIT_OK, EXIT_MONITOR, EXIT_CONFIG, EXIT_WEIGHTS = 0, 1, 2, 3
EXIT_KERNEL, EXIT_GEOMETRY, EXIT_CONVERGENCE, EXIT_RADIUS = 4, 5, 6, 7


class Run:
    """Output directory, file index and stage log of one invocation."""

    def __init__(self, command, cfg, out, seed, override=False):
        self.command = command
        self.cfg = cfg
        self.out = out
        self.seed = seed
        self.override = override
        self.files = []
        self.stages = {}
        self.started = time.time()
        os.makedirs(out, exist_ok=True)

    def path(self, name):
        self.files.append(name)
        return os.path.join(self.out, name)

    def stage(self, name, status):
        self.stages[name] = status

    def finish(self, code):
        manifest = {
            "command": self.command,
            "config": self.cfg.echo(),
            "config_source": self.cfg.source,
            "seed": self.seed,
            "override_kernel_check": self.override,
            "versions": {"degmem": __version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()},
            "wall_clock_s": round(time.time() - self.started, 3),
            "stages": self.stages,
            "files": sorted(set(self.files)),
            "exit_code": code,
        }
        write_json_atomic(os.path.join(self.out, "manifest.json"), manifest)
        return code


# --- building blocks from the config ----------------------------------------
def _coefficient(cfg):
    return coefficient_from_record(cfg["coefficient"])


def _weights(cfg, a, t0=0.0):
    wc = cfg["weights"]
    T = float(cfg["grid"]["T"])
    side = "right" if a.degeneracy_side == "right" else "left"
    ds = d_star(a, side=side)
    gamma, d = wc["gamma"], wc["d"]
    if gamma is None or d is None:
        g0, d0 = choose_gamma_d(ds, float(wc["L"]), wc["mode"])
        gamma = g0 if gamma is None else gamma
        d = d0 if d is None else d
    return build_weights(T, a, float(gamma), float(d), float(wc["L"]), p=int(wc["p"]),
                         omega=tuple(cfg["control"]["omega"]), t0=t0, mode=wc["mode"])


def _penalty(cfg, w, epsilon=None):
    wc, cc = cfg["weights"], cfg["control"]
    k = float(wc["k"])
    s = float(wc["s"]) if wc["s"] is not None else default_s(w, k)
    eps = epsilon if epsilon is not None else float(cc["epsilons"][-1])
    return PenaltyConfig(s=s, k=k, epsilon=eps, cg_tol=float(cc["cg_tol"]),
                         cg_max_iters=int(cc["cg_max_iters"]), log_clamp=float(cc["log_clamp"]),
                         include_state_term=bool(cc["include_state_term"]))


def _initial(cfg, grid):
    ic = cfg["initial"]
    x = grid.x_inner
    kind = ic["kind"]
    if kind == "parabola":
        return x * (1 - x)
    if kind == "sine":
        return np.sin(np.pi * x)
    if kind == "random":
        return np.random.default_rng(int(ic["seed"])).normal(size=x.size)
    raise ConfigurationError(f"unknown initial.kind {kind!r}")


def _kernel(cfg, w, s):
    kc = dict(cfg["kernel"])
    if kc["kind"] == "decaying" and kc.get("M") is None:
        kc["M"] = float(kc["M_factor"]) * admissible_decay_M(w, s)
    return kernel_from_record(kc, w.T)


def _fp_config(cfg):
    fc = cfg["fixed_point"]
    return FixedPointConfig(R=float(fc["R"]), max_iters=int(fc["max_iters"]),
                            picard_tol=float(fc["picard_tol"]), relax=float(fc["relax"]))


def _grid(cfg, a, w):
    gc = cfg["grid"]
    return make_grid(a, int(gc["N"]), int(gc["M"]), w.T, w.t0)


def _meta(run, **extra):
    meta = {"command": run.command, "seed": run.seed}
    meta.update(extra)
    return meta


# --- subcommands ---------------------------------------------------------------
def cmd_check_weights(run):
    cfg = run.cfg
    a = _coefficient(cfg)
    w = _weights(cfg, a)
    grid = _grid(cfg, a, w)
    reps = verify_weight_inequalities(w, grid.x, grid.t)
    write_table(run.path("weight_report.csv"),
                ["inequality_id", "max_violation", "passed", "witness_t", "witness_x"],
                [(r.inequality_id, float(r.max_violation), int(r.passed), float(r.witness[0]),
                  float(r.witness[1])) for r in reps],
                _meta(run, gamma=w.gamma, d=w.d, d_star=w.d_star, L=w.L, p=w.p))
    write_weight_dump(run.path("weights_dump.csv"), w, grid.t[1:-1], grid.x)
    ok = all(r.passed for r in reps)
    run.stage("check_weights", "passed" if ok else "failed")
    return EXIT_OK if ok else EXIT_MONITOR


def cmd_control(run):
    cfg = run.cfg
    if "kernel.kind" in cfg.explicit and cfg["kernel"]["kind"] != "zero":
        print("warning: the control subcommand ignores the kernel section", file=sys.stderr)
    a = _coefficient(cfg)
    w = _weights(cfg, a)
    grid = _grid(cfg, a, w)
    y0 = _initial(cfg, grid)
    pen = _penalty(cfg, w)
    omega = tuple(cfg["control"]["omega"])
    rows = epsilon_sweep(y0, None, a, w, pen, omega, cfg["control"]["epsilons"], grid=grid)
    table = []
    for i, (eps, r, status) in enumerate(rows):
        if r is None:
            table.append((eps, float("nan"), float("nan"), -1, status.split(":")[0]))
            continue
        table.append((eps, r.terminal_norm, r.weighted_cost, r.cg_iterations, status))
        write_table(run.path(f"cg_history_{i}.csv"),
                    ["iter", "rel_residual", "J", "terminal_norm"],
                    [(int(h[0]), float(h[1]), float(h[2]), float(h[3])) for h in r.history],
                    _meta(run, epsilon=eps))
    write_table(run.path("sweep.csv"), ["epsilon", "terminal_norm", "J", "cg_iters", "status"],
                table, _meta(run, s=pen.s, k=pen.k, log_clamp=pen.log_clamp))
    last = next((r for _, r, _ in reversed(rows) if r is not None), None)
    if last is not None:
        write_trajectory(run.path("trajectory.csv"), last.y, _meta(run))
    norms = [t[1] for t in table]
    ok = all(st == "ok" for _, _, st in rows) and all(
        n2 <= n1 for n1, n2 in zip(norms, norms[1:]))
    run.stage("control", "passed" if ok else "failed")
    return EXIT_OK if ok else EXIT_MONITOR


def cmd_memory(run):
    cfg = run.cfg
    a = _coefficient(cfg)
    w = _weights(cfg, a)
    grid = _grid(cfg, a, w)
    pen = _penalty(cfg, w)
    b = _kernel(cfg, w, pen.s)
    rep = kernel_admissible(b, w, pen.s, pen.k, grid)
    write_keyvalue(run.path("kernel_report.txt"), dict(rep.as_dict(), kernel=b.label))
    run.stage("kernel_admissible", "passed" if rep.passed else "failed")
    if not rep.passed and not run.override:
        return EXIT_KERNEL
    y0 = _initial(cfg, grid)
    fp = fixed_point_solve(y0, b, a, w, pen, _fp_config(cfg), tuple(cfg["control"]["omega"]),
                           grid=grid, check_kernel=False)
    write_table(run.path("iterations.csv"), ["iter", "esk_residual", "terminal_norm", "cg_iters"],
                [(int(r[0]), float(r[1]), float(r[2]), int(r[3])) for r in fp.log],
                _meta(run, kernel=b.label, override=run.override))
    write_keyvalue(run.path("fixed_point_summary.txt"), {
        "iterations": fp.iterations, "final_residual": fp.residuals[-1],
        "terminal_norm": fp.control.terminal_norm, "monotone_after_3": fp.monotone,
        "C_T": fp.C_T, "estimate_ratio": fp.control.estimate_ratio,
        "smallness_lhs": fp.smallness_lhs, "smallness_holds": fp.smallness_holds,
        "control_bound_ratio": fp.control_bound_ratio, "override": run.override})
    write_trajectory(run.path("trajectory.csv"), fp.control.y, _meta(run))
    run.stage("fixed_point", "converged" if fp.monotone else "converged_nonmonotone")
    return EXIT_OK if fp.monotone else EXIT_MONITOR


def cmd_two_phase(run):
    cfg = run.cfg
    a = _coefficient(cfg)
    w = _weights(cfg, a)
    grid = _grid(cfg, a, w)
    pen = _penalty(cfg, w)
    b = _kernel(cfg, w, pen.s)
    y0 = _initial(cfg, grid)
    plan = two_phase_control(y0, b, a, w, pen, _fp_config(cfg), tuple(cfg["control"]["omega"]),
                             N=grid.N, M=grid.M, check_kernel=not run.override)
    y0n = float(np.sqrt(grid.h * np.sum(y0 ** 2)))
    write_keyvalue(run.path("two_phase_summary.txt"), {
        "t_star": plan.t_star, "n_star": plan.n_star, "terminal_norm": plan.terminal_norm,
        "initial_norm": y0n, "phase2_iterations": plan.phase2.iterations,
        "phase2_s": plan.cfg2.s, "override": run.override})
    write_trajectory(run.path("trajectory.csv"), plan.y, _meta(run, t_star=plan.t_star))
    run.stage("two_phase", "done")
    return EXIT_OK


def cmd_glue(run):
    cfg = run.cfg
    a = _coefficient(cfg)
    if a.degeneracy_side != "both":
        raise ConfigurationError("glue needs coefficient.side = both")
    gc, wc, cc = cfg["grid"], cfg["weights"], cfg["control"]
    x = np.linspace(0, 1, int(gc["N"]) + 2)[1:-1]
    init = {"parabola": x * (1 - x), "sine": np.sin(np.pi * x)}
    if cfg["initial"]["kind"] == "random":
        y0 = np.random.default_rng(int(cfg["initial"]["seed"])).normal(size=x.size)
    else:
        y0 = init.get(cfg["initial"]["kind"])
        if y0 is None:
            raise ConfigurationError(f"unknown initial.kind {cfg['initial']['kind']!r}")
    U, y, plan = glue_double_degenerate(
        y0, a, tuple(cc["omega"]), T=float(gc["T"]), L=float(wc["L"]), p=int(wc["p"]),
        k=float(wc["k"]), epsilon=float(cc["epsilons"][-1]), N=int(gc["N"]), M=int(gc["M"]),
        cfg_fp=_fp_config(cfg), log_clamp=float(cc["log_clamp"]))
    diag = dict(plan.diagnostics)
    left_bc, right_bc = diag.pop("boundary_defects")
    write_keyvalue(run.path("glue_summary.txt"), dict(
        diag, boundary_defect_left=left_bc, boundary_defect_right=right_bc,
        lambda_p=plan.lambda_p, lambda_pp=plan.lambda_pp, beta_pp=plan.beta_pp,
        beta_p=plan.beta_p))
    write_trajectory(run.path("trajectory.csv"), y, _meta(run))
    ok = (diag["composite_residual"] <= 10 * max(diag["single_residual"], 1e-300)
          and max(left_bc, right_bc) <= 1e-12)
    run.stage("glue", "passed" if ok else "failed")
    return EXIT_OK if ok else EXIT_MONITOR


def cmd_monitor(run):
    cfg = run.cfg
    a = _coefficient(cfg)
    w = _weights(cfg, a)
    mc = cfg["monitor"]
    s0 = float(cfg["weights"]["s"]) if cfg["weights"]["s"] is not None else default_s(w)
    rows = []
    reports = []
    for fct in mc["s_factors"]:
        rep = carleman_ratio_monitor(w, a, tuple(cfg["control"]["omega"]), s0 * float(fct),
                                     n_samples=int(mc["n_samples"]), N=int(mc["N"]),
                                     M=int(mc["M"]), seed=run.seed)
        reports.append(rep)
        for key in sorted(rep.ratios):
            rows.append((float(fct), rep.s, key, rep.ratios[key]))
    write_table(run.path("carleman_monitor.csv"), ["s_factor", "s", "estimate", "max_ratio"],
                rows, _meta(run, n_samples=mc["n_samples"]))
    ok = all(r.finite() for r in reports)
    for r1, r2 in zip(reports, reports[1:]):
        ok = ok and all(r2.ratios[k] <= r1.ratios[k] * (1 + 1e-12) for k in r1.ratios)
    run.stage("monitor", "passed" if ok else "failed")
    return EXIT_OK if ok else EXIT_MONITOR


def cmd_sweep(run):
    """Control runs over multiples of s: terminal norm, cost, estimate ratio, smallness."""
    cfg = run.cfg
    a = _coefficient(cfg)
    w = _weights(cfg, a)
    grid = _grid(cfg, a, w)
    y0 = _initial(cfg, grid)
    base = _penalty(cfg, w)
    omega = tuple(cfg["control"]["omega"])
    rows = []
    for fct in cfg["sweep"]["s_factors"]:
        pen = replace(base, s=base.s * float(fct))
        try:
            r = synthesize_control(y0, None, a, w, pen, omega, grid=grid)
        except ConvergenceError:
            rows.append((float(fct), pen.s, float("nan"), float("nan"), float("nan"),
                         float("nan"), "cg_failed"))
            continue
        ratio = control_estimate_ratio(r, y0, None, w, pen)
        _, lhs = smallness_condition(pen.s, pen.k, w.gamma, w.d_star, w.T,
                                     ratio if np.isfinite(ratio) else 1.0, w.p)
        rows.append((float(fct), pen.s, r.terminal_norm, r.weighted_cost, ratio, lhs, "ok"))
    write_table(run.path("s_sweep.csv"),
                ["s_factor", "s", "terminal_norm", "J", "estimate_ratio", "smallness_lhs",
                 "status"], rows, _meta(run, epsilon=base.epsilon))
    run.stage("sweep", "done")
    return EXIT_OK


COMMANDS = {
    "check-weights": cmd_check_weights,
    "control": cmd_control,
    "memory": cmd_memory,
    "two-phase": cmd_two_phase,
    "glue": cmd_glue,
    "monitor": cmd_monitor,
    "sweep": cmd_sweep,
}


def build_parser():
    p = argparse.ArgumentParser(
        prog="degmem", description="Null-control experiments for degenerate parabolic "
        "equations with memory.", epilog=__doc__.split("Exit codes", 1)[1].join(["Exit codes", ""]),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="section.key = value file")
        sp.add_argument("--out", default="runs", help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="seed for random monitors")
        sp.add_argument("--override-kernel-check", action="store_true",
                        help="solve even if the kernel fails the decay test")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    seed = args.seed if args.seed is not None else int(cfg["run"]["seed"])
    run = Run(args.command, cfg, args.out, seed, args.override_kernel_check)
    try:
        code = COMMANDS[args.command](run)
    except (ConfigurationError, InvalidDegeneracyError, DivergentIntegralError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    except WeightAdmissibilityError as exc:
        print(f"weight admissibility error: {exc}", file=sys.stderr)
        code = EXIT_WEIGHTS
    except KernelInadmissibleError as exc:
        print(f"kernel inadmissible: {exc}", file=sys.stderr)
        code = EXIT_KERNEL
    except GeometryError as exc:
        print(f"geometry error: {exc}", file=sys.stderr)
        code = EXIT_GEOMETRY
    except RadiusError as exc:
        print(f"radius error: {exc}", file=sys.stderr)
        code = EXIT_RADIUS
    except ConvergenceError as exc:
        print(f"convergence error: {exc}", file=sys.stderr)
        code = EXIT_CONVERGENCE
    run.stage("exit", code)
    return run.finish(code)


if __name__ == "__main__":
    sys.exit(main())
