"""Batch experiment driver.

Subcommands:
    run      integrate one configured system, run analyses, write
             trajectory.csv, report.json, and plot.script
    compare  run the flow and the discrete recurrence side by side
    sweep    grid over {K, nu, alpha, dim}, one sweep.csv row per point
    check    print the schedule condition report as JSON, nothing else

Exit codes: 0 success, 1 error (bad config, invalid input), 2 at least one
requested verdict failed.  Output files are written to a temporary name and
renamed at the end, so a run that exits with 1 leaves no partial files.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import analysis as _analysis
from . import config as _config
from . import discrete as _discrete
from . import flows as _flows
from ._rng import derive_rng
from .errors import (
    ConfigError,
    DimensionMismatch,
    MembershipViolation,
    NonConvergence,
    StepSizeUnderflow,
)
from .schedules import check_discrete_conditions

_USER_ERRORS = (
    ConfigError,
    DimensionMismatch,
    MembershipViolation,
    NonConvergence,
    NotImplementedError,
    StepSizeUnderflow,
    ValueError,
)

# slack for the differential branch of the integral-inequality check when the
# triple is sampled from a recorded trajectory (finite differences on the
# record grid dominate the error there)
_RUN_GRONWALL_TOL = 1e-3


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def _dump_json(payload):
    return json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n"


def _atomic_write_all(out_dir, files):
    """Write every (name, text) pair via a temp name, then rename."""
    os.makedirs(out_dir, exist_ok=True)
    temps = []
    try:
        for name, text in files.items():
            tmp = os.path.join(out_dir, f".{name}.tmp{os.getpid()}")
            with open(tmp, "w", newline="") as fh:
                fh.write(text)
            temps.append((tmp, os.path.join(out_dir, name)))
        for tmp, final in temps:
            os.replace(tmp, final)
    except BaseException:
        for tmp, _ in temps:
            try:
                os.remove(tmp)
            except OSError:
                pass
        raise


def _render_plot_script(series):
    """Point-list plot script: directives plus 'series NAME COUNT' blocks."""
    lines = [
        "# viscflow plot script",
        "# series of 'x y' pairs follow each 'series NAME COUNT' line",
        "title residual decay",
        "xlabel 1+t",
        "ylabel value",
        "xscale log",
        "yscale log",
    ]
    for name, xs, ys in series:
        lines.append(f"series {name} {len(xs)}")
        for x, y in zip(xs, ys):
            lines.append(f"{x:.17g} {y:.17g}")
    lines.append("end")
    return "\n".join(lines) + "\n"


def _solve_q_star(cfg):
    """Variational solution when the operator declares its fixed set."""
    try:
        return _analysis.solve_vp(cfg.problem), None
    except NotImplementedError as exc:
        return None, str(exc)
    except NonConvergence as exc:
        return None, str(exc)


def _conditions_payload(cfg):
    continuous = cfg.schedule.continuous_conditions(horizon=cfg.solver.t_end)
    discrete = check_discrete_conditions(cfg.schedule, N=10_000)
    return {"continuous": continuous.to_dict(), "discrete": discrete.to_dict()}


def cmd_run(cfg, quiet=False):
    cfg.problem.validate(seed=derive_rng(cfg.seed, "validate"))
    analyses = dict(cfg.analyses)
    needs_run = (not analyses) or any(name != "conditions" for name in analyses)

    report = {"config": _config.echo_dict(cfg.raw), "seed": cfg.seed,
              "analyses": {}, "verdicts": {}}
    files = {}

    vp_sol, vp_note = _solve_q_star(cfg)
    q_star = vp_sol.q_star if vp_sol is not None else None
    report["q_star"] = None if q_star is None else [float(v) for v in q_star]
    if vp_note:
        report["q_star_note"] = vp_note

    traj = traj_plain = None
    if needs_run:
        traj = _flows.integrate(cfg.problem, cfg.schedule, cfg.x0, cfg.solver,
                                perturbation=cfg.perturbation)
        # verdict analyses address the unforced flow; reuse the run when
        # no forcing is configured
        if cfg.perturbation is None:
            traj_plain = traj
        report["trajectory"] = {
            "stats": traj.stats,
            "t_end": float(traj.times[-1]),
            "final_residual": float(traj.residuals[-1]),
            "final_state": [float(v) for v in traj.states[-1]],
        }

    def plain():
        nonlocal traj_plain
        if traj_plain is None:
            traj_plain = _flows.integrate(cfg.problem, cfg.schedule, cfg.x0,
                                          cfg.solver)
        return traj_plain

    for name, params in cfg.analyses:
        if name == "conditions":
            report["analyses"]["conditions"] = _conditions_payload(cfg)
        elif name == "vp":
            if vp_sol is None:
                report["analyses"]["vp"] = {"note": vp_note or "unavailable"}
                report["verdicts"]["vp"] = "n/a"
            else:
                probe = _analysis.vp_residual(vp_sol.q_star, cfg.problem,
                                              seed=cfg.seed)
                report["analyses"]["vp"] = {"solution": vp_sol.to_dict(),
                                            "residual": probe.to_dict()}
                report["verdicts"]["vp"] = "pass" if probe.passed else "fail"
        elif name == "rate":
            nu = params.get("nu")
            if nu is None:
                if getattr(cfg.schedule, "kind", None) != "power":
                    raise ConfigError("rate analysis needs an explicit exponent "
                                      "(use rate:NU) for this schedule")
                nu = cfg.schedule.nu
            rep = _analysis.fit_rate(plain(), nu)
            report["analyses"]["rate"] = rep.to_dict()
            report["verdicts"]["rate"] = rep.verdict
        elif name == "boundedness":
            if vp_sol is None:
                report["analyses"]["boundedness"] = {"note": "q* unavailable"}
                report["verdicts"]["boundedness"] = "n/a"
            else:
                rep = _analysis.boundedness_verdict(plain(), vp_sol)
                report["analyses"]["boundedness"] = rep.to_dict()
                report["verdicts"]["boundedness"] = "pass" if rep.passed else "fail"
        elif name == "gronwall":
            if vp_sol is None:
                report["analyses"]["gronwall"] = {"note": "q* unavailable"}
                report["verdicts"]["gronwall"] = "n/a"
            else:
                grid, u, v, w = _analysis.trajectory_gronwall_triple(plain(), vp_sol)
                rep = _analysis.gronwall_check(grid, u, v, w, tol=_RUN_GRONWALL_TOL)
                report["analyses"]["gronwall"] = rep.to_dict()
                ok = rep.inequality_ok and bool(rep.bound_ok)
                report["verdicts"]["gronwall"] = "pass" if ok else "fail"
        elif name == "stability":
            rep = _analysis.stability_verdict(plain(), traj)
            report["analyses"]["stability"] = rep.to_dict()
            report["verdicts"]["stability"] = rep.verdict

    if traj is not None:
        files["trajectory.csv"] = _discrete.render_series_csv(
            "t", traj.times, traj.states, traj.residuals,
            traj.derivative_norms,
            None if q_star is None else traj.distances_to(q_star),
        )
        series = [("residual", 1.0 + traj.times, traj.residuals)]
        if q_star is not None:
            series.append(("dist_qstar", 1.0 + traj.times,
                           traj.distances_to(q_star)))
        files["plot.script"] = _render_plot_script(series)

    files["report.json"] = _dump_json(report)
    _atomic_write_all(cfg.output_dir, files)

    failed = [k for k, v in report["verdicts"].items() if v == "fail"]
    if not quiet:
        for k, v in sorted(report["verdicts"].items()):
            print(f"{k}: {v}")
        print(f"wrote {', '.join(sorted(files))} to {cfg.output_dir}")
    return 2 if failed else 0


def cmd_compare(cfg, steps=None, quiet=False):
    cfg.problem.validate(seed=derive_rng(cfg.seed, "validate"))
    n = int(cfg.solver.t_end) if steps is None else int(steps)
    if n < 0:
        raise ConfigError("step count must be nonnegative")

    if n == 0:
        empty = _discrete.render_series_csv(
            "n", np.empty(0), np.empty((0, cfg.problem.dim)), np.empty(0),
            np.empty(0), dim=cfg.problem.dim, index_format="d")
        files = {
            "continuous.csv": _discrete.render_series_csv(
                "t", np.empty(0), np.empty((0, cfg.problem.dim)), np.empty(0),
                np.empty(0), dim=cfg.problem.dim),
            "discrete.csv": empty,
            "gap.csv": "n,gap\n",
        }
        _atomic_write_all(cfg.output_dir, files)
        return 0

    solver = _flows.SolverConfig(
        t_end=float(n), method=cfg.solver.method, h=cfg.solver.h,
        abs_tol=cfg.solver.abs_tol, rel_tol=cfg.solver.rel_tol,
        project_each_step=cfg.solver.project_each_step, record_stride=1.0,
    )
    traj = _flows.integrate(cfg.problem, cfg.schedule, cfg.x0, solver)
    seq = _discrete.iterate_dds(cfg.problem, cfg.schedule, cfg.x0, n)
    bridge = _flows.euler_dds_equivalence(cfg.problem, cfg.schedule, cfg.x0, n)

    vp_sol, _ = _solve_q_star(cfg)
    q_star = vp_sol.q_star if vp_sol is not None else None

    # iterate n sits at time t = n; the flow state there comes off the
    # record grid, the first index (t = 0) holds the shared start
    cont_states = traj.values_at(np.arange(1, n + 1, dtype=float))
    gaps = np.linalg.norm(cont_states - seq.states, axis=1)
    gap_lines = ["n,gap"]
    gap_lines += [f"{i + 1},{g:.17g}" for i, g in enumerate(gaps)]

    files = {
        "continuous.csv": _discrete.render_series_csv(
            "t", traj.times, traj.states, traj.residuals, traj.derivative_norms,
            None if q_star is None else traj.distances_to(q_star)),
        "discrete.csv": _discrete.render_series_csv(
            "n", seq.indices, seq.states, seq.residuals, seq.step_norms,
            None if q_star is None else seq.distances_to(q_star),
            index_format="d"),
        "gap.csv": "\n".join(gap_lines) + "\n",
    }
    _atomic_write_all(cfg.output_dir, files)
    if not quiet:
        print(f"euler bridge max gap: {bridge.max_gap:.3e} "
              f"(relative {bridge.max_rel_gap:.3e}) over {bridge.steps} steps")
        print(f"flow vs recurrence gap at n={n}: {gaps[-1]:.6g}")
        print(f"wrote continuous.csv, discrete.csv, gap.csv to {cfg.output_dir}")
    return 0


def _sweep_axes(cfg):
    grid = cfg.sweep_grid
    schedule = cfg.schedule
    axes = {
        "K": grid.get("K", [schedule.K if schedule.kind == "power" else None]),
        "nu": grid.get("nu", [schedule.nu if schedule.kind == "power" else None]),
        "alpha": grid.get("alpha", [cfg.problem.f.alpha]),
        "dim": grid.get("dim", [cfg.problem.dim]),
    }
    explicit = set(grid)
    return axes, explicit


def _sweep_row(cfg, raw, seed, K, nu, alpha, dim, explicit):
    row = {"K": K, "nu": nu, "alpha": alpha, "dim": dim,
           "fitted_slope": "", "sup_scaled_residual": "",
           "final_dist_qstar": "", "rate_verdict": "", "boundedness": "",
           "vp_pass": "", "error": ""}
    try:
        raw = copy.deepcopy(raw)
        raw.pop("sweep", None)
        if "K" in explicit or "nu" in explicit:
            if raw.get("schedule", {}).get("kind") != ["power"]:
                raise ConfigError("K / nu sweeps need a power schedule")
            raw["schedule"]["K"] = [repr(float(K))]
            raw["schedule"]["nu"] = [repr(float(nu))]
        if "alpha" in explicit:
            contraction = raw.get("problem", {}).get("contraction", {})
            if contraction.get("kind") != ["affine"]:
                raise ConfigError("alpha sweeps need an affine contraction")
            contraction["alpha"] = [repr(float(alpha))]
        row_cfg = _config_from_raw(raw, {"dim": int(dim), "seed": seed,
                                         "output_dir": cfg.output_dir})
        row_cfg.problem.validate(seed=derive_rng(seed, "validate"))
        traj = _flows.integrate(row_cfg.problem, row_cfg.schedule, row_cfg.x0,
                                row_cfg.solver, perturbation=row_cfg.perturbation)
        fit_nu = nu if nu is not None else getattr(row_cfg.schedule, "nu", None)
        if fit_nu is None:
            raise ConfigError("no rate exponent available for this schedule")
        rate = _analysis.fit_rate(traj, float(fit_nu))
        row["fitted_slope"] = ("" if rate.fitted_slope is None
                               else f"{rate.fitted_slope:.17g}")
        row["sup_scaled_residual"] = f"{rate.sup_scaled_residual:.17g}"
        row["rate_verdict"] = rate.verdict
        try:
            vp_sol = _analysis.solve_vp(row_cfg.problem)
            probe = _analysis.vp_residual(vp_sol.q_star, row_cfg.problem, seed=seed)
            bound = _analysis.boundedness_verdict(traj, vp_sol)
            row["final_dist_qstar"] = (
                f"{float(traj.distances_to(vp_sol.q_star)[-1]):.17g}")
            row["boundedness"] = "pass" if bound.passed else "fail"
            row["vp_pass"] = "pass" if probe.passed else "fail"
        except NotImplementedError:
            pass
    except _USER_ERRORS as exc:
        row["error"] = str(exc).replace(",", ";").replace("\n", " ")
    return row


def _config_from_raw(raw, overrides):
    # round-trip through the text form so one loader owns all validation
    lines = []

    def emit(node, prefix):
        for key in sorted(node):
            value = node[key]
            path = f"{prefix}.{key}" if prefix else key
            if isinstance(value, dict):
                emit(value, path)
            else:
                lines.append(f"{path} = {' '.join(value)}")

    emit(raw, "")
    return _config.load("\n".join(lines), overrides=overrides)


def cmd_sweep(cfg, quiet=False):
    axes, explicit = _sweep_axes(cfg)
    rows_params = [
        (K, nu, alpha, dim)
        for K in axes["K"]
        for nu in axes["nu"]
        for alpha in axes["alpha"]
        for dim in axes["dim"]
    ]
    if not rows_params:
        raise ConfigError("sweep grid is empty")

    def work(params):
        return _sweep_row(cfg, cfg.raw, cfg.seed, *params, explicit)

    workers = min(len(rows_params), os.cpu_count() or 1, 8)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(work, rows_params))

    header = ["K", "nu", "alpha", "dim", "fitted_slope", "sup_scaled_residual",
              "final_dist_qstar", "rate_verdict", "boundedness", "vp_pass",
              "error"]
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join("" if row[c] is None else str(row[c])
                              for c in header))
    _atomic_write_all(cfg.output_dir, {"sweep.csv": "\n".join(lines) + "\n"})
    if not quiet:
        failures = sum(1 for r in rows if r["error"])
        print(f"wrote sweep.csv with {len(rows)} rows "
              f"({failures} row errors) to {cfg.output_dir}")
    return 0


def cmd_check(cfg, quiet=False):
    payload = _conditions_payload(cfg)
    sys.stdout.write(_dump_json(payload))
    return 0


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="viscflow",
        description="anchored fixed-point flow laboratory",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (
        ("run", "integrate and analyze one configured system"),
        ("compare", "flow versus discrete recurrence, plus the unit-step bridge"),
        ("sweep", "parameter grid over K, nu, alpha, dim"),
        ("check", "print schedule condition report as JSON"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="config file path")
        p.add_argument("--out", help="output directory (overrides run.output_dir)")
        p.add_argument("--seed", type=int, help="root seed (overrides run.seed)")
        p.add_argument("--t-end", type=float, dest="t_end",
                       help="horizon (overrides solver.t_end)")
        p.add_argument("--quiet", action="store_true", help="suppress chatter")
        if name == "compare":
            p.add_argument("--steps", type=int,
                           help="number of discrete steps (default: t_end)")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    overrides = {}
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.t_end is not None:
        overrides["t_end"] = args.t_end
    try:
        cfg = _config.load_file(args.config, overrides=overrides)
        if args.command == "run":
            return cmd_run(cfg, quiet=args.quiet)
        if args.command == "compare":
            return cmd_compare(cfg, steps=args.steps, quiet=args.quiet)
        if args.command == "sweep":
            return cmd_sweep(cfg, quiet=args.quiet)
        return cmd_check(cfg, quiet=args.quiet)
    except _USER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
