"""Command-line entry point.

Every subcommand reads one resolved configuration (preset, then config
file, then flags), writes a manifest before computing, writes its CSVs and
rewrites the manifest atomically when done.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from pathlib import Path as FsPath

import numpy as np
from scipy import special

from . import __version__
from . import config as cfgmod
from .action import (
    gap_report,
    hj_residual,
    quadratic_quasi_potential,
    quasi_potential,
)
from .dynamics import DynamicsKind, simulate
from .dynkin import ou_mean_exit_time
from .errors import ConfigError, NumericalError
from .exit_mc import exit_trials, set_threads, summarize
from .experiments import (
    REGRESSOR_LABELS,
    discretization_study,
    proxy_reference,
    run_sweep,
)
from .landscape import covariance_eigenvalues, validate_domain
from .rng import RngStream
from .svgplot import line_plot

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4
MANIFEST = "manifest.json"

COMMANDS = {
    "simulate": "record one trajectory",
    "exit-time": "Monte Carlo mean exit time",
    "quasipot": "quasi-potential by minimum-action paths",
    "sweep": "alpha / eta / batch / beta sweep",
    "proxy-ref": "alpha sweep of the isotropic proxy system",
    "discretization": "discrete vs continuous exit-time error over eta",
    "hjcheck": "Hamilton-Jacobi residual of a candidate quasi-potential",
    "validate-domain": "check inward drift and attraction on the domain",
}


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class Outputs:
    """Collects the files a run writes, in write order."""

    def __init__(self, directory: FsPath):
        self.dir = directory
        self.files: list[str] = []

    def csv(self, name: str, header, rows):
        path = self.dir / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(v) for v in row])
        self.files.append(name)

    def text(self, name: str, content: str):
        (self.dir / name).write_text(content)
        self.files.append(name)


def _theta_cols(d: int):
    return [f"theta_{i}" for i in range(d)]


def _initial(cfg, landscape):
    init = cfg["dynamics"]["initial"]
    return landscape.minimizer.copy() if init is None else np.array(init, dtype=np.float64)


def cmd_simulate(cfg, out: Outputs):
    landscape = cfgmod.build_landscape(cfg)
    dyn = cfgmod.build_dynamics(cfg)
    n = cfg["dynamics"]["horizon_steps"]
    stream = RngStream(cfg["trials"]["seed"], 0)
    path = simulate(_initial(cfg, landscape), dyn, landscape, n, stream)
    rows = ([k, k * dyn.dt, *path.points[k]] for k in range(n + 1))
    out.csv("trajectory.csv", ["step", "time", *_theta_cols(landscape.dim)], rows)


def _oracle(cfg, landscape, domain, dyn, x0):
    # 1-D diffusions started inside have a closed-form mean exit time
    if landscape.dim != 1 or dyn.kind not in (DynamicsKind.PROXY, DynamicsKind.CONTINUOUS_SGD):
        return None
    if not domain.contains(x0):
        return None
    var = 1.0 if dyn.kind is DynamicsKind.PROXY else float(covariance_eigenvalues(landscape)[0])
    sigma = dyn.noise_amplitude * math.sqrt(var)
    lam = float(landscape.eigenvalues[0])
    return ou_mean_exit_time(lam, sigma, domain.radius, float(x0[0] - domain.center[0]))


def cmd_exit_time(cfg, out: Outputs):
    landscape = cfgmod.build_landscape(cfg)
    domain = cfgmod.build_domain(cfg, landscape)
    dyn = cfgmod.build_dynamics(cfg)
    t = cfg["trials"]
    if t["n_trials"] < 2:
        raise ConfigError("'n_trials' must be >= 2 for exit-time")
    x0 = _initial(cfg, landscape)
    trials = exit_trials(x0, dyn, landscape, domain, t["n_trials"], t["max_steps"], t["seed"])
    stats = summarize(trials)
    out.csv("exit_trials.csv", ["trial", "exited", "exit_step", "exit_time"],
            zip(range(trials.n_trials), trials.exited, trials.exit_step, trials.exit_time))
    out.csv("exit_stats.csv",
            ["mean_exit_time", "ci_halfwidth", "n_censored", "escape_efficiency", "n_trials",
             "log_mean_exit_time", "unreliable"],
            [[stats.mean_exit_time, stats.ci_halfwidth, stats.n_censored, stats.escape_efficiency,
              stats.n_trials, stats.log_mean_exit_time, stats.unreliable]])
    oracle = _oracle(cfg, landscape, domain, dyn, x0)
    if oracle is not None:
        diff = stats.mean_exit_time - oracle
        tol = max(stats.ci_halfwidth, 0.05 * oracle)
        ok = abs(diff) <= tol
        out.csv("oracle.csv", ["dynkin_mean_exit_time", "relative_error", "tolerance", "within_tolerance"],
                [[oracle, diff / oracle, tol, ok]])
        print(f"dynkin oracle {oracle!r}, monte carlo {stats.mean_exit_time!r} "
              f"+/- {stats.ci_halfwidth!r}, relative error {diff / oracle:+.4f}: "
              f"{'agree' if ok else 'DISAGREE'}")


def cmd_quasipot(cfg, out: Outputs):
    landscape = cfgmod.build_landscape(cfg)
    domain = cfgmod.build_domain(cfg, landscape)
    a = cfg["action"]
    p = a["metric_exponent"]
    kw = dict(t_grid=a["t_grid"], n_segments=a["path_nodes"], settings=cfgmod.build_optimizer(cfg))
    proxy_primary = DynamicsKind(cfg["dynamics"]["dynamics"]) in (DynamicsKind.PROXY,
                                                                 DynamicsKind.GRADIENT_FLOW)
    full = quasi_potential(landscape, domain, metric_exponent=p, **kw)
    prox = quasi_potential(landscape, domain, proxy=True, **kw)
    primary = prox if proxy_primary else full
    gap = gap_report(landscape, full.value, prox.value, p)
    out.csv("action.csv", ["T", "boundary_index", "action", "converged"],
            ([r.horizon, r.boundary_index, r.action, r.converged] for r in primary.rows))
    pts = primary.path.points
    out.csv("path.csv", ["node", "time", *_theta_cols(landscape.dim)],
            ([k, k * primary.path.h, *pts[k]] for k in range(pts.shape[0])))
    out.csv("quasipot.csv",
            ["v0", "proxy_v0", "gap", "bound_factor", "kappa", "metric_exponent", "horizon",
             "converged", "cross_check_ok"],
            [[full.value, prox.value, gap.gap, gap.bound_factor, gap.kappa, p, primary.horizon,
              full.converged and prox.converged, full.cross_check_ok and prox.cross_check_ok]])


def _sweep_outputs(res, out: Outputs, emit_plots: bool, extra_header=(), extra_row=()):
    out.csv("sweep.csv", ["swept_value", "regressor", "mean_exit_time", "ci_halfwidth", "n_censored"],
            ([p.swept_value, p.regressor, p.stats.mean_exit_time, p.stats.ci_halfwidth,
              p.stats.n_censored] for p in res.points))
    out.csv("summary.csv",
            ["slope", "intercept", "pearson_r", "slope_stderr", "radius", "flagged", *extra_header],
            [[res.slope, res.intercept, res.pearson_r, res.slope_stderr, res.radius, res.flagged,
              *extra_row]])
    for flag in res.flags:
        print(f"flag: {flag}", file=sys.stderr)
    if emit_plots:
        label = REGRESSOR_LABELS[res.swept]
        svg = line_plot([p.regressor for p in res.points], [p.stats.mean_exit_time for p in res.points],
                        yerr=[p.stats.ci_halfwidth for p in res.points], logy=True,
                        xlabel=label, ylabel="mean exit time",
                        title=f"{res.swept.value} sweep")
        out.text(f"sweep_{res.swept.value}.svg", svg)


def cmd_sweep(cfg, out: Outputs):
    res = run_sweep(cfgmod.build_sweep_spec(cfg))
    _sweep_outputs(res, out, cfg["run"]["emit_plots"])
    print(f"{res.swept.value} sweep: pearson_r {res.pearson_r!r}, slope {res.slope!r} "
          f"+/- {res.slope_stderr!r}")


def cmd_proxy_ref(cfg, out: Outputs):
    ref = proxy_reference(cfgmod.build_sweep_spec(cfg))
    _sweep_outputs(ref.sweep, out, cfg["run"]["emit_plots"], ("cis_overlap", "slope_zero"),
                   (ref.cis_overlap, ref.slope_zero))


def cmd_discretization(cfg, out: Outputs):
    d = cfg["discretization"]
    res = discretization_study(cfgmod.build_run_spec(cfg), d["eta_grid"], d["ref_factor"], d["epsilon"])
    out.csv("discretization.csv",
            ["eta", "batch", "discrete_mean_exit_time", "discrete_ci_halfwidth",
             "continuous_mean_exit_time", "continuous_ci_halfwidth", "error", "combined_ci", "dropped"],
            ([p.eta, p.batch, p.discrete.mean_exit_time, p.discrete.ci_halfwidth,
              p.continuous.mean_exit_time, p.continuous.ci_halfwidth, p.error, p.combined_ci,
              p.dropped] for p in res.points))
    out.csv("summary.csv", ["slope", "intercept", "epsilon", "flagged"],
            [[res.slope, res.intercept, res.epsilon, res.flagged]])
    if cfg["run"]["emit_plots"]:
        kept = [p for p in res.points if p.error != 0.0]
        if kept:
            svg = line_plot([p.eta for p in kept], [abs(p.error) for p in kept], logx=True, logy=True,
                            xlabel="eta", ylabel="|E[nu] - E[tau]|", title="discretization error")
            out.text("discretization.svg", svg)


def sample_ball(center, radius: float, n: int, seed: int) -> np.ndarray:
    """``n`` deterministic points uniform in the ball, from stream ``(seed, 0)``."""
    d = center.shape[0]
    z = RngStream(seed, 0).normals(0, n * (d + 1)).reshape(n, d + 1)
    dirs = z[:, :d] / np.linalg.norm(z[:, :d], axis=1, keepdims=True)
    u = special.ndtr(z[:, d])
    return center + radius * (u ** (1.0 / d))[:, None] * dirs


def cmd_hjcheck(cfg, out: Outputs):
    landscape = cfgmod.build_landscape(cfg)
    domain = cfgmod.build_domain(cfg, landscape)
    p = cfg["action"]["metric_exponent"]
    field = cfg["hjcheck"]["field"]
    n = cfg["hjcheck"]["n_points"]
    pts = sample_ball(domain.center, domain.radius, n, cfg["trials"]["seed"])
    lam = float(landscape.eigenvalues[-1])
    rows = []
    worst = worst_rel = 0.0
    for i, theta in enumerate(pts):
        if field == "analytic":
            _, g = quadratic_quasi_potential(landscape, theta, p)
        elif field == "zero":
            g = np.zeros(landscape.dim)
        else:
            g = landscape.effective_hessian @ (theta - landscape.minimizer)
        res = hj_residual(g, landscape, theta, p)
        scale = lam * float(np.sum((theta - landscape.minimizer) ** 2))
        worst = max(worst, abs(res))
        if scale > 0:
            worst_rel = max(worst_rel, abs(res) / scale)
        rows.append([i, *theta, res, scale])
    out.csv("residuals.csv", ["point", *_theta_cols(landscape.dim), "residual", "scale"], rows)
    out.csv("hjcheck.csv", ["field", "n_points", "max_abs_residual", "max_scaled_residual"],
            [[field, n, worst, worst_rel]])


def cmd_validate_domain(cfg, out: Outputs):
    landscape = cfgmod.build_landscape(cfg)
    domain = cfgmod.build_domain(cfg, landscape)
    rep = validate_domain(landscape, domain, cfg["validate"]["n_samples"])
    out.csv("validation.csv",
            ["n_samples", "inward_drift", "attracted", "min_inward_margin", "max_flow_steps",
             "step_budget", "passed"],
            [[rep.n_samples, rep.inward_drift, rep.attracted, rep.min_inward_margin,
              rep.max_flow_steps, rep.step_budget, rep.passed]])
    if not rep.passed:
        print("domain validation failed", file=sys.stderr)


HANDLERS = {
    "simulate": cmd_simulate,
    "exit-time": cmd_exit_time,
    "quasipot": cmd_quasipot,
    "sweep": cmd_sweep,
    "proxy-ref": cmd_proxy_ref,
    "discretization": cmd_discretization,
    "hjcheck": cmd_hjcheck,
    "validate-domain": cmd_validate_domain,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI run configuration")
    common.add_argument("--seed", type=int, metavar="U64", help="master seed (overrides [trials] seed)")
    common.add_argument("--output-dir", metavar="PATH", help="directory for CSVs and the manifest")
    common.add_argument("--threads", type=int, metavar="N", help="cap on worker threads")
    common.add_argument("--preset", metavar="NAME", help=f"built-in config: {', '.join(cfgmod.PRESETS)}")
    common.add_argument("--from-manifest", metavar="PATH", help="re-run the config recorded in a manifest")
    common.add_argument("--emit-plots", action="store_true", default=None, help="also write SVG plots")
    parser = argparse.ArgumentParser(prog="sgdescape", description="Escape of SGD from quadratic minima.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, text in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return parser


def load_config(args) -> dict:
    cfg = cfgmod.defaults()
    if args.from_manifest:
        if args.preset or args.config:
            raise ConfigError("--from-manifest cannot be combined with --preset or --config")
        try:
            manifest = json.loads(FsPath(args.from_manifest).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"manifest is not valid JSON: {exc}") from None
        if manifest.get("command") != args.command:
            raise ConfigError(f"manifest records command '{manifest.get('command')}', not '{args.command}'")
        cfg = cfgmod.merge_dict(cfg, manifest.get("config", {}))
    if args.preset:
        cfg = cfgmod.merge_ini(cfg, cfgmod.preset(args.preset), f"preset {args.preset}")
    if args.config:
        cfg = cfgmod.merge_ini(cfg, FsPath(args.config).read_text(), args.config)
    if args.seed is not None:
        cfg = cfgmod.merge_dict(cfg, {"trials": {"seed": args.seed}})
    if args.output_dir is not None:
        cfg["run"]["output_dir"] = args.output_dir
    if args.emit_plots:
        cfg["run"]["emit_plots"] = True
    return cfgmod.resolve(cfg)


def _write_json_atomic(path: FsPath, obj):
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)


def _fail(code: int, message: str) -> int:
    print(f"sgdescape: error: {message}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, str(exc))
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    if args.threads is not None:
        if args.threads < 1:
            return _fail(EXIT_CONFIG, "--threads must be >= 1")
        set_threads(args.threads)

    outdir = FsPath(cfg["run"]["output_dir"])
    manifest = {"tool": "sgdescape", "version": __version__, "command": args.command,
                "config": cfg, "status": "running", "outputs": []}
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        _write_json_atomic(outdir / MANIFEST, manifest)
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))

    out = Outputs(outdir)
    start = time.perf_counter()
    code, message = EXIT_OK, None
    try:
        HANDLERS[args.command](cfg, out)
    except (ConfigError, ValueError) as exc:
        code, message = EXIT_CONFIG, str(exc)
    except NumericalError as exc:
        code, message = EXIT_NUMERICAL, str(exc)
    except OSError as exc:
        code, message = EXIT_IO, str(exc)
    manifest.update(status="ok" if code == EXIT_OK else "failed", exit_code=code,
                    duration_seconds=time.perf_counter() - start, outputs=out.files)
    if message is not None:
        manifest["error"] = message
    try:
        _write_json_atomic(outdir / MANIFEST, manifest)
    except OSError as exc:
        return _fail(EXIT_IO, str(exc))
    if message is not None:
        return _fail(code, message)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
