"""Batch front door: subcommands, flat config files, artifact emission.

Subcommands
    solve          stationary Newton continuation; writes solution.npz,
                   solve_report.json and mode_norms.csv
    evolve         IMEX march to t_final; writes trajectory.csv and
                   evolve_summary.json with the fitted decay rate
    verify         bound certifications; writes a JSON report and a CSV
                   grid per bound
    sweep-epsilon  stationary solves over an epsilon grid; writes
                   epsilon_sweep.csv with norm-versus-epsilon columns

Configuration is a flat key=value text file (hash comments allowed).
Command-line flags override file values; the DOIEDWARDS_OUTPUT_DIR
environment variable overrides the file's output_dir but yields to an
explicit --output-dir flag.  Exit codes: 0 success, 1 usage or
configuration error, 2 numerical non-convergence (partial results are
still written).
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import diagnostics, evolution, modal, stationary
from .sphere import KappaTensor, build_grid

OUTPUT_DIR_ENV = "DOIEDWARDS_OUTPUT_DIR"

CONFIG_DEFAULTS = {
    "kappa": "0 0 0 0 0 0 0 0 0",
    "epsilon": "0.0",
    "n_modes": "32",
    "sphere_degree": "8",
    "epsilon_step": "0.0125",
    "newton_tol": "1e-10",
    "max_newton_iters": "25",
    "linear_solver": "iterative",
    "dt": "0.005",
    "t_final": "3.0",
    "scheme": "imex-cn",
    "snapshot_stride": "10",
    "s_samples": "65",
    "initial_data": "zero",
    "initial_path": "",
    "store_snapshots": "false",
    "output_dir": ".",
    "seed": "0",
}

CONFIG_HELP = {
    "kappa": "nine reals, row-major; projected onto its traceless part",
    "epsilon": "coupling strength (continuation target)",
    "n_modes": "number of sine modes N",
    "sphere_degree": "spherical-harmonic truncation degree L",
    "epsilon_step": "nominal continuation step",
    "newton_tol": "Newton residual tolerance (max per-mode L1)",
    "max_newton_iters": "Newton iteration cap per continuation step",
    "linear_solver": "dense-direct or iterative",
    "dt": "time step",
    "t_final": "march horizon",
    "scheme": "imex-euler or imex-cn",
    "snapshot_stride": "record diagnostics every this many steps",
    "s_samples": "s-grid resolution for probability checks",
    "initial_data": "zero, modal-file or randomized-admissible",
    "initial_path": "container for initial_data = modal-file",
    "store_snapshots": "true to keep modal states at snapshots",
    "output_dir": "artifact directory",
    "seed": "generator seed for randomized initial data",
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _cast_kappa(text):
    parts = text.replace(",", " ").split()
    if len(parts) != 9:
        raise ValueError("needs 9 reals, got %d" % len(parts))
    return KappaTensor(np.array([float(p) for p in parts]).reshape(3, 3))


def _cast_bool(text):
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError("expected true or false, got %r" % text)


_CASTS = {
    "kappa": _cast_kappa,
    "epsilon": float,
    "n_modes": int,
    "sphere_degree": int,
    "epsilon_step": float,
    "newton_tol": float,
    "max_newton_iters": int,
    "linear_solver": str,
    "dt": float,
    "t_final": float,
    "scheme": str,
    "snapshot_stride": int,
    "s_samples": int,
    "initial_data": str,
    "initial_path": str,
    "store_snapshots": _cast_bool,
    "output_dir": str,
    "seed": int,
}


@dataclass
class RunConfig:
    """Validated run parameters with the two solver sub-configs built."""

    kappa: KappaTensor
    epsilon: float
    n_modes: int
    sphere_degree: int
    solver: stationary.StationarySolverConfig
    evolution: evolution.EvolutionConfig
    output_dir: str
    seed: int


def parse_config_file(path):
    """Read a flat key=value file into a string-valued dict."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as err:
        raise ConfigError("config file %r: %s" % (path, err)) from err
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(
                "config file %r line %d: expected key=value" % (path, lineno)
            )
        if key not in CONFIG_DEFAULTS:
            raise ConfigError(
                "config file %r line %d: unknown key %r" % (path, lineno, key)
            )
        values[key] = value.strip()
    return values


def build_run_config(values):
    """Cast and validate the merged key=value map."""
    cast = {}
    for key, caster in _CASTS.items():
        try:
            cast[key] = caster(values[key])
        except ValueError as err:
            raise ConfigError("key %r: %s" % (key, err)) from err
    solver = stationary.StationarySolverConfig(
        n_modes=cast["n_modes"],
        sphere_degree=cast["sphere_degree"],
        epsilon_target=cast["epsilon"],
        epsilon_step=cast["epsilon_step"],
        newton_tol=cast["newton_tol"],
        max_newton_iters=cast["max_newton_iters"],
        linear_solver=cast["linear_solver"],
    )
    evo = evolution.EvolutionConfig(
        n_modes=cast["n_modes"],
        sphere_degree=cast["sphere_degree"],
        dt=cast["dt"],
        t_final=cast["t_final"],
        scheme=cast["scheme"],
        snapshot_stride=cast["snapshot_stride"],
        s_samples=cast["s_samples"],
        initial_data=cast["initial_data"],
        initial_path=cast["initial_path"] or None,
        seed=cast["seed"],
        store_snapshots=cast["store_snapshots"],
    )
    try:
        solver.validate()
        evo.validate()
    except ValueError as err:
        raise ConfigError(str(err)) from err
    return RunConfig(
        kappa=cast["kappa"],
        epsilon=cast["epsilon"],
        n_modes=cast["n_modes"],
        sphere_degree=cast["sphere_degree"],
        solver=solver,
        evolution=evo,
        output_dir=cast["output_dir"],
        seed=cast["seed"],
    )


def load_run_config(args):
    """Merge defaults, config file, environment and flags, then build."""
    values = dict(CONFIG_DEFAULTS)
    if getattr(args, "config", None):
        values.update(parse_config_file(args.config))
    env_dir = os.environ.get(OUTPUT_DIR_ENV)
    if env_dir:
        values["output_dir"] = env_dir
    for key in CONFIG_DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    return build_run_config(values)


def _write_json(path, payload):
    with open(path, "w") as fh:
        fh.write(json.dumps(payload, indent=2, sort_keys=True))
        fh.write("\n")


def _write_solution(out_dir, g, kappa, report, extra=None):
    modal.save_modal(os.path.join(out_dir, "solution.npz"), g, kappa)
    payload = report.to_dict()
    if extra:
        payload.update(extra)
    _write_json(os.path.join(out_dir, "solve_report.json"), payload)
    norms = g.mode_l1_norms()
    with open(os.path.join(out_dir, "mode_norms.csv"), "w") as fh:
        fh.write("n,l1_norm,n3_l1\n")
        for n, v in enumerate(norms, 1):
            fh.write("%d,%.17e,%.17e\n" % (n, v, n**3 * v))


def cmd_solve(config):
    """Stationary continuation to epsilon; 0 converged, 2 stalled."""
    os.makedirs(config.output_dir, exist_ok=True)
    grid = build_grid(config.sphere_degree)
    try:
        g, report = stationary.newton_continuation(config.kappa, config.solver, grid=grid)
    except stationary.NoConvergence as err:
        _write_solution(
            config.output_dir,
            err.best,
            config.kappa,
            err.report,
            extra={"epsilon_failed": err.epsilon_failed},
        )
        print(
            "no convergence: %s; partial branch saved in %s"
            % (err, config.output_dir)
        )
        return 2
    _write_solution(config.output_dir, g, config.kappa, report)
    print(
        "converged at eps=%.6g (mass error %.3e, min F %.3e); wrote %s"
        % (
            report.epsilon_final,
            report.mass_error,
            report.min_F,
            os.path.join(config.output_dir, "solution.npz"),
        )
    )
    return 0


def _load_reference(config, grid, path):
    ref, ref_kappa = modal.load_modal(path, grid=grid)
    if ref.grid.degree != config.sphere_degree:
        raise ConfigError(
            "key 'reference': container degree %d does not match sphere_degree %d"
            % (ref.grid.degree, config.sphere_degree)
        )
    if ref.n_modes != config.n_modes:
        raise ConfigError(
            "key 'reference': container has %d modes, run wants %d"
            % (ref.n_modes, config.n_modes)
        )
    if not np.allclose(ref_kappa.entries, config.kappa.entries, atol=1e-12):
        raise ConfigError("key 'reference': container kappa differs from run kappa")
    return ref


def _write_trajectory(out_dir, traj, summary):
    traj.to_csv(os.path.join(out_dir, "trajectory.csv"))
    _write_json(os.path.join(out_dir, "evolve_summary.json"), summary)


def cmd_evolve(config, reference_path=None, require_ref=False):
    """Time march with auto-loaded or computed stationary reference."""
    os.makedirs(config.output_dir, exist_ok=True)
    grid = build_grid(config.sphere_degree)
    if reference_path:
        ref = _load_reference(config, grid, reference_path)
    elif require_ref:
        raise ConfigError("key 'reference': --require-ref set but no reference given")
    else:
        try:
            ref, _ = stationary.newton_continuation(
                config.kappa, config.solver, grid=grid
            )
        except stationary.NoConvergence as err:
            print("stationary reference did not converge: %s" % err)
            return 2

    summary = {
        "epsilon": config.epsilon,
        "scheme": config.evolution.scheme,
        "dt": config.evolution.dt,
        "t_final": config.evolution.t_final,
        "seed": config.seed,
    }
    try:
        traj = evolution.evolve(
            config.evolution, config.epsilon, config.kappa,
            stationary_ref=ref, grid=grid,
        )
    except evolution.StepRejected as err:
        summary["rejected_at_t"] = err.t
        summary["decay_rate"] = None
        if err.trajectory is not None:
            _write_trajectory(config.output_dir, err.trajectory, summary)
        print("step rejected at t=%.6g; partial trajectory saved" % err.t)
        return 2

    try:
        rate, amplitude, fit_residual = evolution.fit_decay(
            traj, t_min=0.5 * config.evolution.t_final
        )
        summary.update(
            decay_rate=rate, decay_amplitude=amplitude, fit_residual=fit_residual
        )
    except evolution.InsufficientData:
        summary.update(decay_rate=None, decay_amplitude=None, fit_residual=None)

    cols = traj.as_arrays()
    summary["final"] = {
        "t": float(cols["t"][-1]),
        "mass_error": float(cols["mass_error"][-1]),
        "min_F": float(cols["min_F"][-1]),
        "xi": float(cols["xi"][-1]),
        "dist_sup_L1": float(cols["dist_sup_L1"][-1]),
    }
    _write_trajectory(config.output_dir, traj, summary)
    if summary["decay_rate"] is None:
        print("decay fit: insufficient data; wrote %s" % config.output_dir)
    else:
        print(
            "fitted decay rate %.6g (amplitude %.3e); wrote %s"
            % (rate, amplitude, os.path.join(config.output_dir, "trajectory.csv"))
        )
    return 0


def _verify_mode_coupling(config, grid):
    g, _ = stationary.newton_continuation(config.kappa, config.solver, grid=grid)
    evo = replace(config.evolution, store_snapshots=True, initial_data="zero")
    traj = evolution.evolve(evo, config.epsilon, config.kappa, stationary_ref=g, grid=grid)
    return diagnostics.verify_mode_coupling_bounds(traj, config.kappa, g)


VERIFY_BOUNDS = {
    "resolvent": ("resolvent", lambda cfg, grid: diagnostics.verify_resolvent_bound(
        cfg.kappa, n_max=20, grid=grid)),
    "b-decay": ("b_decay", lambda cfg, grid: diagnostics.verify_b_bound(
        cfg.kappa, N=32, trials=20, grid=grid)),
    "cos": ("cos_projection", lambda cfg, grid: diagnostics.verify_cos_bound(
        N_max=32, trials=20, grid=grid)),
    "brt": ("brt", lambda cfg, grid: diagnostics.verify_brt_bound(grid=grid)),
    "mode-coupling": ("mode_coupling", _verify_mode_coupling),
}


def cmd_verify(config, which):
    """Run one bound certification or all; 0 iff every verdict is true."""
    if which != "all" and which not in VERIFY_BOUNDS:
        print(
            "unknown bound name %r; choices: %s, all"
            % (which, ", ".join(sorted(VERIFY_BOUNDS))),
            file=sys.stderr,
        )
        return 1
    os.makedirs(config.output_dir, exist_ok=True)
    grid = build_grid(config.sphere_degree)
    names = sorted(VERIFY_BOUNDS) if which == "all" else [which]
    all_true = True
    for name in names:
        stem, runner = VERIFY_BOUNDS[name]
        try:
            report = runner(config, grid)
        except (stationary.NoConvergence, evolution.StepRejected) as err:
            print("%s: prerequisite solve failed: %s" % (name, err))
            return 2
        report.to_json(os.path.join(config.output_dir, stem + ".json"))
        report.to_csv(os.path.join(config.output_dir, stem + ".csv"))
        all_true = all_true and report.verdict
        print(
            "%-14s verdict %-5s slope %+.3f max %.4g"
            % (name, report.verdict, report.slope, report.max_normalized)
        )
    return 0 if all_true else 1


def _parse_epsilon_grid(text, fallback_target):
    if text:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ConfigError("key 'epsilon_grid': expected start:stop:count")
            try:
                start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
            except ValueError as err:
                raise ConfigError("key 'epsilon_grid': %s" % err) from err
            if count < 1:
                raise ConfigError("key 'epsilon_grid': count must be >= 1")
            return np.linspace(start, stop, count)
        try:
            return np.array([float(p) for p in text.replace(",", " ").split()])
        except ValueError as err:
            raise ConfigError("key 'epsilon_grid': %s" % err) from err
    if fallback_target == 0.0:
        raise ConfigError(
            "key 'epsilon_grid': give --epsilon-grid or a nonzero epsilon"
        )
    return np.linspace(0.0, fallback_target, 6)


def cmd_sweep(config, grid_text):
    """Solve over an epsilon grid and tabulate norm-versus-epsilon."""
    eps_grid = _parse_epsilon_grid(grid_text, config.epsilon)
    os.makedirs(config.output_dir, exist_ok=True)
    grid = build_grid(config.sphere_degree)
    cache = stationary.OperatorCache(grid, config.kappa)
    rows = []
    status = 0
    for eps in eps_grid:
        scfg = replace(config.solver, epsilon_target=float(eps))
        try:
            g, report = stationary.newton_continuation(
                config.kappa, scfg, grid=grid, cache=cache
            )
        except stationary.NoConvergence as err:
            print("sweep stopped: %s" % err)
            status = 2
            break
        rows.append(
            (
                float(eps),
                modal.xr_norm(g, config.kappa, 1.0),
                g.max_mode_l1(),
                report.mass_error,
                report.min_F,
            )
        )
    path = os.path.join(config.output_dir, "epsilon_sweep.csv")
    with open(path, "w") as fh:
        fh.write("epsilon,x1_norm,max_mode_l1,mass_error,min_F\n")
        for row in rows:
            fh.write("%.17e,%.17e,%.17e,%.17e,%.17e\n" % row)
    print("wrote %s (%d points)" % (path, len(rows)))
    return status


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit 1, not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, "%s: error: %s\n" % (self.prog, message))


def _common_flags():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="FILE", help="flat key=value config file")
    for key in CONFIG_DEFAULTS:
        common.add_argument(
            "--" + key.replace("_", "-"),
            dest=key,
            metavar="V",
            help="%s (default %s)" % (CONFIG_HELP[key], CONFIG_DEFAULTS[key] or "''"),
        )
    return common


def build_parser():
    common = _common_flags()
    parser = _Parser(
        prog="doiedwards",
        description="Stationary and time-dependent solves of the tube model "
        "configurational equation, with bound certification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="stationary Newton continuation")
    p_evolve = sub.add_parser("evolve", parents=[common], help="IMEX time march")
    p_evolve.add_argument(
        "--reference", metavar="NPZ", help="stationary reference container"
    )
    p_evolve.add_argument(
        "--require-ref",
        action="store_true",
        help="fail instead of computing the reference when none is given",
    )
    p_verify = sub.add_parser("verify", parents=[common], help="bound certification")
    p_verify.add_argument(
        "which",
        nargs="?",
        default="all",
        help="bound name (%s) or all" % ", ".join(sorted(VERIFY_BOUNDS)),
    )
    p_sweep = sub.add_parser(
        "sweep-epsilon", parents=[common], help="stationary solves over an eps grid"
    )
    p_sweep.add_argument(
        "--epsilon-grid",
        dest="epsilon_grid",
        metavar="SPEC",
        help="start:stop:count or a comma list of epsilon values",
    )
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_run_config(args)
        if args.command == "solve":
            return cmd_solve(config)
        if args.command == "evolve":
            return cmd_evolve(
                config,
                reference_path=args.reference,
                require_ref=args.require_ref,
            )
        if args.command == "verify":
            return cmd_verify(config, args.which)
        return cmd_sweep(config, args.epsilon_grid)
    except ConfigError as err:
        print("config error: %s" % err, file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
