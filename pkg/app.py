"""Command-line entry point for the LGL collocation toolkit."""

import argparse
import sqlite3
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from benchmarks.metrics import REPORT_FIELDS
from benchmarks.pipeline import solve_problem
from benchmarks.problems import get_problem
from benchmarks.reference import ReferenceSolveError
from benchmarks.studies import (
    comparison_target, error_report, mesh_sweep, run_error_study, run_tau_extra_study,
    single_interval_sweep,
)
from collocation.costate import adjoint_residual, control_stationarity, hamiltonian
from collocation.lgl_basis import lgl_rule
from collocation.matrices import build_operators, verify_identities
from collocation.transcription import Mesh
from db.db_manager import ResultStore
from utils.artifacts import ArtifactWriter
from utils.config import DB_PATH
from utils.hashing import hash_config
from utils.logger import RunLogger
from utils.platform_utils import display_path, resolve_output_dir
from utils.run_config import ConfigError, RunConfig, load_config_file, merge_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

IDENTITY_TOLERANCE = 1e-11
MATRIX_NAMES = ('A', 'E', 'alpha', 'A_dag', 'D_dag', 'D_ddag', 'B', 'D_ext')


class SolverFailure(RuntimeError):
    """A solve finished without converging."""


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per run type."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='flat key = value settings file')
    common.add_argument('--out', dest='output_dir', help='output directory')
    common.add_argument('--db', help='result store path')
    common.add_argument('--seed', type=int, help='seed for random Jacobian probes')
    common.add_argument('--workers', type=int, help='sweep worker threads')
    common.add_argument('--log-file', help='also write the log to this file')
    common.add_argument('-v', '--verbose', action='store_true', help='show per-iteration solver output')

    mesh = argparse.ArgumentParser(add_help=False)
    mesh.add_argument('--n', dest='n_points', type=int, help='points per interval')
    mesh.add_argument('--k', dest='intervals', type=int, help='uniform mesh intervals')
    mesh.add_argument('--boundaries', help='explicit mesh points on [-1, 1], comma separated')
    mesh.add_argument('--points', help='points per interval for --boundaries, comma separated')

    solver = argparse.ArgumentParser(add_help=False)
    solver.add_argument('--form', '--method', dest='form',
                        help='integral, derivative-like, second-integral or classic')
    solver.add_argument('--tol', type=float, help='KKT tolerance')
    solver.add_argument('--max-iter', dest='max_iter', type=int, help='Newton iteration cap')
    solver.add_argument('--tau-extra', dest='tau_extra', type=float, help='second-integral extra point')

    parser = argparse.ArgumentParser(prog='lgli', description='LGL integral-form collocation for optimal control')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('rule', parents=[common], help='print LGL nodes and weights')
    p.add_argument('--n', dest='n_points', type=int, help='number of points')

    p = sub.add_parser('matrices', parents=[common], help='write the operator family')
    p.add_argument('--n', dest='n_points', type=int, help='number of points')
    p.add_argument('--tau-extra', dest='tau_extra', type=float, help='extra point for B')
    p.add_argument('--check', action='store_true', help='verify the operator identities')

    for name, text in (('solve', 'solve one problem'), ('costate', 'solve and extract costates')):
        p = sub.add_parser(name, parents=[common, mesh, solver], help=text)
        p.add_argument('--problem', help='ex1 or ex2')
        p.add_argument('--filter', dest='filtered', action='store_true', default=None,
                       help='filter classic-form costates')

    p = sub.add_parser('benchmark', parents=[common, mesh, solver], help='error report for one configuration')
    p.add_argument('problem', nargs='?', help='ex1 or ex2')
    p.add_argument('--filter', dest='filtered', action='store_true', default=None,
                   help='filter classic-form costates')

    p = sub.add_parser('convergence', parents=[common, mesh, solver], help='N or mesh sweep with order fits')
    p.add_argument('--problem', help='ex1 or ex2')
    p.add_argument('--n-values', dest='n_values', help='single-interval N sweep, comma separated')
    p.add_argument('--k-values', dest='k_values', help='uniform mesh K sweep, comma separated')
    p.add_argument('--filter', dest='filtered', action='store_true', default=None,
                   help='filter classic-form costates')

    p = sub.add_parser('tau-extra-study', parents=[common, solver], help='second-integral tau_extra grid')
    p.add_argument('--n', dest='n_points', type=int, help='number of points')
    p.add_argument('--tau-values', dest='tau_values', help='tau_extra grid, comma separated')
    return parser


_LIST_OPTIONS = {'boundaries': float, 'points': int, 'n_values': int, 'k_values': int, 'tau_values': float}
_CONFIG_OPTIONS = (
    'problem', 'form', 'intervals', 'n_points', 'boundaries', 'points', 'n_values', 'k_values',
    'tau_values', 'tol', 'max_iter', 'tau_extra', 'filtered', 'output_dir', 'seed', 'workers',
)


def _overrides(args: argparse.Namespace) -> Dict:
    values = {}
    for key in _CONFIG_OPTIONS:
        value = getattr(args, key, None)
        if value is None:
            continue
        if key in _LIST_OPTIONS and isinstance(value, str):
            try:
                value = [_LIST_OPTIONS[key](item) for item in value.replace(',', ' ').split()]
            except ValueError as e:
                raise ConfigError(f"Invalid --{key.replace('_', '-')}: {e}")
        values[key] = value
    return values


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then command-line flags."""
    file_values = load_config_file(args.config) if args.config else {}
    return merge_config(file_values, _overrides(args))


def build_mesh(config: RunConfig) -> Mesh:
    if config.boundaries is not None:
        return Mesh(tuple(config.boundaries), config.interval_points())
    return Mesh.uniform(config.intervals, config.n_points)


def _solution_rows(outcome) -> List[List]:
    traj = outcome.trajectory
    rows = []
    for iv, t, X, U, F in zip(outcome.nlp.intervals, traj.times, traj.states, traj.controls, traj.dynamics):
        for j in range(iv.rule.n):
            rows.append([t[j], iv.index, j, iv.rule.nodes[j], *X[j], *U[j], *F[j]])
    return rows


def _solution_header(n_x: int, n_u: int) -> List[str]:
    return (['t', 'interval', 'node', 'tau']
            + [f'x{i}' for i in range(n_x)] + [f'u{i}' for i in range(n_u)]
            + [f'f{i}' for i in range(n_x)])


def _solve_summary(outcome) -> Dict:
    solution, nlp = outcome.solution, outcome.nlp
    summary = {
        'problem': outcome.benchmark.name,
        'form': nlp.form,
        'intervals': nlp.mesh.intervals,
        'points_per_interval': list(nlp.mesh.points_per_interval),
        'tau_extra': nlp.tau_extra,
        'status': solution.status,
        'iterations': solution.iterations,
        'objective': solution.objective,
        'kkt_residual': solution.kkt_residual,
        'stationarity': solution.stationarity,
        'feasibility': solution.feasibility,
        'n_vars': nlp.n_vars,
        'n_cons': nlp.n_cons,
        'jacobian_nnz': nlp.jacobian_nnz(),
        'dynamics_block_nnz': nlp.dynamics_block_nnz(),
    }
    if outcome.extension is not None:
        summary['extra_state'] = outcome.extension.value
    return summary


def cmd_rule(config: RunConfig, writer: ArtifactWriter, logger: RunLogger, **_) -> int:
    rule = lgl_rule(config.n_points)
    for node, weight in zip(rule.nodes, rule.weights):
        print(f"{node:.17g} {weight:.17g}")
    writer.write_csv(
        f'rule_N{rule.n}.csv', ['index', 'node', 'weight', 'barycentric_weight'],
        ([i, rule.nodes[i], rule.weights[i], rule.barycentric_weights[i]] for i in range(rule.n)),
    )
    return EXIT_OK


def cmd_matrices(config: RunConfig, writer: ArtifactWriter, logger: RunLogger, args, **_) -> int:
    ops = build_operators(lgl_rule(config.n_points), config.tau_extra)
    rows = []
    for name in MATRIX_NAMES:
        matrix = np.atleast_2d(getattr(ops, name))
        for (i, j), value in np.ndenumerate(matrix):
            rows.append([name, i, j, value])
    writer.write_csv(f'matrices_N{ops.n}.csv', ['matrix', 'row', 'col', 'value'], rows)
    if not args.check:
        return EXIT_OK

    residuals = verify_identities(ops)
    failed = sorted(name for name, value in residuals.items() if not value <= IDENTITY_TOLERANCE)
    writer.write_json('identities.json', {
        'n_points': ops.n,
        'tau_extra': ops.tau_extra,
        'tolerance': IDENTITY_TOLERANCE,
        'residuals': residuals,
        'failed': failed,
    })
    if failed:
        logger.error(f"Identity check failed for N={ops.n}: {', '.join(failed)}")
        return EXIT_SOLVER
    logger.info(f"All {len(residuals)} identities hold for N={ops.n}")
    return EXIT_OK


def _mesh_stem(config: RunConfig, mesh: Mesh) -> str:
    """Output stem: `single` for one interval, `k{K}` for K intervals."""
    label = 'single' if mesh.intervals == 1 else f'k{mesh.intervals}'
    return f'{config.problem}_{config.form}_{label}'


def _solve(config: RunConfig, logger: RunLogger):
    benchmark = get_problem(config.problem, seed=config.seed)
    outcome = solve_problem(benchmark, config.form, build_mesh(config), tol=config.tol,
                            max_iter=config.max_iter, tau_extra=config.tau_extra,
                            filtered=config.filtered, logger=logger)
    return benchmark, outcome


def cmd_solve(config: RunConfig, writer: ArtifactWriter, logger: RunLogger, **_) -> int:
    benchmark, outcome = _solve(config, logger)
    stem = _mesh_stem(config, outcome.nlp.mesh)
    writer.write_csv(f'{stem}.csv', _solution_header(benchmark.ocp.n_x, benchmark.ocp.n_u),
                     _solution_rows(outcome))
    writer.write_json(f'{stem}.json', _solve_summary(outcome))
    if not outcome.converged:
        raise SolverFailure(f"Solve did not converge: {outcome.solution.status}")
    return EXIT_OK


def cmd_costate(config: RunConfig, writer: ArtifactWriter, logger: RunLogger, **_) -> int:
    benchmark, outcome = _solve(config, logger)
    nlp, primal = outcome.nlp, outcome.solution.primal
    n_x, n_u = benchmark.ocp.n_x, benchmark.ocp.n_u
    traj = outcome.trajectory

    rows = []
    for k, iv in enumerate(nlp.intervals):
        lam = outcome.node_costate[k]
        raw = outcome.costate.Lambda[k]
        stat = control_stationarity(raw, nlp, primal, interval=k)
        ham = hamiltonian(raw, nlp, primal, interval=k)
        for j in range(iv.rule.n):
            rows.append([traj.times[k][j], k, j, *lam[j], *stat[j], ham[j]])
    header = (['t', 'interval', 'node'] + [f'lambda{i}' for i in range(n_x)]
              + [f'dH_du{i}' for i in range(n_u)] + ['hamiltonian'])
    stem = f'{config.problem}_{config.form}_costate'
    writer.write_csv(f'{stem}.csv', header, rows)

    if outcome.mesh_costate is not None:
        writer.write_csv(
            f'{config.problem}_{config.form}_mesh-costate.csv',
            ['t'] + [f'p{i}' for i in range(n_x)],
            ([t, *p] for t, p in zip(traj.mesh_times, outcome.mesh_costate)),
        )

    estimate = outcome.costate
    summary = _solve_summary(outcome)
    summary.update({
        'mu': estimate.mu,
        'nu': estimate.nu,
        'terminal_target': estimate.terminal_target,
        'initial_gap': estimate.initial_gap,
        'terminal_gap': estimate.terminal_gap,
        'mesh_costate_message': outcome.costate_message,
    })
    if len(nlp.intervals) == 1:
        residual = adjoint_residual(estimate.Lambda[0], estimate.mu, nlp, primal, estimate.terminal_target)
        summary['adjoint_residual_integral'] = float(np.max(np.abs(residual.integral)))
        summary['adjoint_residual_derivative'] = float(np.max(np.abs(residual.derivative)))
    writer.write_json(f'{stem}.json', summary)
    if not outcome.converged:
        raise SolverFailure(f"Solve did not converge: {outcome.solution.status}")
    return EXIT_OK


def cmd_benchmark(config: RunConfig, writer: ArtifactWriter, logger: RunLogger,
                  store: ResultStore, **_) -> int:
    benchmark, outcome = _solve(config, logger)
    report = error_report(outcome, comparison_target(benchmark, store=store, logger=logger))
    stem = _mesh_stem(config, outcome.nlp.mesh)
    writer.write_dict_rows(f'{stem}.csv', REPORT_FIELDS, [report.to_row()])
    writer.write_json(f'{stem}.json', {'report': report.to_row(), 'filtered': config.filtered})
    logger.info(
        f"{config.problem}/{config.form}: e_state={report.e_state} e_control={report.e_control} "
        f"e_costate={report.e_costate}"
    )
    if not report.ok:
        raise SolverFailure(f"Benchmark solve failed: {report.message}")
    return EXIT_OK


def cmd_convergence(config: RunConfig, writer: ArtifactWriter, logger: RunLogger,
                    store: ResultStore, **_) -> int:
    if config.k_values:
        meshes, sweep = mesh_sweep(config.k_values, config.n_points), 'k-sweep'
    elif config.n_values:
        meshes, sweep = single_interval_sweep(config.n_values), 'n-sweep'
    else:
        raise ConfigError("convergence needs --n-values or --k-values")

    def progress(current, total):
        logger.info(f"Sweep progress: {current}/{total}")

    result = run_error_study(config.problem, config.form, meshes, tol=config.tol,
                             max_iter=config.max_iter, tau_extra=config.tau_extra,
                             filtered=config.filtered, workers=config.workers,
                             store=store, logger=logger, progress_callback=progress)
    stem = f'{config.problem}_{config.form}_{sweep}'
    writer.write_dict_rows(f'{stem}.csv', REPORT_FIELDS, [r.to_row() for r in result.reports])
    writer.write_json(f'{stem}.json', {
        'problem': config.problem,
        'form': config.form,
        'sweep': sweep,
        'observed_order': result.orders or None,
        'points': len(result.reports),
        'failed': [i for i, r in enumerate(result.reports) if not r.ok],
    })
    if not any(r.ok for r in result.reports):
        raise SolverFailure("Every sweep point failed")
    return EXIT_OK


def cmd_tau_extra_study(config: RunConfig, writer: ArtifactWriter, logger: RunLogger, **_) -> int:
    study = run_tau_extra_study(config.n_points, config.tau_values, problem=config.problem,
                                tol=config.tol, max_iter=config.max_iter,
                                workers=config.workers, logger=logger)
    n_x = get_problem(config.problem, validate=False).ocp.n_x
    header = (['tau_extra', 'status', 'node_delta', 'rmse_second', 'rmse_lgli']
              + [f'extra_x{i}' for i in range(n_x)] + ['message'])
    rows = []
    for row in study.rows:
        extra = list(row.extra_state) if row.extra_state is not None else [None] * n_x
        rows.append([row.tau_extra, row.status, row.node_delta, row.rmse_second, row.rmse_lgli,
                     *extra, row.message])
    stem = f'{config.problem}_second-integral_tau-extra'
    writer.write_csv(f'{stem}.csv', header, rows)
    writer.write_json(f'{stem}.json', {
        'n_points': study.n_points,
        'baseline_objective': study.baseline_objective,
        'max_node_delta': study.max_node_delta,
        'rmse_ratio': study.rmse_ratio,
        'solved': len(study.solved),
        'points': len(study.rows),
    })
    return EXIT_OK


COMMANDS = {
    'rule': cmd_rule,
    'matrices': cmd_matrices,
    'solve': cmd_solve,
    'costate': cmd_costate,
    'benchmark': cmd_benchmark,
    'convergence': cmd_convergence,
    'tau-extra-study': cmd_tau_extra_study,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Run a subcommand.

    Returns:
        0 on success, 2 on usage or configuration errors, 3 on solver failure
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_CONFIG

    with RunLogger(log_to_file=bool(args.log_file),
                   log_file=Path(args.log_file) if args.log_file else None,
                   verbose=args.verbose) as logger:
        return _run(args, logger)


def _run(args, logger: RunLogger) -> int:
    try:
        config = resolve_config(args)
    except (ConfigError, FileNotFoundError, ValueError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG

    settings = config.as_dict()
    settings['command'] = args.command
    output_dir = None
    store, run_id, writer = None, None, None

    status, code = 'completed', EXIT_OK
    try:
        output_dir = resolve_output_dir(config.output_dir)
        store = ResultStore(Path(args.db) if args.db else DB_PATH)
        run_id = store.create_run(args.command, hash_config(settings), str(output_dir))
        writer = ArtifactWriter(output_dir)
        code = COMMANDS[args.command](config=config, writer=writer, logger=logger,
                                      store=store, args=args)
        if code != EXIT_OK:
            status = 'failed'
    except (ConfigError, ValueError) as e:
        logger.error(f"Configuration error: {e}")
        status, code = 'config_error', EXIT_CONFIG
    except (OSError, sqlite3.Error) as e:
        logger.error(f"Cannot use output directory or result store: {e}")
        status, code = 'config_error', EXIT_CONFIG
    except (SolverFailure, ReferenceSolveError, RuntimeError) as e:
        logger.error(str(e))
        status, code = 'solver_failure', EXIT_SOLVER
    finally:
        if writer is not None and writer.files:
            writer.write_manifest(args.command, settings, {'exit_code': code})
        if store is not None:
            if run_id is not None:
                store.finish_run(run_id, status)
            store.close()

    if output_dir is not None:
        logger.info(f"{args.command} finished ({status}); artifacts in {display_path(output_dir)}")
    return code


if __name__ == "__main__":
    sys.exit(main())
