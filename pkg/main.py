import argparse
import logging
import os
import sys

from colorama import Fore, Style

from config import debug_mode, export_path, log_file
from icicert_core import counterexample
from icicert_core.convex_fn import generalized_inverse, inf_convolution, legendre_transform, random_convex
from icicert_core.errors import IcicertError
from icicert_core.ici_engine import assemble_constants, certify, mc_ici_battery, sensitivity_report
from icicert_core.moment_compare import NormSpec, ProductVector, corollary_2_5_check, theorem_2_4_check
from icicert_core.tail_dist import Distribution
from icicert_io.dist_config import (BUILTIN, CONDITIONS, NORMS, OPERATIONS, RunConfig, load_run_config,
                                    parse_range)
from icicert_io.handler import IOHandler
from icicert_utils.utils import before_running, chunk_generator, setup_logging

FUNCTION_BLOCK = 30
MAX_CHECK_SAMPLES = 10 ** 5

logger = logging.getLogger(f"{__name__}")


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(',') if v.strip())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=int, help='Run seed')
    common.add_argument('--workers', type=int, help='Worker processes; results never depend on it')
    common.add_argument('--out', help=f'Report directory (default: {export_path}/<subcommand>)')

    parser = argparse.ArgumentParser(prog='icicert', description='Numerical certificates for the convex infimum '
                                                                 'convolution inequality with optimal cost')
    subparsers = parser.add_subparsers(dest='command', required=True)

    certify_parser = subparsers.add_parser('certify', parents=[common], help='Certify the transport conditions')
    certify_parser.add_argument('--dist', help=f'Builtin name ({", ".join(BUILTIN)}) or spec file')
    certify_parser.add_argument('--condition', choices=CONDITIONS)
    certify_parser.add_argument('--b', type=float, help='Constant of condition v1')
    certify_parser.add_argument('--grid-span', dest='grid_span', type=float)
    certify_parser.add_argument('--grid-points', dest='grid_points', type=int)
    certify_parser.add_argument('--eps', type=float, help='Regularization parameter')
    certify_parser.add_argument('--sensitivity', action='store_true', default=None,
                                help='Rerun for several regularization parameters')

    transform_parser = subparsers.add_parser('transform', parents=[common], help='Transform a grid function CSV')
    transform_parser.add_argument('--fn', help='Grid function CSV (columns x,value)')
    transform_parser.add_argument('--op', choices=OPERATIONS)
    transform_parser.add_argument('--fn2', help='Second grid function CSV for infconv')
    transform_parser.add_argument('--level', type=float, help='Level for geninv')

    moments_parser = subparsers.add_parser('moments', parents=[common], help='Compare weak and strong moments')
    moments_parser.add_argument('--dist')
    moments_parser.add_argument('--n', type=int, help='Dimension')
    moments_parser.add_argument('--norm', choices=NORMS)
    moments_parser.add_argument('--p', dest='p_list', type=_float_list, help='Comma separated orders')
    moments_parser.add_argument('--samples', dest='n_samples', type=int)

    counter_parser = subparsers.add_parser('counterexample', parents=[common], help='Dyadic tail counterexample')
    counter_parser.add_argument('--scan-m', dest='scan_m', type=parse_range, help='lo:hi')
    counter_parser.add_argument('--ktilde', type=float, help='Weak moment constant, measured when omitted')
    counter_parser.add_argument('--violation-c', dest='violation_c', type=_float_list, help='Comma separated scales')
    counter_parser.add_argument('--samples', dest='n_samples', type=int)

    ici_parser = subparsers.add_parser('mc-ici', parents=[common], help='Monte Carlo ICI battery')
    ici_parser.add_argument('--dist')
    ici_parser.add_argument('--n', type=int, help='Dimension of the separable test functions')
    ici_parser.add_argument('--beta', type=float, help='Cost scaling, the assembled constant when omitted')
    ici_parser.add_argument('--functions', dest='n_functions', type=int)
    ici_parser.add_argument('--samples', dest='n_samples', type=int)
    return parser


def run_certify(config: RunConfig, d: Distribution, io_handler: IOHandler) -> tuple[dict, list[str]]:
    reports, prepared, constants = certify(d, config.condition, config.b, config.grid_span, config.grid_points,
                                           config.eps, config.workers)
    io_handler.write_csv('certify.csv', [{'condition': r.condition, 'pass': r.passed, 'worst_margin': r.worst_margin,
                                          'worst_location': ' '.join(repr(v) for v in r.worst_location),
                                          'tolerance': r.tolerance} for r in reports])
    result = {'prepared': prepared.describe(), 'constants': constants.to_dict(),
              'certificates': [r.to_dict() for r in reports]}
    if config.sensitivity:
        rows = sensitivity_report(d, config.condition, span=config.grid_span, points=config.grid_points,
                                  workers=config.workers)
        io_handler.write_csv('sensitivity.csv', rows)
        result['sensitivity'] = rows
    failures = [f'{r.condition}: worst margin {r.worst_margin!r} at {list(r.worst_location)}'
                for r in reports if not r.passed]
    return result, failures


def run_transform(config: RunConfig, io_handler: IOHandler) -> tuple[dict, list[str]]:
    f = io_handler.read_grid_csv(config.fn)
    if config.op == 'legendre':
        g = legendre_transform(f)
        io_handler.write_grid_csv('transform.csv', g)
        return {'op': 'legendre', 'breakpoints': int(g.x.size)}, []
    if config.op == 'infconv':
        g = inf_convolution(f, io_handler.read_grid_csv(config.fn2), method='cross')
        io_handler.write_grid_csv('transform.csv', g)
        return {'op': 'infconv', 'breakpoints': int(g.x.size)}, []
    value = generalized_inverse(f, config.level)
    io_handler.write_csv('transform.csv', [{'level': config.level, 'value': value}])
    return {'op': 'geninv', 'level': config.level, 'value': value}, []


def run_moments(config: RunConfig, d: Distribution, io_handler: IOHandler) -> tuple[dict, list[str]]:
    v = ProductVector.iid(d, config.n)
    norm = NormSpec(config.norm)
    reports = [theorem_2_4_check(v, norm, p, config.n_samples, config.seed, config.workers) for p in config.p_list]
    rows = [{'check': 'regular', **r.to_row()} for r in reports]
    if d.tail.log_concave:
        log_concave = [corollary_2_5_check(v, norm, p, config.n_samples, config.seed, config.workers)
                       for p in config.p_list]
        rows += [{'check': 'log_concave', **r.to_row()} for r in log_concave]
        reports += log_concave
    io_handler.write_csv('moments.csv', rows)
    failures = [f'p = {r.p:g}, alpha = {r.alpha:.6g}: ratio C {r.ratio_c_lower:.6g}, ratio D {r.ratio_d_lower:.6g}'
                for r in reports if not r.passed]
    return {'vector': v.describe(), 'reports': [r.to_dict() for r in reports]}, failures


def run_counterexample(config: RunConfig, io_handler: IOHandler) -> tuple[dict, list[str]]:
    d = counterexample.example_distribution()
    failures = []
    regularity = counterexample.verify_3_regularity(d, 64.0)
    if not regularity.passed:
        failures.append(f'3-regularity: worst margin {regularity.worst_margin!r}')
    flat = counterexample.flat_tail_criterion(d, (1.0, 10.0, 100.0))
    failures += [f'flat tail: none found for h = {h:g}' for h, t in flat if t is None]
    bound = counterexample.quadratic_bound_scan(d)
    if not bound.report.passed:
        failures.append(f'quadratic bound: worst margin {bound.report.worst_margin!r}')

    measured = counterexample.measure_k_tilde(d)
    k_values = (config.ktilde,) if config.ktilde is not None else (measured, 2.0 * measured)
    lo, hi = config.scan_m
    scans = [counterexample.contradiction_scan(range(lo, hi + 1), k) for k in k_values]
    io_handler.write_csv('scan.csv', [row.to_row() for scan in scans for row in scan.rows])
    if scans[0].m_star is None:
        failures.append(f'contradiction scan: ratio below {scans[0].threshold:g} at m = {hi}')

    c_values = tuple(config.violation_c) + (1.0 / (2.0 * bound.a * bound.eps),)
    violations = counterexample.violation_search(c_values, d, config.deltas, workers=config.workers)
    io_handler.write_csv('violation.csv', [r.to_row() for r in violations])
    failures += [f'violation search: product {r.product!r} at c = {r.c:g}' for r in violations if not r.violated]

    maxima = []
    for n in (10, 1000):
        lower, upper = counterexample.max_iid_bounds(d, n)
        estimate, half_width = counterexample.sample_max_mean(d, n, min(config.n_samples, MAX_CHECK_SAMPLES),
                                                              config.seed, config.workers)
        inside = lower - half_width <= estimate <= upper + half_width
        maxima.append({'n': n, 'lower': lower, 'upper': upper, 'estimate': estimate, 'half_width': half_width,
                       'inside': inside})
        if not inside:
            failures.append(f'max of {n} copies: estimate {estimate!r} outside [{lower!r}, {upper!r}]')
    best = max(violations, key=lambda r: r.product)
    result = {'regularity': regularity.to_dict(), 'flat_tail': [{'h': h, 't': t} for h, t in flat],
              'quadratic_bound': bound.report.to_dict(), 'measured_k_tilde': measured,
              'scans': [s.to_dict() for s in scans], 'best_violation': best.to_row(), 'max_iid': maxima}
    return result, failures


def run_mc_ici(config: RunConfig, d: Distribution, io_handler: IOHandler) -> tuple[dict, list[str]]:
    beta = config.beta if config.beta is not None else assemble_constants().beta
    functions = []
    for k in range(config.n_functions):
        rng = chunk_generator(config.seed, FUNCTION_BLOCK, k)
        parts = tuple(random_convex(rng) for _ in range(config.n))
        functions.append(parts[0] if config.n == 1 else parts)
    estimates = mc_ici_battery([d] * config.n, beta, functions, config.n_samples, config.seed, config.workers)
    io_handler.write_csv('mc_ici.csv', [{'function': k, **e.to_dict()} for k, e in enumerate(estimates)])
    failures = [f'test function {k}: estimate {e.estimate!r} above 1 + 3 * {e.half_width!r}'
                for k, e in enumerate(estimates) if not e.within_bound]
    return {'beta': beta, 'estimates': [e.to_dict() for e in estimates]}, failures


def run(config: RunConfig, d: Distribution | None = None) -> int:
    """
    Runs one subcommand and writes <command>.json next to its CSV files.
    :param config: Validated RunConfig
    :param d: Resolved distribution of certify, moments and mc-ici
    :return: 0 when every certificate passed, 1 otherwise
    """
    io_handler = IOHandler(config.out or os.path.join(export_path, config.command))
    if config.command == 'certify':
        result, failures = run_certify(config, d, io_handler)
    elif config.command == 'transform':
        result, failures = run_transform(config, io_handler)
    elif config.command == 'moments':
        result, failures = run_moments(config, d, io_handler)
    elif config.command == 'counterexample':
        result, failures = run_counterexample(config, io_handler)
    else:
        result, failures = run_mc_ici(config, d, io_handler)
    report = {'command': config.command, 'config': config.to_dict(), 'constants': assemble_constants().to_dict(),
              'result': result, 'failures': failures, 'pass': not failures}
    path = io_handler.write_json(f'{config.command.replace("-", "_")}.json', report)
    for failure in failures:
        logger.warning(failure)
    status = 'passed' if not failures else f'FAILED ({len(failures)} failures)'
    print(f'[icicert] {config.command} {status}, report written to {path}')
    return 0 if not failures else 1


def initialize(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(log_file)
    before_running()
    flags = {k: v for k, v in vars(args).items() if k != 'command' and v is not None}
    if debug_mode:
        flags['workers'] = 1
    try:
        config, d = load_run_config(args.command, flags)
        return run(config, d)
    except IcicertError as e:
        logger.critical(str(e))
        print(Fore.RED + f'[icicert] ERROR: {e}' + Style.RESET_ALL)
        return 2


if __name__ == '__main__':
    sys.exit(initialize())
