#!/usr/bin/env python3
# PYTHON_ARGCOMPLETE_OK
"""Convergence, condition and robustness studies for the divergence-free Stokes
discretizations on structured meshes of the unit cube.

Every command writes its table as CSV; `verify` checks the structural properties
of both methods and exits non-zero when one fails.
"""

import argparse
import os
import signal
import sys

from pathlib import Path

import colorama
import pandas as pd

# Local imports
import config
import study
from util import *

if not is_windows():
    import argcomplete  # For automatic shell completions

# Colorama strips colour codes when stdout is not a TTY; GitLab CI renders them
# fine, so skip the initialization there.
if not os.getenv('GITLAB_CI', False):
    colorama.init()

# Flags that may also be given in the settings file, with their defaults.
SETTINGS_DEFAULTS = {
    'method': 'both',
    'levels': None,
    'alpha': config.DEFAULT_ALPHA,
    'alphas': config.DEFAULT_ALPHAS,
    'nu': config.DEFAULT_NU,
    'h_mode': config.DEFAULT_H_MODE,
    'add_divdiv': False,
    'seed': config.DEFAULT_SEED,
    'samples': config.DEFAULT_SAMPLES,
}

DEFAULT_OUTPUT = {
    'convergence': 'convergence.csv',
    'cond-study': 'condition.csv',
    'robustness': 'robustness.csv',
}


def build_parser():
    parser = argparse.ArgumentParser(
        description="""
Studies for the HDG and MCS Stokes discretizations.
Settings are read from stokes.yaml in the working directory (or --settings);
command line flags take precedence.
""",
        formatter_class=argparse.RawTextHelpFormatter,
    )

    # Global options
    global_parser = argparse.ArgumentParser(add_help=False)
    global_parser.add_argument(
        '--verbose',
        '-v',
        default=0,
        action='count',
        help='Verbose output; once for what\'s going on, twice for all intermediate output.',
    )
    global_parser.add_argument(
        '--no-bar',
        action='store_true',
        help='Do not show progress bars in non-interactive environments.',
    )
    global_parser.add_argument(
        '--settings', type=Path, help=f'YAML settings file. Default: ./{config.SETTINGS_FILE}.'
    )
    global_parser.add_argument('--nu', type=float, help=f'Viscosity. Default: {config.DEFAULT_NU:g}.')
    global_parser.add_argument(
        '--h-mode',
        dest='h_mode',
        choices=config.H_MODES,
        help='Mesh size in the stabilizations: the facet diameter, or the global maximum.',
    )
    global_parser.add_argument('--output', '-o', type=Path, help='CSV file to write.')

    method_parser = argparse.ArgumentParser(add_help=False)
    method_parser.add_argument(
        '--method', choices=config.METHODS, help='Discretization to run. Default: both.'
    )
    method_parser.add_argument(
        '--alpha', type=float, help=f'HDG stabilization parameter. Default: {config.DEFAULT_ALPHA:g}.'
    )
    method_parser.add_argument(
        '--levels', help='Comma separated cells per direction, e.g. 2,4,8.'
    )

    subparsers = parser.add_subparsers(title='actions', dest='action')
    subparsers.required = True

    convergence_parser = subparsers.add_parser(
        'convergence',
        parents=[global_parser, method_parser],
        help='Errors and convergence orders of the manufactured solution.',
    )
    convergence_parser.add_argument(
        '--add-divdiv',
        dest='add_divdiv',
        action='store_const',
        const=True,
        help='Add the consistent (nu/3)(div u, div v) term to the MCS system.',
    )
    convergence_parser.add_argument(
        '--fine',
        action='store_true',
        help=f'Also run n={config.FINE_LEVEL} on top of the default levels.',
    )

    cond_parser = subparsers.add_parser(
        'cond-study',
        parents=[global_parser],
        help='Condition numbers of the HDG and condensed MCS A blocks.',
    )
    cond_parser.add_argument('--levels', help='Comma separated cells per direction. Default: 2,4.')
    cond_parser.add_argument(
        '--alphas',
        help='Comma separated HDG stabilization parameters. Default: '
        + ','.join(f'{a:g}' for a in config.DEFAULT_ALPHAS)
        + '.',
    )

    subparsers.add_parser(
        'robustness',
        parents=[global_parser, method_parser],
        help='Solve with and without a gradient perturbation of the forcing.',
    )

    verify_parser = subparsers.add_parser(
        'verify',
        parents=[global_parser],
        help='Check the discrete Korn inequalities, norm equivalences and solver properties.',
    )
    verify_parser.add_argument('--alpha', type=float, help='HDG stabilization parameter.')
    verify_parser.add_argument(
        '--seed', type=int, help=f'Seed of the random samples. Default: {config.DEFAULT_SEED}.'
    )
    verify_parser.add_argument(
        '--samples',
        type=int,
        help=f'Random samples per level. Default: {config.DEFAULT_SAMPLES}.',
    )

    if not is_windows():
        argcomplete.autocomplete(parser)

    return parser


# Fill in flags that were not given from the settings file and the defaults.
def merge_settings(args):
    path = args.settings if args.settings is not None else Path(config.SETTINGS_FILE)
    if args.settings is not None and not path.is_file():
        fatal(f'Settings file {path} does not exist.')
    settings = read_yaml_settings(path)
    for key in settings:
        if key not in SETTINGS_DEFAULTS:
            warn(f'Unknown key {key} in {path}.')
    for key, default in SETTINGS_DEFAULTS.items():
        if getattr(args, key, None) is None:
            setattr(args, key, settings.get(key, default))


def validate_args(args):
    if args.action == 'cond-study':
        default_levels = config.DEFAULT_COND_LEVELS
    elif args.action == 'robustness':
        default_levels = config.DEFAULT_COND_LEVELS
    else:
        default_levels = list(config.DEFAULT_LEVELS)
        if getattr(args, 'fine', False):
            default_levels.append(config.FINE_LEVEL)
    args.levels = default_levels if args.levels is None else parse_int_list(args.levels)
    args.alphas = parse_float_list(args.alphas)

    if len(args.levels) == 0 or any(n < 1 for n in args.levels):
        fatal(f'Levels must be positive, got {args.levels}.')
    if any(a >= b for a, b in zip(args.levels, args.levels[1:])):
        fatal(f'Levels must be strictly increasing, got {args.levels}.')
    if len(args.alphas) == 0:
        fatal('Need at least one alpha.')
    for name, values in [('alpha', [args.alpha]), ('alphas', args.alphas), ('nu', [args.nu])]:
        if any(not float(v) > 0 for v in values):
            fatal(f'{name} must be positive.')
    if args.method not in config.METHODS:
        fatal(f'Unknown method {args.method}, expected one of {", ".join(config.METHODS)}.')
    if args.h_mode not in config.H_MODES:
        fatal(f'Unknown h_mode {args.h_mode}, expected one of {", ".join(config.H_MODES)}.')
    if int(args.samples) < 1:
        fatal('Need at least one sample.')
    args.alpha, args.nu = float(args.alpha), float(args.nu)
    args.seed, args.samples = int(args.seed), int(args.samples)
    args.add_divdiv = bool(args.add_divdiv)


def methods(args):
    return ['hdg', 'mcs'] if args.method == 'both' else [args.method]


def output_path(args, method=None):
    path = args.output if args.output is not None else Path(DEFAULT_OUTPUT[args.action])
    if method is not None and args.method == 'both':
        path = path.with_name(f'{path.stem}_{method}{path.suffix}')
    return path


def comments(args, method=None):
    lines = [
        f'mesh: structured Kuhn triangulation of the unit cube, Neumann face '
        f'{config.DEFAULT_NEUMANN_FACE}, Dirichlet elsewhere',
        f'nu={args.nu:g} h_mode={args.h_mode} levels={",".join(map(str, args.levels))}',
    ]
    if method == 'hdg':
        lines.append(f'method=hdg alpha={args.alpha:g}')
    elif method == 'mcs':
        lines.append(f'method=mcs add_divdiv={args.add_divdiv}')
    elif args.action == 'cond-study':
        lines.append('alphas=' + ','.join(f'{a:g}' for a in args.alphas) + ' mcs add_divdiv=True')
    return lines


def run_convergence(args):
    for method in methods(args):
        report = study.convergence_study(
            method,
            args.levels,
            alpha=args.alpha,
            nu=args.nu,
            h_mode=args.h_mode,
            add_divdiv=args.add_divdiv,
        )
        path = study.write_convergence_csv(report, output_path(args, method), comments(args, method))
        log(f'{method}: wrote {path}')


def run_cond_study(args):
    frame = study.condition_study(args.levels, args.alphas, nu=args.nu, h_mode=args.h_mode)
    path = study.write_condition_csv(frame, output_path(args), comments(args))
    log(f'wrote {path}')


def run_robustness(args):
    rows = []
    for n in args.levels:
        spaces = study.build_spaces(n, args.h_mode)
        for method in methods(args):
            report = study.pressure_robustness_experiment(
                method, spaces, nu=args.nu, alpha=args.alpha
            )
            message = (
                f'{method} n={n}: kinematic change {report.kinematic_change:.3e}, '
                f'pressure shift error {report.pressure_error:.3e}'
            )
            if report.passed:
                log(message)
            else:
                error(message)
            rows.append(
                {
                    'method': method,
                    'level': n,
                    'ntets': report.ntets,
                    'kinematic_change': report.kinematic_change,
                    'pressure_error': report.pressure_error,
                }
            )
    path = write_csv(output_path(args), pd.DataFrame(rows), comments(args))
    log(f'wrote {path}')


def run_verify(args):
    if not study.verify_suite(
        args.seed, args.samples, nu=args.nu, alpha=args.alpha, h_mode=args.h_mode
    ):
        error('verification failed')


ACTIONS = {
    'convergence': run_convergence,
    'cond-study': run_cond_study,
    'robustness': run_robustness,
    'verify': run_verify,
}


# Takes a Namespace object returned by argparse.parse_args().
def run_parsed_arguments(args):
    merge_settings(args)
    validate_args(args)
    config.args = args
    verbose(f'running {args.action} with {vars(args)}')

    ACTIONS[args.action](args)

    if config.n_error > 0:
        sys.exit(1)


# Takes command line arguments
def main():
    parser = build_parser()
    run_parsed_arguments(parser.parse_args())


if __name__ == '__main__':

    def interrupt_handler(sig, frame):
        fatal('Running interrupted')

    signal.signal(signal.SIGINT, interrupt_handler)
    main()


def test(args):
    config.RUNNING_TEST = True

    # Make sure to cd back to the original directory before returning.
    # Needed to stay in the same directory in tests.
    original_directory = Path().cwd()
    config.n_warn = 0
    config.n_error = 0
    try:
        parser = build_parser()
        run_parsed_arguments(parser.parse_args(args))
    finally:
        os.chdir(original_directory)
        ProgressBar.current_bar = None
