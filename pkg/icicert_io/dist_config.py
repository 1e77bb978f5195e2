import configparser
import logging
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Literal

from config import default_seed, epsilon, violation_deltas
from config import grid_points as default_grid_points
from config import grid_span as default_grid_span
from config import n_samples as default_n_samples
from config import workers as default_workers
from icicert_core import tail_dist
from icicert_core.errors import ConfigError, DistributionError
from icicert_core.tail_dist import Distribution

Command = Literal['certify', 'transform', 'moments', 'counterexample', 'mc-ici']

CONDITIONS = ('lemma', 'v1', 'v2', 'cases', 'all')
OPERATIONS = ('legendre', 'infconv', 'geninv')
NORMS = ('l1', 'l2', 'linf')
BUILTIN = ('exponential', 'rademacher', 'gaussian', 'dyadic', 'power:<c>:<r>', 'finite_support:<a>')

logger = logging.getLogger(f"{__name__}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(';', ',').split(',') if v.strip())


def builtin_distribution(name: str) -> Distribution:
    """
    Distribution from a builtin name: exponential, rademacher, gaussian (N(t) = t^2), dyadic, power:c:r or
    finite_support:a.
    :param name: Builtin name
    :return: Distribution
    """
    kind, *args = name.strip().lower().split(':')
    try:
        values = [float(a) for a in args]
    except ValueError:
        raise DistributionError(f'Non-numeric parameter in {name!r}')
    if kind == 'exponential' and not values:
        return tail_dist.exponential()
    if kind == 'rademacher' and not values:
        return tail_dist.rademacher()
    if kind == 'gaussian' and not values:
        return tail_dist.power(1.0, 2.0)
    if kind == 'dyadic' and not values:
        return tail_dist.dyadic()
    if kind == 'power' and len(values) == 2:
        return tail_dist.power(*values)
    if kind == 'finite_support' and len(values) == 1:
        return tail_dist.finite_support(values[0])
    raise DistributionError(f'Unknown distribution {name!r}; builtin names are {", ".join(BUILTIN)}')


def _distribution_section(section: configparser.SectionProxy, path: str) -> Distribution:
    kind = section.get('kind', '').strip().lower()
    if kind == 'piecewise_linear':
        endpoint = section.get('endpoint')
        d = tail_dist.piecewise_linear(_floats(section.get('breakpoints', '')), _floats(section.get('values', '')),
                                       float(endpoint) if endpoint else None)
    elif kind == 'power':
        d = tail_dist.power(section.getfloat('c', 1.0), section.getfloat('r', 1.0))
    elif kind == 'finite_support':
        d = tail_dist.finite_support(section.getfloat('a', 1.0))
    elif kind:
        d = builtin_distribution(kind)
    else:
        raise DistributionError(f'{path}: [distribution] needs a kind')
    name = section.get('name')
    return Distribution(d.tail, name) if name else d


def read_distribution_file(path: str) -> tuple[Distribution, dict]:
    """
    Reads a distribution spec with sections [distribution], [regularization], [grid] and [run].
    :param path: Path to the spec file
    :return: (Distribution, overrides of RunConfig fields found in the other sections)
    """
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding='utf-8') as file:
            parser.read_file(file)
    except (OSError, configparser.Error) as e:
        raise ConfigError([f'dist: cannot read {path}: {e}'])
    if not parser.has_section('distribution'):
        raise ConfigError([f'dist: {path} has no [distribution] section'])
    try:
        d = _distribution_section(parser['distribution'], path)
    except (ValueError, DistributionError) as e:
        raise ConfigError([f'dist: {e}'])
    overrides = {}
    keys = {'regularization': {'eps': ('eps', float)},
            'grid': {'span': ('grid_span', float), 'points': ('grid_points', int)},
            'run': {'seed': ('seed', int), 'workers': ('workers', int), 'samples': ('n_samples', int)}}
    problems = []
    for section, fields in keys.items():
        if not parser.has_section(section):
            continue
        for key, value in parser[section].items():
            if key not in fields:
                problems.append(f'{section}.{key}: unknown key')
                continue
            target, cast = fields[key]
            try:
                overrides[target] = cast(value)
            except ValueError:
                problems.append(f'{section}.{key}: {value!r} is not a {cast.__name__}')
    if problems:
        raise ConfigError(problems)
    return d, overrides


def resolve_distribution(spec: str) -> tuple[Distribution, dict]:
    """Builtin name or path to a spec file."""
    if os.path.isfile(spec):
        return read_distribution_file(spec)
    return builtin_distribution(spec), {}


@dataclass
class RunConfig:
    """
    Fully resolved run configuration, echoed into every report.

    Attributes:
        command (str): Subcommand
        dist (str): Builtin distribution name or path to a spec file
        condition (str): Certificate(s) of certify
        b (float): Constant of condition v1
        grid_span (float): Half-width of the exponential-level grid
        grid_points (int): Size of the certification grids
        eps (float): Regularization parameter
        sensitivity (bool): Rerun certify for several eps
        seed (int): Run seed
        workers (int): Pool size
        n_samples (int): Monte Carlo samples per block
        n (int): Dimension
        norm (str): Norm of moments and mc-ici
        p_list (tuple): Moment orders
        scan_m (tuple): Inclusive m range of the contradiction scan
        ktilde (float): Constant of the weak moment bound, measured when None
        violation_c (tuple): Cost scales of the violation search
        deltas (tuple): Plateau offsets of the violation search
        fn (str): Grid CSV of transform
        fn2 (str): Second grid CSV of transform infconv
        op (str): Operation of transform
        level (float): Level of transform geninv
        n_functions (int): Random test functions of mc-ici
        beta (float): Cost scaling of mc-ici, the assembled constant when None
        out (str): Export directory
    """
    command: Command
    dist: str | None = None
    condition: str = 'all'
    b: float = 1.0
    grid_span: float = default_grid_span
    grid_points: int = default_grid_points
    eps: float = epsilon
    sensitivity: bool = False
    seed: int = default_seed
    workers: int = default_workers
    n_samples: int = default_n_samples
    n: int = 1
    norm: str = 'linf'
    p_list: tuple[float, ...] = (2.0, 4.0, 8.0, 16.0)
    scan_m: tuple[int, int] = (10, 20)
    ktilde: float | None = None
    violation_c: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4)
    deltas: tuple[float, ...] = violation_deltas
    fn: str | None = None
    fn2: str | None = None
    op: str = 'legendre'
    level: float | None = None
    n_functions: int = 20
    beta: float | None = None
    out: str | None = None
    problems: list[str] = field(default_factory=list, repr=False, compare=False)

    def validate(self) -> 'RunConfig':
        """
        Collects every offending field and raises them together.
        :return: self
        """
        problems = list(self.problems)
        needs_dist = self.command in ('certify', 'moments', 'mc-ici')
        if needs_dist and not self.dist:
            problems.append('dist: required')
        if self.condition not in CONDITIONS:
            problems.append(f'condition: {self.condition!r} not in {CONDITIONS}')
        if not self.b > 0:
            problems.append('b: must be positive')
        if self.grid_span is None or not self.grid_span > 0 or not math.isfinite(self.grid_span):
            problems.append('grid_span: must be a positive number')
        if self.grid_points < 3:
            problems.append('grid_points: must be at least 3')
        if not 0 < self.eps < 1:
            problems.append('eps: must lie in (0, 1)')
        if self.seed < 0:
            problems.append('seed: must be non-negative')
        if self.workers < 1:
            problems.append('workers: must be at least 1')
        if self.n_samples < 2:
            problems.append('n_samples: must be at least 2')
        if self.n < 1:
            problems.append('n: must be at least 1')
        if self.norm not in NORMS:
            problems.append(f'norm: {self.norm!r} not in {NORMS}')
        if not self.p_list or min(self.p_list) < 2:
            problems.append('p_list: orders must be at least 2')
        lo, hi = self.scan_m
        if lo < 3 or hi < lo:
            problems.append('scan_m: need 3 <= lo <= hi')
        if self.ktilde is not None and not self.ktilde > 0:
            problems.append('ktilde: must be positive')
        if not self.violation_c or min(self.violation_c) <= 0:
            problems.append('violation_c: scales must be positive')
        if self.command == 'transform':
            if self.op not in OPERATIONS:
                problems.append(f'op: {self.op!r} not in {OPERATIONS}')
            if not self.fn:
                problems.append('fn: required')
            if self.op == 'infconv' and not self.fn2:
                problems.append('fn2: required by infconv')
            if self.op == 'geninv' and self.level is None:
                problems.append('level: required by geninv')
        if self.n_functions < 1:
            problems.append('n_functions: must be at least 1')
        if self.beta is not None and not self.beta > 0:
            problems.append('beta: must be positive')
        if problems:
            raise ConfigError(problems)
        return self

    def to_dict(self) -> dict:
        """Echo of the settings that determine the results; the pool size and the report directory never do."""
        echo = asdict(self)
        for key in ('problems', 'workers', 'out'):
            echo.pop(key)
        return echo


def parse_range(text: str) -> tuple[int, int]:
    """'lo:hi' to an inclusive integer range."""
    lo, _, hi = text.partition(':')
    return int(lo), int(hi or lo)


def load_run_config(command: Command, flags: dict) -> tuple[RunConfig, Distribution | None]:
    """
    Merges spec-file sections and command-line flags (flags win) into a validated RunConfig.
    :param command: Subcommand
    :param flags: Flags that were given, by RunConfig field name
    :return: (RunConfig, resolved Distribution or None)
    """
    problems = []
    d, overrides = None, {}
    if flags.get('dist'):
        try:
            d, overrides = resolve_distribution(flags['dist'])
        except ConfigError as e:
            problems += e.problems
        except (ValueError, DistributionError) as e:
            problems.append(f'dist: {e}')
    values = {**overrides, **{k: v for k, v in flags.items() if v is not None}}
    known = {f for f in RunConfig.__dataclass_fields__ if f != 'problems'}
    problems += [f'{k}: unknown setting' for k in values if k not in known]
    config = RunConfig(command, **{k: v for k, v in values.items() if k in known and k != 'command'},
                       problems=problems)
    config.validate()
    logger.info(f'Resolved configuration for {command}: {config.to_dict()}')
    return config, d
