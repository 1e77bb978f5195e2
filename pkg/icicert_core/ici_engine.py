import logging
import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Literal, Sequence

import numpy as np

from config import (certificate_tolerance, chunk_size, confidence_z, debug_mode, epsilon, epsilon_sensitivity,
                    grid_points, grid_span, lemma_tolerance, quantile_ceiling)
from icicert_core.convex_fn import (GridFunction, from_callable, generalized_inverse, inf_convolution, inverse_levels,
                                    pointwise_max)
from icicert_core.errors import ConvexityError, DistributionError, ImproperFunctionError, PhiConstructionError
from icicert_core.tail_dist import (Distribution, regularize_linear, regularize_quadratic, scale_distribution)
from icicert_utils.utils import LogMoments, chunk_layout, ordered_map

Condition = Literal['lemma', 'v1', 'v2', 'cases', 'all']

# Scaling of the canonical form: E X^2 = BETA_1^-2.
BETA_1 = 2.0 * math.e
# Constant b of the transport condition.
B_CONDITION = 1.0
# Radius constant of the external theorem turning the transport condition into the ICI; taken as given.
RADIUS_CONSTANT = 210.0

ROW_BLOCK = 256

logger = logging.getLogger(f"{__name__}")


def quadratic_linear(x) -> np.ndarray:
    """x^2 on |x| < 1, 2|x| - 1 beyond."""
    a = np.abs(np.asarray(x, dtype=float))
    return np.where(a < 1.0, a * a, 2.0 * a - 1.0)


@dataclass(frozen=True)
class Constants:
    """
    Constants of the optimal-cost ICI and of the moment comparison, assembled from their definitions.

    Attributes:
        beta_1 (float): Canonical scaling 2e
        b (float): Constant of the transport condition
        phi_inverse_3 (float): phi^-1(2 + b^2)
        b_tilde (float): b / (210 phi^-1(2 + b^2))
        beta (float): 2 beta_1 / b_tilde
        moment_c (float): Constant of the central moment bound, 2 sqrt(2) beta_1
        moment_d (float): Constant of the strong moment bound, moment_c * beta
    """
    beta_1: float
    b: float
    phi_inverse_3: float
    b_tilde: float
    beta: float
    moment_c: float
    moment_d: float

    def to_dict(self) -> dict:
        return {'beta_1': self.beta_1, 'b': self.b, 'phi_inverse_3': self.phi_inverse_3, 'b_tilde': self.b_tilde,
                'beta': self.beta, 'C': self.moment_c, 'D': self.moment_d}


def assemble_constants(phi: GridFunction | None = None, b: float = B_CONDITION) -> Constants:
    """
    :param phi: Cost function; the quadratic-linear branch when None
    :param b: Constant of the transport condition
    :return: Constants
    """
    if phi is None:
        x = np.unique(np.concatenate([np.linspace(-1.0, 1.0, 201), [-4.0, -2.0, 2.0, 4.0]]))
        phi = from_callable(quadratic_linear, x, 'linear', 'linear')
    phi_inverse_3 = generalized_inverse(phi, 2.0 + b * b)
    b_tilde = b / (RADIUS_CONSTANT * phi_inverse_3)
    beta = 2.0 * BETA_1 / b_tilde
    moment_c = 2.0 * math.sqrt(2.0) * BETA_1
    return Constants(BETA_1, b, phi_inverse_3, b_tilde, beta, moment_c, moment_c * beta)


@dataclass
class CertificateReport:
    """
    Result of a grid certificate. The margin is RHS - LHS of the certified inequality.

    Attributes:
        condition (str): Certified condition
        worst_margin (float): Minimum margin over the grid
        worst_location (tuple): Grid point(s) where it is attained
        grid (dict): Grid description
        constants (dict): Constants used
        tolerance (float): Pass threshold
        details (dict): Per-part margins and auxiliary values
    """
    condition: str
    worst_margin: float
    worst_location: tuple[float, ...]
    grid: dict
    constants: dict
    tolerance: float = certificate_tolerance
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.worst_margin >= -self.tolerance)

    def to_dict(self) -> dict:
        return {'condition': self.condition, 'pass': self.passed, 'worst_margin': self.worst_margin,
                'worst_location': list(self.worst_location), 'grid': self.grid, 'constants': self.constants,
                'tolerance': self.tolerance, 'details': self.details}


def _worst(margin: np.ndarray, *coords: np.ndarray) -> tuple[float, tuple[float, ...]]:
    """Minimum margin (NaN counts as a failure) and its coordinates."""
    margin = np.asarray(margin, dtype=float)
    if margin.size == 0:
        return math.inf, ()
    m = np.where(np.isnan(margin), -np.inf, margin)
    k = int(np.argmin(m))
    return float(m.flat[k]), tuple(float(np.asarray(c).flat[k]) for c in coords)


def _margin(rhs: np.ndarray, lhs: np.ndarray) -> np.ndarray:
    """rhs - lhs with inf <= inf counted as satisfied."""
    with np.errstate(invalid='ignore'):
        return np.where(np.isinf(lhs) & np.isinf(rhs) & (lhs > 0) & (rhs > 0), np.inf, rhs - lhs)


def ceiling_level(ceiling: float = quantile_ceiling) -> float:
    """Exponential level -ln(2 ceiling) of the quantile 1 - ceiling."""
    return -math.log(2.0 * ceiling)


@dataclass(frozen=True)
class PreparedDistribution:
    """
    Distribution after the regularization and scaling steps.

    Attributes:
        original (Distribution): Input law
        regularized (Distribution): Law after the regularizations
        canonical (Distribution): Regularized law scaled to E X^2 = (2e)^-2
        scale (float): Canonical factor lambda
        eps (float): Regularization parameter
        regularizations (tuple): Applied regularizations, 'linear' and/or 'quadratic'
    """
    original: Distribution
    regularized: Distribution
    canonical: Distribution
    scale: float
    eps: float
    regularizations: tuple[str, ...]

    def describe(self) -> dict:
        return {'distribution': self.original.describe(), 'eps': self.eps, 'scale': self.scale,
                'regularizations': list(self.regularizations)}


def scale_to_canonical(d: Distribution) -> tuple[Distribution, float]:
    """
    Scales X to lambda X with E (lambda X)^2 = (2e)^-2 and checks N'(1/2) >= 2.
    :param d: Distribution with E X^2 > 0
    :return: (canonical Distribution, lambda)
    """
    lam = d.canonical_factor
    canonical = scale_distribution(d, lam)
    n_half = float(canonical.tail.N(0.5))
    if n_half < 2.0 - lemma_tolerance:
        raise DistributionError(f'{d.name}: canonical tail has N(1/2) = {n_half!r} < 2, scaling is broken')
    logger.info(f'{d.name}: canonical factor {lam:.12g}')
    return canonical, lam


def prepare_distribution(d: Distribution, eps: float = epsilon) -> PreparedDistribution:
    """
    Regularizes N to N v eps t when it is not strictly increasing and to N v eps^2 t^2 when the cumulant has a
    bounded domain, then scales to canonical form.
    :param d: Distribution
    :param eps: Regularization parameter
    :return: PreparedDistribution
    """
    tail = d.tail
    steps = []
    if not tail.strictly_increasing:
        tail = regularize_linear(tail, eps)
        steps.append('linear')
    if math.isfinite(tail.asymptotic_slope):
        tail = regularize_quadratic(tail, eps)
        steps.append('quadratic')
    regularized = Distribution(tail, d.name) if steps else d
    canonical, lam = scale_to_canonical(regularized)
    if debug_mode:
        logger.debug(f'{d.name}: regularizations {steps} with eps = {eps:g}')
    return PreparedDistribution(d, regularized, canonical, lam, eps, tuple(steps))


def build_phi(d: Distribution, span: float | None = None) -> GridFunction:
    """
    Optimal cost phi(x) = quadratic_linear(x) v Lambda*(x / (2 beta_1)) of a canonical law.
    :param d: Canonically scaled Distribution
    :param span: Half-width of the breakpoint grid (at least 4)
    :return: phi as GridFunction
    """
    span = max(4.0, float(span if span is not None else grid_span + 4.0))
    inner = np.linspace(-1.0, 1.0, grid_points)
    outer = np.geomspace(1.0, span, 257)
    x = np.unique(np.concatenate([inner, outer, -outer, [-2.0, 2.0]]))
    quadratic = from_callable(quadratic_linear, x, 'linear', 'linear')
    cramer = GridFunction(x, d.cramer_values(x / (2.0 * BETA_1)), 'linear', 'linear')
    excess = cramer(inner) - inner * inner
    if excess.max() > lemma_tolerance:
        k = int(np.argmax(excess))
        raise PhiConstructionError(f'{d.name}: Cramer branch exceeds x^2 by {excess[k]!r} at x = {inner[k]!r}; '
                                   f'the law is not canonically scaled or the transform is broken')
    phi = pointwise_max(quadratic, cramer)
    if debug_mode:
        logger.debug(f'{d.name}: phi on {phi.x.size} breakpoints, span {span:g}')
    return phi


def lemma_3_1_check(d: Distribution, points: int = grid_points) -> CertificateReport:
    """
    Lambda*(x / beta_1) <= x^2 on [-1, 1] and Lambda(t) >= ln cosh(t / beta_1) on a t-grid.
    :param d: Canonically scaled Distribution
    :param points: Grid size
    :return: CertificateReport
    """
    x = np.linspace(-1.0, 1.0, points)
    transform_margin = x * x - d.cramer_values(x / BETA_1)
    t_max = min(20.0, 0.999 * d.tail.asymptotic_slope)
    t = np.linspace(-t_max, t_max, points)
    log_cosh = np.logaddexp(t / BETA_1, -t / BETA_1) - math.log(2.0)
    engine_margin = d.cumulant_values(t) - log_cosh
    worst_x, at_x = _worst(transform_margin, x)
    worst_t, at_t = _worst(engine_margin, t)
    worst, location = (worst_x, at_x) if worst_x <= worst_t else (worst_t, at_t)
    return CertificateReport('lemma', worst, location, {'x': [-1.0, 1.0, points], 't': [-t_max, t_max, points]},
                             {'beta_1': BETA_1}, lemma_tolerance,
                             {'transform_margin': worst_x, 'transform_location': list(at_x),
                              'cumulant_margin': worst_t, 'cumulant_location': list(at_t)})


def transport_map(d: Distribution, x) -> np.ndarray:
    """U = F^-1 o F_nu for the symmetric exponential measure nu."""
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, d.tail.level_inverse(np.maximum(x, 0.0)), -d.tail.level_sup(np.maximum(-x, 0.0)))


def inverse_transport(d: Distribution, t) -> np.ndarray:
    """N(|t|) sgn t, the inverse of U on its range."""
    t = np.asarray(t, dtype=float)
    return np.sign(t) * d.tail.N(np.abs(t))


def x_grid(d: Distribution, span: float = grid_span, points: int = grid_points) -> np.ndarray:
    """
    Symmetric exponential-level grid with both sides of every jump level of U as mandatory points.
    :param d: Distribution
    :param span: Half-width
    :param points: Number of uniform points
    :return: Sorted grid
    """
    if span < ceiling_level():
        logger.warning(f'{d.name}: grid span {span:g} does not reach quantile 1 - {quantile_ceiling:g} '
                       f'(level {ceiling_level():.4g})')
    levels = d.tail.jump_levels(span)
    delta = 1e-9 * np.maximum(1.0, levels)
    mandatory = np.concatenate([levels, levels - delta, levels + delta])
    mandatory = mandatory[(mandatory >= 0) & (mandatory <= span)]
    return np.unique(np.concatenate([np.linspace(-span, span, points), mandatory, -mandatory]))


def _row_blocks(n: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + ROW_BLOCK, n)) for lo in range(0, n, ROW_BLOCK)]


def _cond_v1_rows(rows: tuple[int, int], x: np.ndarray, u: np.ndarray, phi: GridFunction,
                  b: float) -> tuple[float, int, int]:
    lo, hi = rows
    gap = np.abs(x[lo:hi, None] - x[None, :])
    lhs = np.abs(u[lo:hi, None] - u[None, :])
    rhs = inverse_levels(phi, (1.0 + gap).ravel()).reshape(gap.shape) / b
    margin = rhs - lhs
    k = int(np.argmin(margin))
    i, j = divmod(k, x.size)
    return float(margin.flat[k]), lo + i, j


def _cond_v2_rows(rows: tuple[int, int], t: np.ndarray, levels: np.ndarray,
                  phi: GridFunction) -> tuple[float, int, int]:
    lo, hi = rows
    gap = np.abs(t[lo:hi, None] - t[None, :])
    lhs = phi(gap.ravel()).reshape(gap.shape)
    rhs = 1.0 + np.abs(levels[lo:hi, None] - levels[None, :])
    margin = _margin(rhs, lhs)
    margin = np.where(np.isnan(margin), -np.inf, margin)
    k = int(np.argmin(margin))
    i, j = divmod(k, t.size)
    return float(margin.flat[k]), lo + i, j


def _reduce_rows(results: list[tuple[float, int, int]]) -> tuple[float, int, int]:
    """First minimum in row order."""
    best = results[0]
    for r in results[1:]:
        if r[0] < best[0]:
            best = r
    return best


def check_cond_v1(d: Distribution, phi: GridFunction, b: float = B_CONDITION, grid: np.ndarray | None = None,
                  workers: int = 1) -> CertificateReport:
    """
    |U(x) - U(y)| <= phi^-1(1 + |x - y|) / b over all pairs of an exponential-level grid.
    :param d: Canonically scaled Distribution
    :param phi: Cost built by build_phi
    :param b: Condition constant
    :param grid: x-grid; x_grid(d) when None
    :param workers: Pool size for the row blocks
    :return: CertificateReport
    """
    if not b > 0:
        raise ValueError('b must be positive')
    x = x_grid(d) if grid is None else np.asarray(grid, dtype=float)
    u = transport_map(d, x)
    results = ordered_map(partial(_cond_v1_rows, x=x, u=u, phi=phi, b=b), _row_blocks(x.size), workers,
                          desc='Condition v1')
    worst, i, j = _reduce_rows(results)
    if debug_mode:
        logger.debug(f'{d.name}: v1 worst margin {worst:.6g} at ({x[i]:.12g}, {x[j]:.12g})')
    return CertificateReport('v1', worst, (float(x[i]), float(x[j])),
                             {'kind': 'exponential levels', 'span': float(np.max(np.abs(x))), 'points': int(x.size)},
                             {'b': b, 'phi_inverse_3': generalized_inverse(phi, 3.0)},
                             details={'u_left': float(u[i]), 'u_right': float(u[j])})


def t_grid(d: Distribution, x: np.ndarray) -> np.ndarray:
    """Transported grid U(x) restricted to the range A of U, with 0 and the closed endpoints added."""
    a, closed = d.transport_range()
    t = transport_map(d, x)
    extra = [0.0] + ([-a, a] if closed else [])
    t = np.unique(np.concatenate([t, extra]))
    return t[np.abs(t) <= a] if closed else t[np.abs(t) < a]


def check_cond_v2(d: Distribution, phi: GridFunction, grid: np.ndarray | None = None,
                  workers: int = 1) -> CertificateReport:
    """
    phi(|t - s|) <= 1 + |N(|t|) sgn t - N(|s|) sgn s| over all pairs of the transported grid.
    :param d: Canonically scaled Distribution with strictly increasing N
    :param phi: Cost built by build_phi
    :param grid: x-grid transported by U; x_grid(d) when None
    :param workers: Pool size
    :return: CertificateReport
    """
    t = t_grid(d, x_grid(d) if grid is None else np.asarray(grid, dtype=float))
    levels = inverse_transport(d, t)
    results = ordered_map(partial(_cond_v2_rows, t=t, levels=levels, phi=phi), _row_blocks(t.size), workers,
                          desc='Condition v2')
    worst, i, j = _reduce_rows(results)
    return CertificateReport('v2', worst, (float(t[i]), float(t[j])),
                             {'kind': 'transported levels', 'span': float(np.max(np.abs(t))), 'points': int(t.size)},
                             {'phi_inverse_3': generalized_inverse(phi, 3.0)})


def find_x0(d: Distribution, phi_span: float, tol: float = 1e-10) -> float:
    """
    x_0 = inf{x >= 1 : 2x - 1 = Lambda*(x / (2 beta_1))} by bisection; inf when the branches never meet.
    :param d: Canonically scaled Distribution
    :param phi_span: Search ceiling
    :param tol: Bisection tolerance in x
    :return: x_0
    """

    def gap(x):
        return d.cramer_values(np.atleast_1d(x) / (2.0 * BETA_1)) - (2.0 * np.atleast_1d(x) - 1.0)

    xs = np.geomspace(1.0, max(phi_span, 2.0), 256)
    g = gap(xs)
    hits = np.flatnonzero(g >= 0)
    if hits.size == 0:
        return math.inf
    k = int(hits[0])
    if k == 0:
        return 1.0
    lo, hi = float(xs[k - 1]), float(xs[k])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gap(mid)[0] >= 0:
            hi = mid
        else:
            lo = mid
    return hi


def _case2_rows(rows: tuple[int, int], t: np.ndarray, tail_n: Callable) -> tuple[float, int, int, float, int, int]:
    lo, hi = rows
    s = t[lo:hi, None]
    r = t[None, :]
    midpoint = _margin(tail_n(s) + tail_n(r), tail_n(0.5 * (s + r)))
    shift = _margin(tail_n(s + r), tail_n(0.5 * s) + tail_n(r))
    k1 = int(np.argmin(np.where(np.isnan(midpoint), -np.inf, midpoint)))
    k2 = int(np.argmin(np.where(np.isnan(shift), -np.inf, shift)))
    i1, j1 = divmod(k1, t.size)
    i2, j2 = divmod(k2, t.size)
    return float(midpoint.flat[k1]), lo + i1, j1, float(shift.flat[k2]), lo + i2, j2


def _case3_rows(rows: tuple[int, int], t: np.ndarray, tail_n: Callable) -> tuple[float, int, int]:
    lo, hi = rows
    x = t[lo:hi, None]
    y = t[None, :]
    nx, ny = tail_n(x), tail_n(y)
    active = (x - y >= 1.0) & (y >= 0) & (x >= 0.5)
    with np.errstate(invalid='ignore', divide='ignore'):
        slope = np.where(active, (nx - ny) / np.where(active, x - y, 1.0), np.inf)
    margin = np.where(np.isnan(slope), -np.inf, slope - 4.0)
    k = int(np.argmin(margin))
    i, j = divmod(k, t.size)
    return float(margin.flat[k]), lo + i, j


def step6_case_certificate(d: Distribution, phi: GridFunction, grid: np.ndarray | None = None,
                           phi_span: float | None = None, workers: int = 1) -> CertificateReport:
    """
    Re-derives condition v2 through its case split: the Chernoff bound N(t) >= Lambda*(t) - ln 2, the two Case-2
    inequalities, N(x) >= 4x for x >= 1/2, chord slopes >= 4 for x - y >= 1 and N(1/2) >= 2. The result is
    cross-checked against check_cond_v2 on the same grid.
    :param d: Canonically scaled Distribution with convex, strictly increasing N
    :param phi: Cost built by build_phi
    :param grid: x-grid; x_grid(d) when None
    :param phi_span: Search ceiling for x_0
    :param workers: Pool size
    :return: CertificateReport
    """
    x = x_grid(d) if grid is None else np.asarray(grid, dtype=float)
    a, closed = d.transport_range()
    t_top = float(np.max(np.abs(t_grid(d, x))))
    x0 = find_x0(d, phi_span if phi_span is not None else float(phi.finite_x[-1]))
    boundary = [0.5, 1.0, 1.5]
    if math.isfinite(x0):
        boundary += [x0 - 1e-9, x0, x0 + 1e-9]
    t = np.unique(np.concatenate([np.linspace(0.0, t_top, grid_points), boundary]))
    t = t[(t >= 0) & ((t <= a) if closed else (t < a)) & (t <= t_top)]
    n = d.tail.N(t)
    index = GridFunction(t, n).convexity_violation()
    if index is not None:
        raise ConvexityError(index, f'{d.name}: N is not convex near t = {t[index]!r}; the case split needs '
                                    f'log-concave tails')

    chernoff = n - (d.cramer_values(t) - math.log(2.0))
    parts = {'chernoff': _worst(chernoff, t)}
    case2 = ordered_map(partial(_case2_rows, t=t, tail_n=d.tail.N), _row_blocks(t.size), workers, desc='Case 2')
    mid = _reduce_rows([(r[0], r[1], r[2]) for r in case2])
    shift = _reduce_rows([(r[3], r[4], r[5]) for r in case2])
    parts['case2_midpoint'] = (mid[0], (float(t[mid[1]]), float(t[mid[2]])))
    parts['case2_shift'] = (shift[0], (float(t[shift[1]]), float(t[shift[2]])))
    upper = t >= 0.5
    parts['case3_linear'] = _worst(n[upper] - 4.0 * t[upper], t[upper]) if upper.any() else (math.inf, ())
    slope = _reduce_rows(ordered_map(partial(_case3_rows, t=t, tail_n=d.tail.N), _row_blocks(t.size), workers,
                                     desc='Case 3'))
    parts['case3_slope'] = (slope[0], (float(t[slope[1]]), float(t[slope[2]])) if math.isfinite(slope[0]) else ())
    parts['n_half'] = (float(d.tail.N(0.5)) - 2.0, (0.5,))

    name, (worst, location) = min(parts.items(), key=lambda kv: kv[1][0])
    v2 = check_cond_v2(d, phi, x, workers)
    report = CertificateReport('cases', worst, location, {'kind': 'tail levels', 'span': t_top, 'points': int(t.size)},
                               {'beta_1': BETA_1},
                               details={'x0': x0, 'worst_part': name, 'cond_v2_pass': v2.passed,
                                        **{f'{k}_margin': v[0] for k, v in parts.items()}})
    if report.passed != v2.passed:
        logger.warning(f'{d.name}: case certificate ({report.passed}) disagrees with condition v2 ({v2.passed})')
        report.details['cross_check'] = 'disagree'
    else:
        report.details['cross_check'] = 'agree'
    return report


def certify(d: Distribution, condition: Condition = 'all', b: float = B_CONDITION, span: float = grid_span,
            points: int = grid_points, eps: float = epsilon, workers: int = 1) -> tuple[list[CertificateReport],
                                                                                        PreparedDistribution,
                                                                                        Constants]:
    """
    Prepares d, builds phi and runs the requested certificates.
    :param d: Distribution
    :param condition: 'lemma', 'v1', 'v2', 'cases' or 'all'
    :param b: Constant of condition v1
    :param span: Half-width of the exponential-level grid
    :param points: Grid size
    :param eps: Regularization parameter
    :param workers: Pool size
    :return: (reports, prepared distribution, assembled constants)
    """
    prepared = prepare_distribution(d, eps)
    canonical = prepared.canonical
    phi_span = span + 4.0
    phi = build_phi(canonical, phi_span)
    constants = assemble_constants(phi)
    grid = x_grid(canonical, span, points)
    wanted = ('lemma', 'v1', 'v2', 'cases') if condition == 'all' else (condition,)
    reports = []
    for name in wanted:
        if name == 'lemma':
            reports.append(lemma_3_1_check(canonical, points))
        elif name == 'v1':
            reports.append(check_cond_v1(canonical, phi, b, grid, workers))
        elif name == 'v2':
            reports.append(check_cond_v2(canonical, phi, grid, workers))
        elif name == 'cases':
            reports.append(step6_case_certificate(canonical, phi, grid, phi_span, workers))
        else:
            raise ValueError(f'Unknown condition {name!r}')
    for r in reports:
        logger.info(f'{d.name}: condition {r.condition} {"passed" if r.passed else "FAILED"} with worst margin '
                    f'{r.worst_margin:.6g} at {r.worst_location}')
    return reports, prepared, constants


def sensitivity_report(d: Distribution, condition: Condition = 'all', eps_values: Sequence[float] = epsilon_sensitivity,
                        span: float = grid_span, points: int = grid_points, workers: int = 1) -> list[dict]:
    """Reruns the certificates for several regularization parameters."""
    rows = []
    for eps in eps_values:
        reports, prepared, _ = certify(d, condition, span=span, points=points, eps=eps, workers=workers)
        for r in reports:
            rows.append({'eps': eps, 'condition': r.condition, 'pass': r.passed, 'worst_margin': r.worst_margin,
                         'scale': prepared.scale})
    return rows


@dataclass(frozen=True)
class NormTest:
    """
    Test function a ||x|| - offset. Its infimum convolution with the product cost is bounded below by
    a ||x|| - offset, so estimates built from it never claim a violation.

    Attributes:
        norm (Callable): Maps an (samples, n) array to the norms of its rows
        a (float): Slope
        offset (float): Offset of the lower bound
        label (str): Name used in reports
    """
    norm: Callable[[np.ndarray], np.ndarray]
    a: float
    offset: float
    label: str = 'norm'


TestFunction = GridFunction | tuple[GridFunction, ...] | NormTest


@dataclass(frozen=True)
class IciEstimate:
    """
    Monte Carlo estimate of E exp(f inf-conv Phi (X)) * E exp(-f(X)).

    Attributes:
        estimate (float): Product of the two block means
        half_width (float): Delta-method confidence half-width
        log_first (float): ln of the first mean
        log_second (float): ln of the second mean
        n_samples (int): Samples per block
        seed (int): Run seed
        beta (float): Cost scaling
        kind (str): 'one_dimensional', 'separable' or the norm label
        conclusive (bool): False when a one-sided lower bound replaced the infimum convolution
    """
    estimate: float
    half_width: float
    log_first: float
    log_second: float
    n_samples: int
    seed: int
    beta: float
    kind: str
    conclusive: bool

    @property
    def within_bound(self) -> bool:
        return self.estimate <= 1.0 + 3.0 * self.half_width

    def to_dict(self) -> dict:
        return {'estimate': self.estimate, 'half_width': self.half_width, 'log_first': self.log_first,
                'log_second': self.log_second, 'n_samples': self.n_samples, 'seed': self.seed, 'beta': self.beta,
                'kind': self.kind, 'conclusive': self.conclusive, 'within_bound': self.within_bound}


def cost_function(d: Distribution, beta: float, span: float) -> GridFunction:
    """Lambda*(x / beta) sampled on [-span, span]."""
    outer = span * np.geomspace(1e-6, 1.0, 129)
    x = np.unique(np.concatenate([np.linspace(-span, span, grid_points), outer, -outer, [0.0]]))
    return GridFunction(x, d.cramer_values(x / beta), 'linear', 'linear')


def _separable_chunk(item: tuple[int, int], distributions: Sequence[Distribution],
                     functions: Sequence[GridFunction], seed: int, block: int, negate: bool) -> LogMoments:
    chunk, size = item
    total = np.zeros(size)
    for i, (d, g) in enumerate(zip(distributions, functions)):
        total += g(d.sample_chunk(seed, block, chunk, size, coordinate=i))
    return LogMoments.from_log_values(-total if negate else total)


def _norm_chunk(item: tuple[int, int], distributions: Sequence[Distribution], test: NormTest, seed: int,
                block: int, negate: bool) -> LogMoments:
    chunk, size = item
    sample = np.column_stack([d.sample_chunk(seed, block, chunk, size, coordinate=i)
                              for i, d in enumerate(distributions)])
    value = test.a * test.norm(sample)
    return LogMoments.from_log_values(-value if negate else value - test.offset)


def mc_ici_test(distributions: Sequence[Distribution], beta: float, f: TestFunction, n_samples: int, seed: int,
                workers: int = 1, span: float | None = None) -> IciEstimate:
    """
    Estimates E exp(f inf-conv Phi (X)) * E exp(-f(X)) with Phi(x) = sum_i Lambda*_i(x_i / beta), using two
    independent sample blocks.
    Grid test functions are shifted to minimum 0 first, so the block log-means refer to the shifted parts.
    :param distributions: Coordinate laws
    :param beta: Cost scaling
    :param f: One-dimensional GridFunction, tuple of GridFunctions (separable sum) or NormTest
    :param n_samples: Samples per block
    :param seed: Run seed
    :param workers: Pool size
    :param span: Half-width of the sampled costs
    :return: IciEstimate
    """
    distributions = list(distributions)
    layout = chunk_layout(n_samples, chunk_size)
    if isinstance(f, NormTest):
        first = ordered_map(partial(_norm_chunk, distributions=distributions, test=f, seed=seed, block=0,
                                    negate=False), layout, workers, desc='ICI block 1')
        second = ordered_map(partial(_norm_chunk, distributions=distributions, test=f, seed=seed, block=1,
                                     negate=True), layout, workers, desc='ICI block 2')
        kind, conclusive = f.label, False
    else:
        parts = (f,) if isinstance(f, GridFunction) else tuple(f)
        if len(parts) != len(distributions):
            raise ValueError(f'{len(parts)} test functions for {len(distributions)} coordinates')
        for g in parts:
            if not g.is_bounded_below():
                raise ImproperFunctionError('Test function must be bounded below')
        # the product is invariant under f -> f + c; pin each part to minimum 0 so both blocks see the same draws
        parts = tuple(GridFunction(g.x, g.values - g.minimum(), g.left, g.right) for g in parts)
        reach = span if span is not None else grid_span + max(float(np.max(np.abs(g.finite_x))) for g in parts)
        envelopes = [inf_convolution(g, cost_function(d, beta, reach)) for g, d in zip(parts, distributions)]
        first = ordered_map(partial(_separable_chunk, distributions=distributions, functions=envelopes, seed=seed,
                                    block=0, negate=False), layout, workers, desc='ICI block 1')
        second = ordered_map(partial(_separable_chunk, distributions=distributions, functions=parts, seed=seed,
                                     block=1, negate=True), layout, workers, desc='ICI block 2')
        kind, conclusive = ('one_dimensional' if len(parts) == 1 else 'separable'), True
    m1 = LogMoments.combine(first)
    m2 = LogMoments.combine(second)
    log_product = m1.log_mean + m2.log_mean
    estimate = math.exp(log_product)
    rse = math.hypot(m1.relative_standard_error, m2.relative_standard_error)
    return IciEstimate(estimate, confidence_z * estimate * rse, m1.log_mean, m2.log_mean, n_samples, seed, beta,
                       kind, conclusive)


def mc_ici_battery(distributions: Sequence[Distribution], beta: float, functions: Sequence[TestFunction],
                   n_samples: int, seed: int, workers: int = 1) -> list[IciEstimate]:
    """Runs mc_ici_test for every test function on the same sample streams."""
    estimates = []
    for k, f in enumerate(functions):
        e = mc_ici_test(distributions, beta, f, n_samples, seed, workers)
        if not e.within_bound:
            logger.warning(f'Test function {k}: estimate {e.estimate:.6g} exceeds 1 + 3 half-widths')
        estimates.append(e)
    return estimates
