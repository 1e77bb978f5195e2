import logging
import math
from dataclasses import dataclass
from functools import partial
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from config import (chunk_size, confidence_z, contradiction_threshold, debug_mode, default_seed, lemma_tolerance,
                    moment_grid_size, scan_theta_factor, violation_deltas)
from icicert_core.convex_fn import HingeInfConvolution
from icicert_core.errors import DistributionError
from icicert_core.ici_engine import CertificateReport
from icicert_core.tail_dist import Distribution, dyadic
from icicert_utils.utils import chunk_generator, chunk_layout, open_uniforms, ordered_map

LOG_ONE_MINUS_INV_E = math.log(-math.expm1(-1.0))
MAX_BLOCK = 20

logger = logging.getLogger(f"{__name__}")


def example_distribution() -> Distribution:
    """Symmetric law with P(|X| > t) = 1 on [0, 2) and e^{-2^k} on [2^k, 2^{k+1})."""
    return dyadic()


def tail_probability(d: Distribution, t) -> np.ndarray:
    """T(t) = P(|X| > t)."""
    return np.exp(-d.tail.N_right(t))


def _log_gauge_norms(p: np.ndarray) -> np.ndarray:
    """ln ||Y||_p for a symmetric exponential Y: ln Gamma(p + 1) / p."""
    return gammaln(p + 1.0) / p


def verify_3_regularity(d: Distribution, p_max: float, n_grid: int = moment_grid_size) -> CertificateReport:
    """
    Checks ||X||_p <= 3 (p/q) ||X||_q for 2 <= q <= p <= p_max directly, then through the chain
    ||X||_p <= 2||Y||_p + 2 <= 2 (p/q)||Y||_q + 2 <= 3 (p/q)||X||_q with Y symmetric exponential, and the pointwise
    coupling |Y| <= |X| <= 2|Y| + 2 on shared exponential levels.
    :param d: Distribution (the dyadic law)
    :param p_max: Largest order, >= 2
    :param n_grid: Size of the geometric p-grid
    :return: CertificateReport
    """
    if p_max < 2:
        raise ValueError('verify_3_regularity needs p_max >= 2')
    grid = np.geomspace(2.0, p_max, n_grid) if p_max > 2 else np.array([2.0])
    x_norms = np.array([d.norm(p) for p in grid])
    y_norms = np.exp(_log_gauge_norms(grid))
    p = grid[:, None]
    q = grid[None, :]
    lower = q <= p
    ratio = p / q
    parts = {
        'direct': np.where(lower, 3.0 * ratio * x_norms[None, :] - x_norms[:, None], np.inf),
        'sandwich': np.where(lower, 2.0 * y_norms[:, None] + 2.0 - x_norms[:, None], np.inf),
        'exponential_growth': np.where(lower, 2.0 * ratio * y_norms[None, :] - 2.0 * y_norms[:, None], np.inf),
        'closing': np.where(lower, 3.0 * ratio * x_norms[None, :] - 2.0 * ratio * y_norms[None, :] - 2.0, np.inf),
    }
    pp, qq = np.broadcast_arrays(p, q)
    margins = {}
    worst, location = math.inf, ()
    for name, m in parts.items():
        k = int(np.argmin(m))
        margins[name] = float(m.flat[k])
        if m.flat[k] < worst:
            worst, location = float(m.flat[k]), (float(pp.flat[k]), float(qq.flat[k]))
    levels = np.unique(np.concatenate([np.geomspace(1e-6, 2.0 ** 40, 2001), d.tail.jump_levels(2.0 ** 40),
                                       d.tail.jump_levels(2.0 ** 40) * (1.0 + 1e-9)]))
    coupled = d.tail.level_inverse(levels)
    coupling = np.minimum(coupled - levels, 2.0 * levels + 2.0 - coupled)
    k = int(np.argmin(coupling))
    margins['coupling'] = float(coupling[k])
    if coupling[k] < worst:
        worst, location = float(coupling[k]), (float(levels[k]),)
    return CertificateReport('three_regularity', worst, location, {'p_max': p_max, 'p_points': int(grid.size)},
                             {'alpha': 3.0}, lemma_tolerance,
                             {**{f'{k}_margin': v for k, v in margins.items()},
                              'alpha_measured': d.regularity_alpha(p_max, n_grid)})


def flat_tail_criterion(d: Distribution, h_list: Sequence[float],
                        t_max: float = 2.0 ** 50) -> list[tuple[float, float | None]]:
    """
    For each h the first t with T(t + h) = T(t) on a plateau of the tail, or None up to t_max.
    :param d: Distribution
    :param h_list: Plateau lengths, h > 0
    :param t_max: Search ceiling
    :return: List of (h, t)
    """
    intervals = d.tail.flat_intervals(t_max)
    found = []
    for h in h_list:
        if not h > 0:
            raise ValueError(f'h must be positive, got {h}')
        t = next((s for s, e in intervals if e - s > h and
                  float(tail_probability(d, s)) == float(tail_probability(d, s + h))), None)
        found.append((float(h), None if t is None else float(t)))
    return found


@dataclass(frozen=True)
class QuadraticBound:
    """
    Quadratic bound Lambda(s) <= A s^2 on |s| <= eps with 2 A eps^2 >= 1.

    Attributes:
        a (float): A
        eps (float): eps
        kappa (float): 9 e^2 E X^2 / 4, ratio of the even-moment series
        second_moment (float): E X^2
        report (CertificateReport): Certified inequalities
    """
    a: float
    eps: float
    kappa: float
    second_moment: float
    report: CertificateReport

    def lower_bound(self, t) -> np.ndarray:
        return _lower_bound(t, self.a, self.eps)

    def scaled_huber(self, t) -> np.ndarray:
        return _scaled_huber(t, self.a, self.eps)


def _lower_bound(t, a: float, eps: float) -> np.ndarray:
    """sup over |s| <= eps of st - A s^2."""
    t = np.abs(np.asarray(t, dtype=float))
    return np.where(t <= 2.0 * a * eps, t * t / (4.0 * a), eps * t - a * eps ** 2)


def _scaled_huber(t, a: float, eps: float) -> np.ndarray:
    """2 A eps^2 psi(t / (2 A eps)), psi(x) = x^2/2 on |x| <= 1 and |x| - 1/2 beyond."""
    x = np.abs(np.asarray(t, dtype=float)) / (2.0 * a * eps)
    return 2.0 * a * eps ** 2 * np.where(x <= 1.0, 0.5 * x * x, x - 0.5)


def quadratic_bound_scan(d: Distribution, moments_up_to: int = 16, s_points: int = 4001,
                         t_points: int = 401) -> QuadraticBound:
    """
    Bounds the cumulant by the even-moment series -ln(1 - kappa s^2), picks the smallest eps with
    2 A eps^2 >= 1 and certifies the resulting lower bound of the Cramer transform.
    :param d: Distribution growing 3-regularly
    :param moments_up_to: Largest k of the checked bound E X^{2k} <= (3k)^{2k} (E X^2)^k
    :param s_points: Points of the s-grid on [-eps, eps]
    :param t_points: Points of the t-grid
    :return: QuadraticBound
    """
    second = d.second_moment
    kappa = 9.0 * math.e ** 2 * second / 4.0
    eps = math.sqrt(-math.expm1(-0.5) / kappa)
    a = 1.0 / (2.0 * eps * eps)
    if eps >= d.tail.asymptotic_slope:
        raise DistributionError(f'{d.name}: cumulant is not finite on |s| <= {eps:.6g}')
    s = np.linspace(-eps, eps, s_points)
    cumulant = d.cumulant_values(s)
    if not np.isfinite(cumulant).all():
        raise DistributionError(f'{d.name}: cumulant is not finite on |s| <= {eps:.6g}')
    series = -np.log1p(-kappa * s * s)
    margins = {'series': _worst(series - cumulant, s), 'quadratic': _worst(a * s * s - series, s)}

    k = np.arange(1, moments_up_to + 1, dtype=float)
    log_even = np.array([d.log_abs_moment(2.0 * j) for j in k])
    log_bound = 2.0 * k * np.log(3.0 * k) + k * math.log(second)
    margins['even_moments'] = _worst(log_bound - log_even, 2.0 * k)

    t_top = 4.0 * a * eps
    t = np.linspace(-t_top, t_top, t_points)
    grid_sup = np.max(s[None, :] * t[:, None] - a * s[None, :] ** 2, axis=1)
    closed = _lower_bound(t, a, eps)
    discretization = a * (s[1] - s[0]) ** 2
    margins['closed_form'] = _worst(discretization - np.abs(grid_sup - closed), t)
    huber = _scaled_huber(t, a, eps)
    margins['identity'] = _worst(lemma_tolerance * np.maximum(1.0, np.abs(closed)) - np.abs(huber - closed), t)
    cramer_lower = np.max(s[None, :] * t[:, None] - cumulant[None, :], axis=1)
    margins['cramer'] = _worst(cramer_lower - grid_sup, t)
    margins['normalization'] = (2.0 * a * eps * eps - 1.0, (eps,))

    name, (worst, location) = min(margins.items(), key=lambda kv: kv[1][0])
    report = CertificateReport('quadratic_bound', worst, location, {'s_points': s_points, 't_points': t_points},
                               {'A': a, 'eps': eps, 'kappa': kappa}, lemma_tolerance,
                               {'worst_part': name, **{f'{n}_margin': v[0] for n, v in margins.items()}})
    if debug_mode:
        logger.debug(f'{d.name}: A = {a:.6g}, eps = {eps:.6g}, worst part {name}')
    return QuadraticBound(a, eps, kappa, second, report)


def _worst(margin: np.ndarray, coords: np.ndarray) -> tuple[float, tuple[float, ...]]:
    k = int(np.argmin(margin))
    return float(margin[k]), (float(coords[k]),)


@dataclass(frozen=True)
class MaxBounds:
    """
    Bounds (1 - e^-1) I <= E max_i |X_i|^p <= I, I = integral of p t^{p-1} (1 ^ n T(t)), kept as logarithms.

    Attributes:
        log_lower (float): ln of the lower bound
        log_upper (float): ln of the upper bound
    """
    log_lower: float
    log_upper: float

    @property
    def lower(self) -> float:
        return math.exp(self.log_lower)

    @property
    def upper(self) -> float:
        return math.exp(self.log_upper)


def _resolve_log_n(n: int | None, log_n: float | None) -> float:
    if log_n is None:
        if n is None or n < 1:
            raise ValueError('n must be a positive integer')
        return math.log(n)
    return float(log_n)


def max_iid_moment_bounds(d: Distribution, p: float = 1.0, n: int | None = None,
                          log_n: float | None = None) -> MaxBounds:
    """
    :param d: Distribution
    :param p: Moment order, p >= 1
    :param n: Number of i.i.d. copies
    :param log_n: ln n, for n beyond integer range
    :return: MaxBounds
    """
    if p < 1:
        raise ValueError('p must be at least 1')
    ln_n = _resolve_log_n(n, log_n)
    if d.tail.atomic:
        locations, log_masses = d.tail.atoms()
        # survival mass beyond t on [loc_{j-1}, loc_j)
        log_survival = np.logaddexp.accumulate(log_masses[::-1])[::-1]
        previous = np.concatenate([[0.0], locations[:-1]])
        with np.errstate(divide='ignore'):
            log_width = p * np.log(locations) + np.log1p(-np.power(previous / locations, p))
        log_integral = float(logsumexp(log_width + np.minimum(0.0, ln_n + log_survival)))
    else:
        def log_density(t):
            t = np.asarray(t, dtype=float)
            return math.log(p) + xlogy(p - 1.0, t) + np.minimum(0.0, ln_n - d.tail.N(t))

        log_integral = d._log_tail_integral(log_density, hint=float(d.tail.level_inverse(max(ln_n, 1.0))))
    return MaxBounds(LOG_ONE_MINUS_INV_E + log_integral, log_integral)


def max_iid_bounds(d: Distribution, n: int | None = None, log_n: float | None = None) -> tuple[float, float]:
    """(lower, upper) bounds of E max_i |X_i| for n i.i.d. copies."""
    bounds = max_iid_moment_bounds(d, 1.0, n, log_n)
    return bounds.lower, bounds.upper


def max_iid_moment_lower(d: Distribution, n: int, p: float) -> float:
    """Lower bound of E max_i |X_i|^p."""
    return max_iid_moment_bounds(d, p, n).lower


def dyadic_max_upper(m: int, theta: float) -> float:
    """2^m (1 + theta / (1 - 2 e^{-2^m})) for e^{2^{m-1}} <= n < e^{2^m}, theta = n e^{-2^m}."""
    return 2.0 ** m * (1.0 + theta / (1.0 - 2.0 * math.exp(-(2.0 ** m))))


def dyadic_moment_lower_log(m: int, theta: float, p: float) -> float:
    """ln of (1 - e^-1) theta 2^{mp} (2^p - 1)."""
    return LOG_ONE_MINUS_INV_E + math.log(theta) + m * p * math.log(2.0) + p * math.log(2.0) + math.log1p(-2.0 ** -p)


def _max_chunk(item: tuple[int, int], d: Distribution, n: int, seed: int) -> tuple[float, float]:
    chunk, size = item
    rng = chunk_generator(seed, MAX_BLOCK, chunk)
    # the maximum of n exponential levels has distribution function (1 - e^{-y})^n
    levels = -np.log(-np.expm1(np.log(open_uniforms(rng, size)) / n))
    values = d.tail.level_inverse(levels)
    return float(np.sum(values)), float(np.sum(values * values))


def sample_max_mean(d: Distribution, n: int, n_samples: int, seed: int = default_seed,
                    workers: int = 1) -> tuple[float, float]:
    """
    Monte Carlo E max_i |X_i| through the maximum of n exponential levels.
    :return: (estimate, confidence half-width)
    """
    parts = ordered_map(partial(_max_chunk, d=d, n=n, seed=seed), chunk_layout(n_samples, chunk_size),
                        workers, desc='Sample maxima')
    total = sum(p[0] for p in parts)
    squares = sum(p[1] for p in parts)
    mean = total / n_samples
    variance = max(squares / n_samples - mean * mean, 0.0) * n_samples / max(n_samples - 1, 1)
    return mean, confidence_z * math.sqrt(variance / n_samples)


@dataclass(frozen=True)
class ScanRow:
    """
    Attributes:
        m (int): Dyadic level
        n (int | None): Number of copies when representable, else None
        log_n (float): ln n
        theta (float): n e^{-2^m}
        p (float): 1 / theta
        log_lhs (float): ln of (1 - e^-1)^{1/p} theta^{1/p} 2^m (2^p - 1)^{1/p}
        log_rhs (float): ln of 2^m (1 + theta / (1 - 2 e^{-2^m})) + K p
        lhs_normalized (float): (1 - e^-1)^theta theta^theta (2^{1/theta} - 1)^theta
        rhs_normalized (float): 1 + theta / (1 - 2 e^{-2^m}) + K / (2^m theta)
        k_tilde (float): K
    """
    m: int
    n: int | None
    log_n: float
    theta: float
    p: float
    log_lhs: float
    log_rhs: float
    lhs_normalized: float
    rhs_normalized: float
    k_tilde: float

    @property
    def ratio(self) -> float:
        return self.lhs_normalized / self.rhs_normalized

    def to_row(self) -> dict:
        return {'m': self.m, 'n': '' if self.n is None else self.n, 'log_n': self.log_n, 'theta': self.theta,
                'p': self.p, 'log_lhs': self.log_lhs, 'log_rhs': self.log_rhs, 'lhs_normalized': self.lhs_normalized,
                'rhs_normalized': self.rhs_normalized, 'ratio': self.ratio, 'k_tilde': self.k_tilde}


def measure_k_tilde(d: Distribution, p_lo: float = 2.0, p_hi: float = 64.0, n_grid: int = moment_grid_size) -> float:
    """sup over the p-grid of ||X||_p / p."""
    return max(d.norm(p) / p for p in np.geomspace(p_lo, p_hi, n_grid))


def scan_row(m: int, k_tilde: float, theta_factor: float = scan_theta_factor) -> ScanRow:
    """Row of the contradiction scan with theta close to theta_factor / m."""
    if not theta_factor > 0:
        raise ValueError('theta_factor must be positive')
    if m < 1:
        raise ValueError('m must be at least 1')
    level = 2.0 ** m
    if level < 700.0:
        n = max(1, round(theta_factor * math.exp(level) / m))
        log_n = math.log(n)
        theta = math.exp(log_n - level)
    else:
        n = None
        log_n = level + math.log(theta_factor / m)
        theta = theta_factor / m
    if not (-(level / 2.0) <= math.log(theta) < 0.0):
        raise ValueError(f'theta = {theta!r} outside the admissible range for m = {m}')
    p = 1.0 / theta
    log_two_p_minus_one = p * math.log(2.0) + math.log1p(-2.0 ** -p)
    correction = 1.0 - 2.0 * math.exp(-level)
    log_lhs = theta * (LOG_ONE_MINUS_INV_E + math.log(theta) + log_two_p_minus_one) + m * math.log(2.0)
    log_rhs = float(np.logaddexp(m * math.log(2.0) + math.log1p(theta / correction), math.log(k_tilde * p)))
    lhs_normalized = math.exp(log_lhs - m * math.log(2.0))
    rhs_normalized = 1.0 + theta / correction + k_tilde / (level * theta)
    return ScanRow(m, n, log_n, theta, p, log_lhs, log_rhs, lhs_normalized, rhs_normalized, k_tilde)


@dataclass(frozen=True)
class ScanSummary:
    """
    Attributes:
        rows (tuple): ScanRows in m order
        threshold (float): Required ratio
        m_star (int | None): Smallest m from which every ratio reaches the threshold
        monotone (bool): Whether the ratios never decrease
    """
    rows: tuple[ScanRow, ...]
    threshold: float
    m_star: int | None
    monotone: bool

    def to_dict(self) -> dict:
        return {'threshold': self.threshold, 'm_star': self.m_star, 'monotone': self.monotone,
                'k_tilde': self.rows[0].k_tilde if self.rows else None,
                'last_ratio': self.rows[-1].ratio if self.rows else None}


def contradiction_scan(m_range: Sequence[int], k_tilde: float,
                       threshold: float = contradiction_threshold,
                       theta_factor: float = scan_theta_factor) -> ScanSummary:
    """
    Normalized sides of the moment comparison for the dyadic law: the left side tends to 2 and the right side to 1
    as m grows, which contradicts any comparison constant.
    :param m_range: Levels m, increasing
    :param k_tilde: Constant of the weak moment bound K p
    :param threshold: Ratio required from m_star on
    :param theta_factor: theta of row m is about theta_factor / m
    :return: ScanSummary
    """
    if not k_tilde > 0:
        raise ValueError('k_tilde must be positive')
    rows = tuple(scan_row(int(m), k_tilde, theta_factor) for m in m_range)
    m_star = None
    for row in reversed(rows):
        if row.ratio < threshold:
            break
        m_star = row.m
    ratios = [r.ratio for r in rows]
    monotone = all(b >= a for a, b in zip(ratios, ratios[1:]))
    if not monotone:
        logger.warning('Contradiction scan ratios are not monotone in m')
    logger.info(f'Contradiction scan with K = {k_tilde:.6g}: m* = {m_star} at threshold {threshold:g}')
    return ScanSummary(rows, threshold, m_star, monotone)


@dataclass(frozen=True)
class ViolationResult:
    """
    Attributes:
        c (float): Cost scale of min{(cx)^2, |cx|}
        a (float): Hinge slope (a > 2c)
        b (float): Hinge position
        product (float): E exp(f inf-conv phi(c.)(X)) E exp(-f(X))
        remainder (float): Bound on the series terms beyond the stored atoms
    """
    c: float
    a: float
    b: float
    product: float
    remainder: float

    @property
    def violated(self) -> bool:
        return self.product > 1.0

    def to_row(self) -> dict:
        return {'c': self.c, 'a': self.a, 'b': self.b, 'product': self.product, 'remainder': self.remainder,
                'violated': self.violated}


def _log_expm1(h: np.ndarray) -> np.ndarray:
    """ln(e^h - 1), -inf at h = 0."""
    with np.errstate(divide='ignore'):
        return np.where(h > 0, h + np.log(-np.expm1(-np.maximum(h, 1e-300))), -np.inf)


def hinge_log_expectations(d: Distribution, a: float, b: float, c: float) -> tuple[float, float, float]:
    """
    Exact ln E exp(h(X)) and ln E exp(-f(X)) for f = a (x - b)_+ and h its inf-convolution with min{(cx)^2, |cx|},
    summed over the atoms of a symmetric atomic law.
    :return: (ln E exp(h(X)), ln E exp(-f(X)), remainder bound of the omitted tail of the series)
    """
    locations, log_masses = d.tail.atoms()
    atoms = np.concatenate([locations, -locations])
    log_p = np.concatenate([log_masses, log_masses]) - math.log(2.0)
    h = HingeInfConvolution(a, b, c)(atoms)
    log_first = float(np.logaddexp(0.0, logsumexp(log_p + _log_expm1(h))))
    log_second = float(logsumexp(log_p - a * np.maximum(atoms - b, 0.0)))
    # terms decay faster than geometrically beyond the last atom
    last = int(np.argmax(locations))
    remainder = 2.0 * math.exp(float(log_masses[last] + c * locations[last]))
    return log_first, log_second, remainder


def hinge_expectations(d: Distribution, a: float, b: float, c: float) -> tuple[float, float, float]:
    """
    E exp(h(X)) and E exp(-f(X)) of hinge_log_expectations; the first is inf when it overflows.
    :return: (E exp(h(X)), E exp(-f(X)), remainder bound)
    """
    log_first, log_second, remainder = hinge_log_expectations(d, a, b, c)
    with np.errstate(over='ignore'):
        return float(np.exp(log_first)), float(np.exp(log_second)), remainder


def hinge_product(d: Distribution, a: float, b: float, c: float) -> tuple[float, float]:
    """
    E exp(h(X)) E exp(-f(X)), multiplied in the log domain.
    :return: (product, remainder bound)
    """
    log_first, log_second, remainder = hinge_log_expectations(d, a, b, c)
    with np.errstate(over='ignore'):
        return float(np.exp(log_first + log_second)), remainder


def _violation_cell(c: float, d: Distribution, a_factors: np.ndarray, b_grid: np.ndarray) -> ViolationResult:
    if c >= d.tail.asymptotic_slope:
        return ViolationResult(c, math.inf, math.nan, math.inf, 0.0)
    best = ViolationResult(c, math.nan, math.nan, -math.inf, math.inf)
    for b in b_grid:
        for factor in a_factors:
            product, remainder = hinge_product(d, 2.0 * c * factor, float(b), c)
            if product > best.product:
                best = ViolationResult(c, 2.0 * c * factor, float(b), product, remainder)
    return best


def violation_search(c_list: Sequence[float], d: Distribution | None = None, deltas: Sequence[float] = violation_deltas,
                     k_edges: int = 14, a_points: int = 40, workers: int = 1) -> list[ViolationResult]:
    """
    For each c, the largest product over hinges a (x - b)_+ with a > 2c and b at the plateau edges +-2^k (+-delta).
    :param c_list: Cost scales
    :param d: Atomic law; the dyadic example when None
    :param deltas: Offsets around the plateau edges
    :param k_edges: Number of plateau edges per side
    :param a_points: Number of slopes on the log grid
    :param workers: Pool size
    :return: One ViolationResult per c
    """
    d = d or example_distribution()
    if not d.tail.atomic:
        raise DistributionError('violation_search sums over atoms and needs an atomic law')
    edges = 2.0 ** np.arange(1, k_edges + 1)
    offsets = np.concatenate([[0.0], np.asarray(deltas, dtype=float), -np.asarray(deltas, dtype=float)])
    b_grid = np.unique(np.concatenate([(edges[:, None] + offsets[None, :]).ravel(),
                                       -(edges[:, None] + offsets[None, :]).ravel()]))
    a_factors = np.geomspace(1.0 + 1e-3, 1e4, a_points)
    results = ordered_map(partial(_violation_cell, d=d, a_factors=a_factors, b_grid=b_grid), [float(c) for c in c_list],
                          workers, desc='Violation search')
    for r in results:
        level = logging.INFO if r.violated else logging.WARNING
        logger.log(level, f'c = {r.c:g}: best product {r.product:.10g} at a = {r.a:.6g}, b = {r.b:.6g}')
    return results
