import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import partial
from typing import Literal

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.special import gammaln

from config import (ascent_iterations, ascent_restarts, certificate_tolerance, chunk_size, confidence_z, debug_mode,
                    default_seed, lemma_tolerance, max_escalation, quadrature_rtol, relative_precision)
from icicert_core.errors import DistributionError, GridSpanError, PrecisionError
from icicert_core.ici_engine import BETA_1, CertificateReport, assemble_constants
from icicert_core.tail_dist import Distribution, scale_distribution
from icicert_utils.utils import LogMoments, chunk_generator, chunk_layout, ordered_map

NormKind = Literal['l1', 'l2', 'linf', 'weighted_linf']

STRONG_BLOCK = 10
MEAN_BLOCK = 11
CENTRAL_BLOCK = 12
ASCENT_BLOCK = 13
# Moment-series terms past the leading one in sum_abs_moment.
SERIES_TERMS = 12

logger = logging.getLogger(f"{__name__}")


@dataclass(frozen=True)
class NormSpec:
    """
    Norm on R^n from the fixed menu, with its dual.

    Attributes:
        kind (str): 'l1', 'l2', 'linf' or 'weighted_linf'
        weights (tuple): Positive weights of the weighted l-infinity norm
    """
    kind: NormKind
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ('l1', 'l2', 'linf', 'weighted_linf'):
            raise ValueError(f'Unknown norm {self.kind!r}')
        if self.kind == 'weighted_linf':
            if not self.weights or min(self.weights) <= 0:
                raise ValueError('weighted_linf needs positive weights')

    @property
    def dual_kind(self) -> str:
        return {'l1': 'linf', 'l2': 'l2', 'linf': 'l1', 'weighted_linf': 'weighted_l1'}[self.kind]

    def weight_vector(self, n: int) -> np.ndarray:
        w = np.asarray(self.weights, dtype=float) if self.weights else np.ones(n)
        if w.size != n:
            raise ValueError(f'{w.size} weights for dimension {n}')
        return w

    def __call__(self, x) -> np.ndarray:
        """Norms of the rows of x."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == 'l1':
            return np.sum(np.abs(x), axis=-1)
        if self.kind == 'l2':
            return np.sqrt(np.sum(x * x, axis=-1))
        if self.kind == 'linf':
            return np.max(np.abs(x), axis=-1)
        return np.max(self.weight_vector(x.shape[-1]) * np.abs(x), axis=-1)

    def dual(self, t) -> np.ndarray:
        """Dual norms of the rows of t."""
        t = np.atleast_2d(np.asarray(t, dtype=float))
        if self.kind == 'l1':
            return np.max(np.abs(t), axis=-1)
        if self.kind == 'l2':
            return np.sqrt(np.sum(t * t, axis=-1))
        if self.kind == 'linf':
            return np.sum(np.abs(t), axis=-1)
        return np.sum(np.abs(t) / self.weight_vector(t.shape[-1]), axis=-1)


@dataclass(frozen=True)
class ProductVector:
    """
    Random vector with independent symmetric coordinates. Coordinate i always samples from stream coordinate i.

    Attributes:
        coordinates (tuple): Coordinate Distributions
    """
    coordinates: tuple[Distribution, ...]

    @classmethod
    def iid(cls, d: Distribution, n: int) -> 'ProductVector':
        if n < 1:
            raise ValueError('dimension must be at least 1')
        return cls(tuple([d] * n))

    @property
    def n(self) -> int:
        return len(self.coordinates)

    def sample_chunk(self, seed: int, block: int, chunk: int, size: int) -> np.ndarray:
        return np.column_stack([d.sample_chunk(seed, block, chunk, size, coordinate=i)
                                for i, d in enumerate(self.coordinates)])

    def scaled(self, c: float) -> 'ProductVector':
        cache: dict[int, Distribution] = {}
        return ProductVector(tuple(cache.setdefault(id(d), scale_distribution(d, c)) for d in self.coordinates))

    def distinct(self) -> list[Distribution]:
        seen: dict[int, Distribution] = {}
        for d in self.coordinates:
            seen.setdefault(id(d), d)
        return list(seen.values())

    def regularity_alpha(self, p_max: float) -> float:
        """Largest coordinate regularity constant."""
        return max(d.regularity_alpha(p_max) for d in self.distinct())

    def cumulant(self, u) -> float:
        """ln E exp <u, X> as a sum over coordinates."""
        u = np.asarray(u, dtype=float)
        return float(sum(d.cumulant(ui) for d, ui in zip(self.coordinates, u)))

    def describe(self) -> dict:
        return {'n': self.n, 'coordinates': [d.name for d in self.distinct()]}


@dataclass(frozen=True)
class WeakMoment:
    """
    Attributes:
        value (float): sigma(p), or a lower bound of it
        exact (bool): True when value is sigma(p) itself
        direction (tuple): Maximizing direction found
        order (float): Moment order actually evaluated along direction
    """
    value: float
    exact: bool
    direction: tuple[float, ...]
    order: float


def _even_moment_table(v: ProductVector, q: int, scale: float) -> np.ndarray:
    """Row i holds E (X_i / scale)^k / k! for k = 0..q, zero for odd k."""
    table = np.zeros((v.n, q + 1))
    cache: dict[int, np.ndarray] = {}
    k = np.arange(0, q + 1, 2)
    for i, d in enumerate(v.coordinates):
        if id(d) not in cache:
            logs = np.array([0.0] + [d.log_abs_moment(float(j)) for j in k[1:]])
            cache[id(d)] = np.exp(logs - k * math.log(scale) - gammaln(k + 1.0))
        table[i, k] = cache[id(d)]
    return table


def _form_polynomials(table: np.ndarray, t: np.ndarray) -> np.ndarray:
    powers = np.power.outer(t, np.arange(table.shape[1], dtype=float))
    return table * powers


def _form_moment_and_gradient(table: np.ndarray, t: np.ndarray) -> tuple[float, np.ndarray]:
    """
    E <t, Y>^q / q! and its gradient in t, through the product of the even-moment generating polynomials.
    Prefix and suffix products give every leave-one-out product.
    """
    n, width = table.shape
    q = width - 1
    polys = _form_polynomials(table, t)
    prefix = [np.eye(1, width, 0).ravel()]
    for i in range(n):
        prefix.append(np.convolve(prefix[-1], polys[i])[:width])
    suffix = [np.eye(1, width, 0).ravel()]
    for i in range(n - 1, -1, -1):
        suffix.append(np.convolve(suffix[-1], polys[i])[:width])
    suffix = suffix[::-1]
    k = np.arange(width, dtype=float)
    grad = np.empty(n)
    for i in range(n):
        others = np.convolve(prefix[i], suffix[i + 1])[:width]
        with np.errstate(invalid='ignore'):
            dpoly = table[i] * k * np.where(k > 0, np.power(t[i], np.maximum(k - 1.0, 0.0)), 0.0)
        grad[i] = float(np.dot(dpoly, others[::-1]))
    return float(prefix[-1][q]), grad


def linear_form_moment(v: ProductVector, u, q: int) -> float:
    """
    E <u, X>^q for even q, exactly from the coordinate moments.
    :param v: ProductVector
    :param u: Direction
    :param q: Even order
    :return: Moment
    """
    if q % 2 or q < 2:
        raise ValueError('linear_form_moment needs an even order >= 2')
    u = np.asarray(u, dtype=float)
    if not np.any(u):
        return 0.0
    table = _even_moment_table(v, q, 1.0)
    value, _ = _form_moment_and_gradient(table, u)
    return math.exp(gammaln(q + 1.0)) * value


def _cosine_product(v: ProductVector, u: float) -> float:
    """E cos(u (X_1 + ... + X_n))."""
    counts: dict[int, int] = {}
    for d in v.coordinates:
        counts[id(d)] = counts.get(id(d), 0) + 1
    return math.prod(d.cosine_transform(u) ** counts[id(d)] for d in v.distinct())


def sum_abs_moment(v: ProductVector, p: float) -> float:
    """
    E|S|^p of S = X_1 + ... + X_n for p > 2 that is not an even integer. With 2k < p < 2k + 2 and T_k the Taylor
    polynomial of degree 2k of phi(u) = E cos(uS),
        E|S|^p = (2 / pi) Gamma(p + 1) |sin(pi p / 2)| * integral over (0, inf) of (-1)^{k+1} (phi - T_k) u^{-p-1}.
    After scaling u by ||S||_{2k+2}, the integrand is summed as its moment series below a cut and integrated
    numerically above it, where the polynomial part has a closed form.
    :param v: ProductVector
    :param p: Order
    :return: Moment, nan when the moment series does not settle or the result leaves [||S||_2k, ||S||_{2k+2}]
    """
    k = int(p // 2)
    if p <= 2 or p == 2 * k:
        raise ValueError(f'sum_abs_moment needs p > 2 that is not even, got {p}')
    top = 2 * (k + SERIES_TERMS)
    orders = np.arange(0, top + 1, 2)
    series = np.eye(1, top + 1, 0).ravel()
    for poly in _form_polynomials(_even_moment_table(v, top, 1.0), np.ones(v.n)):
        series = np.convolve(series, poly)[:top + 1]
    # series[j] = E S^j / j!
    with np.errstate(divide='ignore', over='ignore'):
        log_m = np.log(series[orders]) + gammaln(orders + 1.0)
    if not np.isfinite(log_m).all():
        return math.nan
    log_scale = log_m[k + 1] / (2 * k + 2)
    # ln of m_2j / (||S||_{2k+2}^2j (2j)!)
    log_coef = log_m - orders * log_scale - gammaln(orders + 1.0)
    signs = np.where(np.arange(orders.size) % 2, -1.0, 1.0)
    head = slice(k + 1, None)
    for halving in range(8):
        cut = 2.0 ** -halving
        log_terms = log_coef[head] + orders[head] * math.log(cut)
        if log_terms[-1] < log_terms[0] + math.log(1e-15) and (np.diff(log_terms[-4:]) < 0).all():
            break
    else:
        logger.warning(f'Moment series of the coordinate sum does not settle for p = {p:g}')
        return math.nan
    sign_k = -1.0 if k % 2 == 0 else 1.0
    below = sign_k * float(np.sum(signs[head] * np.exp(log_coef[head] + (orders[head] - p) * math.log(cut))
                                  / (orders[head] - p)))
    low = slice(0, k + 1)
    polynomial = float(np.sum(signs[low] * np.exp(log_coef[low] + (orders[low] - p) * math.log(cut))
                              / (p - orders[low])))
    scale = math.exp(log_scale)
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', IntegrationWarning)
        oscillating, _ = quad(lambda w: _cosine_product(v, w / scale) * w ** (-p - 1.0), cut, np.inf,
                              epsabs=1e-14, epsrel=quadrature_rtol, limit=1000)
    total = below + sign_k * (oscillating - polynomial)
    if not total > 0:
        logger.warning(f'Non-positive integral {total!r} for the p = {p:g} moment of the coordinate sum')
        return math.nan
    log_moment = (math.log(2.0 / math.pi) + float(gammaln(p + 1.0)) + math.log(abs(math.sin(math.pi * p / 2.0)))
                  + p * log_scale + math.log(total))
    lower, upper = log_m[k] / (2 * k), log_scale
    if not lower - 1e-9 <= log_moment / p <= upper + 1e-9:
        logger.warning(f'p = {p:g} moment of the coordinate sum outside the bracket of its even neighbours')
        return math.nan
    if debug_mode:
        logger.debug(f'Coordinate sum moment p = {p:g} with series cut {cut:g}')
    return math.exp(log_moment)


def _ball_maximizer(grad: np.ndarray, ball: str, weights: np.ndarray) -> np.ndarray:
    """Maximizer of <grad, t> over the unit ball."""
    if ball == 'l2':
        norm = np.linalg.norm(grad)
        return grad / norm if norm > 0 else grad
    if ball == 'linf':
        return np.where(grad >= 0, 1.0, -1.0)
    scores = np.abs(grad) * weights
    k = int(np.argmax(scores))
    t = np.zeros_like(grad)
    t[k] = np.sign(grad[k]) * weights[k] if grad[k] != 0 else weights[k]
    return t


def dual_ball_ascent(v: ProductVector, norm: NormSpec, q: int, restarts: int = ascent_restarts,
                     iterations: int = ascent_iterations, seed: int = default_seed) -> WeakMoment:
    """
    Conditional-gradient ascent of the convex map t -> ||<t, X>||_q over the dual unit ball, from random and
    coordinate starts. Every iterate is feasible, so the best value is a lower bound of sigma(q).
    :param v: ProductVector
    :param norm: Norm whose dual ball is searched
    :param q: Even order
    :param restarts: Number of random starts
    :param iterations: Iterations per start
    :param seed: Seed of the random starts
    :return: WeakMoment (exact=False)
    """
    n = v.n
    scale = max(d.norm(float(q)) for d in v.distinct())
    table = _even_moment_table(v, q, scale)
    ball = {'l1': 'linf', 'l2': 'l2', 'linf': 'l1', 'weighted_linf': 'l1'}[norm.kind]
    # vertices of the weighted dual ball are +-w_i e_i
    weights = norm.weight_vector(n) if norm.kind == 'weighted_linf' else np.ones(n)
    rng = chunk_generator(seed, ASCENT_BLOCK, 0)
    starts = [np.eye(n)[i] * weights[i] for i in range(n)] + [np.ones(n) / norm.dual(np.ones(n))[0]]
    for _ in range(restarts):
        z = rng.normal(size=n)
        starts.append(z / norm.dual(z)[0])
    best_value, best_t = -math.inf, starts[0]
    for t in starts:
        value, grad = _form_moment_and_gradient(table, t)
        for _ in range(iterations):
            nxt = _ball_maximizer(grad, ball, weights)
            nxt_value, nxt_grad = _form_moment_and_gradient(table, nxt)
            if nxt_value <= value * (1.0 + 1e-15):
                break
            t, value, grad = nxt, nxt_value, nxt_grad
        if value > best_value:
            best_value, best_t = value, t
    sigma = scale * math.exp((gammaln(q + 1.0) + math.log(max(best_value, 1e-300))) / q)
    if debug_mode:
        logger.debug(f'Dual-ball ascent ({norm.kind}, q = {q}): {sigma:.10g} from {len(starts)} starts')
    return WeakMoment(sigma, False, tuple(float(x) for x in best_t), float(q))


def weak_moment(v: ProductVector, norm: NormSpec, p: float, seed: int = default_seed) -> WeakMoment:
    """
    sigma(p) = sup over the dual unit ball of ||<t, X>||_p.

    For l-infinity norms the supremum sits at a vertex of the dual l1 ball, so sigma(p) = max_i w_i ||X_i||_p. For
    l1 the symmetric coordinates make every cube vertex equivalent, which gives ||sum_i X_i||_p exactly (for p that
    is not even through sum_abs_moment). Otherwise the result is the best of the coordinate directions at order p
    and the dual-ball ascent at the even order 2 floor(p/2), a lower bound.
    :param v: ProductVector
    :param norm: NormSpec
    :param p: Order, p >= 2
    :param seed: Seed of the ascent restarts
    :return: WeakMoment
    """
    if p < 2:
        raise ValueError(f'weak moments need p >= 2, got {p}')
    w = norm.weight_vector(v.n) if norm.kind == 'weighted_linf' else np.ones(v.n)
    norms = np.array([d.norm(p) for d in v.coordinates])
    coordinate = int(np.argmax(w * norms))
    direction = tuple(float(x) for x in np.eye(v.n)[coordinate] * w[coordinate])
    if v.n == 1 or norm.kind in ('linf', 'weighted_linf'):
        return WeakMoment(float(w[coordinate] * norms[coordinate]), True, direction, float(p))
    q = 2 * int(p // 2)
    if norm.kind == 'l1':
        ones = tuple(np.ones(v.n).tolist())
        if p == q:
            return WeakMoment(linear_form_moment(v, ones, q) ** (1.0 / q), True, ones, float(p))
        moment = sum_abs_moment(v, p)
        if math.isfinite(moment):
            return WeakMoment(moment ** (1.0 / p), True, ones, float(p))
        best = WeakMoment(linear_form_moment(v, ones, q) ** (1.0 / q), False, ones, float(q))
    else:
        best = dual_ball_ascent(v, norm, q, seed=seed)
    if norms.max() > best.value:
        best = WeakMoment(float(norms.max()), False, direction, float(p))
    return best


@dataclass(frozen=True)
class MomentEstimate:
    """
    Attributes:
        value (float): Estimate
        half_width (float): Confidence half-width
        n_samples (int): Samples used
        escalations (int): Number of sample doublings
    """
    value: float
    half_width: float
    n_samples: int
    escalations: int = 0


def _power_chunk(item: tuple[int, int], v: ProductVector, norm: NormSpec, p: float, seed: int, block: int,
                 center: float | None, thresholds: tuple[float, ...]) -> tuple[LogMoments, np.ndarray]:
    chunk, size = item
    values = norm(v.sample_chunk(seed, block, chunk, size))
    if center is not None:
        values = np.abs(values - center)
    with np.errstate(divide='ignore'):
        logs = p * np.log(values)
    counts = np.array([int(np.count_nonzero(values > t)) for t in thresholds], dtype=np.int64)
    return LogMoments.from_log_values(logs), counts


def _run_power_block(v: ProductVector, norm: NormSpec, p: float, n_samples: int, seed: int, block: int,
                     workers: int, center: float | None = None,
                     thresholds: tuple[float, ...] = ()) -> tuple[LogMoments, np.ndarray]:
    results = ordered_map(partial(_power_chunk, v=v, norm=norm, p=p, seed=seed, block=block, center=center,
                                  thresholds=thresholds), chunk_layout(n_samples, chunk_size), workers,
                          desc=f'Moments p={p:g}')
    counts = np.sum([r[1] for r in results], axis=0) if thresholds else np.zeros(0, dtype=np.int64)
    return LogMoments.combine(r[0] for r in results), counts


def _root_estimate(m: LogMoments, p: float) -> tuple[float, float]:
    """(E Z)^{1/p} and its delta-method half-width."""
    if m.log_mean == -math.inf:
        return 0.0, 0.0
    value = math.exp(m.log_mean / p)
    return value, confidence_z * value * m.relative_standard_error / p


def _escalate(estimator, n_samples: int, what: str) -> MomentEstimate:
    """Doubles the sample size until the half-width is within relative_precision, up to max_escalation."""
    n, doublings = n_samples, 0
    while True:
        value, half_width = estimator(n)
        if half_width <= relative_precision * value or (value == 0.0 and half_width == 0.0):
            return MomentEstimate(value, half_width, n, doublings)
        if 2 * n > n_samples * max_escalation:
            raise PrecisionError(half_width, value, n)
        n *= 2
        doublings += 1
        logger.info(f'{what}: half-width {half_width:.4g} above target, escalating to {n} samples')


def strong_moment(v: ProductVector, norm: NormSpec, p: float, n_samples: int, seed: int,
                  workers: int = 1) -> MomentEstimate:
    """(E ||X||^p)^{1/p} by Monte Carlo."""
    if p < 2:
        raise ValueError(f'strong moments need p >= 2, got {p}')

    def estimator(n):
        m, _ = _run_power_block(v, norm, p, n, seed, STRONG_BLOCK, workers)
        return _root_estimate(m, p)

    return _escalate(estimator, n_samples, f'strong moment p={p:g}')


def mean_norm(v: ProductVector, norm: NormSpec, n_samples: int, seed: int, workers: int = 1) -> MomentEstimate:
    """E ||X|| on its own block."""

    def estimator(n):
        m, _ = _run_power_block(v, norm, 1.0, n, seed, MEAN_BLOCK, workers)
        return _root_estimate(m, 1.0)

    return _escalate(estimator, n_samples, 'mean norm')


def _central(v: ProductVector, norm: NormSpec, p: float, n_samples: int, seed: int, workers: int,
             thresholds: tuple[float, ...] = ()) -> tuple[MomentEstimate, MomentEstimate, np.ndarray]:
    mean = mean_norm(v, norm, n_samples, seed, workers)
    counts_holder = {}

    def estimator(n):
        m, counts = _run_power_block(v, norm, p, n, seed, CENTRAL_BLOCK, workers, mean.value, thresholds)
        counts_holder['counts'] = counts
        value, half_width = _root_estimate(m, p)
        # moving the center by h moves ||Z - c||_p by at most h
        return value, math.hypot(half_width, mean.half_width)

    central = _escalate(estimator, n_samples, f'central moment p={p:g}')
    return central, mean, counts_holder['counts']


def central_moment(v: ProductVector, norm: NormSpec, p: float, n_samples: int, seed: int,
                   workers: int = 1) -> MomentEstimate:
    """(E | ||X|| - E||X|| |^p)^{1/p}, centered with E||X|| from an independent block."""
    if p < 2:
        raise ValueError(f'central moments need p >= 2, got {p}')
    return _central(v, norm, p, n_samples, seed, workers)[0]


def lemma_4_1_check(v: ProductVector, p: float, u, alpha: float | None = None) -> CertificateReport:
    """
    Lambda_X(p u / (2e alpha)) <= p when ||<u, X>||_p <= 1.
    :param v: ProductVector
    :param p: Order, p >= 2
    :param u: Direction with ||<u, X>||_p <= 1
    :param alpha: Regularity constant; measured with p_max = 2p when None
    :return: CertificateReport (a failed precondition is reported, the inequality is then vacuous)
    """
    if p < 2:
        raise ValueError(f'moment order must be at least 2, got {p}')
    u = np.asarray(u, dtype=float)
    alpha = v.regularity_alpha(2.0 * p) if alpha is None else alpha
    q = 2 * math.ceil(p / 2.0)
    form_norm = linear_form_moment(v, u, q) ** (1.0 / q) if np.any(u) else 0.0
    constants = {'alpha': alpha, 'beta_1': BETA_1}
    grid = {'p': p, 'u': u.tolist()}
    if form_norm > 1.0 + lemma_tolerance:
        return CertificateReport('lemma_4_1', math.inf, (), grid, constants, lemma_tolerance,
                                 {'precondition': False, 'form_norm_upper': form_norm})
    value = v.cumulant(p * u / (2.0 * math.e * alpha))
    return CertificateReport('lemma_4_1', p - value, tuple(u.tolist()), grid, constants, lemma_tolerance,
                             {'precondition': True, 'form_norm_upper': form_norm, 'cumulant': value})


def lemma_4_2_slope(v: ProductVector, norm: NormSpec, beta: float, p: float, alpha: float | None = None,
                    sigma: float | None = None) -> float:
    """a = p / (2e alpha beta sigma(p))."""
    alpha = v.regularity_alpha(2.0 * p) if alpha is None else alpha
    sigma = weak_moment(v, norm, p).value if sigma is None else sigma
    return p / (2.0 * math.e * alpha * beta * sigma)


def _grid_infimum(v: ProductVector, norm: NormSpec, beta: float, a: float, x: np.ndarray,
                  points: int) -> tuple[float, bool]:
    """Brute-force inf over a box around the segment [0, x]; the flag tells whether the minimum sits on the box edge."""
    pad = 0.25 * (np.max(np.abs(x)) + 1.0)
    for widening in range(4):
        axes = [np.linspace(min(0.0, xi) - pad, max(0.0, xi) + pad, points) for xi in x]
        costs = [d.cramer_values(ax / beta) for d, ax in zip(v.coordinates, axes)]
        mesh = np.meshgrid(*axes, indexing='ij')
        cost = sum(np.meshgrid(*costs, indexing='ij'))
        y = np.stack([m.ravel() for m in mesh], axis=1)
        total = cost.ravel() + a * norm(x[None, :] - y)
        k = int(np.argmin(total))
        index = np.unravel_index(k, cost.shape)
        on_edge = any(i in (0, points - 1) for i in index)
        if not on_edge:
            return float(total[k]), False
        pad *= 4.0
    raise GridSpanError(f'Infimum at x = {x.tolist()} stays on the grid boundary after widening to pad {pad / 4:g}')


def lemma_4_2_check(v: ProductVector, norm: NormSpec, beta: float, p: float, probes,
                    points: int | None = None, alpha: float | None = None,
                    sigma: float | None = None) -> CertificateReport:
    """
    (Phi(./beta) inf-conv a||.||)(x) >= a||x|| - p at each probe, by brute-force grid infimum (n = 1 or 2).
    :param v: ProductVector of dimension 1 or 2
    :param norm: NormSpec
    :param beta: Cost scaling
    :param p: Order, p >= 2
    :param probes: Probe points, shape (k, n) or (k,) for n = 1
    :param points: Grid points per axis
    :param alpha: Regularity constant; measured when None
    :param sigma: Weak moment; computed when None
    :return: CertificateReport with the margin profile in details
    """
    if v.n not in (1, 2):
        raise ValueError('the grid infimum supports dimensions 1 and 2')
    if p < 2:
        raise ValueError(f'moment order must be at least 2, got {p}')
    probes = np.asarray(probes, dtype=float).reshape(-1, v.n)
    points = points or (2001 if v.n == 1 else 301)
    alpha = v.regularity_alpha(2.0 * p) if alpha is None else alpha
    sigma = weak_moment(v, norm, p).value if sigma is None else sigma
    a = lemma_4_2_slope(v, norm, beta, p, alpha, sigma)
    margins = []
    for x in probes:
        infimum, _ = _grid_infimum(v, norm, beta, a, x, points)
        margins.append(infimum - (a * float(norm(x[None, :])[0]) - p))
    margins = np.asarray(margins)
    k = int(np.argmin(margins))
    return CertificateReport('lemma_4_2', float(margins[k]), tuple(probes[k].tolist()),
                             {'probes': int(probes.shape[0]), 'points_per_axis': points},
                             {'alpha': alpha, 'beta': beta, 'sigma': sigma, 'a': a}, certificate_tolerance,
                             {'margins': margins.tolist()})


@dataclass
class MomentReport:
    """
    Moment comparison for one order p. Ratios are computed from the fields of the same report.

    Attributes:
        p (float): Order
        norm (str): Norm kind
        n (int): Dimension
        sigma (float): Weak moment (or lower bound)
        sigma_exact (bool): Whether sigma is exact
        strong (MomentEstimate): (E||X||^p)^{1/p}
        central (MomentEstimate): (E| ||X|| - E||X|| |^p)^{1/p}
        mean (MomentEstimate): E||X||
        alpha (float): Regularity constant used
        beta (float): ICI constant used
        moment_c (float): Constant C
        moment_d (float): Constant D
        tail_checks (list): Empirical tail probabilities against 2 exp(-t/2)
        integral_margin (float): ln(2 (2p)^p) - ln(a^p E|.|^p)
        seed (int): Run seed
    """
    p: float
    norm: str
    n: int
    sigma: float
    sigma_exact: bool
    strong: MomentEstimate
    central: MomentEstimate
    mean: MomentEstimate
    alpha: float
    beta: float
    moment_c: float
    moment_d: float
    tail_checks: list = field(default_factory=list)
    integral_margin: float = math.inf
    seed: int = default_seed

    @property
    def ratio_c(self) -> float:
        return self.central.value / (self.alpha * self.beta * self.sigma)

    @property
    def ratio_c_lower(self) -> float:
        return max(self.central.value - self.central.half_width, 0.0) / (self.alpha * self.beta * self.sigma)

    @property
    def ratio_d(self) -> float:
        return (self.strong.value - self.mean.value) / self.sigma

    @property
    def ratio_d_lower(self) -> float:
        gap = self.strong.value - self.strong.half_width - self.mean.value - self.mean.half_width
        return gap / self.sigma

    @property
    def passed(self) -> bool:
        tails = all(c['empirical_lower'] <= c['bound'] for c in self.tail_checks)
        return (self.ratio_c_lower <= self.moment_c and self.ratio_d_lower <= self.moment_d and tails
                and self.integral_margin >= -certificate_tolerance)

    def to_row(self) -> dict:
        return {'p': self.p, 'norm': self.norm, 'n': self.n, 'sigma': self.sigma, 'sigma_exact': self.sigma_exact,
                'strong': self.strong.value, 'strong_half_width': self.strong.half_width,
                'central': self.central.value, 'central_half_width': self.central.half_width,
                'mean': self.mean.value, 'mean_half_width': self.mean.half_width, 'alpha': self.alpha,
                'beta': self.beta, 'ratio_c': self.ratio_c, 'C': self.moment_c, 'ratio_d': self.ratio_d,
                'D': self.moment_d, 'integral_margin': self.integral_margin,
                'n_samples': self.strong.n_samples, 'seed': self.seed, 'pass': self.passed}

    def to_dict(self) -> dict:
        return {**self.to_row(), 'tail_checks': self.tail_checks,
                'sigma_note': '' if self.sigma_exact else 'sigma lower bound: ratio is an upper estimate'}


def _moment_report(v: ProductVector, norm: NormSpec, p: float, n_samples: int, seed: int, workers: int,
                   alpha: float) -> MomentReport:
    constants = assemble_constants()
    beta = constants.beta
    sigma = weak_moment(v, norm, p, seed)
    a = p / (2.0 * math.e * alpha * beta * sigma.value)
    multiples = (2.0, 3.0, 4.0)
    thresholds = tuple(m * p / a for m in multiples)
    central, mean, counts = _central(v, norm, p, n_samples, seed, workers, thresholds)
    strong = strong_moment(v, norm, p, n_samples, seed, workers)
    tail_checks = []
    for m, count in zip(multiples, counts):
        frequency = count / central.n_samples
        spread = confidence_z * math.sqrt(max(frequency * (1.0 - frequency), 0.0) / central.n_samples)
        tail_checks.append({'t': m * p, 'empirical': frequency, 'empirical_lower': max(frequency - spread, 0.0),
                            'bound': 2.0 * math.exp(-m * p / 2.0)})
    if central.value > 0:
        integral_margin = math.log(2.0) + p * math.log(2.0 * p) - p * (math.log(a) + math.log(central.value))
    else:
        integral_margin = math.inf
    report = MomentReport(p, norm.kind, v.n, sigma.value, sigma.exact, strong, central, mean, alpha, beta,
                          constants.moment_c, constants.moment_d, tail_checks, integral_margin, seed)
    logger.info(f'Moments p={p:g} ({norm.kind}, n={v.n}): ratio C {report.ratio_c:.4g}, ratio D {report.ratio_d:.4g}')
    return report


def theorem_2_4_check(v: ProductVector, norm: NormSpec, p: float, n_samples: int, seed: int = default_seed,
                      workers: int = 1, alpha: float | None = None) -> MomentReport:
    """
    Central moment against C alpha beta sigma(p), strong moment gap against D sigma(p), the tail bound
    P(a | ||X|| - E||X|| | > t) <= 2 exp(-t/2) at t = 2p, 3p, 4p and the integral step a^p E|.|^p <= 2 (2p)^p.
    :param v: ProductVector
    :param norm: NormSpec
    :param p: Order, p >= 2
    :param n_samples: Samples per block
    :param seed: Run seed
    :param workers: Pool size
    :param alpha: Regularity constant; measured with p_max = 2p when None
    :return: MomentReport
    """
    if p < 2:
        raise ValueError(f'moment comparison needs p >= 2, got {p}')
    alpha = v.regularity_alpha(2.0 * p) if alpha is None else alpha
    return _moment_report(v, norm, p, n_samples, seed, workers, alpha)


def corollary_2_5_check(v: ProductVector, norm: NormSpec, p: float, n_samples: int, seed: int = default_seed,
                        workers: int = 1) -> MomentReport:
    """Same report with alpha = 1, which log-concave coordinates guarantee."""
    if p < 2:
        raise ValueError(f'moment comparison needs p >= 2, got {p}')
    rough = [d.name for d in v.distinct() if not d.tail.log_concave]
    if rough:
        raise DistributionError(f'Coordinates without log-concave tails: {rough}')
    return _moment_report(v, norm, p, n_samples, seed, workers, 1.0)
