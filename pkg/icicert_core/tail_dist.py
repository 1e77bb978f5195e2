import logging
import math
import warnings
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.special import logsumexp, xlogy

from config import (chunk_size, convexity_tolerance, cumulant_grid_points, cumulant_span_cap, debug_mode,
                    dyadic_max_exponent, moment_grid_size, quadrature_log_drop, quadrature_rtol,
                    quadrature_truncation_cap)
from icicert_core.convex_fn import GridFunction, conjugate_values, convex_minorant, legendre_transform
from icicert_core.errors import ConvexityError, DistributionError, QuadratureError
from icicert_utils.utils import chunk_generator, chunk_layout, open_uniforms

LN2 = math.log(2.0)

logger = logging.getLogger(f"{__name__}")


def _arr(t) -> np.ndarray:
    return np.asarray(t, dtype=float)


def _log_sinh(z: np.ndarray) -> np.ndarray:
    """ln sinh(z) for z >= 0, -inf at 0."""
    z = _arr(z)
    with np.errstate(divide='ignore'):
        return np.where(z > 0, z + np.log1p(-np.exp(-2.0 * z)) - LN2, -np.inf)


class TailFunction:
    """
    Tail exponent N(t) = -ln P(|X| >= t) of a symmetric law on t >= 0.

    N is left-continuous; N_right(t) = -ln P(|X| > t) is its right-continuous version. level_inverse(y) is
    inf{t >= 0 : N_right(t) >= y} and level_sup(y) is sup{t >= 0 : N(t) <= y}; together they give the quantile.
    """
    kind: str = 'abstract'
    atomic: bool = False

    @property
    def endpoint(self) -> float:
        return math.inf

    @property
    def log_concave(self) -> bool:
        raise NotImplementedError

    @property
    def strictly_increasing(self) -> bool:
        raise NotImplementedError

    @property
    def asymptotic_slope(self) -> float:
        """lim N(t)/t; the cumulant is finite exactly for |s| below it."""
        raise NotImplementedError

    def N(self, t) -> np.ndarray:
        raise NotImplementedError

    def N_right(self, t) -> np.ndarray:
        return self.N(t)

    def level_inverse(self, y) -> np.ndarray:
        raise NotImplementedError

    def level_sup(self, y) -> np.ndarray:
        raise NotImplementedError

    def breaks(self, t_max: float) -> np.ndarray:
        """Points in (0, t_max] where N is not smooth."""
        return np.empty(0)

    def atoms(self) -> tuple[np.ndarray, np.ndarray]:
        """Atom locations of |X| and their log-masses (atomic laws only)."""
        raise NotImplementedError(f'{self.kind} is not atomic')

    def jump_levels(self, y_max: float) -> np.ndarray:
        """Levels where the quantile transport jumps (flat stretches of N)."""
        return np.empty(0)

    def flat_intervals(self, t_max: float) -> list[tuple[float, float]]:
        """Intervals [s, e) on which 0 < P(|X| > t) < 1 is constant."""
        return []

    def closed_form_cumulant(self, s: float) -> float | None:
        return None

    def closed_form_cosine(self, u: float) -> float | None:
        return None

    def describe(self) -> dict:
        return {'kind': self.kind}


class PowerTail(TailFunction):
    kind = 'power'

    def __init__(self, c: float, r: float):
        """
        N(t) = c t^r.
        :param c: Scale, c > 0
        :param r: Exponent, r > 0
        """
        if not (c > 0 and r > 0):
            raise DistributionError(f'power tail needs c > 0 and r > 0, got c={c}, r={r}')
        self.c = float(c)
        self.r = float(r)

    @property
    def log_concave(self) -> bool:
        return self.r >= 1

    @property
    def strictly_increasing(self) -> bool:
        return True

    @property
    def asymptotic_slope(self) -> float:
        if self.r > 1:
            return math.inf
        return self.c if self.r == 1 else 0.0

    def N(self, t):
        return self.c * np.power(np.maximum(_arr(t), 0.0), self.r)

    def level_inverse(self, y):
        return np.power(np.maximum(_arr(y), 0.0) / self.c, 1.0 / self.r)

    def level_sup(self, y):
        return self.level_inverse(y)

    def closed_form_cumulant(self, s: float) -> float | None:
        if self.r != 1:
            return None
        if s >= self.c:
            return math.inf
        u = s / self.c
        return -math.log1p(-u) - math.log1p(u)

    def closed_form_cosine(self, u: float) -> float | None:
        if self.r != 1:
            return None
        return 1.0 / (1.0 + (u / self.c) ** 2)

    def describe(self) -> dict:
        return {'kind': self.kind, 'c': self.c, 'r': self.r}


class FiniteSupportTail(TailFunction):
    kind = 'finite_support'
    atomic = True

    def __init__(self, a: float):
        """|X| = a almost surely: N = 0 on [0, a], +inf beyond."""
        if not a > 0:
            raise DistributionError(f'finite support needs a > 0, got {a}')
        self.a = float(a)

    @property
    def endpoint(self) -> float:
        return self.a

    @property
    def log_concave(self) -> bool:
        return True

    @property
    def strictly_increasing(self) -> bool:
        return False

    @property
    def asymptotic_slope(self) -> float:
        return math.inf

    def N(self, t):
        return np.where(_arr(t) <= self.a, 0.0, np.inf)

    def N_right(self, t):
        return np.where(_arr(t) < self.a, 0.0, np.inf)

    def level_inverse(self, y):
        return np.where(_arr(y) <= 0, 0.0, self.a)

    def level_sup(self, y):
        return np.full(np.shape(y), self.a)

    def atoms(self):
        return np.array([self.a]), np.array([0.0])

    def jump_levels(self, y_max: float) -> np.ndarray:
        return np.array([0.0])

    def describe(self) -> dict:
        return {'kind': self.kind, 'a': self.a}


class PiecewiseLinearTail(TailFunction):
    kind = 'piecewise_linear'

    def __init__(self, breakpoints, values, endpoint: float | None = None):
        """
        N interpolated linearly between knots, continued with the last slope, and +inf beyond an optional endpoint a
        (N(a) finite gives an atom at a).
        :param breakpoints: Knots, starting at 0, strictly increasing
        :param values: N at the knots, starting at 0, non-decreasing
        :param endpoint: Optional endpoint a
        """
        t = _arr(breakpoints).ravel()
        n = _arr(values).ravel()
        if t.size < 2 or t.shape != n.shape:
            raise DistributionError('piecewise-linear tail needs at least two knots and matching values')
        if t[0] != 0 or n[0] != 0:
            raise DistributionError('N(0) must be 0')
        if not (np.diff(t) > 0).all():
            raise DistributionError('knots must be strictly increasing')
        if not np.isfinite(n).all():
            raise DistributionError('knot values must be finite; use endpoint for +inf')
        decreasing = np.flatnonzero(np.diff(n) < 0)
        if decreasing.size:
            raise DistributionError(f'N decreases after t = {t[decreasing[0]]!r}')
        if endpoint is not None:
            if not endpoint > 0:
                raise DistributionError('endpoint must be positive')
            value_at_end = float(np.interp(endpoint, t, n)) if endpoint <= t[-1] else \
                float(n[-1] + (n[-1] - n[-2]) / (t[-1] - t[-2]) * (endpoint - t[-1]))
            keep = t < endpoint
            t = np.append(t[keep], endpoint)
            n = np.append(n[keep], value_at_end)
        elif n[-1] - n[-2] <= 0:
            raise DistributionError('N must grow without bound: last slope must be positive')
        self._t = t
        self._n = n
        self._slopes = np.diff(n) / np.diff(t)
        self._endpoint = math.inf if endpoint is None else float(endpoint)

    @property
    def endpoint(self) -> float:
        return self._endpoint

    @property
    def log_concave(self) -> bool:
        s = self._slopes
        return bool((np.diff(s) >= -convexity_tolerance * np.maximum(1.0, np.abs(s[1:]))).all())

    @property
    def strictly_increasing(self) -> bool:
        return bool((self._slopes > 0).all())

    @property
    def asymptotic_slope(self) -> float:
        return math.inf if math.isfinite(self._endpoint) else float(self._slopes[-1])

    def N(self, t):
        t = _arr(t)
        out = np.interp(t, self._t, self._n)
        beyond = t > self._t[-1]
        if math.isfinite(self._endpoint):
            return np.where(beyond, np.inf, out)
        return np.where(beyond, self._n[-1] + self._slopes[-1] * (t - self._t[-1]), out)

    def N_right(self, t):
        out = self.N(t)
        if math.isfinite(self._endpoint):
            out = np.where(_arr(t) >= self._endpoint, np.inf, out)
        return out

    def _beyond_last(self, y: np.ndarray) -> np.ndarray:
        if math.isfinite(self._endpoint):
            return np.full(y.shape, self._endpoint)
        return self._t[-1] + (y - self._n[-1]) / self._slopes[-1]

    def _interpolate(self, y: np.ndarray, k: np.ndarray) -> np.ndarray:
        km = np.clip(k, 1, self._t.size - 1)
        lo_t, hi_t = self._t[km - 1], self._t[km]
        lo_n, hi_n = self._n[km - 1], self._n[km]
        with np.errstate(invalid='ignore', divide='ignore'):
            frac = np.where(hi_n > lo_n, (y - lo_n) / np.where(hi_n > lo_n, hi_n - lo_n, 1.0), 0.0)
        return lo_t + frac * (hi_t - lo_t)

    def level_inverse(self, y):
        y = np.maximum(_arr(y), 0.0)
        k = np.searchsorted(self._n, y, side='left')
        out = np.where(k == 0, 0.0, self._interpolate(y, k))
        return np.where(k >= self._t.size, self._beyond_last(y), out)

    def level_sup(self, y):
        y = np.maximum(_arr(y), 0.0)
        k = np.searchsorted(self._n, y, side='right')
        out = self._interpolate(y, k)
        return np.where(k >= self._t.size, self._beyond_last(y), out)

    def breaks(self, t_max: float) -> np.ndarray:
        b = self._t[1:]
        return b[b <= t_max]

    def jump_levels(self, y_max: float) -> np.ndarray:
        flat = self._slopes == 0
        levels = self._n[:-1][flat]
        return levels[levels <= y_max]

    def flat_intervals(self, t_max: float) -> list[tuple[float, float]]:
        return [(float(self._t[k]), float(self._t[k + 1])) for k in np.flatnonzero(self._slopes == 0)
                if self._t[k] <= t_max and 0 < self._n[k] < math.inf]

    def describe(self) -> dict:
        return {'kind': self.kind, 'breakpoints': self._t.tolist(), 'values': self._n.tolist(),
                'endpoint': None if math.isinf(self._endpoint) else self._endpoint}


class DyadicTail(TailFunction):
    """
    Tail P(|X| > t) = 1 on [0, 2) and e^{-2^k} on [2^k, 2^{k+1}): atoms at 2^k, flat tail between them.
    """
    kind = 'dyadic_example'
    atomic = True

    def __init__(self, max_exponent: int = dyadic_max_exponent):
        self.max_exponent = int(max_exponent)

    @property
    def log_concave(self) -> bool:
        return False

    @property
    def strictly_increasing(self) -> bool:
        return False

    @property
    def asymptotic_slope(self) -> float:
        return 0.5

    def N(self, t):
        t = _arr(t)
        with np.errstate(divide='ignore'):
            k = np.ceil(np.log2(np.maximum(t, 1.0))) - 1.0
        return np.where(t <= 2.0, 0.0, np.exp2(k))

    def N_right(self, t):
        t = _arr(t)
        with np.errstate(divide='ignore'):
            k = np.floor(np.log2(np.maximum(t, 1.0)))
        return np.where(t < 2.0, 0.0, np.exp2(k))

    def level_inverse(self, y):
        y = _arr(y)
        with np.errstate(divide='ignore', invalid='ignore'):
            k = np.maximum(1.0, np.ceil(np.log2(np.where(y > 0, y, 1.0))))
        return np.where(y <= 0, 0.0, np.exp2(k))

    def level_sup(self, y):
        y = _arr(y)
        with np.errstate(divide='ignore', invalid='ignore'):
            k = np.floor(np.log2(np.where(y >= 2.0, y, 2.0)))
        return np.where(y < 2.0, 2.0, np.exp2(k + 1.0))

    def breaks(self, t_max: float) -> np.ndarray:
        b = np.exp2(np.arange(1, self.max_exponent + 1, dtype=float))
        return b[b <= t_max]

    def atoms(self):
        k = np.arange(1, self.max_exponent + 1, dtype=float)
        locations = np.exp2(k)
        half = np.exp2(k - 1.0)
        log_masses = -half + np.log(-np.expm1(-half))
        log_masses[0] = math.log(-math.expm1(-2.0))
        return locations, log_masses

    def jump_levels(self, y_max: float) -> np.ndarray:
        levels = np.exp2(np.arange(1, self.max_exponent + 1, dtype=float))
        return np.concatenate([[0.0], levels[levels <= y_max]])

    def flat_intervals(self, t_max: float) -> list[tuple[float, float]]:
        return [(2.0 ** k, 2.0 ** (k + 1)) for k in range(1, self.max_exponent) if 2.0 ** k <= t_max]

    def describe(self) -> dict:
        return {'kind': self.kind, 'max_exponent': self.max_exponent}


class RegularizedTail(TailFunction):
    def __init__(self, base: TailFunction, eps: float, power: int):
        """
        N_eps(t) = N(t) v (eps t)^power.
        :param base: Tail to regularize
        :param eps: eps > 0
        :param power: 1 (strictly increasing N) or 2 (cumulant finite everywhere)
        """
        if not eps > 0:
            raise ValueError(f'regularization needs eps > 0, got {eps}')
        if power not in (1, 2):
            raise ValueError('power must be 1 or 2')
        self.base = base
        self.eps = float(eps)
        self.power = power
        self.kind = 'regularized_linear' if power == 1 else 'regularized_quadratic'

    def _comparison(self, t):
        return np.power(self.eps * np.maximum(_arr(t), 0.0), self.power)

    def _comparison_inverse(self, y):
        return np.power(np.maximum(_arr(y), 0.0), 1.0 / self.power) / self.eps

    @property
    def endpoint(self) -> float:
        return self.base.endpoint

    @property
    def log_concave(self) -> bool:
        return self.base.log_concave

    @property
    def strictly_increasing(self) -> bool:
        return True

    @property
    def asymptotic_slope(self) -> float:
        if self.power == 2:
            return math.inf
        return max(self.base.asymptotic_slope, self.eps)

    def N(self, t):
        return np.maximum(self.base.N(t), self._comparison(t))

    def N_right(self, t):
        return np.maximum(self.base.N_right(t), self._comparison(t))

    def level_inverse(self, y):
        return np.minimum(self.base.level_inverse(y), self._comparison_inverse(y))

    def level_sup(self, y):
        return np.minimum(self.base.level_sup(y), self._comparison_inverse(y))

    def breaks(self, t_max: float) -> np.ndarray:
        return self.base.breaks(t_max)

    def jump_levels(self, y_max: float) -> np.ndarray:
        return self.base.jump_levels(y_max)

    def describe(self) -> dict:
        return {'kind': self.kind, 'eps': self.eps, 'base': self.base.describe()}


class ScaledTail(TailFunction):
    def __init__(self, base: TailFunction, scale: float):
        """Tail of scale * X: N'(t) = N(t / scale)."""
        if not scale > 0:
            raise ValueError(f'scale must be positive, got {scale}')
        if isinstance(base, ScaledTail):
            scale *= base.scale
            base = base.base
        self.base = base
        self.scale = float(scale)
        self.kind = base.kind
        self.atomic = base.atomic

    @property
    def endpoint(self) -> float:
        return self.scale * self.base.endpoint

    @property
    def log_concave(self) -> bool:
        return self.base.log_concave

    @property
    def strictly_increasing(self) -> bool:
        return self.base.strictly_increasing

    @property
    def asymptotic_slope(self) -> float:
        return self.base.asymptotic_slope / self.scale

    def N(self, t):
        return self.base.N(_arr(t) / self.scale)

    def N_right(self, t):
        return self.base.N_right(_arr(t) / self.scale)

    def level_inverse(self, y):
        return self.scale * self.base.level_inverse(y)

    def level_sup(self, y):
        return self.scale * self.base.level_sup(y)

    def breaks(self, t_max: float) -> np.ndarray:
        return self.scale * self.base.breaks(t_max / self.scale)

    def atoms(self):
        locations, log_masses = self.base.atoms()
        return self.scale * locations, log_masses

    def jump_levels(self, y_max: float) -> np.ndarray:
        return self.base.jump_levels(y_max)

    def flat_intervals(self, t_max: float) -> list[tuple[float, float]]:
        return [(self.scale * s, self.scale * e) for s, e in self.base.flat_intervals(t_max / self.scale)]

    def closed_form_cumulant(self, s: float) -> float | None:
        return self.base.closed_form_cumulant(self.scale * s)

    def closed_form_cosine(self, u: float) -> float | None:
        return self.base.closed_form_cosine(self.scale * u)

    def describe(self) -> dict:
        return {'kind': self.kind, 'scale': self.scale, 'base': self.base.describe()}


EXPONENTIAL_REFERENCE = PowerTail(1.0, 1.0)


def reference_cdf(x) -> np.ndarray:
    """CDF of the symmetric exponential measure."""
    x = _arr(x)
    return np.where(x >= 0, 1.0 - 0.5 * np.exp(-np.abs(x)), 0.5 * np.exp(-np.abs(x)))


class Distribution:
    def __init__(self, tail: TailFunction, name: str | None = None):
        """
        Symmetric law defined by its tail exponent. Moments, cumulant grids and the canonical factor are computed
        lazily and cached.
        :param tail: TailFunction
        :param name: Display name used in reports
        """
        self.tail = tail
        self.name = name or tail.kind
        self.logger = logging.getLogger(f"{__name__}.{self.__class__.__name__}")
        self._cumulant_grids: dict[float, GridFunction] = {}

    def describe(self) -> dict:
        return {'name': self.name, 'tail': self.tail.describe(), 'log_concave': self.tail.log_concave}

    def transport_range(self) -> tuple[float, bool]:
        """
        Range of the quantile transport of the exponential measure onto X.
        :return: (a, closed) for [-a, a] when N(a) is finite, (-a, a) otherwise
        """
        a = self.tail.endpoint
        return a, bool(math.isfinite(a) and math.isfinite(float(self.tail.N(a))))

    @cached_property
    def second_moment(self) -> float:
        return self.abs_moment(2.0)

    @cached_property
    def canonical_factor(self) -> float:
        """lambda with E (lambda X)^2 = (2e)^-2."""
        if not self.second_moment > 0:
            raise DistributionError('E X^2 = 0: the law is a.s. zero')
        return 1.0 / (2.0 * math.e * math.sqrt(self.second_moment))

    def cdf(self, t) -> np.ndarray:
        t = _arr(t)
        a = np.abs(t)
        return np.where(t >= 0, 1.0 - 0.5 * np.exp(-self.tail.N_right(a)), 0.5 * np.exp(-self.tail.N(a)))

    def quantile(self, u) -> np.ndarray:
        """
        Generalized inverse inf{x : F(x) >= u}.
        :param u: Probabilities in (0, 1)
        :return: Quantiles
        """
        u = _arr(u)
        if np.isnan(u).any() or ((u <= 0) | (u >= 1)).any():
            raise ValueError('quantile needs u in the open interval (0, 1)')
        upper = u > 0.5
        up_level = -(LN2 + np.log1p(-np.where(upper, u, 0.25)))
        low_level = -np.log(2.0 * np.where(upper, 0.25, u))
        return np.where(upper, self.tail.level_inverse(up_level), -self.tail.level_sup(low_level))

    def sample_chunk(self, seed: int, block: int, chunk: int, size: int, coordinate: int = 0) -> np.ndarray:
        rng = chunk_generator(seed, block, chunk, coordinate)
        return self.quantile(open_uniforms(rng, size))

    def sample(self, seed: int, n: int, block: int = 0, coordinate: int = 0) -> np.ndarray:
        """Inverse-CDF samples drawn from per-chunk streams."""
        parts = [self.sample_chunk(seed, block, chunk, size, coordinate) for chunk, size in chunk_layout(n, chunk_size)]
        return np.concatenate(parts) if parts else np.empty(0)

    def _truncation_point(self, log_density: Callable, hint: float) -> float:
        if math.isfinite(self.tail.endpoint):
            return float(self.tail.endpoint)
        t = max(1.0, hint)
        running = float(np.max(log_density(np.geomspace(1e-6, t, 64))))
        now = float(log_density(t))
        while t <= quadrature_truncation_cap:
            window = log_density(np.linspace(t, 2.0 * t, 17))
            running = max(running, float(np.max(window)))
            now, later = float(window[0]), float(window[-1])
            if now < running - quadrature_log_drop and later <= now:
                return 2.0 * t
            t *= 2.0
        raise QuadratureError('Tail integral does not decay', t, now)

    def _log_tail_integral(self, log_density: Callable, hint: float = 1.0) -> float:
        """
        ln of the integral over [0, inf) of exp(log_density), split at the kinks of N and at the peak.
        :param log_density: Vectorized log of the integrand
        :param hint: Scale where the integrand is expected to matter
        :return: Log of the integral
        """
        upper = self._truncation_point(log_density, hint)
        edges = np.concatenate([[0.0], self.tail.breaks(upper), [upper]])
        edges = np.unique(edges[(edges >= 0) & (edges <= upper)])
        probe = np.unique(np.concatenate([edges, np.linspace(0.0, upper, 257),
                                          upper * np.geomspace(1e-9, 1.0, 129)]))
        lp = log_density(probe)
        if not np.isfinite(lp).any():
            return -math.inf
        peak_index = int(np.argmax(np.where(np.isfinite(lp), lp, -np.inf)))
        shift = float(lp[peak_index])
        edges = np.unique(np.append(edges, probe[peak_index]))

        def integrand(t: float) -> float:
            v = float(log_density(t)) - shift
            return math.exp(v) if v > -745.0 else 0.0

        total = 0.0
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', IntegrationWarning)
            for lo, hi in zip(edges[:-1], edges[1:]):
                value, error = quad(integrand, lo, hi, epsabs=1e-15, epsrel=quadrature_rtol, limit=200)
                if error > 1e-6 * max(abs(value), 1e-12):
                    self.logger.warning(f'{self.name}: quadrature error {error:.3g} on [{lo:.6g}, {hi:.6g}]')
                total += value
        if debug_mode:
            self.logger.debug(f'{self.name}: tail integral on {edges.size - 1} pieces up to {upper:.6g}')
        return shift + math.log(total) if total > 0 else -math.inf

    def log_abs_moment(self, p: float) -> float:
        """ln E|X|^p."""
        if not p > 0:
            raise ValueError(f'moment order must be positive, got {p}')
        if self.tail.atomic:
            locations, log_masses = self.tail.atoms()
            return float(logsumexp(log_masses + p * np.log(locations)))

        def log_density(t):
            t = _arr(t)
            return math.log(p) + xlogy(p - 1.0, t) - self.tail.N(t)

        return self._log_tail_integral(log_density, hint=float(self.tail.level_inverse(p)))

    def abs_moment(self, p: float) -> float:
        """E|X|^p = integral of p t^{p-1} P(|X| >= t)."""
        return math.exp(self.log_abs_moment(p))

    def norm(self, p: float) -> float:
        """||X||_p."""
        return math.exp(self.log_abs_moment(p) / p)

    def cumulant(self, s: float, method: str = 'auto') -> float:
        """
        Lambda(s) = ln E e^{sX}, +inf where it diverges.
        :param s: Argument
        :param method: 'auto' (closed forms and atom sums when available) or 'quadrature'
        :return: Cumulant value
        """
        s = abs(float(s))
        if s == 0:
            return 0.0
        if s >= self.tail.asymptotic_slope:
            return math.inf
        if method == 'auto':
            closed = self.tail.closed_form_cumulant(s)
            if closed is not None:
                return closed
            if self.tail.atomic:
                locations, log_masses = self.tail.atoms()
                terms = np.concatenate([log_masses + s * locations, log_masses - s * locations])
                return float(logsumexp(terms)) - LN2
        elif method != 'quadrature':
            raise ValueError(f'Unknown method {method!r}')

        def log_density(t):
            t = _arr(t)
            return math.log(s) + _log_sinh(s * t) - self.tail.N(t)

        log_integral = self._log_tail_integral(log_density, hint=float(self.tail.level_inverse(1.0 + s)))
        return float(np.logaddexp(0.0, log_integral))

    def cosine_transform(self, u: float) -> float:
        """
        Characteristic function E cos(uX) = 1 - u * integral over [0, inf) of sin(ut) P(|X| > t).
        :param u: Argument
        :return: Value in [-1, 1]
        """
        u = abs(float(u))
        if u == 0:
            return 1.0
        closed = self.tail.closed_form_cosine(u)
        if closed is not None:
            return closed
        if self.tail.atomic:
            locations, log_masses = self.tail.atoms()
            return float(np.sum(np.exp(log_masses) * np.cos(u * locations)))

        def survival(t: float) -> float:
            return math.exp(-float(self.tail.N(t)))

        with warnings.catch_warnings():
            warnings.simplefilter('ignore', IntegrationWarning)
            # finite supports go through QAWO, unbounded ones through QAWF
            value, _ = quad(survival, 0.0, self.tail.endpoint, weight='sin', wvar=u, epsabs=1e-14,
                            epsrel=quadrature_rtol, limit=200)
        return 1.0 - u * value

    def cumulant_values(self, s) -> np.ndarray:
        s = _arr(s)
        magnitudes, inverse = np.unique(np.abs(s), return_inverse=True)
        values = np.array([self.cumulant(v) for v in magnitudes])
        return values[inverse].reshape(s.shape)

    def cumulant_grid(self, s_breakpoints) -> GridFunction:
        """
        Lambda on the given breakpoints; linear extensions when Lambda is finite everywhere. A bounded support of
        endpoint a adds one breakpoint on each side so that the extensions have slope exactly a.
        """
        s = _arr(s_breakpoints)
        ext = 'linear' if math.isinf(self.tail.asymptotic_slope) else 'inf'
        values = self.cumulant_values(s)
        a = self.tail.endpoint
        if ext == 'linear' and math.isfinite(a) and s.size > 1:
            # |Lambda'| <= a, so rays of slope a past the ends keep the grid above Lambda
            if s[0] < 0:
                s, values = np.concatenate([[2.0 * s[0]], s]), np.concatenate([[values[0] - a * s[0]], values])
            if s[-1] > 0:
                s, values = np.concatenate([s, [2.0 * s[-1]]]), np.concatenate([values, [values[-1] + a * s[-1]]])
        return GridFunction(s, values, ext, ext)

    def _cumulant_span(self, x_target: float) -> float:
        target = x_target
        if math.isfinite(self.tail.endpoint):
            target = min(target, self.tail.endpoint * (1.0 - 1e-12))
        span = 1.0
        while span < cumulant_span_cap:
            chord = (self.cumulant(span) - self.cumulant(span / 2.0)) / (span / 2.0)
            if chord >= target:
                return span
            span *= 2.0
        self.logger.warning(f'{self.name}: cumulant span capped at {cumulant_span_cap:g} for x up to {x_target:g}')
        return cumulant_span_cap

    def default_s_grid(self, x_max: float) -> np.ndarray:
        """
        Symmetric s-grid for the Cramer transform up to x_max: dense towards the divergence slope when Lambda has a
        bounded domain, otherwise wide enough that the chord slope of Lambda reaches x_max.
        """
        slope = self.tail.asymptotic_slope
        n = cumulant_grid_points
        if slope == 0:
            return np.array([0.0])
        if math.isfinite(slope):
            # slope (1 - e^-u): uniform near 0, geometric towards the slope down to a relative gap of 1e-6
            u = np.linspace(0.0, 6.0 * math.log(10.0), 2 * n)
            positive = -slope * np.expm1(-u)
        else:
            span = self._cumulant_span(x_max)
            # sinh spacing: fine near 0, geometric towards the span
            positive = span * np.sinh(np.linspace(0.0, 14.0, 2 * n)) / math.sinh(14.0)
            positive[-1] = span
        return np.concatenate([-positive[:0:-1], positive])

    def cumulant_grid_for(self, x_max: float) -> GridFunction:
        """Cached convex cumulant grid good for Cramer values on [-x_max, x_max]."""
        key = 2.0 ** math.ceil(math.log2(max(x_max, 1.0 / 64)))
        if key in self._cumulant_grids:
            return self._cumulant_grids[key]
        grid = self.cumulant_grid(self.default_s_grid(key))
        index = grid.convexity_violation()
        if index is not None:
            if grid.convexity_violation(1e-6) is not None:
                raise ConvexityError(index, f'{self.name}: cumulant grid is not convex at breakpoint {index}')
            self.logger.warning(f'{self.name}: rounding noise in cumulant grid at breakpoint {index}, using the '
                                f'lower convex hull')
            grid = convex_minorant(grid)
        if debug_mode:
            self.logger.debug(f'{self.name}: cumulant grid with {grid.x.size} points for |x| <= {key:g}')
        self._cumulant_grids[key] = grid
        return grid

    def cramer_values(self, x) -> np.ndarray:
        """Lambda* at arbitrary points (sup over the cached s-grid, a lower bound of the exact transform)."""
        x = _arr(x)
        if x.size == 0:
            return x
        grid = self.cumulant_grid_for(float(np.max(np.abs(x))))
        return conjugate_values(grid, x.ravel()).reshape(x.shape)

    def cramer_transform(self, x_breakpoints) -> GridFunction:
        x = _arr(x_breakpoints)
        return legendre_transform(self.cumulant_grid_for(float(np.max(np.abs(x)))), x)

    def regularity_alpha(self, p_max: float, n_grid: int = moment_grid_size) -> float:
        """
        sup over 2 <= q <= p <= p_max of (q/p) ||X||_p / ||X||_q on a geometric grid, a lower bound of the true sup.
        :param p_max: Largest moment order, >= 2
        :param n_grid: Number of grid values
        :return: Measured regularity constant
        """
        if p_max < 2:
            raise ValueError('regularity_alpha needs p_max >= 2')
        grid = np.geomspace(2.0, p_max, n_grid) if p_max > 2 else np.array([2.0])
        log_norms = np.array([self.log_abs_moment(p) / p for p in grid])
        log_ratio = np.log(grid)[None, :] - np.log(grid)[:, None] + log_norms[:, None] - log_norms[None, :]
        # rows p, columns q, only q <= p
        log_ratio[np.triu_indices(grid.size, k=1)] = -np.inf
        return float(np.exp(np.max(log_ratio)))


def make_distribution(tail: TailFunction, name: str | None = None) -> Distribution:
    """
    Validates N(0) = 0, monotonicity and decay, then wraps the tail. Log-concavity is recorded, not required.
    :param tail: TailFunction
    :param name: Display name
    :return: Distribution
    """
    if float(tail.N(0.0)) != 0.0:
        raise DistributionError('N(0) must be 0')
    upper = min(tail.endpoint, 1e6)
    probe = np.unique(np.concatenate([np.geomspace(1e-6, upper, 400), tail.breaks(upper)]))
    n = tail.N(probe)
    finite = np.isfinite(n)
    decreasing = np.flatnonzero(np.diff(n[finite]) < -convexity_tolerance * np.maximum(1.0, np.abs(n[finite][1:])))
    if decreasing.size:
        raise DistributionError(f'N decreases after t = {probe[finite][decreasing[0]]!r}')
    if math.isinf(tail.endpoint) and not float(tail.N(1e12)) > float(tail.N(1.0)):
        raise DistributionError('P(|X| >= t) does not vanish as t grows')
    d = Distribution(tail, name)
    logger.info(f'Distribution {d.name}: {tail.describe()}, log-concave tails: {tail.log_concave}')
    return d


def exponential() -> Distribution:
    return make_distribution(PowerTail(1.0, 1.0), 'exponential')


def rademacher() -> Distribution:
    return make_distribution(FiniteSupportTail(1.0), 'rademacher')


def power(c: float, r: float) -> Distribution:
    return make_distribution(PowerTail(c, r), f'power({c:g},{r:g})')


def finite_support(a: float) -> Distribution:
    return make_distribution(FiniteSupportTail(a), f'finite_support({a:g})')


def dyadic() -> Distribution:
    return make_distribution(DyadicTail(), 'dyadic')


def piecewise_linear(breakpoints, values, endpoint: float | None = None) -> Distribution:
    return make_distribution(PiecewiseLinearTail(breakpoints, values, endpoint), 'piecewise_linear')


def regularize_linear(tail: TailFunction, eps: float) -> TailFunction:
    """N v eps t: strictly increasing."""
    return RegularizedTail(tail, eps, 1)


def regularize_quadratic(tail: TailFunction, eps: float) -> TailFunction:
    """N v eps^2 t^2: cumulant finite everywhere."""
    return RegularizedTail(tail, eps, 2)


def scale_distribution(d: Distribution, scale: float) -> Distribution:
    """Law of scale * X."""
    return Distribution(ScaledTail(d.tail, scale), d.name)
