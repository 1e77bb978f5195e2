import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Literal

import numpy as np

from config import convexity_tolerance, cross_check_tolerance, debug_mode
from icicert_core.errors import ConvexityError, CrossCheckError, ImproperFunctionError, LevelUnreachableError

Extension = Literal['inf', 'linear']
Method = Literal['sweep', 'conjugate', 'cross']

logger = logging.getLogger(f"{__name__}")


def value_tolerance(values, tol: float = convexity_tolerance):
    """Absolute tolerance for |values| <= 1, relative above."""
    return tol * np.maximum(1.0, np.abs(values))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """
    Convex extended-real function, linear between breakpoints, +inf allowed as a value.

    Attributes:
        x (np.ndarray): Strictly increasing finite breakpoints
        values (np.ndarray): Value at each breakpoint, np.inf for +inf
        left (str): 'inf' for +inf left of the finite part, 'linear' for the first slope continued
        right (str): same for the right side
    """
    x: np.ndarray
    values: np.ndarray
    left: Extension = 'inf'
    right: Extension = 'inf'

    def __post_init__(self):
        x = np.array(self.x, dtype=float).ravel()
        v = np.array(self.values, dtype=float).ravel()
        if x.size == 0 or x.shape != v.shape:
            raise ValueError('Breakpoints and values must be non-empty and of equal length')
        if np.isnan(x).any() or np.isnan(v).any():
            raise ValueError('NaN in grid function')
        if not np.isfinite(x).all():
            raise ValueError('Breakpoints must be finite')
        if (v == -np.inf).any():
            raise ImproperFunctionError('Grid function takes the value -inf')
        if x.size > 1 and not (np.diff(x) > 0).all():
            raise ValueError('Breakpoints must be strictly increasing')
        if self.left not in ('inf', 'linear') or self.right not in ('inf', 'linear'):
            raise ValueError(f'Unknown extension {self.left!r}/{self.right!r}')
        finite = np.flatnonzero(np.isfinite(v))
        if finite.size == 0:
            raise ImproperFunctionError('Grid function is +inf everywhere')
        if finite[-1] - finite[0] + 1 != finite.size:
            raise ImproperFunctionError('Finite part of grid function is not a contiguous breakpoint range')
        # a one-point finite part carries no slope to extend
        left = self.left if finite[0] == 0 and finite.size > 1 else 'inf'
        right = self.right if finite[-1] == x.size - 1 and finite.size > 1 else 'inf'
        x.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, 'x', x)
        object.__setattr__(self, 'values', v)
        object.__setattr__(self, 'left', left)
        object.__setattr__(self, 'right', right)
        object.__setattr__(self, '_first', int(finite[0]))
        object.__setattr__(self, '_last', int(finite[-1]))

    @property
    def finite_x(self) -> np.ndarray:
        return self.x[self._first:self._last + 1]

    @property
    def finite_values(self) -> np.ndarray:
        return self.values[self._first:self._last + 1]

    @property
    def first_finite_index(self) -> int:
        return self._first

    @cached_property
    def slopes(self) -> np.ndarray:
        """Discrete slopes of the finite part."""
        return np.diff(self.finite_values) / np.diff(self.finite_x)

    @property
    def left_slope(self) -> float | None:
        return float(self.slopes[0]) if self.left == 'linear' else None

    @property
    def right_slope(self) -> float | None:
        return float(self.slopes[-1]) if self.right == 'linear' else None

    def __call__(self, t):
        t_arr = np.atleast_1d(np.asarray(t, dtype=float))
        xf, vf = self.finite_x, self.finite_values
        out = np.full(t_arr.shape, np.inf)
        inside = (t_arr >= xf[0]) & (t_arr <= xf[-1])
        out[inside] = np.interp(t_arr[inside], xf, vf)
        if self.left == 'linear':
            below = t_arr < xf[0]
            out[below] = vf[0] + self.slopes[0] * (t_arr[below] - xf[0])
        if self.right == 'linear':
            above = t_arr > xf[-1]
            out[above] = vf[-1] + self.slopes[-1] * (t_arr[above] - xf[-1])
        if np.isnan(out).any():
            raise ValueError('NaN evaluation point')
        return out if np.ndim(t) else float(out[0])

    def convexity_violation(self, tol: float = convexity_tolerance) -> int | None:
        """
        Single pass over the slopes.
        :param tol: Tolerance on slope decrease
        :return: Index (into x) of the first breakpoint where the slope decreases, None if convex
        """
        s = self.slopes
        if s.size < 2:
            return None
        bad = np.flatnonzero(np.diff(s) < -value_tolerance(s[1:], tol))
        if bad.size == 0:
            return None
        return int(bad[0]) + self._first + 1

    def is_convex(self, tol: float = convexity_tolerance) -> bool:
        return self.convexity_violation(tol) is None

    def require_convex(self, tol: float = convexity_tolerance):
        index = self.convexity_violation(tol)
        if index is not None:
            raise ConvexityError(index)

    def minimum(self) -> float:
        """Infimum over the real line; -inf if a ray decreases forever."""
        if self.left == 'linear' and self.slopes[0] > 0:
            return -np.inf
        if self.right == 'linear' and self.slopes[-1] < 0:
            return -np.inf
        return float(np.min(self.finite_values))

    def is_bounded_below(self) -> bool:
        return self.minimum() > -np.inf


def from_callable(fn: Callable[[np.ndarray], np.ndarray], x, left: Extension = 'inf',
                  right: Extension = 'inf') -> GridFunction:
    """Samples fn on the breakpoints x."""
    x = np.asarray(x, dtype=float)
    return GridFunction(x, fn(x), left, right)


def indicator(lo: float, hi: float) -> GridFunction:
    """0 on [lo, hi], +inf elsewhere."""
    if hi < lo:
        raise ValueError('indicator needs lo <= hi')
    if hi == lo:
        return GridFunction([lo], [0.0])
    return GridFunction([lo, hi], [0.0, 0.0])


def resample(f: GridFunction, x) -> GridFunction:
    """
    Piecewise-linear interpolant of f on new breakpoints.
    :param f: Function to resample
    :param x: New strictly increasing breakpoints
    :return: GridFunction on x; extended linearly where f is finite beyond x
    """
    x = np.asarray(x, dtype=float)
    values = f(x)
    left = 'linear' if f.left == 'linear' or x[0] > f.finite_x[0] else 'inf'
    right = 'linear' if f.right == 'linear' or x[-1] < f.finite_x[-1] else 'inf'
    return GridFunction(x, values, left, right)


def add(f: GridFunction, g: GridFunction) -> GridFunction:
    """Pointwise sum on the union of breakpoints."""
    u = np.union1d(f.x, g.x)
    left = 'linear' if f.left == 'linear' and g.left == 'linear' else 'inf'
    right = 'linear' if f.right == 'linear' and g.right == 'linear' else 'inf'
    return GridFunction(u, f(u) + g(u), left, right)


def conjugate_values(f: GridFunction, y, tol: float = convexity_tolerance) -> np.ndarray:
    """
    Exact Legendre transform sup_x {xy - f(x)} of a piecewise-linear convex f at arbitrary points.
    :param f: Convex GridFunction
    :param y: Evaluation points
    :param tol: Convexity and escape tolerance
    :return: Values, np.inf where the supremum escapes
    """
    f.require_convex(tol)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    xf, vf, s = f.finite_x, f.finite_values, f.slopes
    # the maximizing breakpoint is the first one whose right slope reaches y
    monotone = np.maximum.accumulate(s) if s.size else s
    idx = np.searchsorted(monotone, y, side='left')
    best = np.full(y.shape, -np.inf)
    for shift in (-1, 0, 1):
        k = np.clip(idx + shift, 0, xf.size - 1)
        best = np.maximum(best, xf[k] * y - vf[k])
    if f.left == 'linear':
        lo = s[0]
        best[y < lo - value_tolerance(lo, tol)] = np.inf
    if f.right == 'linear':
        hi = s[-1]
        best[y > hi + value_tolerance(hi, tol)] = np.inf
    return best


def _natural_dual_grid(f: GridFunction) -> tuple[np.ndarray, Extension, Extension]:
    s = np.unique(f.slopes)
    base = s if s.size else np.array([0.0])
    y = base
    if f.left == 'inf':
        y = np.concatenate([[base[0] - 1.0], y])
    if f.right == 'inf':
        y = np.concatenate([y, [base[-1] + 1.0]])
    return y, ('linear' if f.left == 'inf' else 'inf'), ('linear' if f.right == 'inf' else 'inf')


def legendre_transform(f: GridFunction, out_breakpoints=None, tol: float = convexity_tolerance) -> GridFunction:
    """
    Legendre transform of a convex piecewise-linear function.

    Without out_breakpoints the result lives on the slopes of f (padded by one unit where the conjugate continues
    linearly), which represents the conjugate exactly, so that applying the transform twice gives back f at its
    breakpoints. With out_breakpoints the result is the exact conjugate sampled there.
    :param f: Convex, closed, proper GridFunction
    :param out_breakpoints: Optional strictly increasing output breakpoints
    :param tol: Convexity and escape tolerance
    :return: Conjugate as GridFunction
    """
    f.require_convex(tol)
    if out_breakpoints is None:
        y, left, right = _natural_dual_grid(f)
    else:
        y = np.asarray(out_breakpoints, dtype=float)
        if y.size > 1 and not (np.diff(y) > 0).all():
            raise ValueError('Output breakpoints must be strictly increasing')
        left = 'linear' if f.left == 'inf' else 'inf'
        right = 'linear' if f.right == 'inf' else 'inf'
    values = conjugate_values(f, y, tol)
    if debug_mode:
        logger.debug(f'Legendre transform: {f.x.size} breakpoints in, {y.size} out')
    return GridFunction(y, values, left, right)


def _sweep(f: GridFunction, g: GridFunction) -> GridFunction:
    """Min-plus merge of the edge sequences of f and g."""
    xf, vf = f.finite_x, f.finite_values
    xg, vg = g.finite_x, g.finite_values
    sf = np.maximum.accumulate(f.slopes) if f.slopes.size else f.slopes
    sg = np.maximum.accumulate(g.slopes) if g.slopes.size else g.slopes
    left_rays = [h.slopes[0] for h in (f, g) if h.left == 'linear']
    right_rays = [h.slopes[-1] for h in (f, g) if h.right == 'linear']
    t0 = max(left_rays, default=-np.inf)
    t1 = min(right_rays, default=np.inf)
    if t0 > t1:
        raise ImproperFunctionError('Infimum convolution is -inf: left ray slope exceeds right ray slope')
    thresholds = np.unique(np.concatenate([sf, sg]))
    thresholds = thresholds[(thresholds > t0) & (thresholds < t1)]
    if np.isfinite(t0):
        thresholds = np.concatenate([[t0], thresholds])
    i = np.searchsorted(sf, thresholds, side='right')
    j = np.searchsorted(sg, thresholds, side='right')
    if not np.isfinite(t0):
        i = np.concatenate([[0], i])
        j = np.concatenate([[0], j])
    pos = xf[i] + xg[j]
    val = vf[i] + vg[j]
    keep = np.concatenate([[True], np.diff(pos) > 0])
    pos, val = pos[keep], val[keep]
    if left_rays:
        pos = np.concatenate([[pos[0] - 1.0], pos])
        val = np.concatenate([[val[0] - t0], val])
    if right_rays:
        pos = np.concatenate([pos, [pos[-1] + 1.0]])
        val = np.concatenate([val, [val[-1] + t1]])
    return GridFunction(pos, val, 'linear' if left_rays else 'inf', 'linear' if right_rays else 'inf')


def _via_conjugates(f: GridFunction, g: GridFunction, tol: float) -> GridFunction:
    total = add(legendre_transform(f, tol=tol), legendre_transform(g, tol=tol))
    return legendre_transform(total, tol=tol)


def _cross_check(a: GridFunction, b: GridFunction, tol: float):
    lo = max(a.finite_x[0], b.finite_x[0])
    hi = min(a.finite_x[-1], b.finite_x[-1])
    grid = np.union1d(a.x, b.x)
    grid = grid[(grid >= lo) & (grid <= hi)]
    if grid.size == 0:
        return
    va, vb = a(grid), b(grid)
    finite_a, finite_b = np.isfinite(va), np.isfinite(vb)
    if (finite_a != finite_b).any():
        k = int(np.flatnonzero(finite_a != finite_b)[0])
        raise CrossCheckError(np.inf, float(grid[k]))
    both = finite_a & finite_b
    deviation = np.abs(va[both] - vb[both]) / np.maximum(1.0, np.abs(va[both]))
    if deviation.size and deviation.max() > tol:
        k = int(np.argmax(deviation))
        raise CrossCheckError(float(deviation[k]), float(grid[both][k]))


def inf_convolution(f: GridFunction, g: GridFunction, method: Method = 'sweep', out_breakpoints=None,
                    tol: float = convexity_tolerance, cross_tol: float = cross_check_tolerance) -> GridFunction:
    """
    Infimum convolution h(x) = inf_y {f(y) + g(x - y)}.
    :param f: Convex GridFunction
    :param g: Convex GridFunction
    :param method: 'sweep' (min-plus merge of edges), 'conjugate' (L(Lf + Lg)) or 'cross' (both, compared)
    :param out_breakpoints: Optional breakpoints to resample the result on
    :param tol: Convexity tolerance
    :param cross_tol: Agreement required in cross mode
    :return: Infimum convolution
    """
    f.require_convex(tol)
    g.require_convex(tol)
    if method == 'sweep':
        h = _sweep(f, g)
    elif method == 'conjugate':
        h = _via_conjugates(f, g, tol)
    elif method == 'cross':
        h = _sweep(f, g)
        _cross_check(h, _via_conjugates(f, g, tol), cross_tol)
    else:
        raise ValueError(f'Unknown method {method!r}')
    if out_breakpoints is not None:
        h = resample(h, out_breakpoints)
    return h


def _right_half(g: GridFunction) -> tuple[np.ndarray, np.ndarray]:
    pts = np.concatenate([[0.0], g.x[g.x > 0]])
    return pts, g(pts)


def inverse_levels(g: GridFunction, levels) -> np.ndarray:
    """
    Vectorized generalized inverse inf{x >= 0 : g(x) >= y} of g non-decreasing on [0, inf).
    At a jump the left endpoint is returned.
    :param g: GridFunction, non-decreasing on [0, inf)
    :param levels: Levels y (np.inf allowed)
    :return: Inverse values
    """
    y = np.atleast_1d(np.asarray(levels, dtype=float))
    pts, vals = _right_half(g)
    monotone = np.maximum.accumulate(vals)
    k = np.searchsorted(monotone, y, side='left')
    out = np.zeros(y.shape)
    mid = (k > 0) & (k < pts.size)
    if mid.any():
        km = k[mid]
        lo_v, hi_v = monotone[km - 1], monotone[km]
        lo_x, hi_x = pts[km - 1], pts[km]
        jump = ~np.isfinite(hi_v)
        with np.errstate(invalid='ignore', divide='ignore'):
            frac = np.where(jump, 0.0, (y[mid] - lo_v) / np.where(jump, 1.0, hi_v - lo_v))
        out[mid] = np.where(jump, lo_x, lo_x + frac * (hi_x - lo_x))
    beyond = k == pts.size
    if beyond.any():
        slope = g.right_slope if pts[-1] >= g.finite_x[-1] else None
        worst = float(np.max(y[beyond]))
        if slope is None or slope <= 0 or not np.isfinite(worst):
            raise LevelUnreachableError(worst, float(pts[-1]))
        out[beyond] = pts[-1] + (y[beyond] - vals[-1]) / slope
    return out


def generalized_inverse(g: GridFunction, y: float) -> float:
    """
    inf{x >= 0 : g(x) >= y}.
    :param g: GridFunction, non-decreasing on [0, inf)
    :param y: Level
    :return: Inverse value
    """
    return float(inverse_levels(g, [y])[0])


def pointwise_max(f: GridFunction, g: GridFunction) -> GridFunction:
    """Maximum of two GridFunctions, with crossing points added as breakpoints."""
    u = np.union1d(f.x, g.x)
    fu, gu = f(u), g(u)
    both = np.isfinite(fu) & np.isfinite(gu)
    d = np.where(both, fu - np.where(both, gu, 0.0), 0.0)
    extra = []
    crossing = both[:-1] & both[1:] & (d[:-1] * d[1:] < 0)
    if crossing.any():
        d0, d1 = d[:-1][crossing], d[1:][crossing]
        x0, x1 = u[:-1][crossing], u[1:][crossing]
        extra.append(x0 + d0 / (d0 - d1) * (x1 - x0))
    left = 'linear' if f.left == 'linear' and g.left == 'linear' else 'inf'
    right = 'linear' if f.right == 'linear' and g.right == 'linear' else 'inf'
    if right == 'linear':
        ds = f.right_slope - g.right_slope
        end = u[-1]
        if ds != 0 and both[-1] and d[-1] * ds < 0:
            end = u[-1] - d[-1] / ds
            extra.append([end])
        extra.append([end + 1.0])
    if left == 'linear':
        ds = f.left_slope - g.left_slope
        start = u[0]
        if ds != 0 and both[0] and d[0] * ds > 0:
            start = u[0] - d[0] / ds
            extra.append([start])
        extra.append([start - 1.0])
    pts = np.unique(np.concatenate([u] + [np.asarray(e, dtype=float) for e in extra]))
    return GridFunction(pts, np.maximum(f(pts), g(pts)), left, right)


def scale_arg(f: GridFunction, c: float) -> GridFunction:
    """x -> f(cx)."""
    if c == 0:
        raise ValueError('scale_arg requires c != 0')
    x, v, left, right = f.x / c, f.values, f.left, f.right
    if c < 0:
        x, v, left, right = x[::-1], v[::-1], right, left
    return GridFunction(x, v, left, right)


def scale_val(f: GridFunction, c: float) -> GridFunction:
    """x -> c f(x) for c > 0."""
    if not c > 0:
        raise ValueError('scale_val requires c > 0')
    return GridFunction(f.x, f.values * c, f.left, f.right)


def even_part_check(f: GridFunction, tol: float = convexity_tolerance) -> bool:
    """True if f(x) = f(-x) over the symmetric span of the breakpoints."""
    half = min(-f.x[0], f.x[-1])
    if half < 0:
        return False
    pts = np.abs(f.x[np.abs(f.x) <= half])
    pts = np.union1d(pts, -pts)
    a, b = f(pts), f(-pts)
    finite = np.isfinite(a)
    if (finite != np.isfinite(b)).any():
        return False
    return bool((np.abs(a[finite] - b[finite]) <= value_tolerance(a[finite], tol)).all())


def convex_minorant(f: GridFunction) -> GridFunction:
    """
    Greatest convex function below the finite breakpoint values (lower hull), sampled back on the same breakpoints.
    Used to clean rounding noise from grids built by quadrature.
    """
    xs, vs = f.finite_x, f.finite_values
    hull: list[int] = []
    for k in range(xs.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            if (vs[b] - vs[a]) * (xs[k] - xs[a]) >= (vs[k] - vs[a]) * (xs[b] - xs[a]):
                hull.pop()
            else:
                break
        hull.append(k)
    values = f.values.copy()
    values[f.first_finite_index:f.first_finite_index + xs.size] = np.interp(xs, xs[hull], vs[hull])
    return GridFunction(f.x, values, f.left, f.right)


def random_convex(rng: np.random.Generator, n_breaks: int = 16, span: float = 10.0,
                  bounded_below: bool = True) -> GridFunction:
    """
    Random convex piecewise-linear function with linear extensions, as used by the test batteries.
    :param rng: numpy Generator
    :param n_breaks: Number of breakpoints (>= 2)
    :param span: Breakpoints are drawn from [-span, span]
    :param bounded_below: Force a negative first and a positive last slope
    :return: GridFunction
    """
    minimal = 3 if bounded_below else 2
    x = np.unique(rng.uniform(-span, span, size=max(n_breaks, minimal)))
    while x.size < minimal:
        x = np.unique(np.append(x, rng.uniform(-span, span)))
    slopes = np.sort(rng.normal(0.0, 1.0, size=x.size - 1))
    if bounded_below:
        if slopes[0] >= 0:
            slopes[0] = -abs(slopes[0]) - 0.1
        if slopes[-1] <= 0:
            slopes[-1] = abs(slopes[-1]) + 0.1
        slopes = np.sort(slopes)
    values = rng.normal() + np.concatenate([[0.0], np.cumsum(slopes * np.diff(x))])
    return GridFunction(x, values, 'linear', 'linear')


def hinge(a: float, b: float) -> GridFunction:
    """a (x - b)_+ as a GridFunction with linear extensions."""
    return GridFunction([b - 1.0, b, b + 1.0], [0.0, 0.0, a], 'linear', 'linear')


@dataclass(frozen=True)
class HingeCost:
    """Cost min{(cx)^2, |cx|}."""
    c: float

    def __call__(self, x):
        z = np.abs(self.c * np.asarray(x, dtype=float))
        return np.minimum(z * z, z)


@dataclass(frozen=True)
class HingeInfConvolution:
    """
    Closed form of a (x - b)_+ inf-convolved with min{(cx)^2, |cx|}, valid for a > 2c: zero up to b, quadratic on
    (b, b + 1/c], linear with slope c beyond.

    Attributes:
        a (float): Slope of the hinge
        b (float): Position of the hinge
        c (float): Scale of the cost
    """
    a: float
    b: float
    c: float

    def __post_init__(self):
        if not (self.c > 0 and self.a > 2 * self.c):
            raise ValueError(f'Closed form needs c > 0 and a > 2c, got a={self.a}, c={self.c}')

    def __call__(self, x):
        z = np.asarray(x, dtype=float) - self.b
        out = np.zeros(z.shape)
        near = (z > 0) & (z <= 1.0 / self.c)
        far = z > 1.0 / self.c
        out[near] = (self.c * z[near]) ** 2
        out[far] = self.c * z[far]
        return out
