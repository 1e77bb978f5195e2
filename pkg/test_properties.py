import numpy as np
import pytest
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from icicert_core import tail_dist
from icicert_core.convex_fn import (GridFunction, conjugate_values, generalized_inverse, inf_convolution,
                                    legendre_transform, pointwise_max, scale_arg)

RELATIVE_TOLERANCE = 1e-8
CROSS_TOLERANCE = 1e-7
PROBES = np.linspace(-6.0, 6.0, 121)


@st.composite
def convex_functions(draw, bounded_below: bool = False) -> GridFunction:
    """Piecewise-linear convex functions on dyadic breakpoints with dyadic slopes, linear on both sides."""
    n = draw(st.integers(min_value=2, max_value=12))
    ticks = draw(arrays(np.int64, (n,), elements=st.integers(-80, 80), unique=True))
    x = np.sort(ticks) / 8.0
    slopes = np.sort(draw(arrays(np.int64, (n - 1,), elements=st.integers(-20, 20)))) / 4.0
    if bounded_below:
        slopes = np.concatenate([[min(slopes[0], 0.0) - 0.25], slopes, [max(slopes[-1], 0.0) + 0.25]])
        x = np.concatenate([[x[0] - 1.0], x, [x[-1] + 1.0]])
    offset = draw(st.integers(-20, 20)) / 4.0
    values = offset + np.concatenate([[0.0], np.cumsum(slopes * np.diff(x))])
    return GridFunction(x, values, 'linear', 'linear')


def within(a, b, tol=RELATIVE_TOLERANCE) -> bool:
    return bool(np.all(np.abs(a - b) <= tol * np.maximum(1.0, np.abs(b))))


@seed(1)
@settings(deadline=None)
@given(convex_functions())
def test_legendre_involution(f):
    g = legendre_transform(legendre_transform(f))
    assert within(g(f.x), f.values)


@seed(2)
@settings(deadline=None)
@given(convex_functions(), convex_functions())
def test_legendre_reverses_order(f, h):
    g = pointwise_max(f, h)
    lf, lg = conjugate_values(f, PROBES), conjugate_values(g, PROBES)
    finite = np.isfinite(lf)
    assert np.all(np.isfinite(lg[finite]))
    assert np.all(lg[finite] <= lf[finite] + RELATIVE_TOLERANCE * np.maximum(1.0, np.abs(lf[finite])))


@seed(3)
@settings(deadline=None)
@given(convex_functions(bounded_below=True), convex_functions(bounded_below=True),
       st.floats(min_value=-8.0, max_value=8.0), st.floats(min_value=-8.0, max_value=8.0))
def test_inf_convolution_methods_agree(f, g, x, y):
    h = inf_convolution(f, g, method='cross', cross_tol=CROSS_TOLERANCE)
    assert h.is_convex()
    # every split of x bounds the infimum from above
    bound = float(f(y)) + float(g(x - y))
    assert float(h(x)) <= bound + RELATIVE_TOLERANCE * max(1.0, abs(bound))


@seed(4)
@settings(deadline=None)
@given(arrays(np.int64, st.integers(1, 10), elements=st.integers(1, 16)),
       arrays(np.int64, st.integers(1, 10), elements=st.integers(1, 20), unique=True),
       st.floats(min_value=0.0, max_value=1.0))
def test_generalized_inverse_after_evaluation(steps, slope_ticks, fraction):
    n = min(steps.size, slope_ticks.size)
    x = np.concatenate([[0.0], np.cumsum(steps[:n] / 4.0)])
    slopes = np.sort(slope_ticks[:n]) / 4.0
    g = GridFunction(x, np.concatenate([[0.0], np.cumsum(slopes * np.diff(x))]), 'inf', 'linear')
    t = fraction * 2.0 * x[-1]
    assert generalized_inverse(g, float(g(t))) == pytest.approx(t, rel=1e-9, abs=1e-9)


@seed(5)
@settings(deadline=None)
@given(convex_functions(), convex_functions(),
       st.floats(min_value=0.25, max_value=4.0) | st.floats(min_value=-4.0, max_value=-0.25))
def test_operations_preserve_convexity(f, g, c):
    assert legendre_transform(f).is_convex()
    assert pointwise_max(f, g).is_convex()
    assert scale_arg(f, c).is_convex()


@seed(6)
@given(st.floats(min_value=1e-9, max_value=1.0 - 1e-9))
def test_dyadic_quantile_is_generalized_inverse(u):
    d = tail_dist.dyadic()
    q = float(d.quantile(u))
    assert float(d.cdf(q)) >= u - 1e-12
    assert abs(q) >= 2.0
