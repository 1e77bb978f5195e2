import json
import math
import os
import tempfile
import unittest

import numpy as np
from scipy.special import logsumexp

import main
from config import grid_points
from icicert_core import counterexample, tail_dist
from icicert_core.convex_fn import (GridFunction, HingeCost, HingeInfConvolution, even_part_check, from_callable,
                                    generalized_inverse, hinge, indicator, inf_convolution, legendre_transform,
                                    random_convex, scale_arg, scale_val)
from icicert_core.errors import (ConfigError, DistributionError, GridFileError, ImproperFunctionError,
                                 LevelUnreachableError)
from icicert_core.ici_engine import (BETA_1, NormTest, assemble_constants, build_phi, certify, check_cond_v1,
                                     check_cond_v2, lemma_3_1_check, mc_ici_test, prepare_distribution,
                                     quadratic_linear, step6_case_certificate, transport_map, x_grid)
from icicert_core.moment_compare import (NormSpec, ProductVector, corollary_2_5_check, lemma_4_1_check,
                                         lemma_4_2_check, linear_form_moment, strong_moment, sum_abs_moment,
                                         theorem_2_4_check, weak_moment)
from icicert_io.dist_config import RunConfig, load_run_config, parse_range, read_distribution_file
from icicert_io.handler import IOHandler, jsonable
from icicert_utils.utils import chunk_generator


class TestConvexFn(unittest.TestCase):
    @staticmethod
    def absolute_value() -> GridFunction:
        return GridFunction([-1.0, 0.0, 1.0], [1.0, 0.0, 1.0], 'linear', 'linear')

    def test_legendre_transform(self):
        g = legendre_transform(self.absolute_value())
        self.assertEqual([-1.0, 1.0], g.x.tolist())
        self.assertEqual([0.0, 0.0], g.values.tolist())
        self.assertEqual(('inf', 'inf'), (g.left, g.right))
        back = legendre_transform(indicator(-1.0, 1.0))
        self.assertTrue(np.allclose(back(np.array([-3.0, -1.0, 0.0, 0.5, 3.0])), [3.0, 1.0, 0.0, 0.5, 3.0]))

    def test_legendre_involution(self):
        rng = chunk_generator(11, 0, 0)
        for _ in range(200):
            f = random_convex(rng)
            g = legendre_transform(legendre_transform(f))
            tol = 1e-8 * np.maximum(1.0, np.abs(f.values))
            self.assertTrue((np.abs(g(f.x) - f.values) <= tol).all())

    def test_inf_convolution(self):
        h = inf_convolution(self.absolute_value(), indicator(-1.0, 1.0), method='cross')
        self.assertTrue(np.allclose(h(np.array([-3.0, -1.0, 0.0, 1.0, 3.0])), [2.0, 0.0, 0.0, 0.0, 2.0]))
        # sampled x^2 convolved with itself is exact at the doubled breakpoints
        x = np.linspace(-2.0, 2.0, 9)
        f = from_callable(np.square, x)
        for method in ('sweep', 'conjugate'):
            h = inf_convolution(f, f, method=method)
            self.assertTrue(np.allclose(h(2.0 * x), 2.0 * x * x))

    def test_improper_inf_convolution(self):
        f = GridFunction([0.0, 1.0], [0.0, 1.0], 'linear', 'linear')
        g = GridFunction([0.0, 1.0], [0.0, -1.0], 'linear', 'linear')
        with self.assertRaises(ImproperFunctionError):
            inf_convolution(f, g)
        with self.assertRaises(ImproperFunctionError):
            GridFunction([0.0, 1.0], [np.inf, np.inf])

    def test_generalized_inverse(self):
        self.assertEqual(1.0, generalized_inverse(GridFunction([0.0, 1.0, 2.0], [0.0, 1.0, np.inf]), 5.0))
        with self.assertRaises(LevelUnreachableError):
            generalized_inverse(GridFunction([0.0, 1.0], [0.0, 1.0]), 5.0)
        x = np.unique(np.concatenate([np.linspace(-1.0, 1.0, 201), [-4.0, -2.0, 2.0, 4.0]]))
        phi = from_callable(quadratic_linear, x, 'linear', 'linear')
        self.assertAlmostEqual(2.0, generalized_inverse(phi, 3.0), places=12)
        self.assertAlmostEqual(0.5, generalized_inverse(phi, 0.25), places=12)

    def test_scale_arg(self):
        with self.assertRaises(ValueError):
            scale_arg(self.absolute_value(), 0.0)
        g = scale_arg(GridFunction([0.0, 1.0], [0.0, 1.0], 'inf', 'linear'), -2.0)
        self.assertEqual(('linear', 'inf'), (g.left, g.right))
        self.assertAlmostEqual(2.0, g(-1.0))
        self.assertEqual(3.0, float(scale_val(self.absolute_value(), 2.0)(-1.5)))
        with self.assertRaises(ValueError):
            scale_val(self.absolute_value(), 0.0)

    def test_even_part(self):
        cramer = tail_dist.exponential().cramer_transform(np.linspace(-0.9, 0.9, 19))
        self.assertTrue(even_part_check(cramer))
        self.assertTrue(even_part_check(self.absolute_value()))
        self.assertFalse(even_part_check(hinge(1.0, 0.0)))

    def test_hinge_closed_form(self):
        a, b, c = 3.0, 4.0, 1.0
        y = np.linspace(-10.0, 20.0, 300001)
        f = hinge(a, b)
        self.assertEqual([0.0, 0.0, 6.0], f(np.array([0.0, 4.0, 6.0])).tolist())
        cost = HingeCost(c)
        for x in (0.0, 4.0, 4.5, 5.0, 6.0, 10.0):
            brute = float(np.min(f(y) + cost(x - y)))
            self.assertAlmostEqual(brute, float(HingeInfConvolution(a, b, c)(np.array([x]))[0]), delta=1e-3)
        with self.assertRaises(ValueError):
            HingeInfConvolution(1.0, 0.0, 1.0)


class TestTailDist(unittest.TestCase):
    def test_exponential(self):
        d = tail_dist.exponential()
        self.assertAlmostEqual(-math.log1p(-0.25), d.cumulant(0.5), places=14)
        self.assertAlmostEqual(d.cumulant(0.5), d.cumulant(0.5, method='quadrature'), places=8)
        self.assertEqual(math.inf, d.cumulant(1.0))
        self.assertAlmostEqual(24.0, d.abs_moment(4.0), delta=24.0 * 1e-8)
        self.assertAlmostEqual(math.log(2.0), float(d.quantile(0.75)), places=12)
        self.assertAlmostEqual(-math.log(2.0), float(d.quantile(0.25)), places=12)
        self.assertEqual(1.0, d.regularity_alpha(32.0))

    def test_rademacher_cramer_transform(self):
        x = np.linspace(-0.9, 0.9, 19)
        entropy = 0.5 * ((1.0 + x) * np.log1p(x) + (1.0 - x) * np.log1p(-x))
        g = tail_dist.rademacher().cramer_transform(x)
        self.assertTrue(np.allclose(g(x), entropy, atol=1e-3))
        self.assertAlmostEqual(0.0, float(g(0.0)), places=12)

    def test_s_grid(self):
        laws = (tail_dist.exponential(), tail_dist.rademacher(), tail_dist.power(1.0, 2.0), tail_dist.power(1.0, 1.5))
        for d in laws:
            s = d.default_s_grid(4.0)
            self.assertTrue((np.diff(s) > 1e-15 * np.maximum(1.0, np.abs(s[1:]))).all(), d.name)
            self.assertEqual(0.0, float(s[s.size // 2]))
            self.assertTrue(np.array_equal(s, -s[::-1]), d.name)
            self.assertTrue(d.cumulant_grid(s).is_convex(1e-6), d.name)
        grid = tail_dist.rademacher().cumulant_grid(np.linspace(-2.0, 2.0, 5))
        self.assertEqual([-4.0, 4.0], [float(grid.x[0]), float(grid.x[-1])])
        self.assertTrue(np.allclose([-1.0, 1.0], grid.slopes[[0, -1]], rtol=0.0, atol=1e-12))

    def test_moment_invariants(self):
        for d in (tail_dist.exponential(), tail_dist.rademacher(), tail_dist.power(1.0, 2.0)):
            sample = d.sample(4, 100000)
            for power, expected in ((1, 0.0), (2, d.abs_moment(2.0)), (3, 0.0)):
                values = sample ** power
                spread = 4.0 * float(np.std(values)) / math.sqrt(values.size) + 1e-12
                self.assertAlmostEqual(expected, float(np.mean(values)), delta=spread, msg=f'{d.name} {power}')
        self.assertLessEqual(tail_dist.dyadic().regularity_alpha(64.0), 3.0)

    def test_quantile_range(self):
        d = tail_dist.exponential()
        for u in (0.0, 1.0, np.nan):
            with self.assertRaises(ValueError):
                d.quantile(u)

    def test_sampling(self):
        d = tail_dist.exponential()
        sample = d.sample(5, 200000)
        self.assertTrue(np.array_equal(sample, d.sample(5, 200000)))
        self.assertFalse(np.array_equal(sample[:100], d.sample(6, 100)))
        self.assertAlmostEqual(1.0, float(np.mean(np.abs(sample))), delta=0.02)
        self.assertAlmostEqual(0.0, float(np.mean(sample)), delta=0.02)

    def test_dyadic(self):
        d = tail_dist.dyadic()
        self.assertEqual(1.0, float(counterexample.tail_probability(d, 1.5)))
        self.assertAlmostEqual(math.exp(-2.0), float(counterexample.tail_probability(d, 3.9)), places=15)
        self.assertAlmostEqual(math.exp(-4.0), float(counterexample.tail_probability(d, 4.0)), places=15)
        locations, log_masses = d.tail.atoms()
        self.assertAlmostEqual(0.0, float(logsumexp(log_masses)), places=12)
        self.assertAlmostEqual(math.log(-math.expm1(-2.0)), float(log_masses[0]), places=14)
        self.assertAlmostEqual(math.exp(-2.0) * (1.0 - math.exp(-2.0)), math.exp(log_masses[1]), places=14)
        series = float(np.sum(locations ** 2 * np.exp(log_masses)))
        self.assertAlmostEqual(series, d.second_moment, delta=series * 1e-10)
        self.assertEqual(math.inf, d.cumulant(0.5))
        self.assertFalse(d.tail.log_concave)

    def test_invalid_tails(self):
        with self.assertRaises(DistributionError):
            tail_dist.power(-1.0, 1.0)
        with self.assertRaises(DistributionError):
            tail_dist.finite_support(0.0)
        with self.assertRaises(DistributionError):
            tail_dist.piecewise_linear([0.0, 1.0], [0.0, -1.0])
        with self.assertRaises(DistributionError):
            tail_dist.piecewise_linear([0.0, 1.0], [1.0, 2.0])

    def test_regularization(self):
        tail = tail_dist.regularize_linear(tail_dist.DyadicTail(), 0.1)
        self.assertTrue(tail.strictly_increasing)
        self.assertAlmostEqual(0.1, float(tail.N(1.0)))
        self.assertEqual(math.inf, tail_dist.regularize_quadratic(tail, 0.1).asymptotic_slope)


class TestIciEngine(unittest.TestCase):
    @staticmethod
    def log_concave_laws() -> dict:
        return {'exponential': tail_dist.exponential(), 'rademacher': tail_dist.rademacher(),
                'gaussian': tail_dist.power(1.0, 2.0), 'power_1.5': tail_dist.power(1.0, 1.5)}

    def test_constants(self):
        constants = assemble_constants()
        self.assertAlmostEqual(2.0, constants.phi_inverse_3, places=12)
        self.assertAlmostEqual(1.0 / 420.0, constants.b_tilde, places=15)
        self.assertAlmostEqual(1680.0 * math.e, constants.beta, places=8)
        self.assertAlmostEqual(4.0 * math.sqrt(2.0) * math.e, constants.moment_c, places=12)
        self.assertAlmostEqual(constants.moment_c * constants.beta, constants.moment_d, places=6)

    def test_prepare_distribution(self):
        cases = {'rademacher': ('linear',), 'exponential': ('quadratic',), 'gaussian': (),
                 'dyadic': ('linear', 'quadratic')}
        laws = {'rademacher': tail_dist.rademacher(), 'exponential': tail_dist.exponential(),
                'gaussian': tail_dist.power(1.0, 2.0), 'dyadic': tail_dist.dyadic()}
        for name, steps in cases.items():
            prepared = prepare_distribution(laws[name])
            self.assertEqual(steps, prepared.regularizations)
            self.assertAlmostEqual(1.0, prepared.canonical.second_moment * BETA_1 ** 2, delta=1e-6)

    def test_lemma(self):
        for d in self.log_concave_laws().values():
            report = lemma_3_1_check(prepare_distribution(d).canonical, points=201)
            self.assertTrue(report.passed, report.to_dict())

    def test_build_phi(self):
        inner = np.linspace(-1.0, 1.0, grid_points)[grid_points // 2::100]
        for name, d in self.log_concave_laws().items():
            phi = build_phi(prepare_distribution(d).canonical, 24.0)
            self.assertTrue(np.allclose(inner * inner, phi(inner), rtol=0.0, atol=1e-7), name)
            self.assertAlmostEqual(2.0, generalized_inverse(phi, 3.0), places=9, msg=name)

    def test_transport_map(self):
        x = np.linspace(-5.0, 5.0, 21)
        self.assertTrue(np.allclose(x, transport_map(tail_dist.exponential(), x)))
        self.assertEqual(np.where(x > 0, 1.0, -1.0).tolist(), transport_map(tail_dist.rademacher(), x).tolist())
        self.assertTrue(np.allclose(np.sign(x) * np.sqrt(np.abs(x)), transport_map(tail_dist.power(1.0, 2.0), x)))

    def test_transport_conditions(self):
        for name, d in self.log_concave_laws().items():
            canonical = prepare_distribution(d).canonical
            phi = build_phi(canonical, 24.0)
            grid = x_grid(canonical, 20.0, 201)
            v2 = check_cond_v2(canonical, phi, grid)
            self.assertTrue(v2.passed, (name, v2.to_dict()))
            cases = step6_case_certificate(canonical, phi, grid, 24.0)
            self.assertTrue(cases.passed, (name, cases.to_dict()))
            self.assertEqual('agree', cases.details['cross_check'], name)

    def test_certify(self):
        reports, prepared, constants = certify(tail_dist.exponential(), 'all', span=20.0, points=201)
        self.assertEqual(['lemma', 'v1', 'v2', 'cases'], [r.condition for r in reports])
        for r in reports:
            self.assertTrue(r.passed, r.to_dict())
        self.assertEqual(('quadratic',), prepared.regularizations)
        self.assertAlmostEqual(2.0, constants.phi_inverse_3, places=9)

    def test_cond_v1_plateau_jump(self):
        canonical = prepare_distribution(tail_dist.dyadic()).canonical
        x = np.unique(np.concatenate([np.linspace(-1.0, 1.0, 201), [-200.0, -2.0, 2.0, 200.0]]))
        phi = from_callable(quadratic_linear, x, 'linear', 'linear')
        report = check_cond_v1(canonical, phi, 1.0, x_grid(canonical, 100.0, 201))
        self.assertFalse(report.passed)
        self.assertLess(report.worst_margin, -1.0)
        for coordinate in report.worst_location:
            self.assertAlmostEqual(64.0, abs(coordinate), delta=1e-6)

    def test_mc_ici(self):
        d = tail_dist.exponential()
        beta = assemble_constants().beta
        f = random_convex(chunk_generator(1, 30, 0))
        estimate = mc_ici_test([d], beta, f, 20000, 7)
        self.assertTrue(estimate.within_bound)
        self.assertTrue(estimate.conclusive)
        self.assertEqual('one_dimensional', estimate.kind)
        # dyadic values keep f + 3 exact in floating point
        dyadic_f = GridFunction([-4.0, -1.0, 0.5, 3.0], [5.0, 0.5, 0.25, 4.0], 'linear', 'linear')
        lifted = GridFunction(dyadic_f.x, dyadic_f.values + 3.0, 'linear', 'linear')
        base = mc_ici_test([d], beta, dyadic_f, 20000, 7)
        moved = mc_ici_test([d], beta, lifted, 20000, 7)
        self.assertEqual(base.estimate, moved.estimate)
        self.assertEqual(base.to_dict(), moved.to_dict())
        g = random_convex(chunk_generator(1, 30, 1))
        self.assertEqual('separable', mc_ici_test([d, d], beta, (f, g), 20000, 7).kind)
        norm_test = mc_ici_test([d, d], beta, NormTest(NormSpec('l2'), 0.5, 1.0, 'l2'), 20000, 7)
        self.assertFalse(norm_test.conclusive)
        with self.assertRaises(ImproperFunctionError):
            mc_ici_test([d], beta, GridFunction([0.0, 1.0], [0.0, 1.0], 'linear', 'linear'), 100, 7)


class TestMomentCompare(unittest.TestCase):
    def test_norms(self):
        with self.assertRaises(ValueError):
            NormSpec('l3')
        x = np.array([[3.0, -4.0]])
        self.assertEqual([7.0, 5.0, 4.0], [float(NormSpec(k)(x)[0]) for k in ('l1', 'l2', 'linf')])
        self.assertEqual(7.0, float(NormSpec('linf').dual(x)[0]))

    def test_linear_form_moment(self):
        v = ProductVector.iid(tail_dist.exponential(), 2)
        self.assertAlmostEqual(2.0, linear_form_moment(v, [1.0, 0.0], 2), places=7)
        self.assertAlmostEqual(4.0, linear_form_moment(v, [1.0, 1.0], 2), places=7)
        self.assertAlmostEqual(72.0, linear_form_moment(v, [1.0, 1.0], 4), delta=72.0 * 1e-7)
        with self.assertRaises(ValueError):
            linear_form_moment(v, [1.0, 1.0], 3)

    def test_weak_moment(self):
        v = ProductVector.iid(tail_dist.exponential(), 2)
        linf = weak_moment(v, NormSpec('linf'), 4.0)
        self.assertTrue(linf.exact)
        self.assertAlmostEqual(24.0 ** 0.25, linf.value, places=7)
        l1 = weak_moment(v, NormSpec('l1'), 4.0)
        self.assertTrue(l1.exact)
        self.assertAlmostEqual(72.0 ** 0.25, l1.value, places=7)
        l2 = weak_moment(v, NormSpec('l2'), 4.0)
        self.assertFalse(l2.exact)
        self.assertGreaterEqual(l2.value, 24.0 ** 0.25 * (1.0 - 1e-9))

    def test_sum_abs_moment(self):
        rademacher = ProductVector.iid(tail_dist.rademacher(), 2)
        l1 = weak_moment(rademacher, NormSpec('l1'), 3.0)
        self.assertTrue(l1.exact)
        self.assertAlmostEqual(4.0 ** (1.0 / 3.0), l1.value, places=6)
        exponential = ProductVector.iid(tail_dist.exponential(), 2)
        self.assertAlmostEqual(15.0, sum_abs_moment(exponential, 3.0), delta=15.0 * 1e-6)
        l1 = weak_moment(exponential, NormSpec('l1'), 3.0)
        self.assertTrue(l1.exact)
        self.assertAlmostEqual(15.0 ** (1.0 / 3.0), l1.value, delta=1e-6)
        for p in (2.0, 4.0, 1.5):
            with self.assertRaises(ValueError):
                sum_abs_moment(exponential, p)

    def test_weak_below_strong(self):
        v = ProductVector.iid(tail_dist.exponential(), 2)
        for kind in ('linf', 'l1'):
            weak = weak_moment(v, NormSpec(kind), 4.0)
            strong = strong_moment(v, NormSpec(kind), 4.0, 20000, 5)
            self.assertLessEqual(weak.value, strong.value + strong.half_width, kind)

    def test_scale_invariance(self):
        v = ProductVector.iid(tail_dist.exponential(), 2)
        base = corollary_2_5_check(v, NormSpec('linf'), 2.0, 20000, seed=3)
        for c in (0.1, 1.0, 10.0):
            scaled = corollary_2_5_check(v.scaled(c), NormSpec('linf'), 2.0, 20000, seed=3)
            self.assertAlmostEqual(base.ratio_c, scaled.ratio_c, delta=1e-6 * base.ratio_c, msg=str(c))
            self.assertAlmostEqual(c * base.sigma, scaled.sigma, delta=1e-6 * c * base.sigma)

    def test_lemma_4_1(self):
        v = ProductVector.iid(tail_dist.exponential(), 1)
        report = lemma_4_1_check(v, 2.0, [1.0 / math.sqrt(2.0)])
        self.assertTrue(report.details['precondition'])
        self.assertTrue(report.passed)
        self.assertAlmostEqual(1.0, report.constants['alpha'], places=12)
        vacuous = lemma_4_1_check(v, 2.0, [10.0])
        self.assertFalse(vacuous.details['precondition'])

    def test_lemma_4_2(self):
        v = ProductVector.iid(tail_dist.exponential(), 1)
        report = lemma_4_2_check(v, NormSpec('linf'), 10.0, 2.0, [0.0, 1.0, 5.0, -3.0], points=801)
        self.assertTrue(report.passed, report.to_dict())
        self.assertAlmostEqual(2.0, report.details['margins'][0], places=9)

    def test_theorem_2_4(self):
        v = ProductVector.iid(tail_dist.exponential(), 2)
        report = theorem_2_4_check(v, NormSpec('linf'), 2.0, 20000, seed=3)
        self.assertTrue(report.passed, report.to_dict())
        self.assertLessEqual(report.ratio_c, report.moment_c)
        self.assertIn('ratio_d', report.to_row())
        with self.assertRaises(DistributionError):
            corollary_2_5_check(ProductVector.iid(tail_dist.dyadic(), 2), NormSpec('linf'), 2.0, 1000)


class TestCounterexample(unittest.TestCase):
    def test_flat_tail(self):
        d = counterexample.example_distribution()
        self.assertEqual([(1.0, 2.0), (10.0, 16.0), (100.0, 128.0)],
                         counterexample.flat_tail_criterion(d, [1.0, 10.0, 100.0]))
        self.assertEqual([(1.0, None)], counterexample.flat_tail_criterion(tail_dist.exponential(), [1.0]))

    def test_regularity(self):
        report = counterexample.verify_3_regularity(counterexample.example_distribution(), 64.0)
        self.assertTrue(report.passed, report.to_dict())
        self.assertLessEqual(report.details['alpha_measured'], 3.0)

    def test_quadratic_bound(self):
        bound = counterexample.quadratic_bound_scan(counterexample.example_distribution())
        self.assertTrue(bound.report.passed, bound.report.to_dict())
        self.assertGreaterEqual(2.0 * bound.a * bound.eps ** 2, 1.0 - 1e-12)
        self.assertAlmostEqual(0.06, bound.eps, delta=1e-3)
        t = np.linspace(-1.0, 1.0, 11)
        self.assertTrue(np.allclose(bound.lower_bound(t), bound.scaled_huber(t)))

    def test_max_iid(self):
        lower, upper = counterexample.max_iid_bounds(tail_dist.exponential(), 1)
        self.assertAlmostEqual(1.0, upper, places=8)
        self.assertAlmostEqual(1.0 - math.exp(-1.0), lower, places=8)
        d = counterexample.example_distribution()
        lower, upper = counterexample.max_iid_bounds(d, 10)
        self.assertAlmostEqual(4.7595, upper, delta=1e-3)
        self.assertLessEqual(upper, counterexample.dyadic_max_upper(2, 10.0 * math.exp(-4.0)))
        estimate, half_width = counterexample.sample_max_mean(d, 10, 50000, seed=2)
        self.assertTrue(lower - half_width <= estimate <= upper + half_width)
        self.assertGreater(math.log(counterexample.max_iid_moment_lower(d, 10, 2.0)),
                           counterexample.dyadic_moment_lower_log(2, 10.0 * math.exp(-4.0), 2.0))

    def test_contradiction_scan(self):
        k_tilde = counterexample.measure_k_tilde(counterexample.example_distribution())
        self.assertAlmostEqual(1.281, k_tilde, delta=2e-3)
        scan = counterexample.contradiction_scan(range(10, 21), k_tilde)
        self.assertIsNotNone(scan.m_star)
        self.assertLessEqual(scan.m_star, 12)
        self.assertTrue(scan.monotone)
        self.assertAlmostEqual(1.677, scan.rows[0].ratio, delta=2e-3)
        last = scan.rows[-1]
        self.assertIsNone(last.n)
        self.assertAlmostEqual(0.0125, last.theta, places=14)
        self.assertGreater(last.ratio, 1.85)
        self.assertLessEqual(counterexample.contradiction_scan(range(10, 21), 2.0 * k_tilde).m_star, 12)
        wider = counterexample.contradiction_scan(range(10, 21), k_tilde, theta_factor=1.0)
        self.assertLess(wider.rows[2].ratio, scan.rows[2].ratio)
        for m, factor in ((0, 0.25), (2, 0.25), (12, 0.0)):
            with self.assertRaises(ValueError):
                counterexample.scan_row(m, k_tilde, factor)

    def test_hinge_expectations(self):
        d = counterexample.example_distribution()
        a, b, c = 1.0, 2.0, 0.2
        first, second, remainder = counterexample.hinge_expectations(d, a, b, c)
        sample = d.sample(9, 200000)
        exp_h = np.exp(HingeInfConvolution(a, b, c)(sample))
        exp_f = np.exp(-a * np.maximum(sample - b, 0.0))
        for exact, values in ((first, exp_h), (second, exp_f)):
            spread = 5.0 * float(np.std(values)) / math.sqrt(values.size)
            self.assertAlmostEqual(exact, float(np.mean(values)), delta=spread)
        self.assertLess(remainder, 1e-12)
        first, second, _ = counterexample.hinge_expectations(d, 0.6006, -16384.001, 0.3)
        self.assertEqual(math.inf, first)
        product, _ = counterexample.hinge_product(d, 0.6006, -16384.001, 0.3)
        self.assertTrue(0.0 <= product < 1.0)

    def test_violation_search(self):
        bound = counterexample.quadratic_bound_scan(counterexample.example_distribution())
        results = counterexample.violation_search([0.3, 1.0 / (2.0 * bound.a * bound.eps), 0.6])
        self.assertGreater(results[0].product, 1.05)
        self.assertTrue(results[1].violated)
        self.assertEqual(math.inf, results[2].product)
        with self.assertRaises(DistributionError):
            counterexample.violation_search([0.3], tail_dist.exponential())


class TestIOHandler(unittest.TestCase):
    @staticmethod
    def write(directory: str, text: str) -> str:
        path = os.path.join(directory, 'fn.csv')
        with open(path, 'w', encoding='utf-8') as file:
            file.write(text)
        return path

    def test_grid_csv(self):
        with tempfile.TemporaryDirectory() as directory:
            io_handler = IOHandler(directory)
            f = GridFunction([-1.0, 0.0, 1.0], [np.inf, 0.0, 1.0], 'inf', 'linear')
            path = io_handler.write_grid_csv('fn.csv', f)
            with open(path, encoding='utf-8') as file:
                self.assertEqual('x,value\nright,linear\n-1.0,inf\n0.0,0.0\n1.0,1.0\n', file.read())
            g = io_handler.read_grid_csv(path)
            self.assertEqual(f.x.tolist(), g.x.tolist())
            self.assertEqual(f.values.tolist(), g.values.tolist())
            self.assertEqual('linear', g.right)

    def test_grid_file_errors(self):
        cases = [('x;value\n0,0\n', 1), ('x,value\n0,0\na,1\n', 3), ('x,value\n0,0\n1,1\n1,2\n', 4),
                 ('x,value\n0,1\n1,0\n2,1\n3,0\n', 4), ('x,value\n0,0\n1,-inf\n', 3), ('x,value\n0\n', 2),
                 ('x,value\nleft,quadratic\n', 2)]
        with tempfile.TemporaryDirectory() as directory:
            io_handler = IOHandler(directory)
            for text, row in cases:
                with self.assertRaises(GridFileError) as context:
                    io_handler.read_grid_csv(self.write(directory, text))
                self.assertEqual(row, context.exception.row, text)

    def test_json(self):
        self.assertEqual({'a': 'inf', 'b': [1, 2], 'c': True}, jsonable({'a': math.inf, 'b': (1, 2), 'c': np.True_}))
        with tempfile.TemporaryDirectory() as directory:
            path = IOHandler(directory).write_json('report.json', {'b': 1.5, 'a': -math.inf})
            with open(path, encoding='utf-8') as file:
                self.assertEqual({'a': '-inf', 'b': 1.5}, json.load(file))


class TestRunConfig(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(ConfigError) as context:
            RunConfig('certify', eps=2.0, workers=0).validate()
        problems = context.exception.problems
        self.assertEqual(3, len(problems))
        self.assertEqual(['dist', 'eps', 'workers'], [p.split(':')[0] for p in problems])
        config = RunConfig('certify', dist='exponential').validate()
        self.assertNotIn('workers', config.to_dict())
        self.assertNotIn('problems', config.to_dict())

    def test_load(self):
        with self.assertRaises(ConfigError) as context:
            load_run_config('moments', {'dist': 'laplace'})
        self.assertTrue(context.exception.problems[0].startswith('dist:'))
        config, d = load_run_config('moments', {'dist': 'power:1:2', 'n': 3})
        self.assertEqual(3, config.n)
        self.assertEqual('power', d.tail.kind)
        self.assertEqual((10, 20), parse_range('10:20'))
        self.assertEqual((5, 5), parse_range('5'))

    def test_distribution_file(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'law.ini')
            with open(path, 'w', encoding='utf-8') as file:
                file.write('[distribution]\nkind = piecewise_linear\nbreakpoints = 0, 1, 2\nvalues = 0, 1, 3\n'
                           '[grid]\npoints = 301\n[run]\nseed = 7\n')
            d, overrides = read_distribution_file(path)
            self.assertEqual({'grid_points': 301, 'seed': 7}, overrides)
            self.assertTrue(d.tail.log_concave)
            config, _ = load_run_config('certify', {'dist': path, 'seed': 8})
            self.assertEqual((301, 8), (config.grid_points, config.seed))
            with open(path, 'a', encoding='utf-8') as file:
                file.write('colour = blue\n')
            with self.assertRaises(ConfigError):
                read_distribution_file(path)


class TestCommandLine(unittest.TestCase):
    @staticmethod
    def report(directory: str, name: str) -> dict:
        with open(os.path.join(directory, name), encoding='utf-8') as file:
            return json.load(file)

    @staticmethod
    def read_bytes(path: str) -> bytes:
        with open(path, 'rb') as file:
            return file.read()

    def test_certify(self):
        with tempfile.TemporaryDirectory() as directory:
            self.assertEqual(0, main.initialize(['certify', '--dist', 'exponential', '--grid-span', '20',
                                                 '--grid-points', '201', '--out', directory]))
            report = self.report(directory, 'certify.json')
            self.assertTrue(report['pass'])
            self.assertEqual(['lemma', 'v1', 'v2', 'cases'],
                             [c['condition'] for c in report['result']['certificates']])
            self.assertTrue(os.path.isfile(os.path.join(directory, 'certify.csv')))

    def test_moments(self):
        with tempfile.TemporaryDirectory() as directory:
            self.assertEqual(0, main.initialize(['moments', '--dist', 'exponential', '--n', '2', '--p', '2',
                                                 '--samples', '5000', '--out', directory]))
            report = self.report(directory, 'moments.json')
            self.assertEqual(2, len(report['result']['reports']))

    def test_counterexample(self):
        with tempfile.TemporaryDirectory() as directory:
            self.assertEqual(0, main.initialize(['counterexample', '--scan-m', '10:12', '--violation-c', '0.3',
                                                 '--samples', '2000', '--out', directory]))
            result = self.report(directory, 'counterexample.json')['result']
            self.assertLessEqual(result['scans'][0]['m_star'], 12)
            self.assertGreater(result['best_violation']['product'], 1.05)

    def test_worker_independence(self):
        outputs = []
        for workers in ('1', '4'):
            with tempfile.TemporaryDirectory() as directory:
                self.assertEqual(0, main.initialize(['mc-ici', '--dist', 'exponential', '--functions', '2',
                                                     '--samples', '20000', '--workers', workers, '--out',
                                                     directory]))
                outputs.append([self.read_bytes(os.path.join(directory, name))
                                for name in ('mc_ici.json', 'mc_ici.csv')])
        self.assertEqual(outputs[0], outputs[1])

    def test_transform(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'fn.csv')
            IOHandler(directory).write_grid_csv('fn.csv', GridFunction([0.0, 1.0, 2.0], [0.0, 1.0, 3.0], 'inf',
                                                                       'linear'))
            out = os.path.join(directory, 'out')
            self.assertEqual(0, main.initialize(['transform', '--fn', path, '--op', 'geninv', '--level', '2',
                                                 '--out', out]))
            with open(os.path.join(out, 'transform.json'), encoding='utf-8') as file:
                report = json.load(file)
            self.assertTrue(report['pass'])
            self.assertAlmostEqual(1.5, report['result']['value'])
            self.assertEqual(0, main.initialize(['transform', '--fn', path, '--out', out]))

    def test_invalid_configuration(self):
        with tempfile.TemporaryDirectory() as directory:
            self.assertEqual(2, main.initialize(['certify', '--dist', 'exponential', '--eps', '5', '--out',
                                                 directory]))


if __name__ == '__main__':
    unittest.main()
