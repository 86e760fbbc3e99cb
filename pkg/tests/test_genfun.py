import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orthantwalk import (GenFun, JumpMeasure, lambda_pair, legendre, phi,
                         grad_phi, quasipotential, rate_functional,
                         solve_direction, tail_decay_rate)
from orthantwalk.errors import SolverError, ValidationError
from orthantwalk.genfun import exit_moment_margin, hull_position

from conftest import random_drifted_measure


def bisect_direction_e_axis(measure, axis, lo=-2.0, hi=2.0):
    """1-D reduction oracle for a(e_axis) on a 2D axis-step measure.

    Sets the off-axis gradient component to zero analytically (the
    off-axis part of phi is minimized), then bisects phi = 1 in the
    on-axis variable and keeps the root with positive on-axis slope.
    """
    gf = GenFun(measure)
    other = 1 - axis

    def off_axis_min():
        up = measure.atoms.get(tuple(1 if i == other else 0 for i in range(2)), 0.0)
        down = measure.atoms.get(tuple(-1 if i == other else 0 for i in range(2)), 0.0)
        return 0.5 * math.log(down / up)

    a_other = off_axis_min()

    def phi_on(t):
        a = [0.0, 0.0]
        a[axis] = t
        a[other] = a_other
        return gf.phi(a)

    # the root with positive slope lies to the right of the minimizer
    tmin = lo
    best = phi_on(lo)
    t = lo
    while t <= hi:
        if phi_on(t) < best:
            best, tmin = phi_on(t), t
        t += 1e-3
    lo_b, hi_b = tmin, hi
    for _ in range(200):
        mid = 0.5 * (lo_b + hi_b)
        if phi_on(mid) < 1.0:
            lo_b = mid
        else:
            hi_b = mid
    a = [0.0, 0.0]
    a[axis] = 0.5 * (lo_b + hi_b)
    a[other] = a_other
    return np.array(a)


def grid_legendre(measure, v, lo=-3.0, hi=3.0, steps=121, refinements=6):
    """Conjugate by dense grid search with local refinement (no Newton)."""
    gf = GenFun(measure)
    v = np.asarray(v, dtype=float)
    center = np.zeros(len(v))
    width = hi - lo
    best = -math.inf
    for _ in range(refinements):
        axes = [np.linspace(c - width / 2, c + width / 2, steps) for c in center]
        grids = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([g.ravel() for g in grids], axis=1)
        vals = pts @ v - np.log(
            np.exp(pts @ measure.support.T.astype(float)) @ measure.probabilities)
        k = int(np.argmax(vals))
        best = float(vals[k])
        center = pts[k]
        width /= steps / 6
    return best


class TestPhi:
    def test_at_zero(self, e1):
        assert phi(GenFun(e1), [0.0, 0.0]) == 1.0

    def test_closed_form_on_axis(self, e1):
        t = 1.0
        expect = 0.3 * math.exp(t) + 0.2 * math.exp(-t) + 0.5
        assert abs(phi(GenFun(e1), [t, 0.0]) - expect) <= 1e-14

    def test_boundary_point_feeds_back(self, e2):
        gf = GenFun(e2)
        a = solve_direction(gf, np.array([0.0, 1.0])).a
        assert abs(gf.phi(a) - 1.0) <= 1e-10

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_convexity_probe(self, seed):
        rng = np.random.default_rng(seed)
        m = random_drifted_measure(2, rng)
        gf = GenFun(m)
        a, b = rng.normal(size=2), rng.normal(size=2)
        t = rng.uniform(0.05, 0.95)
        lhs = gf.phi(t * a + (1 - t) * b)
        rhs = t * gf.phi(a) + (1 - t) * gf.phi(b)
        assert lhs <= rhs + 1e-12


class TestGrad:
    def test_at_zero_equals_mean(self, e1):
        assert np.allclose(grad_phi(GenFun(e1), [0, 0]), e1.mean, atol=1e-15)

    def test_finite_difference(self):
        rng = np.random.default_rng(7)
        m = random_drifted_measure(2, rng)
        gf = GenFun(m)
        a = np.array([0.1, -0.2])
        g = gf.grad_phi(a)
        h = 1e-5
        for i in range(2):
            e = np.zeros(2)
            e[i] = h
            fd = (gf.phi(a + e) - gf.phi(a - e)) / (2 * h)
            assert abs(fd - g[i]) <= 1e-6

    def test_point_mass(self):
        m = JumpMeasure({(2, 3): 1.0})
        assert np.allclose(grad_phi(GenFun(m), [0.0, 0.0]), [2.0, 3.0])


class TestSolveDirection:
    def test_mean_direction_gives_zero(self, e1):
        gf = GenFun(e1)
        q = e1.mean / np.linalg.norm(e1.mean)
        ds = solve_direction(gf, q)
        assert np.abs(ds.a).max() <= 1e-10

    def test_e1_axis_oracle(self, e1):
        ds = solve_direction(GenFun(e1), np.array([1.0, 0.0]))
        oracle = bisect_direction_e_axis(e1, 0)
        assert np.abs(ds.a - oracle).max() <= 1e-7
        assert abs(ds.a[0] - 0.0835) <= 5e-4
        assert abs(ds.a[1] - (-0.2027)) <= 5e-4

    def test_e2_vertical_oracle(self, e2):
        ds = solve_direction(GenFun(e2), np.array([0.0, 1.0]))
        oracle = bisect_direction_e_axis(e2, 1)
        assert ds.a[1] > 0
        assert np.abs(ds.a - oracle).max() <= 1e-7

    def test_non_unit_rejected(self, e1):
        with pytest.raises(ValidationError):
            solve_direction(GenFun(e1), np.array([1.0, 1.0]))

    def test_round_trip_random_directions(self):
        rng = np.random.default_rng(11)
        for trial in range(100):
            m = random_drifted_measure(2 if trial % 2 else 3, rng)
            gf = GenFun(m)
            q = rng.normal(size=m.dim)
            q /= np.linalg.norm(q)
            ds = solve_direction(gf, q)
            assert ds.residual_phi <= 1e-10
            assert ds.residual_dir <= 1e-8
            g = gf.grad_phi(ds.a)
            back = g / np.linalg.norm(g)
            assert np.abs(back - q).max() <= 1e-8

    def test_zero_mean_rejected(self, symmetric2d):
        with pytest.raises(SolverError):
            solve_direction(GenFun(symmetric2d), np.array([1.0, 0.0]))


class TestLegendre:
    def test_zero_at_mean(self, e1, e2):
        for m in (e1, e2):
            assert legendre(GenFun(m), m.mean) <= 1e-10

    def test_grid_oracle_interior(self, e1):
        val = legendre(GenFun(e1), [0.3, 0.1])
        assert abs(val - grid_legendre(e1, [0.3, 0.1])) <= 1e-6

    def test_support_point_boundary(self, e1):
        with pytest.warns(UserWarning):
            val = legendre(GenFun(e1), [1.0, 0.0])
        assert val >= grid_legendre(e1, [1.0, 0.0]) - 1e-6
        assert val <= -math.log(0.3) + 1e-6

    def test_outside_hull_infinite(self, e1):
        assert legendre(GenFun(e1), [2.0, 0.0]) == math.inf

    def test_hull_position_signs(self, e1):
        gf = GenFun(e1)
        assert hull_position(gf, [0.0, 0.0]) > 0
        assert hull_position(gf, [2.0, 0.0]) < 0

    def test_duality_at_optimizer(self, e1):
        # independent optimizer via scipy, then first-order condition
        from scipy.optimize import minimize
        gf = GenFun(e1)
        v = np.array([0.25, 0.05])
        res = minimize(lambda a: math.log(gf.phi(a)) - float(np.dot(a, v)),
                       np.zeros(2), method="BFGS", tol=1e-12)
        a_star = res.x
        assert np.abs(gf.grad_phi(a_star) / gf.phi(a_star) - v).max() <= 1e-6
        assert abs(legendre(gf, v) - (-res.fun)) <= 1e-8

    def test_nonnegative(self, e1):
        rng = np.random.default_rng(3)
        gf = GenFun(e1)
        for _ in range(20):
            v = rng.uniform(-0.5, 0.5, size=2)
            if hull_position(gf, v) > 1e-6:
                assert legendre(gf, v) >= 0.0


class TestQuasipotential:
    def test_zero_along_mean(self, e1):
        assert quasipotential(GenFun(e1), e1.mean, [0.0, 0.0]) <= 1e-12

    def test_zero_at_equal_points(self, e1):
        assert quasipotential(GenFun(e1), [0.4, 0.7], [0.4, 0.7]) == 0.0

    def test_axis_value_matches_direction_solve(self, e1):
        val = quasipotential(GenFun(e1), [1.0, 0.0], [0.0, 0.0])
        oracle = bisect_direction_e_axis(e1, 0)
        assert abs(val - oracle[0]) <= 1e-7
        assert abs(val - 0.0835) <= 5e-4

    def test_nonnegative_and_mean_ray_null(self, e1):
        gf = GenFun(e1)
        rng = np.random.default_rng(5)
        for _ in range(15):
            q = rng.uniform(0, 2, size=2)
            qp = rng.uniform(0, 2, size=2)
            val = quasipotential(gf, q, qp)
            assert val >= -1e-12
            diff = q - qp
            on_mean_ray = (np.linalg.norm(diff) < 1e-12 or
                           (diff[0] > 0 and abs(diff[1] / diff[0] - 1.0) < 1e-9))
            if not on_mean_ray and np.linalg.norm(diff) > 1e-9:
                assert val > 1e-9
        m = e1.mean
        assert quasipotential(gf, 3.0 * m, [0.0, 0.0]) <= 1e-11


class TestRateFunctional:
    def test_straight_mean_path_zero(self, e1):
        gf = GenFun(e1)
        x = np.array([5.0, 5.0])
        path = [(0.0, x), (10.0, x + 10.0 * e1.mean)]
        assert rate_functional(gf, path, [0, 1]) <= 1e-9

    def test_leaves_orthant_infinite(self, e1):
        gf = GenFun(e1)
        path = [(0.0, (5.0, 5.0)), (10.0, (-1.0, 5.0))]
        assert rate_functional(gf, path, [0, 1]) == math.inf

    def test_two_segment_matches_pieces(self, e1):
        gf = GenFun(e1)
        x0 = np.array([5.0, 5.0])
        v1 = np.array([0.3, 0.1])
        t1 = 4.0
        x1 = x0 + t1 * v1
        x2 = x1 + 6.0 * e1.mean
        total = rate_functional(gf, [(0.0, x0), (t1, x1), (10.0, x2)], [0, 1])
        expect = t1 * legendre(gf, v1) + 6.0 * legendre(gf, e1.mean)
        assert abs(total - expect) <= 1e-9

    def test_additivity_exact(self, e1):
        gf = GenFun(e1)
        x0 = np.array([4.0, 6.0])
        mid = x0 + np.array([1.2, 0.4])
        end = mid + np.array([0.8, 1.0])
        joint = rate_functional(gf, [(0.0, x0), (3.0, mid), (7.0, end)], [0, 1])
        first = rate_functional(gf, [(0.0, x0), (3.0, mid)], [0, 1])
        second = rate_functional(gf, [(3.0, mid), (7.0, end)], [0, 1])
        assert joint == first + second

    def test_nonmonotone_times_rejected(self, e1):
        with pytest.raises(ValidationError):
            rate_functional(GenFun(e1), [(0.0, (1, 1)), (0.0, (2, 2))], [0, 1])


class TestLambdaPair:
    def test_zero_cases(self, e1):
        gf = GenFun(e1)
        lam0, _ = lambda_pair(gf, [0.0, 0.0])
        assert lam0 <= 1e-12
        q = e1.mean / np.linalg.norm(e1.mean)
        _, lam_m = lambda_pair(gf, q)
        assert abs(lam_m) <= 1e-10

    def test_positive_off_axis(self, e1):
        lam, _ = lambda_pair(GenFun(e1), [1.0, 0.0])
        assert lam > 1e-6

    def test_homogeneous(self, e1):
        gf = GenFun(e1)
        q = np.array([0.7, -0.3])
        lam1, _ = lambda_pair(gf, q)
        lam2, _ = lambda_pair(gf, 2.0 * q)
        assert abs(lam2 - 2.0 * lam1) <= 1e-9


class TestTailDecay:
    def test_finite_support_tail_vanishes(self, e1):
        td = tail_decay_rate(GenFun(e1))
        assert td.support_radius == 1.0

    def test_wide_support(self):
        m = JumpMeasure({(3,): 0.2, (1,): 0.3, (-1,): 0.3, (-3,): 0.2})
        td = tail_decay_rate(GenFun(m))
        assert td.support_radius == 3.0

    def test_bound_dominates_exact_tail(self, e1):
        m = JumpMeasure({(2, 1): 0.2, (1, 0): 0.3, (-1, 0): 0.3, (0, -2): 0.2})
        td = tail_decay_rate(GenFun(m))
        for r in range(1, 10):
            tail = sum(p for z, p in m.atoms.items()
                       if np.linalg.norm(z) >= r)
            assert td.bound(r) >= tail


class TestExitMomentMargin:
    def test_positive_margin(self, e2):
        eps = exit_moment_margin(e2, frozenset({1}))
        assert eps > 0.0

    def test_margin_point_inside_d(self, e2):
        # the margin promises integrability; sanity-check it is modest
        eps = exit_moment_margin(e2, frozenset({1}))
        assert eps < 2.0
