import math

import numpy as np
import pytest

from orthantwalk import (GenFun, JumpMeasure, WalkSpec, Window, check_twist_identity,
                         free_walk, green_oracle, green_table, green_to_target,
                         killed_walk, renewal_split, solve_direction, twist,
                         window_around)
from orthantwalk.errors import ValidationError

pytestmark = pytest.mark.filterwarnings("ignore::UserWarning")


@pytest.fixture(scope="module")
def half_spec(half1d):
    return WalkSpec(half1d, frozenset({0}))


@pytest.fixture(scope="module")
def half1d():
    return JumpMeasure({(1,): 0.5, (-1,): 0.5})


class TestGreenTable:
    def test_min_pattern_1d(self, half_spec):
        box = Window((1,), (8,))
        t1 = green_table(half_spec, (1,), box, tol=3e-4)
        assert abs(t1.value((1,)) - 2.0) <= t1.trunc_error + 1e-6
        t2 = green_table(half_spec, (2,), box, tol=3e-4)
        assert abs(t2.value((3,)) - 4.0) <= t2.trunc_error + 1e-6

    def test_self_visit_at_least_one(self, e2):
        spec = killed_walk(e2)
        box = Window((1, 1), (20, 20))
        t = green_table(spec, (5, 5), box, tol=1e-10)
        assert t.value((5, 5)) >= 1.0

    def test_outside_state_space_zero(self, e2):
        spec = killed_walk(e2)
        box = Window((1, 1), (20, 20))
        t = green_table(spec, (5, 5), box, tol=1e-10)
        assert t.value((0, 5)) == 0.0

    def test_all_values_nonnegative(self, e2):
        spec = killed_walk(e2)
        t = green_table(spec, (3, 3), Window((1, 1), (15, 15)), tol=1e-10)
        assert (t.values >= 0.0).all()

    def test_trunc_error_weakly_decreasing_in_box(self, half_spec):
        small = green_table(half_spec, (1,), Window((1,), (16,)), rounds=4)
        large = green_table(half_spec, (1,), Window((1,), (32,)), rounds=4)
        assert large.trunc_error <= small.trunc_error + 1e-15

    def test_recurrent_free_walk_rejected(self, half1d):
        from orthantwalk.errors import SolverError
        spec = free_walk(half1d)
        with pytest.raises(SolverError):
            green_table(spec, (5,), Window((1,), (10,)), tol=1e-12, max_rounds=12)

    def test_csv_export(self, half_spec, tmp_path):
        t = green_table(half_spec, (1,), Window((1,), (5,)), rounds=3)
        out = tmp_path / "g.csv"
        t.to_csv(out)
        text = out.read_text()
        assert "trunc_error" in text
        assert "x1,value" in text


class TestGreenOracle:
    def test_t0_cases(self, half_spec):
        assert green_oracle(half_spec, (3,), (3,), 0) == 1.0
        assert green_oracle(half_spec, (3,), (4,), 0) == 0.0

    def test_1d_return_value(self, half_spec):
        # closed form: expected visits to the start 1/(1 - return prob) -> 2
        val = green_oracle(half_spec, (1,), (1,), 20_000)
        assert abs(val - 2.0) <= 2e-2
        assert val <= 2.0

    def test_monotone_in_horizon(self, half_spec):
        vals = [green_oracle(half_spec, (2,), (3,), t) for t in (10, 100, 1000)]
        assert vals[0] <= vals[1] <= vals[2]

    def test_oracle_dominance_and_convergence(self, e2):
        spec = killed_walk(e2)
        box = Window((1, 1), (24, 24))
        table = green_table(spec, (4, 4), box, tol=1e-12)
        target = (7, 5)
        gaps = []
        for t in (50, 100, 200, 400, 800):
            val = green_oracle(spec, (4, 4), target, t)
            assert val <= table.value(target) + table.trunc_error + 1e-12
            gaps.append(table.value(target) - val)
        assert all(a >= b - 1e-12 for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] <= table.trunc_error + 1e-6


class TestTwist:
    def test_identity_twist(self, e1):
        spec = killed_walk(e1)
        tw = twist(spec, np.zeros(2))
        assert tw.measure == e1

    def test_twisted_mean_parallel_to_direction(self, e1):
        gf = GenFun(e1)
        a = solve_direction(gf, np.array([1.0, 0.0])).a
        tw = twist(killed_walk(e1), a)
        m = tw.measure.mean
        assert abs(m[1]) <= 1e-8
        assert m[0] > 0

    def test_untwist_recovers_measure(self, e1):
        gf = GenFun(e1)
        a = solve_direction(gf, np.array([0.0, 1.0])).a
        tw = twist(killed_walk(e1), a)
        back = twist(tw, -a)
        for z, p in e1.atoms.items():
            assert abs(back.measure.atoms[z] - p) <= 1e-12

    def test_off_boundary_rejected(self, e1):
        with pytest.raises(ValidationError):
            twist(killed_walk(e1), np.array([0.3, 0.3]))

    def test_identity_deviation_zero_at_zero(self, e1):
        spec = killed_walk(e1)
        box = Window((1, 1), (12, 12))
        assert check_twist_identity(spec, np.zeros(2), (2, 3), (6, 4), box,
                                    rounds=2) == 0.0

    def test_identity_small_2d(self, e1):
        gf = GenFun(e1)
        a = solve_direction(gf, np.array([1.0, 0.0])).a
        spec = killed_walk(e1)
        box = Window((1, 1), (40, 40))
        for pair in [((2, 3), (10, 8)), ((5, 5), (20, 30)), ((1, 1), (7, 2))]:
            dev = check_twist_identity(spec, a, *pair, box, rounds=2)
            assert dev <= 1e-6

    def test_identity_1d_drift(self):
        m = JumpMeasure({(1,): 0.6, (-1,): 0.4})
        spec = WalkSpec(m, frozenset({0}))
        gf = GenFun(m)
        a = solve_direction(gf, np.array([-1.0])).a
        dev = check_twist_identity(spec, a, (3,), (9,), Window((1,), (30,)), rounds=3)
        assert dev <= 1e-6


class TestKillSetMonotonicity:
    def test_more_killing_less_green(self, e2):
        rng = np.random.default_rng(0)
        full = killed_walk(e2)
        partial = WalkSpec(e2, frozenset({1}))
        box = Window((1, 1), (18, 18))
        for _ in range(4):
            x = tuple(int(c) for c in rng.integers(1, 8, size=2))
            t_full = green_table(full, x, box, rounds=3)
            t_part = green_table(partial, x, box, rounds=3)
            vals_full = t_full.values
            vals_part = t_part.values
            assert (vals_full <= vals_part + 1e-9).all()


class TestHarnackBound:
    def test_green_bounded_by_exponential(self, e1):
        # free-walk diagonal Green value as the constant
        spec_free = free_walk(e1)
        box0 = Window((-20, -20), (20, 20))
        c = green_table(spec_free, (0, 0), box0, tol=1e-8).value((0, 0))
        gf = GenFun(e1)
        spec = WalkSpec(e1, frozenset({1}))
        box = Window((-5, 1), (18, 18))
        table = green_table(spec, (4, 4), box, tol=1e-8)
        rng = np.random.default_rng(1)
        boundary_pts = []
        for _ in range(12):
            q = rng.normal(size=2)
            q /= np.linalg.norm(q)
            boundary_pts.append(solve_direction(gf, q).a)
        for xp in [(2, 2), (8, 5), (14, 9), (4, 12)]:
            g = table.value(xp)
            for a in boundary_pts:
                bound = c * math.exp(float(np.dot(a, np.array((4, 4)) - np.array(xp))))
                assert g <= bound * (1.0 + 1e-7) + 1e-12


class TestRenewalSplit:
    def test_1d_degenerate(self, half1d):
        m = JumpMeasure({(1,): 0.4, (-1,): 0.6})
        spec = WalkSpec(m, frozenset({0}))
        box = Window((1,), (40,))
        rs = renewal_split(spec, frozenset({0}), (2,), (10,), 0.5, box)
        assert rs.remainder == 0.0
        g = green_table(spec, (2,), box, tol=1e-12)
        assert abs(rs.main - g.value((10,))) <= 1e-8 * (1.0 + g.value((10,)))

    def test_huge_delta_keeps_remainder_zero(self, e2):
        spec = killed_walk(e2)
        box = window_around(spec, [(4, 4), (16, 5)], 14)
        rs = renewal_split(spec, frozenset({1}), (4, 4), (16, 5), 1e6, box)
        assert rs.remainder == 0.0
        g = green_table(spec, (4, 4), box, tol=1e-12)
        gv = g.value((16, 5))
        assert abs(rs.main - gv) <= 1e-8 * (1.0 + gv)

    def test_identity_with_small_delta(self, e2):
        spec = killed_walk(e2)
        box = window_around(spec, [(4, 4), (18, 5)], 16)
        rs = renewal_split(spec, frozenset({1}), (4, 4), (18, 5), 0.3, box)
        assert rs.remainder >= 0.0
        g = green_table(spec, (4, 4), box, tol=1e-12)
        gv = g.value((18, 5))
        assert abs((rs.main - rs.remainder) - gv) <= 1e-8 * (1.0 + gv)

    def test_principal_share_shrinks_along_mean(self, e2):
        spec = killed_walk(e2)
        shares = []
        for n in (20, 40, 80):
            xp = (n, 5)
            box = window_around(spec, [(5, 5), xp], 16)
            rs = renewal_split(spec, frozenset({1}), (5, 5), xp, 0.4, box)
            g = rs.main - rs.remainder
            shares.append(rs.main / g)
        assert all(s >= 1.0 - 1e-12 for s in shares)
        assert shares[-1] <= shares[0] + 1e-12
        assert shares[-1] - 1.0 <= 0.05

    def test_requires_fully_killed(self, e2):
        spec = WalkSpec(e2, frozenset({1}))
        with pytest.raises(ValidationError):
            renewal_split(spec, frozenset({1}), (4, 4), (10, 5), 0.5,
                          Window((1, 1), (20, 20)))
