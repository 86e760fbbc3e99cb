import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from orthantwalk import (JumpMeasure, WalkSpec, communication_path, dump_measure,
                         killed_walk, lambda_of, load_measure, marginal_measure,
                         mean_vector, validate)
from orthantwalk.errors import ValidationError


def rational_measures(dim):
    """Measures with exactly representable dyadic probabilities."""

    @st.composite
    def build(draw):
        n = draw(st.integers(2, 5))
        atoms = {}
        weights = []
        for _ in range(n):
            z = tuple(draw(st.integers(-2, 2)) for _ in range(dim))
            w = draw(st.integers(1, 8))
            if z in atoms:
                continue
            atoms[z] = w
            weights.append(w)
        if len(atoms) < 2:
            atoms[(1,) * dim] = 1
            atoms[(-1,) * dim] = 1
        total = sum(atoms.values())
        # scale to a power of two so the probabilities stay exact dyadics
        scale = 2 ** math.ceil(math.log2(total))
        probs = {z: w / scale for z, w in atoms.items()}
        probs[(0,) * dim] = probs.get((0,) * dim, 0.0) + (scale - total) / scale
        probs = {z: p for z, p in probs.items() if p > 0}
        return JumpMeasure(probs, dim=dim)

    return build()


class TestJumpMeasure:
    def test_sum_and_mean_cached(self, e1):
        assert abs(math.fsum(e1.atoms.values()) - 1.0) <= 1e-12
        recomputed = math.fsum(p * z[0] for z, p in e1.atoms.items())
        assert abs(recomputed - e1.mean[0]) <= 1e-12

    def test_nonpositive_probability_rejected(self):
        with pytest.raises(ValidationError):
            JumpMeasure({(1,): 1.0, (-1,): 0.0})

    def test_bad_sum_rejected(self):
        with pytest.raises(ValidationError):
            JumpMeasure({(1,): 0.5, (-1,): 0.5 - 5e-9})

    def test_zero_dim_rejected(self):
        with pytest.raises(ValidationError):
            JumpMeasure({(): 1.0}, dim=0)

    @given(rational_measures(2))
    @settings(max_examples=40, deadline=None)
    def test_mean_matches_recomputation(self, m):
        for i in range(m.dim):
            recomputed = math.fsum(p * z[i] for z, p in m.atoms.items())
            assert abs(recomputed - m.mean[i]) <= 1e-12


class TestValidate:
    def test_e1(self, e1):
        rep = validate(e1)
        assert np.allclose(e1.mean, [0.1, 0.1])
        assert rep.lambda_of_mean == frozenset()
        assert rep.a3_nonzero_mean
        assert rep.a4prime_axis_jumps
        assert rep.a1_all and rep.ok

    def test_e2(self, e2):
        rep = validate(e2)
        assert np.allclose(e2.mean, [0.1, 0.0])
        assert rep.lambda_of_mean == frozenset({1})

    def test_symmetric_flags_a3(self, symmetric2d):
        rep = validate(symmetric2d)
        assert not rep.a3_nonzero_mean
        assert rep.lambda_of_mean == frozenset({0, 1})
        assert not rep.ok

    def test_all_subsets_tested_small_dim(self, e1):
        rep = validate(e1)
        assert len(rep.a1_irreducible) == 4

    def test_lambda_of_exact_zero(self):
        assert lambda_of([0.1, 0.0, -0.2]) == frozenset({1})


class TestMean:
    def test_examples(self, e1, e2):
        assert np.allclose(mean_vector(e1), [0.1, 0.1], atol=1e-15)
        assert np.allclose(mean_vector(e2), [0.1, 0.0], atol=1e-15)

    def test_point_mass(self):
        m = JumpMeasure({(1, 2): 1.0})
        assert np.array_equal(mean_vector(m), [1.0, 2.0])


class TestMarginal:
    def test_e2_second_coordinate(self, e2):
        m = marginal_measure(e2, [1])
        assert m.atoms == {(1,): 0.25, (-1,): 0.25, (0,): 0.5}

    def test_e1_first_coordinate(self, e1):
        m = marginal_measure(e1, [0])
        assert m.atoms == {(1,): 0.3, (-1,): 0.2, (0,): 0.5}

    def test_identity(self, e1):
        assert marginal_measure(e1, [0, 1]) == e1

    def test_empty_rejected(self, e1):
        with pytest.raises(ValidationError):
            marginal_measure(e1, [])

    @given(rational_measures(3), st.sets(st.integers(0, 2), min_size=1))
    @settings(max_examples=30, deadline=None)
    def test_mean_commutes(self, m, lam):
        marg = marginal_measure(m, lam)
        expect = [m.mean[i] for i in sorted(lam)]
        assert np.allclose(marg.mean, expect, atol=1e-12)
        assert abs(math.fsum(marg.atoms.values()) - 1.0) <= 1e-12


def bfs_oracle(measure, kill_set, x, xp, window):
    """Independent reachability check over the support graph."""
    lo = [min(a, b) - window for a, b in zip(x, xp)]
    hi = [max(a, b) + window for a, b in zip(x, xp)]
    for i in kill_set:
        lo[i] = max(lo[i], 1)
    seen = {x}
    queue = deque([(x, 0)])
    while queue:
        s, n = queue.popleft()
        if s == xp:
            return n
        for z in measure.atoms:
            t = tuple(a + b for a, b in zip(s, z))
            if t in seen or any(c < l or c > h for c, l, h in zip(t, lo, hi)):
                continue
            seen.add(t)
            queue.append((t, n + 1))
    return None


class TestCommunicationPath:
    def test_two_steps_right(self, e1):
        spec = killed_walk(e1)
        path = communication_path(spec, (1, 1), (3, 1))
        assert path == [(1, 0), (1, 0)]

    def test_identity(self, e1):
        assert communication_path(killed_walk(e1), (2, 2), (2, 2)) == []

    def test_e2_up_two(self, e2):
        spec = killed_walk(e2)
        path = communication_path(spec, (1, 1), (1, 3))
        c = 4 * 2 * e2.max_jump_norm()
        assert path is not None and len(path) <= c * 2
        oracle = bfs_oracle(e2, spec.kill_set, (1, 1), (1, 3), 8)
        assert oracle is not None and len(path) == oracle

    def test_outside_state_space_rejected(self, e1):
        with pytest.raises(ValidationError):
            communication_path(killed_walk(e1), (0, 1), (2, 2))

    @given(st.tuples(st.integers(1, 6), st.integers(1, 6)),
           st.tuples(st.integers(1, 6), st.integers(1, 6)))
    @settings(max_examples=25, deadline=None)
    def test_replay_stays_in_space(self, x, xp):
        m = JumpMeasure({(1, 0): 0.3, (-1, 0): 0.2, (0, 1): 0.25, (0, -1): 0.25})
        spec = killed_walk(m)
        path = communication_path(spec, x, xp)
        assert path is not None
        cur = list(x)
        for step in path:
            cur = [a + b for a, b in zip(cur, step)]
            assert spec.in_state_space(cur)
        assert tuple(cur) == xp


class TestMeasureFile:
    def test_round_trip(self, tmp_path, e1):
        path = tmp_path / "m.txt"
        dump_measure(e1, path)
        again = load_measure(path)
        assert again == e1

    def test_duplicate_atom_rejected(self, tmp_path):
        path = tmp_path / "dup.txt"
        path.write_text("dim 1\natom 1 0.5\natom 1 0.5\n")
        with pytest.raises(ValidationError):
            load_measure(path)

    def test_unknown_record_rejected(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("dim 1\nblob 1 0.5\n")
        with pytest.raises(ValidationError):
            load_measure(path)

    def test_comments_and_blanks_ok(self, tmp_path):
        path = tmp_path / "ok.txt"
        path.write_text("# measure\ndim 1\n\natom 1 0.5\natom -1 0.5\n")
        m = load_measure(path)
        assert m.atoms == {(1,): 0.5, (-1,): 0.5}
