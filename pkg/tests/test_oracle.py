import math
from dataclasses import replace

import numpy as np
import pytest

from abple.oracle import (
    McInstance,
    SolutionSet,
    admissible_deltas,
    empirical_curve,
    empirical_local_entropy,
    enumerate_solutions,
    hamming_distance,
    reference_counts,
    sample_instance,
)


def naive_solutions(inst):
    """Per-vertex check of every constraint with plain Python loops."""
    n = inst.n
    out = []
    for mask in range(1 << n):
        x = [(1.0 if (mask >> i) & 1 else -1.0) / math.sqrt(n) for i in range(n)]
        if all(sum(inst.g[j, i] * x[i] for i in range(n)) >= inst.kappa for j in range(inst.m)):
            out.append(mask)
    return out


def naive_local_entropy(inst, delta_bar):
    """Reference x solution x distance triple loop."""
    n = inst.n
    d = round(n * (1 - delta_bar) / 2)
    sols = naive_solutions(inst)
    if not sols:
        return -math.inf
    best = 0
    for ref in range(1 << n):
        count = 0
        for x in sols:
            if sum(((ref ^ x) >> i) & 1 for i in range(n)) == d:
                count += 1
        best = max(best, count)
    return math.log(best) / n if best else -math.inf


def counting_bound(n, d):
    return math.log(math.comb(n, d)) / n


def oracle_unconstrained_exact():
    """(n, d, got, expected) for m=0 over n in {8, 12, 16} and every admissible d."""
    rows = []
    for n in (8, 12, 16):
        inst = sample_instance(n, 0.0, 0.0, 3)
        sols = enumerate_solutions(inst)
        for dl in admissible_deltas(n):
            d = hamming_distance(n, dl)
            rows.append((n, d, empirical_local_entropy(inst, dl, "exhaustive", solutions=sols).value,
                         counting_bound(n, d)))
    return rows


def oracle_naive_mismatches():
    """Disagreements with the triple loop on 10 seeded n=10, alpha=0.5 instances."""
    bad = []
    for seed in range(10):
        inst = sample_instance(10, 0.5, 0.0, 1000 + seed)
        sols = enumerate_solutions(inst)
        for dl in (0.8, 0.6, 0.2):
            got = empirical_local_entropy(inst, dl, "exhaustive", solutions=sols).value
            ref = naive_local_entropy(inst, dl)
            if got != ref:
                bad.append((seed, dl, got, ref))
    return bad


def oracle_bound_violations():
    """Out-of-range values on 16 seeded n=16, alpha=0.3 instances."""
    bad = []
    for seed in range(16):
        inst = sample_instance(16, 0.3, 0.0, 2000 + seed)
        sols = enumerate_solutions(inst)
        for dl in admissible_deltas(16):
            d = hamming_distance(16, dl)
            v = empirical_local_entropy(inst, dl, "exhaustive", solutions=sols).value
            if not 0.0 <= v <= counting_bound(16, d):
                bad.append((seed, dl, v))
    return bad


class TestInstances:
    def test_alpha_zero(self):
        inst = sample_instance(8, 0.0, 0.0, 1)
        assert inst.m == 0 and inst.g.shape == (0, 8)

    def test_rounding_of_m(self):
        assert sample_instance(10, 0.25, 0.0, 1).m == 3
        assert sample_instance(10, 0.77, 0.0, 1).m == 8

    def test_deterministic(self):
        a = sample_instance(12, 0.5, 0.0, 99)
        b = sample_instance(12, 0.5, 0.0, 99)
        assert np.array_equal(a.g, b.g)
        assert not np.array_equal(a.g, sample_instance(12, 0.5, 0.0, 100).g)

    def test_column_means(self):
        inst = sample_instance(8, 0.5, 0.0, 7)
        assert np.all(np.abs(inst.g.mean(axis=0)) <= 4 / math.sqrt(8))

    @pytest.mark.parametrize("n", [0, 31])
    def test_n_range(self, n):
        with pytest.raises(ValueError):
            sample_instance(n, 0.5, 0.0, 1)

    def test_negative_alpha(self):
        with pytest.raises(ValueError):
            sample_instance(8, -0.5, 0.0, 1)


class TestEnumeration:
    def test_unconstrained(self):
        s = enumerate_solutions(sample_instance(9, 0.0, 0.0, 1))
        assert np.array_equal(s.members, np.arange(512))

    def test_unsatisfiable(self):
        assert len(enumerate_solutions(sample_instance(10, 0.5, 1e6, 1))) == 0

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_naive(self, seed):
        inst = sample_instance(10, 0.6, -0.1 * seed, 500 + seed)
        assert enumerate_solutions(inst).members.tolist() == naive_solutions(inst)

    def test_members_satisfy_constraints(self):
        inst = sample_instance(14, 0.5, 0.0, 3)
        s = enumerate_solutions(inst)
        assert len(s) > 0
        assert np.all(inst.fields(s.members) >= inst.kappa)

    def test_chunk_boundaries(self):
        # 2^15 vertices spans two Gray-code chunks
        inst = sample_instance(15, 0.4, 0.0, 5)
        s = enumerate_solutions(inst)
        all_masks = np.arange(1 << 15)
        direct = all_masks[np.all(inst.fields(all_masks) >= 0.0, axis=1)]
        assert np.array_equal(s.members, direct)

    def test_budget(self):
        with pytest.raises(ValueError):
            enumerate_solutions(sample_instance(27, 0.1, 0.0, 1))


class TestLocalEntropy:
    def test_unconstrained_exact(self):
        for n, d, got, want in oracle_unconstrained_exact():
            assert got == want, (n, d)

    def test_distance_zero(self):
        inst = sample_instance(10, 0.5, 0.0, 4)
        assert empirical_local_entropy(inst, 1.0).value == 0.0

    def test_empty_marker(self):
        est = empirical_local_entropy(sample_instance(8, 0.5, 1e6, 1), 0.5)
        assert est.empty and est.value == -math.inf and float(est) == -math.inf

    def test_non_integer_distance(self):
        inst = sample_instance(10, 0.5, 0.0, 1)
        with pytest.raises(ValueError, match="nearest admissible delta_bar is 0.8"):
            empirical_local_entropy(inst, 0.85)

    def test_naive_triple_loop(self):
        assert oracle_naive_mismatches() == []

    def test_fft_counts_match_popcount(self):
        inst = sample_instance(11, 0.5, 0.0, 8)
        s = enumerate_solutions(inst)
        counts = reference_counts(s, 3)
        refs = np.arange(1 << 11)
        direct = [(np.bitwise_count(s.members ^ r) == 3).sum() for r in refs]
        assert counts.tolist() == direct

    def test_counting_bound(self):
        assert oracle_bound_violations() == []

    def test_removing_a_row_never_decreases(self):
        full = sample_instance(12, 0.75, 0.0, 21)
        fewer = replace(full, m=full.m - 1, g=full.g[:-1])
        for dl in (5 / 6, 2 / 3, 1 / 3):
            assert (empirical_local_entropy(fewer, dl).value
                    >= empirical_local_entropy(full, dl).value)

    def test_sampled_is_lower_bound(self):
        for seed in range(3):
            inst = sample_instance(14, 0.4, 0.0, 40 + seed)
            sols = enumerate_solutions(inst)
            for dl in (6 / 7, 4 / 7):
                ex = empirical_local_entropy(inst, dl, "exhaustive", solutions=sols)
                sa = empirical_local_entropy(inst, dl, "sampled", references=500, solutions=sols)
                assert sa.lower_bound and not ex.lower_bound
                assert sa.value <= ex.value

    def test_sampled_popcount_and_bitmap_paths_agree(self):
        inst = sample_instance(12, 0.2, 0.0, 6)
        sols = enumerate_solutions(inst)
        few = SolutionSet(n=12, members=sols.members[:10])
        many = sols
        for s in (few, many):
            a = empirical_local_entropy(inst, 2 / 3, "sampled", references=300, solutions=s, seed=1)
            brute = max((np.bitwise_count(s.members ^ r) == 2).sum()
                        for r in _refs_for(s, 300, 1))
            assert a.count == brute

    def test_deterministic(self):
        inst = sample_instance(12, 0.5, 0.0, 9)
        a = empirical_local_entropy(inst, 2 / 3, "sampled", references=200)
        b = empirical_local_entropy(inst, 2 / 3, "sampled", references=200)
        assert a == b

    def test_exhaustive_budget(self):
        inst = McInstance(n=21, m=0, kappa=0.0, g=np.zeros((0, 21)), seed=0)
        sols = SolutionSet(n=21, members=np.arange(4, dtype=np.int64))
        with pytest.raises(ValueError):
            empirical_local_entropy(inst, 19 / 21, "exhaustive", solutions=sols)


def _refs_for(sols, count, seed):
    from abple.oracle import _sampled_references
    d = 2
    return _sampled_references(sols, d, count, np.random.default_rng(seed))


class TestCurve:
    def test_single_instance_has_zero_error(self):
        rows = empirical_curve(10, 0.5, 0.0, [0.8, 0.6], instances=1, base_seed=3)
        assert all(se == 0.0 for _, _, se in rows)

    def test_alpha_zero(self):
        rows = empirical_curve(10, 0.0, 0.0, [0.8, 0.4], instances=3, base_seed=0)
        for dl, mean, se in rows:
            d = hamming_distance(10, dl)
            assert mean == counting_bound(10, d)
            assert se == 0.0

    def test_bounds(self):
        deltas = admissible_deltas(16)
        rows = empirical_curve(16, 0.3, 0.0, deltas, instances=32, base_seed=77)
        for dl, mean, se in rows:
            d = hamming_distance(16, dl)
            assert 0.0 <= mean <= counting_bound(16, d)
            assert se >= 0.0

    def test_rejects_inadmissible(self):
        with pytest.raises(ValueError):
            empirical_curve(10, 0.5, 0.0, [0.85], instances=2, base_seed=0)
