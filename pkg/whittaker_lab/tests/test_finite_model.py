import itertools
import math
import unittest
from unittest import mock

import numpy as np
from numpy.testing import assert_allclose

from whittaker_lab.errors import (
    DuplicatePointError,
    MissingInverseError,
    NegativeMinorError,
    OrderCapError,
    ValidationError,
)
from whittaker_lab.finite_model import (
    Configuration,
    FiniteKernel,
    bijection_conditions,
    block_k_from_l,
    block_l_from_k,
    canonical_pair,
    correlation,
    k_from_l,
    l_from_k,
    random_j_hermitian,
    sample,
    subset_chunks,
    truncate,
    weight_distribution,
)

D = 1.5


def d_example(d=D):
    return FiniteKernel(np.array([[0.0, d], [-d, 0.0]]), 1, 1)


def random_instances(count, seed=2024, max_order=8):
    rng = np.random.default_rng(seed)
    for _ in range(count):
        n1 = int(rng.integers(1, max_order // 2 + 1))
        n2 = int(rng.integers(1, max_order - n1 + 1))
        yield random_j_hermitian(n1, n2, rng)


class Test_Weight_Distribution(unittest.TestCase):

    def test_zero_kernel(self):
        table = weight_distribution(FiniteKernel(np.zeros((2, 2)), 1, 1))
        self.assertEqual(table.probability([]), 1.0)
        self.assertEqual(table.probability([0, 1]), 0.0)

    def test_scalar_kernel(self):
        table = weight_distribution(FiniteKernel(np.array([[2.0]]), 1, 0))
        self.assertAlmostEqual(table.probability([]), 1 / 3)
        self.assertAlmostEqual(table.probability([0]), 2 / 3)

    def test_d_example(self):
        table = weight_distribution(d_example())
        self.assertAlmostEqual(table.normalizer, 1 + D ** 2)
        self.assertAlmostEqual(table.probability([]), 1 / (1 + D ** 2))
        self.assertAlmostEqual(table.probability([0, 1]), D ** 2 / (1 + D ** 2))
        self.assertEqual(table.probability([0]), 0.0)
        self.assertEqual(table.probability([1]), 0.0)

    def test_negative_minor(self):
        with self.assertRaises(NegativeMinorError) as ctx:
            weight_distribution(FiniteKernel(np.array([[-0.5]]), 1, 0))
        self.assertEqual(tuple(ctx.exception.members), (0,))

    def test_order_cap(self):
        with self.assertRaises(OrderCapError):
            weight_distribution(FiniteKernel(np.zeros((25, 25)), 12, 13))

    def test_minor_positivity(self):
        for L in random_instances(200):
            table = weight_distribution(L)
            self.assertTrue(np.all(table.probabilities >= 0.0))
            self.assertAlmostEqual(table.probabilities.sum(), 1.0, places=10)

    def test_balanced_support(self):
        rng = np.random.default_rng(7)
        L = random_j_hermitian(3, 3, rng, zero_diagonal=True)
        table = weight_distribution(L)
        for conf, p in table.items():
            if not conf.is_balanced(L.n1):
                self.assertEqual(p, 0.0)
        self.assertGreater(sum(p for conf, p in table.items() if conf.is_balanced(L.n1) and conf.mask), 0.0)

    def test_positive_diagonal_breaks_balance(self):
        rng = np.random.default_rng(8)
        L = random_j_hermitian(2, 2, rng)
        table = weight_distribution(L)
        unbalanced = [p for conf, p in table.items() if not conf.is_balanced(L.n1)]
        self.assertGreater(max(unbalanced), 0.0)

    def test_chunked_enumeration_matches_single_batch(self):
        L = random_j_hermitian(4, 4, np.random.default_rng(12))
        whole = weight_distribution(L)
        with mock.patch("whittaker_lab.finite_model.ENUMERATION_CHUNK", 3):
            chunked = weight_distribution(L)
        assert_allclose(chunked.probabilities, whole.probabilities, rtol=1e-12, atol=1e-15)

    def test_subset_chunks_are_bounded(self):
        batches = list(subset_chunks(10, 5, chunk=16))
        self.assertTrue(all(len(batch) <= 16 for batch in batches))
        flat = [s for batch in batches for s in batch]
        self.assertEqual(len(flat), math.comb(10, 5))
        self.assertEqual(len(set(flat)), len(flat))
        balanced = [s for batch in subset_chunks(6, 2, balanced_n1=3, chunk=4) for s in batch]
        self.assertEqual(len(balanced), 9)
        self.assertTrue(all(s[0] < 3 <= s[1] for s in balanced))
        self.assertEqual(list(subset_chunks(4, 1, balanced_n1=2)), [])
        with self.assertRaises(ValidationError):
            next(subset_chunks(4, 2, chunk=0))

    def test_first_batch_at_the_order_cap(self):
        self.assertEqual(len(next(subset_chunks(24, 12))), 4096)


class Test_Correlation(unittest.TestCase):

    def test_single_point(self):
        K = k_from_l(d_example())
        self.assertAlmostEqual(correlation(K, [0]), K.entries[0, 0])

    def test_d_example_pair(self):
        L = d_example()
        rho = correlation(k_from_l(L), [0, 1])
        self.assertAlmostEqual(rho.real, D ** 2 / (1 + D ** 2))
        self.assertAlmostEqual(rho.real, weight_distribution(L).inclusion_sum([0, 1]))

    def test_duplicate_points(self):
        with self.assertRaises(DuplicatePointError):
            correlation(k_from_l(d_example()), [0, 0])

    def test_master_oracle(self):
        rng = np.random.default_rng(99)
        for L in random_instances(200, seed=11):
            table = weight_distribution(L)
            K = k_from_l(L)
            for size in (1, 2, 3):
                if size > L.order:
                    continue
                points = sorted(rng.choice(L.order, size=size, replace=False).tolist())
                self.assertLess(abs(correlation(K, points) - table.inclusion_sum(points)), 1e-9)


class Test_Transforms(unittest.TestCase):

    def test_zero(self):
        K = k_from_l(FiniteKernel(np.zeros((3, 3)), 2, 1))
        assert_allclose(K.entries, 0.0)

    def test_d_example_closed_form(self):
        K = k_from_l(d_example())
        expected = np.array([[D ** 2, D], [-D, D ** 2]]) / (1 + D ** 2)
        assert_allclose(K.entries, expected, atol=1e-14)

    def test_round_trip(self):
        for L in random_instances(50, seed=5):
            assert_allclose(l_from_k(k_from_l(L)).entries, L.entries, atol=1e-10)

    def test_hermitian_input(self):
        rng = np.random.default_rng(3)
        g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        K = k_from_l(FiniteKernel(g @ g.conj().T, 4, 0))
        assert_allclose(K.entries, K.entries.conj().T, atol=1e-12)
        spectrum = np.linalg.eigvalsh(K.entries)
        self.assertTrue(np.all(spectrum > -1e-12) and np.all(spectrum < 1.0))

    def test_blockwise_matches_global(self):
        for L in random_instances(100, seed=17):
            K = k_from_l(L)
            assert_allclose(block_k_from_l(L).entries, K.entries, atol=1e-10)
            assert_allclose(block_l_from_k(K).entries, L.entries, atol=1e-10)

    def test_diagonal_blocks_only(self):
        rng = np.random.default_rng(4)
        full = random_j_hermitian(2, 3, rng)
        L = FiniteKernel.from_blocks(full.block(1, 1), np.zeros((2, 3)), np.zeros((3, 2)), full.block(2, 2))
        K = block_k_from_l(L)
        l11 = L.block(1, 1)
        assert_allclose(K.block(1, 1), l11 @ np.linalg.inv(np.eye(2) + l11), atol=1e-12)
        assert_allclose(K.block(1, 2), 0.0, atol=1e-14)

    def test_bijection_conditions(self):
        for L in random_instances(50, seed=23):
            report = bijection_conditions(k_from_l(L))
            self.assertTrue(report["holds"], report)

    def test_missing_inverse_names_block(self):
        K = FiniteKernel(np.diag([0.5, 1.0]), 1, 1)
        with self.assertRaises(MissingInverseError) as ctx:
            block_l_from_k(K)
        self.assertEqual(ctx.exception.expression, "1 - K22")


class Test_Canonical_Pair(unittest.TestCase):

    def test_zero(self):
        pair = canonical_pair(np.zeros((2, 2)), np.zeros((2, 2)))
        assert_allclose(pair.K.entries, 0.0)

    def test_scalar(self):
        pair = canonical_pair([[D]], [[D]])
        assert_allclose(pair.C, [[D / (1 + D ** 2)]])
        assert_allclose(pair.D, [[D]])
        assert_allclose(pair.K.entries, k_from_l(d_example()).entries, atol=1e-14)

    def test_identities_on_random_pairs(self):
        rng = np.random.default_rng(31)
        for n1, n2 in itertools.product((1, 2, 3), repeat=2):
            A = rng.standard_normal((n1, n2)) + 1j * rng.standard_normal((n1, n2))
            pair = canonical_pair(A, A.conj().T)
            for name, value in pair.residuals.items():
                self.assertLess(value, 1e-10, name)
            self.assertTrue(pair.K.is_j_hermitian(1e-10))
            self.assertTrue(pair.L.is_j_hermitian())

    def test_push_through_both_signs(self):
        rng = np.random.default_rng(37)
        for n1, n2 in itertools.product((1, 2, 4), repeat=2):
            A = rng.standard_normal((n1, n2)) + 1j * rng.standard_normal((n1, n2))
            B = 0.5 * (rng.standard_normal((n2, n1)) + 1j * rng.standard_normal((n2, n1)))
            residuals = canonical_pair(A, B).residuals
            self.assertLess(residuals["push_through"], 1e-10)
            self.assertLess(residuals["push_through_minus"], 1e-10)

    def test_minus_branch_scalar(self):
        # d(1 - d^2)^-1 on both sides
        residuals = canonical_pair([[D]], [[D]]).residuals
        self.assertLess(residuals["push_through_minus"], 1e-15)

    def test_minus_branch_skipped_without_inverse(self):
        residuals = canonical_pair([[1.0]], [[1.0]]).residuals
        self.assertNotIn("push_through_minus", residuals)
        self.assertLess(residuals["push_through"], 1e-15)

    def test_shape_mismatch(self):
        with self.assertRaises(ValidationError):
            canonical_pair(np.ones((2, 3)), np.ones((2, 3)))


class Test_Truncation_And_Sampling(unittest.TestCase):

    def test_full_and_empty(self):
        L = random_j_hermitian(2, 3, np.random.default_rng(1))
        assert_allclose(truncate(L, range(5)).entries, L.entries)
        self.assertEqual(truncate(L, []).order, 0)

    def test_restriction_property(self):
        L = random_j_hermitian(2, 3, np.random.default_rng(2))
        Y = [1, 3]
        assert_allclose(k_from_l(truncate(L, Y)).entries, k_from_l(L).entries[np.ix_(Y, Y)], atol=1e-10)

    def test_degenerate_table(self):
        table = weight_distribution(FiniteKernel(np.zeros((2, 2)), 1, 1))
        self.assertTrue(all(conf.mask == 0 for conf in sample(table, seed=0, count=50)))

    def test_empirical_frequency(self):
        table = weight_distribution(d_example())
        count = 100000
        draws = sample(table, seed=12345, count=count)
        p = D ** 2 / (1 + D ** 2)
        freq = sum(1 for conf in draws if conf.mask == 3) / count
        self.assertLess(abs(freq - p), 3 * np.sqrt(p * (1 - p) / count))

    def test_fixed_seed_replays(self):
        table = weight_distribution(random_j_hermitian(2, 2, np.random.default_rng(9)))
        first = [str(c) for c in sample(table, seed=42, count=200)]
        second = [str(c) for c in sample(table, seed=42, count=200)]
        self.assertEqual(first, second)


class Test_Kernel_Types(unittest.TestCase):

    def test_record_round_trip(self):
        L = random_j_hermitian(2, 1, np.random.default_rng(6))
        again = FiniteKernel.from_record(L.to_record())
        assert_allclose(again.entries, L.entries)

    def test_real_entries_accepted(self):
        K = FiniteKernel.from_record({"n1": 1, "n2": 1, "entries": [[0.0, 1.5], [-1.5, 0.0]]})
        assert_allclose(K.entries, d_example().entries)

    def test_bad_shapes(self):
        with self.assertRaises(ValidationError):
            FiniteKernel(np.zeros((2, 3)), 1, 1)
        with self.assertRaises(ValidationError):
            FiniteKernel(np.zeros((2, 2)), 2, 1)
        with self.assertRaises(ValidationError):
            FiniteKernel.from_record({"n1": 1})

    def test_j_hermitian_flag(self):
        L = random_j_hermitian(2, 2, np.random.default_rng(10))
        self.assertTrue(L.is_j_hermitian())
        broken = L.entries.copy()
        broken[0, 3] += 0.1
        self.assertFalse(FiniteKernel(broken, 2, 2).is_j_hermitian())

    def test_configuration(self):
        conf = Configuration.of([0, 2], 4)
        self.assertEqual(conf.mask, 5)
        self.assertEqual(str(conf), "{0,2}")
        self.assertEqual(conf.counts(2), (1, 1))
        self.assertTrue(conf.is_balanced(2))
        with self.assertRaises(ValidationError):
            Configuration.of([4], 4)


if __name__ == '__main__':
    unittest.main()
