import math
import unittest
from unittest import mock

import mpmath
import numpy as np
from numpy.testing import assert_allclose

from whittaker_lab.errors import ValidationError
from whittaker_lab.kernels import (
    BlockTag,
    KernelMachine,
    diagonal_limit,
    log_case_anchors,
    multiplier,
    multiplier_bound,
    wronskian_quotient,
)
from whittaker_lab.params import from_a_mu, make_parameters
from whittaker_lab.tail import tail_constants


def _w(kappa, mu, x):
    return complex(mpmath.whitw(kappa, mu, x)).real


def _gamma_product(u, v):
    return complex(mpmath.gamma(u) * mpmath.gamma(v)).real


def reference_block(params, tag, x, y):
    """Blocks written directly in W_{kappa,mu} with mpmath."""
    a, mu, zz = params.a, params.mu, params.zz
    z, zp = params.z, params.z_prime
    scale = 1.0 / math.sqrt(x * y)
    if tag is BlockTag.PP:
        num = _w(a + 0.5, mu, x) * _w(a - 0.5, mu, y) - _w(a - 0.5, mu, x) * _w(a + 0.5, mu, y)
        return scale * num / (_gamma_product(z, zp) * (x - y))
    if tag is BlockTag.MM:
        num = _w(0.5 - a, mu, x) * _w(-a - 0.5, mu, y) - _w(-a - 0.5, mu, x) * _w(0.5 - a, mu, y)
        return scale * num / (_gamma_product(-z, -zp) * (x - y))
    if tag is BlockTag.MP:
        return -reference_block(params, BlockTag.PM, y, x)
    s = params.sigma * math.sqrt(zz) / math.pi
    num = _w(a + 0.5, mu, x) * _w(0.5 - a, mu, y) + zz * _w(a - 0.5, mu, x) * _w(-a - 0.5, mu, y)
    return scale * s * num / (math.sqrt(zz) * (x + y))


class Test_Kernel_Blocks(unittest.TestCase):

    def setUp(self):
        self.params = [make_parameters(0.3 + 0.4j, 0.3 - 0.4j), make_parameters(0.2, 0.7)]

    def test_blocks_against_whittaker(self):
        points = [(1.0, 2.0), (0.7, 1.3), (0.5, 3.0), (4.0, 0.2)]
        for p in self.params:
            machine = KernelMachine(p)
            for tag in BlockTag:
                for x, y in points:
                    expected = reference_block(p, tag, x, y)
                    value = machine.k_block(tag, x, y)
                    self.assertLess(abs(value - expected), 1e-8 * max(abs(expected), 1e-12), (p.z, tag, x, y))

    def test_diagonal_is_continuous(self):
        for p in self.params:
            machine = KernelMachine(p)
            for tag in (BlockTag.PP, BlockTag.MM):
                for x in (0.3, 1.0, 5.0):
                    on = machine.k_block(tag, x, x)
                    near = machine.k_block(tag, x, x * 1.002)
                    self.assertLess(abs(on - near), 2e-2 * abs(on), (tag, x))

    def test_diagonal_density_positive(self):
        for p in self.params:
            machine = KernelMachine(p)
            for x in (0.01, 0.5, 2.0, 10.0):
                self.assertGreater(machine.k_block(BlockTag.PP, x, x), 0.0)

    def test_decay(self):
        machine = KernelMachine(self.params[0])
        far = machine.k_block(BlockTag.PP, 30.0, 30.0)
        self.assertLess(abs(far), 1e-6 * machine.k_block(BlockTag.PP, 1.0, 1.0))

    def test_off_diagonal_orientation(self):
        machine = KernelMachine(self.params[0])
        self.assertEqual(machine.k_block(BlockTag.MP, 0.4, 1.7), -machine.k_block(BlockTag.PM, 1.7, 0.4))

    def test_block_matrix_matches_pointwise(self):
        machine = KernelMachine(self.params[1])
        xs = [0.2, 1.0, 1.0005, 3.0]
        ys = [0.5, 1.0, 2.5]
        for tag in BlockTag:
            table = machine.block_matrix(tag, xs, ys)
            expected = np.array([[machine.k_block(tag, x, y) for y in ys] for x in xs])
            assert_allclose(table, expected, rtol=1e-12, atol=1e-300)

    def test_nonpositive_argument(self):
        machine = KernelMachine(self.params[0])
        with self.assertRaises(ValidationError):
            machine.k_block(BlockTag.PP, 0.0, 1.0)
        with self.assertRaises(ValidationError):
            machine.aux("chi", 1.0)


class Test_Factors(unittest.TestCase):

    def setUp(self):
        self.p = make_parameters(0.3 + 0.4j, 0.3 - 0.4j)
        self.machine = KernelMachine(self.p)

    def test_d_closed_form(self):
        x, y = 0.8, 2.0
        expected = self.p.sigma / math.pi * (x / y) ** (-self.p.a) * math.exp(-1.4) / 2.8
        self.assertAlmostEqual(self.machine.d_kernel(x, y), expected, places=14)

    def test_l_blocks_orientation(self):
        x, y = 0.8, 2.0
        self.assertEqual(self.machine.l_block("B", x, y), self.machine.d_kernel(x, y))
        self.assertEqual(self.machine.l_block("A", x, y), self.machine.d_kernel(y, x))
        # A grows with x/y like (x/y)^a
        ratio = self.machine.l_block("A", x, y) / self.machine.l_block("B", x, y)
        self.assertAlmostEqual(ratio, (x / y) ** (2 * self.p.a), places=12)
        with self.assertRaises(ValidationError):
            self.machine.l_block("C", x, y)

    def test_factor_matrix(self):
        xs, ys = [0.5, 1.5], [0.7, 2.0, 4.0]
        for which in ("A", "B", "D"):
            table = self.machine.factor_matrix(which, xs, ys)
            if which == "A":
                expected = [[self.machine.l_block("A", x, y) for y in ys] for x in xs]
            else:
                expected = [[self.machine.d_kernel(x, y) for y in ys] for x in xs]
            assert_allclose(table, expected, rtol=1e-13)
        assert_allclose(self.machine.factor_matrix("C", xs, ys),
                        self.machine.block_matrix(BlockTag.PM, xs, ys), rtol=1e-13)

    def test_c_is_the_off_diagonal_block(self):
        self.assertEqual(self.machine.c_kernel(1.0, 2.0), self.machine.k_block(BlockTag.PM, 1.0, 2.0))

    def test_multiplier_bound(self):
        bound = multiplier_bound(self.p)
        self.assertAlmostEqual(bound, self.p.sigma / math.cos(0.3 * math.pi))
        u = np.linspace(-5, 5, 201)
        self.assertAlmostEqual(float(np.max(multiplier(self.p, u))), bound, places=12)
        with self.assertRaises(ValidationError):
            multiplier_bound(make_parameters(0.5 + 0.2j, 0.5 - 0.2j))


class Test_Symmetries(unittest.TestCase):

    def test_swap_leaves_blocks_invariant(self):
        points = [(0.4, 1.1), (2.0, 0.7), (1.5, 1.5)]
        for z, zp in ((0.3 + 0.4j, 0.3 - 0.4j), (0.2, 0.7), (0.6, 0.4)):
            first = KernelMachine(make_parameters(z, zp))
            second = KernelMachine(make_parameters(zp, z))
            for tag in BlockTag:
                for x, y in points:
                    one, two = first.k_block(tag, x, y), second.k_block(tag, x, y)
                    self.assertLess(abs(one - two), 1e-9 * abs(one), (z, tag, x, y))

    def test_l_kernel_scales_with_sigma(self):
        base = from_a_mu(0.3, 0.1j)
        for mu in (0.25j, 0.05, 0.15):
            other = from_a_mu(0.3, mu)
            first, second = KernelMachine(base), KernelMachine(other)
            for x, y in ((0.5, 2.0), (3.0, 0.1), (1.0, 1.0)):
                for which in ("A", "B"):
                    self.assertAlmostEqual(first.l_block(which, x, y) * other.sigma / base.sigma,
                                           second.l_block(which, x, y), delta=1e-15)


class Test_Small_Arguments(unittest.TestCase):

    def test_diagonal_density_near_origin(self):
        p = make_parameters(0.3 + 0.4j, 0.3 - 0.4j)
        machine = KernelMachine(p)
        c = tail_constants(p).c_density
        for x in (1e-2, 1e-4, 1e-6):
            # corrections are O(x)
            self.assertLess(abs(machine.k_block(BlockTag.PP, x, x) * x / c - 1.0), 100.0 * x, x)

    def test_real_mu_diagonal_far_below_double_range(self):
        p = make_parameters(0.6, 0.4)
        machine = KernelMachine(p)
        c = tail_constants(p).c_density
        for x in (1e-20, 1e-60, 1e-120, 1e-170):
            self.assertTrue(machine.needs_extended(x, x))
            for tag in (BlockTag.PP, BlockTag.MM):
                self.assertLess(abs(machine.k_block(tag, x, x) * x / c - 1.0), 1e-9, (tag, x))

    def test_working_precision_matches_double_path(self):
        for z, zp in ((0.6, 0.4), (0.2, 0.7)):
            machine = KernelMachine(make_parameters(z, zp))
            for tag in BlockTag:
                for x, y in ((0.5, 1.7), (1.2, 1.2), (2.0, 2.001), (3.0, 0.4)):
                    double = machine.k_block(tag, x, y)
                    self.assertLess(abs(machine._extended_block(tag, x, y) - double), 1e-8 * abs(double),
                                    (z, tag, x, y))

    def test_block_matrix_uses_working_precision(self):
        machine = KernelMachine(make_parameters(0.6, 0.4))
        xs = [1e-50, 2e-50, 1e-3, 0.5]
        for tag in BlockTag:
            table = machine.block_matrix(tag, xs, xs)
            expected = np.array([[machine.k_block(tag, x, y) for y in xs] for x in xs])
            assert_allclose(table, expected, rtol=1e-12)

    def test_block_matrix_keeps_moderate_cancellation_in_double(self):
        machine = KernelMachine(make_parameters(0.6, 0.4))
        xs = [1e-20, 3e-20, 0.5]
        self.assertTrue(machine.needs_extended(1e-20, 1e-20))
        with mock.patch.object(KernelMachine, "_extended_block", side_effect=AssertionError("working precision")):
            table = machine.block_matrix(BlockTag.PM, xs, xs)
        expected = np.array([[machine.k_block(BlockTag.PM, x, y) for y in xs] for x in xs])
        assert_allclose(table, expected, rtol=1e-9)

    def test_imaginary_mu_stays_in_double(self):
        machine = KernelMachine(make_parameters(0.3 + 0.4j, 0.3 - 0.4j))
        self.assertFalse(machine.needs_extended(1e-200, 1e-200))


class Test_Helpers(unittest.TestCase):

    def test_wronskian_quotient_of_exponentials(self):
        # f = e^t, f~ = t e^t gives (y - x) e^(x+y) / (x - y) = -e^(x+y)
        def pair(t):
            return math.exp(t), t * math.exp(t)

        self.assertAlmostEqual(wronskian_quotient(pair, 1.0, 2.0), -math.exp(3.0), places=10)
        self.assertAlmostEqual(wronskian_quotient(pair, 1.0, 1.0) / math.exp(2.0), -1.0, places=9)
        self.assertAlmostEqual(diagonal_limit(pair, 0.7) / math.exp(1.4), -1.0, places=9)

    def test_log_case_anchors(self):
        kappa = 0.2
        a0, a1 = log_case_anchors(kappa)
        x = 1e-8
        reduced = float(mpmath.whitw(kappa, 0, x)) / math.sqrt(x)
        self.assertLess(abs(reduced - (a0 * math.log(x) + a1)), 1e-5 * abs(reduced))

    def test_block_tag_parse(self):
        self.assertIs(BlockTag.parse("+-"), BlockTag.PM)
        self.assertIs(BlockTag.parse("MM"), BlockTag.MM)
        self.assertEqual(str(BlockTag.MP), "-+")
        with self.assertRaises(ValidationError):
            BlockTag.parse("+*")


if __name__ == '__main__':
    unittest.main()
