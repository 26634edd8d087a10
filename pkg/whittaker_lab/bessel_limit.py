"""Bessel-type limit of the matrix kernel under x = xi/N, (z, z') -> (z0 + N, z0' + N).

The limit is built from

    A(xi) = (sin(pi z0) J_{2mu}(2 sqrt xi) - sin(pi z0') J_{-2mu}(2 sqrt xi)) / sin(2 pi mu)
    B(xi) = K_{2mu}(2 sqrt xi)

and their images under xi d/dxi. N runs over even integers so that
sin(pi z) = sin(pi z0); odd N would flip the off-diagonal blocks.
"""

import cmath
import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Sequence

import numpy as np

from whittaker_lab.errors import UnsupportedParameterError, ValidationError
from whittaker_lab.kernels import BlockTag, KernelMachine, wronskian_quotient
from whittaker_lab.params import ParameterSet, make_parameters, shift_parameters
from whittaker_lab.specfun import (
    DEFAULT_POLICY,
    AccuracyPolicy,
    bessel,
    bessel_dx,
    hyper_0f1,
    kummer_1f1,
    log_gamma,
)

logger = logging.getLogger(__name__)

LIMIT_NAMES = ("A", "B", "A_tilde", "B_tilde")


@dataclass(frozen=True)
class LimitParameters:
    base: ParameterSet
    N: int = 0

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 0 or self.N % 2:
            raise ValidationError(f"N must be an even nonnegative integer, got {self.N}")

    @classmethod
    def of(cls, z0, z0_prime, N: int = 0) -> "LimitParameters":
        return cls(make_parameters(z0, z0_prime), N)

    @property
    def a0(self) -> float:
        return self.base.a

    @property
    def mu(self) -> complex:
        return self.base.mu

    @property
    def shifted(self) -> ParameterSet:
        return shift_parameters(self.base, self.N)

    def with_N(self, N: int) -> "LimitParameters":
        return LimitParameters(self.base, N)

    def unit_shift(self) -> "LimitParameters":
        """(z0 + 1, z0' + 1), the covariance move of the limit blocks."""
        return LimitParameters(make_parameters(self.base.z + 1, self.base.z_prime + 1), self.N)


def _real(value: complex, what: str) -> float:
    value = complex(value)
    if abs(value.imag) > 1e-8 * max(abs(value), 1e-300):
        raise ValidationError(f"{what} has a non-negligible imaginary part: {value}")
    return value.real


@dataclass(frozen=True)
class LimitKernelFamily:
    lp: LimitParameters
    policy: AccuracyPolicy = DEFAULT_POLICY

    def __post_init__(self):
        if abs(self.lp.mu) == 0.0:
            raise UnsupportedParameterError("the limit functions divide by sin(2 pi mu); mu = 0 is not supported")

    def _weights(self):
        p = self.lp.base
        return (cmath.sin(math.pi * p.z), cmath.sin(math.pi * p.z_prime), cmath.sin(2 * math.pi * p.mu))

    def value(self, name: str, xi: float) -> float:
        if name not in LIMIT_NAMES:
            raise ValidationError(f"unknown limit function {name!r}")
        if xi <= 0:
            raise ValidationError(f"xi must be positive, got {xi}")
        X = 2.0 * math.sqrt(xi)
        nu = 2.0 * self.lp.mu
        if name == "B":
            return _real(bessel("K", nu, X, self.policy), "B")
        if name == "B_tilde":
            return _real(math.sqrt(xi) * bessel_dx("K", nu, X, self.policy), "B_tilde")
        sz, szp, s2 = self._weights()
        evaluate = bessel if name == "A" else bessel_dx
        combo = (sz * evaluate("J", nu, X, self.policy) - szp * evaluate("J", -nu, X, self.policy)) / s2
        if name == "A_tilde":
            combo *= math.sqrt(xi)
        return _real(combo, name)

    def _pair(self, family: str, xi: float):
        return self.value(family, xi), self.value(family + "_tilde", xi)

    def _wronskian(self, family: str, xi: float, eta: float) -> float:
        return wronskian_quotient(lambda t: self._pair(family, t), xi, eta)

    def _sigma0(self) -> float:
        sz, szp, _ = self._weights()
        return math.sqrt((sz * szp).real)

    def block(self, tag: BlockTag, xi: float, eta: float) -> float:
        if xi <= 0 or eta <= 0:
            raise ValidationError(f"limit kernel arguments must be positive, got ({xi}, {eta})")
        if tag is BlockTag.PP:
            return self._wronskian("A", xi, eta)
        if tag is BlockTag.MM:
            return limit_constant(self.lp.a0, self.lp.mu) * self._wronskian("B", xi, eta)
        if tag is BlockTag.MP:
            return -self.block(BlockTag.PM, eta, xi)
        a, at = self._pair("A", xi)
        b, bt = self._pair("B", eta)
        return -2.0 * self._sigma0() / math.pi * (a * bt - at * b) / (xi + eta)


def limit_functions(name: str, lp: LimitParameters, xi: float, policy: AccuracyPolicy = DEFAULT_POLICY) -> float:
    return LimitKernelFamily(lp, policy).value(name, xi)


def limit_block(tag: BlockTag, lp: LimitParameters, xi: float, eta: float,
                policy: AccuracyPolicy = DEFAULT_POLICY) -> float:
    return LimitKernelFamily(lp, policy).block(tag, xi, eta)


def limit_constant(a0: float, mu) -> float:
    """(2/pi^2)(cos 2 pi mu - cos 2 pi a0); the K-- limit block is const times the Macdonald kernel."""
    return 2.0 / math.pi ** 2 * (cmath.cos(2 * math.pi * complex(mu)).real - math.cos(2 * math.pi * a0))


# ===== CLASSICAL KERNELS =====

def _classical(kind: str, nu, xi: float, eta: float, policy: AccuracyPolicy) -> float:
    def pair(t):
        X = 2.0 * math.sqrt(t)
        return (_real(bessel(kind, nu, X, policy), kind),
                _real(math.sqrt(t) * bessel_dx(kind, nu, X, policy), kind))

    return wronskian_quotient(pair, xi, eta)


def bessel_kernel(nu: float, xi: float, eta: float, policy: AccuracyPolicy = DEFAULT_POLICY) -> float:
    """(J(2 sqrt xi) sqrt(eta) J'(2 sqrt eta) - sqrt(xi) J'(2 sqrt xi) J(2 sqrt eta)) / (xi - eta)."""
    return _classical("J", nu, xi, eta, policy)


def macdonald_kernel(nu, xi: float, eta: float, policy: AccuracyPolicy = DEFAULT_POLICY) -> float:
    return _classical("K", nu, xi, eta, policy)


# ===== CONVERGENCE EXPERIMENTS =====

@dataclass
class ScaledRow:
    tag: BlockTag
    N: int
    xi: float
    eta: float
    scaled: float
    limit: float

    @property
    def error(self) -> float:
        return abs(self.scaled - self.limit) / max(abs(self.limit), 1e-300)

    def to_record(self) -> dict:
        return {"block": str(self.tag), "N": self.N, "xi": self.xi, "eta": self.eta,
                "scaled": self.scaled, "limit": self.limit, "error": self.error}


def scaled_convergence(lp: LimitParameters, N_list: Sequence[int], xi: float, eta: float,
                       tags: Sequence[BlockTag] = tuple(BlockTag),
                       policy: AccuracyPolicy = DEFAULT_POLICY) -> List[ScaledRow]:
    """(1/N) K(xi/N, eta/N) at (z0 + N, z0' + N) against the limit blocks."""
    family = LimitKernelFamily(lp, policy)
    limits = {tag: family.block(tag, xi, eta) for tag in tags}
    rows = []
    for N in N_list:
        if N <= 0:
            raise ValidationError(f"N must be positive in a sweep, got {N}")
        machine = KernelMachine(lp.with_N(N).shifted, policy)
        for tag in tags:
            rows.append(ScaledRow(tag, N, xi, eta, machine.k_block(tag, xi / N, eta / N) / N, limits[tag]))
        logger.info("scaling limit N=%d: %s", N, ", ".join(f"{r.tag}={r.error:.3e}" for r in rows[-len(tags):]))
    return rows


def coefficient_sweep(lp: LimitParameters, N_list: Sequence[int]) -> List[Dict[str, float]]:
    """|1 - Gamma(a+1)^2 / (Gamma(z) Gamma(z') z z')| along the sweep."""
    out = []
    for N in N_list:
        p = lp.with_N(N).shifted
        log_ratio = 2.0 * log_gamma(p.a + 1.0) - log_gamma(p.z) - log_gamma(p.z_prime)
        ratio = float(np.exp(log_ratio).real) / p.zz
        out.append({"N": N, "a": p.a, "deviation": abs(1.0 - ratio)})
    return out


def intermediate_asymptotics(lp: LimitParameters, N: int, xi: float,
                             policy: AccuracyPolicy = DEFAULT_POLICY) -> Dict[str, float]:
    """phi(xi/N) / Gamma(a+1) against A(xi) and psi(xi/N) Gamma(a) / 2 against B(xi)."""
    p = lp.with_N(N).shifted
    machine = KernelMachine(p, policy)
    family = LimitKernelFamily(lp, policy)
    x = xi / N
    phi = machine.aux("phi", x) * math.exp(-log_gamma(p.a + 1.0).real)
    psi = machine.aux("psi", x) * math.exp(log_gamma(p.a).real) / 2.0
    return {"N": N, "xi": xi, "phi_scaled": phi, "A": family.value("A", xi),
            "psi_scaled": psi, "B": family.value("B", xi)}


def limit_1f1_to_0f1(alpha_abs: Sequence[float], gamma: float, xi: float,
                     policy: AccuracyPolicy = DEFAULT_POLICY) -> List[Dict[str, float]]:
    """|1F1(alpha; gamma; xi/alpha) - 0F1(gamma; xi)| / |0F1(gamma; xi)| for growing alpha."""
    target = hyper_0f1(gamma, xi, policy)
    rows = []
    for alpha in alpha_abs:
        value = kummer_1f1(alpha, gamma, xi / alpha, policy)
        rows.append({"alpha": alpha, "value": value, "limit": target,
                     "error": abs(value - target) / max(abs(target), 1e-300)})
    return rows
