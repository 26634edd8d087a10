"""Translation-invariant tail of the matrix kernel near the origin.

Under x = exp(-xi/C) with the symmetric Jacobian sqrt(x'(xi) y'(eta)) the
kernel approaches a convolution kernel in xi - eta. Block profiles are
functions of one variable; the rescaled Whittaker block at (xi, eta)
converges to ``tail_block(tag, eta - xi)``. For the diagonal blocks the
orientation is immaterial because their profile is even.
"""

import cmath
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np

from whittaker_lab.errors import UnderflowGuardError, UnsupportedParameterError, ValidationError
from whittaker_lab.kernels import BlockTag, KernelMachine
from whittaker_lab.params import ParameterSet
from whittaker_lab.specfun import DEFAULT_POLICY, AccuracyPolicy

logger = logging.getLogger(__name__)

UNDERFLOW_LIMIT = 1e-280
FFT_SAMPLES = 2 ** 16
FFT_HALF_WIDTH = 60.0


@dataclass(frozen=True)
class TailConstants:
    c_density: float
    rate_B: float
    rate_A: complex

    def to_record(self) -> dict:
        return {"c_density": self.c_density, "rate_B": self.rate_B,
                "rate_A": [self.rate_A.real, self.rate_A.imag]}


def tail_constants(params: ParameterSet) -> TailConstants:
    """C = (z-z') sin(pi z) sin(pi z') / (pi sin(pi(z-z'))), B = 1/(2C), A = (z-z') B."""
    gap = params.z - params.z_prime
    if abs(gap) == 0.0:
        raise UnsupportedParameterError("the tail kernel needs z != z'")
    product = cmath.sin(math.pi * params.z) * cmath.sin(math.pi * params.z_prime)
    c = gap * product / (math.pi * cmath.sin(math.pi * gap))
    c_density = c.real
    if c_density <= 0.0:
        raise ValidationError(f"tail density constant {c} is not positive")
    rate_B = 1.0 / (2.0 * c_density)
    rate_A = gap * rate_B
    return TailConstants(c_density=c_density, rate_B=rate_B, rate_A=complex(rate_A))


@dataclass(frozen=True)
class TailKernel:
    params: ParameterSet
    constants: TailConstants

    @classmethod
    def of(cls, params: ParameterSet) -> "TailKernel":
        return cls(params, tail_constants(params))

    @property
    def gap(self) -> complex:
        return self.params.z - self.params.z_prime

    def profile_pp(self, delta: float) -> float:
        if abs(delta) < 1e-12:
            return 1.0
        A, B = self.constants.rate_A, self.constants.rate_B
        return (cmath.sinh(A * delta) / (self.gap * math.sinh(B * delta))).real

    def profile_pm(self, delta: float) -> float:
        A, B = self.constants.rate_A, self.constants.rate_B
        z, zp = self.params.z, self.params.z_prime
        numerator = cmath.sin(math.pi * z) * cmath.exp(A * delta) - cmath.sin(math.pi * zp) * cmath.exp(-A * delta)
        value = numerator / (self.params.sigma * self.gap * 2.0 * math.cosh(B * delta))
        return value.real

    def block(self, tag: BlockTag, delta: float) -> float:
        if tag in (BlockTag.PP, BlockTag.MM):
            return self.profile_pp(delta)
        if tag is BlockTag.PM:
            return self.profile_pm(delta)
        return -self.profile_pm(-delta)

    def symbol(self, u: float) -> np.ndarray:
        return fourier_symbol(self.params, u)


def tail_block(params: ParameterSet, tag: BlockTag, delta: float) -> float:
    return TailKernel.of(params).block(tag, delta)


def rescaled_block(machine: KernelMachine, constants: TailConstants, tag: BlockTag, xi: float, eta: float) -> float:
    """sqrt(x'(xi) y'(eta)) K(x(xi), y(eta)) with x = exp(-xi/C)."""
    c = constants.c_density
    x = math.exp(-xi / c)
    y = math.exp(-eta / c)
    if x < UNDERFLOW_LIMIT or y < UNDERFLOW_LIMIT:
        raise UnderflowGuardError(f"exp(-xi/C) underflows below {UNDERFLOW_LIMIT} at (xi, eta)=({xi}, {eta})")
    return math.sqrt(x) * math.sqrt(y) / c * machine.k_block(tag, x, y)


@dataclass
class TailRow:
    tag: BlockTag
    xi: float
    eta: float
    rescaled: float
    profile: float

    @property
    def error(self) -> float:
        return abs(self.rescaled - self.profile)

    def to_record(self) -> dict:
        return {"block": str(self.tag), "xi": self.xi, "eta": self.eta,
                "rescaled": self.rescaled, "profile": self.profile, "error": self.error}


def tail_convergence(params: ParameterSet, xi_eta_list: Sequence[Tuple[float, float]],
                     tags: Sequence[BlockTag] = tuple(BlockTag),
                     policy: AccuracyPolicy = DEFAULT_POLICY) -> List[TailRow]:
    kernel = TailKernel.of(params)
    machine = KernelMachine(params, policy)
    rows = []
    for tag in tags:
        for xi, eta in xi_eta_list:
            rows.append(TailRow(tag, xi, eta, rescaled_block(machine, kernel.constants, tag, xi, eta),
                                kernel.block(tag, eta - xi)))
        logger.debug("tail block %s: errors %s", tag, [r.error for r in rows if r.tag is tag])
    return rows


def errors_decrease(errors: Sequence[float], floor: float = 1e-9) -> bool:
    return all(b <= a or b <= floor for a, b in zip(errors, errors[1:]))


# ===== FOURIER SYMBOL =====

def fourier_symbol(params: ParameterSet, u: float) -> np.ndarray:
    """[[f, g], [-conj g, f]] for the transform int e^(i u zeta) k(zeta) d zeta."""
    B = tail_constants(params).rate_B
    z, zp = params.z, params.z_prime
    denominator = cmath.cos(math.pi * (z - zp)).real + math.cosh(math.pi * u / B)
    f = 2.0 * params.sigma_squared / denominator
    g = 2.0 * params.sigma * cmath.cos(math.pi * (z + zp) / 2.0 - 1j * math.pi * u / (2.0 * B)) / denominator
    return np.array([[f, g], [-g.conjugate(), f]], dtype=complex)


def fft_symbol(profile: Callable[[float], float], constants: TailConstants, samples: int = FFT_SAMPLES,
               half_width: float = None) -> Tuple[np.ndarray, np.ndarray]:
    """Trapezoidal transform of a sampled profile on every FFT frequency, sorted by u."""
    half_width = FFT_HALF_WIDTH / constants.rate_B if half_width is None else half_width
    step = 2.0 * half_width / samples
    zeta = -half_width + step * np.arange(samples)
    values = np.array([profile(v) for v in zeta], dtype=complex)
    u = 2.0 * math.pi * np.fft.fftfreq(samples, d=step)
    # sum_j k_j exp(i u_k zeta_j) = exp(i u_k zeta_0) * N * ifft(k)[k]
    transform = step * np.exp(1j * u * zeta[0]) * samples * np.fft.ifft(values)
    order = np.argsort(u)
    return u[order], transform[order]


def log_case_profile(zeta: float) -> float:
    return zeta / (math.exp(zeta / 2.0) + math.exp(-zeta / 2.0))


def log_case_profile_symbol(u: float) -> complex:
    """Transform of zeta / (e^(zeta/2) + e^(-zeta/2)): i pi^2 sh(pi u) / ch^2(pi u)."""
    return 1j * math.pi ** 2 * math.sinh(math.pi * u) / math.cosh(math.pi * u) ** 2
