"""The two-parameter family (z, z') and its derived quantities a, mu, sigma."""

import cmath
import math
from dataclasses import dataclass

from whittaker_lab.errors import AdmissibilityError, ValidationError

LATTICE_TOLERANCE = 1e-9
SNAP_TOLERANCE = 1e-12

CLAUSE_CONJUGATE = "z' = conj(z), z not an integer"
CLAUSE_REAL = "m < z, z' < m+1 for an integer m"
CLAUSE_LOG = "mu = 0 requires a non-integer a"
CLAUSE_SIGMA = "sigma^2 = (cos 2 pi mu - cos 2 pi a)/2 > 0"


def _snap(value: complex) -> complex:
    value = complex(value)
    re = 0.0 if abs(value.real) < SNAP_TOLERANCE else value.real
    im = 0.0 if abs(value.imag) < SNAP_TOLERANCE else value.imag
    return complex(re, im)


def _near_integer(value: float) -> bool:
    return abs(value - round(value)) < LATTICE_TOLERANCE


@dataclass(frozen=True)
class ParameterSet:
    z: complex
    z_prime: complex
    a: float
    mu: complex
    sigma: float

    @property
    def sigma_squared(self) -> float:
        return self.sigma ** 2

    @property
    def mu_is_imaginary(self) -> bool:
        return self.mu.real == 0.0 and self.mu.imag != 0.0

    @property
    def zz(self) -> float:
        """z*z', real and positive for admissible parameters."""
        return (self.z * self.z_prime).real

    def describe(self) -> dict:
        return {
            "z": [self.z.real, self.z.imag],
            "z_prime": [self.z_prime.real, self.z_prime.imag],
            "a": self.a,
            "mu": [self.mu.real, self.mu.imag],
            "sigma": self.sigma,
        }


def sigma_of(a: float, mu: complex) -> float:
    """Positive sigma with sigma^2 = (cos 2 pi mu - cos 2 pi a)/2."""
    value = (cmath.cos(2.0 * math.pi * complex(mu)) - math.cos(2.0 * math.pi * a)) / 2.0
    if abs(value.imag) > 1e-12 * max(1.0, abs(value)) or value.real <= 0.0:
        raise AdmissibilityError(f"sigma^2 = {value} is not real positive", CLAUSE_SIGMA)
    return math.sqrt(value.real)


def make_parameters(z, z_prime) -> ParameterSet:
    """Validate (z, z') and derive a, mu, sigma."""
    z = _snap(z)
    z_prime = _snap(z_prime)
    if z.imag != 0.0 or z_prime.imag != 0.0:
        if abs(z_prime - z.conjugate()) > SNAP_TOLERANCE:
            raise AdmissibilityError(f"complex z={z} requires z'=conj(z), got {z_prime}", CLAUSE_CONJUGATE)
    else:
        if _near_integer(z.real) or _near_integer(z_prime.real):
            raise AdmissibilityError(f"z={z.real}, z'={z_prime.real} must not be integers", CLAUSE_REAL)
        if math.floor(z.real) != math.floor(z_prime.real):
            raise AdmissibilityError(f"z={z.real}, z'={z_prime.real} lie in different unit intervals", CLAUSE_REAL)
    a = (z + z_prime).real / 2.0
    mu = _snap((z - z_prime) / 2.0)
    if mu == 0 and _near_integer(a):
        raise AdmissibilityError(f"mu = 0 with integer a = {a}", CLAUSE_LOG)
    return ParameterSet(z=z, z_prime=z_prime, a=a, mu=mu, sigma=sigma_of(a, mu))


def from_a_mu(a: float, mu) -> ParameterSet:
    """Inverse parametrization z = a + mu, z' = a - mu."""
    mu = _snap(mu)
    if mu.real != 0.0 and mu.imag != 0.0:
        raise ValidationError(f"mu must be real or pure imaginary, got {mu}")
    return make_parameters(a + mu, a - mu)


def shift_parameters(p: ParameterSet, N: int) -> ParameterSet:
    """(z + N, z' + N); mu is untouched and sigma is unchanged for even N."""
    if int(N) != N:
        raise ValidationError(f"shift must be an integer, got {N}")
    if N == 0:
        return p
    return make_parameters(p.z + N, p.z_prime + N)


def parse_complex(text: str) -> complex:
    """Parse the literal forms ``re``, ``re+imi``, ``re-imi`` and ``imi``."""
    cleaned = text.strip().replace(" ", "").replace("i", "j")
    if not cleaned:
        raise ValidationError("empty complex literal")
    try:
        return complex(cleaned)
    except ValueError:
        raise ValidationError(f"cannot parse {text!r} as a complex literal") from None
