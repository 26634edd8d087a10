"""Special functions used by the kernel library.

Gamma and digamma come straight from scipy. The confluent series, the
Whittaker function and the Bessel family are summed term by term inside an
mpmath working-precision context: the two branches of the Kummer
representation of W grow like e^x while W itself decays, so the number of
working digits is raised with the argument before summation and the result
is handed back as an ordinary Python float or complex.

Orders on the integer lattice (2*mu for Whittaker, nu for Macdonald) are
reached through symmetric Richardson extrapolation from mu0 +/- eps.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple, Union

import mpmath
import numpy as np
from scipy import special

from whittaker_lab.errors import (
    DegenerateParameterError,
    GammaPoleError,
    NearLogarithmicWarning,
    NonConvergenceError,
    NumericalError,
    ValidationError,
)

logger = logging.getLogger(__name__)

Number = Union[float, complex]

# |x| beyond which the series would need more than a few hundred digits.
KUMMER_X_BOUND = 700.0
POLE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class AccuracyPolicy:
    """Accuracy knobs shared by every evaluator.

    Attributes
    ----------
    target_rel_error : float
        Relative accuracy aimed at by each evaluation.
    max_terms : int
        Cap on the number of series terms.
    large_x_switch : float
        Above this argument W is evaluated from its large-x expansion.
    log_epsilon : float
        Offset used by the epsilon-limit path at lattice orders.
    """

    target_rel_error: float = 1e-10
    max_terms: int = 600
    large_x_switch: float = 30.0
    log_epsilon: float = 1e-4

    def __post_init__(self):
        if not 0.0 < self.target_rel_error <= 1e-4:
            raise ValidationError(f"target_rel_error must lie in (0, 1e-4], got {self.target_rel_error}")
        if self.max_terms < 50:
            raise ValidationError(f"max_terms must be at least 50, got {self.max_terms}")
        if self.large_x_switch <= 0.0:
            raise ValidationError(f"large_x_switch must be positive, got {self.large_x_switch}")
        if not 0.0 < self.log_epsilon < 1e-2:
            raise ValidationError(f"log_epsilon must lie in (0, 1e-2), got {self.log_epsilon}")

    @property
    def digits(self) -> int:
        return int(math.ceil(-math.log10(self.target_rel_error)))


DEFAULT_POLICY = AccuracyPolicy()


# ===== GAMMA FAMILY =====

def nonpositive_integer(w: Number, tol: float = POLE_TOLERANCE):
    """Return n if w is within tol of the nonpositive integer n, else None."""
    w = complex(w)
    if abs(w.imag) > tol or w.real > tol:
        return None
    n = round(w.real)
    return int(n) if abs(w.real - n) <= tol else None


def _check_poles(w: np.ndarray, what: str):
    for value in np.atleast_1d(w):
        n = nonpositive_integer(value)
        if n is not None:
            raise GammaPoleError(f"{what} argument {n}")


def log_gamma(w):
    """Principal branch of log Gamma(w) for scalar or array w."""
    arr = np.asarray(w, dtype=complex)
    _check_poles(arr, "log_gamma")
    out = special.loggamma(arr)
    return complex(out) if out.ndim == 0 else out


def digamma(w):
    arr = np.asarray(w, dtype=complex)
    _check_poles(arr, "digamma")
    out = special.psi(arr)
    return complex(out) if out.ndim == 0 else out


def log_gamma_ratio(numerator, denominator) -> complex:
    """log(prod Gamma(numerator) / prod Gamma(denominator)) formed before exponentiation."""
    return complex(np.sum(log_gamma(numerator)) - np.sum(log_gamma(denominator)))


# ===== SERIES =====

def _working_dps(policy: AccuracyPolicy, growth: float = 0.0) -> int:
    """Digits needed when partial sums reach e**growth times the result."""
    return policy.digits + 10 + int(math.ceil(max(growth, 0.0) / math.log(10.0)))


def _sum_1f1(alpha, gamma, x, max_terms: int):
    term = mpmath.mpf(1)
    total = term
    tol = mpmath.eps * 16
    quiet = 0
    for m in range(max_terms):
        term = term * (alpha + m) / (gamma + m) * x / (m + 1)
        total += term
        if abs(term) <= tol * abs(total):
            quiet += 1
            if quiet == 2 or term == 0:
                return total
        else:
            quiet = 0
    raise NonConvergenceError(f"1F1({alpha}; {gamma}; {x}) needs more than {max_terms} terms")


def _sum_0f1(gamma, x, max_terms: int):
    term = mpmath.mpf(1)
    total = term
    tol = mpmath.eps * 16
    quiet = 0
    for m in range(max_terms):
        term = term * x / ((gamma + m) * (m + 1))
        total += term
        if abs(term) <= tol * abs(total):
            quiet += 1
            if quiet == 2 or term == 0:
                return total
        else:
            quiet = 0
    raise NonConvergenceError(f"0F1(; {gamma}; {x}) needs more than {max_terms} terms")


def _as_number(value) -> Number:
    value = complex(value)
    return value.real if value.imag == 0.0 else value


def kummer_1f1(alpha: Number, gamma: Number, x: float, policy: AccuracyPolicy = DEFAULT_POLICY) -> Number:
    """Kummer's function 1F1(alpha; gamma; x) for real x."""
    if nonpositive_integer(gamma) is not None:
        raise GammaPoleError(f"1F1 lower parameter {gamma}")
    if abs(x) > KUMMER_X_BOUND:
        raise ValidationError(f"|x| = {abs(x)} exceeds the series bound {KUMMER_X_BOUND}")
    growth = abs(x) + 2.0 * math.sqrt(abs(complex(alpha)) * abs(x))
    with mpmath.workdps(_working_dps(policy, growth)):
        value = _sum_1f1(mpmath.mpmathify(alpha), mpmath.mpmathify(gamma), mpmath.mpf(x), policy.max_terms)
        return _as_number(value)


def hyper_0f1(gamma: Number, x: float, policy: AccuracyPolicy = DEFAULT_POLICY) -> Number:
    if nonpositive_integer(gamma) is not None:
        raise GammaPoleError(f"0F1 lower parameter {gamma}")
    if abs(x) > KUMMER_X_BOUND ** 2:
        raise ValidationError(f"|x| = {abs(x)} exceeds the series bound")
    with mpmath.workdps(_working_dps(policy, 2.0 * math.sqrt(abs(x)))):
        value = _sum_0f1(mpmath.mpmathify(gamma), mpmath.mpf(x), policy.max_terms)
        return _as_number(value)


# ===== LATTICE ORDERS =====

def lattice_center(order: Number, epsilon: float):
    """Nearest integer n with |order - n| < epsilon, else None."""
    order = complex(order)
    n = round(order.real)
    if abs(order - n) < epsilon:
        return int(n)
    return None


def _richardson_even(evaluate, center: float, epsilon: float):
    """Extrapolate g(0) from g(d) = [f(c+d) + f(c-d)]/2 = g(0) + O(d^2)."""
    def symmetric(step):
        plus = np.asarray(evaluate(center + step), dtype=complex)
        minus = np.asarray(evaluate(center - step), dtype=complex)
        return 0.5 * (plus + minus)

    return (4.0 * symmetric(epsilon) - symmetric(2.0 * epsilon)) / 3.0


def _real_part(values: np.ndarray, what: str) -> np.ndarray:
    scale = np.max(np.abs(values))
    if scale > 0 and np.max(np.abs(values.imag)) > 1e-6 * scale:
        raise NumericalError(f"{what} has a non-negligible imaginary part {values}")
    return values.real


def _validate_mu(mu: Number) -> complex:
    mu = complex(mu)
    if abs(mu.real) > POLE_TOLERANCE and abs(mu.imag) > POLE_TOLERANCE:
        raise ValidationError(f"mu must be real or pure imaginary, got {mu}")
    if abs(mu.real) <= POLE_TOLERANCE:
        mu = complex(0.0, mu.imag)
    return mu


# ===== WHITTAKER =====

def _check_kummer(kappa: float, mu: complex):
    for sign in (1, -1):
        n = nonpositive_integer(0.5 - kappa - sign * mu)
        if n is not None:
            raise DegenerateParameterError(
                f"1/2 - kappa {'-' if sign > 0 else '+'} mu = {n} makes the Kummer representation ill-posed"
            )


def _series_growth(kappa: float, mu: complex, x: float) -> float:
    offset = abs(2.0 * mu - round((2.0 * mu).real))
    return x + 2.0 * math.sqrt((abs(kappa) + abs(mu) + 1.0) * x) + math.log(1.0 / max(min(offset, 1.0), 1e-30))


def _series_terms(kappa: float, mu: complex, x_mp, max_terms: int, order: int):
    """mpc jet of u at the current working precision."""
    k = mpmath.mpf(kappa)
    jet = [mpmath.mpc(0)] * (order + 1)
    for sign in (1, -1):
        p = sign * mpmath.mpc(mu)
        coeff = mpmath.gamma(-2 * p) * mpmath.rgamma(mpmath.mpf(0.5) - k - p)
        if coeff == 0:
            continue
        alpha = mpmath.mpf(0.5) - k + p
        gam = 1 + 2 * p
        m0 = _sum_1f1(alpha, gam, x_mp, max_terms)
        weight = coeff * x_mp ** p
        jet[0] += weight * m0
        if order >= 1:
            m1 = alpha / gam * _sum_1f1(alpha + 1, gam + 1, x_mp, max_terms)
            jet[1] += weight * (p * m0 / x_mp + m1)
        if order >= 2:
            m2 = alpha * (alpha + 1) / (gam * (gam + 1)) * _sum_1f1(alpha + 2, gam + 2, x_mp, max_terms)
            jet[2] += weight * (p * (p - 1) * m0 / x_mp ** 2 + 2 * p * m1 / x_mp + m2)
    return jet


def _reduced_series(kappa: float, mu: complex, x: float, policy: AccuracyPolicy, order: int):
    """Jet of u = x^(-1/2) e^(x/2) W through the two Kummer branches."""
    _check_kummer(kappa, mu)
    with mpmath.workdps(_working_dps(policy, _series_growth(kappa, mu, x))):
        jet = _series_terms(kappa, mu, mpmath.mpf(x), policy.max_terms, order)
        return np.array([complex(v) for v in jet])


def cancellation_digits(mu: Number, x: float) -> float:
    """Decimal digits lost at x when the branches x^(+-mu) of u meet in a Wronskian."""
    if x >= 1.0:
        return 0.0
    return 2.0 * abs(complex(mu).real) * math.log10(1.0 / x)


def extended_dps(kappa: float, mu: Number, x_low: float, x_high: float,
                 policy: AccuracyPolicy = DEFAULT_POLICY) -> int:
    """Working digits for Wronskians of reduced jets on [x_low, x_high]."""
    mu = _validate_mu(mu)
    growth = _series_growth(kappa, mu, x_high) + cancellation_digits(mu, x_low) * math.log(10.0)
    return _working_dps(policy, growth)


def reduced_jet_mp(kappa: float, mu: Number, x: float, order: int = 1,
                   policy: AccuracyPolicy = DEFAULT_POLICY):
    """Jet of u as mpc values at the caller's working precision.

    The subdominant branch survives only while the caller's precision
    covers ``cancellation_digits``; see ``extended_dps``.
    """
    if x <= 0:
        raise ValidationError(f"x must be positive, got {x}")
    if order not in (0, 1, 2):
        raise ValidationError(f"order must be 0, 1 or 2, got {order}")
    mu = _validate_mu(mu)
    _check_kummer(float(kappa), mu)
    return _series_terms(float(kappa), mu, mpmath.mpf(x), policy.max_terms, order)


def _reduced_asymptotic(kappa: float, mu: complex, x: float, policy: AccuracyPolicy, order: int):
    """Large-x expansion x^(kappa-1/2) * sum c_k x^-k; None if it does not reach the target."""
    with mpmath.workdps(policy.digits + 10):
        x_mp = mpmath.mpf(x)
        b1 = mpmath.mpf(0.5) - kappa + mpmath.mpc(mu)
        b2 = mpmath.mpf(0.5) - kappa - mpmath.mpc(mu)
        term = mpmath.mpc(1)
        sums = [mpmath.mpc(1), mpmath.mpc(0), mpmath.mpc(0)]
        converged = False
        for k in range(1, policy.max_terms):
            candidate = -term * (b1 + k - 1) * (b2 + k - 1) / (k * x_mp)
            if candidate == 0:
                converged = True
                break
            if k > 2 and abs(candidate) > abs(term):
                break
            term = candidate
            sums[0] += term
            sums[1] -= k * term / x_mp
            sums[2] += k * (k + 1) * term / x_mp ** 2
            if abs(term) < policy.target_rel_error * 1e-2 * abs(sums[0]):
                converged = True
                break
        if not converged and abs(term) > policy.target_rel_error * abs(sums[0]):
            return None
        q = mpmath.mpf(kappa) - mpmath.mpf(0.5)
        power = x_mp ** q
        s0, s1, s2 = sums
        jet = [power * s0,
               power * (q * s0 / x_mp + s1),
               power * (q * (q - 1) * s0 / x_mp ** 2 + 2 * q * s1 / x_mp + s2)]
        return np.array([complex(v) for v in jet[:order + 1]])


def _reduced_fixed_order(kappa: float, mu: complex, x: float, policy: AccuracyPolicy, order: int):
    if x > policy.large_x_switch:
        jet = _reduced_asymptotic(kappa, mu, x, policy, order)
        if jet is not None:
            return jet
        logger.debug("large-x expansion stalls at kappa=%s mu=%s x=%s; summing the series", kappa, mu, x)
    return _reduced_series(kappa, mu, x, policy, order)


@lru_cache(maxsize=200000)
def _reduced_jet(kappa: float, mu: complex, x: float, policy: AccuracyPolicy, order: int) -> Tuple[float, ...]:
    center = lattice_center(2.0 * mu, 2.0 * policy.log_epsilon)
    if center is None:
        jet = _reduced_fixed_order(kappa, mu, x, policy, order)
    else:
        if abs(2.0 * mu - center) > 0.0:
            warnings.warn(
                f"mu={mu} is within {policy.log_epsilon} of the lattice point {center / 2}; "
                f"evaluating at the lattice point",
                NearLogarithmicWarning,
                stacklevel=4,
            )
        jet = _richardson_even(
            lambda m: _reduced_fixed_order(kappa, complex(m), x, policy, order),
            center / 2.0,
            policy.log_epsilon,
        )
    return tuple(_real_part(np.asarray(jet), "Whittaker function"))


def whittaker_reduced(kappa: float, mu: Number, x: float, order: int = 1,
                      policy: AccuracyPolicy = DEFAULT_POLICY) -> Tuple[float, ...]:
    """Jet (u, u', u'')[:order+1] of u(x) = x^(-1/2) e^(x/2) W_{kappa,mu}(x)."""
    if x <= 0:
        raise ValidationError(f"x must be positive, got {x}")
    if order not in (0, 1, 2):
        raise ValidationError(f"order must be 0, 1 or 2, got {order}")
    return _reduced_jet(float(kappa), _validate_mu(mu), float(x), policy, order)


def _whittaker_jet(kappa, mu, x, policy, order):
    u = whittaker_reduced(kappa, mu, x, order, policy)
    h = math.sqrt(x) * math.exp(-0.5 * x)
    g = 0.5 / x - 0.5
    jet = [h * u[0]]
    if order >= 1:
        jet.append(h * (u[1] + g * u[0]))
    if order >= 2:
        jet.append(h * (u[2] + 2.0 * g * u[1] + (g * g - 0.5 / x ** 2) * u[0]))
    return jet


def whittaker_w(kappa: float, mu: Number, x: float, policy: AccuracyPolicy = DEFAULT_POLICY) -> float:
    """Whittaker's W_{kappa,mu}(x) for real kappa, real or pure-imaginary mu and x > 0."""
    return _whittaker_jet(kappa, mu, x, policy, 0)[0]


def whittaker_w_dx(kappa: float, mu: Number, x: float, policy: AccuracyPolicy = DEFAULT_POLICY) -> float:
    return _whittaker_jet(kappa, mu, x, policy, 1)[1]


def whittaker_w_dx2(kappa: float, mu: Number, x: float, policy: AccuracyPolicy = DEFAULT_POLICY) -> float:
    """Second derivative from the twice-shifted series; the ODE is not used."""
    return _whittaker_jet(kappa, mu, x, policy, 2)[2]


# ===== BESSEL =====

def _power_series_bessel(kind: str, nu: complex, X: float, policy: AccuracyPolicy):
    """(value, d/dX) of J_nu or I_nu from (X/2)^nu / Gamma(nu+1) * 0F1(nu+1; -+X^2/4)."""
    n = nonpositive_integer(nu)
    if n is not None and n < 0:
        # J_{-n} = (-1)^n J_n and I_{-n} = I_n
        value, slope = _power_series_bessel(kind, complex(-n), X, policy)
        factor = (-1) ** n if kind == "J" else 1
        return factor * value, factor * slope
    sign = -1 if kind == "J" else 1
    offset = abs(nu - round(complex(nu).real))
    growth = 2.0 * X + math.log(1.0 / max(min(offset, 1.0), 1e-30))
    with mpmath.workdps(_working_dps(policy, growth)):
        v = mpmath.mpc(nu)
        X_mp = mpmath.mpf(X)
        y = sign * X_mp ** 2 / 4
        f0 = _sum_0f1(v + 1, y, policy.max_terms)
        f1 = _sum_0f1(v + 2, y, policy.max_terms) / (v + 1)
        prefactor = (X_mp / 2) ** v * mpmath.rgamma(v + 1)
        value = prefactor * f0
        slope = prefactor * (v / X_mp * f0 + sign * X_mp / 2 * f1)
        return complex(value), complex(slope)


def _macdonald_fixed(nu: complex, X: float, policy: AccuracyPolicy):
    i_minus = _power_series_bessel("I", -nu, X, policy)
    i_plus = _power_series_bessel("I", nu, X, policy)
    factor = math.pi / (2.0 * complex(mpmath.sin(mpmath.pi * mpmath.mpc(nu))))
    return np.array([factor * (i_minus[0] - i_plus[0]), factor * (i_minus[1] - i_plus[1])])


@lru_cache(maxsize=100000)
def _bessel_jet(kind: str, nu: complex, X: float, policy: AccuracyPolicy) -> Tuple[Number, Number]:
    if kind in ("J", "I"):
        return _power_series_bessel(kind, nu, X, policy)
    center = lattice_center(nu, policy.log_epsilon)
    if center is None:
        jet = _macdonald_fixed(nu, X, policy)
    else:
        jet = _richardson_even(lambda v: _macdonald_fixed(complex(v), X, policy), float(center), policy.log_epsilon)
    return tuple(_real_part(np.asarray(jet), "Macdonald function"))


def _real_if_close(value: complex) -> Number:
    value = complex(value)
    if abs(value.imag) <= 1e-12 * max(abs(value), 1e-300):
        return value.real
    return value


def bessel(kind: str, nu: Number, X: float, policy: AccuracyPolicy = DEFAULT_POLICY) -> Number:
    """J_nu, I_nu or K_nu at X > 0; real whenever the function is real."""
    if kind not in ("J", "I", "K"):
        raise ValidationError(f"kind must be J, I or K, got {kind!r}")
    if X <= 0:
        raise ValidationError(f"X must be positive, got {X}")
    return _real_if_close(_bessel_jet(kind, complex(nu), float(X), policy)[0])


def bessel_dx(kind: str, nu: Number, X: float, policy: AccuracyPolicy = DEFAULT_POLICY) -> Number:
    if kind not in ("J", "I", "K"):
        raise ValidationError(f"kind must be J, I or K, got {kind!r}")
    if X <= 0:
        raise ValidationError(f"X must be positive, got {X}")
    return _real_if_close(_bessel_jet(kind, complex(nu), float(X), policy)[1])
