"""Diagonalization of the kernels in the continual basis f_{a,m}(x) = W_{a,im}(x)/x.

f_{a,m} solves D(a) f = (a^2 + 1/4 + m^2) f for the Sturm-Liouville
operator D(a) = -(d/dx) x^2 (d/dx) + (a - x/2)^2, A maps f_{-a,m} to a
multiple of f_{a,m}, and K++ = AB(1 + AB)^-1 acts on f_{a,m} by a scalar.
"""

import cmath
import logging
import math
import warnings
from dataclasses import dataclass
from typing import Callable, List, Sequence

import numpy as np
from scipy import integrate
from scipy.special import roots_legendre

from whittaker_lab.errors import PlancherelCutoffWarning, ValidationError
from whittaker_lab.kernels import BlockTag, KernelMachine
from whittaker_lab.operator_lab import GridSpec, ResidualReport
from whittaker_lab.params import ParameterSet
from whittaker_lab.specfun import (
    DEFAULT_POLICY,
    AccuracyPolicy,
    bessel,
    bessel_dx,
    log_gamma,
    whittaker_w,
    whittaker_w_dx2,
)

logger = logging.getLogger(__name__)

PLANCHEREL_TAIL_TOLERANCE = 1e-8


# ===== EIGENFUNCTIONS =====

@dataclass(frozen=True)
class EigenFunction:
    a: float
    m: float
    policy: AccuracyPolicy = DEFAULT_POLICY

    def __call__(self, x: float) -> float:
        return f_am(self.a, self.m, x, self.policy)

    def sample(self, xs: Sequence[float]) -> np.ndarray:
        return np.array([self(x) for x in xs])

    @property
    def eigenvalue(self) -> float:
        """Eigenvalue of D(a)."""
        return self.a ** 2 + 0.25 + self.m ** 2


@dataclass(frozen=True)
class SturmLiouville:
    a: float

    def apply_to_whittaker(self, w: float, w_dx2: float, x: float) -> float:
        """D(a) applied to W/x, written through W and W'' only: -x W'' + (a - x/2)^2 W/x."""
        return -x * w_dx2 + (self.a - 0.5 * x) ** 2 * w / x


def f_am(a: float, m: float, x: float, policy: AccuracyPolicy = DEFAULT_POLICY) -> float:
    if x <= 0:
        raise ValidationError(f"x must be positive, got {x}")
    return whittaker_w(a, 1j * m, x, policy) / x


def sl_residual(a: float, m: float, x: float, route: str = "whittaker",
                policy: AccuracyPolicy = DEFAULT_POLICY) -> float:
    """Relative residual of D(a) f_{a,m} = (a^2 + 1/4 + m^2) f_{a,m} at x.

    ``route="bessel"`` (a = 0 only) builds W_{0,im}(x) = sqrt(x/pi) K_{im}(x/2)
    and its second derivative from the Macdonald function instead.
    """
    if x <= 0:
        raise ValidationError(f"x must be positive, got {x}")
    if route == "whittaker":
        w = whittaker_w(a, 1j * m, x, policy)
        w2 = whittaker_w_dx2(a, 1j * m, x, policy)
    elif route == "bessel":
        if a != 0:
            raise ValidationError("the Bessel route exists only for a = 0")
        w, w2 = _whittaker_from_macdonald(m, x, policy)
    else:
        raise ValidationError(f"unknown route {route!r}")
    operator = SturmLiouville(a)
    lhs = operator.apply_to_whittaker(w, w2, x)
    rhs = (a * a + 0.25 + m * m) * w / x
    scale = max(abs(x * w2), abs(rhs), 1e-300)
    return abs(lhs - rhs) / scale


def _whittaker_from_macdonald(m: float, x: float, policy: AccuracyPolicy):
    X = 0.5 * x
    nu = 1j * m
    k = complex(bessel("K", nu, X, policy)).real
    k1 = complex(bessel_dx("K", nu, X, policy)).real
    # K'' = -K'/X + (1 + nu^2/X^2) K with nu^2 = -m^2
    k2 = -k1 / X + (1.0 - m * m / X ** 2) * k
    c = 1.0 / math.sqrt(math.pi)
    # W = c sqrt(x) K(x/2); differentiate twice in x
    w = c * math.sqrt(x) * k
    w2 = c * (-0.25 * x ** -1.5 * k + 0.5 * x ** -0.5 * k1 + 0.25 * math.sqrt(x) * k2)
    return w, w2


def kd_commutation(params: ParameterSet, x: float, y: float, step: float = 1e-2,
                   policy: AccuracyPolicy = DEFAULT_POLICY) -> float:
    """Relative size of D(a)_x K++(x,y) - D(a)_y K++(x,y), five-point differences."""
    machine = KernelMachine(params, policy)
    a = params.a

    def kernel(u, v):
        return machine.k_block(BlockTag.PP, u, v)

    def apply(point, other, first):
        h = step * point
        values = [kernel(point + k * h, other) if first else kernel(other, point + k * h) for k in (-2, -1, 0, 1, 2)]
        d1 = (values[0] - 8 * values[1] + 8 * values[3] - values[4]) / (12 * h)
        d2 = (-values[0] + 16 * values[1] - 30 * values[2] + 16 * values[3] - values[4]) / (12 * h * h)
        return -(2 * point * d1 + point ** 2 * d2) + (a - 0.5 * point) ** 2 * values[2]

    dx = apply(x, y, True)
    dy = apply(y, x, False)
    return abs(dx - dy) / max(abs(dx) + abs(dy), 1e-300)


# ===== EIGENVALUES =====

def _cos_2pi(w: complex) -> float:
    return cmath.cos(2.0 * math.pi * complex(w)).real


def ab_eigenvalue(params: ParameterSet, m: float) -> float:
    """(cos 2 pi mu - cos 2 pi a) / (cosh 2 pi m + cos 2 pi a)."""
    return (_cos_2pi(params.mu) - _cos_2pi(params.a)) / (math.cosh(2.0 * math.pi * m) + _cos_2pi(params.a))


def kpp_eigenvalue(params: ParameterSet, m: float) -> float:
    """(cos 2 pi mu - cos 2 pi a) / (cosh 2 pi m + cos 2 pi mu)."""
    return (_cos_2pi(params.mu) - _cos_2pi(params.a)) / (math.cosh(2.0 * math.pi * m) + _cos_2pi(params.mu))


def criticality(params: ParameterSet) -> float:
    """sup over m of the AB eigenvalue, sigma^2 / cos^2(pi a); infinite at a = +-1/2."""
    c = math.cos(math.pi * params.a)
    return math.inf if abs(c) < 1e-15 else params.sigma_squared / c ** 2


def transform_eigenvalue(params: ParameterSet, which: str, m: float) -> float:
    """(sigma/pi) Gamma(1/2 -+ a + im) Gamma(1/2 -+ a - im)."""
    shift = -params.a if which == "A" else params.a
    value = np.exp(log_gamma(0.5 + shift + 1j * m) + log_gamma(0.5 + shift - 1j * m)).real
    return params.sigma / math.pi * float(value)


def _small_y_tail(params: ParameterSet, which: str, m: float, x: float, cut: float) -> float:
    """Integral over (0, cut) of the kernel against the leading small-y terms of f."""
    a = params.a
    source = -a if which == "A" else a
    exponent = -a if which == "A" else a
    total = 0j
    for sign in (1, -1):
        mu = sign * 1j * m
        coeff = np.exp(log_gamma(-2 * mu) - log_gamma(0.5 - source - mu))
        power = 0.5 + exponent + mu
        total += coeff * cut ** power / power
    return params.sigma / math.pi * x ** (-exponent - 1) * math.exp(-0.5 * x) * total.real


def transform_identity(which: str, params: ParameterSet, m: float, sample_points: Sequence[float],
                       spec: GridSpec = GridSpec(nodes=240), levels: int = 3,
                       policy: AccuracyPolicy = DEFAULT_POLICY) -> ResidualReport:
    """Quadrature of A f_{-a,m} (or B f_{a,m}) at the sample points against the closed-form image."""
    if which not in ("A", "B"):
        raise ValidationError(f"transform must be A or B, got {which!r}")
    if abs(params.a) >= 0.5:
        raise ValidationError(f"the transform identity needs |a| < 1/2, got a={params.a}")
    machine = KernelMachine(params, policy)
    source, target = (-params.a, params.a) if which == "A" else (params.a, -params.a)
    points = np.asarray(sample_points, dtype=float)
    eigenvalue = transform_eigenvalue(params, which, m)
    expected = eigenvalue * EigenFunction(target, m, policy).sample(points)
    report = ResidualReport(f"transform_{which}", {**params.describe(), "m": m, "eigenvalue": eigenvalue})
    for level in range(levels):
        grid = spec.refine(level)
        samples = EigenFunction(source, m, policy).sample(grid.nodes)
        table = machine.factor_matrix(which, points, grid.nodes)
        image = table @ (grid.weights * samples)
        image += np.array([_small_y_tail(params, which, m, x, grid.domain[0]) for x in points])
        errors = np.abs(image - expected) / np.maximum(np.abs(expected), 1e-300)
        report.add_level(level, grid.size, {"max_relative": float(errors.max())})
        report.levels[-1]["per_point"] = errors.tolist()
    return report


def kpp_rayleigh(params: ParameterSet, m: float, sample_points: Sequence[float],
                 spec: GridSpec = GridSpec(nodes=240), level: int = 2,
                 policy: AccuracyPolicy = DEFAULT_POLICY) -> float:
    """Least-squares ratio of (K++ f_{a,m})(x_p) to f_{a,m}(x_p) over the sample points."""
    machine = KernelMachine(params, policy)
    grid = spec.refine(level)
    eigenfunction = EigenFunction(params.a, m, policy)
    points = np.asarray(sample_points, dtype=float)
    image = machine.block_matrix(BlockTag.PP, points, grid.nodes) @ (grid.weights * eigenfunction.sample(grid.nodes))
    values = eigenfunction.sample(points)
    return float(np.dot(image, values) / np.dot(values, values))


@dataclass
class SpectrumRow:
    m: float
    lambda_closed: float
    lambda_resolvent: float
    lambda_rayleigh: float

    def to_record(self) -> dict:
        return {"m": self.m, "lambda_closed": self.lambda_closed,
                "lambda_resolvent": self.lambda_resolvent, "lambda_rayleigh": self.lambda_rayleigh}


def spectrum_table(params: ParameterSet, m_list: Sequence[float], sample_points: Sequence[float],
                   spec: GridSpec = GridSpec(nodes=240), level: int = 2,
                   policy: AccuracyPolicy = DEFAULT_POLICY) -> List[SpectrumRow]:
    rows = []
    for m in m_list:
        lam_ab = ab_eigenvalue(params, m)
        rows.append(SpectrumRow(
            m=m,
            lambda_closed=kpp_eigenvalue(params, m),
            lambda_resolvent=lam_ab / (1.0 + lam_ab),
            lambda_rayleigh=kpp_rayleigh(params, m, sample_points, spec, level, policy),
        ))
        logger.info("spectrum m=%s: closed=%.6e rayleigh=%.6e", m, rows[-1].lambda_closed, rows[-1].lambda_rayleigh)
    return rows


# ===== PLANCHEREL =====

def plancherel_norm(a: float, m: float) -> float:
    """pi^2 / (Gamma(1/2 - a - im) Gamma(1/2 - a + im))."""
    return math.pi ** 2 / float(np.exp(2.0 * log_gamma(0.5 - a + 1j * m).real))


def plancherel_density(a: float, m: float) -> float:
    """m sinh(2 pi m) |Gamma(1/2 - a + im)|^2 / pi^2."""
    log_abs = 2.0 * log_gamma(0.5 - a + 1j * m).real
    if m == 0:
        return 0.0
    # sinh(2 pi m) |Gamma|^2 grows like e^(pi m); combine in log space
    log_sinh = 2.0 * math.pi * m + math.log1p(-math.exp(-4.0 * math.pi * m)) - math.log(2.0)
    return m * math.exp(log_sinh + log_abs) / math.pi ** 2


@dataclass
class PlancherelResult:
    direct: float
    reconstructed: float
    m_max: float
    tail_estimate: float
    converged: bool

    @property
    def relative_error(self) -> float:
        return abs(self.reconstructed - self.direct) / max(abs(self.direct), 1e-300)


def _support_rule(support, nodes: int):
    lo, hi = support
    t, w = roots_legendre(nodes)
    return 0.5 * (hi - lo) * t + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


def plancherel_reconstruct(a: float, f: Callable[[np.ndarray], np.ndarray], g: Callable[[np.ndarray], np.ndarray],
                           support_f, support_g, points_per_unit: int = 32, m_cap: float = 60.0,
                           x_nodes: int = 48, tolerance: float = PLANCHEREL_TAIL_TOLERANCE,
                           policy: AccuracyPolicy = DEFAULT_POLICY) -> PlancherelResult:
    """Rebuild (f, g) from the spectral side, integrating m over unit panels until the tail is below tolerance."""
    if abs(a) >= 0.5:
        raise ValidationError(f"the Plancherel formula is used for |a| < 1/2, got a={a}")
    xf, wf = _support_rule(support_f, x_nodes)
    xg, wg = _support_rule(support_g, x_nodes)
    fv = np.asarray(f(xf), dtype=float)
    gv = np.asarray(g(xg), dtype=float)

    lo, hi = max(support_f[0], support_g[0]), min(support_f[1], support_g[1])
    if lo < hi:
        xs, ws = _support_rule((lo, hi), x_nodes)
        direct = float(np.sum(ws * np.asarray(f(xs)) * np.asarray(g(xs))))
    else:
        direct = 0.0

    scale = math.sqrt(float(np.sum(wf * fv * fv)) * float(np.sum(wg * gv * gv)))
    floor = tolerance * max(scale, 1e-300)

    t, w = roots_legendre(points_per_unit)
    total = 0.0
    tail = math.inf
    start = 0.0
    while start < m_cap:
        ms = start + 0.5 * (t + 1.0)
        chunk = 0.0
        for m, weight in zip(ms, 0.5 * w):
            eig = EigenFunction(a, float(m), policy)
            pf = float(np.sum(wf * fv * eig.sample(xf)))
            pg = float(np.sum(wg * gv * eig.sample(xg)))
            chunk += weight * plancherel_density(a, float(m)) * pf * pg
        total += chunk
        start += 1.0
        tail = abs(chunk)
        if tail < floor:
            break
    converged = tail < floor
    if not converged:
        warnings.warn(f"Plancherel integral cut off at m={start} with last-panel contribution {tail:.3e}",
                      PlancherelCutoffWarning, stacklevel=2)
    return PlancherelResult(direct=direct, reconstructed=total, m_max=start, tail_estimate=tail, converged=converged)


def szego_log_det(params: ParameterSet, x_min: float, x_max: float) -> float:
    """Leading-order log det(1 + AB) on a window: (ln(x_max/x_min)/pi) * int_0^inf log(1 + lambda_AB(m)) dm."""
    if not 0 < x_min < x_max:
        raise ValidationError(f"window [{x_min}, {x_max}] must satisfy 0 < x_min < x_max")
    value, _ = integrate.quad(lambda m: math.log1p(ab_eigenvalue(params, m)), 0.0, np.inf, limit=200)
    return math.log(x_max / x_min) / math.pi * value
