"""The matrix Whittaker kernel, its C/D factors and its L-kernel.

Auxiliary functions are the reduced Whittaker functions
phi(x) = x^(-1/2) e^(x/2) W_{a+1/2,mu}(x) and companions. Every block
carries the factor e^(-(x+y)/2). Gamma prefactors are folded into the
auxiliary functions in log space:

    s+ = (Gamma(z) Gamma(z'))^(-1/2),  s- = (Gamma(-z) Gamma(-z'))^(-1/2)

so that K++ and K-- become plain Wronskian-type quotients and the
off-diagonal constant (sigma/pi)/(s+ s-) collapses to 1/sqrt(z z').
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Sequence, Tuple

import mpmath
import numpy as np
from scipy import special

from whittaker_lab.errors import NonFiniteEntryError, ValidationError
from whittaker_lab.params import ParameterSet
from whittaker_lab.specfun import (
    DEFAULT_POLICY,
    AccuracyPolicy,
    digamma,
    extended_dps,
    lattice_center,
    log_gamma,
    reduced_jet_mp,
    whittaker_reduced,
)

logger = logging.getLogger(__name__)

DIAGONAL_SWITCH = 1e-3
DIFFERENCE_STEP = 1e-3
# digits the double path may lose before blocks switch to working precision
CANCELLATION_SWITCH = 3.0
# the same bound for entries of dense tables
MATRIX_CANCELLATION_SWITCH = 8.0

AUX_NAMES = ("phi", "phi_minus", "psi", "psi_minus", "phi_tilde", "psi_tilde")


def diagonal_limit(pair, x: float, step: float = DIFFERENCE_STEP) -> float:
    """y -> x limit of (f(x) f~(y) - f~(x) f(y)) / (x - y), i.e. -N'(x), by four-point differences.

    ``pair(t)`` returns (f(t), f~(t)).
    """
    f_x, ft_x = pair(x)
    h = step * x

    def numerator(y):
        f_y, ft_y = pair(y)
        return f_x * ft_y - ft_x * f_y

    return -(numerator(x - 2 * h) - 8 * numerator(x - h) + 8 * numerator(x + h) - numerator(x + 2 * h)) / (12 * h)


def wronskian_quotient(pair, x: float, y: float, switch: float = DIAGONAL_SWITCH) -> float:
    """(f(x) f~(y) - f~(x) f(y)) / (x - y); pairs closer than ``switch`` use the midpoint limit."""
    if abs(x - y) < switch * max(x, y):
        return diagonal_limit(pair, 0.5 * (x + y))
    f_x, ft_x = pair(x)
    f_y, ft_y = pair(y)
    return (f_x * ft_y - ft_x * f_y) / (x - y)


class BlockTag(Enum):
    PP = ("+", "+")
    PM = ("+", "-")
    MP = ("-", "+")
    MM = ("-", "-")

    @property
    def row_sign(self) -> str:
        return self.value[0]

    @property
    def col_sign(self) -> str:
        return self.value[1]

    @classmethod
    def parse(cls, text: str) -> "BlockTag":
        lookup = {"++": cls.PP, "+-": cls.PM, "-+": cls.MP, "--": cls.MM,
                  "pp": cls.PP, "pm": cls.PM, "mp": cls.MP, "mm": cls.MM}
        try:
            return lookup[text.strip().lower()]
        except KeyError:
            raise ValidationError(f"unknown block {text!r}; expected one of ++, +-, -+, --") from None

    def __str__(self):
        return self.row_sign + self.col_sign


def _log_gamma_pair(u: complex, v: complex) -> float:
    """log of Gamma(u) Gamma(v), a positive real for admissible parameters."""
    return float((log_gamma(u) + log_gamma(v)).real)


@dataclass(frozen=True)
class KernelMachine:
    params: ParameterSet
    policy: AccuracyPolicy = DEFAULT_POLICY
    diagonal_switch: float = DIAGONAL_SWITCH
    _scale: Dict[str, float] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        p = self.params
        self._scale["+"] = math.exp(-0.5 * _log_gamma_pair(p.z, p.z_prime))
        self._scale["-"] = math.exp(-0.5 * _log_gamma_pair(-p.z, -p.z_prime))

    # ===== AUXILIARY FUNCTIONS =====

    def _kappa(self, name: str) -> float:
        a = self.params.a
        return {"phi": a + 0.5, "phi_minus": a - 0.5, "psi": 0.5 - a, "psi_minus": -a - 0.5}[name]

    def aux(self, name: str, x: float) -> float:
        """phi, phi_minus, psi, psi_minus, or the x*d/dx variants phi_tilde, psi_tilde."""
        if name not in AUX_NAMES:
            raise ValidationError(f"unknown auxiliary function {name!r}")
        if x <= 0:
            raise ValidationError(f"x must be positive, got {x}")
        if name.endswith("_tilde"):
            base = name[:-len("_tilde")]
            jet = whittaker_reduced(self._kappa(base), self.params.mu, x, 1, self.policy)
            return x * jet[1]
        return whittaker_reduced(self._kappa(name), self.params.mu, x, 1, self.policy)[0]

    def _pair(self, sign: str, x: float) -> Tuple[float, float]:
        """Normalized (f, x f') for the + or - family."""
        base = "phi" if sign == "+" else "psi"
        jet = whittaker_reduced(self._kappa(base), self.params.mu, x, 1, self.policy)
        s = self._scale[sign]
        return s * jet[0], s * x * jet[1]

    def _normalized(self, name: str, x: float) -> float:
        sign = "+" if name.startswith("phi") else "-"
        return self._scale[sign] * self.aux(name, x)

    # ===== BLOCKS =====

    def _diagonal_value(self, sign: str, x: float) -> float:
        return diagonal_limit(lambda t: self._pair(sign, t), x) * math.exp(-x) / self.params.zz

    def _diagonal_block(self, sign: str, x: float, y: float) -> float:
        if abs(x - y) < self.diagonal_switch * max(x, y):
            return self._diagonal_value(sign, 0.5 * (x + y))
        base = "phi" if sign == "+" else "psi"
        f_x = self._normalized(base, x)
        f_y = self._normalized(base, y)
        g_x = self._normalized(base + "_minus", x)
        g_y = self._normalized(base + "_minus", y)
        return math.exp(-0.5 * (x + y)) * (f_x * g_y - g_x * f_y) / (x - y)

    def _off_diagonal(self, x: float, y: float) -> float:
        p = self.params
        numerator = (self._normalized("phi", x) * self._normalized("psi", y)
                     + p.zz * self._normalized("phi_minus", x) * self._normalized("psi_minus", y))
        return math.exp(-0.5 * (x + y)) * numerator / (math.sqrt(p.zz) * (x + y))

    def _extended_below(self, digits: float = CANCELLATION_SWITCH) -> float:
        """Arguments under this bound go through ``_extended_block``; 0 when never."""
        mu = self.params.mu
        if mu.real == 0.0 or lattice_center(2.0 * mu, 2.0 * self.policy.log_epsilon) is not None:
            return 0.0
        return 10.0 ** (-digits / (2.0 * abs(mu.real)))

    def needs_extended(self, x: float, y: float) -> bool:
        """True where the double-precision Wronskians would cancel away the subdominant branch."""
        return min(x, y) < self._extended_below()

    def _extended_block(self, tag: BlockTag, x: float, y: float) -> float:
        """Block value with every jet held in working precision until the final quotient."""
        p = self.params
        kappa_max = max(abs(self._kappa(name)) for name in ("phi", "phi_minus", "psi", "psi_minus"))
        dps = extended_dps(kappa_max, p.mu, min(x, y), max(x, y), self.policy)
        logger.debug("block %s at (%s, %s) in %d digits", tag, x, y, dps)
        with mpmath.workdps(dps):
            def jet(name, t, order=0):
                s = self._scale["+" if name.startswith("phi") else "-"]
                return [s * v for v in reduced_jet_mp(self._kappa(name), p.mu, t, order, self.policy)]

            x_mp, y_mp = mpmath.mpf(x), mpmath.mpf(y)
            if tag in (BlockTag.PP, BlockTag.MM):
                base = "phi" if tag is BlockTag.PP else "psi"
                if abs(x - y) < self.diagonal_switch * max(x, y):
                    t = (x_mp + y_mp) / 2
                    f, df, d2f = jet(base, t, 2)
                    value = (t * df ** 2 - f * df - t * f * d2f) * mpmath.exp(-t) / p.zz
                else:
                    f_x, g_x = jet(base, x)[0], jet(base + "_minus", x)[0]
                    f_y, g_y = jet(base, y)[0], jet(base + "_minus", y)[0]
                    value = mpmath.exp(-(x_mp + y_mp) / 2) * (f_x * g_y - g_x * f_y) / (x_mp - y_mp)
            else:
                row, col = (x, y) if tag is BlockTag.PM else (y, x)
                numerator = (jet("phi", row)[0] * jet("psi", col)[0]
                             + p.zz * jet("phi_minus", row)[0] * jet("psi_minus", col)[0])
                value = (mpmath.exp(-(x_mp + y_mp) / 2) * numerator
                         / (mpmath.sqrt(p.zz) * (x_mp + y_mp)))
                if tag is BlockTag.MP:
                    value = -value
            return float(mpmath.re(value))

    def k_block(self, tag: BlockTag, x: float, y: float) -> float:
        if x <= 0 or y <= 0:
            raise ValidationError(f"kernel arguments must be positive, got ({x}, {y})")
        if self.needs_extended(x, y):
            value = self._extended_block(tag, x, y)
        elif tag is BlockTag.PP:
            value = self._diagonal_block("+", x, y)
        elif tag is BlockTag.MM:
            value = self._diagonal_block("-", x, y)
        elif tag is BlockTag.PM:
            value = self._off_diagonal(x, y)
        else:
            value = -self._off_diagonal(y, x)
        if not math.isfinite(value):
            raise NonFiniteEntryError(x, y)
        return value

    def block_matrix(self, tag: BlockTag, xs: Sequence[float], ys: Sequence[float]) -> np.ndarray:
        """Dense table of a block; auxiliary values are evaluated once per node."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if np.any(xs <= 0) or np.any(ys <= 0):
            raise ValidationError("kernel arguments must be positive")
        p = self.params
        decay = np.exp(-0.5 * np.add.outer(xs, ys))
        if tag in (BlockTag.PM, BlockTag.MP):
            rows, cols = (xs, ys) if tag is BlockTag.PM else (ys, xs)
            phi = np.array([self._normalized("phi", v) for v in rows])
            phi_m = np.array([self._normalized("phi_minus", v) for v in rows])
            psi = np.array([self._normalized("psi", v) for v in cols])
            psi_m = np.array([self._normalized("psi_minus", v) for v in cols])
            with np.errstate(over="ignore", invalid="ignore"):
                table = (np.outer(phi, psi) + p.zz * np.outer(phi_m, psi_m)) / (math.sqrt(p.zz) * np.add.outer(rows, cols))
            table = table if tag is BlockTag.PM else -table.T
            out = decay * table
        else:
            sign = "+" if tag is BlockTag.PP else "-"
            base = "phi" if sign == "+" else "psi"
            f_x = np.array([self._normalized(base, v) for v in xs])
            g_x = np.array([self._normalized(base + "_minus", v) for v in xs])
            f_y = np.array([self._normalized(base, v) for v in ys])
            g_y = np.array([self._normalized(base + "_minus", v) for v in ys])
            gap = np.subtract.outer(xs, ys)
            near = np.abs(gap) < self.diagonal_switch * np.maximum.outer(xs, ys)
            with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
                out = decay * (np.outer(f_x, g_y) - np.outer(g_x, f_y)) / gap
            for i, j in zip(*np.nonzero(near)):
                out[i, j] = self._diagonal_value(sign, 0.5 * (xs[i] + ys[j]))
        for i, j in zip(*np.nonzero(np.minimum.outer(xs, ys) < self._extended_below(MATRIX_CANCELLATION_SWITCH))):
            out[i, j] = self._extended_block(tag, float(xs[i]), float(ys[j]))
        bad = ~np.isfinite(out)
        if np.any(bad):
            i, j = np.argwhere(bad)[0]
            raise NonFiniteEntryError(float(xs[i]), float(ys[j]))
        return out

    # ===== FACTORS =====

    def d_kernel(self, x: float, y: float) -> float:
        """D(x,y) = (sigma/pi) (x/y)^(-a) e^(-(x+y)/2) / (x+y)."""
        p = self.params
        return p.sigma / math.pi * (x / y) ** (-p.a) * math.exp(-0.5 * (x + y)) / (x + y)

    def c_kernel(self, x: float, y: float) -> float:
        return self.k_block(BlockTag.PM, x, y)

    def l_block(self, which: str, x: float, y: float) -> float:
        """A(x,y) = D(y,x) and B(x,y) = D(x,y)."""
        if which == "A":
            return self.d_kernel(y, x)
        if which == "B":
            return self.d_kernel(x, y)
        raise ValidationError(f"L-kernel block must be A or B, got {which!r}")

    def factor_matrix(self, which: str, xs: Sequence[float], ys: Sequence[float]) -> np.ndarray:
        """Vectorized A, B, C or D on a grid."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if which == "C":
            return self.block_matrix(BlockTag.PM, xs, ys)
        if which not in ("A", "B", "D"):
            raise ValidationError(f"unknown factor {which!r}")
        p = self.params
        exponent = p.a if which == "A" else -p.a
        ratio = np.divide.outer(xs, ys) ** exponent
        return p.sigma / math.pi * ratio * np.exp(-0.5 * np.add.outer(xs, ys)) / np.add.outer(xs, ys)


# ===== SUPPLEMENTS =====

def log_case_anchors(kappa: float) -> Tuple[float, float]:
    """(a0, a1) with x^(-1/2) W_{kappa,0}(x) ~ a0 ln x + a1 as x -> 0+."""
    w = 0.5 - kappa
    inverse_gamma = float(special.rgamma(w))
    a0 = -inverse_gamma
    a1 = -(digamma(w).real - 2.0 * digamma(1.0).real) * inverse_gamma
    return a0, a1


def multiplier_bound(params: ParameterSet) -> float:
    """sup over u of the D multiplier, sigma / cos(pi a)."""
    if abs(params.a) >= 0.5:
        raise ValidationError(f"the multiplier is unbounded for |a| >= 1/2, got a={params.a}")
    return params.sigma / math.cos(math.pi * params.a)


def multiplier(params: ParameterSet, u):
    """|D multiplier| at Mellin frequency u: (sigma/pi) * pi / |cos(pi (a + i u))|."""
    u = np.asarray(u, dtype=float)
    return params.sigma / np.abs(np.cos(math.pi * (params.a + 1j * u)))
