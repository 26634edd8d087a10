"""Nystrom discretization of the kernels and residual checks of the operator identities.

A kernel K on R+ becomes the matrix M_ij = sqrt(w_i) K(x_i, x_j) sqrt(w_j).
With this weighting products of matrices approximate compositions of
operators directly, so K++ ~ C D reads M_K ~ M_C M_D.

Grids are built from panels with edges at x_max * 2^-k, refined toward 0
where the kernels carry x^(+-a) and x^(+-mu) factors. Verification runs
at several refinement levels; a level doubles the node count and pushes
the lower edge two more decades down, while residuals are read on the
fixed window [x_min, x_max].
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
from scipy import linalg
from scipy.special import roots_legendre

from whittaker_lab.errors import GridError, NearSingularError, NonFiniteEntryError, NumericalError, ToleranceFailure
from whittaker_lab.kernels import BlockTag, KernelMachine, multiplier_bound
from whittaker_lab.params import ParameterSet, from_a_mu
from whittaker_lab.specfun import DEFAULT_POLICY, AccuracyPolicy

logger = logging.getLogger(__name__)

RULES = ("gauss_legendre_composite", "log_gauss")
CONDITION_LIMIT = 1e12
ROUNDOFF_FLOOR = 1e-9

KernelTable = Callable[[np.ndarray, np.ndarray], np.ndarray]


# ===== GRIDS =====

@dataclass(frozen=True)
class QuadratureGrid:
    nodes: np.ndarray
    weights: np.ndarray
    domain: tuple
    rule: str

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    def window(self, x_min: float, x_max: float) -> np.ndarray:
        """Indices of nodes inside [x_min, x_max]."""
        return np.nonzero((self.nodes >= x_min) & (self.nodes <= x_max))[0]


def _check_domain(x_min: float, x_max: float):
    if not (0.0 < x_min < x_max) or not math.isfinite(x_max):
        raise GridError(f"domain [{x_min}, {x_max}] must satisfy 0 < x_min < x_max < inf")


def panel_edges(x_min: float, x_max: float) -> np.ndarray:
    """x_min followed by x_max * 2^-k for every k with x_max * 2^-k > x_min."""
    _check_domain(x_min, x_max)
    count = int(math.ceil(math.log2(x_max / x_min)))
    edges = x_max * 2.0 ** -np.arange(count, -1, -1, dtype=float)
    edges = edges[edges > x_min * (1.0 + 1e-12)]
    return np.concatenate(([x_min], edges))


def gauss_legendre_composite(x_min: float, x_max: float, nodes: int) -> QuadratureGrid:
    edges = panel_edges(x_min, x_max)
    panels = edges.size - 1
    per_panel = int(math.ceil(nodes / panels))
    if per_panel < 2:
        raise GridError(f"{nodes} nodes cannot fill {panels} panels with at least two points each")
    t, w = roots_legendre(per_panel)
    lo, hi = edges[:-1, None], edges[1:, None]
    xs = (0.5 * (hi - lo) * t + 0.5 * (hi + lo)).ravel()
    ws = (0.5 * (hi - lo) * w).ravel()
    return QuadratureGrid(nodes=xs, weights=ws, domain=(x_min, x_max), rule="gauss_legendre_composite")


def log_gauss(x_min: float, x_max: float, nodes: int) -> QuadratureGrid:
    """Gauss-Legendre in t = ln x, weights carrying the Jacobian e^t."""
    _check_domain(x_min, x_max)
    if nodes < 2:
        raise GridError("log_gauss needs at least two nodes")
    t, w = roots_legendre(nodes)
    lo, hi = math.log(x_min), math.log(x_max)
    ts = 0.5 * (hi - lo) * t + 0.5 * (hi + lo)
    xs = np.exp(ts)
    return QuadratureGrid(nodes=xs, weights=0.5 * (hi - lo) * w * xs, domain=(x_min, x_max), rule="log_gauss")


def make_grid(x_min: float, x_max: float, nodes: int, rule: str = "gauss_legendre_composite") -> QuadratureGrid:
    if rule == "gauss_legendre_composite":
        return gauss_legendre_composite(x_min, x_max, nodes)
    if rule == "log_gauss":
        return log_gauss(x_min, x_max, nodes)
    raise GridError(f"unknown quadrature rule {rule!r}; expected one of {RULES}")


@dataclass(frozen=True)
class GridSpec:
    """Residual window plus the refinement recipe for verification runs."""

    x_min: float = 1e-3
    x_max: float = 40.0
    nodes: int = 200
    rule: str = "gauss_legendre_composite"
    buffer_decades: float = 6.0

    def __post_init__(self):
        _check_domain(self.x_min, self.x_max)
        if self.nodes < 2:
            raise GridError(f"nodes must be at least 2, got {self.nodes}")
        if self.buffer_decades < 0:
            raise GridError(f"buffer_decades must be nonnegative, got {self.buffer_decades}")

    def refine(self, level: int) -> QuadratureGrid:
        lower = self.x_min * 10.0 ** -(self.buffer_decades + 2 * level)
        return make_grid(lower, self.x_max, self.nodes * 2 ** level, self.rule)

    def window(self, grid: QuadratureGrid) -> np.ndarray:
        return grid.window(self.x_min, self.x_max)


# ===== DISCRETIZATION =====

@dataclass
class DiscretizedOperator:
    matrix: np.ndarray
    grid: QuadratureGrid

    @property
    def sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.grid.weights)

    def apply(self, samples: np.ndarray) -> np.ndarray:
        """(K f)(x_i) from samples f(x_j)."""
        s = self.sqrt_weights
        return (self.matrix @ (s * np.asarray(samples))) / s

    def compose(self, other: "DiscretizedOperator") -> "DiscretizedOperator":
        return DiscretizedOperator(self.matrix @ other.matrix, self.grid)

    def transpose(self) -> "DiscretizedOperator":
        return DiscretizedOperator(self.matrix.T.copy(), self.grid)


def pointwise(evaluate: Callable[[float, float], float]) -> KernelTable:
    """Lift a scalar kernel to a table builder."""
    def table(xs, ys):
        return np.array([[evaluate(x, y) for y in ys] for x in xs], dtype=float)
    return table


def discretize(kernel: KernelTable, grid: QuadratureGrid) -> DiscretizedOperator:
    values = np.asarray(kernel(grid.nodes, grid.nodes), dtype=float)
    bad = ~np.isfinite(values)
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise NonFiniteEntryError(float(grid.nodes[i]), float(grid.nodes[j]))
    s = np.sqrt(grid.weights)
    return DiscretizedOperator(s[:, None] * values * s[None, :], grid)


def j_matrix(n: int) -> np.ndarray:
    return np.diag(np.concatenate((np.ones(n), -np.ones(n))))


@dataclass
class OperatorSet:
    """Discretized blocks and factors of one parameter set on one grid."""

    grid: QuadratureGrid
    blocks: Dict[BlockTag, np.ndarray]
    factors: Dict[str, np.ndarray]

    def full_kernel(self) -> np.ndarray:
        b = self.blocks
        return np.block([[b[BlockTag.PP], b[BlockTag.PM]], [b[BlockTag.MP], b[BlockTag.MM]]])


def discretize_machine(machine: KernelMachine, grid: QuadratureGrid,
                       factors=("A", "B", "C", "D")) -> OperatorSet:
    blocks = {}
    for tag in BlockTag:
        table = lambda xs, ys, tag=tag: machine.block_matrix(tag, xs, ys)
        blocks[tag] = discretize(table, grid).matrix
    mats = {}
    for name in factors:
        if name == "C":
            mats[name] = blocks[BlockTag.PM]
        else:
            mats[name] = discretize(lambda xs, ys, name=name: machine.factor_matrix(name, xs, ys), grid).matrix
    return OperatorSet(grid=grid, blocks=blocks, factors=mats)


# ===== REPORTS =====

@dataclass
class ResidualReport:
    check: str
    params: Optional[dict] = None
    levels: List[dict] = field(default_factory=list)

    def add_level(self, level: int, nodes: int, residuals: Dict[str, float]):
        logger.info("%s level %d (%d nodes): %s", self.check, level, nodes,
                    ", ".join(f"{k}={v:.3e}" for k, v in residuals.items()))
        self.levels.append({"level": level, "nodes": nodes, "residuals": dict(residuals)})

    def series(self, name: str) -> List[float]:
        return [entry["residuals"][name] for entry in self.levels]

    @property
    def names(self) -> List[str]:
        return list(self.levels[0]["residuals"]) if self.levels else []

    def finest(self, name: str) -> float:
        return self.series(name)[-1]

    def is_decreasing(self, name: str, floor: float = ROUNDOFF_FLOOR) -> bool:
        values = self.series(name)
        return all(b < a or b <= floor for a, b in zip(values, values[1:]))

    def failures(self, floor: float = ROUNDOFF_FLOOR) -> List[str]:
        return [name for name in self.names if not self.is_decreasing(name, floor)]

    def require_decreasing(self, floor: float = ROUNDOFF_FLOOR):
        failing = self.failures(floor)
        if failing:
            raise ToleranceFailure(f"{self.check}: residuals of {', '.join(failing)} do not decrease under refinement")

    def to_record(self) -> dict:
        return {"check": self.check, "params": self.params, "levels": self.levels,
                "decreasing": {name: self.is_decreasing(name) for name in self.names}}


def _relative(difference: np.ndarray, reference: np.ndarray) -> float:
    scale = np.linalg.norm(reference)
    if scale == 0.0:
        return float(np.linalg.norm(difference))
    return float(np.linalg.norm(difference) / scale)


def _restrict(matrix: np.ndarray, rows: np.ndarray, cols: np.ndarray = None) -> np.ndarray:
    cols = rows if cols is None else cols
    return matrix[np.ix_(rows, cols)]


def _require_bounded(params: ParameterSet):
    if abs(params.a) >= 0.5:
        logger.warning("a=%s lies outside (-1/2, 1/2); the operators are unbounded and no tolerance applies", params.a)


def _proof_identities(C: np.ndarray, D: np.ndarray, win: np.ndarray) -> Dict[str, float]:
    """C + C D D^T = D^T and D C + D C D D^T - D D^T = 0, read on the window."""
    ddt = D @ D.T
    first = C + C @ ddt - D.T
    second = D @ C + D @ C @ ddt - ddt
    return {
        "C+CDDt-Dt": _relative(_restrict(first, win), _restrict(D.T, win)),
        "DC+DCDDt-DDt": _relative(_restrict(second, win), _restrict(ddt, win)),
    }


# ===== VERIFICATIONS =====

def verify_factorization(params: ParameterSet, spec: GridSpec = GridSpec(), levels: int = 3,
                         policy: AccuracyPolicy = DEFAULT_POLICY) -> ResidualReport:
    """K++ = C D, K-- = D C and K-+ = D C D - D against discretized C, D."""
    _require_bounded(params)
    machine = KernelMachine(params, policy)
    report = ResidualReport("factorization", params.describe())
    for level in range(levels):
        grid = spec.refine(level)
        ops = discretize_machine(machine, grid, factors=("C", "D"))
        win = spec.window(grid)
        C, D = ops.factors["C"], ops.factors["D"]
        residuals = {
            "++": _relative(_restrict(ops.blocks[BlockTag.PP] - C @ D, win), _restrict(ops.blocks[BlockTag.PP], win)),
            "--": _relative(_restrict(ops.blocks[BlockTag.MM] - D @ C, win), _restrict(ops.blocks[BlockTag.MM], win)),
            "-+": _relative(_restrict(ops.blocks[BlockTag.MP] - (D @ C @ D - D), win),
                            _restrict(ops.blocks[BlockTag.MP], win)),
        }
        residuals.update(_proof_identities(C, D, win))
        report.add_level(level, grid.size, residuals)
    return report


def l_operator(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    n = A.shape[0]
    zero = np.zeros((n, n))
    return np.block([[zero, A], [-B, zero]])


def resolvent(L: np.ndarray) -> np.ndarray:
    """L (1 + L)^-1 through a linear solve."""
    one_plus = np.eye(L.shape[0]) + L
    condition = np.linalg.cond(one_plus)
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise NearSingularError(f"1 + L is near-singular (cond={condition:.3e})")
    return linalg.solve(one_plus.T, L.T).T


def verify_resolvent(params: ParameterSet, spec: GridSpec = GridSpec(), levels: int = 3,
                     policy: AccuracyPolicy = DEFAULT_POLICY) -> ResidualReport:
    """Blockwise K against L (1 + L)^-1 with L = [[0, A], [-B, 0]]."""
    _require_bounded(params)
    machine = KernelMachine(params, policy)
    report = ResidualReport("resolvent", params.describe())
    for level in range(levels):
        grid = spec.refine(level)
        ops = discretize_machine(machine, grid)
        n = grid.size
        win = spec.window(grid)
        A, B = ops.factors["A"], ops.factors["B"]
        predicted = resolvent(l_operator(A, B))
        corners = {
            BlockTag.PP: (slice(0, n), slice(0, n)),
            BlockTag.PM: (slice(0, n), slice(n, 2 * n)),
            BlockTag.MP: (slice(n, 2 * n), slice(0, n)),
            BlockTag.MM: (slice(n, 2 * n), slice(n, 2 * n)),
        }
        residuals = {}
        for tag, (rows, cols) in corners.items():
            exact = ops.blocks[tag]
            residuals[str(tag)] = _relative(_restrict(predicted[rows, cols] - exact, win), _restrict(exact, win))
        ab = A @ B
        kpp = linalg.solve((np.eye(n) + ab).T, ab.T).T
        residuals["AB(1+AB)^-1"] = _relative(_restrict(kpp - ops.blocks[BlockTag.PP], win),
                                             _restrict(ops.blocks[BlockTag.PP], win))
        residuals.update(_proof_identities(ops.factors["C"], ops.factors["D"], win))
        report.add_level(level, n, residuals)
    return report


def commutation_check(a: float, mu1, mu2, spec: GridSpec = GridSpec(), levels: int = 3,
                      policy: AccuracyPolicy = DEFAULT_POLICY) -> ResidualReport:
    """Relative commutator norms of K(mu1), K(mu2) for the full kernel and for the K++ blocks."""
    first, second = from_a_mu(a, mu1), from_a_mu(a, mu2)
    _require_bounded(first)
    report = ResidualReport("commutation", {"a": a, "mu1": str(complex(mu1)), "mu2": str(complex(mu2))})
    for level in range(levels):
        grid = spec.refine(level)
        n = grid.size
        win = spec.window(grid)
        win2 = np.concatenate((win, win + n))
        k1 = discretize_machine(KernelMachine(first, policy), grid, factors=()).full_kernel()
        if first == second:
            k2 = k1
        else:
            k2 = discretize_machine(KernelMachine(second, policy), grid, factors=()).full_kernel()
        residuals = {}
        for name, (m1, m2, rows) in {"full": (k1, k2, win2), "++": (k1[:n, :n], k2[:n, :n], win)}.items():
            commutator = _restrict(m1 @ m2 - m2 @ m1, rows)
            scale = np.linalg.norm(_restrict(m1, rows)) * np.linalg.norm(_restrict(m2, rows))
            residuals[name] = float(np.linalg.norm(commutator) / scale) if scale > 0 else 0.0
        report.add_level(level, n, residuals)
    return report


def norm_law(params: ParameterSet, spec: GridSpec, levels: int = 3) -> ResidualReport:
    """Largest singular value of discretized A against sigma / cos(pi a)."""
    bound = multiplier_bound(params)
    machine = KernelMachine(params)
    report = ResidualReport("norms", params.describe())
    for level in range(levels):
        grid = spec.refine(level)
        A = discretize(lambda xs, ys: machine.factor_matrix("A", xs, ys), grid).matrix
        top = float(linalg.svdvals(A)[0])
        report.add_level(level, grid.size, {"deficit": (bound - top) / bound})
        report.levels[-1]["largest_singular_value"] = top
        report.levels[-1]["bound"] = bound
    return report


def fredholm_det(op: DiscretizedOperator, scale: float = 1.0, log: bool = False) -> float:
    """det(1 + scale M); the log path never overflows."""
    matrix = np.eye(op.matrix.shape[0]) + scale * op.matrix
    sign, logdet = np.linalg.slogdet(matrix)
    if log:
        if sign <= 0:
            raise NumericalError(f"det(1 + scale M) has sign {sign}; no real logarithm")
        return float(logdet)
    if logdet > 709.0:
        raise NumericalError(f"det(1 + scale M) = exp({logdet:.1f}) overflows; request the log")
    return float(sign * math.exp(logdet))
