"""Finite determinantal processes on a two-block ground set.

Kernels are dense matrices split into blocks of sizes n1 and n2. The
L-kernel gives configuration weights Prob{xi} = det L_xi / det(1 + L);
the correlation kernel K = L(1 + L)^-1 gives the correlation functions.
"""

import logging
from dataclasses import dataclass, field
from itertools import combinations, islice
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from whittaker_lab.errors import (
    DuplicatePointError,
    MissingInverseError,
    NearSingularError,
    NegativeMinorError,
    NumericalError,
    OrderCapError,
    ValidationError,
)

logger = logging.getLogger(__name__)

ORDER_CAP = 24
CONDITION_LIMIT = 1e12
SLACK = 1e-10
# subsets per batched determinant call
ENUMERATION_CHUNK = 4096


# ===== TYPES =====

@dataclass(frozen=True)
class FiniteKernel:
    entries: np.ndarray
    n1: int
    n2: int

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise ValidationError(f"kernel must be a square matrix, got shape {entries.shape}")
        if self.n1 < 0 or self.n2 < 0 or self.n1 + self.n2 != entries.shape[0]:
            raise ValidationError(f"block sizes {self.n1}+{self.n2} do not match order {entries.shape[0]}")
        object.__setattr__(self, "entries", entries)

    @property
    def order(self) -> int:
        return self.n1 + self.n2

    def block(self, i: int, j: int) -> np.ndarray:
        rows = slice(0, self.n1) if i == 1 else slice(self.n1, self.order)
        cols = slice(0, self.n1) if j == 1 else slice(self.n1, self.order)
        return self.entries[rows, cols]

    @classmethod
    def from_blocks(cls, b11, b12, b21, b22) -> "FiniteKernel":
        b11, b12, b21, b22 = (np.atleast_2d(np.asarray(b, dtype=complex)) for b in (b11, b12, b21, b22))
        return cls(np.block([[b11, b12], [b21, b22]]), b11.shape[0], b22.shape[0])

    def is_j_hermitian(self, tol: float = 1e-10) -> bool:
        """A11* = A11, A22* = A22 and A12* = -A21."""
        scale = max(1.0, float(np.max(np.abs(self.entries), initial=0.0)))
        checks = (
            self.block(1, 1) - self.block(1, 1).conj().T,
            self.block(2, 2) - self.block(2, 2).conj().T,
            self.block(1, 2).conj().T + self.block(2, 1),
        )
        return all(np.max(np.abs(c), initial=0.0) <= tol * scale for c in checks)

    def to_record(self) -> dict:
        return {
            "n1": self.n1,
            "n2": self.n2,
            "entries": [[[v.real, v.imag] for v in row] for row in self.entries],
        }

    @classmethod
    def from_record(cls, record: dict) -> "FiniteKernel":
        try:
            rows = [[complex(*v) if isinstance(v, (list, tuple)) else complex(v) for v in row]
                    for row in record["entries"]]
            return cls(np.array(rows, dtype=complex), int(record["n1"]), int(record["n2"]))
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError(f"malformed kernel record: {e}") from None


@dataclass(frozen=True)
class Configuration:
    """A subset of {0..n-1} stored as a bitmask."""

    mask: int
    order: int

    @property
    def members(self) -> Tuple[int, ...]:
        return tuple(i for i in range(self.order) if self.mask >> i & 1)

    @classmethod
    def of(cls, members: Sequence[int], order: int) -> "Configuration":
        mask = 0
        for i in members:
            if not 0 <= i < order:
                raise ValidationError(f"point {i} outside ground set of order {order}")
            mask |= 1 << i
        return cls(mask, order)

    def counts(self, n1: int) -> Tuple[int, int]:
        members = self.members
        inside = sum(1 for i in members if i < n1)
        return inside, len(members) - inside

    def is_balanced(self, n1: int) -> bool:
        first, second = self.counts(n1)
        return first == second

    def __str__(self):
        return "{" + ",".join(str(i) for i in self.members) + "}"


@dataclass
class WeightTable:
    probabilities: np.ndarray
    normalizer: float
    n1: int
    n2: int = field(default=0)

    @property
    def order(self) -> int:
        return self.n1 + self.n2

    def probability(self, members: Sequence[int]) -> float:
        return float(self.probabilities[Configuration.of(members, self.order).mask])

    def items(self):
        for mask, p in enumerate(self.probabilities):
            yield Configuration(mask, self.order), float(p)

    def inclusion_sum(self, points: Sequence[int]) -> float:
        """Brute-force sum of Prob{xi} over xi containing all points."""
        target = Configuration.of(points, self.order).mask
        masks = np.arange(self.probabilities.size)
        return float(self.probabilities[(masks & target) == target].sum())


# ===== HELPERS =====

def _condition(matrix: np.ndarray) -> float:
    if matrix.size == 0:
        return 1.0
    return float(np.linalg.cond(matrix))


def _inverse_of(matrix: np.ndarray, expression: str) -> np.ndarray:
    condition = _condition(matrix)
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise MissingInverseError(expression, condition)
    return np.linalg.inv(matrix) if matrix.size else matrix


def _eye(n: int) -> np.ndarray:
    return np.eye(n, dtype=complex)


def random_j_hermitian(n1: int, n2: int, rng: np.random.Generator, zero_diagonal: bool = False,
                       real: bool = False) -> FiniteKernel:
    """Seeded instance [[H1, M], [-M*, H2]] with H_i = G_i G_i* and M arbitrary."""
    def gaussian(rows, cols):
        values = rng.standard_normal((rows, cols))
        if not real:
            values = values + 1j * rng.standard_normal((rows, cols))
        return values

    if zero_diagonal:
        h1 = np.zeros((n1, n1))
        h2 = np.zeros((n2, n2))
    else:
        g1, g2 = gaussian(n1, n1), gaussian(n2, n2)
        h1 = g1 @ g1.conj().T / max(n1, 1)
        h2 = g2 @ g2.conj().T / max(n2, 1)
    m = gaussian(n1, n2) / np.sqrt(max(n1 + n2, 1))
    return FiniteKernel.from_blocks(h1, m, -m.conj().T, h2)


# ===== DISTRIBUTION =====

def subset_chunks(n: int, size: int, balanced_n1: Optional[int] = None,
                  chunk: Optional[int] = None) -> Iterator[List[Tuple[int, ...]]]:
    """Lists of at most ``chunk`` index tuples covering every subset of the given size.

    With ``balanced_n1`` set only subsets with equal counts below and above it are kept.
    """
    chunk = ENUMERATION_CHUNK if chunk is None else chunk
    if chunk < 1:
        raise ValidationError(f"chunk size must be positive, got {chunk}")
    subsets = combinations(range(n), size)
    if balanced_n1 is not None:
        subsets = (s for s in subsets if 2 * sum(1 for i in s if i < balanced_n1) == size)
    while True:
        batch = list(islice(subsets, chunk))
        if not batch:
            return
        yield batch


def weight_distribution(L: FiniteKernel) -> WeightTable:
    """Prob{xi} = det L_xi / det(1 + L) for every configuration xi."""
    n = L.order
    if n > ORDER_CAP:
        raise OrderCapError(f"order {n} exceeds the enumeration cap {ORDER_CAP}")
    one_plus = _eye(n) + L.entries
    condition = _condition(one_plus)
    if condition > CONDITION_LIMIT:
        raise NearSingularError(f"1 + L is near-singular (cond={condition:.3e})")
    normalizer = np.linalg.det(one_plus)
    if abs(normalizer.imag) > 1e-10 * max(1.0, abs(normalizer)) or normalizer.real <= 0:
        raise NumericalError(f"det(1 + L) = {normalizer} is not real positive")
    normalizer = normalizer.real

    # zero diagonal blocks force the minor of every unbalanced configuration to vanish
    structural = n > 0 and not np.any(L.block(1, 1)) and not np.any(L.block(2, 2))

    minors = np.zeros(1 << n)
    minors[0] = 1.0
    for size in range(1, n + 1):
        for chunk in subset_chunks(n, size, L.n1 if structural else None):
            index = np.array(chunk)
            values = np.linalg.det(L.entries[index[:, :, None], index[:, None, :]])
            masks = (1 << index).sum(axis=1)
            for subset, mask, value in zip(chunk, masks, values):
                if abs(value.imag) > SLACK * max(1.0, abs(value)) or value.real < -SLACK:
                    raise NegativeMinorError(subset, value)
                minors[mask] = max(value.real, 0.0)
    probabilities = minors / normalizer
    total = probabilities.sum()
    if abs(total - 1.0) > 1e-8:
        raise NumericalError(f"configuration weights sum to {total}, not 1")
    logger.debug("enumerated %d configurations of order %d", 1 << n, n)
    return WeightTable(probabilities=probabilities, normalizer=float(normalizer), n1=L.n1, n2=L.n2)


def correlation(K: FiniteKernel, points: Sequence[int]) -> complex:
    """rho_n(x_1..x_n) = det[K(x_i, x_j)]."""
    points = list(points)
    if len(set(points)) != len(points):
        raise DuplicatePointError(f"points must be distinct, got {points}")
    for i in points:
        if not 0 <= i < K.order:
            raise ValidationError(f"point {i} outside ground set of order {K.order}")
    if not points:
        return 1.0 + 0.0j
    return complex(np.linalg.det(K.entries[np.ix_(points, points)]))


def sample(table: WeightTable, seed: int, count: int) -> List[Configuration]:
    """I.i.d. exact draws from the enumerated weights."""
    rng = np.random.default_rng(seed)
    p = table.probabilities / table.probabilities.sum()
    masks = rng.choice(p.size, size=count, p=p)
    return [Configuration(int(mask), table.order) for mask in masks]


# ===== TRANSFORMS =====

def k_from_l(L: FiniteKernel) -> FiniteKernel:
    """K = L(1 + L)^-1; L and (1 + L)^-1 commute."""
    one_plus = _eye(L.order) + L.entries
    if _condition(one_plus) > CONDITION_LIMIT:
        raise NearSingularError("1 + L is near-singular")
    return FiniteKernel(np.linalg.solve(one_plus, L.entries), L.n1, L.n2)


def l_from_k(K: FiniteKernel) -> FiniteKernel:
    one_minus = _eye(K.order) - K.entries
    if _condition(one_minus) > CONDITION_LIMIT:
        raise NearSingularError("1 - K is near-singular")
    return FiniteKernel(np.linalg.solve(one_minus, K.entries), K.n1, K.n2)


def block_k_from_l(L: FiniteKernel) -> FiniteKernel:
    """Blockwise L -> K through the Schur complements of 1 + L."""
    l11, l12, l21, l22 = L.block(1, 1), L.block(1, 2), L.block(2, 1), L.block(2, 2)
    e1, e2 = _eye(L.n1), _eye(L.n2)
    inv22 = _inverse_of(e2 + l22, "1 + L22")
    inv11 = _inverse_of(e1 + l11, "1 + L11")
    p11 = l11 - l12 @ inv22 @ l21
    p22 = l22 - l21 @ inv11 @ l12
    k11 = p11 @ _inverse_of(e1 + p11, "1 + L11 - L12(1 + L22)^-1 L21")
    k22 = p22 @ _inverse_of(e2 + p22, "1 + L22 - L21(1 + L11)^-1 L12")
    k12 = (e1 - k11) @ l12 @ inv22
    k21 = (e2 - k22) @ l21 @ inv11
    return FiniteKernel.from_blocks(k11, k12, k21, k22)


def block_l_from_k(K: FiniteKernel) -> FiniteKernel:
    """Blockwise K -> L via Q11 = K11 + K12(1 - K22)^-1 K21 and L11 = Q11(1 - Q11)^-1."""
    k11, k12, k21, k22 = K.block(1, 1), K.block(1, 2), K.block(2, 1), K.block(2, 2)
    e1, e2 = _eye(K.n1), _eye(K.n2)
    inv22 = _inverse_of(e2 - k22, "1 - K22")
    inv11 = _inverse_of(e1 - k11, "1 - K11")
    q11 = k11 + k12 @ inv22 @ k21
    q22 = k22 + k21 @ inv11 @ k12
    l11 = q11 @ _inverse_of(e1 - q11, "1 - K11 - K12(1 - K22)^-1 K21")
    l22 = q22 @ _inverse_of(e2 - q22, "1 - K22 - K21(1 - K11)^-1 K12")
    l12 = (e1 + l11) @ k12 @ inv22
    l21 = (e2 + l22) @ k21 @ inv11
    return FiniteKernel.from_blocks(l11, l12, l21, l22)


def bijection_conditions(K: FiniteKernel) -> Dict[str, object]:
    """Smallest eigenvalues behind K11 < 1, K22 < 1 and the two Schur inequalities."""
    k11, k12, k21, k22 = K.block(1, 1), K.block(1, 2), K.block(2, 1), K.block(2, 2)
    e1, e2 = _eye(K.n1), _eye(K.n2)

    def lowest(matrix):
        if matrix.size == 0:
            return float("inf")
        hermitian = 0.5 * (matrix + matrix.conj().T)
        return float(np.linalg.eigvalsh(hermitian)[0])

    q11 = k11 + k12 @ _inverse_of(e2 - k22, "1 - K22") @ k21
    q22 = k22 + k21 @ _inverse_of(e1 - k11, "1 - K11") @ k12
    report = {
        "one_minus_k11": lowest(e1 - k11),
        "one_minus_k22": lowest(e2 - k22),
        "schur_11": lowest(q11),
        "schur_22": lowest(q22),
    }
    report["holds"] = (report["one_minus_k11"] > 0 and report["one_minus_k22"] > 0
                       and report["schur_11"] >= -SLACK and report["schur_22"] >= -SLACK)
    return report


@dataclass
class CanonicalPair:
    L: FiniteKernel
    K: FiniteKernel
    C: np.ndarray
    D: np.ndarray
    residuals: Dict[str, float]


def _relative(difference: np.ndarray, reference: np.ndarray) -> float:
    scale = max(np.linalg.norm(reference), 1.0)
    return float(np.linalg.norm(difference) / scale)


def canonical_pair(A, B) -> CanonicalPair:
    """L = [[0, A], [-B, 0]] and K = [[CD, C], [DCD - D, DC]] with C = (1 + AB)^-1 A, D = B."""
    A = np.atleast_2d(np.asarray(A, dtype=complex))
    B = np.atleast_2d(np.asarray(B, dtype=complex))
    n1, n2 = A.shape
    if B.shape != (n2, n1):
        raise ValidationError(f"B must have shape {(n2, n1)}, got {B.shape}")
    e1, e2 = _eye(n1), _eye(n2)
    inv_ab = _inverse_of(e1 + A @ B, "1 + AB")
    inv_ba = _inverse_of(e2 + B @ A, "1 + BA")
    C = inv_ab @ A
    D = B
    L = FiniteKernel.from_blocks(np.zeros((n1, n1)), A, -B, np.zeros((n2, n2)))
    K = FiniteKernel.from_blocks(C @ D, C, D @ C @ D - D, D @ C)
    explicit = FiniteKernel.from_blocks(A @ B @ inv_ab, inv_ab @ A, -inv_ba @ B, B @ A @ inv_ba)
    one_minus_dc = _inverse_of(e2 - D @ C, "1 - DC")
    one_minus_cd = _inverse_of(e1 - C @ D, "1 - CD")
    residuals = {
        "one_minus_cd": _relative(e1 - C @ D - inv_ab, inv_ab),
        "one_minus_dc": _relative(e2 - D @ C - inv_ba, inv_ba),
        "push_through": _relative(A @ inv_ba - C, C),
        "explicit_form": _relative(K.entries - explicit.entries, explicit.entries),
        "global_transform": _relative(K.entries - k_from_l(L).entries, K.entries),
        "recover_right": _relative(C @ one_minus_dc - A, A),
        "recover_left": _relative(one_minus_cd @ C - A, A),
    }
    # X(1 - YX)^-1 = (1 - XY)^-1 X, checked only where both inverses exist
    try:
        left = A @ _inverse_of(e2 - B @ A, "1 - BA")
        right = _inverse_of(e1 - A @ B, "1 - AB") @ A
    except MissingInverseError as err:
        logger.debug("minus-sign push-through skipped: %s", err)
    else:
        residuals["push_through_minus"] = _relative(left - right, right)
    return CanonicalPair(L=L, K=K, C=C, D=D, residuals=residuals)


def truncate(L: FiniteKernel, Y: Sequence[int]) -> FiniteKernel:
    """L_YY - L_YY'(1 + L_Y'Y')^-1 L_Y'Y for the complement Y'."""
    keep = sorted(set(Y))
    for i in keep:
        if not 0 <= i < L.order:
            raise ValidationError(f"point {i} outside ground set of order {L.order}")
    drop = [i for i in range(L.order) if i not in keep]
    n1 = sum(1 for i in keep if i < L.n1)
    if not keep:
        return FiniteKernel(np.zeros((0, 0), dtype=complex), 0, 0)
    lyy = L.entries[np.ix_(keep, keep)]
    if not drop:
        return FiniteKernel(lyy.copy(), n1, len(keep) - n1)
    lyd = L.entries[np.ix_(keep, drop)]
    ldy = L.entries[np.ix_(drop, keep)]
    ldd = L.entries[np.ix_(drop, drop)]
    one_plus = _eye(len(drop)) + ldd
    if _condition(one_plus) > CONDITION_LIMIT:
        raise NearSingularError("1 + L restricted to the complement is near-singular")
    return FiniteKernel(lyy - lyd @ np.linalg.solve(one_plus, ldy), n1, len(keep) - n1)
