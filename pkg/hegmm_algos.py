"""
Homomorphic general matrix multiplication over a packed-slot backend.

``hegmm`` runs one ciphertext multiplication per inner dimension index.
``hegmm_en`` duplicates the thinnest operand so that one ciphertext
multiplication yields several partial products, needing only
``min(m, l, n)`` of them. ``square_pad_mm`` is the zero-padding baseline and
``blocked_mm`` tiles matrices that exceed the slot count.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property
from enum import Enum
import logging
import math

from hegemm_errors import CapacityError, DimensionMismatchError
from lintrans import TransformKind, apply_plan, plan_for
from matrix_core import (
    FlatVector,
    FlattenOrder,
    Matrix,
    duplicate_horizontal,
    duplicate_vertical,
    eps,
    flatten,
    omega,
    sigma,
    tau,
    unflatten,
)
from simd_backend import Ciphertext, HeBackend, OpStats, Phase

log = logging.getLogger(__name__)


class Algorithm(Enum):
    HEGMM = "hegmm"
    HEGMM_EN = "hegmm-en"
    SQUARE_PAD = "square-pad"

    @classmethod
    def parse(cls, text: str) -> Algorithm:
        for algorithm in cls:
            if text.lower().replace("_", "-") == algorithm.value:
                return algorithm
        raise ValueError(f"Unknown algorithm '{text}'")


class Duplication(Enum):
    NONE = "none"
    A_VERTICAL = "A-vertical"
    B_HORIZONTAL = "B-horizontal"


def _dims(a: Matrix, b: Matrix) -> tuple[int, int, int]:
    if a.cols != b.rows:
        raise DimensionMismatchError(f"Cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}")
    return a.rows, a.cols, b.cols


def _require_capacity(segment_length: int, backend: HeBackend, what: str):
    slot_count = backend.config.slot_count
    if segment_length > slot_count:
        raise CapacityError(f"{what} needs {segment_length} slots, backend has {slot_count}")


@dataclass(frozen=True)
class StrategyDescriptor:
    """
    Operand duplication chosen for ``C(m x n) = A(m x l) * B(l x n)``.

    The thinnest dimension ``p`` decides which operand is stacked ``t`` times;
    the product is then computed on an ``working_rows x working_cols`` layout.
    """

    m: int
    l: int
    n: int
    p: int
    t: int
    duplicated: Duplication
    order: FlattenOrder
    working_rows: int
    working_cols: int

    @property
    def copies(self) -> int:
        return 1 if self.duplicated is Duplication.NONE else self.t

    @property
    def eps_extent(self) -> int:
        """Column count of the shaped left operand."""
        return max(self.l, self.working_cols)

    @property
    def omega_extent(self) -> int:
        """Row count of the shaped right operand."""
        return max(self.l, self.working_rows)

    @property
    def segment_length(self) -> int:
        return self.omega_extent * self.eps_extent

    def with_order(self, order: FlattenOrder) -> StrategyDescriptor:
        if order is self.order:
            return self
        return replace(self, order=order)

    def block_stride(self) -> int:
        """Slot distance between consecutive block copies in the flattened product."""
        rows, cols = self.working_rows, self.working_cols
        column_major = self.order is FlattenOrder.COLUMN_MAJOR
        if self.duplicated is Duplication.A_VERTICAL:
            return self.m if column_major else self.m * cols
        if self.duplicated is Duplication.B_HORIZONTAL:
            return self.n * rows if column_major else self.n
        return 0

    def partial_indices(self, k: int) -> list[int]:
        """Partial product index held by each block after iteration ``k``."""
        return [(k + h * self.p) % self.l for h in range(self.copies)]

    def kept_blocks(self, k: int) -> list[int]:
        """Blocks of iteration ``k`` whose partial product was not accumulated before."""
        seen = {j for previous in range(k) for j in self.partial_indices(previous)}
        kept = []
        for h, j in enumerate(self.partial_indices(k)):
            if j not in seen:
                kept.append(h)
                seen.add(j)
        return kept

    def eps_kind(self, k: int) -> TransformKind:
        extent = self.eps_extent if self.eps_extent != self.l else None
        return TransformKind.eps(k, self.working_rows, self.l, self.working_cols, self.order, extent)

    def omega_kind(self, k: int) -> TransformKind:
        extent = self.omega_extent if self.omega_extent != self.l else None
        return TransformKind.omega(k, self.l, self.working_rows, self.working_cols, self.order, extent)

    @cached_property
    def predicted(self) -> OpStats:
        """Cloud operation counts a run of this strategy performs."""
        stats = OpStats()
        segment_length = self.segment_length
        for k in range(self.p):
            for kind in (self.eps_kind(k), self.omega_kind(k)):
                plan = plan_for(kind, segment_length)
                stats.cloud_mult_cp += len(plan)
                stats.cloud_add += len(plan) - 1
                stats.cloud_rot += sum(1 for offset in plan.offsets if offset != 0)
            folds = len(self.kept_blocks(k)) - 1
            stats.cloud_mult_cc += 1
            stats.cloud_rot += folds
            stats.cloud_add += folds + 1
        return stats


def _duplication(m: int, l: int, n: int):
    if min(m, l, n) < 1:
        raise DimensionMismatchError(f"Dimensions must be positive, got ({m}, {l}, {n})")
    p = min(m, l, n)
    t = math.ceil(l / p)
    if p == l:
        return p, t, Duplication.NONE, FlattenOrder.COLUMN_MAJOR, m, n
    if p == m:
        return p, t, Duplication.A_VERTICAL, FlattenOrder.COLUMN_MAJOR, t * m, n
    return p, t, Duplication.B_HORIZONTAL, FlattenOrder.ROW_MAJOR, m, t * n


def select_strategy(m: int, l: int, n: int, order: FlattenOrder | None = None) -> StrategyDescriptor:
    """
    Pick the operand to duplicate.

    No duplication when ``l`` is minimal, otherwise ``A`` is stacked vertically
    when ``m`` is minimal (column-major) and ``B`` horizontally when ``n`` is
    (row-major). ``order`` overrides the flatten order.
    """
    p, t, duplicated, default_order, rows, cols = _duplication(m, l, n)
    strategy = StrategyDescriptor(m, l, n, p, t, duplicated, order or default_order, rows, cols)
    log.debug("Strategy for (%d, %d, %d): p=%d t=%d %s %s", m, l, n, p, t, duplicated.value, strategy.order.name)
    return strategy


def working_segment(algorithm: Algorithm, m: int, l: int, n: int) -> int:
    """Slots one run of ``algorithm`` needs for the given dimensions."""
    if algorithm is Algorithm.HEGMM:
        return max(m * l, l * n, m * n)
    if algorithm is Algorithm.SQUARE_PAD:
        return max(m, l, n) ** 2
    _, _, _, _, rows, cols = _duplication(m, l, n)
    return max(l, rows) * max(l, cols)


def fits(algorithm: Algorithm, m: int, l: int, n: int, slot_count: int) -> bool:
    return working_segment(algorithm, m, l, n) <= slot_count


def _encrypt_matrix(backend: HeBackend, matrix: Matrix, order: FlattenOrder, segment_length: int) -> Ciphertext:
    return backend.encrypt(flatten(matrix, order), segment_length)


def _decrypt_matrix(backend: HeBackend, ct: Ciphertext, rows: int, cols: int, order: FlattenOrder) -> Matrix:
    values = backend.decrypt(ct).values[: rows * cols]
    return unflatten(FlatVector(values, rows, cols, order))


def hegmm(
    a: Matrix,
    b: Matrix,
    backend: HeBackend,
    order: FlattenOrder = FlattenOrder.COLUMN_MAJOR,
    encrypted_preprocessing: bool = False,
) -> Matrix:
    """
    Multiply with ``l`` ciphertext multiplications.

    The client rotates rows of ``A`` (sigma) and columns of ``B`` (tau) and
    encrypts both; the cloud sums ``eps^k(ct_A) * omega^k(ct_B)`` over
    ``k < l``; the client decrypts.

    :param Matrix a: Left operand, ``m x l``.
    :param Matrix b: Right operand, ``l x n``.
    :param HeBackend backend: Backend charged for every operation.
    :param FlattenOrder order: Slot order of all ciphertexts.
    :param bool encrypted_preprocessing: Apply sigma and tau to the ciphertexts
        with their diagonal plans instead of to the plaintexts.
    :raises DimensionMismatchError: If ``a.cols != b.rows``.
    :raises CapacityError: If ``max(ml, ln, mn)`` exceeds the slot count.
    :return Matrix: The exact product, reduced by the plaintext modulus if one is set.
    """
    m, l, n = _dims(a, b)
    segment_length = working_segment(Algorithm.HEGMM, m, l, n)
    _require_capacity(segment_length, backend, f"hegmm ({m}, {l}, {n})")

    with backend.phase(Phase.CLIENT):
        if encrypted_preprocessing:
            ct_a = _encrypt_matrix(backend, a, order, segment_length)
            ct_b = _encrypt_matrix(backend, b, order, segment_length)
            ct_a = apply_plan(ct_a, plan_for(TransformKind.sigma(m, l, order), segment_length), backend)
            ct_b = apply_plan(ct_b, plan_for(TransformKind.tau(l, n, order), segment_length), backend)
        else:
            ct_a = _encrypt_matrix(backend, sigma(a), order, segment_length)
            ct_b = _encrypt_matrix(backend, tau(b), order, segment_length)

    with backend.phase(Phase.CLOUD):
        result = backend.zeros(segment_length)
        for k in range(l):
            ct_eps = apply_plan(ct_a, plan_for(TransformKind.eps(k, m, l, n, order), segment_length), backend)
            ct_omega = apply_plan(ct_b, plan_for(TransformKind.omega(k, l, m, n, order), segment_length), backend)
            result = backend.he_add(result, backend.he_mult(ct_eps, ct_omega))

    with backend.phase(Phase.CLIENT):
        return _decrypt_matrix(backend, result, m, n, order)


def shape_operands(a: Matrix, b: Matrix, strategy: StrategyDescriptor) -> tuple[Matrix, Matrix]:
    """Duplicate, rotate and widen both operands in cleartext for ``hegmm_en``."""
    if strategy.duplicated is Duplication.A_VERTICAL:
        a = duplicate_vertical(a, strategy.t)
    elif strategy.duplicated is Duplication.B_HORIZONTAL:
        b = duplicate_horizontal(b, strategy.t)
    rows, cols = strategy.working_rows, strategy.working_cols
    shaped_a = eps(sigma(a), 0, rows, strategy.eps_extent)
    shaped_b = omega(tau(b), 0, strategy.omega_extent, cols)
    return shaped_a, shaped_b


def stacked_partial_product(a: Matrix, b: Matrix, strategy: StrategyDescriptor, k: int, modulus: int | None = None) -> Matrix:
    """
    Cleartext counterpart of one ``hegmm_en`` ciphertext multiplication.

    Block ``h`` of the result equals partial product ``(k + h*p) mod l``.
    """
    shaped_a, shaped_b = shape_operands(a, b, strategy)
    rows, cols = strategy.working_rows, strategy.working_cols
    left = Matrix.from_rows(shaped_a.array[:, [(j + k) % strategy.l for j in range(cols)]])
    right = Matrix.from_rows(shaped_b.array[[(i + k) % strategy.l for i in range(rows)], :])
    return left.hadamard(right, modulus)


def block_of(product: Matrix, strategy: StrategyDescriptor, h: int) -> Matrix:
    """Block ``h`` (``m x n``) of a stacked product."""
    m, n = strategy.m, strategy.n
    if strategy.duplicated is Duplication.A_VERTICAL:
        return product.submatrix(h * m, (h + 1) * m, 0, n)
    if strategy.duplicated is Duplication.B_HORIZONTAL:
        return product.submatrix(0, m, h * n, (h + 1) * n)
    if h != 0:
        raise ValueError(f"Block {h} requested without duplication")
    return product.crop(m, n)


def hegmm_en(a: Matrix, b: Matrix, backend: HeBackend, order: FlattenOrder | None = None) -> Matrix:
    """
    Multiply with ``min(m, l, n)`` ciphertext multiplications.

    The thin operand is stacked ``t = ceil(l/p)`` times, so each ciphertext
    product holds ``t`` partial products in separate blocks. Blocks whose
    partial product was already accumulated are skipped, the rest are rotated
    onto block 0 and added.

    :param Matrix a: Left operand, ``m x l``.
    :param Matrix b: Right operand, ``l x n``.
    :param HeBackend backend: Backend charged for every operation.
    :param FlattenOrder order: Overrides the strategy's flatten order.
    :raises DimensionMismatchError: If ``a.cols != b.rows``.
    :raises CapacityError: If the shaped operands exceed the slot count.
    :return Matrix: The exact product.
    """
    m, l, n = _dims(a, b)
    _require_capacity(working_segment(Algorithm.HEGMM_EN, m, l, n), backend, f"hegmm-en ({m}, {l}, {n})")
    strategy = select_strategy(m, l, n, order)
    segment_length = strategy.segment_length
    order = strategy.order
    stride = strategy.block_stride()

    with backend.phase(Phase.CLIENT):
        shaped_a, shaped_b = shape_operands(a, b, strategy)
        ct_a = _encrypt_matrix(backend, shaped_a, order, segment_length)
        ct_b = _encrypt_matrix(backend, shaped_b, order, segment_length)

    with backend.phase(Phase.CLOUD):
        result = backend.zeros(segment_length)
        for k in range(strategy.p):
            ct_eps = apply_plan(ct_a, plan_for(strategy.eps_kind(k), segment_length), backend)
            ct_omega = apply_plan(ct_b, plan_for(strategy.omega_kind(k), segment_length), backend)
            stacked = backend.he_mult(ct_eps, ct_omega)
            kept = strategy.kept_blocks(k)
            log.debug("hegmm-en k=%d partials %s kept blocks %s", k, strategy.partial_indices(k), kept)
            folded = stacked
            for h in kept[1:]:
                folded = backend.he_add(folded, backend.he_rot(stacked, h * stride))
            result = backend.he_add(result, folded)

    with backend.phase(Phase.CLIENT):
        product = _decrypt_matrix(backend, result, strategy.working_rows, strategy.working_cols, order)
    return product.crop(m, n)


def square_pad_mm(a: Matrix, b: Matrix, backend: HeBackend, order: FlattenOrder = FlattenOrder.COLUMN_MAJOR) -> Matrix:
    """Zero-pad both operands to ``d = max(m, l, n)`` squares and run ``hegmm``."""
    m, l, n = _dims(a, b)
    d = max(m, l, n)
    _require_capacity(d * d, backend, f"square-pad ({m}, {l}, {n})")
    return hegmm(a.pad(d, d), b.pad(d, d), backend, order).crop(m, n)


def multiply(
    algorithm: Algorithm, a: Matrix, b: Matrix, backend: HeBackend, order: FlattenOrder | None = None
) -> Matrix:
    """Run ``algorithm``; ``order=None`` picks its default flatten order."""
    if algorithm is Algorithm.HEGMM_EN:
        return hegmm_en(a, b, backend, order)
    if algorithm is Algorithm.SQUARE_PAD:
        return square_pad_mm(a, b, backend, order or FlattenOrder.COLUMN_MAJOR)
    return hegmm(a, b, backend, order or FlattenOrder.COLUMN_MAJOR)


def _check_cuts(cuts: tuple[int, ...], size: int, what: str):
    if len(cuts) < 2 or cuts[0] != 0 or cuts[-1] != size:
        raise DimensionMismatchError(f"{what} cuts {list(cuts)} must start at 0 and end at {size}")
    if any(lo >= hi for lo, hi in zip(cuts, cuts[1:])):
        raise DimensionMismatchError(f"{what} cuts {list(cuts)} must be strictly increasing")


@dataclass(frozen=True)
class BlockAssignment:
    rows: tuple[int, int]
    inner: tuple[int, int]
    cols: tuple[int, int]
    algorithm: Algorithm

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.rows[1] - self.rows[0], self.inner[1] - self.inner[0], self.cols[1] - self.cols[0]


@dataclass(frozen=True)
class BlockPlan:
    """
    Tiling of ``A (m x l)`` and ``B (l x n)`` by cut positions.

    ``row_cuts`` split the rows of ``A``, ``inner_cuts`` the shared dimension
    and ``col_cuts`` the columns of ``B``.
    """

    row_cuts: tuple[int, ...]
    inner_cuts: tuple[int, ...]
    col_cuts: tuple[int, ...]

    def __post_init__(self):
        for name in ("row_cuts", "inner_cuts", "col_cuts"):
            object.__setattr__(self, name, tuple(int(cut) for cut in getattr(self, name)))

    @staticmethod
    def _halves(size: int) -> tuple[int, ...]:
        return (0, size) if size < 2 else (0, (size + 1) // 2, size)

    @staticmethod
    def _split_at(size: int, cut: int) -> tuple[int, ...]:
        return (0, size) if size <= cut else (0, cut, size)

    @classmethod
    def p1(cls, m: int, l: int, n: int) -> BlockPlan:
        """Halve every dimension: four 50x50 tiles per 100x100 operand."""
        return cls(cls._halves(m), cls._halves(l), cls._halves(n))

    @classmethod
    def p2(cls, m: int, l: int, n: int, cut: int = 64) -> BlockPlan:
        """Split every dimension at ``cut``: 64x64, 64x36, 36x64 and 36x36 tiles per 100x100 operand."""
        return cls(cls._split_at(m, cut), cls._split_at(l, cut), cls._split_at(n, cut))

    @classmethod
    def single(cls, m: int, l: int, n: int) -> BlockPlan:
        return cls((0, m), (0, l), (0, n))

    def validate(self, m: int, l: int, n: int):
        _check_cuts(self.row_cuts, m, "Row")
        _check_cuts(self.inner_cuts, l, "Inner")
        _check_cuts(self.col_cuts, n, "Column")

    def assign(self, algorithm: Algorithm, slot_count: int) -> list[BlockAssignment]:
        """
        Choose the algorithm of every block product.

        A block that does not fit ``algorithm`` falls back to ``hegmm``.

        :raises CapacityError: If a block fits neither.
        """
        assignments = []
        for rows in zip(self.row_cuts, self.row_cuts[1:]):
            for cols in zip(self.col_cuts, self.col_cuts[1:]):
                for inner in zip(self.inner_cuts, self.inner_cuts[1:]):
                    dims = rows[1] - rows[0], inner[1] - inner[0], cols[1] - cols[0]
                    chosen = algorithm
                    if not fits(algorithm, *dims, slot_count):
                        if not fits(Algorithm.HEGMM, *dims, slot_count):
                            raise CapacityError(f"Block {dims} does not fit {slot_count} slots")
                        log.warning("Block %s does not fit %s, using %s", dims, algorithm.value, Algorithm.HEGMM.value)
                        chosen = Algorithm.HEGMM
                    assignments.append(BlockAssignment(rows, inner, cols, chosen))
        return assignments


def blocked_mm(
    a: Matrix,
    b: Matrix,
    plan: BlockPlan,
    algorithm: Algorithm,
    backend: HeBackend,
    order: FlattenOrder | None = None,
) -> Matrix:
    """
    Multiply tile by tile and sum the tile products per output block.

    :raises DimensionMismatchError: If the plan does not tile ``a`` and ``b``.
    :raises CapacityError: If a block fits no algorithm.
    """
    m, l, n = _dims(a, b)
    plan.validate(m, l, n)
    modulus = backend.config.plaintext_modulus
    blocks = {}
    for assignment in plan.assign(algorithm, backend.config.slot_count):
        (r0, r1), (i0, i1), (c0, c1) = assignment.rows, assignment.inner, assignment.cols
        product = multiply(assignment.algorithm, a.submatrix(r0, r1, i0, i1), b.submatrix(i0, i1, c0, c1), backend, order)
        key = (assignment.rows, assignment.cols)
        blocks[key] = product if key not in blocks else blocks[key].add(product, modulus)

    result = Matrix.zeros(m, n).array.copy()
    for ((r0, r1), (c0, c1)), block in blocks.items():
        result[r0:r1, c0:c1] = block.array
    return Matrix.from_rows(result)
