"""
Transformation matrices of sigma, tau, eps and omega and their diagonal plans.

A transform on a flattened matrix is a 0/1 matrix U with one 1 per output
row. Its non-zero generalized diagonals (entries with constant ``col - row``)
give a plan of (offset, mask) pairs, and ``U @ v`` becomes
``sum(mask_z * Rot(v, z))``: one rotation and one plaintext multiplication per
diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
import logging
import threading

import numpy as np

from hegemm_errors import DimensionMismatchError
from matrix_core import FlattenOrder, Matrix, eps, omega, sigma, tau
from simd_backend import Ciphertext, HeBackend

log = logging.getLogger(__name__)


class Transform(Enum):
    SIGMA = "sigma"
    TAU = "tau"
    EPS = "eps"
    OMEGA = "omega"


@dataclass(frozen=True)
class TransformKind:
    """
    Selects one transformation matrix.

    Dimensions follow ``C(m x n) = A(m x l) * B(l x n)``. ``extent`` is the
    column count of the eps source (row count of the omega source) when the
    operand was widened beyond ``l`` columns (rows). A widened source repeats
    with period ``l``, so a shift reads the last stored copy of each index.
    """

    transform: Transform
    m: int
    l: int
    n: int
    order: FlattenOrder = FlattenOrder.COLUMN_MAJOR
    k: int = 0
    extent: int | None = None

    def __post_init__(self):
        if min(self.m, self.l, self.n) < 1:
            raise ValueError(f"Dimensions must be positive, got m={self.m} l={self.l} n={self.n}")
        if not 0 <= self.k < self.l:
            raise ValueError(f"Shift k={self.k} outside [0, {self.l})")
        if self.extent is not None:
            if self.transform not in (Transform.EPS, Transform.OMEGA):
                raise ValueError("Only eps and omega take a source extent")
            if self.extent < self.l:
                raise ValueError(f"Source extent {self.extent} smaller than l={self.l}")

    @classmethod
    def sigma(cls, m: int, l: int, order: FlattenOrder = FlattenOrder.COLUMN_MAJOR) -> TransformKind:
        return cls(Transform.SIGMA, m=m, l=l, n=l, order=order)

    @classmethod
    def tau(cls, l: int, n: int, order: FlattenOrder = FlattenOrder.COLUMN_MAJOR) -> TransformKind:
        return cls(Transform.TAU, m=l, l=l, n=n, order=order)

    @classmethod
    def eps(
        cls, k: int, m: int, l: int, n: int, order: FlattenOrder = FlattenOrder.COLUMN_MAJOR, extent: int | None = None
    ) -> TransformKind:
        return cls(Transform.EPS, m=m, l=l, n=n, order=order, k=k, extent=extent)

    @classmethod
    def omega(
        cls, k: int, l: int, m: int, n: int, order: FlattenOrder = FlattenOrder.COLUMN_MAJOR, extent: int | None = None
    ) -> TransformKind:
        return cls(Transform.OMEGA, m=m, l=l, n=n, order=order, k=k, extent=extent)

    @property
    def source_shape(self) -> tuple[int, int]:
        if self.transform is Transform.SIGMA:
            return self.m, self.l
        if self.transform is Transform.TAU:
            return self.l, self.n
        if self.transform is Transform.EPS:
            return self.m, self.extent or self.l
        return self.extent or self.l, self.n

    @property
    def target_shape(self) -> tuple[int, int]:
        if self.transform is Transform.SIGMA:
            return self.m, self.l
        if self.transform is Transform.TAU:
            return self.l, self.n
        return self.m, self.n

    @property
    def input_len(self) -> int:
        rows, cols = self.source_shape
        return rows * cols

    @property
    def output_len(self) -> int:
        rows, cols = self.target_shape
        return rows * cols

    def describe(self) -> str:
        rows, cols = self.target_shape
        shift = f"^{self.k}" if self.transform in (Transform.EPS, Transform.OMEGA) else ""
        return f"{self.transform.value}{shift}_{rows}x{cols} ({self.order.name.lower()})"

    def source_positions(self) -> np.ndarray:
        """For every flattened output position, the flattened input position it reads."""
        rows, cols = self.target_shape
        i, j = np.indices((rows, cols))
        l = self.l
        source_rows, source_cols = self.source_shape
        if self.transform is Transform.SIGMA:
            si, sj = i, (i + j) % l
        elif self.transform is Transform.TAU:
            si, sj = (i + j) % l, j
        elif self.transform is Transform.EPS:
            si, sj = i, _shifted(j, self.k, l, source_cols)
        else:
            si, sj = _shifted(i, self.k, l, source_rows), j
        if self.order is FlattenOrder.COLUMN_MAJOR:
            source = si + sj * source_rows
            target = i + j * rows
        else:
            source = si * source_cols + sj
            target = i * cols + j
        positions = np.empty(rows * cols, dtype=np.int64)
        positions[target.reshape(-1)] = source.reshape(-1)
        return positions


def _shifted(index: np.ndarray, k: int, l: int, extent: int) -> np.ndarray:
    """Largest source index below ``extent`` congruent to ``index + k`` modulo ``l``."""
    shifted = index + k
    overshoot = np.maximum(shifted - extent + 1, 0)
    return shifted - l * (-(-overshoot // l))


@dataclass(frozen=True, eq=False)
class PermutationMatrix:
    """Dense 0/1 transformation matrix, ``rows`` outputs by ``cols`` inputs."""

    rows: int
    cols: int
    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=np.int8)
        if entries.shape != (self.rows, self.cols):
            raise DimensionMismatchError(f"Entries of shape {entries.shape} for a {self.rows}x{self.cols} matrix")
        if entries.size and ((entries != 0) & (entries != 1)).any():
            raise ValueError("Permutation matrix entries must be 0 or 1")
        if (entries.sum(axis=1) > 1).any():
            raise ValueError("Every output may read at most one input")
        entries.flags.writeable = False
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_positions(cls, positions: np.ndarray, input_len: int) -> PermutationMatrix:
        entries = np.zeros((positions.size, input_len), dtype=np.int8)
        entries[np.arange(positions.size), positions] = 1
        return cls(positions.size, input_len, entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PermutationMatrix):
            return NotImplemented
        return (self.rows, self.cols) == (other.rows, other.cols) and np.array_equal(self.entries, other.entries)

    __hash__ = None

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.entries.astype(np.int64) @ np.asarray(values, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class DiagonalEntry:
    offset: int
    mask: np.ndarray

    @property
    def weight(self) -> int:
        return int(self.mask.sum())


@dataclass(frozen=True, eq=False)
class DiagonalPlan:
    """
    Non-zero generalized diagonals of a transformation matrix.

    ``entries`` are sorted by offset; mask ``i`` is 1 where output ``i`` reads
    input ``i + offset``.
    """

    entries: tuple[DiagonalEntry, ...]
    input_len: int
    output_len: int

    def __post_init__(self):
        offsets = [entry.offset for entry in self.entries]
        if len(set(offsets)) != len(offsets):
            raise ValueError("Diagonal offsets must be distinct")
        for entry in self.entries:
            if not -self.output_len < entry.offset < self.input_len:
                raise ValueError(f"Offset {entry.offset} outside (-{self.output_len}, {self.input_len})")
            if entry.mask.size != self.output_len:
                raise DimensionMismatchError(f"Mask of {entry.mask.size} values for {self.output_len} outputs")
            if not entry.mask.any():
                raise ValueError(f"Diagonal {entry.offset} is empty")

    @classmethod
    def from_positions(cls, positions: np.ndarray, input_len: int) -> DiagonalPlan:
        output_len = int(positions.size)
        offsets = positions - np.arange(output_len)
        entries = []
        for z in np.unique(offsets):
            mask = (offsets == z).astype(np.int64)
            mask.flags.writeable = False
            entries.append(DiagonalEntry(int(z), mask))
        return cls(tuple(entries), input_len, output_len)

    @property
    def offsets(self) -> list[int]:
        return [entry.offset for entry in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def embedded(self, segment_length: int) -> DiagonalPlan:
        """
        The same plan inside a square working segment.

        Inputs and outputs occupy the leading slots; the extra rows and columns
        of the enlarged matrix are zero, so the diagonals keep their offsets.
        """
        if segment_length < max(self.input_len, self.output_len):
            raise DimensionMismatchError(
                f"Segment {segment_length} cannot hold a {self.output_len}x{self.input_len} transform"
            )
        if segment_length == self.input_len == self.output_len:
            return self
        entries = []
        for entry in self.entries:
            mask = np.zeros(segment_length, dtype=np.int64)
            mask[: self.output_len] = entry.mask
            mask.flags.writeable = False
            entries.append(DiagonalEntry(entry.offset, mask))
        return DiagonalPlan(tuple(entries), segment_length, segment_length)

    def to_permutation(self) -> PermutationMatrix:
        """Rebuild the dense matrix from the diagonals."""
        entries = np.zeros((self.output_len, self.input_len), dtype=np.int8)
        for entry in self.entries:
            rows = np.flatnonzero(entry.mask)
            entries[rows, rows + entry.offset] = 1
        return PermutationMatrix(self.output_len, self.input_len, entries)


def build_permutation(kind: TransformKind) -> PermutationMatrix:
    """Dense transformation matrix of ``kind``."""
    return PermutationMatrix.from_positions(kind.source_positions(), kind.input_len)


def extract_diagonals(u: PermutationMatrix) -> DiagonalPlan:
    """
    Collect the non-zero generalized diagonals of ``u``.

    :param PermutationMatrix u: Transformation matrix.
    :return DiagonalPlan: One entry per diagonal holding at least one 1.
    """
    rows, cols = np.nonzero(u.entries)
    offsets = cols - rows
    entries = []
    for z in np.unique(offsets):
        mask = np.zeros(u.rows, dtype=np.int64)
        mask[rows[offsets == z]] = 1
        mask.flags.writeable = False
        entries.append(DiagonalEntry(int(z), mask))
    return DiagonalPlan(tuple(entries), u.cols, u.rows)


def count_nonzero_diagonals(kind: TransformKind) -> int:
    positions = kind.source_positions()
    return int(np.unique(positions - np.arange(positions.size)).size)


def theorem_bound(kind: TransformKind) -> int | None:
    """
    The closed-form upper bound on the diagonal count of ``kind``.

    ``None`` when no bound is stated (widened eps/omega sources).
    """
    m, l, n = kind.m, kind.l, kind.n
    column_major = kind.order is FlattenOrder.COLUMN_MAJOR
    if kind.transform is Transform.SIGMA:
        return 2 * min(m, l) - 1
    if kind.transform is Transform.TAU:
        return 2 * min(n, l) - 1
    if kind.extent not in (None, l):
        return None
    if kind.transform is Transform.EPS:
        if n == l:
            return 2
        return n // l + 1 if column_major else (n // l + 2) * m
    if m == l:
        return 2
    return (m // l + 2) * n if column_major else m // l + 1


def tight_bound(kind: TransformKind) -> int | None:
    """
    Upper bound over every shift ``k`` derived from the index maps.

    For column-major eps the offsets are ``m*(k - l*q)`` with
    ``q <= (n-1+k) // l``, so up to ``(n+l-2)//l + 1`` diagonals appear, one
    more than the closed-form bound when ``k + n mod l > l``. Row-major omega is
    the transposed case.
    """
    bound = theorem_bound(kind)
    if bound is None:
        return None
    column_major = kind.order is FlattenOrder.COLUMN_MAJOR
    if kind.transform is Transform.EPS and column_major and kind.n != kind.l:
        return (kind.n + kind.l - 2) // kind.l + 1
    if kind.transform is Transform.OMEGA and not column_major and kind.m != kind.l:
        return (kind.m + kind.l - 2) // kind.l + 1
    return bound


def reference_transform(kind: TransformKind, source: Matrix) -> Matrix:
    """Apply ``kind`` to ``source`` with the cleartext operators."""
    if source.shape != kind.source_shape:
        raise DimensionMismatchError(f"{kind.describe()} expects a {kind.source_shape} source, got {source.shape}")
    if kind.transform is Transform.SIGMA:
        return sigma(source)
    if kind.transform is Transform.TAU:
        return tau(source)
    if kind.transform is Transform.EPS:
        return eps(source.crop(kind.m, kind.l), kind.k, kind.m, kind.n)
    return omega(source.crop(kind.l, kind.n), kind.k, kind.m, kind.n)


class PlanCache:
    """
    Precomputed diagonal plans keyed by transform and working segment.

    Building a plan is plaintext work and never touches operation counters.
    """

    def __init__(self):
        self.plan_map = {}
        self.lock = threading.Lock()

    def get(self, kind: TransformKind, segment_length: int | None = None) -> DiagonalPlan:
        key = (kind, segment_length)
        plan = self.plan_map.get(key)
        if plan is not None:
            return plan
        plan = DiagonalPlan.from_positions(kind.source_positions(), kind.input_len)
        if segment_length is not None:
            plan = plan.embedded(segment_length)
        with self.lock:
            plan = self.plan_map.setdefault(key, plan)
        log.debug("Built plan for %s in segment %s: %d diagonals", kind.describe(), segment_length, len(plan))
        return plan

    def clear(self):
        with self.lock:
            self.plan_map.clear()


plan_cache = PlanCache()


def plan_for(kind: TransformKind, segment_length: int | None = None) -> DiagonalPlan:
    """Cached plan of ``kind``, embedded into ``segment_length`` slots when given."""
    return plan_cache.get(kind, segment_length)


def apply_plan(ct: Ciphertext, plan: DiagonalPlan, backend: HeBackend) -> Ciphertext:
    """
    Evaluate ``U @ ct`` as ``sum(mask_z * Rot(ct, z))``.

    Costs ``len(plan)`` plaintext multiplications, ``len(plan) - 1`` additions
    and one rotation per non-zero offset.

    :raises DimensionMismatchError: If the plan is not square over ``ct``'s segment.
    """
    if not ct.segment_length == plan.input_len == plan.output_len:
        raise DimensionMismatchError(
            f"Plan {plan.output_len}x{plan.input_len} does not match segment {ct.segment_length}"
        )
    result = None
    for entry in plan.entries:
        rotated = ct if entry.offset == 0 else backend.he_rot(ct, entry.offset)
        term = backend.he_cmult(rotated, entry.mask)
        result = term if result is None else backend.he_add(result, term)
    return result
