"""
Cleartext emulator of packed-slot ciphertexts.

The backend offers the four primitive operations (add, ciphertext multiply,
plaintext multiply, rotate) plus encrypt/decrypt and counts every call. No
encryption happens: slots hold the plain integers so results can be compared
against the cleartext oracle bit for bit.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from contextlib import contextmanager
from dataclasses import dataclass, fields, replace
from enum import Enum
import logging
import os
import threading
import weakref

import numpy as np

from hegemm_errors import CapacityError, ConfigError, DimensionMismatchError
from matrix_core import FlatVector, as_int64, checked_add, checked_multiply

log = logging.getLogger(__name__)

DEFAULT_SLOT_COUNT = 4096
SLOTS_ENV_VARIABLE = "HEGEMM_SLOTS"
# residues must multiply inside int64
MAX_PLAINTEXT_MODULUS = 2**31


class Phase(Enum):
    CLIENT = "client"
    CLOUD = "cloud"


@dataclass(frozen=True)
class BackendConfig:
    """
    Slot layout of the emulated scheme.

    :param int slot_count: Number of SIMD slots N, a power of two >= 2.
    :param int plaintext_modulus: Reduce all slot arithmetic modulo this value when set.
    """

    slot_count: int = DEFAULT_SLOT_COUNT
    plaintext_modulus: int | None = None

    def __post_init__(self):
        n = self.slot_count
        if not isinstance(n, int) or n < 2 or n & (n - 1):
            raise ConfigError(f"Slot count must be a power of two >= 2, got {n}")
        q = self.plaintext_modulus
        if q is not None and not 2 <= q <= MAX_PLAINTEXT_MODULUS:
            raise ConfigError(f"Plaintext modulus must be in [2, {MAX_PLAINTEXT_MODULUS}], got {q}")

    @classmethod
    def from_env(cls, slot_count: int | None = None, plaintext_modulus: int | None = None) -> BackendConfig:
        """Explicit values win; otherwise ``HEGEMM_SLOTS`` overrides the default slot count."""
        if slot_count is None:
            env_value = os.environ.get(SLOTS_ENV_VARIABLE)
            try:
                slot_count = int(env_value) if env_value else DEFAULT_SLOT_COUNT
            except ValueError as e:
                raise ConfigError(f"{SLOTS_ENV_VARIABLE} must be an integer, got '{env_value}'") from e
        return cls(slot_count=slot_count, plaintext_modulus=plaintext_modulus)


@dataclass(frozen=True, eq=False)
class Ciphertext:
    """
    An emulated ciphertext.

    Only the first ``segment_length`` slots carry data; rotations are cyclic
    over that segment.
    """

    slots: np.ndarray
    segment_length: int
    depth: int = 0
    phase_tag: Phase = Phase.CLIENT

    @property
    def segment(self) -> np.ndarray:
        return self.slots[: self.segment_length]


@dataclass
class OpStats:
    """Operation counters, one set per phase."""

    client_add: int = 0
    client_mult_cc: int = 0
    client_mult_cp: int = 0
    client_rot: int = 0
    cloud_add: int = 0
    cloud_mult_cc: int = 0
    cloud_mult_cp: int = 0
    cloud_rot: int = 0
    n_encrypt: int = 0
    n_decrypt: int = 0

    OPERATIONS = ("add", "mult_cc", "mult_cp", "rot")

    def count(self, operation: str, phase: Phase | None = None) -> int:
        if phase is None:
            return self.count(operation, Phase.CLIENT) + self.count(operation, Phase.CLOUD)
        return getattr(self, f"{phase.value}_{operation}")

    @property
    def n_add(self) -> int:
        return self.count("add")

    @property
    def n_mult_cc(self) -> int:
        return self.count("mult_cc")

    @property
    def n_mult_cp(self) -> int:
        return self.count("mult_cp")

    @property
    def n_rot(self) -> int:
        return self.count("rot")

    def as_dict(self) -> dict[str, int]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, values: dict[str, int]) -> OpStats:
        return cls(**{f.name: int(values.get(f.name, 0)) for f in fields(cls)})

    def __sub__(self, other: OpStats) -> OpStats:
        return OpStats(**{f.name: getattr(self, f.name) - getattr(other, f.name) for f in fields(self)})


class HeBackend(ABC):
    """
    Contract of a packed-slot HE backend.

    A real library can implement the same methods; the algorithms only use
    this interface.
    """

    @property
    @abstractmethod
    def config(self) -> BackendConfig: ...

    @abstractmethod
    def encrypt(self, v: FlatVector, segment_length: int | None = None) -> Ciphertext: ...

    @abstractmethod
    def decrypt(self, ct: Ciphertext) -> FlatVector: ...

    @abstractmethod
    def zeros(self, segment_length: int) -> Ciphertext: ...

    @abstractmethod
    def he_add(self, x: Ciphertext, y: Ciphertext) -> Ciphertext: ...

    @abstractmethod
    def he_mult(self, x: Ciphertext, y: Ciphertext) -> Ciphertext: ...

    @abstractmethod
    def he_cmult(self, x: Ciphertext, mask) -> Ciphertext: ...

    @abstractmethod
    def he_rot(self, x: Ciphertext, z: int) -> Ciphertext: ...

    @abstractmethod
    def stats(self) -> OpStats: ...

    @abstractmethod
    def reset_stats(self) -> None: ...

    @abstractmethod
    def phase(self, phase: Phase): ...


class EmulatedBackend(HeBackend):
    """
    Cleartext implementation of :class:`HeBackend`.

    Counters are guarded by a lock so parallel workers may share a session.
    The current phase is per thread.
    """

    def __init__(self, config: BackendConfig | None = None):
        self._config = config or BackendConfig()
        self.lock = threading.RLock()
        self._stats = OpStats()
        self._live = 0
        self._peak_live = 0
        self._local = threading.local()

    @property
    def config(self) -> BackendConfig:
        return self._config

    @property
    def slot_count(self) -> int:
        return self._config.slot_count

    @property
    def modulus(self) -> int | None:
        return self._config.plaintext_modulus

    @property
    def current_phase(self) -> Phase:
        return getattr(self._local, "phase", Phase.CLIENT)

    @contextmanager
    def phase(self, phase: Phase):
        """Charge operations inside the block to ``phase``."""
        previous = self.current_phase
        self._local.phase = phase
        try:
            yield self
        finally:
            self._local.phase = previous

    def stats(self) -> OpStats:
        with self.lock:
            return replace(self._stats)

    def reset_stats(self) -> None:
        with self.lock:
            self._stats = OpStats()
            self._peak_live = self._live

    @property
    def peak_live_ciphertexts(self) -> int:
        with self.lock:
            return self._peak_live

    def __count(self, operation: str):
        name = f"{self.current_phase.value}_{operation}" if operation in OpStats.OPERATIONS else operation
        with self.lock:
            setattr(self._stats, name, getattr(self._stats, name) + 1)

    def __released(self):
        with self.lock:
            self._live -= 1

    def __new_ciphertext(self, slots: np.ndarray, segment_length: int, depth: int) -> Ciphertext:
        slots.flags.writeable = False
        ct = Ciphertext(slots=slots, segment_length=segment_length, depth=depth, phase_tag=self.current_phase)
        with self.lock:
            self._live += 1
            self._peak_live = max(self._peak_live, self._live)
        weakref.finalize(ct, self.__released)
        return ct

    def __reduce(self, values: np.ndarray) -> np.ndarray:
        if self.modulus is None:
            return values
        return values % self.modulus

    def __require_same_segment(self, x: Ciphertext, y: Ciphertext):
        if x.segment_length != y.segment_length:
            raise DimensionMismatchError(f"Segment mismatch {x.segment_length} vs {y.segment_length}")

    def __from_segment(self, segment: np.ndarray, segment_length: int, depth: int) -> Ciphertext:
        slots = np.zeros(self.slot_count, dtype=np.int64)
        slots[:segment_length] = segment
        return self.__new_ciphertext(slots, segment_length, depth)

    def encrypt(self, v: FlatVector, segment_length: int | None = None) -> Ciphertext:
        """
        Pack ``v`` into the leading slots of a fresh ciphertext.

        :param FlatVector v: Values to pack.
        :param int segment_length: Logical segment, defaults to ``len(v)``; slots past ``len(v)`` are zero.
        :raises DimensionMismatchError: If ``v`` is empty or longer than the segment.
        :raises CapacityError: If the segment exceeds the slot count.
        :return Ciphertext: Depth 0 ciphertext.
        """
        if len(v) == 0:
            raise DimensionMismatchError("Cannot encrypt an empty vector")
        segment_length = len(v) if segment_length is None else segment_length
        if segment_length > self.slot_count:
            raise CapacityError(f"Segment of {segment_length} values exceeds {self.slot_count} slots")
        if len(v) > segment_length:
            raise DimensionMismatchError(f"Vector of {len(v)} values does not fit segment {segment_length}")
        self.__count("n_encrypt")
        segment = np.zeros(segment_length, dtype=np.int64)
        segment[: len(v)] = self.__reduce(v.values)
        return self.__from_segment(segment, segment_length, 0)

    def decrypt(self, ct: Ciphertext) -> FlatVector:
        self.__count("n_decrypt")
        return FlatVector.of(ct.segment)

    def zeros(self, segment_length: int) -> Ciphertext:
        """Trivial encryption of zero; no counter is charged."""
        if segment_length > self.slot_count:
            raise CapacityError(f"Segment of {segment_length} values exceeds {self.slot_count} slots")
        return self.__from_segment(np.zeros(segment_length, dtype=np.int64), segment_length, 0)

    def he_add(self, x: Ciphertext, y: Ciphertext) -> Ciphertext:
        self.__require_same_segment(x, y)
        segment = checked_add(x.segment, y.segment, self.modulus)
        self.__count("add")
        return self.__from_segment(segment, x.segment_length, max(x.depth, y.depth))

    def he_mult(self, x: Ciphertext, y: Ciphertext) -> Ciphertext:
        self.__require_same_segment(x, y)
        segment = checked_multiply(x.segment, y.segment, self.modulus)
        self.__count("mult_cc")
        return self.__from_segment(segment, x.segment_length, max(x.depth, y.depth) + 1)

    def he_cmult(self, x: Ciphertext, mask) -> Ciphertext:
        """
        Multiply slot-wise with a plaintext vector; depth is unchanged.

        :param Ciphertext x: Ciphertext operand.
        :param mask: FlatVector or integer sequence with ``x.segment_length`` entries.
        :raises DimensionMismatchError: On a length mismatch.
        """
        values = mask.values if isinstance(mask, FlatVector) else as_int64(mask, "plaintext").reshape(-1)
        if values.size != x.segment_length:
            raise DimensionMismatchError(f"Plaintext of {values.size} values for segment {x.segment_length}")
        segment = checked_multiply(x.segment, values, self.modulus)
        self.__count("mult_cp")
        return self.__from_segment(segment, x.segment_length, x.depth)

    def he_rot(self, x: Ciphertext, z: int) -> Ciphertext:
        """Rotate the segment left by ``z`` (right for negative ``z``)."""
        segment = np.roll(x.segment, -(z % x.segment_length))
        self.__count("rot")
        return self.__from_segment(segment, x.segment_length, x.depth)


def encrypt_values(backend: HeBackend, values, segment_length: int | None = None) -> Ciphertext:
    """Convenience wrapper encrypting a plain integer sequence."""
    return backend.encrypt(FlatVector.of(values), segment_length)
