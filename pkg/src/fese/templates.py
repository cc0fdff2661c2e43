"""Fixed-length binary templates under the Hamming metric.

Templates are immutable bit vectors of a fixed length ``n_bits``, stored
packed most-significant-bit-first within each byte.  ``n_bits`` need not
be a multiple of 8; trailing pad bits are zero and never contribute to
distances.  The synthetic sources here (uniform templates, a binary
symmetric channel) stand in for a real feature extractor in every
experiment.
"""

from __future__ import annotations

import math
import random
import struct
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FormatError, ParameterError

TEMPLATE_MAGIC = b"FTPL"


@dataclass(frozen=True, slots=True)
class BinaryTemplate:
    """Immutable bit vector of length ``n_bits``, packed MSB-first."""

    n_bits: int
    packed: bytes

    def __post_init__(self):
        if self.n_bits <= 0:
            raise DimensionError("template length must be positive")
        if len(self.packed) != (self.n_bits + 7) // 8:
            raise DimensionError(
                f"expected {(self.n_bits + 7) // 8} packed bytes for "
                f"{self.n_bits} bits, got {len(self.packed)}"
            )
        if self._pad_width() and self.packed[-1] & ((1 << self._pad_width()) - 1):
            raise FormatError("trailing pad bits must be zero")

    def _pad_width(self) -> int:
        return -self.n_bits % 8

    @property
    def value(self) -> int:
        """The bits as one integer, bit 0 most significant."""
        return int.from_bytes(self.packed, "big") >> self._pad_width()

    @classmethod
    def from_int(cls, n_bits: int, value: int) -> "BinaryTemplate":
        if n_bits <= 0:
            raise DimensionError("template length must be positive")
        if value < 0 or value >> n_bits:
            raise ParameterError("value does not fit in n_bits")
        pad = -n_bits % 8
        packed = (value << pad).to_bytes((n_bits + 7) // 8, "big")
        return cls(n_bits, packed)

    @classmethod
    def from_bits(cls, bits) -> "BinaryTemplate":
        """Build from an iterable of 0/1, index 0 first."""
        bits = list(bits)
        value = 0
        for b in bits:
            value = (value << 1) | (1 if b else 0)
        return cls.from_int(len(bits), value)

    def bit(self, index: int) -> int:
        """Bit at 0-based position ``index``."""
        if not 0 <= index < self.n_bits:
            raise ParameterError(f"bit index {index} out of range [0, {self.n_bits})")
        byte = self.packed[index >> 3]
        return (byte >> (7 - (index & 7))) & 1

    def complement(self) -> "BinaryTemplate":
        mask = (1 << self.n_bits) - 1
        return BinaryTemplate.from_int(self.n_bits, self.value ^ mask)

    def flip_positions(self, positions) -> "BinaryTemplate":
        """Return a copy with the listed 0-based bit positions flipped."""
        mask = 0
        for p in positions:
            if not 0 <= p < self.n_bits:
                raise ParameterError(f"bit index {p} out of range")
            mask |= 1 << (self.n_bits - 1 - p)
        return BinaryTemplate.from_int(self.n_bits, self.value ^ mask)

    def to_array(self) -> np.ndarray:
        """Bits as a uint8 array of 0/1 values."""
        arr = np.unpackbits(np.frombuffer(self.packed, dtype=np.uint8))
        return arr[: self.n_bits]

    @classmethod
    def from_array(cls, bits: np.ndarray) -> "BinaryTemplate":
        packed = np.packbits(np.asarray(bits, dtype=np.uint8))
        return cls(int(len(bits)), packed.tobytes())

    def to_bytes(self) -> bytes:
        """Serialize: magic, 4-byte big-endian length, packed bits."""
        return TEMPLATE_MAGIC + struct.pack(">I", self.n_bits) + self.packed

    @classmethod
    def from_bytes(cls, blob: bytes) -> "BinaryTemplate":
        if len(blob) < 8 or blob[:4] != TEMPLATE_MAGIC:
            raise FormatError("not a template blob (bad magic)")
        (n_bits,) = struct.unpack(">I", blob[4:8])
        body = blob[8:]
        if len(body) != (n_bits + 7) // 8:
            raise FormatError("template blob length mismatch")
        return cls(n_bits, body)

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "BinaryTemplate":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


@dataclass(frozen=True, slots=True)
class MatchThresholds:
    """Decision radii: genuine pairs lie within ``near``, impostor pairs beyond ``far``."""

    near: int
    far: int

    def validate(self, n_bits: int) -> None:
        if not 0 <= self.near < self.far <= n_bits:
            raise ParameterError(
                f"need 0 <= near < far <= {n_bits}, got near={self.near} far={self.far}"
            )


def hamming_distance(a: BinaryTemplate, b: BinaryTemplate) -> int:
    if a.n_bits != b.n_bits:
        raise DimensionError(f"length mismatch: {a.n_bits} vs {b.n_bits}")
    return (a.value ^ b.value).bit_count()


def random_template(n_bits: int, rng: random.Random) -> BinaryTemplate:
    """Uniformly random template; deterministic for a seeded generator."""
    if n_bits <= 0:
        raise DimensionError("template length must be positive")
    return BinaryTemplate.from_int(n_bits, rng.getrandbits(n_bits))


def perturb_bsc(t: BinaryTemplate, flip_prob: float, rng: random.Random) -> BinaryTemplate:
    """Pass ``t`` through a binary symmetric channel.

    Each bit flips independently with probability ``flip_prob``.  Flip
    positions are generated by geometric gap sampling, so the cost is
    O(n_bits * flip_prob) rather than one draw per bit; the resulting
    distribution is exactly i.i.d. Bernoulli.
    """
    if not 0.0 <= flip_prob <= 1.0:
        raise ParameterError(f"flip probability {flip_prob} outside [0, 1]")
    if flip_prob == 0.0:
        return t
    if flip_prob == 1.0:
        return t.complement()
    log_keep = math.log1p(-flip_prob)
    mask = 0
    pos = -1
    while True:
        u = rng.random()
        # u == 0.0 would mean an infinite gap; the next draw resolves it
        if u <= 0.0:
            continue
        pos += 1 + int(math.log(u) / log_keep)
        if pos >= t.n_bits:
            break
        mask |= 1 << (t.n_bits - 1 - pos)
    return BinaryTemplate.from_int(t.n_bits, t.value ^ mask)


def perturb_exact(t: BinaryTemplate, distance: int, rng: random.Random) -> BinaryTemplate:
    """Flip exactly ``distance`` uniformly chosen positions."""
    if not 0 <= distance <= t.n_bits:
        raise ParameterError(f"distance {distance} outside [0, {t.n_bits}]")
    return t.flip_positions(rng.sample(range(t.n_bits), distance))
