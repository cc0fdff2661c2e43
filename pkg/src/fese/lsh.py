"""Bit-sampling locality-sensitive hashing on binary templates.

Each of the ``count`` functions projects a template onto ``digest_bits``
fixed bit positions, so near templates collide with high probability and
far ones rarely do.  Under an i.i.d. bit-flip model the per-function
collision probability is exactly ``(1 - r/n)**digest_bits`` when the
sampled positions are distinct, which is what the analytic helpers here
assume and the estimators measure.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass

from .errors import DimensionError, ParameterError
from .templates import BinaryTemplate, perturb_exact, random_template


@dataclass(frozen=True, slots=True)
class BitSamplingFamily:
    """A family of bit-sampling hash functions over ``{0,1}^n_bits``.

    ``positions[i]`` lists the ``digest_bits`` template positions read by
    function ``i`` (1-based in the public API).  When the family fits,
    positions are drawn without replacement across all functions, making
    per-function collision events independent under i.i.d. bit noise;
    otherwise each function samples independently.
    """

    n_bits: int
    digest_bits: int
    positions: tuple[tuple[int, ...], ...]

    @property
    def count(self) -> int:
        return len(self.positions)

    def eval(self, func_index: int, x: BinaryTemplate) -> int:
        """Digest of ``x`` under function ``func_index`` (1-based), as an int."""
        if not 1 <= func_index <= self.count:
            raise ParameterError(f"function index {func_index} outside [1, {self.count}]")
        if x.n_bits != self.n_bits:
            raise DimensionError(f"template has {x.n_bits} bits, family wants {self.n_bits}")
        digest = 0
        for p in self.positions[func_index - 1]:
            digest = (digest << 1) | x.bit(p)
        return digest

    def eval_bytes(self, func_index: int, x: BinaryTemplate) -> bytes:
        return self.eval(func_index, x).to_bytes((self.digest_bits + 7) // 8, "big")

    def eval_all(self, x: BinaryTemplate) -> list[int]:
        return [self.eval(i, x) for i in range(1, self.count + 1)]

    def to_bytes(self) -> bytes:
        """Descriptor: counts then all positions as big-endian 16-bit ints."""
        head = struct.pack(">HHH", self.n_bits, self.digest_bits, self.count)
        body = b"".join(
            struct.pack(f">{self.digest_bits}H", *per_func) for per_func in self.positions
        )
        return head + body

    @classmethod
    def from_bytes(cls, blob: bytes) -> "BitSamplingFamily":
        n_bits, digest_bits, count = struct.unpack(">HHH", blob[:6])
        need = 6 + 2 * digest_bits * count
        if len(blob) < need:
            raise ParameterError("family descriptor truncated")
        positions = []
        off = 6
        for _ in range(count):
            positions.append(struct.unpack(f">{digest_bits}H", blob[off : off + 2 * digest_bits]))
            off += 2 * digest_bits
        return cls(n_bits, digest_bits, tuple(positions))

    def descriptor_size(self) -> int:
        return 6 + 2 * self.digest_bits * self.count


def build_family(
    n_bits: int, digest_bits: int, count: int, rng: random.Random
) -> BitSamplingFamily:
    """Draw a fresh family of ``count`` functions of ``digest_bits`` bits each."""
    if not 1 <= digest_bits <= n_bits:
        raise ParameterError(f"digest_bits {digest_bits} outside [1, {n_bits}]")
    if count < 1:
        raise ParameterError("need at least one function")
    if n_bits > 0xFFFF:
        raise ParameterError("positions must fit 16-bit serialization")
    total = digest_bits * count
    if total <= n_bits:
        # one global draw without replacement: functions read disjoint bits
        flat = rng.sample(range(n_bits), total)
        positions = tuple(
            tuple(flat[i * digest_bits : (i + 1) * digest_bits]) for i in range(count)
        )
    else:
        positions = tuple(
            tuple(rng.sample(range(n_bits), digest_bits)) for _ in range(count)
        )
    return BitSamplingFamily(n_bits, digest_bits, positions)


def analytic_collision_prob(r: float, n_bits: int, t: int) -> float:
    """Per-function collision probability ``(1 - r/n)**t`` under i.i.d. bit flips."""
    if not 0 <= r <= n_bits:
        raise ParameterError(f"distance {r} outside [0, {n_bits}]")
    if t < 1:
        raise ParameterError("digest must have at least one bit")
    return (1.0 - r / n_bits) ** t


@dataclass(frozen=True, slots=True)
class SeparationEstimate:
    """Empirical mismatch/collision rates at the two decision radii.

    ``eps_near`` is Pr[digest differs] for pairs at the near radius (the
    completeness loss per function); ``eps_far`` is Pr[digest collides]
    for pairs at the far radius (the soundness leak per function).
    """

    eps_near: float
    eps_far: float


def estimate_eps(
    family: BitSamplingFamily,
    near_radius: int,
    far_radius: int,
    trials: int,
    rng: random.Random,
) -> SeparationEstimate:
    """Sample pairs at exactly the two radii and measure per-function rates.

    Pairs at exactly ``near_radius`` maximize the mismatch probability over
    all distances <= near_radius, so the estimate is the worst case for
    completeness.  Functions are cycled so every one contributes.
    """
    if trials < 1:
        raise ParameterError("need at least one trial")
    mismatch_near = 0
    collide_far = 0
    for k in range(trials):
        i = 1 + (k % family.count)
        x = random_template(family.n_bits, rng)
        near = perturb_exact(x, near_radius, rng)
        far = perturb_exact(x, far_radius, rng)
        dx = family.eval(i, x)
        if family.eval(i, near) != dx:
            mismatch_near += 1
        if family.eval(i, far) == dx:
            collide_far += 1
    return SeparationEstimate(mismatch_near / trials, collide_far / trials)
