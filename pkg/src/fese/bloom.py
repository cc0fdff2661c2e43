"""Bloom filters whose buckets store tags, and their LSH composition.

A ``BucketedFilter`` keeps ``bucket_count`` sets of opaque tags.  Adding
an element inserts its tag into every bucket addressed by the hash
family; membership is "all addressed buckets non-empty" (classic filter
semantics) and retrieval is the intersection of the addressed buckets.
Composing the bucket hashes with a bit-sampling LSH family turns exact
lookup into error-tolerant lookup: the plaintext core of the encrypted
index built in :mod:`fese.protocol`.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field
from typing import Hashable

from .errors import BucketOverflowError, ParameterError
from .lsh import BitSamplingFamily
from .templates import BinaryTemplate

Tag = Hashable

_DIGEST_SIZE = 16  # 128-bit hash keeps the mod-m bias below 2**-100


def bucket_hash(key: bytes, bucket_count: int, j: int, data: bytes) -> int:
    """Keyed hash of ``data`` into ``[1, bucket_count]``, domain-separated by ``j``."""
    h = hashlib.blake2b(
        struct.pack(">H", j) + data, key=key, digest_size=_DIGEST_SIZE
    ).digest()
    return 1 + int.from_bytes(h, "big") % bucket_count


def element_indices(key: bytes, nu: int, bucket_count: int, data: bytes) -> list[int]:
    """The ``nu`` bucket indices of a raw byte-string element."""
    return [bucket_hash(key, bucket_count, j, data) for j in range(1, nu + 1)]


@dataclass(frozen=True, slots=True)
class CompositeFamily:
    """All ``lsh.count * bloom_count`` template-to-bucket functions.

    Function (j, i) hashes the i-th LSH digest, concatenated with i as a
    2-byte big-endian integer, under bucket hash j; the appended index
    keeps functions independent even when two LSH digests coincide.
    """

    lsh: BitSamplingFamily
    bloom_count: int
    bucket_count: int
    hash_key: bytes

    @property
    def size(self) -> int:
        return self.lsh.count * self.bloom_count

    def eval(self, j: int, i: int, x: BinaryTemplate) -> int:
        if not 1 <= j <= self.bloom_count:
            raise ParameterError(f"bucket-hash index {j} outside [1, {self.bloom_count}]")
        data = self.lsh.eval_bytes(i, x) + struct.pack(">H", i)
        return bucket_hash(self.hash_key, self.bucket_count, j, data)

    def index_groups(self, x: BinaryTemplate) -> list[list[int]]:
        """Bucket indices grouped by LSH function: one list of ``bloom_count`` per function."""
        groups = []
        for i in range(1, self.lsh.count + 1):
            data = self.lsh.eval_bytes(i, x) + struct.pack(">H", i)
            groups.append(
                [
                    bucket_hash(self.hash_key, self.bucket_count, j, data)
                    for j in range(1, self.bloom_count + 1)
                ]
            )
        return groups

    def indices(self, x: BinaryTemplate) -> list[int]:
        """All bucket indices in canonical order (LSH-function major)."""
        return [a for group in self.index_groups(x) for a in group]


@dataclass(slots=True)
class BucketedFilter:
    """``bucket_count`` grow-only sets of tags, optionally capacity-limited."""

    bucket_count: int
    capacity: int | None = None
    buckets: list[set] = field(default_factory=list)

    def __post_init__(self):
        if self.bucket_count < 1:
            raise ParameterError("need at least one bucket")
        if not self.buckets:
            self.buckets = [set() for _ in range(self.bucket_count)]

    def bucket(self, alpha: int) -> set:
        if not 1 <= alpha <= self.bucket_count:
            raise ParameterError(f"bucket index {alpha} outside [1, {self.bucket_count}]")
        return self.buckets[alpha - 1]

    def add_at(self, alphas, tag: Tag) -> None:
        """Insert ``tag`` into every listed bucket; re-adding is a no-op."""
        for alpha in alphas:
            b = self.bucket(alpha)
            if tag not in b:
                if self.capacity is not None and len(b) >= self.capacity:
                    raise BucketOverflowError(alpha)
                b.add(tag)

    def contains_at(self, alphas) -> bool:
        """Set-membership answer: every addressed bucket is non-empty."""
        return all(self.bucket(alpha) for alpha in alphas)

    def lookup_at(self, groups: list[list[int]], threshold: int) -> set:
        """Tags present in the full intersection of enough groups.

        ``threshold`` counts composite functions; a tag qualifies when it
        lies in all buckets of at least ``ceil(threshold / group_size)``
        groups.  The full threshold reproduces the plain intersection of
        every addressed bucket.
        """
        if not groups:
            return set()
        group_size = len(groups[0])
        if not 1 <= threshold <= group_size * len(groups):
            raise ParameterError(
                f"threshold {threshold} outside [1, {group_size * len(groups)}]"
            )
        needed = math.ceil(threshold / group_size)
        counts: dict = {}
        for group in groups:
            common = set.intersection(*(self.bucket(a) for a in group))
            for tag in common:
                counts[tag] = counts.get(tag, 0) + 1
        return {tag for tag, c in counts.items() if c >= needed}


def bfs_add(store: BucketedFilter, comp: CompositeFamily, x: BinaryTemplate, tag: Tag) -> None:
    store.add_at(comp.indices(x), tag)


def bfs_lookup(
    store: BucketedFilter, comp: CompositeFamily, x: BinaryTemplate, threshold: int
) -> set:
    return store.lookup_at(comp.index_groups(x), threshold)


def membership_fp_probability(nu: int, bucket_count: int, set_size: int) -> float:
    """False-positive probability of the underlying bit filter.

    ``(1 - (1 - nu/m)**|D|)**nu``: the chance that all ``nu`` buckets of a
    never-inserted element are already occupied.
    """
    if nu > bucket_count:
        raise ParameterError("more hashes than buckets")
    if set_size < 0:
        raise ParameterError("set size must be non-negative")
    return (1.0 - (1.0 - nu / bucket_count) ** set_size) ** nu


def intersection_bounds(
    eps_near: float, eps_far: float, bucket_count: int, family_size: int
) -> tuple[float, float]:
    """Bounds for full-intersection lookup over ``family_size`` composite functions.

    Returns ``(soundness_bound, completeness_failure_bound)``: a far tag
    survives every bucket with probability at most
    ``(eps_far + (1-eps_far)/m)**family_size``, and a near tag is missed
    with probability at most ``1 - (1-eps_near)**family_size``.
    """
    for name, v in (("eps_near", eps_near), ("eps_far", eps_far)):
        if not 0.0 <= v <= 1.0:
            raise ParameterError(f"{name} outside [0, 1]")
    soundness = (eps_far + (1.0 - eps_far) / bucket_count) ** family_size
    completeness_failure = 1.0 - (1.0 - eps_near) ** family_size
    return soundness, completeness_failure


def full_threshold(lsh_count: int, bloom_count: int) -> int:
    """Threshold demanding every composite function agree (plain intersection)."""
    return lsh_count * bloom_count


def group_threshold(groups: int, bloom_count: int) -> int:
    """Threshold demanding at least ``groups`` whole LSH functions agree."""
    return groups * bloom_count
