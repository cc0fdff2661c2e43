"""Seed handling.

Every randomized operation in the package takes an explicit
``random.Random`` instance; nothing touches global RNG state.  When the
caller supplies a 32-byte master seed, all per-component generators are
derived from it by keyed hashing, so a whole run (keygen, enrolment,
queries) is reproducible from one hex string.  Without a seed,
``fresh_rng`` falls back to the operating system's entropy.
"""

import hashlib
import random
import secrets

SEED_BYTES = 32


def fresh_rng() -> random.Random:
    """OS-entropy generator for unseeded operation."""
    return random.SystemRandom()


def derive_rng(master: bytes, label: str) -> random.Random:
    """Deterministic sub-generator for one component of a run.

    Distinct labels yield independent streams; the same (master, label)
    pair always yields the same stream.
    """
    if len(master) != SEED_BYTES:
        raise ValueError(f"master seed must be {SEED_BYTES} bytes, got {len(master)}")
    digest = hashlib.blake2b(label.encode(), key=master, digest_size=32).digest()
    return random.Random(int.from_bytes(digest, "big"))


def derive_key(master: bytes, label: str, size: int = 32) -> bytes:
    """Deterministic key material for one component of a run."""
    if len(master) != SEED_BYTES:
        raise ValueError(f"master seed must be {SEED_BYTES} bytes, got {len(master)}")
    return hashlib.blake2b(label.encode(), key=master, digest_size=size).digest()


def parse_seed(hex_string: str) -> bytes:
    master = bytes.fromhex(hex_string)
    if len(master) != SEED_BYTES:
        raise ValueError(f"seed must be {SEED_BYTES} bytes of hex, got {len(master)}")
    return master


def random_seed() -> bytes:
    return secrets.token_bytes(SEED_BYTES)
