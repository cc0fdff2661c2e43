import random

import pytest

from fese.protocol import SchemeParams


def seeded(n: int = 0) -> random.Random:
    return random.Random(0xFE5E + n)


def master(byte: int = 1) -> bytes:
    return bytes([byte]) * 32


@pytest.fixture
def small_params() -> SchemeParams:
    """Tiny scheme on the insecure test group; fast enough for any test."""
    return SchemeParams(
        template_bits=64,
        digest_bits=4,
        lsh_count=4,
        bloom_count=2,
        bucket_count=64,
        bucket_capacity=12,
        match_threshold=8,
        near_radius=6,
        far_radius=24,
        tag_bits=20,
        group_name="toy61",
    )
