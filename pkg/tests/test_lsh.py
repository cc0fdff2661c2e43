import math
from fractions import Fraction

import pytest

from fese.errors import ParameterError
from fese.lsh import (
    BitSamplingFamily,
    analytic_collision_prob,
    build_family,
    estimate_eps,
)
from fese.templates import BinaryTemplate, perturb_bsc, perturb_exact, random_template

from conftest import seeded


def hypergeometric_collision(n: int, t: int, d: int) -> float:
    """Independent oracle: P[digest unchanged] for a pair at exact distance d."""
    out = Fraction(1)
    for k in range(t):
        out *= Fraction(n - d - k, n - k)
    return float(out)


def test_full_sampling_is_a_bit_permutation():
    fam = build_family(16, 16, 1, seeded())
    assert sorted(fam.positions[0]) == list(range(16))
    x = random_template(16, seeded(1))
    digest = fam.eval(1, x)
    for out_pos, in_pos in enumerate(fam.positions[0]):
        assert (digest >> (15 - out_pos)) & 1 == x.bit(in_pos)


def test_build_deterministic():
    a = build_family(256, 8, 8, seeded(2))
    b = build_family(256, 8, 8, seeded(2))
    assert a.positions == b.positions


def test_iriscode_scale_configuration():
    fam = build_family(2048, 10, 128, seeded(3))
    assert fam.count == 128
    assert fam.digest_bits == 10
    assert all(len(set(p)) == 10 for p in fam.positions)


def test_disjoint_positions_when_family_fits():
    fam = build_family(256, 8, 8, seeded(4))
    flat = [p for per_func in fam.positions for p in per_func]
    assert len(set(flat)) == len(flat) == 64


def test_build_rejects_bad_parameters():
    with pytest.raises(ParameterError):
        build_family(16, 17, 1, seeded())
    with pytest.raises(ParameterError):
        build_family(16, 4, 0, seeded())


def test_eval_zero_template_gives_zero_digest():
    fam = build_family(64, 6, 4, seeded(5))
    zeros = BinaryTemplate.from_int(64, 0)
    assert all(fam.eval(i, zeros) == 0 for i in range(1, 5))


def test_eval_ignores_unsampled_bits_exhaustively():
    fam = build_family(10, 3, 2, seeded(6))
    x = random_template(10, seeded(7))
    for i in (1, 2):
        sampled = set(fam.positions[i - 1])
        base = fam.eval(i, x)
        for bit in range(10):
            flipped = fam.eval(i, x.flip_positions([bit]))
            if bit in sampled:
                assert flipped != base
            else:
                assert flipped == base


def test_eval_index_out_of_range():
    fam = build_family(16, 4, 2, seeded())
    with pytest.raises(ParameterError):
        fam.eval(3, random_template(16, seeded()))


def test_analytic_extremes():
    assert analytic_collision_prob(0, 2048, 10) == 1.0
    assert analytic_collision_prob(2048, 2048, 10) == 0.0


def test_analytic_direct_evaluation():
    assert analytic_collision_prob(205, 2048, 10) == pytest.approx(0.3483003, abs=1e-6)


def test_analytic_monotone_in_distance_and_width():
    probs = [analytic_collision_prob(r, 256, 8) for r in range(1, 256, 16)]
    assert all(a > b for a, b in zip(probs, probs[1:]))
    widths = [analytic_collision_prob(32, 256, t) for t in range(1, 12)]
    assert all(a > b for a, b in zip(widths, widths[1:]))


def test_empirical_collision_matches_bsc_model():
    # one t=10 function on noisy pairs, flip probability 205/2048
    rng = seeded(8)
    fam = build_family(2048, 10, 1, rng)
    p_flip = 205 / 2048
    trials = 10_000
    hits = 0
    for _ in range(trials):
        x = random_template(2048, rng)
        if fam.eval(1, x) == fam.eval(1, perturb_bsc(x, p_flip, rng)):
            hits += 1
    expected = (1 - p_flip) ** 10
    se = math.sqrt(expected * (1 - expected) / trials)
    assert abs(hits / trials - expected) <= 3 * se
    assert abs(hits / trials - 0.349) <= 0.015


def test_estimate_eps_trivial_cases():
    fam = build_family(64, 4, 4, seeded(9))
    est = estimate_eps(fam, 0, 64, 500, seeded(10))
    assert est.eps_near == 0.0  # identical pairs always collide
    assert est.eps_far == 0.0  # complements never collide on a sampled bit


def test_estimate_eps_near_radius_oracle():
    fam = build_family(256, 8, 8, seeded(11))
    est = estimate_eps(fam, 5, 128, 10_000, seeded(12))
    expected = 1.0 - hypergeometric_collision(256, 8, 5)
    se = math.sqrt(expected * (1 - expected) / 10_000)
    assert abs(est.eps_near - expected) <= 3 * se
    assert abs(est.eps_near - 0.146) <= 0.015


def test_estimate_eps_rejects_zero_trials():
    fam = build_family(16, 4, 2, seeded())
    with pytest.raises(ParameterError):
        estimate_eps(fam, 1, 8, 0, seeded())


def test_descriptor_round_trip():
    fam = build_family(300, 9, 7, seeded(13))
    again = BitSamplingFamily.from_bytes(fam.to_bytes())
    assert again == fam
    assert len(fam.to_bytes()) == fam.descriptor_size()


def test_exact_distance_pairs_match_hypergeometric_oracle():
    # frozen independent oracle for the family's per-function collision rate
    rng = seeded(14)
    fam = build_family(128, 6, 1, rng)
    d, trials = 20, 10_000
    hits = 0
    for _ in range(trials):
        x = random_template(128, rng)
        if fam.eval(1, x) == fam.eval(1, perturb_exact(x, d, rng)):
            hits += 1
    expected = hypergeometric_collision(128, 6, 20)
    se = math.sqrt(expected * (1 - expected) / trials)
    assert abs(hits / trials - expected) <= 3 * se
