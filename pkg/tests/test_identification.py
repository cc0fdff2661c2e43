import pytest

from fese.errors import IndexInconsistencyError, ParameterError
from fese.identification import (
    ExperimentConfig,
    IdentityRegistry,
    enroll,
    identify,
    run_experiment,
)
from fese.protocol import SchemeParams, local_client, scheme_keygen, with_overrides
from fese.rng import derive_rng
from fese.templates import random_template

from conftest import master, seeded


def build(params, seed=None):
    seed = seed or master(20)
    public, secret, state = scheme_keygen(params, seed)
    client = local_client(secret, state, derive_rng(seed, "id-client"),
                          server_rng=derive_rng(seed, "id-server"))
    return public, secret, state, client


def test_enroll_then_identify_exact(small_params):
    _, _, _, client = build(small_params)
    registry = IdentityRegistry()
    b = random_template(64, seeded(30))
    user = enroll("alice", b, client, registry)
    result = identify(b, client, registry)
    assert user.pseudo_identity in result.identities
    match = result.matches[0]
    assert match.identifier == user.identifier
    assert match.distance == 0 and match.verified


def test_registry_assigns_distinct_identifiers(small_params):
    _, _, state, client = build(small_params)
    registry = IdentityRegistry()
    rng = seeded(31)
    users = [enroll(f"u{k}", random_template(64, rng), client, registry) for k in range(12)]
    assert len({u.identifier for u in users}) == 12
    assert len(registry) == 12


def test_server_never_sees_identity_strings(small_params):
    _, _, state, client = build(small_params)
    registry = IdentityRegistry()
    enroll("carol-utf8-identity", random_template(64, seeded(32)), client, registry)
    image = bytes(state.service.store.to_bytes())
    cells = b"".join(state.data_cells)
    assert b"carol" not in image and b"carol" not in cells


def test_registry_save_load(tmp_path, small_params):
    registry = IdentityRegistry()
    registry.add(1, "alice")
    registry.add(2, "bob")
    path = tmp_path / "registry.json"
    registry.save(path)
    again = IdentityRegistry.load(path)
    assert again.entries == registry.entries


def test_impostor_yields_empty_result(small_params):
    _, _, _, client = build(small_params)
    registry = IdentityRegistry()
    rng = seeded(33)
    for k in range(10):
        enroll(f"u{k}", random_template(64, rng), client, registry)
    for _ in range(30):
        result = identify(random_template(64, rng), client, registry)
        assert result.matches == ()


def test_candidate_failing_verification_is_flagged_not_matched(small_params):
    # flip only unsampled bits beyond the near radius: retrieval still
    # succeeds (projections unchanged) but verification must reject
    params = with_overrides(small_params, near_radius=3)
    public, _, _, client = build(params)
    registry = IdentityRegistry()
    b = random_template(64, seeded(34))
    user = enroll("dave", b, client, registry)
    sampled = {p for per in public.lsh.positions for p in per}
    unsampled = [i for i in range(64) if i not in sampled]
    assert len(unsampled) >= 5
    probe = b.flip_positions(unsampled[:5])
    result = identify(probe, client, registry)
    found = [c for c in result.candidates if c.identifier == user.identifier]
    assert found and not found[0].verified and found[0].distance == 5
    assert user.pseudo_identity not in result.identities


def test_identify_can_return_reference_templates(small_params):
    _, _, _, client = build(small_params)
    registry = IdentityRegistry()
    b = random_template(64, seeded(35))
    enroll("erin", b, client, registry)
    result = identify(b, client, registry, include_templates=True)
    assert result.matches[0].template == b
    bare = identify(b, client, registry)
    assert bare.matches[0].template is None


def test_unknown_identifier_raises_index_inconsistency(small_params):
    _, _, state, client = build(small_params)
    registry = IdentityRegistry()
    b = random_template(64, seeded(36))
    enroll("frank", b, client, registry)
    state.next_id = 1  # simulate index/data-store divergence
    with pytest.raises(IndexInconsistencyError):
        identify(b, client, registry)


def test_experiment_report_fields_and_rates(small_params):
    config = ExperimentConfig(
        params=small_params,
        enrolled=15,
        genuine_trials=40,
        impostor_trials=40,
        flip_prob=0.01,
    )
    report = run_experiment(config, master(21))
    v = report.values
    for key in (
        "eta_c",
        "eta_s",
        "completeness_rate",
        "genuine_verified_rate",
        "candidates_mean",
        "candidates_max",
        "phase_enroll_seconds",
        "hash_evals_per_retrieve",
    ):
        assert key in v, key
    assert v["eta_s"] == 0.0
    assert v["completeness_rate"] > 0.8  # flip 0.01 on 64 bits barely misses
    assert v["hash_evals_per_retrieve"] == small_params.family_size
    assert len(report.trial_log) == 80


def test_experiment_parallel_matches_rates(small_params):
    base = ExperimentConfig(
        params=small_params, enrolled=10, genuine_trials=24, impostor_trials=24,
        flip_prob=0.01,
    )
    seq = run_experiment(base, master(22))
    par = run_experiment(
        ExperimentConfig(
            params=small_params, enrolled=10, genuine_trials=24, impostor_trials=24,
            flip_prob=0.01, parallel=4,
        ),
        master(22),
    )
    # identical seeds per chunk produce identical trial outcomes
    assert seq.values["eta_s"] == par.values["eta_s"] == 0.0


def test_experiment_config_validation(small_params):
    with pytest.raises(ParameterError):
        ExperimentConfig(small_params, 0, 1, 1, 0.1).validate()
    with pytest.raises(ParameterError):
        ExperimentConfig(small_params, 1, 1, 1, 1.5).validate()


def test_hao_regime_impostor_candidates_stay_small():
    # wide family, deep digests, permissive group threshold: impostor
    # candidate lists stay under one on average (binomial tail oracle:
    # per-function collision at half distance is 2^-10, and three whole
    # groups must agree)
    params = SchemeParams(
        template_bits=2048,
        digest_bits=10,
        lsh_count=128,
        bloom_count=3,
        bucket_count=8192,
        bucket_capacity=14,
        match_threshold=9,  # 3 whole groups of 3
        near_radius=205,
        far_radius=820,
        tag_bits=20,
        group_name="toy61",
    )
    config = ExperimentConfig(
        params=params, enrolled=60, genuine_trials=0, impostor_trials=60,
        flip_prob=0.05,
    )
    report = run_experiment(config, master(23))
    assert report.values["candidates_mean"] < 1.0
    assert report.values["impostor_false_match"] == 0
