"""Enrolment and identification of binary templates, plus experiments.

The identity provider keeps a local registry mapping identifiers to
pseudo-identities; the server never sees either.  Identification runs a
scheme retrieve, fetches each candidate's stored template, decrypts it,
and verifies by Hamming distance against the near radius — the
verification happens at the key holder, which legitimately has both the
fresh template and the secret key at that point.

``run_experiment`` is the statistical harness behind the CLI: synthetic
enrolment, genuine queries through a binary symmetric channel, impostor
queries from fresh random templates, with rate estimates and per-phase
cost accounting.
"""

from __future__ import annotations

import json
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import IndexInconsistencyError, ParameterError
from .protocol import (
    SchemeClient,
    SchemeFrameHandler,
    SchemeParams,
    SecretBundle,
    ServerState,
    scheme_keygen,
)
from . import pir
from .rng import derive_rng
from .templates import BinaryTemplate, hamming_distance, perturb_bsc, random_template


@dataclass(frozen=True, slots=True)
class EnrolledUser:
    pseudo_identity: str
    identifier: int


class IdentityRegistry:
    """Identity-provider-side map from identifier to pseudo-identity."""

    def __init__(self, entries: dict[int, str] | None = None):
        self.entries: dict[int, str] = dict(entries or {})

    def add(self, identifier: int, pseudo_identity: str) -> None:
        if identifier in self.entries:
            raise ParameterError(f"identifier {identifier} already registered")
        self.entries[identifier] = pseudo_identity

    def get(self, identifier: int) -> str | None:
        return self.entries.get(identifier)

    def __len__(self) -> int:
        return len(self.entries)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({str(k): v for k, v in self.entries.items()}, fh, indent=0)

    @classmethod
    def load(cls, path) -> "IdentityRegistry":
        with open(path) as fh:
            raw = json.load(fh)
        return cls({int(k): v for k, v in raw.items()})


def enroll(
    pseudo_identity: str,
    template: BinaryTemplate,
    client: SchemeClient,
    registry: IdentityRegistry,
) -> EnrolledUser:
    """Store one reference template and record its identifier locally."""
    identifier = client.send(template)
    registry.add(identifier, pseudo_identity)
    return EnrolledUser(pseudo_identity, identifier)


@dataclass(frozen=True, slots=True)
class Candidate:
    pseudo_identity: str | None
    identifier: int
    distance: int
    verified: bool
    template: BinaryTemplate | None = None


@dataclass(frozen=True, slots=True)
class IdentificationResult:
    candidates: tuple[Candidate, ...]

    @property
    def matches(self) -> tuple[Candidate, ...]:
        return tuple(c for c in self.candidates if c.verified)

    @property
    def identities(self) -> tuple[str, ...]:
        return tuple(c.pseudo_identity for c in self.matches if c.pseudo_identity)


def identify(
    template: BinaryTemplate,
    client: SchemeClient,
    registry: IdentityRegistry,
    include_templates: bool = False,
) -> IdentificationResult:
    """Retrieve candidates for a fresh template and verify each by distance."""
    near = client.params.near_radius
    candidates = []
    for identifier in sorted(client.retrieve(template)):
        try:
            reference = client.fetch_template(identifier)
        except ParameterError as exc:
            raise IndexInconsistencyError(
                f"identifier {identifier} has no stored record"
            ) from exc
        distance = hamming_distance(template, reference)
        candidates.append(
            Candidate(
                pseudo_identity=registry.get(identifier),
                identifier=identifier,
                distance=distance,
                verified=distance <= near,
                template=reference if include_templates else None,
            )
        )
    return IdentificationResult(tuple(candidates))


@dataclass(frozen=True, slots=True)
class ExperimentConfig:
    params: SchemeParams
    enrolled: int
    genuine_trials: int
    impostor_trials: int
    flip_prob: float
    parallel: int = 1

    def validate(self) -> None:
        self.params.validate()
        if self.enrolled < 1:
            raise ParameterError("need at least one enrolled user")
        if self.genuine_trials < 0 or self.impostor_trials < 0:
            raise ParameterError("trial counts must be non-negative")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ParameterError("flip_prob outside [0, 1]")
        if self.parallel < 1:
            raise ParameterError("parallel must be at least 1")


@dataclass(slots=True)
class ExperimentReport:
    """Key = value statistics emitted by the experiment harness."""

    values: dict = field(default_factory=dict)
    trial_log: list = field(default_factory=list)

    def to_text(self) -> str:
        lines = [f"{k} = {v}" for k, v in self.values.items()]
        return "\n".join(lines) + "\n"

    def write_trial_log(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("kind,trial,distance,retrieved,candidates,verified\n")
            for row in self.trial_log:
                fh.write(",".join(str(x) for x in row) + "\n")


def run_experiment(config: ExperimentConfig, master_seed: bytes) -> ExperimentReport:
    """Enrol synthetic users, then measure genuine and impostor behaviour.

    Reports empirical completeness failure (eta_c) and soundness failure
    (eta_s) rates, candidate-list sizes before verification, operation
    counts mirroring the per-request cost decomposition, and wall-clock
    per phase.
    """
    config.validate()
    params = config.params
    public, secret, state = scheme_keygen(params, master_seed)
    enrol_rng = derive_rng(master_seed, "experiment-enroll")
    registry = IdentityRegistry()

    t0 = time.perf_counter()
    writer = _client(secret, state, derive_rng(master_seed, "experiment-writer"),
                     derive_rng(master_seed, "experiment-server"))
    references: list[BinaryTemplate] = []
    for k in range(config.enrolled):
        template = random_template(params.template_bits, enrol_rng)
        references.append(template)
        enroll(f"user-{k:05d}", template, writer, registry)
    t_enroll = time.perf_counter() - t0

    genuine_rows, t_genuine = _run_phase(
        config, secret, state, master_seed, registry, references, genuine=True
    )
    impostor_rows, t_impostor = _run_phase(
        config, secret, state, master_seed, registry, references, genuine=False
    )

    report = ExperimentReport()
    v = report.values
    v["enrolled"] = config.enrolled
    v["template_bits"] = params.template_bits
    v["digest_bits"] = params.digest_bits
    v["lsh_count"] = params.lsh_count
    v["bloom_count"] = params.bloom_count
    v["bucket_count"] = params.bucket_count
    v["bucket_capacity"] = params.bucket_capacity
    v["match_threshold"] = params.match_threshold
    v["mode"] = params.mode
    v["transport"] = params.transport
    v["flip_prob"] = config.flip_prob
    v["genuine_trials"] = config.genuine_trials
    v["impostor_trials"] = config.impostor_trials

    if genuine_rows:
        retrieved = np.array([r[3] for r in genuine_rows])
        verified = np.array([r[5] for r in genuine_rows])
        v["eta_c"] = float(1.0 - retrieved.mean())
        v["completeness_rate"] = float(retrieved.mean())
        v["genuine_verified_rate"] = float(verified.mean())
        v["genuine_distance_mean"] = float(np.mean([r[2] for r in genuine_rows]))
    if impostor_rows:
        nonempty = np.array([r[4] > 0 for r in impostor_rows])
        false_verified = np.array([r[5] for r in impostor_rows])
        v["eta_s"] = float(nonempty.mean())
        v["impostor_nonempty"] = int(nonempty.sum())
        v["impostor_false_match"] = int(false_verified.sum())
    sizes = [r[4] for r in genuine_rows + impostor_rows]
    if sizes:
        v["candidates_mean"] = float(np.mean(sizes))
        v["candidates_max"] = int(np.max(sizes))

    v["hash_evals_per_retrieve"] = params.family_size
    v["decryptions_cap_per_retrieve"] = params.family_size * params.bucket_capacity
    v["phase_enroll_seconds"] = round(t_enroll, 3)
    v["phase_genuine_seconds"] = round(t_genuine, 3)
    v["phase_impostor_seconds"] = round(t_impostor, 3)
    report.trial_log = genuine_rows + impostor_rows
    return report


def _client(secret: SecretBundle, state: ServerState, rng, server_rng) -> SchemeClient:
    handler = SchemeFrameHandler(state, server_rng)
    return SchemeClient(secret, pir.LocalChannel(handler), rng)


def _run_phase(config, secret, state, master_seed, registry, references, genuine):
    """One query phase; returns trial rows and elapsed seconds.

    Row layout: kind, trial, distance, retrieved_flag, candidate_count,
    verified_flag.  Workers get their own channel and derived RNG; the
    state is only read during queries, so concurrent workers are safe.
    """
    kind = "genuine" if genuine else "impostor"
    trials = config.genuine_trials if genuine else config.impostor_trials
    params = config.params

    def worker(bounds):
        lo, hi = bounds
        rng = derive_rng(master_seed, f"experiment-{kind}-{lo}")
        client = _client(
            secret, state, rng, derive_rng(master_seed, f"experiment-server-{kind}-{lo}")
        )
        rows = []
        for trial in range(lo, hi):
            if genuine:
                target_idx = rng.randrange(len(references))
                target = references[target_idx]
                probe = perturb_bsc(target, config.flip_prob, rng)
                expected_id = target_idx + 1
                distance = hamming_distance(target, probe)
            else:
                probe = random_template(params.template_bits, rng)
                expected_id = None
                distance = -1
            result = identify(probe, client, registry)
            retrieved = (
                any(c.identifier == expected_id for c in result.candidates)
                if genuine
                else False
            )
            rows.append(
                (
                    kind,
                    trial,
                    distance,
                    int(retrieved),
                    len(result.candidates),
                    int(
                        any(c.identifier == expected_id for c in result.matches)
                        if genuine
                        else len(result.matches) > 0
                    ),
                )
            )
        return rows

    t0 = time.perf_counter()
    if trials == 0:
        return [], 0.0
    if config.parallel <= 1:
        rows = worker((0, trials))
    else:
        step = -(-trials // config.parallel)
        chunks = [(lo, min(lo + step, trials)) for lo in range(0, trials, step)]
        with ThreadPoolExecutor(max_workers=config.parallel) as pool:
            rows = [row for part in pool.map(worker, chunks) for row in part]
    return rows, time.perf_counter() - t0
