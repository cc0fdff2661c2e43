"""Deterministic harnesses for the three indistinguishability games.

Each game runs scripted protocol flows over recording channels and hands
back the observed views, so tests can assert the strongest mechanically
checkable statement: byte-identical transcripts for the oblivious-batch
receiver game, length-and-sequence equality for the sender game, and a
structure-plus-results match against a results-only simulator for the
symmetric receiver game.  These are observable-consequence checks, not
reductions.
"""

from __future__ import annotations

import random
import struct
from dataclasses import dataclass

from . import crypto, pir
from .errors import ParameterError
from .protocol import (
    DIGEST_SIZE,
    MODE_EXTENDED,
    SchemeClient,
    SecretBundle,
    ServerState,
    TRANSPORT_RESTRICTED,
    capture_view,
    header_digest,
    local_client,
    slot_width,
)
from .rng import derive_rng
from .templates import BinaryTemplate


def sender_views(
    bundle, state: ServerState, x0: BinaryTemplate, x1: BinaryTemplate, seed: bytes
) -> tuple[pir.Transcript, pir.Transcript]:
    """Server views of send(x0) vs send(x1) from identical starting states.

    The state is cloned so both runs start from the same bytes and the
    client randomness is re-derived, so any view difference comes from
    the challenged template alone.
    """
    views = []
    for x in (x0, x1):
        views.append(
            capture_view(
                lambda c, t=x: c.send(t),
                bundle,
                state.clone(),
                derive_rng(seed, "sender-game-client"),
                server_rng=derive_rng(seed, "sender-game-server"),
            )
        )
    return views[0], views[1]


def receiver_views(
    bundle: SecretBundle,
    state: ServerState,
    q0: BinaryTemplate,
    q1: BinaryTemplate,
    seed: bytes,
) -> tuple[pir.Transcript, pir.Transcript]:
    """Server views of retrieve(q0) vs retrieve(q1) on the same state."""
    views = []
    for q in (q0, q1):
        views.append(
            capture_view(
                lambda c, t=q: c.retrieve(t),
                bundle,
                state.clone(),
                derive_rng(seed, "receiver-game-client"),
                server_rng=derive_rng(seed, "receiver-game-server"),
            )
        )
    return views[0], views[1]


class SimulatorHandler:
    """Results-only stand-in for the server in the symmetric game.

    Knows the identifiers the retrieve is entitled to (and public key
    material), nothing else.  Matching identifiers are freshly split into
    shares and planted in every response; all other slots are filler with
    per-bucket marker exponents remembered so repeated queries stay
    consistent.
    """

    def __init__(self, bundle: SecretBundle, result_ids: set[int], rng: random.Random):
        pub = bundle.public_bundle
        self.params = pub.params
        self.group = pub.group
        self.public = pub.public
        self.rng = rng
        self.header_digest = header_digest(pub)
        group = self.group
        n = self.params.family_size
        self.c1 = group.random_exponent(rng)
        self.c2 = group.random_exponent(rng)
        # one marker exponent and one fresh share split per entitled id
        self.matched = []
        for phi in sorted(result_ids):
            z = group.random_exponent(rng)
            shares = crypto.split_secret(phi, n, group, rng)
            self.matched.append((group.pow(group.gen2, z), shares.shares))
        self._responses: dict[int, bytes] = {}
        self._query_counter = 0

    def new_session(self) -> dict:
        return {}

    def handle(self, frame: pir.Frame, session: dict) -> pir.Frame:
        group = self.group
        if frame.ftype == pir.RETRIEVE_BEGIN:
            self._query_counter = 0
            return pir.Frame(
                pir.RERAND_PUB,
                self.header_digest + group.encode(group.pow(group.gen, self.c2)),
            )
        if frame.ftype == pir.QUERY_DIRECT:
            _, alpha = struct.unpack(">BI", frame.payload)
            self._query_counter += 1
            if alpha not in self._responses:
                self._responses[alpha] = self._fabricate(self._query_counter - 1)
            return pir.Frame(pir.RESP_BUCKET, self._responses[alpha])
        raise ParameterError(f"simulator cannot answer {frame.name}")

    def _fabricate(self, func_index: int) -> bytes:
        """One bucket: entitled (marker, share-i) couples, then filler."""
        group, rng = self.group, self.rng
        if len(self.matched) > self.params.bucket_capacity:
            raise ParameterError("more results than bucket slots")
        slots = []
        for marker, shares in self.matched:
            m_ct = crypto.eg_pow(
                group, crypto.eg_encrypt(group, self.public, marker, rng), self.c1
            )
            s_ct = crypto.eg_pow(
                group,
                crypto.eg_encrypt(group, self.public, shares[func_index], rng),
                self.c2,
            )
            slots.append(m_ct.encode(group) + s_ct.encode(group))
        while len(slots) < self.params.bucket_capacity:
            z = group.random_exponent(rng)
            m_ct = crypto.eg_pow(
                group,
                crypto.eg_encrypt(group, self.public, group.pow(group.gen2, z), rng),
                self.c1,
            )
            s_ct = crypto.eg_encrypt(group, self.public, group.random_element(rng), rng)
            slots.append(m_ct.encode(group) + s_ct.encode(group))
        return b"".join(slots)


@dataclass(frozen=True, slots=True)
class SymmetricRun:
    """Client-side observations against the real server and the simulator."""

    view_real: pir.Transcript
    view_sim: pir.Transcript
    results_real: set[int]
    results_sim: set[int]
    stray_decodes_real: int
    stray_decodes_sim: int


def symmetric_run(
    bundle: SecretBundle, state: ServerState, query: BinaryTemplate, seed: bytes
) -> SymmetricRun:
    """Run one retrieve against the real server and a results-only simulator.

    Requires extended mode over the restricted transport.  Alongside the
    two client views and result sets, counts how many partial share
    products (markers NOT present in every response) decode to a valid
    identifier — for both servers these should be none, i.e. partial
    knowledge is indistinguishable from randomness.
    """
    params = bundle.public_bundle.params
    if params.mode != MODE_EXTENDED or params.transport != TRANSPORT_RESTRICTED:
        raise ParameterError("symmetric game runs in extended mode over restricted transport")

    # reference answer, computed on a clone so the challenged state is untouched
    ref = local_client(bundle, state.clone(), derive_rng(seed, "sym-ref"),
                       server_rng=derive_rng(seed, "sym-ref-server"))
    entitled = ref.retrieve(query)

    client_real = local_client(
        bundle, state.clone(), derive_rng(seed, "sym-client"),
        server_rng=derive_rng(seed, "sym-real-server"), record=True,
    )
    results_real = client_real.retrieve(query)
    view_real = client_real.channel.transcript

    sim = SimulatorHandler(bundle, entitled, derive_rng(seed, "sym-simulator"))
    sim_channel = pir.LocalChannel(sim, record=True)
    client_sim = SchemeClient(bundle, sim_channel, derive_rng(seed, "sym-client"))
    results_sim = client_sim.retrieve(query)
    view_sim = sim_channel.transcript

    return SymmetricRun(
        view_real=view_real,
        view_sim=view_sim,
        results_real=results_real,
        results_sim=results_sim,
        stray_decodes_real=_stray_decodes(bundle, view_real),
        stray_decodes_sim=_stray_decodes(bundle, view_sim),
    )


def _stray_decodes(bundle: SecretBundle, view: pir.Transcript) -> int:
    """Decode the recorded responses and probe partial share products.

    For every marker seen in some but not all bucket responses, multiply
    the shares it did reveal and try the bounded discrete log; a success
    would mean partial share sets carry identifier information.
    """
    pub = bundle.public_bundle
    group = pub.group
    width = slot_width(group)
    base = None
    buckets = []
    for direction, frame in view.entries:
        if direction != "s2c":
            continue
        if frame.ftype == pir.RERAND_PUB:
            base = group.decode(frame.payload[DIGEST_SIZE:])
        elif frame.ftype == pir.RESP_BUCKET:
            buckets.append(frame.payload)
    marker_sets = []
    pairs = set()
    for bucket in buckets:
        markers = set()
        for slot in pir.BucketStore.split_bucket(bucket, width):
            half = width // 2
            marker = crypto.eg_decrypt(
                group, bundle.secret, crypto.Ciphertext.decode(group, slot[:half])
            )
            share = crypto.eg_decrypt(
                group, bundle.secret, crypto.Ciphertext.decode(group, slot[half:])
            )
            markers.add(marker)
            pairs.add((marker, share))
        marker_sets.append(markers)
    everywhere = set.intersection(*marker_sets) if marker_sets else set()
    partial = set.union(*marker_sets) - everywhere if marker_sets else set()
    bound = 1 << pub.params.tag_bits
    stray = 0
    for marker in partial:
        product = crypto.combine_shares(group, [s for (mk, s) in pairs if mk == marker])
        if crypto.discrete_log_small(group, base, product, bound) is not None:
            stray += 1
    return stray
