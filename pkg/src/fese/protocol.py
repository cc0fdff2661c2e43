"""Store and error-tolerant retrieve over an encrypted bucket index.

``scheme_keygen`` builds the key material and a server whose buckets are
padded to a fixed capacity with encryptions of random elements, so a
bucket's fill level is invisible.  ``SchemeClient.send`` stores a
payload-encrypted template and indexes it: every one of the mu*nu
composite hash values of the template receives one slot holding a pair
of ElGamal ciphertexts (marker, value).

Two indexing modes share the slot format:

* ``base``     — value encrypts ``gen**identifier``; the marker is random
  filler.  Retrieval decrypts the values of every addressed bucket,
  intersects per hash group, and takes bounded discrete logs of the
  winners (with a memo table).
* ``extended`` — the identifier is split into mu*nu multiplicative
  shares; slot k holds (Enc(gen2**r_x), Enc(share_k)).  On retrieval the
  server re-randomizes each response bucket with fresh session exponents
  (c1 on markers, c2 on values) and discloses ``gen**c2``; a marker
  present in every response reassembles to ``(gen**c2)**identifier``.
  The receiver learns nothing usable from partial share sets.

The transport field decides what the server observes: ``direct`` (bucket
indices in clear), ``oblivious-batch`` (whole-store transfers, views
independent of the query), or ``restricted`` (direct indices, responses
re-randomized per session).
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass, replace

from . import crypto, pir
from .bloom import CompositeFamily
from .errors import CorruptShareError, FormatError, ParameterError, ProtocolError
from .lsh import BitSamplingFamily, build_family
from .rng import derive_key, derive_rng
from .templates import BinaryTemplate, MatchThresholds

MODE_BASE = "base"
MODE_EXTENDED = "extended"
TRANSPORT_DIRECT = "direct"
TRANSPORT_BATCH = "oblivious-batch"
TRANSPORT_RESTRICTED = "restricted"

_MODES = (MODE_BASE, MODE_EXTENDED)
_TRANSPORTS = (TRANSPORT_DIRECT, TRANSPORT_BATCH, TRANSPORT_RESTRICTED)


@dataclass(frozen=True, slots=True)
class SchemeParams:
    """Every tunable of one system instance; serialized into all headers."""

    template_bits: int
    digest_bits: int
    lsh_count: int
    bloom_count: int
    bucket_count: int
    bucket_capacity: int
    match_threshold: int
    near_radius: int
    far_radius: int
    tag_bits: int = 32
    group_name: str = "modp2048"
    mode: str = MODE_BASE
    transport: str = TRANSPORT_DIRECT

    @property
    def family_size(self) -> int:
        return self.lsh_count * self.bloom_count

    @property
    def thresholds(self) -> MatchThresholds:
        return MatchThresholds(self.near_radius, self.far_radius)

    def validate(self) -> None:
        if not 1 <= self.template_bits <= 0xFFFF:
            raise ParameterError("template_bits outside [1, 65535]")
        if not 1 <= self.digest_bits <= self.template_bits:
            raise ParameterError("digest_bits outside [1, template_bits]")
        if self.lsh_count < 1 or self.bloom_count < 1:
            raise ParameterError("need at least one hash in each family")
        if self.bucket_count < 1 or self.bucket_capacity < 1:
            raise ParameterError("store dimensions must be positive")
        if not 1 <= self.match_threshold <= self.family_size:
            raise ParameterError(
                f"match_threshold outside [1, {self.family_size}]"
            )
        self.thresholds.validate(self.template_bits)
        if not 1 <= self.tag_bits <= 32:
            raise ParameterError("tag_bits outside [1, 32]")
        crypto.get_group(self.group_name)
        if self.mode not in _MODES:
            raise ParameterError(f"mode must be one of {_MODES}")
        if self.transport not in _TRANSPORTS:
            raise ParameterError(f"transport must be one of {_TRANSPORTS}")
        if self.mode == MODE_EXTENDED:
            if self.match_threshold != self.family_size:
                raise ParameterError(
                    "extended mode reassembles secrets from all shares; "
                    "match_threshold must equal lsh_count * bloom_count"
                )
            if self.transport == TRANSPORT_DIRECT:
                raise ParameterError(
                    "extended mode needs a re-randomizing transport "
                    "(restricted or oblivious-batch)"
                )

    # -- wire form -----------------------------------------------------

    def to_bytes(self) -> bytes:
        g = self.group_name.encode()
        return (
            struct.pack(
                ">HHHHIHHHHB",
                self.template_bits,
                self.digest_bits,
                self.lsh_count,
                self.bloom_count,
                self.bucket_count,
                self.bucket_capacity,
                self.match_threshold,
                self.near_radius,
                self.far_radius,
                self.tag_bits,
            )
            + bytes([_MODES.index(self.mode), _TRANSPORTS.index(self.transport), len(g)])
            + g
        )

    @classmethod
    def from_bytes(cls, data: bytes) -> tuple["SchemeParams", int]:
        fixed = struct.calcsize(">HHHHIHHHHB")
        if len(data) < fixed + 3:
            raise FormatError("parameter block truncated")
        vals = struct.unpack_from(">HHHHIHHHHB", data)
        mode_i, transport_i, glen = data[fixed : fixed + 3]
        end = fixed + 3 + glen
        if len(data) < end:
            raise FormatError("parameter block truncated")
        try:
            params = cls(
                *vals,
                group_name=data[fixed + 3 : end].decode(),
                mode=_MODES[mode_i],
                transport=_TRANSPORTS[transport_i],
            )
        except IndexError as exc:
            raise FormatError("bad mode or transport byte") from exc
        return params, end

    @property
    def query_mode(self) -> str:
        return pir.QueryModes.BATCH if self.transport == TRANSPORT_BATCH else pir.QueryModes.DIRECT

    @property
    def update_mode(self) -> str:
        return (
            pir.UpdateModes.DIRECT
            if self.transport == TRANSPORT_DIRECT
            else pir.UpdateModes.REWRITE
        )

    @property
    def rerandomizes(self) -> bool:
        """Whether retrieve sessions re-randomize server responses."""
        return self.mode == MODE_EXTENDED or self.transport == TRANSPORT_RESTRICTED


def slot_width(group: crypto.PrimeOrderGroup) -> int:
    # one slot = marker ciphertext + value ciphertext
    return 4 * group.element_bytes


def payload_width(params: SchemeParams, group: crypto.PrimeOrderGroup) -> int:
    template_blob = 8 + (params.template_bits + 7) // 8
    return crypto.payload_ciphertext_size(group, template_blob)


@dataclass(frozen=True, slots=True)
class PublicBundle:
    """Everything a sender needs: parameters, hashes, and the public key."""

    params: SchemeParams
    public: int
    lsh: BitSamplingFamily
    bloom_key: bytes

    @property
    def group(self) -> crypto.PrimeOrderGroup:
        return crypto.get_group(self.params.group_name)

    def composite(self) -> CompositeFamily:
        return CompositeFamily(
            self.lsh, self.params.bloom_count, self.params.bucket_count, self.bloom_key
        )


@dataclass(frozen=True, slots=True)
class SecretBundle:
    public_bundle: PublicBundle
    secret: int


DIGEST_SIZE = 16


def bloom_key_fingerprint(bloom_key: bytes) -> bytes:
    return hashlib.blake2b(bloom_key, person=b"fese-bkfp", digest_size=DIGEST_SIZE).digest()


def header_bytes(bundle: PublicBundle) -> bytes:
    """Self-describing header shared by key bundles and index files."""
    return (
        bundle.params.to_bytes()
        + bundle.lsh.to_bytes()
        + bloom_key_fingerprint(bundle.bloom_key)
        + bundle.group.encode(bundle.public)
    )


def header_digest(bundle: PublicBundle) -> bytes:
    """Short fingerprint guarding against parameter drift between peers."""
    return hashlib.blake2b(
        header_bytes(bundle), person=b"fese-hdr", digest_size=DIGEST_SIZE
    ).digest()


class ServerState:
    """What the database holds: padded buckets, payload cells, a counter."""

    def __init__(
        self,
        params: SchemeParams,
        service: pir.BucketService,
        data_cells: list[bytes],
        next_id: int = 1,
        header_digest: bytes = b"\x00" * DIGEST_SIZE,
    ):
        self.params = params
        self.service = service
        self.data_cells = data_cells
        self.next_id = next_id
        self.header_digest = header_digest

    @property
    def group(self) -> crypto.PrimeOrderGroup:
        return crypto.get_group(self.params.group_name)

    def clone(self) -> "ServerState":
        return ServerState(
            self.params,
            pir.BucketService(self.service.store.clone(), list(self.service.occupancy)),
            list(self.data_cells),
            self.next_id,
            self.header_digest,
        )


def scheme_keygen(
    params: SchemeParams, master_seed: bytes
) -> tuple[PublicBundle, SecretBundle, ServerState]:
    """Generate keys, hash families, and a fresh padded server.

    Deterministic in the master seed: the same seed reproduces identical
    public parameters, keys, and initial store bytes.
    """
    params.validate()
    group = crypto.get_group(params.group_name)
    keypair = crypto.keygen(group, derive_rng(master_seed, "elgamal"))
    lsh = build_family(
        params.template_bits,
        params.digest_bits,
        params.lsh_count,
        derive_rng(master_seed, "lsh"),
    )
    bloom_key = derive_key(master_seed, "bloom-key")

    store = pir.BucketStore(params.bucket_count, params.bucket_capacity, slot_width(group))
    pad_rng = derive_rng(master_seed, "padding")
    w = group.element_bytes
    for alpha in range(1, params.bucket_count + 1):
        for slot in range(params.bucket_capacity):
            # four uniform elements: exactly the distribution of two
            # fresh encryptions of random plaintexts
            blob = b"".join(group.encode(group.random_element(pad_rng)) for _ in range(4))
            assert len(blob) == 4 * w
            store.set_slot(alpha, slot, blob)

    public = PublicBundle(params, keypair.public, lsh, bloom_key)
    secret = SecretBundle(public, keypair.secret)
    state = ServerState(
        params, pir.BucketService(store), [], header_digest=header_digest(public)
    )
    return public, secret, state


class SchemeFrameHandler:
    """Server-side frame dispatch over one ``ServerState``.

    Retrieve sessions that re-randomize draw fresh (c1, c2) at
    RETRIEVE_BEGIN; any write frame ends the session.
    """

    def __init__(self, state: ServerState, rng: random.Random):
        self.state = state
        self.rng = rng
        self.group = state.group
        self._slot_width = slot_width(self.group)
        self._payload_width = payload_width(state.params, self.group)

    def new_session(self) -> dict:
        return {}

    def handle(self, frame: pir.Frame, session: dict) -> pir.Frame:
        try:
            return self._dispatch(frame, session)
        except pir.BucketOverflowError as exc:
            return pir.err_frame(pir.ERR_OVERFLOW, exc.bucket, str(exc))
        except ParameterError as exc:
            return pir.err_frame(pir.ERR_RANGE, 0, str(exc))
        except FormatError as exc:
            return pir.err_frame(pir.ERR_FORMAT, 0, str(exc))
        except ProtocolError as exc:
            return pir.err_frame(pir.ERR_STATE, 0, str(exc))

    def _dispatch(self, frame: pir.Frame, session: dict) -> pir.Frame:
        t = frame.ftype
        p = frame.payload
        if t == pir.SEND_INIT:
            session.pop("rerand", None)
            phi = self.state.next_id
            if phi >= 1 << self.state.params.tag_bits:
                raise ProtocolError("identifier space exhausted")
            self.state.next_id += 1
            self.state.data_cells.append(b"\x00" * self._payload_width)
            return pir.Frame(
                pir.SEND_ID, struct.pack(">I", phi) + self.state.header_digest
            )
        if t == pir.SEND_PAYLOAD:
            session.pop("rerand", None)
            (phi,) = struct.unpack_from(">I", p)
            cell = p[4:]
            if len(cell) != self._payload_width:
                raise FormatError(
                    f"payload cell must be {self._payload_width} bytes, got {len(cell)}"
                )
            self._check_phi(phi)
            self.state.data_cells[phi - 1] = cell
            return pir.Frame(pir.ACK)
        if t == pir.SEND_INDEX:
            session.pop("rerand", None)
            phi, count = struct.unpack(">IH", p)
            self._check_phi(phi)
            if count != self.state.params.family_size:
                raise ProtocolError(
                    f"expected {self.state.params.family_size} index slots, declared {count}"
                )
            return pir.Frame(pir.ACK)
        if t == pir.RETRIEVE_BEGIN:
            session.pop("rerand", None)
            if not self.state.params.rerandomizes:
                return pir.Frame(pir.ACK, self.state.header_digest)
            c1 = self.group.random_exponent(self.rng)
            c2 = self.group.random_exponent(self.rng)
            session["rerand"] = (c1, c2)
            session.pop("image", None)
            return pir.Frame(
                pir.RERAND_PUB,
                self.state.header_digest
                + self.group.encode(self.group.pow(self.group.gen, c2)),
            )
        if t == pir.QUERY_DIRECT:
            store_id, index = struct.unpack(">BI", p)
            if store_id == pir.STORE_DATA:
                self._check_phi(index)
                return pir.Frame(pir.RESP_BUCKET, self.state.data_cells[index - 1])
            bucket = self.state.service.store.bucket_bytes(index)
            if "rerand" in session:
                bucket = self._transform_bucket(bucket, session["rerand"])
            return pir.Frame(pir.RESP_BUCKET, bucket)
        if t == pir.QUERY_BATCH:
            store_id = p[0]
            if store_id == pir.STORE_DATA:
                body = struct.pack(">I", len(self.state.data_cells)) + b"".join(
                    self.state.data_cells
                )
                return pir.Frame(pir.RESP_STORE, body)
            image = self.state.service.store.to_bytes()
            if "rerand" in session:
                if "image" not in session:
                    session["image"] = self._transform_image(image, session["rerand"])
                image = session["image"]
            return pir.Frame(pir.RESP_STORE, image)
        if t == pir.UPDATE_DIRECT:
            session.pop("rerand", None)
            store_id, alpha = struct.unpack_from(">BI", p)
            if store_id != pir.STORE_BUCKETS:
                raise ParameterError("payload cells are written via SEND_PAYLOAD")
            self.state.service.insert_direct(alpha, p[5:])
            return pir.Frame(pir.ACK)
        if t == pir.UPDATE_REWRITE:
            session.pop("rerand", None)
            if p[0] != pir.STORE_BUCKETS:
                raise ParameterError("payload cells are written via SEND_PAYLOAD")
            self.state.service.replace_image(p[1:])
            return pir.Frame(pir.ACK)
        raise ProtocolError(f"unexpected frame {frame.name}")

    def _check_phi(self, phi: int) -> None:
        if not 1 <= phi < self.state.next_id:
            raise ParameterError(f"unknown identifier {phi}")

    def _transform_bucket(self, bucket: bytes, exponents: tuple[int, int]) -> bytes:
        c1, c2 = exponents
        group = self.group
        out = bytearray()
        for slot in pir.BucketStore.split_bucket(bucket, self._slot_width):
            half = self._slot_width // 2
            marker = crypto.Ciphertext.decode(group, slot[:half])
            value = crypto.Ciphertext.decode(group, slot[half:])
            out += crypto.eg_pow(group, marker, c1).encode(group)
            out += crypto.eg_pow(group, value, c2).encode(group)
        return bytes(out)

    def _transform_image(self, image: bytes, exponents: tuple[int, int]) -> bytes:
        width = self.state.service.store.bucket_width
        return b"".join(
            self._transform_bucket(image[off : off + width], exponents)
            for off in range(0, len(image), width)
        )


class SchemeClient:
    """Sender/receiver logic over one channel.

    Construct with a ``PublicBundle`` to send, a ``SecretBundle`` to also
    retrieve.  ``stats`` counts hash evaluations, decryptions, discrete
    logs, and transferred bucket bytes for the cost accounting.
    """

    def __init__(self, bundle, channel, rng: random.Random):
        if isinstance(bundle, SecretBundle):
            self.public_bundle = bundle.public_bundle
            self._secret = bundle.secret
        else:
            self.public_bundle = bundle
            self._secret = None
        self.params = self.public_bundle.params
        self.group = self.public_bundle.group
        self.channel = channel
        self.rng = rng
        self.comp = self.public_bundle.composite()
        self.pir = pir.PirClient(
            channel,
            self.params.bucket_count,
            self.params.bucket_capacity,
            slot_width(self.group),
            query_mode=self.params.query_mode,
            update_mode=self.params.update_mode,
            group=self.group,
            public=self.public_bundle.public,
            rng=rng,
        )
        self.stats = {"hash_evals": 0, "decryptions": 0, "dlogs": 0}
        self.header_digest = header_digest(self.public_bundle)
        self._dlog_plain: crypto.DlogTable | None = None
        self._dlog_memo: dict[int, int] = {}

    # -- helpers -------------------------------------------------------

    @property
    def transferred_bytes(self) -> int:
        return self.pir.transferred_bytes

    def _require_secret(self) -> int:
        if self._secret is None:
            raise ParameterError("operation needs the secret bundle")
        return self._secret

    def _check_digest(self, observed: bytes) -> None:
        if observed[:DIGEST_SIZE] != self.header_digest:
            raise FormatError(
                "header mismatch: the server runs different scheme parameters"
            )

    def _encrypt(self, element: int) -> crypto.Ciphertext:
        return crypto.eg_encrypt(self.group, self.public_bundle.public, element, self.rng)

    def _decrypt(self, ct: crypto.Ciphertext) -> int:
        self.stats["decryptions"] += 1
        return crypto.eg_decrypt(self.group, self._require_secret(), ct)

    # -- store ---------------------------------------------------------

    def send(self, x: BinaryTemplate) -> int:
        """Store ``x`` encrypted and index it; returns the new identifier.

        With the direct transport a bucket overflow surfaces after some
        slots were already written; rewrite transports check capacity
        before uploading anything.
        """
        if x.n_bits != self.params.template_bits:
            raise ParameterError(
                f"template has {x.n_bits} bits, scheme wants {self.params.template_bits}"
            )
        group = self.group
        reply = self.channel.ask(pir.Frame(pir.SEND_INIT))
        if reply.ftype != pir.SEND_ID:
            raise ProtocolError(f"expected SEND_ID, got {reply.name}")
        (phi,) = struct.unpack_from(">I", reply.payload)
        self._check_digest(reply.payload[4:])

        cell = crypto.payload_encrypt(
            group, self.public_bundle.public, x.to_bytes(), self.rng
        )
        self.channel.ask(pir.Frame(pir.SEND_PAYLOAD, struct.pack(">I", phi) + cell))

        indices = self.comp.indices(x)
        self.stats["hash_evals"] += len(indices)
        self.channel.ask(
            pir.Frame(pir.SEND_INDEX, struct.pack(">IH", phi, len(indices)))
        )

        if self.params.mode == MODE_BASE:
            tag_element = group.pow(group.gen, phi)
            slots = [
                self._encrypt(group.random_element(self.rng)).encode(group)
                + self._encrypt(tag_element).encode(group)
                for _ in indices
            ]
        else:
            shares = crypto.split_secret(phi, len(indices), group, self.rng)
            marker = group.pow(group.gen2, group.random_exponent(self.rng))
            slots = [
                self._encrypt(marker).encode(group)
                + self._encrypt(share).encode(group)
                for share in shares.shares
            ]
        self.pir.update_many(list(zip(indices, slots)))
        return phi

    # -- retrieve ------------------------------------------------------

    def retrieve(self, x: BinaryTemplate) -> set[int]:
        """Identifiers of stored templates matching ``x`` at the scheme threshold."""
        self._require_secret()
        if x.n_bits != self.params.template_bits:
            raise ParameterError(
                f"template has {x.n_bits} bits, scheme wants {self.params.template_bits}"
            )
        reply = self.channel.ask(pir.Frame(pir.RETRIEVE_BEGIN))
        if self.params.rerandomizes:
            if reply.ftype != pir.RERAND_PUB:
                raise ProtocolError(f"expected RERAND_PUB, got {reply.name}")
            self._check_digest(reply.payload[:DIGEST_SIZE])
            dlog_base = self.group.decode(reply.payload[DIGEST_SIZE:], check=True)
        else:
            if reply.ftype != pir.ACK:
                raise ProtocolError(f"expected ACK, got {reply.name}")
            self._check_digest(reply.payload)
            dlog_base = self.group.gen

        indices = self.comp.indices(x)
        self.stats["hash_evals"] += len(indices)
        buckets = self.pir.fetch_buckets(indices)
        if self.params.mode == MODE_BASE:
            return self._assemble_base(buckets, dlog_base)
        return self._assemble_extended(buckets, dlog_base)

    def _parse_slots(self, bucket: bytes) -> list[tuple[bytes, bytes]]:
        w = slot_width(self.group)
        half = w // 2
        return [
            (slot[:half], slot[half:]) for slot in pir.BucketStore.split_bucket(bucket, w)
        ]

    def _assemble_base(self, buckets: list[bytes], dlog_base: int) -> set[int]:
        group = self.group
        value_sets = []
        for bucket in buckets:
            values = set()
            for _, value_ct in self._parse_slots(bucket):
                values.add(self._decrypt(crypto.Ciphertext.decode(group, value_ct)))
            value_sets.append(values)

        nu = self.params.bloom_count
        counts: dict[int, int] = {}
        for i in range(self.params.lsh_count):
            common = set.intersection(*value_sets[i * nu : (i + 1) * nu])
            for v in common:
                counts[v] = counts.get(v, 0) + 1
        needed = -(-self.params.match_threshold // nu)
        winners = [v for v, c in counts.items() if c >= needed]

        out = set()
        rerandomized = dlog_base != group.gen
        for v in winners:
            phi = self._dlog_value(v, dlog_base, rerandomized)
            if phi is not None:
                out.add(phi)
            # a winner that does not decode is a padding coincidence; the
            # probability is bounded by (capacity * family_size)^2 / order
        return out

    def _dlog_value(self, value: int, base: int, rerandomized: bool) -> int | None:
        self.stats["dlogs"] += 1
        bound = 1 << self.params.tag_bits
        if not rerandomized:
            if value in self._dlog_memo:
                return self._dlog_memo[value]
            if self._dlog_plain is None:
                self._dlog_plain = crypto.DlogTable(self.group, self.group.gen, bound)
            phi = self._dlog_plain.solve(value)
            if phi is not None:
                self._dlog_memo[value] = phi
            return phi
        return crypto.discrete_log_small(self.group, base, value, bound)

    def _assemble_extended(self, buckets: list[bytes], dlog_base: int) -> set[int]:
        group = self.group
        marker_sets = []
        pairs: set[tuple[int, int]] = set()
        for bucket in buckets:
            markers = set()
            for marker_ct, value_ct in self._parse_slots(bucket):
                marker = self._decrypt(crypto.Ciphertext.decode(group, marker_ct))
                share = self._decrypt(crypto.Ciphertext.decode(group, value_ct))
                markers.add(marker)
                pairs.add((marker, share))
            marker_sets.append(markers)

        common_markers = set.intersection(*marker_sets)
        out = set()
        for marker in common_markers:
            shares = [share for (mk, share) in pairs if mk == marker]
            product = crypto.combine_shares(group, shares)
            self.stats["dlogs"] += 1
            phi = crypto.discrete_log_small(
                group, dlog_base, product, 1 << self.params.tag_bits
            )
            if phi is None:
                raise CorruptShareError(
                    "recombined shares decode to no identifier "
                    "(tampering or a marker collision)"
                )
            out.add(phi)
        return out

    # -- payload access -------------------------------------------------

    def fetch_payload(self, phi: int) -> bytes:
        """The stored payload ciphertext for one identifier."""
        if self.params.query_mode == pir.QueryModes.BATCH:
            cells = self.fetch_all_payloads()
            if not 1 <= phi <= len(cells):
                raise ParameterError(f"unknown identifier {phi}")
            return cells[phi - 1]
        reply = self.channel.ask(
            pir.Frame(pir.QUERY_DIRECT, struct.pack(">BI", pir.STORE_DATA, phi))
        )
        if reply.ftype != pir.RESP_BUCKET:
            raise ProtocolError(f"expected RESP_BUCKET, got {reply.name}")
        return reply.payload

    def fetch_all_payloads(self) -> list[bytes]:
        reply = self.channel.ask(pir.Frame(pir.QUERY_BATCH, bytes([pir.STORE_DATA])))
        if reply.ftype != pir.RESP_STORE:
            raise ProtocolError(f"expected RESP_STORE, got {reply.name}")
        (count,) = struct.unpack_from(">I", reply.payload)
        body = reply.payload[4:]
        width = payload_width(self.params, self.group)
        if len(body) != count * width:
            raise FormatError("payload store length mismatch")
        return [body[i * width : (i + 1) * width] for i in range(count)]

    def fetch_template(self, phi: int) -> BinaryTemplate:
        """Fetch and decrypt the stored template behind one identifier."""
        blob = crypto.payload_decrypt(self.group, self._require_secret(), self.fetch_payload(phi))
        return BinaryTemplate.from_bytes(blob)


def local_client(bundle, state: ServerState, rng: random.Random,
                 server_rng: random.Random | None = None,
                 record: bool = False) -> SchemeClient:
    """In-process client over a fresh channel to ``state``."""
    handler = SchemeFrameHandler(state, server_rng or rng)
    channel = pir.LocalChannel(handler, record=record)
    return SchemeClient(bundle, channel, rng)


def capture_view(operation, bundle, state: ServerState, rng: random.Random,
                 server_rng: random.Random | None = None) -> pir.Transcript:
    """Run ``operation(client)`` over a recording channel; return the view.

    The transcript is everything crossing the client/server boundary —
    the server's observation in the sender/receiver games and the
    client's observation in the symmetric game.
    """
    client = local_client(bundle, state, rng, server_rng=server_rng, record=True)
    operation(client)
    return client.channel.transcript


def make_params(**kwargs) -> SchemeParams:
    """SchemeParams with validation applied."""
    params = SchemeParams(**kwargs)
    params.validate()
    return params


def with_overrides(params: SchemeParams, **kwargs) -> SchemeParams:
    out = replace(params, **kwargs)
    out.validate()
    return out
