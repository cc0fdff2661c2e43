"""File formats: the server index and the two key bundles.

All files start with a 4-byte magic, a 2-byte version, and the shared
self-describing header (parameters, LSH family descriptor, bucket-hash
key fingerprint, public key element).  The header digest guards against
parameter drift between writers and readers; serialization is canonical,
so load followed by save is byte-identical.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

from . import crypto, pir
from .errors import FormatError
from .lsh import BitSamplingFamily
from .protocol import (
    DIGEST_SIZE,
    PublicBundle,
    SchemeParams,
    SecretBundle,
    ServerState,
    bloom_key_fingerprint,
    header_bytes,
    payload_width,
    slot_width,
)

INDEX_MAGIC = b"FESE"
PUBLIC_MAGIC = b"FESP"
SECRET_MAGIC = b"FESS"
LEDGER_MAGIC = b"FESL"
VERSION = 1


@dataclass(frozen=True, slots=True)
class HeaderInfo:
    params: SchemeParams
    lsh: BitSamplingFamily
    bloom_fingerprint: bytes
    public: int
    raw: bytes

    @property
    def digest(self) -> bytes:
        return hashlib.blake2b(self.raw, person=b"fese-hdr", digest_size=DIGEST_SIZE).digest()


def parse_header(raw: bytes) -> HeaderInfo:
    params, off = SchemeParams.from_bytes(raw)
    lsh = BitSamplingFamily.from_bytes(raw[off:])
    off += lsh.descriptor_size()
    fingerprint = raw[off : off + DIGEST_SIZE]
    off += DIGEST_SIZE
    group = crypto.get_group(params.group_name)
    if len(raw) != off + group.element_bytes:
        raise FormatError("header length mismatch")
    public = group.decode(raw[off:])
    return HeaderInfo(params, lsh, fingerprint, public, raw)


def _read_preamble(blob: bytes, magic: bytes) -> tuple[HeaderInfo, int]:
    if len(blob) < 10 or blob[:4] != magic:
        raise FormatError(f"bad magic (expected {magic.decode()})")
    version, header_len = struct.unpack_from(">HI", blob, 4)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    end = 10 + header_len
    if len(blob) < end:
        raise FormatError("header truncated")
    return parse_header(blob[10:end]), end


def _preamble(magic: bytes, header: bytes) -> bytes:
    return magic + struct.pack(">HI", VERSION, len(header)) + header


# -- index file ---------------------------------------------------------


def index_bytes(header: bytes, state: ServerState) -> bytes:
    store = state.service.store
    out = bytearray(_preamble(INDEX_MAGIC, header))
    out += struct.pack(f">{store.bucket_count}H", *state.service.occupancy)
    out += store.to_bytes()
    out += struct.pack(">I", len(state.data_cells))
    for cell in state.data_cells:
        out += cell
    out += struct.pack(">I", state.next_id)
    return bytes(out)


def save_index(path, header: bytes, state: ServerState) -> None:
    with open(path, "wb") as fh:
        fh.write(index_bytes(header, state))


def load_index(path) -> tuple[HeaderInfo, ServerState]:
    with open(path, "rb") as fh:
        blob = fh.read()
    info, off = _read_preamble(blob, INDEX_MAGIC)
    params = info.params
    group = crypto.get_group(params.group_name)
    m = params.bucket_count
    occupancy = list(struct.unpack_from(f">{m}H", blob, off))
    off += 2 * m
    image_size = m * params.bucket_capacity * slot_width(group)
    image = blob[off : off + image_size]
    if len(image) != image_size:
        raise FormatError("bucket image truncated")
    off += image_size
    (count,) = struct.unpack_from(">I", blob, off)
    off += 4
    width = payload_width(params, group)
    cells = []
    for _ in range(count):
        cell = blob[off : off + width]
        if len(cell) != width:
            raise FormatError("payload cells truncated")
        cells.append(cell)
        off += width
    (next_id,) = struct.unpack_from(">I", blob, off)
    if off + 4 != len(blob):
        raise FormatError("trailing bytes after index body")
    store = pir.BucketStore(m, params.bucket_capacity, slot_width(group), image)
    state = ServerState(
        params,
        pir.BucketService(store, occupancy),
        cells,
        next_id,
        header_digest=info.digest,
    )
    return info, state


# -- key bundles --------------------------------------------------------


def save_public_bundle(path, bundle: PublicBundle) -> None:
    header = header_bytes(bundle)
    body = struct.pack(">H", len(bundle.bloom_key)) + bundle.bloom_key
    with open(path, "wb") as fh:
        fh.write(_preamble(PUBLIC_MAGIC, header) + body)


def load_public_bundle(path) -> PublicBundle:
    with open(path, "rb") as fh:
        blob = fh.read()
    info, off = _read_preamble(blob, PUBLIC_MAGIC)
    (klen,) = struct.unpack_from(">H", blob, off)
    bloom_key = blob[off + 2 : off + 2 + klen]
    if len(bloom_key) != klen or off + 2 + klen != len(blob):
        raise FormatError("public bundle truncated")
    bundle = PublicBundle(info.params, info.public, info.lsh, bloom_key)
    if bloom_key_fingerprint(bloom_key) != info.bloom_fingerprint:
        raise FormatError("bucket-hash key does not match header fingerprint")
    return bundle


def save_secret_bundle(path, bundle: SecretBundle) -> None:
    pub = bundle.public_bundle
    header = header_bytes(pub)
    body = (
        struct.pack(">H", len(pub.bloom_key))
        + pub.bloom_key
        + bundle.secret.to_bytes(32, "big")
    )
    with open(path, "wb") as fh:
        fh.write(_preamble(SECRET_MAGIC, header) + body)


def load_secret_bundle(path) -> SecretBundle:
    with open(path, "rb") as fh:
        blob = fh.read()
    info, off = _read_preamble(blob, SECRET_MAGIC)
    (klen,) = struct.unpack_from(">H", blob, off)
    off += 2
    bloom_key = blob[off : off + klen]
    secret = blob[off + klen : off + klen + 32]
    if len(secret) != 32 or off + klen + 32 != len(blob):
        raise FormatError("secret bundle truncated")
    pub = PublicBundle(info.params, info.public, info.lsh, bloom_key)
    if bloom_key_fingerprint(bloom_key) != info.bloom_fingerprint:
        raise FormatError("bucket-hash key does not match header fingerprint")
    return SecretBundle(pub, int.from_bytes(secret, "big"))


# -- sender fill ledger (rewrite transports) ----------------------------


def save_ledger(path, counts: list[int]) -> None:
    with open(path, "wb") as fh:
        fh.write(LEDGER_MAGIC + struct.pack(f">I{len(counts)}H", len(counts), *counts))


def load_ledger(path) -> list[int]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != LEDGER_MAGIC:
        raise FormatError("bad ledger magic")
    (count,) = struct.unpack_from(">I", blob, 4)
    return list(struct.unpack_from(f">{count}H", blob, 8))
