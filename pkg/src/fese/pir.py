"""Bucket-store transports with explicit, testable privacy status.

Reads come in two modes: DIRECT sends the bucket index in clear (no
privacy, the baseline), OBLIVIOUS-BATCH streams the whole store so the
server's view is byte-identical whatever the client wanted.  Writes are
DIRECT (index in clear) or FULL-REWRITE (download store, insert locally,
re-randomize every slot, upload everything; the server sees the same
message lengths and sequence whatever was written).  A third read mode,
RESTRICTED, uses direct indices but lets the server transform each
response — the protocol layer installs share-blinding there.

Everything the server observes is a sequence of length-prefixed frames
(1-byte type, 4-byte big-endian length, payload); a ``Transcript`` is
the byte-exact record of one operation, the unit of every privacy test.

In FULL-REWRITE mode the per-bucket fill counts live on the writing
client, never on the wire: uploading them would reveal the written
index.  The server tracks occupancy only for DIRECT writes.
"""

from __future__ import annotations

import random
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass, field

from . import crypto
from .errors import (
    BucketOverflowError,
    FormatError,
    ParameterError,
    ProtocolError,
    TransportError,
)

# frame types
QUERY_DIRECT = 0x01
QUERY_BATCH = 0x02
UPDATE_DIRECT = 0x03
UPDATE_REWRITE = 0x04
RESP_BUCKET = 0x05
RESP_STORE = 0x06
ACK = 0x07
ERR = 0x08
SEND_INIT = 0x10
SEND_ID = 0x11
SEND_PAYLOAD = 0x12
SEND_INDEX = 0x13
RETRIEVE_BEGIN = 0x14
RERAND_PUB = 0x15

FRAME_NAMES = {
    QUERY_DIRECT: "QUERY_DIRECT",
    QUERY_BATCH: "QUERY_BATCH",
    UPDATE_DIRECT: "UPDATE_DIRECT",
    UPDATE_REWRITE: "UPDATE_REWRITE",
    RESP_BUCKET: "RESP_BUCKET",
    RESP_STORE: "RESP_STORE",
    ACK: "ACK",
    ERR: "ERR",
    SEND_INIT: "SEND_INIT",
    SEND_ID: "SEND_ID",
    SEND_PAYLOAD: "SEND_PAYLOAD",
    SEND_INDEX: "SEND_INDEX",
    RETRIEVE_BEGIN: "RETRIEVE_BEGIN",
    RERAND_PUB: "RERAND_PUB",
}

# store selectors inside QUERY/UPDATE payloads
STORE_BUCKETS = 0
STORE_DATA = 1

# ERR payload codes
ERR_RANGE = 1
ERR_OVERFLOW = 2
ERR_FORMAT = 3
ERR_STATE = 4


@dataclass(frozen=True, slots=True)
class Frame:
    ftype: int
    payload: bytes = b""

    def encode(self) -> bytes:
        return struct.pack(">BI", self.ftype, len(self.payload)) + self.payload

    @property
    def name(self) -> str:
        return FRAME_NAMES.get(self.ftype, f"0x{self.ftype:02x}")


def decode_frame(data: bytes, offset: int = 0) -> tuple[Frame, int]:
    if len(data) - offset < 5:
        raise TransportError("frame header truncated")
    ftype, length = struct.unpack_from(">BI", data, offset)
    end = offset + 5 + length
    if len(data) < end:
        raise TransportError("frame payload truncated")
    return Frame(ftype, data[offset + 5 : end]), end


def err_frame(code: int, detail: int, message: str) -> Frame:
    return Frame(ERR, struct.pack(">BI", code, detail) + message.encode())


def raise_from_err(frame: Frame) -> None:
    code, detail = struct.unpack_from(">BI", frame.payload)
    message = frame.payload[5:].decode(errors="replace")
    if code == ERR_OVERFLOW:
        raise BucketOverflowError(detail, message)
    if code == ERR_RANGE:
        raise ParameterError(message)
    if code == ERR_FORMAT:
        raise FormatError(message)
    raise ProtocolError(message)


@dataclass(slots=True)
class Transcript:
    """Ordered byte-exact record of the frames one party observed."""

    entries: list[tuple[str, Frame]] = field(default_factory=list)

    def append(self, direction: str, frame: Frame) -> None:
        if direction not in ("c2s", "s2c"):
            raise ParameterError("direction must be 'c2s' or 's2c'")
        self.entries.append((direction, frame))

    def to_bytes(self) -> bytes:
        out = bytearray()
        for direction, frame in self.entries:
            out += b"\x00" if direction == "c2s" else b"\x01"
            out += frame.encode()
        return bytes(out)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Transcript":
        t = cls()
        off = 0
        while off < len(data):
            direction = "c2s" if data[off] == 0 else "s2c"
            frame, off = decode_frame(data, off + 1)
            t.append(direction, frame)
        return t

    def structure(self) -> tuple:
        """Message sequence with lengths but without payload bytes."""
        return tuple((d, f.ftype, len(f.payload)) for d, f in self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, Transcript) and self.to_bytes() == other.to_bytes()


class BucketStore:
    """``bucket_count`` buckets of exactly ``capacity`` fixed-width slots.

    The serialized image is all slot bytes back to back; nothing in it
    marks a slot as real or padding.
    """

    def __init__(self, bucket_count: int, capacity: int, slot_width: int,
                 image: bytes | None = None):
        if bucket_count < 1 or capacity < 1 or slot_width < 1:
            raise ParameterError("store dimensions must be positive")
        self.bucket_count = bucket_count
        self.capacity = capacity
        self.slot_width = slot_width
        size = bucket_count * capacity * slot_width
        if image is None:
            self.image = bytearray(size)
        else:
            if len(image) != size:
                raise FormatError(f"store image must be {size} bytes, got {len(image)}")
            self.image = bytearray(image)

    @property
    def bucket_width(self) -> int:
        return self.capacity * self.slot_width

    def _check_alpha(self, alpha: int) -> None:
        if not 1 <= alpha <= self.bucket_count:
            raise ParameterError(f"bucket index {alpha} outside [1, {self.bucket_count}]")

    def bucket_bytes(self, alpha: int) -> bytes:
        self._check_alpha(alpha)
        off = (alpha - 1) * self.bucket_width
        return bytes(self.image[off : off + self.bucket_width])

    def slot_bytes(self, alpha: int, slot: int) -> bytes:
        self._check_alpha(alpha)
        if not 0 <= slot < self.capacity:
            raise ParameterError(f"slot {slot} outside [0, {self.capacity})")
        off = (alpha - 1) * self.bucket_width + slot * self.slot_width
        return bytes(self.image[off : off + self.slot_width])

    def set_slot(self, alpha: int, slot: int, data: bytes) -> None:
        if len(data) != self.slot_width:
            raise FormatError(f"slot must be {self.slot_width} bytes, got {len(data)}")
        self._check_alpha(alpha)
        off = (alpha - 1) * self.bucket_width + slot * self.slot_width
        self.image[off : off + self.slot_width] = data

    def to_bytes(self) -> bytes:
        return bytes(self.image)

    def clone(self) -> "BucketStore":
        return BucketStore(self.bucket_count, self.capacity, self.slot_width, bytes(self.image))

    @staticmethod
    def split_bucket(bucket: bytes, slot_width: int) -> list[bytes]:
        if len(bucket) % slot_width:
            raise FormatError("bucket bytes not a multiple of the slot width")
        return [bucket[i : i + slot_width] for i in range(0, len(bucket), slot_width)]


class BucketService:
    """Server-side bucket store plus DIRECT-mode occupancy accounting."""

    def __init__(self, store: BucketStore, occupancy: list[int] | None = None):
        self.store = store
        self.occupancy = list(occupancy) if occupancy is not None else [0] * store.bucket_count
        if len(self.occupancy) != store.bucket_count:
            raise ParameterError("occupancy length mismatch")

    def insert_direct(self, alpha: int, slot_data: bytes) -> None:
        self.store._check_alpha(alpha)
        fill = self.occupancy[alpha - 1]
        if fill >= self.store.capacity:
            raise BucketOverflowError(alpha)
        self.store.set_slot(alpha, fill, slot_data)
        self.occupancy[alpha - 1] = fill + 1

    def replace_image(self, image: bytes) -> None:
        expected = self.store.bucket_count * self.store.bucket_width
        if len(image) != expected:
            raise FormatError(f"rewrite image must be {expected} bytes, got {len(image)}")
        self.store.image[:] = image


class BucketFrameHandler:
    """Standalone frame handler serving one bucket store (no data cells)."""

    def __init__(self, service: BucketService):
        self.service = service

    def new_session(self) -> dict:
        return {}

    def handle(self, frame: Frame, session: dict) -> Frame:
        try:
            return self._dispatch(frame)
        except BucketOverflowError as exc:
            return err_frame(ERR_OVERFLOW, exc.bucket, str(exc))
        except ParameterError as exc:
            return err_frame(ERR_RANGE, 0, str(exc))
        except FormatError as exc:
            return err_frame(ERR_FORMAT, 0, str(exc))

    def _dispatch(self, frame: Frame) -> Frame:
        p = frame.payload
        if frame.ftype == QUERY_DIRECT:
            store_id, alpha = struct.unpack(">BI", p)
            if store_id != STORE_BUCKETS:
                raise ParameterError("this server has no payload store")
            return Frame(RESP_BUCKET, self.service.store.bucket_bytes(alpha))
        if frame.ftype == QUERY_BATCH:
            return Frame(RESP_STORE, self.service.store.to_bytes())
        if frame.ftype == UPDATE_DIRECT:
            store_id, alpha = struct.unpack_from(">BI", p)
            self.service.insert_direct(alpha, p[5:])
            return Frame(ACK)
        if frame.ftype == UPDATE_REWRITE:
            self.service.replace_image(p[1:])
            return Frame(ACK)
        raise ParameterError(f"unexpected frame {frame.name}")


class LocalChannel:
    """In-process request/response channel with optional transcript capture."""

    def __init__(self, handler, record: bool = False):
        self.handler = handler
        self.session = handler.new_session()
        self.transcript = Transcript() if record else None

    def ask(self, frame: Frame) -> Frame:
        if self.transcript is not None:
            self.transcript.append("c2s", frame)
        reply = self.handler.handle(frame, self.session)
        if self.transcript is not None:
            self.transcript.append("s2c", reply)
        if reply.ftype == ERR:
            raise_from_err(reply)
        return reply

    def close(self) -> None:
        pass


def _read_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    got = 0
    while got < n:
        chunk = sock.recv(n - got)
        if not chunk:
            raise TransportError("connection closed mid-frame")
        chunks.append(chunk)
        got += len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> Frame:
    head = _read_exact(sock, 5)
    ftype, length = struct.unpack(">BI", head)
    return Frame(ftype, _read_exact(sock, length) if length else b"")


def write_frame(sock: socket.socket, frame: Frame) -> None:
    sock.sendall(frame.encode())


class SocketChannel:
    """TCP client channel speaking the frame protocol."""

    def __init__(self, host: str, port: int, record: bool = False):
        self.sock = socket.create_connection((host, port))
        self.transcript = Transcript() if record else None

    def ask(self, frame: Frame) -> Frame:
        if self.transcript is not None:
            self.transcript.append("c2s", frame)
        write_frame(self.sock, frame)
        reply = read_frame(self.sock)
        if self.transcript is not None:
            self.transcript.append("s2c", reply)
        if reply.ftype == ERR:
            raise_from_err(reply)
        return reply

    def close(self) -> None:
        self.sock.close()


class FrameServer(socketserver.ThreadingTCPServer):
    """TCP server wrapping a frame handler; one session per connection.

    Frame handling is serialized with a coarse lock, satisfying the
    single-writer contract (readers queue behind writers too).
    """

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], handler):
        self.frame_handler = handler
        self.handler_lock = threading.Lock()
        super().__init__(address, _FrameRequestHandler)


class _FrameRequestHandler(socketserver.BaseRequestHandler):
    def handle(self):
        server: FrameServer = self.server
        session = server.frame_handler.new_session()
        while True:
            try:
                frame = read_frame(self.request)
            except TransportError:
                return
            with server.handler_lock:
                reply = server.frame_handler.handle(frame, session)
            write_frame(self.request, reply)


@dataclass(slots=True)
class QueryModes:
    DIRECT = "direct"
    BATCH = "batch"


@dataclass(slots=True)
class UpdateModes:
    DIRECT = "direct"
    REWRITE = "rewrite"


class PirClient:
    """Client for one bucket store over a channel.

    For FULL-REWRITE updates the client owns the per-bucket fill ledger
    (see module docstring) and optionally a (group, public key) pair used
    to re-randomize every slot before upload.
    """

    def __init__(
        self,
        channel,
        bucket_count: int,
        capacity: int,
        slot_width: int,
        query_mode: str = QueryModes.DIRECT,
        update_mode: str = UpdateModes.DIRECT,
        group: crypto.PrimeOrderGroup | None = None,
        public: int | None = None,
        rng: random.Random | None = None,
        fill_ledger: list[int] | None = None,
    ):
        if query_mode not in (QueryModes.DIRECT, QueryModes.BATCH):
            raise ParameterError(f"unknown query mode {query_mode!r}")
        if update_mode not in (UpdateModes.DIRECT, UpdateModes.REWRITE):
            raise ParameterError(f"unknown update mode {update_mode!r}")
        self.channel = channel
        self.bucket_count = bucket_count
        self.capacity = capacity
        self.slot_width = slot_width
        self.query_mode = query_mode
        self.update_mode = update_mode
        self.group = group
        self.public = public
        self.rng = rng
        self.fill_ledger = (
            list(fill_ledger) if fill_ledger is not None else [0] * bucket_count
        )
        self.transferred_bytes = 0

    # -- reads ---------------------------------------------------------

    def fetch_buckets(self, alphas: list[int]) -> list[bytes]:
        """Bucket bytes for each index, one response per index in DIRECT
        mode, a single full-store transfer in BATCH mode."""
        for alpha in alphas:
            if not 1 <= alpha <= self.bucket_count:
                raise ParameterError(f"bucket index {alpha} out of range")
        if self.query_mode == QueryModes.BATCH:
            image = self._fetch_image()
            width = self.capacity * self.slot_width
            return [image[(a - 1) * width : a * width] for a in alphas]
        out = []
        for alpha in alphas:
            reply = self.channel.ask(
                Frame(QUERY_DIRECT, struct.pack(">BI", STORE_BUCKETS, alpha))
            )
            self._expect(reply, RESP_BUCKET)
            self.transferred_bytes += len(reply.payload)
            out.append(reply.payload)
        return out

    def _fetch_image(self) -> bytes:
        reply = self.channel.ask(Frame(QUERY_BATCH, bytes([STORE_BUCKETS])))
        self._expect(reply, RESP_STORE)
        self.transferred_bytes += len(reply.payload)
        return reply.payload

    # -- writes --------------------------------------------------------

    def update(self, alpha: int, slot_data: bytes) -> None:
        self.update_many([(alpha, slot_data)])

    def update_many(self, items: list[tuple[int, bytes]]) -> None:
        """Insert each (bucket, slot) pair; one rewrite cycle covers all."""
        for alpha, slot_data in items:
            if len(slot_data) != self.slot_width:
                raise FormatError("slot width mismatch")
            if not 1 <= alpha <= self.bucket_count:
                raise ParameterError(f"bucket index {alpha} out of range")
        if self.update_mode == UpdateModes.DIRECT:
            for alpha, slot_data in items:
                self.channel.ask(
                    Frame(UPDATE_DIRECT, struct.pack(">BI", STORE_BUCKETS, alpha) + slot_data)
                )
            return
        self._rewrite(items)

    def _rewrite(self, items: list[tuple[int, bytes]]) -> None:
        # overflow is detected locally, before anything is uploaded
        pending = list(self.fill_ledger)
        placements = []
        for alpha, slot_data in items:
            if pending[alpha - 1] >= self.capacity:
                raise BucketOverflowError(alpha)
            placements.append((alpha, pending[alpha - 1], slot_data))
            pending[alpha - 1] += 1

        image = bytearray(self._fetch_image())
        width = self.capacity * self.slot_width
        for alpha, slot, slot_data in placements:
            off = (alpha - 1) * width + slot * self.slot_width
            image[off : off + self.slot_width] = slot_data
        if self.group is not None:
            for off in range(0, len(image), self.slot_width):
                image[off : off + self.slot_width] = self._refresh_slot(
                    bytes(image[off : off + self.slot_width])
                )
        reply = self.channel.ask(Frame(UPDATE_REWRITE, bytes([STORE_BUCKETS]) + bytes(image)))
        self._expect(reply, ACK)
        self.transferred_bytes += len(image)
        self.fill_ledger = pending

    def _refresh_slot(self, slot: bytes) -> bytes:
        """Re-randomize the two ciphertexts in a slot without the secret key."""
        group, public, rng = self.group, self.public, self.rng
        half = len(slot) // 2
        out = b""
        for part in (slot[:half], slot[half:]):
            ct = crypto.Ciphertext.decode(group, part)
            out += crypto.eg_rerandomize(group, public, ct, rng).encode(group)
        return out

    @staticmethod
    def _expect(frame: Frame, ftype: int) -> None:
        if frame.ftype != ftype:
            raise ProtocolError(
                f"expected {FRAME_NAMES[ftype]}, got {frame.name}"
            )
