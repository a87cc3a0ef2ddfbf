"""
Page-protocol frames.

    total_payload_length u32 LE | kind u8 | payload

    MigrateRequest   dep_label: u32 len + UTF-8
    Metadata         serialised ProcessMetadata (checkpoint header)
    PageRequest      count u32, count x page_id u64
    PrefetchRequest  count u32, count x page_id u64 (pages already resident)
    PageData         count u32, count x (page_id u64, 4096 bytes)
    Done             empty
    Error            code u16, message u32 len + UTF-8
"""
import asyncio
import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, List, Sequence, Tuple

from src.image.codec import decode_metadata, encode_metadata
from src.image.errors import CheckpointError
from src.image.model import PAGE_SIZE, ProcessMetadata
from src.protocol.errors import ErrorCode, MalformedFrameError, SessionClosedError

MAX_PAYLOAD = 64 * 1024 * 1024
MAX_PAGES_PER_FRAME = 256

_HEADER = struct.Struct("<IB")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
HEADER_SIZE = _HEADER.size
PAGE_ENTRY_SIZE = 8 + PAGE_SIZE


class FrameKind(IntEnum):
    MIGRATE_REQUEST = 0x01
    METADATA = 0x02
    PAGE_REQUEST = 0x03
    PAGE_DATA = 0x04
    PREFETCH_REQUEST = 0x05
    DONE = 0x06
    ERROR = 0x7F


@dataclass(frozen=True)
class Frame:
    kind: FrameKind
    payload: bytes = b""

    @property
    def wire_size(self) -> int:
        return HEADER_SIZE + len(self.payload)


def encode_frame(frame: Frame) -> bytes:
    if len(frame.payload) > MAX_PAYLOAD:
        raise MalformedFrameError(f"payload of {len(frame.payload)} bytes exceeds {MAX_PAYLOAD}")
    return _HEADER.pack(len(frame.payload), int(frame.kind)) + frame.payload


def _read_string(payload: bytes, offset: int) -> Tuple[str, int]:
    if offset + 4 > len(payload):
        raise MalformedFrameError("string length runs past the payload")
    (n,) = _U32.unpack_from(payload, offset)
    end = offset + 4 + n
    if end > len(payload):
        raise MalformedFrameError("string runs past the payload")
    try:
        return payload[offset + 4:end].decode("utf-8"), end
    except UnicodeDecodeError as e:
        raise MalformedFrameError("string is not valid UTF-8") from e


def _check_counted(payload: bytes, entry_size: int) -> int:
    if len(payload) < 4:
        raise MalformedFrameError("missing count")
    (count,) = _U32.unpack_from(payload, 0)
    if len(payload) != 4 + count * entry_size:
        raise MalformedFrameError(f"count {count} does not match a {len(payload)}-byte payload")
    return count


def _validate_payload(kind: FrameKind, payload: bytes) -> None:
    if kind == FrameKind.MIGRATE_REQUEST:
        _, end = _read_string(payload, 0)
        if end != len(payload):
            raise MalformedFrameError("trailing bytes after dep_label")
    elif kind == FrameKind.METADATA:
        try:
            _, end = decode_metadata(payload)
        except CheckpointError as e:
            raise MalformedFrameError(f"bad metadata: {e}") from e
        if end != len(payload):
            raise MalformedFrameError("trailing bytes after metadata")
    elif kind in (FrameKind.PAGE_REQUEST, FrameKind.PREFETCH_REQUEST):
        _check_counted(payload, 8)
    elif kind == FrameKind.PAGE_DATA:
        _check_counted(payload, PAGE_ENTRY_SIZE)
    elif kind == FrameKind.DONE:
        if payload:
            raise MalformedFrameError("Done carries no payload")
    elif kind == FrameKind.ERROR:
        if len(payload) < 2:
            raise MalformedFrameError("missing error code")
        (code,) = _U16.unpack_from(payload, 0)
        if code not in ErrorCode._value2member_map_:
            raise MalformedFrameError(f"unknown error code {code}")
        _, end = _read_string(payload, 2)
        if end != len(payload):
            raise MalformedFrameError("trailing bytes after error message")


def decode_frame(data: bytes) -> Frame:
    if len(data) < HEADER_SIZE:
        raise MalformedFrameError(f"{len(data)} bytes is shorter than a frame header")
    length, kind_byte = _HEADER.unpack_from(data, 0)
    if length > MAX_PAYLOAD:
        raise MalformedFrameError(f"declared payload {length} exceeds {MAX_PAYLOAD}")
    if len(data) != HEADER_SIZE + length:
        raise MalformedFrameError(f"declared payload {length}, got {len(data) - HEADER_SIZE}")
    try:
        kind = FrameKind(kind_byte)
    except ValueError as e:
        raise MalformedFrameError(f"unknown frame kind {kind_byte:#04x}") from e
    payload = bytes(data[HEADER_SIZE:])
    _validate_payload(kind, payload)
    return Frame(kind, payload)


# -- builders / parsers -------------------------------------------------------

def migrate_request(dep_label: str) -> Frame:
    raw = dep_label.encode("utf-8")
    return Frame(FrameKind.MIGRATE_REQUEST, _U32.pack(len(raw)) + raw)


def parse_migrate_request(frame: Frame) -> str:
    return _read_string(frame.payload, 0)[0]


def metadata_frame(meta: ProcessMetadata) -> Frame:
    return Frame(FrameKind.METADATA, encode_metadata(meta))


def parse_metadata(frame: Frame) -> ProcessMetadata:
    try:
        return decode_metadata(frame.payload)[0]
    except CheckpointError as e:
        raise MalformedFrameError(f"bad metadata: {e}") from e


def _id_list(kind: FrameKind, page_ids: Sequence[int]) -> Frame:
    ids = list(page_ids)
    return Frame(kind, _U32.pack(len(ids)) + struct.pack(f"<{len(ids)}Q", *ids))


def page_request(page_ids: Sequence[int]) -> Frame:
    return _id_list(FrameKind.PAGE_REQUEST, page_ids)


def prefetch_request(resident: Iterable[int]) -> Frame:
    return _id_list(FrameKind.PREFETCH_REQUEST, sorted(resident))


def parse_page_ids(frame: Frame) -> List[int]:
    count = _check_counted(frame.payload, 8)
    return list(struct.unpack_from(f"<{count}Q", frame.payload, 4))


def page_data(pages: Sequence[Tuple[int, bytes]]) -> Frame:
    parts = [_U32.pack(len(pages))]
    for page_id, block in pages:
        if len(block) != PAGE_SIZE:
            raise MalformedFrameError(f"page {page_id} holds {len(block)} bytes")
        parts.append(_U64.pack(page_id))
        parts.append(bytes(block))
    return Frame(FrameKind.PAGE_DATA, b"".join(parts))


def parse_page_data(frame: Frame) -> List[Tuple[int, bytes]]:
    count = _check_counted(frame.payload, PAGE_ENTRY_SIZE)
    payload = frame.payload
    pages = []
    offset = 4
    for _ in range(count):
        (page_id,) = _U64.unpack_from(payload, offset)
        pages.append((page_id, payload[offset + 8:offset + PAGE_ENTRY_SIZE]))
        offset += PAGE_ENTRY_SIZE
    return pages


def done() -> Frame:
    return Frame(FrameKind.DONE)


def error_frame(code: ErrorCode, message: str) -> Frame:
    raw = message.encode("utf-8")
    return Frame(FrameKind.ERROR, _U16.pack(int(code)) + _U32.pack(len(raw)) + raw)


def parse_error(frame: Frame) -> Tuple[ErrorCode, str]:
    (code,) = _U16.unpack_from(frame.payload, 0)
    return ErrorCode(code), _read_string(frame.payload, 2)[0]


# -- stream IO ----------------------------------------------------------------

async def read_frame(reader: asyncio.StreamReader) -> Frame:
    try:
        header = await reader.readexactly(HEADER_SIZE)
    except asyncio.IncompleteReadError as e:
        raise SessionClosedError("peer closed the session") from e
    length, _ = _HEADER.unpack(header)
    if length > MAX_PAYLOAD:
        raise MalformedFrameError(f"declared payload {length} exceeds {MAX_PAYLOAD}")
    try:
        payload = await reader.readexactly(length)
    except asyncio.IncompleteReadError as e:
        raise SessionClosedError("peer closed the session mid-frame") from e
    return decode_frame(header + payload)


def write_frame(writer: asyncio.StreamWriter, frame: Frame) -> int:
    """Queue `frame` on the transport; the caller drains. Returns bytes queued."""
    data = encode_frame(frame)
    writer.write(data)
    return len(data)
