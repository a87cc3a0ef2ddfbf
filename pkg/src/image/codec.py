"""
Checkpoint file layout (little-endian):

    magic "WSWAPIM1" | version u32 = 1
    dep_label u32 len + UTF-8 | entry_token u32 len + UTF-8
    segment_count u32, then (base_page_id u64, page_count u64, permission u8) each
    file_count u32, then (fd u32, kind u8, path u32 len + UTF-8) each
    page_count u64 | page_size u32 = 4096
    page_count x (page_id u64, 4096 bytes), ascending page_id
    CRC-32 (IEEE) of everything above, u32

The serialised ProcessMetadata is the header: everything before the first
page record.
"""
import logging
import os
import struct
import zlib
from pathlib import Path
from typing import Iterator, Tuple, Union

from src.image.errors import (
    BadMagicError,
    ChecksumMismatchError,
    ImageError,
    InvalidMetadataError,
    MalformedCheckpointError,
    TruncatedCheckpointError,
    VersionMismatchError,
)
from src.image.model import (
    PAGE_SIZE,
    DependencyImage,
    FileEntry,
    FileKind,
    Permission,
    ProcessMetadata,
    Segment,
)

logger = logging.getLogger(__name__)

MAGIC = b"WSWAPIM1"
FORMAT_VERSION = 1
PAGE_RECORD_SIZE = 8 + PAGE_SIZE
TRAILER_SIZE = 4

_U8 = struct.Struct("<B")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_SEGMENT = struct.Struct("<QQB")
_FILE_HEAD = struct.Struct("<IB")
_PAGE_TAIL = struct.Struct("<QI")

PathLike = Union[str, Path]


def _pack_str(value: str) -> bytes:
    raw = value.encode("utf-8")
    return _U32.pack(len(raw)) + raw


def encode_metadata(meta: ProcessMetadata) -> bytes:
    parts = [MAGIC, _U32.pack(FORMAT_VERSION), _pack_str(meta.dep_label), _pack_str(meta.entry_token)]
    parts.append(_U32.pack(len(meta.segments)))
    for seg in meta.segments:
        parts.append(_SEGMENT.pack(seg.base_page_id, seg.page_count, int(seg.permission)))
    parts.append(_U32.pack(len(meta.file_table)))
    for entry in meta.file_table:
        parts.append(_FILE_HEAD.pack(entry.fd, int(entry.kind)))
        parts.append(_pack_str(entry.path))
    parts.append(_PAGE_TAIL.pack(meta.total_pages, meta.page_size))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, offset: int = 0):
        self.data = data
        self.offset = offset

    def take(self, n: int) -> bytes:
        end = self.offset + n
        if n < 0 or end > len(self.data):
            raise TruncatedCheckpointError(
                f"need {n} bytes at offset {self.offset}, only {len(self.data) - self.offset} left")
        chunk = self.data[self.offset:end]
        self.offset = end
        return bytes(chunk)

    def unpack(self, fmt: struct.Struct) -> tuple:
        return fmt.unpack(self.take(fmt.size))

    def u32(self) -> int:
        return self.unpack(_U32)[0]

    def string(self) -> str:
        raw = self.take(self.u32())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise MalformedCheckpointError(f"invalid UTF-8 before offset {self.offset}") from e

    def remaining(self) -> int:
        return len(self.data) - self.offset


def _check_prefix(data: bytes) -> None:
    if len(data) < len(MAGIC):
        if MAGIC.startswith(bytes(data)):
            raise TruncatedCheckpointError("file ends inside the magic")
        raise BadMagicError("not a dependency image checkpoint")
    if bytes(data[:len(MAGIC)]) != MAGIC:
        raise BadMagicError(f"bad magic {bytes(data[:len(MAGIC)])!r}")
    if len(data) < len(MAGIC) + _U32.size:
        raise TruncatedCheckpointError("file ends inside the version field")
    version = _U32.unpack_from(data, len(MAGIC))[0]
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, expected {FORMAT_VERSION}")


def decode_metadata(data: bytes, offset: int = 0) -> Tuple[ProcessMetadata, int]:
    """Parse a serialised ProcessMetadata starting at `offset`; returns it and the end offset."""
    _check_prefix(data[offset:offset + len(MAGIC) + _U32.size])
    r = _Reader(data, offset + len(MAGIC) + _U32.size)
    dep_label = r.string()
    entry_token = r.string()

    count = r.u32()
    if count * _SEGMENT.size > r.remaining():
        raise TruncatedCheckpointError(f"{count} segments do not fit in the remaining bytes")
    segments = []
    for _ in range(count):
        base, pages, tag = r.unpack(_SEGMENT)
        try:
            segments.append(Segment(base, pages, Permission(tag)))
        except ValueError as e:
            raise MalformedCheckpointError(f"unknown permission tag {tag}") from e

    count = r.u32()
    if count * (_FILE_HEAD.size + _U32.size) > r.remaining():
        raise TruncatedCheckpointError(f"{count} file entries do not fit in the remaining bytes")
    files = []
    for _ in range(count):
        fd, kind = r.unpack(_FILE_HEAD)
        path = r.string()
        try:
            files.append(FileEntry(fd, path, FileKind(kind)))
        except ValueError as e:
            raise MalformedCheckpointError(f"unknown file kind {kind}") from e

    page_count, page_size = r.unpack(_PAGE_TAIL)
    if page_size != PAGE_SIZE:
        raise MalformedCheckpointError(f"page size {page_size}, expected {PAGE_SIZE}")
    try:
        meta = ProcessMetadata(dep_label, entry_token, tuple(segments), tuple(files), page_size)
    except InvalidMetadataError as e:
        raise MalformedCheckpointError(str(e)) from e
    if meta.total_pages != page_count:
        raise MalformedCheckpointError(
            f"page_count {page_count} does not match the {meta.total_pages} pages the segments cover")
    return meta, r.offset


def checkpoint_size(meta: ProcessMetadata) -> int:
    return meta.metadata_size_bytes + meta.total_pages * PAGE_RECORD_SIZE + TRAILER_SIZE


def iter_checkpoint_chunks(image: DependencyImage) -> Iterator[bytes]:
    """Checkpoint bytes in write order, CRC trailer last."""
    header = encode_metadata(image.metadata)
    crc = zlib.crc32(header)
    yield header
    for page_id in image.metadata.page_ids():
        block = image.pages[page_id]
        if len(block) != PAGE_SIZE:
            raise ImageError(f"page {page_id} holds {len(block)} bytes, expected {PAGE_SIZE}")
        record = _U64.pack(page_id) + bytes(block)
        crc = zlib.crc32(record, crc)
        yield record
    yield _U32.pack(crc & 0xFFFFFFFF)


def checkpoint_bytes(image: DependencyImage) -> bytes:
    return b"".join(iter_checkpoint_chunks(image))


def write_checkpoint(image: DependencyImage, path: PathLike) -> int:
    """Write `image` to `path` atomically; returns the file size."""
    target = Path(path)
    tmp = target.with_name(target.name + ".part")
    size = 0
    with open(tmp, "wb") as f:
        for chunk in iter_checkpoint_chunks(image):
            f.write(chunk)
            size += len(chunk)
    os.replace(tmp, target)
    logger.info(f"✅ Checkpoint of '{image.dep_label}' written to {target} "
                f"({image.metadata.total_pages} pages, {size} bytes)")
    return size


def parse_checkpoint(data: bytes) -> DependencyImage:
    _check_prefix(data)
    meta, offset = decode_metadata(data)

    expected = checkpoint_size(meta)
    if len(data) < expected:
        raise TruncatedCheckpointError(f"checkpoint holds {len(data)} bytes, format requires {expected}")
    if len(data) > expected:
        raise MalformedCheckpointError(f"{len(data) - expected} trailing bytes after the checksum")

    stored = _U32.unpack_from(data, expected - TRAILER_SIZE)[0]
    actual = zlib.crc32(memoryview(data)[:expected - TRAILER_SIZE]) & 0xFFFFFFFF
    if stored != actual:
        raise ChecksumMismatchError(f"CRC-32 {actual:#010x} does not match stored {stored:#010x}")

    pages = {}
    view = memoryview(data)
    for expected_id in meta.page_ids():
        page_id = _U64.unpack_from(data, offset)[0]
        if page_id != expected_id:
            raise MalformedCheckpointError(
                f"page record {page_id} at offset {offset}, expected {expected_id} (ascending, covered ids)")
        pages[page_id] = bytes(view[offset + 8:offset + PAGE_RECORD_SIZE])
        offset += PAGE_RECORD_SIZE
    return DependencyImage(meta, pages)


def read_checkpoint(path: PathLike) -> DependencyImage:
    image = parse_checkpoint(Path(path).read_bytes())
    logger.info(f"📦 Read checkpoint '{image.dep_label}' from {path} ({image.metadata.total_pages} pages)")
    return image
