from bisect import bisect_right
from dataclasses import dataclass
from enum import IntEnum
from functools import cached_property
from typing import Iterator, List, Literal, Mapping, Optional, Tuple

from pydantic import BaseModel, validator

from src.image.errors import InvalidMetadataError

PAGE_SIZE = 4096
U32_MAX = (1 << 32) - 1
U64_LIMIT = 1 << 64


class Permission(IntEnum):
    READ = 0
    READ_WRITE = 1
    EXECUTE = 2

    @classmethod
    def from_tag(cls, tag: str) -> "Permission":
        return _PERMISSION_BY_TAG[tag]


_PERMISSION_BY_TAG = {"read": Permission.READ, "read-write": Permission.READ_WRITE, "execute": Permission.EXECUTE}


class FileKind(IntEnum):
    REGULAR = 0
    SOCKET = 1
    DEVICE = 2


@dataclass(frozen=True)
class Segment:
    base_page_id: int
    page_count: int
    permission: Permission = Permission.READ

    @property
    def end(self) -> int:
        return self.base_page_id + self.page_count


@dataclass(frozen=True)
class FileEntry:
    fd: int
    path: str
    kind: FileKind = FileKind.REGULAR

    @property
    def bare_path(self) -> str:
        return self.path.rsplit("@", 1)[0] if "@" in self.path else self.path

    @property
    def pinned_version(self) -> Optional[str]:
        """Version pinned with a trailing '@<version>', if any."""
        return self.path.rsplit("@", 1)[1] if "@" in self.path else None


@dataclass(frozen=True)
class ProcessMetadata:
    """
    Restoration skeleton of a dependency process: memory layout, open files
    and the continuation to run once restored. Everything but the pages.
    """
    dep_label: str
    entry_token: str
    segments: Tuple[Segment, ...] = ()
    file_table: Tuple[FileEntry, ...] = ()
    page_size: int = PAGE_SIZE

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(self, "file_table", tuple(self.file_table))
        if self.page_size != PAGE_SIZE:
            raise InvalidMetadataError(f"page size must be {PAGE_SIZE}, got {self.page_size}")
        for seg in self.segments:
            if seg.page_count < 1:
                raise InvalidMetadataError(f"segment at page {seg.base_page_id} is empty")
            if seg.base_page_id < 0 or seg.end > U64_LIMIT:
                raise InvalidMetadataError(f"segment at page {seg.base_page_id} leaves the 64-bit page space")
        ordered = sorted(self.segments, key=lambda s: s.base_page_id)
        for prev, cur in zip(ordered, ordered[1:]):
            if cur.base_page_id < prev.end:
                raise InvalidMetadataError(
                    f"segments [{prev.base_page_id}, {prev.end}) and [{cur.base_page_id}, {cur.end}) overlap")
        seen = set()
        for entry in self.file_table:
            if not 0 <= entry.fd <= U32_MAX:
                raise InvalidMetadataError(f"fd {entry.fd} out of range")
            if entry.fd in seen:
                raise InvalidMetadataError(f"fd {entry.fd} appears twice in the file table")
            seen.add(entry.fd)

    @cached_property
    def _ordered(self) -> Tuple[List[int], Tuple[Segment, ...]]:
        ordered = tuple(sorted(self.segments, key=lambda s: s.base_page_id))
        return [s.base_page_id for s in ordered], ordered

    @cached_property
    def total_pages(self) -> int:
        return sum(s.page_count for s in self.segments)

    @cached_property
    def metadata_size_bytes(self) -> int:
        from src.image.codec import encode_metadata
        return len(encode_metadata(self))

    def covers(self, page_id: int) -> bool:
        bases, ordered = self._ordered
        i = bisect_right(bases, page_id) - 1
        return i >= 0 and page_id < ordered[i].end

    def page_ids(self, start: int = 0) -> Iterator[int]:
        """Covered page ids in ascending order, beginning at `start`."""
        for seg in self._ordered[1]:
            if seg.end <= start:
                continue
            yield from range(max(seg.base_page_id, start), seg.end)


class DependencyImage:
    """A live dependency image: metadata plus a page_id -> 4096-byte block map."""

    def __init__(self, metadata: ProcessMetadata, pages: Mapping[int, bytes]):
        self.metadata = metadata
        self.pages = pages

    @property
    def dep_label(self) -> str:
        return self.metadata.dep_label

    def page(self, page_id: int) -> bytes:
        return self.pages[page_id]

    def __eq__(self, other) -> bool:
        if not isinstance(other, DependencyImage):
            return NotImplemented
        if self.metadata != other.metadata:
            return False
        if len(self.pages) != len(other.pages):
            return False
        return all(self.pages[pid] == other.pages.get(pid) for pid in self.metadata.page_ids())

    def __repr__(self) -> str:
        return f"DependencyImage({self.dep_label!r}, pages={self.metadata.total_pages})"


@dataclass
class PoolEntry:
    image: DependencyImage
    ref_count: int = 0
    serve_count: int = 0


class PoolEntryInfo(BaseModel):
    dep_label: str
    total_pages: int
    metadata_size_bytes: int
    memory_bytes: int
    ref_count: int
    serve_count: int


class SegmentPlan(BaseModel):
    size_bytes: int
    permission: Literal["read", "read-write", "execute"] = "read"
    base_page_id: Optional[int] = None  # None: placed right after the previous segment

    @validator("size_bytes")
    def _positive_size(cls, v: int) -> int:
        if v <= 0:
            raise ValueError("segment size must be > 0")
        return v

    @property
    def page_count(self) -> int:
        return -(-self.size_bytes // PAGE_SIZE)


class FilePlan(BaseModel):
    fd: int
    path: str
    kind: Literal["regular", "socket", "device"] = "regular"


class ProcessSpec(BaseModel):
    """Recipe for a synthetic dependency process (runtime + packages stand-in)."""
    dep_label: str
    entry_token: str = "import-and-run-handler"
    segments: List[SegmentPlan] = []
    files: List[FilePlan] = []
    content_seed: int = 0

    @validator("dep_label")
    def _label_non_empty(cls, v: str) -> str:
        if not v:
            raise ValueError("dep_label must be non-empty")
        return v

    @validator("content_seed")
    def _seed_u64(cls, v: int) -> int:
        if not 0 <= v < U64_LIMIT:
            raise ValueError("content_seed must fit in 64 bits")
        return v
