import json
from enum import Enum
from pathlib import Path
from typing import Dict, List, Union

from pydantic import BaseModel, Field, validator


class RestorePolicy(str, Enum):
    BULK = "bulk"
    LAZY = "lazy"
    EAGER_FULL = "eager-full"
    FILE_COPY = "file-copy"

    @property
    def networked(self) -> bool:
        return self is not RestorePolicy.FILE_COPY


class EnvironmentManifest(BaseModel):
    """Files present in the destination container: absolute path -> version string."""
    files: Dict[str, str] = {}

    @validator("files")
    def _absolute_paths(cls, v: Dict[str, str]) -> Dict[str, str]:
        relative = [p for p in v if not p.startswith("/")]
        if relative:
            raise ValueError(f"paths must be absolute: {', '.join(sorted(relative))}")
        return v

    @classmethod
    def load(cls, path: Union[str, Path]) -> "EnvironmentManifest":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if "files" not in raw:
            raw = {"files": raw}
        return cls.parse_obj(raw)


class Access(BaseModel):
    page_id: int = Field(..., ge=0)
    compute_us: float = Field(0.0, ge=0)


class AccessTrace(BaseModel):
    accesses: List[Access] = []

    @classmethod
    def of(cls, page_ids, compute_us: float = 0.0) -> "AccessTrace":
        return cls(accesses=[Access(page_id=p, compute_us=compute_us) for p in page_ids])

    @property
    def page_ids(self) -> List[int]:
        return [a.page_id for a in self.accesses]

    @property
    def distinct_pages(self) -> int:
        return len(set(self.page_ids))

    @property
    def compute_us(self) -> float:
        return sum(a.compute_us for a in self.accesses)

    def __len__(self) -> int:
        return len(self.accesses)


class RestoreStats(BaseModel):
    """
    Per-process transfer counters plus per-execution fault counters.

    pages_transferred and bytes_received accumulate over the life of the
    restored process; faults_taken and fault_blocked_time_us describe one
    execution. bytes_received counts payload: metadata plus 4096 per page.
    """
    pages_transferred: int = 0
    faults_taken: int = 0
    bytes_received: int = 0
    metadata_bytes: int = 0
    wire_bytes_received: int = 0
    fault_blocked_time_us: float = 0.0
    pages_streamed: int = 0
    stream_completed: bool = False
    stream_order: List[int] = []
    phase_ms: Dict[str, float] = {}


class ExecutionReport(BaseModel):
    dep_label: str
    policy: RestorePolicy
    accesses: int
    distinct_pages: int
    faults_taken: int
    modeled_compute_us: float
    page_digests: List[int] = []  # CRC-32 of each accessed page, in trace order
    stats: RestoreStats

    class Config:
        use_enum_values = True
