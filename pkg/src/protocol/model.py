from dataclasses import dataclass, field
from typing import List, Set

from pydantic import BaseModel


class ServerStats(BaseModel):
    sessions: int = 0
    active_sessions: int = 0
    frames_sent: int = 0
    bytes_sent: int = 0
    pages_streamed: int = 0
    faults_served: int = 0


class ClientStats(BaseModel):
    frames_received: int = 0
    bytes_received: int = 0
    bytes_sent: int = 0
    pages_received: int = 0
    duplicate_pages: int = 0


@dataclass
class StreamReport:
    """Outcome of one bulk stream. `resident` lets a caller resume after a drop."""
    completed: bool
    streamed: List[int] = field(default_factory=list)
    fault_pages: List[int] = field(default_factory=list)
    resident: Set[int] = field(default_factory=set)

    @property
    def pages_streamed(self) -> int:
        return len(self.streamed)
