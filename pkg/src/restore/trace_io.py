"""CSV reader/writer for page-access traces (`page_id,compute_us`)."""
import logging
from pathlib import Path
from typing import Union

import pandas as pd

from src.restore.model import Access, AccessTrace
from src.workload.trace_io import TraceFormatError

logger = logging.getLogger(__name__)

ACCESS_COLUMNS = ["page_id", "compute_us"]
PathLike = Union[str, Path]


def write_access_trace(trace: AccessTrace, path: PathLike) -> None:
    frame = pd.DataFrame([a.dict() for a in trace.accesses], columns=ACCESS_COLUMNS)
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"✅ Wrote {len(trace)} accesses to {path}")


def read_access_trace(path: PathLike) -> AccessTrace:
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError as e:
        raise TraceFormatError(f"{path}: empty file, header row required") from e
    missing = [c for c in ACCESS_COLUMNS if c not in frame.columns]
    if missing:
        raise TraceFormatError(f"{path}:1: missing column(s) {', '.join(missing)}")

    page_ids = pd.to_numeric(frame["page_id"], errors="coerce")
    costs = pd.to_numeric(frame["compute_us"], errors="coerce")
    accesses = []
    for offset, (pid, cost) in enumerate(zip(page_ids, costs)):
        line = offset + 2
        if pd.isna(pid) or pid < 0 or pid != int(pid):
            raise TraceFormatError(f"{path}:{line}: page_id must be an integer >= 0")
        if pd.isna(cost) or cost < 0:
            raise TraceFormatError(f"{path}:{line}: compute_us must be a number >= 0")
        accesses.append(Access(page_id=int(pid), compute_us=float(cost)))
    return AccessTrace(accesses=accesses)
