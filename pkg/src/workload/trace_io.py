"""CSV readers/writers for invocation traces and per-function rate lists."""
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

import pandas as pd

from src.workload.model import InvocationTrace

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["function_id", "timestamp_minutes"]
PathLike = Union[str, Path]


class TraceFormatError(ValueError):
    """A trace or rates CSV that does not follow the documented layout."""


def write_trace_csv(traces: Sequence[InvocationTrace], path: PathLike) -> None:
    rows = [
        {"function_id": trace.function_id, "timestamp_minutes": ts}
        for trace in traces
        for ts in trace.timestamps
    ]
    frame = pd.DataFrame(rows, columns=TRACE_COLUMNS)
    frame.to_csv(path, index=False, float_format="%.17g")
    logger.info(f"✅ Wrote {len(rows)} invocations of {len(traces)} functions to {path}")


def read_trace_csv(path: PathLike) -> List[InvocationTrace]:
    """
    Load traces grouped by function in order of first appearance.
    Rows of one function may be interleaved with others but must be
    time-ordered; errors name the offending CSV line.
    """
    try:
        frame = pd.read_csv(path, dtype={"function_id": str})
    except pd.errors.EmptyDataError as e:
        raise TraceFormatError(f"{path}: empty file, header row required") from e

    missing = [c for c in TRACE_COLUMNS if c not in frame.columns]
    if missing:
        raise TraceFormatError(f"{path}:1: missing column(s) {', '.join(missing)}")

    stamps = pd.to_numeric(frame["timestamp_minutes"], errors="coerce")
    grouped: Dict[str, List[float]] = {}
    for offset, (fid, ts) in enumerate(zip(frame["function_id"], stamps)):
        line = offset + 2  # header is line 1
        if pd.isna(fid) or str(fid) == "":
            raise TraceFormatError(f"{path}:{line}: empty function_id")
        if pd.isna(ts) or ts < 0:
            raise TraceFormatError(f"{path}:{line}: timestamp must be a number >= 0")
        series = grouped.setdefault(str(fid), [])
        if series and ts <= series[-1]:
            raise TraceFormatError(f"{path}:{line}: timestamps of {fid} must be strictly increasing")
        series.append(float(ts))

    return [InvocationTrace(function_id=fid, timestamps=ts, seed=0) for fid, ts in grouped.items()]


def read_rates_csv(path: PathLike) -> List[float]:
    """Rates file: a `rate` column (calls/min), one function per row; empty files are allowed."""
    try:
        frame = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        return []
    if "rate" not in frame.columns:
        raise TraceFormatError(f"{path}:1: missing column rate")
    rates = pd.to_numeric(frame["rate"], errors="coerce")
    for offset, value in enumerate(rates):
        if pd.isna(value) or value < 0:
            raise TraceFormatError(f"{path}:{offset + 2}: rate must be a number >= 0")
    return [float(v) for v in rates]
