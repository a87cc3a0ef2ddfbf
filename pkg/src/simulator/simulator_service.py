"""
Discrete-event serverless platform simulator.

Each function owns at most one instance. An invocation is warm when the
previous invocation of the same function started no more than keep_alive
minutes earlier; otherwise the instance has been evicted and the strategy's
cold-start path runs.
"""
import heapq
import json
import logging
import math
from collections import defaultdict
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence, Union

import pandas as pd
from pydantic import ValidationError

from src.restore.model import RestorePolicy
from src.simulator.errors import ConfigurationError
from src.simulator.model import (
    MB,
    ComparisonRow,
    CostModel,
    FunctionProfile,
    FunctionSummary,
    InvocationRecord,
    LatencyBreakdown,
    SimulationReport,
    Strategy,
)
from src.workload.model import InvocationTrace

logger = logging.getLogger(__name__)

BREAKDOWN_COLUMNS = ["function", "timestamp", "kind", "phase", "seconds"]
PathLike = Union[str, Path]


def communication_s(profile: FunctionProfile, cost: CostModel) -> float:
    return cost.metadata_base_ms / 1e3 + profile.metadata_mb / cost.network_bandwidth_mb_s


def migration_s(profile: FunctionProfile, policy: RestorePolicy, cost: CostModel) -> float:
    base = cost.restore_base_ms / 1e3
    image = profile.checkpoint_image_mb
    if policy == RestorePolicy.LAZY:
        return base
    if policy == RestorePolicy.BULK:
        # the stream overlaps execution; only the part it cannot hide is charged
        stream = image / cost.network_bandwidth_mb_s
        return base + cost.rtt_s + max(0.0, stream - profile.execution)
    if policy == RestorePolicy.EAGER_FULL:
        return base + image / cost.network_bandwidth_mb_s
    return base + image / cost.disk_bandwidth_mb_s


def cold_start_latency(profile: FunctionProfile, strategy: Strategy, cost: CostModel) -> LatencyBreakdown:
    if strategy.kind == "baseline":
        return LatencyBreakdown.of("cold", {
            "network": profile.network,
            "container_create": profile.container_create,
            "boot": profile.boot,
            "dep_init": profile.dep_init,
            "execution": profile.execution,
        })
    if strategy.kind == "prebaking":
        return LatencyBreakdown.of("cold", {
            "container_create": cost.prebake_container_create_s,
            "image_load": profile.prebake_image_mb / cost.disk_bandwidth_mb_s,
            "restore_overhead": cost.prebake_restore_overhead_s,
            "execution": profile.execution,
        })
    execution = profile.execution
    if strategy.policy == RestorePolicy.LAZY:
        execution += profile.faults_expected * cost.rtt_s
    return LatencyBreakdown.of("cold", {
        "network": profile.network,
        "container_create": profile.container_create,
        "communication": communication_s(profile, cost),
        "migration": migration_s(profile, strategy.policy, cost),
        "execution": execution,
    })


def warm_start_latency(
    profile: FunctionProfile,
    strategy: Strategy,
    cost: CostModel,
    first_after_cold: bool = False,
) -> LatencyBreakdown:
    """Execution only; the first warm start of a lazily restored instance still faults in untouched pages."""
    components = {"execution": profile.execution}
    if first_after_cold and strategy.kind == "warmswap" and strategy.policy == RestorePolicy.LAZY:
        extra = min(profile.warm_extra_faults, profile.untouched_pages)
        if extra:
            components["fault_stall"] = extra * cost.rtt_s
    return LatencyBreakdown.of("warm", components)


def memory_footprint(profiles: Iterable[FunctionProfile], strategy: Strategy, cost: CostModel) -> int:
    """Bytes the provider keeps pre-warmed for these functions."""
    profiles = list(profiles)
    if strategy.kind == "baseline":
        return 0
    if strategy.kind == "prebaking":
        return round(math.fsum(p.prebake_image_mb for p in profiles) * MB)
    shared: Dict[str, float] = {}
    for p in profiles:
        shared.setdefault(p.dep_label, p.checkpoint_image_mb + p.metadata_mb + cost.per_image_pool_overhead_mb)
    return round(math.fsum(shared.values()) * MB)


def _check_profiles(traces: Sequence[InvocationTrace], profiles: Mapping[str, FunctionProfile]) -> None:
    missing = sorted({t.function_id for t in traces} - set(profiles))
    if missing:
        raise ConfigurationError(f"no profile for function(s): {', '.join(missing)}")


def simulate(
    traces: Sequence[InvocationTrace],
    profiles: Mapping[str, FunctionProfile],
    strategy: Strategy,
    cost: CostModel,
    keep_alive: float = 15.0,
) -> SimulationReport:
    _check_profiles(traces, profiles)
    if keep_alive <= 0:
        raise ConfigurationError("keep_alive must be > 0")

    events = []
    seq = 0
    for trace in traces:
        for ts in trace.timestamps:
            events.append((ts, trace.function_id, seq))
            seq += 1
    heapq.heapify(events)

    last_start: Dict[str, float] = {}
    warm_streak: Dict[str, int] = defaultdict(int)
    records: List[InvocationRecord] = []
    cold_cache: Dict[str, LatencyBreakdown] = {}

    while events:
        ts, fid, _ = heapq.heappop(events)
        profile = profiles[fid]
        previous = last_start.get(fid)
        if previous is None or ts - previous > keep_alive:
            if fid not in cold_cache:
                cold_cache[fid] = cold_start_latency(profile, strategy, cost)
            breakdown = cold_cache[fid]
            warm_streak[fid] = 0
        else:
            breakdown = warm_start_latency(profile, strategy, cost, first_after_cold=warm_streak[fid] == 0)
            warm_streak[fid] += 1
        last_start[fid] = ts
        records.append(InvocationRecord(function=fid, timestamp=ts, breakdown=breakdown))

    report = summarize(records, profiles, strategy, cost, keep_alive)
    logger.info(
        f"📊 {strategy.label}: {report.cold_count} cold / {report.warm_count} warm, "
        f"accumulated cold latency {report.accumulated_cold_latency_s:.3f} s, "
        f"memory {report.memory_bytes / MB:.1f} MB"
    )
    return report


def summarize(
    records: Sequence[InvocationRecord],
    profiles: Mapping[str, FunctionProfile],
    strategy: Strategy,
    cost: CostModel,
    keep_alive: float,
) -> SimulationReport:
    by_function: Dict[str, List[InvocationRecord]] = defaultdict(list)
    for rec in records:
        by_function[rec.function].append(rec)

    summaries = []
    for fid in sorted(by_function):
        cold = [r.breakdown for r in by_function[fid] if r.breakdown.kind == "cold"]
        warm = [r.breakdown for r in by_function[fid] if r.breakdown.kind == "warm"]
        phases = sorted({name for b in cold for name in b.components})
        summaries.append(FunctionSummary(
            function=fid,
            dep_label=profiles[fid].dep_label,
            cold_count=len(cold),
            warm_count=len(warm),
            mean_cold_latency_s=math.fsum(b.total for b in cold) / len(cold) if cold else 0.0,
            mean_cold_breakdown={
                name: math.fsum(b.components.get(name, 0.0) for b in cold) / len(cold) for name in phases
            },
            mean_warm_latency_s=math.fsum(b.total for b in warm) / len(warm) if warm else 0.0,
        ))

    return SimulationReport(
        strategy=strategy.label,
        keep_alive=keep_alive,
        functions=summaries,
        memory_bytes=memory_footprint((profiles[fid] for fid in by_function), strategy, cost),
        total_latency_s=math.fsum(r.breakdown.total for r in records),
        accumulated_cold_latency_s=math.fsum(s.mean_cold_latency_s for s in summaries),
        records=list(records),
    )


def compare_strategies(
    traces: Sequence[InvocationTrace],
    profiles: Mapping[str, FunctionProfile],
    strategies: Sequence[Strategy],
    cost: CostModel,
    keep_alive: float = 15.0,
) -> List[ComparisonRow]:
    _check_profiles(traces, profiles)
    rows = []
    for strategy in strategies:
        report = simulate(traces, profiles, strategy, cost, keep_alive)
        rows.append(ComparisonRow(
            strategy=report.strategy,
            cold_count=report.cold_count,
            warm_count=report.warm_count,
            accumulated_cold_latency_s=report.accumulated_cold_latency_s,
            total_latency_s=report.total_latency_s,
            memory_bytes=report.memory_bytes,
        ))
    return rows


# -- files ---------------------------------------------------------------------

def write_report_json(report: SimulationReport, path: PathLike) -> None:
    Path(path).write_text(report.json(exclude={"records"}, indent=2) + "\n", encoding="utf-8")


def write_breakdown_csv(report: SimulationReport, path: PathLike) -> None:
    rows = [
        {
            "function": rec.function,
            "timestamp": rec.timestamp,
            "kind": rec.breakdown.kind,
            "phase": phase,
            "seconds": seconds,
        }
        for rec in report.records
        for phase, seconds in rec.breakdown.components.items()
    ]
    pd.DataFrame(rows, columns=BREAKDOWN_COLUMNS).to_csv(path, index=False, float_format="%.17g")
    logger.info(f"✅ Wrote {len(rows)} breakdown rows to {path}")


def write_comparison_csv(rows: Sequence[ComparisonRow], path: PathLike) -> None:
    pd.DataFrame([r.dict() for r in rows], columns=list(ComparisonRow.__fields__)).to_csv(
        path, index=False, float_format="%.17g"
    )


def load_json(path: PathLike):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"{path}: {e.strerror or e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}:{e.lineno}: {e.msg}") from e


def schema_error(path: PathLike, e: ValidationError) -> ConfigurationError:
    problems = "; ".join(
        f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()
    )
    return ConfigurationError(f"{path}: {problems}")


def load_profiles(path: PathLike) -> Dict[str, FunctionProfile]:
    """A JSON list of profiles, or {"profiles": [...]}; keyed by function name."""
    raw = load_json(path)
    if isinstance(raw, dict):
        raw = raw.get("profiles", [])
    if not isinstance(raw, list):
        raise ConfigurationError(f"{path}: expected a list of function profiles")
    profiles: Dict[str, FunctionProfile] = {}
    for i, item in enumerate(raw):
        try:
            profile = FunctionProfile.parse_obj(item)
        except ValidationError as e:
            raise schema_error(f"{path} [profile {i}]", e) from e
        if profile.name in profiles:
            raise ConfigurationError(f"{path} [profile {i}]: duplicate function '{profile.name}'")
        profiles[profile.name] = profile
    return profiles


def load_cost_model(path: PathLike) -> CostModel:
    raw = load_json(path)
    try:
        return CostModel.parse_obj(raw)
    except ValidationError as e:
        raise schema_error(path, e) from e
