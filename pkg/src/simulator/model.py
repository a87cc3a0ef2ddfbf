import math
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field, root_validator, validator

from src.image.model import PAGE_SIZE
from src.restore.model import RestorePolicy

MB = 1_000_000


class FunctionProfile(BaseModel):
    """Latency components in seconds, sizes in MB (10^6 bytes)."""
    name: str
    dep_label: str
    network: float = Field(0.0, ge=0)
    container_create: float = Field(0.5, ge=0)
    boot: float = Field(0.0, ge=0)
    dep_init: float = Field(0.0, ge=0)
    execution: float = Field(0.0, ge=0)
    container_image_mb: float = Field(0.0, ge=0)
    checkpoint_image_mb: float = Field(0.0, ge=0)
    metadata_mb: float = Field(0.0, ge=0)
    prebake_image_mb: Optional[float] = Field(None, ge=0)
    total_pages: Optional[int] = Field(None, ge=0)
    distinct_pages_touched: int = Field(0, ge=0)
    faults_expected: int = Field(0, ge=0)
    warm_extra_faults: int = Field(0, ge=0)

    @root_validator(skip_on_failure=True)
    def _derived_sizes(cls, values):
        if values.get("prebake_image_mb") is None:
            values["prebake_image_mb"] = values["checkpoint_image_mb"]
        if values.get("total_pages") is None:
            values["total_pages"] = math.ceil(values["checkpoint_image_mb"] * MB / PAGE_SIZE)
        if values["distinct_pages_touched"] > values["total_pages"]:
            raise ValueError("distinct_pages_touched must not exceed total_pages")
        return values

    @property
    def untouched_pages(self) -> int:
        return self.total_pages - self.distinct_pages_touched


class CostModel(BaseModel):
    network_bandwidth_mb_s: float = Field(250.0, gt=0)
    per_fault_rtt_ms: float = Field(0.5, gt=0)
    metadata_base_ms: float = Field(25.0, gt=0)
    restore_base_ms: float = Field(350.0, ge=0)
    disk_bandwidth_mb_s: float = Field(500.0, gt=0)
    prebake_container_create_s: float = Field(1.5, ge=0)
    prebake_restore_overhead_s: float = Field(6.65, ge=0)
    per_image_pool_overhead_mb: float = Field(48.0, ge=0)

    @property
    def rtt_s(self) -> float:
        return self.per_fault_rtt_ms / 1e3


class Strategy(BaseModel):
    kind: Literal["baseline", "warmswap", "prebaking"]
    policy: Optional[RestorePolicy] = None

    @root_validator(skip_on_failure=True)
    def _policy_only_for_warmswap(cls, values):
        if values["kind"] == "warmswap" and values.get("policy") is None:
            values["policy"] = RestorePolicy.BULK
        elif values["kind"] != "warmswap" and values.get("policy") is not None:
            raise ValueError(f"{values['kind']} takes no restore policy")
        return values

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        """`baseline`, `prebaking`, `warmswap` or `warmswap:<policy>`."""
        kind, _, policy = text.strip().lower().partition(":")
        return cls(kind=kind, policy=policy or None)

    @property
    def label(self) -> str:
        return f"warmswap:{self.policy.value}" if self.kind == "warmswap" else self.kind

    def __str__(self) -> str:
        return self.label


class LatencyBreakdown(BaseModel):
    kind: Literal["cold", "warm"]
    components: Dict[str, float]
    total: float

    @classmethod
    def of(cls, kind: str, components: Dict[str, float]) -> "LatencyBreakdown":
        return cls(kind=kind, components=components, total=math.fsum(components.values()))


class InvocationRecord(BaseModel):
    function: str
    timestamp: float
    breakdown: LatencyBreakdown


class FunctionSummary(BaseModel):
    function: str
    dep_label: str
    cold_count: int = 0
    warm_count: int = 0
    mean_cold_latency_s: float = 0.0
    mean_cold_breakdown: Dict[str, float] = {}
    mean_warm_latency_s: float = 0.0


class SimulationReport(BaseModel):
    strategy: str
    keep_alive: float
    functions: List[FunctionSummary] = []
    memory_bytes: int = 0
    total_latency_s: float = 0.0
    accumulated_cold_latency_s: float = 0.0
    records: List[InvocationRecord] = []

    @property
    def cold_count(self) -> int:
        return sum(f.cold_count for f in self.functions)

    @property
    def warm_count(self) -> int:
        return sum(f.warm_count for f in self.functions)


class ComparisonRow(BaseModel):
    strategy: str
    cold_count: int
    warm_count: int
    accumulated_cold_latency_s: float
    total_latency_s: float
    memory_bytes: int


class ExperimentConfig(BaseModel):
    """Paths are resolved against the directory of the config file."""
    profiles: str
    cost: Optional[str] = None
    traces: Optional[str] = None
    rates: Dict[str, float] = {}
    horizon_minutes: float = Field(1440.0, gt=0)
    keep_alive: float = Field(15.0, alias="keep_alive_T", gt=0)
    seed: int = Field(0, ge=0)
    strategies: List[str] = ["baseline", "warmswap:bulk"]
    output_dir: str = "out"

    class Config:
        allow_population_by_field_name = True

    @validator("rates")
    def _non_negative_rates(cls, v: Dict[str, float]) -> Dict[str, float]:
        bad = [fid for fid, r in v.items() if r < 0]
        if bad:
            raise ValueError(f"negative rates for {', '.join(sorted(bad))}")
        return v

    @validator("strategies", each_item=True)
    def _known_strategy(cls, v: str) -> str:
        Strategy.parse(v)
        return v
