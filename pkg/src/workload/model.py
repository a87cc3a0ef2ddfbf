from typing import Dict, List

from pydantic import BaseModel, Field, validator


class RateParams(BaseModel):
    """Invocation-pattern parameters; every quantity is in minutes."""
    rate: float = Field(..., alias="lambda", description="invocations per minute")
    keep_alive: float = Field(15.0, alias="keep_alive_T")
    horizon: float = Field(1440.0, alias="horizon_D")

    class Config:
        allow_population_by_field_name = True

    @validator("rate")
    def _rate_non_negative(cls, v: float) -> float:
        if v < 0:
            raise ValueError("rate must be >= 0")
        return v

    @validator("keep_alive", "horizon")
    def _positive(cls, v: float, field) -> float:
        if v <= 0:
            raise ValueError(f"{field.name} must be > 0")
        return v


class InvocationTrace(BaseModel):
    function_id: str
    timestamps: List[float] = []
    seed: int = 0  # 0 when the trace was supplied from outside

    @validator("timestamps")
    def _strictly_increasing(cls, v: List[float]) -> List[float]:
        if v and v[0] < 0:
            raise ValueError("timestamps must be >= 0")
        for prev, cur in zip(v, v[1:]):
            if cur <= prev:
                raise ValueError("timestamps must be strictly increasing")
        return v

    def __len__(self) -> int:
        return len(self.timestamps)


class RateHistogram(BaseModel):
    bucket_width: float = 0.001
    buckets: Dict[float, float] = {}  # bucket lower bound -> normalised density

    @validator("bucket_width")
    def _positive_width(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("bucket_width must be > 0")
        return v


class TuningSplit(BaseModel):
    """Rate population split by the function-specific tuning criterion w*E_cs > c."""
    tuned: List[float] = []
    long_tail: List[float] = []

    @property
    def long_tail_share(self) -> float:
        total = len(self.tuned) + len(self.long_tail)
        return len(self.long_tail) / total if total else 0.0


class AnalysisRow(BaseModel):
    rate: float
    keep_alive: float
    horizon: float
    p_no_invocation: float
    expected_cold_starts: float
    peak_rate: float
    qualifies: bool


class AnalyzeRequest(BaseModel):
    rates: List[float]
    keep_alive: float = Field(15.0, alias="keep_alive_T")
    horizon: float = Field(1440.0, alias="horizon_D")
    benefit_w: float = 1.0
    cost_c: float = 0.0

    class Config:
        allow_population_by_field_name = True
