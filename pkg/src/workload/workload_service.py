"""
Keep-alive cold-start model.

With invocation rate lambda (calls/min) and keep-alive T (min), an idle
instance survives the gap to the next call with probability 1 - e^(-lambda*T),
so over a horizon of D minutes

    P_no_inv = e^(-lambda*T)
    E_cs     = D * lambda * e^(-lambda*T)      (maximum at lambda = 1/T)

and a function is worth function-specific tuning when w * E_cs > c.
"""
import logging
import math
from typing import Iterable, List, Optional, Sequence

import numpy as np

from src.rng import SplitMix64
from src.workload.model import (
    AnalysisRow,
    InvocationTrace,
    RateHistogram,
    RateParams,
    TuningSplit,
)

logger = logging.getLogger(__name__)


def prob_no_invocation(p: RateParams) -> float:
    return math.exp(-p.rate * p.keep_alive)


def expected_cold_starts(p: RateParams) -> float:
    return p.horizon * p.rate * prob_no_invocation(p)


def expected_trace_cold_starts(p: RateParams) -> float:
    """
    Exact mean of count_cold_starts over Poisson traces on [0, D].

    count_cold_starts also charges the first invocation, and no call in the
    first T minutes can have a gap larger than T. Both edges together keep the
    result within 1 + lambda*T*e^(-lambda*T) of E_cs + P(first call exists).
    """
    lam, t, d = p.rate, p.keep_alive, p.horizon
    first = -math.expm1(-lam * d)
    if d <= t:
        return first
    later = math.exp(-lam * t) * (lam * (d - t) + math.expm1(-lam * (d - t)))
    return first + later


def boundary_term_bound(p: RateParams) -> float:
    return 1.0 + p.rate * p.keep_alive * prob_no_invocation(p)


def peak_rate(keep_alive: float) -> float:
    if keep_alive <= 0:
        raise ValueError("keep_alive must be > 0")
    return 1.0 / keep_alive


def qualifies_for_tuning(benefit_w: float, cost_c: float, p: RateParams) -> bool:
    if benefit_w < 0 or cost_c < 0:
        raise ValueError("benefit and cost must be >= 0")
    return benefit_w * expected_cold_starts(p) > cost_c


def cold_start_curve(keep_alive: float, horizon: float, grid: Sequence[float]) -> np.ndarray:
    """E_cs evaluated over a rate grid, vectorised."""
    rates = np.asarray(grid, dtype=np.float64)
    return horizon * rates * np.exp(-rates * keep_alive)


def rate_grid(start: float = 0.0001, stop: float = 1.0, step: float = 0.0001) -> np.ndarray:
    # integer multiples keep grid points exact to the step's decimal precision
    count = int(round((stop - start) / step)) + 1
    decimals = max(0, -int(math.floor(math.log10(step)))) + 2
    return np.round(start + np.arange(count) * step, decimals)


def grid_argmax(keep_alive: float, horizon: float, grid: Sequence[float]) -> float:
    values = cold_start_curve(keep_alive, horizon, grid)
    return float(np.asarray(grid, dtype=np.float64)[int(np.argmax(values))])


def split_by_tuning(rates: Iterable[float], benefit_w: float, cost_c: float,
                    keep_alive: float, horizon: float) -> TuningSplit:
    split = TuningSplit()
    for rate in rates:
        p = RateParams(rate=rate, keep_alive=keep_alive, horizon=horizon)
        if qualifies_for_tuning(benefit_w, cost_c, p):
            split.tuned.append(rate)
        else:
            split.long_tail.append(rate)
    return split


def analyze(p: RateParams, benefit_w: float = 1.0, cost_c: float = 0.0) -> AnalysisRow:
    return AnalysisRow(
        rate=p.rate,
        keep_alive=p.keep_alive,
        horizon=p.horizon,
        p_no_invocation=prob_no_invocation(p),
        expected_cold_starts=expected_cold_starts(p),
        peak_rate=peak_rate(p.keep_alive),
        qualifies=qualifies_for_tuning(benefit_w, cost_c, p),
    )


def generate_trace(p: RateParams, function_id: str, seed: int) -> InvocationTrace:
    """Poisson-process sample on [0, D] with exponential inter-arrivals of mean 1/lambda."""
    timestamps: List[float] = []
    if p.rate > 0:
        rng = SplitMix64(seed)
        t = 0.0
        while True:
            gap = rng.exponential(p.rate)
            if gap <= 0.0:
                continue
            t += gap
            if t > p.horizon:
                break
            timestamps.append(t)
    return InvocationTrace.construct(function_id=function_id, timestamps=timestamps, seed=seed)


def count_cold_starts(trace: InvocationTrace, keep_alive: float) -> int:
    ts = trace.timestamps
    if not ts:
        return 0
    cold = 1
    for prev, cur in zip(ts, ts[1:]):
        if cur - prev > keep_alive:
            cold += 1
    return cold


def bucket_histogram(rates: Sequence[float], bucket_width: float = 0.001,
                     decimals: Optional[int] = None) -> RateHistogram:
    """
    Normalised density of rates over half-open buckets [x, x + width).
    The quotient is rounded before flooring so that 0.0015/0.001 lands in
    bucket 1 despite binary representation error.
    """
    if bucket_width <= 0:
        raise ValueError("bucket_width must be > 0")
    if len(rates) == 0:
        return RateHistogram(bucket_width=bucket_width, buckets={})

    values = np.asarray(rates, dtype=np.float64)
    if np.any(values < 0):
        raise ValueError("rates must be >= 0")

    index = np.floor(np.round(values / bucket_width, 9)).astype(np.int64)
    keys, counts = np.unique(index, return_counts=True)
    places = decimals if decimals is not None else 12
    total = counts.sum()
    buckets = {
        round(float(k) * bucket_width, places): float(c) / float(total)
        for k, c in zip(keys, counts)
    }
    logger.debug(f"📊 {len(values)} rates -> {len(buckets)} buckets of width {bucket_width}")
    return RateHistogram(bucket_width=bucket_width, buckets=buckets)
