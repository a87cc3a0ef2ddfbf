"""
Cost-model calibration against reference measurements of the FunctionBench model-serving functions.

The reference profiles carry the transfer sizes of the three model-serving
functions and a digitisation of their Baseline boot / dependency-init /
execution times. calibrate_cost_model() fits network bandwidth, restore base
and metadata base so that the simulated WarmSwap(bulk) speedups match the
target ratios in log space; calibrate_prebaking() then solves the Prebaking
restore overhead for the target aggregate latency ratio.
"""
import logging
import math
from typing import Dict, List, Mapping, Optional

import numpy as np
from pydantic import BaseModel
from scipy.optimize import least_squares

from src.restore.model import RestorePolicy
from src.simulator.model import CostModel, FunctionProfile, Strategy
from src.simulator.simulator_service import cold_start_latency

logger = logging.getLogger(__name__)

COLD_START_TARGETS = {"lr_serving": 1.2, "cnn_serving": 1.8, "rnn_serving": 2.2}
DEPENDENCY_BOOT_TARGETS = {"lr_serving": 2.2, "cnn_serving": 3.2, "rnn_serving": 2.5}
PREBAKING_RATIO_TARGET = 4.8
PREBAKE_IMAGE_MB = 178.0
PREBAKE_VARIANTS = 10

_FITTED = ("network_bandwidth_mb_s", "restore_base_ms", "metadata_base_ms")
_LOWER = (1.0, 0.0, 1.0)
_UPPER = (10_000.0, 5_000.0, 1_000.0)

WARMSWAP_BULK = Strategy(kind="warmswap", policy=RestorePolicy.BULK)
PREBAKING = Strategy(kind="prebaking")


def reference_profiles() -> Dict[str, FunctionProfile]:
    rows = [
        # name, dep_label, dep_init, execution, container MB, image MB, metadata MB, faults, warm extra
        ("lr_serving", "python3.9+sklearn+pandas", 0.625, 1.8, 379.52, 79.0, 5.6, 520, 1180),
        ("cnn_serving", "python3.9+numpy+keras", 1.496, 0.65, 1386.73, 190.0, 15.0, 2680, 4120),
        ("rnn_serving", "python3.9+numpy+torch", 2.799, 0.004, 5602.46, 200.0, 12.0, 1330, 0),
    ]
    return {
        name: FunctionProfile(
            name=name,
            dep_label=label,
            network=0.05,
            container_create=0.5,
            boot=0.25,
            dep_init=dep_init,
            execution=execution,
            container_image_mb=container,
            checkpoint_image_mb=image,
            metadata_mb=meta,
            distinct_pages_touched=faults,
            faults_expected=faults,
            warm_extra_faults=extra,
        )
        for name, label, dep_init, execution, container, image, meta, faults, extra in rows
    }


def cold_start_speedup(profile: FunctionProfile, cost: CostModel, strategy: Strategy = WARMSWAP_BULK) -> float:
    """Baseline (boot + dep_init + execution) over WarmSwap (communication + migration + execution)."""
    ws = cold_start_latency(profile, strategy, cost).components
    return (profile.boot + profile.dep_init + profile.execution) / (
        ws["communication"] + ws["migration"] + ws["execution"]
    )


def dependency_boot_speedup(profile: FunctionProfile, cost: CostModel, strategy: Strategy = WARMSWAP_BULK) -> float:
    ws = cold_start_latency(profile, strategy, cost).components
    return (profile.boot + profile.dep_init) / (ws["communication"] + ws["migration"])


def _residuals(cost: CostModel, profiles: Mapping[str, FunctionProfile]) -> np.ndarray:
    out: List[float] = []
    for name, target in COLD_START_TARGETS.items():
        out.append(math.log(cold_start_speedup(profiles[name], cost) / target))
    for name, target in DEPENDENCY_BOOT_TARGETS.items():
        out.append(math.log(dependency_boot_speedup(profiles[name], cost) / target))
    return np.asarray(out)


def calibration_loss(cost: CostModel, profiles: Optional[Mapping[str, FunctionProfile]] = None) -> float:
    r = _residuals(cost, profiles or reference_profiles())
    return float(0.5 * np.dot(r, r))


class CalibrationResult(BaseModel):
    cost: CostModel
    loss_before: float
    loss_after: float
    cold_start_speedups: Dict[str, float]
    dependency_boot_speedups: Dict[str, float]
    prebaking_ratio: float


def calibrate_cost_model(
    profiles: Optional[Mapping[str, FunctionProfile]] = None,
    start: Optional[CostModel] = None,
) -> CostModel:
    """Least-squares fit of the three WarmSwap cost parameters; never returns a worse fit than `start`."""
    profiles = profiles or reference_profiles()
    start = start or CostModel()

    def build(x: np.ndarray) -> CostModel:
        return start.copy(update=dict(zip(_FITTED, (float(v) for v in x))))

    x0 = np.clip([getattr(start, f) for f in _FITTED], _LOWER, _UPPER)
    fit = least_squares(lambda x: _residuals(build(x), profiles), x0, bounds=(_LOWER, _UPPER), x_scale="jac")
    fitted = build(fit.x)
    before, after = calibration_loss(start, profiles), calibration_loss(fitted, profiles)
    if after > before:
        logger.warning(f"⚠️ Fit did not improve the start point ({after:.3g} > {before:.3g}), keeping it")
        return start
    logger.info(
        f"✅ Calibrated cost model: bandwidth {fitted.network_bandwidth_mb_s:.1f} MB/s, "
        f"restore base {fitted.restore_base_ms:.1f} ms, metadata base {fitted.metadata_base_ms:.1f} ms "
        f"(loss {before:.4g} -> {after:.4g})"
    )
    return fitted


def prebaking_scenario(base: Optional[FunctionProfile] = None, variants: int = PREBAKE_VARIANTS,
                       prebake_image_mb: float = PREBAKE_IMAGE_MB) -> Dict[str, FunctionProfile]:
    """`variants` copies of one function sharing its dependency image, each with its own prebaked image."""
    base = base or reference_profiles()["rnn_serving"]
    return {
        f"{base.name}_{i}": base.copy(update={"name": f"{base.name}_{i}", "prebake_image_mb": prebake_image_mb})
        for i in range(variants)
    }


def accumulated_cold_latency(profiles: Mapping[str, FunctionProfile], strategy: Strategy, cost: CostModel) -> float:
    return math.fsum(cold_start_latency(p, strategy, cost).total for p in profiles.values())


def prebaking_ratio(cost: CostModel, profiles: Optional[Mapping[str, FunctionProfile]] = None) -> float:
    profiles = profiles or prebaking_scenario()
    return accumulated_cold_latency(profiles, PREBAKING, cost) / accumulated_cold_latency(profiles, WARMSWAP_BULK, cost)


def calibrate_prebaking(
    cost: CostModel,
    profiles: Optional[Mapping[str, FunctionProfile]] = None,
    target: float = PREBAKING_RATIO_TARGET,
) -> CostModel:
    """Closed-form restore overhead making Prebaking/WarmSwap accumulated cold latency equal `target`."""
    profiles = profiles or prebaking_scenario()
    warmswap = accumulated_cold_latency(profiles, WARMSWAP_BULK, cost)
    fixed = math.fsum(
        cost.prebake_container_create_s + p.prebake_image_mb / cost.disk_bandwidth_mb_s + p.execution
        for p in profiles.values()
    )
    overhead = max(0.0, (target * warmswap - fixed) / len(profiles))
    logger.info(f"✅ Prebaking restore overhead solved to {overhead:.3f} s for a {target}x ratio")
    return cost.copy(update={"prebake_restore_overhead_s": overhead})


def calibrate(start: Optional[CostModel] = None) -> CalibrationResult:
    profiles = reference_profiles()
    start = start or CostModel()
    cost = calibrate_prebaking(calibrate_cost_model(profiles, start))
    return CalibrationResult(
        cost=cost,
        loss_before=calibration_loss(start, profiles),
        loss_after=calibration_loss(cost, profiles),
        cold_start_speedups={n: cold_start_speedup(profiles[n], cost) for n in COLD_START_TARGETS},
        dependency_boot_speedups={n: dependency_boot_speedup(profiles[n], cost) for n in DEPENDENCY_BOOT_TARGETS},
        prebaking_ratio=prebaking_ratio(cost),
    )
