import json

import pandas as pd
import pytest
from pydantic import ValidationError

from src.restore.model import RestorePolicy
from src.simulator.calibration import prebaking_scenario, reference_profiles
from src.simulator.errors import ConfigurationError
from src.simulator.experiment import load_experiment
from src.simulator.model import CostModel, FunctionProfile, Strategy
from src.simulator.simulator_service import (
    BREAKDOWN_COLUMNS,
    cold_start_latency,
    communication_s,
    compare_strategies,
    load_profiles,
    memory_footprint,
    migration_s,
    simulate,
    warm_start_latency,
    write_breakdown_csv,
    write_report_json,
)
from src.workload.model import InvocationTrace
from src.workload.workload_service import count_cold_starts

COST = CostModel()
BASELINE = Strategy(kind="baseline")
BULK = Strategy(kind="warmswap")
LAZY = Strategy.parse("warmswap:lazy")
PREBAKING = Strategy(kind="prebaking")


def profile(**overrides) -> FunctionProfile:
    values = dict(
        name="f", dep_label="python+numpy", network=0.1, container_create=0.5, boot=0.4,
        dep_init=2.0, execution=2.0, checkpoint_image_mb=100.0, metadata_mb=15.0,
        distinct_pages_touched=100, faults_expected=100, warm_extra_faults=50,
    )
    values.update(overrides)
    return FunctionProfile(**values)


def traces(**timestamps):
    return [InvocationTrace(function_id=fid, timestamps=ts) for fid, ts in timestamps.items()]


def test_baseline_cold_start_sums_components():
    breakdown = cold_start_latency(profile(), BASELINE, COST)
    assert breakdown.kind == "cold"
    assert breakdown.total == pytest.approx(5.0)
    assert list(breakdown.components) == ["network", "container_create", "boot", "dep_init", "execution"]


def test_communication_cost():
    assert communication_s(profile(), COST) == pytest.approx(0.085)


def test_migration_by_policy():
    p = profile(checkpoint_image_mb=100.0, execution=0.1)
    assert migration_s(p, RestorePolicy.LAZY, COST) == pytest.approx(0.35)
    assert migration_s(p, RestorePolicy.BULK, COST) == pytest.approx(0.35 + 0.0005 + 0.3)
    assert migration_s(p, RestorePolicy.EAGER_FULL, COST) == pytest.approx(0.75)
    assert migration_s(p, RestorePolicy.FILE_COPY, COST) == pytest.approx(0.55)
    # stream fully hidden behind a long execution
    assert migration_s(profile(execution=5.0), RestorePolicy.BULK, COST) == pytest.approx(0.3505)


def test_prebaking_cold_start():
    breakdown = cold_start_latency(profile(prebake_image_mb=178.0), PREBAKING, COST)
    assert breakdown.components == pytest.approx({
        "container_create": 1.5, "image_load": 0.356, "restore_overhead": 6.65, "execution": 2.0,
    })


def test_warmswap_skips_boot_and_init():
    components = cold_start_latency(profile(), BULK, COST).components
    assert "boot" not in components and "dep_init" not in components
    assert set(components) == {"network", "container_create", "communication", "migration", "execution"}


def test_lazy_pays_per_fault_on_cold_execution():
    lazy = cold_start_latency(profile(faults_expected=400), LAZY, COST)
    assert lazy.components["execution"] == pytest.approx(2.0 + 400 * 0.0005)


def test_cold_and_warm_classification():
    report = simulate(traces(f=[0.0, 5.0, 30.0]), {"f": profile()}, BASELINE, COST, keep_alive=15.0)
    assert [r.breakdown.kind for r in report.records] == ["cold", "warm", "cold"]
    assert (report.cold_count, report.warm_count) == (2, 1)


def test_keep_alive_boundary_is_warm():
    report = simulate(traces(f=[0.0, 15.0]), {"f": profile()}, BASELINE, COST, keep_alive=15.0)
    assert report.cold_count == 1


def test_matches_trace_cold_start_count():
    ts = [0.0, 3.0, 20.0, 21.0, 50.0, 64.0, 80.0]
    report = simulate(traces(f=ts), {"f": profile()}, BULK, COST, keep_alive=15.0)
    assert report.cold_count == count_cold_starts(InvocationTrace(function_id="f", timestamps=ts), 15.0)


def test_empty_traces():
    report = simulate([], {"f": profile()}, BULK, COST)
    assert report.records == [] and report.functions == []
    assert report.total_latency_s == 0.0
    assert report.memory_bytes == 0


def test_missing_profile():
    with pytest.raises(ConfigurationError, match="g"):
        simulate(traces(g=[1.0]), {"f": profile()}, BASELINE, COST)


def test_deterministic():
    t = traces(f=[0.0, 10.0, 40.0], g=[5.0, 6.0])
    profiles = {"f": profile(), "g": profile(name="g")}
    a = simulate(t, profiles, LAZY, COST)
    b = simulate(t, profiles, LAZY, COST)
    assert a == b


def test_events_processed_in_time_order():
    t = traces(b=[2.0, 4.0], a=[1.0, 3.0])
    profiles = {"a": profile(name="a"), "b": profile(name="b")}
    report = simulate(t, profiles, BASELINE, COST)
    assert [(r.function, r.timestamp) for r in report.records] == [("a", 1.0), ("b", 2.0), ("a", 3.0), ("b", 4.0)]


def test_latency_conservation():
    t = traces(f=[0.0, 5.0, 30.0, 31.0], g=[2.0, 90.0])
    profiles = {"f": profile(), "g": profile(name="g", dep_label="python+torch")}
    for strategy in (BASELINE, BULK, LAZY, PREBAKING):
        report = simulate(t, profiles, strategy, COST)
        assert report.cold_count + report.warm_count == 6
        assert report.total_latency_s == pytest.approx(sum(r.breakdown.total for r in report.records))
        for rec in report.records:
            assert rec.breakdown.total == pytest.approx(sum(rec.breakdown.components.values()))


def test_warm_starts_are_strategy_neutral():
    p = profile()
    for strategy in (BASELINE, BULK, PREBAKING):
        assert warm_start_latency(p, strategy, COST).total == p.execution
    assert warm_start_latency(p, LAZY, COST).total == p.execution


def test_lazy_first_warm_start_stalls_on_untouched_pages():
    p = profile(warm_extra_faults=50)
    first = warm_start_latency(p, LAZY, COST, first_after_cold=True)
    assert first.components["fault_stall"] == pytest.approx(50 * 0.0005)

    report = simulate(traces(f=[0.0, 1.0, 2.0]), {"f": p}, LAZY, COST)
    warm = [r.breakdown for r in report.records if r.breakdown.kind == "warm"]
    assert "fault_stall" in warm[0].components
    assert "fault_stall" not in warm[1].components


def test_memory_saving_with_shared_image():
    profiles = prebaking_scenario()
    prebaked = memory_footprint(profiles.values(), PREBAKING, COST)
    shared = memory_footprint(profiles.values(), BULK, COST)
    assert prebaked == 1780 * 1_000_000
    assert shared == 260 * 1_000_000
    assert 1 - shared / prebaked == pytest.approx(0.854, abs=0.001)
    assert memory_footprint(profiles.values(), BASELINE, COST) == 0


def test_bulk_lazy_crossover():
    rnn = reference_profiles()["rnn_serving"]
    many = rnn.copy(update={"faults_expected": 2000})
    few = rnn.copy(update={"faults_expected": 5})
    assert cold_start_latency(many, BULK, COST).total < cold_start_latency(many, LAZY, COST).total
    assert cold_start_latency(few, LAZY, COST).total <= cold_start_latency(few, BULK, COST).total


def test_compare_strategies():
    t = traces(f=[0.0, 30.0])
    rows = compare_strategies(t, {"f": profile()}, [BASELINE, BULK, PREBAKING], COST)
    by_name = {r.strategy: r for r in rows}
    assert set(by_name) == {"baseline", "warmswap:bulk", "prebaking"}
    assert by_name["baseline"].memory_bytes == 0
    assert by_name["warmswap:bulk"].accumulated_cold_latency_s < by_name["baseline"].accumulated_cold_latency_s


def test_strategy_parsing():
    assert Strategy.parse("warmswap").policy == RestorePolicy.BULK
    assert Strategy.parse("WarmSwap:eager-full").label == "warmswap:eager-full"
    for bad in ("baseline:lazy", "warmswap:sometimes", "coldswap"):
        with pytest.raises(ValidationError):
            Strategy.parse(bad)


def test_profile_validation():
    assert profile(checkpoint_image_mb=1.0, distinct_pages_touched=0).total_pages == 245
    with pytest.raises(ValidationError):
        profile(checkpoint_image_mb=0.004, distinct_pages_touched=5)
    with pytest.raises(ValidationError):
        profile(execution=-1.0)


def test_report_files(tmp_path):
    report = simulate(traces(f=[0.0, 5.0]), {"f": profile()}, BULK, COST)
    write_breakdown_csv(report, tmp_path / "breakdown.csv")
    write_report_json(report, tmp_path / "report.json")

    frame = pd.read_csv(tmp_path / "breakdown.csv")
    assert list(frame.columns) == BREAKDOWN_COLUMNS
    assert frame["seconds"].sum() == pytest.approx(report.total_latency_s)
    saved = json.loads((tmp_path / "report.json").read_text())
    assert saved["strategy"] == "warmswap:bulk"
    assert "records" not in saved


def test_load_profiles_errors(tmp_path):
    path = tmp_path / "profiles.json"
    path.write_text(json.dumps([{"name": "f", "dep_label": "x"}, {"name": "f", "dep_label": "y"}]))
    with pytest.raises(ConfigurationError, match="duplicate"):
        load_profiles(path)
    path.write_text('[{"name": "f"}]')
    with pytest.raises(ConfigurationError, match="dep_label"):
        load_profiles(path)
    path.write_text("[")
    with pytest.raises(ConfigurationError, match=":1:"):
        load_profiles(path)


def test_experiment_from_rates(tmp_path):
    (tmp_path / "profiles.json").write_text(json.dumps({"profiles": [profile().dict(), profile(name="g").dict()]}))
    config = tmp_path / "experiment.json"
    config.write_text(json.dumps({
        "profiles": "profiles.json",
        "rates": {"f": 0.05, "g": 0.01},
        "horizon_minutes": 600,
        "seed": 11,
        "strategies": ["baseline", "warmswap:lazy"],
    }))
    experiment = load_experiment(config)
    first, second = experiment.traces(), load_experiment(config).traces()
    assert [t.function_id for t in first] == ["f", "g"]
    assert first == second
    assert all(ts < 600 for t in first for ts in t.timestamps)
    assert [s.label for s in experiment.strategies] == ["baseline", "warmswap:lazy"]
    assert experiment.output_dir == tmp_path.resolve() / "out"


def test_experiment_requires_trace_source(tmp_path):
    config = tmp_path / "experiment.json"
    config.write_text(json.dumps({"profiles": "profiles.json"}))
    with pytest.raises(ConfigurationError, match="traces or rates"):
        load_experiment(config)
    config.write_text(json.dumps({"profiles": "missing.json", "rates": {"f": 0.1}}))
    with pytest.raises(ConfigurationError, match="does not exist"):
        load_experiment(config).profiles()
