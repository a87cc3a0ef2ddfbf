import json
from pathlib import Path

import pytest

from src.image.model import PoolEntryInfo, ProcessSpec
from src.protocol.model import ServerStats
from src.restore.model import ExecutionReport
from src.simulator.calibration import CalibrationResult
from src.simulator.experiment import load_experiment
from src.simulator.model import CostModel, ExperimentConfig, FunctionProfile, SimulationReport
from src.workload.model import AnalysisRow

SCHEMAS = Path(__file__).resolve().parent.parent / "docs" / "schemas"


@pytest.mark.parametrize("filename, model", [
    ("server_stats.json", ServerStats),
    ("execution_report.json", ExecutionReport),
    ("simulation_report.json", SimulationReport),
    ("analysis_row.json", AnalysisRow),
    ("cost_model.json", CostModel),
    ("calibration_result.json", CalibrationResult),
    ("function_profile.json", FunctionProfile),
    ("experiment_config.json", ExperimentConfig),
    ("process_spec.json", ProcessSpec),
    ("pool_entry.json", PoolEntryInfo),
])
def test_shipped_schema_matches_model(filename, model):
    shipped = json.loads((SCHEMAS / filename).read_text())
    generated = model.schema()
    assert shipped["title"] == generated["title"]
    assert set(shipped["properties"]) == set(generated["properties"])
    assert set(shipped.get("required", [])) == set(generated.get("required", []))


def test_reference_experiment_loads():
    root = Path(__file__).resolve().parent.parent / "experiments" / "reference"
    experiment = load_experiment(root / "experiment.json")
    profiles = experiment.profiles()
    assert set(profiles) == {t.function_id for t in experiment.traces()}
    assert experiment.cost() == CostModel()
