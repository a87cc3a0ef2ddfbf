"""Experiment configs: one JSON file naming profiles, cost model, traces and strategies."""
import logging
from pathlib import Path
from typing import Dict, List, Union

from pydantic import ValidationError

from src.rng import SplitMix64
from src.simulator.errors import ConfigurationError
from src.simulator.model import CostModel, ExperimentConfig, FunctionProfile, Strategy
from src.simulator.simulator_service import load_cost_model, load_json, load_profiles, schema_error
from src.workload.model import InvocationTrace, RateParams
from src.workload.trace_io import TraceFormatError, read_trace_csv
from src.workload.workload_service import generate_trace

logger = logging.getLogger(__name__)


class Experiment:
    def __init__(self, config: ExperimentConfig, base_dir: Path):
        self.config = config
        self.base_dir = base_dir

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def strategies(self) -> List[Strategy]:
        return [Strategy.parse(s) for s in self.config.strategies]

    @property
    def output_dir(self) -> Path:
        return self.resolve(self.config.output_dir)

    def profiles(self) -> Dict[str, FunctionProfile]:
        return load_profiles(self._existing(self.config.profiles))

    def cost(self) -> CostModel:
        return load_cost_model(self._existing(self.config.cost)) if self.config.cost else CostModel()

    def traces(self) -> List[InvocationTrace]:
        """Traces from the CSV file, or generated from `rates` with per-function seeds."""
        if self.config.traces:
            try:
                return read_trace_csv(self._existing(self.config.traces))
            except TraceFormatError as e:
                raise ConfigurationError(str(e)) from e
        rng = SplitMix64(self.config.seed)
        traces = []
        for fid in sorted(self.config.rates):
            params = RateParams(rate=self.config.rates[fid], horizon=self.config.horizon_minutes)
            traces.append(generate_trace(params, fid, rng.next_u64()))
        return traces

    def _existing(self, path: str) -> Path:
        resolved = self.resolve(path)
        if not resolved.is_file():
            raise ConfigurationError(f"referenced file {resolved} does not exist")
        return resolved


def load_experiment(path: Union[str, Path]) -> Experiment:
    raw = load_json(path)
    try:
        config = ExperimentConfig.parse_obj(raw)
    except ValidationError as e:
        raise schema_error(path, e) from e
    if not config.traces and not config.rates:
        raise ConfigurationError(f"{path}: either traces or rates is required")
    return Experiment(config, Path(path).resolve().parent)
