from .config import ExperimentConfig, from_mapping, load
from .presets import PRESETS, preset
from .runner import RunSummary, run_experiment, write_outputs
from .stats import stats

__all__ = ["ExperimentConfig", "from_mapping", "load", "PRESETS", "preset", "RunSummary",
           "run_experiment", "write_outputs", "stats"]
