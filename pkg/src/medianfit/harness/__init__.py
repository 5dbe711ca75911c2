from .config import DataOptions, RunConfig, config_from_dict, load_config
from .report import extract_and_plot, open_run, report
from .runner import APPROACHES, ApproachSpec, RunManifest, approach, rerun, run_approach

__all__ = ["APPROACHES", "ApproachSpec", "DataOptions", "RunConfig", "RunManifest", "approach",
           "config_from_dict", "extract_and_plot", "load_config", "open_run", "report", "rerun",
           "run_approach"]
