from .config import ConfigError, ModelEntry, RunConfig, parse_config, validate_config
from .pipeline import MeshLoadError, ResultSet, build_summary, run, write_results
from .report import EmptyResults, report

__all__ = ["ConfigError", "ModelEntry", "RunConfig", "parse_config", "validate_config",
           "MeshLoadError", "ResultSet", "build_summary", "run", "write_results",
           "EmptyResults", "report"]
