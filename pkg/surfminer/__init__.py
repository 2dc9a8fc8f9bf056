from .config import PipelineConfig, load_config
from .exceptions import ConfigError, ParseError, StageFailed, SurfMinerException
from .generator import GeneratorConfig, generate_synthetic
from .pipeline import Pipeline, RunReport, run_pipeline

__version__ = "1.0.0"

__all__ = [
    "ConfigError",
    "GeneratorConfig",
    "ParseError",
    "Pipeline",
    "PipelineConfig",
    "RunReport",
    "StageFailed",
    "SurfMinerException",
    "generate_synthetic",
    "load_config",
    "run_pipeline",
]
