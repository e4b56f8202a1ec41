from .config import PipelineConfig
from .run import run_baselines, run_inference, run_training
from .tables import ingest, read_coefficients, write_coefficients, write_regions

__all__ = [
    "PipelineConfig",
    "ingest",
    "read_coefficients",
    "run_baselines",
    "run_inference",
    "run_training",
    "write_coefficients",
    "write_regions",
]
