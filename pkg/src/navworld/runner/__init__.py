from .config import ExperimentConfig, parse_config, serialize_config
from .mapplot import render_map, split_segments
from .persist import load_checkpoint, save_checkpoint
from .server import EnvServer

__all__ = [
    "EnvServer",
    "ExperimentConfig",
    "load_checkpoint",
    "parse_config",
    "render_map",
    "save_checkpoint",
    "serialize_config",
    "split_segments",
]
