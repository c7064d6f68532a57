"""Binary artifact formats and JSON configuration files."""

from .formats import (
    FormatError,
    read_points,
    write_points,
    read_aggregate,
    write_aggregate,
    read_map,
    write_map,
    read_embeddings,
    write_embeddings,
    read_grid,
    write_grid,
    read_autoencoder,
    write_autoencoder,
    read_vocab,
    write_vocab,
    vocab_sidecar,
)
from .config import (
    ConfigError,
    PipelineConfig,
    SequenceConfig,
    SequenceData,
    load_scene_config,
    save_scene_config,
    scene_config_from_dict,
    scene_config_to_dict,
    load_sequence,
    read_sequence,
    read_ground_truth,
    make_pipeline_config,
    write_scene,
    load_overrides,
)

__all__ = [
    "FormatError",
    "read_points",
    "write_points",
    "read_aggregate",
    "write_aggregate",
    "read_map",
    "write_map",
    "read_embeddings",
    "write_embeddings",
    "read_grid",
    "write_grid",
    "read_autoencoder",
    "write_autoencoder",
    "read_vocab",
    "write_vocab",
    "vocab_sidecar",
    "ConfigError",
    "PipelineConfig",
    "SequenceConfig",
    "SequenceData",
    "load_scene_config",
    "save_scene_config",
    "scene_config_from_dict",
    "scene_config_to_dict",
    "load_sequence",
    "read_sequence",
    "read_ground_truth",
    "make_pipeline_config",
    "write_scene",
    "load_overrides",
]
