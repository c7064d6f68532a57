"""Synthetic oracle scenes and the pipeline ablation harness."""

from .scene import (
    Shape,
    Primitive,
    CameraSpec,
    LidarSpec,
    SceneConfig,
    SyntheticScene,
    DEMO_GRID,
    box,
    ground,
    generate,
    segment_scene,
    sensor_sequence,
    random_scene_config,
)
from .harness import (
    SETTINGS,
    AblationResult,
    observation_mask,
    run_pipeline_and_score,
    run_settings,
    run_ablation,
    format_ablation,
)

__all__ = [
    "Shape",
    "Primitive",
    "CameraSpec",
    "LidarSpec",
    "SceneConfig",
    "SyntheticScene",
    "DEMO_GRID",
    "box",
    "ground",
    "generate",
    "segment_scene",
    "sensor_sequence",
    "random_scene_config",
    "SETTINGS",
    "AblationResult",
    "observation_mask",
    "run_pipeline_and_score",
    "run_settings",
    "run_ablation",
    "format_ablation",
]
