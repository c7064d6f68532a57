"""Semantic transitive labeling: image text labels -> LiDAR points -> voxels."""

from .geometry import (
    RigidTransform,
    CameraModel,
    EgoPose,
    make_transform,
    identity,
    translation,
    from_matrix,
    to_matrix,
    yaw_transform,
    compose,
    invert,
    apply,
    make_camera,
    pinhole_intrinsics,
    look_rotation,
    camera_center,
    project,
    project_points,
    pixel_rays,
)
from .vocab import (
    LABEL_DTYPE,
    UNLABELED,
    FREE,
    VocabScope,
    VocabularySet,
    EmbeddingMatrix,
    canonicalize,
    merge_sequence_vocab,
    remap_labels,
    normalize_rows,
    classify,
    classify_many,
)
from .pixels import (
    SegmentationMap,
    FeatureMap,
    segment_from_features,
    sample_nearest,
    sample_nearest_many,
)
from .points import PointCloud, assign_point_labels, lift_point_features, select_cameras
from .reconstruction import (
    GridSpec,
    DEFAULT_GRID,
    BoundingBox3D,
    VoxelGrid,
    SceneAggregate,
    Strategy,
    OCCUPANCY_VOCAB,
    make_grid_spec,
    make_box,
    aggregate,
    voxelize,
    voxelize_majority,
    voxelize_nearest,
    voxelize_features,
    voxel_modelview_labels,
    binary_occupancy,
)
from .losses import (
    PredictionVolume,
    LanguageTarget,
    LanguageLoss,
    geometry_loss,
    geometry_loss_grad,
    language_loss,
    language_loss_grad,
    total_loss,
)
from .autoencoder import (
    AutoencoderParams,
    TrainConfig,
    TrainReport,
    TrainingDiverged,
    encode,
    decode,
    encode_matrix,
    decode_matrix,
    ae_loss,
    ae_loss_grad,
    init_params,
    train,
    latent_embeddings,
)
from .evaluation import (
    ClassSet,
    MetricReport,
    Subset,
    canonical_map,
    apply_label_map,
    to_class_grid,
    infer_semantics,
    score,
    format_report,
    report_to_dict,
)
from .pipeline import (
    SensorSequence,
    PipelineResult,
    run_pipeline,
    run_feature_pipeline,
    segment_sequence,
    observed_voxels,
    label_and_merge,
    modelview_grid,
)

__all__ = [
    "RigidTransform",
    "CameraModel",
    "EgoPose",
    "make_transform",
    "identity",
    "translation",
    "from_matrix",
    "to_matrix",
    "yaw_transform",
    "compose",
    "invert",
    "apply",
    "make_camera",
    "pinhole_intrinsics",
    "look_rotation",
    "camera_center",
    "project",
    "project_points",
    "pixel_rays",
    "LABEL_DTYPE",
    "UNLABELED",
    "FREE",
    "VocabScope",
    "VocabularySet",
    "EmbeddingMatrix",
    "canonicalize",
    "merge_sequence_vocab",
    "remap_labels",
    "normalize_rows",
    "classify",
    "classify_many",
    "SegmentationMap",
    "FeatureMap",
    "segment_from_features",
    "sample_nearest",
    "sample_nearest_many",
    "PointCloud",
    "assign_point_labels",
    "lift_point_features",
    "select_cameras",
    "GridSpec",
    "DEFAULT_GRID",
    "BoundingBox3D",
    "VoxelGrid",
    "SceneAggregate",
    "Strategy",
    "OCCUPANCY_VOCAB",
    "make_grid_spec",
    "make_box",
    "aggregate",
    "voxelize",
    "voxelize_majority",
    "voxelize_nearest",
    "voxelize_features",
    "voxel_modelview_labels",
    "binary_occupancy",
    "PredictionVolume",
    "LanguageTarget",
    "LanguageLoss",
    "geometry_loss",
    "geometry_loss_grad",
    "language_loss",
    "language_loss_grad",
    "total_loss",
    "AutoencoderParams",
    "TrainConfig",
    "TrainReport",
    "TrainingDiverged",
    "encode",
    "decode",
    "encode_matrix",
    "decode_matrix",
    "ae_loss",
    "ae_loss_grad",
    "init_params",
    "train",
    "latent_embeddings",
    "ClassSet",
    "MetricReport",
    "Subset",
    "canonical_map",
    "apply_label_map",
    "to_class_grid",
    "infer_semantics",
    "score",
    "format_report",
    "report_to_dict",
    "SensorSequence",
    "PipelineResult",
    "run_pipeline",
    "run_feature_pipeline",
    "segment_sequence",
    "observed_voxels",
    "label_and_merge",
    "modelview_grid",
]
