"""Sonar place recognition toolkit.

Synthetic forward-looking-sonar scan generation, image enhancement
(insonification normalization, wavelet denoising, CFAR binarization),
field-of-view overlap ground truth, compact triplet-trained descriptors,
and retrieval evaluation, all deterministic from explicit seeds.
"""

from .core import (
    DatasetManifest,
    Descriptor,
    DESCRIPTOR_DIM,
    FormatError,
    Pose2D,
    ScanRecord,
    SonarConfig,
    SonarImage,
    SonarPlaceError,
    ValidationError,
    derive_rng,
    derive_seed,
    load_images,
    load_manifest,
    read_image,
    save_manifest,
    wrap_angle,
    write_image,
)
from .descriptor import (
    DegenerateDescriptorWarning,
    EncoderParams,
    EncoderWeights,
    RgpMatrix,
    cosine_distance,
    describe,
    init_encoder,
    load_descriptor_db,
    load_weights,
    save_descriptor_db,
    save_weights,
)
from .enhance import (
    CfarParams,
    DwtParams,
    cfar_threshold,
    dwt_denoise,
    enhance_pipeline,
    insonification_pattern,
    normalize_insonification,
)
from .evaluation import (
    MetricUndefinedError,
    PrCurve,
    auc,
    f1_optimal,
    gt_table,
    mds_2d,
    nearest_neighbor,
    pr_curve,
    precision_over_overlap,
    pred_table,
    recall_at_precision,
)
from .geometry import (
    convex_clip,
    convex_intersection_area,
    fov_overlap,
    is_positive_pair,
    polygon_area,
    sector_area,
    sector_polygon,
)
from .simgen import (
    EmptyDatasetError,
    GridSpec,
    Scene,
    Segment,
    builtin_scene,
    build_anchor_poses,
    generate_dataset,
    render_scan,
    sample_perturbed,
)
from .training import (
    EpochLog,
    TrainingError,
    TrainResult,
    Triplet,
    TripletConfig,
    mine_triplet,
    train,
    triplet_loss,
)

__version__ = "0.1.0"

__all__ = [
    "CfarParams",
    "DatasetManifest",
    "DegenerateDescriptorWarning",
    "Descriptor",
    "DESCRIPTOR_DIM",
    "DwtParams",
    "EmptyDatasetError",
    "EncoderParams",
    "EncoderWeights",
    "EpochLog",
    "FormatError",
    "GridSpec",
    "MetricUndefinedError",
    "Pose2D",
    "PrCurve",
    "RgpMatrix",
    "ScanRecord",
    "Scene",
    "Segment",
    "SonarConfig",
    "SonarImage",
    "SonarPlaceError",
    "TrainingError",
    "TrainResult",
    "Triplet",
    "TripletConfig",
    "ValidationError",
    "auc",
    "build_anchor_poses",
    "builtin_scene",
    "cfar_threshold",
    "convex_clip",
    "convex_intersection_area",
    "cosine_distance",
    "derive_rng",
    "derive_seed",
    "describe",
    "dwt_denoise",
    "enhance_pipeline",
    "f1_optimal",
    "fov_overlap",
    "generate_dataset",
    "gt_table",
    "init_encoder",
    "insonification_pattern",
    "is_positive_pair",
    "load_descriptor_db",
    "load_images",
    "load_manifest",
    "load_weights",
    "mds_2d",
    "mine_triplet",
    "nearest_neighbor",
    "normalize_insonification",
    "polygon_area",
    "pr_curve",
    "precision_over_overlap",
    "pred_table",
    "read_image",
    "recall_at_precision",
    "render_scan",
    "sample_perturbed",
    "save_descriptor_db",
    "save_manifest",
    "save_weights",
    "sector_area",
    "sector_polygon",
    "train",
    "triplet_loss",
    "wrap_angle",
    "write_image",
]
