"""facefuse: facial-region descriptor fusion for face-forgery detection.

The pipeline detects keypoints on a face crop, partitions the crop into
eight landmark-defined regions, folds the keypoint descriptors into one
fixed-length vector per face, and classifies real vs fake with a
from-scratch random forest. See the README for the CLI workflow.
"""

from .errors import CompatibilityError, DataError, UsageError
from .evaluation import evaluate, roc_auc, split_manifest
from .features import (
    Keypoint,
    brief_describe,
    fast_detect,
    fast_score,
    ingest_keypoint_file,
    make_sampling_pattern,
    orb_detect_describe,
)
from .forest import (
    ForestParams,
    RandomForest,
    feature_importances,
    load_model,
    predict_proba,
    save_model,
    train_forest,
)
from .fusion import FusedVector, fuse_descriptors, region_counts
from .image import gaussian_blur, load_pgm, save_pgm
from .pipeline import RunConfig, extract_features, run_bench, run_stats
from .regions import REGIONS, build_partition, load_landmarks, save_landmarks
from .synthetic import generate_corpus

__version__ = "0.1.0"

__all__ = [
    "CompatibilityError",
    "DataError",
    "ForestParams",
    "FusedVector",
    "Keypoint",
    "REGIONS",
    "RandomForest",
    "RunConfig",
    "UsageError",
    "brief_describe",
    "build_partition",
    "evaluate",
    "extract_features",
    "fast_detect",
    "fast_score",
    "feature_importances",
    "fuse_descriptors",
    "gaussian_blur",
    "generate_corpus",
    "ingest_keypoint_file",
    "load_landmarks",
    "load_model",
    "load_pgm",
    "make_sampling_pattern",
    "orb_detect_describe",
    "predict_proba",
    "region_counts",
    "roc_auc",
    "run_bench",
    "run_stats",
    "save_landmarks",
    "save_model",
    "save_pgm",
    "split_manifest",
    "train_forest",
    "__version__",
]
