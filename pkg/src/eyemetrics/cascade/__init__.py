"""Haar-feature cascade detector: features, classifiers, scanning, training."""
from .detect import FaceEyes, detect_face_then_eyes, merge_detections, scan, scan_raw
from .features import (HaarFeature, boundary_feature, default_bank, edge_feature,
                       eval_feature, feature_matrix, line_feature)
from .model import (Cascade, Detection, StrongClassifier, WeakClassifier, eval_cascade,
                    eval_strong, eval_weak)
from .train import (TrainingError, normalize_sample, staged_errors, train_cascade,
                    train_stage)

__all__ = [
    "Cascade", "Detection", "FaceEyes", "HaarFeature", "StrongClassifier", "TrainingError",
    "WeakClassifier", "boundary_feature", "default_bank", "detect_face_then_eyes",
    "edge_feature", "eval_cascade", "eval_feature", "eval_strong", "eval_weak",
    "feature_matrix", "line_feature", "merge_detections", "normalize_sample", "scan",
    "scan_raw", "staged_errors", "train_cascade", "train_stage",
]
