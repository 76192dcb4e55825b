"""Multi-branch emotion recognition: body, context and face features fused into
26 discrete emotion scores and a valence/arousal/dominance estimate."""

from .domain import CATEGORIES, BoundingBox, PersonAnnotation, category_index, validate_annotation
from .dataset_io import AnnotationTable, ImageStore, compute_frequencies, generate_fixture, load_annotations
from .engine import Checkpoint, TrainConfig, evaluate, predict, train

__version__ = "0.1.0"

__all__ = [
    "CATEGORIES",
    "BoundingBox",
    "PersonAnnotation",
    "category_index",
    "validate_annotation",
    "AnnotationTable",
    "ImageStore",
    "compute_frequencies",
    "generate_fixture",
    "load_annotations",
    "Checkpoint",
    "TrainConfig",
    "evaluate",
    "predict",
    "train",
]
