"""patchmil: weakly-supervised joint classification and patch-level
localization via multi-instance learning over image patches."""

__version__ = "0.1.0"

from .tiling import PatchGrid, TilingError, grid_positions, standardize_image, tile_image
from .mil_head import (
    AGGREGATORS,
    ScoreError,
    ScoreGrid,
    aggregate_logsumexp,
    aggregate_max,
    aggregate_noisy_or,
    bce_loss,
    loss_gradient_wrt_patches,
)
from .model import (
    BACKBONE_REFERENCE,
    BACKBONE_VGG16,
    CheckpointError,
    ModelError,
    PatchScorer,
    ScorerSpec,
    build_scorer,
)
from .augment import AugmentConfig, AugmentError, TransformRecord, apply_record, random_augment, transform_annotation
from .data import (
    AnnotationAccessError,
    ImageRecord,
    Manifest,
    ManifestError,
    SyntheticConfig,
    annotation_poisoning_active,
    annotations_poisoned,
    generate_synthetic_dataset,
    load_annotation,
    load_manifest,
    read_image,
    save_manifest,
    split_train_val,
)
from .train import NesterovSGD, TrainConfig, TrainHistory, TrainingError, sgd_nesterov_step, train
from .eval import EvalReport, UndefinedAUCError, evaluate, pointing_game, roc_auc
from .viz import OverlayStyle, VizError, render_overlay, save_overlay_png, score_to_style
