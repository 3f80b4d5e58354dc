"""Spatial-relation backdoor poisoning and evaluation toolkit.

Workflow: rank interaction classes for an attack class, declare a trigger
as a class pair plus geometric constraints, enumerate trigger-valid object
pairs, poison their labels, and evaluate attack/detection metrics — either
against real detector predictions or against the bundled synthetic
generator and mock detector.
"""

__version__ = "0.1.0"

from .annotations import (
    BoundingBox,
    CategoryMap,
    Dataset,
    ImageRecord,
    ObjectAnnotation,
    Prediction,
    PredictionSet,
    iou,
    load_dataset,
    load_predictions,
    save_dataset,
    save_predictions,
)
from .errors import (
    DatasetParseError,
    DatasetValidationError,
    EvaluationError,
    PoisoningConflictError,
    PoisoningError,
    SpaceTriggerError,
    SynthesisError,
    TriggerSpecError,
)
from .evaluation import (
    EvalReport,
    FrameStatus,
    FrameVerdict,
    MatchPolicy,
    PairOutcome,
    classify_frames,
    entropy_flag,
    evaluate_attack,
    map_coco,
)
from .interaction import InteractionScore, pair_stats, rank_interaction_classes
from .poisoning import (
    POISONING_RATE_FLOOR,
    AttackSpec,
    PoisonReport,
    Relabel,
    Remove,
    apply_attack,
    attack_spec_from_dict,
    bundled_attack_path,
    parse_attack_spec,
    poison_rate_sweep,
)
from .synth import MockDetectorConfig, MockNoise, SynthConfig, generate_dataset, mock_detect
from .trigger import (
    BoundaryDistance,
    Comparison,
    CoordRef,
    OffsetInterval,
    TriggerPair,
    TriggerSpec,
    boundary_distance,
    bundled_spec_path,
    compile_constraints,
    enumerate_trigger_pairs,
    eval_trigger,
    parse_trigger_spec,
    tightening_translation,
    trigger_spec_from_dict,
)

__all__ = [name for name in dir() if not name.startswith("_")]
