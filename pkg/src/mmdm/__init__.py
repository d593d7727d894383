"""Masked motion diffusion: a text-conditioned motion DDPM that predicts
clean sequences directly and trains under time-frame and body-part
embedding-space masking, with geometric losses, an ablation harness, and a
retrieval-based metric suite, runnable end to end on synthetic motion data.
"""

from .datagen import (
    ARCHETYPES,
    GeneratorConfig,
    caption_vocabulary,
    generate_synthetic_dataset,
    vocabulary_from_captions,
)
from .denoiser import (
    BodyPartsDenoiser,
    ConditionEmbedding,
    ModelConfig,
    TextEncoder,
    TimeFramesDenoiser,
    build_denoiser,
)
from .evaluation import (
    EvalConfig,
    EvaluatorEmbedder,
    MetricsReport,
    MetricsValue,
    compute_fid,
    diversity,
    evaluate,
    mm_dist,
    multimodality,
    r_precision,
    train_evaluator,
)
from .losses import LossBreakdown, LossWeights, loss_foot, loss_pos, loss_simple, loss_vel, total_loss
from .masking import MaskSpec, MaskToken, apply_mask, expand_bodypart_mask, sample_mask
from .motion import (
    FootContactLabels,
    MotionSequence,
    detect_foot_contact,
    forward_kinematics,
    read_motion,
    write_motion,
)
from .sampling import GuidanceConfig, guided_x0, p_sample_loop
from .schedule import NoiseSchedule, make_cosine_schedule, q_sample
from .skeleton import PART_NAMES, Skeleton, part_index_sets, read_skeleton, toy_skeleton, write_skeleton
from .trainer import TrainConfig, train, train_step

__version__ = "0.1.0"
