"""Temporally controllable story generation with flashbacks.

Structured storylines interleave events with temporal prompt tokens
(<before>/<after>/<vague>) so a plan-and-write model pair can be steered to
realize flashbacks. The package covers corpus ingestion and annotation,
storyline/story sequence models, three training regimes (two-stage,
end-to-end, and policy-gradient end-to-end), and the evaluation suite.
"""

from .corpus import (
    DatasetProfile,
    MarkerAnnotator,
    StoryRecord,
    SyntheticConfig,
    annotate_corpus,
    consensus_relation,
    extract_event,
    generate_synthetic_corpus,
    load_corpus,
)
from .estimator import FlashbackStoryGenerator
from .models import (
    Greedy,
    Sample,
    SeqModel,
    SeqModelConfig,
    Vocabulary,
    build_vocabulary,
    decode,
    generate_story,
    load_checkpoint,
    perplexity,
    save_checkpoint,
    sequence_log_prob,
    story_loss,
    storyline_loss,
)
from .storyline import (
    DEFAULT_CONVENTIONS,
    Event,
    Story,
    StructuredStoryline,
    TemporalRelation,
    TokenConventions,
    mask_events,
    parse_storyline,
    serialize_event,
    serialize_storyline,
    tokenize,
)
from .training import (
    MixtureState,
    TrainConfig,
    mixture_ratio,
    pretrain_storyline,
    reinforce_gradient_step,
    train,
    train_e2e_vanilla,
    train_rl,
    train_two_stage,
)

__all__ = [
    "DEFAULT_CONVENTIONS",
    "DatasetProfile",
    "Event",
    "FlashbackStoryGenerator",
    "Greedy",
    "MarkerAnnotator",
    "MixtureState",
    "Sample",
    "SeqModel",
    "SeqModelConfig",
    "Story",
    "StoryRecord",
    "StructuredStoryline",
    "SyntheticConfig",
    "TemporalRelation",
    "TokenConventions",
    "TrainConfig",
    "Vocabulary",
    "annotate_corpus",
    "build_vocabulary",
    "consensus_relation",
    "decode",
    "extract_event",
    "generate_story",
    "generate_synthetic_corpus",
    "load_checkpoint",
    "load_corpus",
    "mask_events",
    "mixture_ratio",
    "parse_storyline",
    "perplexity",
    "pretrain_storyline",
    "reinforce_gradient_step",
    "save_checkpoint",
    "sequence_log_prob",
    "serialize_event",
    "serialize_storyline",
    "story_loss",
    "storyline_loss",
    "tokenize",
    "train",
    "train_e2e_vanilla",
    "train_rl",
    "train_two_stage",
]

__version__ = "0.1.0"
