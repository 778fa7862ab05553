"""timatch: sequence-pair text matching with local mutual-information regularization.

A block-structured alignment encoder produces a pooled representation per
text; a Donsker-Varadhan discriminator maximizes the mutual information
between that representation and local features of the input (word-vector
slots for short texts, index segments for long ones). Training minimizes
task cross-entropy plus the negated DV bound.
"""

__version__ = "0.1.0"

from .corpus import (
    Batch,
    TextPair,
    TokenizedExample,
    Vocabulary,
    build_vocabulary,
    load_jsonl,
    make_batches,
    save_jsonl,
    tokenize,
    tokenize_pairs,
)
from .encoder import Encoder, EncoderConfig, ParameterStore
from .errors import (
    CheckpointCorruptError,
    CheckpointVersionError,
    ConfigError,
    DataError,
    NumericError,
    TimatchError,
)
from .evaluation import (
    RankedGroup,
    accuracy,
    mean_average_precision,
    mean_reciprocal_rank,
)
from .features import (
    FeatureConfig,
    LocalFeatureSet,
    extract_segment_mode,
    extract_word_mode,
    flatten_map,
)
from .infomax import (
    Discriminator,
    DiscriminatorConfig,
    MiBatchScores,
    MiLoss,
    dv_lower_bound,
    local_mi_objective,
    mi_loss_for_pair,
    sample_negatives,
)
from .model import Model, build_model
from .training import (
    Adam,
    TrainConfig,
    TrainState,
    evaluate_model,
    init_state,
    load_checkpoint,
    run_training,
    save_checkpoint,
    train_step,
)

__all__ = [
    "__version__",
    "Batch",
    "TextPair",
    "TokenizedExample",
    "Vocabulary",
    "build_vocabulary",
    "load_jsonl",
    "make_batches",
    "save_jsonl",
    "tokenize",
    "tokenize_pairs",
    "Encoder",
    "EncoderConfig",
    "ParameterStore",
    "TimatchError",
    "ConfigError",
    "DataError",
    "NumericError",
    "CheckpointVersionError",
    "CheckpointCorruptError",
    "RankedGroup",
    "accuracy",
    "mean_average_precision",
    "mean_reciprocal_rank",
    "FeatureConfig",
    "LocalFeatureSet",
    "extract_word_mode",
    "extract_segment_mode",
    "flatten_map",
    "Discriminator",
    "DiscriminatorConfig",
    "MiBatchScores",
    "MiLoss",
    "dv_lower_bound",
    "local_mi_objective",
    "mi_loss_for_pair",
    "sample_negatives",
    "Model",
    "build_model",
    "Adam",
    "TrainConfig",
    "TrainState",
    "evaluate_model",
    "init_state",
    "train_step",
    "run_training",
    "save_checkpoint",
    "load_checkpoint",
]
