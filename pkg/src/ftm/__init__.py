"""Frame-level timeline modelling for temporal graph link prediction."""

from .errors import (
    ConfigurationError,
    ContractError,
    DataValidationError,
    DomainError,
    EvaluationError,
    FTMError,
    NonDeterminismError,
    NumericalError,
    ParseError,
    ShapeError,
)
from .framing import Frame, Timeline, build_timeline, extract_frame, oracle_timeline
from .graph import (
    DatasetSplit,
    SynthSpec,
    TemporalGraph,
    TemporalLink,
    chronological_split,
    inject_noise,
    load_csv,
    synth_generate,
    write_csv,
)
from .metrics import average_precision, roc_auc
from .model import FTM, ModelConfig, frame_embed, link_score, node_embed, time_encode
from .training import TrainConfig, batch_loss, contrastive_loss, fit, sample_negatives, train_epoch

__version__ = "0.1.0"
