"""Post-decoder biasing for rare-word recognition on exported ASR posteriors."""

from ._kernels import BACKEND
from .biasing import (
    PAPER_BANDS,
    BiasingList,
    BoostSpec,
    FrequencyBand,
    boost_counts,
    extract_band,
    word_frequencies,
)
from .corpus import (
    CountTable,
    TokenizedCorpus,
    Vocabulary,
    count_stats,
    load_corpus,
    partition_vocab,
    segment_word,
)
from .metrics import align, decode_greedy, rwer, wer
from .postdecoder import (
    LinearLayer,
    PosteriorTensor,
    TrainConfig,
    apply_transform,
    grad_check,
    linear_forward,
    train_linear,
)
from .transform import (
    ConnectionModel,
    ReplacementSchedule,
    TransformMatrix,
    build_transform,
    connection_probs,
    replacement_prob,
)

__version__ = "0.1.0"
