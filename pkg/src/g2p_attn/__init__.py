"""Attention-based encoder-decoder models for grapheme-to-phoneme conversion, on numpy."""

__version__ = "0.1.0"

from .checkpoint import load_checkpoint, save_checkpoint
from .data import (BOS, EOS, PAD, LexiconEntry, SplitSpec, Vocabulary, build_vocabularies, make_batches,
                   parse_lexicon, read_lexicon)
from .decode import decode_words, ensemble_decode, ensemble_vote, greedy_decode
from .errors import (CheckpointError, ConfigError, ContractError, DimensionError, EnsembleError, G2PError,
                     InputError, LexiconParseError, NumericalError, VocabularyError)
from .evaluation import EvalReport, edit_distance, evaluate
from .model import G2PModel, ModelConfig
from .tensor import Tape, Tensor, backward, gradcheck, no_tape
from .train import TrainConfig, TrainState, resume

__all__ = [
    "BOS", "EOS", "PAD", "CheckpointError", "ConfigError", "ContractError", "DimensionError", "EnsembleError",
    "EvalReport", "G2PError", "G2PModel", "InputError", "LexiconEntry", "LexiconParseError", "ModelConfig",
    "NumericalError", "SplitSpec", "Tape", "Tensor", "TrainConfig", "TrainState", "Vocabulary",
    "VocabularyError", "backward", "build_vocabularies", "decode_words", "edit_distance", "ensemble_decode",
    "ensemble_vote", "evaluate", "gradcheck", "greedy_decode", "load_checkpoint", "make_batches", "no_tape",
    "parse_lexicon", "read_lexicon", "resume", "save_checkpoint",
]
