"""Attention encoder-decoder transducer from grapheme ids to phoneme ids."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import attention as attn
from . import tensor as T
from .data import BOS, EOS, PAD, Batch, LexiconEntry, Vocabulary, make_batch
from .errors import ConfigError, ContractError, InputError, VocabularyError
from .layers import LstmCellParams, StackedLstm, embed, run_stack, uniform
from .seeding import purpose_rng
from .tensor import Tensor

ENCODER_MODES = ("bidirectional", "reverse_unidirectional")
ATTENTION_TYPES = ("none", "global", "local_m", "local_p")
DROPOUT_GRID = (0.0, 0.1, 0.2, 0.3, 0.4)


@dataclass
class ModelConfig:
    attention: str = "global"
    encoder_mode: str = "bidirectional"
    layers: int = 3
    units: int = 512
    embed_dim: int = 512
    window: int = attn.DEFAULT_WINDOW
    input_feeding: bool = True
    p_drop: float = 0.0
    attention_size: int | None = None  # defaults to units
    seed: int = 0

    def __post_init__(self):
        if self.attention not in ATTENTION_TYPES:
            raise ConfigError(f"attention must be one of {ATTENTION_TYPES}, got {self.attention!r}")
        if self.encoder_mode not in ENCODER_MODES:
            raise ConfigError(f"encoder_mode must be one of {ENCODER_MODES}, got {self.encoder_mode!r}")
        if self.layers < 1 or self.units < 1 or self.embed_dim < 1:
            raise ConfigError("layers, units and embed_dim must all be >= 1")
        if self.window < 1:
            raise ConfigError("attention window half-width must be >= 1")
        if not 0.0 <= self.p_drop < 1.0:
            raise ConfigError(f"p_drop must lie in [0, 1), got {self.p_drop}")
        if self.attention_size is not None and self.attention_size < 1:
            raise ConfigError("attention_size must be >= 1")

    @property
    def enc_dim(self) -> int:
        return 2 * self.units if self.encoder_mode == "bidirectional" else self.units

    @property
    def att_size(self) -> int:
        return self.attention_size or self.units

    @property
    def feeds_context(self) -> bool:
        """Input feeding only applies when there is an attention context to feed."""
        return self.input_feeding and self.attention != "none"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)


def init_parameters(config: ModelConfig, n_graphemes: int, n_phonemes: int) -> dict[str, Tensor]:
    """Draw every learned tensor from the run's ``init`` stream.

    LSTM forget-gate biases start at 1.0, everything else uniform in
    [-0.05, 0.05]. Insertion order is the canonical parameter order.
    """
    rng = purpose_rng(config.seed, "init")
    u, e, L = config.units, config.embed_dim, config.layers
    params: dict[str, Tensor] = {}

    def put(name, arr):
        params[name] = Tensor(arr, requires_grad=True, name=name)

    def put_stack(prefix, in_dim):
        for k, cell in enumerate(StackedLstm.init(rng, in_dim, u, L).layers):
            put(f"{prefix}.{k}.w_x", cell.w_x.data)
            put(f"{prefix}.{k}.w_h", cell.w_h.data)
            put(f"{prefix}.{k}.b", cell.b.data)

    put("embed.grapheme", uniform(rng, (n_graphemes, e)))
    put("embed.phoneme", uniform(rng, (n_phonemes, e)))
    if config.encoder_mode == "bidirectional":
        put_stack("encoder.fwd", e)
        put_stack("encoder.bwd", e)
        for k in range(L):
            for kind in ("h", "c"):
                put(f"bridge.{k}.{kind}.w_fwd", uniform(rng, (u, u)))
                put(f"bridge.{k}.{kind}.w_bwd", uniform(rng, (u, u)))
                put(f"bridge.{k}.{kind}.b", uniform(rng, (u,)))
    else:
        put_stack("encoder.rev", e)
    put_stack("decoder", e + (config.enc_dim if config.feeds_context else 0))
    if config.attention != "none":
        a, H = config.att_size, config.enc_dim
        put("attention.w1", uniform(rng, (a, H)))
        put("attention.w2", uniform(rng, (a, u)))
        put("attention.b_a", uniform(rng, (a,)))
        put("attention.v", uniform(rng, (a,)))
        if config.attention == "local_p":
            put("attention.w_p", uniform(rng, (a, u)))
            put("attention.v_p", uniform(rng, (a,)))
        out_in = H + u
    else:
        out_in = u
    put("output.w_s", uniform(rng, (n_phonemes, out_in)))
    put("output.b_s", uniform(rng, (n_phonemes,)))
    return params


def bridge(fwd_finals: list, bwd_finals: list, bridge_params: list) -> list:
    """Decoder initial states from the two encoder directions, layer by layer.

    ``bridge_params[k]`` maps ``"h"`` and ``"c"`` to ``(w_fwd, w_bwd, b)``;
    each state is ``w_fwd @ fwd + w_bwd @ bwd + b``.
    """
    if not (len(fwd_finals) == len(bwd_finals) == len(bridge_params)):
        raise ContractError("bridge needs one forward/backward final state and parameter set per layer")
    out = []
    for (hf, cf), (hb, cb), p in zip(fwd_finals, bwd_finals, bridge_params):
        states = []
        for kind, f, b in (("h", hf, hb), ("c", cf, cb)):
            w_f, w_b, bias = p[kind]
            states.append(T.linear(f, w_f, bias) + T.linear(b, w_b))
        out.append(tuple(states))
    return out


def reversal_index(lengths: np.ndarray, steps: int) -> np.ndarray:
    """Per-row permutation reversing the first ``length`` positions, padding left in place.

    The permutation is its own inverse.
    """
    t = np.arange(steps)[None, :]
    lengths = np.asarray(lengths)[:, None]
    return np.where(t < lengths, lengths - 1 - t, t)


@dataclass
class EncoderOutput:
    states: Tensor        # [B, T_g, H] top-layer states, original word order
    lengths: np.ndarray   # [B]
    init: list            # decoder initial (h, c) per layer
    keys: Tensor | None = None  # cached W1 h_i for attention


@dataclass
class DecoderState:
    layers: list                     # (h, c) per layer
    context: Tensor | None = None    # previous attention context (input feeding)
    t: int = 1                       # 1-based index of the next output step
    trace: list = field(default_factory=list)


class G2PModel:
    """Parameters plus the forward computations of the transducer.

    Parameters live in ``self.params`` (name -> Tensor) and are read afresh on
    every forward call, so swapping that dict retargets the whole model.
    """

    def __init__(self, config: ModelConfig, g_vocab: Vocabulary, p_vocab: Vocabulary,
                 params: dict[str, Tensor] | None = None):
        self.config = config
        self.g_vocab = g_vocab
        self.p_vocab = p_vocab
        self.params = params if params is not None else init_parameters(config, len(g_vocab), len(p_vocab))

    @classmethod
    def from_entries(cls, config: ModelConfig, entries) -> "G2PModel":
        from .data import build_vocabularies
        return cls(config, *build_vocabularies(entries))

    # ------------------------------------------------------------ parameter views

    def _stack(self, prefix: str, p_drop: float | None = None) -> StackedLstm:
        P = self.params
        cells = [LstmCellParams(P[f"{prefix}.{k}.w_x"], P[f"{prefix}.{k}.w_h"], P[f"{prefix}.{k}.b"])
                 for k in range(self.config.layers)]
        return StackedLstm(cells, self.config.p_drop if p_drop is None else p_drop)

    def _bridge_params(self) -> list:
        P = self.params
        return [{kind: (P[f"bridge.{k}.{kind}.w_fwd"], P[f"bridge.{k}.{kind}.w_bwd"], P[f"bridge.{k}.{kind}.b"])
                 for kind in ("h", "c")} for k in range(self.config.layers)]

    def attention_params(self) -> attn.AttentionParams | None:
        if self.config.attention == "none":
            return None
        P = self.params
        return attn.AttentionParams(P["attention.w1"], P["attention.w2"], P["attention.b_a"], P["attention.v"],
                                    P.get("attention.w_p"), P.get("attention.v_p"), self.config.window)

    @property
    def dtype(self):
        return self.params["output.b_s"].dtype

    def parameter_count(self) -> int:
        return sum(p.size for p in self.params.values())

    def astype(self, dtype) -> "G2PModel":
        params = {k: Tensor(v.data.astype(dtype), requires_grad=True, name=k) for k, v in self.params.items()}
        return G2PModel(self.config, self.g_vocab, self.p_vocab, params)

    def copy(self) -> "G2PModel":
        return self.astype(self.dtype)

    # ------------------------------------------------------------ forward pieces

    def encode(self, grapheme_ids, lengths=None, dropout_active: bool = False, rng=None) -> EncoderOutput:
        """Run the encoder over a padded ``[B, T_g]`` id batch (or one id sequence)."""
        ids = np.asarray(grapheme_ids, dtype=np.int64)
        if ids.ndim == 1:
            ids = ids[None, :]
        if ids.size == 0 or ids.shape[1] == 0:
            raise InputError("cannot encode an empty word")
        B, steps = ids.shape
        lengths = np.full(B, steps) if lengths is None else np.asarray(lengths, dtype=np.int64)
        if lengths.min() < 1:
            raise InputError("cannot encode an empty word")
        cfg = self.config
        x = embed(ids, self.params["embed.grapheme"])
        rows = np.arange(B)[:, None]
        rev = reversal_index(lengths, steps)
        zero = self._stack("decoder").zero_state(B, self.dtype)
        if cfg.encoder_mode == "bidirectional":
            out_f, fin_f = run_stack(x, self._stack("encoder.fwd"), zero, dropout_active, rng, lengths)
            out_b, fin_b = run_stack(x[rows, rev], self._stack("encoder.bwd"), zero, dropout_active, rng,
                                     lengths)
            states = T.concat([out_f, out_b[rows, rev]], axis=-1)
            init = bridge(fin_f, fin_b, self._bridge_params())
        else:
            out_r, init = run_stack(x[rows, rev], self._stack("encoder.rev"), zero, dropout_active, rng,
                                    lengths)
            states = out_r[rows, rev]
        ap = self.attention_params()
        keys = attn.encoder_keys(states, ap) if ap is not None else None
        return EncoderOutput(states, lengths, init, keys)

    def initial_state(self, enc: EncoderOutput) -> DecoderState:
        return DecoderState(list(enc.init), None, 1)

    def decode_step(self, prev_ids, state: DecoderState, enc: EncoderOutput,
                    dropout_active: bool = False, rng=None):
        """One decoder step. Returns ``(logits [B, V], new_state, AttentionStep | None)``."""
        cfg = self.config
        prev_ids = np.asarray(prev_ids, dtype=np.int64).reshape(-1)
        if prev_ids.size and (prev_ids.min() < 0 or prev_ids.max() >= len(self.p_vocab)):
            raise VocabularyError(f"phoneme ids {prev_ids.tolist()} outside vocabulary", prev_ids.tolist())
        y = embed(prev_ids, self.params["embed.phoneme"])
        x = attn.input_feed(y, state.context, cfg.feeds_context, cfg.enc_dim)
        layers = self._stack("decoder").step(x, state.layers, dropout_active, rng)
        d_t = layers[-1][0]
        w_s, b_s = self.params["output.w_s"], self.params["output.b_s"]
        ap = self.attention_params()
        if ap is None:
            return T.linear(d_t, w_s, b_s), DecoderState(layers, None, state.t + 1), None
        if cfg.attention == "global":
            step = attn.global_attend(enc.states, d_t, ap, enc.lengths, enc.keys)
        elif cfg.attention == "local_m":
            step = attn.local_m_attend(enc.states, d_t, state.t, ap, enc.lengths, enc.keys)
        else:
            step = attn.local_p_attend(enc.states, d_t, ap, enc.lengths, enc.keys)
        logits = attn.combine_output(step.context, d_t, w_s, b_s)
        return logits, DecoderState(layers, step.context, state.t + 1), step

    # ------------------------------------------------------------ training objective

    def batch_loss(self, batch: Batch, sampling_prob: float = 1.0, sampling_rng=None,
                   dropout_active: bool = False, dropout_rng=None) -> Tensor:
        """Mean negative log-likelihood per gold target token (EOS included).

        At step t > 1 each sequence is fed its gold previous phoneme with
        probability ``sampling_prob``, otherwise the model's own argmax from
        the previous step.
        """
        if batch.targets.size == 0 or batch.p_lengths.min() < 1:
            raise InputError("empty pronunciation")
        if sampling_prob < 1.0 and sampling_rng is None:
            raise ContractError("scheduled sampling needs a random generator")
        enc = self.encode(batch.graphemes, batch.g_lengths, dropout_active, dropout_rng)
        state = self.initial_state(enc)
        mask = batch.target_mask
        weights = mask.astype(self.dtype) / self.dtype.type(mask.sum())
        B = len(batch)
        prev = np.full(B, BOS)
        total = None
        for t in range(batch.targets.shape[1]):
            logits, state, _ = self.decode_step(prev, state, enc, dropout_active, dropout_rng)
            step_loss = T.cross_entropy(logits, batch.targets[:, t], weights[:, t])
            total = step_loss if total is None else total + step_loss
            prev = batch.targets[:, t]
            if sampling_prob < 1.0:
                use_gold = sampling_rng.random(B) < sampling_prob
                prev = np.where(use_gold, prev, best_ids(logits.data))
        return total

    def sequence_loss(self, word: str, pronunciation, sampling_prob: float = 1.0, rng=None) -> Tensor:
        if not pronunciation:
            raise InputError("empty pronunciation")
        batch = make_batch([LexiconEntry(word, [list(pronunciation)])], self.g_vocab, self.p_vocab)
        return self.batch_loss(batch, sampling_prob, rng)


def best_ids(logits: np.ndarray) -> np.ndarray:
    """Argmax over the vocabulary, never choosing PAD or BOS."""
    z = np.array(logits, copy=True)
    z[..., PAD] = -np.inf
    z[..., BOS] = -np.inf
    return z.argmax(axis=-1)


__all__ = [
    "ATTENTION_TYPES", "DROPOUT_GRID", "ENCODER_MODES", "DecoderState", "EncoderOutput", "G2PModel",
    "ModelConfig", "best_ids", "bridge", "init_parameters", "reversal_index", "EOS",
]
