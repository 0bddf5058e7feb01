"""Adam training loop with dev-WER learning-rate decay and scheduled sampling."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .data import LexiconEntry, make_batches
from .decode import decode_words
from .errors import ConfigError, ContractError, InputError, NumericalError
from .evaluation import evaluate
from .model import DROPOUT_GRID, G2PModel
from .seeding import purpose_rng

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "train_loss", "dev_wer", "lr", "sampling_prob", "saved")


@dataclass
class TrainConfig:
    batch_size: int = 256
    epochs: int = 100
    lr0: float = 0.001
    lr_decay: float = 0.8
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    sampling_floor: float = 0.8
    sampling_horizon: int | None = None  # None: the number of epochs
    clip_norm: float | None = 5.0
    seed: int = 0
    decode_batch_size: int = 256

    def __post_init__(self):
        if not 0.0 < self.lr_decay < 1.0:
            raise ConfigError(f"lr_decay must lie in (0, 1), got {self.lr_decay}")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if not 0.0 <= self.sampling_floor <= 1.0:
            raise ConfigError("sampling_floor must lie in [0, 1]")
        if self.sampling_horizon is not None and self.sampling_horizon < 1:
            raise ConfigError("sampling_horizon must be >= 1")

    @property
    def horizon(self) -> int:
        return self.sampling_horizon or max(self.epochs, 1)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ConfigError(f"unknown training config keys: {sorted(unknown)}")
        return cls(**d)


class Adam:
    """Adam with bias correction; moments are float arrays keyed by parameter name."""

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict, lr: float) -> None:
        missing = [name for name, p in params.items() if p.grad is None]
        if missing:
            raise ContractError(f"missing gradients for {missing}")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, p in params.items():
            g = p.grad
            m = self.m.get(name)
            v = self.v.get(name)
            if m is None:
                m = np.zeros_like(p.data)
                v = np.zeros_like(p.data)
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * (g * g)
            self.m[name], self.v[name] = m, v
            update = lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
            p.data = (p.data - update).astype(p.dtype, copy=False)

    def header(self) -> dict:
        return {"t": self.t, "beta1": self.beta1, "beta2": self.beta2, "eps": self.eps}

    @classmethod
    def from_header(cls, h: dict) -> "Adam":
        opt = cls(h["beta1"], h["beta2"], h["eps"])
        opt.t = h["t"]
        return opt


def adam_step(params: dict, optimizer: Adam, lr: float) -> None:
    optimizer.step(params, lr)


def clip_grad_norm(params: dict, max_norm: float) -> float:
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``."""
    total = math.sqrt(sum(float(np.sum(np.square(p.grad, dtype=np.float64)))
                          for p in params.values() if p.grad is not None))
    if total > max_norm:
        factor = max_norm / total
        for p in params.values():
            if p.grad is not None:
                p.grad = (p.grad * factor).astype(p.dtype)
    return total


def sampling_probability(epoch: int, floor: float, horizon: int) -> float:
    """Probability of feeding the gold phoneme during (0-based) ``epoch``."""
    return max(floor, 1.0 - epoch * (1.0 - floor) / horizon)


@dataclass
class TrainState:
    lr0: float = 0.001
    lr_decay: float = 0.8
    epoch: int = 0                  # completed epochs
    n_decays: int = 0
    best_wer: float = math.inf
    sampling_prob: float = 1.0
    optimizer: Adam = field(default_factory=Adam)
    history: list = field(default_factory=list)
    last_dev_wer: float | None = None

    @classmethod
    def fresh(cls, config: TrainConfig) -> "TrainState":
        return cls(config.lr0, config.lr_decay, optimizer=Adam(config.beta1, config.beta2, config.adam_eps))

    @property
    def lr(self) -> float:
        return self.lr0 * self.lr_decay ** self.n_decays

    def to_metadata(self) -> dict:
        return {"epoch": self.epoch, "n_decays": self.n_decays, "lr": self.lr,
                "best_wer": None if math.isinf(self.best_wer) else self.best_wer,
                "sampling_prob": self.sampling_prob, "lr0": self.lr0, "lr_decay": self.lr_decay,
                "history": self.history}

    @classmethod
    def from_metadata(cls, meta: dict, optimizer: Adam) -> "TrainState":
        best = meta.get("best_wer")
        return cls(meta["lr0"], meta["lr_decay"], meta["epoch"], meta["n_decays"],
                   math.inf if best is None else best, meta["sampling_prob"], optimizer,
                   list(meta.get("history", [])))


def record_dev_wer(state: TrainState, wer: float) -> bool:
    """Apply the checkpoint/decay rule for one epoch's dev WER.

    Strict improvement saves and updates the best WER; anything else (ties
    included) multiplies the learning rate by ``lr_decay`` from the next epoch.
    """
    if wer < state.best_wer:
        state.best_wer = wer
        return True
    state.n_decays += 1
    return False


def run_epoch(entries: Sequence[LexiconEntry], model: G2PModel, state: TrainState, config: TrainConfig) -> float:
    """One pass over shuffled minibatches; returns the token-weighted mean loss."""
    if not entries:
        raise InputError("empty training set")
    e = state.epoch
    sp = sampling_probability(e, config.sampling_floor, config.horizon)
    state.sampling_prob = sp
    drop_rng = purpose_rng(config.seed, "dropout", e)
    samp_rng = purpose_rng(config.seed, "sampling", e)
    total, tokens = 0.0, 0
    for batch in make_batches(entries, config.batch_size, config.seed, e, model.g_vocab, model.p_vocab):
        for p in model.params.values():
            p.grad = None
        with T.Tape():
            loss = model.batch_loss(batch, sp, samp_rng, True, drop_rng)
            T.backward(loss)
        if not np.isfinite(loss.data):
            raise NumericalError(f"non-finite training loss in epoch {e + 1}")
        if config.clip_norm is not None:
            clip_grad_norm(model.params, config.clip_norm)
        state.optimizer.step(model.params, state.lr)
        n = int(batch.target_mask.sum())
        total += loss.item() * n
        tokens += n
    for p in model.params.values():
        p.grad = None
    state.epoch += 1
    return total / tokens


def dev_wer(model: G2PModel, dev: Sequence[LexiconEntry], batch_size: int = 256) -> float:
    preds = decode_words([e.word for e in dev], model, batch_size)
    return evaluate([p.phonemes for p in preds], dev).wer


def end_of_epoch(dev: Sequence[LexiconEntry], model: G2PModel, state: TrainState, config: TrainConfig,
                 checkpoint_path=None) -> tuple[bool, float]:
    """Greedy-decode the dev set, apply the decay rule, save on improvement.

    Returns ``(saved, lr for the next epoch)``.
    """
    if not dev:
        raise InputError("empty development set")
    wer = dev_wer(model, dev, config.decode_batch_size)
    state.last_dev_wer = wer
    saved = record_dev_wer(state, wer)
    if saved and checkpoint_path is not None:
        from .checkpoint import save_checkpoint
        save_checkpoint(checkpoint_path, model, {"train_state": state.to_metadata(), "dev_wer": wer})
    return saved, state.lr


def _fmt(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, float):
        return repr(x)
    return str(x)


def format_log_row(row: dict) -> str:
    return "\t".join(_fmt(row[c]) for c in LOG_COLUMNS)


def train(model: G2PModel, train_entries: Sequence[LexiconEntry], dev_entries: Sequence[LexiconEntry] | None,
          config: TrainConfig, checkpoint_path=None, log_path=None, state_path=None,
          state: TrainState | None = None, on_epoch: Callable | None = None) -> TrainState:
    """Train for ``config.epochs`` epochs (continuing from ``state`` if given).

    Without a dev set the learning rate never decays and the checkpoint is
    rewritten after every epoch. ``state_path`` receives the latest model,
    optimizer moments and schedule after each epoch, for exact resumption.
    The log is tab-separated with columns ``LOG_COLUMNS``.
    """
    from .checkpoint import save_checkpoint

    state = state or TrainState.fresh(config)
    log_fh = None
    if log_path is not None:
        fresh_log = state.epoch == 0 or not Path(log_path).exists()
        log_fh = open(log_path, "w" if fresh_log else "a", encoding="utf-8")
        if fresh_log:
            log_fh.write("\t".join(LOG_COLUMNS) + "\n")
    try:
        while state.epoch < config.epochs:
            lr = state.lr
            loss = run_epoch(train_entries, model, state, config)
            if dev_entries:
                saved, _ = end_of_epoch(dev_entries, model, state, config, checkpoint_path)
                wer = state.last_dev_wer
            else:
                saved, wer = True, None
                if checkpoint_path is not None:
                    save_checkpoint(checkpoint_path, model, {"train_state": state.to_metadata()})
            row = {"epoch": state.epoch, "train_loss": float(loss), "dev_wer": wer, "lr": lr,
                   "sampling_prob": state.sampling_prob, "saved": saved}
            state.history.append(row)
            line = format_log_row(row)
            log.info(line)
            if log_fh is not None:
                log_fh.write(line + "\n")
                log_fh.flush()
            if state_path is not None:
                save_checkpoint(state_path, model, {"train_state": state.to_metadata()}, state.optimizer)
            if on_epoch is not None:
                on_epoch(state, row)
    finally:
        if log_fh is not None:
            log_fh.close()
    return state


def resume(state_path) -> tuple[G2PModel, TrainState]:
    from .checkpoint import load_checkpoint
    model, meta, optimizer = load_checkpoint(state_path, with_optimizer=True)
    if optimizer is None:
        raise ContractError(f"{state_path} holds no optimizer state")
    return model, TrainState.from_metadata(meta["train_state"], optimizer)


def grid_search(run_candidate: Callable[[float, bool], float], p_drops=DROPOUT_GRID,
                feedings=(False, True)) -> tuple[tuple[float, bool], dict]:
    """Evaluate every ``(p_drop, input_feeding)`` pair and pick the lowest dev WER.

    Ties go to the smaller dropout, then to input feeding off.
    """
    table = {(p, f): run_candidate(p, f) for p in p_drops for f in feedings}
    if not table:
        raise ConfigError("empty hyperparameter grid")
    best = min(table, key=lambda k: (table[k], k[0], k[1]))
    return best, table
