"""Greedy inference and ensemble voting."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import BOS, EOS, encode_words
from .errors import ContractError, EnsembleError, InputError, VocabularyError
from .model import G2PModel, best_ids
from .tensor import no_tape


@dataclass
class Prediction:
    word: str
    ids: list
    phonemes: list
    attention: list = field(default_factory=list)  # per-step weight rows, when traced

    def __len__(self) -> int:
        return len(self.ids)


def max_decode_length(n_graphemes: int) -> int:
    return max(20, 2 * n_graphemes + 5)


def check_graphemes(word: str, model: G2PModel) -> None:
    if not word:
        raise InputError("empty word")
    missing = model.g_vocab.unknown(word)
    if missing:
        raise VocabularyError(f"{word}: unknown graphemes {' '.join(missing)}", missing)


def _decode_batch(model: G2PModel, words: Sequence[str], trace: bool) -> list[Prediction]:
    ids, lengths = encode_words(words, model.g_vocab)
    B = len(words)
    limits = np.maximum(20, 2 * lengths + 5)
    out = [[] for _ in range(B)]
    traces = [[] for _ in range(B)]
    done = np.zeros(B, dtype=bool)
    with no_tape():
        enc = model.encode(ids, lengths)
        state = model.initial_state(enc)
        prev = np.full(B, BOS)
        for _ in range(int(limits.max())):
            logits, state, step = model.decode_step(prev, state, enc)
            nxt = best_ids(logits.data)
            for b in np.flatnonzero(~done):
                if trace and step is not None:
                    traces[b].append(step.weights.data[b, :lengths[b]].copy())
                if nxt[b] == EOS:
                    done[b] = True
                    continue
                out[b].append(int(nxt[b]))
                if len(out[b]) >= limits[b]:
                    done[b] = True
            if done.all():
                break
            prev = nxt
    return [Prediction(w, o, model.p_vocab.decode(o), t) for w, o, t in zip(words, out, traces)]


def greedy_decode(word: str, model: G2PModel, trace: bool = False) -> Prediction:
    """Feed back the argmax from BOS until EOS or ``max(20, 2*len(word) + 5)`` phonemes."""
    word = word.upper()
    check_graphemes(word, model)
    return _decode_batch(model, [word], trace)[0]


def decode_words(words: Sequence[str], model: G2PModel, batch_size: int = 256) -> list[Prediction]:
    """Greedy-decode many words, batching words of similar length together."""
    words = [w.upper() for w in words]
    for w in words:
        check_graphemes(w, model)
    order = sorted(range(len(words)), key=lambda i: (len(words[i]), i))
    result: list = [None] * len(words)
    for s in range(0, len(order), batch_size):
        chunk = order[s:s + batch_size]
        for i, pred in zip(chunk, _decode_batch(model, [words[i] for i in chunk], trace=False)):
            result[i] = pred
    return result


def ensemble_vote(predictions: Sequence[Sequence], rng: np.random.Generator) -> list:
    """Whole-sequence plurality vote; ties are broken uniformly at random."""
    if not predictions:
        raise ContractError("ensemble_vote needs at least one prediction")
    counts = Counter(tuple(p) for p in predictions)
    top = max(counts.values())
    tied = [seq for seq, n in counts.items() if n == top]
    if len(tied) == 1:
        return list(tied[0])
    return list(tied[int(rng.integers(len(tied)))])


def check_compatible(models: Sequence[G2PModel]) -> None:
    first = models[0]
    for m in models[1:]:
        if m.g_vocab != first.g_vocab or m.p_vocab != first.p_vocab:
            raise EnsembleError("ensemble members were trained with different vocabularies")


def ensemble_decode(words: Sequence[str], models: Sequence[G2PModel], rng: np.random.Generator,
                    batch_size: int = 256) -> list[Prediction]:
    if not models:
        raise EnsembleError("no models to ensemble")
    check_compatible(models)
    member_preds = [decode_words(words, m, batch_size) for m in models]
    p_vocab = models[0].p_vocab
    voted = []
    for k, w in enumerate(words):
        ids = ensemble_vote([preds[k].ids for preds in member_preds], rng)
        voted.append(Prediction(w.upper(), ids, p_vocab.decode(ids)))
    return voted
