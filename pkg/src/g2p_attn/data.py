"""Lexicon parsing, vocabularies, dev-set sampling and padded minibatches."""

from __future__ import annotations

import io
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import ConfigError, InputError, LexiconParseError, VocabularyError
from .seeding import purpose_rng

PAD, BOS, EOS = 0, 1, 2
RESERVED = ("<pad>", "<s>", "</s>")

_ALTERNATE = re.compile(r"^(.+)\((\d+)\)$")


@dataclass
class LexiconEntry:
    word: str
    pronunciations: list  # list of lists of phoneme symbols

    def __post_init__(self):
        if not self.word:
            raise InputError("lexicon entry with an empty word")
        if not self.pronunciations or any(len(p) == 0 for p in self.pronunciations):
            raise InputError(f"{self.word}: every pronunciation must be nonempty")

    @property
    def graphemes(self) -> list[str]:
        return list(self.word)

    @property
    def target(self) -> list[str]:
        """Training target: the first listed pronunciation."""
        return self.pronunciations[0]


class Vocabulary:
    """Symbol/id bijection with ids 0, 1, 2 reserved for PAD, BOS, EOS."""

    def __init__(self, symbols: Iterable[str]):
        symbols = list(symbols)
        clash = set(symbols) & set(RESERVED)
        if clash:
            raise VocabularyError(f"corpus symbols collide with reserved names: {sorted(clash)}", clash)
        if len(set(symbols)) != len(symbols):
            raise VocabularyError("duplicate symbols in vocabulary")
        self.symbols = list(RESERVED) + symbols
        self._ids = {s: i for i, s in enumerate(self.symbols)}

    @classmethod
    def from_sequences(cls, sequences: Iterable[Sequence[str]]) -> "Vocabulary":
        seen = set()
        for seq in sequences:
            seen.update(seq)
        return cls(sorted(seen))

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol) -> bool:
        return symbol in self._ids and self._ids[symbol] >= len(RESERVED)

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.symbols == other.symbols

    def __repr__(self) -> str:
        return f"Vocabulary({len(self)} symbols)"

    @property
    def corpus_symbols(self) -> list[str]:
        return self.symbols[len(RESERVED):]

    def id(self, symbol: str) -> int:
        return self._ids[symbol]

    def unknown(self, seq: Iterable[str]) -> list[str]:
        return sorted({s for s in seq if s not in self})

    def encode(self, seq: Sequence[str]) -> list[int]:
        missing = self.unknown(seq)
        if missing:
            raise VocabularyError(f"unknown symbols: {' '.join(missing)}", missing)
        return [self._ids[s] for s in seq]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.symbols[i] for i in ids]


def build_vocabularies(entries: Sequence[LexiconEntry]) -> tuple[Vocabulary, Vocabulary]:
    """Grapheme and phoneme vocabularies over the given (training) entries."""
    graphemes = Vocabulary.from_sequences(e.word for e in entries)
    phonemes = Vocabulary.from_sequences(p for e in entries for p in e.pronunciations)
    return graphemes, phonemes


def parse_lexicon(stream: TextIO | str, source: str = "<lexicon>") -> list[LexiconEntry]:
    """Parse a CMUdict-style lexicon.

    Each line is ``WORD PH1 PH2 ...``; ``WORD(2)`` marks an alternate
    pronunciation of ``WORD``. Lines starting with ``;;;`` are comments.
    Entries come back in order of first appearance, words upper-cased.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    grouped: dict[str, list] = {}
    for lineno, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line or line.startswith(";;;"):
            continue
        fields = line.split()
        if len(fields) < 2:
            raise LexiconParseError(f"{source}: expected a word and at least one phoneme", lineno)
        word = fields[0]
        m = _ALTERNATE.match(word)
        if m:
            word = m.group(1)
        word = word.upper()
        prons = grouped.setdefault(word, [])
        pron = fields[1:]
        if pron in prons:
            warnings.warn(f"{source}:{lineno}: duplicate pronunciation for {word} dropped",
                          stacklevel=2)
            continue
        prons.append(pron)
    return [LexiconEntry(w, p) for w, p in grouped.items()]


def read_lexicon(path: str | Path) -> list[LexiconEntry]:
    with open(path, encoding="utf-8") as fh:
        return parse_lexicon(fh, source=str(path))


def serialize_lexicon(entries: Iterable[LexiconEntry]) -> str:
    lines = []
    for e in entries:
        for k, pron in enumerate(e.pronunciations):
            word = e.word if k == 0 else f"{e.word}({k + 1})"
            lines.append(f"{word}  {' '.join(pron)}")
    return "\n".join(lines) + ("\n" if lines else "")


def read_word_list(stream: TextIO) -> list[str]:
    return [line.strip().split()[0].upper() for line in stream if line.strip()]


# ---------------------------------------------------------------- splits


@dataclass(frozen=True)
class StandardSetup:
    train: int
    test: int
    dev: int | None = None          # fixed dev file size
    dev_sample: int | None = None   # dev sampled from train


STANDARD_SETUPS = {
    "cmudict": StandardSetup(train=106_837, test=12_000, dev_sample=2_670),
    "pronlex": StandardSetup(train=83_182, test=4_800, dev=2_400),
    "nettalk": StandardSetup(train=14_851, test=4_951, dev_sample=1_000),
}


def check_standard_split(name: str, train: Sequence, test: Sequence, dev: Sequence | None = None) -> None:
    """Raise :class:`ConfigError` unless split sizes match the standard setup."""
    setup = STANDARD_SETUPS[name]
    if len(train) != setup.train or len(test) != setup.test:
        raise ConfigError(f"{name}: expected {setup.train} train / {setup.test} test words, "
                          f"got {len(train)} / {len(test)}")
    if setup.dev is not None and (dev is None or len(dev) != setup.dev):
        raise ConfigError(f"{name}: expected {setup.dev} dev words")


@dataclass
class SplitSpec:
    train: str
    dev: str | None = None
    test: str | None = None
    dev_sample: int = 0
    seed: int = 0

    def load(self):
        """Return ``(train, dev, test)`` entry lists; dev is sampled when no file is given."""
        train = read_lexicon(self.train)
        test = read_lexicon(self.test) if self.test else []
        if self.dev:
            dev = read_lexicon(self.dev)
        else:
            train, dev = sample_dev(train, self.dev_sample, self.seed)
        return train, dev, test


def sample_dev(entries: Sequence[LexiconEntry], n: int, seed: int):
    """Hold out ``n`` whole words, uniformly without replacement."""
    if n < 0 or n >= len(entries):
        raise ConfigError(f"cannot sample {n} dev words from {len(entries)} training words")
    rng = purpose_rng(seed, "dev")
    chosen = np.zeros(len(entries), dtype=bool)
    chosen[rng.choice(len(entries), size=n, replace=False)] = True
    train = [e for e, c in zip(entries, chosen) if not c]
    dev = [e for e, c in zip(entries, chosen) if c]
    return train, dev


# ---------------------------------------------------------------- batching


@dataclass
class Batch:
    words: list
    graphemes: np.ndarray   # [B, Tg] int, PAD-filled
    g_lengths: np.ndarray   # [B]
    targets: np.ndarray     # [B, Tp] gold ids with EOS appended, PAD-filled
    p_lengths: np.ndarray   # [B] including EOS
    entries: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.words)

    @property
    def target_mask(self) -> np.ndarray:
        return np.arange(self.targets.shape[1])[None, :] < self.p_lengths[:, None]


def pad(seqs: Sequence[Sequence[int]], value: int = PAD) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    out = np.full((len(seqs), int(lengths.max()) if len(seqs) else 0), value, dtype=np.int64)
    for k, s in enumerate(seqs):
        out[k, :len(s)] = s
    return out, lengths


def encode_words(words: Sequence[str], g_vocab: Vocabulary) -> tuple[np.ndarray, np.ndarray]:
    if any(len(w) == 0 for w in words):
        raise InputError("empty word")
    return pad([g_vocab.encode(list(w)) for w in words])


def make_batch(entries: Sequence[LexiconEntry], g_vocab: Vocabulary, p_vocab: Vocabulary) -> Batch:
    graphemes, g_lengths = encode_words([e.word for e in entries], g_vocab)
    targets, p_lengths = pad([p_vocab.encode(e.target) + [EOS] for e in entries])
    return Batch([e.word for e in entries], graphemes, g_lengths, targets, p_lengths, list(entries))


def shuffle_order(n: int, seed: int, epoch: int) -> np.ndarray:
    return purpose_rng(seed, "shuffle", epoch).permutation(n)


def make_batches(entries: Sequence[LexiconEntry], batch_size: int, seed: int, epoch: int,
                 g_vocab: Vocabulary, p_vocab: Vocabulary, shuffle: bool = True) -> list[Batch]:
    """Split into padded batches; the order is reshuffled per ``(seed, epoch)``.

    The final short batch is kept.
    """
    if batch_size < 1:
        raise ConfigError("batch_size must be >= 1")
    order = shuffle_order(len(entries), seed, epoch) if shuffle else np.arange(len(entries))
    return [make_batch([entries[i] for i in order[s:s + batch_size]], g_vocab, p_vocab)
            for s in range(0, len(entries), batch_size)]
