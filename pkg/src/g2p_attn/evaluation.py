"""Phoneme and word error rates against multi-pronunciation references."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .data import LexiconEntry
from .errors import ContractError

LENGTH_BUCKETS = ("short", "medium", "long", "very_long")
PER_BUCKETS = ("small", "medium", "large", "very_large")


def edit_distance(pred: Sequence, truth: Sequence) -> int:
    """Levenshtein distance with unit insert/delete/substitute costs."""
    prev = list(range(len(truth) + 1))
    for i, p in enumerate(pred, start=1):
        cur = [i] + [0] * len(truth)
        for j, t in enumerate(truth, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (p != t))
        prev = cur
    return prev[-1]


@dataclass
class WordResult:
    word: str
    predicted: list
    truth: list
    distance: int

    @property
    def truth_length(self) -> int:
        return len(self.truth)

    @property
    def per_word_per(self) -> float:
        return self.distance / self.truth_length

    @property
    def correct(self) -> bool:
        return self.distance == 0


def score_word(pred: Sequence, entry: LexiconEntry) -> WordResult:
    """Score against the reference with the lowest per-word PER (first on ties)."""
    best = None
    for truth in entry.pronunciations:
        d = edit_distance(pred, truth)
        if best is None or d / len(truth) < best[0] / len(best[1]):
            best = (d, truth)
    return WordResult(entry.word, list(pred), list(best[1]), best[0])


def length_bucket(n: int) -> str:
    if n <= 6:
        return "short"
    if n <= 8:
        return "medium"
    if n <= 10:
        return "long"
    return "very_long"


def per_bucket(per_word_per: float) -> str | None:
    """Bucket of an incorrect word; ``None`` for a correct one."""
    if per_word_per <= 0:
        return None
    if per_word_per <= 0.10:
        return "small"
    if per_word_per <= 0.20:
        return "medium"
    if per_word_per <= 0.30:
        return "large"
    return "very_large"


def length_buckets(results: Iterable[WordResult]) -> dict[str, dict]:
    """WER (%) per grapheme-length bucket, with word and error counts."""
    table = {b: {"words": 0, "errors": 0, "wer": None} for b in LENGTH_BUCKETS}
    for r in results:
        row = table[length_bucket(len(r.word))]
        row["words"] += 1
        row["errors"] += not r.correct
    for row in table.values():
        if row["words"]:
            row["wer"] = round(100.0 * row["errors"] / row["words"], 2)
    return table


def per_word_per_buckets(results: Iterable[WordResult]) -> dict[str, int]:
    counts = dict.fromkeys(PER_BUCKETS, 0)
    for r in results:
        b = per_bucket(r.per_word_per)
        if b is not None:
            counts[b] += 1
    return counts


def worst_errors(results: Iterable[WordResult], k: int) -> list[WordResult]:
    errors = [r for r in results if not r.correct]
    errors.sort(key=lambda r: (-r.distance, r.word))
    return errors[:k]


@dataclass
class EvalReport:
    per: float
    wer: float
    results: list
    length_table: dict = field(default_factory=dict)
    per_histogram: dict = field(default_factory=dict)

    @property
    def n_words(self) -> int:
        return len(self.results)

    def summary(self) -> str:
        return f"PER {self.per:.2f}  WER {self.wer:.2f}  ({self.n_words} words)"

    def to_text(self, buckets: bool = True) -> str:
        """Key-value summary, optional bucket tables, then a per-word TSV table."""
        errors = sum(not r.correct for r in self.results)
        lines = [
            f"words\t{self.n_words}",
            f"word_errors\t{errors}",
            f"phoneme_errors\t{sum(r.distance for r in self.results)}",
            f"reference_phonemes\t{sum(r.truth_length for r in self.results)}",
            f"per\t{self.per:.2f}",
            f"wer\t{self.wer:.2f}",
        ]
        if buckets:
            for name, row in self.length_table.items():
                wer = "-" if row["wer"] is None else f"{row['wer']:.2f}"
                lines.append(f"length_bucket.{name}\t{row['words']}\t{row['errors']}\t{wer}")
            for name, count in self.per_histogram.items():
                lines.append(f"per_bucket.{name}\t{count}")
        lines.append("")
        lines.append("word\tprediction\treference\tdistance\tper_word_per\tcorrect")
        for r in self.results:
            lines.append(f"{r.word}\t{' '.join(r.predicted)}\t{' '.join(r.truth)}\t{r.distance}\t"
                         f"{r.per_word_per:.4f}\t{int(r.correct)}")
        return "\n".join(lines) + "\n"


def aggregate(results: Sequence[WordResult]) -> EvalReport:
    if not results:
        raise ContractError("cannot aggregate zero results")
    total_dist = sum(r.distance for r in results)
    total_len = sum(r.truth_length for r in results)
    errors = sum(not r.correct for r in results)
    return EvalReport(
        per=round(100.0 * total_dist / total_len, 2),
        wer=round(100.0 * errors / len(results), 2),
        results=list(results),
        length_table=length_buckets(results),
        per_histogram=per_word_per_buckets(results),
    )


def evaluate(predictions: Sequence[Sequence[str]], entries: Sequence[LexiconEntry]) -> EvalReport:
    """Score phoneme-symbol predictions aligned one-to-one with ``entries``."""
    if len(predictions) != len(entries):
        raise ContractError(f"{len(predictions)} predictions for {len(entries)} entries")
    return aggregate([score_word(p, e) for p, e in zip(predictions, entries)])
