"""Phoneme and word error rates with multiple reference pronunciations.

Run: python3 notebooks/04_evaluation.py
"""

# %% Score a handful of predictions
from g2p_attn.data import LexiconEntry
from g2p_attn.evaluation import edit_distance, evaluate

entries = [
    LexiconEntry("LASTS", [["L", "AE", "S", "T", "S"]]),
    LexiconEntry("EITHER", [["IY", "DH", "ER"], ["AY", "DH", "ER"]]),
    LexiconEntry("PASTE", [["P", "EY", "S", "T"]]),
]
predictions = [["L", "AE", "S"], ["AY", "DH", "ER"], ["P", "EY", "S", "T"]]
print("edit distance LASTS:", edit_distance(predictions[0], entries[0].pronunciations[0]))

# %% The reference with the lowest per-word PER is the one scored
report = evaluate(predictions, entries)
print(report.summary())
for r in report.results:
    print(r.word, r.truth, f"per-word PER {r.per_word_per:.2f}")

# %% Bucket tables and the per-word TSV used by the eval command
print(report.to_text())
