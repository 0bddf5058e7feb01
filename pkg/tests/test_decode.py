from collections import Counter

import numpy as np
import pytest
from helpers import TOY_G, TOY_P, rigged_model

from g2p_attn.data import RESERVED
from g2p_attn.decode import (check_compatible, decode_words, ensemble_decode, ensemble_vote, greedy_decode,
                             max_decode_length)
from g2p_attn.errors import ContractError, EnsembleError, VocabularyError
from g2p_attn.model import G2PModel, ModelConfig


def test_hand_trace():
    """BOS -> Y -> X -> Z -> EOS, read off the rigged transition table."""
    m = rigged_model({"<s>": "Y", "Y": "X", "X": "Z", "Z": "</s>"})
    p = greedy_decode("ab", m)
    assert p.phonemes == ["Y", "X", "Z"]
    assert p.word == "AB"


def test_eos_first_gives_empty_output():
    m = rigged_model({"<s>": "</s>"})
    p = greedy_decode("A", m)
    assert p.phonemes == [] and len(p) == 0


def test_never_eos_is_truncated():
    m = rigged_model({"<s>": "X", "X": "Y", "Y": "X"})
    assert max_decode_length(3) == 20 and max_decode_length(12) == 29
    assert len(greedy_decode("AB", m)) == 20
    assert len(greedy_decode("AB" * 6, m)) == 29


def test_batched_decoding_matches_single_and_keeps_order():
    m = G2PModel(ModelConfig(layers=1, units=6, embed_dim=4, seed=3), TOY_G, TOY_P)
    words = ["ABCD", "A", "DCBA", "BB", "CAD"]
    batched = decode_words(words, m, batch_size=2)
    assert [p.word for p in batched] == words
    for w, p in zip(words, batched):
        assert greedy_decode(w, m).ids == p.ids
    assert greedy_decode("ABCD", m).ids == greedy_decode("ABCD", m).ids


def test_output_never_reserved():
    m = G2PModel(ModelConfig(layers=1, units=5, embed_dim=4, seed=8), TOY_G, TOY_P)
    for p in decode_words(["ABCD", "DDA", "C"], m):
        assert not set(p.phonemes) & set(RESERVED)


def test_trace_records_attention_rows():
    m = G2PModel(ModelConfig(layers=1, units=5, embed_dim=4, seed=8), TOY_G, TOY_P)
    p = greedy_decode("ABC", m, trace=True)
    assert len(p.attention) >= len(p)
    assert all(row.shape == (3,) and abs(row.sum() - 1) < 1e-5 for row in p.attention)


def test_unknown_grapheme():
    m = rigged_model({"<s>": "</s>"})
    with pytest.raises(VocabularyError, match="unknown graphemes Q"):
        greedy_decode("AQ", m)


P, Q, R = ("P",), ("Q", "Q"), ("R",)


def test_vote_majority_and_unanimity():
    rng = np.random.default_rng(0)
    assert ensemble_vote([P, P, P, Q, Q], rng) == list(P)
    assert ensemble_vote([Q] * 5, rng) == list(Q)
    with pytest.raises(ContractError):
        ensemble_vote([], rng)


def test_two_way_tie_is_fair():
    rng = np.random.default_rng(1234)
    counts = Counter(tuple(ensemble_vote([P, P, Q, Q, R], rng)) for _ in range(10_000))
    assert set(counts) == {P, Q}
    assert abs(counts[P] / 10_000 - 0.5) <= 0.02


def test_ensemble_of_copies_equals_member():
    m = G2PModel(ModelConfig(layers=1, units=5, embed_dim=4, seed=5), TOY_G, TOY_P)
    words = ["ABC", "DA"]
    voted = ensemble_decode(words, [m.copy() for _ in range(5)], np.random.default_rng(0))
    assert [v.ids for v in voted] == [p.ids for p in decode_words(words, m)]


def test_incompatible_members():
    a = G2PModel(ModelConfig(layers=1, units=3, embed_dim=2), TOY_G, TOY_P)
    b = rigged_model({"<s>": "</s>"}, vocab=("X", "Y"))
    with pytest.raises(EnsembleError):
        check_compatible([a, b])
