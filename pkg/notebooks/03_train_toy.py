"""Overfit the 50-word toy lexicon and decode a few words.

Run: python3 notebooks/03_train_toy.py   (about 15 seconds)
"""

# %% Data and model
from pathlib import Path

from g2p_attn.data import read_lexicon
from g2p_attn.decode import decode_words, greedy_decode
from g2p_attn.model import G2PModel, ModelConfig
from g2p_attn.train import TrainConfig, TrainState, dev_wer, run_epoch

entries = read_lexicon(Path(__file__).resolve().parents[1] / "tests" / "data" / "toy50.dict")
model = G2PModel.from_entries(ModelConfig(attention="global", layers=1, units=64, embed_dim=64, seed=11), entries)
config = TrainConfig(batch_size=10, epochs=300, seed=11)
state = TrainState.fresh(config)

# %% Train until every training word is decoded exactly
for epoch in range(1, config.epochs + 1):
    loss = run_epoch(entries, model, state, config)
    wer = dev_wer(model, entries)
    if epoch % 20 == 0 or wer == 0.0:
        print(f"epoch {epoch:3d}  loss {loss:.4f}  train WER {wer:.2f}  sampling {state.sampling_prob:.3f}")
    if wer == 0.0:
        break

# %% Predictions, including words outside the lexicon
for p in decode_words(["PASTE", "KNIFE", "CATS", "FISHBOWL"], model):
    print(p.word, " ".join(p.phonemes))

# %% Where the decoder looked while spelling PASTE
trace = greedy_decode("PASTE", model, trace=True)
for phone, row in zip(trace.phonemes, trace.attention):
    print(f"{phone:3s}", " ".join(f"{w:.2f}" for w in row))
