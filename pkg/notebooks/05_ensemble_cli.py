"""Train five small models through the CLI and evaluate them as an ensemble.

Run: python3 notebooks/05_ensemble_cli.py   (about a minute)
"""

# %% Five seeds of a small model
import tempfile
from pathlib import Path

from g2p_attn.cli import main

lexicon = Path(__file__).resolve().parents[1] / "tests" / "data" / "toy50.dict"
work = Path(tempfile.mkdtemp(prefix="g2p-ensemble-"))
small = ["--layers", "1", "--units", "32", "--embed-dim", "32", "--batch-size", "10", "--epochs", "40",
         "--lr", "0.01"]
for seed in range(5):
    # no dev set: on a tiny run the dev WER sits at 100% early and the plateau rule would decay lr every epoch
    code = main(["train", "--train", str(lexicon), "--seed", str(seed),
                 "--out", str(work / f"seed{seed}"), *small])
    assert code == 0

# %% Each member alone, then the plurality vote
checkpoints = [str(work / f"seed{s}" / "model.ckpt") for s in range(5)]
for ckpt in checkpoints:
    main(["eval", "--checkpoint", ckpt, "--test", str(lexicon)])
main(["eval", "--checkpoint", *checkpoints, "--ensemble", "--test", str(lexicon), "--buckets"])
print("artifacts in", work)
