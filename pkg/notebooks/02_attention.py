"""Global, local-m and local-p attention weights on one random encoding.

Run: python3 notebooks/02_attention.py
"""

# %% Setup
import numpy as np

from g2p_attn import attention as attn
from g2p_attn.tensor import Tensor, no_tape

rng = np.random.default_rng(1)
steps, H, d, a = 9, 6, 6, 5
enc = Tensor(rng.uniform(-1, 1, (steps, H)))
dec = Tensor(rng.uniform(-1, 1, d))
# larger than the +-0.05 training init so the weights are visibly peaked
w = [Tensor(rng.uniform(-1.5, 1.5, s)) for s in [(a, H), (a, d), (a,), (a,), (a, d), (a,)]]
params = attn.AttentionParams(*w, window=2)
np.set_printoptions(precision=3, suppress=True)

# %% Global attention covers every position and sums to one
with no_tape():
    g = attn.global_attend(enc, dec, params)
print("global  ", g.weights.data, "sum", g.weights.data.sum())

# %% Local-m: a window of +-D around min(t, T_g)
with no_tape():
    for t in (1, 5, 12):
        m = attn.local_m_attend(enc, dec, t, params)
        print(f"local_m t={t:2d}", m.weights.data)

# %% Local-p: predicted centre, Gaussian reweighting, no renormalisation
with no_tape():
    p = attn.local_p_attend(enc, dec, params)
print("local_p  centre", p.center, "weights", p.weights.data, "sum", p.weights.data.sum())
print("factor at distance D:", attn.gaussian_factor(2.0, 0.0, window=2), "= exp(-2)", np.exp(-2))
