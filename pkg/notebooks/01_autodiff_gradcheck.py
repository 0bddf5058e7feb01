"""Tape autodiff and finite-difference checks.

Run: python3 notebooks/01_autodiff_gradcheck.py
"""

# %% A scalar function through the tape
import numpy as np

from g2p_attn import tensor as T
from g2p_attn.layers import LstmCellParams, lstm_step
from g2p_attn.tensor import Tensor, gradcheck

x = Tensor(np.array([0.3, -0.7]), requires_grad=True)
with T.Tape() as tape:
    y = (T.tanh(x) * x).sum()
    T.backward(y)
print("ops recorded:", tape.ops())
print("dy/dx:", x.grad, "expected:", np.tanh(x.data) + x.data * (1 - np.tanh(x.data) ** 2))

# %% One LSTM step against central differences
rng = np.random.default_rng(0)
u, d = 4, 3
arrays = [rng.uniform(-0.8, 0.8, s) for s in [(1, d), (1, u), (1, u), (4 * u, d), (4 * u, u), (4 * u,)]]


def lstm_loss(x, h, c, wx, wh, b):
    h2, c2 = lstm_step(x, h, c, LstmCellParams(wx, wh, b))
    return (h2 * h2).sum() + c2.sum()


print("LSTM step relative error:", gradcheck(lstm_loss, arrays))

# %% Step size matters: truncation error falls with eps squared
f = lambda a: T.exp(T.scale(a * a, -8.0)).sum()  # a narrow Gaussian, like local-p reweighting
point = [np.array([0.37])]
for eps in (1e-2, 1e-3, 1e-4):
    print(f"eps {eps:g}: relative error {gradcheck(f, point, eps=eps):.2e}")
