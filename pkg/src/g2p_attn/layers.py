"""Embedding, LSTM cell, stacked LSTM, affine projection and dropout."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ConfigError, ContractError, DimensionError, VocabularyError
from .tensor import Tensor

INIT_SCALE = 0.05
FORGET_BIAS = 1.0

# Gate blocks inside the stacked 4u rows: input, forget, cell candidate, output.
GATE_ORDER = ("input", "forget", "candidate", "output")


def uniform(rng: np.random.Generator, shape, scale: float = INIT_SCALE) -> np.ndarray:
    return rng.uniform(-scale, scale, size=shape).astype(np.float32)


def embed(ids, table: Tensor) -> Tensor:
    """Look up rows of ``table``; ``ids`` may have any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    bad = ids[(ids < 0) | (ids >= table.shape[0])]
    if bad.size:
        raise VocabularyError(f"ids {sorted(set(bad.tolist()))} outside vocabulary of size "
                              f"{table.shape[0]}", bad.tolist())
    return T.take_rows(table, ids)


@dataclass
class LstmCellParams:
    w_x: Tensor  # [4u, in_dim]
    w_h: Tensor  # [4u, u]
    b: Tensor    # [4u]

    @property
    def units(self) -> int:
        return self.w_h.shape[1]

    @property
    def in_dim(self) -> int:
        return self.w_x.shape[1]

    def __post_init__(self):
        u4 = self.w_h.shape[0]
        if u4 % 4 or self.w_h.shape != (u4, u4 // 4) or self.w_x.shape[0] != u4 or self.b.shape != (u4,):
            raise DimensionError(
                f"inconsistent LSTM params: w_x {self.w_x.shape}, w_h {self.w_h.shape}, b {self.b.shape}")

    @classmethod
    def init(cls, rng: np.random.Generator, in_dim: int, units: int) -> "LstmCellParams":
        b = uniform(rng, (4 * units,))
        b[units:2 * units] = FORGET_BIAS
        return cls(Tensor(uniform(rng, (4 * units, in_dim)), requires_grad=True),
                   Tensor(uniform(rng, (4 * units, units)), requires_grad=True),
                   Tensor(b, requires_grad=True))


def _gates_to_state(gates: Tensor, c_prev: Tensor, u: int) -> tuple[Tensor, Tensor]:
    s = T.sigmoid(gates)
    i = s[..., 0:u]
    f = s[..., u:2 * u]
    o = s[..., 3 * u:4 * u]
    g = T.tanh(gates[..., 2 * u:3 * u])
    c = f * c_prev + i * g
    h = o * T.tanh(c)
    return h, c


def lstm_step(x: Tensor, h_prev: Tensor, c_prev: Tensor, params: LstmCellParams) -> tuple[Tensor, Tensor]:
    """One LSTM step; inputs may carry a leading batch dimension."""
    u = params.units
    if x.shape[-1] != params.in_dim or h_prev.shape[-1] != u or c_prev.shape[-1] != u:
        raise DimensionError(f"lstm_step: x {x.shape}, h {h_prev.shape}, c {c_prev.shape} "
                             f"do not match cell (in_dim={params.in_dim}, units={u})")
    gates = T.linear(x, params.w_x, params.b) + T.linear(h_prev, params.w_h)
    return _gates_to_state(gates, c_prev, u)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    return T.linear(x, w, b)


def dropout(x: Tensor, p: float, rng: np.random.Generator | None, active: bool = True) -> Tensor:
    """Inverted dropout; identity when inactive or ``p == 0``."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must lie in [0, 1), got {p}")
    if not active or p == 0.0:
        return x
    if rng is None:
        raise ContractError("active dropout needs a random generator")
    keep = (rng.random(x.shape) >= p).astype(x.dtype) / x.dtype.type(1.0 - p)
    return x * Tensor(keep)


@dataclass
class StackedLstm:
    layers: list
    p_drop: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p_drop < 1.0:
            raise ConfigError(f"dropout probability must lie in [0, 1), got {self.p_drop}")
        for below, above in zip(self.layers, self.layers[1:]):
            if above.in_dim != below.units:
                raise DimensionError("stacked layer input dim must equal the hidden size below it")

    @property
    def units(self) -> int:
        return self.layers[-1].units

    @classmethod
    def init(cls, rng, in_dim: int, units: int, n_layers: int, p_drop: float = 0.0) -> "StackedLstm":
        layers = [LstmCellParams.init(rng, in_dim if k == 0 else units, units) for k in range(n_layers)]
        return cls(layers, p_drop)

    def zero_state(self, batch: int, dtype=np.float32) -> list:
        return [(Tensor(np.zeros((batch, l.units), dtype)), Tensor(np.zeros((batch, l.units), dtype)))
                for l in self.layers]

    def step(self, x: Tensor, states: list, dropout_active: bool = False, rng=None) -> list:
        """Advance every layer by one time step; returns the new ``(h, c)`` list."""
        if len(states) != len(self.layers):
            raise ContractError(f"expected {len(self.layers)} initial states, got {len(states)}")
        new = []
        inp = x
        for k, (cell, (h, c)) in enumerate(zip(self.layers, states)):
            if k > 0:
                inp = dropout(inp, self.p_drop, rng, dropout_active)
            h, c = lstm_step(inp, h, c, cell)
            new.append((h, c))
            inp = h
        return new


def run_stack(inputs: Tensor, stack: StackedLstm, init: list, dropout_active: bool = False,
              rng: np.random.Generator | None = None, lengths=None):
    """Run a stacked LSTM over a whole sequence.

    ``inputs`` is ``[B, T, in_dim]`` (or ``[T, in_dim]``). Layer k consumes the
    outputs of layer k-1, with dropout on those inter-layer activations only.
    Returns ``(outputs [B, T, u], finals)``; when ``lengths`` is given, each
    layer's final ``(h, c)`` is read at the sequence's true last position, so
    right-padding never leaks into the finals.
    """
    if len(init) != len(stack.layers):
        raise ContractError(f"expected {len(stack.layers)} initial states, got {len(init)}")
    unbatched = inputs.ndim == 2
    if unbatched:
        inputs = inputs.reshape(1, *inputs.shape)
        init = [(h.reshape(1, -1), c.reshape(1, -1)) for h, c in init]
    B, steps = inputs.shape[0], inputs.shape[1]
    if steps == 0:
        raise ContractError("run_stack needs at least one time step")
    last = np.full(B, steps - 1) if lengths is None else np.asarray(lengths) - 1
    rows = np.arange(B)
    layer_in = inputs
    finals = []
    for k, (cell, (h, c)) in enumerate(zip(stack.layers, init)):
        if k > 0:
            layer_in = dropout(layer_in, stack.p_drop, rng, dropout_active)
        u = cell.units
        x_proj = T.linear(layer_in, cell.w_x, cell.b)
        hs, cs = [], []
        for t in range(steps):
            gates = x_proj[:, t] + T.linear(h, cell.w_h)
            h, c = _gates_to_state(gates, c, u)
            hs.append(h)
            cs.append(c)
        layer_out = T.stack(hs, axis=1)
        if lengths is None:
            finals.append((h, c))
        else:
            finals.append((layer_out[rows, last], T.stack(cs, axis=1)[rows, last]))
        layer_in = layer_out
    if unbatched:
        return layer_in[0], [(h[0], c[0]) for h, c in finals]
    return layer_in, finals
