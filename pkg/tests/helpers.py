"""Shared builders and independent oracles for the test suite."""

from __future__ import annotations

import itertools
import math
from pathlib import Path

import numpy as np

from g2p_attn import attention as attn
from g2p_attn import tensor as T
from g2p_attn.data import BOS, LexiconEntry, Vocabulary, make_batch, read_lexicon
from g2p_attn.layers import LstmCellParams, StackedLstm, lstm_step, run_stack
from g2p_attn.model import ATTENTION_TYPES, ENCODER_MODES, G2PModel, ModelConfig, bridge, init_parameters
from g2p_attn.tensor import Tensor

DATA = Path(__file__).parent / "data"
TOY50 = DATA / "toy50.dict"


def toy50():
    return read_lexicon(TOY50)


# ---------------------------------------------------------------- scalar oracles


def sig(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def scalar_lstm(x, h, c, w_x, w_h, b):
    """Plain-Python LSTM step, gate blocks in (i, f, g, o) order."""
    u = len(h)
    pre = [b[r] + sum(w_x[r][k] * x[k] for k in range(len(x))) + sum(w_h[r][k] * h[k] for k in range(u))
           for r in range(4 * u)]
    i = [sig(v) for v in pre[0:u]]
    f = [sig(v) for v in pre[u:2 * u]]
    g = [math.tanh(v) for v in pre[2 * u:3 * u]]
    o = [sig(v) for v in pre[3 * u:4 * u]]
    c_new = [f[k] * c[k] + i[k] * g[k] for k in range(u)]
    h_new = [o[k] * math.tanh(c_new[k]) for k in range(u)]
    return h_new, c_new


def scalar_matvec(w, x, b=None):
    return [(0.0 if b is None else b[r]) + sum(w[r][k] * x[k] for k in range(len(x))) for r in range(len(w))]


def scalar_attention(hs, d, w1, w2, b_a, v):
    """Global attention weights and context via explicit loops."""
    us = []
    for h in hs:
        pre = [a + q + bb for a, q, bb in zip(scalar_matvec(w1, h), scalar_matvec(w2, d), b_a)]
        us.append(sum(vv * math.tanh(p) for vv, p in zip(v, pre)))
    m = max(us)
    e = [math.exp(u - m) for u in us]
    z = sum(e)
    alpha = [x / z for x in e]
    ctx = [sum(alpha[i] * hs[i][k] for i in range(len(hs))) for k in range(len(hs[0]))]
    return alpha, ctx


def scalar_adam(p, grads, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - lr * (m / (1 - b1 ** t)) / (math.sqrt(v / (1 - b2 ** t)) + eps)
    return p


def alignment_chains(m: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Every alignment of lengths (m, n), as the set of matched position pairs.

    An alignment pairs a k-subset of one sequence with a k-subset of the other
    in order; unpaired symbols are insertions or deletions. Returns the indel
    count per alignment and a 0/1 incidence matrix over the m x n pair cells.
    """
    indels, rows = [], []
    for k in range(min(m, n) + 1):
        for left in itertools.combinations(range(m), k):
            for right in itertools.combinations(range(n), k):
                row = np.zeros(m * n, dtype=np.float32)
                row[[i * n + j for i, j in zip(left, right)]] = 1.0
                indels.append(m + n - 2 * k)
                rows.append(row)
    return np.array(indels, dtype=np.float32), np.array(rows).reshape(len(rows), m * n)


def enumerate_distances(m: int, n: int, alphabet: int, chunk: int = 8192):
    """Minimum alignment cost for every pair of sequences of lengths (m, n).

    Cost of an alignment = indels + mismatching matched pairs; the minimum is
    taken over all alignments from :func:`alignment_chains`.
    """
    a = np.array(list(itertools.product(range(alphabet), repeat=m)), dtype=np.int64).reshape(alphabet ** m, m)
    b = np.array(list(itertools.product(range(alphabet), repeat=n)), dtype=np.int64).reshape(alphabet ** n, n)
    indels, incidence = alignment_chains(m, n)
    mismatch = (a[:, None, :, None] != b[None, :, None, :]).reshape(len(a) * len(b), m * n).astype(np.float32)
    best = np.empty(len(mismatch), dtype=np.int64)
    for s in range(0, len(mismatch), chunk):
        cost = mismatch[s:s + chunk] @ incidence.T + indels
        best[s:s + chunk] = np.rint(cost.min(axis=1)).astype(np.int64) if len(indels) else 0
    return a, b, best.reshape(len(a), len(b))


# ---------------------------------------------------------------- gradcheck instances


def _rand(rng, *shape, scale=0.8):
    return rng.uniform(-scale, scale, size=shape)


def _near_integer(x, margin=0.05):
    x = np.asarray(x, dtype=np.float64)
    return bool(np.any(np.abs(x - np.round(x)) < margin))


def lstm_step_instance(rng):
    u, d, B = rng.integers(2, 6), rng.integers(2, 6), rng.integers(1, 3)
    arrays = [_rand(rng, B, d), _rand(rng, B, u), _rand(rng, B, u),
              _rand(rng, 4 * u, d), _rand(rng, 4 * u, u), _rand(rng, 4 * u)]
    R = _rand(rng, 2, B, u)

    def fn(x, h, c, wx, wh, b):
        h2, c2 = lstm_step(x, h, c, LstmCellParams(wx, wh, b))
        return (h2 * Tensor(R[0])).sum() + (c2 * Tensor(R[1])).sum()
    return fn, arrays


def run_stack_instance(rng):
    u, d, B, steps = rng.integers(2, 5), rng.integers(2, 4), 2, rng.integers(2, 5)
    lengths = np.array([steps, rng.integers(1, steps + 1)])
    arrays = [_rand(rng, B, steps, d)]
    for in_dim in (d, u):
        arrays += [_rand(rng, 4 * u, in_dim), _rand(rng, 4 * u, u), _rand(rng, 4 * u)]
    R = _rand(rng, B, steps, u)
    Rf = _rand(rng, B, u)

    def fn(x, *p):
        stack = StackedLstm([LstmCellParams(*p[0:3]), LstmCellParams(*p[3:6])])
        zero = stack.zero_state(B, np.float64)
        out, finals = run_stack(x, stack, zero, lengths=lengths)
        return (out * Tensor(R)).sum() + (finals[-1][1] * Tensor(Rf)).sum()
    return fn, arrays


def _attention_arrays(rng, predictive):
    B, steps, H, dd, a = 2, rng.integers(1, 7), rng.integers(2, 4), rng.integers(2, 4), rng.integers(2, 4)
    lengths = np.array([steps, rng.integers(1, steps + 1)])
    arrays = [_rand(rng, B, steps, H), _rand(rng, B, dd), _rand(rng, a, H), _rand(rng, a, dd),
              _rand(rng, a), _rand(rng, a)]
    if predictive:
        arrays += [_rand(rng, a, dd, scale=2.0), _rand(rng, a, scale=2.0)]
    return arrays, lengths, _rand(rng, B, steps), _rand(rng, B, H)


def attention_instance(rng, kind):
    """Gradcheck instance for ``kind`` in global / local_m / local_p (None if degenerate)."""
    predictive = kind == "local_p"
    arrays, lengths, Rw, Rc = _attention_arrays(rng, predictive)
    t = int(rng.integers(1, 8))

    def attend(enc, d, *p):
        params = attn.AttentionParams(*p[:4], *(p[4:6] if predictive else ()), window=3)
        if kind == "global":
            return attn.global_attend(enc, d, params, lengths)
        if kind == "local_m":
            return attn.local_m_attend(enc, d, t, params, lengths)
        return attn.local_p_attend(enc, d, params, lengths)

    def fn(*tensors):
        step = attend(*tensors)
        return (step.weights * Tensor(Rw)).sum() + (step.context * Tensor(Rc)).sum()

    if predictive:
        with T.no_tape():
            center = attend(*[Tensor(a) for a in arrays]).center
        if _near_integer(center):
            return None
    return fn, arrays


def output_loss_instance(rng):
    B, H, dd, V = 3, rng.integers(2, 4), rng.integers(2, 4), rng.integers(3, 7)
    arrays = [_rand(rng, B, H), _rand(rng, B, dd), _rand(rng, V, H + dd), _rand(rng, V)]
    targets = rng.integers(0, V, size=B)
    w = rng.uniform(0.1, 1.0, size=B)

    def fn(c, d, ws, bs):
        return T.cross_entropy(attn.combine_output(c, d, ws, bs), targets, w)
    return fn, arrays


def embed_softmax_instance(rng):
    V, E, m = rng.integers(3, 7), rng.integers(2, 4), rng.integers(2, 4)
    ids = rng.integers(0, V, size=4)
    arrays = [_rand(rng, V, E), _rand(rng, m, E), _rand(rng, m)]
    R = _rand(rng, 4, m)

    def fn(table, w, b):
        from g2p_attn.layers import embed
        y = T.linear(embed(ids, table), w, b)
        return (T.softmax(y) * Tensor(R)).sum() + T.tanh(y).sum() * 0.3
    return fn, arrays


def bridge_instance(rng):
    u, B, L = rng.integers(2, 5), 2, 2
    arrays = [_rand(rng, L, 2, B, u), _rand(rng, L, 2, B, u)]
    shapes = [(u, u), (u, u), (u,)]
    for _ in range(L * 2):
        arrays += [_rand(rng, *s) for s in shapes]
    R = _rand(rng, L, 2, B, u)

    def fn(fwd, bwd, *p):
        ff = [(fwd[k, 0], fwd[k, 1]) for k in range(L)]
        bb = [(bwd[k, 0], bwd[k, 1]) for k in range(L)]
        params = [{"h": p[6 * k:6 * k + 3], "c": p[6 * k + 3:6 * k + 6]} for k in range(L)]
        out = bridge(ff, bb, params)
        total = None
        for k, (h, c) in enumerate(out):
            term = (h * Tensor(R[k, 0])).sum() + (c * Tensor(R[k, 1])).sum()
            total = term if total is None else total + term
        return total
    return fn, arrays


TOY_G = Vocabulary("ABCD")
TOY_P = Vocabulary(["X", "Y", "Z"])
FULL_CONFIGS = list(itertools.product(ATTENTION_TYPES, ENCODER_MODES))


def full_model_instance(rng, attention, encoder_mode, units=None, feeding=None):
    """Whole-model loss on a 2-word batch; None when local-p sits too close to a window edge."""
    units = int(units or rng.integers(2, 9))
    feeding = bool(rng.integers(0, 2)) if feeding is None else feeding
    cfg = ModelConfig(attention=attention, encoder_mode=encoder_mode, layers=1, units=units,
                      embed_dim=int(rng.integers(2, 5)), input_feeding=feeding, attention_size=int(rng.integers(2, 5)),
                      seed=int(rng.integers(1 << 30)))
    params = init_parameters(cfg, len(TOY_G), len(TOY_P))
    names = sorted(params)
    scales = {n: (2.0 if n.startswith("attention.w_p") or n.startswith("attention.v_p") else 0.8) for n in names}
    arrays = [_rand(rng, *params[n].shape, scale=scales[n]) for n in names]
    words = ["".join(rng.choice(list("ABCD"), size=n)) for n in (int(rng.integers(2, 6)), int(rng.integers(1, 4)))]
    prons = [list(rng.choice(["X", "Y", "Z"], size=int(rng.integers(1, 4)))) for _ in words]
    batch = make_batch([LexiconEntry(w, [p]) for w, p in zip(words, prons)], TOY_G, TOY_P)

    def build(tensors):
        return G2PModel(cfg, TOY_G, TOY_P, dict(zip(names, tensors)))

    def fn(*tensors):
        return build(tensors).batch_loss(batch)

    if attention == "local_p":
        model = build([Tensor(a) for a in arrays])
        centers = []
        with T.no_tape():
            enc = model.encode(batch.graphemes, batch.g_lengths)
            state = model.initial_state(enc)
            prev = np.full(len(words), BOS)
            for t in range(batch.targets.shape[1]):
                _, state, step = model.decode_step(prev, state, enc)
                centers.append(step.center)
                prev = batch.targets[:, t]
        if _near_integer(np.concatenate(centers)):
            return None
    return fn, arrays


# ---------------------------------------------------------------- rigged decoder


def rigged_model(transitions: dict[str, str], vocab=("X", "Y", "Z"), big: float = 20.0) -> G2PModel:
    """Attention-free model whose greedy output follows ``transitions`` (prev -> next).

    The decoder has one layer with units = |V|; the phoneme embedding of id j
    is e_j, the candidate weights are 3I, and large gate biases make the cell
    forget its past and expose it: c ~ tanh(3) e_prev, h ~ tanh(tanh(3)) e_prev.
    The output layer sets logit[next(prev)] = 10 h[prev].
    """
    p_vocab = Vocabulary(vocab)
    g_vocab = Vocabulary("AB")
    V = len(p_vocab)
    cfg = ModelConfig(attention="none", layers=1, units=V, embed_dim=V, input_feeding=False, seed=0)
    params = init_parameters(cfg, len(g_vocab), V)
    P = {k: np.zeros(v.shape) for k, v in params.items()}
    P["embed.phoneme"] = np.eye(V)
    w_x = np.zeros((4 * V, V))
    w_x[2 * V:3 * V] = 3.0 * np.eye(V)
    b = np.concatenate([np.full(V, big), np.full(V, -big), np.zeros(V), np.full(V, big)])
    P["decoder.0.w_x"], P["decoder.0.b"] = w_x, b
    w_s = np.zeros((V, V))
    for prev, nxt in transitions.items():
        w_s[p_vocab.id(nxt), p_vocab.id(prev)] = 10.0
    P["output.w_s"] = w_s
    tensors = {k: Tensor(v.astype(np.float32), requires_grad=True, name=k) for k, v in P.items()}
    return G2PModel(cfg, g_vocab, p_vocab, tensors)


# ---------------------------------------------------------------- acceptance reporting

ACCEPTANCE: list[str] = []


def report(number: int, title: str, ok: bool | None, detail: str = "") -> str:
    """Record one acceptance line (``ok=None`` marks a skipped criterion)."""
    verdict = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
    line = f"criterion {number} {verdict}: {title}" + (f" ({detail})" if detail else "")
    ACCEPTANCE.append(line)
    print(line)
    return line
