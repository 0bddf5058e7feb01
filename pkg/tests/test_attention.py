import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from helpers import scalar_attention, scalar_matvec

from g2p_attn import attention as attn
from g2p_attn.errors import ContractError, DimensionError
from g2p_attn.tensor import Tensor


def params(rng, H, d, a=3, window=3, predictive=False, scale=0.5):
    def r(*shape):
        return Tensor(rng.uniform(-scale, scale, shape))
    extra = (r(a, d), r(a)) if predictive else (None, None)
    return attn.AttentionParams(r(a, H), r(a, d), r(a), r(a), *extra, window=window)


def support_positions(step):
    return set((np.flatnonzero(step.support) + 1).tolist())


def test_singleton_encoder():
    rng = np.random.default_rng(0)
    h = rng.normal(size=(1, 4))
    step = attn.global_attend(Tensor(h), Tensor(rng.normal(size=3)), params(rng, 4, 3))
    assert step.weights.data.tolist() == [1.0]
    np.testing.assert_array_equal(step.context.data, h[0])


def test_identical_states_give_that_state():
    rng = np.random.default_rng(1)
    h = np.tile(rng.normal(size=4), (6, 1))
    step = attn.global_attend(Tensor(h), Tensor(rng.normal(size=3)), params(rng, 4, 3))
    np.testing.assert_allclose(step.context.data, h[0], atol=1e-12)


@given(st.integers(0, 500))
@settings(max_examples=20)
def test_global_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    p = params(rng, 2, 2, a=2)
    hs, d = rng.normal(size=(3, 2)), rng.normal(size=2)
    step = attn.global_attend(Tensor(hs), Tensor(d), p)
    alpha, ctx = scalar_attention(hs.tolist(), d.tolist(), p.w1.data.tolist(), p.w2.data.tolist(),
                                  p.b_a.data.tolist(), p.v.data.tolist())
    np.testing.assert_allclose(step.weights.data, alpha, atol=1e-12)
    np.testing.assert_allclose(step.context.data, ctx, atol=1e-12)


@pytest.mark.parametrize("t, expected", [(5, set(range(2, 9))), (1, {1, 2, 3, 4}), (20, {17, 18, 19, 20}),
                                         (27, {17, 18, 19, 20})])
def test_local_m_windows(t, expected):
    rng = np.random.default_rng(2)
    step = attn.local_m_attend(Tensor(rng.normal(size=(20, 3))), Tensor(rng.normal(size=2)), t,
                               params(rng, 3, 2))
    assert support_positions(step) == expected
    assert step.center == min(t, 20)
    assert abs(step.weights.data.sum() - 1.0) < 1e-12
    assert not step.weights.data[~step.support].any()


def test_local_m_rejects_zero_step():
    rng = np.random.default_rng(0)
    with pytest.raises(ContractError):
        attn.local_m_attend(Tensor(np.ones((3, 2))), Tensor(np.ones(2)), 0, params(rng, 2, 2))


def test_local_p_center_at_half_length():
    rng = np.random.default_rng(3)
    p = params(rng, 3, 2, predictive=True)
    p.v_p.data[:] = 0.0
    step = attn.local_p_attend(Tensor(rng.normal(size=(9, 3))), Tensor(rng.normal(size=2)), p)
    assert step.center == 4.5
    assert support_positions(step) == set(range(2, 8))


def test_local_p_weights_are_gaussian_scaled_softmax():
    rng = np.random.default_rng(4)
    p = params(rng, 3, 2, predictive=True)
    enc, d = rng.normal(size=(12, 3)), rng.normal(size=2)
    step = attn.local_p_attend(Tensor(enc), Tensor(d), p)
    pc = step.center
    raw = attn.scores(Tensor(enc), Tensor(d), p).data[0]
    s = step.support
    alpha = np.where(s, np.exp(raw - raw[s].max()), 0.0)
    alpha /= alpha.sum()
    gauss = np.array([attn.gaussian_factor(i + 1, pc) for i in range(12)])
    np.testing.assert_allclose(step.weights.data, alpha * gauss, atol=1e-12)
    assert step.weights.data.sum() <= 1.0


def test_gaussian_factor_values():
    assert attn.gaussian_factor(5, 5.0) == 1.0
    assert attn.gaussian_factor(8, 5.0, 3) == pytest.approx(0.13534, abs=5e-6)
    assert abs(attn.gaussian_factor(2, 5.0, 3) - math.exp(-2)) < 1e-15


def test_combine_output_cases():
    rng = np.random.default_rng(5)
    c, d = rng.normal(size=3), rng.normal(size=2)
    w_s = np.hstack([np.eye(3), np.zeros((3, 2))])
    np.testing.assert_allclose(attn.combine_output(Tensor(c), Tensor(d), Tensor(w_s), Tensor(np.zeros(3))).data, c)
    b_s = rng.normal(size=4)
    out = attn.combine_output(Tensor(np.zeros(3)), Tensor(np.zeros(2)), Tensor(rng.normal(size=(4, 5))),
                              Tensor(b_s))
    np.testing.assert_array_equal(out.data, b_s)
    w_s = rng.normal(size=(4, 5))
    out = attn.combine_output(Tensor(c), Tensor(d), Tensor(w_s), Tensor(b_s))
    np.testing.assert_allclose(out.data, scalar_matvec(w_s.tolist(), [*c, *d], b_s.tolist()), atol=1e-12)
    with pytest.raises(DimensionError):
        attn.combine_output(Tensor(c), Tensor(d), Tensor(np.ones((4, 4))), Tensor(b_s))


def test_input_feed_conventions():
    y = Tensor(np.arange(3.0))
    np.testing.assert_array_equal(attn.input_feed(y, None, True, 2).data, [0, 1, 2, 0, 0])
    assert attn.input_feed(y, Tensor(np.ones(2)), enabled=False) is y
    big = attn.input_feed(Tensor(np.zeros(512)), Tensor(np.zeros(1024)))
    assert big.shape == (1536,)


def test_batched_padding_is_never_attended():
    rng = np.random.default_rng(6)
    p = params(rng, 3, 2)
    enc, d = rng.normal(size=(2, 7, 3)), rng.normal(size=(2, 2))
    step = attn.global_attend(Tensor(enc), Tensor(d), p, lengths=np.array([7, 3]))
    assert not step.weights.data[1, 3:].any()
    alone = attn.global_attend(Tensor(enc[1, :3]), Tensor(d[1]), p)
    np.testing.assert_allclose(step.weights.data[1, :3], alone.weights.data, atol=1e-12)
    np.testing.assert_allclose(step.context.data[1], alone.context.data, atol=1e-12)
