import numpy as np
import pytest

from effops import tensor_core as tc
from effops.model import (CostModel, ModelConfig, add_exit_classifiers, count_macs, forward,
                          init_model)
from effops.operators.quantize import quantize_model
from oracles import central_diff_kinkaware, macs_formula, rel_error, ReluPattern


def _random_batch(rng, b=5, width=9, vocab=16, pad_to=None):
    lens = rng.integers(2, width + 1, b)
    lens[0] = width
    w = pad_to or width
    tok = rng.integers(3, vocab, (b, w))
    tok[:, 0] = 1
    mask = np.arange(w)[None, :] < lens[:, None]
    tok[~mask] = 0
    return tok, mask


class TestInit:
    def test_deterministic(self):
        a, b = init_model(ModelConfig(), 3), init_model(ModelConfig(), 3)
        for k in a.params:
            np.testing.assert_array_equal(a.params[k].data, b.params[k].data)

    def test_seeds_differ(self):
        a, b = init_model(ModelConfig(), 3), init_model(ModelConfig(), 4)
        assert not np.array_equal(a.params["layers.0.wq"].data, b.params["layers.0.wq"].data)

    @pytest.mark.parametrize("field", ["n_layers", "d_model", "n_heads", "d_ff", "n_classes"])
    def test_degenerate_dims(self, field):
        with pytest.raises(ValueError):
            ModelConfig(**{field: 0})

    def test_float32_default(self):
        m = init_model(ModelConfig(), 0)
        assert all(p.data.dtype == np.float32 for p in m.trainable())

    def test_exits_attached_once(self):
        m = add_exit_classifiers(init_model(ModelConfig(), 0), 0)
        assert m.has_exits and "exit.2.w" in m.params and "exit.3.w" not in m.params
        with pytest.raises(ValueError):
            add_exit_classifiers(m, 0)


class TestForward:
    def test_threshold_needs_exits(self, rng):
        tok, mask = _random_batch(rng)
        with pytest.raises(ValueError):
            forward(init_model(ModelConfig(), 0), tok, mask, exit_threshold=0.5)

    def test_threshold_above_one_runs_full_depth(self, rng):
        m = add_exit_classifiers(init_model(ModelConfig(), 0), 1)
        tok, mask = _random_batch(rng)
        out = forward(m, tok, mask, exit_threshold=1.01)
        assert (out.exit_layers == m.n_layers).all()
        full = forward(m, tok, mask)
        np.testing.assert_array_equal(out.logits, full.logits)

    def test_threshold_zero_exits_first_layer(self, rng):
        m = add_exit_classifiers(init_model(ModelConfig(), 0), 1)
        tok, mask = _random_batch(rng)
        assert (forward(m, tok, mask, exit_threshold=0.0).exit_layers == 1).all()

    @pytest.mark.parametrize("seed", range(5))
    def test_padding_invariance(self, seed):
        r = np.random.default_rng(seed)
        m = add_exit_classifiers(init_model(ModelConfig(), seed), seed)
        tok, mask = _random_batch(r, b=6, width=9)
        ptok = np.zeros((6, 32), np.int64)
        ptok[:, :9] = tok
        pmask = np.zeros((6, 32), bool)
        pmask[:, :9] = mask
        for thr in (None, 0.6, 0.9):
            a = forward(m, tok, mask, exit_threshold=thr)
            b = forward(m, ptok, pmask, exit_threshold=thr)
            np.testing.assert_array_equal(a.exit_layers, b.exit_layers)
            assert np.abs(a.logits - b.logits).max() <= 1e-6

    def test_padding_invariance_quantized(self, rng):
        m = quantize_model(init_model(ModelConfig(), 2))
        tok, mask = _random_batch(rng, b=6, width=9)
        ptok = np.zeros((6, 32), np.int64)
        ptok[:, :9] = tok
        a = forward(m, tok, mask)
        b = forward(m, ptok, np.arange(32)[None, :] < mask.sum(1)[:, None])
        assert np.abs(a.logits - b.logits).max() <= 1e-6

    def test_seq_too_long(self):
        m = init_model(ModelConfig(max_len=8), 0)
        with pytest.raises(ValueError):
            forward(m, np.ones((1, 9), np.int64), np.ones((1, 9), bool))

    def test_mac_count_matches_cost_model(self, rng):
        m = add_exit_classifiers(init_model(ModelConfig(), 0), 0)
        tok, mask = _random_batch(rng, b=7, width=11)
        out = forward(m, tok, mask, exit_threshold=0.7)
        snap = m.cost_snapshot()
        expected = sum(count_macs(snap, 11, int(e), n_classifiers=int(e)) for e in out.exit_layers)
        assert out.mac_count == expected

    def test_exits_reduce_cost_monotonically(self, rng):
        m = add_exit_classifiers(init_model(ModelConfig(), 0), 0)
        tok, mask = _random_batch(rng, b=8, width=12)
        costs = [forward(m, tok, mask, exit_threshold=t).mac_count for t in (0.0, 0.6, 0.8, 1.01)]
        assert costs == sorted(costs)


class TestCountMacs:
    def _snap(self, layers=1, heads=4, ff=64):
        return init_model(ModelConfig(n_layers=layers, n_heads=heads, d_ff=ff), 0).cost_snapshot()

    def test_single_token_formula(self):
        got = count_macs(self._snap(), seq_len=1, exit_layer=1)
        assert got == 4 * 32 * 32 + 2 * 32 + 2 * 32 * 64 + 32 * 2

    @pytest.mark.parametrize("s,layers", [(1, 1), (7, 2), (16, 4)])
    def test_matches_hand_expansion(self, s, layers):
        snap = self._snap(layers=layers)
        assert count_macs(snap, s, layers) == macs_formula(s, 32, 32, 64, 2, layers)

    def test_half_kappa_halves_everything(self):
        snap = self._snap(layers=2)
        full = count_macs(snap, 10, 2)
        flags = frozenset({"weight", "attention", "classifier"})
        assert count_macs(snap, 10, 2, flags, CostModel(0.5, 0.5)) == full / 2

    @pytest.mark.parametrize("layer", [0, 3])
    def test_exit_layer_range(self, layer):
        with pytest.raises(ValueError):
            count_macs(self._snap(layers=2), 4, layer)

    def test_bad_kappa(self):
        with pytest.raises(ValueError):
            CostModel(0.0, 0.5)


def test_two_layer_model_gradcheck():
    """Every parameter of a 2-layer toy model against central differences (h=1e-3)."""
    m = init_model(ModelConfig(n_layers=2, max_len=8), 3).astype(np.float64)
    r = np.random.default_rng(3)
    tok = r.integers(1, 16, (3, 6))
    mask = np.ones((3, 6), bool)
    mask[1, 4:] = False
    mask[2, 3:] = False
    tok[~mask] = 0
    y = r.integers(0, 2, 3)

    def loss():
        return tc.cross_entropy(m.encode(tok, mask).exit_logits[-1], y)

    m.requires_grad_(True)
    tc.backward(loss())
    skipped = total = 0
    with ReluPattern(tc) as pat:
        for name, p in m.params.items():
            analytic = p.grad.copy()
            with tc.no_grad():
                numeric, crossed = central_diff_kinkaware(lambda: float(loss().data), p.data, pat)
            skipped += int(crossed.sum())
            total += crossed.size
            assert rel_error(analytic[~crossed], numeric[~crossed]) < 1e-4, name
    assert skipped / total < 0.01
