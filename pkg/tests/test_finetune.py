"""Weighted-sum combination and downstream heads."""

import numpy as np
import pytest

from uxenc import diffkernel as dk
from uxenc import mixsim
from uxenc.encoder import Encoder
from uxenc.errors import DataError
from uxenc.finetune import (
    AsrHead,
    DiarHead,
    FinetuneHyper,
    HeadConfig,
    LayerWeights,
    finetune_loop,
    ids_to_text,
    text_to_ids,
    weighted_sum,
)
from uxenc.mixsim import EvalSimConfig, simulate_eval_utt

from conftest import tiny_encoder_config


def _random_stack(rng, m=4, c=3, t=6, d=8, dtype=np.float64):
    return [dk.tensor(rng.standard_normal((c, t, d)).astype(dtype)) for _ in range(m)]


class TestWeightedSum:
    def test_one_hot_strategy_a_selects_layer_mean(self):
        rng = np.random.default_rng(0)
        stack = _random_stack(rng)
        weights = LayerWeights.init(4, 3, "A", dtype=np.float64)
        weights.logits.data = np.array([0.0, 1000.0, 0.0, 0.0])
        out = weighted_sum(stack, weights).data
        np.testing.assert_allclose(out, stack[1].data.mean(axis=0), atol=1e-12)

    def test_strategy_b_with_tied_weights_equals_a(self):
        rng = np.random.default_rng(1)
        stack = _random_stack(rng)
        logits_a = rng.standard_normal(4)
        wa = LayerWeights.init(4, 3, "A", dtype=np.float64)
        wa.logits.data = logits_a
        wb = LayerWeights.init(4, 3, "B", dtype=np.float64)
        wb.logits.data = np.repeat(logits_a, 3)
        out_a = weighted_sum(stack, wa).data
        out_b = weighted_sum(stack, wb).data
        np.testing.assert_allclose(out_a, out_b, atol=1e-6)

    def test_uniform_weights_give_global_mean(self):
        rng = np.random.default_rng(2)
        stack = _random_stack(rng)
        weights = LayerWeights.init(4, 3, "B", dtype=np.float64)
        out = weighted_sum(stack, weights).data
        manual = np.mean([layer.data for layer in stack], axis=(0, 1))
        np.testing.assert_allclose(out, manual, atol=1e-12)

    def test_linearity_in_stack(self):
        rng = np.random.default_rng(3)
        x = _random_stack(rng)
        y = _random_stack(rng)
        weights = LayerWeights.init(4, 3, "B", dtype=np.float64)
        weights.logits.data = rng.standard_normal(12)
        alpha, beta = 0.7, -1.3
        mixed = [dk.tensor(alpha * a.data + beta * b.data) for a, b in zip(x, y)]
        lhs = weighted_sum(mixed, weights).data
        rhs = alpha * weighted_sum(x, weights).data + beta * weighted_sum(y, weights).data
        np.testing.assert_allclose(lhs, rhs, atol=1e-6)

    def test_probabilities_sum_to_one(self):
        weights = LayerWeights.init(5, 2, "B")
        probs = weights.probabilities().data
        assert probs.sum() == pytest.approx(1.0, abs=1e-6)
        assert np.all(probs >= 0)

    def test_layer_count_mismatch(self):
        rng = np.random.default_rng(4)
        with pytest.raises(DataError):
            weighted_sum(_random_stack(rng, m=3), LayerWeights.init(4, 3, "A"))


class TestHeads:
    def test_diar_zeroed_head_gives_half_probability(self):
        cfg = HeadConfig(kind="diar", hidden=8, n_speakers=2)
        head = DiarHead(cfg, d_in=6, seed=0, dtype=np.float64)
        for p in head.parameters():
            p.data = np.zeros_like(p.data)
        feats = dk.tensor(np.random.default_rng(5).standard_normal((7, 6)))
        logits = head.forward(feats)
        assert logits.shape == (7, 2)
        np.testing.assert_allclose(dk.sigmoid(logits).data, 0.5, atol=1e-12)

    def test_asr_rows_are_distributions(self):
        cfg = HeadConfig(kind="asr", hidden=8, layers=1)
        head = AsrHead(cfg, d_in=6, seed=1, dtype=np.float64)
        feats = dk.tensor(np.random.default_rng(6).standard_normal((5, 6)))
        log_probs = head.forward(feats)
        assert log_probs.shape == (5, cfg.vocab_size)
        np.testing.assert_allclose(np.exp(log_probs.data).sum(axis=1), 1.0, atol=1e-6)

    def test_asr_palindrome_with_tied_directions(self):
        cfg = HeadConfig(kind="asr", hidden=6, layers=1)
        head = AsrHead(cfg, d_in=4, seed=2, dtype=np.float64)
        # tie backward to forward and make the output layer half-symmetric
        for pf, pb in zip(head.fwd[0].params(), head.bwd[0].params()):
            pb.data = pf.data.copy()
        h = cfg.hidden
        head.out_w.data[h:] = head.out_w.data[:h]
        rng = np.random.default_rng(7)
        half = rng.standard_normal((3, 4))
        feats = np.concatenate([half, half[::-1]], axis=0)  # palindrome
        out = head.forward(dk.tensor(feats)).data
        np.testing.assert_allclose(out, out[::-1], atol=1e-9)

    def test_diar_gradient_reaches_layer_weights(self):
        rng = np.random.default_rng(8)
        stack = _random_stack(rng, m=3, c=2, t=5, d=6)
        weights = LayerWeights.init(3, 2, "A", dtype=np.float64)
        head = DiarHead(HeadConfig(kind="diar", hidden=8), d_in=6, seed=3,
                        dtype=np.float64)
        from uxenc.objectives import pit_bce

        probs = dk.sigmoid(head.forward(weighted_sum(stack, weights)))
        target = (rng.random((5, 2)) < 0.5).astype(float)
        loss, _ = pit_bce(probs, target)
        loss.backward()
        assert weights.logits.grad is not None
        assert np.abs(weights.logits.grad).max() > 0


class TestVocab:
    def test_roundtrip(self):
        assert ids_to_text(text_to_ids("hello world")) == "hello world"

    def test_unknown_characters_dropped(self):
        assert ids_to_text(text_to_ids("a+b?")) == "ab"


def _tiny_eval_set(clean_pool, noise_pool, count, seed):
    cfg = EvalSimConfig(max_order=3, n_perimeter=2)
    out = []
    for j in range(count):
        rng = np.random.default_rng([seed, j])
        u1, u2 = clean_pool[j % len(clean_pool)], clean_pool[(j + 5) % len(clean_pool)]
        if u1.speaker_id == u2.speaker_id:
            u2 = clean_pool[(j + 6) % len(clean_pool)]
        out.append(simulate_eval_utt(u1, u2, noise_pool[0], cfg, rng))
    return out


class TestFinetuneLoop:
    def test_zero_steps_returns_uniform_weights(self, clean_pool, noise_pool):
        cfg = tiny_encoder_config()
        encoder = Encoder(cfg, seed=4)
        examples = _tiny_eval_set(clean_pool, noise_pool, 2, seed=100)
        hyper = FinetuneHyper(steps=0, eval_every=10, strategy="A")
        result = finetune_loop(examples, examples, encoder,
                               HeadConfig(kind="diar", hidden=8), hyper)
        probs = result.weights.probabilities().data
        np.testing.assert_allclose(probs, 1.0 / cfg.n_layers, atol=1e-7)
        assert result.best_step == 0

    def test_frozen_encoder_and_training_progress(self, clean_pool, noise_pool):
        cfg = tiny_encoder_config()
        encoder = Encoder(cfg, seed=5)
        before = {k: v.copy() for k, v in encoder.state_dict().items()}
        train = _tiny_eval_set(clean_pool, noise_pool, 4, seed=200)
        dev = _tiny_eval_set(clean_pool, noise_pool, 2, seed=300)
        hyper = FinetuneHyper(steps=40, lr=5e-3, eval_every=20)
        result = finetune_loop(train, dev, encoder, HeadConfig(kind="diar", hidden=8),
                               hyper)
        after = encoder.state_dict()
        for name in before:
            np.testing.assert_array_equal(before[name], after[name])
        train_losses = [m for s, split, m in result.history if split == "train"]
        assert np.mean(train_losses[-10:]) < np.mean(train_losses[:10])
        # weights remain a probability vector after training
        probs = result.weights.probabilities().data
        assert probs.sum() == pytest.approx(1.0, abs=1e-5)

    def test_asr_loop_runs_and_selects_on_dev_loss(self, clean_pool, noise_pool):
        cfg = tiny_encoder_config()
        encoder = Encoder(cfg, seed=6)
        train = _tiny_eval_set(clean_pool, noise_pool, 3, seed=400)
        dev = _tiny_eval_set(clean_pool, noise_pool, 2, seed=500)
        hyper = FinetuneHyper(steps=6, lr=1e-3, eval_every=3)
        result = finetune_loop(train, dev, encoder,
                               HeadConfig(kind="asr", hidden=8, layers=1), hyper)
        dev_losses = [m for s, split, m in result.history if split == "dev"]
        assert result.best_metric == pytest.approx(min(dev_losses))
