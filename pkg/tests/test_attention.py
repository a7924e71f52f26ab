import numpy as np
import pytest

from colln.attention import (AttentionMatrix, TokenSequence, head_average,
                             head_max, mhsa_forward)
from colln.errors import ConfigError, WeightFormatError
from colln.kernels import softmax_rows
from conftest import random_attention


def identity_weights(dim):
    eye = np.eye(dim, dtype=np.float32)
    return {
        "qkv.w": np.vstack([eye, eye, eye]),
        "qkv.b": np.zeros(3 * dim, np.float32),
        "proj.w": eye,
        "proj.b": np.zeros(dim, np.float32),
    }


def random_weights(rng, dim):
    return {
        "qkv.w": rng.normal(0, 0.3, (3 * dim, dim)).astype(np.float32),
        "qkv.b": rng.normal(0, 0.1, 3 * dim).astype(np.float32),
        "proj.w": rng.normal(0, 0.3, (dim, dim)).astype(np.float32),
        "proj.b": rng.normal(0, 0.1, dim).astype(np.float32),
    }


def per_head_reference(emb, weights, heads):
    """Slow oracle: materialize every head separately with basic numpy ops."""
    t, d = emb.shape
    dk = d // heads
    qkv = emb @ weights["qkv.w"].T + weights["qkv.b"]
    q, k, v = qkv[:, :d], qkv[:, d:2 * d], qkv[:, 2 * d:]
    outs, attns = [], []
    for h in range(heads):
        sl = slice(h * dk, (h + 1) * dk)
        logits = q[:, sl] @ k[:, sl].T / np.sqrt(dk)
        a = softmax_rows(logits.astype(np.float32))
        attns.append(a)
        outs.append(a @ v[:, sl])
    concat = np.concatenate(outs, axis=1)
    out = concat @ weights["proj.w"].T + weights["proj.b"]
    return out, np.mean(attns, axis=0)


class TestMhsa:
    def test_two_identical_tokens_split_attention(self):
        emb = np.tile(np.array([[0.3, -0.2, 0.5, 0.1]], np.float32), (2, 1))
        seq = TokenSequence(emb)
        _, a = mhsa_forward(seq, identity_weights(4), heads=1)
        np.testing.assert_allclose(a.data, 0.5, atol=1e-6)

    def test_rows_sum_to_one(self, rng):
        seq = TokenSequence(rng.normal(0, 1, (6, 8)).astype(np.float32))
        _, a = mhsa_forward(seq, random_weights(rng, 8), heads=2)
        np.testing.assert_allclose(a.data.sum(axis=1), 1.0, atol=1e-5)

    def test_matches_per_head_reference(self, rng):
        emb = rng.normal(0, 1, (4, 8)).astype(np.float32)
        weights = random_weights(rng, 8)
        seq = TokenSequence(emb)
        got_tokens, got_attn = mhsa_forward(seq, weights, heads=2)
        want_out, want_attn = per_head_reference(emb, weights, 2)
        np.testing.assert_allclose(got_tokens.embeddings, want_out, atol=1e-5)
        np.testing.assert_allclose(got_attn.data, want_attn, atol=1e-5)

    def test_size_tracks_pruned_input(self, rng):
        seq = TokenSequence(rng.normal(0, 1, (4, 8)).astype(np.float32),
                            patch_ids=[0, 4, 7])
        _, a = mhsa_forward(seq, random_weights(rng, 8), heads=2)
        assert a.size == 4

    def test_indivisible_heads_rejected(self, rng):
        seq = TokenSequence(rng.normal(0, 1, (3, 8)).astype(np.float32))
        with pytest.raises(ConfigError):
            mhsa_forward(seq, random_weights(rng, 8), heads=3)

    def test_missing_tensor_rejected(self, rng):
        seq = TokenSequence(rng.normal(0, 1, (3, 8)).astype(np.float32))
        weights = random_weights(rng, 8)
        del weights["proj.b"]
        with pytest.raises(WeightFormatError):
            mhsa_forward(seq, weights, heads=2)


class TestHeadAverage:
    def test_single_head_identity(self, rng):
        a = random_attention(rng, 5)
        np.testing.assert_array_equal(head_average([a.data]).data, a.data)

    def test_two_head_midpoint(self):
        h1 = np.array([[1, 0], [0, 1]], np.float32)
        h2 = np.array([[0, 1], [1, 0]], np.float32)
        np.testing.assert_allclose(head_average([h1, h2]).data, 0.5)

    def test_mean_of_row_stochastic_is_row_stochastic(self, rng):
        heads = [random_attention(rng, 6).data for _ in range(5)]
        avg = head_average(heads)
        np.testing.assert_allclose(avg.data.sum(axis=1), 1.0, atol=1e-6)

    def test_empty_rejected(self):
        with pytest.raises(ConfigError):
            head_average([])

    def test_max_aggregation_not_row_stochastic(self, rng):
        heads = [random_attention(rng, 6).data for _ in range(3)]
        mx = head_max(heads)
        assert not mx.row_stochastic
        np.testing.assert_array_equal(mx.data, np.max(heads, axis=0))


class TestTypes:
    def test_attention_rejects_bad_rows(self):
        bad = np.array([[0.5, 0.6], [0.5, 0.5]], np.float32)
        with pytest.raises(ConfigError):
            AttentionMatrix(bad)

    def test_tokens_reject_duplicate_ids(self, rng):
        with pytest.raises(ConfigError):
            TokenSequence(rng.normal(0, 1, (3, 4)).astype(np.float32), patch_ids=[1, 1])
