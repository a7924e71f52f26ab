import numpy as np
import pytest

from colln.attention import AttentionMatrix, TokenSequence
from colln.model import make_tiny_bundle


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture(scope="session")
def tiny_bundle():
    return make_tiny_bundle()


@pytest.fixture(scope="session")
def tiny_image():
    g = np.random.default_rng(7)
    return g.random((48, 48, 3)).astype(np.float32)


def random_attention(rng, patches, spiky=3.0):
    """Row-stochastic (patches+1)^2 matrix with tie-free columns (probability 1)."""
    size = patches + 1
    logits = rng.normal(0.0, spiky, size=(size, size))
    rows = np.exp(logits - logits.max(axis=1, keepdims=True))
    rows /= rows.sum(axis=1, keepdims=True)
    return AttentionMatrix(rows.astype(np.float32))


def zero_tokens(patches, dim=4):
    return TokenSequence(np.zeros((patches + 1, dim), dtype=np.float32))
