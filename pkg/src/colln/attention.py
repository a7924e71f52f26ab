"""Multi-head self-attention returning both tokens and the head-averaged matrix.

The attention matrix handed to the importance metrics is the uniform mean
over heads of the per-head softmax outputs (mean of row-stochastic matrices
is row-stochastic). A max-over-heads aggregation is available for ablation;
it does not preserve row sums and is marked as such on the result.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, WeightFormatError
from .kernels import as_f32, check_finite, linear, softmax_rows

ROW_SUM_TOL = 1e-5


@dataclass(frozen=True)
class AttentionMatrix:
    """Head-aggregated attention over N patches plus the leading [CLS] token.

    Row 0 is the [CLS] row read by the [CLS]-attention score; column j >= 1
    is the attention received by patch j, read by the column-norm score.
    """

    data: np.ndarray
    row_stochastic: bool = True

    def __post_init__(self):
        d = as_f32(self.data)
        if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 1:
            raise ConfigError(f"attention matrix must be square, got {d.shape}")
        check_finite(d, "attention matrix")
        if d.min() < 0.0 or d.max() > 1.0 + ROW_SUM_TOL:
            raise ConfigError("attention entries outside [0, 1]")
        if self.row_stochastic:
            sums = d.sum(axis=1)
            if np.max(np.abs(sums - 1.0)) > ROW_SUM_TOL:
                raise ConfigError("attention rows do not sum to 1")
        object.__setattr__(self, "data", d)

    @property
    def size(self) -> int:
        return self.data.shape[0]

    @property
    def patch_count(self) -> int:
        return self.size - 1


@dataclass(frozen=True)
class TokenSequence:
    """Ordered embeddings [x_cls, x_1..x_N] with original-patch provenance.

    Row 0 is always the [CLS] token. patch_ids maps rows 1..N back to the
    original patch grid; pruning subsets it while preserving order.
    """

    embeddings: np.ndarray
    patch_ids: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        emb = as_f32(self.embeddings)
        if emb.ndim != 2 or emb.shape[0] < 1:
            raise ConfigError(f"token embeddings must be [(N+1) x D], got {emb.shape}")
        ids = self.patch_ids
        if ids is None:
            ids = np.arange(emb.shape[0] - 1, dtype=np.int64)
        ids = np.asarray(ids, dtype=np.int64)
        if ids.ndim != 1 or ids.shape[0] != emb.shape[0] - 1:
            raise ConfigError("patch_ids length must equal token count minus [CLS]")
        if len(np.unique(ids)) != len(ids):
            raise ConfigError("patch_ids contains duplicates")
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "patch_ids", ids)

    @property
    def count(self) -> int:
        return self.embeddings.shape[0]

    @property
    def patch_count(self) -> int:
        return self.count - 1

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]


def head_average(per_head: Sequence[np.ndarray]) -> AttentionMatrix:
    """Elementwise arithmetic mean of per-head attention matrices."""
    if len(per_head) == 0:
        raise ConfigError("head_average of empty head list")
    stack = np.stack([as_f32(h) for h in per_head])
    if any(h.shape != stack[0].shape for h in stack):
        raise ConfigError("head matrices differ in size")
    return AttentionMatrix(stack.mean(axis=0))


def head_max(per_head: Sequence[np.ndarray]) -> AttentionMatrix:
    """Elementwise max over heads (ablation aggregator; not row-stochastic)."""
    if len(per_head) == 0:
        raise ConfigError("head_max of empty head list")
    stack = np.stack([as_f32(h) for h in per_head])
    return AttentionMatrix(stack.max(axis=0), row_stochastic=False)


def mhsa_forward(x: TokenSequence, layer_weights: Mapping[str, np.ndarray],
                 heads: int, head_agg: str = "mean") -> tuple[TokenSequence, AttentionMatrix]:
    """Multi-head self-attention over one token sequence.

    Returns the post-attention tokens (before the residual add, which the
    model applies) and the aggregated attention matrix. Logits are scaled by
    1/sqrt(d_k) with d_k = D / heads.
    """
    d = x.dim
    if heads < 1 or d % heads != 0:
        raise ConfigError(f"embedding dim {d} not divisible by {heads} heads")
    for name in ("qkv.w", "qkv.b", "proj.w", "proj.b"):
        if name not in layer_weights:
            raise WeightFormatError(f"missing attention tensor '{name}'")
    dk = d // heads
    t = x.count

    qkv = linear(x.embeddings, layer_weights["qkv.w"], layer_weights["qkv.b"])
    q, k, v = np.split(qkv, 3, axis=1)
    # [T, D] -> [H, T, dk]
    q = q.reshape(t, heads, dk).transpose(1, 0, 2)
    k = k.reshape(t, heads, dk).transpose(1, 0, 2)
    v = v.reshape(t, heads, dk).transpose(1, 0, 2)

    logits = np.matmul(q, k.transpose(0, 2, 1)) / np.float32(np.sqrt(dk))
    attn = softmax_rows(logits)  # [H, T, T]
    out = np.matmul(attn, v).transpose(1, 0, 2).reshape(t, d)
    out = linear(out, layer_weights["proj.w"], layer_weights["proj.b"])
    check_finite(out, "attention output")

    if head_agg == "mean":
        agg = head_average(list(attn))
    elif head_agg == "max":
        agg = head_max(list(attn))
    else:
        raise ConfigError(f"unknown head aggregation '{head_agg}'")
    return TokenSequence(out, x.patch_ids), agg
