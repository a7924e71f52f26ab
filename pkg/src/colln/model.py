"""Encoder forward pass with pruning hooks and per-layer trace capture.

Block structure is pre-norm: LN -> attention -> residual, then LN -> MLP ->
residual. When a layer is in the pruning schedule, tokens are scored from
that block's own attention matrix and reduced after the attention residual,
before the MLP (so the MLP already runs on the reduced set). Positional
embeddings are added once at the input; pruning just gathers rows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .attention import AttentionMatrix, TokenSequence, mhsa_forward
from .errors import ConfigError, ImageFormatError
from .kernels import as_f32, gelu, layer_norm, linear
from .metrics import (ImportanceScores, Metric, cls_scores, colln_scores,
                      layer_seed, random_scores)
from .pruning import (PruneConfig, PruneDecision, keep_count, prune_by_scores,
                      prune_correcting)
from .specs import TINY, ModelSpec
from .weights_io import ModelBundle, canonical_schema

TRACE_LEVELS = ("none", "decisions", "full")
TINY_SEED = 1337


@dataclass(frozen=True)
class LayerTrace:
    layer: int
    tokens_before: int
    tokens_after: int
    decision: PruneDecision | None = None
    scores: ImportanceScores | None = None
    attention: AttentionMatrix | None = None


@dataclass(frozen=True)
class ForwardTrace:
    layers: tuple[LayerTrace, ...]
    logits: np.ndarray

    @property
    def decisions(self) -> tuple[PruneDecision, ...]:
        return tuple(t.decision for t in self.layers if t.decision is not None)


def patchify(image: np.ndarray, spec: ModelSpec) -> np.ndarray:
    """Cut a [H, W, 3] image in [0, 1] into normalized flat patches.

    Returns [N, 3 * patch_size^2] in row-major grid order; each patch
    flattens as (row, col, channel) with channel fastest. Patch ids are
    implicitly 0..N-1 in this order.
    """
    img = as_f32(image)
    s = spec.image_size
    if img.shape != (s, s, 3):
        raise ImageFormatError(f"expected {s}x{s}x3 image, got {img.shape}")
    img = (img - as_f32(spec.mean)) / as_f32(spec.std)
    g, p = spec.grid_side, spec.patch_size
    patches = img.reshape(g, p, g, p, 3).transpose(0, 2, 1, 3, 4)
    return np.ascontiguousarray(patches.reshape(spec.patch_count, spec.patch_dim))


def _score(cfg: PruneConfig, a: AttentionMatrix, layer: int) -> ImportanceScores:
    if cfg.metric == Metric.COLLN:
        return colln_scores(a, cfg.norm_order)
    if cfg.metric == Metric.CLS:
        return cls_scores(a)
    if cfg.metric == Metric.RANDOM:
        return random_scores(a.patch_count, layer_seed(cfg.seed, layer))
    raise ConfigError(f"metric {cfg.metric} cannot drive pruning")


def _prune_step(seq: TokenSequence, a: AttentionMatrix, cfg: PruneConfig,
                layer: int) -> tuple[TokenSequence, PruneDecision, ImportanceScores]:
    r = keep_count(cfg.keep_rule, seq.patch_count)
    if cfg.correcting:
        out, decision = prune_correcting(seq, a, r, cfg.norm_order,
                                         cfg.rescue_ratio, layer=layer)
        return out, decision, decision.scores_snapshot
    scores = _score(cfg, a, layer)
    out, decision = prune_by_scores(seq, scores, r, layer=layer)
    return out, decision, scores


def forward(image: np.ndarray, bundle: ModelBundle, cfg: PruneConfig,
            trace_level: str = "decisions") -> ForwardTrace:
    """Run the full encoder on one image and return logits plus the trace."""
    if trace_level not in TRACE_LEVELS:
        raise ConfigError(f"trace level must be one of {TRACE_LEVELS}")
    spec = bundle.spec
    cfg.validate_depth(spec.depth)
    t = bundle.tensors

    patches = patchify(image, spec)
    emb = linear(patches, t["patch_embed.w"], t["patch_embed.b"])
    emb = np.vstack([t["cls_token"], emb]) + t["pos_embed"]
    seq = TokenSequence(emb)

    traces: list[LayerTrace] = []
    for i in range(spec.depth):
        block = bundle.block(i)
        before = seq.count

        normed = layer_norm(seq.embeddings, block["ln1.g"], block["ln1.b"], spec.ln_eps)
        attn_out, a = mhsa_forward(TokenSequence(normed, seq.patch_ids), block,
                                   spec.heads, cfg.head_agg)
        seq = TokenSequence(seq.embeddings + attn_out.embeddings, seq.patch_ids)

        decision = scores = None
        if i in cfg.schedule:
            seq, decision, scores = _prune_step(seq, a, cfg, i)

        normed = layer_norm(seq.embeddings, block["ln2.g"], block["ln2.b"], spec.ln_eps)
        hidden = gelu(linear(normed, block["fc1.w"], block["fc1.b"]))
        seq = TokenSequence(seq.embeddings + linear(hidden, block["fc2.w"], block["fc2.b"]),
                            seq.patch_ids)

        if trace_level == "none":
            traces.append(LayerTrace(i, before, seq.count))
        else:
            traces.append(LayerTrace(
                i, before, seq.count, decision=decision, scores=scores,
                attention=a if trace_level == "full" else None))

    final = layer_norm(seq.embeddings, t["ln_final.g"], t["ln_final.b"], spec.ln_eps)
    logits = linear(final[0:1], t["head.w"], t["head.b"])[0]
    return ForwardTrace(tuple(traces), logits)


def make_tiny_bundle(seed: int = TINY_SEED) -> ModelBundle:
    """Deterministic random-weight bundle for the in-tree tiny preset."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in canonical_schema(TINY).items():
        if name.endswith(".g"):
            arr = np.ones(shape, dtype=np.float32)
        elif name.endswith(".b"):
            arr = np.zeros(shape, dtype=np.float32)
        else:
            arr = rng.normal(0.0, 0.02, size=shape).astype(np.float32)
        tensors[name] = arr
    return ModelBundle(TINY, tensors)
