"""Analytic multiply-accumulate accounting for a (possibly pruned) forward pass.

"GFLOPs" throughout this package means giga-MACs, the convention this model
family is reported under; a fused multiply-add counts once. With T tokens,
width D and MLP ratio m, one block costs

    attention: 4*T*D^2 (qkv + output projections) + 2*T^2*D (two matmuls)
    mlp:       2*m*T*D^2

plus the patch embedding (N * D * 3 * patch^2) and the classifier head
(D * num_classes) once per pass. Elementwise LayerNorm/softmax/GELU costs
are sub-percent and ignored. For a scheduled layer the attention term uses
the pre-prune token count and the MLP term the post-prune count. No forward
pass is needed; the report is a pure function of (spec, config).
"""

from __future__ import annotations

from dataclasses import dataclass

from .pruning import PruneConfig, keep_count
from .specs import ModelSpec


@dataclass(frozen=True)
class LayerMacs:
    layer: int
    tokens_attn: int
    tokens_mlp: int
    attn_macs: int
    mlp_macs: int

    @property
    def total(self) -> int:
        return self.attn_macs + self.mlp_macs


@dataclass(frozen=True)
class FlopsReport:
    layers: tuple[LayerMacs, ...]
    patch_embed_macs: int
    head_macs: int

    @property
    def total_macs(self) -> int:
        return (self.patch_embed_macs + self.head_macs
                + sum(l.total for l in self.layers))

    @property
    def gmacs(self) -> float:
        return self.total_macs / 1e9

    @property
    def token_timeline(self) -> tuple[int, ...]:
        """Token count entering each layer, then the final count."""
        return tuple(l.tokens_attn for l in self.layers) + (self.layers[-1].tokens_mlp,)


def block_macs(tokens: int, dim: int, mlp_ratio: int) -> tuple[int, int]:
    """(attention, mlp) MACs of one block at a fixed token count."""
    attn = 4 * tokens * dim * dim + 2 * tokens * tokens * dim
    mlp = 2 * mlp_ratio * tokens * dim * dim
    return attn, mlp


def schedule_macs(spec: ModelSpec, cfg: PruneConfig) -> FlopsReport:
    """Simulate the token timeline through the schedule and sum per-block costs."""
    cfg.validate_depth(spec.depth)
    tokens = spec.patch_count + 1
    layers = []
    for i in range(spec.depth):
        t_attn = tokens
        if i in cfg.schedule:
            tokens = keep_count(cfg.keep_rule, tokens - 1) + 1
        attn, _ = block_macs(t_attn, spec.dim, spec.mlp_ratio)
        _, mlp = block_macs(tokens, spec.dim, spec.mlp_ratio)
        layers.append(LayerMacs(i, t_attn, tokens, attn, mlp))
    embed = spec.patch_count * spec.dim * spec.patch_dim
    head = spec.dim * spec.num_classes
    return FlopsReport(tuple(layers), embed, head)


def render_report(report: FlopsReport) -> str:
    """Aligned text table plus machine-readable key=value lines."""
    lines = [f"{'layer':>5}  {'T_attn':>6}  {'T_mlp':>6}  {'attn_MMACs':>11}  {'mlp_MMACs':>10}"]
    for l in report.layers:
        lines.append(f"{l.layer:>5}  {l.tokens_attn:>6}  {l.tokens_mlp:>6}  "
                     f"{l.attn_macs / 1e6:>11.2f}  {l.mlp_macs / 1e6:>10.2f}")
    lines.append("")
    lines.append(f"patch_embed_macs={report.patch_embed_macs}")
    lines.append(f"head_macs={report.head_macs}")
    lines.append(f"total_macs={report.total_macs}")
    lines.append(f"total_gmacs={report.gmacs:.4f}")
    lines.append("token_timeline=" + ",".join(str(t) for t in report.token_timeline))
    return "\n".join(lines)
