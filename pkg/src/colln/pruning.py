"""Token selection and reduction.

Two selectors over one attention matrix:

* plain pruning: keep the r patches with the largest scores under the
  configured metric (column-norm, [CLS] or random),
* correcting: split the keep budget r into k_cls = floor(r * (1 - c))
  patches ranked by [CLS] attention and k_col = r - k_cls ranked by
  column norm among the remainder, then keep the union.

Ties break toward the lower index; kept patches stay in original order, so
repeated pruning composes predictably. [CLS] is never a candidate and is
always re-attached at position 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .attention import AttentionMatrix, TokenSequence
from .errors import ConfigError
from .metrics import ImportanceScores, Metric, cls_scores, colln_scores


@dataclass(frozen=True)
class KeepRate:
    """Keep ceil(rate * N) patches, clamped to [1, N]."""
    rate: float

    def __post_init__(self):
        if not 0.0 < self.rate <= 1.0:
            raise ConfigError(f"keep rate must be in (0, 1], got {self.rate}")


@dataclass(frozen=True)
class KeepCount:
    """Keep min(count, N) patches."""
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise ConfigError(f"keep count must be >= 1, got {self.count}")


@dataclass(frozen=True)
class PruneCount:
    """Remove count patches at each scheduled layer, keeping at least 1."""
    count: int

    def __post_init__(self):
        if self.count < 0:
            raise ConfigError(f"prune count must be >= 0, got {self.count}")


KeepRule = KeepRate | KeepCount | PruneCount

# absorbs float representation error in rate*N and r*(1-c) before rounding
_ROUND_GUARD = 1e-9


@dataclass(frozen=True)
class PruneConfig:
    """Everything the forward pass needs to decide what to drop and when.

    `schedule` lists the layer indices where pruning fires. `correcting`
    switches the selector from plain top-k to the budget-split variant
    (only meaningful with the column-norm metric). `seed` feeds the random
    baseline; `head_agg` picks the attention aggregation for scoring.
    """

    metric: Metric = Metric.COLLN
    norm_order: float = 2.0
    keep_rule: KeepRule = field(default_factory=lambda: KeepRate(0.7))
    rescue_ratio: float = 0.8
    schedule: tuple[int, ...] = ()
    seed: int = 0
    correcting: bool = False
    head_agg: str = "mean"

    def __post_init__(self):
        if self.metric == Metric.ENTROPY_ORACLE:
            raise ConfigError("the entropy oracle is for verification, not pruning")
        if self.norm_order < 1:
            raise ConfigError(f"norm order must be >= 1, got {self.norm_order}")
        if not 0.0 <= self.rescue_ratio <= 1.0:
            raise ConfigError(f"rescue ratio must be in [0, 1], got {self.rescue_ratio}")
        if self.correcting and self.metric != Metric.COLLN:
            raise ConfigError("correcting selector requires the column-norm metric")
        if self.head_agg not in ("mean", "max"):
            raise ConfigError(f"unknown head aggregation '{self.head_agg}'")
        sched = tuple(int(i) for i in self.schedule)
        if any(b <= a for a, b in zip(sched, sched[1:])):
            raise ConfigError(f"schedule must be strictly increasing, got {sched}")
        if sched and sched[0] < 0:
            raise ConfigError("schedule indices must be >= 0")
        object.__setattr__(self, "schedule", sched)

    def validate_depth(self, depth: int) -> None:
        if self.schedule and self.schedule[-1] >= depth:
            raise ConfigError(
                f"schedule layer {self.schedule[-1]} outside model depth {depth}")


def keep_count(rule: KeepRule, current_patches: int) -> int:
    """Resolve a keep rule to an absolute keep count for N current patches."""
    if current_patches < 1:
        raise ConfigError("keep_count needs at least one patch")
    if isinstance(rule, KeepRate):
        r = math.ceil(rule.rate * current_patches - _ROUND_GUARD)
        return min(max(r, 1), current_patches)
    if isinstance(rule, KeepCount):
        return min(rule.count, current_patches)
    if isinstance(rule, PruneCount):
        return max(current_patches - rule.count, 1)
    raise ConfigError(f"unknown keep rule {rule!r}")


def correcting_split(r: int, c: float) -> tuple[int, int]:
    """Budget split of the correcting selector: (k_cls, k_col) with k_cls = floor(r(1-c))."""
    if not 0.0 <= c <= 1.0:
        raise ConfigError(f"rescue ratio must be in [0, 1], got {c}")
    k_cls = math.floor(r * (1.0 - c) + _ROUND_GUARD)
    return k_cls, r - k_cls


def topk_indices(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest values, ascending; equal values prefer the lower index."""
    values = np.asarray(values)
    if not 0 <= k <= len(values):
        raise ConfigError(f"k={k} outside 0..{len(values)}")
    order = np.argsort(-values, kind="stable")
    return np.sort(order[:k])


@dataclass(frozen=True)
class PruneDecision:
    """Immutable record of one pruning event.

    candidate_patch_ids lists every patch that was alive when the layer was
    scored, in position order, so scores_snapshot.values[i] belongs to
    candidate_patch_ids[i].
    """

    kept_patch_positions: tuple[int, ...]  # token positions 1..N, ascending
    kept_original_patch_ids: tuple[int, ...]
    candidate_patch_ids: tuple[int, ...]
    scores_snapshot: ImportanceScores
    layer: int = -1

    def __post_init__(self):
        pos = self.kept_patch_positions
        if len(set(pos)) != len(pos) or any(p < 1 for p in pos):
            raise ConfigError("kept positions must be unique and >= 1 ([CLS] implicit)")


def _gather(x: TokenSequence, kept_zero_based: np.ndarray,
            scores: ImportanceScores, layer: int) -> tuple[TokenSequence, PruneDecision]:
    positions = kept_zero_based + 1
    emb = np.vstack([x.embeddings[0:1], x.embeddings[positions]])
    ids = x.patch_ids[kept_zero_based]
    seq = TokenSequence(emb, ids)
    decision = PruneDecision(
        kept_patch_positions=tuple(int(p) for p in positions),
        kept_original_patch_ids=tuple(int(i) for i in ids),
        candidate_patch_ids=tuple(int(i) for i in x.patch_ids),
        scores_snapshot=scores,
        layer=layer,
    )
    return seq, decision


def prune_by_scores(x: TokenSequence, scores: ImportanceScores, r: int,
                    layer: int = -1) -> tuple[TokenSequence, PruneDecision]:
    """Keep the r highest-scoring patches; output is [CLS] plus r tokens in input order."""
    n = x.patch_count
    if not 1 <= r <= n:
        raise ConfigError(f"keep count {r} outside 1..{n}")
    if len(scores) != n:
        raise ConfigError(f"got {len(scores)} scores for {n} patches")
    return _gather(x, topk_indices(scores.values, r), scores, layer)


def prune_colln(x: TokenSequence, a: AttentionMatrix, r: int, n: float,
                layer: int = -1) -> tuple[TokenSequence, PruneDecision]:
    """Column-norm pruning: score all columns, keep the top r patches."""
    _check_sizes(x, a)
    return prune_by_scores(x, colln_scores(a, n), r, layer)


def prune_correcting(x: TokenSequence, a: AttentionMatrix, r: int, n: float,
                     c: float, layer: int = -1) -> tuple[TokenSequence, PruneDecision]:
    """Correcting selector: [CLS] picks floor(r(1-c)), column norm rescues the rest.

    Degenerate ends: c=1 reduces to prune_colln, c=0 to a pure [CLS] top-r.
    The snapshot carries the column-norm scores.
    """
    _check_sizes(x, a)
    if not 1 <= r <= x.patch_count:
        raise ConfigError(f"keep count {r} outside 1..{x.patch_count}")
    k_cls, k_col = correcting_split(r, c)

    chosen_cls = topk_indices(cls_scores(a).values, k_cls)
    coll = colln_scores(a, n)
    remaining = coll.values.copy()
    remaining[chosen_cls] = -np.inf
    chosen_col = topk_indices(remaining, k_col)

    kept = np.sort(np.concatenate([chosen_cls, chosen_col]).astype(np.int64))
    return _gather(x, kept, coll, layer)


def _check_sizes(x: TokenSequence, a: AttentionMatrix):
    if a.size != x.count:
        raise ConfigError(f"attention size {a.size} != token count {x.count}")
