"""Per-patch importance scores.

Four scorers over the same attention matrix:

* column-norm (the pruning metric): S_j = (sum_i |A[i,j]|^n)^(1/n), the
  ell_n norm of patch j's attention column including the [CLS] row,
* [CLS] attention: row 0 of the matrix,
* seeded uniform random (baseline comparator),
* the explicit order-n entropy of a column, H = log(sum_i p_i^n) / (1-n),
  kept only as a verification oracle. For n > 1 the bottom-K columns by
  entropy are exactly the top-K columns by norm, since
  H = n/(1-n) * ln(S_j) is strictly decreasing in S_j.

Scores are computed in float64; the [CLS] column (j=0) is never a
candidate, while the [CLS] row always contributes to the column sums.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .attention import AttentionMatrix
from .errors import ConfigError


class Metric(enum.Enum):
    COLLN = "colln"
    CLS = "cls"
    RANDOM = "random"
    ENTROPY_ORACLE = "entropy-oracle"


@dataclass(frozen=True)
class ImportanceScores:
    """Scores for patches 1..N; values[j-1] belongs to token position j.

    Higher means more important for COLLN / CLS / RANDOM. The entropy
    oracle stores raw entropies, where LOWER means more important; it is
    kept a distinct metric to avoid sign confusion.
    """

    metric: Metric
    values: np.ndarray
    norm_order: float | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ConfigError("scores must be a flat vector")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)


def renyi_column_entropy(a: AttentionMatrix, j: int, n: float) -> float:
    """Order-n entropy of attention column j (token position, 1-based).

    Returns log(sum_i A[i,j]^n) / (1 - n) with the natural logarithm.
    An all-zero column (impossible for softmax output, possible for
    synthetic input) yields +inf: no mass means no consensus at all.
    """
    if n <= 1:
        raise ConfigError(f"entropy order must be > 1, got {n}")
    if not 1 <= j <= a.patch_count:
        raise ConfigError(f"patch index {j} outside 1..{a.patch_count}")
    col = a.data[:, j].astype(np.float64)
    if col.min() < 0:
        raise ConfigError("entropy of a column with negative entries")
    powsum = float(np.sum(col ** n))
    if powsum == 0.0:
        return math.inf
    return math.log(powsum) / (1.0 - n)


def colln_scores(a: AttentionMatrix, n: float) -> ImportanceScores:
    """Column-wise ell_n norms for patches 1..N, [CLS] row included."""
    if n < 1:
        raise ConfigError(f"norm order must be >= 1, got {n}")
    cols = np.abs(a.data[:, 1:].astype(np.float64))
    values = np.power(np.sum(cols ** n, axis=0), 1.0 / n)
    return ImportanceScores(Metric.COLLN, values, norm_order=float(n))


def entropy_scores(a: AttentionMatrix, n: float) -> ImportanceScores:
    """All column entropies at once (verification helper; lower = better)."""
    values = [renyi_column_entropy(a, j, n) for j in range(1, a.size)]
    return ImportanceScores(Metric.ENTROPY_ORACLE, np.array(values), norm_order=float(n))


def cls_scores(a: AttentionMatrix) -> ImportanceScores:
    """[CLS]-attention scores: row 0, columns 1..N."""
    if a.size < 2:
        raise ConfigError("attention matrix has no patch tokens")
    return ImportanceScores(Metric.CLS, a.data[0, 1:].astype(np.float64))


def random_scores(patch_count: int, seed: int) -> ImportanceScores:
    """Seeded uniform scores on [0, 1); identical seed gives identical scores."""
    if patch_count < 1:
        raise ConfigError("patch_count must be >= 1")
    rng = np.random.default_rng(seed)
    return ImportanceScores(Metric.RANDOM, rng.random(patch_count))


def layer_seed(seed: int, layer: int) -> int:
    """Stable per-layer seed derivation for the random baseline."""
    return int(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, layer]).generate_state(1)[0])
