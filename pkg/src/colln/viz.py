"""Per-layer importance heatmaps, kept-token masks and score dumps.

Outputs are byte-exact by construction: binary PGM images (brighter = more
important / kept) and a CSV with header ``layer,patch_id,score,kept``.
Heatmaps are min-max scaled per map; an all-equal map renders mid-gray.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, InternalError
from .metrics import ImportanceScores
from .model import ForwardTrace
from .netpbm import encode_pgm
from .pruning import PruneDecision

CSV_HEADER = "layer,patch_id,score,kept"


@dataclass(frozen=True)
class HeatmapSpec:
    """Patch-grid geometry: g x g cells, each rendered as upscale^2 pixels."""
    grid_side: int
    upscale: int = 16

    def __post_init__(self):
        if self.grid_side < 1 or self.upscale < 1:
            raise ConfigError("grid side and upscale must be >= 1")


def _quantize(values: np.ndarray) -> np.ndarray:
    """Min-max map to 0..255; all-equal input maps to 128."""
    lo, hi = float(values.min()), float(values.max())
    if hi - lo == 0.0:
        return np.full(values.shape, 128, dtype=np.uint8)
    scaled = np.rint((values - lo) / (hi - lo) * 255.0)
    return scaled.astype(np.uint8)


def _upscale(grid: np.ndarray, factor: int) -> np.ndarray:
    return np.repeat(np.repeat(grid, factor, axis=0), factor, axis=1)


def render_heatmap(scores: ImportanceScores, patch_ids: Sequence[int],
                   spec: HeatmapSpec) -> bytes:
    """Render live-patch scores on the original grid; dead patches stay black."""
    ids = np.asarray(patch_ids, dtype=np.int64)
    if len(ids) != len(scores):
        raise ConfigError(f"{len(ids)} patch ids for {len(scores)} scores")
    cells = spec.grid_side ** 2
    if len(ids) > cells or (len(ids) and ids.max() >= cells):
        raise ConfigError(f"patch id outside {spec.grid_side}x{spec.grid_side} grid")
    canvas = np.zeros(cells, dtype=np.uint8)
    canvas[ids] = _quantize(scores.values)
    grid = canvas.reshape(spec.grid_side, spec.grid_side)
    return encode_pgm(_upscale(grid, spec.upscale))


def render_kept_mask(decisions: Sequence[PruneDecision], grid_side: int,
                     upscale: int = 16) -> list[bytes]:
    """One white-on-black mask per decision; kept sets must be nested."""
    previous: set[int] | None = None
    images = []
    for d in decisions:
        kept = set(d.kept_original_patch_ids)
        if previous is not None and not kept.issubset(previous):
            raise InternalError(
                f"layer {d.layer} kept set is not nested in the previous layer's")
        previous = kept
        canvas = np.zeros(grid_side * grid_side, dtype=np.uint8)
        ids = np.fromiter(kept, dtype=np.int64, count=len(kept))
        if len(ids) and ids.max() >= grid_side * grid_side:
            raise InternalError(f"layer {d.layer} kept a patch id outside the grid")
        canvas[ids] = 255
        images.append(encode_pgm(_upscale(canvas.reshape(grid_side, grid_side), upscale)))
    return images


def trace_csv(trace: ForwardTrace) -> str:
    """Flatten scheduled-layer scores and keep flags into CSV text.

    One row per candidate patch per scheduled layer, ordered by layer then
    original patch id. Scores print with repr-stable precision so repeated
    runs byte-match.
    """
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    for lt in trace.layers:
        if lt.decision is None or lt.scores is None:
            continue
        kept = set(lt.decision.kept_original_patch_ids)
        rows = sorted(zip(lt.decision.candidate_patch_ids, lt.scores.values),
                      key=lambda t: t[0])
        for pid, score in rows:
            out.write(f"{lt.layer},{pid},{score:.10e},{1 if pid in kept else 0}\n")
    return out.getvalue()
