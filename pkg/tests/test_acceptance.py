"""Acceptance gate: each test enforces one primary criterion at its stated
tolerance and prints one PASS line on success (pytest -s shows them)."""

import time

import numpy as np

from colln import cli, verify
from colln.attention import AttentionMatrix
from colln.metrics import cls_scores, colln_scores, renyi_column_entropy
from colln.model import forward, make_tiny_bundle
from colln.netpbm import decode_pgm
from colln.pruning import (KeepCount, KeepRate, PruneConfig, correcting_split,
                           keep_count, prune_colln, prune_by_scores)
from colln.flops import schedule_macs
from colln.specs import VIT_B16, VIT_L16, VIT_S16
from colln.viz import render_kept_mask

SEED = 20250810


def ok(name):
    print(f"ACCEPTANCE {name}: PASS")


def test_entropy_norm_equivalence():
    """Bottom-K by entropy == top-K by column norm: >=200 matrices,
    N in 4..64, n in {2,3,4}, every K; exact sets; under 10 s."""
    start = time.monotonic()
    result = verify.check_equivalence(trials=200, max_n=64,
                                      norms=(2.0, 3.0, 4.0), seed=SEED)
    elapsed = time.monotonic() - start
    assert result.passed, result.detail
    assert elapsed < 10.0, f"equivalence suite took {elapsed:.1f}s"
    ok(f"entropy-norm equivalence ({result.detail}, {elapsed:.1f}s)")


def test_monotone_link():
    """H_n(col j) == n/(1-n) * ln(S_j) within 1e-6 on every trial column."""
    result = verify.check_monotone_link(trials=200, max_n=64,
                                        norms=(2.0, 3.0, 4.0), seed=SEED, tol=1e-6)
    assert result.passed, result.detail
    ok(f"monotone link ({result.detail})")


def test_correcting_degeneracies():
    """c=1 == plain column-norm set, c=0 == [CLS] top-r, 100 random cases,
    plus floor split (r=100, c=0.8) -> (20, 80)."""
    assert correcting_split(100, 0.8) == (20, 80)
    result = verify.check_correcting_degenerate(cases=100, max_n=64, seed=SEED)
    assert result.passed, result.detail
    ok(f"correcting degeneracies ({result.detail})")


def test_flops_reproduction():
    """Unpruned 4.6 / 17.6 / 61.6 GMACs within 3%; scheduled keep-rate-0.7
    points 2.3 / 3.0 (ViT-S) and 8.8 (ViT-B) within 5%; under 1 s."""
    start = time.monotonic()
    cases = [
        (VIT_S16, (), 4.6e9, 0.03),
        (VIT_B16, (), 17.6e9, 0.03),
        (VIT_L16, (), 61.6e9, 0.03),
        (VIT_S16, (0, 3, 6), 2.3e9, 0.05),
        (VIT_S16, (3, 6, 9), 3.0e9, 0.05),
        (VIT_B16, (0, 3, 6), 8.8e9, 0.05),
    ]
    for spec, schedule, target, tol in cases:
        cfg = PruneConfig(keep_rule=KeepRate(0.7), schedule=schedule)
        got = schedule_macs(spec, cfg).total_macs
        assert abs(got - target) <= tol * target, (spec.dim, schedule, got, target)
    elapsed = time.monotonic() - start
    assert elapsed < 1.0, f"flops accounting took {elapsed:.2f}s"
    ok(f"flops reproduction (6 table points, {elapsed * 1e3:.0f}ms)")


def test_noop_soundness():
    """Tiny forward with r=N pruning at layer 0 is bitwise equal to unpruned."""
    bundle = make_tiny_bundle()
    image = np.random.default_rng(11).random((48, 48, 3)).astype(np.float32)
    base = forward(image, bundle, PruneConfig(schedule=()))
    noop = forward(image, bundle, PruneConfig(schedule=(0,), keep_rule=KeepCount(9)))
    assert base.logits.tobytes() == noop.logits.tobytes()
    ok("no-op soundness (bitwise logits)")


def test_shape_and_trace_invariants():
    """Counts non-increasing; kept sets nested in masks; scheduled layers
    keep exactly r+1 tokens; [CLS] always at index 0."""
    bundle = make_tiny_bundle()
    image = np.random.default_rng(12).random((48, 48, 3)).astype(np.float32)
    cfg = PruneConfig(schedule=(0, 1), keep_rule=KeepRate(0.6))
    trace = forward(image, bundle, cfg, trace_level="decisions")

    counts = [trace.layers[0].tokens_before] + [t.tokens_after for t in trace.layers]
    assert all(b <= a for a, b in zip(counts, counts[1:]))

    for lt in trace.layers:
        if lt.decision is None:
            continue
        r = keep_count(cfg.keep_rule, lt.tokens_before - 1)
        assert lt.tokens_after == r + 1
        assert 0 not in lt.decision.kept_patch_positions  # [CLS] implicit, never listed

    masks = render_kept_mask(trace.decisions, bundle.spec.grid_side, upscale=1)
    kept_sets = [set(np.flatnonzero(decode_pgm(b).reshape(-1) == 255)) for b in masks]
    for earlier, later in zip(kept_sets, kept_sets[1:]):
        assert later <= earlier
    ok("shape/trace invariants")


def test_cmd_prune_determinism(tmp_path, capsys):
    """Two identical cmd_prune runs produce byte-identical CSV, PGM and logits."""
    weights = tmp_path / "tiny.vitw"
    image = tmp_path / "img.ppm"
    assert cli.main(["make-tiny", "--out", str(weights),
                     "--sample-image", str(image)]) == 0
    dirs = []
    for name in ("one", "two"):
        out = tmp_path / name
        argv = ["prune", "--weights", str(weights), "--image", str(image),
                "--metric", "colln", "--schedule", "0,1", "--keep-rate", "0.7",
                "--out-dir", str(out)]
        assert cli.main(argv) == 0
        dirs.append(out)
    compared = 0
    for fname in sorted(p.name for p in dirs[0].iterdir()):
        if fname.endswith((".csv", ".pgm", ".txt")):
            assert (dirs[0] / fname).read_bytes() == (dirs[1] / fname).read_bytes(), fname
            compared += 1
    assert compared >= 6  # logits + csv + 2 heatmaps + 2 masks
    capsys.readouterr()
    ok(f"cmd_prune determinism ({compared} byte-identical files)")


# [CLS] row favors the background patch (index 4) while patch 1 carries the
# collective consensus; column 4 has the lowest l2 norm. Verified below
# against the entropy oracle before any assertion uses it.
GOLDEN = np.array([
    [0.22, 0.18, 0.18, 0.18, 0.24],
    [0.04, 0.60, 0.18, 0.16, 0.02],
    [0.04, 0.60, 0.18, 0.16, 0.02],
    [0.04, 0.60, 0.18, 0.16, 0.02],
    [0.04, 0.60, 0.18, 0.16, 0.02],
], dtype=np.float32)


def test_golden_fixture_metric_disagreement():
    """Early-layer failure mode: the [CLS] row promotes a background patch
    that the column norm (and the entropy oracle) rank dead last."""
    a = AttentionMatrix(GOLDEN)

    entropies = np.array([renyi_column_entropy(a, j, 2.0) for j in range(1, 5)])
    norms = colln_scores(a, 2.0).values
    assert int(np.argmin(entropies)) == 0          # patch 1: strong consensus
    assert int(np.argmax(entropies)) == 3          # patch 4: background
    assert int(np.argmax(norms)) == 0
    assert int(np.argmin(norms)) == 3

    by_cls = cls_scores(a)
    assert int(np.argmax(by_cls.values)) == 3      # [CLS] promotes the background

    seq_emb = np.zeros((5, 4), dtype=np.float32)
    from colln.attention import TokenSequence
    seq = TokenSequence(seq_emb)
    _, colln_keep = prune_colln(seq, a, r=1, n=2.0)
    _, cls_keep = prune_by_scores(seq, by_cls, r=1)
    assert colln_keep.kept_patch_positions == (1,)
    assert cls_keep.kept_patch_positions == (4,)
    assert colln_keep.kept_patch_positions != cls_keep.kept_patch_positions
    ok("golden fixture (colln keeps the consensus patch, cls does not)")
