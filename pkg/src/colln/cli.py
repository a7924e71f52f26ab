"""Operator CLI: verification, FLOPs reports, pruned inference, comparison runs.

Exit codes: 0 ok, 1 property failure, 2 configuration error, 3 I/O or
format error. Every run prints a `manifest=` key-value line with the fully
resolved configuration and input hashes; artifact-producing runs also write
manifest.json next to their outputs. Identical manifests reproduce outputs
byte-for-byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, figures, verify, viz
from .errors import (CollnError, ConfigError, ImageFormatError,
                     VerificationError, WeightFormatError)
from .flops import render_report, schedule_macs
from .metrics import Metric
from .model import TINY_SEED, forward, make_tiny_bundle
from .netpbm import read_ppm, write_ppm
from .pruning import KeepCount, KeepRate, PruneConfig, PruneCount
from .specs import preset
from .viz import HeatmapSpec
from .weights_io import load_bundle, write_bundle

EXIT_OK = 0
EXIT_PROPERTY = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _emit_manifest(subcommand: str, config: dict, inputs: dict, outputs: list[str],
                   out_dir: Path | None = None) -> None:
    manifest = {
        "subcommand": subcommand,
        "engine_version": __version__,
        "config": config,
        "inputs": inputs,
        "outputs": sorted(outputs),
    }
    text = json.dumps(manifest, sort_keys=True, separators=(",", ":"))
    print(f"manifest={text}")
    if out_dir is not None:
        (out_dir / "manifest.json").write_text(
            json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def _parse_schedule(text: str) -> tuple[int, ...]:
    text = text.strip()
    if not text:
        return ()
    try:
        return tuple(int(tok) for tok in text.split(","))
    except ValueError:
        raise ConfigError(f"bad schedule '{text}' (want comma-separated layer indices)")


def _keep_rule(args) -> tuple:
    given = [name for name in ("keep_rate", "keep_count", "prune_count")
             if getattr(args, name) is not None]
    if len(given) > 1:
        raise ConfigError("give at most one of --keep-rate / --keep-count / --prune-count")
    if args.keep_count is not None:
        return KeepCount(args.keep_count), {"keep_count": args.keep_count}
    if args.prune_count is not None:
        return PruneCount(args.prune_count), {"prune_count": args.prune_count}
    rate = 0.7 if args.keep_rate is None else args.keep_rate
    return KeepRate(rate), {"keep_rate": rate}


def _prune_config(args) -> tuple[PruneConfig, dict]:
    rule, rule_desc = _keep_rule(args)
    cfg = PruneConfig(
        metric=Metric(args.metric),
        norm_order=args.n,
        keep_rule=rule,
        rescue_ratio=args.rescue_ratio,
        schedule=_parse_schedule(args.schedule),
        seed=args.seed,
        correcting=args.correcting,
    )
    desc = {
        "metric": args.metric,
        "norm_order": args.n,
        "rescue_ratio": args.rescue_ratio,
        "correcting": args.correcting,
        "schedule": list(cfg.schedule),
        "seed": args.seed,
        **rule_desc,
    }
    return cfg, desc


def _add_schedule_flags(p: argparse.ArgumentParser):
    p.add_argument("--schedule", default="",
                   help="comma-separated layer indices where pruning fires")
    p.add_argument("--keep-rate", type=float, default=None,
                   help="fraction of patches kept per scheduled layer (default 0.7)")
    p.add_argument("--keep-count", type=int, default=None,
                   help="absolute number of patches kept per scheduled layer")
    p.add_argument("--prune-count", type=int, default=None,
                   help="absolute number of patches removed per scheduled layer")


def _add_metric_flags(p: argparse.ArgumentParser):
    p.add_argument("--n", type=float, default=2.0, help="column-norm order (default 2)")
    p.add_argument("--rescue-ratio", type=float, default=0.8,
                   help="correcting budget share for the column-norm metric (default 0.8)")
    p.add_argument("--seed", type=int, default=0, help="seed for the random baseline")


def cmd_verify(args) -> int:
    norms = tuple(float(tok) for tok in args.norms.split(","))
    results = verify.run_all(trials=args.trials, max_n=args.max_n,
                             norms=norms, seed=args.seed)
    failed = False
    for res in results:
        print(f"{res.status:4s} {res.name}: {res.detail}")
        if not res.passed and res.counterexample is not None:
            np.save(args.dump, res.counterexample)
            print(f"     counterexample matrix written to {args.dump}")
        failed = failed or not res.passed
    _emit_manifest("verify", {"trials": args.trials, "max_n": args.max_n,
                              "norms": list(norms), "seed": args.seed}, {}, [])
    return EXIT_PROPERTY if failed else EXIT_OK


def cmd_flops(args) -> int:
    spec = preset(args.model)
    rule, rule_desc = _keep_rule(args)
    cfg = PruneConfig(keep_rule=rule, schedule=_parse_schedule(args.schedule))
    report = schedule_macs(spec, cfg)
    print(render_report(report))
    outputs = []
    if args.fig:
        figures.flops_figure(report, args.fig)
        outputs.append(args.fig)
    _emit_manifest("flops", {"model": args.model, "schedule": list(cfg.schedule),
                             **rule_desc}, {}, outputs)
    return EXIT_OK


def _load_image(path) -> np.ndarray:
    return read_ppm(path).astype(np.float32) / np.float32(255.0)


def _write_logits(path: Path, logits: np.ndarray) -> None:
    top = np.argsort(-logits, kind="stable")[:5]
    lines = [f"{int(i)}\t{logits[i]:.8e}" for i in top]
    path.write_text("\n".join(lines) + "\n")
    for line in lines:
        print(line)


def cmd_prune(args) -> int:
    cfg, desc = _prune_config(args)  # flag validation before any file I/O
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle = load_bundle(args.weights)
    image = _load_image(args.image)

    trace = forward(image, bundle, cfg, trace_level=args.trace)
    outputs = ["logits.txt"]
    _write_logits(out_dir / "logits.txt", trace.logits)

    if args.trace != "none":
        (out_dir / "scores.csv").write_text(viz.trace_csv(trace))
        outputs.append("scores.csv")
        hspec = HeatmapSpec(bundle.spec.grid_side, upscale=args.upscale)
        decisions = trace.decisions
        masks = viz.render_kept_mask(decisions, bundle.spec.grid_side, upscale=args.upscale)
        for decision, mask in zip(decisions, masks):
            heat = viz.render_heatmap(decision.scores_snapshot,
                                      decision.candidate_patch_ids, hspec)
            for name, blob in ((f"heatmap_layer{decision.layer}.pgm", heat),
                               (f"mask_layer{decision.layer}.pgm", mask)):
                (out_dir / name).write_bytes(blob)
                outputs.append(name)
        figures.prune_summary_figure(trace, bundle.spec.grid_side, out_dir / "summary.png")
        if (out_dir / "summary.png").exists():
            outputs.append("summary.png")

    inputs = {"weights": _sha256(args.weights), "image": _sha256(args.image)}
    _emit_manifest("prune", {**desc, "trace": args.trace, "upscale": args.upscale},
                   inputs, outputs, out_dir)
    return EXIT_OK


def _final_kept(trace) -> frozenset:
    decisions = trace.decisions
    if not decisions:
        return frozenset()
    return frozenset(decisions[-1].kept_original_patch_ids)


def _jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def _compare_one(image_path: Path, bundle, schedules, metrics_requested, args):
    """All (schedule, metric) traces for one image; returns detail rows."""
    image = _load_image(image_path)
    rows = []
    for sched_text in schedules:
        per_metric = {}
        for token in metrics_requested:
            cfg = PruneConfig(
                metric=Metric.COLLN if token == "correcting" else Metric(token),
                norm_order=args.n,
                keep_rule=_keep_rule(args)[0],
                rescue_ratio=args.rescue_ratio,
                schedule=_parse_schedule(sched_text),
                seed=args.seed,
                correcting=(token == "correcting"),
            )
            per_metric[token] = forward(image, bundle, cfg, trace_level="decisions")
        base = _final_kept(per_metric.get("colln", next(iter(per_metric.values()))))
        for token, trace in per_metric.items():
            final = _final_kept(trace)
            for lt in trace.layers:
                if lt.decision is None:
                    continue
                vals = lt.scores.values
                rows.append({
                    "image": image_path.name, "schedule": sched_text or "-",
                    "metric": token, "layer": lt.layer,
                    "kept": len(lt.decision.kept_original_patch_ids),
                    "candidates": len(lt.decision.candidate_patch_ids),
                    "score_mean": f"{vals.mean():.6e}",
                    "score_min": f"{vals.min():.6e}",
                    "score_max": f"{vals.max():.6e}",
                    "overlap_vs_colln": "", "argmax": "",
                })
            rows.append({
                "image": image_path.name, "schedule": sched_text or "-",
                "metric": token, "layer": "final",
                "kept": len(final), "candidates": "",
                "score_mean": "", "score_min": "", "score_max": "",
                "overlap_vs_colln": f"{_jaccard(final, base):.4f}",
                "argmax": int(np.argmax(trace.logits)),
            })
    return rows


COMPARE_COLUMNS = ("image", "schedule", "metric", "layer", "kept", "candidates",
                   "score_mean", "score_min", "score_max", "overlap_vs_colln", "argmax")


def cmd_compare(args) -> int:
    bundle = load_bundle(args.weights)
    image_dir = Path(args.image_dir)
    images = sorted(image_dir.glob("*.ppm"))
    if not images:
        raise ImageFormatError(f"no .ppm images in '{image_dir}'")
    metrics_requested = [tok.strip() for tok in args.metrics.split(",") if tok.strip()]
    for tok in metrics_requested:
        if tok not in ("colln", "cls", "random", "correcting"):
            raise ConfigError(f"unknown metric '{tok}'")
    schedules = [s.strip() for s in args.schedules.split(";")]

    labels = _read_labels(args.labels) if args.labels else None

    workers = int(os.environ.get("COLLN_THREADS", "0")) or min(4, os.cpu_count() or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        per_image = list(pool.map(
            lambda p: _compare_one(p, bundle, schedules, metrics_requested, args), images))

    rows = [row for rows_ in per_image for row in rows_]
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        fh.write(",".join(COMPARE_COLUMNS) + "\n")
        for row in rows:
            fh.write(",".join(str(row[c]) for c in COMPARE_COLUMNS) + "\n")

    summary = _summarize(rows, bundle.spec, args, schedules, metrics_requested, labels)
    _print_summary_table(summary, metrics_requested, labels is not None)
    fig_path = out.with_name(out.stem + "_agreement.png")
    figures.compare_figure(summary, fig_path)

    inputs = {"weights": _sha256(args.weights)}
    inputs.update({p.name: _sha256(p) for p in images})
    outputs = [str(out), str(fig_path)]
    _emit_manifest("compare", {"metrics": metrics_requested, "schedules": schedules,
                               **_prune_config_desc_for_compare(args)}, inputs, outputs)
    return EXIT_OK


def _prune_config_desc_for_compare(args) -> dict:
    _, rule_desc = _keep_rule(args)
    return {"norm_order": args.n, "rescue_ratio": args.rescue_ratio,
            "seed": args.seed, **rule_desc}


def _read_labels(path) -> dict[str, int]:
    labels = {}
    try:
        for line in Path(path).read_text().splitlines():
            if not line.strip() or line.startswith("image,"):
                continue
            name, value = line.rsplit(",", 1)
            labels[name.strip()] = int(value)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"bad labels file '{path}': {exc}")
    return labels


def _summarize(rows, spec, args, schedules, metrics_requested, labels):
    summary = []
    for sched_text in schedules:
        cfg = PruneConfig(keep_rule=_keep_rule(args)[0], schedule=_parse_schedule(sched_text))
        entry = {"schedule": sched_text or "-",
                 "gmacs": schedule_macs(spec, cfg).gmacs}
        for token in metrics_requested:
            finals = [r for r in rows
                      if r["schedule"] == (sched_text or "-")
                      and r["metric"] == token and r["layer"] == "final"]
            if finals:
                entry[f"overlap_{token}"] = float(np.mean(
                    [float(r["overlap_vs_colln"]) for r in finals]))
                if labels is not None:
                    hits = [1 if labels.get(r["image"]) == r["argmax"] else 0 for r in finals]
                    entry[f"acc_{token}"] = float(np.mean(hits))
        summary.append(entry)
    return summary


def _print_summary_table(summary, metrics_requested, have_labels: bool) -> None:
    value_key = "acc_" if have_labels else "overlap_"
    label = "top-1 accuracy" if have_labels else "final kept-set overlap vs colln"
    header = f"{'schedule':>12}  " + "".join(f"{m:>12}  " for m in metrics_requested) + f"{'GMACs':>8}"
    print(f"[{label}]")
    print(header)
    for entry in summary:
        cells = "".join(f"{entry.get(value_key + m, float('nan')):>12.4f}  "
                        for m in metrics_requested)
        print(f"{entry['schedule']:>12}  {cells}{entry['gmacs']:>8.2f}")


def cmd_make_tiny(args) -> int:
    bundle = make_tiny_bundle(seed=args.seed)
    write_bundle(bundle, args.out)
    print(f"tiny bundle ({len(bundle.tensors)} tensors) -> {args.out}")
    outputs = [args.out]
    if args.sample_image:
        write_ppm(args.sample_image, _sample_image(bundle.spec.image_size))
        print(f"sample image -> {args.sample_image}")
        outputs.append(args.sample_image)
    _emit_manifest("make-tiny", {"seed": args.seed}, {}, outputs)
    return EXIT_OK


def _sample_image(size: int) -> np.ndarray:
    """Deterministic gradient + bright blob so pruning decisions are nontrivial."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    blob = np.exp(-(((yy - size / 3) ** 2 + (xx - size / 2) ** 2) / (size * 2.0)))
    r = xx / (size - 1)
    g = yy / (size - 1)
    b = blob
    img = np.stack([r * 0.4 + blob * 0.6, g * 0.4 + blob * 0.6, b], axis=-1)
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="colln",
        description="Token-pruning ViT inference engine (column-norm importance metric)")
    parser.add_argument("--version", action="version", version=f"colln {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the mathematical property suite")
    p.add_argument("--trials", type=int, default=verify.DEFAULT_TRIALS)
    p.add_argument("--max-n", type=int, default=verify.DEFAULT_MAX_N,
                   help="largest random patch count")
    p.add_argument("--norms", default="2,3,4", help="comma-separated norm orders")
    p.add_argument("--seed", type=int, default=verify.DEFAULT_SEED)
    p.add_argument("--dump", default="colln_verify_counterexample.npy",
                   help="where to write a failing matrix")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("flops", help="analytic MAC accounting for a schedule")
    p.add_argument("--model", required=True, choices=("vit-s16", "vit-b16", "vit-l16", "tiny"))
    p.add_argument("--fig", default=None, help="optional figure output path (png)")
    _add_schedule_flags(p)
    p.set_defaults(fn=cmd_flops)

    p = sub.add_parser("prune", help="pruned forward pass over one image")
    p.add_argument("--weights", required=True, help="VITW weight file")
    p.add_argument("--image", required=True, help="binary PPM (P6) at model resolution")
    p.add_argument("--metric", choices=("colln", "cls", "random"), default="colln",
                   help="importance metric driving token selection")
    p.add_argument("--correcting", action="store_true",
                   help="use the budget-split correcting selector (column-norm metric)")
    p.add_argument("--trace", choices=("none", "decisions", "full"), default="decisions",
                   help="per-layer trace detail (default decisions)")
    p.add_argument("--out-dir", required=True,
                   help="directory for logits/CSV/PGM/figure/manifest outputs")
    p.add_argument("--upscale", type=int, default=16, help="PGM cell size in pixels")
    _add_schedule_flags(p)
    _add_metric_flags(p)
    p.set_defaults(fn=cmd_prune)

    p = sub.add_parser("compare", help="kept-set agreement across metrics")
    p.add_argument("--weights", required=True, help="VITW weight file")
    p.add_argument("--image-dir", required=True, help="directory of .ppm images")
    p.add_argument("--metrics", default="colln,cls,random",
                   help="comma list from: colln, cls, random, correcting")
    p.add_argument("--schedules", default="0,3,6;3,6,9",
                   help="semicolon-separated schedules")
    p.add_argument("--labels", default=None,
                   help="optional CSV 'image,class' enabling accuracy columns")
    p.add_argument("--out", required=True, help="detail CSV output path")
    _add_schedule_flags(p)
    _add_metric_flags(p)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("make-tiny", help="write the in-tree tiny preset weights")
    p.add_argument("--out", required=True, help="output .vitw path")
    p.add_argument("--seed", type=int, default=TINY_SEED,
                   help="weight-initialization seed (fixed default for CI)")
    p.add_argument("--sample-image", default=None,
                   help="also write a deterministic sample PPM")
    p.set_defaults(fn=cmd_make_tiny)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except VerificationError as exc:
        print(f"property failure: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (WeightFormatError, ImageFormatError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except CollnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PROPERTY


if __name__ == "__main__":
    sys.exit(main())
