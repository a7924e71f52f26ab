import json
import shutil

import numpy as np
import pytest

import colln.pruning as pruning
from colln import cli
from colln.netpbm import write_ppm


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Shared tiny weights + sample image for CLI runs."""
    root = tmp_path_factory.mktemp("cli")
    weights = root / "tiny.vitw"
    image = root / "img.ppm"
    assert cli.main(["make-tiny", "--out", str(weights),
                     "--sample-image", str(image)]) == 0
    return root, weights, image


def run(argv):
    return cli.main([str(a) for a in argv])


class TestVerifyCommand:
    def test_full_defaults_pass(self, capsys):
        # the stock configuration: 200 trials, N <= 64, norms 2/3/4
        assert run(["verify"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 4
        assert "manifest=" in out

    def test_defaults_scaled_down_pass(self, capsys):
        assert run(["verify", "--trials", "20", "--max-n", "16"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 4
        assert "manifest=" in out

    def test_norms_one_reports_skip(self, capsys):
        assert run(["verify", "--trials", "5", "--max-n", "8", "--norms", "1"]) == 0
        out = capsys.readouterr().out
        assert "SKIP entropy-norm-equivalence" in out

    def test_injected_bug_exits_one(self, tmp_path, monkeypatch, capsys):
        def bottomk(values, k):
            order = np.argsort(np.asarray(values), kind="stable")
            return np.sort(order[:k])

        monkeypatch.setattr(pruning, "topk_indices", bottomk)
        monkeypatch.chdir(tmp_path)
        assert run(["verify", "--trials", "5", "--max-n", "8",
                    "--dump", "bad.npy"]) == 1
        assert "FAIL" in capsys.readouterr().out
        assert (tmp_path / "bad.npy").exists()

    def test_bad_flag_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            run(["verify", "--no-such-flag"])
        assert exc.value.code == 2


class TestFlopsCommand:
    def test_vits_total(self, capsys):
        assert run(["flops", "--model", "vit-s16"]) == 0
        out = capsys.readouterr().out
        total = int(next(l for l in out.splitlines() if l.startswith("total_macs=")
                         ).split("=")[1])
        assert abs(total - 4.6e9) <= 0.03 * 4.6e9

    def test_vitb_scheduled(self, capsys):
        assert run(["flops", "--model", "vit-b16", "--schedule", "0,3,6",
                    "--keep-rate", "0.7"]) == 0
        out = capsys.readouterr().out
        total = int(next(l for l in out.splitlines() if l.startswith("total_macs=")
                         ).split("=")[1])
        assert abs(total - 8.8e9) <= 0.05 * 8.8e9

    def test_tiny_closed_form(self, capsys):
        assert run(["flops", "--model", "tiny"]) == 0
        out = capsys.readouterr().out
        per_block = 12 * 10 * 16 ** 2 + 2 * 100 * 16
        want = 2 * per_block + 9 * 16 * 768 + 160
        assert f"total_macs={want}" in out

    def test_figure_written(self, tmp_path, capsys):
        fig = tmp_path / "flops.png"
        assert run(["flops", "--model", "tiny", "--fig", fig]) == 0
        assert fig.stat().st_size > 0


class TestPruneCommand:
    def test_noop_schedule_matches_empty(self, workspace, tmp_path, capsys):
        _, weights, image = workspace
        a, b = tmp_path / "a", tmp_path / "b"
        assert run(["prune", "--weights", weights, "--image", image,
                    "--schedule", "", "--out-dir", a]) == 0
        assert run(["prune", "--weights", weights, "--image", image,
                    "--schedule", "0", "--keep-count", "9", "--out-dir", b]) == 0
        assert (a / "logits.txt").read_bytes() == (b / "logits.txt").read_bytes()

    def test_outputs_present(self, workspace, tmp_path, capsys):
        _, weights, image = workspace
        out = tmp_path / "run"
        assert run(["prune", "--weights", weights, "--image", image,
                    "--schedule", "0", "--keep-count", "4", "--out-dir", out]) == 0
        for name in ("logits.txt", "scores.csv", "heatmap_layer0.pgm",
                     "mask_layer0.pgm", "summary.png", "manifest.json"):
            assert (out / name).exists(), name
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["subcommand"] == "prune"
        assert manifest["config"]["keep_count"] == 4
        assert set(manifest["inputs"]) == {"weights", "image"}

    def test_determinism_byte_for_byte(self, workspace, tmp_path, capsys):
        _, weights, image = workspace
        runs = []
        for name in ("r1", "r2"):
            out = tmp_path / name
            assert run(["prune", "--weights", weights, "--image", image,
                        "--metric", "colln", "--schedule", "0,1",
                        "--keep-rate", "0.6", "--out-dir", out]) == 0
            runs.append(out)
        for fname in ("logits.txt", "scores.csv", "heatmap_layer0.pgm",
                      "mask_layer0.pgm", "manifest.json"):
            assert (runs[0] / fname).read_bytes() == (runs[1] / fname).read_bytes(), fname

    def test_metric_choice_changes_kept_sets(self, workspace, tmp_path, capsys):
        # seed-2 tiny weights produce an attention pattern on which the two
        # metrics pick disjoint-ish sets: colln {1,3,6,7} vs cls {4,5,7,8}
        _, _, image = workspace
        weights = tmp_path / "w2.vitw"
        assert run(["make-tiny", "--out", weights, "--seed", "2"]) == 0
        kept = {}
        for metric in ("colln", "cls"):
            out = tmp_path / metric
            assert run(["prune", "--weights", weights, "--image", image,
                        "--metric", metric, "--schedule", "0",
                        "--keep-count", "4", "--out-dir", out]) == 0
            rows = (out / "scores.csv").read_text().strip().splitlines()[1:]
            kept[metric] = {int(r.split(",")[1]) for r in rows
                            if r.split(",")[3] == "1"}
        assert kept["colln"] != kept["cls"]

    def test_missing_weights_exits_three(self, workspace, tmp_path, capsys):
        _, _, image = workspace
        assert run(["prune", "--weights", tmp_path / "nope.vitw",
                    "--image", image, "--out-dir", tmp_path / "x"]) == 3

    def test_bad_image_exits_three(self, workspace, tmp_path, capsys):
        _, weights, _ = workspace
        bad = tmp_path / "bad.ppm"
        bad.write_bytes(b"P6\n2 2\n255\n" + b"\x00" * 12)  # wrong resolution
        assert run(["prune", "--weights", weights, "--image", bad,
                    "--out-dir", tmp_path / "x"]) == 3

    def test_bad_schedule_exits_two(self, workspace, tmp_path, capsys):
        _, weights, image = workspace
        assert run(["prune", "--weights", weights, "--image", image,
                    "--schedule", "0,9", "--out-dir", tmp_path / "x"]) == 2


class TestCompareCommand:
    def test_report_and_summary(self, workspace, tmp_path, capsys):
        root, weights, image = workspace
        img_dir = tmp_path / "imgs"
        img_dir.mkdir()
        shutil.copy(image, img_dir / "a.ppm")
        rng = np.random.default_rng(3)
        write_ppm(img_dir / "b.ppm", (rng.random((48, 48, 3)) * 255).astype(np.uint8))
        out = tmp_path / "rep" / "report.csv"
        assert run(["compare", "--weights", weights, "--image-dir", img_dir,
                    "--metrics", "colln,cls,random,correcting",
                    "--schedules", "0;0,1", "--keep-count", "4",
                    "--out", out]) == 0
        text = out.read_text()
        header = text.splitlines()[0].split(",")
        assert header[:4] == ["image", "schedule", "metric", "layer"]
        final_rows = [l for l in text.splitlines() if ",final," in l]
        # 2 images x 2 schedules x 4 metrics
        assert len(final_rows) == 16
        colln_rows = [l for l in final_rows if ",colln," in l]
        assert all(l.split(",")[-2] == "1.0000" for l in colln_rows)
        assert (out.parent / "report_agreement.png").exists()
        table = capsys.readouterr().out
        assert "GMACs" in table

    def test_deterministic_across_thread_counts(self, workspace, tmp_path,
                                                capsys, monkeypatch):
        _, weights, image = workspace
        img_dir = tmp_path / "imgs"
        img_dir.mkdir()
        for name in ("a.ppm", "b.ppm", "c.ppm"):
            shutil.copy(image, img_dir / name)
        reports = []
        for threads in ("1", "3"):
            monkeypatch.setenv("COLLN_THREADS", threads)
            out = tmp_path / f"rep{threads}.csv"
            assert run(["compare", "--weights", weights, "--image-dir", img_dir,
                        "--schedules", "0", "--keep-count", "4", "--out", out]) == 0
            reports.append(out.read_bytes())
        assert reports[0] == reports[1]

    def test_labels_enable_accuracy(self, workspace, tmp_path, capsys):
        _, weights, image = workspace
        img_dir = tmp_path / "imgs"
        img_dir.mkdir()
        shutil.copy(image, img_dir / "a.ppm")
        labels = tmp_path / "labels.csv"
        labels.write_text("a.ppm,3\n")
        out = tmp_path / "report.csv"
        assert run(["compare", "--weights", weights, "--image-dir", img_dir,
                    "--schedules", "0", "--keep-count", "4",
                    "--labels", labels, "--out", out]) == 0
        assert "top-1 accuracy" in capsys.readouterr().out

    def test_empty_dir_exits_three(self, workspace, tmp_path, capsys):
        _, weights, _ = workspace
        empty = tmp_path / "none"
        empty.mkdir()
        assert run(["compare", "--weights", weights, "--image-dir", empty,
                    "--out", tmp_path / "r.csv"]) == 3

    def test_unknown_metric_exits_two(self, workspace, tmp_path, capsys):
        _, weights, image = workspace
        img_dir = tmp_path / "imgs"
        img_dir.mkdir()
        shutil.copy(image, img_dir / "a.ppm")
        assert run(["compare", "--weights", weights, "--image-dir", img_dir,
                    "--metrics", "colln,entropy", "--out", tmp_path / "r.csv"]) == 2


class TestMakeTiny:
    def test_deterministic_weights(self, tmp_path, capsys):
        a, b = tmp_path / "a.vitw", tmp_path / "b.vitw"
        assert run(["make-tiny", "--out", a]) == 0
        assert run(["make-tiny", "--out", b]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_sample_image_valid(self, tmp_path, capsys):
        img = tmp_path / "s.ppm"
        assert run(["make-tiny", "--out", tmp_path / "w.vitw",
                    "--sample-image", img]) == 0
        from colln.netpbm import read_ppm
        assert read_ppm(img).shape == (48, 48, 3)
