import json

import numpy as np
import pytest

from aquaclear import cli, imageio, metrics, network
from aquaclear import degradation as D
from aquaclear import weights_io
from aquaclear.tensor_ops import ConvKernel


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def write_random_images(directory, count, seed, size=24, ext=".png"):
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(count):
        hwc = rng.integers(0, 256, (size, size, 3), dtype=np.uint8)
        path = directory / f"img_{i:03d}{ext}"
        imageio.write_rgb_u8(path, hwc)
        paths.append(path)
    return paths


def randomized_head_weights(tmp_path, seed=0):
    w = network.default_network(seed=seed)
    rng = np.random.default_rng(seed + 1)
    k = w.kernels["head"]
    w.kernels["head"] = ConvKernel(
        (0.1 * rng.standard_normal(k.weights.shape)).astype(np.float32),
        np.zeros_like(k.bias))
    path = tmp_path / "random_head.fanw"
    weights_io.save_weights(w, path)
    return path


class TestEnhance:
    def test_zero_head_identity_after_8bit(self, tmp_path, capsys):
        inputs = write_random_images(tmp_path / "in", 3, seed=0)
        out_dir = tmp_path / "out"
        assert run_cli("enhance", *inputs, "--output-dir", out_dir) == 0
        capsys.readouterr()
        for path in inputs:
            assert np.array_equal(imageio.read_rgb_u8(out_dir / path.name),
                                  imageio.read_rgb_u8(path))

    def test_alpha_override_changes_output(self, tmp_path, capsys):
        inputs = write_random_images(tmp_path / "in", 1, seed=1)
        wpath = randomized_head_weights(tmp_path)
        out0 = tmp_path / "a0"
        out4 = tmp_path / "a4"
        assert run_cli("enhance", inputs[0], "--weights", wpath,
                       "--alpha", "0.0", "--output-dir", out0) == 0
        assert run_cli("enhance", inputs[0], "--weights", wpath,
                       "--alpha", "0.4", "--output-dir", out4) == 0
        capsys.readouterr()
        a = imageio.read_rgb_u8(out0 / inputs[0].name)
        b = imageio.read_rgb_u8(out4 / inputs[0].name)
        assert not np.array_equal(a, b)

    def test_odd_sized_image(self, tmp_path, capsys):
        path = tmp_path / "odd.png"
        rng = np.random.default_rng(2)
        imageio.write_rgb_u8(path, rng.integers(0, 256, (17, 23, 3), dtype=np.uint8))
        assert run_cli("enhance", path, "--output-dir", tmp_path / "out") == 0
        capsys.readouterr()
        assert imageio.read_rgb_u8(tmp_path / "out" / "odd.png").shape == (17, 23, 3)

    def test_ppm_in_and_out(self, tmp_path, capsys):
        inputs = write_random_images(tmp_path / "in", 1, seed=3, ext=".ppm")
        assert run_cli("enhance", inputs[0], "--output-dir", tmp_path / "out") == 0
        capsys.readouterr()
        assert (tmp_path / "out" / inputs[0].name).exists()

    def test_batch_continues_after_error(self, tmp_path, capsys):
        good = write_random_images(tmp_path / "in", 1, seed=4)[0]
        bad = tmp_path / "in" / "broken.png"
        bad.write_bytes(b"nope")
        code = run_cli("enhance", bad, good, "--output-dir", tmp_path / "out")
        captured = capsys.readouterr()
        assert code == 1
        assert "broken.png" in captured.err
        assert (tmp_path / "out" / good.name).exists()

    def test_strict_stops_at_first_error(self, tmp_path, capsys):
        bad = tmp_path / "in" / "broken.png"
        bad.parent.mkdir(parents=True)
        bad.write_bytes(b"nope")
        good = write_random_images(tmp_path / "in2", 1, seed=5)[0]
        code = run_cli("enhance", bad, good, "--output-dir", tmp_path / "out",
                       "--strict")
        capsys.readouterr()
        assert code == 1
        assert not (tmp_path / "out" / good.name).exists()

    def test_threads_give_identical_outputs(self, tmp_path, capsys):
        inputs = write_random_images(tmp_path / "in", 4, seed=6)
        wpath = randomized_head_weights(tmp_path, seed=7)
        assert run_cli("enhance", *inputs, "--weights", wpath,
                       "--output-dir", tmp_path / "seq", "--threads", "1") == 0
        assert run_cli("enhance", *inputs, "--weights", wpath,
                       "--output-dir", tmp_path / "par", "--threads", "2") == 0
        capsys.readouterr()
        for path in inputs:
            assert np.array_equal(imageio.read_rgb_u8(tmp_path / "seq" / path.name),
                                  imageio.read_rgb_u8(tmp_path / "par" / path.name))

    def test_json_output(self, tmp_path, capsys):
        inputs = write_random_images(tmp_path / "in", 1, seed=8)
        assert run_cli("enhance", inputs[0], "--output-dir", tmp_path / "out",
                       "--json") == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["errors"] == []
        assert len(payload["enhanced"]) == 1


class TestMetrics:
    def test_same_dirs_hit_caps(self, tmp_path, capsys):
        write_random_images(tmp_path / "imgs", 2, seed=9)
        assert run_cli("metrics", "--test", tmp_path / "imgs",
                       "--ref", tmp_path / "imgs") == 0
        report = json.loads(capsys.readouterr().out)
        assert all(s["psnr"] == 100.0 for s in report["per_image"])
        assert all(s["ssim"] == 1.0 for s in report["per_image"])

    def test_degraded_set_matches_library_baseline(self, tmp_path, capsys):
        assert run_cli("degrade", "--out", tmp_path / "data", "--count", "3",
                       "--size", "32", "--seed", "11") == 0
        capsys.readouterr()
        assert run_cli("metrics", "--test", tmp_path / "data" / "degraded",
                       "--ref", tmp_path / "data" / "clean") == 0
        report = json.loads(capsys.readouterr().out)
        # Library-side baseline over the same (quantized) files.
        scores = []
        for name in sorted(p.name for p in (tmp_path / "data" / "clean").iterdir()):
            ref = imageio.load_tensor(tmp_path / "data" / "clean" / name, np.float64)
            test = imageio.load_tensor(tmp_path / "data" / "degraded" / name,
                                       np.float64)
            scores.append(metrics.psnr(ref[0], test[0]))
        assert np.isclose(report["aggregates"]["psnr"]["mean"], np.mean(scores))

    def test_missing_counterpart_skipped(self, tmp_path, capsys):
        write_random_images(tmp_path / "test", 2, seed=12)
        write_random_images(tmp_path / "ref", 1, seed=12)
        assert run_cli("metrics", "--test", tmp_path / "test",
                       "--ref", tmp_path / "ref") == 0
        report = json.loads(capsys.readouterr().out)
        assert len(report["skipped"]) == 1

    def test_strict_missing_counterpart_fails(self, tmp_path, capsys):
        write_random_images(tmp_path / "test", 2, seed=13)
        write_random_images(tmp_path / "ref", 1, seed=13)
        assert run_cli("metrics", "--test", tmp_path / "test",
                       "--ref", tmp_path / "ref", "--strict") == 1
        capsys.readouterr()

    def test_empty_test_dir_warns_exit_zero(self, tmp_path, capsys):
        (tmp_path / "empty").mkdir()
        assert run_cli("metrics", "--test", tmp_path / "empty") == 0
        captured = capsys.readouterr()
        assert "warning" in captured.err
        assert json.loads(captured.out)["per_image"] == []

    def test_no_reference_mode(self, tmp_path, capsys):
        write_random_images(tmp_path / "only", 2, seed=14, size=32)
        assert run_cli("metrics", "--test", tmp_path / "only") == 0
        report = json.loads(capsys.readouterr().out)
        for s in report["per_image"]:
            assert "uciqe" in s and "uiqm" in s and "psnr" not in s


class TestDegradeCmd:
    def test_same_seed_identical_trees(self, tmp_path, capsys):
        for d in ("a", "b"):
            assert run_cli("degrade", "--out", tmp_path / d, "--count", "2",
                           "--size", "32", "--seed", "7") == 0
        capsys.readouterr()
        for sub in ("clean", "degraded"):
            for name in sorted(p.name for p in (tmp_path / "a" / sub).iterdir()):
                a = (tmp_path / "a" / sub / name).read_bytes()
                b = (tmp_path / "b" / sub / name).read_bytes()
                assert a == b

    def test_manifest_records_params(self, tmp_path, capsys):
        assert run_cli("degrade", "--out", tmp_path / "d", "--count", "1",
                       "--size", "32", "--seed", "3", "--depth-mode",
                       "vertical-ramp") == 0
        capsys.readouterr()
        manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
        assert manifest["params"]["depth_mode"] == "vertical-ramp"
        assert manifest["seed"] == 3

    def test_ppm_format(self, tmp_path, capsys):
        assert run_cli("degrade", "--out", tmp_path / "d", "--count", "1",
                       "--size", "32", "--format", "ppm") == 0
        capsys.readouterr()
        assert (tmp_path / "d" / "clean" / "pair_0000.ppm").exists()


class TestTrainCmd:
    def test_zero_steps_writes_initial_weights(self, tmp_path, capsys):
        out = tmp_path / "init.fanw"
        assert run_cli("train", "--out", out, "--steps", "0", "--pairs", "2",
                       "--size", "32", "--crop", "32", "--holdout", "0",
                       "--batch-size", "2") == 0
        capsys.readouterr()
        loaded = weights_io.load_weights(out)
        assert network.count_params(loaded) == 8780

    def test_short_run_logs_and_reports(self, tmp_path, capsys):
        out = tmp_path / "w.fanw"
        log = tmp_path / "log.jsonl"
        assert run_cli("train", "--out", out, "--steps", "3", "--pairs", "2",
                       "--size", "32", "--crop", "32", "--batch-size", "2",
                       "--holdout", "1", "--log", log, "--json") == 0
        summary = json.loads(capsys.readouterr().out)
        assert "psnr_gain" in summary
        lines = [json.loads(line) for line in log.read_text().splitlines()]
        assert [l["step"] for l in lines[:3]] == [0, 1, 2]
        assert lines[-1]["event"] == "final"

    def test_train_from_image_dirs(self, tmp_path, capsys):
        assert run_cli("degrade", "--out", tmp_path / "data", "--count", "2",
                       "--size", "32") == 0
        capsys.readouterr()
        out = tmp_path / "w.fanw"
        assert run_cli("train", "--out", out, "--steps", "2",
                       "--clean-dir", tmp_path / "data" / "clean",
                       "--degraded-dir", tmp_path / "data" / "degraded",
                       "--crop", "32", "--batch-size", "2") == 0
        capsys.readouterr()
        assert out.exists()

    def test_mismatched_dir_flags(self, tmp_path, capsys):
        assert run_cli("train", "--out", tmp_path / "w.fanw",
                       "--clean-dir", tmp_path) == 1
        capsys.readouterr()


class TestBenchCmd:
    def test_small_run_reports(self, capsys):
        assert run_cli("bench", "--height", "48", "--width", "64",
                       "--iters", "10", "--warmup", "3", "--json") == 0
        report = json.loads(capsys.readouterr().out)
        assert report["fps"] > 0
        assert report["iters"] == 10
        assert len(report["seconds"]) == 3
        assert report["params"] == 8780

    def test_gflops_matches_analytic(self, capsys, default_net):
        assert run_cli("bench", "--height", "48", "--width", "64",
                       "--iters", "10", "--warmup", "3", "--json") == 0
        report = json.loads(capsys.readouterr().out)
        analytic = network.count_gflops(default_net, 48, 64)
        assert abs(report["gflops"] - analytic) / analytic < 0.1

    def test_iters_minimum_enforced(self, capsys):
        assert run_cli("bench", "--iters", "5") == 2
        capsys.readouterr()

    def test_warmup_minimum_enforced(self, capsys):
        assert run_cli("bench", "--iters", "10", "--warmup", "1") == 2
        capsys.readouterr()


class TestParamsCmd:
    def test_text_and_budget(self, capsys):
        assert run_cli("params") == 0
        out = capsys.readouterr().out
        assert "total" in out and "8780" in out

    def test_json_round_trips(self, capsys):
        assert run_cli("params", "--json") == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["total"] == sum(payload["blocks"].values())
        assert payload["within_budget"] is True

    def test_enforce_budget_passes_default(self, capsys):
        assert run_cli("params", "--enforce-budget") == 0
        capsys.readouterr()

    def test_bad_weight_file_is_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.fanw"
        bad.write_bytes(b"garbage")
        assert run_cli("params", "--weights", bad) == 1
        assert "weight" in capsys.readouterr().err


@pytest.mark.slow
class TestDeskScaleCli:
    def test_train_default_desk_config_reports_gain(self, tmp_path, capsys):
        out = tmp_path / "desk.fanw"
        log = tmp_path / "desk.jsonl"
        code = run_cli("train", "--out", out, "--seed", "42", "--log", log,
                       "--json")
        summary = json.loads(capsys.readouterr().out)
        assert code == 0
        assert summary["psnr_gain"] >= 3.0
        final = json.loads(log.read_text().splitlines()[-1])
        assert final["event"] == "final" and final["psnr_gain"] >= 3.0
