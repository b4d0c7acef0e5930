import json
import subprocess
import sys

import numpy as np
import pytest

from hsibands.cli import PALETTE, main
from hsibands.dataset import HyperCube, load_cube, load_ground_truth, read_pgm, write_cube, write_pgm
from hsibands.glcm import texture_features


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out-dir", str(out), "--width", "16", "--height", "16", "--classes", "3",
                 "--informative", "3", "--noise", "5", "--seed", "3"]) == 0
    return out


def _cube_gt(d):
    return ["--cube", str(d / "cube.hdr.json"), "--gt", str(d / "gt.pgm")]


def _listing(path):
    return sorted(p.name for p in path.iterdir()) if path.exists() else []


class TestSynth:
    def test_files_load(self, synth_dir):
        cube = load_cube(synth_dir / "cube.hdr.json")
        gt = load_ground_truth(synth_dir / "gt.pgm")
        assert cube.data.shape == (8, 16, 16) and gt.n_classes == 3
        meta = json.loads((synth_dir / "synth.json").read_text())
        assert len(meta["informative_bands"]) == 3 and len(meta["noise_bands"]) == 5
        assert not [n for n in _listing(synth_dir) if n.startswith(".")]

    def test_same_seed_same_bytes(self, synth_dir, tmp_path):
        assert main(["synth", "--out-dir", str(tmp_path), "--width", "16", "--height", "16", "--classes", "3",
                     "--informative", "3", "--noise", "5", "--seed", "3"]) == 0
        for name in ("cube.raw", "cube.hdr.json", "gt.pgm", "synth.json"):
            assert (tmp_path / name).read_bytes() == (synth_dir / name).read_bytes()

    def test_impossible_layout(self, tmp_path):
        assert main(["synth", "--out-dir", str(tmp_path / "o"), "--width", "2", "--height", "2",
                     "--classes", "9"]) == 4
        assert _listing(tmp_path / "o") == []


class TestFeatures:
    def test_rows_per_band_and_gt(self, synth_dir, tmp_path):
        out = tmp_path / "f.csv"
        assert main(["features", *_cube_gt(synth_dir), "--levels", "16", "--distance", "1", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "band,contrast,correlation,energy,homogeneity"
        assert len(lines) == 1 + 8 + 1 and lines[-1].startswith("gt,")

    def test_constant_cube(self, tmp_path):
        write_cube(HyperCube(np.full((1, 4, 4), 3.0)), tmp_path / "c.hdr.json")
        assert main(["features", "--cube", str(tmp_path / "c.hdr.json"), "--out", str(tmp_path / "f.csv")]) == 0
        assert (tmp_path / "f.csv").read_text().splitlines()[1] == "0,0,NaN,1,1"

    def test_per_direction(self, synth_dir, tmp_path):
        out = tmp_path / "f.csv"
        assert main(["features", "--cube", str(synth_dir / "cube.hdr.json"), "--aggregation", "per-direction",
                     "--directions", "0,90", "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0].startswith("band,direction,") and len(lines) == 1 + 16

    def test_missing_cube_leaves_nothing(self, tmp_path):
        out = tmp_path / "f.csv"
        assert main(["features", "--cube", str(tmp_path / "none.hdr.json"), "--out", str(out)]) == 3
        assert _listing(tmp_path) == []

    def test_bad_flags(self, tmp_path):
        assert main(["features", "--cube", "x"]) == 2
        assert main(["features", "--cube", "x", "--out", "y", "--directions", "30"]) == 2
        assert main(["nonsense"]) == 2

    def test_bad_levels_is_validation_error(self, synth_dir, tmp_path):
        assert main(["features", "--cube", str(synth_dir / "cube.hdr.json"), "--levels", "1",
                     "--out", str(tmp_path / "f.csv")]) == 4


class TestMiScan:
    def test_csv(self, synth_dir, tmp_path):
        out = tmp_path / "mi.csv"
        assert main(["mi-scan", *_cube_gt(synth_dir), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "band,mi_bits" and len(lines) == 9
        meta = json.loads((synth_dir / "synth.json").read_text())
        mi = {int(b): float(v) for b, v in (ln.split(",") for ln in lines[1:])}
        assert min(mi[b] for b in meta["informative_bands"]) > max(mi[b] for b in meta["noise_bands"])

    def test_dimension_mismatch(self, synth_dir, tmp_path):
        write_pgm(np.ones((3, 3), dtype=int), tmp_path / "g.pgm")
        assert main(["mi-scan", "--cube", str(synth_dir / "cube.hdr.json"), "--gt", str(tmp_path / "g.pgm"),
                     "--out", str(tmp_path / "mi.csv")]) == 4
        assert not (tmp_path / "mi.csv").exists()


class TestSelect:
    def test_spectral(self, synth_dir, tmp_path):
        assert main(["select", *_cube_gt(synth_dir), "--out-dir", str(tmp_path), "--algorithm", "spectral",
                     "--x", "4", "--th", "-0.01"]) == 0
        sel = json.loads((tmp_path / "selection.json").read_text())
        assert set(sel) == {"retained", "exhausted", "trace"}
        assert 1 <= len(sel["retained"]) <= 4
        assert (tmp_path / "selection.csv").read_text().startswith("step,band,score,mi_bits,accepted\n")

    def test_texture_scores_are_feature_values(self, synth_dir, tmp_path):
        assert main(["select", *_cube_gt(synth_dir), "--out-dir", str(tmp_path), "--algorithm", "texture",
                     "--feature", "homogeneity", "--ordering", "feature-argmax", "--x", "3", "--th", "-0.02"]) == 0
        sel = json.loads((tmp_path / "selection.json").read_text())
        hom = texture_features(load_cube(synth_dir / "cube.hdr.json")).column("homogeneity")
        assert [t["score"] for t in sel["trace"]] == [float(hom[t["band"]]) for t in sel["trace"]]

    def test_rerun_identical(self, synth_dir, tmp_path):
        args = ["select", *_cube_gt(synth_dir), "--x", "5", "--th", "-0.005", "--seed", "2"]
        assert main(args + ["--out-dir", str(tmp_path / "a")]) == 0
        assert main(args + ["--out-dir", str(tmp_path / "b")]) == 0
        for name in ("selection.json", "selection.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_zero_x(self, synth_dir, tmp_path):
        assert main(["select", *_cube_gt(synth_dir), "--out-dir", str(tmp_path / "o"), "--x", "0"]) == 4
        assert _listing(tmp_path / "o") == []


class TestClassify:
    def test_from_selection(self, synth_dir, tmp_path):
        assert main(["select", *_cube_gt(synth_dir), "--out-dir", str(tmp_path / "s"), "--x", "3",
                     "--th", "-0.02"]) == 0
        assert main(["classify", *_cube_gt(synth_dir), "--out-dir", str(tmp_path / "c"),
                     "--selection", str(tmp_path / "s" / "selection.json"), "--x", "2"]) == 0
        assert _listing(tmp_path / "c") == ["overall.csv", "per_class.csv", "predicted_map.pgm", "report.json"]
        per_class = (tmp_path / "c" / "per_class.csv").read_text().splitlines()
        assert per_class[0] == "class,total_pixels,accuracy_percent" and len(per_class) == 4
        pred = read_pgm(tmp_path / "c" / "predicted_map.pgm")
        gt = load_ground_truth(synth_dir / "gt.pgm")
        assert np.array_equal(pred > 0, gt.labels > 0)

    def test_explicit_bands(self, synth_dir, tmp_path):
        assert main(["classify", *_cube_gt(synth_dir), "--out-dir", str(tmp_path), "--bands", "0,1",
                     "--kernel", "rbf", "--gamma", "0.5"]) == 0
        report = json.loads((tmp_path / "report.json").read_text())
        assert 0 <= report["overall_accuracy"] <= 100

    def test_needs_bands(self, synth_dir, tmp_path):
        assert main(["classify", *_cube_gt(synth_dir), "--out-dir", str(tmp_path)]) == 2

    def test_band_out_of_range(self, synth_dir, tmp_path):
        assert main(["classify", *_cube_gt(synth_dir), "--out-dir", str(tmp_path / "o"), "--bands", "99"]) == 4
        assert _listing(tmp_path / "o") == []


class TestExperiment:
    def _run(self, synth_dir, out, *extra):
        return main(["experiment", *_cube_gt(synth_dir), "--out-dir", str(out), "--algorithm", "both",
                     "--feature", "energy", "--ordering", "feature-argmax", "--th-list", "-0.02", "0",
                     "--x-list", "2,4,8", *extra])

    def test_outputs(self, synth_dir, tmp_path):
        assert self._run(synth_dir, tmp_path, "--compare-reference") == 0
        names = _listing(tmp_path)
        for label in ("spectral", "texture-energy-feature-argmax"):
            assert f"sweep_{label}.csv" in names and f"selections_{label}.json" in names
            assert f"comparison_{label}.csv" in names
        sweep = (tmp_path / "sweep_spectral.csv").read_text().splitlines()
        assert sweep[0] == "X,-0.02,0"
        assert [ln.split(",")[0] for ln in sweep[1:]] == ["2", "4", "8"]
        assert all(len(ln.split(",")) == 3 for ln in sweep)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["spec"]["th_list"] == [-0.02, 0.0]
        assert set(manifest["versions"]) == {"hsibands", "numpy", "python"}
        assert len(manifest["inputs"]["gt_sha256"]) == 64

    def test_blank_cells_when_exhausted(self, synth_dir, tmp_path):
        assert main(["experiment", *_cube_gt(synth_dir), "--out-dir", str(tmp_path), "--algorithm", "spectral",
                     "--th-list", "5", "--x-list", "1", "3"]) == 0
        assert (tmp_path / "sweep_spectral.csv").read_text().splitlines()[2] == "3,"

    def test_byte_identical_reruns(self, synth_dir, tmp_path):
        assert self._run(synth_dir, tmp_path / "a") == 0
        assert self._run(synth_dir, tmp_path / "b") == 0
        assert _listing(tmp_path / "a") == _listing(tmp_path / "b")
        for name in _listing(tmp_path / "a"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name

    def test_config_file_and_override(self, synth_dir, tmp_path):
        cfg = {"cube": str(synth_dir / "cube.hdr.json"), "gt": str(synth_dir / "gt.pgm"),
               "algorithms": ["spectral"], "th_list": [0.0], "x_list": [2], "seed": 9}
        (tmp_path / "spec.json").write_text(json.dumps(cfg))
        out = tmp_path / "out"
        assert main(["experiment", "--config", str(tmp_path / "spec.json"), "--out-dir", str(out),
                     "--seed", "1"]) == 0
        assert json.loads((out / "manifest.json").read_text())["spec"]["seed"] == 1

    def test_missing_required(self, tmp_path):
        assert main(["experiment", "--out-dir", str(tmp_path)]) == 2

    def test_unknown_config_key(self, synth_dir, tmp_path):
        (tmp_path / "spec.json").write_text(json.dumps({"cube": "a", "gt": "b", "colour": 1}))
        assert main(["experiment", "--config", str(tmp_path / "spec.json"), "--out-dir", str(tmp_path)]) == 2

    def test_invalid_svm_params(self, synth_dir, tmp_path):
        out = tmp_path / "out"
        rc = main(["experiment", *_cube_gt(synth_dir), "--out-dir", str(out), "--algorithm", "spectral",
                   "--th-list", "0", "--x-list", "2", "--kernel", "rbf", "--gamma", "-1"])
        assert rc == 4
        assert _listing(out) == []

    def test_late_failure_leaves_no_outputs(self, synth_dir, tmp_path, monkeypatch):
        def boom(*args, **kwargs):
            raise ValueError("simulated failure after the sweep files were written")

        monkeypatch.setattr("hsibands.cli.compare_sweep", boom)
        out = tmp_path / "out"
        out.mkdir()
        (out / "keep.txt").write_text("pre-existing")
        rc = main(["experiment", *_cube_gt(synth_dir), "--out-dir", str(out), "--algorithm", "spectral",
                   "--th-list", "0", "--x-list", "2", "--compare-reference"])
        assert rc == 4
        assert _listing(out) == ["keep.txt"]


class TestRenderMap:
    def test_identity(self, synth_dir, tmp_path):
        out = tmp_path / "m.pgm"
        assert main(["render-map", "--labels", str(synth_dir / "gt.pgm"), "--out", str(out)]) == 0
        a, b = read_pgm(out), read_pgm(synth_dir / "gt.pgm")
        assert np.array_equal(np.bincount(a.ravel()), np.bincount(b.ravel()))

    def test_palette(self, tmp_path):
        write_pgm(np.array([[0, 1], [16, 2]]), tmp_path / "l.pgm", maxval=16)
        out = tmp_path / "m.ppm"
        assert main(["render-map", "--labels", str(tmp_path / "l.pgm"), "--out", str(out), "--palette"]) == 0
        data = out.read_bytes()
        header = b"P6\n2 2\n255\n"
        assert data.startswith(header)
        rgb = np.frombuffer(data[len(header):], dtype=np.uint8).reshape(4, 3)
        assert [tuple(int(v) for v in px) for px in rgb] == [PALETTE[0], PALETTE[1], PALETTE[16], PALETTE[2]]
        assert len(PALETTE) == 17 and PALETTE[0] == (0, 0, 0)

    def test_dimension_expectation(self, synth_dir, tmp_path):
        out = tmp_path / "m.pgm"
        rc = main(["render-map", "--labels", str(synth_dir / "gt.pgm"), "--out", str(out), "--expect-width", "5"])
        assert rc != 0 and not out.exists()


def test_module_entry_point(synth_dir, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "hsibands.cli", "mi-scan", *_cube_gt(synth_dir),
                           "--out", str(tmp_path / "mi.csv")], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "mi.csv").exists()
