import io
import json

import numpy as np
import pytest
from PIL import Image

from conftest import two_constant
from softms import cli, imageio


def write_pgm(path, values):
    imageio.write_pgm(path, values)
    return str(path)


def read_labels(path):
    return np.asarray(Image.open(path)).astype(int) + 1


def segment(tmp_path, img, *extra):
    inp = write_pgm(tmp_path / "in.pgm", img)
    outdir = tmp_path / "out"
    code = cli.main(["segment", "--input", inp, "--outdir", str(outdir),
                     *extra])
    return code, outdir


class TestSegment:
    def test_constant_image(self, tmp_path):
        code, outdir = segment(tmp_path, np.full((64, 64), 0.5))
        assert code == 0
        labels = read_labels(outdir / "labels.png")
        assert len(np.unique(labels)) == 1
        assert (outdir / "trace.csv").exists()
        assert (outdir / "summary.json").exists()

    def test_two_constant_pc(self, tmp_path):
        img, gt = two_constant(64)
        img = imageio.read_image(write_pgm(tmp_path / "q.pgm", img))
        code, outdir = segment(tmp_path, img, "--model", "pc", "--k", "2")
        assert code == 0
        labels = read_labels(outdir / "labels.png")
        acc = max((labels == gt).mean(), (labels == 3 - gt).mean())
        assert acc >= 0.99
        summary = json.loads((outdir / "summary.json").read_text())
        assert summary["converged"]
        assert summary["parameters"]["model"] == "pc"
        assert len(summary["means"]) == 2

    def test_max_outer_exit_code(self, tmp_path):
        img, _ = two_constant(32)
        code, _ = segment(tmp_path, img, "--model", "pc",
                          "--max-outer", "1", "--tol", "1e-12")
        assert code == 2

    def test_unreadable_input(self, tmp_path, capsys):
        code = cli.main(["segment", "--input", str(tmp_path / "missing.pgm"),
                         "--outdir", str(tmp_path / "o")])
        assert code == 1
        assert "cannot read" in capsys.readouterr().err

    def test_overlapping_supervision(self, tmp_path, capsys):
        img, _ = two_constant(32)
        sup = tmp_path / "sup.json"
        sup.write_text(json.dumps({"patches": [
            {"channel": 1, "x": 0, "y": 0, "w": 8, "h": 8},
            {"channel": 2, "x": 4, "y": 4, "w": 8, "h": 8}]}))
        code, _ = segment(tmp_path, img, "--supervision", str(sup))
        assert code == 1
        assert "not disjoint" in capsys.readouterr().err

    def test_raw_and_npy_artifacts(self, tmp_path):
        img, _ = two_constant(32)
        code, outdir = segment(tmp_path, img, "--model", "pc", "--raw", "--npy")
        assert code == 0
        raw, channel = imageio.read_raw_ownership(outdir / "own_1.raw")
        assert channel == 1
        dense = np.load(outdir / "own_1.npy")
        assert np.array_equal(raw, dense.astype(np.float32))


class TestHarden:
    def test_one_sided(self, tmp_path):
        write_pgm(tmp_path / "a.pgm", np.ones((8, 8)))
        write_pgm(tmp_path / "b.pgm", np.zeros((8, 8)))
        out = tmp_path / "labels.png"
        code = cli.main(["harden", str(tmp_path / "a.pgm"),
                         str(tmp_path / "b.pgm"), "--output", str(out)])
        assert code == 0
        assert np.all(read_labels(out) == 1)

    def test_tie_takes_largest(self, tmp_path):
        for name in ("a", "b", "c"):
            write_pgm(tmp_path / f"{name}.pgm", np.full((8, 8), 0.5))
        out = tmp_path / "labels.png"
        code = cli.main(["harden", str(tmp_path / "a.pgm"),
                         str(tmp_path / "b.pgm"), str(tmp_path / "c.pgm"),
                         "--output", str(out)])
        assert code == 0
        assert np.all(read_labels(out) == 3)

    def test_matches_segment_output(self, tmp_path):
        img, _ = two_constant(32)
        code, outdir = segment(tmp_path, img, "--model", "pc", "--npy")
        assert code == 0
        out = tmp_path / "rehardened.png"
        code = cli.main(["harden", str(outdir / "own_1.npy"),
                         str(outdir / "own_2.npy"), "--output", str(out)])
        assert code == 0
        assert out.read_bytes() == (outdir / "labels.png").read_bytes()

    def test_dimension_mismatch(self, tmp_path, capsys):
        write_pgm(tmp_path / "a.pgm", np.ones((8, 8)))
        write_pgm(tmp_path / "b.pgm", np.ones((9, 9)))
        code = cli.main(["harden", str(tmp_path / "a.pgm"),
                         str(tmp_path / "b.pgm"),
                         "--output", str(tmp_path / "x.png")])
        assert code == 1
        assert "identical dimensions" in capsys.readouterr().err


class TestEnergy:
    def test_trivial_minimum(self, tmp_path, capsys):
        img = write_pgm(tmp_path / "i.pgm", np.full((8, 8), 1.0))
        write_pgm(tmp_path / "p1.pgm", np.ones((8, 8)))
        write_pgm(tmp_path / "p2.pgm", np.zeros((8, 8)))
        write_pgm(tmp_path / "u1.pgm", np.full((8, 8), 1.0))
        write_pgm(tmp_path / "u2.pgm", np.full((8, 8), 1.0))
        code = cli.main(["energy", "--image", img,
                         "--ownerships", str(tmp_path / "p1.pgm"),
                         str(tmp_path / "p2.pgm"),
                         "--patterns", str(tmp_path / "u1.pgm"),
                         str(tmp_path / "u2.pgm")])
        assert code == 0
        bd = json.loads(capsys.readouterr().out)
        assert bd["total"] == 0.0

    def test_audit_matches_summary(self, tmp_path, capsys):
        img, _ = two_constant(32)
        code, outdir = segment(tmp_path, img, "--model", "pc", "--npy")
        assert code == 0
        summary = json.loads((outdir / "summary.json").read_text())
        means = ",".join(str(v) for v in summary["means"])
        code = cli.main(["energy", "--image", str(tmp_path / "in.pgm"),
                         "--ownerships", str(outdir / "own_1.npy"),
                         str(outdir / "own_2.npy"), "--means", means,
                         "--feas-tol", "1e-9"])
        assert code == 0
        bd = json.loads(capsys.readouterr().out)
        assert bd["total"] == pytest.approx(summary["energy"]["total"],
                                            rel=1e-9)

    def test_permuted_inputs_same_total(self, tmp_path, capsys):
        img, _ = two_constant(32)
        code, outdir = segment(tmp_path, img, "--model", "pc", "--npy")
        assert code == 0
        summary = json.loads((outdir / "summary.json").read_text())
        m = summary["means"]
        code = cli.main(["energy", "--image", str(tmp_path / "in.pgm"),
                         "--ownerships", str(outdir / "own_2.npy"),
                         str(outdir / "own_1.npy"),
                         "--means", f"{m[1]},{m[0]}",
                         "--feas-tol", "1e-9"])
        assert code == 0
        bd = json.loads(capsys.readouterr().out)
        assert bd["total"] == pytest.approx(summary["energy"]["total"],
                                            rel=1e-12)

    def test_infeasible_rejected(self, tmp_path, capsys):
        img = write_pgm(tmp_path / "i.pgm", np.full((8, 8), 0.5))
        write_pgm(tmp_path / "p1.pgm", np.full((8, 8), 0.9))
        write_pgm(tmp_path / "p2.pgm", np.full((8, 8), 0.9))
        code = cli.main(["energy", "--image", img,
                         "--ownerships", str(tmp_path / "p1.pgm"),
                         str(tmp_path / "p2.pgm"), "--means", "0.5,0.5"])
        assert code == 1
        assert "infeasible" in capsys.readouterr().err
