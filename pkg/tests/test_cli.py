import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import write_dir_dataset
from wsdpa.cli import main
from wsdpa.dataio import LabeledDataset, read_csv
from wsdpa.synthetic import planted_dataset

pytestmark = pytest.mark.filterwarnings("ignore:Samples are fewer than features")


@pytest.fixture(scope="module")
def planted_dir(tmp_path_factory):
    ds, patterns = planted_dataset(n_per_class=80, size=16, amplitude=0.3, seed=11)
    root = write_dir_dataset(tmp_path_factory.mktemp("planted") / "data", ds)
    return root, patterns


@pytest.fixture(scope="module")
def run_dir(planted_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "run"
    assert main(["analyze", "--dataset", str(planted_dir[0]), "--format", "dir", "--m", "10", "--out", str(out)]) == 0
    return out


def test_analyze_outputs(run_dir):
    names = {p.name for p in run_dir.iterdir()}
    for f in ("singular_values.csv", "association.csv", "angular_class0_class1.csv", "report.json", "factors.bin",
              "contribution.csv", "complexity_class0.csv", "complexity_class1.csv"):
        assert f in names
    rep = json.loads((run_dir / "report.json").read_text())
    for key in ("format_version", "basis", "levels", "tau", "m", "c", "n_i", "alpha", "runtime_seconds"):
        assert key in rep
    assert rep["basis"] == "db2" and rep["levels"] == 1 and rep["m"] == 10 and rep["c"] == 2
    assert rep["n_i"] == [80, 80]
    assert rep["m_full"] == 324  # 9 x 9 per db2 subband, four subbands
    for cls in ("class0", "class1"):
        assert rep["dominant_patterns"][cls]
        assert rep["summary"]["dominant_count"][cls] >= 1
        assert rep["dominant_patterns"][cls][0]["ratio"] >= 2.0
    sv = read_csv(run_dir / "singular_values.csv")
    assert list(sv) == ["pattern", "class0", "class1"]
    assert len(sv["pattern"]) == 10
    assoc = read_csv(run_dir / "association.csv")
    assert set(assoc["best_class"]) <= {"class0", "class1"}


def _snapshot(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_shuffle_is_reproducible(planted_dir, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"r{k}"
        argv = ["analyze", "--dataset", str(planted_dir[0]), "--shuffle", "1.0", "--seed", "7", "--m", "10",
                "--out", str(out)]
        assert main(argv) == 0
        outs.append(_snapshot(out))
    a, b = outs
    assert a.keys() == b.keys()
    for name in a:
        if name == "report.json":
            ra, rb = json.loads(a[name]), json.loads(b[name])
            ra.pop("runtime_seconds"), rb.pop("runtime_seconds")
            assert ra == rb
        else:
            assert a[name] == b[name], name


def test_patterns_count_zero_and_bad_class(run_dir, capsys):
    assert main(["patterns", "--run", str(run_dir), "--class", "class0", "--count", "0"]) == 0
    assert not (run_dir / "patterns").exists()
    assert main(["patterns", "--run", str(run_dir), "--class", "nope", "--count", "1"]) == 2
    assert "unknown class" in capsys.readouterr().err


def test_patterns_files(run_dir):
    assert main(["patterns", "--run", str(run_dir), "--class", "class1", "--count", "3"]) == 0
    out = run_dir / "patterns" / "class1"
    assert len(list(out.glob("*.pgm"))) == 3 and len(list(out.glob("*.npy"))) == 3
    table = read_csv(out / "patterns.csv")
    ratios = [float(r) for r in table["ratio"]]
    assert ratios == sorted(ratios, reverse=True)
    assert main(["patterns", "--run", str(run_dir), "--class", "class1", "--threshold", "1e9",
                 "--out", str(run_dir / "none")]) == 0
    assert not (run_dir / "none").exists()


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_patterns_recover_planted(tmp_path, seed):
    # haar is non-expansive, so a single planted coefficient has no boundary twin
    ds, patterns = planted_dataset(n_per_class=60, size=16, patterns_per_class=1, support=1, amplitude=0.5,
                                   noise=0.02, basis="haar", seed=seed)
    root = write_dir_dataset(tmp_path / "data", ds)
    out = tmp_path / "run"
    argv = ["analyze", "--dataset", str(root), "--basis", "haar", "--m", "5", "--tau", "1e3", "--out", str(out)]
    assert main(argv) == 0
    for i, cls in enumerate(ds.class_names):
        assert main(["patterns", "--run", str(out), "--class", cls, "--count", "1"]) == 0
        (npy,) = (out / "patterns" / cls).glob("*.npy")
        img = np.load(npy).ravel()
        ref = patterns[i, 0].ravel()
        cos = abs(img @ ref) / (np.linalg.norm(img) * np.linalg.norm(ref))
        assert cos > 0.9


def test_reconstruct(run_dir):
    rep = json.loads((run_dir / "report.json").read_text())
    m = rep["m"]
    assert main(["reconstruct", "--run", str(run_dir), "--class", "class0", "--row", "4",
                 "--checkpoints", str(m)]) == 0
    out = run_dir / "reconstruct" / "class0_4"
    orig = np.load(out / "original.npy")
    rec = np.load(out / f"recon_k{m:05d}.npy")
    assert np.linalg.norm(rec - orig) <= 1e-8 * np.linalg.norm(orig)
    res = read_csv(out / "residual.csv")
    assert res["k"] == [str(m)]
    assert (out / "original.pgm").exists()


def test_reconstruct_default_checkpoints(run_dir):
    assert main(["reconstruct", "--run", str(run_dir), "--class", "class1", "--row", "0",
                 "--out", str(run_dir / "rd")]) == 0
    res = read_csv(run_dir / "rd" / "residual.csv")
    assert res["k"] == ["10"]  # the default list clipped to m = 10


def test_reconstruct_errors(run_dir, capsys):
    assert main(["reconstruct", "--run", str(run_dir), "--class", "class0", "--row", "80"]) == 2
    assert "row 80" in capsys.readouterr().err
    assert main(["reconstruct", "--run", str(run_dir), "--class", "class0", "--row", "0",
                 "--checkpoints", "5,3"]) == 2
    assert main(["reconstruct", "--run", str(run_dir.parent / "nothing"), "--class", "class0", "--row", "0"]) == 2


def test_similarity_duplicates(tmp_path):
    ds, _ = planted_dataset(n_per_class=40, size=8, amplitude=0.3, seed=4)
    imgs = ds.images.copy()
    imgs[17] = imgs[3]
    root = write_dir_dataset(tmp_path / "data", LabeledDataset(imgs, ds.labels, ds.class_names))
    out = tmp_path / "run"
    assert main(["analyze", "--dataset", str(root), "--basis", "haar", "--out", str(out)]) == 0
    assert main(["similarity", "--run", str(out), "--class", "class0"]) == 0
    table = read_csv(out / "similarity" / "class0" / "similarity.csv")
    w = np.array([[float(x) for x in table[str(j)]] for j in range(40)]).T
    np.fill_diagonal(w, -1)
    a, b = np.unravel_index(np.argmax(w), w.shape)
    assert {int(a), int(b)} == {3, 17}
    iso = read_csv(out / "similarity" / "class0" / "isolation.csv")
    assert len(iso["row"]) == 40
    assert main(["similarity", "--run", str(out), "--class", "class0", "--bandwidth", "0"]) == 2
    assert main(["similarity", "--run", str(out), "--class", "class0", "--bandwidth", "-1"]) == 2


def test_similarity_single_image(tmp_path):
    ds, _ = planted_dataset(n_per_class=6, size=8, amplitude=0.3, seed=2)
    keep = np.r_[0, 6:12]
    root = write_dir_dataset(tmp_path / "data", LabeledDataset(ds.images[keep], ds.labels[keep], ds.class_names))
    out = tmp_path / "run"
    assert main(["analyze", "--dataset", str(root), "--basis", "haar", "--m", "1", "--out", str(out)]) == 0
    assert main(["similarity", "--run", str(out), "--class", "class0"]) == 0
    table = read_csv(out / "similarity" / "class0" / "similarity.csv")
    assert table == {"row": ["0"], "0": ["1"]}


def test_config_errors(planted_dir, tmp_path, capsys):
    base = ["analyze", "--dataset", str(planted_dir[0]), "--out", str(tmp_path / "x")]
    assert main(base + ["--pixel-mode", "--basis", "haar"]) == 2
    assert "mutually exclusive" in capsys.readouterr().err
    assert main(base + ["--shuffle", "1.5"]) == 2
    assert main(base + ["--basis", "sym8"]) == 2
    assert main(base + ["--classes", "class0"]) == 2
    assert main(base + ["--m", "100000"]) == 2
    assert main(base + ["--pairs", "class0-class1"]) == 2


def test_pixel_mode_and_filters(planted_dir, tmp_path):
    out = tmp_path / "px"
    argv = ["analyze", "--dataset", str(planted_dir[0]), "--pixel-mode", "--classes", "class1,class0",
            "--limit-per-class", "50", "--pairs", "class1:class0", "--top", "3", "--out", str(out)]
    assert main(argv) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["basis"] == "identity" and rep["m_full"] == 256
    assert rep["class_names"] == ["class1", "class0"] and rep["n_i"] == [50, 50]
    assert all(len(v) == 3 for v in rep["dominant_patterns"].values())
    assert (out / "angular_class1_class0.csv").exists()


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "wsdpa.cli", "similarity", "--run", str(tmp_path), "--class", "a"],
                         capture_output=True, text=True)
    assert res.returncode == 2
    assert "no factors.bin" in res.stderr
