import sys

import numpy as np
import pytest

from wsdpa.dataio import write_ppm
from wsdpa.hogsvd import HogsvdFactors
from wsdpa.selection import DatasetTensor, PivotOrder, ScalingRecord
from wsdpa.wavelet import make_layout


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def write_dir_dataset(root, ds):
    """Store a LabeledDataset as PGM/PPM files plus manifest.tsv."""
    root.mkdir(parents=True, exist_ok=True)
    lines = []
    for n, (img, lab) in enumerate(zip(ds.images, ds.labels)):
        name = f"img_{n:04d}.pgm" if img.shape[2] == 1 else f"img_{n:04d}.ppm"
        write_ppm(np.rint(np.clip(img, 0, 1) * 255).astype(np.uint8), root / name)
        lines.append(f"{name}\t{ds.class_names[lab]}")
    (root / "manifest.tsv").write_text("\n".join(lines) + "\n")
    return root


def direct_factors(coords_by_class, V, *, basis="haar", shape=(4, 4, 1), m=None, perm=None, seed=0):
    """Factors and a consistent DatasetTensor built from chosen pattern weights.

    ``coords_by_class[i]`` holds rows of U_i Sigma_i. Zero columns get sigma 0
    and an arbitrary unit U column. Raw rows carry random unselected values
    adjusted so that each row sums to 1, and alpha is 1.
    """
    rng = np.random.default_rng(seed)
    layout = make_layout(shape, basis, 1)
    full = layout.size
    V = np.asarray(V, dtype=float)
    m = V.shape[1] if m is None else m
    perm = np.arange(full) if perm is None else np.asarray(perm)
    us, sigmas, raws, sums = [], [], [], []
    for w in coords_by_class:
        w = np.asarray(w, dtype=float)
        sig = np.linalg.norm(w, axis=0)
        u = np.where(sig > 0, w / np.where(sig > 0, sig, 1), 1.0 / np.sqrt(w.shape[0]))
        us.append(u)
        sigmas.append(sig)
        x = w @ V.T
        raw = np.zeros((w.shape[0], full))
        raw[:, perm[:m]] = x
        rest = perm[m:]
        assert rest.size, "need at least one unselected coefficient to fix the row sums"
        raw[:, rest] = rng.normal(size=(w.shape[0], rest.size))
        raw[:, rest[-1]] += 1.0 - raw.sum(axis=1)
        raws.append(raw)
        sums.append(raw.sum(axis=1))
    names = [f"c{i}" for i in range(len(coords_by_class))]
    factors = HogsvdFactors(V, us, sigmas, names, np.ones(m))
    scaling = ScalingRecord(1.0, sums)
    stacks = [r[:, perm[:m]] / s[:, None] for r, s in zip(raws, sums)]
    tensor = DatasetTensor(stacks, names, PivotOrder(perm, np.ones(full)), m, layout, scaling, raws)
    return factors, tensor


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
