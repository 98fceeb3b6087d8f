"""End-to-end run: load, transform, normalize, select, decompose, report."""
from __future__ import annotations

import logging
import re
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .analysis import (
    DEFAULT_DOMINANCE,
    angular_distance,
    association_table,
    complexity_ranking,
    contribution_coords,
    dominant_patterns,
    randomize_labels,
)
from .dataio import (
    LabeledDataset,
    load_cifar_bin,
    load_idx,
    load_image_dir,
    save_factors,
    write_csv,
    write_json_report,
)
from .errors import WsdpaError
from .hogsvd import HogsvdFactors, hogsvd
from .selection import (
    DEFAULT_TAU,
    DatasetTensor,
    SelectionConfig,
    condition_number,
    rrqr_order,
    scale_rows,
    select_coefficients,
)
from .wavelet import wavedec_batch

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
DEFAULT_BASIS = "db2"


@dataclass
class RunConfig:
    dataset: list = field(default_factory=list)
    format: str = "dir"
    labels: str | None = None
    manifest: str | None = None
    downscale: int = 1
    basis: str | None = None
    levels: int = 1
    tau: float = DEFAULT_TAU
    m: int | None = None
    pixel_mode: bool = False
    shuffle: float = 0.0
    seed: int = 0
    classes: list | None = None
    limit_per_class: int | None = None
    pairs: list | None = None
    top: int = 10
    out: str = "wsdpa_run"

    def __post_init__(self):
        if self.pixel_mode and self.basis not in (None, "identity"):
            raise WsdpaError("--pixel-mode and --basis are mutually exclusive")
        if not 0.0 <= self.shuffle <= 1.0:
            raise WsdpaError(f"shuffle fraction must lie in [0, 1], got {self.shuffle}")
        if self.format not in ("idx", "cifar", "dir"):
            raise WsdpaError(f"unknown dataset format {self.format!r} (idx, cifar, dir)")

    @property
    def basis_name(self) -> str:
        return "identity" if self.pixel_mode else (self.basis or DEFAULT_BASIS)


@dataclass
class AnalysisRun:
    config: RunConfig
    dataset: DatasetTensor
    factors: HogsvdFactors
    runtime: float

    @property
    def table(self):
        return association_table(self.factors)


def load_dataset(cfg: RunConfig) -> LabeledDataset:
    paths = [Path(p) for p in cfg.dataset]
    if not paths:
        raise WsdpaError("no dataset path given")
    if cfg.format == "idx":
        images = paths[0]
        labels = Path(cfg.labels) if cfg.labels else _idx_label_path(images)
        return load_idx(images, labels)
    if cfg.format == "cifar":
        files = []
        for p in paths:
            files.extend(sorted(p.glob("*.bin")) if p.is_dir() else [p])
        return load_cifar_bin(files)
    return load_image_dir(paths[0], cfg.manifest, cfg.downscale)


def _idx_label_path(images: Path) -> Path:
    name = images.name
    for a, b in (("images-idx3", "labels-idx1"), ("images.idx3", "labels.idx1"), ("images", "labels")):
        if a in name:
            return images.with_name(name.replace(a, b))
    raise WsdpaError(f"cannot infer the label file for {images}; pass --labels")


def prepare(ds: LabeledDataset, cfg: RunConfig) -> LabeledDataset:
    if cfg.classes:
        ds = ds.select_classes(cfg.classes)
    ds = ds.compact()
    if cfg.limit_per_class:
        ds = ds.limit_per_class(cfg.limit_per_class)
    if cfg.shuffle > 0:
        ds = randomize_labels(ds, cfg.shuffle, cfg.seed).compact()
    if len(ds.class_names) < 2:
        raise WsdpaError("need at least two non-empty classes")
    return ds


def analyze(ds: LabeledDataset, cfg: RunConfig) -> AnalysisRun:
    """Run the full decomposition on an in-memory dataset."""
    t0 = time.perf_counter()
    ds = prepare(ds, cfg)
    coeffs, layout = wavedec_batch(ds.images, cfg.basis_name, cfg.levels)
    raw = [coeffs[ds.labels == i] for i in range(len(ds.class_names))]
    scaled, scaling = scale_rows(raw)
    order = rrqr_order(np.vstack(scaled))
    tensor = select_coefficients(
        scaled, order, SelectionConfig(cfg.tau, cfg.m),
        layout=layout, scaling=scaling, class_names=ds.class_names, raw=raw,
    )
    factors = hogsvd(tensor)
    runtime = time.perf_counter() - t0
    log.info("m = %d of %d coefficients, c = %d, %.2fs", tensor.m, layout.size, len(raw), runtime)
    return AnalysisRun(cfg, tensor, factors, runtime)


def safe_name(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", name)


def build_report(run: AnalysisRun) -> dict:
    f, t = run.factors, run.dataset
    table = association_table(f)
    dominant = {}
    for i, name in enumerate(f.class_names):
        ks = dominant_patterns(table, i, count=run.config.top)
        dominant[name] = [
            {"pattern": int(k), "ratio": float(table.ratio[i, k]), "sigma": float(table.sigma[i, k])} for k in ks
        ]
    pairs = {}
    c = f.n_classes
    for a in range(c):
        for b in range(a + 1, c):
            th = angular_distance(f, a, b)
            pairs[f"{f.class_names[a]}|{f.class_names[b]}"] = {"mean": float(th.mean()), "max": float(th.max())}
    cfg = asdict(run.config)
    cfg["dataset"] = [str(p) for p in cfg["dataset"]]
    cfg.pop("out")
    return {
        "format_version": FORMAT_VERSION,
        "basis": run.config.basis_name,
        "levels": t.layout.levels,
        "tau": run.config.tau,
        "m": t.m,
        "m_full": int(t.perm.size),
        "c": c,
        "class_names": f.class_names,
        "n_i": t.counts,
        "alpha": t.scaling.alpha,
        "image_shape": list(t.layout.image_shape),
        "runtime_seconds": run.runtime,
        "backend": kernels.backend(),
        "config": cfg,
        "dominant_patterns": dominant,
        "summary": {
            "max_dominance_ratio": float(table.ratio.max()),
            "dominant_count": {
                name: int((table.ratio[i] >= DEFAULT_DOMINANCE).sum()) for i, name in enumerate(f.class_names)
            },
            "angular": pairs,
            "eigval_min": float(f.eigvals.min()),
            "eigval_max": float(f.eigvals.max()),
            "condition_numbers": [condition_number(d) for d in t.stacks],
        },
    }


def _pairs(run: AnalysisRun):
    names = run.factors.class_names
    if run.config.pairs:
        out = []
        for spec in run.config.pairs:
            a, sep, b = spec.partition(":")
            if not sep:
                raise WsdpaError(f"pair {spec!r} must look like 'classA:classB'")
            out.append((run.factors.class_index(a), run.factors.class_index(b)))
        return out
    return [(a, b) for a in range(len(names)) for b in range(a + 1, len(names))]


def write_run(run: AnalysisRun, out_dir=None) -> Path:
    """Write tables, report and factor container into ``out_dir``."""
    out = Path(out_dir or run.config.out)
    out.mkdir(parents=True, exist_ok=True)
    f = run.factors
    table = association_table(f)
    names = f.class_names
    ks = np.arange(f.m)

    write_csv({"pattern": ks, **{n: table.sigma[i] for i, n in enumerate(names)}}, out / "singular_values.csv")
    assoc = {"pattern": ks, **{f"ratio_{n}": table.ratio[i] for i, n in enumerate(names)}}
    assoc["best_class"] = [names[i] for i in table.best_class()]
    write_csv(assoc, out / "association.csv")
    for a, b in _pairs(run):
        th = angular_distance(f, a, b)
        write_csv({"pattern": ks, "angular_distance": th},
                  out / f"angular_{safe_name(names[a])}_{safe_name(names[b])}.csv")

    if f.m >= 2:
        p = int(dominant_patterns(table, 0, count=1)[0])
        q = int(dominant_patterns(table, 1, count=1)[0])
        if p == q:
            q = int(dominant_patterns(table, 1, count=2)[1])
        xy, tags = contribution_coords(f, p, q)
        write_csv({"class": [names[i] for i in tags], f"pattern_{p}": xy[:, 0], f"pattern_{q}": xy[:, 1]},
                  out / "contribution.csv")
    for i, n in enumerate(names):
        order, norms = complexity_ranking(f, i)
        write_csv({"rank": np.arange(order.size), "row": order, "norm": norms[order]},
                  out / f"complexity_{safe_name(n)}.csv")

    write_json_report(build_report(run), out / "report.json")
    save_factors(out / "factors.bin", f, run.dataset)
    return out
