"""Dataset readers (IDX, CIFAR-10 binary, PGM/PPM directories) and report writers.

Pixels are mapped to [0, 1] on load. The binary factor container written by
:func:`save_factors` is little-endian::

    b"WSDPA1"
    uint32 c, uint32 m, uint32 m_full, uint32 n_i (x c)
    float64 V                  m x m, row-major
    per class: float64 U_i     n_i x m, then float64 sigma_i (m)
    int64 perm                 m_full
    float64 eigvals (m), rdiag (m_full), alpha (1)
    per class: float64 row sums (n_i)
    per class: float64 raw coefficients  n_i x m_full
    uint32 length, UTF-8 JSON  {"class_names": [...], "layout": {...}}
"""
from __future__ import annotations

import csv
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import WsdpaError
from .hogsvd import HogsvdFactors
from .selection import DatasetTensor, PivotOrder, ScalingRecord
from .wavelet import CoeffLayout

CIFAR10_CLASSES = ("airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck")
_CIFAR_RECORD = 3073
_IDX_IMAGES = 0x00000803
_IDX_LABELS = 0x00000801
MAGIC = b"WSDPA1"


@dataclass
class LabeledDataset:
    images: np.ndarray  # (N, H, W, C) in [0, 1]
    labels: np.ndarray  # (N,) class indices
    class_names: list

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim == 3:
            self.images = self.images[..., None]
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.class_names = list(self.class_names)
        if self.images.ndim != 4 or self.images.shape[0] != self.labels.size:
            raise WsdpaError(f"{self.labels.size} labels for image array of shape {self.images.shape}")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= len(self.class_names)):
            raise WsdpaError("label index outside the class list")

    def __len__(self):
        return self.labels.size

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=len(self.class_names))

    def compact(self) -> "LabeledDataset":
        """Drop classes that have no images, keeping the relative order."""
        present = [i for i, n in enumerate(self.class_counts()) if n > 0]
        if len(present) == len(self.class_names):
            return self
        remap = np.full(len(self.class_names), -1)
        remap[present] = np.arange(len(present))
        return LabeledDataset(self.images, remap[self.labels], [self.class_names[i] for i in present])

    def select_classes(self, names) -> "LabeledDataset":
        """Keep only the named classes, in the given order."""
        idx = []
        for name in names:
            if name not in self.class_names:
                raise WsdpaError(f"unknown class {name!r}; known: {', '.join(self.class_names)}")
            idx.append(self.class_names.index(name))
        remap = np.full(len(self.class_names), -1)
        remap[idx] = np.arange(len(idx))
        keep = remap[self.labels] >= 0
        return LabeledDataset(self.images[keep], remap[self.labels[keep]], list(names))

    def limit_per_class(self, limit: int) -> "LabeledDataset":
        """Keep the first ``limit`` images of every class (dataset order)."""
        seen = np.zeros(len(self.class_names), dtype=int)
        keep = np.zeros(self.labels.size, dtype=bool)
        for n, lab in enumerate(self.labels):
            if seen[lab] < limit:
                keep[n] = True
                seen[lab] += 1
        return LabeledDataset(self.images[keep], self.labels[keep], self.class_names)

    def class_images(self, i: int) -> np.ndarray:
        return self.images[self.labels == i]


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise WsdpaError(f"cannot read {path}: {exc}") from exc


def _idx_header(buf: bytes, path, magic: int, ndims: int):
    need = 4 + 4 * ndims
    if len(buf) < need:
        raise WsdpaError(f"{path}: truncated IDX header ({len(buf)} bytes)")
    got = struct.unpack(">I", buf[:4])[0]
    if got != magic:
        raise WsdpaError(f"{path}: bad IDX magic 0x{got:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndims}I", buf[4:need])
    body = buf[need:]
    if len(body) < math.prod(dims):
        raise WsdpaError(f"{path}: truncated IDX data ({len(body)} of {math.prod(dims)} bytes)")
    return dims, np.frombuffer(body, dtype=np.uint8, count=math.prod(dims))


def load_idx(images_path, labels_path) -> LabeledDataset:
    """Read an IDX image/label file pair (MNIST layout)."""
    (count, rows, cols), pix = _idx_header(_read_bytes(images_path), images_path, _IDX_IMAGES, 3)
    (nlab,), labs = _idx_header(_read_bytes(labels_path), labels_path, _IDX_LABELS, 1)
    if count != nlab:
        raise WsdpaError(f"image count {count} does not match label count {nlab}")
    images = pix.reshape(count, rows, cols, 1).astype(np.float64) / 255.0
    values = np.unique(labs)
    labels = np.searchsorted(values, labs)
    return LabeledDataset(images, labels, [str(int(v)) for v in values])


def load_cifar_bin(paths) -> LabeledDataset:
    """Read one or more CIFAR-10 binary batch files, concatenated in order."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    images, labels = [], []
    for path in paths:
        buf = _read_bytes(path)
        if len(buf) == 0 or len(buf) % _CIFAR_RECORD:
            raise WsdpaError(f"{path}: size {len(buf)} is not a positive multiple of {_CIFAR_RECORD}")
        rec = np.frombuffer(buf, dtype=np.uint8).reshape(-1, _CIFAR_RECORD)
        lab = rec[:, 0]
        if lab.max() > 9:
            raise WsdpaError(f"{path}: label byte {int(lab.max())} > 9")
        labels.append(lab.astype(np.int64))
        images.append(rec[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1).astype(np.float64) / 255.0)
    if not images:
        raise WsdpaError("no CIFAR files given")
    return LabeledDataset(np.concatenate(images), np.concatenate(labels), list(CIFAR10_CLASSES))


def _netpbm_tokens(buf: bytes, count: int, path):
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise WsdpaError(f"{path}: truncated header")
        tokens.append(buf[start:pos])
    return tokens, pos + 1  # exactly one whitespace byte precedes the raster


def read_netpbm(path) -> np.ndarray:
    """Read a binary PGM (P5) or PPM (P6) image as an (H, W, C) array in [0, 1]."""
    buf = _read_bytes(path)
    if buf[:2] not in (b"P5", b"P6"):
        raise WsdpaError(f"{path}: unsupported image format (only binary PGM/PPM, P5/P6)")
    (magic, w, h, maxval), start = _netpbm_tokens(buf, 4, path)
    try:
        w, h, maxval = int(w), int(h), int(maxval)
    except ValueError:
        raise WsdpaError(f"{path}: malformed header") from None
    if not 0 < maxval < 256:
        raise WsdpaError(f"{path}: maxval {maxval} unsupported (8-bit only)")
    ch = 1 if magic == b"P5" else 3
    n = w * h * ch
    raster = buf[start:start + n]
    if len(raster) < n:
        raise WsdpaError(f"{path}: truncated raster")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, ch).astype(np.float64) / maxval


def box_downscale(img: np.ndarray, factor: int) -> np.ndarray:
    """Average non-overlapping factor x factor blocks; trailing pixels are cropped."""
    if factor == 1:
        return img
    if factor < 1:
        raise WsdpaError(f"downscale factor must be >= 1, got {factor}")
    h, w, c = img.shape
    hh, ww = h // factor, w // factor
    if hh == 0 or ww == 0:
        raise WsdpaError(f"image {h}x{w} too small for downscale factor {factor}")
    blocks = img[: hh * factor, : ww * factor].reshape(hh, factor, ww, factor, c)
    return blocks.mean(axis=(1, 3))


def load_image_dir(root, manifest=None, downscale: int = 1) -> LabeledDataset:
    """Read images listed in a tab-separated manifest of ``<relative path>\\t<class name>``.

    Classes are numbered by first appearance; image order follows the manifest.
    """
    root = Path(root)
    manifest = Path(manifest) if manifest is not None else root / "manifest.tsv"
    try:
        lines = manifest.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise WsdpaError(f"cannot read manifest {manifest}: {exc}") from exc
    names, labels, images = [], [], []
    for lineno, line in enumerate(lines, 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise WsdpaError(f"{manifest}:{lineno}: expected '<path>\\t<class>'")
        rel, cls = parts[0].strip(), parts[1].strip()
        img = box_downscale(read_netpbm(root / rel), downscale)
        if images and img.shape != images[0].shape:
            raise WsdpaError(f"{rel}: shape {img.shape} differs from {images[0].shape}")
        if cls not in names:
            names.append(cls)
        labels.append(names.index(cls))
        images.append(img)
    if not images:
        raise WsdpaError(f"{manifest}: no images listed")
    return LabeledDataset(np.stack(images), np.array(labels), names)


# --------------------------------------------------------------------------- writers


def to_bytes(image) -> np.ndarray:
    """Min-max map an image to uint8; a constant image becomes 128 everywhere."""
    x = np.asarray(image, dtype=np.float64)
    lo, hi = float(x.min()), float(x.max())
    if hi <= lo:
        return np.full(x.shape, 128, dtype=np.uint8)
    return np.rint((x - lo) * (255.0 / (hi - lo))).astype(np.uint8)


def write_pgm(image, path) -> list:
    """Write an image as binary PGM; colour images become one file per channel.

    Returns the paths written.
    """
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 2:
        x = x[..., None]
    data = to_bytes(x)
    path = Path(path)
    h, w, c = data.shape
    if c == 1:
        targets = [(path, data[..., 0])]
    else:
        suffixes = "rgb" if c == 3 else [str(k) for k in range(c)]
        targets = [(path.with_name(f"{path.stem}_{s}{path.suffix}"), data[..., k]) for k, s in enumerate(suffixes)]
    out = []
    for target, plane in targets:
        try:
            with open(target, "wb") as fh:
                fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
                fh.write(np.ascontiguousarray(plane).tobytes())
        except OSError as exc:
            raise WsdpaError(f"cannot write {target}: {exc}") from exc
        out.append(target)
    return out


def write_ppm(image, path) -> Path:
    """Write P5 (one channel) or P6 (three channels); uint8 input is written as is."""
    x = np.asarray(image)
    if x.ndim == 2:
        x = x[..., None]
    data = x if x.dtype == np.uint8 else to_bytes(x)
    h, w, c = data.shape
    magic = "P5" if c == 1 else "P6"
    with open(path, "wb") as fh:
        fh.write(f"{magic}\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(data).tobytes())
    return Path(path)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(table, path) -> Path:
    """Write ``table`` (a mapping of column name to equal-length sequences)."""
    cols = list(table)
    data = [list(table[c]) for c in cols]
    n = len(data[0]) if data else 0
    if any(len(d) != n for d in data):
        raise WsdpaError("CSV columns have different lengths")
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(cols)
            for r in range(n):
                writer.writerow([_fmt(d[r]) for d in data])
    except OSError as exc:
        raise WsdpaError(f"cannot write {path}: {exc}") from exc
    return Path(path)


def read_csv(path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {h: [r[k] for r in body] for k, h in enumerate(header)}


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_json_report(report: dict, path) -> Path:
    try:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, default=_jsonable)
            fh.write("\n")
    except OSError as exc:
        raise WsdpaError(f"cannot write {path}: {exc}") from exc
    return Path(path)


# --------------------------------------------------------------------------- factor container


def save_factors(path, factors: HogsvdFactors, dataset: DatasetTensor) -> Path:
    c, m = factors.n_classes, factors.m
    full = dataset.perm.size
    counts = dataset.counts
    le = "<f8"
    parts = [MAGIC, struct.pack(f"<3I{c}I", c, m, full, *counts)]
    parts.append(np.ascontiguousarray(factors.V, dtype=le).tobytes())
    for u, s in zip(factors.U, factors.sigma):
        parts.append(np.ascontiguousarray(u, dtype=le).tobytes())
        parts.append(np.ascontiguousarray(s, dtype=le).tobytes())
    parts.append(np.ascontiguousarray(dataset.perm, dtype="<i8").tobytes())
    parts.append(np.ascontiguousarray(factors.eigvals, dtype=le).tobytes())
    parts.append(np.ascontiguousarray(dataset.order.rdiag, dtype=le).tobytes())
    parts.append(np.array([dataset.scaling.alpha], dtype=le).tobytes())
    for rs in dataset.scaling.row_sums:
        parts.append(np.ascontiguousarray(rs, dtype=le).tobytes())
    for raw in dataset.raw:
        parts.append(np.ascontiguousarray(raw, dtype=le).tobytes())
    meta = json.dumps({"class_names": factors.class_names, "layout": dataset.layout.to_dict()}).encode("utf-8")
    parts.append(struct.pack("<I", len(meta)) + meta)
    try:
        Path(path).write_bytes(b"".join(parts))
    except OSError as exc:
        raise WsdpaError(f"cannot write {path}: {exc}") from exc
    return Path(path)


def load_factors(path):
    """Inverse of :func:`save_factors`; returns (HogsvdFactors, DatasetTensor)."""
    buf = _read_bytes(path)
    if buf[:6] != MAGIC:
        raise WsdpaError(f"{path}: not a factor container (bad magic)")
    pos = 6

    def take(dtype, count):
        nonlocal pos
        size = np.dtype(dtype).itemsize * count
        if pos + size > len(buf):
            raise WsdpaError(f"{path}: truncated factor container")
        out = np.frombuffer(buf, dtype=dtype, count=count, offset=pos).copy()
        pos += size
        return out

    c, m, full = (int(v) for v in take("<u4", 3))
    counts = [int(v) for v in take("<u4", c)]
    v = take("<f8", m * m).reshape(m, m)
    us, sigmas = [], []
    for n in counts:
        us.append(take("<f8", n * m).reshape(n, m))
        sigmas.append(take("<f8", m))
    perm = take("<i8", full)
    eigvals = take("<f8", m)
    rdiag = take("<f8", full)
    alpha = float(take("<f8", 1)[0])
    row_sums = [take("<f8", n) for n in counts]
    raw = [take("<f8", n * full).reshape(n, full) for n in counts]
    (mlen,) = take("<u4", 1)
    if pos + int(mlen) > len(buf):
        raise WsdpaError(f"{path}: truncated factor container")
    meta = json.loads(buf[pos:pos + int(mlen)].decode("utf-8"))
    names = meta["class_names"]
    layout = CoeffLayout.from_dict(meta["layout"])
    scaling = ScalingRecord(alpha, row_sums)
    stacks = [r[:, perm[:m]] * (alpha / s)[:, None] for r, s in zip(raw, row_sums)]
    dataset = DatasetTensor(stacks, names, PivotOrder(perm, rdiag), m, layout, scaling, raw)
    return HogsvdFactors(v, us, sigmas, names, eigvals), dataset
