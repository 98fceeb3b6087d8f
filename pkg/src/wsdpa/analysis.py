"""Interpretation of HO-GSVD factors: class association, patterns, low-rank
reconstructions, contribution coordinates and similarity structure."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .errors import WsdpaError
from .hogsvd import HogsvdFactors
from .selection import DatasetTensor
from .wavelet import scatter, waverec, waverec_batch

DEFAULT_CHECKPOINTS = (100, 200, 300, 500, 1000, 1500, 2000, 3000)
DEFAULT_DOMINANCE = 2.0


@dataclass
class AssociationTable:
    sigma: np.ndarray  # (c, m)
    ratio: np.ndarray  # (c, m): sigma over the largest sigma of any other class
    class_names: list

    @property
    def m(self) -> int:
        return self.sigma.shape[1]

    def angular(self, a: int, b: int) -> np.ndarray:
        return _angular(self.sigma[a], self.sigma[b])

    def best_class(self) -> np.ndarray:
        return np.argmax(self.sigma, axis=0)


@dataclass
class PatternImage:
    k: int
    image: np.ndarray
    sigma: np.ndarray  # per-class singular values of this pattern
    ratio: np.ndarray


@dataclass
class ResidualCurve:
    ks: np.ndarray
    residuals: np.ndarray

    def pairs(self):
        return list(zip(self.ks.tolist(), self.residuals.tolist()))


@dataclass
class SimilarityMatrix:
    W: np.ndarray
    bandwidth: float


def association_table(factors: HogsvdFactors) -> AssociationTable:
    sig = np.vstack(factors.sigma)
    c = sig.shape[0]
    if c < 2:
        raise WsdpaError("association needs at least two classes")
    ratio = np.empty_like(sig)
    for i in range(c):
        others = np.delete(sig, i, axis=0).max(axis=0)
        ratio[i] = sig[i] / others
    return AssociationTable(sig, ratio, list(factors.class_names))


def _angular(sa, sb):
    return np.abs(np.arctan(np.asarray(sa) / np.asarray(sb)) - np.pi / 4)


def angular_distance(factors: HogsvdFactors, a, b) -> np.ndarray:
    """|arctan(sigma_a / sigma_b) - pi/4| per pattern, in radians."""
    ia, ib = factors.class_index(a), factors.class_index(b)
    if ia == ib:
        raise WsdpaError("angular distance needs two different classes")
    return _angular(factors.sigma[ia], factors.sigma[ib])


def dominant_patterns(table: AssociationTable, i: int, count: int | None = None,
                      threshold: float | None = None) -> np.ndarray:
    """Pattern indices sorted by descending dominance ratio for class ``i``.

    With ``threshold`` only patterns whose ratio reaches it are returned;
    ``count`` truncates the list.
    """
    r = table.ratio[i]
    order = np.argsort(-r, kind="stable")
    if threshold is not None:
        order = order[r[order] >= threshold]
    if count is not None:
        if count < 0:
            raise WsdpaError("count must be non-negative")
        order = order[:count]
    return order


def pattern_image(factors: HogsvdFactors, dataset: DatasetTensor, k: int) -> PatternImage:
    """Pixel-space rendering of pattern ``k`` (column k of V); values unclamped."""
    if not 0 <= k < factors.m:
        raise WsdpaError(f"pattern index {k} outside [0, {factors.m})")
    coeffs = scatter(factors.V[:, k], dataset.perm, dataset.m)
    table = association_table(factors)
    return PatternImage(k, waverec(coeffs, dataset.layout), table.sigma[:, k].copy(), table.ratio[:, k].copy())


def pattern_images(factors: HogsvdFactors, dataset: DatasetTensor, ks) -> np.ndarray:
    ks = np.asarray(ks, dtype=int)
    if ks.size == 0:
        h, w, c = dataset.layout.image_shape
        return np.zeros((0, h, w, c))
    coeffs = scatter(factors.V[:, ks].T, dataset.perm, dataset.m)
    return waverec_batch(coeffs, dataset.layout)


def _check_row(factors, dataset, i, j):
    if not 0 <= j < factors.U[i].shape[0]:
        raise WsdpaError(f"row {j} outside [0, {factors.U[i].shape[0]}) for class {factors.class_names[i]!r}")
    if not dataset.raw:
        raise WsdpaError("dataset carries no original coefficients; cannot rebuild images")


def original_image(dataset: DatasetTensor, i: int, j: int) -> np.ndarray:
    return waverec(dataset.raw[i][j], dataset.layout)


def _lowrank_rows(factors, dataset, i, j, ks):
    # selected-coefficient rows of the partial sums, unscaled back to raw units
    w = factors.U[i][j] * factors.sigma[i]
    terms = w[None, :] * factors.V  # column t holds term t
    cum = np.cumsum(terms, axis=1)
    unscale = dataset.scaling.row_sums[i][j] / dataset.scaling.alpha
    rows = np.zeros((len(ks), factors.m))
    for n, k in enumerate(ks):
        if k > 0:
            rows[n] = cum[:, k - 1] * unscale
    return rows


def lowrank_image(factors: HogsvdFactors, dataset: DatasetTensor, i, j: int, k: int):
    """Rebuild image ``j`` of class ``i`` from its first ``k`` rank-1 terms.

    Unselected coefficients keep their original values. Returns the image
    and the Frobenius residual against the original.
    """
    i = factors.class_index(i)
    _check_row(factors, dataset, i, j)
    if not 0 <= k <= factors.m:
        raise WsdpaError(f"term count {k} outside [0, {factors.m}]")
    row = _lowrank_rows(factors, dataset, i, j, [k])[0]
    raw = dataset.raw[i][j]
    img = waverec(scatter(row, dataset.perm, dataset.m, raw), dataset.layout)
    return img, float(np.linalg.norm(original_image(dataset, i, j) - img))


def clip_checkpoints(checkpoints, m: int) -> list:
    out = []
    for k in checkpoints:
        k = min(int(k), m)
        if k not in out:
            out.append(k)
    return out


def residual_curve(factors: HogsvdFactors, dataset: DatasetTensor, i, j: int, checkpoints=None,
                   return_images: bool = False):
    """Residuals of cumulative rank-1 reconstructions at each checkpoint.

    Checkpoints must be strictly increasing; the default list is clipped to m.
    """
    i = factors.class_index(i)
    _check_row(factors, dataset, i, j)
    if checkpoints is None:
        ks = clip_checkpoints(DEFAULT_CHECKPOINTS, factors.m)
    else:
        ks = [int(k) for k in checkpoints]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise WsdpaError("checkpoints must be strictly increasing")
        if ks and (ks[0] < 0 or ks[-1] > factors.m):
            raise WsdpaError(f"checkpoints must lie in [0, {factors.m}]")
    rows = _lowrank_rows(factors, dataset, i, j, ks)
    raw = dataset.raw[i][j]
    full = scatter(rows, dataset.perm, dataset.m, np.broadcast_to(raw, (len(ks), raw.size)))
    imgs = waverec_batch(full, dataset.layout) if ks else np.zeros((0, *dataset.layout.image_shape))
    orig = original_image(dataset, i, j)
    res = np.array([np.linalg.norm(orig - im) for im in imgs])
    curve = ResidualCurve(np.array(ks, dtype=int), res)
    return (curve, imgs) if return_images else curve


def project_coefficients(factors: HogsvdFactors, dataset: DatasetTensor, raw_row) -> np.ndarray:
    """Pattern weights of an image outside the training stacks.

    The row is row-sum normalized like the training images, restricted to the
    selected coefficients, then expressed in the basis V.
    """
    raw_row = np.asarray(raw_row, dtype=np.float64)
    s = raw_row.sum()
    if s == 0:
        raise WsdpaError("coefficient sum is 0; cannot normalize")
    x = raw_row[dataset.perm[: dataset.m]] * (dataset.scaling.alpha / s)
    return np.linalg.solve(factors.V, x)


def lowrank_external(factors: HogsvdFactors, dataset: DatasetTensor, raw_row, checkpoints):
    """Cumulative reconstructions of a new image using the training-set patterns.

    Returns (images, residuals) for each checkpoint.
    """
    raw_row = np.asarray(raw_row, dtype=np.float64)
    w = project_coefficients(factors, dataset, raw_row)
    unscale = raw_row.sum() / dataset.scaling.alpha
    cum = np.cumsum(w[None, :] * factors.V, axis=1)
    rows = np.array([cum[:, k - 1] * unscale if k > 0 else np.zeros(factors.m) for k in checkpoints])
    full = scatter(rows, dataset.perm, dataset.m, np.broadcast_to(raw_row, (len(rows), raw_row.size)))
    imgs = waverec_batch(full, dataset.layout)
    orig = waverec(raw_row, dataset.layout)
    return imgs, np.array([np.linalg.norm(orig - im) for im in imgs])


def contribution_coords(factors: HogsvdFactors, p: int, q: int):
    """Per-image weights of patterns ``p`` and ``q``.

    Returns an (N, 2) array over all images, class by class, and the class
    index of each row.
    """
    if p == q:
        raise WsdpaError("contribution coordinates need two different patterns")
    for k in (p, q):
        if not 0 <= k < factors.m:
            raise WsdpaError(f"pattern index {k} outside [0, {factors.m})")
    xy, tags = [], []
    for i in range(factors.n_classes):
        w = factors.coords(i)
        xy.append(w[:, [p, q]])
        tags.append(np.full(w.shape[0], i))
    return np.vstack(xy), np.concatenate(tags)


def complexity_ranking(factors: HogsvdFactors, i):
    """Rows of class ``i`` ordered by ascending norm of their U_i Sigma_i row."""
    i = factors.class_index(i)
    norms = np.linalg.norm(factors.coords(i), axis=1)
    return np.argsort(norms, kind="stable"), norms


def similarity_matrix(factors: HogsvdFactors, i, bandwidth: float | None = None) -> SimilarityMatrix:
    """Gaussian-kernel similarity between images of class ``i``.

    Distances are taken between rows of U_i Sigma_i. The default bandwidth is
    the median off-diagonal distance (1.0 if that is zero or undefined).
    """
    i = factors.class_index(i)
    if bandwidth is not None and not bandwidth > 0:
        raise WsdpaError(f"bandwidth must be > 0, got {bandwidth}")
    x = factors.coords(i)
    cond = pdist(x) if x.shape[0] > 1 else np.zeros(0)
    if bandwidth is None:
        med = float(np.median(cond)) if cond.size else 0.0
        bandwidth = med if med > 0 else 1.0
    w = squareform(np.exp(-(cond ** 2) / (2.0 * bandwidth ** 2)), checks=False) if cond.size else np.zeros((1, 1))
    np.fill_diagonal(w, 1.0)
    return SimilarityMatrix(w, float(bandwidth))


def isolation_scores(sim) -> np.ndarray:
    """Off-diagonal row sums of the similarity matrix; smallest = most isolated."""
    w = sim.W if isinstance(sim, SimilarityMatrix) else np.asarray(sim)
    return w.sum(axis=1) - np.diag(w)


def randomize_labels(dataset, p: float, seed: int):
    """Relabel a random ``floor(p * N)`` subset with uniformly drawn classes.

    Works on any dataclass with ``labels`` and ``class_names`` fields.
    """
    if not 0.0 <= p <= 1.0:
        raise WsdpaError(f"shuffle fraction must lie in [0, 1], got {p}")
    labels = np.asarray(dataset.labels)
    n = labels.size
    count = int(np.floor(p * n))
    if count == 0:
        return dataset
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=count, replace=False)
    new = labels.copy()
    new[idx] = rng.integers(0, len(dataset.class_names), size=count)
    return dataclasses.replace(dataset, labels=new)
