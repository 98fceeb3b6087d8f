"""Row-sum normalization and condition-number-bounded coefficient selection."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import kernels
from .errors import WsdpaError
from .wavelet import CoeffLayout

log = logging.getLogger(__name__)

DEFAULT_TAU = 1e6
# tau that gave m = 3000 on CIFAR-10 cat/dog with db2, N=1
CIFAR_CAT_DOG_TAU = 7e4


@dataclass
class ScalingRecord:
    alpha: float
    row_sums: list  # one array of pre-scaling row sums per class

    def multipliers(self, i: int) -> np.ndarray:
        return self.alpha / self.row_sums[i]


@dataclass
class PivotOrder:
    perm: np.ndarray
    rdiag: np.ndarray


@dataclass
class SelectionConfig:
    tau: float = DEFAULT_TAU
    m_override: int | None = None

    def __post_init__(self):
        if not self.tau > 1:
            raise WsdpaError(f"tau must be > 1, got {self.tau}")
        if self.m_override is not None and self.m_override < 1:
            raise WsdpaError(f"m must be >= 1, got {self.m_override}")


@dataclass
class DatasetTensor:
    """Per-class stacks restricted to the ``m`` selected coefficients.

    ``stacks[i]`` is the scaled ``n_i x m`` matrix; ``raw[i]`` keeps the full
    unscaled coefficient rows so images can be rebuilt.
    """

    stacks: list
    class_names: list
    order: PivotOrder
    m: int
    layout: CoeffLayout
    scaling: ScalingRecord
    raw: list = field(default_factory=list)

    @property
    def perm(self) -> np.ndarray:
        return self.order.perm

    @property
    def counts(self) -> list:
        return [s.shape[0] for s in self.stacks]


def scale_rows(stacks):
    """Scale each row so that every image's coefficients sum to the global mean.

    Returns the scaled stacks and a :class:`ScalingRecord`.
    """
    stacks = [np.asarray(s, dtype=np.float64) for s in stacks]
    if not stacks or any(s.ndim != 2 for s in stacks):
        raise WsdpaError("expected a non-empty list of 2D coefficient stacks")
    width = stacks[0].shape[1]
    if any(s.shape[1] != width for s in stacks):
        raise WsdpaError("all class stacks must have the same number of coefficients")
    total = sum(s.size for s in stacks)
    alpha = float(sum(s.sum() for s in stacks) / total)
    mean_abs = sum(np.abs(s).sum() for s in stacks) / total
    floor = 1e-12 * mean_abs * width
    row_sums = []
    scaled = []
    for i, s in enumerate(stacks):
        sums = s.sum(axis=1)
        bad = np.flatnonzero(~(np.abs(sums) > floor))
        if bad.size:
            raise WsdpaError(f"class {i}, row {int(bad[0])}: coefficient sum is ~0, cannot normalize (degenerate image)")
        row_sums.append(sums)
        scaled.append(s * (alpha / sums)[:, None])
    return scaled, ScalingRecord(alpha, row_sums)


def rrqr_order(a) -> PivotOrder:
    """Order the columns of ``a`` by greedy column-pivoted Householder QR.

    For tall inputs the pivoting runs on the triangular factor of an
    unpivoted QR: left-multiplying by an orthogonal matrix leaves every
    residual column norm unchanged, so the pivot sequence is the same.
    Only distinct columns are factored and then copied back, so columns that
    are byte-identical in ``a`` stay byte-identical and tie exactly.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise WsdpaError(f"rrqr_order needs a non-empty 2D matrix, got shape {a.shape}")
    n, m = a.shape
    if n > m:
        uniq, inverse = np.unique(a, axis=1, return_inverse=True)
        r = scipy.linalg.qr(uniq, mode="r", check_finite=True)[0]
        work = np.zeros((m, m))
        k = min(r.shape[0], m)
        work[:k] = r[:k][:, np.ravel(inverse)]
    else:
        work = a
    perm, rdiag = kernels.pivoted_qr(work)
    return PivotOrder(np.asarray(perm, dtype=np.int64), np.asarray(rdiag))


def condition_number(mat) -> float:
    """2-norm condition number; ``inf`` when the smallest singular value underflows."""
    mat = np.asarray(mat, dtype=np.float64)
    if mat.size == 0 or not np.any(mat):
        raise WsdpaError("condition number of a zero (or empty) matrix is undefined")
    s = scipy.linalg.svdvals(mat)
    if s.size < min(mat.shape) or s[-1] < 1e-300:
        return float("inf")
    return float(s[0] / s[-1])


def _largest_prefix(r, limit: int, tau: float) -> int:
    """Largest gamma <= limit with cond(r[:gamma, :gamma]) <= tau, or 0."""

    def ok(g):
        block = r[:g, :g]
        return bool(np.any(block)) and condition_number(block) <= tau

    if not ok(1):
        return 0
    lo, hi = 1, None
    g = 2
    while g <= limit:
        if ok(g):
            lo = g
            g *= 2
        else:
            hi = g
            break
    if hi is None:
        if lo == limit or ok(limit):
            return limit
        hi = limit
    # bracket (lo, hi): lo passes, hi fails
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _prefix_r(stack, perm, limit):
    cols = stack[:, perm[:limit]]
    return scipy.linalg.qr(cols, mode="r")[0][:limit, :limit]


def select_coefficients(stacks, order: PivotOrder, cfg: SelectionConfig, *, layout=None, scaling=None,
                        class_names=None, raw=None) -> DatasetTensor:
    """Keep the leading ``m`` pivoted columns so every class stack has cond <= tau.

    Per class, gamma_i is the longest prefix of ``order.perm`` (capped at
    n_i) whose restricted stack has condition number at most ``tau``. Adding
    a column can only grow sigma_max and shrink sigma_min of a tall matrix,
    so the condition number is non-decreasing in gamma and a doubling search
    followed by bisection finds the largest admissible prefix.
    """
    stacks = [np.asarray(s, dtype=np.float64) for s in stacks]
    if len(stacks) < 2:
        raise WsdpaError("need at least two classes")
    total = sum(s.shape[0] for s in stacks)
    if total < 2:
        raise WsdpaError("need at least two images")
    perm = np.asarray(order.perm)
    full = perm.size
    if total < full:
        warnings.warn("Samples are fewer than features.", stacklevel=2)
        log.warning("Samples are fewer than features (%d images, %d coefficients)", total, full)

    if cfg.m_override is not None:
        m = int(cfg.m_override)
        for i, s in enumerate(stacks):
            if m > min(s.shape[0], full):
                raise WsdpaError(f"m={m} infeasible: class {i} has {s.shape[0]} images and {full} coefficients")
            cols = s[:, perm[:m]]
            kappa = condition_number(cols) if np.any(cols) else float("inf")
            if kappa > cfg.tau:
                raise WsdpaError(f"m={m} infeasible: class {i} condition number {kappa:.3g} exceeds tau={cfg.tau:g}")
    else:
        gammas = []
        for i, s in enumerate(stacks):
            limit = min(s.shape[0], full)
            g = _largest_prefix(_prefix_r(s, perm, limit), limit, cfg.tau)
            if g == 0:
                raise WsdpaError(f"class {i}: even one coefficient violates cond <= tau={cfg.tau:g}")
            gammas.append(g)
        m = min(gammas)
        log.info("per-class gamma %s -> m = %d", gammas, m)

    selected = [s[:, perm[:m]].copy() for s in stacks]
    for i, s in enumerate(selected):
        kappa = condition_number(s)
        if not kappa <= cfg.tau:
            raise WsdpaError(f"class {i}: selected stack has condition number {kappa:.3g} > tau")
    names = list(class_names) if class_names is not None else [str(i) for i in range(len(stacks))]
    return DatasetTensor(selected, names, order, m, layout, scaling, list(raw) if raw is not None else [])
