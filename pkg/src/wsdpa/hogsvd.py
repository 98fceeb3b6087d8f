"""Higher-order generalized SVD of a set of full-column-rank class stacks.

Each stack factors as ``D_i = U_i @ diag(sigma_i) @ V.T`` with one right
basis ``V`` shared by all classes. ``V`` holds the eigenvectors of the
balance matrix

    T = 1/(c(c-1)) * sum_{i<j} (A_i A_j^-1 + A_j A_i^-1),   A_i = D_i^T D_i.

Since sum_{i!=j} A_i A_j^-1 = (sum A_i)(sum A_j^-1) - c I, T is similar to
the symmetric positive definite matrix L^T W L, where L L^T = sum A_i and
W = sum A_j^-1. The eigenproblem is solved in that symmetric form, using
only triangular factors of the stacks, so no Gram matrix is ever inverted.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import WsdpaError

log = logging.getLogger(__name__)

METHODS = ("hogsvd",)

# reciprocal condition estimate below which a stack counts as rank deficient
_SINGULAR_RCOND = 1e-14


@dataclass
class HogsvdFactors:
    V: np.ndarray
    U: list
    sigma: list
    class_names: list
    eigvals: np.ndarray

    @property
    def m(self) -> int:
        return self.V.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.U)

    def class_index(self, name_or_index) -> int:
        if isinstance(name_or_index, (int, np.integer)):
            i = int(name_or_index)
            if not 0 <= i < self.n_classes:
                raise WsdpaError(f"class index {i} out of range [0, {self.n_classes})")
            return i
        try:
            return self.class_names.index(name_or_index)
        except ValueError:
            raise WsdpaError(f"unknown class {name_or_index!r}; known: {', '.join(self.class_names)}") from None

    def coords(self, i: int) -> np.ndarray:
        """Rows of U_i diag(sigma_i): per-image pattern weights."""
        return self.U[i] * self.sigma[i]


def _upper_r(d):
    r = scipy.linalg.qr(d, mode="r")[0][: d.shape[1]]
    diag = np.abs(np.diag(r))
    if diag.min() <= _SINGULAR_RCOND * diag.max():
        return r, False
    return r, True


def hogsvd(stacks, class_names=None, method: str = "hogsvd") -> HogsvdFactors:
    """Decompose ``stacks`` (a list of n_i x m arrays, or a DatasetTensor)."""
    if method.lower() not in METHODS:
        raise WsdpaError(f"unsupported decomposition method {method!r}; supported: {', '.join(METHODS)}")
    if hasattr(stacks, "stacks"):
        class_names = class_names or stacks.class_names
        stacks = stacks.stacks
    mats = [np.asarray(s, dtype=np.float64) for s in stacks]
    c = len(mats)
    if c < 2:
        raise WsdpaError("HO-GSVD needs at least two class stacks")
    m = mats[0].shape[1]
    for i, d in enumerate(mats):
        if d.ndim != 2 or d.shape[1] != m:
            raise WsdpaError(f"class {i}: stack shape {d.shape} is inconsistent with m={m}")
        if d.shape[0] < m:
            raise WsdpaError(f"class {i}: {d.shape[0]} rows < {m} columns, cannot have full column rank")

    rs = []
    for i, d in enumerate(mats):
        r, ok = _upper_r(d)
        if not ok:
            raise WsdpaError(f"class {i}: stack is numerically rank deficient; lower tau to select fewer coefficients")
        rs.append(r)
    r_all = scipy.linalg.qr(np.vstack(mats), mode="r")[0][:m]  # sum A_i = r_all^T r_all

    # L^T W L with L = r_all^T:  sum_j X_j^T X_j,  X_j = R_j^-T r_all^T
    sym = np.zeros((m, m))
    for r in rs:
        x = scipy.linalg.solve_triangular(r, r_all.T, trans="T")
        sym += x.T @ x
    sym = 0.5 * (sym + sym.T)
    try:
        mu, y = scipy.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise WsdpaError(f"eigensolver failed: {exc}") from exc
    order = np.argsort(-mu, kind="stable")
    mu, y = mu[order], y[:, order]
    eigvals = (mu - c) / (c * (c - 1))

    v_raw = r_all.T @ y
    norms = np.linalg.norm(v_raw, axis=0)
    v = v_raw / norms
    pivot = np.argmax(np.abs(v), axis=0)
    signs = np.where(v[pivot, np.arange(m)] < 0, -1.0, 1.0)
    v *= signs

    # B_i = D_i V^-T;  V = r_all^T y diag(signs / norms)  =>  B_i^T = diag(norms*signs) y^T r_all^-T D_i^T
    scale = norms * signs
    us, sigmas = [], []
    for i, d in enumerate(mats):
        bt = y.T @ scipy.linalg.solve_triangular(r_all, d.T, trans="T")
        b = (bt * scale[:, None]).T
        sig = np.linalg.norm(b, axis=0)
        if np.any(sig <= 0):
            raise WsdpaError(f"class {i}: zero generalized singular value")
        us.append(b / sig)
        sigmas.append(sig)

    if log.isEnabledFor(logging.DEBUG):
        log.debug("max |V^T V - I| = %.3e", np.abs(v.T @ v - np.eye(m)).max())
    names = list(class_names) if class_names is not None else [str(i) for i in range(c)]
    return HogsvdFactors(v, us, sigmas, names, eigvals)


def rank1_partial(factors: HogsvdFactors, i: int, k: int) -> np.ndarray:
    """Sum of the first ``k`` rank-1 terms sigma_j U_i[:, j] V[:, j]^T for class ``i``."""
    m = factors.m
    if not 0 <= k <= m:
        raise WsdpaError(f"term count {k} outside [0, {m}]")
    u = factors.U[i][:, :k] * factors.sigma[i][:k]
    return u @ factors.V[:, :k].T
