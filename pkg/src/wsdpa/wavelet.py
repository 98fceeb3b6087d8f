"""Multi-level separable 2D DWT with half-point symmetric extension.

Coefficient vectors are laid out channel-major; within a channel the
coarsest approximation comes first, followed by the (H, V, D) detail
subbands from the coarsest level down to level 1, each subband row-major.
This matches ``pywt.wavedec2`` with ``mode="symmetric"``.

The ``identity`` basis maps pixels one-to-one onto coefficients and is used
for the pixel-space baseline.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .errors import WsdpaError

# Daubechies reconstruction low-pass (scaling) filters.
_DB_REC_LO = {
    "db1": (0.7071067811865476, 0.7071067811865476),
    "db2": (0.48296291314453416, 0.8365163037378079, 0.2241438680420134, -0.12940952255126037),
    "db3": (
        0.33267055295008263, 0.8068915093110925, 0.45987750211849154,
        -0.13501102001025458, -0.08544127388202666, 0.03522629188570953,
    ),
    "db4": (
        0.2303778133088965, 0.7148465705529157, 0.6308807679298589, -0.027983769416859854,
        -0.18703481171909309, 0.030841381835560764, 0.0328830116668852, -0.010597401785069032,
    ),
    "db5": (
        0.16010239797419293, 0.6038292697971896, 0.7243085284377729, 0.13842814590132074,
        -0.24229488706638203, -0.032244869584638375, 0.07757149384004572, -0.006241490212798274,
        -0.012580751999081999, 0.0033357252854737712,
    ),
}
_DB_REC_LO["haar"] = _DB_REC_LO["db1"]

BASIS_NAMES = ("haar", "db1", "db2", "db3", "db4", "db5", "identity")


@dataclass(frozen=True, eq=False)
class WaveletBasis:
    name: str
    dec_lo: np.ndarray
    dec_hi: np.ndarray
    rec_lo: np.ndarray
    rec_hi: np.ndarray

    @property
    def is_identity(self) -> bool:
        return self.name == "identity"

    @property
    def filter_length(self) -> int:
        return int(self.dec_lo.size)


@lru_cache(maxsize=None)
def get_basis(name: str) -> WaveletBasis:
    """Look up a basis by name (haar, db1..db5, identity)."""
    key = name.lower()
    if key == "identity":
        empty = np.zeros(0)
        return WaveletBasis("identity", empty, empty, empty, empty)
    if key not in _DB_REC_LO:
        raise WsdpaError(f"unknown wavelet basis {name!r}; expected one of {', '.join(BASIS_NAMES)}")
    rec_lo = np.array(_DB_REC_LO[key])
    f = rec_lo.size
    rec_hi = np.array([(-1) ** k * rec_lo[f - 1 - k] for k in range(f)])
    basis = WaveletBasis(key, rec_lo[::-1].copy(), rec_hi[::-1].copy(), rec_lo, rec_hi)
    for arr in (basis.dec_lo, basis.dec_hi, basis.rec_lo, basis.rec_hi):
        arr.setflags(write=False)
    return basis


def _as_basis(basis) -> WaveletBasis:
    return basis if isinstance(basis, WaveletBasis) else get_basis(basis)


@dataclass(frozen=True)
class CoeffLayout:
    """Book-keeping needed to invert a decomposition.

    ``level_shapes[l]`` is the (rows, cols) of the array fed into level
    ``l + 1``; ``subband_shapes[l]`` is the shape of each of the four
    subbands that level produces.
    """

    basis: str
    levels: int
    image_shape: tuple  # (height, width, channels)
    level_shapes: tuple = ()
    subband_shapes: tuple = ()

    @property
    def channels(self) -> int:
        return self.image_shape[2]

    @property
    def per_channel(self) -> int:
        if self.basis == "identity":
            return self.image_shape[0] * self.image_shape[1]
        h, w = self.subband_shapes[-1]
        return h * w + sum(3 * r * c for r, c in self.subband_shapes)

    @property
    def size(self) -> int:
        return self.channels * self.per_channel

    def subbands(self):
        """Yield (level, name, shape) for one channel, in storage order."""
        if self.basis == "identity":
            yield 0, "P", self.image_shape[:2]
            return
        yield self.levels, "A", self.subband_shapes[-1]
        for lev in range(self.levels, 0, -1):
            shape = self.subband_shapes[lev - 1]
            for name in ("H", "V", "D"):
                yield lev, name, shape

    def to_dict(self) -> dict:
        return {
            "basis": self.basis,
            "levels": self.levels,
            "image_shape": list(self.image_shape),
            "level_shapes": [list(s) for s in self.level_shapes],
            "subband_shapes": [list(s) for s in self.subband_shapes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoeffLayout":
        return cls(
            d["basis"],
            int(d["levels"]),
            tuple(d["image_shape"]),
            tuple(tuple(s) for s in d["level_shapes"]),
            tuple(tuple(s) for s in d["subband_shapes"]),
        )


def make_layout(image_shape, basis, levels: int = 1) -> CoeffLayout:
    """Compute the layout for images of ``image_shape`` without transforming anything."""
    basis = _as_basis(basis)
    if len(image_shape) == 2:
        image_shape = (*image_shape, 1)
    h, w, c = (int(v) for v in image_shape)
    if h < 1 or w < 1 or c < 1:
        raise WsdpaError(f"invalid image shape {image_shape}")
    if basis.is_identity:
        return CoeffLayout("identity", 0, (h, w, c))
    if levels < 1:
        raise WsdpaError(f"level count must be >= 1, got {levels}")
    f = basis.filter_length
    need = max(2, f - 1)
    level_shapes, subband_shapes = [], []
    for lev in range(1, levels + 1):
        if h < need or w < need:
            raise WsdpaError(
                f"level {lev}: input of size {h}x{w} is too small for {basis.name} "
                f"(filter length {f} needs at least {need} samples per axis)"
            )
        level_shapes.append((h, w))
        h, w = (h + f - 1) // 2, (w + f - 1) // 2
        subband_shapes.append((h, w))
    return CoeffLayout(basis.name, levels, (*level_shapes[0], c), tuple(level_shapes), tuple(subband_shapes))


def _as_batch(images) -> np.ndarray:
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim == 3:
        arr = arr[..., None]
    if arr.ndim != 4:
        raise WsdpaError(f"expected a batch of images (B, H, W[, C]), got shape {arr.shape}")
    return arr


def _analyze_axis(x, basis):
    # x: (K, h, w); filters along the last axis.
    k, h, w = x.shape
    a, d = kernels.dwt_rows(x.reshape(k * h, w), basis.dec_lo, basis.dec_hi)
    return a.reshape(k, h, -1), d.reshape(k, h, -1)


def _synthesize_axis(a, d, basis, n_out):
    k, h, n_in = a.shape
    y = kernels.idwt_rows(a.reshape(k * h, n_in), d.reshape(k * h, n_in), basis.rec_lo, basis.rec_hi, n_out)
    return y.reshape(k, h, n_out)


def wavedec_batch(images, basis="db2", levels: int = 1):
    """Decompose a batch of images.

    Parameters
    ----------
    images : array_like, shape (B, H, W) or (B, H, W, C)
    basis : str or WaveletBasis
    levels : int
        Ignored for the identity basis.

    Returns
    -------
    coeffs : ndarray, shape (B, layout.size)
    layout : CoeffLayout
    """
    basis = _as_basis(basis)
    arr = _as_batch(images)
    b, h, w, c = arr.shape
    layout = make_layout((h, w, c), basis, levels)
    planes = np.ascontiguousarray(arr.transpose(0, 3, 1, 2)).reshape(b * c, h, w)
    if basis.is_identity:
        return planes.reshape(b, c * h * w).copy(), layout

    pieces = []
    cur = planes
    for _ in range(layout.levels):
        lo_w, hi_w = _analyze_axis(cur, basis)
        # filter along rows (height) by moving that axis last
        aa, da = _analyze_axis(np.ascontiguousarray(lo_w.transpose(0, 2, 1)), basis)
        ad, dd = _analyze_axis(np.ascontiguousarray(hi_w.transpose(0, 2, 1)), basis)
        cur = aa.transpose(0, 2, 1)
        pieces.append((da.transpose(0, 2, 1), ad.transpose(0, 2, 1), dd.transpose(0, 2, 1)))
    flat = [cur.reshape(b * c, -1)]
    for det in reversed(pieces):
        flat.extend(s.reshape(b * c, -1) for s in det)
    out = np.concatenate(flat, axis=1)
    return out.reshape(b, c * layout.per_channel), layout


def wavedec(x, basis="db2", levels: int = 1):
    """Decompose one image of shape (H, W) or (H, W, C); returns (coeffs, layout)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim not in (2, 3):
        raise WsdpaError(f"expected an image of shape (H, W[, C]), got {arr.shape}")
    coeffs, layout = wavedec_batch(arr[None], basis, levels)
    return coeffs[0], layout


def waverec_batch(coeffs, layout: CoeffLayout, basis=None) -> np.ndarray:
    """Invert :func:`wavedec_batch`; returns images of shape (B, H, W, C).

    Values are not clipped.
    """
    basis = _as_basis(layout.basis if basis is None else basis)
    if basis.name != layout.basis:
        raise WsdpaError(f"layout was built for basis {layout.basis!r}, got {basis.name!r}")
    arr = np.asarray(coeffs, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None]
    if arr.ndim != 2 or arr.shape[1] != layout.size:
        raise WsdpaError(f"coefficient array of shape {arr.shape} does not match layout size {layout.size}")
    b = arr.shape[0]
    h, w, c = layout.image_shape
    per = arr.reshape(b * c, layout.per_channel)
    if basis.is_identity:
        return per.reshape(b, c, h, w).transpose(0, 2, 3, 1).copy()

    pos = 0

    def take(shape):
        nonlocal pos
        n = shape[0] * shape[1]
        out = per[:, pos:pos + n].reshape(b * c, *shape)
        pos += n
        return out

    cur = take(layout.subband_shapes[-1])
    for lev in range(layout.levels, 0, -1):
        shape = layout.subband_shapes[lev - 1]
        da, ad, dd = take(shape), take(shape), take(shape)
        rows, cols = layout.level_shapes[lev - 1]
        if cur.shape[1:] != tuple(shape):
            raise WsdpaError(f"level {lev}: approximation shape {cur.shape[1:]} != subband shape {shape}")
        # undo the height-axis split, then the width-axis split
        lo_w = _synthesize_axis(
            np.ascontiguousarray(cur.transpose(0, 2, 1)), np.ascontiguousarray(da.transpose(0, 2, 1)), basis, rows
        ).transpose(0, 2, 1)
        hi_w = _synthesize_axis(
            np.ascontiguousarray(ad.transpose(0, 2, 1)), np.ascontiguousarray(dd.transpose(0, 2, 1)), basis, rows
        ).transpose(0, 2, 1)
        cur = _synthesize_axis(np.ascontiguousarray(lo_w), np.ascontiguousarray(hi_w), basis, cols)
    return cur.reshape(b, c, h, w).transpose(0, 2, 3, 1).copy()


def waverec(coeffs, layout: CoeffLayout, basis=None) -> np.ndarray:
    """Invert :func:`wavedec`; returns an (H, W, C) image."""
    arr = np.asarray(coeffs, dtype=np.float64)
    if arr.ndim != 1:
        raise WsdpaError("waverec expects a flat coefficient vector; use waverec_batch for stacks")
    return waverec_batch(arr[None], layout, basis)[0]


def scatter(values, perm, m: int, fill=None) -> np.ndarray:
    """Place ``values[j]`` at ``perm[j]`` for ``j < m``; other slots come from ``fill``.

    ``fill`` defaults to zeros. Works row-wise when ``values`` and ``fill``
    are 2D.
    """
    perm = np.asarray(perm)
    values = np.asarray(values, dtype=np.float64)
    if m < 0 or m > perm.size:
        raise WsdpaError(f"selected count {m} outside [0, {perm.size}]")
    if values.shape[-1] != m:
        raise WsdpaError(f"got {values.shape[-1]} values for {m} selected coefficients")
    if fill is None:
        out = np.zeros(values.shape[:-1] + (perm.size,))
    else:
        out = np.array(fill, dtype=np.float64, copy=True)
        if out.shape[-1] != perm.size:
            raise WsdpaError(f"fill length {out.shape[-1]} != permutation length {perm.size}")
    out[..., perm[:m]] = values
    return out
