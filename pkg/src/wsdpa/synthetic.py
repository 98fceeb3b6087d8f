"""Seeded synthetic datasets with planted class-exclusive patterns."""
from __future__ import annotations

import numpy as np

from .dataio import LabeledDataset
from .wavelet import make_layout, waverec


def planted_patterns(rng, layout, count: int, support: int = 4, max_overlap: float = 0.5) -> np.ndarray:
    """Pixel images of ``count`` sparse unit-norm coefficient vectors.

    Boundary coefficients of an expansive transform can rebuild to nearly the
    same image, so a draw whose |cosine| with an earlier pattern exceeds
    ``max_overlap`` is rejected and redrawn.
    """
    out = []
    for _ in range(1000 * count):
        if len(out) == count:
            break
        coeffs = np.zeros(layout.size)
        idx = rng.choice(layout.size, size=support, replace=False)
        coeffs[idx] = rng.choice([-1.0, 1.0], size=support) * rng.uniform(0.5, 1.0, size=support)
        img = waverec(coeffs, layout).ravel()
        img /= np.linalg.norm(img)
        if all(abs(img @ prev) <= max_overlap for prev in out):
            out.append(img)
    if len(out) < count:
        raise ValueError(f"could not draw {count} distinct patterns")
    return np.stack(out).reshape(count, *layout.image_shape)


def planted_dataset(n_per_class: int = 200, size: int = 16, n_classes: int = 2, patterns_per_class: int = 3,
                    amplitude: float = 1.0, noise: float = 0.01, background: float = 0.5, channels: int = 1, support: int = 4,
                    basis: str = "db2", seed: int = 0):
    """Images = background + class-exclusive planted patterns + white noise.

    Every image of class ``i`` mixes all of that class's patterns with weights
    drawn from ``amplitude * U(-1, 1)`` and then centered per class, so the
    planted part has no sample correlation with the shared background.
    Returns the dataset and
    the planted pattern images, shape (n_classes, patterns_per_class, H, W, C).
    """
    rng = np.random.default_rng(seed)
    layout = make_layout((size, size, channels), basis, 1)
    patterns = planted_patterns(rng, layout, n_classes * patterns_per_class, support)
    patterns = patterns.reshape(n_classes, patterns_per_class, size, size, channels)
    images, labels = [], []
    for i in range(n_classes):
        w = amplitude * rng.uniform(-1.0, 1.0, size=(n_per_class, patterns_per_class))
        w -= w.mean(axis=0)
        imgs = background + np.einsum("np,phwc->nhwc", w, patterns[i])
        imgs += noise * rng.standard_normal(imgs.shape)
        images.append(imgs)
        labels.append(np.full(n_per_class, i))
    ds = LabeledDataset(np.concatenate(images), np.concatenate(labels), [f"class{i}" for i in range(n_classes)])
    return ds, patterns
