"""Plug-in (histogram) entropy and mutual information, in bits."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .glcm import quantize_band

MASK_MODES = ("all", "labeled-only")


@dataclass(frozen=True)
class JointHistogram:
    counts: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def n_a(self) -> int:
        return self.counts.shape[0]

    @property
    def n_b(self) -> int:
        return self.counts.shape[1]

    def marginal_a(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def marginal_b(self) -> np.ndarray:
        return self.counts.sum(axis=0)


def joint_histogram(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> JointHistogram:
    """Co-occurrence counts of the integer values of ``a`` and ``b``.

    Bins run from 0 to the largest value present in each grid.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape:
            raise ValueError(f"mask shape {mask.shape} does not match {a.shape}")
        a, b = a[mask], b[mask]
    a = a.ravel().astype(np.int64)
    b = b.ravel().astype(np.int64)
    if a.size == 0:
        raise ValueError("no pixels to count (empty mask)")
    if a.min() < 0 or b.min() < 0:
        raise ValueError("histogram inputs must be non-negative integers")
    n_a, n_b = int(a.max()) + 1, int(b.max()) + 1
    counts = np.bincount(a * n_b + b, minlength=n_a * n_b).reshape(n_a, n_b)
    return JointHistogram(counts)


def entropy(dist) -> float:
    """Shannon entropy in bits of a count or probability array (any shape)."""
    if isinstance(dist, JointHistogram):
        dist = dist.counts
    p = np.asarray(dist, dtype=np.float64).ravel()
    total = p.sum()
    if total <= 0:
        raise ValueError("empty distribution")
    p = p[p > 0] / total
    return float(-np.sum(p * np.log2(p)))


def mi_from_histogram(hist: JointHistogram) -> float:
    """H(A) + H(B) - H(A, B), with tiny negative round-off clamped to 0."""
    mi = entropy(hist.marginal_a()) + entropy(hist.marginal_b()) - entropy(hist.counts)
    if -1e-12 <= mi < 0:
        mi = 0.0
    return mi


def mutual_information(a: np.ndarray, b: np.ndarray, mask: np.ndarray | None = None) -> float:
    return mi_from_histogram(joint_histogram(a, b, mask))


def _mask_for(gt, mask_mode: str) -> np.ndarray | None:
    if mask_mode == "all":
        return None
    if mask_mode == "labeled-only":
        return gt.labels > 0
    raise ValueError(f"unknown mask mode {mask_mode!r}; choose from {MASK_MODES}")


def band_mi(gt, band: np.ndarray, levels: int = 256, mask_mode: str = "all") -> float:
    """MI in bits between the label map and ``band`` quantized to ``levels``."""
    band = np.asarray(band)
    if band.shape != gt.labels.shape:
        raise ValueError(f"band shape {band.shape} does not match ground truth {gt.labels.shape}")
    q = quantize_band(band, levels).q
    return mutual_information(gt.labels, q, _mask_for(gt, mask_mode))


def band_mi_scan(cube, gt, levels: int = 256, mask_mode: str = "all", workers: int = 1) -> np.ndarray:
    """``band_mi`` for every band of ``cube``."""
    gt.check_matches(cube)

    def one(b):
        return band_mi(gt, cube.data[b], levels, mask_mode)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(one, range(cube.n_bands))))
    return np.array([one(b) for b in range(cube.n_bands)])
