"""Gray-level quantization, co-occurrence matrices and four Haralick features.

Offsets are ``(dx, dy)`` in pixel units with x growing to the right and y
growing downward. Named directions at distance ``d`` map to::

    0   -> ( d,  0)
    45  -> ( d, -d)
    90  -> ( 0, -d)
    135 -> (-d, -d)

Pairs whose neighbour falls outside the image are skipped, no padding.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

FEATURES = ("contrast", "correlation", "energy", "homogeneity")
DIRECTIONS = (0, 45, 90, 135)


@dataclass(frozen=True)
class QuantizedBand:
    q: np.ndarray
    levels: int

    @property
    def height(self) -> int:
        return self.q.shape[0]

    @property
    def width(self) -> int:
        return self.q.shape[1]


@dataclass(frozen=True)
class GLCMConfig:
    levels: int = 16
    distance: int = 1
    directions: tuple[int, ...] = DIRECTIONS
    symmetric: bool = False
    aggregation: str = "average"

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("levels must be >= 2")
        if self.distance < 1:
            raise ValueError("distance must be >= 1")
        if not self.directions:
            raise ValueError("at least one direction is required")
        bad = [d for d in self.directions if d not in DIRECTIONS]
        if bad:
            raise ValueError(f"unsupported directions {bad}; choose from {DIRECTIONS}")
        if self.aggregation not in ("average", "per-direction"):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        object.__setattr__(self, "directions", tuple(int(d) for d in self.directions))


@dataclass(frozen=True)
class GLCM:
    counts: np.ndarray

    @property
    def levels(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def probs(self) -> np.ndarray:
        total = self.counts.sum()
        if total == 0:
            return np.zeros(self.counts.shape)
        return self.counts / total


def direction_offset(angle: int, distance: int = 1) -> tuple[int, int]:
    d = distance
    table = {0: (d, 0), 45: (d, -d), 90: (0, -d), 135: (-d, -d)}
    try:
        return table[angle]
    except KeyError:
        raise ValueError(f"unsupported direction {angle}") from None


def quantize_band(band: np.ndarray, levels: int) -> QuantizedBand:
    """Min-max scale ``band`` onto ``0..levels-1`` with round-half-up.

    A constant band maps to all zeros.
    """
    if levels < 2:
        raise ValueError("levels must be >= 2")
    band = np.asarray(band, dtype=np.float64)
    if band.size == 0:
        raise ValueError("empty band")
    if not np.all(np.isfinite(band)):
        raise ValueError("band contains non-finite values")
    lo, hi = band.min(), band.max()
    if hi == lo:
        return QuantizedBand(np.zeros(band.shape, dtype=np.int64), levels)
    scaled = (band - lo) / (hi - lo) * (levels - 1)
    q = np.floor(scaled + 0.5).astype(np.int64)
    np.clip(q, 0, levels - 1, out=q)
    return QuantizedBand(q, levels)


def _pairs(q: np.ndarray, dx: int, dy: int) -> tuple[np.ndarray, np.ndarray]:
    """Reference / neighbour arrays for every in-bounds pair at ``(dx, dy)``."""
    h, w = q.shape
    ys = slice(max(0, -dy), h - max(0, dy))
    xs = slice(max(0, -dx), w - max(0, dx))
    yn = slice(max(0, dy), h - max(0, -dy))
    xn = slice(max(0, dx), w - max(0, -dx))
    return q[ys, xs], q[yn, xn]


def compute_glcm(qb: QuantizedBand, offset: tuple[int, int], symmetric: bool = False) -> GLCM:
    """Count gray-level pairs ``(q[p], q[p + offset])``.

    In symmetric mode every pair is also counted reversed, which equals adding
    the matrix for the negated offset.
    """
    dx, dy = offset
    if (dx, dy) == (0, 0):
        raise ValueError("offset must be non-zero")
    if abs(dx) >= qb.width or abs(dy) >= qb.height:
        raise ValueError(f"offset {offset} out of range for a {qb.width}x{qb.height} band")
    g = qb.levels
    ref, nb = _pairs(qb.q, dx, dy)
    counts = np.bincount((ref * g + nb).ravel(), minlength=g * g).reshape(g, g)
    if symmetric:
        counts = counts + counts.T
    return GLCM(counts.astype(np.int64))


def _require_pairs(g: GLCM) -> np.ndarray:
    if g.total == 0:
        raise ValueError("GLCM is empty (no valid pixel pairs)")
    return g.probs


def glcm_contrast(g: GLCM) -> float:
    p = _require_pairs(g)
    i, j = np.indices(p.shape)
    return float(np.sum((i - j) ** 2 * p))


def glcm_correlation(g: GLCM) -> float:
    """Linear dependence of neighbouring levels; NaN when a marginal is degenerate."""
    p = _require_pairs(g)
    levels = np.arange(p.shape[0], dtype=np.float64)
    px, py = p.sum(axis=1), p.sum(axis=0)
    mu_i, mu_j = levels @ px, levels @ py
    sd_i = math.sqrt(max(((levels - mu_i) ** 2) @ px, 0.0))
    sd_j = math.sqrt(max(((levels - mu_j) ** 2) @ py, 0.0))
    if sd_i * sd_j == 0:
        return math.nan
    cov = (levels - mu_i) @ p @ (levels - mu_j)
    return float(cov / (sd_i * sd_j))


def glcm_energy(g: GLCM) -> float:
    p = _require_pairs(g)
    return float(np.sum(p * p))


def glcm_homogeneity(g: GLCM) -> float:
    p = _require_pairs(g)
    i, j = np.indices(p.shape)
    return float(np.sum(p / (1.0 + (i - j) ** 2)))


def glcm_features(g: GLCM) -> tuple[float, float, float, float]:
    """(contrast, correlation, energy, homogeneity) of one matrix."""
    return glcm_contrast(g), glcm_correlation(g), glcm_energy(g), glcm_homogeneity(g)


@dataclass(frozen=True)
class FeatureTable:
    """Texture features, one row per band (or per band and direction).

    ``values`` has shape ``(n_rows, 4)`` in :data:`FEATURES` order. Rows are
    labelled by ``bands``; ``directions`` is set only for per-direction tables.
    """

    bands: tuple
    values: np.ndarray
    directions: tuple[int, ...] | None = None

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, FEATURES.index(name)]
        except ValueError:
            raise ValueError(f"unknown feature {name!r}; choose from {FEATURES}") from None

    def row(self, band) -> dict[str, float]:
        idx = self.bands.index(band)
        return dict(zip(FEATURES, (float(v) for v in self.values[idx])))

    def to_csv(self) -> str:
        head = ["band"] + (["direction"] if self.directions is not None else []) + list(FEATURES)
        lines = [",".join(head)]
        for r, band in enumerate(self.bands):
            cells = [str(band)]
            if self.directions is not None:
                cells.append(str(self.directions[r]))
            cells.extend(format_float(v) for v in self.values[r])
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def format_float(v: float) -> str:
    if math.isnan(v):
        return "NaN"
    return f"{v:.10g}"


def _band_features(band: np.ndarray, cfg: GLCMConfig, levels: int | None = None,
                   identity: bool = False) -> np.ndarray:
    """Per-direction feature rows ``(n_directions, 4)``; empty directions are NaN rows."""
    if identity:
        qb = QuantizedBand(np.asarray(band, dtype=np.int64), levels)
    else:
        qb = quantize_band(band, cfg.levels)
    rows = np.full((len(cfg.directions), 4), np.nan)
    any_pairs = False
    for k, angle in enumerate(cfg.directions):
        dx, dy = direction_offset(angle, cfg.distance)
        if abs(dx) >= qb.width or abs(dy) >= qb.height:
            continue
        g = compute_glcm(qb, (dx, dy), cfg.symmetric)
        if g.total == 0:
            continue
        any_pairs = True
        rows[k] = glcm_features(g)
    if not any_pairs:
        raise ValueError("band has no valid pixel pairs in any direction")
    return rows


def _aggregate(rows: np.ndarray) -> np.ndarray:
    """Average over directions; NaN entries are skipped unless all are NaN."""
    out = np.full(4, np.nan)
    for f in range(4):
        col = rows[:, f]
        ok = ~np.isnan(col)
        if ok.any():
            out[f] = col[ok].mean()
    return out


def texture_features(cube, cfg: GLCMConfig = GLCMConfig(), workers: int = 1) -> FeatureTable:
    """Quantize every band and extract its four GLCM features.

    Per-band work is independent; ``workers > 1`` spreads it over a thread
    pool without changing the result.
    """
    data = cube.data if hasattr(cube, "data") else np.asarray(cube)

    def one(b):
        return _band_features(data[b], cfg)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_band = list(pool.map(one, range(data.shape[0])))
    else:
        per_band = [one(b) for b in range(data.shape[0])]
    return _assemble(list(range(data.shape[0])), per_band, cfg)


def ground_truth_features(gt, cfg: GLCMConfig = GLCMConfig()) -> FeatureTable:
    """Feature row of the label map itself, gray level = class label."""
    rows = _band_features(gt.labels, cfg, levels=gt.n_classes + 1, identity=True)
    return _assemble(["gt"], [rows], cfg)


def _assemble(names: list, per_band: list[np.ndarray], cfg: GLCMConfig) -> FeatureTable:
    if cfg.aggregation == "average":
        return FeatureTable(tuple(names), np.array([_aggregate(r) for r in per_band]).reshape(-1, 4))
    bands, dirs, values = [], [], []
    for name, rows in zip(names, per_band):
        for angle, row in zip(cfg.directions, rows):
            bands.append(name)
            dirs.append(angle)
            values.append(row)
    return FeatureTable(tuple(bands), np.array(values).reshape(-1, 4), tuple(dirs))
