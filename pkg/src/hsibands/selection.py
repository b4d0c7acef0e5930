"""Greedy band selection driven by the MI of a running averaged estimate.

Candidates are visited once, in ranking order. The first one is kept
unconditionally and seeds the estimate ``c_est0``. Each following candidate
``s`` is tried as ``c_est = (c_est0 + band[s]) / 2``; it is kept when
``MI(gt, c_est) > mi_star + threshold`` (by more than round-off, see
:data:`ACCEPT_MARGIN`), which then becomes the new
``mi_star`` / ``c_est0``. Negative thresholds tolerate some redundancy.

Two rankings are available:

* ``spectral`` - bands by decreasing MI with the ground truth.
* ``texture``  - bands by one GLCM feature, either decreasing value
  (``feature-argmax``) or increasing distance to the same feature computed
  on the ground-truth map (``gt-feature-similarity``).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .classify import ClassificationReport, SvmParams, classify_bands
from .dataset import GroundTruth, HyperCube, split_train_test
from .glcm import FEATURES, FeatureTable, GLCMConfig, ground_truth_features, quantize_band, texture_features
from .mi import MASK_MODES, band_mi_scan, mutual_information

ALGORITHMS = ("spectral", "texture")
ORDERINGS = ("feature-argmax", "gt-feature-similarity")

# Plug-in MI saturates at H(gt) on small images, so mathematically equal scores
# are common and differ only by round-off. Ranking compares MI rounded to
# RANK_DECIMALS (ties then go to the lower band index), and a candidate is
# accepted only when it beats mi_star + threshold by more than ACCEPT_MARGIN.
RANK_DECIMALS = 10
ACCEPT_MARGIN = 1e-12


@dataclass(frozen=True)
class SelectionConfig:
    algorithm: str = "spectral"
    feature: str = "homogeneity"
    ordering: str = "feature-argmax"
    x: int = 10
    threshold: float = 0.0
    mi_levels: int = 256
    glcm: GLCMConfig = GLCMConfig()
    mask_mode: str = "all"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.feature not in FEATURES:
            raise ValueError(f"unknown feature {self.feature!r}")
        if self.ordering not in ORDERINGS:
            raise ValueError(f"unknown ordering {self.ordering!r}")
        if self.x < 1:
            raise ValueError("x (bands to retain) must be >= 1")
        if not math.isfinite(self.threshold):
            raise ValueError("threshold must be finite")
        if self.mi_levels < 2:
            raise ValueError("mi_levels must be >= 2")
        if self.mask_mode not in MASK_MODES:
            raise ValueError(f"unknown mask mode {self.mask_mode!r}")

    def label(self) -> str:
        if self.algorithm == "spectral":
            return "spectral"
        return f"texture-{self.feature}-{self.ordering}"


@dataclass(frozen=True)
class TraceEntry:
    band: int
    score: float
    mi: float
    accepted: bool


@dataclass
class SelectionResult:
    retained: list[int]
    trace: list[TraceEntry]
    exhausted: bool

    def to_dict(self) -> dict:
        return {
            "retained": list(self.retained),
            "exhausted": self.exhausted,
            "trace": [
                {"band": t.band, "score": _json_float(t.score), "mi": _json_float(t.mi), "accepted": t.accepted}
                for t in self.trace
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "SelectionResult":
        trace = [
            TraceEntry(int(t["band"]), _from_json_float(t["score"]), _from_json_float(t["mi"]), bool(t["accepted"]))
            for t in d["trace"]
        ]
        return cls([int(b) for b in d["retained"]], trace, bool(d["exhausted"]))

    def to_csv(self) -> str:
        lines = ["step,band,score,mi_bits,accepted"]
        for k, t in enumerate(self.trace):
            lines.append(f"{k},{t.band},{_csv_float(t.score)},{_csv_float(t.mi)},{int(t.accepted)}")
        return "\n".join(lines) + "\n"


def _json_float(v: float):
    # NaN is not valid JSON; repr round-trips every finite double exactly
    return None if math.isnan(v) else float(v)


def _from_json_float(v) -> float:
    return math.nan if v is None else float(v)


def _csv_float(v: float) -> str:
    return "NaN" if math.isnan(v) else repr(float(v))


# ---------------------------------------------------------------------------
# ranking


def rank_bands_spectral(cube: HyperCube, gt: GroundTruth, cfg: SelectionConfig = SelectionConfig(),
                        workers: int = 1) -> tuple[list[int], np.ndarray]:
    """Bands by decreasing MI with the ground truth (ties: lower index first).

    Returns the order and the per-band MI scores.
    """
    scores = band_mi_scan(cube, gt, cfg.mi_levels, cfg.mask_mode, workers)
    order = sorted(range(cube.n_bands), key=lambda b: (-round(float(scores[b]), RANK_DECIMALS), b))
    return order, scores


def rank_bands_texture(features: FeatureTable, gt_features: FeatureTable | None = None,
                       cfg: SelectionConfig = SelectionConfig(algorithm="texture")) -> tuple[list[int], np.ndarray]:
    """Bands ordered by one texture feature; NaN scores go last by index.

    Returns the order and the score used for each band (the feature value, or
    its absolute distance to the ground-truth value).
    """
    if features.directions is not None:
        raise ValueError("ranking needs one row per band; use direction-averaged features")
    values = features.column(cfg.feature).astype(np.float64)
    if np.all(np.isnan(values)):
        raise ValueError(f"feature {cfg.feature!r} is NaN for every band")
    if cfg.ordering == "feature-argmax":
        scores = values
        key = lambda b: (math.isnan(scores[b]), -scores[b] if not math.isnan(scores[b]) else 0.0, b)
    else:
        if gt_features is None:
            raise ValueError("gt-feature-similarity ordering needs the ground-truth feature row")
        target = float(gt_features.column(cfg.feature)[0])
        if math.isnan(target):
            raise ValueError(f"ground-truth {cfg.feature} is NaN; similarity ordering is undefined")
        scores = np.abs(values - target)
        key = lambda b: (math.isnan(scores[b]), scores[b] if not math.isnan(scores[b]) else 0.0, b)
    order = sorted(range(values.size), key=key)
    return [int(features.bands[b]) for b in order], scores


def rank_bands(cube: HyperCube, gt: GroundTruth, cfg: SelectionConfig,
               features: FeatureTable | None = None, workers: int = 1) -> tuple[list[int], np.ndarray]:
    if cfg.algorithm == "spectral":
        return rank_bands_spectral(cube, gt, cfg, workers)
    if features is None:
        features = texture_features(cube, cfg.glcm, workers)
    gt_features = ground_truth_features(gt, cfg.glcm) if cfg.ordering == "gt-feature-similarity" else None
    return rank_bands_texture(features, gt_features, cfg)


# ---------------------------------------------------------------------------
# greedy loop


def _estimate_mi(gt: GroundTruth, estimate: np.ndarray, cfg: SelectionConfig, mask) -> float:
    return mutual_information(gt.labels, quantize_band(estimate, cfg.mi_levels).q, mask)


def select_bands(cube: HyperCube, gt: GroundTruth, cfg: SelectionConfig,
                 features: FeatureTable | None = None, ranking: tuple[list[int], np.ndarray] | None = None,
                 workers: int = 1) -> SelectionResult:
    """Run the greedy filter and return the retained bands with a full trace.

    ``features`` (texture algorithm) or a precomputed ``ranking`` may be
    passed to avoid recomputing them across thresholds.
    """
    gt.check_matches(cube)
    order, scores = ranking if ranking is not None else rank_bands(cube, gt, cfg, features, workers)
    if not order:
        raise ValueError("cube has no bands")
    mask = None if cfg.mask_mode == "all" else gt.labels > 0

    first = order[0]
    c_est0 = cube.data[first]
    mi_star = _estimate_mi(gt, c_est0, cfg, mask)
    retained = [first]
    trace = [TraceEntry(first, float(scores[first]), mi_star, True)]

    for s in order[1:]:
        if len(retained) >= cfg.x:
            break
        c_est = (c_est0 + cube.data[s]) / 2.0
        mi = _estimate_mi(gt, c_est, cfg, mask)
        accepted = mi - (mi_star + cfg.threshold) > ACCEPT_MARGIN
        trace.append(TraceEntry(s, float(scores[s]), mi, bool(accepted)))
        if accepted:
            mi_star = mi
            c_est0 = c_est
            retained.append(s)
    return SelectionResult(retained, trace, exhausted=len(retained) < cfg.x)


# ---------------------------------------------------------------------------
# threshold x band-count sweeps


@dataclass
class SweepTable:
    """Accuracy grid: ``cells[i][j]`` for ``x_list[i]`` and ``th_list[j]``; None = blank."""

    label: str
    x_list: list[int]
    th_list: list[float]
    cells: list[list[float | None]]
    selections: dict[float, SelectionResult] = field(default_factory=dict)
    reports: dict[tuple[float, int], ClassificationReport] = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = [",".join(["X"] + [format_threshold(t) for t in self.th_list])]
        for x, row in zip(self.x_list, self.cells):
            lines.append(",".join([str(x)] + ["" if v is None else f"{v:.2f}" for v in row]))
        return "\n".join(lines) + "\n"

    def best_cell(self) -> tuple[float, int] | None:
        """(threshold, X) of the highest accuracy; earliest cell wins ties."""
        best = None
        for i, x in enumerate(self.x_list):
            for j, th in enumerate(self.th_list):
                v = self.cells[i][j]
                if v is not None and (best is None or v > best[0]):
                    best = (v, th, x)
        return None if best is None else (best[1], best[2])


def format_threshold(t: float) -> str:
    return f"{t:g}"


def sweep_experiment(cube: HyperCube, gt: GroundTruth, cfg: SelectionConfig, th_list, x_list,
                     svm: SvmParams = SvmParams(), split_fraction: float = 0.5, seed: int = 0,
                     features: FeatureTable | None = None, workers: int = 1,
                     keep_maps: bool = False) -> SweepTable:
    """Accuracy for every (threshold, X) pair.

    Selection runs once per threshold with ``X = max(x_list)``; each X then
    classifies with the first X retained bands. Cells whose selection stopped
    short of X stay blank (None).
    """
    th_list = [float(t) for t in th_list]
    x_list = [int(x) for x in x_list]
    if not th_list or not x_list:
        raise ValueError("threshold and X lists must be non-empty")
    split = split_train_test(gt, split_fraction, seed)
    run_cfg = replace(cfg, x=max(x_list))
    if cfg.algorithm == "texture" and features is None:
        features = texture_features(cube, cfg.glcm, workers)
    ranking = rank_bands(cube, gt, run_cfg, features, workers)

    def column(th):
        sel = select_bands(cube, gt, replace(run_cfg, threshold=th), ranking=ranking)
        col, reps = [], {}
        for x in x_list:
            if len(sel.retained) < x:
                col.append(None)
                continue
            rep = classify_bands(cube, gt, sel.retained[:x], split, svm, with_map=keep_maps)
            reps[(th, x)] = rep
            col.append(rep.overall_accuracy)
        return sel, col, reps

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            columns = list(pool.map(column, th_list))
    else:
        columns = [column(th) for th in th_list]

    table = SweepTable(cfg.label(), x_list, th_list, [[None] * len(th_list) for _ in x_list])
    for j, (th, (sel, col, reps)) in enumerate(zip(th_list, columns)):
        table.selections[th] = sel
        table.reports.update(reps)
        for i, v in enumerate(col):
            table.cells[i][j] = v
    return table
