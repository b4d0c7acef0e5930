"""One-vs-one SVM trained with SMO, plus accuracy reporting.

Each binary problem solves the standard soft-margin dual

    min_a  1/2 a^T Q a - e^T a,   Q_ij = y_i y_j k(x_i, x_j)
    s.t.   0 <= a_i <= C,  y^T a = 0

with the maximal-violating-pair / second-order working set selection used by
LIBSVM. Training stops when the KKT gap drops below ``tol`` or after
``max_iter`` updates.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .dataset import GroundTruth, HyperCube, SplitMask, make_rng

logger = logging.getLogger(__name__)

_TAU = 1e-12


@dataclass(frozen=True)
class SampleSet:
    x: np.ndarray
    y: np.ndarray
    pixel_index: np.ndarray

    @property
    def n_samples(self) -> int:
        return self.x.shape[0]

    @property
    def n_features(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class SvmParams:
    C: float = 1.0
    kernel: str = "linear"
    gamma: float = 1.0
    tol: float = 1e-3
    max_iter: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("C must be > 0")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.kernel not in ("linear", "rbf"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.kernel == "rbf" and not self.gamma > 0:
            raise ValueError("gamma must be > 0")


def extract_samples(cube: HyperCube, gt: GroundTruth, bands, mask: np.ndarray | None = None) -> SampleSet:
    """One sample per labeled pixel inside ``mask``; features in ``bands`` order."""
    bands = [int(b) for b in bands]
    if not bands:
        raise ValueError("no bands given")
    if min(bands) < 0 or max(bands) >= cube.n_bands:
        raise ValueError(f"band index out of range 0..{cube.n_bands - 1}")
    gt.check_matches(cube)
    keep = gt.labels > 0
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool)
    idx = np.flatnonzero(keep.ravel())
    if idx.size == 0:
        raise ValueError("mask selects no labeled pixels")
    flat = cube.data.reshape(cube.n_bands, -1)
    x = flat[bands][:, idx].T.copy()
    return SampleSet(x, gt.labels.ravel()[idx].copy(), idx)


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, s: SampleSet) -> SampleSet:
        if s.n_features != self.mean.size:
            raise ValueError("feature count does not match scaler")
        ok = self.std > 0
        x = np.zeros_like(s.x)
        x[:, ok] = (s.x[:, ok] - self.mean[ok]) / self.std[ok]
        return SampleSet(x, s.y, s.pixel_index)


def standardize(train: SampleSet, *others: SampleSet) -> tuple[Scaler, list[SampleSet]]:
    """Z-score every set with statistics of ``train`` only.

    Zero-variance features become 0 everywhere.
    """
    if train.n_samples == 0:
        raise ValueError("empty training set")
    scaler = Scaler(train.x.mean(axis=0), train.x.std(axis=0))
    return scaler, [scaler.transform(s) for s in (train, *others)]


def kernel_matrix(a: np.ndarray, b: np.ndarray, params: SvmParams) -> np.ndarray:
    if params.kernel == "linear":
        return a @ b.T
    sq = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * (a @ b.T)
    return np.exp(-params.gamma * np.maximum(sq, 0.0))


@dataclass
class BinarySVM:
    """Binary machine: ``f(x) = sum_i coef_i k(sv_i, x) + b``, coef_i = alpha_i y_i."""

    support_vectors: np.ndarray
    coef: np.ndarray
    b: float
    params: SvmParams
    alpha: np.ndarray
    y: np.ndarray
    n_iter: int = 0
    converged: bool = True

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        if self.coef.size == 0:
            return np.full(x.shape[0], self.b)
        return kernel_matrix(x, self.support_vectors, self.params) @ self.coef + self.b


def smo(K: np.ndarray, y: np.ndarray, C: float, tol: float, max_iter: int):
    """Solve the binary dual on a precomputed kernel. Returns (alpha, b, n_iter, converged)."""
    n = y.size
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of the dual objective, Q a - e
    diag = np.diag(K).copy()
    pos = y > 0
    it = 0
    converged = False
    while it < max_iter:
        at_upper = alpha >= C
        at_lower = alpha <= 0
        up = np.where(pos, ~at_upper, ~at_lower)
        low = np.where(pos, ~at_lower, ~at_upper)
        score = -y * grad
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        m_up = score[i]
        m_low = np.min(np.where(low, score, np.inf))
        if m_up - m_low < tol:
            converged = True
            break
        # second-order choice of j among violating low candidates
        gap = m_up - score
        cand = low & (gap > 0)
        eta = diag[i] + diag - 2.0 * K[i]
        eta = np.where(eta > 0, eta, _TAU)
        gain = np.where(cand, -(gap * gap) / eta, np.inf)
        j = int(np.argmin(gain))
        lam = gap[j] / eta[j]
        lim_i = C - alpha[i] if y[i] > 0 else alpha[i]
        lim_j = alpha[j] if y[j] > 0 else C - alpha[j]
        lam = min(lam, lim_i, lim_j)
        alpha[i] += y[i] * lam
        alpha[j] -= y[j] * lam
        # snap to the box so bound tests stay exact
        for t in (i, j):
            if alpha[t] > C - 1e-12 * C:
                alpha[t] = C
            elif alpha[t] < 1e-12 * C:
                alpha[t] = 0.0
        grad += y * lam * (K[:, i] - K[:, j])
        it += 1

    yg = y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        rho = yg[free].mean()
    else:
        at_upper = alpha >= C
        ub_mask = np.where(pos, ~at_upper, at_upper)  # y=+1 at lower, y=-1 at upper
        lb_mask = ~ub_mask
        ub = yg[ub_mask].min() if ub_mask.any() else np.inf
        lb = yg[lb_mask].max() if lb_mask.any() else -np.inf
        rho = 0.5 * (ub + lb) if np.isfinite(ub) and np.isfinite(lb) else (ub if np.isfinite(ub) else lb)
    return alpha, float(-rho), it, converged


def train_binary(x: np.ndarray, y: np.ndarray, params: SvmParams, rng: np.random.Generator | None = None) -> BinarySVM:
    """Fit one binary SVM; ``y`` must be +1/-1.

    ``rng`` permutes the sample order before optimization, which decides
    which of several equally violating multipliers SMO picks.
    """
    y = np.asarray(y, dtype=np.float64)
    if set(np.unique(y)) - {-1.0, 1.0} or np.unique(y).size != 2:
        raise ValueError("binary training needs both +1 and -1 labels")
    order = rng.permutation(y.size) if rng is not None else np.arange(y.size)
    xs, ys = x[order], y[order]
    K = kernel_matrix(xs, xs, params)
    alpha_s, b, n_iter, converged = smo(K, ys, params.C, params.tol, params.max_iter)
    alpha = np.empty_like(alpha_s)
    alpha[order] = alpha_s
    if not converged:
        logger.warning("SMO stopped at the iteration cap (%d) before reaching tol=%g", params.max_iter, params.tol)
    sv = alpha > 0
    return BinarySVM(x[sv].copy(), (alpha * y)[sv], b, params, alpha, y, n_iter, converged)


@dataclass
class SvmModel:
    classes: np.ndarray
    pairs: list[tuple[int, int]]
    machines: list[BinarySVM]
    n_features: int
    warnings: list[str] = field(default_factory=list)


def train_svm(train: SampleSet, params: SvmParams = SvmParams()) -> SvmModel:
    """One binary SVM per unordered class pair (smaller label is the +1 side)."""
    classes = np.unique(train.y)
    if classes.size < 2:
        raise ValueError("training data must contain at least two classes")
    rng = make_rng(params.seed)
    pairs, machines, warnings = [], [], []
    for a, b in combinations(classes.tolist(), 2):
        sel = (train.y == a) | (train.y == b)
        yy = np.where(train.y[sel] == a, 1.0, -1.0)
        m = train_binary(train.x[sel], yy, params, rng)
        if not m.converged:
            warnings.append(f"pair ({a},{b}) hit max_iter={params.max_iter}")
        pairs.append((a, b))
        machines.append(m)
    return SvmModel(classes, pairs, machines, train.n_features, warnings)


def predict(model: SvmModel, x, return_ties: bool = False):
    """Majority vote over the pairwise machines; ties go to the smallest class."""
    x = x.x if isinstance(x, SampleSet) else np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.n_features:
        raise ValueError(f"expected {model.n_features} features, got shape {x.shape}")
    index = {c: k for k, c in enumerate(model.classes.tolist())}
    votes = np.zeros((x.shape[0], model.classes.size), dtype=np.int64)
    rows = np.arange(x.shape[0])
    for (a, b), m in zip(model.pairs, model.machines):
        winner = np.where(m.decision_function(x) > 0, index[a], index[b])
        np.add.at(votes, (rows, winner), 1)
    top = votes.max(axis=1)
    labels = model.classes[np.argmax(votes, axis=1)]
    if return_ties:
        return labels, (votes == top[:, None]).sum(axis=1) > 1
    return labels


@dataclass
class ClassificationReport:
    overall_accuracy: float
    per_class_accuracy: np.ndarray
    confusion: np.ndarray
    class_totals: np.ndarray
    n_ties: int = 0
    predicted_map: np.ndarray | None = None

    @property
    def n_classes(self) -> int:
        return self.confusion.shape[0]

    def to_dict(self) -> dict:
        return {
            "overall_accuracy": round(self.overall_accuracy, 10),
            "per_class_accuracy": [None if math.isnan(v) else round(float(v), 10) for v in self.per_class_accuracy],
            "confusion": self.confusion.tolist(),
            "class_totals": self.class_totals.tolist(),
            "n_ties": int(self.n_ties),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def overall_csv(self) -> str:
        n_test = int(self.confusion.sum())
        return (
            "metric,value\n"
            f"overall_accuracy,{self.overall_accuracy:.2f}\n"
            f"test_pixels,{n_test}\n"
            f"correct_pixels,{int(np.trace(self.confusion))}\n"
            f"tie_votes,{int(self.n_ties)}\n"
        )

    def per_class_csv(self) -> str:
        lines = ["class,total_pixels,accuracy_percent"]
        for c in range(self.n_classes):
            acc = self.per_class_accuracy[c]
            lines.append(f"{c + 1},{int(self.class_totals[c])},{'' if math.isnan(acc) else f'{acc:.2f}'}")
        return "\n".join(lines) + "\n"


def evaluate(pred, truth, n_classes: int, n_ties: int = 0) -> ClassificationReport:
    """Confusion matrix (rows = truth) and accuracies in percent."""
    pred = np.asarray(pred, dtype=np.int64)
    truth = np.asarray(truth, dtype=np.int64)
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.size} predictions vs {truth.size} labels")
    if pred.size == 0:
        raise ValueError("nothing to evaluate")
    for name, v in (("pred", pred), ("truth", truth)):
        if v.min() < 1 or v.max() > n_classes:
            raise ValueError(f"{name} labels must lie in 1..{n_classes}")
    k = n_classes
    confusion = np.bincount((truth - 1) * k + (pred - 1), minlength=k * k).reshape(k, k)
    rows = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(rows > 0, 100.0 * np.diag(confusion) / rows, np.nan)
    overall = 100.0 * np.trace(confusion) / confusion.sum()
    return ClassificationReport(float(overall), per_class, confusion, rows.copy(), n_ties)


def classify_bands(cube: HyperCube, gt: GroundTruth, bands, split: SplitMask,
                   params: SvmParams = SvmParams(), with_map: bool = True) -> ClassificationReport:
    """Train on the split's train pixels using ``bands``, score on its test pixels.

    Features are standardized with training statistics. The predicted map
    covers every labeled pixel (train and test) and is 0 elsewhere.
    """
    train = extract_samples(cube, gt, bands, split.train)
    test = extract_samples(cube, gt, bands, split.test)
    scaler, (train_z, test_z) = standardize(train, test)
    model = train_svm(train_z, params)
    pred, ties = predict(model, test_z, return_ties=True)
    report = evaluate(pred, test.y, gt.n_classes, int(ties.sum()))
    report.class_totals = gt.class_counts()[1:].copy()
    if with_map:
        everything = scaler.transform(extract_samples(cube, gt, bands))
        labels_map = np.zeros(gt.labels.size, dtype=np.int64)
        labels_map[everything.pixel_index] = predict(model, everything)
        report.predicted_map = labels_map.reshape(gt.labels.shape)
    return report
