"""Published Indian Pines (AVIRIS 92AV3C, 220 bands) accuracies for comparison runs.

The grids below are overall accuracies in percent, indexed by retained band
count X (rows) and redundancy threshold (columns). ``None`` marks cells that
were left blank because selection stopped before reaching X. They are used
only by ``experiment --compare-reference`` to print a side-by-side diff; an
exact match is not expected since the original SVM setup and gray-level
quantization are unknown.
"""

from __future__ import annotations

import math

THRESHOLDS = (-0.02, -0.01, -0.005, -0.004, 0.0)
X_VALUES = (2, 3, 4, 12, 14, 18, 20, 25, 35, 36, 40, 45, 50, 53, 60, 70, 75, 80)

_ = None

SPECTRAL = {
    2: (47.44, 47.44, 47.44, 47.44, 47.44),
    3: (47.87, 47.87, 47.87, 47.87, 48.92),
    4: (49.31, 49.31, 49.31, 49.31, _),
    12: (56.30, 56.30, 56.30, 56.30, _),
    14: (57.00, 57.00, 57.00, 57.00, _),
    18: (59.09, 59.09, 59.09, 62.61, _),
    20: (63.08, 63.08, 63.08, 63.55, _),
    25: (66.12, 64.89, 64.89, 65.38, _),
    35: (76.06, 74.72, 75.59, _, _),
    36: (76.49, 76.60, 76.19, _, _),
    40: (78.96, 79.29, _, _, _),
    45: (80.85, 81.01, _, _, _),
    50: (81.63, 81.12, _, _, _),
    53: (82.27, 86.03, _, _, _),
    60: (82.74, 85.08, _, _, _),
    70: (86.95, _, _, _, _),
    75: (86.81, _, _, _, _),
    80: (87.28, _, _, _, _),
}

TEXTURE = {
    2: (53.61, 53.61, 53.61, 53.61, 53.61),
    3: (54.37, 54.37, 54.37, 54.37, 54.37),
    4: (54.80, 54.80, 54.80, 54.80, _),
    12: (64.56, 64.56, 63.90, 63.90, _),
    14: (64.76, 64.76, 65.44, 64.93, _),
    18: (66.71, 66.71, 67.47, 67.86, _),
    20: (68.09, 68.09, 68.54, 68.38, _),
    25: (74.00, 74.05, 78.28, 78.39, _),
    35: (78.24, 78.63, 80.77, _, _),
    36: (78.01, 79.17, 81.39, _, _),
    40: (79.19, 81.41, _, _, _),
    45: (81.90, 82.12, _, _, _),
    50: (82.37, 82.86, _, _, _),
    53: (82.84, 83.46, _, _, _),
    60: (83.99, 84.32, _, _, _),
    70: (87.28, _, _, _, _),
    75: (87.08, _, _, _, _),
    80: (86.56, _, _, _, _),
}

# per-class accuracy at threshold -0.02, texture selection; (feature, X) -> 16 values
CLASS_TOTALS = (54, 1434, 834, 234, 497, 747, 26, 489, 20, 968, 2468, 614, 212, 1294, 380, 95)
PER_CLASS = {
    ("contrast", 80): (39.13, 68.48, 63.79, 27.35, 76.83, 91.62, 38.46, 95.51, 0.00, 68.18, 82.01, 64.82, 94.17, 92.74, 47.59, 71.74),
    ("correlation", 70): (78.26, 74.06, 80.58, 58.97, 89.02, 94.41, 61.54, 95.51, 80.00, 80.79, 82.25, 81.11, 98.06, 95.36, 53.01, 91.30),
    ("energy", 80): (86.96, 81.87, 80.10, 72.65, 92.68, 96.37, 76.92, 97.96, 80.00, 80.37, 86.47, 85.34, 98.06, 93.04, 57.83, 93.48),
    ("homogeneity", 70): (82.61, 79.64, 82.97, 69.23, 90.65, 95.81, 84.62, 95.51, 100.00, 86.57, 88.09, 87.30, 98.06, 95.83, 63.25, 91.30),
}

TABLES = {"spectral": SPECTRAL, "texture": TEXTURE}


def reference_cell(algorithm: str, threshold: float, x: int) -> float | None:
    table = TABLES[algorithm]
    row = table.get(int(x))
    if row is None:
        return None
    for j, t in enumerate(THRESHOLDS):
        if math.isclose(t, threshold, abs_tol=1e-12):
            return row[j]
    return None


def compare_sweep(table, algorithm: str, tolerance: float = 5.0) -> str:
    """CSV diff of a :class:`~hsibands.selection.SweepTable` against the published grid.

    One line per (X, threshold) cell present in either grid, with the
    difference in percentage points and a flag when it exceeds ``tolerance``.
    """
    lines = ["X,threshold,measured,reference,difference,flag"]
    for i, x in enumerate(table.x_list):
        for j, th in enumerate(table.th_list):
            measured = table.cells[i][j]
            ref = reference_cell(algorithm, th, x)
            if measured is None and ref is None:
                continue
            if measured is not None and ref is not None:
                diff = measured - ref
                flag = "DEVIATES" if abs(diff) > tolerance else "ok"
                diff_s = f"{diff:+.2f}"
            else:
                diff_s = ""
                flag = "blank-mismatch"
            lines.append(
                f"{x},{th:g},{'' if measured is None else f'{measured:.2f}'},"
                f"{'' if ref is None else f'{ref:.2f}'},{diff_s},{flag}"
            )
    return "\n".join(lines) + "\n"
