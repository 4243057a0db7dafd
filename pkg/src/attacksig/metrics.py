"""Cluster quality of labelled signatures: average class-conditional variance.

Every dimension is standard-normalized first, so the metric is scale free:
a value near 1 means class membership explains none of the spread, values
near 0 mean tight, well separated attacker clusters.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

ZERO_STD = 1e-12


@dataclass(frozen=True, eq=False)
class ClusterReport:
    """Per-class variances and their uniform average.

    ``per_dim`` holds one row per class (sorted label order) with the
    Bessel-corrected variance of each normalized dimension.
    """

    classes: tuple
    counts: tuple
    variances: np.ndarray
    average: float
    per_dim: np.ndarray
    n: int
    d: int
    zero_variance_dims: tuple = ()

    def as_dict(self) -> dict:
        return dict(zip(self.classes, self.variances.tolist()))


@dataclass(frozen=True, eq=False)
class Projection2D:
    coordinates: np.ndarray
    components: np.ndarray
    explained_variance_ratio: np.ndarray
    mean: np.ndarray


def standard_normalize(X):
    """Shift each column to mean 0 and scale to population std 1.

    Columns with std below 1e-12 become all zeros; their indices are
    returned as the fourth element.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 2:
        raise ValueError(f"standard normalization needs n >= 2 rows, got {X.shape[0]}")
    mean = X.mean(axis=0)
    centred = X - mean
    std = np.sqrt(np.mean(centred ** 2, axis=0))
    dead = std < ZERO_STD
    scale = np.where(dead, 1.0, std)
    Xn = centred / scale
    Xn[:, dead] = 0.0
    return Xn, mean, std, tuple(int(i) for i in np.flatnonzero(dead))


def _class_rows(X, y, c):
    y = np.asarray(y, dtype=object)
    return np.asarray(X, dtype=np.float64)[y == c]


def class_variance(X, y, c, average_dims: bool = True) -> float:
    """Bessel-corrected mean squared distance of class ``c`` rows to their centroid.

    The squared Euclidean deviation is divided by the dimension when
    ``average_dims`` is set, which keeps 1-dim features and embeddings on the
    same scale.
    """
    rows = _class_rows(X, y, c)
    if rows.ndim == 1:
        rows = rows[:, None]
    n_c = rows.shape[0]
    if n_c < 2:
        raise ValueError(f"class {c!r} has {n_c} member(s); variance needs at least 2")
    dev = rows - rows.mean(axis=0)
    total = float(np.sum(dev * dev)) / (n_c - 1)
    return total / rows.shape[1] if average_dims else total


def avg_class_conditional_variance(X, y, average_dims: bool = True) -> ClusterReport:
    """Normalize ``X`` then average per-class variances uniformly over classes."""
    Xn, _, _, dead = standard_normalize(X)
    y = np.asarray(y, dtype=object)
    if y.shape[0] != Xn.shape[0]:
        raise ValueError(f"{Xn.shape[0]} rows but {y.shape[0]} labels")
    classes = tuple(sorted(set(y.tolist()), key=str))
    counts, values, per_dim = [], [], []
    for c in classes:
        rows = Xn[y == c]
        counts.append(rows.shape[0])
        values.append(class_variance(Xn, y, c, average_dims))
        per_dim.append(np.var(rows, axis=0, ddof=1))
    values = np.array(values)
    return ClusterReport(
        classes=classes,
        counts=tuple(counts),
        variances=values,
        average=float(values.mean()),
        per_dim=np.array(per_dim),
        n=Xn.shape[0],
        d=Xn.shape[1],
        zero_variance_dims=dead,
    )


def per_feature_report(X, y, names):
    """One var_C per single feature, then the joint average over all features."""
    X = np.asarray(X, dtype=np.float64)
    rows = [(name, avg_class_conditional_variance(X[:, [j]], y).average) for j, name in enumerate(names)]
    rows.append(("AVERAGE", avg_class_conditional_variance(X, y).average))
    return rows


def write_cluster_report(report: ClusterReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["class", "n", "variance"])
        for c, n, v in zip(report.classes, report.counts, report.variances):
            out.writerow([c, n, f"{v:.9g}"])
        out.writerow(["AVERAGE", report.n, f"{report.average:.9g}"])


def pca_2d(X) -> Projection2D:
    """Project onto the top two principal components.

    Each component is sign-fixed so its largest-magnitude entry is positive.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    if n < 3 or d < 2:
        raise ValueError(f"PCA needs n >= 3 and d >= 2, got n={n}, d={d}")
    mean = X.mean(axis=0)
    centred = X - mean
    cov = centred.T @ centred / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    tol = max(evals[0], 0.0) * d * np.finfo(float).eps * 10
    if evals[0] <= 0 or evals[1] <= tol:
        raise ValueError("data has rank < 2; cannot project to 2-D")
    comps = evecs[:, :2].T.copy()
    for k in range(2):
        if comps[k, np.argmax(np.abs(comps[k]))] < 0:
            comps[k] = -comps[k]
    return Projection2D(
        coordinates=centred @ comps.T,
        components=comps,
        explained_variance_ratio=evals[:2] / evals.sum(),
        mean=mean,
    )


PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2",
    "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#637939", "#8c6d31", "#843c39",
    "#7b4173", "#3182bd", "#e6550d", "#31a354", "#756bb1", "#636363",
)


def label_colors(labels) -> dict:
    """Deterministic label -> colour map in sorted label order."""
    out = {}
    for i, label in enumerate(sorted(set(labels), key=str)):
        if i < len(PALETTE):
            out[label] = PALETTE[i]
        else:
            hue = (i * 0.618033988749895) % 1.0
            r, g, b = (int(255 * (0.5 + 0.4 * np.cos(2 * np.pi * (hue + k / 3)))) for k in range(3))
            out[label] = f"#{r:02x}{g:02x}{b:02x}"
    return out


def scatter_export(p: Projection2D, y, path_prefix) -> tuple:
    """Write ``<prefix>.csv`` (x, y, label) and ``<prefix>.svg``; returns both paths."""
    csv_path, svg_path = f"{path_prefix}.csv", f"{path_prefix}.svg"
    xy = p.coordinates
    labels = [str(v) for v in y]
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["x", "y", "label"])
        for (a, b), lab in zip(xy, labels):
            out.writerow([f"{a:.9g}", f"{b:.9g}", lab])

    colors = label_colors(labels)
    width, height, margin, legend_w = 480, 400, 30, 90
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    plot_w = width - 2 * margin - legend_w
    px = margin + (xy[:, 0] - lo[0]) / span[0] * plot_w
    py = height - margin - (xy[:, 1] - lo[1]) / span[1] * (height - 2 * margin)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    for a, b, lab in zip(px, py, labels):
        parts.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2.5" fill="{colors[lab]}" fill-opacity="0.8"/>')
    lx = width - legend_w + 10
    for i, (lab, col) in enumerate(colors.items()):
        ly = margin + 16 * i
        parts.append(f'<rect x="{lx}" y="{ly - 8}" width="10" height="10" fill="{col}"/>')
        parts.append(f'<text x="{lx + 14}" y="{ly + 1}" font-family="sans-serif" font-size="11">{lab}</text>')
    parts.append("</svg>")
    with open(svg_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(parts) + "\n")
    return csv_path, svg_path
