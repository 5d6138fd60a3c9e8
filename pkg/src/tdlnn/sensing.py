"""Channel-state anomaly detection: standardize, PCA, 2-means, minority flag."""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .baselines import CsiVector
from .errors import InvalidArgumentError
from .estimator import ChannelEstimate


@dataclass(frozen=True, eq=False)
class StateSeries:
    """T x d real feature matrix, one row per frame.

    ``components`` and ``explained_variance_ratio`` are filled in by
    :func:`pca_reduce`.
    """

    states: np.ndarray
    truth_mask: np.ndarray | None = None
    columns: tuple[str, ...] | None = None
    components: np.ndarray | None = None
    explained_variance_ratio: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        if s.ndim != 2 or s.shape[0] < 2:
            raise InvalidArgumentError("state series needs a 2-D matrix with >= 2 rows")
        if not np.all(np.isfinite(s)):
            raise InvalidArgumentError("states must be finite")
        object.__setattr__(self, "states", s)
        if self.truth_mask is not None:
            m = np.asarray(self.truth_mask, dtype=bool).reshape(-1)
            if m.size != s.shape[0]:
                raise InvalidArgumentError("truth mask length must match frame count")
            object.__setattr__(self, "truth_mask", m)
        if self.columns is None:
            object.__setattr__(self, "columns", tuple(f"f{j}" for j in range(s.shape[1])))
        elif len(self.columns) != s.shape[1]:
            raise InvalidArgumentError("column names must match feature count")

    def __len__(self) -> int:
        return self.states.shape[0]


def _interleave(z: np.ndarray) -> np.ndarray:
    out = np.empty(2 * z.size)
    out[0::2] = z.real
    out[1::2] = z.imag
    return out


def standardize(x: np.ndarray) -> np.ndarray:
    """Zero-mean, unit-variance columns; constant columns become zero."""
    x = np.asarray(x, dtype=float)
    centered = x - x.mean(axis=0)
    std = centered.std(axis=0)
    out = np.zeros_like(centered)
    ok = std > 0
    out[:, ok] = centered[:, ok] / std[ok]
    return out


def build_states(estimates: Sequence, truth_mask=None) -> StateSeries:
    """Flatten per-frame estimates into standardized real feature rows.

    TDL weights are read row-major over (transmitter, tap) with real and
    imaginary parts interleaved; CSI vectors likewise.
    """
    if len(estimates) == 0:
        raise InvalidArgumentError("no estimates given")
    if all(isinstance(e, ChannelEstimate) for e in estimates):
        rows = [_interleave(e.weights.reshape(-1)) for e in estimates]
        m, width = estimates[0].weights.shape
        names = [f"c{mm}_{i}_{part}" for mm in range(m) for i in range(width) for part in ("re", "im")]
    elif all(isinstance(e, CsiVector) for e in estimates):
        rows = [_interleave(e.impulse_response) for e in estimates]
        names = [f"h{i}_{part}" for i in range(estimates[0].impulse_response.size)
                 for part in ("re", "im")]
    else:
        raise InvalidArgumentError("estimates must all be ChannelEstimate or all CsiVector")
    if len({r.size for r in rows}) != 1:
        raise InvalidArgumentError("estimates differ in size")
    return StateSeries(standardize(np.vstack(rows)), truth_mask, tuple(names))


def pca_reduce(series: StateSeries, dims: int = 2) -> StateSeries:
    """Project onto the top ``dims`` principal components.

    Data are centered, not rescaled. Each component is signed so its
    largest-magnitude loading is positive.
    """
    x = series.states
    t, d = x.shape
    if not 1 <= dims <= min(t, d):
        raise InvalidArgumentError(f"dims must be in [1, {min(t, d)}]")
    centered = x - x.mean(axis=0)
    # covariance eigenvectors via the smaller of the two Gram matrices
    if d <= t:
        evals, evecs = np.linalg.eigh(centered.T @ centered / (t - 1))
        order = np.argsort(evals)[::-1]
        evals, comps = evals[order], evecs[:, order].T
    else:
        evals, u = np.linalg.eigh(centered @ centered.T / (t - 1))
        order = np.argsort(evals)[::-1]
        evals, u = evals[order], u[:, order]
        pos = evals > evals[0] * 1e-14 if evals[0] > 0 else np.zeros_like(evals, bool)
        comps = np.zeros((t, d))
        comps[pos] = (centered.T @ u[:, pos] / np.sqrt(evals[pos] * (t - 1))).T
    evals = np.clip(evals, 0, None)
    comps = comps[:dims]
    flip = np.sign(comps[np.arange(dims), np.argmax(np.abs(comps), axis=1)])
    flip[flip == 0] = 1
    comps = comps * flip[:, None]
    total = evals.sum()
    ratio = evals[:dims] / total if total > 0 else np.zeros(dims)
    return StateSeries(centered @ comps.T, series.truth_mask,
                       tuple(f"pc{j + 1}" for j in range(dims)), comps, ratio)


class KMeansResult(NamedTuple):
    assignments: np.ndarray
    centroids: np.ndarray
    inertia: float
    restart_inertias: np.ndarray


def _sq_dist(x, c):
    return np.sum((x[:, None, :] - c[None, :, :]) ** 2, axis=2)


def _kmeans_pp(x, k, rng):
    t = x.shape[0]
    centers = [x[rng.integers(t)]]
    for _ in range(1, k):
        d2 = _sq_dist(x, np.array(centers)).min(axis=1)
        total = d2.sum()
        idx = rng.choice(t, p=d2 / total) if total > 0 else rng.integers(t)
        centers.append(x[idx])
    return np.array(centers)


def _lloyd(x, centers, tol=1e-8, max_iter=300):
    k = centers.shape[0]
    prev = np.inf
    for _ in range(max_iter):
        d2 = _sq_dist(x, centers)
        labels = np.argmin(d2, axis=1)
        for j in range(k):
            if not np.any(labels == j):
                # reseed an empty cluster with the point farthest from its centroid
                far = d2[np.arange(x.shape[0]), labels]
                i = int(np.argmax(far))
                if far[i] > 0:
                    labels[i] = j
        centers = np.array([x[labels == j].mean(axis=0) if np.any(labels == j) else centers[j]
                            for j in range(k)])
        inertia = float(np.sum((x - centers[labels]) ** 2))
        if prev - inertia <= tol * max(prev, 1e-300) or inertia == 0:
            break
        prev = inertia
    return labels, centers, inertia


def kmeans(series, k: int = 2, seed: int = 0, restarts: int = 10) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding, best of ``restarts`` by inertia.

    Accepts a :class:`StateSeries` or a plain (T, d) array. Inertia ties go
    to the earliest restart.
    """
    x = series.states if isinstance(series, StateSeries) else np.asarray(series, dtype=float)
    if x.ndim != 2 or x.shape[0] < k or k < 1:
        raise InvalidArgumentError("need at least k rows")
    seqs = np.random.SeedSequence(seed).spawn(restarts)
    best = None
    inertias = np.empty(restarts)
    for r, ss in enumerate(seqs):
        rng = np.random.default_rng(ss)
        labels, centers, inertia = _lloyd(x, _kmeans_pp(x, k, rng))
        inertias[r] = inertia
        if best is None or inertia < best[2]:
            best = (labels, centers, inertia)
    return KMeansResult(best[0], best[1], best[2], inertias)


def detect_anomalies(assignments, states=None, centroids=None) -> np.ndarray:
    """Flag the minority cluster of a 2-cluster assignment.

    On an exact tie the cluster whose points lie farther (on average) from
    the other centroid is flagged; that needs ``states`` and ``centroids``,
    otherwise cluster 1 is flagged. A single non-empty cluster flags nothing.
    """
    a = np.asarray(assignments).reshape(-1)
    n0, n1 = np.count_nonzero(a == 0), np.count_nonzero(a == 1)
    if n0 == 0 or n1 == 0:
        return np.zeros(a.size, dtype=bool)
    if n0 != n1:
        return a == (0 if n0 < n1 else 1)
    if states is None or centroids is None:
        return a == 1
    x = states.states if isinstance(states, StateSeries) else np.asarray(states, float)
    c = np.asarray(centroids, float)
    spread = [np.mean(np.linalg.norm(x[a == j] - c[1 - j], axis=1)) for j in (0, 1)]
    return a == (1 if spread[1] > spread[0] else 0)


def detection_metrics(mask, truth_mask):
    """(precision, recall, false_positive_count).

    With no predicted positives precision is 1 if truth is empty too, else 0;
    with no true positives to find recall is 1.
    """
    m = np.asarray(mask, dtype=bool).reshape(-1)
    t = np.asarray(truth_mask, dtype=bool).reshape(-1)
    if m.size != t.size:
        raise InvalidArgumentError("mask lengths differ")
    tp = int(np.count_nonzero(m & t))
    fp = int(np.count_nonzero(m & ~t))
    fn = int(np.count_nonzero(~m & t))
    if tp + fp == 0:
        precision = 1.0 if not t.any() else 0.0
    else:
        precision = tp / (tp + fp)
    recall = 1.0 if tp + fn == 0 else tp / (tp + fn)
    return precision, recall, fp


def silhouette_score(x, labels) -> float:
    """Mean silhouette coefficient; 0 when fewer than two clusters are present."""
    x = x.states if isinstance(x, StateSeries) else np.asarray(x, float)
    labels = np.asarray(labels).reshape(-1)
    uniq = np.unique(labels)
    if uniq.size < 2:
        return 0.0
    dist = np.sqrt(_sq_dist(x, x))
    scores = np.zeros(x.shape[0])
    for i in range(x.shape[0]):
        own = labels == labels[i]
        if own.sum() == 1:
            continue
        a = dist[i, own].sum() / (own.sum() - 1)
        b = min(dist[i, labels == u].mean() for u in uniq if u != labels[i])
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(scores.mean())


def write_state_csv(series: StateSeries, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = list(series.columns) + (["truth"] if series.truth_mask is not None else [])
        w.writerow(header)
        for k, row in enumerate(series.states):
            cells = [repr(float(v)) for v in row]
            if series.truth_mask is not None:
                cells.append(str(int(series.truth_mask[k])))
            w.writerow(cells)


def read_state_csv(path) -> StateSeries:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    truth = None
    if header and header[-1] == "truth":
        truth = np.array([int(r[-1]) for r in body], dtype=bool)
        header, body = header[:-1], [r[:-1] for r in body]
    return StateSeries(np.array(body, dtype=float), truth, tuple(header))


def with_truth(series: StateSeries, truth_mask) -> StateSeries:
    return replace(series, truth_mask=np.asarray(truth_mask, dtype=bool))
