"""Lloyd's K-means with k-means++ seeding, Davies-Bouldin scoring and K selection."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class ClusteringError(ValueError):
    pass


def _matrix(profiles) -> np.ndarray:
    return np.asarray(getattr(profiles, "values", profiles), dtype=np.float64)


@dataclass(frozen=True, eq=False)
class ClusterModel:
    K: int
    centroids: np.ndarray
    labels: np.ndarray
    wcss: float
    db_index: float | None
    iterations_run: int
    wcss_history: tuple[float, ...] = field(default=())

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.K)

    def to_dict(self) -> dict:
        return {
            "K": self.K,
            "centroids": [[float(f"{v:.9g}") for v in row] for row in self.centroids],
            "labels": [int(k) for k in self.labels],
            "wcss": float(f"{self.wcss:.9g}"),
            "db_index": None if self.db_index is None else float(f"{self.db_index:.9g}"),
            "iterations_run": self.iterations_run,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ClusterModel:
        return cls(
            K=int(data["K"]),
            centroids=np.array(data["centroids"], dtype=np.float64),
            labels=np.array(data["labels"], dtype=np.intp),
            wcss=float(data["wcss"]),
            db_index=None if data.get("db_index") is None else float(data["db_index"]),
            iterations_run=int(data.get("iterations_run", 0)),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> ClusterModel:
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class KSelectionReport:
    candidates: tuple[tuple[int, float], ...]
    chosen_K: int


def squared_distances(X: np.ndarray, C: np.ndarray) -> np.ndarray:
    diff = X[:, None, :] - C[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def assign(profiles, centroids) -> np.ndarray:
    """Index of the nearest centroid per profile; ties go to the lowest index."""
    X, C = _matrix(profiles), np.asarray(centroids, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] < 1:
        raise ClusteringError("need at least one centroid")
    if not np.all(np.isfinite(C)):
        raise ClusteringError("centroids must be finite")
    return np.argmin(squared_distances(X, C), axis=1)


def update_centroids(profiles, labels, K: int, centroids=None) -> np.ndarray:
    """Cluster means. An empty cluster is reseeded to the profile lying
    farthest from its currently assigned centroid (``centroids`` if given,
    else the freshly computed means).
    """
    X = _matrix(profiles)
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() >= K):
        raise ClusteringError("labels out of range")
    counts = np.bincount(labels, minlength=K)
    sums = np.zeros((K, X.shape[1]))
    np.add.at(sums, labels, X)
    new = np.zeros_like(sums)
    nonempty = counts > 0
    new[nonempty] = sums[nonempty] / counts[nonempty, None]
    empty = np.flatnonzero(~nonempty)
    if empty.size:
        ref = new if centroids is None else np.asarray(centroids, dtype=np.float64)
        dist = np.sum((X - ref[labels]) ** 2, axis=1)
        used: set[int] = set()
        for k in empty:
            # stable order: largest distance first, lowest profile index on ties
            for i in np.lexsort((np.arange(len(X)), -dist)):
                if i not in used:
                    used.add(int(i))
                    new[k] = X[i]
                    break
    return new


def wcss(profiles, labels, centroids) -> float:
    X, C = _matrix(profiles), np.asarray(centroids, dtype=np.float64)
    return float(np.sum((X - C[np.asarray(labels)]) ** 2))


def kmeans_pp_init(X: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    """Greedy k-means++ seeding.

    Each new center is the best of ``2 + floor(ln K)`` candidates drawn with
    probability proportional to squared distance, judged by the potential
    it leaves behind. With a single candidate this is plain k-means++.
    """
    n = len(X)
    trials = 2 + int(np.log(K)) if K > 1 else 1
    chosen = [int(rng.integers(n))]
    d2 = np.sum((X - X[chosen[0]]) ** 2, axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total > 0:
            cands = rng.choice(n, size=trials, p=d2 / total)
        else:
            cands = rng.integers(n, size=trials)
        best = None
        for c in cands:
            nd2 = np.minimum(d2, np.sum((X - X[c]) ** 2, axis=1))
            pot = nd2.sum()
            if best is None or pot < best[0]:
                best = (pot, int(c), nd2)
        chosen.append(best[1])
        d2 = best[2]
    return X[chosen].copy()


def _fill_empty(X: np.ndarray, labels: np.ndarray, C: np.ndarray, K: int) -> np.ndarray:
    """Move the farthest profiles of multi-member clusters into empty clusters."""
    labels = labels.copy()
    for k in range(K):
        if np.any(labels == k):
            continue
        counts = np.bincount(labels, minlength=K)
        dist = np.sum((X - C[labels]) ** 2, axis=1)
        dist[counts[labels] <= 1] = -1.0
        i = int(np.argmax(dist))
        if dist[i] < 0:
            raise ClusteringError("cannot fill empty cluster: too few distinct profiles")
        labels[i] = k
    return labels


def kmeans(profiles, K: int, seed: int = 0, max_iter: int = 300, tol: float = 1e-6) -> ClusterModel:
    """Lloyd iterations from a k-means++ start.

    Stops when labels stop changing, the largest centroid move drops below
    ``tol``, or after ``max_iter`` iterations. The returned centroids are the
    means of the returned labels.
    """
    X = _matrix(profiles)
    n = len(X)
    if K < 1:
        raise ClusteringError("K must be at least 1")
    if K > n:
        raise ClusteringError(f"K={K} exceeds the number of profiles N={n}")
    if max_iter < 1:
        raise ClusteringError("max_iter must be at least 1")
    rng = np.random.default_rng(seed)
    C = kmeans_pp_init(X, K, rng)
    labels = assign(X, C)
    history = [wcss(X, labels, C)]
    iterations = 0
    for _ in range(max_iter):
        iterations += 1
        new_C = update_centroids(X, labels, K, C)
        new_labels = assign(X, new_C)
        shift = float(np.max(np.sqrt(np.sum((new_C - C) ** 2, axis=1))))
        changed = bool(np.any(new_labels != labels))
        C, labels = new_C, new_labels
        history.append(wcss(X, labels, C))
        if not changed or shift < tol:
            break
    labels = _fill_empty(X, labels, C, K)
    C = update_centroids(X, labels, K)
    history.append(wcss(X, labels, C))
    db = db_index(X, labels, C) if K >= 2 else None
    return ClusterModel(K, C, labels, history[-1], db, iterations, tuple(history))


def db_index(profiles, labels, centroids) -> float:
    """Davies-Bouldin index with mean Euclidean scatter per cluster."""
    X, C = _matrix(profiles), np.asarray(centroids, dtype=np.float64)
    labels = np.asarray(labels)
    K = len(C)
    if K < 2:
        raise ClusteringError("Davies-Bouldin index needs at least two clusters")
    counts = np.bincount(labels, minlength=K)
    if np.any(counts == 0):
        raise ClusteringError("Davies-Bouldin index undefined with an empty cluster")
    dist = np.sqrt(np.sum((X - C[labels]) ** 2, axis=1))
    scatter = np.bincount(labels, weights=dist, minlength=K) / counts
    sep = np.sqrt(squared_distances(C, C))
    off = ~np.eye(K, dtype=bool)
    if np.any(sep[off] == 0):
        raise ClusteringError("coincident centroids: degenerate clustering")
    ratio = np.where(off, (scatter[:, None] + scatter[None, :]) / np.where(off, sep, 1.0), -np.inf)
    return float(np.mean(ratio.max(axis=1)))


def select_k(profiles, k_range=(2, 12), seed: int = 0, max_iter: int = 300,
             tol: float = 1e-6) -> KSelectionReport:
    """Cluster for every K in the inclusive range and keep the lowest DB index.

    Values within 1e-12 of the minimum count as ties and resolve to the
    smaller K.
    """
    X = _matrix(profiles)
    lo, hi = k_range
    if lo < 2 or hi > len(X) - 1 or lo > hi:
        raise ClusteringError(f"K range {lo}..{hi} must lie within 2..{len(X) - 1}")
    candidates = []
    for K in range(lo, hi + 1):
        model = kmeans(X, K, seed=seed, max_iter=max_iter, tol=tol)
        candidates.append((K, float(model.db_index)))
    best = min(db for _, db in candidates)
    chosen = next(K for K, db in candidates if db <= best + 1e-12)
    return KSelectionReport(tuple(candidates), chosen)
