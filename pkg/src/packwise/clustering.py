"""Cluster demand patterns and pick a cluster count.

K-means is implemented here directly (Lloyd iterations over numpy arrays)
because the rest of the system depends on behavior a library call does not
expose: a per-iteration objective trace, deterministic farthest-point
repair of empty clusters, and a seeded initialization that is invariant to
input ordering. Agglomerative clustering delegates the tree construction
to scipy and exposes the merge list for dendrogram plotting.

Clustering runs on raw (unnormalized) pattern values: magnitudes carry the
machine-count signal, so scaling the data away would destroy exactly what
the downstream packing step needs.

Estimators follow the sklearn fit/predict convention and expose
``cluster_centers_`` / ``labels_`` after fitting.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.cluster.hierarchy import fcluster
from scipy.cluster.hierarchy import linkage as scipy_linkage

from .validation import as_float_matrix

KMEANS_MAX_ITER = 300


class DegenerateModelError(ValueError):
    """Clustering cannot produce a usable model (coincident centroids,
    fewer distinct patterns than clusters, ...)."""


@dataclass(frozen=True)
class Dendrogram:
    """Agglomeration record: (cluster_a, cluster_b, distance) per merge.

    Indices follow the usual convention: 0..n-1 are the input patterns,
    n+i is the cluster created by merge i. n inputs yield n-1 merges.
    """

    merges: tuple

    @property
    def n_merges(self) -> int:
        return len(self.merges)

    def distances(self) -> np.ndarray:
        return np.array([m[2] for m in self.merges])


@dataclass(frozen=True)
class ClusterModel:
    """A fitted clustering: centroids are the representative patterns.

    Labels are arbitrary; anything consuming a model must not depend on
    their order. db_index / dunn_index are filled when computable (k >= 2
    and non-degenerate geometry), else None.
    """

    k: int
    centroids: np.ndarray
    assignments: np.ndarray
    method: str
    db_index: float | None = None
    dunn_index: float | None = None
    objective_trace: tuple = field(default=(), compare=False)

    def __post_init__(self):
        counts = np.bincount(self.assignments, minlength=self.k)
        if self.assignments.max(initial=0) >= self.k or np.any(counts == 0):
            raise ValueError("every cluster must be nonempty and labels < k")


def _canonical_order(X: np.ndarray) -> np.ndarray:
    # Lexicographic row order; running on sorted rows makes the seeded
    # pipeline invariant to how the caller happened to order the input.
    return np.lexsort(X.T[::-1])


def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(n)]
    d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        probs = d2 / d2.sum()
        centers[j] = X[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((X - centers[j]) ** 2).sum(axis=1))
    return centers


class PatternKMeans:
    """Seeded Lloyd's k-means over pattern vectors.

    Each restart runs to convergence (no reassignments) or max_iter
    sweeps from a fresh k-means++ initialization; the restart with the
    lowest within-cluster sum of squares wins. Empty clusters are
    repaired by reseeding from the point currently farthest from its
    centroid. Deterministic given (data multiset, n_clusters, seed).

    Attributes after fit: cluster_centers_, labels_, inertia_, n_iter_,
    objective_trace_ (within-cluster sum of squares after each sweep of
    the winning restart).
    """

    def __init__(self, n_clusters: int = 8, seed: int = 0,
                 n_init: int = 10, max_iter: int = KMEANS_MAX_ITER):
        self.n_clusters = n_clusters
        self.seed = seed
        self.n_init = n_init
        self.max_iter = max_iter

    def get_params(self, deep: bool = True) -> dict:
        return {
            "n_clusters": self.n_clusters,
            "seed": self.seed,
            "n_init": self.n_init,
            "max_iter": self.max_iter,
        }

    def set_params(self, **params):
        for key, value in params.items():
            if key not in self.get_params():
                raise ValueError(f"unknown parameter {key!r}")
            setattr(self, key, value)
        return self

    def fit(self, X):
        X = as_float_matrix(X, "patterns")
        k = self.n_clusters
        if k < 1:
            raise ValueError(f"n_clusters must be >= 1, got {k}")
        if self.n_init < 1:
            raise ValueError(f"n_init must be >= 1, got {self.n_init}")
        distinct = np.unique(X, axis=0).shape[0]
        if k > distinct:
            raise DegenerateModelError(
                f"n_clusters={k} exceeds the {distinct} distinct pattern(s)"
            )

        order = _canonical_order(X)
        Xs = X[order]
        rng = np.random.default_rng(self.seed)
        best = None
        for _ in range(self.n_init):
            centers, labels, trace = self._lloyd(Xs, k, rng)
            if best is None or trace[-1] < best[2][-1]:
                best = (centers, labels, trace)
        centers, labels, trace = best

        self.cluster_centers_ = centers
        self.labels_ = np.empty(X.shape[0], dtype=np.int64)
        self.labels_[order] = labels
        self.objective_trace_ = tuple(trace)
        self.inertia_ = trace[-1]
        self.n_iter_ = len(trace)
        return self

    def _lloyd(self, Xs, k, rng):
        centers = _kmeans_pp_init(Xs, k, rng)
        labels = np.full(Xs.shape[0], -1)
        trace = []
        for _ in range(self.max_iter):
            d2 = ((Xs[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            new_labels = d2.argmin(axis=1)

            # Repair empty clusters by reseeding each from the point farthest
            # from its own centroid; sole members stay put so a repair cannot
            # empty another cluster.
            while True:
                sizes = np.bincount(new_labels, minlength=k)
                empty = np.flatnonzero(sizes == 0)
                if empty.size == 0:
                    break
                c = int(empty[0])
                dist_to_own = d2[np.arange(len(new_labels)), new_labels]
                dist_to_own = np.where(sizes[new_labels] > 1, dist_to_own, -np.inf)
                far = int(dist_to_own.argmax())
                centers[c] = Xs[far]
                new_labels[far] = c
                d2[:, c] = ((Xs - centers[c]) ** 2).sum(axis=1)

            converged = np.array_equal(new_labels, labels)
            labels = new_labels
            for c in range(k):
                centers[c] = Xs[labels == c].mean(axis=0)
            d2_final = ((Xs - centers[labels]) ** 2).sum(axis=1)
            trace.append(float(d2_final.sum()))
            if converged:
                break
        return centers, labels, trace

    def predict(self, X):
        X = as_float_matrix(X, "patterns")
        d2 = ((X[:, None, :] - self.cluster_centers_[None, :, :]) ** 2).sum(axis=2)
        return d2.argmin(axis=1)

    def fit_predict(self, X):
        return self.fit(X).labels_


class PatternAgglomerative:
    """Bottom-up hierarchical clustering, cut at n_clusters.

    The agglomeration itself comes from scipy (ward, complete or average
    linkage); centroids are member means of the cut clusters. The full
    merge list is kept as a Dendrogram for plotting.
    """

    LINKAGES = ("ward", "complete", "average")

    def __init__(self, n_clusters: int = 8, linkage: str = "ward"):
        self.n_clusters = n_clusters
        self.linkage = linkage

    def get_params(self, deep: bool = True) -> dict:
        return {"n_clusters": self.n_clusters, "linkage": self.linkage}

    def set_params(self, **params):
        for key, value in params.items():
            if key not in self.get_params():
                raise ValueError(f"unknown parameter {key!r}")
            setattr(self, key, value)
        return self

    def fit(self, X):
        X = as_float_matrix(X, "patterns")
        k = self.n_clusters
        if k < 1:
            raise ValueError(f"n_clusters must be >= 1, got {k}")
        if self.linkage not in self.LINKAGES:
            raise ValueError(f"linkage must be one of {self.LINKAGES}")
        distinct = np.unique(X, axis=0).shape[0]
        if k > distinct:
            raise DegenerateModelError(
                f"n_clusters={k} exceeds the {distinct} distinct pattern(s)"
            )

        order = _canonical_order(X)
        Xs = X[order]
        Z = scipy_linkage(Xs, method=self.linkage)
        labels_sorted = fcluster(Z, t=k, criterion="maxclust") - 1
        if np.unique(labels_sorted).shape[0] != k:
            raise DegenerateModelError(
                f"cutting the tree produced fewer than {k} clusters"
            )
        # Relabel by first appearance in canonical order so labels are stable.
        remap = {}
        for lab in labels_sorted:
            if lab not in remap:
                remap[lab] = len(remap)
        labels_sorted = np.array([remap[lab] for lab in labels_sorted])

        self.merges_ = Dendrogram(
            merges=tuple((int(a), int(b), float(d)) for a, b, d, _ in Z)
        )
        self.cluster_centers_ = np.vstack(
            [Xs[labels_sorted == c].mean(axis=0) for c in range(k)]
        )
        self.labels_ = np.empty(X.shape[0], dtype=np.int64)
        self.labels_[order] = labels_sorted
        return self

    def fit_predict(self, X):
        return self.fit(X).labels_


def davies_bouldin(model: ClusterModel, patterns) -> float:
    """Scatter/separation ratio, averaged over clusters; lower is better.

    Per-cluster scatter is the mean member-to-centroid Euclidean distance;
    separation is the centroid distance. Coincident centroids make the
    ratio undefined and raise DegenerateModelError.
    """
    X = as_float_matrix(patterns, "patterns")
    if model.k < 2:
        raise ValueError("index needs k >= 2")
    centroids = model.centroids
    scatter = np.array(
        [
            np.linalg.norm(X[model.assignments == c] - centroids[c], axis=1).mean()
            for c in range(model.k)
        ]
    )
    sep = np.linalg.norm(centroids[:, None, :] - centroids[None, :, :], axis=2)
    off_diag = sep[~np.eye(model.k, dtype=bool)]
    if np.min(off_diag) < 1e-12:
        raise DegenerateModelError("coincident centroids: model is degenerate")
    ratio = (scatter[:, None] + scatter[None, :]) / np.where(sep > 0, sep, np.inf)
    np.fill_diagonal(ratio, -np.inf)
    return float(ratio.max(axis=1).mean())


def dunn(model: ClusterModel, patterns) -> float:
    """Separation/diameter ratio; higher is better.

    Separation is the single-linkage (minimum cross-pair) distance between
    clusters; diameter is the maximum intra-cluster pairwise distance.
    All-singleton models have zero diameters and return +inf.
    """
    X = as_float_matrix(patterns, "patterns")
    if model.k < 2:
        raise ValueError("index needs k >= 2")
    dists = np.linalg.norm(X[:, None, :] - X[None, :, :], axis=2)
    members = [np.flatnonzero(model.assignments == c) for c in range(model.k)]

    diameters = [dists[np.ix_(m, m)].max() for m in members]
    max_diameter = max(diameters)
    min_separation = min(
        dists[np.ix_(members[i], members[j])].min()
        for i in range(model.k)
        for j in range(i + 1, model.k)
    )
    if max_diameter == 0.0:
        return float("inf")
    return float(min_separation / max_diameter)


def _attach_indices(model: ClusterModel, X: np.ndarray) -> ClusterModel:
    if model.k < 2:
        return model
    try:
        db = davies_bouldin(model, X)
    except DegenerateModelError:
        db = None
    return ClusterModel(
        k=model.k,
        centroids=model.centroids,
        assignments=model.assignments,
        method=model.method,
        db_index=db,
        dunn_index=dunn(model, X),
        objective_trace=model.objective_trace,
    )


def kmeans(patterns, k: int, seed: int = 0) -> ClusterModel:
    """Fit seeded k-means and return the model with validity indices attached."""
    X = as_float_matrix(patterns, "patterns")
    est = PatternKMeans(n_clusters=k, seed=seed).fit(X)
    model = ClusterModel(
        k=k,
        centroids=est.cluster_centers_,
        assignments=est.labels_,
        method="kmeans",
        objective_trace=est.objective_trace_,
    )
    return _attach_indices(model, X)


def ahc(patterns, k: int, linkage: str = "ward") -> tuple[ClusterModel, Dendrogram]:
    """Fit hierarchical clustering cut at k; returns (model, dendrogram)."""
    X = as_float_matrix(patterns, "patterns")
    est = PatternAgglomerative(n_clusters=k, linkage=linkage).fit(X)
    model = ClusterModel(
        k=k,
        centroids=est.cluster_centers_,
        assignments=est.labels_,
        method="ahc",
    )
    return _attach_indices(model, X), est.merges_


def save_index_table(rows, path) -> None:
    """Write the per-k validity scores as `k,davies_bouldin,dunn` CSV."""
    lines = ["k,davies_bouldin,dunn"]
    for k, db, dn in rows:
        lines.append(f"{k},{db:.6g},{dn:.6g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def save_dendrogram(dendrogram: Dendrogram, path) -> None:
    """Write the merge list as CSV for external plotting."""
    lines = ["step,cluster_a,cluster_b,distance"]
    for i, (a, b, dist) in enumerate(dendrogram.merges):
        lines.append(f"{i},{a},{b},{dist:.6g}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def select_k(patterns, k_range, seed: int = 0):
    """Sweep cluster counts and score each with both validity indices.

    k_range is an inclusive (lo, hi) pair. Each k runs k-means with seed
    seed+k. Best k minimizes the Davies-Bouldin index; ties go to the
    larger Dunn index, then the smaller k. Returns (best_k, rows) where
    rows are (k, db_index, dunn_index) for reporting.
    """
    X = as_float_matrix(patterns, "patterns")
    lo, hi = int(k_range[0]), int(k_range[1])
    if lo > hi:
        raise ValueError(f"empty k range [{lo}, {hi}]")
    n = X.shape[0]
    if lo < 2 or hi > n - 1:
        raise ValueError(f"k range [{lo}, {hi}] must lie within [2, {n - 1}]")

    rows = []
    for k in range(lo, hi + 1):
        model = kmeans(X, k, seed=seed + k)
        if model.db_index is None:
            raise DegenerateModelError(f"k={k}: coincident centroids")
        rows.append((k, model.db_index, model.dunn_index))
    best_k, _, _ = min(rows, key=lambda r: (r[1], -r[2], r[0]))
    return best_k, rows
