"""Representative-sample selection over activation maps.

A client compresses all of its flattened maps with one PCA fit, clusters
each class separately in the reduced space, and ships the medoid of every
cluster. The shipped items are the untouched full-resolution maps; PCA and
K-means only decide which ones travel.

`PCA`, `KMeans`, and `MetadataSelector` follow the scikit-learn estimator
contract (constructor params echoed by get_params, fitted state in
trailing-underscore attributes) so they clone and compose with that
ecosystem, but the numerics are implemented here:

* PCA keeps the top right-singular directions of the centered data and
  caps the component count at min(n_components, n_samples - 1, n_features),
  never padding.
* K-means seeds greedily (seeded random first center, then repeated
  farthest-point picks), re-seeds a cluster that empties at the point
  farthest from its own center, breaks assignment ties toward the lowest
  cluster index, and stops when the largest center shift drops to tol.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .exceptions import ConfigError, ShapeError
from .validation import check_labels, check_maps, check_matrix


def _require_fitted(est, attr):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit first")


class PCA(TransformerMixin, BaseEstimator):
    """Principal component analysis via thin SVD of the centered data.

    Parameters
    ----------
    n_components : int
        Requested number of directions. The effective count, exposed as
        `n_components_`, is capped at min(n_components, n_samples - 1,
        n_features).

    Attributes
    ----------
    mean_ : (n_features,) column means of the training data.
    components_ : (n_components_, n_features) orthonormal rows, ordered by
        decreasing explained variance; each row's largest-magnitude entry
        is made positive so the fit is sign-deterministic.
    explained_variance_ : (n_components_,) singular values squared over
        (n_samples - 1), non-increasing.
    """

    def __init__(self, n_components=200):
        self.n_components = n_components

    def fit(self, X, y=None):
        if int(self.n_components) < 1:
            raise ConfigError(f"n_components must be >= 1, got {self.n_components}")
        X = check_matrix(X, "X", min_rows=2)
        n, d = X.shape
        self.mean_ = X.mean(axis=0)
        _, s, vt = np.linalg.svd(X - self.mean_, full_matrices=False)
        r = min(int(self.n_components), n - 1, d)
        comps = vt[:r]
        lead = np.argmax(np.abs(comps), axis=1)
        signs = np.sign(comps[np.arange(r), lead])
        signs[signs == 0] = 1.0
        self.components_ = comps * signs[:, None]
        self.explained_variance_ = s[:r] ** 2 / (n - 1)
        self.n_components_ = r
        self.n_features_in_ = d
        return self

    def transform(self, X):
        _require_fitted(self, "components_")
        X = check_matrix(X, "X")
        if X.shape[1] != self.n_features_in_:
            raise ShapeError(f"X has {X.shape[1]} features, PCA was fit on {self.n_features_in_}")
        return (X - self.mean_) @ self.components_.T

    def inverse_transform(self, Z):
        _require_fitted(self, "components_")
        Z = check_matrix(Z, "Z")
        if Z.shape[1] != self.n_components_:
            raise ShapeError(f"Z has {Z.shape[1]} columns, expected {self.n_components_}")
        return Z @ self.components_ + self.mean_


def _sq_dists(X, C):
    # expanded form keeps memory at (n, k); tiny negatives from cancellation are clipped
    d2 = (X * X).sum(axis=1)[:, None] + (C * C).sum(axis=1)[None, :] - 2.0 * (X @ C.T)
    return np.maximum(d2, 0.0, out=d2)


def _seed_centers(X, k, rng):
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]), dtype=X.dtype)
    centers[0] = X[int(rng.integers(n))]
    min_d2 = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        pick = int(np.argmax(min_d2))
        centers[j] = X[pick]
        np.minimum(min_d2, ((X - centers[j]) ** 2).sum(axis=1), out=min_d2)
    return centers


class KMeans(ClusterMixin, BaseEstimator):
    """Lloyd iterations with greedy farthest-point seeding.

    Attributes after fit: `cluster_centers_` (n_clusters, d), `labels_`,
    `inertia_`, `n_iter_`, and `inertia_history_` (one entry per assignment
    pass, non-increasing). A cluster that receives no points is re-seeded
    at the point currently farthest from its own center; if duplicates make
    that impossible the empty cluster simply persists, which is the fixed
    point the identical-points input converges to.
    """

    def __init__(self, n_clusters, random_state=0, max_iter=300, tol=1e-6):
        self.n_clusters = n_clusters
        self.random_state = random_state
        self.max_iter = max_iter
        self.tol = tol

    def _fill_empty(self, X, centers, labels, point_d2):
        counts = np.bincount(labels, minlength=self.n_clusters)
        for e in np.flatnonzero(counts == 0):
            if not np.any(point_d2 > 0):
                break
            donor = int(np.argmax(point_d2))
            centers[e] = X[donor]
            labels[donor] = e
            point_d2[donor] = 0.0

    def fit(self, X, y=None):
        k = int(self.n_clusters)
        if k < 1:
            raise ConfigError(f"n_clusters must be >= 1, got {self.n_clusters}")
        if int(self.max_iter) < 1:
            raise ConfigError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.tol < 0:
            raise ConfigError(f"tol must be >= 0, got {self.tol}")
        X = check_matrix(X, "X", min_rows=1)
        rng = np.random.default_rng(self.random_state)
        centers = _seed_centers(X, k, rng)
        history = []
        n_iter = 0
        rows = np.arange(X.shape[0])
        for n_iter in range(1, int(self.max_iter) + 1):
            d2 = _sq_dists(X, centers)
            labels = d2.argmin(axis=1)
            point_d2 = d2[rows, labels]
            self._fill_empty(X, centers, labels, point_d2)
            history.append(float(point_d2.sum()))
            new_centers = centers.copy()
            for j in range(k):
                members = labels == j
                if members.any():
                    new_centers[j] = X[members].mean(axis=0)
            shift = float(np.sqrt(((new_centers - centers) ** 2).sum(axis=1)).max())
            centers = new_centers
            if shift <= self.tol:
                break
        # sync the reported assignment with the final centers
        d2 = _sq_dists(X, centers)
        labels = d2.argmin(axis=1)
        self.cluster_centers_ = centers
        self.labels_ = labels
        self.inertia_ = float(d2[rows, labels].sum())
        self.n_iter_ = n_iter
        self.inertia_history_ = history
        return self

    def predict(self, X):
        _require_fitted(self, "cluster_centers_")
        X = check_matrix(X, "X")
        if X.shape[1] != self.cluster_centers_.shape[1]:
            raise ShapeError(
                f"X has {X.shape[1]} features, centers have {self.cluster_centers_.shape[1]}"
            )
        return _sq_dists(X, self.cluster_centers_).argmin(axis=1)


def medoid_indices(X, centers, labels):
    """Index of the point nearest its cluster's center, per non-empty cluster.

    Clusters are visited in ascending index order and distance ties go to
    the smallest point index, so the result is fully deterministic.
    """
    X = check_matrix(X, "X", min_rows=1)
    labels = np.asarray(labels)
    out = []
    for j in range(centers.shape[0]):
        members = np.flatnonzero(labels == j)
        if members.size == 0:
            continue
        d2 = ((X[members] - centers[j]) ** 2).sum(axis=1)
        out.append(int(members[int(np.argmin(d2))]))
    return np.array(out, dtype=np.int64)


class MetadataSelector(BaseEstimator):
    """Pick per-class representative activation maps for one client.

    fit(maps, labels) flattens the maps in (channel, row, column) order,
    fits one PCA across the client's whole set, then clusters each class
    in the reduced space and keeps cluster medoids. `selected_indices_`
    holds the chosen positions (classes in ascending order, clusters in
    ascending index order within a class); `select` additionally returns
    the untouched maps and labels at those positions.

    A class with fewer samples than clusters_per_class contributes one item
    per sample, never duplicates, so a general-position input yields
    sum over classes of min(clusters_per_class, class size) items.
    """

    def __init__(self, n_components=200, clusters_per_class=20, random_state=0,
                 max_iter=300, tol=1e-6):
        self.n_components = n_components
        self.clusters_per_class = clusters_per_class
        self.random_state = random_state
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, maps, labels):
        if int(self.clusters_per_class) < 1:
            raise ConfigError(f"clusters_per_class must be >= 1, got {self.clusters_per_class}")
        maps = check_maps(maps, "maps")
        if len(maps) == 0:
            raise ShapeError("maps is empty; nothing to select from")
        labels = check_labels(labels, len(maps), "labels")
        if len(maps) == 1:
            self.selected_indices_ = np.zeros(1, dtype=np.int64)
            self.pca_ = None
            return self
        flat = maps.reshape(len(maps), -1).astype(np.float64, copy=False)
        self.pca_ = PCA(self.n_components).fit(flat)
        reduced = self.pca_.transform(flat)
        chosen = []
        for cls in np.unique(labels):
            rows = np.flatnonzero(labels == cls)
            km = KMeans(
                self.clusters_per_class,
                random_state=np.random.SeedSequence([int(self.random_state), int(cls)]),
                max_iter=self.max_iter,
                tol=self.tol,
            ).fit(reduced[rows])
            meds = medoid_indices(reduced[rows], km.cluster_centers_, km.labels_)
            chosen.append(rows[meds])
        self.selected_indices_ = np.concatenate(chosen)
        return self

    def select(self, maps, labels):
        """Fit and return (selected_maps, selected_labels, indices)."""
        self.fit(maps, labels)
        idx = self.selected_indices_
        return np.asarray(maps)[idx], np.asarray(labels)[idx], idx
