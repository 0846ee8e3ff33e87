"""Phrase embedding, k-means clustering and PCA projection of "not yes" texts."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .dataset_io import normalize_text
from .errors import DimensionMismatch, TooFewPoints
from .text_prep import stemmed, tokenize

DIM = 512


@lru_cache(maxsize=262144)
def _bucket(feature: str, dim: int) -> tuple[int, float]:
    h = int.from_bytes(hashlib.blake2b(feature.encode("utf-8"), digest_size=8).digest(), "little")
    return h % dim, (1.0 if (h >> 63) & 1 == 0 else -1.0)


def ngram_features(text: str) -> list[str]:
    """Word unigrams and boundary-padded character 3-grams of ``text``."""
    norm = normalize_text(text, lower=True)
    if not norm:
        return []
    feats = ["w:" + t for t in tokenize(norm)]
    padded = f" {norm} "
    feats.extend("c:" + padded[i : i + 3] for i in range(len(padded) - 2))
    return feats


def embed_text(text: str, dim: int = DIM) -> np.ndarray:
    """Signed feature-hashing embedding, L2-normalised; zero vector for blank text."""
    vec = np.zeros(dim)
    for feat in ngram_features(text):
        idx, sign = _bucket(feat, dim)
        vec[idx] += sign
    norm = np.linalg.norm(vec)
    if norm > 0:
        vec /= norm
    return vec


def canonical_phrase(text: str) -> str:
    """Sorted stemmed tokens: phrases with equal stem multisets map to one key."""
    return " ".join(sorted(stemmed(text)))


# -- k-means ------------------------------------------------------------------


@dataclass(frozen=True)
class KMeansModel:
    k: int
    centroids: np.ndarray
    inertia: float
    seed: int
    iterations_run: int
    # per-iteration inertia of the winning restart
    inertia_history: tuple[float, ...] = ()
    restart: int = 0

    def predict(self, points) -> np.ndarray:
        return assign_clusters(self.centroids, np.asarray(points, dtype=float))


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def assign_clusters(centroids: np.ndarray, points: np.ndarray) -> np.ndarray:
    # np.argmin returns the first minimum, so ties go to the lowest index
    return np.argmin(_sq_dists(points, centroids), axis=1)


def assign_cluster(model: KMeansModel, point) -> int:
    point = np.asarray(point, dtype=float)
    if point.ndim != 1 or point.shape[0] != model.centroids.shape[1]:
        raise DimensionMismatch(f"point has shape {point.shape}, centroids have dimension {model.centroids.shape[1]}")
    return int(assign_clusters(model.centroids, point[None, :])[0])


def kmeans_plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(points)
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(points, points[chosen])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # fewer distinct points than k: fall back to any unchosen index
            remaining = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(remaining))
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        chosen.append(nxt)
        d2 = np.minimum(d2, _sq_dists(points, points[[nxt]])[:, 0])
    return points[chosen].copy()


def _lloyd(points, centroids, max_iter, tol):
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _sq_dists(points, centroids)
        labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(points)), labels].sum()))
        new = centroids.copy()
        for j in range(len(centroids)):
            members = points[labels == j]
            if len(members):
                new[j] = members.mean(axis=0)
            else:
                # re-seed an empty cluster at the point farthest from its centroid
                far = int(np.argmax(d2[np.arange(len(points)), labels]))
                new[j] = points[far]
                labels[far] = j
        shift = np.max(np.abs(new - centroids)) if len(new) else 0.0
        centroids = new
        if shift < tol:
            break
    d2 = _sq_dists(points, centroids)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(len(points)), labels].sum())
    history.append(inertia)
    return centroids, inertia, it, history


def _hartigan(points, centroids):
    """Single-point transfers that lower inertia, run from a Lloyd fixed point.

    Moving x from cluster a (size n_a) to b changes inertia by
    n_b/(n_b+1)*|x-c_b|^2 - n_a/(n_a-1)*|x-c_a|^2; Lloyd's rule ignores the
    size factors and so stops at partitions this step can still improve.
    """
    k = len(centroids)
    labels = assign_clusters(centroids, points)
    counts = np.bincount(labels, minlength=k).astype(float)
    sums = np.zeros_like(centroids)
    np.add.at(sums, labels, points)
    moved = True
    while moved:
        moved = False
        for i, x in enumerate(points):
            a = labels[i]
            if counts[a] <= 1:
                continue
            d2 = ((sums / np.maximum(counts, 1)[:, None] - x) ** 2).sum(axis=1)
            leave = counts[a] / (counts[a] - 1) * d2[a]
            join = counts / (counts + 1) * d2
            join[a] = np.inf
            b = int(np.argmin(join))
            if join[b] < leave * (1 - 1e-12):
                labels[i] = b
                counts[a] -= 1
                counts[b] += 1
                sums[a] -= x
                sums[b] += x
                moved = True
    centroids = sums / np.maximum(counts, 1)[:, None]
    inertia = float(((points - centroids[labels]) ** 2).sum())
    return centroids, inertia


def fit_kmeans(points, k: int, seed: int = 42, n_restarts: int = 10, max_iter: int = 300, tol: float = 1e-4) -> KMeansModel:
    """Lloyd's algorithm with k-means++ seeding; the lowest-inertia restart wins.

    Each restart's Lloyd fixed point is polished with Hartigan transfers.

    Restart ``r`` draws from its own generator seeded with ``(seed, r)``.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise DimensionMismatch("points must form a 2-D array")
    if k < 1:
        raise ValueError("k must be at least 1")
    if len(points) < k:
        raise TooFewPoints(f"need at least {k} points, got {len(points)}")
    best = None
    for r in range(n_restarts):
        rng = np.random.default_rng([seed, r])
        init = kmeans_plusplus(points, k, rng)
        centroids, inertia, iters, history = _lloyd(points, init, max_iter, tol)
        centroids, refined = _hartigan(points, centroids)
        if refined < inertia:
            inertia = refined
            history.append(inertia)
        if best is None or inertia < best[1]:
            best = (centroids, inertia, iters, history, r)
    centroids, inertia, iters, history, r = best
    return KMeansModel(k, centroids, inertia, seed, iters, tuple(history), r)


# -- PCA ----------------------------------------------------------------------


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray
    degenerate: bool = False

    def transform(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.mean.shape[0]:
            raise DimensionMismatch(f"expected dimension {self.mean.shape[0]}, got {points.shape[1]}")
        return (points - self.mean) @ self.components.T


def _orient(components: np.ndarray) -> np.ndarray:
    out = components.copy()
    for i, row in enumerate(out):
        if row[np.argmax(np.abs(row))] < 0:
            out[i] = -row
    return out


def fit_pca(points, m: int = 2) -> PcaModel:
    """Top-``m`` principal axes from the SVD of the centred data.

    Each component is flipped so that its largest-magnitude entry is positive.
    Identical points give a flagged model with unit-basis components.
    """
    x = np.asarray(points, dtype=float)
    if x.ndim != 2 or len(x) < 2:
        raise TooFewPoints("PCA needs at least two points")
    n, d = x.shape
    if not 1 <= m <= d:
        raise DimensionMismatch(f"cannot extract {m} components from dimension {d}")
    mean = x.mean(axis=0)
    centred = x - mean
    if not np.any(centred):
        return PcaModel(mean, np.eye(d)[:m], np.zeros(m), degenerate=True)
    _, s, vt = np.linalg.svd(centred, full_matrices=True)
    var = np.zeros(d)
    var[: len(s)] = s**2 / (n - 1)
    return PcaModel(mean, _orient(vt[:m]), var[:m])


def project_2d(model: PcaModel, point) -> np.ndarray:
    point = np.asarray(point, dtype=float)
    if point.ndim != 1:
        raise DimensionMismatch("project_2d takes a single vector")
    if model.components.shape[0] < 2:
        raise DimensionMismatch("model has fewer than two components")
    return model.transform(point)[0, :2]


# -- phrase clustering --------------------------------------------------------


@dataclass(frozen=True)
class ClusterAssignment:
    phrase: str
    cluster_id: int
    projected_xy: tuple[float, float]


@dataclass(frozen=True)
class PhraseClustering:
    assignments: list[ClusterAssignment]
    kmeans: KMeansModel
    pca: PcaModel
    centroid_xy: np.ndarray = field(repr=False, default=None)


def cluster_phrases(phrases: list[str], k: int = 6, seed: int = 42, n_restarts: int = 10) -> PhraseClustering:
    """Embed, cluster and project a list of phrases.

    Phrases are embedded through their canonical stem multiset, so phrases
    that differ only in word order or inflection share a vector and hence a
    cluster. Cluster ids are renumbered by ascending first PCA coordinate of
    their centroid.
    """
    keys = [canonical_phrase(p) for p in phrases]
    if len(set(keys)) < k:
        raise TooFewPoints(f"need at least {k} distinct phrases, got {len(set(keys))}")
    cache: dict[str, np.ndarray] = {}
    for key in keys:
        if key not in cache:
            cache[key] = embed_text(key)
    x = np.stack([cache[key] for key in keys])
    km = fit_kmeans(x, k, seed=seed, n_restarts=n_restarts)
    pca = fit_pca(x, 2)

    cxy = pca.transform(km.centroids)
    # stable: equal first coordinates keep their original order
    order = np.argsort(cxy[:, 0], kind="stable")
    centroids = km.centroids[order]
    km = KMeansModel(k, centroids, km.inertia, km.seed, km.iterations_run, km.inertia_history, km.restart)
    cxy = cxy[order]

    labels = assign_clusters(centroids, x)
    xy = pca.transform(x)
    assignments = [
        ClusterAssignment(p, int(c), (float(a), float(b)))
        for p, c, (a, b) in zip(phrases, labels, xy)
    ]
    return PhraseClustering(assignments, km, pca, cxy)
