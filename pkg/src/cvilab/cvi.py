"""Cluster validation indices and the geometry statistics behind them.

Five scores over a crisp partition: silhouette, Calinski-Harabasz,
Davies-Bouldin, Dunn, and Xie-Beni (the last optionally fuzzy, from a
membership matrix). Distances are Euclidean throughout. Structural
degeneracies that send a score to infinity (zero within-cluster scatter,
zero max diameter) return ``math.inf`` and are flagged "degenerate" in
reports instead of being serialized as a float; a genuine division by
zero (coincident centroids) raises :class:`CoincidentCentroidsError`.

Pairwise-distance scans run in row chunks so memory stays bounded on
large inputs, and every distance is computed pair by pair (no matrix
product shortcuts), so a min or max over a subset of the points equals
the same min or max over the full set bit for bit whenever the attaining
pair survives the subsetting.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

INDEX_NAMES = ("sh", "ch", "db", "di", "xb")

# Direction in which each index reads "better": silhouette,
# Calinski-Harabasz and Dunn rise with quality, Davies-Bouldin and
# Xie-Beni fall.
HIGHER_IS_BETTER = {"sh": True, "ch": True, "db": False, "di": True, "xb": False}

_CHUNK = 512


class CoincidentCentroidsError(ValueError):
    """Two distinct clusters share a centroid; the index divides by zero."""


@dataclass(frozen=True)
class PartitionGeometry:
    """Shared per-cluster statistics of a crisp partition.

    ``centroids[i]`` belongs to ``label_values[i]`` (sorted distinct
    labels). Diameters are max pairwise intra-cluster distances;
    separations are minima over inter-cluster point pairs and over
    centroid pairs. Singletons have diameter 0 and scatter 0.
    """

    points: np.ndarray
    labels: np.ndarray
    label_values: np.ndarray
    centroids: np.ndarray
    data_centroid: np.ndarray
    cluster_sizes: np.ndarray
    diameters: np.ndarray
    mean_scatter: np.ndarray
    min_separation_points: float
    min_separation_centroids: float

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def _validate_points_labels(points, labels) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(points, dtype=float)
    y = np.asarray(labels)
    if x.ndim != 2:
        raise ValueError("points must be a 2-D matrix")
    if y.ndim != 1 or y.shape[0] != x.shape[0]:
        raise ValueError("labels must be 1-D and match the number of points")
    if not np.all(np.isfinite(x)):
        raise ValueError("points contain non-finite entries")
    return x, y


def _cluster_distance_sums(x: np.ndarray, canon: np.ndarray, k: int) -> np.ndarray:
    """N×k matrix of summed distances from each point to each cluster."""
    n = x.shape[0]
    onehot = np.zeros((n, k))
    onehot[np.arange(n), canon] = 1.0
    sums = np.empty((n, k))
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        sums[start:stop] = cdist(x[start:stop], x) @ onehot
    return sums


def _diameters_and_min_separation(
    x: np.ndarray, canon: np.ndarray, k: int
) -> tuple[np.ndarray, float]:
    n = x.shape[0]
    diameters = np.zeros(k)
    min_sep = math.inf
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        dist = cdist(x[start:stop], x)
        same = canon[start:stop, None] == canon[None, :]
        intra_rowmax = np.where(same, dist, 0.0).max(axis=1)
        np.maximum.at(diameters, canon[start:stop], intra_rowmax)
        inter = np.where(same, math.inf, dist)
        chunk_min = inter.min(initial=math.inf)
        if chunk_min < min_sep:
            min_sep = chunk_min
    return diameters, float(min_sep)


def partition_geometry(points, labels) -> PartitionGeometry:
    """Compute the shared statistics every index draws on."""
    x, y = _validate_points_labels(points, labels)
    label_values, canon = np.unique(y, return_inverse=True)
    k = label_values.shape[0]
    sizes = np.bincount(canon, minlength=k)
    d = x.shape[1]
    centroids = np.empty((k, d))
    scatter = np.empty(k)
    for c in range(k):
        members = x[canon == c]
        centroids[c] = members.mean(axis=0)
        scatter[c] = float(np.linalg.norm(members - centroids[c], axis=1).mean())
    diameters, min_sep_points = _diameters_and_min_separation(x, canon, k)
    if k >= 2:
        gaps = cdist(centroids, centroids)
        np.fill_diagonal(gaps, math.inf)
        min_sep_centroids = float(gaps.min())
    else:
        min_sep_centroids = math.inf
    return PartitionGeometry(
        points=x,
        labels=y,
        label_values=label_values,
        centroids=centroids,
        data_centroid=x.mean(axis=0),
        cluster_sizes=sizes,
        diameters=diameters,
        mean_scatter=scatter,
        min_separation_points=min_sep_points,
        min_separation_centroids=min_sep_centroids,
    )


def silhouette(points, labels) -> float:
    """Mean silhouette width.

    Per point: a = mean distance to co-members (self excluded), b = the
    smallest over other clusters of the mean distance to that cluster's
    members, s = (b-a)/max(a,b). Points in singleton clusters contribute
    s = 0, as does a 0/0 (all relevant distances zero).
    """
    x, y = _validate_points_labels(points, labels)
    label_values, canon = np.unique(y, return_inverse=True)
    k = label_values.shape[0]
    if k < 2:
        raise ValueError("silhouette needs at least 2 clusters")
    n = x.shape[0]
    if n < 3:
        raise ValueError("silhouette needs at least 3 points")
    sizes = np.bincount(canon, minlength=k)
    sums = _cluster_distance_sums(x, canon, k)
    rows = np.arange(n)
    own_size = sizes[canon]
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(own_size > 1, sums[rows, canon] / np.maximum(own_size - 1, 1), 0.0)
    other = sums / sizes[None, :]
    other[rows, canon] = math.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    with np.errstate(invalid="ignore"):
        s = np.where(denom > 0, (b - a) / denom, 0.0)
    s[own_size == 1] = 0.0
    return float(s.mean())


def calinski_harabasz(points, labels) -> float:
    """Between/within variance ratio, degree-of-freedom adjusted.

    Returns ``math.inf`` when the within-cluster scatter is exactly zero
    (every point sits on its centroid); callers report that case as
    degenerate rather than as a number.
    """
    geom = partition_geometry(points, labels)
    n = geom.points.shape[0]
    k = geom.k
    if k < 2:
        raise ValueError("index needs at least 2 clusters")
    if k >= n:
        raise ValueError("index needs k < N")
    between = float(
        (
            geom.cluster_sizes
            * np.square(geom.centroids - geom.data_centroid).sum(axis=1)
        ).sum()
    )
    canon = np.searchsorted(geom.label_values, geom.labels)
    within = float(np.square(geom.points - geom.centroids[canon]).sum())
    if within == 0.0:
        return math.inf
    return (between / (k - 1)) / (within / (n - k))


def davies_bouldin(points, labels) -> float:
    """Mean over clusters of the worst (scatter_i + scatter_j) / gap_ij
    over partners j, pairwise over distinct clusters."""
    geom = partition_geometry(points, labels)
    k = geom.k
    if k < 2:
        raise ValueError("index needs at least 2 clusters")
    gaps = cdist(geom.centroids, geom.centroids)
    off_diagonal = gaps[~np.eye(k, dtype=bool)]
    if off_diagonal.min() == 0.0:
        raise CoincidentCentroidsError("two clusters share a centroid")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (geom.mean_scatter[:, None] + geom.mean_scatter[None, :]) / gaps
    ratio[np.diag_indices(k)] = -math.inf
    return float(ratio.max(axis=1).mean())


def dunn(points, labels) -> float:
    """Min single-linkage inter-cluster distance over max cluster diameter.

    Returns ``math.inf`` when the max diameter is zero (every cluster a
    singleton, or all members coincident); reported as degenerate.
    """
    geom = partition_geometry(points, labels)
    if geom.k < 2:
        raise ValueError("index needs at least 2 clusters")
    max_diameter = float(geom.diameters.max())
    if max_diameter == 0.0:
        return math.inf
    return geom.min_separation_points / max_diameter


def xie_beni(points, u_or_labels, centroids=None, m: float = 2.0) -> float:
    """Membership-weighted squared scatter over N times squared min
    centroid separation.

    Accepts either a hard label vector (converted to one-hot memberships,
    for which any fuzzifier gives the crisp value exactly) or an N×k
    membership matrix. Centroids default to the per-cluster means for
    labels, or to the membership-weighted means for a fuzzy matrix.
    """
    x = np.asarray(points, dtype=float)
    u = np.asarray(u_or_labels)
    if u.ndim == 1:
        _, canon = np.unique(u, return_inverse=True)
        k = int(canon.max()) + 1 if canon.size else 0
        onehot = np.zeros((x.shape[0], k))
        onehot[np.arange(x.shape[0]), canon] = 1.0
        u = onehot
        if centroids is None:
            centroids = np.array(
                [x[canon == c].mean(axis=0) for c in range(k)]
            )
    elif u.ndim == 2:
        u = u.astype(float)
        if u.shape[0] != x.shape[0]:
            raise ValueError("membership rows must match the number of points")
        if centroids is None:
            if not m > 1.0:
                raise ValueError("fuzzifier must exceed 1 to derive centroids")
            w = u**m
            centroids = (w.T @ x) / w.sum(axis=0)[:, None]
    else:
        raise ValueError("second argument must be labels or a membership matrix")
    cent = np.asarray(centroids, dtype=float)
    k = cent.shape[0]
    if k < 2:
        raise ValueError("index needs at least 2 clusters")
    gaps = cdist(cent, cent)
    np.fill_diagonal(gaps, math.inf)
    min_gap = float(gaps.min())
    if min_gap == 0.0:
        raise CoincidentCentroidsError("two centroids coincide")
    scatter = float(((u**m) * cdist(x, cent) ** 2).sum())
    return scatter / (x.shape[0] * min_gap**2)


@dataclass(frozen=True)
class CviReport:
    """All five index values for one partition.

    A value is a finite float normally, ``math.inf`` when flagged in
    ``degenerate``, and ``None`` when the index raised (message kept in
    ``errors``). ``fuzzy`` records whether the Xie-Beni value used a
    membership matrix rather than hard labels.
    """

    sh: float | None
    ch: float | None
    db: float | None
    di: float | None
    xb: float | None
    k_effective: int
    fuzzy: bool
    degenerate: tuple[str, ...] = ()
    errors: tuple[tuple[str, str], ...] = ()

    def value_map(self) -> dict[str, float | None]:
        return {name: getattr(self, name) for name in INDEX_NAMES}


def _collect(parts: dict, name: str, compute) -> None:
    try:
        value = compute()
    except ValueError as exc:
        parts[name] = None
        parts["errors"].append((name, str(exc)))
        return
    if math.isinf(value):
        parts["degenerate"].append(name)
    parts[name] = value


def evaluate_labels(points, labels) -> CviReport:
    """All five indices on a hard partition; Xie-Beni in crisp mode.

    Per-index failures are recorded in the report instead of aborting
    the other indices.
    """
    x, y = _validate_points_labels(points, labels)
    k_effective = int(np.unique(y).shape[0])
    parts: dict = {"degenerate": [], "errors": []}
    _collect(parts, "sh", lambda: silhouette(x, y))
    _collect(parts, "ch", lambda: calinski_harabasz(x, y))
    _collect(parts, "db", lambda: davies_bouldin(x, y))
    _collect(parts, "di", lambda: dunn(x, y))
    _collect(parts, "xb", lambda: xie_beni(x, y))
    return CviReport(
        sh=parts["sh"],
        ch=parts["ch"],
        db=parts["db"],
        di=parts["di"],
        xb=parts["xb"],
        k_effective=k_effective,
        fuzzy=False,
        degenerate=tuple(parts["degenerate"]),
        errors=tuple(parts["errors"]),
    )


def evaluate_all(points, model, use_memberships: bool = True) -> CviReport:
    """All five indices for a fitted model's partition.

    The four label-based indices use the hardened labels; Xie-Beni uses
    the membership matrix and fitted centroids when ``use_memberships``
    (the ``fuzzy`` flag records which mode was taken). Singleton clusters
    count as clusters.
    """
    x = np.asarray(points, dtype=float)
    labels = np.asarray(model.labels)
    crisp = evaluate_labels(x, labels)
    if not use_memberships:
        return crisp
    parts: dict = {"degenerate": [], "errors": []}
    _collect(
        parts,
        "xb",
        lambda: xie_beni(x, model.memberships, model.centroids, model.fuzzifier),
    )
    errors = tuple(e for e in crisp.errors if e[0] != "xb") + tuple(parts["errors"])
    degenerate = tuple(
        n for n in crisp.degenerate if n != "xb"
    ) + (("xb",) if parts["xb"] is not None and math.isinf(parts["xb"]) else ())
    return CviReport(
        sh=crisp.sh,
        ch=crisp.ch,
        db=crisp.db,
        di=crisp.di,
        xb=parts["xb"],
        k_effective=crisp.k_effective,
        fuzzy=True,
        degenerate=degenerate,
        errors=errors,
    )


def report_to_dict(report: CviReport) -> dict:
    payload: dict = {}
    for name in INDEX_NAMES:
        value = getattr(report, name)
        payload[name] = value if value is not None and math.isfinite(value) else None
    payload["k_effective"] = report.k_effective
    payload["fuzzy"] = report.fuzzy
    payload["degenerate_flags"] = list(report.degenerate)
    payload["errors"] = {name: message for name, message in report.errors}
    return payload


def report_from_dict(payload: dict) -> CviReport:
    values: dict = {}
    degenerate = tuple(payload.get("degenerate_flags", ()))
    errors = tuple((k, v) for k, v in payload.get("errors", {}).items())
    for name in INDEX_NAMES:
        raw = payload.get(name)
        if raw is not None:
            values[name] = float(raw)
        elif name in degenerate:
            values[name] = math.inf
        else:
            values[name] = None
    return CviReport(
        k_effective=int(payload["k_effective"]),
        fuzzy=bool(payload["fuzzy"]),
        degenerate=degenerate,
        errors=errors,
        **values,
    )


def report_to_json(report: CviReport) -> str:
    return json.dumps(report_to_dict(report), indent=2)


def report_from_json(text: str) -> CviReport:
    return report_from_dict(json.loads(text))
