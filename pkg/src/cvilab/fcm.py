"""Fuzzy c-means clustering and partition-coefficient model selection.

Classic alternating optimization: memberships from centroid distances
(exponent 2/(m-1)), centroids as membership-weighted means, repeated until
the centroids stop moving. Fitting is seeded and restarted; the restart with
the lowest final objective wins. The fuzzy partition coefficient, maximized
over a candidate range, picks the cluster count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .rng import derive_stream

K_MAX_DEFAULT = 10


@dataclass(frozen=True)
class FcmConfig:
    """Knobs for a fuzzy c-means fit.

    ``fuzzifier`` may be a number greater than 1 or the string
    ``"estimate"`` to delegate to :func:`estimate_fuzzifier`.
    """

    k: int
    fuzzifier: float | str = 2.0
    max_iter: int = 300
    tol: float = 1e-6
    seed: int = 0
    restarts: int = 10

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be at least 2")
        if isinstance(self.fuzzifier, str):
            if self.fuzzifier != "estimate":
                raise ValueError(f"unknown fuzzifier spec {self.fuzzifier!r}")
        elif not self.fuzzifier > 1.0:
            raise ValueError("fuzzifier must exceed 1")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be positive")


@dataclass(frozen=True)
class ClusterModel:
    """Result of one fuzzy c-means fit.

    ``memberships`` rows sum to 1; ``labels`` is their per-row argmax (ties
    to the lowest index); ``objective_trace`` holds the objective after each
    iteration of the winning restart. ``empty_clusters`` flags clusters that
    received no points under hardening.
    """

    centroids: np.ndarray        # (k, d)
    memberships: np.ndarray      # (N, k)
    fuzzifier: float
    labels: np.ndarray           # (N,)
    objective_trace: np.ndarray  # (iterations,)
    empty_clusters: tuple[int, ...] = ()

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def estimate_fuzzifier(data: np.ndarray, strategy=None) -> float:
    """Fuzzifier value for a dataset.

    The estimator is pluggable: ``strategy`` is any callable mapping the
    data matrix to a scalar. The default strategy returns 2.0, the common
    general-purpose choice. Whatever the source, the value must land in
    (1, 5].
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise ValueError("need a 2-D data matrix with at least 2 rows")
    m = 2.0 if strategy is None else float(strategy(x))
    if not 1.0 < m <= 5.0:
        raise ValueError(f"fuzzifier {m} outside (1, 5]")
    return m


def _memberships(x: np.ndarray, centroids: np.ndarray, m: float) -> np.ndarray:
    dist = cdist(x, centroids)
    u = np.zeros_like(dist)
    coincident = dist == 0.0
    hit = coincident.any(axis=1)
    if hit.any():
        # Point sitting on a centroid: crisp membership to the first such
        # centroid (standard singularity fix).
        first = np.argmax(coincident[hit], axis=1)
        u[np.flatnonzero(hit), first] = 1.0
    free = ~hit
    if free.any():
        d = dist[free]
        # Scale by each row's min distance so the power stays in [0, 1]
        # and cannot overflow.
        w = (d / d.min(axis=1, keepdims=True)) ** (-2.0 / (m - 1.0))
        u[free] = w / w.sum(axis=1, keepdims=True)
    return u


def _centroids(x: np.ndarray, u: np.ndarray, m: float, previous: np.ndarray) -> np.ndarray:
    w = u**m
    weights = w.sum(axis=0)
    new = previous.copy()
    nonzero = weights > 0
    new[nonzero] = (w.T[nonzero] @ x) / weights[nonzero, None]
    return new


def _objective(x: np.ndarray, u: np.ndarray, centroids: np.ndarray, m: float) -> float:
    return float(((u**m) * cdist(x, centroids) ** 2).sum())


def fit_fcm(data: np.ndarray, config: FcmConfig) -> ClusterModel:
    """Fit fuzzy c-means; best of ``config.restarts`` seeded starts.

    Each restart initializes centroids at k distinct data points drawn from
    its own child stream, so the fit is bit-deterministic for a given seed
    and config. Iteration stops when the largest centroid displacement
    drops below ``tol`` or ``max_iter`` is reached.
    """
    x = np.ascontiguousarray(np.asarray(data, dtype=float))
    if x.ndim != 2:
        raise ValueError("expected a 2-D data matrix")
    n = x.shape[0]
    if n <= config.k:
        raise ValueError(f"need more points ({n}) than clusters ({config.k})")
    if not np.all(np.isfinite(x)):
        raise ValueError("data contains non-finite entries")
    m = (
        estimate_fuzzifier(x)
        if config.fuzzifier == "estimate"
        else float(config.fuzzifier)
    )

    best: tuple[np.ndarray, np.ndarray, list[float]] | None = None
    for restart in range(config.restarts):
        rng = derive_stream(config.seed, restart)
        centroids = x[rng.choice(n, size=config.k, replace=False)].copy()
        trace: list[float] = []
        u = _memberships(x, centroids, m)
        for _ in range(config.max_iter):
            new_centroids = _centroids(x, u, m, centroids)
            trace.append(_objective(x, u, new_centroids, m))
            shift = float(np.linalg.norm(new_centroids - centroids, axis=1).max())
            centroids = new_centroids
            if shift < config.tol:
                break
            u = _memberships(x, centroids, m)
        if best is None or trace[-1] < best[2][-1]:
            best = (centroids, u, trace)

    centroids, u, trace = best
    labels = np.argmax(u, axis=1)
    empty = tuple(int(j) for j in range(config.k) if not np.any(labels == j))
    return ClusterModel(
        centroids=centroids,
        memberships=u,
        fuzzifier=m,
        labels=labels,
        objective_trace=np.array(trace, dtype=float),
        empty_clusters=empty,
    )


def fuzzy_partition_coefficient(u: np.ndarray) -> float:
    """Mean squared membership, 1/N * sum(u^2): 1 for a crisp partition,
    1/k for a maximally fuzzy one."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.size == 0:
        raise ValueError("membership matrix must be 2-D and nonempty")
    return float(np.square(u).sum() / u.shape[0])


def harden(model: ClusterModel) -> np.ndarray:
    """Crisp labels: per-row argmax of the memberships, ties to the lowest
    cluster index."""
    return np.argmax(model.memberships, axis=1)


def select_cluster_count(
    data: np.ndarray, config: FcmConfig, k_range: tuple[int, int] = (2, K_MAX_DEFAULT)
) -> tuple[int, list[tuple[int, float]]]:
    """Fit every k in ``k_range`` and pick the FPC argmax (ties: smaller k).

    Returns the chosen k and the (k, FPC) curve for export. Refitting with
    ``k=k*`` reproduces the winning model bit for bit, so the curve alone
    is enough to resume from.
    """
    x = np.asarray(data, dtype=float)
    lo, hi = k_range
    if lo < 2 or hi < lo:
        raise ValueError(f"bad k range [{lo}, {hi}]")
    if hi > x.shape[0] - 1:
        raise ValueError(f"k range upper bound {hi} exceeds N-1 = {x.shape[0] - 1}")
    curve: list[tuple[int, float]] = []
    for k in range(lo, hi + 1):
        cfg = FcmConfig(
            k=k,
            fuzzifier=config.fuzzifier,
            max_iter=config.max_iter,
            tol=config.tol,
            seed=config.seed,
            restarts=config.restarts,
        )
        model = fit_fcm(x, cfg)
        curve.append((k, fuzzy_partition_coefficient(model.memberships)))
    best_k = max(curve, key=lambda kv: (kv[1], -kv[0]))[0]
    return best_k, curve


def model_to_dict(model: ClusterModel) -> dict:
    return {
        "centroids": model.centroids.tolist(),
        "U": model.memberships.tolist(),
        "m": model.fuzzifier,
        "labels": model.labels.tolist(),
        "objective_trace": model.objective_trace.tolist(),
        "empty_clusters": list(model.empty_clusters),
    }


def model_from_dict(payload: dict) -> ClusterModel:
    return ClusterModel(
        centroids=np.array(payload["centroids"], dtype=float),
        memberships=np.array(payload["U"], dtype=float),
        fuzzifier=float(payload["m"]),
        labels=np.array(payload["labels"], dtype=int),
        objective_trace=np.array(payload["objective_trace"], dtype=float),
        empty_clusters=tuple(payload.get("empty_clusters", ())),
    )


def model_to_json(model: ClusterModel) -> str:
    return json.dumps(model_to_dict(model), indent=2)


def model_from_json(text: str) -> ClusterModel:
    return model_from_dict(json.loads(text))
