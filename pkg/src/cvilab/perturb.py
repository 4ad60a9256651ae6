"""Seeded perturbation experiments over a fixed partition.

Three experiments measure how the five validation indices respond to a
known structure change: enumerating every inclusion subset of the
singleton clusters, injecting extra points near each cluster's center,
and shrinking every cluster's radius. The partition is held fixed while
the indices are recomputed (an optional refit callback re-clusters
instead), trials draw from per-trial derived RNG streams so runs are
bit-reproducible and parallelizable, and a per-index verdict summarizes
whether the perturbation helped.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np

from .cvi import (
    CviReport,
    HIGHER_IS_BETTER,
    INDEX_NAMES,
    evaluate_labels,
    report_from_dict,
    report_to_dict,
)
from .rng import derive_stream

EXPERIMENT_KINDS = ("outliers", "density", "diameter")

# Absolute tolerance for "all subset rows equal" in the outlier verdict,
# and the smaller tolerance below which a single subset-pair delta is
# treated as a tie and dropped.
EQUAL_TOL = 1e-9
DELTA_TIE_TOL = 1e-12

SIGN_TEST_ALPHA = 0.05

_MAX_SINGLETONS = 16


class RejectionBudgetError(RuntimeError):
    """The ball sampler ran out of attempts; geometry likely overlaps."""


@dataclass(frozen=True)
class PerturbConfig:
    seed: int = 0
    trials: int = 100
    density_add_fraction: float = 1.0
    shrink_factor: float = 0.8
    sigma_divisor: float = 4.0
    max_rejection_attempts: int = 1000

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not 0.0 < self.shrink_factor < 1.0:
            raise ValueError("shrink_factor must lie in (0, 1)")
        if not self.sigma_divisor > 0:
            raise ValueError("sigma_divisor must be positive")
        if self.max_rejection_attempts < 1:
            raise ValueError("max_rejection_attempts must be positive")
        if self.density_add_fraction < 0:
            raise ValueError("density_add_fraction must be nonnegative")


@dataclass(frozen=True)
class ExperimentRow:
    """One variant (outlier subset) or one trial of a perturbation."""

    variant: str
    report: CviReport
    kept: tuple[int, ...] | None = None
    trial: int | None = None


@dataclass(frozen=True)
class ExperimentReport:
    kind: str
    seed: int
    config: PerturbConfig
    baseline: CviReport
    rows: tuple[ExperimentRow, ...]
    average: CviReport | None
    degenerate_counts: tuple[tuple[str, int], ...]
    verdicts: tuple[tuple[str, str], ...]

    def verdict_map(self) -> dict[str, str]:
        return dict(self.verdicts)


def worker_count() -> int:
    """Trial worker cap: CVILAB_THREADS when set, else the CPU count."""
    raw = os.environ.get("CVILAB_THREADS", "").strip()
    if raw:
        value = int(raw)
        if value < 1:
            raise ValueError("CVILAB_THREADS must be a positive integer")
        return value
    return os.cpu_count() or 1


def _labels_of(model_or_labels) -> np.ndarray:
    labels = getattr(model_or_labels, "labels", model_or_labels)
    return np.asarray(labels)


def find_singleton_clusters(model) -> list[int]:
    """Labels of clusters with exactly one member, ascending."""
    labels = _labels_of(model)
    values, counts = np.unique(labels, return_counts=True)
    return [int(v) for v, c in zip(values, counts) if c == 1]


def _remove_clusters(points, labels, drop) -> tuple[np.ndarray, np.ndarray]:
    """Drop whole clusters and renumber the survivors to 0..k'-1."""
    x = np.asarray(points, dtype=float)
    y = np.asarray(labels)
    keep = ~np.isin(y, list(drop))
    kept_x = x[keep]
    _, renumbered = np.unique(y[keep], return_inverse=True)
    return kept_x, renumbered


def _label_centroids(points, labels) -> tuple[np.ndarray, np.ndarray]:
    """Per-cluster mean vectors in ascending label order, plus the order."""
    values = np.unique(labels)
    centroids = np.array([points[labels == v].mean(axis=0) for v in values])
    return centroids, values


def _sample_in_ball(rng, center, radius, sigma, centroids, own, budget) -> np.ndarray:
    """One Gaussian draw accepted inside the ball and the center's own
    nearest-centroid region."""
    for _ in range(budget):
        sample = center + rng.normal(0.0, sigma, size=center.shape[0])
        gaps = np.linalg.norm(centroids - sample, axis=1)
        if gaps[own] <= radius and gaps[own] == gaps.min():
            return sample
    raise RejectionBudgetError(
        f"no acceptable sample for cluster {own} in {budget} attempts"
    )


def inject_density(
    points,
    model,
    cluster: int,
    count: int,
    rng,
    *,
    sigma_divisor: float = 4.0,
    max_rejection_attempts: int = 1000,
) -> np.ndarray:
    """Sample ``count`` new members for one cluster near its center.

    Draws isotropic Gaussians at the cluster's mean with sigma =
    radius / sigma_divisor and accepts a draw only when it lies within
    the cluster's radius and nearer to this cluster's center than to any
    other. Returns the accepted points; the caller labels them.
    """
    x = np.asarray(points, dtype=float)
    labels = _labels_of(model)
    if count < 1:
        raise ValueError("count must be at least 1")
    members = x[labels == cluster]
    if members.shape[0] < 2:
        raise ValueError(f"cluster {cluster} is singleton or missing")
    centroids, values = _label_centroids(x, labels)
    own = int(np.searchsorted(values, cluster))
    radius = float(np.linalg.norm(members - centroids[own], axis=1).max())
    if radius == 0.0:
        raise ValueError(f"cluster {cluster} has zero radius")
    sigma = radius / sigma_divisor
    out = np.empty((count, x.shape[1]))
    for i in range(count):
        out[i] = _sample_in_ball(
            rng, centroids[own], radius, sigma, centroids, own, max_rejection_attempts
        )
    return out


def shrink_clusters(points, model, config: PerturbConfig, rng) -> np.ndarray:
    """Shrink every cluster's radius by ``config.shrink_factor``.

    Members inside the reduced radius stay put; each member beyond it is
    replaced, at its own row, by a fresh draw from the ball sampler at
    the reduced radius, so per-cluster counts never change. Acceptance
    tests run against the input partition's centroids throughout.
    Singleton and zero-radius clusters are left untouched.
    """
    x = np.asarray(points, dtype=float)
    labels = _labels_of(model)
    centroids, values = _label_centroids(x, labels)
    out = x.copy()
    for own, value in enumerate(values):
        rows = np.flatnonzero(labels == value)
        if rows.shape[0] < 2:
            continue
        gaps = np.linalg.norm(x[rows] - centroids[own], axis=1)
        radius = float(gaps.max())
        if radius == 0.0:
            continue
        reduced = config.shrink_factor * radius
        sigma = reduced / config.sigma_divisor
        for row in rows[gaps > reduced]:
            out[row] = _sample_in_ball(
                rng,
                centroids[own],
                reduced,
                sigma,
                centroids,
                own,
                config.max_rejection_attempts,
            )
    return out


def _average_rows(
    rows: list[ExperimentRow], k_effective: int
) -> tuple[CviReport, tuple[tuple[str, int], ...]]:
    values: dict[str, float | None] = {}
    counts: list[tuple[str, int]] = []
    for name in INDEX_NAMES:
        finite = [
            row.report.value_map()[name]
            for row in rows
            if row.report.value_map()[name] is not None
            and math.isfinite(row.report.value_map()[name])
        ]
        counts.append((name, len(rows) - len(finite)))
        values[name] = math.fsum(finite) / len(finite) if finite else None
    average = CviReport(k_effective=k_effective, fuzzy=False, **values)
    return average, tuple(counts)


def _run_trials(trial_fn, trials: int) -> list[ExperimentRow]:
    workers = min(worker_count(), trials)
    if workers <= 1:
        return [trial_fn(t) for t in range(trials)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(trial_fn, range(trials)))


def outlier_experiment(points, model, config: PerturbConfig, refit=None) -> ExperimentReport:
    """Recompute the indices under every inclusion subset of the
    singleton clusters.

    Emits one row per subset in binary-counting order with the first
    singleton as the most significant bit, so the all-excluded subset
    comes first and the all-kept subset (identical to the baseline)
    last. Excluded singletons' points are removed and the survivors
    renumbered; the partition itself is never refitted unless ``refit``
    is given.
    """
    x = np.asarray(points, dtype=float)
    labels = _labels_of(model)
    singletons = find_singleton_clusters(model)
    s = len(singletons)
    if s == 0:
        raise ValueError("no singleton clusters to toggle")
    if s > _MAX_SINGLETONS:
        raise ValueError(f"{s} singleton clusters would enumerate 2^{s} subsets")
    baseline = evaluate_labels(x, labels)
    rows: list[ExperimentRow] = []
    for code in range(2**s):
        kept = tuple(
            singletons[i] for i in range(s) if code & (1 << (s - 1 - i))
        )
        excluded = [v for v in singletons if v not in kept]
        sub_x, sub_labels = _remove_clusters(x, labels, excluded)
        if refit is not None and excluded:
            sub_labels = refit(sub_x)
        variant = ",".join(str(v) for v in kept) if kept else "none"
        rows.append(
            ExperimentRow(
                variant=variant, report=evaluate_labels(sub_x, sub_labels), kept=kept
            )
        )
    report = ExperimentReport(
        kind="outliers",
        seed=config.seed,
        config=config,
        baseline=baseline,
        rows=tuple(rows),
        average=None,
        degenerate_counts=(),
        verdicts=(),
    )
    return replace(report, verdicts=tuple(judge_hypothesis(report).items()))


def _trial_experiment(
    kind: str, points, model, config: PerturbConfig, perturb_fn, refit
) -> ExperimentReport:
    """Shared trial loop: singleton-free baseline, seeded trials, averages."""
    x = np.asarray(points, dtype=float)
    labels = _labels_of(model)
    base_x, base_labels = _remove_clusters(x, labels, find_singleton_clusters(model))
    k_base = int(np.unique(base_labels).shape[0])
    if k_base < 2:
        raise ValueError("need at least 2 non-singleton clusters")
    baseline = evaluate_labels(base_x, base_labels)

    def one_trial(t: int) -> ExperimentRow:
        rng = derive_stream(config.seed, t)
        trial_x, trial_labels = perturb_fn(base_x, base_labels, rng)
        if refit is not None:
            trial_labels = refit(trial_x)
        return ExperimentRow(
            variant=str(t), report=evaluate_labels(trial_x, trial_labels), trial=t
        )

    rows = _run_trials(one_trial, config.trials)
    average, counts = _average_rows(rows, k_base)
    report = ExperimentReport(
        kind=kind,
        seed=config.seed,
        config=config,
        baseline=baseline,
        rows=tuple(rows),
        average=average,
        degenerate_counts=counts,
        verdicts=(),
    )
    return replace(report, verdicts=tuple(judge_hypothesis(report).items()))


def density_experiment(points, model, config: PerturbConfig, refit=None) -> ExperimentReport:
    """Inject ceil(fraction * size) new points into every cluster per
    trial and compare the indices against the singleton-free baseline."""

    def perturb(base_x, base_labels, rng):
        pieces = [base_x]
        new_labels = [base_labels]
        for value in np.unique(base_labels):
            size = int((base_labels == value).sum())
            count = math.ceil(config.density_add_fraction * size)
            if count < 1:
                continue
            drawn = inject_density(
                base_x,
                base_labels,
                int(value),
                count,
                rng,
                sigma_divisor=config.sigma_divisor,
                max_rejection_attempts=config.max_rejection_attempts,
            )
            pieces.append(drawn)
            new_labels.append(np.full(count, value, dtype=base_labels.dtype))
        return np.vstack(pieces), np.concatenate(new_labels)

    return _trial_experiment("density", points, model, config, perturb, refit)


def diameter_experiment(points, model, config: PerturbConfig, refit=None) -> ExperimentReport:
    """Shrink every cluster's radius per trial and compare the indices
    against the singleton-free baseline."""

    def perturb(base_x, base_labels, rng):
        return shrink_clusters(base_x, base_labels, config, rng), base_labels

    return _trial_experiment("diameter", points, model, config, perturb, refit)


def _sign_test_tail(n: int, wins: int) -> float:
    """P[X >= wins] for X ~ Binomial(n, 1/2), exactly."""
    return sum(math.comb(n, i) for i in range(wins, n + 1)) / 2**n


def _judge_outlier_values(values: list[float | None], higher_better: bool, rows) -> str:
    if any(v is None for v in values):
        return "MIXED"
    if all(math.isinf(v) for v in values):
        return "UNAFFECTED"
    if any(math.isinf(v) for v in values):
        return "MIXED"
    if max(values) - min(values) <= EQUAL_TOL:
        return "UNAFFECTED"
    by_subset = {frozenset(row.kept): v for row, v in zip(rows, values)}
    singletons = sorted(set().union(*(row.kept for row in rows)))
    improved = worsened = 0
    for subset, value in by_subset.items():
        for o in singletons:
            if o in subset:
                continue
            delta = by_subset[subset | {o}] - value
            if abs(delta) <= DELTA_TIE_TOL:
                continue
            if (delta > 0) == higher_better:
                improved += 1
            else:
                worsened += 1
    if improved and not worsened:
        return "IMPROVES_ON_ADDITION"
    if worsened and not improved:
        return "IMPROVES_ON_REMOVAL"
    return "MIXED"


def _judge_trial_values(
    baseline: float | None, values: list[float | None], higher_better: bool
) -> str:
    if baseline is None or not math.isfinite(baseline):
        return "INCONCLUSIVE"
    improved = worsened = 0
    for v in values:
        if v is None or not math.isfinite(v):
            continue
        delta = v - baseline
        if delta == 0.0:
            continue
        if (delta > 0) == higher_better:
            improved += 1
        else:
            worsened += 1
    n = improved + worsened
    if n == 0:
        return "INCONCLUSIVE"
    if improved >= worsened and _sign_test_tail(n, improved) <= SIGN_TEST_ALPHA:
        return "POSITIVE"
    if worsened > improved and _sign_test_tail(n, worsened) <= SIGN_TEST_ALPHA:
        return "NEGATIVE"
    return "INCONCLUSIVE"


def judge_hypothesis(report: ExperimentReport) -> dict[str, str]:
    """Per-index verdict for an experiment.

    Outlier kind: UNAFFECTED when every subset row agrees within 1e-9;
    otherwise each (subset, subset + one singleton) pair votes on whether
    adding that singleton improves the index, and unanimous votes give
    IMPROVES_ON_ADDITION or IMPROVES_ON_REMOVAL, anything else MIXED.

    Trial kinds: paired one-sided sign test of per-trial deltas against
    the baseline at significance 0.05 gives POSITIVE or NEGATIVE in the
    index's own improvement direction, else INCONCLUSIVE.
    """
    if not report.rows:
        raise ValueError("experiment report has no rows")
    verdicts: dict[str, str] = {}
    for name in INDEX_NAMES:
        higher = HIGHER_IS_BETTER[name]
        values = [row.report.value_map()[name] for row in report.rows]
        if report.kind == "outliers":
            verdicts[name] = _judge_outlier_values(values, higher, report.rows)
        else:
            base = report.baseline.value_map()[name]
            verdicts[name] = _judge_trial_values(base, values, higher)
    return verdicts


def experiment_to_dict(report: ExperimentReport) -> dict:
    return {
        "kind": report.kind,
        "seed": report.seed,
        "config": asdict(report.config),
        "baseline": report_to_dict(report.baseline),
        "rows": [
            {
                "variant": row.variant,
                "kept": list(row.kept) if row.kept is not None else None,
                "trial": row.trial,
                "cvi": report_to_dict(row.report),
            }
            for row in report.rows
        ],
        "average": report_to_dict(report.average) if report.average else None,
        "degenerate_counts": dict(report.degenerate_counts),
        "verdicts": dict(report.verdicts),
    }


def experiment_from_dict(payload: dict) -> ExperimentReport:
    rows = tuple(
        ExperimentRow(
            variant=entry["variant"],
            report=report_from_dict(entry["cvi"]),
            kept=tuple(entry["kept"]) if entry["kept"] is not None else None,
            trial=entry["trial"],
        )
        for entry in payload["rows"]
    )
    average = payload.get("average")
    return ExperimentReport(
        kind=payload["kind"],
        seed=int(payload["seed"]),
        config=PerturbConfig(**payload["config"]),
        baseline=report_from_dict(payload["baseline"]),
        rows=rows,
        average=report_from_dict(average) if average else None,
        degenerate_counts=tuple(payload.get("degenerate_counts", {}).items()),
        verdicts=tuple(payload.get("verdicts", {}).items()),
    )


def experiment_to_json(report: ExperimentReport) -> str:
    return json.dumps(experiment_to_dict(report), indent=2)


def experiment_from_json(text: str) -> ExperimentReport:
    return experiment_from_dict(json.loads(text))


def _csv_cell(value: float | None) -> str:
    if value is None or not math.isfinite(value):
        return ""
    return "%.9g" % value


def experiment_to_csv(report: ExperimentReport) -> str:
    """Flat table: one row per variant or trial, plus AVERAGE when the
    experiment averages over trials. Non-finite values print empty."""
    lines = ["variant," + ",".join(INDEX_NAMES) + ",k_effective"]
    for row in report.rows:
        cells = [_csv_cell(row.report.value_map()[n]) for n in INDEX_NAMES]
        lines.append(",".join([row.variant, *cells, str(row.report.k_effective)]))
    if report.average is not None:
        cells = [_csv_cell(report.average.value_map()[n]) for n in INDEX_NAMES]
        lines.append(",".join(["AVERAGE", *cells, str(report.average.k_effective)]))
    return "\n".join(lines) + "\n"
