"""Scoring fitted maps against ground truth.

Mixture class indices are arbitrary, so estimated and true classes are
matched by risk rank before any per-class score is computed; reports are
then stated in rank order (lowest risk first), which also makes the
reported risk vector ascending.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .inference import FitOptions, FitResult
from .model import ObservedData
from .simulate import Scenario, sample_counts
from .strategies import StrategySpec, search_run_select


def align_classes(estimated_risks, true_risks) -> np.ndarray:
    """Permutation sending each estimated class to the true class of equal
    risk rank; ties keep original index order."""
    est = np.asarray(estimated_risks, dtype=np.float64)
    true = np.asarray(true_risks, dtype=np.float64)
    if est.shape != true.shape or est.ndim != 1:
        raise ValueError("risk vectors must be equal-length 1-d arrays")
    perm = np.empty(est.size, dtype=np.int64)
    perm[np.argsort(est, kind="stable")] = np.argsort(true, kind="stable")
    return perm


def dice(pred: np.ndarray, truth: np.ndarray, k: int) -> float:
    """Overlap of class ``k``: twice the true positives over twice the true
    positives plus misses plus false alarms.  Vacuously 1 when neither side
    contains the class."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ValueError("label vectors must have equal length")
    tp = int(np.sum((pred == k) & (truth == k)))
    fp = int(np.sum((pred == k) & (truth != k)))
    fn = int(np.sum((pred != k) & (truth == k)))
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fn + fp)


@dataclass
class EvalReport:
    """Per-class scores in risk-rank order (lowest risk first)."""

    dsc: np.ndarray
    estimated_risks: np.ndarray
    true_risks: np.ndarray
    confusion: np.ndarray
    alignment: np.ndarray
    collapsed_classes: set[int] = field(default_factory=set)


def evaluate_labels(pred_labels: np.ndarray, estimated_risks,
                    true_labels: np.ndarray, true_risks,
                    collapsed: set[int] | None = None) -> EvalReport:
    """Rank-align the two label spaces and score every class."""
    est = np.asarray(estimated_risks, dtype=np.float64)
    true = np.asarray(true_risks, dtype=np.float64)
    k = est.size
    est_rank = np.empty(k, dtype=np.int64)
    est_rank[np.argsort(est, kind="stable")] = np.arange(k)
    true_rank = np.empty(k, dtype=np.int64)
    true_rank[np.argsort(true, kind="stable")] = np.arange(k)

    pred_ranked = est_rank[np.asarray(pred_labels)]
    truth_ranked = true_rank[np.asarray(true_labels)]
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (truth_ranked, pred_ranked), 1)
    scores = np.array([dice(pred_ranked, truth_ranked, r) for r in range(k)])
    collapsed_ranked = {int(est_rank[c]) for c in (collapsed or set())}
    return EvalReport(
        dsc=scores,
        estimated_risks=np.sort(est),
        true_risks=np.sort(true),
        confusion=confusion,
        alignment=align_classes(est, true),
        collapsed_classes=collapsed_ranked,
    )


def evaluate_fit(fit: FitResult, scenario: Scenario) -> EvalReport:
    return evaluate_labels(fit.labels, fit.params.risks,
                           scenario.true_labels, scenario.true_risks,
                           collapsed=fit.collapsed_classes)


@dataclass
class StudyResult:
    """Aggregates over replicates, per class in risk-rank order."""

    mean_dsc: np.ndarray
    sd_dsc: np.ndarray
    mean_risks: np.ndarray
    sd_risks: np.ndarray
    rows: list[dict]
    failures: int


def replicate_study(scenario_gen: Callable[[np.random.Generator], Scenario],
                    strategy: StrategySpec, n_replicates: int,
                    rng: np.random.Generator,
                    opts: FitOptions | None = None,
                    n_classes: int | None = None) -> StudyResult:
    """Repeat (generate, sample, fit, evaluate) and aggregate per class.

    Replicate seeds are derived deterministically from ``rng`` up front, so
    results do not depend on execution order.  Failed replicates are
    counted, never fatal; aggregation uses the unbiased standard deviation
    over successes.
    """
    if n_replicates < 2:
        raise ValueError("need at least two replicates")
    seeds = rng.integers(np.iinfo(np.int64).max, size=n_replicates)
    rows: list[dict] = []
    failures = 0
    dsc_rows, risk_rows = [], []
    for r in range(n_replicates):
        rep_rng = np.random.default_rng(seeds[r])
        try:
            scenario = scenario_gen(rep_rng)
            data = sample_counts(scenario, rep_rng)
            k = n_classes if n_classes is not None else scenario.n_classes
            rep_strategy = StrategySpec(
                kind=strategy.kind, restarts=strategy.restarts,
                rand_upper=strategy.rand_upper, search2=strategy.search2,
                seed=int(seeds[r]), threads=strategy.threads)
            fit = search_run_select(data, scenario.graph, k, rep_strategy, opts)
            report = evaluate_fit(fit, scenario)
        except Exception as exc:  # noqa: BLE001 - replicate failures are data
            failures += 1
            rows.append({"replicate": r, "seed": int(seeds[r]), "error": repr(exc)})
            continue
        dsc_rows.append(report.dsc)
        risk_rows.append(report.estimated_risks)
        rows.append({
            "replicate": r,
            "seed": int(seeds[r]),
            "dsc": report.dsc.tolist(),
            "estimated_risks": report.estimated_risks.tolist(),
            "true_risks": report.true_risks.tolist(),
            "collapsed": sorted(report.collapsed_classes),
            "error": None,
        })
    if not dsc_rows:
        raise AllReplicatesFailedError(f"all {n_replicates} replicates failed")
    dsc = np.vstack(dsc_rows)
    risks = np.vstack(risk_rows)
    ddof = 1 if dsc.shape[0] > 1 else 0
    return StudyResult(
        mean_dsc=dsc.mean(axis=0),
        sd_dsc=dsc.std(axis=0, ddof=ddof),
        mean_risks=risks.mean(axis=0),
        sd_risks=risks.std(axis=0, ddof=ddof),
        rows=rows,
        failures=failures,
    )


class AllReplicatesFailedError(RuntimeError):
    """No replicate of a study produced a usable fit."""
