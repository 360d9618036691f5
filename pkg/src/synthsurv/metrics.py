"""Evaluation metrics, error summaries, and covariate-balance diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import EstimationError


def sup_norm_error(estimate, truth) -> float:
    """Worst-case absolute deviation between two grid vectors."""
    a = np.asarray(estimate, dtype=float)
    b = np.asarray(truth, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    return float(np.max(np.abs(a - b)))


def smd(group_a, group_b) -> float:
    """Standardized mean difference |m_a - m_b| / sqrt((v_a + v_b) / 2).

    Sample variances use the n-1 denominator; below 0.1 is conventionally
    read as negligible imbalance.
    """
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("both groups need at least 2 samples")
    pooled = 0.5 * (a.var(ddof=1) + b.var(ddof=1))
    if pooled <= 0:
        raise EstimationError("zero pooled variance")
    return float(abs(a.mean() - b.mean()) / np.sqrt(pooled))


def two_sample_tests(group_a, group_b, kind: str = "t") -> float:
    """Two-sample p-value: Welch t-test or a 2x2 chi-squared on binary data.

    The chi-squared variant uses no continuity correction and requires all
    expected cell counts to be positive.
    """
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    if kind == "t":
        if a.size < 2 or b.size < 2:
            raise ValueError("t-test needs at least 2 samples per group")
        return float(stats.ttest_ind(a, b, equal_var=False).pvalue)
    if kind == "chi2":
        for g in (a, b):
            if not np.all(np.isin(g, (0.0, 1.0))):
                raise ValueError("chi2 groups must be binary coded")
        table = np.array([
            [np.sum(a == 0), np.sum(a == 1)],
            [np.sum(b == 0), np.sum(b == 1)],
        ], dtype=float)
        expected = stats.contingency.expected_freq(table)
        if np.any(expected <= 0):
            raise EstimationError("degenerate 2x2 table: zero expected counts")
        return float(stats.chi2_contingency(table, correction=False).pvalue)
    raise ValueError(f"unknown test kind {kind!r}; use 't' or 'chi2'")


@dataclass(frozen=True)
class ErrorSummary:
    """Mean/sd of per-replication sup-norm errors for one configuration."""

    model: str
    k: int
    estimator: str
    seeds: tuple[int, ...]
    per_replication: tuple[float, ...]
    mean: float
    sd: float
    note: str = ""


def summarize_errors(
    errors_by_config: Mapping[tuple[str, int, str], Sequence[tuple[int, float]]],
) -> list[ErrorSummary]:
    """Aggregate (seed, error) pairs keyed by (model, k, estimator).

    Standard deviations use the n-1 denominator; a single replication gets
    sd = 0 with an explanatory note.
    """
    rows = []
    for (model, k, estimator), pairs in sorted(errors_by_config.items()):
        if not pairs:
            raise ValueError(f"no replications for ({model}, {k}, {estimator})")
        seeds = tuple(s for s, _ in pairs)
        values = np.array([e for _, e in pairs], dtype=float)
        single = values.size == 1
        rows.append(ErrorSummary(
            model=model,
            k=k,
            estimator=estimator,
            seeds=seeds,
            per_replication=tuple(float(v) for v in values),
            mean=float(values.mean()),
            sd=0.0 if single else float(values.std(ddof=1)),
            note="single replication" if single else "",
        ))
    return rows
