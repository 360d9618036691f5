"""Counterfactual survival-trajectory estimation for a treated unit.

The pipeline: fit a product-limit curve per donor cell (both periods) and for
the target's pre-period, subsample every curve on a common grid, learn donor
weights by principal component regression on the pre-period matrix, and carry
the weights into the post period:

    counterfactual(t) = sum_m w_m * S_post_m(t)

The raw weighted combination may leave [0, 1] and need not be monotone, so
results keep the raw vector alongside an exported default that is clipped to
[0, 1], optionally after an isotonic (non-increasing) projection.

Uncertainty comes from resampling the donor pool with replacement and
recomputing the whole fit per resample; the band is a pointwise percentile
interval over the resampled trajectories plus the original pool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import km, lowrank
from .errors import EstimationError
from .panel import DonorPool, PanelDataset

_BOOTSTRAP_STREAM = 2001


@dataclass(frozen=True)
class EvaluationGrid:
    """Equally spaced evaluation timestamps on [0, horizon]."""

    horizon: float
    timestamps: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        object.__setattr__(self, "timestamps", t)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("grid needs at least two timestamps")
        if np.any(np.diff(t) <= 0):
            raise ValueError("grid timestamps must be strictly increasing")

    @property
    def n_points(self) -> int:
        return int(self.timestamps.size)


@dataclass(frozen=True)
class CounterfactualEstimate:
    """Learned weights plus the synthetic pre-fit and post-period trajectory.

    ``counterfactual`` is the exported default (clipped, optionally isotonic);
    ``counterfactual_raw`` is the untouched weighted combination.
    """

    weights: lowrank.PCRWeights
    counterfactual: np.ndarray
    counterfactual_raw: np.ndarray
    pre_fit: np.ndarray
    grid: EvaluationGrid | None
    donor_order: tuple[str, ...]


@dataclass(frozen=True)
class BootstrapBand:
    """Pointwise percentile band over donor-pool resamples."""

    lower: np.ndarray
    upper: np.ndarray
    point: np.ndarray
    level: float
    replicates: int


def empirical_quantile(values, q: float) -> float:
    """Inverted-CDF sample quantile: the smallest x with F_hat(x) >= q."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("no values to take a quantile of")
    if not 0.0 < q <= 1.0:
        raise ValueError(f"quantile must be in (0, 1], got {q}")
    return float(np.quantile(arr, q, method="inverted_cdf"))


def make_grid(data: PanelDataset, quantile: float = 0.90, t0: int = 100) -> EvaluationGrid:
    """Build the evaluation grid from the pooled observed times.

    The horizon is the empirical ``quantile`` of all observed times across
    every cell, trimming the sparse right tail; timestamps are ``t0`` equally
    spaced points from 0 to the horizon.
    """
    times = data.pooled_times()
    if not times:
        raise EstimationError("dataset has no observations")
    if t0 < 2:
        raise ValueError("t0 must be at least 2")
    horizon = empirical_quantile(times, quantile)
    if horizon <= 0:
        raise EstimationError("evaluation horizon is not positive")
    return EvaluationGrid(horizon=horizon, timestamps=np.linspace(0.0, horizon, t0))


def monotone_non_increasing(values) -> np.ndarray:
    """L2 projection onto non-increasing sequences (pool adjacent violators)."""
    y = -np.asarray(values, dtype=float)
    vals: list[float] = []
    counts: list[int] = []
    for v in y:
        vals.append(float(v))
        counts.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            total = counts[-1] + counts[-2]
            merged = (vals[-1] * counts[-1] + vals[-2] * counts[-2]) / total
            vals.pop(); counts.pop()
            vals[-1] = merged
            counts[-1] = total
    return -np.repeat(vals, counts)


def _finalize(raw: np.ndarray, clip: bool, isotonic: bool) -> np.ndarray:
    out = np.asarray(raw, dtype=float)
    if isotonic:
        out = monotone_non_increasing(out)
    if clip:
        out = np.clip(out, 0.0, 1.0)
    return out


def estimate_from_curves(
    pre_controls: np.ndarray,
    pre_target: np.ndarray,
    post_controls: np.ndarray,
    rank_policy: str = "gap",
    *,
    clip: bool = True,
    isotonic: bool = False,
    grid: EvaluationGrid | None = None,
    donor_order: tuple[str, ...] = (),
) -> CounterfactualEstimate:
    """Run the weight-learning and extrapolation steps on pre-built matrices.

    ``pre_controls`` and ``post_controls`` are T0 x N0 grid samples of the
    donors' curves; ``pre_target`` is the target's pre-period vector.
    """
    pre = np.asarray(pre_controls, dtype=float)
    post = np.asarray(post_controls, dtype=float)
    y = np.asarray(pre_target, dtype=float)
    if pre.shape != post.shape:
        raise ValueError("pre- and post-period matrices must have equal shapes")
    factors = lowrank.svd(pre)
    if factors.rank == 0:
        raise EstimationError("pre-period donor matrix is numerically zero")
    r0 = lowrank.select_rank(factors.singular_values, rank_policy)
    weights = lowrank.pcr_weights(pre, y, r0)
    raw = post @ weights.weights
    return CounterfactualEstimate(
        weights=weights,
        counterfactual=_finalize(raw, clip, isotonic),
        counterfactual_raw=raw,
        pre_fit=pre @ weights.weights,
        grid=grid,
        donor_order=tuple(donor_order),
    )


def _curve_matrices(data: PanelDataset, pool: DonorPool, grid: EvaluationGrid):
    """Per-donor KM curves on the grid, plus the target's pre-period vector."""
    def cell_curve(period: int, unit: str) -> np.ndarray:
        obs = data.cell(period, unit)
        if not obs:
            raise EstimationError(f"cell ({period}, {unit}) is empty or missing")
        return km.subsample_on_grid(km.km_fit(obs), grid.timestamps)

    pre_cols = [cell_curve(0, u) for u in pool.control_units]
    post_cols = [cell_curve(1, u) for u in pool.control_units]
    target_pre = cell_curve(0, pool.target_unit)
    return np.column_stack(pre_cols), np.column_stack(post_cols), target_pre


def _check_pool(data: PanelDataset, pool: DonorPool) -> None:
    if data.treatment_of.get((1, pool.target_unit)) != 1:
        raise EstimationError(
            f"target unit {pool.target_unit!r} is not treated in the post-period"
        )
    for u in pool.control_units:
        for period in (0, 1):
            if data.treatment_of.get((period, u)) != 0:
                raise EstimationError(
                    f"donor {u!r} is not under control in period {period}"
                )


def estimate(
    data: PanelDataset,
    pool: DonorPool,
    grid: EvaluationGrid,
    rank_policy: str = "gap",
    *,
    clip: bool = True,
    isotonic: bool = False,
) -> CounterfactualEstimate:
    """Full pipeline from a panel dataset to the counterfactual trajectory."""
    _check_pool(data, pool)
    pre, post, target_pre = _curve_matrices(data, pool, grid)
    return estimate_from_curves(
        pre, target_pre, post, rank_policy,
        clip=clip, isotonic=isotonic, grid=grid, donor_order=pool.control_units,
    )


def bootstrap(
    data: PanelDataset,
    pool: DonorPool,
    grid: EvaluationGrid,
    rank_policy: str = "gap",
    b: int = 500,
    level: float = 0.95,
    seed: int = 0,
    *,
    clip: bool = True,
    isotonic: bool = False,
) -> BootstrapBand:
    """Percentile band from ``b`` unit-level resamples of the donor pool.

    Donor curves are fitted once and re-used; each replicate redraws the pool
    with replacement (duplicate columns enter the matrix as-is), re-selects
    the rank under the same policy, and re-estimates. The point estimate's
    own pool is included alongside the resamples when taking the pointwise
    percentiles. Deterministic given ``seed``; replicates that fail to
    estimate are redrawn, with a hard cap on retries.
    """
    if len(pool.control_units) < 2:
        raise EstimationError("bootstrap needs at least two donors")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must be in (0, 1), got {level}")
    _check_pool(data, pool)
    pre, post, target_pre = _curve_matrices(data, pool, grid)

    def run(pre_m: np.ndarray, post_m: np.ndarray) -> np.ndarray:
        fit = estimate_from_curves(
            pre_m, target_pre, post_m, rank_policy, clip=clip, isotonic=isotonic,
        )
        return fit.counterfactual

    point = run(pre, post)
    n0 = len(pool.control_units)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, _BOOTSTRAP_STREAM))))
    curves = np.empty((b + 1, grid.n_points))
    curves[0] = point
    failures = 0
    for rep in range(1, b + 1):
        while True:
            idx = rng.integers(0, n0, size=n0)
            try:
                curves[rep] = run(pre[:, idx], post[:, idx])
                break
            except (EstimationError, np.linalg.LinAlgError):
                failures += 1
                if failures > b:
                    raise EstimationError(
                        f"bootstrap exhausted retries after {failures} degenerate resamples"
                    ) from None
    alpha = (1.0 - level) / 2.0
    return BootstrapBand(
        lower=np.quantile(curves, alpha, axis=0),
        upper=np.quantile(curves, 1.0 - alpha, axis=0),
        point=point,
        level=level,
        replicates=b,
    )
