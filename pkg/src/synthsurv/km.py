"""Product-limit survival estimation and step-function curve algebra."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import EstimationError
from .panel import CensoredObservation


@dataclass(frozen=True)
class StepSurvival:
    """A right-continuous, piecewise-constant survival function.

    ``values[j]`` is the function value on ``[jump_times[j], jump_times[j+1])``;
    before the first jump the value is 1. Values are non-increasing in [0, 1].
    """

    jump_times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.jump_times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "jump_times", t)
        object.__setattr__(self, "values", v)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("jump_times and values must be 1-d arrays of equal length")
        if t.size:
            if np.any(t < 0) or np.any(np.diff(t) <= 0):
                raise ValueError("jump times must be strictly increasing and >= 0")
            if np.any(v < 0) or np.any(v > 1) or np.any(np.diff(v) > 0):
                raise ValueError("values must be non-increasing within [0, 1]")

    def __call__(self, t):
        return self.evaluate(t)

    def evaluate(self, t):
        """Right-continuous lookup; carries the last value forward beyond the
        final jump and returns 1 before the first one."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0):
            raise ValueError("evaluation times must be >= 0")
        if self.jump_times.size == 0:
            out = np.ones_like(t_arr)
            return float(out) if np.isscalar(t) else out
        idx = np.searchsorted(self.jump_times, t_arr, side="right")
        padded = np.concatenate(([1.0], self.values))
        out = padded[idx]
        return float(out) if np.isscalar(t) else out


def km_fit(cell: Sequence[CensoredObservation] | Iterable[CensoredObservation]) -> StepSurvival:
    """Kaplan-Meier product-limit estimate for one cell of observations.

    At each distinct event time t the curve is multiplied by (1 - d(t)/n(t)),
    where d(t) counts events at t and n(t) counts subjects still at risk
    (observed time >= t). Censored observations create no jumps but shrink
    later risk sets; ties between an event and a censoring at the same time
    keep the censored subject in that risk set. S(0) = 1 by convention.
    """
    obs = list(cell)
    if not obs:
        raise EstimationError("empty risk set")
    times = np.array([o.time for o in obs], dtype=float)
    events = np.array([o.event for o in obs], dtype=bool)
    if not np.all(np.isfinite(times)):
        raise ValueError("observation times must be finite")

    event_times = np.unique(times[events])
    if event_times.size == 0:
        return StepSurvival(jump_times=np.empty(0), values=np.empty(0))
    # d and n per distinct event time; n counts T >= t over *all* observations
    d = np.array([np.sum((times == t) & events) for t in event_times], dtype=float)
    n = np.array([np.sum(times >= t) for t in event_times], dtype=float)
    values = np.cumprod(1.0 - d / n)
    return StepSurvival(jump_times=event_times, values=values)


def subsample_on_grid(s: StepSurvival, grid: Sequence[float] | np.ndarray) -> np.ndarray:
    """Evaluate a curve on an ascending grid of timestamps."""
    grid_arr = np.asarray(grid, dtype=float)
    if grid_arr.ndim != 1 or grid_arr.size == 0:
        raise ValueError("grid must be a non-empty 1-d array")
    if np.any(np.diff(grid_arr) < 0):
        raise ValueError("grid must be sorted ascending")
    return s.evaluate(grid_arr)
