"""Proportional-hazards fitting and the plug-in marginal counterfactual hazard.

The partial likelihood uses the Breslow convention for tied event times and
is maximized by damped Newton iterations from beta = 0. Covariates are
centered and scaled internally for conditioning and reported on the original
scale. The baseline cumulative hazard is the Breslow step estimate

    Lambda(t) = sum_{event times t_j <= t} d(t_j) / sum_{k at risk} exp(beta . x_k)

Setting the treatment regressor to control for every subject and averaging
conditional hazards with survival weights yields the marginal hazard of the
control potential outcome:

    h0(t_j) = [sum_i dLambda(t_j) exp(beta . x_i) S_i(t_j)] / [sum_i S_i(t_j)]

reported as a rate by dividing each increment by the local time spacing (or
by bin width when a uniform grid is requested).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConvergenceError, EstimationError
from .km import StepSurvival
from .panel import CensoredObservation

_STEP_HALVINGS = 40
_SEPARATION_NORM = 50.0


def _risk_terms(beta: np.ndarray, times: np.ndarray, events: np.ndarray, x: np.ndarray):
    """Suffix risk-set sums evaluated at each distinct event time."""
    order = np.argsort(times, kind="stable")
    ts, ev, xs = times[order], events[order], x[order]
    eta = xs @ beta
    shift = eta.max() if eta.size else 0.0
    w = np.exp(eta - shift)
    s0 = np.cumsum(w[::-1])[::-1]
    s1 = np.cumsum((w[:, None] * xs)[::-1], axis=0)[::-1]
    event_times = np.unique(ts[ev])
    if event_times.size == 0:
        raise EstimationError("no events")
    first_at_risk = np.searchsorted(ts, event_times, side="left")
    d = np.array([np.sum((ts == t) & ev) for t in event_times], dtype=float)
    return ts, ev, xs, eta, shift, w, s0, s1, event_times, first_at_risk, d


def partial_loglik(beta, times, events, x) -> float:
    """Breslow partial log-likelihood at a coefficient vector."""
    beta = np.asarray(beta, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    x = np.asarray(x, dtype=float)
    _, ev, _, eta, shift, _, s0, _, _, li, d = _risk_terms(beta, times, events, x)
    return float(eta[ev].sum() - np.sum(d * (shift + np.log(s0[li]))))


def partial_loglik_gradient(beta, times, events, x) -> np.ndarray:
    """Analytic gradient of the Breslow partial log-likelihood."""
    beta = np.asarray(beta, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    x = np.asarray(x, dtype=float)
    _, ev, xs, _, _, _, s0, s1, _, li, d = _risk_terms(beta, times, events, x)
    means = s1[li] / s0[li, None]
    return xs[ev].sum(axis=0) - (d[:, None] * means).sum(axis=0)


def partial_loglik_hessian(beta, times, events, x) -> np.ndarray:
    beta = np.asarray(beta, dtype=float)
    times = np.asarray(times, dtype=float)
    events = np.asarray(events, dtype=bool)
    x = np.asarray(x, dtype=float)
    _, _, xs, _, _, w, s0, s1, _, li, d = _risk_terms(beta, times, events, x)
    outer = w[:, None, None] * xs[:, :, None] * xs[:, None, :]
    s2 = np.cumsum(outer[::-1], axis=0)[::-1]
    means = s1[li] / s0[li, None]
    second = s2[li] / s0[li, None, None]
    return -np.sum(d[:, None, None] * (second - means[:, :, None] * means[:, None, :]), axis=0)


@dataclass(frozen=True)
class BaselineCumulativeHazard:
    """Non-decreasing step function with jumps at the distinct event times."""

    times: np.ndarray
    values: np.ndarray

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t_arr, side="right")
        padded = np.concatenate(([0.0], self.values))
        out = padded[idx]
        return float(out) if np.isscalar(t) else out

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values, prepend=0.0)


@dataclass(frozen=True)
class CoxFit:
    """Fitted coefficients, Breslow baseline, and convergence diagnostics.

    ``beta`` is on the original covariate scale; when the treatment indicator
    was included as a regressor it is the last entry.
    """

    beta: np.ndarray
    baseline: BaselineCumulativeHazard
    n_covariates: int
    has_treatment: bool
    n_iter: int
    grad_norm: float
    min_newton_decrement: float

    @property
    def treatment_coef(self) -> float:
        if not self.has_treatment:
            raise ValueError("fit has no treatment regressor")
        return float(self.beta[-1])


@dataclass(frozen=True)
class MarginalHazard:
    """Marginal control-potential hazard rate on a set of timestamps."""

    timestamps: np.ndarray
    values: np.ndarray


def _design(cell: Sequence[CensoredObservation], include_treatment: bool):
    obs = list(cell)
    if not obs:
        raise EstimationError("empty cell")
    times = np.array([o.time for o in obs], dtype=float)
    events = np.array([o.event for o in obs], dtype=bool)
    cols = [np.array([o.covariates for o in obs], dtype=float).reshape(len(obs), -1)]
    if include_treatment:
        cols.append(np.array([[o.treatment] for o in obs], dtype=float))
    design = np.hstack(cols)
    return times, events, design


def cox_fit(
    cell: Sequence[CensoredObservation],
    include_treatment: bool = True,
    tol: float = 1e-8,
    max_iter: int = 100,
) -> CoxFit:
    """Maximize the Breslow partial likelihood by damped Newton iterations.

    Zero-variance design columns are held at coefficient 0 (this covers the
    degenerate all-constant design, where the baseline reduces to the
    cumulated d/n increments). Raises on no events, rank-deficient designs,
    apparent separation, or non-convergence.
    """
    times, events, design = _design(cell, include_treatment)
    if not events.any():
        raise EstimationError("no events")
    n, p = design.shape

    scale = design.std(axis=0)
    active = scale > 0
    center = design.mean(axis=0)
    xs = (design[:, active] - center[active]) / scale[active]
    beta_std = np.zeros(int(active.sum()))
    n_iter = 0
    grad_norm = 0.0
    min_decrement = np.inf

    if beta_std.size:
        ll = partial_loglik(beta_std, times, events, xs)
        converged = False
        for n_iter in range(1, max_iter + 1):
            grad = partial_loglik_gradient(beta_std, times, events, xs)
            grad_norm = float(np.linalg.norm(grad))
            if grad_norm <= tol:
                converged = True
                break
            hess = partial_loglik_hessian(beta_std, times, events, xs)
            try:
                delta = np.linalg.solve(-hess, grad)
            except np.linalg.LinAlgError:
                raise EstimationError("rank-deficient design matrix") from None
            decrement = float(grad @ delta)
            min_decrement = min(min_decrement, decrement)
            step = 1.0
            for _ in range(_STEP_HALVINGS):
                candidate = beta_std + step * delta
                ll_new = partial_loglik(candidate, times, events, xs)
                if ll_new >= ll + 1e-4 * step * decrement:
                    break
                step *= 0.5
            else:
                raise ConvergenceError("line search failed", last_iterate=beta_std)
            beta_std, ll = candidate, ll_new
            if np.linalg.norm(beta_std) > _SEPARATION_NORM:
                raise EstimationError(
                    "separation detected: coefficients diverging"
                )
        else:
            converged = grad_norm <= tol
        if not converged:
            grad = partial_loglik_gradient(beta_std, times, events, xs)
            grad_norm = float(np.linalg.norm(grad))
            if grad_norm > tol:
                raise ConvergenceError(
                    f"no convergence after {max_iter} iterations "
                    f"(gradient norm {grad_norm:.3g})",
                    last_iterate=beta_std / scale[active],
                )

    beta = np.zeros(p)
    beta[active] = beta_std / scale[active]

    # Breslow baseline on the original scale (risk scores relative to x = 0)
    eta = design @ beta
    shift = eta.max()
    order = np.argsort(times, kind="stable")
    ts, ev = times[order], events[order]
    w = np.exp(eta[order] - shift)
    s0 = np.cumsum(w[::-1])[::-1]
    event_times = np.unique(ts[ev])
    li = np.searchsorted(ts, event_times, side="left")
    d = np.array([np.sum((ts == t) & ev) for t in event_times], dtype=float)
    increments = d * np.exp(-shift) / s0[li]
    baseline = BaselineCumulativeHazard(times=event_times, values=np.cumsum(increments))

    n_cov = p - 1 if include_treatment else p
    return CoxFit(
        beta=beta,
        baseline=baseline,
        n_covariates=n_cov,
        has_treatment=include_treatment,
        n_iter=n_iter,
        grad_norm=grad_norm,
        min_newton_decrement=float(min_decrement) if np.isfinite(min_decrement) else 0.0,
    )


def _control_risk_score(fit: CoxFit, x) -> float:
    x = np.asarray(x, dtype=float).ravel()
    if x.size != fit.n_covariates:
        raise ValueError(f"expected {fit.n_covariates} covariates, got {x.size}")
    beta_cov = fit.beta[:-1] if fit.has_treatment else fit.beta
    return float(beta_cov @ x)  # treatment forced to control (0)


def predict_survival(fit: CoxFit, x) -> StepSurvival:
    """Predicted control-potential survival S(t | x) = exp(-Lambda(t) e^(beta.x))."""
    eta = _control_risk_score(fit, x)
    values = np.exp(-fit.baseline.values * np.exp(eta))
    return StepSurvival(jump_times=fit.baseline.times, values=values)


def marginal_counterfactual_hazard(
    fit: CoxFit,
    covariate_rows,
    grid=None,
) -> MarginalHazard:
    """Survival-weighted average of conditional hazards under control.

    Without a grid the rate is reported at every baseline event time, each
    increment divided by the spacing to the previous event time (0 for the
    first). With a grid of ascending edges, increments are pooled per bin and
    divided by the bin width; timestamps are then the right edges.
    """
    if fit.n_covariates == 0:
        rows = np.zeros((1, 0))
    else:
        rows = np.asarray(covariate_rows, dtype=float).reshape(-1, fit.n_covariates)
        if rows.shape[0] == 0:
            raise EstimationError("no covariate rows")
    beta_cov = fit.beta[:-1] if fit.has_treatment else fit.beta
    eta = rows @ beta_cov  # treatment forced to control (0)
    t = fit.baseline.times
    if t.size and t[0] == 0.0:
        raise EstimationError("baseline has a jump at time 0; hazard rate undefined")
    lam = fit.baseline.values
    d_lam = fit.baseline.increments
    # survival weights per row and event time
    surv = np.exp(-np.outer(np.exp(eta), lam))
    num = (surv * np.exp(eta)[:, None]).sum(axis=0) * d_lam
    den = surv.sum(axis=0)
    mass = num / den
    if grid is None:
        spacing = np.diff(t, prepend=0.0)
        return MarginalHazard(timestamps=t, values=mass / spacing)
    edges = np.asarray(grid, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("grid must be at least two ascending edges")
    idx = np.searchsorted(edges, t, side="left")  # t in (edges[i-1], edges[i]]
    values = np.zeros(edges.size - 1)
    widths = np.diff(edges)
    for j, bin_no in enumerate(idx):
        if 1 <= bin_no <= values.size:
            values[bin_no - 1] += mass[j]
    return MarginalHazard(timestamps=edges[1:], values=values / widths)
