"""Synthetic censored panels from latent-factor hazard models.

Two data-generating processes share one latent structure: unit factors V
(N x r), period factors U (2 x r), and coefficient vectors drawn once per
seed and then frozen. Cell (p, n) has a constant hazard

    multiplicative: lam * exp(b1 . V_n + b2 . U_p)
    additive:       lam0 + b1 . V_n + b2 . U_p,
                    lam0 = lam - min_{p,n} (b1 . V_n + b2 . U_p)

so every survival curve is exponential and event times come from the inverse
transform tau = -log(W) / rate with W ~ Uniform(0, 1). Censoring times are
Exp(nu), independent of the event times, with nu tuned by bisection on a
pooled pilot sample so the expected censoring fraction hits its target.

Randomness uses counter-based (Philox) streams keyed by (seed, purpose,
period, unit), so cells are independent and any subset can be regenerated
reproducibly and in parallel.

The first unit is labelled treated in the post period but its data is still
generated under control; the retained true curve for that cell is the
held-out comparison target for the estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import ConvergenceError, EstimationError
from .panel import CensoredObservation, PanelDataset
from .synth import EvaluationGrid

_FACTOR_STREAM = 11
_EVENT_STREAM = 12
_CENSOR_STREAM = 13
_PILOT_STREAM = 14

PILOT_SIZE = 100_000

MODELS = ("cox", "aalen")


@dataclass(frozen=True)
class DGPConfig:
    model: str = "cox"
    n_units: int = 20
    r: int = 4
    k: int = 700
    lam: float = 0.05
    target_censoring: float = 0.10
    censoring_tolerance: float = 0.01
    seed: int = 1

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}, got {self.model!r}")
        if self.n_units < 2:
            raise ValueError("need at least 2 units")
        if self.r < 1 or self.k < 1:
            raise ValueError("r and k must be >= 1")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if not 0.0 < self.target_censoring < 1.0:
            raise ValueError("target_censoring must be in (0, 1)")


@dataclass(frozen=True)
class LatentFactors:
    v: np.ndarray       # n_units x r
    u: np.ndarray       # 2 x r
    beta1: np.ndarray   # r
    beta2: np.ndarray   # r


@dataclass(frozen=True)
class TrueCurve:
    """Exponential survival curve with a known constant hazard."""

    rate: float

    def __call__(self, t):
        return np.exp(-self.rate * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class SyntheticPanel:
    """Generated dataset plus everything needed to score an estimator."""

    data: PanelDataset
    truth: Mapping[tuple[int, str], TrueCurve]
    factors: LatentFactors
    nu: float
    lam0: float | None
    censoring_rate: float
    config: DGPConfig

    @property
    def target_unit(self) -> str:
        return self.data.units[0]

    @property
    def held_out_truth(self) -> TrueCurve:
        return self.truth[(1, self.target_unit)]


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, *key))))


def sample_factors(config: DGPConfig) -> LatentFactors:
    """Draw the latent structure once; deterministic given the seed."""
    rng = _rng(config.seed, _FACTOR_STREAM)
    return LatentFactors(
        v=rng.standard_normal((config.n_units, config.r)),
        u=rng.standard_normal((2, config.r)),
        beta1=rng.standard_normal(config.r),
        beta2=rng.standard_normal(config.r),
    )


def _linear_terms(factors: LatentFactors) -> np.ndarray:
    """b1 . V_n + b2 . U_p for every (period, unit), shape (2, n_units)."""
    unit_part = factors.v @ factors.beta1
    period_part = factors.u @ factors.beta2
    return period_part[:, None] + unit_part[None, :]


def additive_baseline(factors: LatentFactors, config: DGPConfig) -> float:
    """Offset making every additive-model hazard at least ``config.lam``."""
    return config.lam - float(_linear_terms(factors).min())


def cell_hazard(factors: LatentFactors, config: DGPConfig, unit_index: int, period: int) -> float:
    z = float(factors.beta1 @ factors.v[unit_index] + factors.beta2 @ factors.u[period])
    if config.model == "cox":
        return config.lam * math.exp(z)
    rate = additive_baseline(factors, config) + z
    assert rate > 0, "additive baseline must keep every hazard positive"
    return rate


def true_survival(factors: LatentFactors, config: DGPConfig, unit_index: int, period: int) -> TrueCurve:
    return TrueCurve(rate=cell_hazard(factors, config, unit_index, period))


def event_times_from_uniforms(w, rate: float) -> np.ndarray:
    """Inverse-transform sampling of an exponential: tau = -log(w) / rate."""
    return -np.log(np.asarray(w, dtype=float)) / rate


def sample_events(
    factors: LatentFactors,
    config: DGPConfig,
    unit_index: int,
    period: int,
    size: int,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Potential event times for one cell, from that cell's own stream."""
    if rng is None:
        rng = _rng(config.seed, _EVENT_STREAM, period, unit_index)
    rate = cell_hazard(factors, config, unit_index, period)
    w = 1.0 - rng.random(size)  # in (0, 1]
    return event_times_from_uniforms(w, rate)


def pooled_pilot_sampler(factors: LatentFactors, config: DGPConfig) -> Callable[[int], np.ndarray]:
    """Event-time sampler that pools equally across all cells."""
    def sampler(n: int) -> np.ndarray:
        rng = _rng(config.seed, _PILOT_STREAM)
        n_cells = 2 * config.n_units
        per_cell = -(-n // n_cells)
        chunks = [
            sample_events(factors, config, i, p, per_cell, rng=rng)
            for p in (0, 1)
            for i in range(config.n_units)
        ]
        return np.concatenate(chunks)[:n]
    return sampler


def tune_censoring(
    event_time_sampler: Callable[[int], np.ndarray],
    target: float,
    tolerance: float = 0.01,
    pilot_size: int = PILOT_SIZE,
) -> float:
    """Bisect for the exponential censoring rate hitting the target fraction.

    An observation with event time tau is censored with probability
    1 - exp(-nu * tau), so the pilot's expected censoring fraction is a
    smooth increasing function of nu; bisection solves for the target and
    the result is checked against ``tolerance``.
    """
    if not 0.0 < target < 1.0:
        raise ValueError("target censoring must be in (0, 1)")
    pilot = np.asarray(event_time_sampler(pilot_size), dtype=float)
    if pilot.size == 0:
        raise EstimationError("empty pilot sample")

    def frac(nu: float) -> float:
        return float(np.mean(-np.expm1(-nu * pilot)))

    lo, hi = 0.0, 1e-9
    for _ in range(400):
        if frac(hi) >= target:
            break
        hi *= 4.0
    else:
        raise EstimationError(
            f"could not bracket the censoring rate in [{lo}, {hi}]"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if frac(mid) < target:
            lo = mid
        else:
            hi = mid
    nu = 0.5 * (lo + hi)
    achieved = frac(nu)
    if abs(achieved - target) > tolerance:
        raise EstimationError(
            f"censoring tuner stopped at {achieved:.4f} for target {target:.4f}"
        )
    return nu


def generate_panel(config: DGPConfig) -> SyntheticPanel:
    """Generate the full two-period panel plus its ground-truth curves.

    All cells are drawn under control; the first unit is labelled treated in
    the post period and its true control curve is kept for held-out scoring.
    """
    factors = sample_factors(config)
    nu = tune_censoring(
        pooled_pilot_sampler(factors, config),
        config.target_censoring,
        config.censoring_tolerance,
    )
    units = tuple(f"unit{i+1:02d}" for i in range(config.n_units))
    observations: dict[tuple[int, str], tuple[CensoredObservation, ...]] = {}
    treatment_of: dict[tuple[int, str], int] = {}
    truth: dict[tuple[int, str], TrueCurve] = {}
    n_censored = 0
    for i, unit in enumerate(units):
        for period in (0, 1):
            tau = sample_events(factors, config, i, period, config.k)
            c_rng = _rng(config.seed, _CENSOR_STREAM, period, i)
            c = c_rng.exponential(scale=1.0 / nu, size=config.k)
            observed = np.minimum(tau, c)
            event = tau <= c
            n_censored += int(np.sum(~event))
            treatment = 1 if (period == 1 and i == 0) else 0
            cell = (period, unit)
            observations[cell] = tuple(
                CensoredObservation(time=float(t), event=bool(e), treatment=treatment)
                for t, e in zip(observed, event)
            )
            treatment_of[cell] = treatment
            truth[cell] = true_survival(factors, config, i, period)
    data = PanelDataset(units=units, observations=observations, treatment_of=treatment_of)
    lam0 = additive_baseline(factors, config) if config.model == "aalen" else None
    return SyntheticPanel(
        data=data,
        truth=truth,
        factors=factors,
        nu=nu,
        lam0=lam0,
        censoring_rate=n_censored / (2 * config.n_units * config.k),
        config=config,
    )


def _fit_multiplicative(d: np.ndarray, s: np.ndarray, x: np.ndarray) -> np.ndarray:
    """MLE of log-linear hazards for censored exponential cells.

    Maximizes sum_c [d_c * eta_c - exp(eta_c) * s_c] with eta = x @ theta,
    which is concave; damped Newton from the pooled moment estimate.
    """
    theta = np.zeros(x.shape[1])
    theta[0] = math.log(d.sum() / s.sum())
    # tolerances scale with the event count; the likelihood's float noise
    # floor makes absolute targets unreachable at large K
    scale = max(1.0, float(d.sum()))
    gtol, stall_tol = 1e-8 * scale, 1e-5 * scale

    def loglik(t):
        eta = x @ t
        with np.errstate(over="ignore"):
            return float(d @ eta - np.exp(eta) @ s)

    ll = loglik(theta)
    for _ in range(100):
        eta = x @ theta
        mu = np.exp(eta) * s
        grad = x.T @ (d - mu)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm <= gtol:
            return theta
        hess = -(x.T * mu) @ x
        delta = np.linalg.solve(-hess, grad)
        step, improved = 1.0, False
        for _ in range(60):
            cand = theta + step * delta
            ll_new = loglik(cand)
            if ll_new > ll:
                improved = True
                break
            step *= 0.5
        if not improved:
            if grad_norm <= stall_tol:  # at the float optimum
                return theta
            raise ConvergenceError("line search stalled in oracle fit", last_iterate=theta)
        theta, ll = cand, ll_new
    raise ConvergenceError("oracle fit did not converge", last_iterate=theta)


def _fit_additive(d: np.ndarray, s: np.ndarray, x: np.ndarray, init0: float) -> np.ndarray:
    """MLE of linear hazards with positivity kept by a log-barrier path.

    Maximizes sum_c [d_c * log(rate_c) - rate_c * s_c] with rate = x @ theta
    subject to rate_c > 0, following a decreasing-barrier schedule from a
    feasible start (rates constant at ``init0``).
    """
    theta = np.zeros(x.shape[1])
    theta[0] = init0
    scale = max(1.0, float(d.sum()))
    gtol = 1e-8 * scale

    def objective(t, mu):
        rate = x @ t
        if np.any(rate <= 0):
            return -np.inf, rate
        val = float(d @ np.log(rate) - s @ rate)
        if mu > 0:
            val += mu * float(np.sum(np.log(rate)))
        return val, rate

    for mu in (1e-2, 1e-4, 1e-6, 0.0):
        val, rate = objective(theta, mu)
        for _ in range(100):
            weight_g = d / rate - s + (mu / rate if mu > 0 else 0.0)
            grad = x.T @ weight_g
            if np.linalg.norm(grad) <= gtol:
                break
            curv = d / rate**2 + (mu / rate**2 if mu > 0 else 0.0)
            hess = -(x.T * curv) @ x
            delta = np.linalg.solve(-hess, grad)
            step, improved = 1.0, False
            for _ in range(80):
                cand = theta + step * delta
                val_new, rate_new = objective(cand, mu)
                if val_new > val:
                    improved = True
                    break
                step *= 0.5
            if not improved:
                break  # float optimum for this barrier weight
            theta, val, rate = cand, val_new, rate_new
    grad = x.T @ (d / (x @ theta) - s)
    if np.linalg.norm(grad) > 1e-5 * scale:
        raise ConvergenceError(
            f"additive oracle fit stopped with gradient norm {np.linalg.norm(grad):.3g}",
            last_iterate=theta,
        )
    return theta


def oracle_estimate(
    factors: LatentFactors,
    data: PanelDataset,
    config: DGPConfig,
    grid: EvaluationGrid,
) -> np.ndarray:
    """Benchmark fit that sees the true latent factors and model family.

    Fits the correctly specified constant-hazard regression on all
    control-labelled cells by maximum likelihood on the censored data, using
    per-unit factors plus a post-period indicator as covariates (with two
    periods, only the period contrast enters the likelihood), then returns
    the implied control survival curve for the target unit in the post
    period on the grid.
    """
    d_list, s_list, x_list = [], [], []
    for i, unit in enumerate(data.units):
        for period in (0, 1):
            cell = (period, unit)
            if data.treatment_of.get(cell) != 0:
                continue
            obs = data.observations.get(cell, ())
            if not obs:
                continue
            d_list.append(sum(o.event for o in obs))
            s_list.append(sum(o.time for o in obs))
            x_list.append(np.concatenate(([1.0], factors.v[i], [float(period)])))
    if not d_list:
        raise EstimationError("no control cells to fit the oracle on")
    d = np.array(d_list, dtype=float)
    s = np.array(s_list, dtype=float)
    x = np.vstack(x_list)
    x_target = np.concatenate(([1.0], factors.v[0], [1.0]))
    if config.model == "cox":
        theta = _fit_multiplicative(d, s, x)
        rate = math.exp(float(x_target @ theta))
    else:
        init0 = max(config.lam, float(d.sum() / s.sum()))
        theta = _fit_additive(d, s, x, init0)
        rate = float(x_target @ theta)
    return np.exp(-rate * grid.timestamps)


def taylor_terms_for(bound: float, tol: float) -> int:
    """Series length guaranteeing a ``tol``-accurate exponential on |x| <= bound."""
    return math.ceil(5.0 * max(bound, math.log(1.0 / tol)))


def truncated_exp(x, terms: int) -> np.ndarray:
    """Partial sum of the exponential series, sum_{k < terms} x^k / k!."""
    x = np.asarray(x, dtype=float)
    total = np.ones_like(x)
    term = np.ones_like(x)
    for k in range(1, terms):
        term = term * x / k
        total = total + term
    return total
