"""Dense SVD, rank selection, and principal component regression.

The weight solver implements the closed form

    w = sum_{i<=r0} (1/s_i) v_i (u_i . y)

which equals the least-squares minimizer of ||y - M w||_2 constrained to the
span of the top-r0 right singular vectors of M, and is the minimum-norm
solution on rank-deficient consistent systems.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Relative cutoff below which singular values are treated as numerical zeros;
# guards the 1/s_i division in the closed form.
SINGULAR_VALUE_RTOL = 1e-10


@dataclass(frozen=True)
class SVDFactors:
    """Thin SVD with near-zero singular values dropped."""

    left_vectors: np.ndarray      # T0 x k, orthonormal columns
    singular_values: np.ndarray   # length k, descending, all > 0
    right_vectors: np.ndarray     # N0 x k, orthonormal columns

    @property
    def rank(self) -> int:
        return int(self.singular_values.size)


@dataclass(frozen=True)
class PCRWeights:
    """Donor weights from principal component regression on the pre-period."""

    weights: np.ndarray
    rank_used: int
    pre_fit_residual: float


def svd(matrix: np.ndarray) -> SVDFactors:
    """Full thin SVD of a dense matrix, thresholded at SINGULAR_VALUE_RTOL * s1."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2:
        raise ValueError("expected a 2-d matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    u, s, vt = np.linalg.svd(m, full_matrices=False)
    keep = s > SINGULAR_VALUE_RTOL * (s[0] if s.size else 0.0)
    return SVDFactors(
        left_vectors=u[:, keep],
        singular_values=s[keep],
        right_vectors=vt[keep].T,
    )


def select_rank(singular_values: np.ndarray, policy: str = "gap") -> int:
    """Pick the retained rank r0 from a descending spectrum.

    Policies:
      * ``gap``        largest ratio s_i / s_{i+1} (first index on ties); with
                       fewer than 3 values the full rank is used.
      * ``energy:t``   smallest k with sum_{i<=k} s_i^2 >= t * sum s_i^2.
      * ``fixed:k``    min(k, available).
    """
    s = np.asarray(singular_values, dtype=float)
    if s.ndim != 1 or s.size == 0:
        raise ValueError("need at least one singular value")
    name, arg = _parse_policy(policy)
    k = s.size
    if name == "gap":
        if k < 3:
            return k
        ratios = s[:-1] / s[1:]
        return int(np.argmax(ratios)) + 1
    if name == "energy":
        energy = np.cumsum(s**2)
        target = min(arg * energy[-1], energy[-1])
        return int(np.searchsorted(energy, target)) + 1
    return min(int(arg), k)


def _parse_policy(policy: str) -> tuple[str, float | None]:
    if policy == "gap":
        return "gap", None
    if policy.startswith("energy:"):
        theta = float(policy.split(":", 1)[1])
        if not 0.0 < theta <= 1.0:
            raise ValueError(f"energy threshold must be in (0, 1], got {theta}")
        return "energy", theta
    if policy.startswith("fixed:"):
        k = int(policy.split(":", 1)[1])
        if k < 1:
            raise ValueError(f"fixed rank must be >= 1, got {k}")
        return "fixed", k
    raise ValueError(f"unknown rank policy {policy!r}; use gap, energy:<t> or fixed:<k>")


def pcr_weights(pre_controls: np.ndarray, pre_target: np.ndarray, r0: int) -> PCRWeights:
    """Closed-form donor weights at a given retained rank.

    Equivalent to minimizing ||pre_target - pre_controls @ w||_2 subject to w
    lying in the span of the top-r0 right singular vectors.
    """
    m = np.asarray(pre_controls, dtype=float)
    y = np.asarray(pre_target, dtype=float)
    if y.ndim != 1 or m.ndim != 2 or m.shape[0] != y.size:
        raise ValueError("pre_target length must match the matrix row count")
    factors = svd(m)
    if not 1 <= r0 <= factors.rank:
        raise ValueError(f"rank {r0} outside the retained range 1..{factors.rank}")
    u = factors.left_vectors[:, :r0]
    s = factors.singular_values[:r0]
    v = factors.right_vectors[:, :r0]
    weights = v @ ((u.T @ y) / s)
    residual = float(np.linalg.norm(y - m @ weights))
    return PCRWeights(weights=weights, rank_used=r0, pre_fit_residual=residual)
