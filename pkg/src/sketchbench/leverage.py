"""Leverage scores: exact, the Gaussian-probe estimator, and validation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadParams, DimMismatch
from .linalg import as_source, check_matrix, qr_factor

SCORE_FLOOR = 1e-12


@dataclass(frozen=True)
class LeverageScoreSet:
    """Scores ``l_i`` claimed to be ``(beta1, beta2)``-approximate for a rank-``d`` subspace.

    ``floored`` marks rows whose estimate was raised to the score floor.
    """

    scores: np.ndarray
    d: int
    beta1: float = 1.0
    beta2: float = 1.0
    floored: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise BadParams("leverage scores must be finite and nonnegative")
        if self.beta1 < 1 or self.beta2 < 1:
            raise BadParams("beta1 and beta2 must be at least 1")
        object.__setattr__(self, "scores", s)

    @property
    def n(self) -> int:
        return self.scores.size

    @property
    def alpha(self) -> float:
        return self.beta1 * self.beta2

    @property
    def total(self) -> float:
        return float(self.scores.sum())

    def sampling_probabilities(self) -> np.ndarray:
        return self.scores / self.scores.sum()


def row_norms_sq(M: np.ndarray) -> np.ndarray:
    return np.einsum("ij,ij->i", M, M)


def exact_scores(A) -> LeverageScoreSet:
    """Squared row norms of an orthonormal basis of ``range(A)``."""
    A = check_matrix(A)
    Q, _ = qr_factor(A)
    return LeverageScoreSet(row_norms_sq(Q), A.shape[1])


def uniform_scores(n: int, d: int, beta1: float = 1.0, beta2: float = 1.0) -> LeverageScoreSet:
    return LeverageScoreSet(np.full(n, d / n), d, beta1, beta2)


def probe_count(gamma: float) -> int:
    if not 0 < gamma < 1:
        raise BadParams("gamma must lie in (0, 1)")
    return math.ceil(1.0 / gamma)


def fast_scores(A, R, k: int = 4, src=None, beta1: float = 1.0, beta2: float = 1.0,
                floor: bool = True) -> LeverageScoreSet:
    """Estimate ``||e_i^T A R||^2`` with ``k`` Gaussian probes.

    Computes ``A @ (R @ G)`` with ``G`` a ``d x k`` standard Gaussian matrix
    scaled by ``1/sqrt(k)``, so ``A @ R`` is never formed.  Each estimate is
    unbiased.  When ``floor`` is set, estimates below ``1e-12 * d / n`` are
    raised to that value and flagged.
    """
    A = check_matrix(A)
    R = np.asarray(R, dtype=np.float64)
    n, d = A.shape
    if R.ndim != 2 or R.shape[0] != d:
        raise DimMismatch(f"R must have {d} rows, got shape {R.shape}")
    if k < 1:
        raise BadParams("probe count k must be positive")
    src = as_source(src)
    G = src.gaussian(R.shape[1] * k, op="score_probes").reshape(R.shape[1], k) / math.sqrt(k)
    est = row_norms_sq(A @ (R @ G))
    flags = np.zeros(n, dtype=bool)
    if floor:
        lo = SCORE_FLOOR * d / n
        flags = est < lo
        est = np.where(flags, lo, est)
    return LeverageScoreSet(est, d, beta1, beta2, floored=flags)


@dataclass(frozen=True)
class ScoreValidation:
    ok: bool
    worst_violation: float
    mass_ratio: float
    violating_rows: int


def validate_scores(scores: LeverageScoreSet, U) -> ScoreValidation:
    """Check ``||e_i^T U||^2 / beta1 <= l_i`` for all ``i`` and ``sum(l) <= beta2 * d``.

    ``worst_violation`` is ``max_i (||e_i^T U||^2 / beta1 - l_i)``, clipped at 0.
    """
    U = check_matrix(U)
    if U.shape[0] != scores.n:
        raise DimMismatch(f"scores have length {scores.n}, U has {U.shape[0]} rows")
    lev = row_norms_sq(U)
    gap = lev / scores.beta1 - scores.scores
    tol = 1e-12 * max(1.0, float(lev.max()))
    bad = gap > tol
    d = U.shape[1]
    ratio = scores.total / d
    mass_ok = ratio <= scores.beta2 * (1 + 1e-12)
    return ScoreValidation(
        ok=bool(not bad.any() and mass_ok),
        worst_violation=float(max(0.0, gap.max())),
        mass_ratio=float(ratio),
        violating_rows=int(bad.sum()),
    )
