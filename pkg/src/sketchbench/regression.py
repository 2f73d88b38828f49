"""Sketch-and-solve and preconditioned mini-batch SGD for least squares."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .calibration import constant
from .errors import BadParams, DimMismatch, ScoreViolation
from .leverage import LeverageScoreSet, exact_scores, fast_scores, probe_count, row_norms_sq
from .linalg import as_source, check_matrix, check_vector, qr_factor
from .pipeline import EmbeddingSpec, chain_operator


def objective(A, b, x) -> float:
    r = A @ x - b
    return float(r @ r)


def lstsq_oracle(A, b) -> np.ndarray:
    """Exact least-squares minimiser (QR based)."""
    Q, T = qr_factor(A)
    return solve_triangular(T, Q.T @ b)


def ridge_oracle(A, b, lam: float) -> np.ndarray:
    """Minimiser of ``||Ax - b||^2 + lam ||x||^2`` from the normal equations."""
    A = check_matrix(A)
    d = A.shape[1]
    return np.linalg.solve(A.T @ A + lam * np.eye(d), A.T @ b)


@dataclass(frozen=True)
class SgdSchedule:
    """Step sizes ``eta_t = beta / (1 + beta t / 8)``.

    ``beta = (k/8) / (k + 4 alpha d)`` by default; ``proof_beta`` switches the
    numerator to ``k/4``.
    """

    k: int
    alpha: float
    d: int
    T: int
    proof_beta: bool = False

    def __post_init__(self):
        if self.k < 1:
            raise BadParams("mini-batch size k must be at least 1")
        if self.alpha < 1:
            raise BadParams("alpha must be at least 1")
        if self.T < 0:
            raise BadParams("iteration count must be nonnegative")

    @property
    def beta(self) -> float:
        num = self.k / 4 if self.proof_beta else self.k / 8
        return num / (self.k + 4 * self.alpha * self.d)

    def eta(self, t):
        return self.beta / (1.0 + self.beta * np.asarray(t, dtype=np.float64) / 8.0)

    def etas(self) -> np.ndarray:
        return self.eta(np.arange(self.T))

    @property
    def step_cap(self) -> float:
        return min(0.25, self.k / (8 * self.alpha * self.d))


@dataclass
class SgdTrace:
    iterates: np.ndarray
    objectives: np.ndarray
    etas: np.ndarray
    schedule: SgdSchedule
    seed: int | None = None

    def rows(self):
        """``(t, f(x_t), eta_t)`` rows; ``eta`` is blank for the final iterate."""
        for t, f in enumerate(self.objectives):
            yield t, float(f), (float(self.etas[t]) if t < self.etas.size else "")

    def running_min(self) -> np.ndarray:
        return np.minimum.accumulate(self.objectives)


@dataclass
class SketchSolveResult:
    x0: np.ndarray
    R: np.ndarray
    SA: np.ndarray
    Sb: np.ndarray
    bits_used: int = 0
    extra: dict = field(default_factory=dict)


def sgd_embedding_spec(n: int, d: int, theta: float | None = None) -> EmbeddingSpec:
    if theta is None:
        theta = constant("sgd_theta")
    return EmbeddingSpec(d, n, theta=theta)


def sketch_and_solve(A, b, operator=None, seed=0, theta: float | None = None) -> SketchSolveResult:
    """``x0 = argmin ||S A x - S b||`` plus the preconditioner ``R = T^-1`` from ``SA = QT``.

    ``operator`` defaults to the oblivious fast OSE chain, applied to
    ``[A | b]`` in one pass.
    """
    A = check_matrix(A)
    b = check_vector(b, A.shape[0])
    n, d = A.shape
    if operator is None:
        operator = chain_operator(sgd_embedding_spec(n, d, theta), as_source(seed).spawn(21))
    if operator.shape[1] != n:
        raise DimMismatch(f"operator expects {operator.shape[1]} rows, A has {n}")
    Y = operator.apply(np.column_stack([A, b]))
    SA, Sb = Y[:, :d], Y[:, d]
    Q, T = qr_factor(SA)
    x0 = solve_triangular(T, Q.T @ Sb)
    R = solve_triangular(T, np.eye(d))
    return SketchSolveResult(x0, R, SA, Sb, int(getattr(operator, "bits_used", 0)))


def _probabilities(scores) -> np.ndarray:
    s = scores.scores if isinstance(scores, LeverageScoreSet) else np.asarray(scores, dtype=np.float64)
    total = s.sum()
    if total <= 0:
        from .errors import AllZeroWeights
        raise AllZeroWeights("all sampling scores are zero")
    return s / total


def sample_minibatch(scores, k: int, src) -> tuple[np.ndarray, np.ndarray]:
    """``k`` i.i.d. row indices drawn with ``p_i = l_i / sum(l)``; returns ``(I, p_I)``."""
    if k < 1:
        raise BadParams("mini-batch size k must be at least 1")
    p = _probabilities(scores)
    src = as_source(src)
    idx = src.categorical_index(p, size=k, op="minibatch")
    return idx, p[idx]


def stochastic_gradient(A, b, x, p, k: int, src) -> np.ndarray:
    """``2 (S_t A)^T (S_t A x - S_t b)`` with rows ``e_I / sqrt(k p_I)``."""
    idx = src.categorical_index(p, size=k, op="minibatch")
    w = 1.0 / np.sqrt(k * p[idx])
    SA = A[idx] * w[:, None]
    Sb = b[idx] * w
    return 2.0 * SA.T @ (SA @ x - Sb)


def check_sampling(p: np.ndarray, A, alpha: float, tol: float = 1e-12) -> None:
    """Raise :class:`ScoreViolation` unless ``p_i >= l_i(A) / (alpha d)`` for all rows."""
    lev = exact_scores(A).scores
    d = A.shape[1]
    need = lev / (alpha * d)
    bad = p < need * (1 - 1e-9) - tol
    if bad.any():
        worst = float(np.max(need - p))
        raise ScoreViolation(f"{int(bad.sum())} rows have p_i < l_i/(alpha d); worst gap {worst:.3g}")


def sgd_solve(A, b, x0, R, scores, schedule: SgdSchedule, src=None,
              check: bool = False, keep_iterates: bool = True) -> SgdTrace:
    """Preconditioned mini-batch SGD from ``x0`` with update ``x -= eta_t R R^T g_t``.

    With ``check`` the sampling distribution is validated against exact
    leverage scores of ``A`` before the first step.
    """
    A = check_matrix(A)
    n, d = A.shape
    b = check_vector(b, n)
    x = check_vector(x0, d, "x0").copy()
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (d, d):
        raise DimMismatch(f"R must be {d}x{d}")
    p = _probabilities(scores)
    if p.size != n:
        raise DimMismatch(f"scores have length {p.size}, A has {n} rows")
    if check:
        check_sampling(p, A, schedule.alpha)
    src = as_source(src)
    etas = schedule.etas()
    objs = np.empty(schedule.T + 1)
    its = np.empty((schedule.T + 1, d)) if keep_iterates else None
    objs[0] = objective(A, b, x)
    if keep_iterates:
        its[0] = x
    for t in range(schedule.T):
        g = stochastic_gradient(A, b, x, p, schedule.k, src)
        x = x - etas[t] * (R @ (R.T @ g))
        objs[t + 1] = objective(A, b, x)
        if keep_iterates:
            its[t + 1] = x
    if not keep_iterates:
        its = x[None, :]
    return SgdTrace(its, objs, etas, schedule, getattr(src, "seed", None))


@dataclass
class LsqResult:
    x: np.ndarray
    x0: np.ndarray
    trace: SgdTrace | None
    R: np.ndarray
    scores: LeverageScoreSet | None
    bits_used: int


def least_squares_fast(A, b, eps: float, seed=0, mode: str = "sgd", k: int | None = None,
                       T: int | None = None, alpha: float = 1.0, gamma: float = 0.25,
                       theta: float | None = None, proof_beta: bool = False) -> LsqResult:
    """Full pipeline: oblivious sketch, ``R``, probe scores, ``x0``, then SGD.

    ``mode="single-pass"`` stops after sketch-and-solve.  Defaults: batch
    ``k = ceil(alpha d)``, ``T = ceil(c_T / eps)``.
    """
    if not 0 < eps < 1:
        raise BadParams("eps must lie in (0, 1)")
    if mode not in ("sgd", "single-pass"):
        raise BadParams(f"unknown mode {mode!r}")
    A = check_matrix(A)
    b = check_vector(b, A.shape[0])
    n, d = A.shape
    src = as_source(seed)
    ss = sketch_and_solve(A, b, seed=src, theta=theta)
    if mode == "single-pass":
        return LsqResult(ss.x0, ss.x0, None, ss.R, None, ss.bits_used)
    scores = fast_scores(A, ss.R, probe_count(gamma), src.spawn(22), beta1=alpha)
    k = math.ceil(alpha * d) if k is None else int(k)
    T = math.ceil(constant("sgd_c_T") / eps) if T is None else int(T)
    sched = SgdSchedule(k, alpha, d, T, proof_beta)
    trace = sgd_solve(A, b, ss.x0, ss.R, scores, sched, src.spawn(23), keep_iterates=False)
    return LsqResult(trace.iterates[-1], ss.x0, trace, ss.R, scores, ss.bits_used)


class SketchedLeastSquares(RegressorMixin, BaseEstimator):
    """Least-squares regressor fitted with the sketched solver.

    ``mode="sgd"`` runs preconditioned SGD (``coef_`` targets a
    ``(1 + eps)`` approximation); ``"single-pass"`` keeps the
    sketch-and-solve estimate.  No intercept is fitted.
    """

    def __init__(self, eps=0.5, mode="sgd", batch=None, iters=None, alpha=1.0, seed=0):
        self.eps = eps
        self.mode = mode
        self.batch = batch
        self.iters = iters
        self.alpha = alpha
        self.seed = seed

    def fit(self, X, y):
        X = check_matrix(X, "X")
        y = check_vector(y, X.shape[0], "y")
        res = least_squares_fast(X, y, self.eps, self.seed, self.mode, self.batch,
                                 self.iters, self.alpha)
        self.coef_ = res.x
        self.x0_ = res.x0
        self.trace_ = res.trace
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_matrix(X, "X")
        if X.shape[1] != self.coef_.size:
            raise DimMismatch(f"X has {X.shape[1]} columns, model has {self.coef_.size}")
        return X @ self.coef_
