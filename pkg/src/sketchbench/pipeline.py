"""Embedding pipelines: the four-stage fast OSE, its low-random-bits variant,
the fast low-distortion embedding, and the regression reduction.
"""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.linalg import solve_triangular
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .calibration import constant
from .errors import BadParams, DimMismatch, RankDeficient, StageDimsInconsistent
from .leverage import LeverageScoreSet, fast_scores, probe_count, uniform_scores
from .linalg import as_source, check_matrix, check_vector, qr_factor, singular_values
from .randbits import BitSource
from .sketch import (
    SketchParams,
    SparseSketch,
    build_sketch,
    column_nnz_stats,
    normalize_kind,
    row_nnz_stats,
)
from .transform import ComposedOperator, RhtOperator, next_power_of_two


def log2_4(d: int, delta: float) -> float:
    return math.log2(d / delta) ** 4


@dataclass(frozen=True)
class EmbeddingSpec:
    """Knobs of the fast embeddings; ``None`` fields resolve to calibrated defaults."""

    d: int
    n: int
    eps: float = 0.5
    delta: float = 0.1
    theta: float | None = None
    gamma: float = 0.25
    m1: int | None = None
    m2: int | None = None
    m3: int | None = None
    p3: float | None = None
    stage3_kind: str = "less-rows"

    def __post_init__(self):
        if not 1 <= self.d <= self.n:
            raise BadParams(f"need 1 <= d <= n, got d={self.d}, n={self.n}")
        if not 0 < self.eps < 1:
            raise BadParams("eps must lie in (0, 1)")
        if not 0 < self.delta < 1:
            raise BadParams("delta must lie in (0, 1)")
        if not 0 < self.gamma < 1:
            raise BadParams("gamma must lie in (0, 1)")
        if self.theta is not None and self.theta <= 0:
            raise BadParams("theta must be positive")


@dataclass(frozen=True)
class StageDims:
    m1: int
    s1: int
    m2: int
    s2: int
    m3: int
    p3: float
    theta: float

    def as_dict(self):
        return asdict(self)


def _round_up_multiple(x: int, k: int) -> int:
    return -(-x // k) * k


def resolve_stages(spec: EmbeddingSpec, lowbits: bool = False) -> StageDims:
    """Concrete stage dimensions, clamped so that ``d <= m3 <= m2 <= m1 <= n``."""
    d, n = spec.d, spec.n
    lg = max(1.0, math.log2(d))
    s1 = math.ceil(1.0 / spec.gamma)
    if spec.m1 is not None:
        m1 = int(spec.m1)
    else:
        m1 = math.ceil(math.ceil(d ** (1 + spec.gamma) * lg) * constant("chain_c1"))
    m1 = _round_up_multiple(m1, s1)
    if m1 > n:
        m1 = max(s1, (n // s1) * s1)
    s2 = next_power_of_two(math.ceil(lg))
    if spec.m2 is not None:
        m2 = int(spec.m2)
    else:
        m2 = next_power_of_two(math.ceil(math.ceil(d * lg) * constant("chain_c2")))
    while m2 > m1 and m2 > 1:
        m2 //= 2
    s2 = min(s2, m2)
    key = "lowbits_theta" if lowbits else "chain_theta"
    theta = float(spec.theta) if spec.theta is not None else constant(key)
    m3 = int(spec.m3) if spec.m3 is not None else math.ceil((1 + theta) * d)
    if spec.p3 is not None:
        p3 = float(spec.p3)
    else:
        pm3 = min(m3, math.ceil(constant("chain_c3") * log2_4(d, spec.delta)))
        p3 = pm3 / m3
    if not d <= m3 <= m2 <= m1 <= n:
        raise StageDimsInconsistent(
            f"stage dims violate d <= m3 <= m2 <= m1 <= n: d={d}, m3={m3}, m2={m2}, m1={m1}, n={n}")
    if m1 % s1 or m2 % s2:
        raise StageDimsInconsistent("stage sparsity must divide stage rows")
    return StageDims(m1, s1, m2, s2, m3, p3, theta)


@dataclass
class EmbeddingReport:
    """Spectral summary of a scaled sketch applied to an orthonormal basis.

    ``eps_hat`` is the smallest ``eps`` with
    ``(1+eps)^-1 ||x|| <= ||S U x|| <= (1+eps) ||x||``; ``eps_sym`` is the
    symmetric deviation ``max(smax - 1, 1 - smin)``.
    """

    smin: float
    smax: float
    kappa: float
    eps_hat: float
    eps_sym: float
    m: int
    d: int
    nnz: dict = field(default_factory=dict)
    bits_used: int = 0
    stage_ms: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("stage_ms")
        return out

    def timing(self) -> dict:
        return {"stage_ms": list(self.stage_ms)}


def _nnz_info(op) -> dict:
    stages = op.stages if isinstance(op, ComposedOperator) else [op]
    info = {}
    for k, s in enumerate(stages):
        if isinstance(s, SparseSketch):
            info[f"stage{k}"] = {
                "total": int(s.matrix.nnz),
                "row": list(row_nnz_stats(s)),
                "col": list(column_nnz_stats(s)),
            }
    return info


def spectrum_report(Y, bits_used=0, nnz=None, stage_ms=None, extra=None) -> EmbeddingReport:
    s = singular_values(Y)
    smin, smax = float(s[0]), float(s[-1])
    kappa = smax / smin if smin > 0 else math.inf
    eps_hat = max(smax - 1.0, (1.0 / smin - 1.0) if smin > 0 else math.inf)
    eps_sym = max(smax - 1.0, 1.0 - smin)
    return EmbeddingReport(smin, smax, kappa, eps_hat, eps_sym, Y.shape[0], Y.shape[1],
                           nnz or {}, int(bits_used), list(stage_ms or []), dict(extra or {}))


def embed_and_report(S, U, orthonormalize: bool = False) -> EmbeddingReport:
    """Apply the scaled operator ``S`` to ``U`` and summarise the spectrum.

    With ``orthonormalize`` the report refers to the column span of ``U``.
    """
    U = check_matrix(U, "U")
    if U.shape[0] != S.shape[1]:
        raise DimMismatch(f"operator has {S.shape[1]} columns, U has {U.shape[0]} rows")
    if orthonormalize:
        U, _ = qr_factor(U)
    t0 = time.perf_counter()
    Y = S.apply(U)
    ms = 1e3 * (time.perf_counter() - t0)
    return spectrum_report(Y, getattr(S, "bits_used", 0), _nnz_info(S), [ms])


# -- fast OSE chain ---------------------------------------------------------


def chain_operator(spec: EmbeddingSpec, seed=0, lowbits: bool = False) -> ComposedOperator:
    """Sample the stage operators; depends only on ``(spec, seed)``."""
    dims = resolve_stages(spec, lowbits)
    src = as_source(seed)
    n = spec.n
    S1 = build_sketch(SketchParams("osnap", dims.m1, n, dims.s1 / dims.m1), src.spawn(1))
    S2 = build_sketch(SketchParams("osnap", dims.m2, dims.m1, dims.s2 / dims.m2), src.spawn(2))
    if lowbits:
        S3 = build_sketch(SketchParams("ind-diag", dims.m3, dims.m2, dims.p3, round_up=True),
                          src.spawn(4))
        op = ComposedOperator([S1, S2, S3], ["osnap1", "osnap2", "ind-diag"])
    else:
        H = RhtOperator.sample(dims.m2, src.spawn(3))
        scores = uniform_scores(H.n, spec.d, beta1=constant("chain_beta1"))
        S3 = build_sketch(SketchParams(spec.stage3_kind, dims.m3, H.n, dims.p3,
                                       scores=scores, round_up=True), src.spawn(4))
        op = ComposedOperator([S1, S2, H, S3], ["osnap1", "osnap2", "rht", "less"])
    op.dims = dims
    return op


@dataclass
class ChainResult:
    SA: np.ndarray
    report: EmbeddingReport
    operator: ComposedOperator
    stage_reports: list


def _run_chain(A, spec, seed, lowbits) -> ChainResult:
    A = check_matrix(A)
    if A.shape != (spec.n, spec.d):
        raise DimMismatch(f"A has shape {A.shape}, spec expects {(spec.n, spec.d)}")
    op = chain_operator(spec, seed, lowbits)
    Q, _ = qr_factor(A)
    X, Y = A, Q
    ms = []
    stage_reports = []
    for name, stage in zip(op.names, op.stages):
        t0 = time.perf_counter()
        X = stage.apply(X)
        ms.append(1e3 * (time.perf_counter() - t0))
        Qin, _ = qr_factor(Y)
        stage_reports.append((name, spectrum_report(stage.apply(Qin), stage.bits_used)))
        Y = stage.apply(Y)
    report = spectrum_report(Y, op.bits_used, _nnz_info(op), ms,
                             {"dims": op.dims.as_dict(),
                              "stage_bits": [int(s.bits_used) for s in op.stages]})
    return ChainResult(X, report, op, stage_reports)


def fast_ose_chain(A, spec: EmbeddingSpec, seed=0) -> ChainResult:
    """``S3(HD(S2(S1 A)))`` with OSNAP stages, an RHT and a uniform-score LESS stage."""
    return _run_chain(A, spec, seed, lowbits=False)


def fast_ose_lowbits(A, spec: EmbeddingSpec, seed=0) -> ChainResult:
    """Same chain with the last two stages replaced by a diagonal sketch."""
    return _run_chain(A, spec, seed, lowbits=True)


# -- fast low-distortion embedding ------------------------------------------


@dataclass
class LowDistortionResult:
    sketch: SparseSketch
    SA: np.ndarray
    report: EmbeddingReport
    R: np.ndarray
    scores: LeverageScoreSet
    chain: ComposedOperator


def low_distortion_rows(d: int, eps: float, n: int, c: float | None = None) -> int:
    c = constant("lowdist_c") if c is None else c
    return min(n, math.ceil(c * d / eps ** 2))


def low_distortion_p(d: int, m: int, eps: float, delta: float = 0.1, c2: float | None = None) -> float:
    c2 = constant("lowdist_c2") if c2 is None else c2
    pm = min(m, math.ceil(c2 * log2_4(d, delta) * (0.5 / eps) ** 4))
    return pm / m


def fast_low_distortion(A, eps: float, spec: EmbeddingSpec | None = None, seed=0,
                        kind: str = "less-rows", m: int | None = None, p: float | None = None,
                        beta1: float | None = None, k: int | None = None) -> LowDistortionResult:
    """Constant-distortion chain, QR preconditioner, probe scores, then LESS.

    The LESS stage has ``m = ceil(c d / eps^2)`` rows (capped at ``n``) and
    uses the estimated scores with multiplier ``beta1``.  Each step draws
    from its own random stream.
    """
    A = check_matrix(A)
    n, d = A.shape
    if not 0 < eps < 1:
        raise BadParams("eps must lie in (0, 1)")
    spec = spec if spec is not None else EmbeddingSpec(d, n, eps=eps)
    src = as_source(seed)
    t = [time.perf_counter()]
    chain = chain_operator(spec, src.spawn(11))
    S1A = chain.apply(A)
    t.append(time.perf_counter())
    _, T = qr_factor(S1A)
    R = solve_triangular(T, np.eye(d), lower=False)
    t.append(time.perf_counter())
    k = probe_count(spec.gamma) if k is None else int(k)
    b1 = constant("lowdist_beta1") if beta1 is None else float(beta1)
    scores = fast_scores(A, R, k, src.spawn(12), beta1=max(1.0, b1))
    t.append(time.perf_counter())
    m = low_distortion_rows(d, eps, n) if m is None else int(m)
    p = low_distortion_p(d, m, eps, spec.delta) if p is None else float(p)
    params = SketchParams(normalize_kind(kind), m, n, p, scores=scores, round_up=True)
    S = build_sketch(params, src.spawn(13))
    SA = S.apply(A)
    t.append(time.perf_counter())
    ms = [1e3 * (b - a) for a, b in zip(t, t[1:])]
    Q, _ = qr_factor(A)
    report = spectrum_report(S.apply(Q), S.bits_used + chain.bits_used, _nnz_info(S), ms,
                             {"p_eff": S.p_eff, "row_terms": S.summands,
                              "floored_scores": int(scores.floored.sum())})
    return LowDistortionResult(S, SA, report, R, scores, chain)


def reduce_regression(A, b, eps: float, seed=0, c: float | None = None, **kw):
    """``[A~ | b~] = S [A | b]`` for a low-distortion ``S`` of ``span[A | b]``.

    Returns ``(A_tilde, b_tilde, result)``.  When ``b`` lies in the range
    of ``A`` the augmented matrix is rank deficient; the sketch is then
    built for ``span(A)``, which equals ``span[A | b]``.
    """
    A = check_matrix(A)
    b = check_vector(b, A.shape[0])
    Ab = np.column_stack([A, b])
    n, d1 = Ab.shape
    c = constant("reduce_c") if c is None else c
    m = kw.pop("m", None) or min(n, math.ceil(c * d1 / eps ** 2))
    try:
        res = fast_low_distortion(Ab, eps, seed=seed, m=m, **kw)
    except RankDeficient:
        res = fast_low_distortion(A, eps, seed=seed, m=m, **kw)
        res.SA = np.column_stack([res.SA, res.sketch.apply(b[:, None])])
    return res.SA[:, :-1], res.SA[:, -1], res


# -- estimators -------------------------------------------------------------


class FastOSE(TransformerMixin, BaseEstimator):
    """Oblivious constant-distortion embedding of the rows of ``X``.

    ``variant="chain"`` uses OSNAP, OSNAP, RHT and LESS; ``"lowbits"``
    replaces the last two stages by a diagonal sketch.  ``fit`` only reads
    the shape of ``X``; ``transform`` returns ``m3`` rows.
    """

    def __init__(self, variant="chain", theta=None, gamma=0.25, delta=0.1, seed=0):
        self.variant = variant
        self.theta = theta
        self.gamma = gamma
        self.delta = delta
        self.seed = seed

    def fit(self, X, y=None):
        X = check_matrix(X, "X")
        if self.variant not in ("chain", "lowbits"):
            raise BadParams(f"unknown variant {self.variant!r}")
        spec = EmbeddingSpec(X.shape[1], X.shape[0], delta=self.delta, theta=self.theta,
                             gamma=self.gamma)
        self.operator_ = chain_operator(spec, self.seed, self.variant == "lowbits")
        self.dims_ = self.operator_.dims
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "operator_")
        return self.operator_.apply(X)


class LowDistortionEmbedding(TransformerMixin, BaseEstimator):
    """Data-aware ``(1 + eps)`` embedding built from estimated leverage scores.

    The sketch is fitted to the column span of the training matrix, so
    ``transform`` is only meaningful for matrices with the same rows.
    """

    def __init__(self, eps=0.5, kind="less-rows", gamma=0.25, seed=0):
        self.eps = eps
        self.kind = kind
        self.gamma = gamma
        self.seed = seed

    def fit(self, X, y=None):
        X = check_matrix(X, "X")
        spec = EmbeddingSpec(X.shape[1], X.shape[0], eps=self.eps, gamma=self.gamma)
        res = fast_low_distortion(X, self.eps, spec, self.seed, self.kind)
        self.sketch_ = res.sketch
        self.report_ = res.report
        self.scores_ = res.scores
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "sketch_")
        return self.sketch_.apply(X)
