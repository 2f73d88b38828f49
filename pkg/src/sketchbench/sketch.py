"""The five sparse sketching distributions and their application.

Stored values are unscaled: ``+-1`` for the oblivious kinds, integer sums of
``+-1`` for the diagonal kind, and ``+-1/sqrt(beta1 * l_j)`` for the
leverage-score sparsified kinds.  The global factor ``1/sqrt(p*m)`` lives in
``SparseSketch.scale`` and is applied once, in :func:`apply_sketch`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import (
    BadParams,
    DimMismatch,
    DivisibilityViolated,
    NonIntegerCount,
    ProbabilityOverflow,
    ScoresMissing,
)
from .linalg import as_source, check_matrix
from .randbits import BitSource, pairwise_sign_matrix

KINDS = ("iid-ent", "osnap", "ind-diag", "less-ent", "less-rows")
_ALIASES = {
    "iid-ent": "iid-ent", "iid": "iid-ent", "ose-iid-ent": "iid-ent",
    "osnap": "osnap", "osnap-ind-col": "osnap",
    "ind-diag": "ind-diag", "diag": "ind-diag", "ose-ind-diag": "ind-diag",
    "less-ent": "less-ent", "less-ind-ent": "less-ent",
    "less-rows": "less-rows", "less-ind-rows": "less-rows",
}
LESS_KINDS = ("less-ent", "less-rows")
INTEGRALITY_TOL = 1e-9


def normalize_kind(kind: str) -> str:
    key = str(kind).strip().lower().replace("_", "-")
    if key not in _ALIASES:
        raise BadParams(f"unknown sketch kind {kind!r}; choose from {', '.join(KINDS)}")
    return _ALIASES[key]


def _score_array(scores):
    if scores is None:
        return None, 1.0
    if hasattr(scores, "scores"):
        return np.asarray(scores.scores, dtype=np.float64), float(getattr(scores, "beta1", 1.0))
    return np.asarray(scores, dtype=np.float64).reshape(-1), 1.0


@dataclass(frozen=True)
class SketchParams:
    """Distribution parameters for one sketch.

    ``scores`` may be a :class:`~sketchbench.leverage.LeverageScoreSet` or a
    plain array (then ``beta1`` is taken from this object).  With
    ``round_up`` a non-integral summand count is rounded up and ``p`` is
    replaced by the effective value that keeps the entry variance exact.
    """

    kind: str
    m: int
    n: int
    p: float
    scores: object = None
    beta1: float | None = None
    seed: int = 0
    round_up: bool = False
    clamp: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_kind(self.kind))
        if int(self.m) < 1 or int(self.n) < 1:
            raise BadParams(f"m and n must be positive, got m={self.m}, n={self.n}")
        if not 0.0 < float(self.p) <= 1.0:
            raise BadParams(f"p must lie in (0, 1], got {self.p}")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p", float(self.p))

    def score_vector(self):
        l, b1 = _score_array(self.scores)
        if l is None:
            raise ScoresMissing(f"{self.kind} needs leverage scores")
        if l.size != self.n:
            raise DimMismatch(f"scores have length {l.size}, expected n={self.n}")
        if np.any(l < 0) or not np.all(np.isfinite(l)):
            raise BadParams("scores must be finite and nonnegative")
        if not np.any(l > 0):
            raise BadParams("all scores are zero")
        return l, (b1 if self.beta1 is None else float(self.beta1))


@dataclass(frozen=True)
class SparseSketch:
    """An ``m x n`` sparse sketch with its unscaled values in CSR form."""

    matrix: sp.csr_array
    params: SketchParams
    scale: float
    bits_used: int
    p_eff: float
    summands: int | None = None
    clamped_columns: int = 0
    bit_costs: dict = field(default_factory=dict)

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def m(self):
        return self.matrix.shape[0]

    @property
    def n(self):
        return self.matrix.shape[1]

    def apply(self, A):
        return apply_sketch(self, A)

    def toarray(self, scaled: bool = False) -> np.ndarray:
        D = self.matrix.toarray()
        return self.scale * D if scaled else D


# -- triplet generators -----------------------------------------------------
# Each returns (rows, cols, vals, p_eff, summands, clamped); duplicates add.


def _iid_ent(P: SketchParams, src: BitSource):
    m, n = P.m, P.n
    keep = src.bernoulli(P.p, m * n, op="iid_ent_mask")
    idx = np.flatnonzero(keep)
    vals = src.signs(idx.size, op="iid_ent_signs").astype(np.float64)
    return idx // n, idx % n, vals, P.p, None, 0


def osnap_block_count(m: int, p: float, round_up: bool = False) -> int:
    """Number of nonzeros per column ``s = p*m``; must divide ``m``."""
    s_real = p * m
    s = int(round(s_real))
    exact = abs(s_real - s) <= INTEGRALITY_TOL * max(1.0, s_real) and s >= 1
    if exact and m % s == 0:
        return s
    if not round_up:
        if not exact:
            raise DivisibilityViolated(f"s = p*m = {s_real:g} is not an integer")
        raise DivisibilityViolated(f"s = {s} does not divide m = {m}")
    s = max(1, math.ceil(s_real - INTEGRALITY_TOL * max(1.0, s_real)))
    while m % s:
        s += 1
    return s


def _osnap(P: SketchParams, src: BitSource):
    m, n = P.m, P.n
    s = osnap_block_count(m, P.p, P.round_up)
    block = m // s
    offs = src.uniform_index(block, size=n * s, op="osnap_rows").reshape(n, s)
    rows = (offs + block * np.arange(s)[None, :]).reshape(-1)
    cols = np.repeat(np.arange(n), s)
    vals = src.signs(n * s, op="osnap_signs").astype(np.float64)
    return rows, cols, vals, s / m, s, 0


def _summand_count(real: float, what: str, round_up: bool) -> int:
    k = int(round(real))
    if abs(real - k) <= INTEGRALITY_TOL * max(1.0, real) and k >= 1:
        return k
    if not round_up:
        raise NonIntegerCount(f"{what} = {real:g} is not a positive integer")
    return max(1, math.ceil(real - INTEGRALITY_TOL * max(1.0, real)))


def diagonal_count(n: int, p: float, round_up: bool = False) -> int:
    return _summand_count(n * p, "n*p", round_up)


def _ind_diag(P: SketchParams, src: BitSource):
    m, n = P.m, P.n
    count = diagonal_count(n, P.p, P.round_up)
    gammas = src.uniform_index(n, size=count, op="diag_offsets")
    W = pairwise_sign_matrix(src, m, count)
    i = np.arange(m)
    rows = np.tile(i, count)
    cols = ((gammas[:, None] + i[None, :]) % n).reshape(-1)
    return rows, cols, W.reshape(-1).astype(np.float64), count / n, count, 0


def _less_ent(P: SketchParams, src: BitSource):
    m, n = P.m, P.n
    l, beta1 = P.score_vector()
    support = np.flatnonzero(l > 0)
    prob = beta1 * l[support] * P.p
    over = prob > 1.0
    if over.any() and not P.clamp:
        raise ProbabilityOverflow(f"{int(over.sum())} columns have beta1*l_j*p > 1")
    prob = np.minimum(prob, 1.0)
    keep = src.bernoulli(np.tile(prob, m), m * support.size, op="less_ent_mask")
    idx = np.flatnonzero(keep)
    rows = idx // support.size
    cols = support[idx % support.size]
    mags = 1.0 / np.sqrt(beta1 * l[cols])
    vals = mags * src.signs(idx.size, op="less_ent_signs")
    return rows, cols, vals, P.p, None, int(over.sum())


def less_row_terms(P: SketchParams) -> tuple[int, float]:
    """Terms per row ``beta1 * p * sum(l)`` and the effective ``p``."""
    l, beta1 = P.score_vector()
    total = beta1 * l.sum()
    N = _summand_count(total * P.p, "beta1*p*sum(l)", P.round_up)
    return N, N / total


def _less_rows(P: SketchParams, src: BitSource):
    m = P.m
    l, beta1 = P.score_vector()
    N, p_eff = less_row_terms(P)
    cols = src.categorical_index(l, size=m * N, op="less_rows_positions")
    rows = np.repeat(np.arange(m), N)
    vals = src.signs(m * N, op="less_rows_signs") / np.sqrt(beta1 * l[cols])
    return rows, cols, vals, p_eff, N, 0


_GENERATORS = {
    "iid-ent": _iid_ent,
    "osnap": _osnap,
    "ind-diag": _ind_diag,
    "less-ent": _less_ent,
    "less-rows": _less_rows,
}


def draw_triplets(params: SketchParams, src: BitSource):
    """Raw ``(rows, cols, vals, p_eff)`` of one sketch, duplicates not merged."""
    r, c, v, p_eff, _, _ = _GENERATORS[params.kind](params, src)
    return r, c, v, p_eff


def build_sketch(params: SketchParams, src: BitSource | None = None) -> SparseSketch:
    """Sample a sketch of ``params.kind``; uses ``BitSource(params.seed)`` by default."""
    src = BitSource(params.seed) if src is None else src
    before = src.bits_used
    costs_before = dict(src.costs)
    rows, cols, vals, p_eff, summands, clamped = _GENERATORS[params.kind](params, src)
    M = sp.coo_array((vals, (rows, cols)), shape=(params.m, params.n)).tocsr()
    M.sum_duplicates()
    M.eliminate_zeros()
    M.sort_indices()
    costs = {k: v - costs_before.get(k, 0) for k, v in src.costs.items()
             if v - costs_before.get(k, 0)}
    return SparseSketch(
        matrix=M,
        params=params,
        scale=1.0 / math.sqrt(p_eff * params.m),
        bits_used=src.bits_used - before,
        p_eff=p_eff,
        summands=summands,
        clamped_columns=clamped,
        bit_costs=costs,
    )


def _checked(params: SketchParams, kind: str) -> SketchParams:
    if params.kind != kind:
        raise BadParams(f"expected kind {kind}, got {params.kind}")
    return params


def build_iid_ent(params, src=None):
    return build_sketch(_checked(params, "iid-ent"), src)


def build_osnap(params, src=None):
    return build_sketch(_checked(params, "osnap"), src)


def build_ind_diag(params, src=None):
    return build_sketch(_checked(params, "ind-diag"), src)


def build_less_ind_ent(params, src=None):
    return build_sketch(_checked(params, "less-ent"), src)


def build_less_ind_rows(params, src=None):
    return build_sketch(_checked(params, "less-rows"), src)


def build_one_hot(a: int, b: int, src) -> np.ndarray:
    """``a x b`` matrix holding a single uniformly placed random sign."""
    if a < 1 or b < 1:
        raise BadParams("one-hot dimensions must be positive")
    src = as_source(src)
    pos = src.uniform_index(a * b, op="one_hot_position")
    out = np.zeros((a, b), dtype=np.int8)
    out[pos // b, pos % b] = src.signs(1, op="one_hot_sign")[0]
    return out


def apply_sketch(S: SparseSketch, A) -> np.ndarray:
    """``scale * (S @ A)`` as a dense array."""
    A = check_matrix(A)
    if A.shape[0] != S.n:
        raise DimMismatch(f"sketch has {S.n} columns but A has {A.shape[0]} rows")
    return S.scale * (S.matrix @ A)


def _stats(counts: np.ndarray):
    return int(counts.min()), int(counts.max()), float(counts.mean())


def row_nnz_stats(S) -> tuple[int, int, float]:
    M = S.matrix if isinstance(S, SparseSketch) else sp.csr_array(S)
    return _stats(np.diff(M.indptr))


def column_nnz_stats(S) -> tuple[int, int, float]:
    M = S.matrix if isinstance(S, SparseSketch) else sp.csr_array(S)
    return _stats(np.bincount(M.indices, minlength=M.shape[1]))


# -- structural audits ------------------------------------------------------


def osnap_violations(S: SparseSketch) -> int:
    """Columns that break the one-nonzero-per-block rule (0 for a valid sketch)."""
    s = S.summands
    block = S.m // s
    C = S.matrix.tocsc()
    C.sort_indices()
    bad = 0
    for j in range(S.n):
        rows = C.indices[C.indptr[j]:C.indptr[j + 1]]
        vals = C.data[C.indptr[j]:C.indptr[j + 1]]
        if rows.size != s or np.any(np.abs(vals) != 1):
            bad += 1
        elif not np.array_equal(rows // block, np.arange(s)):
            bad += 1
    return bad


def diagonal_offsets(S: SparseSketch) -> np.ndarray:
    """Distinct wrapped-diagonal offsets ``(col - row) mod n`` of the support."""
    M = S.matrix
    rows = np.repeat(np.arange(S.m), np.diff(M.indptr))
    return np.unique((M.indices - rows) % S.n)


def ind_diag_violations(S: SparseSketch) -> int:
    return max(0, diagonal_offsets(S).size - S.summands)


def less_rows_violations(S: SparseSketch) -> int:
    counts = np.diff(S.matrix.indptr)
    return int(np.sum(counts > S.summands))


# -- estimator --------------------------------------------------------------


class SparseEmbedding(TransformerMixin, BaseEstimator):
    """Sketch the rows of ``X`` with one of the five sparse distributions.

    ``fit`` draws an ``m x n_rows`` sketch (for the leverage-score kinds it
    computes exact scores of ``X`` unless ``scores`` is given) and
    ``transform`` returns the scaled product, which has ``m`` rows rather
    than ``X.shape[0]``.
    """

    def __init__(self, kind="osnap", m=64, p=0.25, seed=0, scores=None,
                 beta1=None, round_up=False):
        self.kind = kind
        self.m = m
        self.p = p
        self.seed = seed
        self.scores = scores
        self.beta1 = beta1
        self.round_up = round_up

    def fit(self, X, y=None):
        X = check_matrix(X, "X")
        kind = normalize_kind(self.kind)
        scores = self.scores
        if kind in LESS_KINDS and scores is None:
            from .leverage import exact_scores
            scores = exact_scores(X)
        params = SketchParams(kind, self.m, X.shape[0], self.p, scores=scores,
                              beta1=self.beta1, seed=self.seed, round_up=self.round_up)
        self.sketch_ = build_sketch(params)
        self.n_rows_in_ = X.shape[0]
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "sketch_")
        return apply_sketch(self.sketch_, X)


def with_seed(params: SketchParams, seed: int) -> SketchParams:
    return replace(params, seed=seed)
