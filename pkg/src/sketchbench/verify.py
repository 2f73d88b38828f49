"""Empirical verification: augmented symmetrization, the matched Gaussian
model, covariance parameters, universality statistics, moment audits and
singular-value bound checks.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .calibration import constant
from .errors import BadParams, DimMismatch
from .leverage import exact_scores
from .linalg import (
    as_source,
    check_matrix,
    hausdorff_distance,
    random_orthonormal,
    singular_values,
    spiked_orthonormal,
)
from .randbits import BitSource
from .sketch import LESS_KINDS, SketchParams, build_sketch, draw_triplets, normalize_kind


def _aug_sqrt(Y: np.ndarray, lam: float, expected_gram) -> np.ndarray:
    d = Y.shape[1]
    if expected_gram is None:
        return 2.0 * lam * np.eye(d)
    E = np.asarray(expected_gram, dtype=np.float64)
    if E.shape != (d, d):
        raise DimMismatch(f"expected Gram matrix must be {d}x{d}")
    E = 0.5 * (E + E.T)
    w, V = np.linalg.eigh(E)
    aug_w = (w.max() + 4 * lam ** 2) - w
    return (V * np.sqrt(np.maximum(aug_w, 0.0))) @ V.T


def build_augsym(Y, lam: float = 0.0, expected_gram=None) -> np.ndarray:
    """Symmetric ``2(m+d)`` block matrix with block rows ``[0 0 Y^T A]``,
    ``[0 0 0 0]``, ``[Y 0 0 0]``, ``[A 0 0 0]``, where ``A = aug(Y, lam)^(1/2)``.

    Without ``expected_gram`` the sketch case ``E[Y^T Y] = c I`` is assumed,
    which makes ``A = 2 lam I``.  Otherwise ``aug`` is computed from the
    supplied ``E[Y^T Y]``.
    """
    Y = check_matrix(Y, "Y")
    if lam < 0:
        raise BadParams("lambda must be nonnegative")
    m, d = Y.shape
    A = _aug_sqrt(Y, lam, expected_gram)
    N = 2 * (m + d)
    X = np.zeros((N, N))
    c_yt = d + m          # column offset of the third block
    c_aug = d + 2 * m     # offset of the fourth block
    X[:d, c_yt:c_yt + m] = Y.T
    X[c_yt:c_yt + m, :d] = Y
    X[:d, c_aug:] = A
    X[c_aug:, :d] = A.T
    return X


def augsym_spectrum(Y, lam: float = 0.0, expected_gram=None) -> np.ndarray:
    return np.linalg.eigvalsh(build_augsym(Y, lam, expected_gram))


@dataclass(frozen=True)
class ModelParams:
    """Covariance parameters ``sigma = sqrt(pm)``, ``sigma_star = 2 sqrt(p)``, ``r = 1``."""

    m: int
    p: float
    r: float = 1.0

    @property
    def sigma(self) -> float:
        return math.sqrt(self.p * self.m)

    @property
    def sigma_star(self) -> float:
        return 2.0 * math.sqrt(self.p)

    def zeta(self, t: float) -> float:
        return (self.sigma_star * math.sqrt(t)
                + self.r ** (1 / 3) * self.sigma ** (2 / 3) * t ** (2 / 3)
                + self.r * t)


def zeta(t: float, m: int, p: float, r: float = 1.0) -> float:
    return ModelParams(m, p, r).zeta(t)


def gaussian_model_spectrum(m: int, d: int, p: float, lam: float = 0.0, src=None) -> np.ndarray:
    """Eigenvalues of ``augsym(sqrt(p) G, lam)`` for an ``m x d`` standard Gaussian ``G``."""
    if m < 1 or d < 1:
        raise BadParams("dimensions must be positive")
    src = as_source(src)
    G = src.gaussian(m * d, op="gaussian_model").reshape(m, d)
    return augsym_spectrum(math.sqrt(p) * G, lam)


def gaussian_spectrum_check(m: int, d: int, t: float, trials: int, seed=0) -> float:
    """Fraction of trials with every singular value of an ``m x d`` Gaussian
    inside ``[sqrt(m) - sqrt(d) - t, sqrt(m) + sqrt(d) + t]``."""
    src = as_source(seed)
    lo, hi = math.sqrt(m) - math.sqrt(d) - t, math.sqrt(m) + math.sqrt(d) + t
    ok = 0
    for _ in range(trials):
        s = singular_values(src.gaussian(m * d).reshape(m, d))
        ok += bool(s[0] >= lo and s[-1] <= hi)
    return ok / trials


def _default_params(kind, m, n, d, p, U, seed=0):
    kind = normalize_kind(kind)
    scores = exact_scores(U) if kind in LESS_KINDS else None
    return SketchParams(kind, m, n, p, scores=scores, seed=seed, round_up=True)


@dataclass
class UniversalityStats:
    kind: str
    m: int
    n: int
    d: int
    p: float
    lam: float
    trials: int
    distances: list
    percentile95: float
    median: float
    zeta: float
    ratio: float
    bound_constant: float
    passed: bool

    def to_dict(self):
        return asdict(self)


def _stats(kind, m, n, d, p, lam, dists, C):
    dists = np.asarray(dists)
    z = zeta(math.log(2 * d / 0.05), m, p)
    q95 = float(np.percentile(dists, 95))
    return UniversalityStats(kind, m, n, d, p, lam, len(dists), dists.tolist(), q95,
                             float(np.median(dists)), z, q95 / z, C, q95 <= C * z)


def universality_check(kind: str, m: int, n: int, d: int, p: float, lam: float = 0.0,
                       trials: int = 100, seed=0, C: float | None = None,
                       U=None) -> UniversalityStats:
    """Hausdorff distance between ``spec(augsym(S U))`` and the Gaussian model.

    ``S`` is unscaled, so both sides have entry variance ``p``.  ``kind`` may
    also be ``"gaussian"``, which compares two independent Gaussian models.
    """
    C = constant("universality_C") if C is None else C
    src = as_source(seed)
    if U is None:
        U = random_orthonormal(n, d, src.spawn(1))
    gauss = str(kind).lower() == "gaussian"
    params = None if gauss else _default_params(kind, m, n, d, p, U)
    s_src = src.spawn(2)
    g_src = src.spawn(3)
    dists = []
    for _ in range(trials):
        if gauss:
            spec_s = gaussian_model_spectrum(m, d, p, lam, s_src)
        else:
            S = build_sketch(params, s_src)
            spec_s = augsym_spectrum(S.matrix @ U, lam)
        spec_g = gaussian_model_spectrum(m, d, p, lam, g_src)
        dists.append(hausdorff_distance(spec_s, spec_g))
    return _stats("gaussian" if gauss else params.kind, m, n, d, p, lam, dists, C)


@dataclass
class BoundsResult:
    kind: str
    trials: int
    success: float
    smin: list
    smax: list
    kappa: list
    m: int
    p_eff: float

    def to_dict(self):
        return asdict(self)


def singular_value_bounds_check(kind: str, d: int, n: int, m: int, p: float, eps: float,
                                trials: int = 50, seed=0, U=None, heavy_rows: int = 4,
                                lower: float | None = None, upper: float | None = None) -> BoundsResult:
    """Fraction of trials with ``1 - eps <= s_min`` and ``s_max <= 1 + eps`` for the scaled sketch.

    ``U`` defaults to a spiked orthonormal basis; the leverage-score kinds
    get its exact scores.  ``p`` is rounded up to a feasible value when the
    summand count is fractional.
    """
    if not 0 < eps < 1:
        raise BadParams("eps must lie in (0, 1)")
    src = as_source(seed)
    if U is None:
        U = spiked_orthonormal(n, d, heavy_rows, src.spawn(1))
    params = _default_params(kind, m, n, d, p, U)
    lo = 1 - eps if lower is None else lower
    hi = 1 + eps if upper is None else upper
    s_src = src.spawn(2)
    smin, smax = [], []
    p_eff = None
    for _ in range(trials):
        S = build_sketch(params, s_src)
        p_eff = S.p_eff
        s = singular_values(S.apply(U))
        smin.append(float(s[0]))
        smax.append(float(s[-1]))
    smin_a, smax_a = np.array(smin), np.array(smax)
    ok = (smin_a >= lo) & (smax_a <= hi)
    return BoundsResult(params.kind, trials, float(ok.mean()), smin, smax,
                        (smax_a / smin_a).tolist(), m, float(p_eff))


# -- moment audit -----------------------------------------------------------


@dataclass
class MomentAudit:
    kind: str
    m: int
    n: int
    p: float
    builds: int
    tol: float
    max_mean_dev: float
    max_var_dev: float
    max_cov_dev: float
    mean_pass_fraction: float
    var_pass_fraction: float
    cov_pass_fraction: float
    excluded_columns: int
    mean_ok: bool
    var_ok: bool
    cov_ok: bool
    extra: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.mean_ok and self.var_ok and self.cov_ok

    def to_dict(self):
        out = asdict(self)
        out["ok"] = self.ok
        return out


def moment_audit(kind: str, m: int = 16, n: int = 64, p: float = 0.25, builds: int = 20000,
                 pairs: int = 200, tol: float = 0.015, seed=0, scores=None,
                 beta1: float | None = None) -> MomentAudit:
    """Per-entry mean/variance and pairwise covariances over independent builds.

    Columns whose LESS probability was clamped at 1 are excluded.
    """
    kind = normalize_kind(kind)
    params = SketchParams(kind, m, n, p, scores=scores, beta1=beta1)
    src = as_source(seed)
    build_src = src.spawn(1)
    pair_src = src.spawn(2)
    flat = pair_src.uniform_index(m * n, size=2 * pairs * 2, op="audit_pairs").reshape(-1, 2)
    flat = flat[flat[:, 0] != flat[:, 1]][:pairs]
    s1 = np.zeros(m * n)
    s2 = np.zeros(m * n)
    sp_ = np.zeros(len(flat))
    p_eff = None
    for _ in range(builds):
        r, c, v, p_eff = draw_triplets(params, build_src)
        X = np.zeros(m * n)
        np.add.at(X, r * n + c, v)
        s1 += X
        s2 += X * X
        sp_ += X[flat[:, 0]] * X[flat[:, 1]]
    mean = s1 / builds
    var = s2 / builds - mean ** 2
    cov = sp_ / builds - mean[flat[:, 0]] * mean[flat[:, 1]]
    keep = np.ones(m * n, dtype=bool)
    excluded = 0
    if kind == "less-ent":
        l, b1 = params.score_vector()
        bad_cols = b1 * l * p > 1
        excluded = int(bad_cols.sum())
        keep = ~np.tile(bad_cols, m)
    mean_dev = np.abs(mean[keep])
    var_dev = np.abs(var[keep] - p_eff)
    pair_keep = keep[flat[:, 0]] & keep[flat[:, 1]]
    cov_dev = np.abs(cov[pair_keep])
    return MomentAudit(
        kind, m, n, p_eff, builds, tol,
        float(mean_dev.max()), float(var_dev.max()), float(cov_dev.max()),
        float((mean_dev <= tol).mean()), float((var_dev <= tol).mean()),
        float((cov_dev <= tol).mean()), excluded,
        bool(mean_dev.max() <= tol), bool(var_dev.max() <= tol), bool(cov_dev.max() <= tol),
        {"mean_variance": float(var[keep].mean()),
         "variance_std_error_max": float(np.sqrt(np.max(np.maximum(s2 / builds, 0)) / builds))},
    )


def scale_check(kind: str, m: int, n: int, d: int, p: float, builds: int = 2000, seed=0,
                scores=None) -> float:
    """Max-norm deviation of the average ``(S U)^T (S U) / (p m)`` from the identity."""
    src = as_source(seed)
    U = random_orthonormal(n, d, src.spawn(1))
    kind = normalize_kind(kind)
    if kind in LESS_KINDS and scores is None:
        scores = exact_scores(U)
    params = SketchParams(kind, m, n, p, scores=scores)
    acc = np.zeros((d, d))
    b_src = src.spawn(2)
    for _ in range(builds):
        Y = build_sketch(params, b_src).apply(U)
        acc += Y.T @ Y
    return float(np.abs(acc / builds - np.eye(d)).max())


def sigma_star_check(kind: str, m: int = 16, n: int = 64, d: int = 8, p: float = 0.25,
                     samples: int = 5000, directions: int = 100, lam: float = 0.0,
                     seed=0) -> dict:
    """Largest sample std of ``<v, (X - EX) w>`` over random unit ``(v, w)``.

    ``X = augsym(S U, lam)`` with ``S`` unscaled; ``EX`` is the ``lam`` part.
    Compared against ``2 sqrt(p) * 1.2``.
    """
    src = as_source(seed)
    U = random_orthonormal(n, d, src.spawn(1))
    params = _default_params(kind, m, n, d, p, U)
    N = 2 * (m + d)
    dir_src = src.spawn(2)
    V = dir_src.gaussian(directions * N).reshape(directions, N)
    W = dir_src.gaussian(directions * N).reshape(directions, N)
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    EX = build_augsym(np.zeros((m, d)), lam)
    vals = np.empty((samples, directions))
    b_src = src.spawn(3)
    for k in range(samples):
        S = build_sketch(params, b_src)
        D = build_augsym(S.matrix @ U, lam) - EX
        vals[k] = np.einsum("ij,jk,ik->i", V, D, W)
    worst = float(vals.std(axis=0).max())
    bound = 2 * math.sqrt(p) * 1.2
    return {"kind": params.kind, "worst_std": worst, "bound": bound, "ok": worst <= bound}


def augsym_eigen_check(Y) -> float:
    """Max gap between ``spec(augsym(Y, 0))`` and ``{+-s_i(Y)} U {0}``."""
    Y = check_matrix(Y, "Y")
    m, d = Y.shape
    ev = np.sort(augsym_spectrum(Y, 0.0))
    s = np.linalg.svd(Y, compute_uv=False)
    zeros = 2 * (m + d) - 2 * s.size
    ref = np.sort(np.concatenate([s, -s, np.zeros(zeros)]))
    return float(np.abs(ev - ref).max())
