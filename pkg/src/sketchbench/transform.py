"""Walsh-Hadamard transform, randomized Hadamard transform and FJLT composition.

Every operator here (and :class:`~sketchbench.sketch.SparseSketch`) offers
``shape``, ``bits_used`` and ``apply(A)``, where ``apply`` returns the fully
scaled product.  :class:`ComposedOperator` chains such operators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BadParams, DimMismatch, NotPowerOfTwo
from .leverage import row_norms_sq, uniform_scores
from .linalg import as_source, check_matrix
from .sketch import SketchParams, SparseSketch, build_sketch, normalize_kind

FJLT_BETA1 = 16.0
FJLT_BETA2 = 1.0


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_power_of_two(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def hadamard_apply(x) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform along axis 0.

    ``x`` is a vector or an ``n x d`` array with ``n`` a power of two.
    Iterative butterflies, smallest stride first.
    """
    y = np.array(x, dtype=np.float64, copy=True)
    n = y.shape[0]
    if not is_power_of_two(n):
        raise NotPowerOfTwo(f"length {n} is not a power of two")
    vec = y.ndim == 1
    if vec:
        y = y[:, None]
    cols = y.shape[1]
    h = 1
    while h < n:
        v = y.reshape(n // (2 * h), 2, h, cols)
        a = v[:, 0].copy()
        v[:, 0] += v[:, 1]
        v[:, 1] = a - v[:, 1]
        h *= 2
    return y[:, 0] if vec else y


def hadamard_recursive(x) -> np.ndarray:
    """Reference transform straight from ``H_2n = [[H_n, H_n], [H_n, -H_n]]``."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if not is_power_of_two(n):
        raise NotPowerOfTwo(f"length {n} is not a power of two")
    if n == 1:
        return x.copy()
    top = hadamard_recursive(x[: n // 2])
    bot = hadamard_recursive(x[n // 2:])
    return np.concatenate([top + bot, top - bot])


@dataclass(frozen=True)
class RhtOperator:
    """``(1/sqrt(n)) H D`` acting on inputs zero-padded to ``n`` rows."""

    n: int
    signs: np.ndarray
    original_rows: int
    bits_used: int = 0

    def __post_init__(self):
        if not is_power_of_two(self.n) or self.n < self.original_rows:
            raise NotPowerOfTwo(f"padded size {self.n} must be a power of two >= {self.original_rows}")
        s = np.asarray(self.signs)
        if s.shape != (self.n,) or not np.all(np.abs(s) == 1):
            raise BadParams("signs must be a +-1 vector of length n")

    @classmethod
    def sample(cls, rows: int, src=None) -> "RhtOperator":
        src = as_source(src)
        n = next_power_of_two(rows)
        before = src.bits_used
        signs = src.signs(n, op="rht_signs")
        return cls(n, signs, rows, src.bits_used - before)

    @property
    def shape(self):
        return (self.n, self.original_rows)

    def apply(self, U):
        return rht_apply(self, U)


def rht_apply(op: RhtOperator, U) -> np.ndarray:
    U = check_matrix(U)
    if U.shape[0] != op.original_rows:
        raise DimMismatch(f"operator expects {op.original_rows} rows, got {U.shape[0]}")
    X = np.zeros((op.n, U.shape[1]))
    X[: U.shape[0]] = U * op.signs[: U.shape[0], None]
    return hadamard_apply(X) / math.sqrt(op.n)


def rht_max_row_norm_check(U, trials: int, delta: float, seed=0, squared_bound: bool = False):
    """Fraction of trials in which the RHT of ``U`` has small rows.

    Default bound: max row norm below ``sqrt(d/n) + sqrt(8 log(n/delta)/n)``.
    With ``squared_bound`` the test is max squared row norm below ``16 d/n``,
    which needs ``2n <= delta * e^d``; other combinations are refused.
    """
    U = check_matrix(U)
    n, d = U.shape
    if not is_power_of_two(n):
        raise NotPowerOfTwo("rht_max_row_norm_check needs n a power of two")
    if not 0 < delta < 1:
        raise BadParams("delta must lie in (0, 1)")
    if squared_bound and 2 * n > delta * math.exp(d):
        raise BadParams("the 16d/n bound needs 2n <= delta * e^d")
    src = as_source(seed)
    passed = 0
    for _ in range(trials):
        V = rht_apply(RhtOperator.sample(n, src), U)
        r2 = row_norms_sq(V).max()
        if squared_bound:
            passed += r2 < 16 * d / n
        else:
            passed += math.sqrt(r2) < math.sqrt(d / n) + math.sqrt(8 * math.log(n / delta) / n)
    return passed / trials


class ComposedOperator:
    """Applies ``stages[0]`` first, then ``stages[1]``, and so on."""

    def __init__(self, stages, names=None):
        self.stages = list(stages)
        self.names = list(names) if names else [type(s).__name__ for s in self.stages]
        for a, b in zip(self.stages, self.stages[1:]):
            if b.shape[1] != a.shape[0]:
                raise DimMismatch(f"stage output {a.shape[0]} does not match next input {b.shape[1]}")

    @property
    def shape(self):
        return (self.stages[-1].shape[0], self.stages[0].shape[1])

    @property
    def bits_used(self) -> int:
        return int(sum(s.bits_used for s in self.stages))

    def apply(self, A, return_intermediates: bool = False):
        X = check_matrix(A)
        outs = []
        for s in self.stages:
            X = s.apply(X)
            outs.append(X)
        return (X, outs) if return_intermediates else X


@dataclass(frozen=True)
class DenseOperator:
    """Explicit dense sketch, already scaled."""

    matrix: np.ndarray
    bits_used: int = 0

    @property
    def shape(self):
        return self.matrix.shape

    def apply(self, A):
        A = check_matrix(A)
        if A.shape[0] != self.matrix.shape[1]:
            raise DimMismatch("dense operator and input disagree")
        return self.matrix @ A

    @classmethod
    def gaussian(cls, m: int, n: int, src=None) -> "DenseOperator":
        src = as_source(src)
        before = src.bits_used
        G = src.gaussian(m * n, op="gaussian_sketch").reshape(m, n) / math.sqrt(m)
        return cls(G, src.bits_used - before)


@dataclass(frozen=True)
class IdentityOperator:
    n: int
    bits_used: int = 0

    @property
    def shape(self):
        return (self.n, self.n)

    def apply(self, A):
        A = check_matrix(A)
        if A.shape[0] != self.n:
            raise DimMismatch("identity operator and input disagree")
        return A.copy()


def fjlt_build(n: int, d: int, m: int, p: float, kind: str = "less-rows", src=None,
               round_up: bool = False) -> ComposedOperator:
    """``Phi (1/sqrt(N)) H D`` with ``Phi`` LESS under uniform ``(16, 1)`` scores.

    ``N`` is ``n`` rounded up to a power of two; the scores are ``d/N`` on
    every transformed row.
    """
    kind = normalize_kind(kind)
    if kind not in ("less-ent", "less-rows"):
        raise BadParams("FJLT sparse stage must be a LESS kind")
    src = as_source(src)
    rht = RhtOperator.sample(n, src)
    scores = uniform_scores(rht.n, d, FJLT_BETA1, FJLT_BETA2)
    params = SketchParams(kind, m, rht.n, p, scores=scores, round_up=round_up)
    phi: SparseSketch = build_sketch(params, src)
    return ComposedOperator([rht, phi], ["rht", "less"])
