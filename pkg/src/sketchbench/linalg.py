"""Dense linear-algebra substrate: validation, QR, spectra, test subspaces.

Dense matrices are plain float64 ``numpy`` arrays and sparse ones are
``scipy.sparse.csr_array``; the helpers here validate and normalise them.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import BadDims, DimMismatch, EmptySet, RankDeficient
from .randbits import BitSource

RANK_TOL = 1e-10


def check_matrix(A, name: str = "A", min_rows: int = 1) -> np.ndarray:
    """Return ``A`` as a finite 2-D float64 array (vectors become columns)."""
    if sp.issparse(A):
        A = A.toarray()
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise BadDims(f"{name} must be 2-D, got shape {A.shape}")
    if A.shape[0] < min_rows:
        raise BadDims(f"{name} needs at least {min_rows} rows")
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{name} contains non-finite entries")
    return A


def check_vector(b, n: int | None = None, name: str = "b") -> np.ndarray:
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if n is not None and b.size != n:
        raise DimMismatch(f"{name} has length {b.size}, expected {n}")
    if not np.all(np.isfinite(b)):
        raise ValueError(f"{name} contains non-finite entries")
    return b


def as_source(seed) -> BitSource:
    if isinstance(seed, BitSource):
        return seed
    return BitSource(0 if seed is None else int(seed))


def qr_factor(A):
    """Thin Householder QR with nonnegative diagonal on ``T``.

    Returns ``(Q, T)`` with ``A = Q @ T``.  Raises :class:`RankDeficient`
    when the smallest singular value is below ``1e-10`` times the largest.
    """
    A = check_matrix(A)
    n, d = A.shape
    if n < d:
        raise BadDims(f"qr_factor needs rows >= cols, got {A.shape}")
    Q, T = np.linalg.qr(A, mode="reduced")
    s = np.sign(np.diag(T))
    s[s == 0] = 1.0
    Q = Q * s
    T = s[:, None] * T
    sv = np.linalg.svd(T, compute_uv=False)
    if sv[0] == 0 or sv[-1] <= RANK_TOL * sv[0]:
        raise RankDeficient("matrix is numerically rank deficient")
    return Q, T


def singular_values(A) -> np.ndarray:
    """All ``d`` singular values of an ``m x d`` matrix, ascending.

    When ``m < d`` the spectrum is padded with the ``d - m`` structural zeros
    so the result always matches the eigenvalues of ``A.T @ A``.
    """
    A = check_matrix(A)
    d = A.shape[1]
    s = np.linalg.svd(A, compute_uv=False)
    if s.size < d:
        s = np.concatenate([s, np.zeros(d - s.size)])
    return np.sort(s)


def spectrum(values) -> np.ndarray:
    v = np.sort(np.asarray(values, dtype=np.float64).reshape(-1))
    if not np.all(np.isfinite(v)):
        raise ValueError("spectrum values must be finite")
    return v


def hausdorff_distance(a, b) -> float:
    """Hausdorff distance between two finite subsets of the real line."""
    a = spectrum(a)
    b = spectrum(b)
    if a.size == 0 or b.size == 0:
        raise EmptySet("hausdorff_distance needs two nonempty sets")
    return max(_directed(a, b), _directed(b, a))


def _directed(a: np.ndarray, b: np.ndarray) -> float:
    # b sorted; nearest neighbour via insertion points
    pos = np.searchsorted(b, a)
    left = b[np.clip(pos - 1, 0, b.size - 1)]
    right = b[np.clip(pos, 0, b.size - 1)]
    return float(np.max(np.minimum(np.abs(a - left), np.abs(a - right))))


def condition_number(A) -> float:
    s = singular_values(A)
    return float(s[-1] / s[0]) if s[0] > 0 else float("inf")


def random_orthonormal(n: int, d: int, seed=None) -> np.ndarray:
    """Haar-distributed ``n x d`` matrix with orthonormal columns."""
    if not n >= d >= 1:
        raise BadDims(f"need n >= d >= 1, got n={n}, d={d}")
    src = as_source(seed)
    G = src.gaussian(n * d).reshape(n, d)
    Q, _ = qr_factor(G)
    return Q


def _flat_fourier_basis(N: int) -> list[np.ndarray]:
    """Real orthonormal Fourier vectors on N points, ordered by frequency."""
    t = np.arange(N)
    basis = [np.full(N, 1.0 / np.sqrt(N))]
    for k in range(1, (N - 1) // 2 + 1):
        basis.append(np.sqrt(2.0 / N) * np.cos(2 * np.pi * k * t / N))
        basis.append(np.sqrt(2.0 / N) * np.sin(2 * np.pi * k * t / N))
    if N % 2 == 0 and N > 1:
        basis.append((-1.0) ** t / np.sqrt(N))
    return basis


def spiked_orthonormal(n: int, d: int, heavy_rows: int, seed=None) -> np.ndarray:
    """Orthonormal ``n x d`` basis whose first ``heavy_rows`` rows are heavy.

    Heavy row ``i`` carries leverage ``cos^2(phi_i)`` drawn in ``[0.9, 0.98]``
    (exactly 1 when there is no room to mix).  The remaining rows share the
    rest of the mass, each getting at least ``(d - heavy_rows) / (n - heavy_rows)``.
    """
    if not 1 <= heavy_rows <= d <= n:
        raise BadDims(f"need 1 <= heavy_rows <= d <= n, got {heavy_rows}, {d}, {n}")
    src = as_source(seed)
    h = heavy_rows
    N = n - h
    U = np.zeros((n, d))
    basis = _flat_fourier_basis(N) if N > 0 else []
    n_tail = d - h
    if n_tail % 2 == 1:
        tail_idx = [0] + list(range(1, n_tail))
    else:
        tail_idx = list(range(1, n_tail + 1))
    # the Nyquist vector may sit in the middle of a pair slot when N is tiny
    tail_idx = [i for i in tail_idx if i < len(basis)][:n_tail]
    spare = [i for i in range(len(basis)) if i not in tail_idx]
    mix = N >= d and len(spare) >= h
    cos2 = 0.9 + 0.08 * src.uniform(h) if mix else np.ones(h)
    for i in range(h):
        U[i, i] = np.sqrt(cos2[i])
        if mix:
            U[h:, i] = np.sqrt(1.0 - cos2[i]) * basis[spare[i]]
    for j, bi in enumerate(tail_idx):
        U[h:, h + j] = basis[bi]
    if N > 0:
        perm = np.argsort(src.uniform(N))
        U[h:] = U[h:][perm]
    U *= src.signs(n).astype(np.float64)[:, None]
    rot = random_orthonormal(d, d, src)
    Q, _ = qr_factor(U @ rot)
    return Q
