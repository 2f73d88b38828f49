"""Seeded random-bit source with exact bit accounting.

Every sampling routine draws from a :class:`BitSource` and declares the
number of uniform bits it consumed.  The counter is exact: ``bits_used`` is
the number of bits actually handed out to callers, and the per-operation
breakdown in ``costs`` always sums to it.  The underlying generator is
Philox (counter-based), keyed by ``(seed, stream)``, so independent streams
can be derived without sharing state.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import AllZeroWeights

MASK64 = (1 << 64) - 1

# Smallest irreducible polynomial of each degree over GF(2), bit i = coeff of x^i.
# Index w - 1 holds the modulus for GF(2^w).
IRREDUCIBLE_POLYS = (
    0x3, 0x7, 0xB, 0x13, 0x25, 0x43, 0x83, 0x11B,
    0x203, 0x409, 0x805, 0x1009, 0x201B, 0x4021, 0x8003, 0x1002B,
    0x20009, 0x40009, 0x80027, 0x100009, 0x200005, 0x400003, 0x800021, 0x100001B,
    0x2000009, 0x400001B, 0x8000027, 0x10000003, 0x20000005, 0x40000003, 0x80000009,
    0x10000008D,
)


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_stream(parent: int, label: int) -> int:
    """Deterministic child stream id; distinct labels give distinct streams."""
    return _splitmix64(_splitmix64(parent & MASK64) ^ (label & MASK64))


class BitSource:
    """Replayable stream of uniform bits with an exact consumption counter.

    Parameters
    ----------
    seed : int
        64-bit seed.
    stream : int
        Stream id; sources with the same seed and different streams are
        independent.

    Notes
    -----
    Single-bit and small-integer draws are served from a bit buffer, so they
    cost exactly the bits they use.  Floating-point draws (uniforms, normals,
    categorical) take whole 64-bit words and are charged 64 bits each.  The
    raw generator consumption is also tracked in ``words_drawn``; the
    conservative word-level figure is ``64 * words_drawn``.
    """

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed) & MASK64
        self.stream = int(stream) & MASK64
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self._bitgen = np.random.Philox(key=key)
        self.bits_used = 0
        self.words_drawn = 0
        self.costs: Counter = Counter()
        self._buf = np.empty(0, dtype=np.uint8)
        self._pos = 0

    def __repr__(self):
        return f"BitSource(seed={self.seed}, stream={self.stream}, bits_used={self.bits_used})"

    def spawn(self, label: int) -> "BitSource":
        """Independent child source; consumes no bits from this one."""
        return BitSource(self.seed, derive_stream(self.stream, label))

    @property
    def raw_bits(self) -> int:
        return 64 * self.words_drawn

    def check_accounting(self) -> bool:
        return sum(self.costs.values()) == self.bits_used

    def _charge(self, op: str, k: int) -> None:
        self.bits_used += int(k)
        self.costs[op] += int(k)

    def _raw_words(self, count: int) -> np.ndarray:
        self.words_drawn += count
        return self._bitgen.random_raw(count).astype(np.uint64, copy=False)

    # -- bit-level draws --------------------------------------------------

    def draw_bits(self, k: int, op: str = "bits") -> np.ndarray:
        """Return ``k`` uniform bits as a uint8 array (values 0/1)."""
        k = int(k)
        if k < 0:
            raise ValueError("k must be nonnegative")
        avail = self._buf.size - self._pos
        if k > avail:
            nwords = -(-(k - avail) // 64)
            fresh = np.unpackbits(self._raw_words(nwords).view(np.uint8), bitorder="little")
            self._buf = np.concatenate([self._buf[self._pos:], fresh])
            self._pos = 0
        out = self._buf[self._pos:self._pos + k]
        self._pos += k
        self._charge(op, k)
        return out

    def draw_uint(self, width: int, size: int, op: str = "uint") -> np.ndarray:
        """``size`` integers, each assembled from ``width`` fresh bits."""
        if not 0 <= width <= 64:
            raise ValueError("width must be in [0, 64]")
        if width == 0:
            return np.zeros(size, dtype=np.uint64)
        bits = self.draw_bits(width * size, op).reshape(size, width).astype(np.uint64)
        return (bits << np.arange(width, dtype=np.uint64)).sum(axis=1, dtype=np.uint64)

    def signs(self, size: int, op: str = "signs") -> np.ndarray:
        """Rademacher signs as int8, one bit each."""
        return (1 - 2 * self.draw_bits(size, op).astype(np.int8)).astype(np.int8)

    def uniform_index(self, n: int, size: int | None = None, op: str = "uniform_index"):
        """Uniform draw(s) from ``{0, ..., n-1}``.

        Uses the Fast Dice Roller (exact, expected cost below
        ``log2(n) + 2`` bits); powers of two cost exactly ``log2(n)`` bits.
        """
        n = int(n)
        if n < 1:
            raise ValueError("n must be positive")
        scalar = size is None
        size = 1 if scalar else int(size)
        if n == 1:
            out = np.zeros(size, dtype=np.int64)
            return int(out[0]) if scalar else out
        v = np.ones(size, dtype=np.int64)
        c = np.zeros(size, dtype=np.int64)
        out = np.empty(size, dtype=np.int64)
        active = np.arange(size)
        while active.size:
            b = self.draw_bits(active.size, op).astype(np.int64)
            v[active] *= 2
            c[active] = 2 * c[active] + b
            full = v[active] >= n
            if full.any():
                idx = active[full]
                ok = c[idx] < n
                out[idx[ok]] = c[idx[ok]]
                redo = idx[~ok]
                v[redo] -= n
                c[redo] -= n
                keep = np.ones(active.size, dtype=bool)
                keep[np.flatnonzero(full)[ok]] = False
                active = active[keep]
        return int(out[0]) if scalar else out

    # -- word-level draws -------------------------------------------------

    def words(self, size: int, op: str = "words") -> np.ndarray:
        w = self._raw_words(int(size))
        self._charge(op, 64 * int(size))
        return w

    def uniform(self, size: int, op: str = "uniform") -> np.ndarray:
        """Uniform doubles in [0, 1) with 53-bit resolution, 64 bits each."""
        return (self.words(size, op) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def bernoulli(self, prob, size: int, op: str = "bernoulli") -> np.ndarray:
        """Bernoulli(prob) booleans; ``prob`` may be scalar or per-draw."""
        return self.uniform(size, op) < prob

    def gaussian(self, size: int | None = None, op: str = "gaussian"):
        """Standard normals by Box-Muller; 128 bits per generated pair."""
        scalar = size is None
        size = 1 if scalar else int(size)
        pairs = -(-size // 2)
        w = self.words(2 * pairs, op).reshape(pairs, 2)
        u1 = ((w[:, 0] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0 ** -53
        u2 = (w[:, 1] >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty((pairs, 2))
        z[:, 0] = r * np.cos(2.0 * np.pi * u2)
        z[:, 1] = r * np.sin(2.0 * np.pi * u2)
        z = z.reshape(-1)[:size]
        return float(z[0]) if scalar else z

    def categorical_index(self, weights, size: int | None = None, op: str = "categorical"):
        """Draw index ``j`` with probability ``weights[j] / sum(weights)``.

        Inverse CDF against a 53-bit uniform.  The CDF is normalised in double
        precision; a draw landing past the last rounded CDF value is assigned
        to the last positive weight, so zero weights are never selected.
        """
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty vector")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite and nonnegative")
        total = w.sum()
        if total <= 0:
            raise AllZeroWeights("all categorical weights are zero")
        scalar = size is None
        size = 1 if scalar else int(size)
        cdf = np.cumsum(w) / total
        u = self.uniform(size, op)
        idx = np.searchsorted(cdf, u, side="right")
        last = int(np.flatnonzero(w > 0)[-1])
        idx = np.minimum(idx, last)
        return int(idx[0]) if scalar else idx.astype(np.int64)


@dataclass(frozen=True)
class PairwiseSignVector:
    """Signs ``w_i = (-1)^{lowbit(a*x_i + b)}`` over GF(2^width), ``x_i = i``."""

    m: int
    width: int
    a: int
    b: int
    signs: np.ndarray


def field_width(m: int) -> int:
    return max(1, (int(m) - 1).bit_length())


def gf_mul(a: np.ndarray, x: np.ndarray, width: int) -> np.ndarray:
    """Elementwise product in GF(2^width) (broadcasting uint64 arrays)."""
    a = np.asarray(a, dtype=np.uint64)
    x = np.asarray(x, dtype=np.uint64)
    one = np.uint64(1)
    acc = np.zeros(np.broadcast(a, x).shape, dtype=np.uint64)
    for bit in range(width):
        acc ^= ((a >> np.uint64(bit)) & one) * (x << np.uint64(bit))
    poly = np.uint64(IRREDUCIBLE_POLYS[width - 1])
    for deg in range(2 * width - 2, width - 1, -1):
        acc ^= ((acc >> np.uint64(deg)) & one) * (poly << np.uint64(deg - width))
    return acc


def pairwise_sign_matrix(src: BitSource, m: int, count: int) -> np.ndarray:
    """``count`` independent pairwise-independent sign vectors, shape (count, m).

    Each vector costs exactly ``2 * field_width(m)`` bits.
    """
    width = field_width(m)
    if width > len(IRREDUCIBLE_POLYS):
        raise ValueError("m too large for the irreducible polynomial table")
    ab = src.draw_uint(width, 2 * count, op="pairwise_signs").reshape(count, 2)
    x = np.arange(m, dtype=np.uint64)[None, :]
    vals = gf_mul(ab[:, :1], x, width) ^ ab[:, 1:]
    return (1 - 2 * (vals & np.uint64(1)).astype(np.int8)).astype(np.int8)


def pairwise_signs(src: BitSource, m: int) -> PairwiseSignVector:
    width = field_width(m)
    ab = src.draw_uint(width, 2, op="pairwise_signs")
    x = np.arange(m, dtype=np.uint64)
    vals = gf_mul(ab[0], x, width) ^ ab[1]
    signs = (1 - 2 * (vals & np.uint64(1)).astype(np.int8)).astype(np.int8)
    return PairwiseSignVector(int(m), width, int(ab[0]), int(ab[1]), signs)
