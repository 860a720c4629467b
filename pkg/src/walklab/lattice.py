"""Reproducible simple-random-walk increments on the d-dimensional lattice.

Randomness scheme (bit-exact on every platform)
-----------------------------------------------
Each stream is the Philox4x64-10 counter cipher keyed by
``(master_seed, replica_index)``.  Blocks use counters 1, 2, 3, ...
(the numpy convention: ``np.random.Philox(key=[seed, replica])``
produces the identical word sequence) and yield four 64-bit words each.

Words are turned into step directions by bit slicing: a word is split
into ``64 // b`` chunks of ``b = ceil(log2(2d))`` bits, least
significant chunk first; chunks ``>= 2d`` are discarded (threshold
rejection, exactly unbiased), accepted chunks are direction codes in
``{0, ..., 2d-1}``.  Code ``c`` means axis ``c >> 1``, sign ``+1`` if
``c`` is even else ``-1``.  Distinct replica indices give independent
streams because Philox is a keyed permutation family.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError

# Resource guards; adjust for bigger experiments.  int64 coordinates are
# safe for any n <= MAX_STEPS since |S(k)| <= n.
MAX_STEPS = 100_000_000
MAX_DIM = 32

_U64 = np.uint64


def chunk_spec(d: int) -> tuple[int, int, int, int]:
    """(bits per chunk, chunk mask, chunks per word, 2d) for dimension d."""
    nd = 2 * d
    bits = (nd - 1).bit_length()
    return bits, (1 << bits) - 1, 64 // bits, nd


@dataclass
class RngStream:
    """A splittable counter-based random stream.

    Single-owner: create anywhere, use on one thread.  The same
    ``(master_seed, replica_index)`` always reproduces the same words.
    """

    master_seed: int
    replica_index: int
    _bitgen: np.random.Philox = field(init=False, repr=False)

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 bits")
        if not 0 <= self.replica_index < 2**64:
            raise ValueError("replica_index must be a nonnegative 64-bit integer")
        self._bitgen = np.random.Philox(
            key=np.array([self.master_seed, self.replica_index], dtype=np.uint64)
        )

    def raw(self, nwords: int) -> np.ndarray:
        """Next ``nwords`` 64-bit words, advancing the stream."""
        return np.asarray(self._bitgen.random_raw(nwords), dtype=np.uint64)

    def directions(self, d: int, n: int) -> np.ndarray:
        """Next ``n`` direction codes in {0, ..., 2d-1} (uint8).

        Consumes whole words; trailing accepted chunks of the final word
        are discarded, so successive calls are word-aligned.
        """
        bits, mask, per_word, nd = chunk_spec(d)
        out = np.empty(n, dtype=np.uint8)
        shifts = _U64(bits) * np.arange(per_word, dtype=np.uint64)
        acc_rate = nd / (mask + 1)
        filled = 0
        while filled < n:
            need = n - filled
            nwords = max(16, int(need / (per_word * acc_rate) * 1.05) + 8)
            words = self.raw(nwords)
            chunks = ((words[:, None] >> shifts[None, :]) & _U64(mask)).ravel()
            kept = chunks[chunks < nd]
            take = min(kept.size, need)
            out[filled : filled + take] = kept[:take]
            filled += take
        return out


def derive_rng_stream(master_seed: int, replica_index: int) -> RngStream:
    """Derive the stream keyed by (master_seed, replica_index)."""
    return RngStream(master_seed, replica_index)


@dataclass(frozen=True, eq=False)
class IncrementSequence:
    """n unit steps of a walk on Z^d, stored as direction codes."""

    d: int
    codes: np.ndarray  # (n,) uint8, values < 2d

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if self.codes.size and int(self.codes.max()) >= 2 * self.d:
            raise ValueError("direction code out of range")

    @property
    def n(self) -> int:
        return int(self.codes.size)

    @property
    def steps(self) -> np.ndarray:
        """(n, d) matrix of unit steps; one +-1 entry per row."""
        n = self.codes.size
        out = np.zeros((n, self.d), dtype=np.int8)
        axes = (self.codes >> 1).astype(np.intp)
        signs = (1 - 2 * (self.codes & 1)).astype(np.int8)
        out[np.arange(n), axes] = signs
        return out


def generate_increments(d: int, n: int, rng: RngStream) -> IncrementSequence:
    """n i.i.d. uniform unit steps on Z^d drawn from ``rng``."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    if n < 0:
        raise ValueError("length must be >= 0")
    if d > MAX_DIM:
        raise CapacityError(f"dimension {d} exceeds MAX_DIM={MAX_DIM}")
    if n > MAX_STEPS:
        raise CapacityError(f"length {n} exceeds MAX_STEPS={MAX_STEPS}")
    return IncrementSequence(d, rng.directions(d, n))


def increments_for(master_seed: int, replica_index: int, d: int, n: int) -> IncrementSequence:
    """Shorthand: the length-n walk of replica ``replica_index``."""
    return generate_increments(d, n, derive_rng_stream(master_seed, replica_index))


def positions(inc: IncrementSequence) -> np.ndarray:
    """Walk positions S(0)=0, ..., S(n) as an (n+1, d) int64 array."""
    n = inc.codes.size
    pos = np.zeros((n + 1, inc.d), dtype=np.int64)
    if n:
        np.cumsum(inc.steps, axis=0, dtype=np.int64, out=pos[1:])
    return pos
