"""Deterministic counter-based random number streams.

A stream is an immutable value identified by ``(master_seed, stream_id)``.
Drawing never mutates the stream: draw ``i`` of a stream is a fixed 64-bit
mixing function of the stream key and the counter ``i``, so the same stream
always reproduces the same sequence, independently of scheduling, thread
count, or how many values earlier callers consumed.  Independent substreams
are derived by hashing a child index into a new stream id; nested derivation
gives a tree of streams keyed by their path.

The mixing function is the splitmix64 finalizer over a Weyl sequence; all
integer arithmetic is exact 64-bit wrapping arithmetic, identical on every
platform.  Floating-point outputs (uniforms, normals) are deterministic for a
given platform's libm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_SUBSALT = 0xD1B54A32D192ED03

_U64_GOLDEN = np.uint64(_GOLDEN)
_U64_SUBSALT = np.uint64(_SUBSALT)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)

#: 2**-53, maps the top 53 bits of a draw to [0, 1).
_INV53 = float(2.0**-53)


def _finalize(z: int) -> int:
    """splitmix64 finalizer on a Python int (exact 64-bit wrapping)."""
    z &= _MASK64
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK64
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK64
    z ^= z >> 31
    return z


def _finalize_array(z: np.ndarray, inplace: bool = False) -> np.ndarray:
    """Vectorized splitmix64 finalizer; ``z`` must be uint64."""
    if not inplace:
        z = z.copy()
    z ^= z >> _S30
    z *= _MIX1
    z ^= z >> _S27
    z *= _MIX2
    z ^= z >> _S31
    return z


def _child_key(key: int, index: int) -> int:
    """Derive the key of child ``index`` of a stream with key ``key``."""
    salted = _finalize((index * _GOLDEN + _SUBSALT) & _MASK64)
    return _finalize((key + salted) & _MASK64)


def _child_keys(key: int, indices: np.ndarray) -> np.ndarray:
    """Vectorized :func:`_child_key` for an array of child indices."""
    idx = np.asarray(indices, dtype=np.uint64)
    salted = _finalize_array(idx * _U64_GOLDEN + _U64_SUBSALT)
    return _finalize_array(salted + np.uint64(key))


def _raw_block(key: int, start: int, count: int) -> np.ndarray:
    """Draws ``start .. start+count-1`` of the stream with key ``key``."""
    ctr = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    ctr *= _U64_GOLDEN
    ctr += np.uint64(key)
    return _finalize_array(ctr, inplace=True)


@dataclass(frozen=True)
class RngStream:
    """An immutable random stream identified by ``(master_seed, stream_id)``.

    ``substream(i)`` derives statistically independent child streams; the
    root of an experiment is conventionally ``RngStream(master_seed)``.
    """

    master_seed: int
    stream_id: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "master_seed", self.master_seed & _MASK64)
        object.__setattr__(self, "stream_id", self.stream_id & _MASK64)

    @property
    def key(self) -> int:
        return _child_key(_finalize(self.master_seed), self.stream_id)

    def substream(self, index: int) -> "RngStream":
        if index < 0:
            raise DomainError("substream index must be nonnegative")
        return RngStream(self.master_seed, _child_key(self.stream_id, index))

    def substream_keys(self, count: int) -> np.ndarray:
        """Keys of children ``0 .. count-1``, for vectorized batch kernels.

        Entry ``b`` equals ``self.substream(b).key`` exactly.
        """
        sids = _child_keys(self.stream_id, np.arange(count, dtype=np.uint64))
        salted = _finalize_array(sids * _U64_GOLDEN + _U64_SUBSALT)
        return _finalize_array(np.uint64(_finalize(self.master_seed)) + salted)

    def raw64(self, count: int, start: int = 0) -> np.ndarray:
        """``count`` raw 64-bit draws starting at counter position ``start``."""
        return _raw_block(self.key, start, count)

    def uniforms(self, count: int, start: int = 0) -> np.ndarray:
        """``count`` doubles uniform on [0, 1)."""
        return (self.raw64(count, start) >> _S11).astype(np.float64) * _INV53

    def normals(self, count: int, out: np.ndarray | None = None) -> np.ndarray:
        """``count`` standard normal draws via the polar (rejection) method.

        Trial ``i`` consumes raw draws ``2i`` and ``2i + 1``; accepted trials
        yield two normals each, kept in trial order, so the output does not
        depend on internal batching.  The number of raw draws consumed is
        data dependent but the output is a pure function of the stream.
        ``out``, when given, must be a contiguous float64 array of size
        ``count`` and is filled in place.
        """
        if count < 0:
            raise DomainError("count must be nonnegative")
        if out is None:
            out = np.empty(count, dtype=np.float64)
        elif out.shape != (count,) or out.dtype != np.float64:
            raise DomainError(f"out must be a float64 array of shape ({count},)")
        key = np.uint64(self.key)
        filled = 0
        base = 0
        while filled < count:
            # acceptance rate is pi/4; oversize by ~5 sigma to avoid retries
            pairs_needed = (count - filled + 1) // 2
            trials = int(pairs_needed * 1.2733) + int(4.0 * pairs_needed**0.5) + 16
            # even/odd raw draws as two contiguous Weyl subsequences
            ctr_u = np.arange(base + 1, base + 2 * trials, 2, dtype=np.uint64)
            ctr_v = np.arange(base + 2, base + 2 * trials + 1, 2, dtype=np.uint64)
            base += 2 * trials
            ctr_u *= _U64_GOLDEN
            ctr_u += key
            ctr_v *= _U64_GOLDEN
            ctr_v += key
            u = _finalize_array(ctr_u, inplace=True).astype(np.float64)
            v = _finalize_array(ctr_v, inplace=True).astype(np.float64)
            u *= 2.0**-63
            u -= 1.0
            v *= 2.0**-63
            v -= 1.0
            s = u * u
            s += v * v
            keep = s < 1.0
            keep &= s > 0.0
            u, v, s = u[keep], v[keep], s[keep]
            factor = np.log(s)
            factor *= -2.0
            factor /= s
            np.sqrt(factor, out=factor)
            u *= factor
            v *= factor
            full = min(u.size, (count - filled) // 2)
            stop = filled + 2 * full
            out[filled:stop:2] = u[:full]
            out[filled + 1 : stop : 2] = v[:full]
            filled = stop
            if filled < count and full < u.size:
                out[filled] = u[full]
                filled += 1
        return out
