"""Reproducible random streams.

Replica streams are Philox generators keyed by ``(master seed, replica, purpose)``.
Edge weights on the complete graph are a pure function of ``(seed, i, j)`` so a
lazily evaluated table agrees bit-for-bit with a materialized one.
"""
from __future__ import annotations

import zlib

import numpy as np

_U64 = np.uint64
_GOLDEN = _U64(0x9E3779B97F4A7C15)
_M1 = _U64(0xBF58476D1CE4E5B9)
_M2 = _U64(0x94D049BB133111EB)


def purpose_id(purpose: str | int) -> int:
    if isinstance(purpose, (int, np.integer)):
        return int(purpose)
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, replica: int = 0, purpose: str | int = 0) -> np.random.Generator:
    """Independent generator for one (seed, replica, purpose) triple."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(replica), purpose_id(purpose)])
    return np.random.Generator(np.random.Philox(ss))


def _mix64(z: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer; uint64 arithmetic wraps modulo 2**64
    z = (z ^ (z >> _U64(30))) * _M1
    z = (z ^ (z >> _U64(27))) * _M2
    return z ^ (z >> _U64(31))


def edge_uniforms(seed: int, i, j) -> np.ndarray:
    """Uniforms in (0, 1) for the undirected edges {i, j}; symmetric in (i, j)."""
    i = np.atleast_1d(np.asarray(i, dtype=np.int64))
    j = np.atleast_1d(np.asarray(j, dtype=np.int64))
    lo = np.minimum(i, j).astype(_U64)
    hi = np.maximum(i, j).astype(_U64)
    key = (lo << _U64(32)) | hi
    base = _mix64(np.atleast_1d(_U64(int(seed) & 0xFFFFFFFFFFFFFFFF)) + _GOLDEN)
    h = _mix64(_mix64(key ^ base) + _GOLDEN)
    return ((h >> _U64(11)).astype(np.float64) + 0.5) * (2.0 ** -53)


def edge_exponentials(seed: int, i, j) -> np.ndarray:
    """Exp(1) variables attached to edges, reproducible from (seed, i, j)."""
    return -np.log(edge_uniforms(seed, i, j))


class BufferedStream:
    """Scalar draws for event-driven loops, served from numpy blocks."""

    def __init__(self, rng: np.random.Generator, block: int = 4096):
        self.rng = rng
        self.block = block
        self._exp = np.empty(0)
        self._ie = 0
        self._uni = np.empty(0)
        self._iu = 0

    def exponential(self) -> float:
        if self._ie >= self._exp.size:
            self._exp = self.rng.standard_exponential(self.block)
            self._ie = 0
        v = self._exp[self._ie]
        self._ie += 1
        return float(v)

    def uniform(self) -> float:
        if self._iu >= self._uni.size:
            self._uni = self.rng.random(self.block)
            self._iu = 0
        v = self._uni[self._iu]
        self._iu += 1
        return float(v)

    def mark(self, n: int) -> int:
        """Uniform integer on 1..n."""
        return 1 + min(int(self.uniform() * n), n - 1)
