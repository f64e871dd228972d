"""Systematic MDS block code FEC(k, n).

The generator is a systematized Vandermonde matrix: take the n-by-k
Vandermonde matrix V over distinct evaluation points alpha^t, multiply by
the inverse of its top k rows.  The first k rows become the identity (the
code is systematic) and any k rows of the result stay invertible, so any k
received packets of a block reconstruct it.
"""

from dataclasses import dataclass, field

import numpy as np

from . import gf


class ParamsOutOfRange(ValueError):
    """FEC parameters outside 1 <= k < n <= 255."""


@dataclass(frozen=True)
class FecParams:
    k: int
    n: int

    def __post_init__(self):
        if not (1 <= self.k < self.n):
            raise ParamsOutOfRange(f"need 1 <= k < n, got k={self.k} n={self.n}")
        if self.n > 255:
            raise ParamsOutOfRange(f"n={self.n} exceeds field size limit 255")

    @property
    def redundancy_ratio(self):
        return (self.n - self.k) / self.n


_repair_cache = {}


def repair_matrix(params):
    """(n-k, k) repair rows of the systematic generator."""
    key = (params.k, params.n)
    cached = _repair_cache.get(key)
    if cached is not None:
        return cached
    k, n = params.k, params.n
    points = np.array([gf.EXP[t] for t in range(n)], dtype=np.uint8)
    v = np.zeros((n, k), dtype=np.uint8)
    v[:, 0] = 1
    for j in range(1, k):
        v[:, j] = gf.mul_arrays(v[:, j - 1], points)
    top_inv = gf.solve(v[:k], np.eye(k, dtype=np.uint8))
    rows = gf.matmul(v[k:], top_inv)
    _repair_cache[key] = rows
    return rows


def encode_block(params, sources):
    """Build the n-k repair payloads for one block of k source payloads."""
    if len(sources) != params.k:
        raise ValueError(f"expected {params.k} source payloads, got {len(sources)}")
    size = len(sources[0])
    if any(len(s) != size for s in sources):
        raise ValueError("source payloads must have equal length")
    src = np.frombuffer(b"".join(bytes(s) for s in sources), dtype=np.uint8)
    src = src.reshape(params.k, size)
    out = gf.matmul(repair_matrix(params), src)
    return [out[i].tobytes() for i in range(params.n - params.k)]


@dataclass
class FecBlock:
    """Receiver-side state for one block.

    Packet index runs 0..n-1: indices below k are source packets, the rest
    repairs.  ``decode_time`` is the arrival time of the k-th distinct
    packet, the moment the block becomes reconstructible.
    """

    params: FecParams
    block_id: int = 0
    received: dict = field(default_factory=dict)
    decode_time: float = None

    @property
    def decodable(self):
        return len(self.received) >= self.params.k

    def add(self, index, payload, now):
        if not (0 <= index < self.params.n):
            raise ValueError(f"packet index {index} outside block of size {self.params.n}")
        if index in self.received:
            return False
        self.received[index] = payload
        if len(self.received) == self.params.k:
            self.decode_time = now
        return True


def try_decode(block):
    """Reconstruct missing sources once k distinct packets arrived.

    Returns None while the block is short of packets.  Otherwise returns
    {source_index: payload} for the sources that did not arrive directly
    (payloads are None when the block was fed index-only).  All-sources-
    arrived blocks decode without touching the solver.
    """
    params = block.params
    if not block.decodable:
        return None
    missing = [i for i in range(params.k) if i not in block.received]
    if not missing:
        return {}
    have = sorted(block.received)[: params.k]
    if any(block.received[i] is None for i in have):
        return {i: None for i in missing}
    rm = repair_matrix(params)
    mat = np.zeros((params.k, params.k), dtype=np.uint8)
    for row, idx in enumerate(have):
        if idx < params.k:
            mat[row, idx] = 1
        else:
            mat[row] = rm[idx - params.k]
    size = len(block.received[have[0]])
    rhs = np.zeros((params.k, size), dtype=np.uint8)
    for row, idx in enumerate(have):
        rhs[row] = np.frombuffer(bytes(block.received[idx]), dtype=np.uint8)
    sources = gf.solve(mat, rhs)
    return {i: sources[i].tobytes() for i in missing}
