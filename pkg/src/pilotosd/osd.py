"""Order-t ordered-statistics list decoding.

Two entry points share the same conventions:

* :func:`osd_list` returns explicit codewords in mother-code positions.
* :class:`OsdEngine` keeps the list in packed form in the interleaved
  domain and scores candidates straight from the received data symbols;
  it is the path used by the Monte Carlo harness.

Reliability ties are broken by ascending mother-code position, so punctured
positions (LLR 0) are the least reliable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

from . import _kernels
from .codebook import BinaryMatrix, Interleaver, PuncturePattern, mrb_systematize
from .errors import DimensionError, ParameterError, RankDeficiencyError
from .phy import SQRT2, FrameGeometry


@dataclass(frozen=True)
class OsdConfig:
    order: int = 3

    def __post_init__(self):
        if self.order < 0:
            raise ParameterError(f"OSD order must be >= 0, got {self.order}")


@dataclass(frozen=True)
class CandidateList:
    codewords: np.ndarray
    basis: np.ndarray

    @property
    def size(self) -> int:
        return self.codewords.shape[0]

    def __len__(self):
        return self.size


def list_size(k: int, t: int) -> int:
    return sum(comb(k, i) for i in range(min(t, k) + 1))


def tep_iterator(k: int, t: int):
    """Test-error patterns of weight 0..t, weight-ascending, lexicographic within weight."""
    if not 0 <= t <= k:
        raise ParameterError(f"need 0 <= t <= k, got t={t}, k={k}")
    for w in range(t + 1):
        for pos in combinations(range(k), w):
            pattern = np.zeros(k, dtype=np.uint8)
            pattern[list(pos)] = 1
            yield pattern


@lru_cache(maxsize=16)
def tep_table(k: int, t: int) -> np.ndarray:
    """Same patterns as :func:`tep_iterator`, as row indices padded with -1."""
    if not 0 <= t <= k:
        raise ParameterError(f"need 0 <= t <= k, got t={t}, k={k}")
    table = np.full((list_size(k, t), max(t, 1)), -1, dtype=np.int64)
    i = 0
    for w in range(t + 1):
        for pos in combinations(range(k), w):
            table[i, :w] = pos
            i += 1
    table.setflags(write=False)
    return table


def reliability_order(llrs) -> np.ndarray:
    return np.argsort(-np.abs(np.asarray(llrs)), kind="stable")


def hard_decision(llrs) -> np.ndarray:
    return (np.asarray(llrs) < 0).astype(np.uint8)


def osd_list(llrs, G: BinaryMatrix, cfg: OsdConfig) -> CandidateList:
    llrs = np.asarray(llrs, dtype=np.float64)
    if llrs.shape != (G.cols,):
        raise DimensionError(f"{llrs.size} LLRs for a length-{G.cols} code")
    if cfg.order > G.rows:
        raise ParameterError(f"OSD order {cfg.order} exceeds k={G.rows}")
    G_sys, basis = mrb_systematize(G, reliability_order(llrs))
    hard = hard_decision(llrs)[basis]
    teps = np.array(list(tep_iterator(G.rows, cfg.order)), dtype=np.uint8)
    info = teps ^ hard[None, :]
    codewords = ((info.astype(np.int64) @ G_sys.bits.astype(np.int64)) & 1).astype(np.uint8)
    return CandidateList(codewords, basis)


class PackedList:
    """An OSD list as ``c0 ^ rows[tep]`` in the engine's interleaved domain."""

    def __init__(self, engine: "OsdEngine", rows, c0, basis):
        self.engine = engine
        self.rows = rows
        self.c0 = c0
        self.basis = basis

    @property
    def size(self) -> int:
        return self.engine.teps.shape[0]

    def correlations(self, y_d) -> np.ndarray:
        """``<y_i^d, x_i^d>`` for every candidate and block, shape ``(size, ell)``."""
        eng = self.engine
        table = _kernels.byte_tables(eng.position_weights(y_d), eng.block_of, eng.geom.ell)
        return _kernels.list_correlations(
            self.rows, self.c0, eng.teps, table, eng.byte_lo, eng.byte_hi
        )

    def packed_codeword(self, index: int) -> np.ndarray:
        cw = self.c0.copy()
        for r in self.engine.teps[index]:
            if r < 0:
                break
            cw ^= self.rows[r]
        return cw

    def codeword(self, index: int) -> np.ndarray:
        """Candidate ``index`` in mother-code positions."""
        eng = self.engine
        bits = _kernels.unpack_rows(self.packed_codeword(index)[None, :], eng.n)[0]
        return eng.interleaver.deinterleave(bits)

    def codewords(self) -> np.ndarray:
        eng = self.engine
        packed = _kernels.list_codewords(self.rows, self.c0, eng.teps)
        return eng.interleaver.deinterleave(_kernels.unpack_rows(packed, eng.n))


class OsdEngine:
    """OSD over ``G`` with the interleaver, puncturing and framing folded in."""

    def __init__(self, G: BinaryMatrix, interleaver: Interleaver,
                 puncture: PuncturePattern, geom: FrameGeometry, cfg: OsdConfig):
        if interleaver.n != G.cols or puncture.n != G.cols:
            raise DimensionError("interleaver/puncture length does not match the code")
        if puncture.n_tx != geom.n_tx_bits:
            raise DimensionError(f"{puncture.n_tx} kept bits for {geom.n_tx_bits} frame bits")
        if cfg.order > G.rows:
            raise ParameterError(f"OSD order {cfg.order} exceeds k={G.rows}")
        self.G = G
        self.interleaver = interleaver
        self.puncture = puncture
        self.geom = geom
        self.cfg = cfg
        self.n = G.cols
        self.k = G.rows
        self.G_int = G.permute_columns(interleaver.permutation)
        self.teps = tep_table(self.k, cfg.order)

        block_of = np.full(self.n, -1, dtype=np.int64)
        kept = puncture.kept
        block_of[kept] = (np.arange(kept.size) // 2) // geom.n_d
        self.block_of = block_of
        n_bytes = (self.n + 7) // 8
        lo = np.ones(n_bytes, dtype=np.int64)
        hi = np.zeros(n_bytes, dtype=np.int64)
        for p in range(n_bytes):
            blocks = block_of[8 * p : 8 * p + 8]
            blocks = blocks[blocks >= 0]
            if blocks.size:
                lo[p], hi[p] = blocks.min(), blocks.max()
        self.byte_lo, self.byte_hi = lo, hi
        # position j of the kept stream -> (symbol index, real/imag)
        self._sym = np.arange(kept.size) // 2
        self._rot = np.where(np.arange(kept.size) % 2 == 0, 1.0, -1j) / SQRT2

    def position_weights(self, y_d) -> np.ndarray:
        y = np.asarray(y_d, dtype=np.complex128).reshape(-1)
        w = np.zeros(self.n, dtype=np.complex128)
        w[self.puncture.kept] = y[self._sym] * self._rot
        return w

    def run(self, llrs) -> PackedList:
        """OSD list for LLRs given in mother-code positions."""
        llrs = np.asarray(llrs, dtype=np.float64)
        if llrs.shape != (self.n,):
            raise DimensionError(f"{llrs.size} LLRs for a length-{self.n} code")
        order = self.interleaver.inverse[reliability_order(llrs)]
        rows = self.G_int.packed.copy()
        rank, basis = _kernels.systematize_packed(rows, order)
        if rank < self.k:
            raise RankDeficiencyError(f"generator rank {rank} < {self.k}")
        hard = _kernels.pack_rows(hard_decision(llrs)[self.interleaver.permutation][None, :])[0]
        c0 = _kernels.base_codeword(rows, basis, hard)
        return PackedList(self, rows, c0, basis)

    def pack_codeword(self, c) -> np.ndarray:
        return _kernels.pack_rows(self.interleaver.interleave(c)[None, :])[0]
