"""Transmit chain: encode, interleave, puncture, QPSK, pilot framing."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .codebook import (
    BinaryMatrix,
    ConvCodeSpec,
    Interleaver,
    PuncturePattern,
    encode,
    make_interleaver,
    make_puncture,
    puncture,
    tbcc_generator_matrix,
)
from .osd import OsdConfig, OsdEngine
from .phy import Frame, FrameGeometry, build_frame, pilot_block, qpsk_modulate


@dataclass(frozen=True, eq=False)
class Link:
    G: BinaryMatrix
    interleaver: Interleaver
    puncture: PuncturePattern
    geom: FrameGeometry

    @classmethod
    def build(cls, spec: ConvCodeSpec, k: int, geom: FrameGeometry, seed: int) -> "Link":
        G = tbcc_generator_matrix(spec, k)
        return cls.from_matrix(G, geom, seed)

    @classmethod
    def from_matrix(cls, G: BinaryMatrix, geom: FrameGeometry, seed: int) -> "Link":
        return cls(G, make_interleaver(seed, G.cols), make_puncture(G.cols, geom), geom)

    @property
    def k(self) -> int:
        return self.G.rows

    @property
    def n(self) -> int:
        return self.G.cols

    @cached_property
    def pilots(self) -> np.ndarray:
        return pilot_block(self.geom)

    def tx_bits(self, codewords) -> np.ndarray:
        return puncture(self.interleaver.interleave(codewords), self.puncture)

    def data_symbols(self, codewords) -> np.ndarray:
        """QPSK data symbols, shape ``(..., ell, n_d)``."""
        sym = qpsk_modulate(self.tx_bits(codewords))
        return sym.reshape(sym.shape[:-1] + (self.geom.ell, self.geom.n_d))

    def encode(self, u) -> np.ndarray:
        return encode(self.G, u)

    def frame(self, codeword) -> Frame:
        return build_frame(self.data_symbols(codeword).reshape(-1), self.geom)

    def engine(self, cfg: OsdConfig) -> OsdEngine:
        return OsdEngine(self.G, self.interleaver, self.puncture, self.geom, cfg)
