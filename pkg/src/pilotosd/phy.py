"""QPSK mapping, pilot framing and the Rayleigh block-fading channel.

Conventions used throughout the package:

* Inner product: ``<u, v> = sum_j u_j * conj(v_j)``.
* ``CN(0, s2)`` has total variance ``s2``, split evenly over the real and
  imaginary parts.
* Symbol energy is 1, so ``Es/N0 [dB]`` maps to ``sigma2 = 10**(-dB/10)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError

SQRT2 = np.sqrt(2.0)
PILOT_SYMBOL = (1 + 1j) / SQRT2


@dataclass(frozen=True)
class FrameGeometry:
    """ell coherence blocks of n_c channel uses, the first n_p carry pilots."""

    ell: int
    n_c: int
    n_p: int = 0

    def __post_init__(self):
        if self.ell < 1 or self.n_c < 1:
            raise ParameterError(f"need ell >= 1 and n_c >= 1, got {self.ell}, {self.n_c}")
        if not 0 <= self.n_p < self.n_c:
            raise ParameterError(f"need 0 <= n_p < n_c, got n_p={self.n_p}, n_c={self.n_c}")

    @property
    def n(self) -> int:
        """Channel uses per packet."""
        return self.ell * self.n_c

    @property
    def n_d(self) -> int:
        """Data symbols per block."""
        return self.n_c - self.n_p

    @property
    def n_data_symbols(self) -> int:
        return self.ell * self.n_d

    @property
    def n_tx_bits(self) -> int:
        """Coded bits carried by one frame with QPSK."""
        return 2 * self.n_data_symbols


@dataclass(frozen=True)
class Frame:
    """Per-block symbols, shape ``(ell, n_c)``; pilots first, then data."""

    symbols: np.ndarray
    n_p: int

    @property
    def pilot(self) -> np.ndarray:
        return self.symbols[:, : self.n_p]

    @property
    def data(self) -> np.ndarray:
        return self.symbols[:, self.n_p :]

    @property
    def ell(self) -> int:
        return self.symbols.shape[0]


@dataclass(frozen=True)
class ChannelState:
    h: np.ndarray
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ParameterError(f"sigma2 must be positive, got {self.sigma2}")


def sigma2_from_esn0_db(esn0_db: float) -> float:
    return float(10.0 ** (-float(esn0_db) / 10.0))


def qpsk_modulate(bits) -> np.ndarray:
    """Gray QPSK: ``(b0, b1) -> ((1 - 2 b0) + 1j (1 - 2 b1)) / sqrt(2)``.

    Works on the last axis, so a batch of bit vectors maps to a batch of
    symbol vectors.
    """
    bits = np.asarray(bits)
    if bits.shape[-1] % 2:
        raise DimensionError(f"QPSK needs an even number of bits, got {bits.shape[-1]}")
    s = 1.0 - 2.0 * bits.astype(np.float64)
    return (s[..., 0::2] + 1j * s[..., 1::2]) / SQRT2


def qpsk_demodulate(symbols) -> np.ndarray:
    """Hard decisions, inverse of :func:`qpsk_modulate` on the constellation."""
    symbols = np.asarray(symbols)
    out = np.empty(symbols.shape[:-1] + (2 * symbols.shape[-1],), dtype=np.uint8)
    out[..., 0::2] = symbols.real < 0
    out[..., 1::2] = symbols.imag < 0
    return out


def pilot_block(geom: FrameGeometry) -> np.ndarray:
    return np.full((geom.ell, geom.n_p), PILOT_SYMBOL, dtype=np.complex128)


def build_frame(data_symbols, geom: FrameGeometry) -> Frame:
    data_symbols = np.asarray(data_symbols, dtype=np.complex128)
    if data_symbols.shape[-1] != geom.n_data_symbols:
        raise DimensionError(
            f"expected {geom.n_data_symbols} data symbols, got {data_symbols.shape[-1]}"
        )
    data = data_symbols.reshape(geom.ell, geom.n_d)
    return Frame(np.concatenate([pilot_block(geom), data], axis=1), geom.n_p)


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    z = rng.standard_normal(tuple(np.atleast_1d(shape)) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(variance / 2.0)


def draw_channel(geom: FrameGeometry, esn0_db: float, rng: np.random.Generator) -> ChannelState:
    return ChannelState(complex_normal(rng, geom.ell), sigma2_from_esn0_db(esn0_db))


def channel_apply(frame: Frame, state: ChannelState, rng: np.random.Generator) -> Frame:
    """``y_i = h_i x_i + n_i`` with ``n_i ~ CN(0, sigma2 I)``."""
    x = frame.symbols
    if state.h.shape[0] != x.shape[0]:
        raise DimensionError(f"{state.h.shape[0]} fading coefficients for {x.shape[0]} blocks")
    noise = complex_normal(rng, x.shape, state.sigma2)
    return Frame(state.h[:, None] * x + noise, frame.n_p)
