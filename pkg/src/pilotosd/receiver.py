"""Pilot-based channel estimation and mismatched bit LLRs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codebook import Interleaver, PuncturePattern
from .errors import DimensionError, EstimatorUnavailableError
from .phy import SQRT2


@dataclass(frozen=True)
class ChannelEstimate:
    h_hat: np.ndarray
    sigma2: float

    def scaled(self, c: float) -> "ChannelEstimate":
        return ChannelEstimate(self.h_hat * c, self.sigma2)


def inner(u, v) -> np.ndarray:
    """Blockwise ``<u, v> = sum u conj(v)`` over the last axis."""
    return np.sum(np.asarray(u) * np.conj(v), axis=-1)


def estimate_channel(y_p, x_p, sigma2: float = 1.0) -> ChannelEstimate:
    """Per-block least-squares (ML) estimate ``<y_p, x_p> / ||x_p||^2``."""
    y_p = np.asarray(y_p, dtype=np.complex128)
    x_p = np.asarray(x_p, dtype=np.complex128)
    if y_p.shape != x_p.shape:
        raise DimensionError(f"pilot shapes differ: {y_p.shape} vs {x_p.shape}")
    if y_p.shape[-1] == 0:
        raise EstimatorUnavailableError("no pilots: use a blind metric instead")
    energy = np.sum(np.abs(x_p) ** 2, axis=-1)
    return ChannelEstimate(inner(y_p, x_p) / energy, float(sigma2))


def symbol_llrs(y_d, h_hat, sigma2: float) -> np.ndarray:
    """Interleaved-order LLRs of the transmitted bits, ``log P(b=0)/P(b=1)``."""
    y_d = np.asarray(y_d)
    z = np.conj(np.asarray(h_hat))[:, None] * y_d
    out = np.empty(y_d.shape[:-1] + (2 * y_d.shape[-1],))
    out[..., 0::2] = z.real
    out[..., 1::2] = z.imag
    return (2.0 * SQRT2 / sigma2) * out.reshape(-1)


def compute_llrs(y_d, est: ChannelEstimate, interleaver: Interleaver,
                 puncture: PuncturePattern) -> np.ndarray:
    """LLRs aligned to mother-code positions; punctured positions are 0."""
    y_d = np.asarray(y_d)
    if y_d.shape[0] != est.h_hat.shape[0]:
        raise DimensionError(f"{y_d.shape[0]} blocks but {est.h_hat.shape[0]} estimates")
    tx = symbol_llrs(y_d, est.h_hat, est.sigma2)
    if tx.size != puncture.n_tx or puncture.n != interleaver.n:
        raise DimensionError(
            f"{tx.size} received bits for {puncture.n_tx} kept of {interleaver.n}"
        )
    interleaved = np.zeros(interleaver.n)
    interleaved[puncture.kept] = tx
    return interleaver.deinterleave(interleaved)
