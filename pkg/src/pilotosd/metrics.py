"""Decision metrics, list selection rules and the EM channel re-estimation.

All symbol arrays are block-shaped, ``(ell, m)`` or ``(..., ell, m)``.
List decisions pick the maximum score; ties go to the earliest list entry.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DecodingError, EstimatorUnavailableError, ParameterError
from .link import Link
from .osd import CandidateList, OsdConfig, OsdEngine, osd_list
from .phy import Frame
from .receiver import ChannelEstimate, compute_llrs, estimate_channel, inner


class MetricKind(Enum):
    COHERENT_ML = "coherent-ml"
    PAT_MISMATCHED = "pat-mismatched"
    GLRT = "glrt"
    NONCOHERENT_ML = "noncoherent-ml"
    INLIST_GLRT = "inlist-glrt"


@dataclass(frozen=True)
class EmConfig:
    m: int = 1
    rebuild_list: bool = True
    include_pilots: bool = False

    def __post_init__(self):
        if self.m < 0:
            raise ParameterError(f"EM iterations must be >= 0, got {self.m}")


def _energy(x) -> np.ndarray:
    return np.sum(np.abs(np.asarray(x)) ** 2, axis=-1)


def metric_coherent(x, y, h) -> float:
    return float(np.sum(np.real(np.conj(np.asarray(h)) * inner(y, x)), axis=-1))


def metric_pat(x_d, y_d, est) -> float:
    h_hat = est.h_hat if isinstance(est, ChannelEstimate) else np.asarray(est)
    return metric_coherent(x_d, y_d, h_hat)


def metric_glrt(x, y):
    """QPSK form ``sum_i |<y_i, x_i>|^2``."""
    return np.sum(np.abs(inner(y, x)) ** 2, axis=-1)


def metric_glrt_general(x, y):
    """``sum_i |<y_i, x_i>|^2 / ||x_i||^2`` for arbitrary block energies."""
    return np.sum(np.abs(inner(y, x)) ** 2 / _energy(x), axis=-1)


def metric_ncml(x, y, sigma2: float):
    """``log prod_i E_H[p(y_i | x_i, H)]`` up to terms that do not depend on x."""
    if not sigma2 > 0:
        raise ParameterError(f"sigma2 must be positive, got {sigma2}")
    e = _energy(x)
    per_block = np.abs(inner(y, x)) ** 2 / (sigma2 * (sigma2 + e)) - np.log1p(e / sigma2)
    return np.sum(per_block, axis=-1)


def metric_inlist_glrt(x_d, y_d, h_hat, n_p: int):
    """Data-segment form of the full-block GLRT over pilot-reinserted candidates.

    Equals ``(sum_i |<y_i, x_i>|^2 - const) / (2 n_p)`` when the estimate is
    the least-squares one from ``n_p`` unit-energy pilots.
    """
    corr = inner(y_d, x_d)
    return np.sum(np.real(np.conj(h_hat) * corr) + np.abs(corr) ** 2 / (2 * n_p), axis=-1)


def metric_gaussian_prior(x_d, y_d, est: ChannelEstimate, x_p):
    """``log prod_i E[p(y_i^d | x_i^d, H_i)]`` with ``H_i ~ CN(h_hat_i, sigma2/||x_i^p||^2)``.

    The prior variance is the error variance of the least-squares pilot
    estimate under the package noise convention.
    """
    sigma2 = est.sigma2
    if not sigma2 > 0:
        raise ParameterError(f"sigma2 must be positive, got {sigma2}")
    p_energy = _energy(x_p)
    if np.any(p_energy == 0):
        raise EstimatorUnavailableError("Gaussian prior needs pilots in every block")
    x_d = np.asarray(x_d)
    y_d = np.asarray(y_d)
    v = sigma2 / p_energy
    d = _energy(x_d)
    resid = y_d - est.h_hat[:, None] * x_d
    quad = (_energy(resid) - v * np.abs(inner(resid, x_d)) ** 2 / (sigma2 + v * d)) / sigma2
    m = y_d.shape[-1]
    per_block = -m * np.log(np.pi * sigma2) - np.log1p(v * d / sigma2) - quad
    return np.sum(per_block, axis=-1)


# scores over a whole list from block correlations corr[c, i] = <y_i^d, x_i^d>

def _as_real(z) -> np.ndarray:
    z = np.ascontiguousarray(z, dtype=np.complex128)
    return z.view(np.float64).reshape(z.shape[:-1] + (2 * z.shape[-1],))


def scores_coherent(corr, h) -> np.ndarray:
    """``sum_i Re(conj(h_i) corr_i)`` for every list entry."""
    return _as_real(corr) @ _as_real(np.asarray(h, dtype=np.complex128))


def scores_inlist(corr, pilot_corr) -> np.ndarray:
    """Full-block GLRT ``sum_i |<y_i^p, x_i^p> + <y_i^d, x_i^d>|^2``."""
    r = _as_real(np.asarray(corr) + pilot_corr)
    return np.einsum("ij,ij->i", r, r)


def posterior_log_weights(corr, energy_d, h_hat, sigma2: float) -> np.ndarray:
    """``-sum_i ||y_i^d - h_i x_i^d||^2 / sigma2`` up to a list-independent constant."""
    penalty = np.sum(np.abs(h_hat) ** 2 * energy_d, axis=-1)
    return (2.0 * scores_coherent(corr, h_hat) - penalty) / sigma2


def posterior_weights(corr, energy_d, h_hat, sigma2: float) -> np.ndarray:
    logw = posterior_log_weights(corr, energy_d, h_hat, sigma2)
    w = np.exp(logw - logw.max())
    return w / w.sum()


def em_update(corr, energy_d, h_prev, sigma2: float, pilot_corr=None, pilot_energy=None):
    """One E step plus closed-form M step on block correlations."""
    if corr.shape[0] == 0:
        raise DecodingError("EM update on an empty list")
    if not sigma2 > 0:
        raise ParameterError(f"sigma2 must be positive, got {sigma2}")
    energy_d = np.broadcast_to(energy_d, corr.shape)
    w = posterior_weights(corr, energy_d, h_prev, sigma2)
    num = w @ corr
    den = w @ energy_d
    if pilot_corr is not None:
        num = num + pilot_corr
        den = den + pilot_energy
    return num / den


def argmax_first(scores) -> int:
    scores = np.asarray(scores)
    if scores.size == 0:
        raise DecodingError("decision on an empty list")
    return int(np.argmax(scores))


def list_correlations(cands: CandidateList, y_d, link: Link) -> np.ndarray:
    return inner(np.asarray(y_d)[None], link.data_symbols(cands.codewords))


def decide_coherent(cands: CandidateList, y: Frame, h, link: Link) -> np.ndarray:
    if cands.size == 0:
        raise DecodingError("decision on an empty list")
    corr = list_correlations(cands, y.data, link)
    return cands.codewords[argmax_first(scores_coherent(corr, h))]


def decide_pat(cands: CandidateList, y: Frame, est: ChannelEstimate, link: Link) -> np.ndarray:
    if cands.size == 0:
        raise DecodingError("decision on an empty list")
    corr = list_correlations(cands, y.data, link)
    return cands.codewords[argmax_first(scores_coherent(corr, est.h_hat))]


def decide_inlist_glrt(cands: CandidateList, y: Frame, est: ChannelEstimate,
                       link: Link) -> np.ndarray:
    """Full-block GLRT over the pilot-reinserted list.

    The estimate is not needed by the full-block score; it is accepted so the
    call mirrors :func:`decide_pat`.
    """
    if link.geom.n_p < 1:
        raise EstimatorUnavailableError("in-list GLRT needs n_p >= 1")
    if cands.size == 0:
        raise DecodingError("decision on an empty list")
    corr = list_correlations(cands, y.data, link)
    pilot_corr = inner(y.pilot, link.pilots)
    return cands.codewords[argmax_first(scores_inlist(corr, pilot_corr))]


def em_estimate(cands: CandidateList, y: Frame, est_prev: ChannelEstimate, link: Link,
                include_pilots: bool = False) -> ChannelEstimate:
    if cands.size == 0:
        raise DecodingError("EM update on an empty list")
    corr = list_correlations(cands, y.data, link)
    energy = _energy(link.data_symbols(cands.codewords))
    pc = pe = None
    if include_pilots:
        pc, pe = inner(y.pilot, link.pilots), _energy(link.pilots)
    h = em_update(corr, energy, est_prev.h_hat, est_prev.sigma2, pc, pe)
    return ChannelEstimate(h, est_prev.sigma2)


def pilot_estimate(y: Frame, link: Link, sigma2: float) -> ChannelEstimate:
    return estimate_channel(y.pilot, link.pilots, sigma2)


def decode_pat(y: Frame, link: Link, osd_cfg: OsdConfig, sigma2: float) -> np.ndarray:
    est = pilot_estimate(y, link, sigma2)
    cands = osd_list(compute_llrs(y.data, est, link.interleaver, link.puncture), link.G, osd_cfg)
    return decide_pat(cands, y, est, link)


def decode_inlist_glrt(y: Frame, link: Link, osd_cfg: OsdConfig, sigma2: float) -> np.ndarray:
    est = pilot_estimate(y, link, sigma2)
    cands = osd_list(compute_llrs(y.data, est, link.interleaver, link.puncture), link.G, osd_cfg)
    return decide_inlist_glrt(cands, y, est, link)


def decode_em(y: Frame, link: Link, osd_cfg: OsdConfig, em_cfg: EmConfig,
              sigma2: float) -> np.ndarray:
    est = pilot_estimate(y, link, sigma2)
    cands = osd_list(compute_llrs(y.data, est, link.interleaver, link.puncture), link.G, osd_cfg)
    for _ in range(em_cfg.m):
        est = em_estimate(cands, y, est, link, em_cfg.include_pilots)
        if em_cfg.rebuild_list:
            llrs = compute_llrs(y.data, est, link.interleaver, link.puncture)
            cands = osd_list(llrs, link.G, osd_cfg)
    return decide_pat(cands, y, est, link)


def decode_coherent(y: Frame, link: Link, osd_cfg: OsdConfig, h, sigma2: float) -> np.ndarray:
    est = ChannelEstimate(np.asarray(h), sigma2)
    cands = osd_list(compute_llrs(y.data, est, link.interleaver, link.puncture), link.G, osd_cfg)
    return decide_coherent(cands, y, h, link)


class FastDecoders:
    """The list decoders on the packed OSD engine, sharing work within a frame.

    ``decode`` returns packed codewords in the engine's interleaved domain,
    keyed by decoder name; results match the reference ``decode_*`` functions.
    """

    NAMES = ("pat-osd", "em-osd", "inlist-glrt-osd", "coherent-genie")

    def __init__(self, link: Link, osd_cfg: OsdConfig, em_cfg: EmConfig):
        self.link = link
        self.engine: OsdEngine = link.engine(osd_cfg)
        self.em_cfg = em_cfg
        self.energy_d = float(link.geom.n_d)
        self.pilot_energy = _energy(link.pilots)

    def _list(self, y_d, est: ChannelEstimate):
        llrs = compute_llrs(y_d, est, self.link.interleaver, self.link.puncture)
        packed = self.engine.run(llrs)
        return packed, packed.correlations(y_d)

    def decode(self, y: Frame, sigma2: float, names, h_true=None) -> dict:
        out = {}
        y_d = y.data
        if "coherent-genie" in names:
            packed, corr = self._list(y_d, ChannelEstimate(np.asarray(h_true), sigma2))
            out["coherent-genie"] = packed.packed_codeword(
                argmax_first(scores_coherent(corr, h_true)))
        pilot_names = [nm for nm in names if nm != "coherent-genie"]
        if not pilot_names:
            return out
        est = pilot_estimate(y, self.link, sigma2)
        packed, corr = self._list(y_d, est)
        if "pat-osd" in names:
            out["pat-osd"] = packed.packed_codeword(argmax_first(scores_coherent(corr, est.h_hat)))
        if "inlist-glrt-osd" in names:
            pilot_corr = inner(y.pilot, self.link.pilots)
            out["inlist-glrt-osd"] = packed.packed_codeword(
                argmax_first(scores_inlist(corr, pilot_corr)))
        if "em-osd" in names:
            cfg = self.em_cfg
            h = est.h_hat
            pc = pe = None
            if cfg.include_pilots:
                pc, pe = inner(y.pilot, self.link.pilots), self.pilot_energy
            for _ in range(cfg.m):
                h = em_update(corr, self.energy_d, h, sigma2, pc, pe)
                if cfg.rebuild_list:
                    packed, corr = self._list(y_d, ChannelEstimate(h, sigma2))
            out["em-osd"] = packed.packed_codeword(argmax_first(scores_coherent(corr, h)))
        return out
