"""RCUs achievability and metaconverse bounds with i.i.d. QPSK inputs.

For every decoding metric used here, the log-metric of a QPSK block ``x``
(constant energy) is, up to terms that cancel in the information density,

    f(S) = gamma * |S|^2 + Re(conj(beta) * S),    S = <y, x>.

The generalized information density of one block is therefore
``f(S_x) - log E[exp(f(S_Xbar))]`` with ``Xbar`` uniform over the QPSK
sequences of the block. That inner expectation is computed

* exactly by enumeration when the block alphabet has at most 4**8 entries,
* exactly in product form when ``gamma == 0``,
* otherwise by importance sampling from a mixture of tilted product
  distributions. The mixture follows the Gaussian (Hubbard-Stratonovich)
  representation ``exp(gamma |S|^2) = E_Z[exp(2 sqrt(gamma) Re(conj(Z) S))]``:
  each component is the exact conditional law of ``Xbar`` given one value
  of ``Z``, with ``Z`` placed on the ridge of the integrand along a set of
  directions. A uniform component keeps the weights bounded.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from itertools import product

import numpy as np
from scipy.special import logsumexp

from ._kernels import mixture_importance
from .errors import ParameterError
from .phy import PILOT_SYMBOL, SQRT2, FrameGeometry, complex_normal, sigma2_from_esn0_db
from .rng import bounds_stream, philox

EXHAUSTIVE_LIMIT = 4**8
Z95 = 1.959963984540054
DEFAULT_S_GRID = (0.5, 0.75, 1.0, 1.5, 2.0)
_QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / SQRT2


class BoundMetricKind(Enum):
    NONCOHERENT_ML = "noncoherent-ml"
    PAT_ML = "pat-ml"
    PAT_SNN = "pat-snn"

    @property
    def uses_pilots(self) -> bool:
        return self is not BoundMetricKind.NONCOHERENT_ML


@dataclass(frozen=True)
class DensitySample:
    value: float


@dataclass(frozen=True)
class BoundResult:
    epsilon: float
    half_width: float
    s_or_lambda: float
    samples: int
    n_inner: int = 0


def _logcosh(x):
    ax = np.abs(x)
    return ax + np.log1p(np.exp(-2.0 * ax)) - math.log(2.0)


def _log_mgf_symbols(u, y):
    """``sum_j log E[exp(Re(conj(u) y_j conj(Xbar_j)))]`` for uniform QPSK ``Xbar_j``.

    ``u`` broadcasts against ``y[..., :1]``; the sum runs over the last axis.
    """
    v = np.conj(u) * y / SQRT2
    return np.sum(_logcosh(v.real) + _logcosh(v.imag), axis=-1)


def _f(S, gamma, beta):
    return gamma * (S.real**2 + S.imag**2) + (np.conj(beta) * S).real


def qpsk_sequences(m: int) -> np.ndarray:
    """All ``4**m`` QPSK sequences of length ``m``."""
    return np.array(list(product(_QPSK, repeat=m)), dtype=np.complex128).reshape(-1, m)


def log_inner_exhaustive(y, gamma, beta, chunk: int = 256):
    """Exact ``log E[exp(f(<y, Xbar>))]`` by enumeration; rows of ``y`` are blocks."""
    y = np.atleast_2d(y)
    rows, m = y.shape
    seqs = np.conj(qpsk_sequences(m)).T
    gamma = np.broadcast_to(gamma, (rows,))
    beta = np.broadcast_to(beta, (rows,))
    out = np.empty(rows)
    for a in range(0, rows, chunk):
        b = min(a + chunk, rows)
        S = y[a:b] @ seqs
        out[a:b] = logsumexp(_f(S, gamma[a:b, None], beta[a:b, None]), axis=1)
    return out - m * math.log(4.0)


def log_inner_product_form(y, beta):
    """Exact inner expectation for ``gamma == 0``: the metric factorizes per symbol."""
    y = np.atleast_2d(y)
    return _log_mgf_symbols(np.asarray(beta)[:, None], y)


def log_inner_importance(y, gamma, beta, n_inner: int, rng: np.random.Generator,
                         n_dirs: int = 32, uniform_weight: float = 0.1, chunk: int = 128):
    """Importance-sampling estimate of ``log E[exp(f(<y, Xbar>))]`` (see module notes)."""
    y = np.atleast_2d(np.asarray(y, dtype=np.complex128))
    rows, m = y.shape
    gamma = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (rows,))
    beta = np.broadcast_to(np.asarray(beta, dtype=np.complex128), (rows,))
    theta = 2 * np.pi * np.arange(n_dirs) / n_dirs
    rot = np.exp(-1j * theta)
    out = np.empty(rows)
    for a in range(0, rows, chunk):
        b = min(a + chunk, rows)
        yc, gc, bc = y[a:b], gamma[a:b], beta[a:b]
        # ridge of the Z-integrand along each direction, in the u = beta + 2 sqrt(gamma) Z plane
        proj = rot[None, :, None] * yc[:, None, :]
        g = np.sum(np.abs(proj.real) + np.abs(proj.imag), axis=-1) / SQRT2
        rho = (bc[:, None] * rot[None, :]).real + 2 * gc[:, None] * g
        rho = np.maximum(rho, 0.0)
        u = rho * np.exp(1j * theta)[None, :]
        A = _log_mgf_symbols(u[..., None], yc[:, None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            ridge = np.where(gc[:, None] > 0,
                             A - np.abs(u - bc[:, None]) ** 2 / (4 * gc[:, None]), A)
        log_pi = ridge - logsumexp(ridge, axis=1, keepdims=True) + math.log1p(-uniform_weight)
        # component 0 is the uniform law (u = 0, A = 0)
        u_all = np.concatenate([np.zeros((b - a, 1)), u], axis=1)
        A_all = np.concatenate([np.zeros((b - a, 1)), A], axis=1)
        logpi_all = np.concatenate([np.full((b - a, 1), math.log(uniform_weight)), log_pi], axis=1)
        cum = np.cumsum(np.exp(logpi_all), axis=1)
        u_comp = rng.random((b - a, n_inner))
        u_sym = rng.random((b - a, n_inner, m, 2))
        out[a:b] = mixture_importance(yc, np.ascontiguousarray(gc), np.ascontiguousarray(bc),
                                      u_all, A_all, logpi_all, cum, u_comp, u_sym)
    return out


def log_inner_expectation(y, gamma, beta, n_inner: int = 512, rng=None, method: str = "auto"):
    """Dispatch between the exact and importance-sampled inner expectations."""
    y = np.atleast_2d(y)
    rows, m = y.shape
    gamma = np.broadcast_to(np.asarray(gamma, dtype=np.float64), (rows,))
    beta = np.broadcast_to(np.asarray(beta, dtype=np.complex128), (rows,))
    if method == "auto":
        if np.all(gamma == 0):
            method = "product"
        elif 4**m <= EXHAUSTIVE_LIMIT:
            method = "exhaustive"
        else:
            method = "importance"
    if method == "product":
        if np.any(gamma != 0):
            raise ParameterError("product form needs gamma == 0")
        return log_inner_product_form(y, beta)
    if method == "exhaustive":
        return log_inner_exhaustive(y, gamma, beta)
    if method == "importance":
        if n_inner < 1:
            raise ParameterError(f"n_inner must be >= 1, got {n_inner}")
        if rng is None:
            raise ParameterError("importance sampling needs a random stream")
        return log_inner_importance(y, gamma, beta, n_inner, rng)
    raise ParameterError(f"unknown inner method {method!r}")


@dataclass
class OuterDraws:
    """Channel outputs of ``n`` frames, block-shaped, plus the transmitted data."""

    x: np.ndarray
    y: np.ndarray
    h_hat: np.ndarray | None
    sigma2: float


def draw_outer(kind: BoundMetricKind, geom: FrameGeometry, esn0_db: float, n: int,
               rng: np.random.Generator) -> OuterDraws:
    """Frames with i.i.d. uniform QPSK data and pilots inside each block for PAT kinds."""
    sigma2 = sigma2_from_esn0_db(esn0_db)
    m = geom.n_d if kind.uses_pilots else geom.n_c
    idx = rng.integers(0, 4, (n, geom.ell, m))
    x = _QPSK[idx]
    h = complex_normal(rng, (n, geom.ell))
    y = h[..., None] * x + complex_normal(rng, (n, geom.ell, m), sigma2)
    h_hat = None
    if kind.uses_pilots:
        if geom.n_p < 1:
            raise ParameterError("pilot-assisted bounds need n_p >= 1")
        y_p = h[..., None] * PILOT_SYMBOL + complex_normal(rng, (n, geom.ell, geom.n_p), sigma2)
        h_hat = np.sum(y_p * np.conj(PILOT_SYMBOL), axis=-1) / geom.n_p
    return OuterDraws(x, y, h_hat, sigma2)


def metric_coefficients(kind: BoundMetricKind, s: float, draws: OuterDraws, geom: FrameGeometry):
    """``(gamma, beta)`` of the block log-metric raised to the power ``s``."""
    sigma2 = draws.sigma2
    if kind is BoundMetricKind.NONCOHERENT_ML:
        gamma = np.full(draws.y.shape[:2], s / (sigma2 * (sigma2 + geom.n_c)))
        return gamma, np.zeros(draws.y.shape[:2], dtype=np.complex128)
    if kind is BoundMetricKind.PAT_SNN:
        # exp(-||y - h_hat x||^2 / sigma2): the 1/sigma2 scale keeps the optimal s near 1
        return np.zeros(draws.y.shape[:2]), 2.0 * s * draws.h_hat / sigma2
    # channel law given the pilot estimate: H | h_hat ~ CN(mu, v)
    n_p, d = geom.n_p, geom.n_d
    mu = draws.h_hat / (1.0 + sigma2 / n_p)
    v = sigma2 / (n_p + sigma2)
    gamma = np.full(draws.y.shape[:2], s * v / (sigma2 * (sigma2 + v * d)))
    beta = s * 2.0 * mu / (sigma2 + v * d)
    return gamma, beta


def info_densities(kind: BoundMetricKind, s: float, draws: OuterDraws, geom: FrameGeometry,
                   n_inner: int = 512, inner_rng=None, method: str = "auto") -> np.ndarray:
    """Frame-level ``sum_i i_s(x_i, y_i)`` for every outer draw."""
    if not s > 0:
        raise ParameterError(f"s must be positive, got {s}")
    gamma, beta = metric_coefficients(kind, s, draws, geom)
    S = np.sum(draws.y * np.conj(draws.x), axis=-1)
    num = _f(S, gamma, beta)
    n, ell, m = draws.y.shape
    den = log_inner_expectation(draws.y.reshape(n * ell, m), gamma.reshape(-1), beta.reshape(-1),
                                n_inner, inner_rng, method).reshape(n, ell)
    return np.sum(num - den, axis=-1)


def sample_info_density(kind: BoundMetricKind, s: float, geom: FrameGeometry, esn0_db: float,
                        rng: np.random.Generator, n_inner: int = 512) -> DensitySample:
    if n_inner < 1:
        raise ParameterError(f"n_inner must be >= 1, got {n_inner}")
    draws = draw_outer(kind, geom, esn0_db, 1, rng)
    return DensitySample(float(info_densities(kind, s, draws, geom, n_inner, rng)[0]))


def rcus_threshold(k_bits: float) -> float:
    """``ln(2**k - 1)``."""
    return k_bits * math.log(2.0) + math.log1p(-(2.0 ** -k_bits))


def _rcus_terms(dens, thr):
    return np.exp(-np.maximum(dens - thr, 0.0))


def rcus_epsilon(kind: BoundMetricKind, geom: FrameGeometry, esn0_db: float, R: float,
                 s_grid=DEFAULT_S_GRID, n_outer: int = 10_000, n_inner: int = 512,
                 rng: np.random.Generator | None = None, refine: int = 6) -> BoundResult:
    """``inf_s E[exp(-[sum_i i_s - ln(2^(R n_c ell) - 1)]^+)]``.

    The same outer frames and inner random stream serve every ``s``; the
    grid minimum is refined by golden-section search between its neighbours.
    """
    if not R > 0:
        raise ParameterError(f"rate must be positive, got {R}")
    s_grid = sorted(float(s) for s in s_grid)
    if not s_grid or s_grid[0] <= 0:
        raise ParameterError("s_grid must be a nonempty list of positive values")
    if n_outer < 2 or n_inner < 1:
        raise ParameterError("need n_outer >= 2 and n_inner >= 1")
    rng = rng if rng is not None else np.random.default_rng()
    draws = draw_outer(kind, geom, esn0_db, n_outer, rng)
    inner_seed = int(rng.integers(0, 2**63))
    thr = rcus_threshold(R * geom.ell * geom.n_c)
    cache = {}

    def evaluate(s):
        if s not in cache:
            inner = philox(inner_seed)
            terms = _rcus_terms(info_densities(kind, s, draws, geom, n_inner, inner), thr)
            cache[s] = (float(terms.mean()), float(Z95 * terms.std(ddof=1) / math.sqrt(n_outer)))
        return cache[s][0]

    values = [evaluate(s) for s in s_grid]
    i = int(np.argmin(values))
    if refine and len(s_grid) > 1:
        lo = s_grid[max(i - 1, 0)]
        hi = s_grid[min(i + 1, len(s_grid) - 1)]
        phi = (math.sqrt(5) - 1) / 2
        a, b = lo, hi
        c, d = b - phi * (b - a), a + phi * (b - a)
        for _ in range(refine):
            if evaluate(c) < evaluate(d):
                b, d = d, c
                c = b - phi * (b - a)
            else:
                a, c = c, d
                d = a + phi * (b - a)
    s_best = min(cache, key=lambda s: cache[s][0])
    eps, hw = cache[s_best]
    return BoundResult(min(max(eps, 0.0), 1.0), hw, s_best, n_outer, n_inner)


def metaconverse_candidates(dens) -> tuple[np.ndarray, np.ndarray]:
    """``(lambda, P[sum i_1 <= lambda])`` at the points where the empirical infimum is attained."""
    dens = np.sort(np.asarray(dens, dtype=np.float64))
    n = dens.size
    lam = np.concatenate([[0.0], dens[dens >= 0]])
    cdf = np.searchsorted(dens, lam, side="right") / n
    return lam, cdf


def metaconverse_rate(eps: float, dens, blocklength: int) -> float:
    """``R_mc(eps)`` in nats per channel use on the empirical law of the density."""
    lam, cdf = metaconverse_candidates(dens)
    gap = cdf - eps
    ok = gap > 0
    if not np.any(ok):
        return math.inf
    return float(np.min(lam[ok] - np.log(gap[ok])) / blocklength)


def metaconverse_from_samples(dens, k_bits: float) -> tuple[float, float, float]:
    """Smallest ``eps`` with ``R_mc(eps) >= k_bits ln 2 / n``: ``(eps, half_width, lambda*)``.

    ``R_mc(eps) >= R`` iff ``eps >= P[sum i_1 <= lambda] - exp(lambda - k ln 2)`` for all
    ``lambda >= 0``, so the boundary is a maximum over the candidate points.
    """
    lam, cdf = metaconverse_candidates(dens)
    gap = cdf - np.exp(lam - k_bits * math.log(2.0))
    j = int(np.argmax(gap))
    eps = max(float(gap[j]), 0.0)
    return eps, wilson_half_width(cdf[j], np.asarray(dens).size), float(lam[j])


def wilson_half_width(p: float, n: int) -> float:
    """Largest distance from ``p`` to a 95% Wilson score interval endpoint."""
    z2 = Z95 * Z95
    centre = (p + z2 / (2 * n)) / (1 + z2 / n)
    half = Z95 * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n)
    return float(max(centre + half - p, p - (centre - half)))


def metaconverse_epsilon(geom: FrameGeometry, esn0_db: float, R: float, n_samples: int = 10_000,
                         n_inner: int = 512, rng: np.random.Generator | None = None) -> BoundResult:
    """Lower bound on the error probability of any code at rate ``R`` (bits per channel use)."""
    if not R > 0:
        raise ParameterError(f"rate must be positive, got {R}")
    if n_samples < 2:
        raise ParameterError("need at least two samples")
    rng = rng if rng is not None else np.random.default_rng()
    kind = BoundMetricKind.NONCOHERENT_ML
    nc_geom = FrameGeometry(geom.ell, geom.n_c, 0)
    draws = draw_outer(kind, nc_geom, esn0_db, n_samples, rng)
    inner = philox(int(rng.integers(0, 2**63)))
    dens = info_densities(kind, 1.0, draws, nc_geom, n_inner, inner)
    eps, hw, lam = metaconverse_from_samples(dens, R * geom.ell * geom.n_c)
    return BoundResult(min(eps, 1.0), hw, lam, n_samples, n_inner)


BOUNDS_HEADER = ("snr_db", "kind", "epsilon", "half_width", "s_or_lambda", "n_outer", "n_inner")
_STREAM_OF = {"metaconverse": 0, BoundMetricKind.NONCOHERENT_ML.value: 1,
              BoundMetricKind.PAT_ML.value: 2, BoundMetricKind.PAT_SNN.value: 3}


@dataclass(frozen=True)
class BoundsConfig:
    ell: int = 4
    n_c: int = 13
    n_p: int = 2
    k: int = 32
    snr_db: tuple = ()
    kinds: tuple = ("metaconverse", "noncoherent-ml", "pat-ml")
    s_grid: tuple = DEFAULT_S_GRID
    n_outer: int = 10_000
    n_inner: int = 512
    master_seed: int = 1

    def __post_init__(self):
        object.__setattr__(self, "snr_db", tuple(float(v) for v in self.snr_db))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        object.__setattr__(self, "s_grid", tuple(float(v) for v in self.s_grid))
        unknown = set(self.kinds) - set(_STREAM_OF)
        if unknown:
            raise ParameterError(f"unknown bound kinds {sorted(unknown)}")
        if not self.snr_db:
            raise ParameterError("bounds need at least one SNR")
        self.geometry
        if self.n_p < 1 and set(self.kinds) & {k.value for k in BoundMetricKind if k.uses_pilots}:
            raise ParameterError("pilot-assisted bounds need n_p >= 1")
        if self.k < 1 or self.n_outer < 2 or self.n_inner < 1:
            raise ParameterError("need k >= 1, n_outer >= 2 and n_inner >= 1")

    @property
    def geometry(self) -> FrameGeometry:
        return FrameGeometry(self.ell, self.n_c, self.n_p)

    @property
    def rate(self) -> float:
        return self.k / (self.ell * self.n_c)


@dataclass(frozen=True)
class BoundRow:
    snr_db: float
    kind: str
    result: BoundResult


def run_bounds(cfg: BoundsConfig, progress=None) -> list[BoundRow]:
    """Evaluate every requested bound at every SNR; each (SNR, kind) owns one stream."""
    rows = []
    geom = cfg.geometry
    for i, snr in enumerate(cfg.snr_db):
        for kind in cfg.kinds:
            rng = bounds_stream(cfg.master_seed, i, _STREAM_OF[kind])
            if kind == "metaconverse":
                res = metaconverse_epsilon(geom, snr, cfg.rate, cfg.n_outer, cfg.n_inner, rng)
            else:
                res = rcus_epsilon(BoundMetricKind(kind), geom, snr, cfg.rate, cfg.s_grid,
                                   cfg.n_outer, cfg.n_inner, rng)
            rows.append(BoundRow(snr, kind, res))
            if progress is not None:
                progress(rows[-1])
    return rows


def bounds_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BOUNDS_HEADER)
    for r in rows:
        res = r.result
        w.writerow([repr(r.snr_db), r.kind, repr(res.epsilon), repr(res.half_width),
                    repr(res.s_or_lambda), res.samples, res.n_inner])
    return buf.getvalue()
