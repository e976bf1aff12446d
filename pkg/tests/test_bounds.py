import math

import numpy as np
import pytest
from scipy.special import logsumexp

from pilotosd.bounds import (
    BoundMetricKind,
    BoundsConfig,
    bounds_csv,
    draw_outer,
    info_densities,
    log_inner_exhaustive,
    log_inner_expectation,
    log_inner_importance,
    metaconverse_epsilon,
    metaconverse_from_samples,
    metaconverse_rate,
    metric_coefficients,
    qpsk_sequences,
    rcus_epsilon,
    rcus_threshold,
    run_bounds,
    sample_info_density,
)
from pilotosd.errors import ParameterError
from pilotosd.phy import FrameGeometry

NC = BoundMetricKind.NONCOHERENT_ML
PML = BoundMetricKind.PAT_ML
SNN = BoundMetricKind.PAT_SNN


def coeffs(kind, geom, snr, n, s=1.0, seed=0):
    d = draw_outer(kind, geom, snr, n, np.random.default_rng(seed))
    g, b = metric_coefficients(kind, s, d, geom)
    m = d.y.shape[-1]
    return d.y.reshape(-1, m), g.reshape(-1), b.reshape(-1)


def test_exhaustive_two_symbols_is_average_over_16():
    rng = np.random.default_rng(0)
    y = rng.normal(size=(1, 2)) + 1j * rng.normal(size=(1, 2))
    gamma, beta = 0.3, 0.2 - 0.5j
    seqs = qpsk_sequences(2)
    assert seqs.shape == (16, 2)
    S = seqs.conj() @ y[0]
    direct = np.log(np.mean(np.exp(gamma * np.abs(S) ** 2 + np.real(np.conj(beta) * S))))
    assert log_inner_exhaustive(y, gamma, beta)[0] == pytest.approx(direct, rel=1e-12)


def test_product_form_equals_enumeration():
    y, _, b = coeffs(SNN, FrameGeometry(2, 7, 2), 6.0, 5)
    exact = log_inner_exhaustive(y, 0.0, b)
    prod = log_inner_expectation(y, np.zeros(len(y)), b, method="product")
    assert np.allclose(prod, exact, atol=1e-10)


@pytest.mark.parametrize("kind,geom", [(NC, FrameGeometry(2, 6, 0)), (PML, FrameGeometry(2, 8, 2))])
@pytest.mark.parametrize("snr", [0.0, 10.0, 25.0])
def test_importance_sampling_against_enumeration(kind, geom, snr):
    y, g, b = coeffs(kind, geom, snr, 40, s=1.5)
    exact = log_inner_exhaustive(y, g, b)
    est = log_inner_importance(y, g, b, 512, np.random.default_rng(1))
    err = est - exact
    assert abs(err.mean()) < 0.01
    assert np.abs(err).max() < 0.1


def test_importance_sampling_against_brute_force_m10():
    y, g, b = coeffs(NC, FrameGeometry(1, 10, 0), 12.0, 3)
    exact = np.concatenate([log_inner_exhaustive(y[i:i + 1], g[i], b[i], chunk=1)
                            for i in range(3)])
    est = log_inner_importance(y, g, b, 2048, np.random.default_rng(2))
    assert np.allclose(est, exact, atol=0.05)


def test_dispatch_picks_exact_methods():
    y, g, b = coeffs(NC, FrameGeometry(1, 4, 0), 5.0, 2)
    assert np.array_equal(log_inner_expectation(y, g, b), log_inner_exhaustive(y, g, b))
    with pytest.raises(ParameterError):
        log_inner_expectation(np.ones((1, 9)), 0.1, 0.0, method="importance")
    with pytest.raises(ParameterError):
        log_inner_expectation(y, g, b, method="product")


# exp(-i_1) has a finite second moment only when sigma2 exceeds n_c (NC-ML) or
# n_d - n_p (PAT-ML); -7 dB satisfies both, so the standard error is meaningful
@pytest.mark.parametrize("kind,geom", [(NC, FrameGeometry(2, 4, 0)), (PML, FrameGeometry(2, 5, 1))])
def test_change_of_measure_identity(kind, geom):
    n = 40_000
    d = draw_outer(kind, geom, -7.0, n, np.random.default_rng(3))
    v = np.exp(-info_densities(kind, 1.0, d, geom))
    se = v.std(ddof=1) / math.sqrt(n)
    assert abs(v.mean() - 1.0) < 3 * se


def test_density_vanishes_at_low_snr():
    geom = FrameGeometry(2, 5, 1)
    for kind in (NC, PML):
        d = draw_outer(kind, geom, -60.0, 200, np.random.default_rng(4))
        assert np.max(np.abs(info_densities(kind, 1.0, d, geom))) < 1e-3


def test_sample_info_density_is_finite():
    geom = FrameGeometry(4, 13, 2)
    for kind in BoundMetricKind:
        x = sample_info_density(kind, 1.0, geom, 8.0, np.random.default_rng(5), n_inner=64)
        assert math.isfinite(x.value)


@pytest.mark.parametrize("s,n_inner", [(0.0, 10), (-1.0, 10), (1.0, 0)])
def test_sample_info_density_errors(s, n_inner):
    with pytest.raises(ParameterError):
        sample_info_density(NC, s, FrameGeometry(2, 5, 0), 5.0, np.random.default_rng(0), n_inner)


def test_rcus_threshold():
    assert rcus_threshold(32) == pytest.approx(math.log(2**32 - 1), rel=1e-15)
    assert rcus_threshold(1) == pytest.approx(0.0, abs=1e-15)


def test_rcus_range_and_grid_choice():
    geom = FrameGeometry(2, 6, 1)
    res = rcus_epsilon(PML, geom, 4.0, 0.5, n_outer=400, rng=np.random.default_rng(6))
    assert 0 <= res.epsilon <= 1 and math.isfinite(res.half_width)
    assert res.samples == 400 and res.s_or_lambda > 0
    single = rcus_epsilon(PML, geom, 4.0, 0.5, s_grid=[res.s_or_lambda], n_outer=400,
                          rng=np.random.default_rng(6))
    assert single.epsilon == pytest.approx(res.epsilon)


def test_rcus_monotone_in_snr():
    geom = FrameGeometry(2, 6, 1)
    eps = [rcus_epsilon(NC, geom, snr, 0.5, n_outer=600, rng=np.random.default_rng(7))
           for snr in (0.0, 4.0, 8.0, 12.0)]
    for a, b in zip(eps, eps[1:]):
        assert b.epsilon <= a.epsilon + a.half_width + b.half_width


def test_rcus_high_snr_default_geometry():
    res = rcus_epsilon(SNN, FrameGeometry(4, 13, 2), 30.0, 32 / 52, n_outer=10_000,
                       rng=np.random.default_rng(8))
    assert res.epsilon < 1e-2


@pytest.mark.parametrize("kwargs", [dict(R=0.0), dict(s_grid=[]), dict(s_grid=[-1.0])])
def test_rcus_errors(kwargs):
    args = dict(kind=NC, geom=FrameGeometry(2, 5, 0), esn0_db=5.0, R=0.5)
    args.update(kwargs)
    with pytest.raises(ParameterError):
        rcus_epsilon(**args, n_outer=10, rng=np.random.default_rng(0))


def bisect_epsilon(dens, k_bits, n):
    """Smallest eps with R_mc(eps) >= k ln 2 / n, by bisection on R_mc."""
    target = k_bits * math.log(2) / n
    lo, hi = 0.0, 1.0
    if metaconverse_rate(0.0, dens, n) >= target:
        return 0.0
    for _ in range(60):
        mid = (lo + hi) / 2
        if metaconverse_rate(mid, dens, n) >= target:
            hi = mid
        else:
            lo = mid
    return hi


def test_metaconverse_closed_form_matches_bisection():
    rng = np.random.default_rng(9)
    for shift in (2.0, 5.0, 8.0):
        dens = rng.normal(shift, 2.0, 500)
        eps, hw, lam = metaconverse_from_samples(dens, 6)
        assert eps == pytest.approx(bisect_epsilon(dens, 6, 10), abs=1e-12)
        assert lam >= 0 and hw > 0


def test_metaconverse_rate_monotone():
    dens = np.random.default_rng(10).normal(3, 2, 300)
    rates = [metaconverse_rate(e, dens, 10) for e in np.linspace(0, 0.99, 50)]
    assert all(b >= a for a, b in zip(rates, rates[1:]))
    assert metaconverse_rate(1.0, dens, 10) == math.inf


def test_metaconverse_below_rcus():
    geom = FrameGeometry(2, 6, 0)
    mc = metaconverse_epsilon(geom, 6.0, 0.5, 2000, rng=np.random.default_rng(11))
    nc = rcus_epsilon(NC, geom, 6.0, 0.5, n_outer=2000, rng=np.random.default_rng(12))
    assert 0 <= mc.epsilon <= 1
    assert mc.epsilon <= nc.epsilon + mc.half_width + nc.half_width


def test_bounds_config_and_csv():
    cfg = BoundsConfig(ell=2, n_c=5, n_p=1, k=4, snr_db=(5,), n_outer=50, n_inner=16,
                       kinds=("metaconverse", "pat-snn"))
    rows = run_bounds(cfg)
    assert [r.kind for r in rows] == ["metaconverse", "pat-snn"]
    text = bounds_csv(rows)
    assert text.splitlines()[0] == "snr_db,kind,epsilon,half_width,s_or_lambda,n_outer,n_inner"
    assert run_bounds(cfg) == rows
    with pytest.raises(ParameterError):
        BoundsConfig(n_p=0, snr_db=(5,), kinds=("pat-ml",))
    with pytest.raises(ParameterError):
        BoundsConfig(snr_db=(5,), kinds=("shell",))
