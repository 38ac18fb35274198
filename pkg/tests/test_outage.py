import math

import numpy as np
import pytest

from fdsec import outage, rates
from fdsec.surrogates import GroupLayout


def test_wilson_halfwidth_shrinks_with_samples():
    w1 = outage.wilson_halfwidth(0.5, 100)
    w2 = outage.wilson_halfwidth(0.5, 10_000)
    assert w2 < w1 < 0.2
    assert outage.wilson_halfwidth(0.0, 10_000) > 0


def scalar_layout(gain_eve=1e-2, noise=1.0):
    """Single beam, single-antenna eavesdropper, no interference."""
    return GroupLayout(
        h=np.ones((1, 1), dtype=complex),
        g=np.zeros((0, 1), dtype=complex),
        f=np.zeros((1, 0), dtype=complex),
        g_si=np.zeros((1, 1), dtype=complex),
        sigma_si=0.0,
        noise=noise,
        h_bar=np.array([gain_eve * np.eye(1)]),
        g_bar=np.zeros((1, 0)),
        ne=(1,),
        eps_dl=np.array([0.99]),
        eps_ul=np.zeros(0),
        p_ul=np.zeros(0),
        dl_refs=[(0, 0)],
        ul_refs=[],
    )


def test_empirical_outage_scalar_case_matches_exponential_cdf(rng):
    # One transmit antenna, one eavesdropper antenna, no interference: the
    # eavesdropper SINR is exponential, so the outage has a closed form.
    lay = scalar_layout(gain_eve=0.5, noise=1.0)
    w = np.array([[2.0 + 0.0j]])
    alpha = 1.7
    gamma = np.array([0.8])
    checks = outage.check_slot(
        lay, w, None, np.zeros(0), alpha, gamma, np.zeros(0), 20_000, rng
    )
    prob = checks[0].prob
    mean_sinr = 0.5 * abs(w[0, 0]) ** 2 / 1.0
    analytic = 1.0 - math.exp(-math.expm1(alpha * gamma[0]) / mean_sinr)
    assert abs(prob - analytic) <= 3.0 * checks[0].halfwidth
    # in the interference-free case the expected-value bound is valid
    emp = checks[0].eve_exceed[0]
    bound = checks[0].markov_bound[0]
    assert emp <= bound + 3.0 * outage.wilson_halfwidth(emp, 20_000)


def test_huge_cap_gives_probability_one(rng):
    lay = scalar_layout()
    checks = outage.check_slot(
        lay, np.array([[1.0 + 0j]]), None, np.zeros(0), 2.0, np.array([50.0]), np.zeros(0), 2000, rng
    )
    assert checks[0].prob == 1.0


def test_zero_cap_with_signal_gives_probability_zero(rng):
    lay = scalar_layout()
    checks = outage.check_slot(
        lay, np.array([[1.0 + 0j]]), None, np.zeros(0), 2.0, np.array([0.0]), np.zeros(0), 2000, rng
    )
    assert checks[0].prob <= 0.001


def test_more_eavesdroppers_loosen_the_per_eve_share():
    # epsilon^(1/M) grows with M, so the per-eavesdropper cap term shrinks
    eps = 0.99
    assert (1 - eps ** (1 / 1)) > (1 - eps ** (1 / 2)) > (1 - eps ** (1 / 4))


def test_empirical_outage_two_group_api(table1_cfg, table1_channels, rng):
    _, ch = table1_channels
    point = rates.DesignPoint(
        w=1e-3 * np.ones((2, table1_cfg.n_dl, table1_cfg.n_tx), dtype=complex),
        v=np.zeros((2, table1_cfg.n_tx, table1_cfg.n_tx), dtype=complex),
        rho=1e-3 * np.ones((2, table1_cfg.n_ul)),
        alpha=np.array([2.0, 2.0]),
        gamma_dl=np.full((2, table1_cfg.n_dl), 5.0),
        gamma_ul=np.full((2, table1_cfg.n_ul), 5.0),
    )
    report = outage.empirical_outage(point, ch, table1_cfg, 2000, rng)
    assert len(report.checks) == 2 * (table1_cfg.n_dl + table1_cfg.n_ul)
    assert report.all_ok()  # huge caps, tiny powers: outage never happens
    with pytest.raises(ValueError):
        outage.empirical_outage(point, ch, table1_cfg, 10, rng)


def test_markov_bound_check_structure(table1_cfg, table1_channels, rng):
    _, ch = table1_channels
    cfg = table1_cfg
    point = rates.DesignPoint(
        w=1e-3 * np.ones((2, cfg.n_dl, cfg.n_tx), dtype=complex),
        v=np.zeros((2, cfg.n_tx, cfg.n_tx), dtype=complex),
        rho=1e-3 * np.ones((2, cfg.n_ul)),
        alpha=np.array([2.0, 2.0]),
        gamma_dl=np.full((2, cfg.n_dl), 5.0),
        gamma_ul=np.full((2, cfg.n_ul), 5.0),
    )
    records = outage.markov_bound_check(point, ch, cfg, 2000, rng)
    assert len(records) == cfg.n_eves * 2 * (cfg.n_dl + cfg.n_ul)
    hw = outage.wilson_halfwidth(0.0, 2000)
    for rec in records:
        assert rec["kind"] in ("dl", "ul")
        assert rec["empirical"] == 0.0  # huge caps: no exceed events at all
        # ok reports exactly the stated comparison; with interference in the
        # expectation the bound value itself may go negative, so ok can be
        # False even at zero empirical probability
        assert rec["ok"] == (rec["empirical"] <= rec["bound"] + 3.0 * hw)


def test_sample_eve_channels_second_moments(table1_channels, rng):
    _, ch = table1_channels
    n = 4000
    acc_h = 0.0
    acc_g = 0.0
    for _ in range(n):
        samples = outage.sample_eve_channels(ch, rng)
        h0, g0 = samples[0]
        acc_h += np.abs(h0) ** 2
        acc_g += np.abs(g0[0, 0]) ** 2  # group 1, first UL user entries
    var_h = np.trace(ch.h_bar[0]).real / (ch.h_bar[0].shape[0] * ch.eve_antennas[0])
    assert np.mean(acc_h / n) == pytest.approx(var_h, rel=0.05)
    var_g = ch.g_bar[0, 0, 0] / ch.eve_antennas[0]
    assert np.mean(acc_g / n) == pytest.approx(var_g, rel=0.05)


def test_validator_consistent_with_exact_rates(table1_cfg, table1_channels):
    # the sampling core and the exact evaluator agree on one fixed draw
    _, ch = table1_channels
    cfg = table1_cfg
    rng = np.random.default_rng(0)
    point = rates.DesignPoint(
        w=0.2 * np.ones((2, cfg.n_dl, cfg.n_tx), dtype=complex),
        v=0.05 * np.stack([np.eye(cfg.n_tx, dtype=complex)] * 2),
        rho=0.3 * np.ones((2, cfg.n_ul)),
        alpha=np.array([2.0, 2.0]),
    )
    samples = outage.sample_eve_channels(ch, rng)
    for m, (h_eve, g_eve) in enumerate(samples):
        dl, ul = rates.eve_rates(point, h_eve, g_eve[0], 0, ch.noise_power)
        assert np.all(np.isfinite(dl)) and np.all(np.isfinite(ul))
        assert np.all(dl >= 0) and np.all(ul >= 0)
