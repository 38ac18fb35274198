import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fdsec import channels, rates
from fdsec import surrogates as sg
from fdsec.config import small_cell_default

pos = st.floats(min_value=1e-3, max_value=1e3)


@given(s0=pos, t0=st.floats(1.0, 20.0), s=pos, t=st.floats(1.0, 20.0))
@settings(max_examples=200, deadline=None)
def test_rate_minorant_coeffs_bound_direction(s0, t0, s, t):
    a, b, c = sg.minorant_coeffs(s0, t0)
    assert b >= 0 and c >= 0
    assert math.log1p(s) / t >= a - b / s - c * t - 1e-9


def test_rate_minorant_coeffs_reference_values():
    a, b, c = sg.minorant_coeffs(1.0, 1.0)
    assert a == pytest.approx(2 * math.log(2) + 0.5, rel=1e-12)
    assert b == pytest.approx(0.5, rel=1e-12)
    assert c == pytest.approx(math.log(2), rel=1e-12)


@given(s0=pos, t0=st.floats(1.0, 20.0))
@settings(max_examples=100, deadline=None)
def test_rate_minorant_tight_at_expansion(s0, t0):
    a, b, c = sg.minorant_coeffs(s0, t0)
    assert a - b / s0 - c * t0 == pytest.approx(math.log1p(s0) / t0, rel=1e-11)


def test_rate_minorant_rejects_nonpositive_inputs():
    with pytest.raises(ValueError):
        sg.minorant_coeffs(0.0, 1.0)
    with pytest.raises(ValueError):
        sg.minorant_coeffs(1.0, -1.0)


@given(x0=st.floats(0, 1e3), x=st.floats(0, 1e3))
@settings(max_examples=200, deadline=None)
def test_log_tangent_is_global_majorant(x0, x):
    a, b = sg.log_tangent_coeffs(x0)
    assert b > 0
    assert math.log1p(x) <= a + b * x + 1e-9


def test_log_tangent_reference_values():
    assert sg.log_tangent_coeffs(0.0) == (0.0, 1.0)
    a, b = sg.log_tangent_coeffs(1.0)
    assert a == pytest.approx(math.log(2) - 0.5, rel=1e-12)
    assert b == pytest.approx(0.5, rel=1e-12)
    with pytest.raises(ValueError):
        sg.log_tangent_coeffs(-0.5)


def test_ratio_upper_bound_hand_value():
    # expand at (2, 4), evaluate at (3, 5): 0.5 * (9/8 + 2/6)
    val = sg.ratio_upper_value(3.0, 5.0, 2.0, 4.0)
    assert val == pytest.approx(0.5 * (9.0 / 8.0 + 2.0 / 6.0), rel=1e-12)
    assert val >= 3.0 / 5.0


@given(
    b0=st.floats(1e-3, 1e2),
    a0=st.floats(1.01, 10.0),
    b=st.floats(1e-3, 1e2),
    a=st.floats(1.01, 10.0),
)
@settings(max_examples=200, deadline=None)
def test_ratio_upper_bound_direction_and_tightness(b0, a0, b, a):
    if 2 * a - a0 <= 1e-6:
        return
    assert sg.ratio_upper_value(b, a, b0, a0) >= b / a - 1e-12
    assert sg.ratio_upper_value(b0, a0, b0, a0) == pytest.approx(b0 / a0, rel=1e-12)


# ---------------------------------------------------------------------------
# Group expansions and full surrogate evaluation.


@pytest.fixture(scope="module")
def layout_and_expansion():
    cfg = small_cell_default(seed=7)
    _, ch0 = channels.generate(cfg)
    ch = ch0.normalized()
    lays = sg.proposed_layouts(ch, cfg)
    rng = np.random.default_rng(1)
    k, l, nt = cfg.n_dl, cfg.n_ul, cfg.n_tx
    w = 0.3 * (rng.standard_normal((k, nt)) + 1j * rng.standard_normal((k, nt)))
    v = 0.1 * (rng.standard_normal((nt, nt)) + 1j * rng.standard_normal((nt, nt)))
    rho = rng.uniform(0.1, 0.6, l)
    exp = sg.expand_group(lays[0], w, v, rho, 2.3, beta_dl=np.ones(k), beta_ul=np.ones(l))
    return cfg, lays[0], exp, rng


def test_expansion_phase_rotation_preserves_gains(layout_and_expansion):
    _, lay, exp, _ = layout_and_expansion
    for k in range(lay.n_dl):
        z = lay.h[k].conj() @ exp.w[k]
        assert abs(z.imag) <= 1e-9 * abs(z)
        assert z.real > 0
        assert exp.re_hw[k] == pytest.approx(abs(z), rel=1e-12)


def test_expansion_rejects_zero_beam():
    cfg = small_cell_default(seed=7)
    _, ch = channels.generate(cfg)
    lay = sg.proposed_layouts(ch.normalized(), cfg)[0]
    w = np.zeros((lay.n_dl, cfg.n_tx), dtype=complex)
    with pytest.raises(sg.InvalidExpansionError):
        sg.expand_group(lay, w, None, np.ones(lay.n_ul), 2.0)


def test_expansion_rejects_zero_uplink_amplitude(layout_and_expansion):
    _, lay, exp, _ = layout_and_expansion
    with pytest.raises(sg.InvalidExpansionError):
        sg.expand_group(lay, exp.w, exp.v, np.zeros(lay.n_ul), 2.0)


def test_expansion_floors_uplink_amplitudes(layout_and_expansion):
    _, lay, exp, _ = layout_and_expansion
    tiny = np.full(lay.n_ul, 1e-12)
    floored = sg.expand_group(lay, exp.w, exp.v, tiny, 2.0, rho_floor=1e-4)
    assert np.all(floored.rho == 1e-4)


def test_decoding_chain_curvature_matrices_psd(layout_and_expansion):
    _, lay, exp, _ = layout_and_expansion
    assert exp.omega_min_eig >= -1e-10
    for om in exp.omega:
        assert np.linalg.eigvalsh(0.5 * (om + om.conj().T)).min() >= -1e-10


def test_dl_surrogate_tight_and_minorant(layout_and_expansion):
    _, lay, exp, rng = layout_and_expansion
    for k in range(lay.n_dl):
        exact = math.log1p(exp.sinr_dl[k]) / exp.alpha
        val = sg.dl_rate_surrogate(lay, exp, exp.w, exp.v, exp.rho, exp.alpha, k)
        assert val == pytest.approx(exact, abs=1e-10)
    for _ in range(200):
        w = exp.w + 0.15 * (rng.standard_normal(exp.w.shape) + 1j * rng.standard_normal(exp.w.shape))
        v = exp.v + 0.05 * (rng.standard_normal(exp.v.shape) + 1j * rng.standard_normal(exp.v.shape))
        rho = np.abs(exp.rho + 0.1 * rng.standard_normal(exp.rho.shape))
        alpha = float(rng.uniform(1.5, 3.5))
        for k in range(lay.n_dl):
            re_hw = float(np.real(lay.h[k].conj() @ w[k]))
            if re_hw <= 0:
                continue
            phi = rates.dl_interference(lay.h, w, v, rho, lay.f, lay.noise)[k]
            exact = math.log1p(re_hw**2 / phi) / alpha
            val = sg.dl_rate_surrogate(lay, exp, w, v, rho, alpha, k)
            assert val <= exact + 1e-9


def test_ul_surrogate_tight_and_minorant(layout_and_expansion):
    _, lay, exp, rng = layout_and_expansion
    for l in range(lay.n_ul):
        val = sg.ul_rate_surrogate(lay, exp, exp.w, exp.v, exp.rho, exp.alpha, l)
        assert val == pytest.approx(exp.rate_ul[l], abs=1e-10)
    for _ in range(200):
        w = exp.w + 0.15 * (rng.standard_normal(exp.w.shape) + 1j * rng.standard_normal(exp.w.shape))
        v = exp.v + 0.05 * (rng.standard_normal(exp.v.shape) + 1j * rng.standard_normal(exp.v.shape))
        rho = np.abs(exp.rho + 0.1 * rng.standard_normal(exp.rho.shape)) + 1e-6
        alpha = float(rng.uniform(1.5, 3.5))
        sinr = rates.ul_sinrs(lay.g, rho, w, v, lay.g_si, lay.sigma_si, lay.noise)
        for l in range(lay.n_ul):
            val = sg.ul_rate_surrogate(lay, exp, w, v, rho, alpha, l)
            assert val <= math.log1p(sinr[l]) / alpha + 1e-9


def test_eve_stat_surrogates_tight_and_minorant(layout_and_expansion):
    _, lay, exp, rng = layout_and_expansion
    for m in range(lay.n_eves):
        psi0, chi0 = rates.eve_statistic_denominators(
            lay.h_bar[m], lay.g_bar[m], exp.w, exp.v, exp.rho
        )
        for k in range(lay.n_dl):
            val = sg.eve_dl_stat_surrogate(lay, exp, exp.w, exp.v, exp.rho, m, k)
            assert val == pytest.approx(float(psi0[k]), rel=1e-10)
        for l in range(lay.n_ul):
            val = sg.eve_ul_stat_surrogate(lay, exp, exp.w, exp.v, exp.rho, m, l)
            assert val == pytest.approx(float(chi0[l]), rel=1e-10)
    for _ in range(200):
        w = exp.w + 0.2 * (rng.standard_normal(exp.w.shape) + 1j * rng.standard_normal(exp.w.shape))
        v = exp.v + 0.1 * (rng.standard_normal(exp.v.shape) + 1j * rng.standard_normal(exp.v.shape))
        rho = np.abs(exp.rho + 0.2 * rng.standard_normal(exp.rho.shape))
        m = int(rng.integers(lay.n_eves))
        psi, chi = rates.eve_statistic_denominators(lay.h_bar[m], lay.g_bar[m], w, v, rho)
        k = int(rng.integers(lay.n_dl))
        assert sg.eve_dl_stat_surrogate(lay, exp, w, v, rho, m, k) <= float(psi[k]) + 1e-9 * abs(psi[k])
        l = int(rng.integers(lay.n_ul))
        assert sg.eve_ul_stat_surrogate(lay, exp, w, v, rho, m, l) <= float(chi[l]) + 1e-9 * abs(chi[l])


def test_power_surrogates_tight_and_majorant(layout_and_expansion):
    cfg, lay, exp, rng = layout_and_expansion
    _, ch0 = channels.generate(cfg)
    lays = sg.proposed_layouts(ch0.normalized(), cfg)
    exp2 = sg.expand_group(
        lays[1], exp.w * 0.8, exp.v, exp.rho * 0.9, 1.9, beta_dl=np.ones(lay.n_dl), beta_ul=np.ones(lay.n_ul)
    )
    # tight at the expansion
    val = sg.bs_power_surrogate(exp, exp.w, exp.v, exp2.w, exp2.v, exp2.alpha, exp2.alpha)
    exact = (1 - 1 / exp2.alpha) * rates.group_tx_power(exp.w, exp.v) + rates.group_tx_power(
        exp2.w, exp2.v
    ) / exp2.alpha
    assert val == pytest.approx(exact, rel=1e-12)
    assert sg.ul_power_surrogate(exp.rho[0], exp2.alpha, exp.rho[0], exp2.alpha) == pytest.approx(
        (1 - 1 / exp2.alpha) * exp.rho[0] ** 2, rel=1e-12
    )
    # majorant on random points
    for _ in range(200):
        w1 = exp.w + 0.3 * (rng.standard_normal(exp.w.shape) + 1j * rng.standard_normal(exp.w.shape))
        v1 = exp.v + 0.1 * (rng.standard_normal(exp.v.shape) + 1j * rng.standard_normal(exp.v.shape))
        w2 = exp2.w + 0.3 * (rng.standard_normal(exp.w.shape) + 1j * rng.standard_normal(exp.w.shape))
        alpha2 = float(rng.uniform(1.2, 4.0))
        sur = sg.bs_power_surrogate(exp, w1, v1, w2, exp2.v, alpha2, exp2.alpha)
        ex = (1 - 1 / alpha2) * rates.group_tx_power(w1, v1) + rates.group_tx_power(
            w2, exp2.v
        ) / alpha2
        assert sur >= ex - 1e-9
        rho = float(abs(exp.rho[0] + 0.3 * rng.standard_normal()))
        assert sg.ul_power_surrogate(rho, alpha2, exp.rho[0], exp2.alpha) >= (
            1 - 1 / alpha2
        ) * rho**2 - 1e-12


# ---------------------------------------------------------------------------
# Block emission.


def _tiny_builder(seed=3, include_eves=True):
    from fdsec.optimizer import _with_betas
    from tests.conftest import tiny_config

    cfg = tiny_config(seed=seed)
    _, ch = channels.generate(cfg)
    nch = ch.normalized()
    slots = sg.proposed_layouts(nch, cfg)
    rng = np.random.default_rng(0)
    exps = []
    for lay in slots:
        w = 0.3 * (rng.standard_normal((1, 2)) + 1j * rng.standard_normal((1, 2)))
        v = 0.05 * (rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))
        exps.append(sg.expand_group(lay, w, v, np.array([0.4]), 2.0))
    exps = _with_betas(slots, exps, 1e-9)
    builder = sg.SubproblemBuilder(
        slots, exps, cfg.p_bs_max, alpha_fixed=[None, None], include_eves=include_eves
    )
    return cfg, builder


def test_subproblem_dimensions_match_hand_count():
    # K = L = 1, M = 1, Nt = Nr = 2, both time shares free.
    _, builder = _tiny_builder()
    hs = builder.build()
    prog = hs.prog
    # variables: per group w (4) + v (8) + rho (1) + alpha (1) + inv_alpha (1)
    # + gamma/beta/raux (2 + 2 + 4 per group) + s_dl (1) + q_ul (1) + t_pow (1)
    # + slot-0 s_rho (1); plus the shared eta
    expected_vars = 1 + 2 * (4 + 8 + 1 + 1 + 1 + 8 + 1 + 1 + 1) + 1
    assert prog.n == expected_vars

    from fdsec.conic import _ConeRow, _LinearRow

    lin = sum(1 for b in prog.blocks if isinstance(b, _LinearRow))
    cones = sum(1 for b in prog.blocks if isinstance(b, _ConeRow))
    # linear: rho>=0 (2), alpha>1 (2), 2a-a0 margin (2), time split (1),
    # beam sign (2), trust (2), DL rate (2), UL rate (2), caps (4),
    # beta floors (4), BS power (1), slot-0 UL budget (1)
    assert lin == 2 + 2 + 2 + 1 + 2 + 2 + 2 + 2 + 4 + 4 + 1 + 1
    # cones: inv_alpha (2), DL interference (2), UL quadratic (2),
    # beta^2 (4), inverse-affine (4), eve DL (2), eve UL (2),
    # power epigraphs (2), slot-0 rho^2 (1), slot-1 UL budget (1)
    assert cones == 2 + 2 + 2 + 4 + 4 + 2 + 2 + 2 + 1 + 1


def test_expansion_embeds_feasibly():
    _, builder = _tiny_builder()
    hs = builder.build()
    x0 = builder.feasible_point(hs)
    assert hs.prog.max_violation(x0) <= 1e-12


def test_init_mode_builder_embeds_feasibly():
    _, builder = _tiny_builder(include_eves=False)
    hs = builder.build()
    x0 = builder.feasible_point(hs)
    assert hs.prog.max_violation(x0) <= 1e-12


def test_emitted_subproblem_solves_deterministically():
    _, builder = _tiny_builder()
    hs = builder.build()
    shift = builder.feasible_point(hs)
    a = hs.prog.solve(shift=shift)
    b = hs.prog.solve(shift=shift)
    assert a.status == b.status
    assert abs(a.objective - b.objective) <= 1e-9


def test_builder_requires_slacks_with_caps():
    cfg, builder = _tiny_builder()
    bad = [
        sg.expand_group(
            builder.slots[i], builder.exps[i].w, builder.exps[i].v, builder.exps[i].rho, 2.0
        )
        for i in (0, 1)
    ]
    with pytest.raises(sg.InvalidExpansionError):
        sg.SubproblemBuilder(builder.slots, bad, cfg.p_bs_max, alpha_fixed=[None, None])
