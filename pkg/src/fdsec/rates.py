"""Exact rate and power expressions for any candidate design.

Everything here is plain evaluation (no approximation): downlink rates
with multiuser, artificial-noise and co-channel interference, uplink
rates under an MMSE receiver with successive interference cancellation,
eavesdropper rates for concrete or statistical eavesdropper channels,
and the transmit-power bookkeeping used by the feasibility checks.

Rates are in nats/s/Hz throughout; divide by ln 2 for bps/Hz.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channels import ChannelSet

NATS_TO_BPS = 1.0 / math.log(2.0)


@dataclass
class DesignPoint:
    """One full decision-variable set in the two-group layout.

    ``w[i, k]`` are beamformers, ``v[i]`` the artificial-noise shaping
    matrices (covariance v v^H), ``rho[i, l]`` uplink amplitudes (power
    rho^2), ``alpha[i]`` the inverse fractional times (tau = 1/alpha).
    ``gamma_*`` are the per-user eavesdropper-rate caps in nats and
    ``beta_*`` the associated eavesdropper-SINR slack variables.
    """

    w: np.ndarray
    v: np.ndarray
    rho: np.ndarray
    alpha: np.ndarray
    beta_dl: np.ndarray | None = None
    beta_ul: np.ndarray | None = None
    gamma_dl: np.ndarray | None = None
    gamma_ul: np.ndarray | None = None
    eta: float = 0.0

    @property
    def tau(self) -> np.ndarray:
        return 1.0 / np.asarray(self.alpha, dtype=float)

    def validate(self) -> None:
        if np.any(self.rho < 0):
            raise ValueError("uplink amplitudes must be nonnegative")
        if np.any(np.asarray(self.alpha) <= 1.0) or (1.0 / np.asarray(self.alpha)).sum() > 1.0 + 1e-9:
            raise ValueError("need alpha > 1 with 1/alpha summing to at most 1")
        for b in (self.beta_dl, self.beta_ul):
            if b is not None and np.any(np.asarray(b) <= 0):
                raise ValueError("eavesdropper-SINR slacks must be positive")


@dataclass
class RateReport:
    dl_rate: np.ndarray
    ul_rate: np.ndarray
    eve_dl_rate: np.ndarray
    eve_ul_rate: np.ndarray
    secrecy_dl: np.ndarray
    secrecy_ul: np.ndarray
    bs_power: float
    ul_power: np.ndarray


# ---------------------------------------------------------------------------
# Group-level numeric kernels (shared with the surrogate builder).


def dl_interference(h, w, v, rho, f, noise: float) -> np.ndarray:
    """Interference-plus-noise power at each DL user of one group.

    h, w: (K, Nt); v: (Nt, Nt) or None; rho: (L,); f: (K, L).
    """
    k = h.shape[0]
    out = np.full(k, float(noise))
    if k:
        prod = h.conj() @ w.T  # prod[k, j] = h_k^H w_j
        mui = np.abs(prod) ** 2
        np.fill_diagonal(mui, 0.0)
        out += mui.sum(axis=1)
        if v is not None:
            out += (np.abs(h.conj() @ v) ** 2).sum(axis=1)
        if rho.size:
            out += (np.abs(f) ** 2 * rho[None, :] ** 2).sum(axis=1)
    return out


def dl_signal(h, w) -> np.ndarray:
    """|h_k^H w_k|^2 for each DL user of one group."""
    if h.shape[0] == 0:
        return np.zeros(0)
    return np.abs(np.einsum("kn,kn->k", h.conj(), w)) ** 2


def si_covariance(w, v, g_si, sigma_si: float) -> np.ndarray:
    """Residual self-interference covariance seen by the BS receiver."""
    nr = g_si.shape[1]
    if sigma_si == 0.0 or (w.shape[0] == 0 and v is None):
        return np.zeros((nr, nr), dtype=complex)
    tx_cov = np.zeros((g_si.shape[0], g_si.shape[0]), dtype=complex)
    for wk in w:
        tx_cov += np.outer(wk, wk.conj())
    if v is not None:
        tx_cov += v @ v.conj().T
    return sigma_si * (g_si.conj().T @ tx_cov @ g_si)


def ul_covariance_chain(g, rho, w, v, g_si, sigma_si: float, noise: float) -> list[np.ndarray]:
    """Interference covariances Phi(l), l = 0..L, under successive decoding.

    Phi(l) collects the uplink users still undecoded at stage l (indices
    >= l), the residual self-interference and the receiver noise, so
    user l is decoded against Phi(l + 1) and Phi(0) contains everyone.
    """
    nr = g_si.shape[1]
    base = si_covariance(w, v, g_si, sigma_si) + noise * np.eye(nr)
    chain = [base]
    for l in range(g.shape[0] - 1, -1, -1):
        chain.append(chain[-1] + rho[l] ** 2 * np.outer(g[l], g[l].conj()))
    chain.reverse()
    return chain


def ul_sinrs(g, rho, w, v, g_si, sigma_si: float, noise: float) -> np.ndarray:
    """Post-cancellation SINR of each UL user of one group."""
    chain = ul_covariance_chain(g, rho, w, v, g_si, sigma_si, noise)
    out = np.zeros(g.shape[0])
    for l in range(g.shape[0]):
        out[l] = rho[l] ** 2 * np.real(g[l].conj() @ np.linalg.solve(chain[l + 1], g[l]))
    return out


def eve_exact_denominators(h_eve, g_eve, w, v, rho, noise: float) -> tuple[np.ndarray, np.ndarray]:
    """Interference-plus-noise at one eavesdropper for each DL/UL message.

    h_eve: (Nt, Ne) wiretap matrix; g_eve: (L, Ne) rows for the UL users.
    Returns (psi over DL users, chi over UL users), both including the
    Ne * noise term.
    """
    ne = h_eve.shape[1]
    beam_pow = (
        (np.abs(h_eve.conj().T @ w.T) ** 2).sum(axis=0) if w.shape[0] else np.zeros(0)
    )  # ||H^H w_j||^2 per beam j
    an_pow = float((np.abs(h_eve.conj().T @ v) ** 2).sum()) if v is not None else 0.0
    ul_pow = rho**2 * (np.abs(g_eve) ** 2).sum(axis=1) if rho.size else np.zeros(0)

    psi = beam_pow.sum() - beam_pow + an_pow + ul_pow.sum() + ne * noise
    chi = beam_pow.sum() + an_pow + (ul_pow.sum() - ul_pow) + ne * noise
    return psi, chi


def eve_statistic_denominators(h_bar_m, g_bar_m, w, v, rho) -> tuple[np.ndarray, np.ndarray]:
    """Expected interference at one eavesdropper, noise term excluded.

    Uses the second-order statistics h_bar (Nt x Nt) and g_bar (L,).
    """
    quad = np.array([np.real(wk.conj() @ h_bar_m @ wk) for wk in w]) if w.shape[0] else np.zeros(0)
    an = float(np.real(np.trace(v.conj().T @ h_bar_m @ v))) if v is not None else 0.0
    ul = rho**2 * g_bar_m if rho.size else np.zeros(0)
    psi_bar = quad.sum() - quad + an + ul.sum()
    chi_bar = quad.sum() + an + (ul.sum() - ul)
    return psi_bar, chi_bar


def group_tx_power(w, v) -> float:
    """Instantaneous BS transmit power: beams plus noise shaping."""
    p = float((np.abs(w) ** 2).sum()) if w.size else 0.0
    if v is not None:
        p += float((np.abs(v) ** 2).sum())
    return p


# ---------------------------------------------------------------------------
# Two-group API over DesignPoint + ChannelSet.


def group_dl_rates(point: DesignPoint, ch: ChannelSet, i: int) -> np.ndarray:
    phi = dl_interference(ch.h[i], point.w[i], point.v[i], point.rho[i], ch.f[i], ch.noise_power)
    sig = dl_signal(ch.h[i], point.w[i])
    return np.log1p(sig / phi) / point.alpha[i]


def group_ul_rates(point: DesignPoint, ch: ChannelSet, i: int) -> np.ndarray:
    sinr = ul_sinrs(
        ch.g[i], point.rho[i], point.w[i], point.v[i], ch.g_si, ch.sigma_si, ch.noise_power
    )
    return np.log1p(sinr) / point.alpha[i]


def dl_rate(point: DesignPoint, ch: ChannelSet, i: int, k: int) -> float:
    """Achievable rate of DL user (i, k) in nats/s/Hz."""
    return float(group_dl_rates(point, ch, i)[k])


def ul_rate(point: DesignPoint, ch: ChannelSet, i: int, l: int) -> float:
    """Achievable rate of UL user (i, l) after successive cancellation."""
    return float(group_ul_rates(point, ch, i)[l])


def eve_rates(
    point: DesignPoint,
    h_eve: np.ndarray,
    g_eve: np.ndarray,
    i: int,
    noise_power: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Rates one eavesdropper achieves against group i's DL and UL messages.

    h_eve is the sampled (Nt, Ne) wiretap matrix and g_eve the (L, Ne)
    uplink wiretap rows for this group.
    """
    psi, chi = eve_exact_denominators(
        h_eve, g_eve, point.w[i], point.v[i], point.rho[i], noise_power
    )
    sig_dl = (
        (np.abs(h_eve.conj().T @ point.w[i].T) ** 2).sum(axis=0)
        if point.w[i].size
        else np.zeros(0)
    )
    sig_ul = (
        point.rho[i] ** 2 * (np.abs(g_eve) ** 2).sum(axis=1) if point.rho[i].size else np.zeros(0)
    )
    return np.log1p(sig_dl / psi) / point.alpha[i], np.log1p(sig_ul / chi) / point.alpha[i]


def bs_power(point: DesignPoint) -> float:
    """Time-averaged BS transmit power over the two serving intervals."""
    tau = point.tau
    return float(sum(tau[i] * group_tx_power(point.w[i], point.v[i]) for i in range(2)))


def ul_power(point: DesignPoint) -> np.ndarray:
    """Time-averaged transmit power of each UL user."""
    return point.tau[:, None] * point.rho**2


def secrecy_rates(point: DesignPoint, ch: ChannelSet, eve_samples=None) -> RateReport:
    """Per-user secrecy rates, clipped at zero.

    With ``eve_samples`` (a sequence over eavesdroppers of
    ``(h_eve, g_eve_by_group)`` where ``g_eve_by_group`` is (2, L, Ne))
    the eavesdropper rates are evaluated on those concrete channels and
    the maximum over eavesdroppers is subtracted.  Without samples the
    design's own rate caps ``gamma_*`` stand in for the unknown
    eavesdropper rates.
    """
    k, l = ch.h.shape[1], ch.g.shape[1]
    own_dl = np.stack([group_dl_rates(point, ch, i) for i in range(2)])
    own_ul = np.stack([group_ul_rates(point, ch, i) for i in range(2)])

    if eve_samples is None:
        if point.gamma_dl is None or point.gamma_ul is None:
            raise ValueError("statistic mode needs the design's rate caps")
        eve_dl = np.asarray(point.gamma_dl, dtype=float)[None, :, :]
        eve_ul = np.asarray(point.gamma_ul, dtype=float)[None, :, :]
    else:
        eve_dl = np.zeros((len(eve_samples), 2, k))
        eve_ul = np.zeros((len(eve_samples), 2, l))
        for m, (h_eve, g_eve) in enumerate(eve_samples):
            for i in range(2):
                eve_dl[m, i], eve_ul[m, i] = eve_rates(point, h_eve, g_eve[i], i, ch.noise_power)

    sec_dl = np.maximum(own_dl - eve_dl.max(axis=0), 0.0)
    sec_ul = np.maximum(own_ul - eve_ul.max(axis=0), 0.0)
    return RateReport(
        dl_rate=own_dl,
        ul_rate=own_ul,
        eve_dl_rate=eve_dl,
        eve_ul_rate=eve_ul,
        secrecy_dl=sec_dl,
        secrecy_ul=sec_ul,
        bs_power=bs_power(point),
        ul_power=ul_power(point),
    )


def ul_sum_rate_logdet(g, rho, w, v, g_si, sigma_si: float, noise: float, alpha: float) -> float:
    """Sum uplink rate of one group via the log-det capacity identity.

    Independent of the per-user successive-decoding chain; used as the
    oracle for the rate-sum consistency checks.
    """
    base = si_covariance(w, v, g_si, sigma_si) + noise * np.eye(g_si.shape[1])
    total = base.copy()
    for l in range(g.shape[0]):
        total += rho[l] ** 2 * np.outer(g[l], g[l].conj())
    sign_t, logdet_t = np.linalg.slogdet(total)
    sign_b, logdet_b = np.linalg.slogdet(base)
    assert sign_t > 0 and sign_b > 0
    return (logdet_t - logdet_b) / alpha
