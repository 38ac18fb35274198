"""Monte Carlo verification of the eavesdropper outage guarantees.

The design only caps an *expected-interference* proxy of the
eavesdropper rates, so a finished design is re-checked here: draw
independent complex-Gaussian eavesdropper channels whose second moments
match the statistics the optimizer used, evaluate the exact wiretap
rates, and estimate the probability that every eavesdropper stays below
the design's per-user rate caps.  The analytic expected-value bound
behind the cap construction is evaluated alongside for comparison; it is
conservative, so empirical probabilities near one are the norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rates
from .channels import ChannelSet
from .config import SystemConfig
from .surrogates import GroupLayout, proposed_layouts


def wilson_halfwidth(p_hat: float, n: int, z: float = 1.96) -> float:
    """Half-width of the Wilson score interval at confidence z."""
    if n <= 0:
        return 1.0
    denom = 1.0 + z**2 / n
    return (z / denom) * math.sqrt(p_hat * (1.0 - p_hat) / n + z**2 / (4.0 * n**2))


@dataclass
class OutageCheck:
    """One chance constraint of the final design, checked empirically."""

    kind: str  # "dl" or "ul"
    ref: tuple
    epsilon: float
    gamma: float
    prob: float  # empirical Prob(max over eavesdroppers <= gamma)
    halfwidth: float
    eve_exceed: np.ndarray  # per-eavesdropper empirical Prob(rate >= gamma)
    markov_bound: np.ndarray  # per-eavesdropper expected-value bound

    def ok(self, margin: float = 3.0) -> bool:
        return self.prob >= self.epsilon - margin * self.halfwidth


@dataclass
class OutageReport:
    checks: list[OutageCheck]
    n_samples: int

    def all_ok(self, margin: float = 3.0) -> bool:
        return all(c.ok(margin) for c in self.checks)

    def worst_margin(self) -> float:
        return min((c.prob - c.epsilon for c in self.checks), default=0.0)


def _eve_entry_variances(lay: GroupLayout, m: int) -> tuple[float, np.ndarray]:
    """Per-entry variances consistent with the second-order statistics."""
    nt = lay.h_bar[m].shape[0]
    ne = lay.ne[m]
    var_h = float(np.real(np.trace(lay.h_bar[m]))) / (nt * ne)
    var_g = lay.g_bar[m] / ne if lay.n_ul else np.zeros(0)
    return var_h, var_g


def _sample_slot_eve_rates(
    lay: GroupLayout, w, v, rho, alpha: float, n: int, rng: np.random.Generator
):
    """Exact wiretap rates on sampled channels, per eavesdropper.

    Returns (c_dl, c_ul) with shapes (M, n, K) and (M, n, L).
    """
    k, l, m_count = lay.n_dl, lay.n_ul, lay.n_eves
    nt = lay.h_bar[0].shape[0]
    c_dl = np.zeros((m_count, n, k))
    c_ul = np.zeros((m_count, n, l))
    w = np.asarray(w).reshape(k, nt) if k else np.zeros((0, nt))
    rho = np.asarray(rho)

    for m in range(m_count):
        ne = lay.ne[m]
        var_h, var_g = _eve_entry_variances(lay, m)
        h_eve = math.sqrt(var_h / 2.0) * (
            rng.standard_normal((n, nt, ne)) + 1j * rng.standard_normal((n, nt, ne))
        )
        beam = (
            np.abs(np.einsum("nte,kt->nke", h_eve.conj(), w)) ** 2
        ).sum(axis=2) if k else np.zeros((n, 0))
        an = (
            (np.abs(np.einsum("nte,tc->nce", h_eve.conj(), v)) ** 2).sum(axis=(1, 2))
            if v is not None
            else np.zeros(n)
        )
        if l:
            g_eve = np.sqrt(var_g / 2.0)[None, :, None] * (
                rng.standard_normal((n, l, ne)) + 1j * rng.standard_normal((n, l, ne))
            )
            up = rho[None, :] ** 2 * (np.abs(g_eve) ** 2).sum(axis=2)
        else:
            up = np.zeros((n, 0))

        base = beam.sum(axis=1) + an + up.sum(axis=1) + ne * lay.noise
        if k:
            psi = base[:, None] - beam
            c_dl[m] = np.log1p(beam / psi) / alpha
        if l:
            chi = base[:, None] - up
            c_ul[m] = np.log1p(up / chi) / alpha
    return c_dl, c_ul


def _markov_bounds(lay: GroupLayout, w, v, rho, alpha: float, gamma_dl, gamma_ul):
    """Expected-value outage bounds implied by the cap construction."""
    m_count = lay.n_eves
    w = np.asarray(w)
    bound_dl = np.zeros((m_count, lay.n_dl))
    bound_ul = np.zeros((m_count, lay.n_ul))
    for m in range(m_count):
        psi_bar, chi_bar = rates.eve_statistic_denominators(
            lay.h_bar[m], lay.g_bar[m], w, v, rho
        )
        for k in range(lay.n_dl):
            grow = math.expm1(min(alpha * gamma_dl[k], 500.0))
            if grow <= 0.0:
                bound_dl[m, k] = math.inf
                continue
            num = float(np.real(w[k].conj() @ lay.h_bar[m] @ w[k])) - grow * float(psi_bar[k])
            bound_dl[m, k] = num / (grow * lay.ne[m] * lay.noise)
        for l in range(lay.n_ul):
            grow = math.expm1(min(alpha * gamma_ul[l], 500.0))
            if grow <= 0.0:
                bound_ul[m, l] = math.inf
                continue
            num = rho[l] ** 2 * lay.g_bar[m][l] - grow * float(chi_bar[l])
            bound_ul[m, l] = num / (grow * lay.ne[m] * lay.noise)
    return bound_dl, bound_ul


def check_slot(
    lay: GroupLayout,
    w,
    v,
    rho,
    alpha: float,
    gamma_dl,
    gamma_ul,
    n_samples: int,
    rng: np.random.Generator,
) -> list[OutageCheck]:
    """All chance-constraint checks of one serving interval."""
    c_dl, c_ul = _sample_slot_eve_rates(lay, w, v, rho, alpha, n_samples, rng)
    bound_dl, bound_ul = _markov_bounds(lay, w, v, rho, alpha, gamma_dl, gamma_ul)
    checks: list[OutageCheck] = []
    for k in range(lay.n_dl):
        ok_all = (c_dl[:, :, k] <= gamma_dl[k]).all(axis=0)
        p = float(ok_all.mean())
        checks.append(
            OutageCheck(
                kind="dl",
                ref=lay.dl_refs[k] if lay.dl_refs else ("dl", k),
                epsilon=float(lay.eps_dl[k]),
                gamma=float(gamma_dl[k]),
                prob=p,
                halfwidth=wilson_halfwidth(p, n_samples),
                eve_exceed=(c_dl[:, :, k] >= gamma_dl[k]).mean(axis=1),
                markov_bound=bound_dl[:, k],
            )
        )
    for l in range(lay.n_ul):
        ok_all = (c_ul[:, :, l] <= gamma_ul[l]).all(axis=0)
        p = float(ok_all.mean())
        checks.append(
            OutageCheck(
                kind="ul",
                ref=lay.ul_refs[l] if lay.ul_refs else ("ul", l),
                epsilon=float(lay.eps_ul[l]),
                gamma=float(gamma_ul[l]),
                prob=p,
                halfwidth=wilson_halfwidth(p, n_samples),
                eve_exceed=(c_ul[:, :, l] >= gamma_ul[l]).mean(axis=1),
                markov_bound=bound_ul[:, l],
            )
        )
    return checks


def validate_design(design, layouts, n_samples: int, rng: np.random.Generator) -> OutageReport:
    """Monte Carlo outage validation of a finished multi-interval design."""
    checks: list[OutageCheck] = []
    for slot, lay in zip(design.slots, layouts):
        checks.extend(
            check_slot(
                lay,
                slot.w,
                slot.v,
                slot.rho,
                slot.alpha,
                slot.gamma_dl,
                slot.gamma_ul,
                n_samples,
                rng,
            )
        )
    return OutageReport(checks=checks, n_samples=n_samples)


# ---------------------------------------------------------------------------
# Two-group layout entry points.


def empirical_outage(
    point: rates.DesignPoint,
    ch: ChannelSet,
    config: SystemConfig,
    n_samples: int,
    rng: np.random.Generator,
) -> OutageReport:
    """Outage probabilities of a standard two-group design point."""
    if n_samples < 1000:
        raise ValueError("need at least 1000 samples for a usable estimate")
    checks: list[OutageCheck] = []
    for i, lay in enumerate(proposed_layouts(ch, config)):
        checks.extend(
            check_slot(
                lay,
                point.w[i],
                point.v[i],
                point.rho[i],
                float(point.alpha[i]),
                np.asarray(point.gamma_dl[i]),
                np.asarray(point.gamma_ul[i]),
                n_samples,
                rng,
            )
        )
    return OutageReport(checks=checks, n_samples=n_samples)


def markov_bound_check(
    point: rates.DesignPoint,
    ch: ChannelSet,
    config: SystemConfig,
    n_samples: int,
    rng: np.random.Generator,
) -> list[dict]:
    """Pair each analytic expected-value bound with its empirical rate.

    Returns one record per (eavesdropper, user, direction) with the
    bound, the empirical exceed probability, and whether the empirical
    value stays below the bound plus three Wilson half-widths.
    """
    report = empirical_outage(point, ch, config, n_samples, rng)
    out = []
    for check in report.checks:
        for m in range(len(check.eve_exceed)):
            emp = float(check.eve_exceed[m])
            bound = float(check.markov_bound[m])
            hw = wilson_halfwidth(emp, report.n_samples)
            out.append(
                {
                    "kind": check.kind,
                    "ref": check.ref,
                    "eve": m,
                    "bound": bound,
                    "empirical": emp,
                    "ok": emp <= bound + 3.0 * hw,
                }
            )
    return out


def sample_eve_channels(ch: ChannelSet, rng: np.random.Generator):
    """One concrete eavesdropper channel draw in the two-group layout.

    Returns a list over eavesdroppers of ``(h_eve, g_eve)`` with
    ``h_eve`` shaped (Nt, Ne) and ``g_eve`` shaped (2, L, Ne), suitable
    for :func:`fdsec.rates.secrecy_rates`.
    """
    m_count, nt = ch.h_bar.shape[0], ch.h_bar.shape[1]
    l = ch.g.shape[1]
    out = []
    for m in range(m_count):
        ne = ch.eve_antennas[m]
        var_h = float(np.real(np.trace(ch.h_bar[m]))) / (nt * ne)
        h_eve = math.sqrt(var_h / 2.0) * (
            rng.standard_normal((nt, ne)) + 1j * rng.standard_normal((nt, ne))
        )
        g_eve = np.zeros((2, l, ne), dtype=complex)
        for i in range(2):
            var_g = ch.g_bar[m, i] / ne
            g_eve[i] = np.sqrt(var_g / 2.0)[:, None] * (
                rng.standard_normal((l, ne)) + 1j * rng.standard_normal((l, ne))
            )
        out.append((h_eve, g_eve))
    return out
