"""Path-following solution of the max-min secrecy design.

Starting from a maximum-ratio seed, an eavesdropper-free feasibility
phase lifts the worst-user rate above a small threshold; the main phase
then alternates between building the convex subproblem around the
current iterate and solving it, which yields a non-decreasing sequence
of objective values until the relative change falls below tolerance.

Three modes are supported:

* ``proposed-fd``    - two serving intervals with an optimized time
  split; near DL users pair with far UL users and vice versa.
* ``conventional-fd`` - everyone is served over the whole block.
* ``hd``             - half duplex with pooled antennas: a DL-only and a
  UL-only problem solved separately, achieved rates halved.

A ``qos`` target turns the uplink rows into hard secrecy-rate
requirements and maximizes the minimum downlink secrecy rate instead.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import conic, rates
from .channels import ChannelSet
from .config import SystemConfig
from .rates import NATS_TO_BPS, DesignPoint
from .surrogates import (
    ExpansionPoint,
    GroupExpansion,
    GroupLayout,
    InvalidExpansionError,
    SubproblemBuilder,
    SubproblemHandles,
    bs_power_surrogate,
    dl_rate_surrogate,
    expand_group,
    proposed_layouts,
    ul_rate_surrogate,
)

MODES = ("proposed-fd", "conventional-fd", "hd")


@dataclass
class SolverOptions:
    """Knobs of the path-following solver."""

    max_iters: int = 50
    rel_tol: float = 1e-4
    trust_rel: float = 1e-8
    eta_min: float = 0.05
    mode: str = "proposed-fd"
    qos_ul_bps: float | None = None
    solver_tol: float = 1e-8
    beta_floor: float = 1e-9
    rho_floor_rel: float = 1e-6
    init_stabilize: bool = True
    init_rel_tol: float = 1e-4
    init_max_rounds: int = 100
    mc_samples: int = 10_000
    validate_outage: bool = True

    def __post_init__(self) -> None:
        if self.max_iters < 1 or self.rel_tol <= 0 or self.eta_min <= 0:
            raise ValueError("max_iters >= 1, rel_tol > 0 and eta_min > 0 required")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    @property
    def qos_ul_nats(self) -> float | None:
        return None if self.qos_ul_bps is None else self.qos_ul_bps / NATS_TO_BPS


@dataclass
class IterationRecord:
    kappa: int
    eta: float
    status: str
    resub_violation: float
    tightness: float
    wall_ms: float
    phase: str = ""


class InitializationError(RuntimeError):
    """The feasibility phase could not reach the requested worst-user rate."""

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


@dataclass
class SlotDesign:
    """Decision variables of one serving interval of the final design."""

    w: np.ndarray
    v: np.ndarray | None
    rho: np.ndarray
    alpha: float
    tau: float
    beta_dl: np.ndarray
    beta_ul: np.ndarray
    gamma_dl: np.ndarray
    gamma_ul: np.ndarray
    dl_refs: list
    ul_refs: list


@dataclass
class ModeDesign:
    mode: str
    slots: list[SlotDesign]
    eta: float

    def as_design_point(self) -> DesignPoint:
        """Standard two-group container (grouped modes only)."""
        if self.mode != "proposed-fd" or len(self.slots) != 2:
            raise ValueError("only the two-group design maps onto a DesignPoint")
        s0, s1 = self.slots
        return DesignPoint(
            w=np.stack([s0.w, s1.w]),
            v=np.stack([s0.v, s1.v]),
            rho=np.stack([s0.rho, s1.rho]),
            alpha=np.array([s0.alpha, s1.alpha]),
            beta_dl=np.stack([s0.beta_dl, s1.beta_dl]),
            beta_ul=np.stack([s0.beta_ul, s1.beta_ul]),
            gamma_dl=np.stack([s0.gamma_dl, s1.gamma_dl]),
            gamma_ul=np.stack([s0.gamma_ul, s1.gamma_ul]),
            eta=self.eta,
        )


@dataclass
class SolveReport:
    """Iteration trace plus exact re-verification of the final design."""

    mode: str
    eta: float
    maxmin_sr_nats: float
    maxmin_sr_bps: float
    sr_dl: dict
    sr_ul: dict
    rate_dl: dict
    rate_ul: dict
    gamma_dl: dict
    gamma_ul: dict
    bs_power: float
    bs_power_budget: float
    ul_power: dict
    ul_power_budget: dict
    tau: list
    tau_sum: float
    tau_slack: float
    iterations: int
    converged: bool
    max_resub_violation: float
    max_tightness_residual: float
    max_nesting_violation: float
    records: list[IterationRecord]
    qos_ok: bool | None = None
    outage: object | None = None

    def power_ok(self, rel: float = 1e-6) -> bool:
        if self.bs_power > self.bs_power_budget * (1.0 + rel):
            return False
        return all(p <= self.ul_power_budget[ref] * (1.0 + rel) for ref, p in self.ul_power.items())

    def tau_ok(self, tol: float = 1e-9) -> bool:
        return self.tau_sum <= 1.0 + tol


# ---------------------------------------------------------------------------
# Mode layouts.


def conventional_layout(ch: ChannelSet, config: SystemConfig) -> GroupLayout:
    """Merge both groups into one interval served over the whole block."""
    k, l = ch.h.shape[1], ch.g.shape[1]
    h_all = ch.h.reshape(2 * k, -1)
    dl_refs = [(i, kk) for i in range(2) for kk in range(k)]

    g_all = ch.g.reshape(2 * l, -1)
    ul_refs = [(i, ll) for i in range(2) for ll in range(l)]
    g_bar = ch.g_bar.reshape(ch.g_bar.shape[0], 2 * l)
    p_ul = np.asarray(config.p_ul_max).reshape(2 * l)
    eps_ul = np.asarray(config.epsilon_ul).reshape(2 * l)

    f_all = np.empty((2 * k, 2 * l), dtype=complex)
    for row, (i, kk) in enumerate(dl_refs):
        for col, (j, ll) in enumerate(ul_refs):
            f_all[row, col] = ch.f[i, kk, ll] if j == i else ch.f_cross[i, kk, ll]

    # re-freeze the decoding order over the merged uplink set
    order = np.argsort(-np.linalg.norm(g_all, axis=1))
    g_all = g_all[order]
    f_all = f_all[:, order]
    g_bar = g_bar[:, order]
    p_ul = p_ul[order]
    eps_ul = eps_ul[order]
    ul_refs = [ul_refs[j] for j in order]

    return GroupLayout(
        h=h_all,
        g=g_all,
        f=f_all,
        g_si=ch.g_si,
        sigma_si=ch.sigma_si,
        noise=ch.noise_power,
        h_bar=ch.h_bar,
        g_bar=g_bar,
        ne=tuple(ch.eve_antennas),
        eps_dl=np.asarray(config.epsilon_dl).reshape(2 * k),
        eps_ul=eps_ul,
        p_ul=p_ul,
        dl_refs=dl_refs,
        ul_refs=ul_refs,
    )


def hd_layouts(ch_hd: ChannelSet, config: SystemConfig) -> tuple[GroupLayout, GroupLayout]:
    """DL-only and UL-only intervals over the pooled antenna array.

    Transmission and reception never overlap, so the UL interval has no
    artificial noise and neither interval sees self-interference or
    co-channel interference.
    """
    k, l = ch_hd.h.shape[1], ch_hd.g.shape[1]
    n = ch_hd.h.shape[2]
    dl = GroupLayout(
        h=ch_hd.h.reshape(2 * k, n),
        g=np.zeros((0, n)),
        f=np.zeros((2 * k, 0)),
        g_si=np.zeros((n, n), dtype=complex),
        sigma_si=0.0,
        noise=ch_hd.noise_power,
        h_bar=ch_hd.h_bar,
        g_bar=np.zeros((ch_hd.h_bar.shape[0], 0)),
        ne=tuple(ch_hd.eve_antennas),
        eps_dl=np.asarray(config.epsilon_dl).reshape(2 * k),
        eps_ul=np.zeros(0),
        p_ul=np.zeros(0),
        dl_refs=[(i, kk) for i in range(2) for kk in range(k)],
        ul_refs=[],
    )
    g_all = ch_hd.g.reshape(2 * l, n)
    ul_refs = [(i, ll) for i in range(2) for ll in range(l)]
    g_bar = ch_hd.g_bar.reshape(ch_hd.g_bar.shape[0], 2 * l)
    p_ul = np.asarray(config.p_ul_max).reshape(2 * l)
    eps_ul = np.asarray(config.epsilon_ul).reshape(2 * l)
    order = np.argsort(-np.linalg.norm(g_all, axis=1))
    ul = GroupLayout(
        h=np.zeros((0, n)),
        g=g_all[order],
        f=np.zeros((0, 2 * l)),
        g_si=np.zeros((n, n), dtype=complex),
        sigma_si=0.0,
        noise=ch_hd.noise_power,
        h_bar=ch_hd.h_bar,
        g_bar=g_bar[:, order],
        ne=tuple(ch_hd.eve_antennas),
        eps_dl=np.zeros(0),
        eps_ul=eps_ul[order],
        p_ul=p_ul[order],
        dl_refs=[],
        ul_refs=[ul_refs[j] for j in order],
        has_an=False,
    )
    return dl, ul


# ---------------------------------------------------------------------------
# Seeding, initialization and the main loop over one scenario.


def _seed_expansions(
    slots: list[GroupLayout | None],
    alpha_seed: list[float],
    p_bs: float,
    opts: SolverOptions,
) -> list[GroupExpansion | None]:
    """Maximum-ratio beams spending 80% of the power budget, a small
    identity noise-shaping matrix worth 5%, and 80% of each uplink cap."""
    tau = [1.0 / a for a in alpha_seed]
    beam_weight = sum(
        tau[i] * slots[i].n_dl for i in (0, 1) if slots[i] is not None
    )
    an_weight = sum(tau[i] for i in (0, 1) if slots[i] is not None and slots[i].has_an)
    p_beam = 0.8 * p_bs / beam_weight if beam_weight > 0 else 0.0
    p_an = 0.05 * p_bs / an_weight if an_weight > 0 else 0.0

    out: list[GroupExpansion | None] = []
    for i in (0, 1):
        lay = slots[i]
        if lay is None:
            out.append(None)
            continue
        k = lay.n_dl
        nt = lay.h.shape[1] if k else lay.g_si.shape[0]
        w = np.zeros((k, nt), dtype=complex)
        for kk in range(k):
            w[kk] = math.sqrt(p_beam) * lay.h[kk] / np.linalg.norm(lay.h[kk])
        v = math.sqrt(p_an / nt) * np.eye(nt, dtype=complex) if lay.has_an else None
        rho = np.sqrt(0.8 * lay.p_ul / tau[i]) if lay.n_ul else np.zeros(0)
        rho_floor = opts.rho_floor_rel * np.sqrt(lay.p_ul) if lay.n_ul else rho
        out.append(
            expand_group(
                lay, w, v, np.maximum(rho, rho_floor), alpha_seed[i], rho_floor=0.0
            )
        )
    return out


def _extract_slots(
    hs: SubproblemHandles,
    x: np.ndarray,
    slots: list[GroupLayout | None],
    include_eves: bool,
) -> list[dict | None]:
    out: list[dict | None] = []
    for i in (0, 1):
        sv, lay = hs.slots[i], slots[i]
        if sv is None:
            out.append(None)
            continue
        d = {
            "w": sv.w.value(x) if sv.w is not None else np.zeros((0, lay.g_si.shape[0])),
            "v": sv.v.value(x) if sv.v is not None else None,
            "rho": np.maximum(x[sv.rho], 0.0) if sv.rho is not None else np.zeros(0),
            "alpha": float(x[sv.alpha_idx]) if sv.alpha_idx is not None else sv.alpha_fixed,
        }
        if include_eves:
            d["beta_dl"] = (
                np.maximum(x[sv.beta_dl], hs.beta_floor) if sv.beta_dl is not None else np.zeros(0)
            )
            d["beta_ul"] = (
                np.maximum(x[sv.beta_ul], hs.beta_floor) if sv.beta_ul is not None else np.zeros(0)
            )
            d["gamma_dl"] = x[sv.gam_dl] if sv.gam_dl is not None else np.zeros(0)
            d["gamma_ul"] = x[sv.gam_ul] if sv.gam_ul is not None else np.zeros(0)
        out.append(d)
    # solver tolerances can leave the time split a few 1e-9 over budget;
    # project the inverse shares back onto the simplex exactly
    free = [d for d in out if d is not None]
    if len(free) > 1 and all(slots[i] is not None and hs.slots[i].alpha_idx is not None for i in (0, 1)):
        tau_sum = sum(1.0 / d["alpha"] for d in free)
        if tau_sum > 1.0:
            for d in free:
                d["alpha"] *= tau_sum
    return out


def _rho_floor(lay: GroupLayout, opts: SolverOptions) -> float:
    if lay.n_ul == 0:
        return 0.0
    return opts.rho_floor_rel * float(np.sqrt(lay.p_ul.min()))


def _beta_equalities(lay: GroupLayout, exp: GroupExpansion, floor: float):
    """Slacks that make the statistical eavesdropper rows tight."""
    m_count = lay.n_eves
    beta_dl = np.zeros(lay.n_dl)
    for k in range(lay.n_dl):
        vals = []
        for m in range(m_count):
            psi, _ = rates.eve_statistic_denominators(
                lay.h_bar[m], lay.g_bar[m], exp.w, exp.v, exp.rho
            )
            cap = (1.0 - lay.eps_dl[k] ** (1.0 / m_count)) * lay.ne[m] * lay.noise
            num = float(np.real(exp.w[k].conj() @ lay.h_bar[m] @ exp.w[k]))
            vals.append(num / (float(psi[k]) + cap))
        beta_dl[k] = max(max(vals), floor)
    beta_ul = np.zeros(lay.n_ul)
    for l in range(lay.n_ul):
        vals = []
        for m in range(m_count):
            _, chi = rates.eve_statistic_denominators(
                lay.h_bar[m], lay.g_bar[m], exp.w, exp.v, exp.rho
            )
            cap = (1.0 - lay.eps_ul[l] ** (1.0 / m_count)) * lay.ne[m] * lay.noise
            vals.append(exp.rho[l] ** 2 * lay.g_bar[m][l] / (float(chi[l]) + cap))
        beta_ul[l] = max(max(vals), floor)
    return beta_dl, beta_ul


def _with_betas(slots, exps, floor):
    out = []
    for i in (0, 1):
        if exps[i] is None:
            out.append(None)
            continue
        beta_dl, beta_ul = _beta_equalities(slots[i], exps[i], floor)
        out.append(replace(exps[i], beta_dl=beta_dl, beta_ul=beta_ul))
    return out


def _cap_values(lay: GroupLayout, exp: GroupExpansion, floor: float):
    """Tangent-tight rate caps implied by the equality slacks."""
    beta_dl, beta_ul = _beta_equalities(lay, exp, floor)
    return np.log1p(beta_dl) / exp.alpha, np.log1p(beta_ul) / exp.alpha


def _exact_margin(slots, exps, qos_nats) -> float:
    """Worst-user exact secrecy margin with equality-tight caps.

    Under a QoS target only downlink margins count; the uplink margins
    must clear the target or -inf is returned.
    """
    worst = math.inf
    for i in (0, 1):
        lay, exp = slots[i], exps[i]
        if exp is None:
            continue
        gam_dl = np.log1p(exp.beta_dl) / exp.alpha if lay.n_dl else np.zeros(0)
        gam_ul = np.log1p(exp.beta_ul) / exp.alpha if lay.n_ul else np.zeros(0)
        if lay.n_dl:
            worst = min(worst, float((exp.rate_dl - gam_dl).min()))
        if lay.n_ul:
            ul_margin = exp.rate_ul - gam_ul
            if qos_nats is None:
                worst = min(worst, float(ul_margin.min()))
            elif np.any(ul_margin < qos_nats):
                return -math.inf
    return worst


def _free_margin(slots, exps, qos_nats) -> float:
    """Worst-user exact rate margin with the caps ignored (init phase)."""
    worst = math.inf
    for i in (0, 1):
        exp = exps[i]
        if exp is None:
            continue
        if exp.rate_dl.size:
            worst = min(worst, float(exp.rate_dl.min()))
        if exp.rate_ul.size:
            shift = 0.0 if qos_nats is None else qos_nats
            worst = min(worst, float(exp.rate_ul.min()) - shift)
    return worst


def _rescale_to_budgets(slots, cand, p_bs: float) -> None:
    """Shrink beams / uplink amplitudes so the exact budgets hold."""
    alpha2 = cand[1]["alpha"]
    w1 = 1.0 - 1.0 / alpha2 if cand[0] is not None else 0.0
    used = rates.group_tx_power(cand[1]["w"], cand[1]["v"]) / alpha2
    if cand[0] is not None:
        used += w1 * rates.group_tx_power(cand[0]["w"], cand[0]["v"])
    if used > p_bs:
        s = math.sqrt(p_bs / used)
        for d in cand:
            if d is None:
                continue
            d["w"] = d["w"] * s
            if d["v"] is not None:
                d["v"] = d["v"] * s
    for i, weight in ((0, w1), (1, 1.0 / alpha2)):
        d = cand[i]
        if d is None or not len(d["rho"]):
            continue
        lay = slots[i]
        for l in range(lay.n_ul):
            used_l = weight * d["rho"][l] ** 2
            if used_l > lay.p_ul[l]:
                d["rho"][l] *= math.sqrt(lay.p_ul[l] / used_l)


def _snapshot(exps):
    return [
        None
        if e is None
        else {
            "w": e.w.copy(),
            "v": None if e.v is None else e.v.copy(),
            "rho": e.rho.copy(),
            "alpha": e.alpha,
        }
        for e in exps
    ]


_ALL_BLOCKS = frozenset(("w", "v", "rho", "alpha"))
_JOINT_STEPS = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0)
_BLOCK_STEPS = (0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0)


class _Accelerator:
    """Safeguarded pattern search along the last solver step.

    Candidates extend the step by a scalar factor, jointly or per
    variable block, are projected back into the exact budgets, and are
    accepted only when the exact worst-user margin improves.  Monotone
    convergence of the objective trace is therefore preserved: every
    accepted point is feasible for its own subproblem with a value at
    least as large as the plain iterate's.
    """

    def __init__(self, slots, p_bs, opts: SolverOptions, finalize, margin_of):
        self.slots = slots
        self.p_bs = p_bs
        self.opts = opts
        self.finalize = finalize
        self.margin_of = margin_of

    def _candidate(self, base_snap, diff, theta: float, blocks):
        cand = []
        for i in (0, 1):
            if base_snap[i] is None:
                cand.append(None)
                continue
            c = dict(base_snap[i])
            d = diff[i]
            if "w" in blocks:
                c["w"] = base_snap[i]["w"] + theta * d["w"]
            if "v" in blocks and base_snap[i]["v"] is not None:
                c["v"] = base_snap[i]["v"] + theta * d["v"]
            if "rho" in blocks:
                c["rho"] = np.maximum(base_snap[i]["rho"] + theta * d["rho"], 0.0)
            if "alpha" in blocks:
                c["alpha"] = base_snap[i]["alpha"] + theta * d["alpha"]
            cand.append(c)
        taus = [1.0 / c["alpha"] for c in cand if c is not None]
        if len(taus) > 1 and sum(taus) > 1.0:
            for c in cand:
                if c is not None:
                    c["alpha"] *= sum(taus)
        if any(c["alpha"] <= 1.0 + 1e-9 for c in cand if c is not None):
            return None
        _rescale_to_budgets(self.slots, cand, self.p_bs)
        try:
            exps = [
                None
                if c is None
                else expand_group(
                    self.slots[i],
                    c["w"],
                    c["v"],
                    c["rho"],
                    c["alpha"],
                    rho_floor=_rho_floor(self.slots[i], self.opts),
                )
                for i, c in enumerate(cand)
            ]
        except InvalidExpansionError:
            return None
        return self.finalize(exps)

    def improve(self, old_exps, new_exps):
        """Best safeguarded point reachable from the latest step."""
        base = self.margin_of(new_exps)
        if old_exps is None or not math.isfinite(base):
            return new_exps, base
        new_snap = _snapshot(new_exps)
        diff = []
        for i in (0, 1):
            if new_snap[i] is None:
                diff.append(None)
                continue
            old = old_exps[i]
            diff.append(
                {
                    "w": new_snap[i]["w"] - old.w,
                    "v": None
                    if new_snap[i]["v"] is None
                    else new_snap[i]["v"] - old.v,
                    "rho": new_snap[i]["rho"] - old.rho,
                    "alpha": new_snap[i]["alpha"] - old.alpha,
                }
            )
        best, best_m = new_exps, base
        for theta in _JOINT_STEPS:
            cand = self._candidate(new_snap, diff, theta, _ALL_BLOCKS)
            if cand is None:
                continue
            m = self.margin_of(cand)
            if m > best_m:
                best, best_m = cand, m

        for _ in range(4):  # outer repeats re-derive the net direction
            start_m = best_m
            cur = _snapshot(best)
            for _ in range(8):
                improved = False
                for blocks in (
                    frozenset(("rho",)),
                    frozenset(("w", "v")),
                    frozenset(("alpha",)),
                ):
                    found = None
                    for theta in _BLOCK_STEPS:
                        cand = self._candidate(cur, diff, theta, blocks)
                        if cand is None:
                            continue
                        m = self.margin_of(cand)
                        if m > best_m:
                            found, best_m = cand, m
                    if found is not None:
                        best = found
                        cur = _snapshot(best)
                        improved = True
                if not improved:
                    break
            # follow the refined net direction once more
            cur = _snapshot(best)
            diff2 = []
            for i in (0, 1):
                if cur[i] is None:
                    diff2.append(None)
                    continue
                diff2.append(
                    {
                        "w": cur[i]["w"] - new_snap[i]["w"],
                        "v": None
                        if cur[i]["v"] is None
                        else cur[i]["v"] - new_snap[i]["v"],
                        "rho": cur[i]["rho"] - new_snap[i]["rho"],
                        "alpha": cur[i]["alpha"] - new_snap[i]["alpha"],
                    }
                )
            for theta in (0.5, 1.0, 2.0, 4.0, 8.0):
                cand = self._candidate(cur, diff2, theta, _ALL_BLOCKS)
                if cand is None:
                    continue
                m = self.margin_of(cand)
                if m > best_m:
                    best, best_m = cand, m
            if best_m <= start_m * (1 + 1e-12) and best_m - start_m <= 1e-9:
                break
        return best, best_m


def _init_phase(
    slots,
    alpha_fixed,
    alpha_seed,
    p_bs,
    opts: SolverOptions,
    qos_nats,
    records: list[IterationRecord],
    phase: str = "",
):
    """Eavesdropper-free feasibility phase.

    Solves the convex restriction with the caps removed until the
    worst-user margin clears ``eta_min`` (plus, under a QoS target, until
    the implied uplink caps leave the requirement attainable).  With
    ``init_stabilize`` the phase keeps going until the margin stops
    improving, which hands the capped phase a much better start.
    """
    exps = _seed_expansions(slots, alpha_seed, p_bs, opts)
    accel = _Accelerator(
        slots,
        p_bs,
        opts,
        finalize=lambda es: es,
        margin_of=lambda es: _free_margin(slots, es, qos_nats),
    )
    cur_margin = _free_margin(slots, exps, qos_nats)
    prev_eta = -math.inf
    for rnd in range(opts.init_max_rounds):
        t0 = time.perf_counter()
        builder = SubproblemBuilder(
            slots,
            exps,
            p_bs,
            alpha_fixed=alpha_fixed,
            include_eves=False,
            qos_ul_nats=qos_nats,
            trust_rel=opts.trust_rel,
            beta_floor=opts.beta_floor,
        )
        hs = builder.build()
        sol = hs.prog.solve(opts.solver_tol, shift=builder.feasible_point(hs))
        if sol.status in (conic.INFEASIBLE, conic.UNBOUNDED):
            raise InitializationError(f"feasibility subproblem {sol.status}", best=exps)
        resub = hs.prog.max_violation(sol.x)
        if resub <= 10.0 * opts.solver_tol:
            extracted = _extract_slots(hs, sol.x, slots, include_eves=False)
            new_exps = [
                None
                if e is None
                else expand_group(
                    slots[i],
                    e["w"],
                    e["v"],
                    e["rho"],
                    e["alpha"],
                    rho_floor=_rho_floor(slots[i], opts),
                )
                for i, e in enumerate(extracted)
            ]
            chosen, best_m = accel.improve(exps if rnd else None, new_exps)
            if best_m > cur_margin:
                exps = chosen
                cur_margin = best_m
        eta = cur_margin
        records.append(
            IterationRecord(
                kappa=-(rnd + 1),
                eta=eta,
                status=sol.status,
                resub_violation=resub,
                tightness=0.0,
                wall_ms=(time.perf_counter() - t0) * 1e3,
                phase=phase or "init",
            )
        )
        reached = eta >= opts.eta_min
        if reached and qos_nats is not None:
            for i in (0, 1):
                if exps[i] is None or slots[i].n_ul == 0:
                    continue
                _, gam_ul = _cap_values(slots[i], exps[i], opts.beta_floor)
                if np.any(exps[i].rate_ul - gam_ul - qos_nats < opts.beta_floor):
                    reached = False
        stalled = eta - prev_eta <= opts.init_rel_tol * max(1.0, abs(prev_eta)) and rnd > 2
        if reached and (stalled or not opts.init_stabilize):
            return exps
        if stalled and not reached:
            raise InitializationError(
                f"feasibility phase stalled at worst-user margin {eta:.4g}", best=exps
            )
        prev_eta = eta
    if cur_margin >= opts.eta_min:
        return exps
    raise InitializationError("feasibility phase exhausted its iteration budget", best=exps)


def _nesting_violation_exps(slots, exps, p_bs) -> float:
    """Worst relative violation of the exact nonconvex constraints.

    Evaluated at an accepted iterate whose caps are the equality-tight
    values; satisfying the emitted surrogate blocks must imply these.
    """
    worst = 0.0
    alpha2 = exps[1].alpha
    p_exact = rates.group_tx_power(exps[1].w, exps[1].v) / alpha2
    if exps[0] is not None:
        p_exact += (1.0 - 1.0 / alpha2) * rates.group_tx_power(exps[0].w, exps[0].v)
        for l in range(slots[0].n_ul):
            used = (1.0 - 1.0 / alpha2) * exps[0].rho[l] ** 2
            worst = max(worst, (used - slots[0].p_ul[l]) / slots[0].p_ul[l])
    worst = max(worst, (p_exact - p_bs) / p_bs)
    for l in range(slots[1].n_ul):
        used = exps[1].rho[l] ** 2 / alpha2
        worst = max(worst, (used - slots[1].p_ul[l]) / slots[1].p_ul[l])

    for i in (0, 1):
        exp, lay = exps[i], slots[i]
        if exp is None or exp.beta_dl is None:
            continue
        gamma_dl = np.log1p(exp.beta_dl) / exp.alpha if lay.n_dl else np.zeros(0)
        gamma_ul = np.log1p(exp.beta_ul) / exp.alpha if lay.n_ul else np.zeros(0)
        m_count = lay.n_eves
        for m in range(m_count):
            psi, chi = rates.eve_statistic_denominators(
                lay.h_bar[m], lay.g_bar[m], exp.w, exp.v, exp.rho
            )
            for k in range(lay.n_dl):
                denom = math.expm1(min(exp.alpha * gamma_dl[k], 500.0))
                cap = (1.0 - lay.eps_dl[k] ** (1.0 / m_count)) * lay.ne[m] * lay.noise
                num = float(np.real(exp.w[k].conj() @ lay.h_bar[m] @ exp.w[k]))
                rhs = float(psi[k]) + cap
                worst = max(worst, (num / denom - rhs) / max(rhs, 1e-300))
            for l in range(lay.n_ul):
                denom = math.expm1(min(exp.alpha * gamma_ul[l], 500.0))
                cap = (1.0 - lay.eps_ul[l] ** (1.0 / m_count)) * lay.ne[m] * lay.noise
                num = exp.rho[l] ** 2 * lay.g_bar[m][l]
                rhs = float(chi[l]) + cap
                worst = max(worst, (num / denom - rhs) / max(rhs, 1e-300))
    return worst


def _tightness_residual(slots, exps) -> float:
    """Max gap between each surrogate and its exact value at the iterate."""
    worst = 0.0
    for i in (0, 1):
        lay, exp = slots[i], exps[i]
        if exp is None:
            continue
        for k in range(lay.n_dl):
            sur = dl_rate_surrogate(lay, exp, exp.w, exp.v, exp.rho, exp.alpha, k)
            worst = max(worst, abs(sur - exp.rate_dl[k]))
        for l in range(lay.n_ul):
            sur = ul_rate_surrogate(lay, exp, exp.w, exp.v, exp.rho, exp.alpha, l)
            worst = max(worst, abs(sur - exp.rate_ul[l]))
    exp1 = exps[1]
    sur_p = bs_power_surrogate(
        exps[0],
        None if exps[0] is None else exps[0].w,
        None if exps[0] is None else exps[0].v,
        exp1.w,
        exp1.v,
        exp1.alpha,
        exp1.alpha,
    )
    exact_p = rates.group_tx_power(exp1.w, exp1.v) / exp1.alpha
    if exps[0] is not None:
        exact_p += (1.0 - 1.0 / exp1.alpha) * rates.group_tx_power(exps[0].w, exps[0].v)
    worst = max(worst, abs(sur_p - exact_p))
    return worst


def _main_phase(
    slots,
    alpha_fixed,
    exps,
    p_bs,
    opts: SolverOptions,
    qos_nats,
    records: list[IterationRecord],
    phase: str = "",
):
    """Capped phase: solve, accelerate, adopt, until the margin stalls.

    The recorded objective is the exact worst-user margin of the adopted
    iterate with equality-tight caps.  Every adopted point embeds
    feasibly in its own subproblem with that value, so the trace is
    non-decreasing by construction and honest under solver inaccuracy.
    """
    exps = _with_betas(slots, exps, opts.beta_floor)
    accel = _Accelerator(
        slots,
        p_bs,
        opts,
        finalize=lambda es: _with_betas(slots, es, opts.beta_floor),
        margin_of=lambda es: _exact_margin(slots, es, qos_nats),
    )
    cur_margin = _exact_margin(slots, exps, qos_nats)
    prev_eta = None
    eta = -math.inf
    accepted_any = False
    converged = False
    diag = {"resub": 0.0, "tightness": 0.0, "nesting": 0.0}

    for kappa in range(opts.max_iters):
        t0 = time.perf_counter()
        builder = SubproblemBuilder(
            slots,
            exps,
            p_bs,
            alpha_fixed=alpha_fixed,
            include_eves=True,
            qos_ul_nats=qos_nats,
            trust_rel=opts.trust_rel,
            beta_floor=opts.beta_floor,
        )
        hs = builder.build()
        sol = hs.prog.solve(opts.solver_tol, shift=builder.feasible_point(hs))
        if sol.status == conic.INFEASIBLE and kappa == 0:
            raise InitializationError("first capped subproblem reported infeasible", best=exps)
        resub = hs.prog.max_violation(sol.x) if sol.status != conic.INFEASIBLE else math.inf
        usable = (
            sol.status == conic.OPTIMAL or sol.status == conic.NUMERICAL_LIMIT
        ) and resub <= 10.0 * opts.solver_tol

        if usable:
            extracted = _extract_slots(hs, sol.x, slots, include_eves=True)
            new_exps = [
                None
                if e is None
                else expand_group(
                    slots[i],
                    e["w"],
                    e["v"],
                    e["rho"],
                    e["alpha"],
                    rho_floor=_rho_floor(slots[i], opts),
                )
                for i, e in enumerate(extracted)
            ]
            chosen, best_m = accel.improve(
                exps if accepted_any else None, accel.finalize(new_exps)
            )
            if best_m > cur_margin:
                # adopt only margin-improving iterates: the trace records the
                # exact worst-user margin, feasible for the next subproblem,
                # so it is non-decreasing by construction
                exps = chosen
                cur_margin = best_m
            diag["resub"] = max(diag["resub"], resub)
        eta = cur_margin
        accepted_any = True
        diag["nesting"] = max(
            diag["nesting"], _nesting_violation_exps(slots, exps, p_bs)
        )
        tight = _tightness_residual(slots, exps)
        diag["tightness"] = max(diag["tightness"], tight)
        records.append(
            IterationRecord(kappa, eta, sol.status, resub, tight,
                            (time.perf_counter() - t0) * 1e3, phase)
        )
        if prev_eta is not None and abs(eta - prev_eta) <= opts.rel_tol * max(1.0, abs(prev_eta)):
            converged = True
            break
        prev_eta = eta

    if not accepted_any:
        raise InitializationError("no capped subproblem was accepted", best=exps)
    return exps, eta, converged, diag


def _slot_designs(slots, exps, taus) -> list[SlotDesign]:
    """Final per-interval designs with equality-tight caps."""
    out = []
    for i in (0, 1):
        if exps[i] is None:
            continue
        exp, lay = exps[i], slots[i]
        beta_dl = exp.beta_dl if exp.beta_dl is not None else np.zeros(lay.n_dl)
        beta_ul = exp.beta_ul if exp.beta_ul is not None else np.zeros(lay.n_ul)
        out.append(
            SlotDesign(
                w=exp.w,
                v=exp.v,
                rho=exp.rho,
                alpha=exp.alpha,
                tau=taus[i],
                beta_dl=beta_dl,
                beta_ul=beta_ul,
                gamma_dl=np.log1p(beta_dl) / exp.alpha,
                gamma_ul=np.log1p(beta_ul) / exp.alpha,
                dl_refs=list(lay.dl_refs),
                ul_refs=list(lay.ul_refs),
            )
        )
    return out


def _solve_scenario(slots, alpha_fixed, alpha_seed, p_bs, opts, qos_nats, records, phase=""):
    exps0 = _init_phase(slots, alpha_fixed, alpha_seed, p_bs, opts, qos_nats, records, phase)
    return _main_phase(slots, alpha_fixed, exps0, p_bs, opts, qos_nats, records, phase)


# ---------------------------------------------------------------------------
# Public entry points.


def initialize(config: SystemConfig, ch: ChannelSet, opts: SolverOptions) -> ExpansionPoint:
    """Run the feasibility phase for the grouped design and package the
    result (including equality-tight slacks) as a full expansion point."""
    nch = ch.normalized()
    slots = proposed_layouts(nch, config)
    records: list[IterationRecord] = []
    exps = _init_phase(
        slots, [None, None], [2.0, 2.0], config.p_bs_max, opts, opts.qos_ul_nats, records
    )
    exps = _with_betas(slots, exps, opts.beta_floor)
    point = DesignPoint(
        w=np.stack([e.w for e in exps]),
        v=np.stack([e.v for e in exps]),
        rho=np.stack([e.rho for e in exps]),
        alpha=np.array([e.alpha for e in exps]),
        beta_dl=np.stack([e.beta_dl for e in exps]),
        beta_ul=np.stack([e.beta_ul for e in exps]),
        gamma_dl=np.stack([np.log1p(e.beta_dl) / e.alpha for e in exps]),
        gamma_ul=np.stack([np.log1p(e.beta_ul) / e.alpha for e in exps]),
        eta=records[-1].eta,
    )
    return ExpansionPoint(point=point, groups=exps)


def build_subproblem(
    exp: ExpansionPoint, config: SystemConfig, ch: ChannelSet, opts: SolverOptions
) -> conic.ConicProgram:
    """Assemble the capped convex subproblem around a full expansion point."""
    return build_subproblem_handles(exp, config, ch, opts).prog


def build_subproblem_handles(
    exp: ExpansionPoint, config: SystemConfig, ch: ChannelSet, opts: SolverOptions
) -> SubproblemHandles:
    nch = ch.normalized()
    slots = proposed_layouts(nch, config)
    builder = SubproblemBuilder(
        slots,
        exp.groups,
        config.p_bs_max,
        alpha_fixed=[None, None],
        include_eves=True,
        qos_ul_nats=opts.qos_ul_nats,
        trust_rel=opts.trust_rel,
        beta_floor=opts.beta_floor,
    )
    return builder.build()


def recover_solution(point: DesignPoint) -> dict:
    """Invert the time-share change of variables and summarize the split."""
    alpha = np.asarray(point.alpha, dtype=float)
    if np.any(alpha <= 1.0):
        raise ValueError("inverse time shares must exceed 1")
    tau = 1.0 / alpha
    return {
        "tau": tau,
        "tau_sum": float(tau.sum()),
        "tau_slack": float(1.0 - tau.sum()),
        "eta_nats": float(point.eta),
        "eta_bps": float(point.eta) * NATS_TO_BPS,
    }


def run(
    config: SystemConfig,
    ch: ChannelSet,
    opts: SolverOptions | None = None,
    hd_channels: ChannelSet | None = None,
):
    """Full design flow for one channel realization.

    Returns ``(design, trace, report)``.  For mode ``hd`` the DL-only
    and UL-only problems are solved separately over the pooled array
    (``hd_channels``) and the achieved rates are halved.
    """
    opts = opts or SolverOptions()
    qos = opts.qos_ul_nats
    nch = ch.normalized()
    records: list[IterationRecord] = []

    if opts.mode == "proposed-fd":
        slots = proposed_layouts(nch, config)
        exps, eta, converged, diag = _solve_scenario(
            slots, [None, None], [2.0, 2.0], config.p_bs_max, opts, qos, records
        )
        taus = [1.0 / exps[0].alpha, 1.0 / exps[1].alpha]
        slot_designs = _slot_designs(slots, exps, taus)
        scale = 1.0
        used_slots = slots

    elif opts.mode == "conventional-fd":
        lay = conventional_layout(nch, config)
        slots = [None, lay]
        exps, eta, converged, diag = _solve_scenario(
            slots, [None, 1.0], [1.0, 1.0], config.p_bs_max, opts, qos, records
        )
        slot_designs = _slot_designs(slots, exps, [None, 1.0])
        scale = 1.0
        used_slots = slots

    else:  # hd
        if qos is not None:
            raise ValueError("the half-duplex baseline has no joint QoS variant")
        if hd_channels is None:
            raise ValueError("mode 'hd' needs the pooled-antenna channel set")
        dl_lay, ul_lay = hd_layouts(hd_channels.normalized(), config)
        exps_dl, eta_dl, conv_dl, diag_dl = _solve_scenario(
            [None, dl_lay], [None, 1.0], [1.0, 1.0], config.p_bs_max, opts, None, records, "dl"
        )
        exps_ul, eta_ul, conv_ul, diag_ul = _solve_scenario(
            [None, ul_lay], [None, 1.0], [1.0, 1.0], config.p_bs_max, opts, None, records, "ul"
        )
        eta = 0.5 * min(eta_dl, eta_ul)
        converged = conv_dl and conv_ul
        diag = {k: max(diag_dl[k], diag_ul[k]) for k in diag_dl}
        slot_designs = _slot_designs([None, dl_lay], exps_dl, [None, 0.5]) + _slot_designs(
            [None, ul_lay], exps_ul, [None, 0.5]
        )
        scale = 0.5
        used_slots = [dl_lay, ul_lay]

    design = ModeDesign(mode=opts.mode, slots=slot_designs, eta=eta * scale)
    report = _build_report(design, used_slots, config, opts, records, eta, converged, diag, scale)
    if opts.validate_outage and opts.mc_samples > 0:
        from . import outage

        rng = np.random.default_rng((config.rng_seed, 0xABCD))
        report.outage = outage.validate_design(
            design, _layouts_in_design_order(design, used_slots), opts.mc_samples, rng
        )
    return design, records, report


def _build_report(
    design: ModeDesign,
    slots_for_report,
    config: SystemConfig,
    opts: SolverOptions,
    records,
    eta,
    converged,
    diag,
    scale,
) -> SolveReport:
    sr_dl, sr_ul, rate_dl, rate_ul = {}, {}, {}, {}
    gam_dl, gam_ul = {}, {}
    ul_pow, ul_budget = {}, {}
    bs_pow = 0.0
    taus = []

    lay_by_slot = _layouts_in_design_order(design, slots_for_report)
    for slot, lay in zip(design.slots, lay_by_slot):
        exp = expand_group(lay, slot.w, slot.v, slot.rho, slot.alpha)
        taus.append(slot.tau)
        bs_pow += slot.tau * rates.group_tx_power(slot.w, slot.v)
        for k, ref in enumerate(slot.dl_refs):
            rate_dl[ref] = exp.rate_dl[k] * scale
            gam_dl[ref] = slot.gamma_dl[k] * scale
            sr_dl[ref] = max(0.0, (exp.rate_dl[k] - slot.gamma_dl[k]) * scale)
        for l, ref in enumerate(slot.ul_refs):
            rate_ul[ref] = exp.rate_ul[l] * scale
            gam_ul[ref] = slot.gamma_ul[l] * scale
            sr_ul[ref] = max(0.0, (exp.rate_ul[l] - slot.gamma_ul[l]) * scale)
            ul_pow[ref] = slot.tau * slot.rho[l] ** 2
            ul_budget[ref] = float(lay.p_ul[l])

    qos = opts.qos_ul_nats
    if qos is None:
        margins = list(sr_dl.values()) + list(sr_ul.values())
        qos_ok = None
    else:
        margins = list(sr_dl.values())
        qos_ok = all(v >= qos * scale - 1e-6 for v in sr_ul.values())
    maxmin = min(margins) if margins else 0.0

    tau_sum = float(sum(taus))
    return SolveReport(
        mode=design.mode,
        eta=eta * scale,
        maxmin_sr_nats=maxmin,
        maxmin_sr_bps=maxmin * NATS_TO_BPS,
        sr_dl=sr_dl,
        sr_ul=sr_ul,
        rate_dl=rate_dl,
        rate_ul=rate_ul,
        gamma_dl=gam_dl,
        gamma_ul=gam_ul,
        bs_power=bs_pow,
        bs_power_budget=config.p_bs_max,
        ul_power=ul_pow,
        ul_power_budget=ul_budget,
        tau=taus,
        tau_sum=tau_sum,
        tau_slack=1.0 - tau_sum,
        iterations=sum(1 for r in records if r.kappa >= 0),
        converged=converged,
        max_resub_violation=diag["resub"],
        max_tightness_residual=diag["tightness"],
        max_nesting_violation=diag["nesting"],
        records=records,
        qos_ok=qos_ok,
    )


def _layouts_in_design_order(design: ModeDesign, slots_for_report):
    if design.mode == "proposed-fd":
        return slots_for_report
    if design.mode == "conventional-fd":
        return [slots_for_report[1]]
    return slots_for_report  # hd: [dl_lay, ul_lay] matches slot order
