"""Convex surrogates and conic block emission for the iterative design.

Every nonconvex constraint of the max-min secrecy problem is replaced by
a convex block built around the current iterate (the "expansion point").
Each surrogate has two properties the tests pin down:

* tightness  - it equals the exact expression at the expansion point;
* direction  - it bounds the exact expression from the safe side.  This
  holds globally for every family except the uplink rate surrogate,
  which is only a local lower bound (see :func:`ul_rate_surrogate`);
  the optimizer therefore re-checks exact rates before adopting a step.

The rates kernels from :mod:`fdsec.rates` provide the exact values the
surrogates are checked against; the blocks land in a
:class:`fdsec.conic.ConicProgram` via :class:`SubproblemBuilder`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import rates
from .conic import ComplexVar, ConicProgram, LinExpr, quad_form_rows, re_inner, im_inner

OMEGA_EIG_DIAGNOSTIC = -1e-10


class InvalidExpansionError(ValueError):
    """The expansion point violates a precondition of the linearization."""


# ---------------------------------------------------------------------------
# Scalar coefficient helpers.


def minorant_coeffs(sinr0: float, t0: float) -> tuple[float, float, float]:
    """Coefficients (a, b, c) with ln(1+s)/t >= a - b/s - c*t for s, t > 0.

    The bound is tight at (sinr0, t0).  b and c are nonnegative, so the
    right side decreases in both 1/s and t.
    """
    if sinr0 <= 0 or t0 <= 0:
        raise ValueError("minorant_coeffs needs positive sinr and time-share inverse")
    zeta = math.log1p(sinr0) / t0
    a = 2.0 * zeta + sinr0 / (t0 * (sinr0 + 1.0))
    b = sinr0**2 / (t0 * (sinr0 + 1.0))
    c = zeta / t0
    return a, b, c


def log_tangent_coeffs(x0: float) -> tuple[float, float]:
    """Coefficients (a, b) with ln(1+x) <= a + b*x for all x >= 0, tight at x0."""
    if x0 < 0:
        raise ValueError("log_tangent_coeffs needs a nonnegative point")
    return math.log1p(x0) - x0 / (1.0 + x0), 1.0 / (1.0 + x0)


def ratio_upper_value(beta: float, alpha: float, beta0: float, alpha0: float) -> float:
    """Convex majorant of beta/alpha, tight at (beta0, alpha0).

    Valid whenever 2*alpha > alpha0 (enforced as a linear row when the
    blocks are emitted).
    """
    if beta0 <= 0 or alpha0 <= 0:
        raise ValueError("expansion point must be positive")
    if 2.0 * alpha - alpha0 <= 0:
        raise ValueError("outside the validity region 2*alpha > alpha0")
    return 0.5 * (beta**2 / (beta0 * alpha0) + beta0 / (2.0 * alpha - alpha0))


# ---------------------------------------------------------------------------
# Group layout and expansion point.


@dataclass
class GroupLayout:
    """Channels and per-user metadata of one serving interval."""

    h: np.ndarray  # (K, Nt)
    g: np.ndarray  # (L, Nr)
    f: np.ndarray  # (K, L)
    g_si: np.ndarray
    sigma_si: float
    noise: float
    h_bar: np.ndarray  # (M, Nt, Nt)
    g_bar: np.ndarray  # (M, L)
    ne: tuple[int, ...]
    eps_dl: np.ndarray  # (K,)
    eps_ul: np.ndarray  # (L,)
    p_ul: np.ndarray  # (L,)
    dl_refs: list = field(default_factory=list)
    ul_refs: list = field(default_factory=list)
    has_an: bool = True

    @property
    def n_dl(self) -> int:
        return self.h.shape[0]

    @property
    def n_ul(self) -> int:
        return self.g.shape[0]

    @property
    def n_eves(self) -> int:
        return self.h_bar.shape[0]


@dataclass
class GroupExpansion:
    """Iterate snapshot plus every cached quantity the surrogates need.

    Beamformers are stored phase-rotated so ``h_k^H w_k`` is real
    positive; the rotation changes nothing measurable.  Uplink
    amplitudes are floored away from zero because the uplink rate
    minorant divides by them.
    """

    w: np.ndarray
    v: np.ndarray | None
    rho: np.ndarray
    alpha: float
    beta_dl: np.ndarray | None
    beta_ul: np.ndarray | None
    re_hw: np.ndarray
    phi_dl: np.ndarray
    sinr_dl: np.ndarray
    rate_dl: np.ndarray
    cov_chain: list[np.ndarray]
    cov_inv: list[np.ndarray]
    omega: list[np.ndarray]
    omega_min_eig: float
    sinr_ul: np.ndarray
    rate_ul: np.ndarray


def expand_group(
    lay: GroupLayout,
    w: np.ndarray,
    v: np.ndarray | None,
    rho: np.ndarray,
    alpha: float,
    beta_dl: np.ndarray | None = None,
    beta_ul: np.ndarray | None = None,
    rho_floor: float = 0.0,
) -> GroupExpansion:
    """Build the expansion point for one group at the given iterate."""
    k, l = lay.n_dl, lay.n_ul
    nt = lay.h.shape[1] if k else lay.g_si.shape[0]
    w = np.array(w, dtype=complex).reshape(k, nt)
    rho = np.maximum(np.asarray(rho, dtype=float), rho_floor)
    v = None if (v is None or not lay.has_an) else np.array(v, dtype=complex)

    for kk in range(k):
        z = complex(lay.h[kk].conj() @ w[kk])
        if abs(z) > 0:
            w[kk] *= np.exp(-1j * np.angle(z))
    re_hw = np.real(np.einsum("kn,kn->k", lay.h.conj(), w)) if k else np.zeros(0)
    if k and np.any(re_hw <= 0):
        raise InvalidExpansionError("every beam must have positive gain on its own channel")
    if l and np.any(rho <= 0):
        raise InvalidExpansionError("uplink amplitudes must be positive at the expansion point")
    if alpha <= 0:
        raise InvalidExpansionError("alpha must be positive")

    phi_dl = rates.dl_interference(lay.h, w, v, rho, lay.f, lay.noise)
    sinr_dl = re_hw**2 / phi_dl if k else np.zeros(0)
    rate_dl = np.log1p(sinr_dl) / alpha

    chain = rates.ul_covariance_chain(lay.g, rho, w, v, lay.g_si, lay.sigma_si, lay.noise)
    inv = [np.linalg.inv(c) for c in chain]
    sinr_ul = np.array(
        [rho[j] ** 2 * np.real(lay.g[j].conj() @ inv[j + 1] @ lay.g[j]) for j in range(l)]
    )
    # difference of successive inverses, written through the rank-one
    # update identity so it is Hermitian PSD to machine precision
    omega = []
    for j in range(l):
        u = inv[j + 1] @ lay.g[j]
        scale = rho[j] ** 2 / (1.0 + sinr_ul[j])
        om = scale * np.outer(u, u.conj())
        omega.append(0.5 * (om + om.conj().T))
    min_eig = 0.0
    if omega:
        min_eig = min(float(np.linalg.eigvalsh(o).min()) for o in omega)
        if min_eig < OMEGA_EIG_DIAGNOSTIC:
            warnings.warn(
                f"decoding-chain curvature matrix has eigenvalue {min_eig:.2e} < 0",
                RuntimeWarning,
            )
    rate_ul = np.log1p(sinr_ul) / alpha if l else np.zeros(0)

    return GroupExpansion(
        w=w,
        v=v,
        rho=rho,
        alpha=float(alpha),
        beta_dl=None if beta_dl is None else np.asarray(beta_dl, dtype=float),
        beta_ul=None if beta_ul is None else np.asarray(beta_ul, dtype=float),
        re_hw=re_hw,
        phi_dl=phi_dl,
        sinr_dl=sinr_dl,
        rate_dl=rate_dl,
        cov_chain=chain,
        cov_inv=inv,
        omega=omega,
        omega_min_eig=min_eig,
        sinr_ul=sinr_ul,
        rate_ul=rate_ul,
    )


def proposed_layouts(ch, config=None) -> list[GroupLayout]:
    """The two serving intervals of the grouped design, one per group.

    Outage targets and uplink budgets come from ``config`` when given;
    the placeholders used otherwise only matter for block emission, not
    for expansion-point computation.
    """
    k, l = ch.h.shape[1], ch.g.shape[1]
    out = []
    for i in range(2):
        eps_dl = np.asarray(config.epsilon_dl[i]) if config else np.full(k, 0.99)
        eps_ul = np.asarray(config.epsilon_ul[i]) if config else np.full(l, 0.99)
        p_ul = np.asarray(config.p_ul_max[i]) if config else np.ones(l)
        out.append(
            GroupLayout(
                h=ch.h[i],
                g=ch.g[i],
                f=ch.f[i],
                g_si=ch.g_si,
                sigma_si=ch.sigma_si,
                noise=ch.noise_power,
                h_bar=ch.h_bar,
                g_bar=ch.g_bar[:, i, :],
                ne=tuple(ch.eve_antennas),
                eps_dl=eps_dl,
                eps_ul=eps_ul,
                p_ul=p_ul,
                dl_refs=[(i, kk) for kk in range(k)],
                ul_refs=[(i, ll) for ll in range(l)],
            )
        )
    return out


@dataclass
class ExpansionPoint:
    """Two-group expansion of a full :class:`fdsec.rates.DesignPoint`."""

    point: rates.DesignPoint
    groups: list[GroupExpansion]


def make_expansion(point: rates.DesignPoint, ch, rho_floor: float = 0.0) -> ExpansionPoint:
    lays = proposed_layouts(ch)
    groups = []
    rotated = rates.DesignPoint(
        w=point.w.copy(),
        v=point.v.copy(),
        rho=np.maximum(point.rho, rho_floor),
        alpha=np.asarray(point.alpha, dtype=float).copy(),
        beta_dl=point.beta_dl,
        beta_ul=point.beta_ul,
        gamma_dl=point.gamma_dl,
        gamma_ul=point.gamma_ul,
        eta=point.eta,
    )
    for i, lay in enumerate(lays):
        gexp = expand_group(
            lay,
            point.w[i],
            point.v[i],
            point.rho[i],
            float(point.alpha[i]),
            beta_dl=None if point.beta_dl is None else point.beta_dl[i],
            beta_ul=None if point.beta_ul is None else point.beta_ul[i],
            rho_floor=rho_floor,
        )
        rotated.w[i] = gexp.w
        rotated.rho[i] = gexp.rho
        groups.append(gexp)
    return ExpansionPoint(point=rotated, groups=groups)


# ---------------------------------------------------------------------------
# Surrogate value evaluators (used by the bound-direction and tightness checks).


def dl_rate_surrogate(
    lay: GroupLayout, exp: GroupExpansion, w, v, rho, alpha: float, k: int
) -> float:
    """Concave minorant of the DL rate of user k, evaluated at a point.

    Returns -inf outside the trust region where the linearized squared
    gain is nonpositive.
    """
    a, b, c = minorant_coeffs(exp.sinr_dl[k], exp.alpha)
    phi = rates.dl_interference(lay.h, np.asarray(w), v, np.asarray(rho), lay.f, lay.noise)[k]
    re_hw = float(np.real(lay.h[k].conj() @ np.asarray(w)[k]))
    lin_sq = exp.re_hw[k] * (2.0 * re_hw - exp.re_hw[k])
    if lin_sq <= 0:
        return -math.inf
    return a - b * phi / lin_sq - c * alpha


def ul_quadratic_value(lay: GroupLayout, exp: GroupExpansion, w, v, rho, l: int) -> float:
    """Convex quadratic replacing the uplink SINR at decoding stage l."""
    w = np.asarray(w)
    rho = np.asarray(rho)
    chain = rates.ul_covariance_chain(lay.g, rho, w, v, lay.g_si, lay.sigma_si, lay.noise)
    inner = rho[l] ** 2 * np.outer(lay.g[l], lay.g[l].conj()) + chain[l + 1]
    return float(np.real(np.trace(inner @ exp.omega[l])))


def ul_rate_surrogate(
    lay: GroupLayout, exp: GroupExpansion, w, v, rho, alpha: float, l: int
) -> float:
    """Concave surrogate of the UL rate of user l, evaluated at a point.

    Tight at the expansion point and a lower bound in its neighborhood,
    but not globally: the scalar core ln(1 + rho^2 q)/alpha is not
    jointly convex, so the tangent construction can cross above the
    exact rate for large simultaneous moves at small SINR.  Iterate
    acceptance therefore re-checks exact rates rather than trusting
    this bound.
    """
    a_t, b_t, c_t = ul_minorant_coeffs(exp, l)
    quad = ul_quadratic_value(lay, exp, w, v, rho, l)
    return a_t + b_t * float(np.asarray(rho)[l]) - quad / exp.alpha - c_t * alpha


def ul_minorant_coeffs(exp: GroupExpansion, l: int) -> tuple[float, float, float]:
    if exp.rho[l] <= 0:
        raise InvalidExpansionError("uplink amplitude must be positive")
    a_t = 2.0 * exp.rate_ul[l] - exp.sinr_ul[l] / exp.alpha
    b_t = 2.0 * exp.sinr_ul[l] / (exp.rho[l] * exp.alpha)
    c_t = exp.rate_ul[l] / exp.alpha
    return a_t, b_t, c_t


def eve_dl_stat_surrogate(
    lay: GroupLayout, exp: GroupExpansion, w, v, rho, m: int, k: int
) -> float:
    """Affine minorant of the expected eavesdropper interference (DL side)."""
    w = np.asarray(w)
    rho = np.asarray(rho)
    hb = lay.h_bar[m]
    psi0, _ = rates.eve_statistic_denominators(hb, lay.g_bar[m], exp.w, exp.v, exp.rho)
    lin = 0.0
    for j in range(lay.n_dl):
        if j != k:
            lin += 2.0 * float(np.real(exp.w[j].conj() @ hb @ w[j]))
    if exp.v is not None and v is not None:
        lin += 2.0 * float(np.real(np.trace(exp.v.conj().T @ hb @ v)))
    lin += 2.0 * float((exp.rho * rho * lay.g_bar[m]).sum())
    return lin - float(psi0[k])


def eve_ul_stat_surrogate(
    lay: GroupLayout, exp: GroupExpansion, w, v, rho, m: int, l: int
) -> float:
    """Affine minorant of the expected eavesdropper interference (UL side)."""
    w = np.asarray(w)
    rho = np.asarray(rho)
    hb = lay.h_bar[m]
    _, chi0 = rates.eve_statistic_denominators(hb, lay.g_bar[m], exp.w, exp.v, exp.rho)
    lin = 0.0
    for j in range(lay.n_dl):
        lin += 2.0 * float(np.real(exp.w[j].conj() @ hb @ w[j]))
    if exp.v is not None and v is not None:
        lin += 2.0 * float(np.real(np.trace(exp.v.conj().T @ hb @ v)))
    mask = np.arange(lay.n_ul) != l
    lin += 2.0 * float((exp.rho[mask] * rho[mask] * lay.g_bar[m][mask]).sum())
    return lin - float(chi0[l])


def bs_power_surrogate(
    exp1: GroupExpansion | None,
    w1,
    v1,
    w2,
    v2,
    alpha2: float,
    alpha2_0: float,
) -> float:
    """Convex majorant of the time-shared BS power, tight at the iterate.

    Group 1 is weighted by (1 - 1/alpha2) exactly; the nonconvex cross
    term is linearized around (X1_0, alpha2_0).  With no group 1 the
    expression is exact.
    """
    p2 = rates.group_tx_power(np.asarray(w2), v2) if w2 is not None else 0.0
    if exp1 is None:
        return p2 / alpha2
    w1 = np.asarray(w1)
    p1 = rates.group_tx_power(w1, v1)
    inner = float(np.real((exp1.w.conj() * w1).sum()))
    if exp1.v is not None and v1 is not None:
        inner += float(np.real(np.trace(exp1.v.conj().T @ v1)))
    p1_0 = rates.group_tx_power(exp1.w, exp1.v)
    return p1 + p2 / alpha2 - 2.0 * inner / alpha2_0 + p1_0 * alpha2 / alpha2_0**2


def ul_power_surrogate(rho: float, alpha2: float, rho0: float, alpha2_0: float) -> float:
    """Convex majorant of (1 - 1/alpha2) * rho^2, tight at (rho0, alpha2_0)."""
    return rho**2 - 2.0 * rho0 * rho / alpha2_0 + rho0**2 * alpha2 / alpha2_0**2


# ---------------------------------------------------------------------------
# Subproblem assembly.


@dataclass
class SlotVars:
    """Variable handles of one serving interval inside the conic program.

    Epigraph auxiliaries are stored together with a fixed positive scale
    chosen so the solver-side variable sits near 1 at the expansion
    point; every emitted expression uses (scale * variable), which keeps
    the conic data well conditioned across the huge SINR range.
    """

    w: ComplexVar | None
    v: ComplexVar | None
    rho: np.ndarray | None
    alpha_idx: int | None
    alpha_fixed: float | None
    inv_alpha_idx: int | None
    gam_dl: np.ndarray | None = None
    gam_ul: np.ndarray | None = None
    beta_dl: np.ndarray | None = None
    beta_ul: np.ndarray | None = None
    s_dl: np.ndarray | None = None
    s_dl_scale: np.ndarray | None = None
    q_ul: np.ndarray | None = None
    q_ul_scale: np.ndarray | None = None
    r_sq_dl: np.ndarray | None = None
    r_sq_dl_scale: np.ndarray | None = None
    r_inv2a_dl: np.ndarray | None = None
    r_sq_ul: np.ndarray | None = None
    r_sq_ul_scale: np.ndarray | None = None
    r_inv2a_ul: np.ndarray | None = None
    inv2a_scale: float = 1.0
    inv_alpha_scale: float = 1.0
    t_pow: int | None = None
    s_rho: np.ndarray | None = None

    def alpha_expr(self, prog: ConicProgram) -> LinExpr:
        if self.alpha_idx is not None:
            return prog.x(self.alpha_idx)
        return LinExpr.constant(self.alpha_fixed)

    def inv_alpha_expr(self, prog: ConicProgram) -> LinExpr:
        if self.inv_alpha_idx is not None:
            return prog.x(self.inv_alpha_idx) * self.inv_alpha_scale
        return LinExpr.constant(1.0 / self.alpha_fixed)


@dataclass
class SubproblemHandles:
    prog: ConicProgram
    eta_idx: int
    slots: list[SlotVars | None]
    beta_floor: float


class SubproblemBuilder:
    """Emits the full conic subproblem around a list of group expansions.

    ``slots`` holds up to two serving intervals; single-interval modes
    pass ``None`` for the first slot so the exact convex power forms of
    the second interval apply.  ``alpha_fixed`` entries freeze the
    inverse time share of a slot (1 means the whole block).
    """

    def __init__(
        self,
        slots: list[GroupLayout | None],
        expansions: list[GroupExpansion | None],
        p_bs: float,
        *,
        alpha_fixed: list[float | None],
        include_eves: bool = True,
        qos_ul_nats: float | None = None,
        trust_rel: float = 1e-8,
        beta_floor: float = 1e-9,
        alpha_min_margin: float = 1e-6,
    ) -> None:
        if len(slots) != 2 or len(expansions) != 2 or len(alpha_fixed) != 2:
            raise ValueError("expected exactly two slot entries (first may be None)")
        if slots[1] is None:
            raise ValueError("the second slot must always be populated")
        if include_eves:
            for lay, exp in zip(slots, expansions):
                if lay is None:
                    continue
                if (lay.n_dl and exp.beta_dl is None) or (lay.n_ul and exp.beta_ul is None):
                    raise InvalidExpansionError(
                        "capped subproblems need eavesdropper-SINR slacks at the expansion point"
                    )
        self.slots = slots
        self.exps = expansions
        self.p_bs = float(p_bs)
        self.alpha_fixed = alpha_fixed
        self.include_eves = include_eves
        self.qos_ul_nats = qos_ul_nats
        self.trust_rel = trust_rel
        self.beta_floor = beta_floor
        self.alpha_min_margin = alpha_min_margin

    # -- variable allocation -------------------------------------------------

    def _alloc(self) -> SubproblemHandles:
        prog = ConicProgram()
        eta = prog.add_var("eta")
        out: list[SlotVars | None] = []
        for i, lay in enumerate(self.slots):
            if lay is None:
                out.append(None)
                continue
            exp = self.exps[i]
            k, l = lay.n_dl, lay.n_ul
            nt = lay.h.shape[1] if k else lay.g_si.shape[0]
            w = prog.add_complex(f"w{i}", (k, nt)) if k else None
            v = prog.add_complex(f"v{i}", (nt, nt)) if lay.has_an else None
            rho = prog.add_vars(f"rho{i}", l) if l else None
            fixed = self.alpha_fixed[i]
            alpha_idx = None if fixed is not None else prog.add_var(f"alpha{i}")
            inv_idx = None if fixed is not None else prog.add_var(f"inv_alpha{i}")
            sv = SlotVars(
                w=w,
                v=v,
                rho=rho,
                alpha_idx=alpha_idx,
                alpha_fixed=fixed,
                inv_alpha_idx=inv_idx,
                inv_alpha_scale=1.0 / exp.alpha,
                inv2a_scale=1.0 / exp.alpha,
            )
            if self.include_eves:
                if k:
                    sv.gam_dl = prog.add_vars(f"gam_dl{i}", k)
                    sv.beta_dl = prog.add_vars(f"beta_dl{i}", k)
                    sv.r_sq_dl = prog.add_vars(f"rsq_dl{i}", k)
                    sv.r_sq_dl_scale = np.asarray(exp.beta_dl, dtype=float) ** 2
                    sv.r_inv2a_dl = prog.add_vars(f"rinv_dl{i}", k)
                if l:
                    sv.gam_ul = prog.add_vars(f"gam_ul{i}", l)
                    sv.beta_ul = prog.add_vars(f"beta_ul{i}", l)
                    sv.r_sq_ul = prog.add_vars(f"rsq_ul{i}", l)
                    sv.r_sq_ul_scale = np.asarray(exp.beta_ul, dtype=float) ** 2
                    sv.r_inv2a_ul = prog.add_vars(f"rinv_ul{i}", l)
            if k:
                sv.s_dl = prog.add_vars(f"s_dl{i}", k)
                sv.s_dl_scale = 1.0 / exp.sinr_dl
            if l:
                sv.q_ul = prog.add_vars(f"q_ul{i}", l)
                sv.q_ul_scale = np.maximum(exp.sinr_ul, 1.0)
            sv.t_pow = prog.add_var(f"t_pow{i}") if (k or lay.has_an) else None
            if i == 0 and l:
                sv.s_rho = prog.add_vars(f"s_rho{i}", l)
            out.append(sv)
        return SubproblemHandles(prog=prog, eta_idx=eta, slots=out, beta_floor=self.beta_floor)

    # -- block emission --------------------------------------------------------

    def build(self) -> SubproblemHandles:
        hs = self._alloc()
        prog = hs.prog
        prog.maximize(prog.x(hs.eta_idx))
        self._time_rows(hs)
        for i in (0, 1):
            if self.slots[i] is None:
                continue
            self._rate_rows(hs, i)
            if self.include_eves:
                self._eve_rows(hs, i)
        self._power_rows(hs)
        return hs

    def _time_rows(self, hs: SubproblemHandles) -> None:
        prog = hs.prog
        inv_sum = LinExpr.constant(0.0)
        any_var = False
        for i in (0, 1):
            sv = hs.slots[i]
            if sv is None:
                continue
            if sv.alpha_idx is not None:
                any_var = True
                a_expr = prog.x(sv.alpha_idx)
                prog.ge(a_expr, 1.0 + self.alpha_min_margin)
                # inv_alpha >= 1/alpha
                prog.rsoc([LinExpr.constant(1.0)], sv.inv_alpha_expr(prog), a_expr)
            inv_sum = inv_sum + sv.inv_alpha_expr(prog)
        if any_var:
            prog.le(inv_sum, 1.0)

    def _rate_rows(self, hs: SubproblemHandles, i: int) -> None:
        prog, lay, exp, sv = hs.prog, self.slots[i], self.exps[i], hs.slots[i]
        eta = prog.x(hs.eta_idx)
        alpha_expr = sv.alpha_expr(prog)
        if sv.alpha_idx is not None:
            # validity region of every 2*alpha - alpha0 denominator
            prog.ge(alpha_expr * 2.0 - exp.alpha, 1e-8 * exp.alpha)

        for k in range(lay.n_dl):
            h_k = lay.h[k]
            re_hw = re_inner(h_k, _row(sv.w, k))
            delta = self.trust_rel * float(np.linalg.norm(h_k)) * float(np.linalg.norm(exp.w[k]))
            prog.ge(re_hw, 0.0)
            prog.ge(re_hw * 2.0 - exp.re_hw[k], delta)

            # phi(X) <= s * (linearized squared gain)
            vec = self._dl_interference_rows(lay, sv, k)
            lin_sq = re_hw * (2.0 * exp.re_hw[k]) - exp.re_hw[k] ** 2
            s_expr = prog.x(sv.s_dl[k]) * float(sv.s_dl_scale[k])
            prog.rsoc(vec, s_expr, lin_sq)

            a, b, c = minorant_coeffs(exp.sinr_dl[k], exp.alpha)
            rhs = eta + (prog.x(sv.gam_dl[k]) if self.include_eves else LinExpr.constant(0.0))
            prog.le(s_expr * b + alpha_expr * c + rhs, a)

        for l in range(lay.n_ul):
            vec, const = self._ul_quadratic_rows(lay, exp, sv, l)
            q_expr = prog.x(sv.q_ul[l]) * float(sv.q_ul_scale[l])
            prog.rsoc(vec, q_expr - const, LinExpr.constant(1.0))
            a_t, b_t, c_t = ul_minorant_coeffs(exp, l)
            if self.include_eves:
                gam = prog.x(sv.gam_ul[l])
                rhs = (gam + self.qos_ul_nats) if self.qos_ul_nats is not None else (eta + gam)
            else:
                rhs = (eta + self.qos_ul_nats) if self.qos_ul_nats is not None else eta
            prog.le(
                prog.x(sv.rho[l]) * (-b_t) + q_expr * (1.0 / exp.alpha) + alpha_expr * c_t + rhs,
                a_t,
            )

    def _dl_interference_rows(self, lay: GroupLayout, sv: SlotVars, k: int) -> list[LinExpr]:
        rows: list[LinExpr] = []
        h_k = lay.h[k]
        for j in range(lay.n_dl):
            if j == k:
                continue
            rows.append(re_inner(h_k, _row(sv.w, j)))
            rows.append(im_inner(h_k, _row(sv.w, j)))
        if sv.v is not None:
            for c in range(sv.v.shape[1]):
                rows.append(re_inner(h_k, sv.v.column(c)))
                rows.append(im_inner(h_k, sv.v.column(c)))
        for l in range(lay.n_ul):
            rows.append(LinExpr({int(sv.rho[l]): abs(lay.f[k, l])}))
        rows.append(LinExpr.constant(math.sqrt(lay.noise)))
        return rows

    def _ul_quadratic_rows(
        self, lay: GroupLayout, exp: GroupExpansion, sv: SlotVars, l: int
    ) -> tuple[list[LinExpr], float]:
        omega = 0.5 * (exp.omega[l] + exp.omega[l].conj().T)
        rows: list[LinExpr] = []
        for j in range(l, lay.n_ul):
            coef = float(np.real(lay.g[j].conj() @ omega @ lay.g[j]))
            rows.append(LinExpr({int(sv.rho[j]): math.sqrt(max(coef, 0.0))}))
        if lay.sigma_si > 0.0 and (sv.w is not None or sv.v is not None):
            m_si = lay.sigma_si * (lay.g_si @ omega @ lay.g_si.conj().T)
            m_si = 0.5 * (m_si + m_si.conj().T)
            if sv.w is not None:
                for j in range(lay.n_dl):
                    rows.extend(quad_form_rows(m_si, _row(sv.w, j)))
            if sv.v is not None:
                for c in range(sv.v.shape[1]):
                    rows.extend(quad_form_rows(m_si, sv.v.column(c)))
        const = lay.noise * float(np.real(np.trace(omega)))
        return rows, const

    def _eve_rows(self, hs: SubproblemHandles, i: int) -> None:
        prog, lay, exp, sv = hs.prog, self.slots[i], self.exps[i], hs.slots[i]
        alpha_expr = sv.alpha_expr(prog)
        m_count = lay.n_eves

        for k in range(lay.n_dl):
            beta = prog.x(sv.beta_dl[k])
            prog.ge(beta, self.beta_floor)
            for m in range(m_count):
                cap = (1.0 - lay.eps_dl[k] ** (1.0 / m_count)) * lay.ne[m] * lay.noise
                stat = self._eve_dl_stat_expr(lay, exp, sv, m, k) + cap
                prog.rsoc(quad_form_rows(lay.h_bar[m], _row(sv.w, k)), beta, stat)
            self._cap_row(
                hs,
                sv,
                beta_idx=int(sv.beta_dl[k]),
                beta0=float(exp.beta_dl[k]),
                r_sq_idx=int(sv.r_sq_dl[k]),
                r_sq_scale=float(sv.r_sq_dl_scale[k]),
                r_inv_idx=int(sv.r_inv2a_dl[k]),
                gamma=prog.x(sv.gam_dl[k]),
                exp=exp,
                alpha_expr=alpha_expr,
                inv_alpha=sv.inv_alpha_expr(prog),
            )

        for l in range(lay.n_ul):
            beta = prog.x(sv.beta_ul[l])
            prog.ge(beta, self.beta_floor)
            for m in range(m_count):
                cap = (1.0 - lay.eps_ul[l] ** (1.0 / m_count)) * lay.ne[m] * lay.noise
                stat = self._eve_ul_stat_expr(lay, exp, sv, m, l) + cap
                rows = [LinExpr({int(sv.rho[l]): math.sqrt(lay.g_bar[m][l])})]
                prog.rsoc(rows, beta, stat)
            self._cap_row(
                hs,
                sv,
                beta_idx=int(sv.beta_ul[l]),
                beta0=float(exp.beta_ul[l]),
                r_sq_idx=int(sv.r_sq_ul[l]),
                r_sq_scale=float(sv.r_sq_ul_scale[l]),
                r_inv_idx=int(sv.r_inv2a_ul[l]),
                gamma=prog.x(sv.gam_ul[l]),
                exp=exp,
                alpha_expr=alpha_expr,
                inv_alpha=sv.inv_alpha_expr(prog),
            )

    def _eve_dl_stat_expr(self, lay, exp, sv: SlotVars, m: int, k: int) -> LinExpr:
        hb = lay.h_bar[m]
        psi0, _ = rates.eve_statistic_denominators(hb, lay.g_bar[m], exp.w, exp.v, exp.rho)
        expr = LinExpr.constant(-float(psi0[k]))
        for j in range(lay.n_dl):
            if j != k:
                expr = expr + re_inner(hb @ exp.w[j], _row(sv.w, j)) * 2.0
        if exp.v is not None and sv.v is not None:
            hv = hb @ exp.v
            for c in range(sv.v.shape[1]):
                expr = expr + re_inner(hv[:, c], sv.v.column(c)) * 2.0
        for l in range(lay.n_ul):
            expr = expr + LinExpr({int(sv.rho[l]): 2.0 * exp.rho[l] * lay.g_bar[m][l]})
        return expr

    def _eve_ul_stat_expr(self, lay, exp, sv: SlotVars, m: int, l: int) -> LinExpr:
        hb = lay.h_bar[m]
        _, chi0 = rates.eve_statistic_denominators(hb, lay.g_bar[m], exp.w, exp.v, exp.rho)
        expr = LinExpr.constant(-float(chi0[l]))
        for j in range(lay.n_dl):
            expr = expr + re_inner(hb @ exp.w[j], _row(sv.w, j)) * 2.0
        if exp.v is not None and sv.v is not None:
            hv = hb @ exp.v
            for c in range(sv.v.shape[1]):
                expr = expr + re_inner(hv[:, c], sv.v.column(c)) * 2.0
        for j in range(lay.n_ul):
            if j != l:
                expr = expr + LinExpr({int(sv.rho[j]): 2.0 * exp.rho[j] * lay.g_bar[m][j]})
        return expr

    def _cap_row(
        self,
        hs: SubproblemHandles,
        sv: SlotVars,
        *,
        beta_idx: int,
        beta0: float,
        r_sq_idx: int,
        r_sq_scale: float,
        r_inv_idx: int,
        gamma: LinExpr,
        exp: GroupExpansion,
        alpha_expr: LinExpr,
        inv_alpha: LinExpr,
    ) -> None:
        """Cap the eavesdropper rate: ln(1+beta)/alpha <= gamma, convexified."""
        prog = hs.prog
        a0, b0 = log_tangent_coeffs(beta0)
        r_sq = prog.x(r_sq_idx) * r_sq_scale
        r_inv = prog.x(r_inv_idx) * sv.inv2a_scale
        prog.rsoc([prog.x(beta_idx)], r_sq, LinExpr.constant(1.0))
        prog.rsoc([LinExpr.constant(1.0)], r_inv, alpha_expr * 2.0 - exp.alpha)
        expr = (
            inv_alpha * a0
            + r_sq * (b0 / (2.0 * beta0 * exp.alpha))
            + r_inv * (b0 * beta0 / 2.0)
            - gamma
        )
        prog.le(expr, 0.0)

    def _power_rows(self, hs: SubproblemHandles) -> None:
        prog = hs.prog
        lay1, sv1 = self.slots[1], hs.slots[1]
        exp1 = self.exps[1]
        alpha2_expr = sv1.alpha_expr(prog)
        alpha2_0 = exp1.alpha

        for i in (0, 1):
            sv = hs.slots[i]
            lay = self.slots[i]
            if sv is None or sv.rho is None:
                continue
            for l in range(lay.n_ul):
                prog.ge(prog.x(sv.rho[l]), 0.0)

        # BS power epigraphs
        tx_rows_2 = self._tx_rows(sv1)
        if tx_rows_2:
            prog.rsoc(tx_rows_2, prog.x(sv1.t_pow), alpha2_expr)

        lay0, sv0, exp0 = self.slots[0], hs.slots[0], self.exps[0]
        if sv0 is not None:
            total = LinExpr.constant(0.0)
            if sv0.t_pow is not None:
                tx_rows_1 = self._tx_rows(sv0)
                prog.rsoc(tx_rows_1, prog.x(sv0.t_pow), LinExpr.constant(1.0))
                total = total + prog.x(sv0.t_pow)
                # linearized cross terms of the group-1 power weight
                inner = LinExpr.constant(0.0)
                if sv0.w is not None:
                    for k in range(lay0.n_dl):
                        inner = inner + re_inner(exp0.w[k], _row(sv0.w, k))
                if sv0.v is not None and exp0.v is not None:
                    for c in range(sv0.v.shape[1]):
                        inner = inner + re_inner(exp0.v[:, c], sv0.v.column(c))
                p1_0 = rates.group_tx_power(exp0.w, exp0.v)
                total = total + inner * (-2.0 / alpha2_0) + alpha2_expr * (p1_0 / alpha2_0**2)
            if tx_rows_2:
                total = total + prog.x(sv1.t_pow)
            prog.le(total, self.p_bs)
            # group-1 uplink budgets share the same time weight
            for l in range(lay0.n_ul):
                prog.rsoc([prog.x(sv0.rho[l])], prog.x(sv0.s_rho[l]), LinExpr.constant(1.0))
                rho0 = float(exp0.rho[l])
                expr = (
                    prog.x(sv0.s_rho[l])
                    + prog.x(sv0.rho[l]) * (-2.0 * rho0 / alpha2_0)
                    + alpha2_expr * (rho0**2 / alpha2_0**2)
                )
                prog.le(expr, float(lay0.p_ul[l]))
        elif tx_rows_2:
            prog.le(prog.x(sv1.t_pow), self.p_bs)

        # slot-2 uplink budgets: rho^2 <= p * alpha2
        for l in range(lay1.n_ul):
            prog.rsoc(
                [prog.x(sv1.rho[l])], LinExpr.constant(float(lay1.p_ul[l])), alpha2_expr
            )

    def _tx_rows(self, sv: SlotVars) -> list[LinExpr]:
        rows: list[LinExpr] = []
        if sv.w is not None:
            rows.extend(LinExpr({int(i): 1.0}) for i in sv.w.all_indices())
        if sv.v is not None:
            rows.extend(LinExpr({int(i): 1.0}) for i in sv.v.all_indices())
        return rows

    # -- feasible embedding of the expansion point -------------------------------

    def feasible_point(self, hs: SubproblemHandles) -> np.ndarray:
        """The expansion point expressed in the subproblem's variables.

        Auxiliary variables sit at their tight values, the caps at the
        tangent values, and eta at the worst-user margin, so the result
        is feasible for the emitted blocks whenever the expansion point
        was produced by an accepted iterate.
        """
        x = np.zeros(hs.prog.n)
        margins: list[float] = []
        for i in (0, 1):
            sv, exp, lay = hs.slots[i], self.exps[i], self.slots[i]
            if sv is None:
                continue
            if sv.w is not None:
                x[sv.w.re.ravel()] = exp.w.real.ravel()
                x[sv.w.im.ravel()] = exp.w.imag.ravel()
            if sv.v is not None and exp.v is not None:
                x[sv.v.re.ravel()] = exp.v.real.ravel()
                x[sv.v.im.ravel()] = exp.v.imag.ravel()
            if sv.rho is not None:
                x[sv.rho] = exp.rho
            if sv.alpha_idx is not None:
                x[sv.alpha_idx] = exp.alpha
                x[sv.inv_alpha_idx] = (1.0 / exp.alpha) / sv.inv_alpha_scale
            if sv.s_dl is not None:
                x[sv.s_dl] = (1.0 / exp.sinr_dl) / sv.s_dl_scale
            if sv.q_ul is not None:
                x[sv.q_ul] = exp.sinr_ul / sv.q_ul_scale
            if sv.t_pow is not None:
                p = rates.group_tx_power(exp.w, exp.v)
                x[sv.t_pow] = p if i == 0 else p / exp.alpha
            if sv.s_rho is not None:
                x[sv.s_rho] = exp.rho**2

            gam_dl = np.zeros(lay.n_dl)
            gam_ul = np.zeros(lay.n_ul)
            if self.include_eves:
                gam_dl = np.log1p(exp.beta_dl) / exp.alpha
                gam_ul = np.log1p(exp.beta_ul) / exp.alpha
                if sv.gam_dl is not None:
                    x[sv.gam_dl] = gam_dl
                    x[sv.beta_dl] = exp.beta_dl
                    x[sv.r_sq_dl] = exp.beta_dl**2 / sv.r_sq_dl_scale
                    x[sv.r_inv2a_dl] = (1.0 / exp.alpha) / sv.inv2a_scale
                if sv.gam_ul is not None:
                    x[sv.gam_ul] = gam_ul
                    x[sv.beta_ul] = exp.beta_ul
                    x[sv.r_sq_ul] = exp.beta_ul**2 / sv.r_sq_ul_scale
                    x[sv.r_inv2a_ul] = (1.0 / exp.alpha) / sv.inv2a_scale
            margins.extend(exp.rate_dl - gam_dl)
            if self.qos_ul_nats is None:
                margins.extend(exp.rate_ul - gam_ul)
            else:
                shortfall = exp.rate_ul - gam_ul - self.qos_ul_nats
                if self.include_eves and np.any(shortfall < -1e-12):
                    raise InvalidExpansionError("expansion point misses the uplink requirement")
                if not self.include_eves:
                    margins.extend(shortfall)
        x[hs.eta_idx] = min(margins) if margins else 0.0
        return x


def _row(cvar: ComplexVar, k: int) -> ComplexVar:
    return ComplexVar(re=cvar.re[k], im=cvar.im[k])
