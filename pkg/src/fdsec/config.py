"""Scenario configuration and the flat key/value config file format.

All powers are stored in watts and all probabilities as plain fractions;
dB or dBm appears only at the file boundary (keys suffixed ``_db`` /
``_dbm``).  The fields whose names already carry a unit suffix
(``noise_psd_dbm_hz``, ``rician_k_db``) keep their dB-domain values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace, fields


def dbm_to_watts(p_dbm: float) -> float:
    return 10.0 ** ((p_dbm - 30.0) / 10.0)


def watts_to_dbm(p_watts: float) -> float:
    if p_watts <= 0:
        raise ValueError("power must be positive")
    return 10.0 * math.log10(p_watts) + 30.0


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """Full scenario description for one small-cell network.

    ``n_dl`` / ``n_ul`` count users per group (two groups are served,
    so the network has twice as many of each).  ``p_ul_max`` and the
    outage targets are per user, indexed ``[group][user]``.
    """

    n_dl: int = 2
    n_ul: int = 2
    n_eves: int = 2
    n_tx: int = 5
    n_rx: int = 5
    eve_antennas: tuple[int, ...] = (2, 2)
    p_bs_max: float = dbm_to_watts(26.0)
    p_ul_max: tuple[tuple[float, ...], ...] = (
        (dbm_to_watts(23.0),) * 2,
        (dbm_to_watts(23.0),) * 2,
    )
    noise_psd_dbm_hz: float = -174.0
    bandwidth_hz: float = 10e6
    sigma_si: float = db_to_linear(-75.0)
    rician_k_db: float = 5.0
    cell_radius_m: float = 100.0
    inner_radius_m: float = 50.0
    min_bs_distance_m: float = 10.0
    epsilon_dl: tuple[tuple[float, ...], ...] = ((0.99,) * 2, (0.99,) * 2)
    epsilon_ul: tuple[tuple[float, ...], ...] = ((0.99,) * 2, (0.99,) * 2)
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_dl < 0 or self.n_ul < 0 or self.n_dl + self.n_ul < 1:
            raise ValueError("each group needs at least one user")
        if self.n_tx < 1 or self.n_rx < 1 or self.n_eves < 1:
            raise ValueError("n_tx, n_rx and n_eves must be positive")
        if len(self.eve_antennas) != self.n_eves:
            raise ValueError("eve_antennas must list one count per eavesdropper")
        if any(ne < 1 for ne in self.eve_antennas):
            raise ValueError("eavesdropper antenna counts must be positive")
        if not 0.0 <= self.sigma_si < 1.0:
            raise ValueError("sigma_si must lie in [0, 1)")
        if self.p_bs_max <= 0:
            raise ValueError("p_bs_max must be positive")
        if len(self.p_ul_max) != 2 or any(len(row) != self.n_ul for row in self.p_ul_max):
            raise ValueError("p_ul_max must have shape (2, n_ul)")
        if any(p <= 0 for row in self.p_ul_max for p in row):
            raise ValueError("uplink power budgets must be positive")
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth_hz must be positive")
        for eps in (self.epsilon_dl, self.epsilon_ul):
            if len(eps) != 2:
                raise ValueError("outage targets must have one row per group")
            if any(not 0.0 < e < 1.0 for row in eps for e in row):
                raise ValueError("outage targets must lie in (0, 1)")
        if len(self.epsilon_dl[0]) != self.n_dl or len(self.epsilon_ul[0]) != self.n_ul:
            raise ValueError("outage target shapes must match user counts")
        if not 0 < self.inner_radius_m < self.cell_radius_m:
            raise ValueError("need 0 < inner_radius_m < cell_radius_m")
        if not 0 < self.min_bs_distance_m < self.inner_radius_m:
            raise ValueError("need 0 < min_bs_distance_m < inner_radius_m")

    @property
    def noise_power(self) -> float:
        """Receiver noise power in watts over the system bandwidth."""
        return 10.0 ** ((self.noise_psd_dbm_hz - 30.0) / 10.0) * self.bandwidth_hz

    def with_bs_power_dbm(self, p_dbm: float) -> "SystemConfig":
        return replace(self, p_bs_max=dbm_to_watts(p_dbm))

    def with_seed(self, seed: int) -> "SystemConfig":
        return replace(self, rng_seed=int(seed))


def small_cell_default(seed: int = 0) -> SystemConfig:
    """Default small-cell scenario used throughout the experiments."""
    return SystemConfig(rng_seed=seed)


def _parse_scalar(token: str):
    token = token.strip()
    if token.lower() in ("true", "false"):
        return token.lower() == "true"
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        pass
    return token.strip("\"'")


def parse_kv_file(text: str) -> dict:
    """Parse the flat ``key = value`` format, with ``[a, b, c]`` arrays."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if val.startswith("[") and val.endswith("]"):
            items = [t for t in val[1:-1].split(",") if t.strip()]
            out[key] = [_parse_scalar(t) for t in items]
        else:
            out[key] = _parse_scalar(val)
    return out


def _per_user(value, n_ul_or_dl: int) -> tuple[tuple[float, ...], ...]:
    """Broadcast a scalar, or reshape a flat list of 2*n values, to (2, n)."""
    if isinstance(value, (int, float)):
        return ((float(value),) * n_ul_or_dl, (float(value),) * n_ul_or_dl)
    vals = [float(v) for v in value]
    if len(vals) != 2 * n_ul_or_dl:
        raise ValueError(f"expected {2 * n_ul_or_dl} per-user values, got {len(vals)}")
    return (tuple(vals[:n_ul_or_dl]), tuple(vals[n_ul_or_dl:]))


def config_from_mapping(kv: dict, base: SystemConfig | None = None) -> SystemConfig:
    """Build a SystemConfig from parsed key/value pairs.

    Keys mirror the field names; powers may be given as ``p_bs_max_dbm``
    and ``p_ul_max_dbm``, and the residual self-interference gain as
    ``sigma_si_db``.  Per-user arrays may be scalars (broadcast) or flat
    lists of 2*n entries (group 1 first).
    """
    base = base or SystemConfig()
    kv = dict(kv)
    n_dl = int(kv.pop("n_dl", base.n_dl))
    n_ul = int(kv.pop("n_ul", base.n_ul))
    n_eves = int(kv.pop("n_eves", base.n_eves))

    updates: dict = {"n_dl": n_dl, "n_ul": n_ul, "n_eves": n_eves}
    if "eve_antennas" in kv:
        v = kv.pop("eve_antennas")
        updates["eve_antennas"] = tuple(int(x) for x in v) if isinstance(v, list) else (int(v),) * n_eves
    elif n_eves != base.n_eves:
        updates["eve_antennas"] = (base.eve_antennas[0],) * n_eves

    if "p_bs_max_dbm" in kv:
        updates["p_bs_max"] = dbm_to_watts(float(kv.pop("p_bs_max_dbm")))
    if "p_ul_max_dbm" in kv:
        v = kv.pop("p_ul_max_dbm")
        watts = dbm_to_watts(float(v)) if isinstance(v, (int, float)) else [dbm_to_watts(float(x)) for x in v]
        updates["p_ul_max"] = _per_user(watts, n_ul)
    elif n_ul != base.n_ul:
        updates["p_ul_max"] = _per_user(base.p_ul_max[0][0], n_ul)
    if "sigma_si_db" in kv:
        updates["sigma_si"] = db_to_linear(float(kv.pop("sigma_si_db")))
    if "epsilon_dl" in kv:
        updates["epsilon_dl"] = _per_user(kv.pop("epsilon_dl"), n_dl)
    elif n_dl != base.n_dl:
        updates["epsilon_dl"] = _per_user(base.epsilon_dl[0][0], n_dl)
    if "epsilon_ul" in kv:
        updates["epsilon_ul"] = _per_user(kv.pop("epsilon_ul"), n_ul)
    elif n_ul != base.n_ul:
        updates["epsilon_ul"] = _per_user(base.epsilon_ul[0][0], n_ul)

    known = {f.name for f in fields(SystemConfig)}
    for key, val in kv.items():
        if key not in known:
            raise ValueError(f"unknown config key: {key}")
        updates[key] = val
    return replace(base, **updates)


def load_config(path: str, base: SystemConfig | None = None) -> SystemConfig:
    with open(path, "r", encoding="utf-8") as fh:
        kv = parse_kv_file(fh.read())
    known = {f.name for f in fields(SystemConfig)} | {
        "p_bs_max_dbm", "p_ul_max_dbm", "sigma_si_db",
    }
    kv = {k: v for k, v in kv.items() if k in known}
    return config_from_mapping(kv, base=base)
