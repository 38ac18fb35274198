"""Topology placement and channel generation for the two-zone small cell.

The cell is split into an inner disc (zone 1) and an outer annulus
(zone 2).  Group 1 serves the near downlink users together with the far
uplink users; group 2 serves the far downlink users with the near uplink
users.  One eavesdropper is dropped per zone (cycling through zones when
there are more than two).

Distances feed the two path-loss laws below; all small-scale fading is
circularly symmetric complex Gaussian except the self-interference loop
channel, whose entries are i.i.d. Rician with unit second moment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .config import SystemConfig


def path_loss_db(d_km: float, los: bool) -> float:
    """Distance-based path loss in dB; ``d_km`` is the distance in km."""
    if d_km <= 0:
        raise ValueError("distance must be positive")
    if los:
        return 103.8 + 20.9 * math.log10(d_km)
    return 145.4 + 37.5 * math.log10(d_km)


def path_gain(d_m: float, los: bool) -> float:
    """Linear power gain of a link of length ``d_m`` meters."""
    return 10.0 ** (-path_loss_db(d_m / 1000.0, los) / 10.0)


def noise_power_watts(config: SystemConfig) -> float:
    if config.bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    return 10.0 ** ((config.noise_psd_dbm_hz - 30.0) / 10.0) * config.bandwidth_hz


@dataclass(frozen=True)
class Topology:
    """Polar coordinates (distance m, angle rad) of every terminal.

    ``dl[i, k]`` and ``ul[i, l]`` are indexed by group; ``eve[m]`` by
    eavesdropper.  ``dl_zone`` / ``ul_zone`` / ``eve_zone`` record which
    zone each terminal was dropped in (1 = inner disc, 2 = annulus).
    """

    dl: np.ndarray
    ul: np.ndarray
    eve: np.ndarray
    dl_zone: np.ndarray
    ul_zone: np.ndarray
    eve_zone: np.ndarray

    def dl_xy(self) -> np.ndarray:
        return _polar_to_xy(self.dl)

    def ul_xy(self) -> np.ndarray:
        return _polar_to_xy(self.ul)

    def eve_xy(self) -> np.ndarray:
        return _polar_to_xy(self.eve)


def _polar_to_xy(polar: np.ndarray) -> np.ndarray:
    r = polar[..., 0]
    th = polar[..., 1]
    return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)


def _uniform_in_annulus(rng: np.random.Generator, r_min: float, r_max: float, n: int) -> np.ndarray:
    """Area-uniform draws in the annulus r_min <= r <= r_max."""
    u = rng.random(n)
    r = np.sqrt(u * (r_max**2 - r_min**2) + r_min**2)
    th = rng.random(n) * 2.0 * np.pi
    return np.stack([r, th], axis=-1)


def place_users(config: SystemConfig, rng: np.random.Generator) -> Topology:
    """Drop users uniformly over their assigned zones.

    Zone 1 runs from the minimum BS distance to the inner radius, zone 2
    from the inner radius to the cell edge.  Group-1 DL users and group-2
    UL users live in zone 1; group-2 DL and group-1 UL users in zone 2.
    """
    k, l, m = config.n_dl, config.n_ul, config.n_eves
    z1 = (config.min_bs_distance_m, config.inner_radius_m)
    z2 = (config.inner_radius_m, config.cell_radius_m)

    dl = np.stack([_uniform_in_annulus(rng, *z1, k), _uniform_in_annulus(rng, *z2, k)])
    ul = np.stack([_uniform_in_annulus(rng, *z2, l), _uniform_in_annulus(rng, *z1, l)])
    eve_zone = np.array([1 + (j % 2) for j in range(m)])
    eve = np.concatenate(
        [_uniform_in_annulus(rng, *(z1 if z == 1 else z2), 1) for z in eve_zone], axis=0
    )
    return Topology(
        dl=dl,
        ul=ul,
        eve=eve,
        dl_zone=np.array([[1] * k, [2] * k]),
        ul_zone=np.array([[2] * l, [1] * l]),
        eve_zone=eve_zone,
    )


@dataclass(frozen=True)
class ChannelSet:
    """One realization of every channel plus the eavesdropper statistics.

    ``h[i, k]`` are BS-to-DL-user vectors, ``g[i, l]`` UL-user-to-BS
    vectors (already sorted into decoding order, strongest first), and
    ``f[i, k, l]`` the co-channel coefficients between simultaneously
    served users.  ``f_cross[i, k, l]`` is the coefficient from UL user
    ``l`` of the *other* group to DL user ``(i, k)``; it only matters
    when the grouping is ignored and everyone transmits at once.

    ``h_bar[m]`` is the second-order statistic of the BS-to-eavesdropper
    channel (a scaled identity by construction) and ``g_bar[m, i, l]``
    the scalar statistic of the UL-user-to-eavesdropper links.
    """

    h: np.ndarray
    g: np.ndarray
    f: np.ndarray
    f_cross: np.ndarray
    g_si: np.ndarray
    sigma_si: float
    h_bar: np.ndarray
    g_bar: np.ndarray
    eve_antennas: tuple[int, ...]
    noise_power: float

    def normalized(self) -> "ChannelSet":
        """Rescale so the noise power becomes 1 (SINRs are unchanged).

        Every channel amplitude is divided by the noise standard
        deviation, the second-order statistics by the noise power.  The
        optimizer works in these units to keep conic data well scaled.
        """
        s = math.sqrt(self.noise_power)
        return replace(
            self,
            h=self.h / s,
            g=self.g / s,
            f=self.f / s,
            f_cross=self.f_cross / s,
            g_si=self.g_si / s,
            h_bar=self.h_bar / self.noise_power,
            g_bar=self.g_bar / self.noise_power,
            noise_power=1.0,
        )


def _cn(rng: np.random.Generator, *shape: int) -> np.ndarray:
    """Standard circularly symmetric complex Gaussian samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def _rician_unit(rng: np.random.Generator, k_db: float, shape: tuple[int, ...]) -> np.ndarray:
    """I.i.d. Rician entries with unit second moment and factor ``k_db``."""
    k = 10.0 ** (k_db / 10.0)
    los = np.exp(2j * np.pi * rng.random(shape)) * math.sqrt(k / (k + 1.0))
    return los + _cn(rng, *shape) * math.sqrt(1.0 / (k + 1.0))


_MIN_USER_DISTANCE_M = 1.0  # floor on user-to-user / user-to-eve spacing


def draw_channels(config: SystemConfig, topo: Topology, rng: np.random.Generator) -> ChannelSet:
    """Generate one full channel realization for a placed topology.

    BS-to-user, UL-user-to-BS and all eavesdropper links use the LOS
    path-loss law; user-to-user co-channel links use the NLOS law.  Within
    each group the UL users are re-labelled in decreasing receive-vector
    norm, which fixes the successive-decoding order once and for all.
    """
    nt, nr = config.n_tx, config.n_rx
    k, l, m = config.n_dl, config.n_ul, config.n_eves

    dl_gain = np.array([[path_gain(topo.dl[i, j, 0], los=True) for j in range(k)] for i in range(2)])
    ul_gain = np.array([[path_gain(topo.ul[i, j, 0], los=True) for j in range(l)] for i in range(2)])
    h = np.sqrt(dl_gain)[..., None] * _cn(rng, 2, k, nt)
    g = np.sqrt(ul_gain)[..., None] * _cn(rng, 2, l, nr)

    dl_xy = topo.dl_xy()
    ul_xy = topo.ul_xy()
    eve_xy = topo.eve_xy()

    def cci_gain(i_dl: int, k_idx: int, i_ul: int, l_idx: int) -> float:
        d = float(np.linalg.norm(dl_xy[i_dl, k_idx] - ul_xy[i_ul, l_idx]))
        return path_gain(max(d, _MIN_USER_DISTANCE_M), los=False)

    f = np.empty((2, k, l), dtype=complex)
    f_cross = np.empty((2, k, l), dtype=complex)
    f_fading = _cn(rng, 2, k, l)
    f_cross_fading = _cn(rng, 2, k, l)
    for i in range(2):
        for kk in range(k):
            for ll in range(l):
                f[i, kk, ll] = math.sqrt(cci_gain(i, kk, i, ll)) * f_fading[i, kk, ll]
                f_cross[i, kk, ll] = math.sqrt(cci_gain(i, kk, 1 - i, ll)) * f_cross_fading[i, kk, ll]

    g_si = _rician_unit(rng, config.rician_k_db, (nt, nr))

    eve_gain = np.array([path_gain(topo.eve[j, 0], los=True) for j in range(m)])
    h_bar = np.stack([eve_gain[j] * config.eve_antennas[j] * np.eye(nt) for j in range(m)])

    g_bar = np.empty((m, 2, l))
    for j in range(m):
        for i in range(2):
            for ll in range(l):
                d = float(np.linalg.norm(ul_xy[i, ll] - eve_xy[j]))
                g_bar[j, i, ll] = (
                    path_gain(max(d, _MIN_USER_DISTANCE_M), los=True) * config.eve_antennas[j]
                )

    # Freeze the decoding order: within each group, strongest UL vector first.
    order = np.argsort(-np.linalg.norm(g, axis=2), axis=1)
    for i in range(2):
        g[i] = g[i][order[i]]
        f[i] = f[i][:, order[i]]
        f_cross[1 - i] = f_cross[1 - i][:, order[i]]
        g_bar[:, i, :] = g_bar[:, i, order[i]]

    return ChannelSet(
        h=h,
        g=g,
        f=f,
        f_cross=f_cross,
        g_si=g_si,
        sigma_si=config.sigma_si,
        h_bar=h_bar,
        g_bar=g_bar,
        eve_antennas=tuple(config.eve_antennas),
        noise_power=noise_power_watts(config),
    )


def hd_config(config: SystemConfig) -> SystemConfig:
    """Antenna pooling for the half-duplex baseline (all antennas shared)."""
    n = config.n_tx + config.n_rx
    return replace(config, n_tx=n, n_rx=n)


def generate(config: SystemConfig, seed: int | None = None) -> tuple[Topology, ChannelSet]:
    """Place users and draw channels from one seeded stream."""
    rng = np.random.default_rng(config.rng_seed if seed is None else seed)
    topo = place_users(config, rng)
    return topo, draw_channels(config, topo, rng)
