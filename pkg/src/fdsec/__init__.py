"""Secure full-duplex multiuser transmission design.

Joint beamforming, artificial-noise shaping, uplink power control and
fractional-time allocation that maximizes the minimum secrecy rate over
all users, solved by a path-following sequence of second-order cone
programs, with Monte Carlo validation of the eavesdropper outage
guarantees.
"""

from .config import SystemConfig, small_cell_default
from .channels import ChannelSet, Topology, draw_channels, generate, place_users

__all__ = [
    "SystemConfig",
    "small_cell_default",
    "ChannelSet",
    "Topology",
    "draw_channels",
    "generate",
    "place_users",
]
