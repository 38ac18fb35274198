import numpy as np
import pytest

from fdsec import channels
from fdsec.config import SystemConfig, dbm_to_watts, small_cell_default


@pytest.fixture(scope="session")
def table1_cfg():
    return small_cell_default(seed=7)


@pytest.fixture(scope="session")
def table1_channels(table1_cfg):
    topo, ch = channels.generate(table1_cfg)
    return topo, ch


def tiny_config(seed=0, **overrides) -> SystemConfig:
    """K = L = 1, two antennas, one eavesdropper: fast solver instances."""
    base = dict(
        n_dl=1,
        n_ul=1,
        n_eves=1,
        n_tx=2,
        n_rx=2,
        eve_antennas=(2,),
        p_ul_max=((dbm_to_watts(23.0),), (dbm_to_watts(23.0),)),
        epsilon_dl=((0.99,), (0.99,)),
        epsilon_ul=((0.99,), (0.99,)),
        rng_seed=seed,
    )
    base.update(overrides)
    return SystemConfig(**base)


@pytest.fixture()
def tiny_cfg():
    return tiny_config(seed=3)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
