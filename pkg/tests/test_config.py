import math

import pytest

from fdsec.config import (
    SystemConfig,
    config_from_mapping,
    db_to_linear,
    dbm_to_watts,
    load_config,
    parse_kv_file,
    small_cell_default,
    watts_to_dbm,
)


def test_default_config_matches_small_cell_values():
    cfg = small_cell_default()
    assert cfg.n_dl == 2 and cfg.n_ul == 2 and cfg.n_eves == 2
    assert cfg.n_tx == 5 and cfg.n_rx == 5
    assert cfg.eve_antennas == (2, 2)
    assert cfg.p_bs_max == pytest.approx(dbm_to_watts(26.0))
    assert cfg.p_ul_max[0][0] == pytest.approx(dbm_to_watts(23.0))
    assert cfg.sigma_si == pytest.approx(10 ** -7.5)
    assert cfg.cell_radius_m == 100.0 and cfg.inner_radius_m == 50.0


def test_noise_power_is_psd_times_bandwidth():
    cfg = SystemConfig()
    assert cfg.noise_power == pytest.approx(10 ** -13.4, rel=1e-12)


def test_unit_conversions_round_trip():
    assert watts_to_dbm(dbm_to_watts(17.3)) == pytest.approx(17.3)
    assert db_to_linear(-75.0) == pytest.approx(3.1623e-8, rel=1e-4)


@pytest.mark.parametrize(
    "bad",
    [
        dict(sigma_si=1.0),
        dict(sigma_si=-0.1),
        dict(n_tx=0),
        dict(p_bs_max=0.0),
        dict(inner_radius_m=150.0),
        dict(epsilon_dl=((1.5, 0.9), (0.9, 0.9))),
        dict(eve_antennas=(2,)),
    ],
)
def test_invalid_configs_raise(bad):
    with pytest.raises(ValueError):
        SystemConfig(**bad)


def test_parse_kv_file_scalars_and_arrays():
    kv = parse_kv_file(
        """
        # comment
        n_dl = 2
        p_bs_max_dbm = 20   # inline comment
        modes = [proposed-fd, hd]
        epsilon_dl = [0.9, 0.9, 0.95, 0.95]
        flag = true
        """
    )
    assert kv["n_dl"] == 2
    assert kv["p_bs_max_dbm"] == 20
    assert kv["modes"] == ["proposed-fd", "hd"]
    assert kv["flag"] is True


def test_config_from_mapping_converts_units():
    cfg = config_from_mapping(
        {
            "p_bs_max_dbm": 20,
            "p_ul_max_dbm": 17,
            "sigma_si_db": -80,
            "epsilon_dl": [0.9, 0.9, 0.95, 0.95],
        }
    )
    assert cfg.p_bs_max == pytest.approx(0.1)
    assert cfg.p_ul_max[1][1] == pytest.approx(dbm_to_watts(17.0))
    assert cfg.sigma_si == pytest.approx(1e-8)
    assert cfg.epsilon_dl == ((0.9, 0.9), (0.95, 0.95))


def test_config_from_mapping_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown config key"):
        config_from_mapping({"p_bs_maximum": 3})


def test_load_config_file(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text("n_dl = 1\nn_ul = 1\np_bs_max_dbm = 24\nrng_seed = 5\n")
    cfg = load_config(str(path))
    assert cfg.n_dl == 1 and cfg.rng_seed == 5
    assert math.isclose(cfg.p_bs_max, dbm_to_watts(24.0))


def test_load_config_per_user_arrays(tmp_path):
    path = tmp_path / "cfg.txt"
    path.write_text(
        "n_ul = 2\n"
        "p_ul_max_dbm = [23, 20, 17, 14]\n"
        "epsilon_ul = [0.9, 0.95, 0.97, 0.99]\n"
    )
    cfg = load_config(str(path))
    assert cfg.p_ul_max[0][1] == pytest.approx(dbm_to_watts(20.0))
    assert cfg.p_ul_max[1][0] == pytest.approx(dbm_to_watts(17.0))
    assert cfg.epsilon_ul == ((0.9, 0.95), (0.97, 0.99))
