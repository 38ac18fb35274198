import json
from pathlib import Path

import numpy as np
import pytest

from fdsec import experiments
from fdsec.experiments import ExperimentSpec, read_rows_csv, run_experiment, summarize
from tests.conftest import tiny_config


@pytest.fixture(scope="module")
def tiny_spec(tmp_path_factory):
    out = tmp_path_factory.mktemp("results")
    return ExperimentSpec(
        base=tiny_config(seed=0),
        pbs_dbm_sweep=(20.0,),
        seeds=(1, 2),
        modes=("proposed-fd",),
        out_dir=str(out),
        mc_samples=0,  # skip Monte Carlo for speed in the harness tests
    )


@pytest.fixture(scope="module")
def tiny_rows(tiny_spec):
    return run_experiment(tiny_spec)


def test_singleton_sweep_gives_one_row_per_seed_mode(tiny_rows):
    assert len(tiny_rows) == 2
    assert {r.seed for r in tiny_rows} == {1, 2}
    assert all(r.mode == "proposed-fd" and r.status == "ok" for r in tiny_rows)
    assert all(r.maxmin_sr_bps > 0 for r in tiny_rows)
    assert all(abs(r.tau1 + r.tau2 - 1.0) <= 1e-9 for r in tiny_rows)


def test_csv_round_trip_and_summary_reproducibility(tiny_spec, tiny_rows):
    csv_path = Path(tiny_spec.out_dir) / "results.csv"
    again = read_rows_csv(csv_path)
    assert [r.maxmin_sr_bps for r in again] == [r.maxmin_sr_bps for r in tiny_rows]
    assert [r.sr_dl for r in again] == [r.sr_dl for r in tiny_rows]
    summary_file = json.loads((Path(tiny_spec.out_dir) / "summary.json").read_text())
    assert summary_file["summary"] == summarize(again)


def test_rerun_is_deterministic_modulo_wall_time(tiny_spec, tiny_rows, tmp_path):
    from dataclasses import replace

    spec2 = replace(tiny_spec, out_dir=str(tmp_path / "again"))
    rows2 = run_experiment(spec2)
    for a, b in zip(tiny_rows, rows2):
        assert a.maxmin_sr_bps == b.maxmin_sr_bps
        assert a.sr_dl == b.sr_dl and a.sr_ul == b.sr_ul
        assert a.tau1 == b.tau1 and a.tau2 == b.tau2 and a.iters == b.iters
    c1 = (Path(tiny_spec.out_dir) / "results.csv").read_text().splitlines()
    c2 = (tmp_path / "again" / "results.csv").read_text().splitlines()
    header = c1[0].split(",")
    ms_col = header.index("ms")
    for l1, l2 in zip(c1, c2):
        f1, f2 = l1.split(","), l2.split(",")
        f1[ms_col] = f2[ms_col] = "-"
        assert f1 == f2


def test_worker_pool_matches_sequential(tiny_spec, tiny_rows, tmp_path):
    from dataclasses import replace

    spec2 = replace(tiny_spec, out_dir=str(tmp_path / "par"), workers=2)
    rows2 = run_experiment(spec2)
    assert [r.maxmin_sr_bps for r in rows2] == [r.maxmin_sr_bps for r in tiny_rows]


def test_failed_rows_are_recorded_not_raised(tmp_path):
    spec = ExperimentSpec(
        base=tiny_config(seed=0),
        pbs_dbm_sweep=(20.0,),
        seeds=(1,),
        modes=("proposed-fd",),
        qos_bps=(500.0,),  # unattainable: the row must fail gracefully
        out_dir=str(tmp_path),
        mc_samples=0,
    )
    rows = experiments.run_qos_experiment(spec)
    assert len(rows) == 1
    assert rows[0].status.startswith("error")
    assert np.isnan(rows[0].maxmin_sr_bps)
    again = read_rows_csv(Path(tmp_path) / "results.csv")
    assert again[0].status == rows[0].status


def test_qos_rows_carry_target(tmp_path):
    spec = ExperimentSpec(
        base=tiny_config(seed=0),
        pbs_dbm_sweep=(20.0,),
        seeds=(1,),
        modes=("proposed-fd",),
        qos_bps=(1.0,),
        out_dir=str(tmp_path),
        mc_samples=0,
    )
    rows = experiments.run_qos_experiment(spec)
    assert rows[0].qos_bps == 1.0
    assert rows[0].status == "ok"
    for v in rows[0].sr_ul.values():
        assert v >= 1.0 - 1e-6


def test_spec_from_file(tmp_path):
    path = tmp_path / "spec.txt"
    path.write_text(
        """
        n_dl = 1
        n_ul = 1
        n_eves = 1
        eve_antennas = [2]
        pbs_dbm_sweep = [18, 24]
        seeds = [0, 1, 2]
        modes = [proposed-fd, hd]
        qos_bps = [2.0]
        workers = 2
        mc_samples = 128
        out_dir = somewhere
        """
    )
    spec = experiments.spec_from_file(str(path))
    assert spec.base.n_dl == 1 and spec.base.n_eves == 1
    assert spec.pbs_dbm_sweep == (18.0, 24.0)
    assert spec.seeds == (0, 1, 2)
    assert spec.modes == ("proposed-fd", "hd")
    assert spec.qos_bps == (2.0,)
    assert spec.workers == 2 and spec.mc_samples == 128
    assert spec.out_dir == "somewhere"


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec(seeds=())
    with pytest.raises(ValueError):
        ExperimentSpec(modes=("warp-drive",))
    with pytest.raises(ValueError):
        experiments.run_qos_experiment(ExperimentSpec(qos_bps=()))
