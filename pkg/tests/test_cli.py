import json
import numpy as np
import pytest

from fdsec import channels, cli, optimizer
from fdsec.cli import design_from_json, design_to_json, verify_design
from fdsec.optimizer import SolverOptions
from tests.conftest import tiny_config


@pytest.fixture(scope="module")
def tiny_design():
    cfg = tiny_config(seed=3)
    _, ch = channels.generate(cfg)
    design, _, report = optimizer.run(cfg, ch, SolverOptions(validate_outage=False))
    return cfg, design, report


def test_design_json_round_trip(tiny_design):
    cfg, design, _ = tiny_design
    doc = design_to_json(design, cfg, seed=3)
    again, cfg2, seed = design_from_json(json.loads(json.dumps(doc)))
    assert seed == 3 and again.mode == design.mode
    assert cfg2.n_dl == cfg.n_dl and cfg2.p_bs_max == pytest.approx(cfg.p_bs_max)
    for s1, s2 in zip(design.slots, again.slots):
        assert np.allclose(s1.w, s2.w) and np.allclose(s1.rho, s2.rho)
        assert s1.alpha == pytest.approx(s2.alpha)
        assert s1.dl_refs == s2.dl_refs


def test_verify_design_reports_checks(tiny_design):
    cfg, design, _ = tiny_design
    result = verify_design(design, cfg, seed=3, mc_samples=2000)
    assert result["bs_power_ok"] and result["ul_power_ok"] and result["tau_ok"]
    assert 0.0 <= result["outage_worst_prob"] <= 1.0
    assert len(result["outage_checks"]) == 2 * (cfg.n_dl + cfg.n_ul)


def test_cli_single_writes_design_and_validate_reads_it(tmp_path, capsys):
    cfg_file = tmp_path / "cfg.txt"
    cfg_file.write_text(
        "n_dl = 1\nn_ul = 1\nn_eves = 1\neve_antennas = [2]\nn_tx = 2\nn_rx = 2\n"
    )
    out = tmp_path / "design.json"
    rc = cli.main(
        [
            "single",
            "--config",
            str(cfg_file),
            "--seed",
            "3",
            "--mc-samples",
            "1500",
            "--out",
            str(out),
        ]
    )
    text = capsys.readouterr().out
    assert "max-min SR" in text and "eta=" in text
    assert out.exists()
    rc2 = cli.main(["validate", str(out), "--mc-samples", "1500"])
    text2 = capsys.readouterr().out
    assert ("PASS" in text2) == (rc2 == 0)
    doc = json.loads(out.read_text())
    assert doc["mode"] == "proposed-fd" and len(doc["slots"]) == 2


def test_cli_run_executes_spec(tmp_path, capsys):
    spec = tmp_path / "spec.txt"
    spec.write_text(
        "n_dl = 1\nn_ul = 1\nn_eves = 1\neve_antennas = [2]\nn_tx = 2\nn_rx = 2\n"
        "pbs_dbm_sweep = [20]\nseeds = [1]\nmodes = [proposed-fd]\nmc_samples = 0\n"
        f"out_dir = {tmp_path / 'res'}\n"
    )
    rc = cli.main(["run", str(spec)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "mean SR" in out
    assert (tmp_path / "res" / "results.csv").exists()
    assert (tmp_path / "res" / "summary.json").exists()
