import json
import shutil
import subprocess

import pytest

from drmech import cli, harness

CFG = "configs/table2.json"


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_bounds_line(capsys):
    code, out, _ = run(capsys, "bounds")
    assert code == 0
    assert "phi_min 0.7138" in out and "phi_BO 1.5053" in out and "phi_SRBM 1.4500" in out


def test_bounds_json_round_trips_through_config(capsys):
    code, out, _ = run(capsys, "bounds", "--config", CFG, "--D", "50", "--json")
    assert code == 0
    doc = json.loads(out)
    cfg, _ = harness.config_from_dict(doc["config"])
    assert cfg.params.D == 50
    assert doc["bounds"] == pytest.approx(cli.bounds_table(cfg))


def test_bounds_overrides(capsys):
    _, out, _ = run(capsys, "bounds", "--json", "--pi-o", "0")
    doc = json.loads(out)
    cfg, _ = harness.config_from_dict(doc["config"])
    assert cfg.params.pi_o == 0
    # without recruitment cost only the payout terms remain
    st = cfg.population.stats(1.3)
    assert doc["bounds"]["phi_min"] == pytest.approx(1 / st.e_inv_pi - 0.15)
    assert doc["bounds"]["phi_srbm_upper"] == pytest.approx(0.8 + 2 * 0.15)


def test_missing_config_is_a_config_error(capsys, tmp_path):
    code, _, err = run(capsys, "simulate", str(tmp_path / "missing.json"))
    assert code == cli.EXIT_CONFIG and "cannot read" in err


def test_bad_field_is_a_config_error(capsys, tmp_path):
    d = harness.read_config(CFG)
    d["market"]["D_kwh"] = "many"
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(d))
    code, _, err = run(capsys, "simulate", str(p))
    assert code == cli.EXIT_CONFIG and "market.D_kwh" in err


def test_bad_arguments(capsys):
    assert run(capsys, "simulate")[0] == cli.EXIT_CONFIG
    assert run(capsys, "audit", "--populations", "x")[0] == cli.EXIT_CONFIG
    assert run(capsys, "audit", "--mechanism", "srbm_pi", "--alpha", "0.1")[0] == cli.EXIT_CONFIG


def test_simulate_is_reproducible(capsys, tmp_path):
    outs = []
    for k in range(2):
        path = tmp_path / f"r{k}.csv"
        assert run(capsys, "simulate", CFG, "--replications", "4", "--out", str(path))[0] == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    assert outs[0].decode().count("\n") == 6  # header and five sweep points


def test_simulate_without_out_writes_csv_to_stdout(capsys):
    code, out, _ = run(capsys, "simulate", "configs/baseline_only.json", "--replications", "3")
    assert code == 0 and out.splitlines()[1].startswith("mechanism,")


def test_infeasible_run_exits_3(capsys, tmp_path):
    d = harness.read_config(CFG)
    d["max_recruits"] = 10
    d.pop("sweep")
    p = tmp_path / "tiny.json"
    p.write_text(json.dumps(d))
    code, _, err = run(capsys, "simulate", str(p), "--replications", "1")
    assert code == cli.EXIT_INFEASIBLE and "infeasible" in err


def test_seed_precedence(monkeypatch):
    monkeypatch.delenv(cli.SEED_ENV, raising=False)
    assert cli.resolve_seed(None) == cli.DEFAULT_SEED
    assert cli.resolve_seed(None, {"seed": 11}) == 11
    monkeypatch.setenv(cli.SEED_ENV, "5")
    assert cli.resolve_seed(None, {"seed": 11}) == 5
    assert cli.resolve_seed(3, {"seed": 11}) == 3
    monkeypatch.setenv(cli.SEED_ENV, "five")
    with pytest.raises(harness.ConfigError):
        cli.resolve_seed(None)


def test_env_seed_reaches_the_csv(capsys, monkeypatch, tmp_path):
    monkeypatch.setenv(cli.SEED_ENV, "99")
    path = tmp_path / "o.csv"
    run(capsys, "simulate", "configs/baseline_only.json", "--replications", "2", "--out", str(path))
    assert path.read_text().splitlines()[1].endswith(",99")


def test_audit_exit_codes(capsys):
    code, out, _ = run(capsys, "audit", "--mechanism", "baseline_only", "--populations", "2")
    assert code == cli.EXIT_OK and " 0 failures" in out
    code, out, _ = run(capsys, "audit", "--mechanism", "baseline_only", "--populations", "2",
                       "--alpha", "0.5")
    assert code == cli.EXIT_AUDIT and " 0 failures" not in out


def test_caiso_report(capsys, tmp_path):
    path = tmp_path / "c.csv"
    code, out, _ = run(capsys, "caiso", "--D", "20", "--out", str(path))
    assert code == 0 and "CAISO inflation factor 1.20..1.20   SRBM factor 1.00" in out
    assert path.read_text().startswith("agent_id,")
    _, out, _ = run(capsys, "caiso", "--D", "20", "--cap", "0")
    assert "CAISO inflation factor 1.00..1.00" in out


@pytest.mark.skipif(shutil.which("drmech") is None, reason="console script not installed")
def test_console_script():
    r = subprocess.run(["drmech", "bounds"], capture_output=True, text=True)
    assert r.returncode == 0 and "phi_SRBM 1.4500" in r.stdout
