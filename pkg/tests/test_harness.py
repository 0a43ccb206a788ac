import json
from importlib import resources
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from wireless_streamlet.harness.cli import main
from wireless_streamlet.harness.config import ConfigError, from_dict, load_config
from wireless_streamlet.harness.experiments import run_experiment
from wireless_streamlet.harness.results import CSV_HEADER, ResultTable, emit, mean_ci95

SCENARIOS = resources.files("wireless_streamlet") / "scenarios"


def scenario(name):
    return str(SCENARIOS / name)


# ---------------------------------------------------------------- config

def test_defaults_are_materialized():
    cfg = from_dict({})
    assert cfg.f == 3 and cfg.runs == 20 and cfg.epochs == 20_000
    assert cfg.coding.m == 10 and cfg.retrieval.t_max == 6000
    assert from_dict({"n": 4}).f == 1


@pytest.mark.parametrize("data, needle", [
    ({"chanel": {}}, "chanel"),
    ({"channel": {"p_hh": 0.9}}, "p_hh"),
    ({"experiment": "E9"}, "E9"),
    ({"n": 6, "f": 2}, r"3f\+1"),
    ({"channel": {"p_h": 1.5}}, "p_h"),
    ({"retrieval": {"per": [1.0]}}, "per"),
    ({"runs": 0}, "runs"),
    ({"channel": []}, "channel"),
])
def test_invalid_configs_are_rejected_with_a_precise_message(data, needle):
    with pytest.raises(ConfigError, match=needle):
        from_dict(data)


def test_oracle_policy_needs_explicit_flag():
    with pytest.raises(ConfigError, match="allow_oracle"):
        from_dict({"election": {"policies": ["oracle"]}})
    cfg = from_dict({"election": {"policies": ["oracle"], "allow_oracle": True}})
    assert cfg.election.policies == ["oracle"]


def test_bundled_scenarios_load():
    for name in ("e1_cale_fading", "e2_retrieval", "e3_wired_vs_wireless", "e4_storage",
                 "e5_bootstrap", "e6_analysis"):
        cfg = load_config(scenario(name + ".yaml"))
        assert cfg.experiment == "E" + name[1]
    with pytest.raises(ConfigError, match="cannot read"):
        load_config("/nonexistent/x.yaml")


# ---------------------------------------------------------------- results

def test_empty_table_is_header_only_csv():
    lines = ResultTable({"a": 1}).to_csv().splitlines()
    assert lines[0] == '# config={"a":1}'
    assert lines[1:] == [",".join(CSV_HEADER)]


def test_json_round_trip_is_a_fixpoint():
    t = ResultTable({"x": [1, 2]})
    t.add("E2", "per=0.1", "coded", "success_rate", [0.9, 0.95, 1.0], 3)
    t.add("E2", "per=0.1", "coded", "mean_latency_ms", [1200.5], 3)
    again = ResultTable.from_json(t.to_json())
    assert again == t and again.to_json() == t.to_json()
    row = again.get("per=0.1", "coded", "success_rate")
    assert (row.mean, row.runs) == (pytest.approx(0.95), 3)


def test_emit_reports_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match=str(blocker)):
        emit(ResultTable(), "csv", blocker / "out.csv")
    with pytest.raises(ValueError):
        emit(ResultTable(), "xml", tmp_path / "out.xml")
    p = emit(ResultTable(), "json", tmp_path / "o.json")
    assert p.read_bytes().endswith(b"\n")


def test_ci_matches_student_t_and_single_run():
    vals = [1.0, 2.0, 4.0]
    m, h = mean_ci95(vals)
    assert m == pytest.approx(7 / 3)
    assert h == pytest.approx(stats.t.ppf(0.975, 2) * np.std(vals, ddof=1) / np.sqrt(3))
    assert mean_ci95([5.0]) == (5.0, 0.0)


def test_ci_coverage_is_near_95_percent():
    rng = np.random.default_rng(0)
    trials = 1000
    covered = 0
    for _ in range(trials):
        m, h = mean_ci95(rng.normal(2.0, 3.0, size=8))
        covered += abs(m - 2.0) <= h
    sd = np.sqrt(0.95 * 0.05 / trials)
    assert abs(covered / trials - 0.95) < 3 * sd


# ---------------------------------------------------------------- experiments

def test_e1_has_eighteen_rows_and_echoes_config():
    cfg = load_config(scenario("e1_cale_fading.yaml"), runs=2, epochs=300)
    table = run_experiment(cfg)
    assert len(table.rows) == 18
    assert {r.policy_mode for r in table.rows} == {"cale", "random", "oracle"}
    first = table.to_csv().splitlines()[0]
    assert json.loads(first[len("# config="):]) == cfg.to_dict()
    assert all(r.runs == 2 for r in table.rows)


def test_e1_protocol_engine_runs():
    cfg = from_dict({"experiment": "E1", "n": 4, "channel": {"kind": "two-class", "beta": [0.5]},
                     "election": {"policies": ["cale", "random"]}, "engine": "protocol"},
                    runs=1, epochs=40)
    table = run_experiment(cfg)
    assert len(table.rows) == 2
    with pytest.raises(ConfigError):
        run_experiment(from_dict({"experiment": "E1", "channel": {"kind": "homogeneous"}}))


def test_e6_q_one_reads_three():
    cfg = load_config(scenario("e6_analysis.yaml"))
    table = run_experiment(cfg)
    assert table.get("q=1", "closed-form", "expected_epochs").mean == 3.0
    # 11 slots of 10 ms plus a 5 ms guard per epoch
    assert table.get("q=1", "closed-form", "expected_finality_ms").mean == pytest.approx(3 * 115.0)


def test_e4_e5_rows():
    e4 = run_experiment(load_config(scenario("e4_storage.yaml")))
    assert len(e4.rows) == 7 * 3
    e5 = run_experiment(load_config(scenario("e5_bootstrap.yaml")))
    assert e5.get("height=0", "full", "bootstrap_s").mean == 0.0


def test_seed_determines_every_byte(tmp_path):
    cfg_path = scenario("e2_retrieval.yaml")
    outs = []
    for d in ("a", "b"):
        rc = main(["run", cfg_path, "--runs", "2", "--seed", "7", "--out-dir", str(tmp_path / d),
                   "--format", "both"])
        assert rc == 0
        outs.append([(tmp_path / d / f"E2_seed7.{ext}").read_bytes() for ext in ("csv", "json")])
    assert outs[0] == outs[1]
    rc = main(["run", cfg_path, "--runs", "2", "--seed", "8", "--out-dir", str(tmp_path / "c")])
    assert (tmp_path / "c" / "E2_seed8.csv").read_bytes() != outs[0][0]


# ---------------------------------------------------------------- CLI

def test_cli_errors_exit_nonzero(tmp_path, capsys):
    assert main(["run", str(tmp_path / "missing.yaml")]) == 2
    bad = tmp_path / "bad.yaml"
    bad.write_text("experiment: E1\nelection:\n  policies: [oracle]\n")
    assert main(["run", str(bad)]) == 2
    assert "allow_oracle" in capsys.readouterr().err
    assert main(["run", str(bad), "--allow-oracle", "--runs", "1", "--epochs", "5"]) == 2  # beta needs two-class
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_cli_bounds(capsys):
    assert main(["bounds", "--p-h", "0.9", "--k-tx", "1", "2", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    rows = {(r["sweep_variable"], r["policy_mode"], r["metric"]): r["mean"] for r in doc["rows"]}
    assert rows[("q=1", "closed-form", "expected_epochs")] == 3.0
    assert rows[("p_h=0.9,k_tx=2", "bound", "p_hat")] == pytest.approx(0.99)
    assert 1 <= rows[("p_h=0.9", "optimizer", "best_k_tx")] <= 8


def test_cli_encode_verify_decode(tmp_path, capsys):
    payload = np.random.default_rng(3).bytes(1234)
    src = tmp_path / "payload.bin"
    src.write_bytes(payload)
    d = tmp_path / "enc"
    assert main(["encode", str(src), "--out-dir", str(d), "--b-sym", "200", "--m", "10"]) == 0
    assert len(list(d.glob("symbol_*.wss"))) == 10
    assert main(["verify", str(d)]) == 0
    out = tmp_path / "out.bin"
    assert main(["decode", str(d), "--out", str(out)]) == 0
    assert out.read_bytes() == payload

    victim = d / "symbol_00003.wss"
    raw = bytearray(victim.read_bytes())
    raw[-5] ^= 0xFF
    victim.write_bytes(bytes(raw))
    capsys.readouterr()
    assert main(["verify", str(d)]) == 1
    text = capsys.readouterr().out
    assert "symbol_00003.wss: REJECTED" in text and text.count("ok") == 9
    # seven good symbols are still enough
    assert main(["decode", str(d), "--out", str(out)]) == 0
    assert out.read_bytes() == payload
    for i in (0, 1, 2):
        (d / f"symbol_{i:05d}.wss").unlink()
    assert main(["decode", str(d), "--out", str(out)]) == 1


def test_cli_encode_default_m_is_k_req(tmp_path):
    src = tmp_path / "p.bin"
    src.write_bytes(b"z" * 1000)
    d = tmp_path / "e"
    assert main(["encode", str(src), "--out-dir", str(d), "--b-sym", "100"]) == 0
    assert json.loads(Path(d / "payload.json").read_text())["m"] == 11
