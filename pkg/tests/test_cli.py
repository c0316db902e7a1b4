import json
import math

import pytest

from recurq.cli import (EXIT_CONFIG, EXIT_GUARANTEE, EXIT_INFEASIBLE, EXIT_OK,
                        main)

LN2 = math.log(2.0)

BOUNDS_YAML = """\
system: {{name: double_integrator}}
Q:
  - {{center: [0.0, 0.0], radius: [1.0, 1.0]}}
tau: {tau}
"""

SIM_YAML = """\
system: {{name: double_integrator}}
Q:
  - {{center: [0.0, 0.0], radius: [1.0, 1.0]}}
tau: 2.0
eps: 0.1
alpha: 0.0
dt: 0.01
steps: 12
seed: 0
x0: [0.4, -0.2]
log_path: {log_path}
csv_path: {csv_path}
"""


def run(tmp_path, config_text, *args):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(config_text)
    out = tmp_path / "out.jsonl"
    code = main(["--config", str(cfg), "--out", str(out), *args])
    records = [json.loads(line) for line in out.read_text().splitlines()
               if line.strip()]
    return code, records


class TestBounds:
    def test_finite_verdict_tau_2(self, tmp_path):
        code, recs = run(tmp_path, BOUNDS_YAML.format(tau=2.0), "bounds")
        assert code == EXIT_OK
        (r,) = recs
        assert r["verdict"] == "finite"
        assert r["upper_bits_per_s"] == pytest.approx(2.0 / LN2, abs=1e-9)
        assert r["lower_bits_per_s"] == 0.0
        assert r["L_tau"] == 1.0 and r["F_Q"] == 1.0

    def test_infinite_verdict_below_2(self, tmp_path):
        code, recs = run(tmp_path, BOUNDS_YAML.format(tau=1.5), "bounds")
        assert code == EXIT_OK
        (r,) = recs
        assert r["verdict"] == "infinite"
        assert r["witness"] == [1.0, 1.0]

    def test_missing_tau_is_config_error(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("system: {name: double_integrator}\n"
                       "Q:\n  - {center: [0.0, 0.0], radius: [1.0, 1.0]}\n")
        assert main(["--config", str(cfg), "bounds"]) == EXIT_CONFIG
        assert "tau" in capsys.readouterr().err

    def test_unknown_system_is_config_error(self, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("system: {name: pendulum}\n"
                       "Q:\n  - {center: [0.0], radius: [1.0]}\ntau: 1.0\n")
        assert main(["--config", str(cfg), "bounds"]) == EXIT_CONFIG

    def test_bad_yaml_is_config_error(self, tmp_path):
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text("system: [unclosed\n  - ")
        assert main(["--config", str(cfg), "bounds"]) == EXIT_CONFIG

    def test_missing_file_is_config_error(self, tmp_path):
        assert main(["--config", str(tmp_path / "nope.yaml"),
                     "bounds"]) == EXIT_CONFIG


SPAN_YAML = """\
system: {{name: double_integrator}}
Q:
  - {{center: [0.0, 0.0], radius: [1.0, 1.0]}}
horizons: {horizons}
eps_list: [0.1]
tau_list: [2.0]
candidate: {{values_per_axis: 3, segment_duration: 2.0}}
init_delta: 0.25
max_candidates: 128
"""


class TestSpanning:
    def test_feasible_sweep(self, tmp_path):
        code, recs = run(tmp_path, SPAN_YAML.format(horizons="[4]"), "spanning")
        assert code == EXIT_OK
        (r,) = recs
        assert r["feasible"] and r["exact"] and r["r"] == 4

    def test_infeasible_exit(self, tmp_path):
        code, recs = run(tmp_path, SPAN_YAML.format(horizons="[4, 6]"),
                         "spanning")
        assert code == EXIT_INFEASIBLE
        by_T = {r["T"]: r for r in recs if r["kind"] == "spanning"}
        assert by_T[4.0]["feasible"] and not by_T[6.0]["feasible"]

    def test_greedy_only_flag_when_capped(self, tmp_path):
        text = SPAN_YAML.format(horizons="[8]").replace("max_candidates: 128",
                                                        "max_candidates: 24")
        code, recs = run(tmp_path, text, "spanning")
        assert code == EXIT_OK
        (r,) = recs
        assert r["greedy_only"] and not r["exact"]


class TestSimulateVerify:
    @pytest.fixture()
    def sim(self, tmp_path):
        log_path = tmp_path / "ep.jsonl"
        csv_path = tmp_path / "ep.csv"
        text = SIM_YAML.format(log_path=log_path, csv_path=csv_path)
        code, recs = run(tmp_path, text, "simulate")
        return code, recs, log_path, csv_path, text

    def test_simulate_outputs(self, sim):
        code, recs, log_path, csv_path, _ = sim
        assert code == EXIT_OK
        (r,) = recs
        assert r["guarantees"]["tracking"]
        assert r["bit_rate"]["steady_rate"] == 3.0
        assert log_path.exists()
        header = csv_path.read_text().splitlines()[0]
        assert header == "t,x1,x2,xhat1,xhat2"

    def test_simulate_deterministic(self, tmp_path):
        outs = []
        for tag in ("a", "b"):
            log_path = tmp_path / f"{tag}.jsonl"
            text = SIM_YAML.format(log_path=log_path, csv_path=tmp_path / f"{tag}.csv")
            code, recs = run(tmp_path, text, "simulate")
            assert code == EXIT_OK
            body = log_path.read_text().replace(str(log_path), "")
            outs.append(body)
        assert outs[0] == outs[1]

    def test_verify_clean_log(self, sim, tmp_path):
        code, recs, log_path, _, text = sim
        code, recs = run(tmp_path, text, "verify", str(log_path))
        assert code == EXIT_OK
        (r,) = recs
        assert r["passed"] and not r["record_failures"]

    def test_verify_detects_tampering(self, sim, tmp_path):
        code, recs, log_path, _, text = sim
        lines = log_path.read_text().splitlines()
        rec = json.loads(lines[4])
        rec["x"][0] += 0.5
        lines[4] = json.dumps(rec)
        log_path.write_text("\n".join(lines) + "\n")
        code, recs = run(tmp_path, text, "verify", str(log_path))
        assert code == EXIT_GUARANTEE
        (r,) = recs
        assert not r["passed"]
        assert any("outside S_" in f or "re-run" in f
                   for f in r["record_failures"])

    def test_verify_malformed_log(self, sim, tmp_path, capsys):
        code, recs, log_path, _, text = sim
        log_path.write_text("not json at all\n")
        cfg = tmp_path / "cfg.yaml"
        cfg.write_text(text)
        assert main(["--config", str(cfg), "verify",
                     str(log_path)]) == EXIT_CONFIG
        assert "record 1" in capsys.readouterr().err
