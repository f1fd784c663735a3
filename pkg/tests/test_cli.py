import json
import subprocess
import sys
from pathlib import Path

import pytest

from rppa.cli import main
from rppa.optimizer import build_p1

CONFIGS = Path(__file__).resolve().parents[1] / "demos" / "configs"


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


class TestReserve:
    def test_uniform(self, capsys):
        code, out, _ = run(capsys, "reserve", "--dist", '{"kind":"uniform","params":{"lo":0,"hi":1}}')
        assert code == 0
        assert json.loads(out)["q_star"] == pytest.approx(0.5)

    def test_two_type_config(self, capsys):
        code, out, _ = run(capsys, "reserve", "--config", str(CONFIGS / "reserve_two_type.json"))
        assert code == 0 and json.loads(out)

    def test_point_mass_is_a_domain_error(self, capsys):
        code, _, err = run(capsys, "reserve", "--dist", '{"kind":"point","params":{"v":1}}')
        assert code == 1 and err.strip()

    def test_malformed_json_is_usage(self, capsys):
        code, _, err = run(capsys, "reserve", "--dist", "{kind")
        assert code == 2 and len(err.strip().splitlines()) == 1


class TestSimulate:
    def test_missing_config(self, capsys):
        code, _, err = run(capsys, "simulate", "--config", "missing.json")
        assert code == 2 and "missing.json" in err

    def test_unknown_key(self, capsys, tmp_path):
        cfg = json.loads((CONFIGS / "simulate_lognormal.json").read_text())
        cfg["colour"] = "red"
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg))
        code, _, _ = run(capsys, "simulate", "--config", str(path))
        assert code == 2

    def test_seed_required(self, capsys, tmp_path):
        cfg = json.loads((CONFIGS / "simulate_lognormal.json").read_text())
        del cfg["seed"]
        path = tmp_path / "c.json"
        path.write_text(json.dumps(cfg))
        code, _, _ = run(capsys, "simulate", "--config", str(path))
        assert code == 2
        code, out, _ = run(capsys, "simulate", "--config", str(path), "--seed", "5")
        assert code == 0 and out.startswith("# seed=5")

    def test_byte_identical_files(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for p in (a, b):
            assert run(capsys, "simulate", "--config", str(CONFIGS / "simulate_two_type.json"), "--out", str(p))[0] == 0
        assert a.read_bytes() == b.read_bytes()
        assert a.read_text().startswith("# seed=")


class TestSchedule:
    def test_boosted_demands(self, capsys):
        code, out, _ = run(capsys, "schedule", "--config", str(CONFIGS / "schedule_demands.json"), "--policy", "lagrangian-boost")
        assert code == 0
        lines = out.splitlines()
        assert "seed=11" in lines[0] and len(lines) == 7

    def test_budgets_json(self, capsys):
        code, out, _ = run(capsys, "schedule", "--config", str(CONFIGS / "schedule_budgets.json"), "--policy", "throttled", "--format", "json")
        assert code == 0
        assert json.loads(out)


class TestSolve:
    def test_dual(self, capsys):
        code, out, _ = run(capsys, "solve", "--instance", str(CONFIGS / "program_p1.json"))
        data = json.loads(out)
        assert code == 0 and data["dual_bound"] == 3.0 and data["primal_value"] == 3.0

    def test_enumerate(self, capsys):
        code, out, _ = run(capsys, "solve", "--instance", str(CONFIGS / "program_p1.json"), "--method", "enumerate")
        assert code == 0 and json.loads(out)["optimal_value"] == 3.0

    def test_oversized_enumeration(self, capsys, tmp_path):
        path = tmp_path / "big.json"
        path.write_text(build_p1([[2.0] * 30] * 3, 1.0).to_json())
        code, _, err = run(capsys, "solve", "--instance", str(path), "--method", "enumerate")
        assert code == 1 and "enumeration limit" in err

    def test_saa_instance(self, capsys):
        code, out, _ = run(capsys, "solve", "--instance", str(CONFIGS / "saa_p3.json"), "--method", "enumerate")
        assert code == 0 and json.loads(out)["feasible"]


class TestExperiments:
    def test_list(self, capsys):
        code, out, _ = run(capsys, "experiments", "list")
        assert code == 0 and "hindsight-max" in out

    def test_run_to_file_is_reproducible(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert run(capsys, "experiments", "run", "--id", "static-vs-dynamic", "--seed", "4", "--out", str(a))[0] == 0
        assert run(capsys, "experiments", "run", "--id", "static-vs-dynamic", "--seed", "4", "--out", str(b))[0] == 0
        assert a.read_bytes() == b.read_bytes()
        assert "seed=4" in a.read_text().splitlines()[0]

    def test_unknown_id(self, capsys):
        assert run(capsys, "experiments", "run", "--id", "table-4", "--seed", "1")[0] in (1, 2)

    def test_missing_id(self, capsys):
        assert run(capsys, "experiments", "run")[0] == 2


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "rppa.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
