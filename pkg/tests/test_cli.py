import csv
import json
import math
import subprocess
import sys

import pytest

from amm import quantum
from amm.cli import SCHEMA_VERSION, run


def call(capsys, *argv):
    code = run(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def report(capsys, *argv):
    code, out, _ = call(capsys, *argv)
    data = json.loads(out)
    assert data["schema_version"] == SCHEMA_VERSION
    return code, data


def test_tsirelson(capsys):
    code, data = report(capsys, "tsirelson", "--functional", "chsh", "--level", "1")
    assert code == 0
    assert data["value"] == pytest.approx(2 * math.sqrt(2), abs=1e-6)
    assert data["status"] == "optimal" and data["inputs_digest"]


def test_sr_di_and_out_file(capsys, tmp_path):
    out = tmp_path / "r.json"
    code, _, _ = call(capsys, "sr-di", "--functional", "chsh", "--value", "2.4", "-o", str(out))
    assert code == 0
    data = json.loads(out.read_text())
    assert data["value"] == pytest.approx(0.0828427, abs=1e-6)


def test_infeasible_exit_code(capsys):
    code, data = report(capsys, "sr-di", "--functional", "chsh", "--value", "3.0")
    assert code == 1 and data["status"] == "infeasible" and data["value"] is None


def test_usage_errors(capsys, tmp_path):
    code, _, err = call(capsys, "sr-di", "--functional", "nope", "--value", "2.4")
    assert code == 2 and err
    bad = tmp_path / "bad.json"
    bad.write_text('{"p": [1, 2,\n')
    code, _, err = call(capsys, "membership", "--table", str(bad))
    assert code == 2 and "bad.json:" in err
    code, _, err = call(capsys, "tsirelson", "--functional", "chsh", "--level", "0")
    assert code == 2


def test_simulate_then_membership(capsys, tmp_path):
    code, data = report(capsys, "simulate", "--state", "phi-plus-d2", "--alice", "chsh-alice", "--bob", "chsh-bob")
    assert code == 0
    path = tmp_path / "t.json"
    path.write_text(json.dumps(data))
    code, data = report(capsys, "membership", "--table", str(path), "--level", "1")
    assert code == 0 and data["status"] == "feasible"
    code, data = report(capsys, "membership", "--table", "pr-box", "--level", "1")
    assert code == 1 and data["status"] == "infeasible"


def test_table_mode_with_swap(capsys):
    code, data = report(capsys, "sr-di", "--table", "chsh-quantum", "--swap")
    assert code == 0
    assert data["value"] == pytest.approx(3 - 2 * math.sqrt(2), abs=1e-5)


def test_direct_programs(capsys, tmp_path):
    code, data = report(capsys, "sr", "--state", "phi-plus-d2", "--alice", "mub-pair")
    assert data["value"] == pytest.approx(3 - 2 * math.sqrt(2), abs=1e-6)
    asm = quantum.steer(quantum.max_entangled(2), quantum.mub_measurements(2, 2))
    path = tmp_path / "asm.json"
    path.write_text(json.dumps(asm.to_json()))
    code, data = report(capsys, "sw", "--assemblage", str(path))
    assert data["value"] == pytest.approx(1.0, abs=1e-6)
    code, data = report(capsys, "ir", "--alice", "mub-pair")
    assert data["value"] == pytest.approx(3 - 2 * math.sqrt(2), abs=1e-6)


def test_se_obs_and_chain(capsys):
    code, data = report(capsys, "se-obs", "--state", "phi-plus-d2", "--alice", "mub-pair", "--with-ir")
    assert code == 0
    code, data = report(capsys, "chain", "--state", "phi-plus-d2", "--alice", "mub-pair")
    assert code == 0 and data["ok"]


def test_busch(capsys):
    code, data = report(capsys, "busch", "--r1", "1", "0", "0", "--r2", "0", "0", "1")
    assert code == 0 and data["value"] is False
    code, data = report(capsys, "busch", "--mub")
    assert data["value"] == pytest.approx(3 - 2 * math.sqrt(2))
    code, _, _ = call(capsys, "busch", "--r1", "0.5", "0", "0", "--r2", "0", "0", "0.5", "--alpha1", "0.2")
    assert code == 2


def test_sweep_csv_and_plot(capsys, tmp_path):
    csv_path, png = tmp_path / "s.csv", tmp_path / "s.png"
    code, data = report(capsys, "sweep", "--functional", "chsh", "--from", "2.0", "--to", "2.8", "--steps", "3",
                        "--levels", "1", "--csv", str(csv_path), "--plot", str(png))
    assert code == 0
    with open(csv_path) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["S_obs", "bound", "level"]
    bounds = [float(r["bound"]) for r in rows]
    assert bounds == sorted(bounds) and bounds[0] == 0.0
    assert png.stat().st_size > 0


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "amm", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "amm" in res.stdout
