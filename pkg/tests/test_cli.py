from __future__ import annotations

import subprocess
import sys
from pathlib import Path

import pytest

from magiq.cli import main

ROOT = Path(__file__).resolve().parents[1]
HONEST = str(ROOT / "scenarios" / "honest-2agent.scn")


def test_model_commands(capsys):
    assert main(["model", "proto", "--q-max", "10", "--t-crypto", "20.33"]) == 0
    assert capsys.readouterr().out.splitlines()[1] == "100,10,0,20.33,203.3,2.033"
    assert main(["model", "provider", "--n-agents", "100", "--lifetime", "1440"]) == 0
    assert capsys.readouterr().out.splitlines()[1] == "100,1440,2.96,296"
    assert main(["model", "initiator", "--t", "15", "--lifetime", "1"]) == 0
    assert capsys.readouterr().out.splitlines()[1] == "15,1,175176"
    assert main(["model", "proto", "--region-table", "--provider", "asia", "--q-max", "1"]) == 0
    assert "asia" in capsys.readouterr().out


def test_run_and_out_dir(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "run", HONEST]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[1].startswith("a-session,alice@a.org:ai,bob@b.org:sched,3,closed")
    assert (tmp_path / "honest-2agent.log").exists()
    assert (tmp_path / "honest-2agent.txt").read_text().startswith("scenario honest-2agent")


def test_bandwidth_command(capsys):
    assert main(["bandwidth", HONEST]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == "phase,session,bytes"
    assert any(r.startswith("round-2,0,") for r in rows)


def test_attack_matrix_command(tmp_path, capsys):
    assert main(["--out", str(tmp_path), "attack-matrix", "--q", "2"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("name,category,q,")
    assert "FAIL" not in out
    assert (tmp_path / "attack-matrix.csv").read_text() == out


def test_bench_command(capsys):
    assert main(["bench", "--iters", "5"]) == 0
    assert capsys.readouterr().out.startswith("op,mean_us,p99_us,note")


def test_missing_file_exits_nonzero(capsys):
    assert main(["run", "/nonexistent.scn"]) == 2


def test_bad_arguments_exit_with_usage():
    with pytest.raises(SystemExit) as ei:
        main(["model", "nosuch"])
    assert ei.value.code == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "magiq", "model", "golden"], capture_output=True,
                       text=True, check=False)
    assert r.returncode == 0 and r.stdout.startswith("model,inputs,quantity,value")
