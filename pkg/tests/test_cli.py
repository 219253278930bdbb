import json
import math
from pathlib import Path

import pytest

from mofsim.cli import config_hash, load_config, run, selfcheck_results
from mofsim.qbm import read_export
from mofsim.timedomain import load_checkpoint

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write_json(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def read_rows(path):
    lines = Path(path).read_text().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if not ln.startswith("#")]
    return comments, body[0].split(","), [list(map(float, r.split(","))) for r in body[1:]]


def test_scatter_output_is_deterministic(tmp_path):
    args = ["scatter", "--m", "1", "--omega", "2", "--lambda", "3", "--wmin", "0.5", "--wmax", "3", "--n", "50"]
    assert run(args + ["-o", str(tmp_path / "a.csv")]) == 0
    assert run(args + ["-o", str(tmp_path / "b.csv")]) == 0
    a, b = (tmp_path / "a.csv").read_bytes(), (tmp_path / "b.csv").read_bytes()
    assert a == b
    assert b"\r" not in a


def test_csv_layout_and_values(tmp_path):
    out = tmp_path / "s.csv"
    run(["scatter", "--m", "1", "--omega", "2", "--lambda", "3", "--wmin", "1", "--wmax", "2", "--n", "2",
         "-o", str(out)])
    comments, header, rows = read_rows(out)
    assert comments[0].startswith("# mofsim ")
    assert comments[1].startswith("# config_hash ")
    assert header == ["omega", "re_R", "im_R", "abs_R2", "abs_T2"]
    assert rows[0][1] == pytest.approx(-9 / 13) and rows[0][2] == pytest.approx(6 / 13)
    for r in rows:
        assert r[3] + r[4] == pytest.approx(1.0, abs=1e-12)


def test_hz_units_scale_frequencies(tmp_path):
    out = tmp_path / "s.csv"
    run(["scatter", "--m", "1", "--omega", "1", "--lambda", "1", "--wmin", "1", "--wmax", "2", "--n", "2",
         "--units", "hz", "-o", str(out)])
    _, _, rows = read_rows(out)
    assert rows[0][0] == pytest.approx(2 * math.pi)


def test_invalid_parameters_exit_one(tmp_path, capsys):
    assert run(["scatter", "--m", "-1", "--omega", "2", "--lambda", "3", "--wmin", "1", "--wmax", "2",
                "-o", str(tmp_path / "x.csv")]) == 1
    assert run(["scatter", "--m", "1"]) == 1
    assert run(["no-such-command"]) == 1
    assert not (tmp_path / "x.csv").exists()


def test_config_errors_name_the_key(tmp_path, capsys):
    cfg = json.loads((CONFIGS / "cavity.json").read_text())
    cfg["mirrors"][0]["m"] = -1.0
    path = write_json(tmp_path / "bad.json", cfg)
    assert run(["cavity", "--config", path, "--wmin", "1", "--wmax", "2", "-o", str(tmp_path / "c.csv")]) == 1
    assert "mirrors[0].m" in capsys.readouterr().err
    cfg["mirrors"][0]["m"] = 0.01
    del cfg["units"]
    path = write_json(tmp_path / "bad.json", cfg)
    assert run(["cavity", "--config", path, "--wmin", "1", "--wmax", "2", "-o", str(tmp_path / "c.csv")]) == 1
    assert "units" in capsys.readouterr().err


def test_numerical_failure_exits_two(tmp_path, capsys):
    # two perfect reflectors at w = Omega with w L = pi trap a bound state: 1 - R1 R2 = 0
    cfg = json.loads((CONFIGS / "cavity.json").read_text())
    for m in cfg["mirrors"]:
        m["omega"] = math.pi
    path = write_json(tmp_path / "bound.json", cfg)
    out = tmp_path / "c.csv"
    assert run(["cavity", "--config", path, "--wmin", str(math.pi), "--wmax", "4",
                "--n", "2", "-o", str(out)]) == 2
    assert "numerical" in capsys.readouterr().err
    assert not out.exists()


def test_config_echo_and_hash(tmp_path):
    out = tmp_path / "c.csv"
    assert run(["cavity", "--config", str(CONFIGS / "cavity.json"), "--wmin", "1", "--wmax", "5",
                "--n", "20", "-o", str(out)]) == 0
    echo = json.loads((tmp_path / "c.csv.echo.json").read_text())
    cfg = load_config(str(CONFIGS / "cavity.json"))
    assert config_hash(echo) == config_hash(cfg)
    comments, _, rows = read_rows(out)
    assert f"# config_hash {config_hash(cfg)}" in comments
    assert len(rows) == 20


def test_reference_cooling_config_sweeps(tmp_path):
    out = tmp_path / "sweep"
    assert run(["cooling-sweep", "--config", str(CONFIGS / "cooling_reference.json"), "--gnuplot", "-o", str(out)]) == 0
    _, header, rows = read_rows(out / "cooling_sweep.csv")
    assert header[0] == "L" and len(rows) == 400
    assert list(out.glob("*.dat"))


def test_sweep_is_independent_of_worker_count(tmp_path):
    cfg = json.loads((CONFIGS / "cooling_reference.json").read_text())
    cfg["sweep"]["n"] = 16
    path = write_json(tmp_path / "c.json", cfg)
    assert run(["cooling-sweep", "--config", path, "--workers", "1", "-o", str(tmp_path / "a")]) == 0
    assert run(["cooling-sweep", "--config", path, "--workers", "2", "-o", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a/cooling_sweep.csv").read_bytes() == (tmp_path / "b/cooling_sweep.csv").read_bytes()


def test_cooling_evolve_writes_trajectory(tmp_path):
    out = tmp_path / "t.csv"
    assert run(["cooling-evolve", "--config", str(CONFIGS / "cooling_reference.json"), "--t-end", "0.05",
                "-o", str(out)]) == 0
    _, header, rows = read_rows(out)
    assert header[:2] == ["t", "Z"]
    assert rows[0][1] == pytest.approx(1e-6)


def test_lattice_evolve_with_checkpoint(tmp_path):
    out = tmp_path / "run"
    ck = tmp_path / "state.ck"
    assert run(["evolve", "--config", str(CONFIGS / "cavity.json"), "--t-end", "0.5",
                "--checkpoint", str(ck), "-o", str(out)]) == 0
    with open(ck, "rb") as fh:
        s = load_checkpoint(fh)
    assert s.t == pytest.approx(0.5)
    assert len(s.mirrors) == 2


def test_qbm_export_round_trips(tmp_path):
    out = tmp_path / "q.txt"
    assert run(["qbm-export", "--config", str(CONFIGS / "cavity.json"), "--box", "10", "--cutoff", "5",
                "--modes", "3", "--normalization", "canonical", "-o", str(out)]) == 0
    with open(out) as fh:
        e = read_export(fh)
    assert e.normalization == "canonical" and e.couplings.shape == (6, 2)


def test_qbm_slow_export_needs_traps(tmp_path):
    assert run(["qbm-export", "--config", str(CONFIGS / "cavity.json"), "--box", "10", "--cutoff", "5",
                "--modes", "3", "--slow", "-o", str(tmp_path / "q.txt")]) == 1


def test_scatter_packet_runs(tmp_path):
    out = tmp_path / "p.csv"
    assert run(["scatter-packet", "--m", "1", "--omega", "10", "--lambda", str(math.sqrt(4000 / 3**1.5)),
                "--w0", "7", "--sigma", "6", "--dx", "0.02", "-o", str(out)]) == 0
    _, header, rows = read_rows(out)
    assert len(rows) == 1


def test_selfcheck_passes(capsys):
    assert all(passed for _, passed, _ in selfcheck_results())
    assert run(["selfcheck"]) == 0
    assert "FAIL" not in capsys.readouterr().out
