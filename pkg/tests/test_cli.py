import math

import pytest

from lobexec import cli
from lobexec.cli import (
    EXEC_COLUMNS,
    ResultTable,
    UsageError,
    emit_outputs,
    main,
    parse_config,
    parse_grid,
    run_experiment,
    run_probe,
)


def _rows(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    return header, [dict(zip(header, l.split(","))) for l in lines[1:]]


def test_flag_overrides_file(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# comment\nmu=0.5\npaths = 200\n")
    cfg = parse_config(["exec", "--config", str(f), "--mu", "1", "--Q", "3"])
    assert cfg.mu == (1.0,) and cfg.paths == 200


def test_grid_points():
    assert len(parse_grid("2:6:0.25")) == 17
    assert parse_grid("2:6:0.25")[-1] == 6.0
    assert parse_grid("1,2.5") == (1.0, 2.5)


@pytest.mark.parametrize("text", ["2:6", "6:2:1", "2:6:0", "a:b:c", ""])
def test_malformed_grid(text):
    with pytest.raises(UsageError):
        parse_grid(text)


def test_unknown_key(tmp_path):
    f = tmp_path / "bad.cfg"
    f.write_text("foo=1\n")
    with pytest.raises(UsageError, match="unknown key: foo"):
        parse_config(["probe", "--config", str(f)])


def test_missing_grid_for_exec():
    with pytest.raises(UsageError, match="q_grid"):
        parse_config(["exec"])


def test_probe_conservation():
    row = run_probe(parse_config(["probe", "--mu", "0", "--Q", "4"])).rows[0]
    assert row[8] == pytest.approx(1.0, abs=1e-6)


def test_probe_on_execution_boundary():
    row = run_probe(parse_config(["probe", "--vb", "1", "--va", "4", "--Q", "4"])).rows[0]
    assert row[5:8] == (1.0, 0.0, 0.0)


def test_probe_free():
    row = run_probe(parse_config(["probe", "--vb", "1", "--va", "3"])).rows[0]
    assert row[6] == pytest.approx(0.2048, abs=1e-4)
    assert math.isinf(row[9])


def test_exec_table_schema(tmp_path):
    out = tmp_path / "exec"
    cfg = parse_config(["exec", "--Q-grid", "2:3:0.5", "--paths", "100", "--out", str(out)])
    emit_outputs(run_experiment(cfg), cfg)
    header, rows = _rows(tmp_path / "exec.csv")
    assert tuple(header) == EXEC_COLUMNS
    assert len(rows) == 3
    meta = [l for l in (tmp_path / "exec.csv").read_text().splitlines() if l.startswith("#")]
    assert "# config.q_grid=2,2.5,3" in meta and "# seed=0" in meta
    assert "series mc_mean_x error=se_x" in (tmp_path / "exec.plot").read_text()


def test_every_mc_column_has_se():
    for cols in (cli.EXEC_COLUMNS, cli.FREE_COLUMNS, cli.ROBUST_COLUMNS):
        mc = [c for c in cols if c.startswith("mc_")]
        for c in mc:
            se = "se_" + c[3:].replace("mean_", "")
            assert se in cols, c


def test_free_table_has_asymptotics(tmp_path):
    cfg = parse_config(["free", "--paths", "50", "--t-max", "100", "--n-times", "3",
                        "--out", str(tmp_path / "free")])
    t = run_experiment(cfg)
    assert t.column("asy_mean_n")[-1] == pytest.approx(100 / math.log(100) * math.pi / 6)


def test_robust_families(tmp_path):
    cfg = parse_config(["robust", "--Q-grid", "3:4:1", "--paths", "60"])
    t = run_experiment(cfg)
    assert sorted({r[0] for r in t.rows}) == [0.0, 0.3, 1.0]
    assert all(r[1] == "fig3" for r in t.rows)


def test_byte_identical_rerun(tmp_path):
    args = ["exec", "--mu", "0,0.5", "--Q-grid", "2.5:3.5:0.5", "--paths", "120",
            "--out", str(tmp_path / "r")]
    assert main(args) == 0
    first = (tmp_path / "r.csv").read_bytes()
    assert main(args + ["--workers", "2"]) == 0
    assert (tmp_path / "r.csv").read_bytes() == first


def test_exit_codes(tmp_path, capsys):
    assert main(["probe", "--mu", "-1"]) == 2
    assert main(["exec", "--Q-grid", "2:x:1"]) == 2
    assert main(["nonsense"]) == 2
    assert main(["probe", "--out", str(tmp_path / "ok")]) == 0


def test_numeric_failure_exit_code(tmp_path, monkeypatch):
    from lobexec.quadrature import ConvergenceError

    real = cli.exec_moments
    calls = []

    def broken(*a, **k):
        calls.append(1)
        if len(calls) > 1:
            raise ConvergenceError("no")
        return real(*a, **k)
    monkeypatch.setattr(cli, "exec_moments", broken)
    out = tmp_path / "n"
    assert main(["exec", "--Q-grid", "2:3:0.5", "--paths", "20", "--out", str(out)]) == 3
    # the first point finished before the failure and is flushed
    header, rows = _rows(tmp_path / "n.csv")
    assert len(rows) == 1
    assert "# status=partial" in (tmp_path / "n.csv").read_text()


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["probe", "--out", str(blocker / "sub" / "x")]) == 2


def test_table_rejects_ragged_rows():
    t = ResultTable(("a", "b"))
    with pytest.raises(ValueError):
        t.add((1,))
