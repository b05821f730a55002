import math
import subprocess
import sys

import numpy as np
import pytest

from mortar_dgbem import cli
from mortar_dgbem.cli import (CSV_HEADER, ConfigError, RunConfig, build_parser, config_from_args,
                              csv_text, load_config_file, main, run, write_atomic)

HEADER = b"k,order,num_refines,errltwo,errhone,errm,errphi\n"


def _cfg(argv):
    return config_from_args(build_parser().parse_args(argv))


def test_defaults_match_experiment():
    c = RunConfig().validate()
    assert c.ks == pytest.approx([math.sqrt(3) * math.pi, 2 * math.sqrt(3) * math.pi])
    assert c.ps == [1, 2, 3] and c.levels == [0, 1, 2, 3]
    assert (c.a, c.b, c.d) == (10.0, 0.1, 0.1)


def test_header_bytes():
    assert csv_text([]).encode() == HEADER
    assert ",".join(CSV_HEADER) + "\n" == HEADER.decode()


def test_flag_parsing():
    c = _cfg(["--mode", "p-study", "--level", "2", "--p", "1,2,3", "--k-multiple", "2"])
    assert c.levels == [2] and c.ps == [1, 2, 3]
    assert c.ks == pytest.approx([2 * math.sqrt(3) * math.pi])


def test_config_file_and_overrides(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# experiment\nk = 1\norder = 2   # p\nlevels = 0,1\nsolver = gmres\n")
    c = _cfg(["--config", str(f), "--config", "seed=7", "--levels", "1"])
    assert c.k_multiples == [1.0] and c.ps == [2] and c.solver == "gmres"
    assert c.seed == 7 and c.levels == [1]


@pytest.mark.parametrize("text,where", [
    ("k = 1\nbogus = 3\n", ":2:"),
    ("k = 1\nlevels\n", ":2:"),
    ("p = one\n", ":1:"),
])
def test_config_file_errors_report_line(tmp_path, text, where):
    f = tmp_path / "bad.cfg"
    f.write_text(text)
    with pytest.raises(ConfigError, match=where):
        load_config_file(f)


@pytest.mark.parametrize("argv", [
    ["--levels", "-1"], ["--p", "0"], ["--k-multiple", "-1"], ["--config", "levels="],
    ["--config", "d=0.7", "--config", "delta_policy=raise"], ["--config", "gmres_tol=0"],
    ["--config", "mode=fast"],
])
def test_invalid_configs_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "configuration error" in capsys.readouterr().err


def test_write_atomic_replaces_and_leaves_no_temp(tmp_path):
    target = tmp_path / "sub" / "out.csv"
    write_atomic(target, "old\n")
    write_atomic(target, "new\n")
    assert target.read_text() == "new\n"
    assert [p.name for p in target.parent.iterdir()] == ["out.csv"]


def test_write_atomic_keeps_old_file_on_failure(tmp_path, monkeypatch):
    target = tmp_path / "out.csv"
    write_atomic(target, "old\n")

    def boom(*a, **k):
        raise OSError("disk full")

    monkeypatch.setattr(cli.os, "replace", boom)
    with pytest.raises(OSError):
        write_atomic(target, "new\n")
    assert target.read_text() == "old\n"
    assert [p.name for p in tmp_path.iterdir()] == ["out.csv"]


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    outs = []
    for name in ("a.csv", "b.csv"):
        cfg = _cfg(["--k-multiple", "1", "--p", "1", "--levels", "0,1", "--output", str(d / name)])
        assert run(cfg, out=open(d / (name + ".log"), "w")) == 0
        outs.append(d / name)
    return outs


def test_converge_csv_layout(small_run):
    raw = small_run[0].read_bytes()
    assert raw.startswith(HEADER)
    rows = [r.split(",") for r in raw.decode().splitlines()[1:]]
    assert len(rows) == 2
    assert [r[2] for r in rows] == ["0", "1"] and {r[1] for r in rows} == {"1"}
    vals = np.array([[float(v) for v in r[3:]] for r in rows])
    assert np.all(vals > 0) and np.all(np.isfinite(vals))
    assert float(rows[0][0]) == math.sqrt(3) * math.pi
    rates = small_run[0].with_name("a.csv.rates").read_text()
    assert rates.startswith("# k order") and len(rates.strip().splitlines()) == 2


def test_determinism_bit_identical(small_run):
    a, b = small_run
    assert a.read_bytes() == b.read_bytes()


def test_solver_failure_writes_sentinel(tmp_path, monkeypatch, capsys):
    from mortar_dgbem.linalg_solve import SingularSystemError

    def fail(*a, **k):
        raise SingularSystemError("zero pivot", 0.0)

    monkeypatch.setattr(cli, "run_case", fail)
    out = tmp_path / "o.csv"
    code = run(_cfg(["--k-multiple", "1", "--p", "1", "--levels", "0", "--output", str(out)]))
    assert code == 1
    assert out.read_text().splitlines()[1].endswith("nan,nan,nan,nan")
    assert "solve failed" in capsys.readouterr().out


def test_invariants_mode_exit_zero(capsys):
    assert main(["--mode", "invariants", "--levels", "0,1"]) == 0
    out = capsys.readouterr().out
    assert "invariants: all passed" in out and "[FAIL]" not in out


def test_module_entry_point_help():
    r = subprocess.run([sys.executable, "-m", "mortar_dgbem", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "--k-multiple" in r.stdout
