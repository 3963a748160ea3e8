import csv

import numpy as np
import pytest

from nrasqn import MinimalSurface, NewtonConfig, newton_solve
from nrasqn.cli import (
    EXIT_BAD_CONFIG,
    EXIT_IO,
    EXIT_NOT_CONVERGED,
    RunConfig,
    emit_history,
    main,
    parse_config,
)
from nrasqn.driver import ConvergenceRecord, OuterConfig, solve

HEADER = "iter,r_norm,alpha,inner_iters,coarse_iters,time_s"


def read_rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ")
    assert lines[1] == HEADER
    return list(csv.DictReader(lines[1:]))


def test_newton_smoke(tmp_path):
    rc = main(["--mesh", "16x16", "--subdomains", "1", "--precond", "none", "--method", "newton", "--output", str(tmp_path)])
    assert rc == 0
    rows = read_rows(tmp_path / "newton.csv")
    assert len(rows) >= 2 and rows[0]["iter"] == "0"
    r = np.array([float(row["r_norm"]) for row in rows])
    assert np.all(np.diff(r) < 0)
    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert summary[1] == "method,precond,memory,iterations,time_s,converged"
    assert summary[2].startswith("newton,none,7,")
    assert summary[2].endswith(",true")


def test_memory_sweep(tmp_path):
    rc = main(["--mesh", "16x16", "--coarse", "4x4", "--subdomains", "4", "--memory", "1,3,5,7,10", "--output", str(tmp_path)])
    assert rc == 0
    rows = (tmp_path / "summary.csv").read_text().splitlines()[2:]
    assert [r.split(",")[2] for r in rows] == ["1", "3", "5", "7", "10"]
    for m in (1, 3, 5, 7, 10):
        assert (tmp_path / f"lbfgs-left_sd4_ov2_m{m}.csv").exists()


def test_paper_configuration_parses():
    argv = "--mesh 200x200 --coarse 10x10 --subdomains 8 --overlap 2 --method lbfgs --precond left --memory 7 --rtol 1e-6 --atol 1e-7".split()
    cfg, _ = parse_config(argv)
    assert cfg == RunConfig(mesh=(200, 200), coarse=(10, 10), subdomains=8, overlap=2, memory=[7])
    assert (cfg.sub_atol, cfg.sub_rtol) == (1e-10, 1e-1)
    assert (cfg.coarse_atol, cfg.coarse_rtol, cfg.coarse_max_iter) == (1e-12, 1e-10, 5)


def test_config_file_and_precedence(tmp_path):
    conf = tmp_path / "run.cfg"
    conf.write_text("# comment\nmesh = 12x12\ncoarse=4x4\nmethod=aa1\nprecond = right\nmemory=3\nmax-outer = 40\n")
    cfg, _ = parse_config(["--config", str(conf), "--precond", "left"])
    assert cfg.mesh == (12, 12) and cfg.method == "aa1" and cfg.precond == "left"
    assert cfg.memory == [3] and cfg.max_outer == 40


@pytest.mark.parametrize(
    "argv",
    [
        ["--mesh", "10x10", "--coarse", "3x3"],
        ["--method", "sr1"],
        ["--mesh", "ax4"],
        ["--memory", "0"],
        ["--unknown-flag"],
        ["--config", "/nonexistent/file.cfg"],
        ["--mesh", "4x4", "--subdomains", "50"],
    ],
)
def test_bad_config_exit_code(argv, tmp_path):
    try:
        rc = main(argv + ["--output", str(tmp_path)])
    except SystemExit as exc:
        rc = exc.code
    assert rc == EXIT_BAD_CONFIG


def test_not_converged_exit_code(tmp_path):
    rc = main(["--mesh", "16x16", "--precond", "none", "--max-outer", "2", "--output", str(tmp_path)])
    assert rc == EXIT_NOT_CONVERGED


def test_unwritable_output(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    rc = main(["--mesh", "8x8", "--method", "newton", "--output", str(blocker / "sub")])
    assert rc == EXIT_IO


def test_reproducible_bytes(tmp_path):
    args = ["--mesh", "16x16", "--coarse", "4x4", "--subdomains", "4", "--method", "aa1", "--precond", "right", "--no-timing"]
    assert main(args + ["--output", str(tmp_path / "a")]) == 0
    assert main(args + ["--output", str(tmp_path / "b")]) == 0
    name = "aa1-right_sd4_ov2_m7.csv"
    a = (tmp_path / "a" / name).read_bytes()
    b = (tmp_path / "b" / name).read_bytes()
    # the config echo names the output directory; everything after it must match
    assert a.split(b"\n", 1)[1] == b.split(b"\n", 1)[1]


def test_zero_step_history(tmp_path):
    obj = MinimalSurface.on_grid(8)
    xstar, _ = newton_solve(obj, obj.initial_guess(), NewtonConfig(abs_tol=1e-12, rel_tol=1e-16))
    _, rec = solve(obj, xstar, OuterConfig(method="newton"))
    path = emit_history(rec, tmp_path / "h.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == HEADER and len(lines) == 2
    assert float(lines[1].split(",")[1]) <= 1e-7


def test_shortest_round_trip_formatting(tmp_path):
    rec = ConvergenceRecord(rows=[(0, 0.1, 0.0, 0, 0, 0.0), (1, 1 / 3, 0.5, 4, 2, 1.25)])
    text = emit_history(rec, tmp_path / "h.csv", "# cfg").read_text()
    assert text == f"# cfg\n{HEADER}\n0,0.1,0.0,0,0,0.0\n1,{1/3!r},0.5,4,2,1.25\n"
    assert float(text.splitlines()[3].split(",")[1]) == 1 / 3


def test_empty_record_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_history(ConvergenceRecord(), tmp_path / "h.csv")
