import json
import subprocess
import sys

import pytest

from okdrop import cli, io


def run(args, capsys=None):
    code = cli.main(args)
    out = capsys.readouterr() if capsys else None
    return code, out


def test_limit_check_empty_branch(capsys):
    code, out = run(["limit-check", "--kappa", "0.6667", "--delta-bar", "0.3"], capsys)
    assert code == 0
    assert "# branch: empty" in out.out
    rows = dict(line.split(",") for line in out.out.splitlines()[1:] if not line.startswith("#"))
    assert float(rows["mu_bar"]) == 0.0
    assert float(rows["delta_c"]) == pytest.approx(0.5 * 3 ** (2 / 3) * 0.6667**2, rel=1e-15)


def test_limit_check_constant_branch(capsys):
    code, out = run(["limit-check"], capsys)
    assert code == 0 and "# branch: constant" in out.out


def test_green_selftest(tmp_path):
    out = tmp_path / "g.csv"
    assert cli.main(["green-selftest", "--grid", "256", "--out", str(out)]) == 0
    cols, rows, _ = (lambda c: (c[0], c[1], c[2]))(_read_mixed(out))
    assert cols == ["check", "value", "threshold", "pass"]
    assert [r[0] for r in rows] == ["residual_integral", "residual_HH", "sup_R_refinement"]
    assert all(r[3] == "1" for r in rows)
    side = json.loads(out.with_suffix(".json").read_text())
    assert side["status"] == "ok" and side["spec"]["grid_n"] == 256


def _read_mixed(path):
    import csv

    lines = path.read_text().splitlines()
    data = [ln for ln in lines if not ln.startswith("#")]
    rows = list(csv.reader(data))
    return rows[0], rows[1:], [ln for ln in lines if ln.startswith("#")]


def test_recover_sweep_example(tmp_path):
    out = tmp_path / "s.csv"
    args = ["recover-sweep", "--kappa", "0.6667", "--delta-bar", "1", "--eps", "1e-3,1e-6,1e-9,1e-12", "--out", str(out)]
    assert cli.main(args) == 0
    cols, rows, comments = io.read_csv(out)
    assert cols == ["epsilon", "log_eps", "count", "eta", "radius", "mass", "perimeter_term", "area_term",
                    "self_interaction", "pair_interaction", "total_rescaled", "limit_target", "gap"]
    assert [r[0] for r in rows] == [1e-3, 1e-6, 1e-9, 1e-12]
    assert comments[-1].startswith("gap-trend: ")


def test_recover_sweep_bit_identical(tmp_path):
    args = ["recover-sweep", "--ell", "2", "--delta-bar", "15.5", "--eps", "1e-3,1e-6", "--seed", "42"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert cli.main(args + ["--out", str(a)]) == 0
    assert cli.main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    _, rows, comments = io.read_csv(a)
    assert rows[0][2] == 16 and rows[1][2] == 48
    assert comments == ["gap-trend: strictly decreasing"]
    side = json.loads(a.with_suffix(".json").read_text())
    assert side["results"]["defects"][0]["M"] >= -1e-9


def test_relax_trace_nonincreasing(tmp_path):
    out = tmp_path / "r.csv"
    assert cli.main(["relax", "--count", "5", "--eps", "1e-6", "--seed", "2", "--out", str(out)]) == 0
    cols, rows, _ = io.read_csv(out)
    assert cols == ["step", "energy", "max_gradient", "min_pair_distance", "area_mean", "area_std"]
    E = [r[1] for r in rows]
    assert all(b <= a for a, b in zip(E, E[1:]))
    side = json.loads(out.with_suffix(".json").read_text())
    cfg = io.config_from_text(side["results"]["final_config"])
    assert len(cfg) == 5


def test_diffuse_compare_rows(capsys):
    code, out = run(["diffuse-compare", "--eps", "2e-2,1e-2", "--grid", "256"], capsys)
    assert code == 0
    lines = out.out.splitlines()
    assert lines[0] == "epsilon,grid,sharp_energy,diffuse_energy,ratio"
    assert lines[1].startswith("0.02,256,") and lines[2].startswith("0.01,512,")


def test_config_file_and_override(tmp_path, capsys):
    conf = tmp_path / "c.conf"
    conf.write_text("# limit check\nkappa = 0.6667\ndelta-bar = 0.3\n")
    code, out = run(["limit-check", "--config", str(conf)], capsys)
    assert code == 0 and "empty" in out.out
    code, out = run(["limit-check", "--config", str(conf), "--delta-bar", "2"], capsys)
    assert code == 0 and "constant" in out.out


@pytest.mark.parametrize(
    "args",
    [
        ["nonsense"],
        ["relax", "--eps", "1e-3,1e-2"],
        ["relax", "--eps", "0.5"],
        ["limit-check", "--kappa", "-1"],
        ["limit-check", "--gamma", "2"],
        ["limit-check", "--config", "/nonexistent/file"],
        ["limit-check", "--out", "/nonexistent/dir/x.csv"],
    ],
)
def test_usage_errors_exit_1(args, capsys):
    code, out = run(args, capsys)
    assert code == 1
    assert "error" in out.err


def test_invariant_failure_exit_2(tmp_path, monkeypatch):
    # a failing check flushes the partial report with a FAILED marker
    def broken(spec, report):
        report.rows.append(["delta_c", 1.0])
        cli._check(report, False, "forced")

    monkeypatch.setitem(cli.RUNNERS, "limit-check", (broken, ["quantity", "value"]))
    out = tmp_path / "f.csv"
    assert cli.main(["limit-check", "--out", str(out)]) == 2
    text = out.read_text()
    assert "delta_c,1" in text and text.splitlines()[-1] == "# FAILED: forced"
    assert json.loads(out.with_suffix(".json").read_text())["status"] == "failed"


def test_threads_env(monkeypatch, capsys):
    monkeypatch.setenv("OKDROP_THREADS", "abc")
    assert run(["limit-check"], capsys)[0] == 1
    monkeypatch.setenv("OKDROP_THREADS", "1")
    assert run(["limit-check"], capsys)[0] == 0


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "okdrop.cli", "limit-check"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("quantity,value")
