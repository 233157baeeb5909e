import json
import os

import numpy as np
import pytest

from relkin import cli
from relkin.errors import ConfigError, DomainError

SMALL = """# tiny resolution
grid.pmax = 8
grid.n = 9
grid.ntheta = 4
grid.nphi = 8
solver.tmax = 0.15
solver.dt = 0.05
slab.nx = 6
diag.n_samples = 2000
"""


def test_empty_config_gives_defaults():
    cfg = cli.parse_config("")
    m, g = cfg.model(), cfg.grid()
    assert (m.a, m.b, m.gamma) == (1.0, 0.0, 0.0)
    assert (g.pmax, g.n) == (12.0, 25)
    assert cfg.solver().dt == 0.05


def test_inadmissible_cross_section_line():
    with pytest.raises(ConfigError, match=r"line 2: .*a ≤ 2\+γ") as exc:
        cli.parse_config("# model\nsigma.a = 3\n")
    assert exc.value.line == 2


def test_last_key_wins_with_warning():
    with pytest.warns(UserWarning, match="last value wins"):
        cfg = cli.parse_config("grid.n = 25\ngrid.n = 33\n")
    assert cfg["grid.n"] == 33 and cfg.lines["grid.n"] == 2 and len(cfg.warnings) == 1


@pytest.mark.parametrize("text,line", [
    ("grid.n = 9\nbogus.key = 1\n", 2),
    ("solver.dt = fast\n", 1),
    ("grid.n = 9\n\ngrid.n = 3\n", 3),
    ("solver.fit_window = 1\n", 1),
    ("sigma.chi_epsilon = -1\n", 1),
    ("missing equals sign\n", 1),
    ("sigma.soft_enabled = maybe\n", 1),
])
@pytest.mark.filterwarnings("ignore:line .* set again")
def test_config_errors_carry_line(text, line):
    with pytest.raises(ConfigError) as exc:
        cli.parse_config(text)
    assert exc.value.line == line


def test_comments_and_types():
    cfg = cli.parse_config("sigma.soft_enabled = yes  # on\nsolver.fit_window = 2, 8\nsigma.b = 1\n")
    assert cfg["sigma.soft_enabled"] is True
    assert cfg.solver().fit_window == (2.0, 8.0)
    assert cfg.model().soft_enabled


def _run(tmp_path, scenario, text, name="out", seed=None):
    path = tmp_path / "run.cfg"
    path.write_text(text)
    out = tmp_path / name
    argv = [scenario, "--config", str(path), "--out", str(out)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    return cli.main(argv), out


def test_main_config_error_exit_2(tmp_path, capsys):
    code, _ = _run(tmp_path, "validate", "sigma.a = 3\n")
    assert code == 2
    assert "line 1" in capsys.readouterr().err
    code, _ = _run(tmp_path, "nonsense", "")
    assert code == 2
    assert cli.main(["validate", "--config", str(tmp_path / "absent.cfg")]) == 2


def test_relax_zero_data(tmp_path):
    code, out = _run(tmp_path, "relax", SMALL + "init.kind = zero\n")
    assert code == 0
    data = np.genfromtxt(out / "series.csv", delimiter=",", names=True)
    assert np.all(data["norm_linf"] == 0) and np.all(data["M0"] == 0)
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_status"] == 0 and man["config"]["init.kind"] == "zero"
    assert not any(f.startswith(".tmp_") for f in os.listdir(out))


def test_validate_small_and_deterministic(tmp_path):
    c1, o1 = _run(tmp_path, "validate", SMALL, "a", seed=5)
    c2, o2 = _run(tmp_path, "validate", SMALL, "b", seed=5)
    assert c1 == c2 == 0
    for f in ("series.csv", "report.csv"):
        assert (o1 / f).read_bytes() == (o2 / f).read_bytes()
    text = (o1 / "report.csv").read_text()
    assert text.startswith("check_id,status,measured,bound,ratio\n") and "\r" not in text
    man = json.loads((o1 / "manifest.json").read_text())
    assert man["seed"] == 5 and all(c["status"] == "pass" for c in man["checks"])


def test_report_float_format(tmp_path):
    rep = cli.Report()
    rep.upper("x", 0.1, 0.3)
    rep.band("y", 0.7, 0.65, 0.85)
    rep.info("z", -1.0)
    lines = rep.text().splitlines()
    assert lines[1] == "x,pass,0.10000000000000001,0.29999999999999999,0.33333333333333337"
    assert lines[2].split(",")[3] == "0.65000000000000002:0.84999999999999998"
    assert lines[3].split(",")[1] == "info" and rep.passed


def test_crash_writes_partial_report(tmp_path, monkeypatch):
    def boom(cfg, seed, rep):
        rep.upper("first", 1.0, 2.0)
        raise DomainError("synthetic failure")

    monkeypatch.setitem(cli._RUNNERS, "kernel-probe", boom)
    code, out = _run(tmp_path, "kernel-probe", SMALL)
    assert code == 1
    rows = (out / "report.csv").read_text().splitlines()
    assert rows[1].startswith("first,pass") and rows[2].startswith("scenario_completed,fail")
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_status"] == 1 and "synthetic failure" in man["error"]


def test_failed_check_exit_1(tmp_path, monkeypatch):
    def fails(cfg, seed, rep):
        rep.upper("too_big", 3.0, 1.0)
        return ("k", "v"), [(0, 1.0)]

    monkeypatch.setitem(cli._RUNNERS, "nu-scaling", fails)
    code, out = _run(tmp_path, "nu-scaling", SMALL)
    assert code == 1
    assert (out / "series.csv").read_text() == "k,v\n0,1\n"


@pytest.mark.parametrize("scenario", ["nu-scaling", "slab", "kernel-probe"])
def test_scenarios_run(tmp_path, scenario):
    code, out = _run(tmp_path, scenario, SMALL)
    assert code in (0, 1)
    for f in ("series.csv", "report.csv", "manifest.json"):
        assert (out / f).exists()
    assert json.loads((out / "manifest.json").read_text())["error"] is None
