import json

import pytest

from syncleft.cli import main

INI = """[scenario]
N0 = 30
C = 15
kappa_a_agg = 0.01
kappa_d = 5e-3
kappa_e = 2e-3
D = 0.025
a = 0.5
horizon = 200
sample_times = 100, 200
[cme]
delta_t = 50
epsilon = 1e-8
[pbs]
dt_pbs = 0.05
trials = 8
seed = 21
"""


@pytest.fixture
def ini(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(INI)
    return path


def test_all_writes_every_artifact(ini, tmp_path):
    out = tmp_path / "out"
    assert main(["all", "--config", str(ini), "--out", str(out)]) == 0
    names = {p.name for p in out.iterdir()}
    assert names == {
        "meanfield.csv", "cme_pmf.csv", "cme_marginals.csv", "cme_moments.csv",
        "reference_models.csv", "pbs_hist.csv", "plot_data.csv", "report.json",
    }
    report = json.loads((out / "report.json").read_text())
    assert report["config"]["trials"] == 8
    assert (out / "cme_pmf.csv").read_text().splitlines()[0] == "t_us,n,o,prob"
    assert (out / "pbs_hist.csv").read_text().splitlines()[0] == "t_us,variable,value,count,trials"
    assert (out / "reference_models.csv").read_text().splitlines()[0] == "t_us,model,variable,value,prob"


def test_all_is_byte_identical(ini, tmp_path):
    for name in ("a", "b"):
        assert main(["all", "--config", str(ini), "--out", str(tmp_path / name), "--seed", "5"]) == 0
    for path in sorted((tmp_path / "a").iterdir()):
        assert path.read_bytes() == (tmp_path / "b" / path.name).read_bytes(), path.name


@pytest.mark.parametrize("command, expected", [
    ("mean-field", {"meanfield.csv"}),
    ("cme", {"meanfield.csv", "cme_pmf.csv", "cme_marginals.csv", "cme_moments.csv", "reference_models.csv"}),
    ("pbs", {"pbs_hist.csv"}),
    ("compare", {"report.json", "plot_data.csv"}),
])
def test_subcommands(ini, tmp_path, command, expected):
    out = tmp_path / command
    assert main([command, "--config", str(ini), "--out", str(out), "--trials", "3"]) == 0
    assert {p.name for p in out.iterdir()} == expected


def test_config_error_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[scenario]\nkappa_d = -1\n")
    assert main(["mean-field", "--config", str(path), "--out", str(tmp_path / "o")]) == 2
    assert "kappa_d" in capsys.readouterr().err


def test_missing_config_exit_code(tmp_path):
    assert main(["mean-field", "--config", str(tmp_path / "nope.ini"), "--out", str(tmp_path)]) == 2
    assert main(["mean-field", "--out", str(tmp_path)]) == 2


def test_bad_override_exit_code(ini, tmp_path):
    assert main(["pbs", "--config", str(ini), "--out", str(tmp_path), "--trials", "0"]) == 2


def test_runtime_error_exit_code(ini, tmp_path):
    args = ["cme", "--config", str(ini), "--out", str(tmp_path / "o"), "--max-window-states", "4"]
    assert main(args) == 1


def test_unwritable_output_exit_code(ini, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["compare", "--config", str(ini), "--out", str(blocker / "sub")]) == 1
