import csv
import json

import numpy as np
import pytest

from deostar import driver
from deostar.cli import main
from deostar.config import RunConfig, parse_config
from deostar.exceptions import NumericalError

pytestmark = pytest.mark.filterwarnings("ignore::RuntimeWarning")

SMALL = ["--n-iter", "200", "--n-chains", "6"]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(autouse=True)
def output_root(monkeypatch, tmp_path):
    monkeypatch.setenv("DEOSTAR_OUTPUT_ROOT", str(tmp_path / "runs"))
    return tmp_path / "runs"


def test_run_writes_artifacts(output_root, capsys):
    assert main(["run", *SMALL, "--name", "small"]) == 0
    out = output_root / "small"
    names = {p.name for p in out.iterdir()}
    assert names == {"config.ini", "ladder.csv", "swaps.csv", "index.csv", "samples.csv", "report.json"}
    report = json.loads(capsys.readouterr().out)
    assert report == json.loads((out / "report.json").read_text())
    assert report["iterations"] == 200 and report["status"] == "ok"

    ladder = read_csv(out / "ladder.csv")
    assert ladder[0][:2] == ["iter", "eta_1"] and len(ladder) == 201 and len(ladder[0]) == 1 + 2 * 6
    index = read_csv(out / "index.csv")
    assert index[0] == ["iter", *[f"slot_{i}" for i in range(1, 7)]]
    assert sorted(map(int, index[1][1:])) == list(range(6))
    swaps = read_csv(out / "swaps.csv")
    assert swaps[0] == ["iter", "pair", "attempted", "accepted", "dU", "threshold_or_rate"]
    assert len(swaps) == 1 + 200 * 5
    assert read_csv(out / "samples.csv")[0] == ["iter", "slot", "x_1", "x_2"]
    assert parse_config(out / "config.ini") == parse_config(overrides={"n_iter": "200", "n_chains": "6", "name": "small"})


def test_run_from_file_with_override(tmp_path, output_root):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[run]\npreset = grid25-deo\nn_iter = 50\nname = fromfile\n")
    assert main(["run", "--config", str(cfg), "--n-chains", "4"]) == 0
    saved = parse_config(output_root / "fromfile" / "config.ini")
    assert saved.window == 1 and saved.n_chains == 4 and saved.n_iter == 50


def test_explicit_output_dir(tmp_path):
    assert main(["run", *SMALL, "--output-dir", str(tmp_path / "here")]) == 0
    assert (tmp_path / "here" / "report.json").exists()


@pytest.mark.parametrize(
    "argv",
    [["run", "--n-chains", "1"], ["run", "--window", "x"], ["run", "--scheme", "APE"], ["window-opt", "--P", "1", "--S", "0.4"],
     ["index-sim", "--n-round-trips", "0"], ["sweep", "--axis", "temperature", "--values", "1"]],
)
def test_config_errors_exit_2(argv, capsys):
    assert main(argv) == 2
    assert "config error" in capsys.readouterr().err


def test_unknown_file_key_exit_2(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[swap]\nwindw = 3\n")
    assert main(["run", "--config", str(cfg)]) == 2


def test_numerical_error_exit_3_with_partial_artifacts(output_root, capsys):
    assert main(["run", "--eta-high", "1e6", "--n-iter", "500", "--name", "boom"]) == 3
    assert "numerical error" in capsys.readouterr().err
    report = json.loads((output_root / "boom" / "report.json").read_text())
    assert report["status"] == "partial" and report["iterations"] < 500
    assert len(read_csv(output_root / "boom" / "index.csv")) == report["iterations"] + 1


def test_driver_reraises_numerical(tmp_path):
    with pytest.raises(NumericalError):
        driver.run(RunConfig(eta_high=1e6, n_iter=300), tmp_path / "d")
    assert (tmp_path / "d" / "ladder.csv").exists()


def test_sweep(output_root, capsys):
    assert main(["sweep", *SMALL, "--name", "sw", "--axis", "window", "--values", "1,3"]) == 0
    root = output_root / "sw"
    assert (root / "window=1" / "report.json").exists() and (root / "window=3" / "report.json").exists()
    rows = read_csv(root / "sweep.csv")
    assert rows[0][0] == "window" and [r[0] for r in rows[1:]] == ["1", "3"]
    printed = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert printed[0][:2] == ["window", "round_trips_per_1000_iters"] and len(printed) == 3


def test_driver_sweep_in_memory():
    res = driver.sweep(RunConfig(n_iter=100, n_chains=4), "lambda_w", ["0", "2"])
    assert [v for v, _ in res] == [0.0, 2.0]


def test_index_sim_csv(tmp_path):
    out = tmp_path / "idx.csv"
    argv = ["index-sim", "--P", "2,4", "--W", "1 2", "--r", "0.5", "--n-round-trips", "500", "--out", str(out)]
    assert main(argv) == 0
    rows = read_csv(out)
    assert rows[0] == ["P", "W", "r", "E_T_closed_form", "E_T_monte_carlo", "stderr"]
    assert len(rows) == 5
    p4w2 = next(r for r in rows[1:] if r[0] == "4" and r[1] == "2")
    assert float(p4w2[3]) == pytest.approx(32.0)
    assert main(argv) == 0 and read_csv(out) == rows


def test_index_sim_stdout(capsys):
    assert main(["index-sim", "--P", "2", "--W", "1", "--r", "0.3", "--n-round-trips", "100"]) == 0
    assert capsys.readouterr().out.startswith("P,W,r,")


def test_window_opt(capsys):
    assert main(["window-opt", "--P", "16", "--S", "0.4"]) == 0
    lines = dict(line.split("=") for line in capsys.readouterr().out.split())
    assert lines["optimal_window"] == "8"
    assert abs(int(lines["argmin_closed_form"]) - 8) <= 1
    assert np.isfinite(float(lines["g_root"]))


def test_window_opt_two_chains(capsys):
    assert main(["window-opt", "--P", "2", "--S", "0.9"]) == 0
    assert "g_root" not in capsys.readouterr().out
