import json
import subprocess
import sys

import numpy as np
import pytest

from rwgauss import io as rio
from rwgauss.cli import main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, json.loads(out), err


@pytest.fixture
def two_points(tmp_path):
    p = tmp_path / "pm1.csv"
    p.write_text("x\n-1\n1\n")
    return p


@pytest.fixture
def three_points(tmp_path):
    p = tmp_path / "tri.csv"
    rio.write_csv_matrix(p, [[0, 0], [4, 0], [0, 3]])
    return p


def test_angle1d_families(capsys, two_points):
    code, env, _ = run(capsys, "angle1d", two_points, "--family", "uniform")
    assert code == 0
    assert env["command"] == "angle1d"
    assert env["results"]["theta"] == pytest.approx(np.pi / 6, abs=1e-12)
    assert set(env) == {"command", "version", "config", "seed", "results", "timings"}
    code, env, _ = run(capsys, "angle1d", two_points)
    assert env["results"]["family"] == "gaussian"


def test_angle1d_reads_binary(capsys, tmp_path):
    p = tmp_path / "x.bin"
    rio.write_binary_matrix(p, np.array([[-1.0], [1.0]]))
    code, env, _ = run(capsys, "angle1d", p, "--family", "laplace")
    assert code == 0 and env["results"]["theta"] == pytest.approx(np.pi / 4)


def test_exit_codes(capsys, tmp_path, three_points):
    one = tmp_path / "one.csv"
    one.write_text("3.0\n")
    code, env, err = run(capsys, "angle1d", one)
    assert code == 3 and "error" in env["results"] and err
    code, env, _ = run(capsys, "angle1d", three_points)
    assert code == 2
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert run(capsys, "angle1d", empty)[0] == 2
    assert run(capsys, "angle1d", tmp_path / "missing.csv")[0] == 2
    bad = tmp_path / "bad_sigma.csv"
    rio.write_csv_matrix(bad, [[1, 2], [2, 1]])
    code, env, err = run(capsys, "rw2-eval", three_points, "--sigma", bad)
    assert code == 2 and "positive semidefinite" in env["results"]["error"]
    wrong = tmp_path / "wrong.csv"
    rio.write_csv_matrix(wrong, np.eye(3))
    assert run(capsys, "rw2-eval", three_points, "--sigma", wrong)[0] == 2


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["experiment", "nope"])
    assert info.value.code == 2
    capsys.readouterr()


def test_rw2_eval_single_atom(capsys, tmp_path):
    atom = tmp_path / "atom.csv"
    atom.write_text("1,2\n")
    eye = tmp_path / "eye.csv"
    rio.write_csv_matrix(eye, np.eye(2))
    code, env, _ = run(capsys, "rw2-eval", atom, "--sigma", eye, "--iters", 50)
    r = env["results"]
    assert code == 0
    assert abs(r["rw2"] - np.sqrt(2)) < 3 * r["std_err"]
    code, env, _ = run(capsys, "rw2-eval", atom, "--sigma", eye, "--method", "bures")
    assert env["results"]["rw2"] == pytest.approx(np.sqrt(2))


def test_rw2_eval_methods_agree_on_product_cloud(capsys, tmp_path):
    a = np.array([-1.3, -0.2, 0.1, 0.4, 0.9, 1.7])
    b = np.array([-2.0, -1.0, -0.5, 0.0, 1.1, 2.4])
    p = tmp_path / "prod.csv"
    rio.write_csv_matrix(p, [[x, y] for x in a for y in b])
    sep = run(capsys, "rw2-eval", p, "--method", "separable")[1]["results"]
    dual = run(capsys, "rw2-eval", p, "--iters", 4000)[1]["results"]
    mc = run(capsys, "rw2-eval", p, "--method", "mc-exact", "--seeds", 3)[1]["results"]
    assert sep["separable"]
    assert dual["rw2"] == pytest.approx(sep["rw2"], abs=0.01)
    assert mc["rw2"] == pytest.approx(sep["rw2"], abs=4 * mc["std_err"] + 0.01)
    assert len(mc["replicates"]) == 3


def test_nearest_gauss_writes_files(capsys, tmp_path, three_points):
    out = tmp_path / "res" / "sigma.csv"
    code, env, _ = run(capsys, "nearest-gauss", three_points, "--iters", 8, "--final-steps", 200, "--out", out)
    r = env["results"]
    assert code == 0
    S = rio.read_matrix(out)
    np.testing.assert_array_equal(S, np.array(r["sigma_star"]))
    traj = rio.read_matrix(tmp_path / "res" / "sigma_trajectory.csv")
    assert traj.shape == (8, 4)
    # de-normalized output: trace scales with the squared RW2 norm
    norm = r["normalization"]["rw2_norm"]
    assert np.trace(S) == pytest.approx(np.trace(np.array(r["sigma_star_normalized"])) * norm**2)


def test_progress_goes_to_stderr(capsys, three_points):
    _, _, err = run(capsys, "nearest-gauss", three_points, "--iters", 3, "--final-steps", 50, "--progress")
    lines = [json.loads(line) for line in err.splitlines() if line.startswith("{")]
    assert [rec["iteration"] for rec in lines] == [0, 1, 2]
    assert all(rec["kind"] == "trajectory" for rec in lines)


def _small_configs(tmp_path):
    cfgs = {
        "gmm1d": "N_values = 4, 16\nreps = 2\nlimit_N = 64\noverlay_N = 8\n",
        "gmm-grid": "r_values = 1, 2\nc_values = 1\nn = 200\nm = 200\n",
        "counterexample": "n_lambda = 4\nn_theta = 4\nm = 100\nseeds = 0, 1\nnearest_outer = 4\nfinal_steps = 100\n",
    }
    paths = {}
    for name, text in cfgs.items():
        paths[name] = tmp_path / f"{name}.cfg"
        paths[name].write_text(text)
    return paths


@pytest.mark.parametrize("name,expected", [
    ("gmm1d", {"cells.csv", "trials.csv", "overlay.csv", "report.json"}),
    ("gmm-grid", {"cells.csv", "trials.csv", "samples.csv", "report.json"}),
    ("counterexample", {"landscape.csv", "landscape.json", "comparison.csv", "report.json"}),
])
def test_experiment_outputs(capsys, tmp_path, name, expected):
    cfg = _small_configs(tmp_path)[name]
    out = tmp_path / "out"
    code, env, _ = run(capsys, "experiment", name, "--config", cfg, "--out", out, "--no-figures")
    assert code == 0
    assert {p.name for p in out.iterdir()} == expected
    assert sorted(env["results"]["files"]) == sorted(str(out / f) for f in expected)
    report = json.loads((out / "report.json").read_text())
    assert report["name"] == name


def test_experiment_figures_when_matplotlib_present(capsys, tmp_path):
    pytest.importorskip("matplotlib")
    cfg = _small_configs(tmp_path)["gmm1d"]
    run(capsys, "experiment", "gmm1d", "--config", cfg, "--out", tmp_path / "o")
    assert (tmp_path / "o" / "gmm1d.png").stat().st_size > 0


@pytest.mark.parametrize("text", ["reps = 0\n", "bogus = 1\n", "N_values = a,b\n", "reps = 1\nreps = 2\n"])
def test_bad_config_leaves_no_output(capsys, tmp_path, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(text)
    out = tmp_path / "never"
    code, env, _ = run(capsys, "experiment", "gmm1d", "--config", cfg, "--out", out)
    assert code == 2
    assert not out.exists()
    assert "bad.cfg" in env["results"]["error"]


def test_seed_flag_changes_results(capsys, tmp_path):
    cfg = _small_configs(tmp_path)["gmm1d"]
    a = run(capsys, "experiment", "gmm1d", "--config", cfg, "--seed", 1)[1]
    b = run(capsys, "experiment", "gmm1d", "--config", cfg, "--seed", 2)[1]
    assert a["seed"] == 1 and a["config"]["seed"] == 1
    assert a["results"]["cells"] != b["results"]["cells"]


def deterministic_view(env):
    """Envelope without wall-clock timings and output locations."""
    env = dict(env)
    env.pop("timings")
    res = dict(env["results"])
    res.pop("files", None)
    env["results"] = res
    return env


@pytest.mark.parametrize("name", ["gmm1d", "gmm-grid", "counterexample"])
def test_experiments_bitwise_deterministic(capsys, tmp_path, name):
    cfg = _small_configs(tmp_path)[name]
    envs = []
    for k in range(2):
        envs.append(run(capsys, "experiment", name, "--config", cfg, "--out", tmp_path / f"r{k}",
                        "--no-figures", "--seed", 3)[1])
    assert deterministic_view(envs[0]) == deterministic_view(envs[1])
    for f in (tmp_path / "r0").iterdir():
        assert f.read_bytes() == (tmp_path / "r1" / f.name).read_bytes()


def test_console_entry_point(tmp_path, two_points):
    proc = subprocess.run([sys.executable, "-m", "rwgauss.cli", "angle1d", str(two_points)],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["results"]["n"] == 2
