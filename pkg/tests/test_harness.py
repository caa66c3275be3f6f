import json
import re
import textwrap
import warnings
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from latentbo import harness
from latentbo.cli import main
from latentbo.harness import (
    AggregateCurve,
    ConfigError,
    Frame,
    aggregate,
    aggregate_dir,
    load_config,
    plot_dir,
    profile_report,
    read_trace_csv,
    render_convergence,
    run_experiment,
)

FAST = "gp_restarts = 1\nacq_raw = 64\nacq_refine = 4\n"


def write_cfg(tmp_path, body, name="exp.ini"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(body))
    return p


def small_config(tmp_path, seeds="0 1"):
    runs = ""
    for run_id, algo in (("sdr", "bo_sdr"), ("plain", "bo")):
        runs += (
            f"\n[run:{run_id}]\nalgorithm = {algo}\nfunction = rosenbrock\ndim = 2\n"
            f"budget = 6\nn_initial = 4\nseeds = {seeds}\n{FAST}"
        )
    return write_cfg(tmp_path, "[experiment]\noutput = results\ncache = cache\n" + runs)


def test_config_parsing(tmp_path):
    cfg = load_config(small_config(tmp_path))
    assert [r.run_id for r in cfg.runs] == ["sdr", "plain"]
    sdr, plain = cfg.runs
    assert sdr.config.sdr is not None and plain.config.sdr is None
    assert sdr.seeds == (0, 1) and sdr.label == "BO-SDR" and sdr.problem == "rosenbrock-D2"
    assert cfg.output == tmp_path / "results" and len(cfg.sha256) == 64


@pytest.mark.parametrize(
    "body",
    [
        "[run:a]\nalgorithm = bo\nfunction = rosenbrock\ndim = 2\n",  # no [experiment]
        "[experiment]\n[run:a]\nalgorithm = nope\nfunction = rosenbrock\ndim = 2\n",
        "[experiment]\n[run:a]\nalgorithm = bo\nfunction = nope\ndim = 2\n",
        "[experiment]\n[run:a]\nalgorithm = bo\nfunction = rosenbrock\ndim = 2\nbudget = ten\n",
        "[experiment]\n[run:a]\nalgorithm = v_bovae\nfunction = rosenbrock\ndim = 2\n",
        "[experiment]\n[run:a]\nalgorithm = v_bovae\nfunction = ackley\ndim = 2\nvae = vae-4.3\n",
        "[experiment]\n[other]\nx = 1\n",
        "[experiment]\n[run:a]\nalgorithm = bo\nfunction = rosenbrock\ndim = 2\n[run:a]\nalgorithm = bo\n",
        "[experiment]\n[run:a]\nalgorithm = bo\nfunction = rosenbrock\ndim = 2\n"
        "[run:b]\nalgorithm = bo\nfunction = rosenbrock\ndim = 2\n",  # same problem, seed and label
        "[experiment]\n[run:a]\nalgorithm = bo\nfunction = rosenbrock\ndim = 2\nseeds = 1 1\n",
    ],
)
def test_config_errors(tmp_path, body):
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path, body))


def test_cache_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv(harness.CACHE_ENV, str(tmp_path / "elsewhere"))
    assert load_config(small_config(tmp_path)).cache == tmp_path / "elsewhere"


def test_empty_run_list(tmp_path):
    out = run_experiment(write_cfg(tmp_path, "[experiment]\noutput = res\n"))
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["runs"] == {} and set(manifest["files"]) == {"config.ini"}
    assert sorted(p.name for p in out.iterdir()) == ["config.ini", "manifest.json"]


def test_run_outputs_and_byte_identical_rerun(tmp_path):
    cfg = small_config(tmp_path, seeds="0 1 2 3 4")
    out = run_experiment(cfg)
    csvs = sorted((out / "sdr").glob("seed?.csv"))
    assert len(csvs) == 5
    first = {p: p.read_bytes() for p in out.rglob("seed?.csv")}
    tr = read_trace_csv(csvs[0])
    assert list(tr["iteration"]) == [0] * 4 + list(range(1, 7))
    assert tr["region_lo"].shape == (10, 2)
    assert np.all(np.diff(tr["f_best"]) <= 0)
    header = csvs[0].read_text().splitlines()[0]
    assert header == "iteration,eval_count,f_observed,f_best,gap,region_lo_0,region_lo_1,region_hi_0,region_hi_1"
    meta = json.loads((out / "sdr" / "seed0.meta.json").read_text())
    assert meta["f_star"] == 0.0 and meta["n_initial"] == 4 and meta["final_best"] == tr["f_best"][-1]
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["runs"]["sdr"]["seeds"] == [0, 1, 2, 3, 4]
    files = {p.relative_to(out).as_posix() for p in out.rglob("*") if p.is_file()} - {"manifest.json"}
    assert set(manifest["files"]) == files
    run_experiment(cfg)
    assert all(p.read_bytes() == b for p, b in first.items())


def test_csv_floats_round_trip(tmp_path):
    out = run_experiment(small_config(tmp_path, seeds="0"))
    text = (out / "sdr" / "seed0.csv").read_text().splitlines()[1:]
    for line in text:
        for cell in line.split(",")[2:]:
            assert repr(float(cell)) == cell


def test_aggregate_examples():
    one = aggregate([[5.0, 3.0, 1.0]])
    assert np.all(one.std == 0) and np.array_equal(one.mean, [5.0, 3.0, 1.0])
    two = aggregate([[1.0] * 4, [3.0] * 4])
    assert np.all(two.mean == 2.0) and np.all(two.std == 1.0)
    # spreadsheet fixture: AVERAGE and STDEV.P per column
    fixture = [[4.0, 2.0, 2.0], [6.0, 5.0, 1.0], [8.0, 2.0, 0.5]]
    agg = aggregate(fixture)
    assert np.allclose(agg.mean, [6.0, 3.0, 7 / 6], atol=1e-15)
    assert np.allclose(agg.std, [np.sqrt(8 / 3), np.sqrt(2.0), np.sqrt(((2 - 7 / 6) ** 2 + (1 - 7 / 6) ** 2 + (0.5 - 7 / 6) ** 2) / 3)], atol=1e-15)
    assert np.all(agg.mean >= agg.per_seed.min(0)) and np.all(agg.mean <= agg.per_seed.max(0))
    with pytest.warns(UserWarning):
        short = aggregate([[1.0, 2.0, 3.0], [1.0, 2.0]])
    assert len(short.mean) == 2
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_dir(tmp_path):
    out = run_experiment(small_config(tmp_path, seeds="0 1 2"))
    aggs = aggregate_dir(out)
    assert set(aggs) == {"sdr", "plain"}
    assert aggs["sdr"].per_seed.shape == (3, 7)
    lines = (out / "sdr" / "aggregate.csv").read_text().splitlines()
    assert lines[0] == "iteration,mean,std,seed_0,seed_1,seed_2" and len(lines) == 8


def _band_and_mean(svg, run):
    root = ET.fromstring(svg)
    ns = "{http://www.w3.org/2000/svg}"
    band = next(e for e in root.iter(ns + "polygon") if e.get("data-run") == run)
    line = next(e for e in root.iter(ns + "polyline") if e.get("data-run") == run)

    def pts(e):
        return np.array([[float(v) for v in p.split(",")] for p in e.get("points").split()])

    return pts(band), pts(line)


@pytest.mark.parametrize("log_y", [False, True])
def test_svg_band_edges(log_y):
    mean = np.array([30.0, 6.0, 3.0, 2.0, 1.5])
    std = np.array([2.0, 1.0, 1.0, 0.5, 0.1])
    agg = AggregateCurve(np.arange(5), mean, std, np.vstack([mean - std, mean + std]))
    svg = render_convergence({"A": agg}, title="t & <x>", log_y=log_y)
    band, line = _band_and_mean(svg, "A")
    lows = [np.min(mean - std)]
    y0, y1 = float(min(lows)), float(np.max(mean + std))
    fr = Frame(0.0, 4.0, y0, y1, log_y)
    upper, lower = band[:5, 1], band[5:, 1][::-1]
    assert np.allclose(fr.data_y(upper), mean + std, rtol=1e-3)
    assert np.allclose(fr.data_y(lower), mean - std, rtol=1e-3)
    assert np.allclose(fr.data_y(line[:, 1]), mean, rtol=1e-3)


def test_svg_flat_curve():
    agg = aggregate([[2.0] * 6])
    band, line = _band_and_mean(render_convergence({"flat": agg}), "flat")
    assert np.ptp(line[:, 1]) == 0
    assert np.allclose(band[:6, 1], band[6:, 1])
    with pytest.raises(ValueError):
        render_convergence({})


def test_plot_and_profile_report(tmp_path):
    out = run_experiment(small_config(tmp_path, seeds="0 1"))
    paths = plot_dir(out)
    assert [p.name for p in paths] == ["rosenbrock-D2.svg"]
    ET.fromstring(paths[0].read_text())
    table = profile_report(out, taus=(1e-1, 1e-3), N_g=5)
    assert set(table) == {1e-1, 1e-3}
    prof = out / "profiles"
    for tag in ("tau_0.1", "tau_0.001"):
        for kind in ("performance", "data"):
            assert (prof / f"{tag}_{kind}.csv").exists()
            ET.fromstring((prof / f"{tag}_{kind}.svg").read_text())
    rows = [line.split(",")[0] for line in (prof / "solved.csv").read_text().splitlines()[1:]]
    assert rows == ["BO-SDR", "BO"]
    assert (prof / "solved.md").read_text().startswith("Solved instances (2 instances)")
    snap = {p: p.read_bytes() for p in out.rglob("*") if p.suffix in (".csv", ".svg") and "timing" not in p.name}
    again = tmp_path / "again"
    again.mkdir()
    out2 = run_experiment(small_config(again, seeds="0 1"))
    plot_dir(out2)
    profile_report(out2, taus=(1e-1, 1e-3), N_g=5)
    for p, b in snap.items():
        assert (out2 / p.relative_to(out)).read_bytes() == b


def test_profile_single_solver_all_solved(tmp_path):
    d = tmp_path / "res" / "only"
    d.mkdir(parents=True)
    for seed in (0, 1):
        (d / f"seed{seed}.csv").write_text("iteration,eval_count,f_observed,f_best,gap\n0,1,5.0,5.0,5.0\n0,2,0.0,0.0,0.0\n")
        (d / f"seed{seed}.meta.json").write_text(json.dumps(dict(
            run="only", label="X", algorithm="bo", problem="p", seed=seed, n_p=1, n_initial=1, budget=1,
            f_star=0.0, f0_best=5.0, final_best=0.0)))
    table = profile_report(tmp_path / "res", taus=(0.1,), N_g=3)
    assert table == {0.1: {"X": 1.0}}
    lines = (tmp_path / "res" / "profiles" / "tau_0.1_performance.csv").read_text().splitlines()
    assert all(line.endswith(",1.0") for line in lines[1:])


def test_profile_missing_f_star_warns(tmp_path):
    d = tmp_path / "res" / "r"
    d.mkdir(parents=True)
    (d / "seed0.csv").write_text("iteration,eval_count,f_observed,f_best,gap\n0,1,1.0,1.0,nan\n")
    (d / "seed0.meta.json").write_text(json.dumps(dict(run="r", label="X", problem="p", seed=0, n_p=1, f_star=None, f0_best=1.0)))
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert harness.profile_records(tmp_path / "res") == []
    assert any("f_star" in str(x.message) for x in w)


def test_cli_exit_codes(tmp_path, capsys):
    cfg = small_config(tmp_path, seeds="0")
    assert main(["run", str(cfg)]) == 0
    out = tmp_path / "results"
    assert main(["aggregate", str(out)]) == 0
    assert main(["plot", str(out), "--log-y"]) == 0
    assert main(["profile", str(out), "--tau", "0.1", "--ng", "4"]) == 0
    assert "tau=0.1" in capsys.readouterr().out
    assert main(["train-vae", str(cfg)]) == 0
    bad = write_cfg(tmp_path, "[experiment]\n[run:a]\nalgorithm = nope\n", "bad.ini")
    assert main(["run", str(bad)]) == 1
    assert main(["run", str(tmp_path / "missing.ini")]) == 1
    assert main(["bogus"]) == 1
    assert main(["aggregate", str(tmp_path / "nowhere")]) == 1
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["profile", str(empty)]) == 2


def test_vae_cache_atomic_and_reused(tmp_path):
    cfg_path = write_cfg(
        tmp_path,
        """\
        [experiment]
        cache = cache

        [run:v]
        algorithm = v_bovae
        function = ackley
        dim = 10
        vae = vae-4.2
        pool = 200
        pretrain_epochs = 2
        budget = 2
        seeds = 0
        gp_restarts = 1
        acq_raw = 32
        acq_refine = 2
        """,
    )
    cfg = load_config(cfg_path)
    paths = harness.pretrain_all(cfg)
    assert len(paths) == 1 and paths[0].exists() and paths[0].with_name(paths[0].name + ".json").exists()
    assert not list((tmp_path / "cache").glob("*.tmp"))
    stamp = paths[0].stat().st_mtime_ns
    with pytest.raises(FileNotFoundError):
        harness.cached_vae(cfg.runs[0], tmp_path / "empty_cache", allow_train=False)
    run_experiment(cfg_path)
    assert paths[0].stat().st_mtime_ns == stamp
    assert re.match(r"vae-4\.2-[0-9a-f]{16}\.mlps$", paths[0].name)
