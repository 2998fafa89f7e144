import json
import os

import pytest

from mchtp.cli import main
from mchtp.experiment import (
    ExperimentConfig,
    chain_experiment,
    run_experiment,
    validate_experiment,
    write_artifacts,
)

SMALL = dict(M=24, N=48, K=(3,), kbar=8, mu=1.0, T=40, trials=3, seed=5,
             algos=("mchtp", "htp", "ghtp", "sp", "msp"))


def _read_all(path):
    return {name: open(os.path.join(path, name), "rb").read() for name in sorted(os.listdir(path))}


def test_config_resolution():
    cfg = ExperimentConfig(M=20, N=40).resolved()
    assert cfg.kbar == 10 and cfg.mu == 0.3 and cfg.K == (30,)
    v = ExperimentConfig(M=20, N=40, K=3, mu=0.2, mode="validate").resolved()
    assert v.mu == 1.0 and v.K == (3,)
    for bad in (dict(mode="fast"), dict(algos=("omp",)), dict(M=50, N=40), dict(trials=0),
                dict(kbar=1), dict(K=(99,))):
        with pytest.raises(ValueError):
            ExperimentConfig(**{"M": 20, "N": 40, "K": 3, **bad}).resolved()
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict({"bogus": 1})


def test_run_and_artifacts(tmp_path):
    cfg, results, summary = run_experiment(ExperimentConfig(**SMALL))
    out = write_artifacts(cfg, results, summary, str(tmp_path))
    files = set(os.listdir(out))
    assert {"summary.json", "msd.csv", "phases.csv", "pmf.csv"} <= files
    assert {f"trace_{i}_{a}.json" for i in range(3) for a in SMALL["algos"]} <= files
    doc = json.load(open(tmp_path / "summary.json"))
    assert doc["seeds"] == [5, 6, 7]
    block = doc["summary"]["3"]
    assert set(block) == set(SMALL["algos"])
    assert block["mchtp"]["audit_violations"] == 0
    lines = open(tmp_path / "phases.csv").read().splitlines()
    assert lines[0].startswith("# ") and lines[1] == "K,trial,T1,T2,T3,W,converged"
    assert len(lines) == 2 + 3
    trace = json.load(open(tmp_path / "trace_0_mchtp.json"))
    assert trace["algorithm"] == "mchtp" and len(trace["records"]) == 40


def test_multi_k_trace_names(tmp_path):
    cfg = ExperimentConfig(**{**SMALL, "K": (2, 3), "trials": 1, "algos": ("htp",)})
    cfg, results, summary = run_experiment(cfg)
    write_artifacts(cfg, results, summary, str(tmp_path))
    assert {"trace_K2_0_htp.json", "trace_K3_0_htp.json"} <= set(os.listdir(tmp_path))


def test_determinism_across_runs_and_jobs(tmp_path):
    dirs = []
    for tag, jobs in (("a", 1), ("b", 1), ("c", 2)):
        cfg, results, summary = run_experiment(ExperimentConfig(**SMALL), jobs=jobs)
        dirs.append(write_artifacts(cfg, results, summary, str(tmp_path / tag)))
    a, b, c = (_read_all(d) for d in dirs)
    assert a == b == c


def test_chain_experiment_reports_means():
    res = chain_experiment(5, 20, 5000, seed=0)
    assert res["T1"]["tv"] < 0.05
    assert res["T1"]["theoretical_mean"] == pytest.approx(1 + (4 / 20) / (1 - 3 / 19))
    assert res["T3"]["theoretical_mean"] == 19
    assert {r["quantity"] for r in res["pmf_rows"]} == {"T1", "T3"}


VALIDATE = dict(M=24, N=40, K=(3,), kbar=6, T=30, trials=2, seed=0, chain_trials=20000)


def test_validate_passes_small():
    report = validate_experiment(ExperimentConfig(**VALIDATE), max_supports=20000)
    assert report["passed"]
    for tr in report["trials"]:
        statuses = {c["check"]: c["status"] for c in tr["checks"]}
        assert statuses["selection_rule"] == "pass"
        assert statuses["candidate_nesting"] == "pass"
        assert statuses["least_squares_optimality"] == "pass"
        assert statuses["decay_inequality"] == "pass"


def test_validate_negative_control():
    def corrupted(k0, k1, e0, e1, eps):
        return 0 if e0 > e1 else 1

    report = validate_experiment(ExperimentConfig(**VALIDATE), selector=corrupted,
                                 max_supports=20000)
    assert not report["passed"]
    assert report["counts"]["selection_rule"].get("fail", 0) >= 1


def test_validate_large_eps_is_informational():
    cfg = ExperimentConfig(**{**VALIDATE, "eps": 1e3, "trials": 1})
    report = validate_experiment(cfg, max_supports=20000)
    checks = {c["check"]: c for c in report["trials"][0]["checks"]}
    assert checks["phase1_monotone"]["status"] == "info"
    assert report["trials"][0]["guaranteed"] is False


# ------------------------------------------------------------------ CLI


def _json_out(capsys):
    return json.loads(capsys.readouterr().out)


def test_cli_theory_examples(capsys):
    assert main(["theory", "t1-pmf", "--k", "3", "--kbar", "5", "--t", "1"]) == 0
    assert _json_out(capsys)["value"] == pytest.approx(0.6)
    assert main(["theory", "rho", "--delta", "0"]) == 0
    assert _json_out(capsys)["value"] == 0
    assert main(["theory", "delta-bound", "--k", "30", "--r", "1"]) == 0
    assert _json_out(capsys)["value"] == pytest.approx(1 / (1 + 8 * 60 ** 0.5))
    assert main(["theory", "waiting-time", "--k", "3", "--kbar", "5", "--eps", "1e-6",
                 "--delta", "0.1", "--xnorm", "1"]) == 0
    assert _json_out(capsys)["value"] == pytest.approx(7.5333333, rel=1e-6)
    assert main(["theory", "epsilon-bound", "--delta", "0.5", "--k", "4",
                 "--xmin", "0.1", "--xmax", "1"]) == 2


def test_cli_run_config_file_and_overrides(tmp_path, capsys):
    conf = tmp_path / "conf.json"
    conf.write_text(json.dumps({"M": 20, "N": 40, "K": [2], "kbar": 6, "trials": 4,
                                "T": 15, "algos": ["mchtp", "htp"]}))
    out = tmp_path / "res"
    code = main(["run", "--config", str(conf), "--trials", "2", "--seed", "3",
                 "--out", str(out), "--algos", "htp,ghtp"])
    assert code == 0
    capsys.readouterr()
    doc = json.load(open(out / "summary.json"))
    assert doc["config"]["trials"] == 2 and doc["config"]["M"] == 20
    assert doc["config"]["algos"] == ["htp", "ghtp"] and doc["seeds"] == [3, 4]


def test_cli_run_byte_identical(tmp_path, capsys):
    args = ["run", "--m", "16", "--n", "32", "--k", "2", "--kbar", "5", "--T", "20",
            "--trials", "1", "--seed", "9"]
    assert main(args + ["--out", str(tmp_path / "x")]) == 0
    assert main(args + ["--out", str(tmp_path / "y"), "--jobs", "2"]) == 0
    capsys.readouterr()
    assert _read_all(tmp_path / "x") == _read_all(tmp_path / "y")


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["run", "--m", "50", "--n", "40", "--out", str(tmp_path / "z")]) == 2
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--m", "16", "--n", "32", "--k", "2", "--kbar", "4", "--trials", "1",
                 "--T", "5", "--out", str(blocker / "sub")]) == 3
    assert main(["chain-sim", "--k", "9", "--kbar", "4"]) == 2
    with pytest.raises(SystemExit):
        main(["run", "--structure", "spiky"])


def test_cli_chain_sim(tmp_path, capsys):
    assert main(["chain-sim", "--k", "5", "--kbar", "20", "--trials", "3000",
                 "--out", str(tmp_path)]) == 0
    res = _json_out(capsys)
    assert res["T1"]["tv"] < 0.05
    assert open(tmp_path / "pmf.csv").read().splitlines()[1] == "K,quantity,value,empirical,theoretical"


def test_cli_validate(tmp_path, capsys):
    report = tmp_path / "report.json"
    code = main(["validate", "--trials", "1", "--T", "20", "--report", str(report)])
    assert code == 0
    assert _json_out(capsys)["passed"] is True
    assert json.load(open(report))["trials"][0]["checks"]
