import csv
import io
import json
import subprocess
import sys

import pytest

from coupled_decent.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, RunConfig, UsageError, main
from coupled_decent.problems import ProblemInstance
from coupled_decent.solver import ConvergenceTrace

SMALL = {"kind": "synthetic", "params": {"n": 5, "d_i": 2, "m": 3, "theta": 0.1},
         "graph": {"topology": "ring"}}


def write_cfg(tmp_path, name="cfg.json", **data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


class TestGenerateSolve:
    def test_generate_then_solve(self, tmp_path, capsys):
        inst_path = tmp_path / "inst.json"
        cfg = write_cfg(tmp_path, instance=SMALL, seed=3)
        assert main(["generate", "--config", cfg, "--out", str(inst_path)]) == EXIT_OK
        summary = capsys.readouterr().out
        for key in ("n=5", "kappa_f=", "kappa_A=", "kappa_W="):
            assert key in summary
        inst = ProblemInstance.load(str(inst_path))
        assert inst.n == 5 and inst.m == 3

        trace_path = tmp_path / "trace.csv"
        cfg2 = write_cfg(tmp_path, "solve.json", instance=str(inst_path),
                         solver={"max_iters": 4000})
        assert main(["solve", "--config", cfg2, "--out", str(trace_path)]) == EXIT_OK
        line = capsys.readouterr().out
        assert line.startswith("stop=tolerance")
        trace = ConvergenceTrace.from_csv(trace_path.read_text())
        assert trace.iter[0] == 0 and trace.dist_to_opt[-1] < 1e-5

    def test_reproducible(self, tmp_path):
        outs = []
        for k in range(2):
            out = tmp_path / f"t{k}.csv"
            cfg = write_cfg(tmp_path, instance=SMALL, seed=7, solver={"max_iters": 50},
                            reference="none")
            assert main(["solve", "--config", cfg, "--out", str(out), "--quiet"]) == EXIT_OK
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]
        assert b"dist_to_opt" not in outs[0]

    def test_seed_override_changes_instance(self, tmp_path):
        cfg = write_cfg(tmp_path, instance=SMALL)
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        main(["generate", "--config", cfg, "--out", str(a), "--quiet"])
        main(["generate", "--config", cfg, "--out", str(b), "--seed", "9", "--quiet"])
        assert a.read_text() != b.read_text()

    def test_explicit_params(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, instance=SMALL,
                        solver={"use_default_params": False, "max_iters": 20})
        assert main(["solve", "--config", cfg]) == EXIT_OK
        assert "iters=20" in capsys.readouterr().out

    def test_divergence_exit(self, tmp_path):
        cfg = write_cfg(tmp_path, instance=SMALL,
                        solver={"theta": 1e8, "eta": 10.0, "max_iters": 3000})
        assert main(["solve", "--config", cfg, "--quiet"]) == EXIT_FAIL


class TestUsageErrors:
    @pytest.mark.parametrize("data", [
        {"instance": {"kind": "lowerbound",
                      "params": {"n": 5, "L_f": 2, "mu_f": 1, "L_A": 2, "mu_A": 1, "dim": 5}}},
        {"instance": {"kind": "nope"}},
        {"instance": {"kind": "synthetic", "params": {"n": 5}}},
        {"instance": SMALL, "bogus": 1},
        {"instance": SMALL, "solver": {"step": 1}},
        {"instance": SMALL, "reference": "exact"},
        {},
    ])
    def test_bad_config(self, tmp_path, data):
        cfg = write_cfg(tmp_path, **data)
        assert main(["solve", "--config", cfg, "--quiet"]) == EXIT_USAGE

    def test_missing_files(self, tmp_path):
        assert main(["solve", "--config", str(tmp_path / "missing.json")]) == EXIT_USAGE
        cfg = write_cfg(tmp_path, instance=str(tmp_path / "nothing.json"))
        assert main(["solve", "--config", cfg]) == EXIT_USAGE

    def test_not_json(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text("{nope")
        assert main(["solve", "--config", str(p)]) == EXIT_USAGE

    def test_generate_needs_out(self, tmp_path):
        cfg = write_cfg(tmp_path, instance=SMALL)
        assert main(["generate", "--config", cfg]) == EXIT_USAGE

    def test_thread_env(self, tmp_path, monkeypatch):
        cfg = write_cfg(tmp_path, instance=SMALL, solver={"max_iters": 2})
        monkeypatch.setenv("COUPLED_DECENT_THREADS", "many")
        assert main(["solve", "--config", cfg, "--quiet"]) == EXIT_USAGE
        monkeypatch.setenv("COUPLED_DECENT_THREADS", "1")
        assert main(["solve", "--config", cfg, "--quiet"]) == EXIT_OK

    def test_from_dict_type(self):
        with pytest.raises(UsageError):
            RunConfig.from_dict([])


class TestVerifyBench:
    def test_verify_clean(self, tmp_path, capsys):
        out = tmp_path / "checks.csv"
        assert main(["verify", "--out", str(out)]) == EXIT_OK
        assert "checks passed" in capsys.readouterr().out
        rows = list(csv.DictReader(io.StringIO(out.read_text())))
        assert rows and all(r["passed"] == "1" for r in rows)

    @pytest.mark.parametrize("fault", ["asymmetric_W", "theta_x10"])
    def test_verify_detects_faults(self, fault, capsys):
        assert main(["verify", "--fault", fault]) == EXIT_FAIL
        assert "FAIL" in capsys.readouterr().out

    def test_verify_unknown_fault(self):
        assert main(["verify", "--fault", "cosmic_ray", "--quiet"]) == EXIT_USAGE

    def test_bench(self, tmp_path, capsys):
        out = tmp_path / "bench.csv"
        cfg = write_cfg(tmp_path, sweep={"path_n": [6, 9]})
        assert main(["bench", "--config", cfg, "--out", str(out), "--quiet"]) == EXIT_OK
        rows = list(csv.DictReader(io.StringIO(out.read_text())))
        assert [r["value"] for r in rows] == ["6", "9"]
        assert int(rows[1]["comm_rounds"]) > 0

    def test_bench_kappa_W(self):
        from coupled_decent.cli import path_length_for_kappa_W, run_bench

        # Path Laplacians: n=2 gives kappa_W 1, n=3 gives 3, n=4 gives 3 + 2 sqrt 2.
        assert [path_length_for_kappa_W(k) for k in (1, 3, 3.5, 5.8, 5.9)] == [2, 3, 4, 4, 5]
        rows = run_bench(RunConfig(sweep={"kappa_W": [3, 20]}))
        assert rows[0][4] == pytest.approx(3.0) and rows[1][4] >= 20

    @pytest.mark.parametrize("sweep", [None, {"kappa_M": [1]}, {"kappa_f": []}, {"kappa_W": [0.5]},
                                       {"kappa_f": [1], "kappa_A": [2]}])
    def test_bench_usage(self, tmp_path, sweep):
        cfg = write_cfg(tmp_path, sweep=sweep)
        assert main(["bench", "--config", cfg, "--quiet"]) == EXIT_USAGE


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "coupled_decent", "verify", "--quiet"],
                          capture_output=True, text=True)
    assert proc.returncode == EXIT_OK
