import json
import math
import subprocess
import sys

import pytest

from helpers import check_bound
from spnvi.cli import SEED_ENV, main


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def small_model(tmp_path, capsys):
    path = tmp_path / "ising.txt"
    assert run(capsys, "gen-ising", "--rows", 3, "--cols", 3, "--gamma", 2.0, "--seed", 4, "--out", path)[0] == 0
    return path


class TestGenIsing:
    @pytest.mark.parametrize("rows, cols, expect", [(4, 4, "vars 16 terms 24"), (32, 32, "vars 1024 terms 1984")])
    def test_counts(self, tmp_path, capsys, rows, cols, expect):
        code, out, _ = run(capsys, "gen-ising", "--rows", rows, "--cols", cols, "--gamma", 1, "--out", tmp_path / "m")
        assert code == 0 and expect in out

    def test_deterministic(self, tmp_path, capsys):
        for name in ("a", "b"):
            run(capsys, "gen-ising", "--rows", 4, "--cols", 5, "--gamma", 3, "--seed", 9,
                "--out", tmp_path / f"{name}.txt", "--uai", tmp_path / f"{name}.uai")
        assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
        assert (tmp_path / "a.uai").read_bytes() == (tmp_path / "b.uai").read_bytes()

    def test_env_seed(self, tmp_path, capsys, monkeypatch):
        monkeypatch.setenv(SEED_ENV, "9")
        run(capsys, "gen-ising", "--rows", 4, "--cols", 5, "--gamma", 3, "--out", tmp_path / "env.txt")
        monkeypatch.delenv(SEED_ENV)
        run(capsys, "gen-ising", "--rows", 4, "--cols", 5, "--gamma", 3, "--seed", 9, "--out", tmp_path / "flag.txt")
        assert (tmp_path / "env.txt").read_text() == (tmp_path / "flag.txt").read_text()

    def test_bad_flags(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["gen-ising", "--rows", "x", "--cols", "4", "--gamma", "1"])
        assert info.value.code == 2


class TestFit:
    def test_record_and_bound(self, small_model, tmp_path, capsys):
        out, trace = tmp_path / "run.json", tmp_path / "trace.csv"
        code, _, _ = run(capsys, "fit", "--model", small_model, "--k", 16, "--restarts", 2, "--iters", 200,
                         "--seed", 3, "--out", out, "--trace", trace)
        assert code == 0
        record = json.loads(out.read_text())
        assert record["method"] == "spn" and record["seed"] == 3 and record["k"] == 16
        assert record["version"]
        assert trace.read_text().startswith("restart,iter,elbo,wall_ms")
        code, oracle_out, _ = run(capsys, "oracle", "--model", small_model, "--method", "enum")
        assert code == 0
        log_z = json.loads(oracle_out)["value"]
        check_bound(record["value"], log_z, "cli fit vs oracle")

    def test_k1_is_mean_field(self, small_model, capsys):
        code, out, _ = run(capsys, "fit", "--model", small_model, "--k", 1, "--restarts", 1, "--iters", 20)
        record = json.loads(out)
        assert record["method"] == "mf"
        assert record["extra"]["circuit_size"][0] == 16 * 2 + 16 + 15

    def test_empty_polynomial(self, tmp_path, capsys):
        path = tmp_path / "empty.txt"
        path.write_text("# num_vars 5\n")
        code, out, _ = run(capsys, "fit", "--model", path, "--k", 4, "--restarts", 1, "--iters", 300, "--init-scale", 0)
        assert code == 0
        assert json.loads(out)["value"] == pytest.approx(5 * math.log(2), abs=1e-9)

    def test_importance(self, small_model, capsys):
        code, out, _ = run(capsys, "fit", "--model", small_model, "--k", 4, "--restarts", 1, "--iters", 50,
                           "--importance", 2000)
        extra = json.loads(out)["extra"]
        assert code == 0 and math.isfinite(extra["importance_log_z"]) and extra["importance_std_error"] > 0

    def test_unparseable_model(self, tmp_path, capsys):
        bad = tmp_path / "bad.uai"
        bad.write_text("MARKOV 2 2 2 1 1 0 3 1 1 1")
        code, _, err = run(capsys, "fit", "--model", bad)
        assert code == 3 and "table_size_mismatch" in err
        bad.write_text("")
        assert run(capsys, "fit", "--model", bad)[0] == 3
        assert run(capsys, "fit", "--model", tmp_path / "missing.txt")[0] == 3

    def test_non_finite(self, tmp_path, capsys):
        path = tmp_path / "huge.txt"
        path.write_text("# num_vars 2\n1e308\n1e308\n")
        code, out, _ = run(capsys, "fit", "--model", path, "--restarts", 2, "--iters", 5)
        assert code == 4
        assert json.loads(out)["value"] is None


class TestOracle:
    def test_transfer_reads_grid_header(self, small_model, capsys):
        enum = json.loads(run(capsys, "oracle", "--model", small_model)[1])
        code, out, _ = run(capsys, "oracle", "--model", small_model, "--method", "transfer")
        transfer = json.loads(out)
        assert code == 0 and transfer["method"] == "transfer_matrix"
        assert transfer["value"] == pytest.approx(enum["value"], rel=1e-9)

    def test_cap(self, tmp_path, capsys):
        path = tmp_path / "big.txt"
        run(capsys, "gen-ising", "--rows", 6, "--cols", 6, "--gamma", 1, "--out", path)
        code, _, err = run(capsys, "oracle", "--model", path, "--method", "enum")
        assert code == 5 and "25" in err

    def test_transfer_needs_shape(self, tmp_path, capsys):
        path = tmp_path / "p.txt"
        path.write_text("# num_vars 4\n1.0 0 1\n")
        assert run(capsys, "oracle", "--model", path, "--method", "transfer")[0] == 2
        assert run(capsys, "oracle", "--model", path, "--method", "transfer", "--rows", 2, "--cols", 2)[0] == 0


class TestSweep:
    CONFIG = {"sizes": [[2, 2], [2, 3]], "gammas": [1.0, 3.0], "seeds": [0, 1], "mode": "positive",
              "methods": ["mf", "spn", "oracle-enum"], "k": 16, "iters": 60, "restarts": 2}

    def write(self, tmp_path, config):
        path = tmp_path / "sweep.json"
        path.write_text(json.dumps(config))
        return path

    def test_empty_config(self, tmp_path, capsys):
        results = tmp_path / "out.jsonl"
        cfg = tmp_path / "empty.json"
        cfg.write_text("{}")
        assert run(capsys, "sweep", "--config", cfg, "--results", results)[0] == 0
        assert results.read_text() == ""

    def test_resumable_and_bounded(self, tmp_path, capsys):
        cfg = self.write(tmp_path, self.CONFIG)
        results = tmp_path / "res.jsonl"
        assert run(capsys, "sweep", "--config", cfg, "--results", results)[0] == 0
        lines = results.read_text().splitlines()
        assert len(lines) == 2 * 2 * 2 * 3
        records = [json.loads(ln) for ln in lines]
        assert all(r["status"] == "ok" for r in records)
        truth = {r["key"].split("|")[0]: r["value"] for r in records if r["method"] == "oracle-enum"}
        for r in records:
            if r["method"] in ("mf", "spn"):
                check_bound(r["value"], truth[r["key"].split("|")[0]], r["key"])
        _, _, err = run(capsys, "sweep", "--config", cfg, "--results", results)
        assert "24 cells, 24 already complete" in err
        assert results.read_text().splitlines() == lines

    def test_interrupted_run_resumes(self, tmp_path, capsys):
        cfg = self.write(tmp_path, dict(self.CONFIG, sizes=[[2, 2]], gammas=[2.0], seeds=[0]))
        results = tmp_path / "res.jsonl"
        run(capsys, "sweep", "--config", cfg, "--results", results)
        full = results.read_text().splitlines()
        results.write_text(full[0] + "\n" + full[1][:10])  # torn final line
        run(capsys, "sweep", "--config", cfg, "--results", results)
        lines = results.read_text().splitlines()
        assert lines[0] == full[0]
        records = [json.loads(ln) for ln in lines[1:]]
        assert sorted(r["key"] for r in records) == sorted(json.loads(ln)["key"] for ln in full[1:])

    def test_deterministic_and_parallel(self, tmp_path, capsys):
        cfg = self.write(tmp_path, dict(self.CONFIG, sizes=[[2, 2]], seeds=[0]))
        values = []
        for jobs in (1, 2):
            results = tmp_path / f"res{jobs}.jsonl"
            run(capsys, "sweep", "--config", cfg, "--results", results, "--jobs", jobs)
            values.append({r["key"]: r["value"] for r in map(json.loads, results.read_text().splitlines())})
        assert values[0] == values[1]

    def test_cell_errors_recorded(self, tmp_path, capsys):
        cfg = self.write(tmp_path, {"sizes": [[2, 2]], "gammas": [1.0], "methods": ["oracle-transfer", "bogus"]})
        results = tmp_path / "res.jsonl"
        assert run(capsys, "sweep", "--config", cfg, "--results", results)[0] == 0
        status = {r["method"]: r["status"] for r in map(json.loads, results.read_text().splitlines())}
        assert status == {"oracle-transfer": "ok", "bogus": "error"}


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "spnvi", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.startswith("0.1.0")
