import csv
import json
import math
import subprocess
import sys

import pytest

from cgwishart import BreakdownError, cli, theory
from cgwishart.selftest import CHECKS


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


class TestTheoryTable:
    def test_example_column(self, capsys):
        code, out, _ = run(capsys, "theory-table", "--d", "0.2", "--ell", "2", "--kmax", "3", "--format", "csv")
        assert code == 0
        rows = [r for r in csv.reader(out.splitlines()) if not r[0].startswith("#")]
        assert rows[0] == ["k", "e_2"]
        vals = [float(r[1]) for r in rows[1:]]
        assert vals == pytest.approx([1.0, math.sqrt(0.2), 0.2, 0.2**1.5], rel=1e-14)

    def test_text(self, capsys):
        code, out, _ = run(capsys, "theory-table", "--d", "0.2", "--ell", "2", "--kmax", "3")
        assert code == 0 and "0.0894427190999916" in out

    def test_json_with_halting(self, capsys, tmp_path):
        path = tmp_path / "t.json"
        code, _, _ = run(capsys, "theory-table", "--d", "0.5", "--ell", "1", "--ell", "2", "--kmax", "4",
                         "--eps", "0.9", "--format", "json", "--output", str(path))
        doc = json.loads(path.read_text())
        assert code == 0 and doc["config"]["d"] == 0.5 and doc["version"]
        assert {(h["ell"], h["tau"]) for h in doc["halting"]} == {(1, 2), (2, 1)}
        assert doc["exceptional_sets"]["S_2"][0] == pytest.approx(1.0)

    def test_domain_error(self, capsys):
        code, _, err = run(capsys, "theory-table", "--d", "1", "--ell", "1")
        assert code == 2 and "d=1 requires ell>=2" in err


class TestPredict:
    def test_example(self, capsys):
        code, out, err = run(capsys, "predict", "--ell", "2", "--d", "0.2", "--eps", "6.627e-8")
        assert code == 0 and out.strip() == "21" and err == ""

    def test_exceptional_warns(self, capsys):
        code, out, err = run(capsys, "predict", "--ell", "2", "--d", "0.25", "--eps", "0.125")
        assert code == 0 and out.strip() == "3" and "warning" in err

    def test_bad_eps(self, capsys):
        code, _, _ = run(capsys, "predict", "--ell", "2", "--d", "0.2", "--eps", "-1")
        assert code == 2


class TestRun:
    def test_errors_byte_identical(self, capsys, tmp_path):
        args = ["errors", "--n", "200", "--d", "0.2", "--beta", "1", "--samples", "100", "--seed", "7"]
        assert run(capsys, *args, "--output", str(tmp_path / "a"))[0] == 0
        assert run(capsys, *args, "--output", str(tmp_path / "b"), "--workers", "2")[0] == 0
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_summary_line_and_config_echo(self, capsys, tmp_path):
        code, out, _ = run(capsys, "errors", "--n", "30", "--samples", "3", "--seed", "5",
                           "--output", str(tmp_path / "e.json"))
        assert code == 0 and "3 samples" in out and str(tmp_path / "e.json") in out
        doc = json.loads((tmp_path / "e.json").read_text())
        assert doc["config"]["seed"] == 5 and doc["config"]["n"] == 30
        head = next(csv.reader((tmp_path / "e.csv").open()))
        assert head[0] == "# version" and json.loads(head[3])["seed"] == 5

    def test_halting_modal(self, capsys, tmp_path):
        # chi-bidiagonal model: same law as dense Gaussian with b = e1, far cheaper at n=2000
        code, out, _ = run(capsys, "halting", "--n", "2000", "--d", "0.2", "--eps", "6.627e-8", "--samples", "500",
                           "--kind", "chi", "--output", str(tmp_path / "h"))
        assert code == 0 and "modal=21" in out
        h = json.loads((tmp_path / "h.json").read_text())["halting_histograms"][0]
        assert h["modal"] == 21 and h["tau"] == 21
        assert json.loads((tmp_path / "h.json").read_text())["config"]["kmax"] == 31

    def test_spectrum_csv_shape(self, capsys, tmp_path):
        code, _, _ = run(capsys, "spectrum", "--n", "400", "--d", "0.5", "--samples", "1",
                         "--output", str(tmp_path / "s"))
        assert code == 0
        rows = list(csv.reader((tmp_path / "s.csv").open()))[2:]
        stats = [r[6] for r in rows]
        assert stats.count("eigenvalue") == 400
        assert stats.count("mp_curve:x") == stats.count("mp_curve:density") == 201

    def test_default_output_dir(self, capsys, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert run(capsys, "ks", "--n", "10", "--samples", "2")[0] == 0
        assert len(list((tmp_path / "out").glob("ks-*.json"))) == 1

    def test_io_error(self, capsys, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        code, _, err = run(capsys, "errors", "--n", "10", "--samples", "1", "--output", str(blocker / "x"))
        assert code == 3 and "I/O" in err

    def test_param_error(self, capsys, tmp_path):
        code, _, err = run(capsys, "errors", "--n", "10", "--d", "1.0", "--ell", "1", "--output", str(tmp_path / "x"))
        assert code == 2 and "ell>=2" in err

    def test_breakdown_exit(self, capsys, tmp_path, monkeypatch):
        def boom(*_):
            raise BreakdownError("nonpositive curvature", sample_index=17)

        monkeypatch.setattr(cli, "run_experiment", boom)
        code, _, err = run(capsys, "errors", "--n", "10", "--output", str(tmp_path / "x"))
        assert code == 4 and "sample 17" in err


class TestConfig:
    def test_file_and_override(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("# comment\nn = 50\nd = 0.3\nseed = 4\nell = 1, 2, 3\nsamples = 9  # trailing\n")
        args = cli.build_parser().parse_args(["errors", "--config", str(path), "--seed", "8"])
        cfg, _ = cli.effective_config("errors", args)
        assert cfg.ensemble.n == 50 and cfg.ensemble.d == 0.3 and cfg.ensemble.seed == 8
        assert cfg.ell_list == (1, 2, 3) and cfg.samples == 9

    def test_malformed(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("n 50\n")
        code, _, err = run(capsys, "errors", "--config", str(path))
        assert code == 2 and "bad.cfg:1" in err

    def test_missing_file(self, tmp_path, capsys):
        assert run(capsys, "errors", "--config", str(tmp_path / "none.cfg"))[0] == 3

    def test_env_workers(self, monkeypatch):
        monkeypatch.setenv("CG_WISHART_WORKERS", "3")
        cfg, _ = cli.effective_config("errors", cli.build_parser().parse_args(["errors"]))
        assert cfg.workers == 3
        cfg, _ = cli.effective_config("errors", cli.build_parser().parse_args(["errors", "--workers", "1"]))
        assert cfg.workers == 1


class TestSelftest:
    def test_passes(self, capsys):
        code, out, _ = run(capsys, "selftest")
        assert code == 0
        assert len(CHECKS) >= 10
        assert out.count("PASS") == len(CHECKS)

    def test_mutation_detected(self, capsys, monkeypatch):
        real = theory.limit_error
        monkeypatch.setattr(theory, "limit_error", lambda ell, k, d: real(ell, k, d) * (1 + 1e-6))
        code, out, _ = run(capsys, "selftest")
        assert code == 1 and "FAIL  closed_form_vs_quadrature" in out


def test_console_script():
    proc = subprocess.run([sys.executable, "-m", "cgwishart.cli", "predict", "--ell", "1", "--d", "0.5",
                           "--eps", "0.9"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and proc.stdout.strip() == "2"
