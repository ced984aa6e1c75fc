import math
import subprocess
import sys

import pytest

from orbit_averager.cli import cmd_average, cmd_selftest, main
from orbit_averager.config import SEED_ENV, loads

T1 = '[scenario]\npreset = "theorem1-example"\n'
T3 = '[scenario]\npreset = "theorem3-example"\n'


def write(tmp_path, text, name="run.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestAverage:
    def test_example3(self, tmp_path, capsys):
        code, out, _ = run(["average", "--config", write(tmp_path, T1)], capsys)
        assert code == 0
        assert f"det K: {-4 * math.pi**2:.17g}" in out
        assert f"root alpha*: ({-math.pi:.17g}, 0)" in out
        assert "inside" in out and out.endswith("exit code: 0\n")

    def test_example8_block_determinants(self):
        report = cmd_average(loads(T3))
        text = report.text()
        assert report.exit_code == 0
        assert "block determinants: 1, -1" in text
        assert f"root alpha*: (0, 0, {-math.pi:.17g}, 0)" in text

    def test_zero_perturbation(self, tmp_path, capsys):
        code, out, _ = run(["average", "--config", write(tmp_path, '[scenario]\nid = "S1"\n')], capsys)
        assert code == 2 and "degenerate" in out

    def test_out_of_region(self, tmp_path, capsys):
        # root (theta0, phi0) = (-pi, -pi), far past the south pole
        cfg = '[scenario]\nid = "S1"\n[coefficients]\na1 = 1.0\nb0 = 3.141592653589793\nb2 = 1.0\n'
        code, out, err = run(["average", "--config", write(tmp_path, cfg)], capsys)
        assert code == 3 and "OUTSIDE" in out and "warning" in err

    def test_out_of_region_skips_verify(self, tmp_path, capsys):
        cfg = '[scenario]\nid = "S1"\n[coefficients]\na1 = 1.0\nb0 = 3.141592653589793\nb2 = 1.0\n'
        code, out, _ = run(["verify", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")], capsys)
        assert code == 3 and "sweep" not in out

    @pytest.mark.parametrize(
        "cfg", ['[scenario]\nid = "S7"\n', "garbage [[", '[scenario]\nid = "S1"\n[coefficients]\nq = 1\n']
    )
    def test_malformed(self, tmp_path, capsys, cfg):
        code, _, err = run(["average", "--config", write(tmp_path, cfg)], capsys)
        assert code == 1 and "error" in err

    def test_missing_config(self, capsys):
        code, _, err = run(["average"], capsys)
        assert code == 1 and "--config" in err

    def test_bad_jobs(self, tmp_path, capsys):
        code, _, _ = run(["average", "--config", write(tmp_path, T1), "--jobs", "0"], capsys)
        assert code == 1


class TestVerify:
    def test_example3(self, tmp_path, capsys):
        out_dir = tmp_path / "o"
        code, out, _ = run(["verify", "--config", write(tmp_path, T1), "--out", str(out_dir)], capsys)
        assert code == 0 and "verification: PASSED" in out
        slope = float(out.split("slope: ")[1].split()[0])
        assert 0.8 <= slope <= 1.2
        assert (out_dir / "report.txt").read_text() == out
        assert len((out_dir / "sweep.csv").read_text().splitlines()) == 5

    def test_example8(self, tmp_path, capsys):
        code, out, _ = run(["verify", "--config", write(tmp_path, T3), "--out", str(tmp_path / "o")], capsys)
        assert code == 0
        assert f"prediction on section: (0, 0, {-math.pi:.17g}, 0)" in out

    def test_large_epsilon_fails(self, tmp_path, capsys):
        cfg = T1 + "[epsilon]\nvalues = [1e-2, 0.5]\n"
        code, out, err = run(["verify", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")], capsys)
        assert code == 4
        assert "uncertified rows: 1" in out and "warning" in err

    def test_single_eps_has_no_slope(self, tmp_path, capsys):
        cfg = T1 + "[epsilon]\nvalues = [1e-2]\n"
        code, out, _ = run(["verify", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")], capsys)
        assert code == 4 and "slope: unavailable" in out

    def test_sweep_exit_ignores_rows(self, tmp_path, capsys):
        cfg = T1 + "[epsilon]\nvalues = [1e-2, 0.5]\n"
        code, _, _ = run(["sweep", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")], capsys)
        assert code == 0

    def test_output_dir_from_config(self, tmp_path, capsys):
        cfg = T1 + '[epsilon]\nvalues = [1e-2, 5e-3]\n[output]\ndir = "results"\n'
        code, _, _ = run(["verify", "--config", write(tmp_path, cfg)], capsys)
        assert code == 0 and (tmp_path / "results" / "sweep.csv").exists()

    def test_csv_byte_identical(self, tmp_path, capsys):
        cfg = write(tmp_path, "seed = 5\n" + T1)
        for name, extra in (("a", []), ("b", []), ("c", ["--jobs", "2"])):
            assert run(["verify", "--config", cfg, "--out", str(tmp_path / name), *extra], capsys)[0] == 0
        a, b, c = ((tmp_path / n / "sweep.csv").read_bytes() for n in "abc")
        assert a == b == c
        assert (tmp_path / "a" / "report.txt").read_bytes() == (tmp_path / "c" / "report.txt").read_bytes()


class TestSelftest:
    def test_default_seed(self, capsys):
        code, out, _ = run(["selftest"], capsys)
        assert code == 0 and out.count("PASS") == 4

    def test_fault_injection(self, capsys):
        code, out, _ = run(["selftest", "--inject-fault"], capsys)
        assert code == 5
        assert "FAIL integrand-vs-quadrature [integrand_algebra]" in out
        assert "integrand_algebra seed=" in out

    def test_fault_from_config(self, tmp_path, capsys):
        cfg = T1 + "[selftest]\ninject_fault = true\n"
        assert run(["selftest", "--config", write(tmp_path, cfg)], capsys)[0] == 5

    def test_env_seed(self, monkeypatch, capsys):
        monkeypatch.setenv(SEED_ENV, "17")
        code, out, _ = run(["selftest"], capsys)
        assert code == 0 and "seed=17" in out

    def test_report_lists_module_and_seed(self):
        report = cmd_selftest(3, fault=True)
        assert report.exit_code == 5
        assert any("integrand_algebra seed=3" in line for line in report.lines)


def test_console_script_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "orbit_averager.cli", "average", "--config", write(tmp_path, T1)],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0 and "exit code: 0" in proc.stdout
