import csv
import json
import subprocess
import sys

import pytest

from dcbus.cli import main


def read_kv(path):
    out = {}
    for line in path.read_text().splitlines():
        if " = " in line:
            k, v = line.split(" = ", 1)
            out[k] = v
    return out


def read_csv(path):
    return list(csv.DictReader(path.open()))


def run(*argv):
    return main(list(argv))


class TestDesign:
    def test_improved_two_percent(self, tmp_path):
        assert run("design", "--scheme", "improved", "--phase-margin", "45", "--target-i3", "2", "--out", str(tmp_path)) == 0
        kv = read_kv(tmp_path / "design.txt")
        assert float(kv["f_n_hz"]) == pytest.approx(12.93, rel=5e-3)
        assert float(kv["i3_pct"]) == pytest.approx(2.0, abs=1e-6)
        row = read_csv(tmp_path / "metrics.csv")[0]
        assert row["design_id"] == "design"
        assert float(row["dvmax_v"]) == pytest.approx(24.1, rel=0.01)
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["outputs"] == ["design.txt", "metrics.csv"]
        assert man["command"][:2] == ["dcbus", "design"]

    def test_conventional_two_percent(self, tmp_path):
        assert run("design", "--scheme", "conventional", "--phase-margin", "45", "--target-i3", "2", "--out", str(tmp_path)) == 0
        assert float(read_kv(tmp_path / "design.txt")["f_n_hz"]) == pytest.approx(4.75, rel=5e-3)

    def test_beta_entry_gives_same_gains(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        run("design", "--scheme", "improved", "--phase-margin", "45", "--target-i3", "2", "--out", str(a))
        f_n = read_kv(a / "design.txt")["f_n_hz"]
        run("design", "--scheme", "improved", "--beta", "5.828427124746", "--bandwidth-hz", f_n, "--out", str(b))
        ka, kb = read_kv(a / "design.txt"), read_kv(b / "design.txt")
        for key in ("k_p", "t_i", "t_f"):
            assert float(kb[key]) == pytest.approx(float(ka[key]), rel=1e-8)

    def test_stdout_report(self, capsys):
        assert run("design", "--scheme", "conventional", "--bandwidth-hz", "8.85") == 0
        out = capsys.readouterr().out
        assert "[design]" in out and "scheme = conventional" in out
        assert "t_f = none" in out

    def test_bode_export(self, tmp_path):
        run("design", "--bode", "--out", str(tmp_path))
        rows = (tmp_path / "bode.csv").read_text().splitlines()
        assert rows[0] == "freq_hz,mag_db,phase_deg"
        assert len(rows) == 1 + 5 * 50 + 1

    def test_plant_file(self, tmp_path):
        cfg = tmp_path / "plant.ini"
        cfg.write_text("[plant]\nc_o = 0.68e-3\n")
        run("design", "--bandwidth-hz", "12.93", "--plant", str(cfg), "--out", str(tmp_path / "o"))
        row = read_csv(tmp_path / "o" / "metrics.csv")[0]
        assert float(row["dvmax_v"]) == pytest.approx(38.97, rel=1e-3)

    def test_precision_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("DCBUS_PRECISION", "4")
        run("design", "--out", str(tmp_path))
        k_p = read_kv(tmp_path / "design.txt")["k_p"]
        assert len(k_p.split("e")[0].replace(".", "").lstrip("0")) <= 4
        assert float(k_p) == pytest.approx(0.2198, rel=1e-3)


class TestErrors:
    @pytest.mark.parametrize(
        "argv",
        [
            ["design", "--scheme", "improved", "--xi", "0.5"],
            ["design", "--scheme", "conventional", "--beta", "6"],
            ["design", "--phase-margin", "45", "--beta", "6"],
            ["design", "--target-i3", "2", "--bandwidth-hz", "10"],
            ["design", "--scheme", "pid"],
            ["simulate", "--config", "no-such-file.ini", "--out", "x"],
            ["sweep", "--curve", "i3", "--bandwidth-hz", "5", "--out", "x"],
        ],
    )
    def test_usage_errors(self, argv, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        with pytest.raises(SystemExit) as ei:
            run(*argv)
        assert ei.value.code == 2

    def test_unreachable_target(self, capsys):
        assert run("design", "--target-i3", "1e-7") == 3
        assert "bracket" in capsys.readouterr().err

    def test_divergence_exit(self, tmp_path, capsys):
        cfg = tmp_path / "bad.ini"
        cfg.write_text("[gains]\nk_p = 0.2\nt_i = 0.03\n[simulation]\nt_end = 0.2\nv_o_init = 400\n[events]\nload = 0.01 constant_power 2e5\n")
        assert run("simulate", "--config", str(cfg), "--out", str(tmp_path / "o")) == 3
        assert "last valid t=" in capsys.readouterr().err

    def test_console_entry(self):
        r = subprocess.run([sys.executable, "-m", "dcbus.cli", "design", "--xi", "0.3"], capture_output=True, text=True)
        assert r.returncode == 2
        r = subprocess.run([sys.executable, "-m", "dcbus.cli", "design"], capture_output=True, text=True)
        assert r.returncode == 0 and "f_n_hz" in r.stdout


class TestSimulate:
    def test_zero_length(self, tmp_path):
        assert run("simulate", "--config", "design2", "--t-end", "0", "--out", str(tmp_path)) == 0
        assert (tmp_path / "trace.csv").read_text() == "t,v_o,i_p_ref,v_s,i_s,i_o,p_o\n"
        man = json.loads((tmp_path / "manifest.json").read_text())
        assert man["outputs"] == ["trace.csv"]
        assert len(man["config_digest"]) == 64

    def test_short_run_deterministic(self, tmp_path):
        digests, traces = [], []
        for d in ("a", "b"):
            out = tmp_path / d
            assert run("simulate", "--config", "design2", "--t-end", "0.05", "--out", str(out)) == 0
            digests.append(json.loads((out / "manifest.json").read_text())["config_digest"])
            traces.append((out / "trace.csv").read_bytes())
        assert digests[0] == digests[1]
        assert traces[0] == traces[1]
        assert len(traces[0].splitlines()) == 1 + 501

    def test_digest_tracks_inputs(self, tmp_path):
        run("simulate", "--config", "design2", "--t-end", "0.01", "--out", str(tmp_path / "a"))
        run("simulate", "--config", "design2", "--t-end", "0.02", "--out", str(tmp_path / "b"))
        da = json.loads((tmp_path / "a" / "manifest.json").read_text())["config_digest"]
        db = json.loads((tmp_path / "b" / "manifest.json").read_text())["config_digest"]
        assert da != db

    @pytest.mark.slow
    def test_full_scenario_with_harmonics(self, tmp_path):
        assert run("simulate", "--config", "design2", "--out", str(tmp_path)) == 0
        row = read_csv(tmp_path / "harmonics.csv")[0]
        assert row["design_id"] == "design2"
        assert float(row["i3_pct"]) == pytest.approx(1.96, abs=0.4)


class TestSweep:
    def test_i3_curve(self, tmp_path):
        run("sweep", "--curve", "i3", "--freqs-hz", "4.75", "12.93", "--out", str(tmp_path))
        rows = read_csv(tmp_path / "i3.csv")
        assert float(rows[1]["i3_pct"]) == pytest.approx(2.0, abs=0.01)

    def test_dvmax_curve(self, tmp_path):
        run("sweep", "--curve", "dvmax", "--scheme", "conventional", "--freqs-hz", "4.75", "--out", str(tmp_path))
        rows = read_csv(tmp_path / "dvmax.csv")
        assert list(rows[0]) == ["f_n_hz", "dvmax_v"]
        assert float(rows[0]["dvmax_v"]) == pytest.approx(43.2, rel=0.05)

    def test_itae_curve_monotone(self, tmp_path):
        run("sweep", "--curve", "itae", "--f-min", "2", "--f-max", "20", "--points", "10", "--out", str(tmp_path))
        vals = [float(r["itae_vs2"]) for r in read_csv(tmp_path / "itae.csv")]
        assert len(vals) == 10
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_robustness_curve(self, tmp_path):
        run("sweep", "--curve", "robustness", "--out", str(tmp_path))
        rows = {float(r["v_scale"]): float(r["pm_deg"]) for r in read_csv(tmp_path / "robustness.csv")}
        assert rows[1.3] == pytest.approx(44.4, abs=0.5)
        assert rows[1.0] == pytest.approx(45.0, abs=0.05)
