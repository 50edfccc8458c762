import json
import subprocess
import sys

import numpy as np
import pytest

from afcsim import io as afc_io
from afcsim.cli import main
from afcsim.scenarios import PRESETS, ConfigError, preset_config, validate_config


def write_config(path, kind, parameters=None, **extra):
    cfg = {"schema_version": 1, "kind": kind, "seed": 0, "parameters": parameters or {}}
    cfg.update(extra)
    path.write_text(json.dumps(cfg))
    return path


def error_line(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1
    return json.loads(err[0])


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


class TestConfig:
    @pytest.mark.parametrize("raw", [
        [],
        {"kind": "afc"},
        {"schema_version": 2, "kind": "afc"},
        {"schema_version": 1, "kind": "laser"},
        {"schema_version": 1, "kind": "afc", "seed": -1},
        {"schema_version": 1, "kind": "afc", "bogus": 1},
        {"schema_version": 1, "kind": "afc", "parameters": {"pulse_fwhm": 1}},
        {"schema_version": 1, "kind": "afc", "parameters": {"comb": {"fineness": 0.5}}},
        {"schema_version": 1, "kind": "holeburn", "parameters": {"pump": {"mask": [1, 1]}}},
    ])
    def test_rejected(self, raw):
        with pytest.raises(ConfigError):
            validate_config(raw)

    def test_defaults_merged(self):
        cfg = validate_config({"schema_version": 1, "kind": "afc",
                               "parameters": {"comb": {"delta_hz": 5e6}}})
        assert cfg["parameters"]["comb"]["delta_hz"] == 5e6
        assert cfg["parameters"]["comb"]["peak_depth"] == 5.5

    def test_presets_validate(self):
        for name in PRESETS:
            assert preset_config(name)["kind"] in ("spectrum", "holeburn", "afc", "sweep")


class TestRun:
    def test_afc_scenario(self, tmp_path):
        cfg = write_config(tmp_path / "afc.json", "afc",
                           {"comb": {"delta_hz": 7e6, "peak_depth": 5.5, "background_depth": 0.05}},
                           output_dir="out")
        assert main(["run", str(cfg)]) == 0
        out = tmp_path / "out"
        echo = json.loads((out / "echo.json").read_text())
        assert echo["echo_time_s"] == pytest.approx(1.4286e-7, abs=echo["sample_period_s"])
        cols = afc_io.read_csv(out / "trace.csv", ["time_s", "re", "im", "intensity"])
        assert cols["time_s"].size > 0

    def test_spectrum_scenario(self, tmp_path):
        cfg = write_config(tmp_path / "s.json", "spectrum", {"field_t": 0.0})
        out = tmp_path / "spec"
        assert main(["run", str(cfg), "--out", str(out)]) == 0
        prof = afc_io.read_csv(out / "profile.csv", ["frequency_hz", "optical_depth"])
        argmax = prof["frequency_hz"][np.argmax(prof["optical_depth"])]
        assert abs(argmax) < 0.02 * 180e6

    def test_optimize_scenario(self, tmp_path):
        cfg = write_config(tmp_path / "o.json", "optimize")
        assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 0
        opt = json.loads((tmp_path / "o" / "optimum.json").read_text())
        assert opt["fineness"] == pytest.approx(4.36, abs=0.01)
        assert opt["fineness"] == pytest.approx(opt["scan_fineness"], abs=1e-3)

    def test_fit_scenario(self, tmp_path):
        t = np.linspace(0, 80e-3, 41)
        y = 0.5 * np.exp(-2 * t / 4.9e-3) + 0.5 * np.exp(-2 * t / 34.7e-3)
        afc_io.write_csv(tmp_path / "decay.csv", ["delay_s", "transmission"], [t, y])
        cfg = write_config(tmp_path / "f.json", "fit", {"input": "decay.csv"})
        assert main(["run", str(cfg), "--out", str(tmp_path / "fit")]) == 0
        fit = json.loads((tmp_path / "fit" / "fit.json").read_text())
        assert fit["params"]["tau1"] == pytest.approx(4.9e-3, rel=1e-3)

    def test_env_default_output(self, tmp_path, monkeypatch):
        monkeypatch.setenv("AFCSIM_OUTPUT_DIR", str(tmp_path / "env"))
        cfg = write_config(tmp_path / "opt.json", "optimize")
        assert main(["run", str(cfg)]) == 0
        assert (tmp_path / "env" / "opt" / "manifest.json").exists()


class TestErrors:
    def test_malformed_json(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text("{not json")
        out = tmp_path / "out"
        assert main(["run", str(cfg), "--out", str(out)]) == 2
        assert error_line(capsys)["exit_code"] == 2
        assert not out.exists()

    def test_invalid_parameters_write_nothing(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "c.json", "afc", {"comb": {"delta_hz": -1}})
        out = tmp_path / "out"
        assert main(["run", str(cfg), "--out", str(out)]) == 2
        assert error_line(capsys)["error"] == "config"
        assert not out.exists()

    def test_unknown_preset(self, tmp_path, capsys):
        assert main(["preset", "fig9", "--out", str(tmp_path / "x")]) == 2
        error_line(capsys)

    def test_numerical_failure(self, tmp_path, capsys):
        # a flat profile has no lines to fit
        f = np.linspace(-1e6, 1e6, 21)
        afc_io.write_csv(tmp_path / "flat.csv", ["frequency_hz", "optical_depth"], [f, np.zeros(21)])
        cfg = write_config(tmp_path / "c.json", "fit", {"input": "flat.csv", "model": "lines"})
        out = tmp_path / "out"
        assert main(["run", str(cfg), "--out", str(out)]) == 3
        assert error_line(capsys)["error"] == "numerical"
        assert not (out / "manifest.json").exists()
        assert list(out.iterdir()) == []

    def test_missing_config(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "nope.json")]) == 4
        assert error_line(capsys)["error"] == "io"

    def test_unwritable_output(self, tmp_path, capsys):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        cfg = write_config(tmp_path / "o.json", "optimize")
        assert main(["run", str(cfg), "--out", str(blocker / "sub")]) == 4
        error_line(capsys)

    def test_missing_fit_input(self, tmp_path, capsys):
        cfg = write_config(tmp_path / "f.json", "fit", {"input": "absent.csv"})
        assert main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 4
        error_line(capsys)


class TestManifest:
    def test_lists_every_output_with_hash(self, tmp_path):
        out = tmp_path / "fig3a"
        assert main(["preset", "fig3a", "--out", str(out)]) == 0
        m = manifest(out)
        files = {p.name for p in out.iterdir()} - {"manifest.json"}
        assert {o["path"] for o in m["outputs"]} == files
        import hashlib
        for o in m["outputs"]:
            assert o["sha256"] == hashlib.sha256((out / o["path"]).read_bytes()).hexdigest()
        assert m["seed"] == 0
        assert set(m["versions"]) == {"afcsim", "numpy", "scipy", "python"}
        assert m["config"]["kind"] == "afc"

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_config(tmp_path / "h.json", "holeburn",
                           {"decay_delays_s": {"start": 0, "stop": 80e-3, "n": 21}, "decay_noise": 0.01},
                           seed=42)
        a, b = tmp_path / "a", tmp_path / "b"
        assert main(["run", str(cfg), "--out", str(a)]) == 0
        assert main(["run", str(cfg), "--out", str(b)]) == 0
        for f in sorted(p.name for p in a.iterdir()):
            assert (a / f).read_bytes() == (b / f).read_bytes(), f

    def test_seed_changes_noisy_output(self, tmp_path):
        params = {"decay_delays_s": {"start": 0, "stop": 80e-3, "n": 21}, "decay_noise": 0.01}
        outs = []
        for seed in (1, 2):
            cfg = write_config(tmp_path / f"h{seed}.json", "holeburn", params, seed=seed)
            out = tmp_path / f"o{seed}"
            assert main(["run", str(cfg), "--out", str(out)]) == 0
            outs.append((out / "decay.csv").read_bytes())
        assert outs[0] != outs[1]


class TestPresets:
    def test_list(self, capsys):
        assert main(["list-presets"]) == 0
        names = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines()]
        assert names == ["fig1a", "fig1b", "fig2a", "fig2b", "fig3a", "fig3b", "fig4"]

    def test_fig2b_decay_range(self, tmp_path):
        out = tmp_path / "fig2b"
        assert main(["preset", "fig2b", "--out", str(out)]) == 0
        d = afc_io.read_csv(out / "decay.csv", ["delay_s", "transmission"])
        assert d["delay_s"][0] == 0.0 and d["delay_s"][-1] == pytest.approx(80e-3)

    def test_fig4_profile_depth(self, tmp_path):
        out = tmp_path / "fig4"
        assert main(["preset", "fig4", "--out", str(out)]) == 0
        prof = afc_io.read_csv(out / "profile.csv", ["frequency_hz", "optical_depth"])
        assert prof["optical_depth"].max() == pytest.approx(5.5, rel=0.01)
        pumped = afc_io.read_csv(out / "pumped_profile.csv", ["frequency_hz", "optical_depth"])
        assert pumped["optical_depth"].max() <= 2.6 + 1e-9
        summary = json.loads((out / "holeburn.json").read_text())["6.6"]
        assert summary["comb_period_hz"] == pytest.approx(7e6, abs=0.05e6)

    def test_fig3b_table(self, tmp_path):
        out = tmp_path / "fig3b"
        assert main(["preset", "fig3b", "--out", str(out)]) == 0
        t = afc_io.read_csv(out / "efficiency.csv",
                            ["t_d_s", "storage_time_s", "efficiency", "analytic_efficiency"])
        assert set(np.unique(t["t_d_s"])) == {0.2e-3, 1.0e-3}

    def test_fig2a_fields(self, tmp_path):
        out = tmp_path / "fig2a"
        assert main(["preset", "fig2a", "--out", str(out)]) == 0
        for tag in ("0p6", "1p5", "6p6"):
            assert (out / f"transmission_B{tag}T.csv").exists()

    def test_module_entry_point(self, tmp_path):
        r = subprocess.run([sys.executable, "-m", "afcsim.cli", "list-presets"],
                           capture_output=True, text=True, check=True)
        assert "fig3a" in r.stdout
