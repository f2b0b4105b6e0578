import hashlib
import json

import numpy as np
import pytest

from jcrsim import cli, experiments
from jcrsim.errors import ConfigError
from jcrsim.export import (
    PGM_MAXVAL,
    Image,
    ResultBundle,
    Table,
    csv_bytes,
    export_artifacts,
    pgm_bytes,
    pgm_levels,
    read_pgm,
    render,
    verify_manifest,
)
from jcrsim.scenario import loads

RANGING = '''name = "tiny_ranging"
experiment = "ranging"
seed = 3
[waveform]
bandwidth = 1e9
[radar]
distances = [0.96, 1.29]
window = "rect"
'''

IMAGING = '''name = "tiny_isar"
experiment = "isar"
seed = 2
[radar]
standoff = 1.0
num_pulses = 16
rotation = 0.1
targets = [{ x = 0.0, y = 0.0 }, { x = 0.1, y = 0.2, reflectivity = 0.5 }]
'''


@pytest.fixture(scope="module")
def isar_bundle():
    return experiments.execute(loads(IMAGING))


class TestFormats:
    def test_csv_contract(self):
        t = Table(("freq_hz", "magnitude_db"), np.array([[0.0, -1.5], [1e6, -float("inf")]]))
        assert csv_bytes(t) == b"freq_hz,magnitude_db\n0,-1.5\n1000000,-inf\n"

    def test_csv_column_mismatch(self):
        with pytest.raises(ConfigError):
            csv_bytes(Table(("a",), np.zeros((2, 2))))

    def test_pgm_mapping(self):
        levels = pgm_levels(np.array([[0.0, -20.0, -40.0, -55.0]]), 40.0)
        np.testing.assert_array_equal(levels, [[PGM_MAXVAL, 32768, 0, 0]])
        assert levels.dtype == np.dtype(">u2")

    def test_pgm_header_and_byte_order(self):
        img = Image(np.array([[0.0, -40.0, -20.0]]), np.array([1.0]), np.arange(3.0),
                    "range_m", "crossrange_m", 40.0)
        data = pgm_bytes(img)
        assert data.startswith(b"P5\n3 1\n65535\n")
        assert data[-6:] == b"\xff\xff\x00\x00\x80\x00"

    def test_spectrum_csv_from_run(self):
        bundle = experiments.execute(loads(RANGING))
        files = render(bundle)
        text = files["range_profile.csv"].decode("ascii")
        assert text.startswith("freq_hz,magnitude_db\n")
        assert "\r" not in text and text.endswith("\n")
        rows = [line.split(",") for line in text.strip().split("\n")[1:]]
        assert all(len(r) == 2 for r in rows)
        assert float(rows[5][0]) > 0 and float(rows[5][1]) <= 0

    def test_metrics_json(self):
        bundle = experiments.execute(loads(RANGING))
        doc = json.loads(render(bundle, ["json"])["metrics.json"])
        assert doc["schema_version"] == 1
        assert doc["scenario"] == "tiny_ranging" and doc["seed"] == 3
        assert set(doc["metrics"]) >= {"estimated_distances_m", "errors_m", "max_abs_error_m"}

    def test_isar_pgm_and_sidecar(self, isar_bundle, tmp_path):
        out = export_artifacts(isar_bundle, tmp_path / "out")
        img = isar_bundle.images["isar"]
        levels = read_pgm(out / "isar.pgm")
        assert levels.shape == img.pixels_db.shape
        assert levels.max() == PGM_MAXVAL
        axes = json.loads((out / "isar.axes.json").read_text())
        assert len(axes["rows"]["values"]) == levels.shape[0]
        assert len(axes["cols"]["values"]) == levels.shape[1]
        assert axes["mapping"]["db_at_zero"] == -img.dynamic_range_db
        assert axes["mapping"]["maxval"] == 65535

    def test_unknown_format(self, isar_bundle):
        with pytest.raises(ConfigError, match="unknown export format"):
            render(isar_bundle, ["png"])


class TestManifest:
    def test_checksums_and_listing(self, isar_bundle, tmp_path):
        out = export_artifacts(isar_bundle, tmp_path / "run")
        manifest = json.loads((out / "manifest.json").read_text())
        listed = {e["file"] for e in manifest["artifacts"]}
        assert listed == {p.name for p in out.iterdir()} - {"manifest.json"}
        for e in manifest["artifacts"]:
            assert hashlib.sha256((out / e["file"]).read_bytes()).hexdigest() == e["sha256"]
        assert verify_manifest(out) == []
        (out / "isar.pgm").write_bytes(b"P5\n")
        assert verify_manifest(out) == ["isar.pgm"]
        assert manifest["version"] and "wall_time_s" in manifest
        assert manifest["scenario"]["radar"]["num_pulses"] == 16

    def test_failed_write_leaves_nothing(self, tmp_path, monkeypatch):
        bundle = ResultBundle("x", "ranging", 0, {}, {"a": 1},
                              {"t": Table(("a", "b"), np.zeros((2, 3)))})
        with pytest.raises(ConfigError):
            export_artifacts(bundle, tmp_path / "out")
        assert list(tmp_path.iterdir()) == []

        good = ResultBundle("x", "ranging", 0, {}, {"a": 1})
        import jcrsim.export as ex

        real = ex.json_bytes

        def boom(obj):
            if "artifacts" in obj:
                raise OSError("disk full")
            return real(obj)

        monkeypatch.setattr(ex, "json_bytes", boom)
        with pytest.raises(OSError):
            export_artifacts(good, tmp_path / "out")
        assert list(tmp_path.iterdir()) == []

    def test_rewrite_replaces_directory(self, isar_bundle, tmp_path):
        out = tmp_path / "run"
        out.mkdir()
        (out / "stale.csv").write_text("old")
        export_artifacts(isar_bundle, out, ["json"])
        assert sorted(p.name for p in out.iterdir()) == ["manifest.json", "metrics.json"]

    def test_runs_are_byte_identical(self, tmp_path):
        a = render(experiments.execute(loads(IMAGING)))
        b = render(experiments.execute(loads(IMAGING)))
        assert a.keys() == b.keys()
        for k in a:
            assert a[k] == b[k], k


class TestCli:
    def test_list(self, capsys):
        assert cli.main(["list"]) == 0
        out = capsys.readouterr().out
        assert "fig3c" in out and "sec35_phase_sweep" in out

    def test_describe(self, capsys):
        assert cli.main(["describe", "fig3d"]) == 0
        assert 'name = "fig3d"' in capsys.readouterr().out

    def test_run_file(self, tmp_path, capsys):
        path = tmp_path / "r.toml"
        path.write_text(RANGING)
        out = tmp_path / "res"
        assert cli.main(["--seed", "5", "run", str(path), "--out-dir", str(out)]) == 0
        assert "tiny_ranging: wrote" in capsys.readouterr().out
        doc = json.loads((out / "metrics.json").read_text())
        assert doc["seed"] == 5
        assert verify_manifest(out) == []

    def test_export_single_format(self, tmp_path):
        path = tmp_path / "r.toml"
        path.write_text(RANGING)
        out = tmp_path / "csv"
        assert cli.main(["export", "--format", "csv", str(path), "--out-dir", str(out)]) == 0
        assert sorted(p.name for p in out.iterdir()) == [
            "manifest.json", "range_profile.csv", "range_profile_distance.csv"]

    def test_validation_error_exit_2(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text(RANGING + "bogus = 1\n")
        assert cli.main(["run", str(path), "--out-dir", str(tmp_path / "o")]) == 2
        assert "radar.bogus: unknown field" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_missing_builtin_exit_2(self):
        assert cli.main(["describe", "nope"]) == 2

    def test_runtime_error_exit_3(self, tmp_path, capsys):
        # a -0.001 dB floor admits only the global maximum: two targets cannot be found
        path = tmp_path / "r.toml"
        path.write_text(RANGING + "floor_db = -0.001\n")
        assert cli.main(["run", str(path), "--out-dir", str(tmp_path / "o")]) == 3
        assert "DetectionError" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()

    def test_module_entry_point(self):
        import subprocess
        import sys

        r = subprocess.run([sys.executable, "-m", "jcrsim", "list"], capture_output=True, text=True)
        assert r.returncode == 0 and "fig4c" in r.stdout
