"""CLI behavior: exit codes, artifacts, schemas, config merge, determinism."""

import json
import os

import jsonschema
import numpy as np
import pytest

from brakeorbit.cli import run

SCHEMA_DIR = os.path.join(
    os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
    "src",
    "brakeorbit",
    "schemas",
)


def load_schema(name):
    with open(os.path.join(SCHEMA_DIR, name + ".json")) as fh:
        return json.load(fh)


def validate(tmp_path, artifact, schema):
    with open(tmp_path / artifact) as fh:
        doc = json.load(fh)
    jsonschema.validate(doc, load_schema(schema))
    return doc


def test_usage_errors_exit_1(tmp_path):
    assert run(["brake-orbit", "--no-such-flag"]) == 1
    assert run(["brake-orbit", "--potential", "harmonic"]) == 1  # missing --start
    assert run(["not-a-command"]) == 1
    assert run([]) == 1
    assert run(["distance", "--potential", "nope", "--point", "0.0"]) == 1


def test_off_boundary_start_is_usage_error(tmp_path):
    code = run(
        ["morse", "--dim", "2", "--start", "0.5,0", "--arc", "0.3",
         "--out-dir", str(tmp_path)]
    )
    assert code == 1


def test_numerical_failure_exits_2(tmp_path):
    # arc length past the rebrake point cannot be swept
    code = run(
        ["morse", "--dim", "1", "--start", "1.0", "--arc", "0.9",
         "--out-dir", str(tmp_path)]
    )
    assert code == 2


def test_brake_orbit_artifacts(tmp_path, capsys):
    code = run(
        ["brake-orbit", "--potential", "harmonic", "--dim", "1", "--energy", "0.5",
         "--start", "1.0", "--out-dir", str(tmp_path)]
    )
    assert code == 0
    assert "T=3.14159" in capsys.readouterr().out
    doc = validate(tmp_path, "brake_orbit.json", "brake_orbit")
    assert doc["half_period"] == pytest.approx(np.pi, abs=1e-6)
    assert (tmp_path / "brake_orbit.csv").exists()


def test_geodesic_artifacts(tmp_path):
    code = run(
        ["geodesic", "--dim", "2", "--start", "1,0", "--arc", "0.7",
         "--out-dir", str(tmp_path)]
    )
    assert code == 0
    doc = validate(tmp_path, "geodesic.json", "geodesic")
    assert doc["boundary_start"] is True
    assert doc["exponents"]["well_depth"] == pytest.approx(2.0 / 3.0, abs=0.05)


def test_distance_artifacts(tmp_path):
    code = run(
        ["distance", "--dim", "1", "--point", "0.5", "--backend", "shooting",
         "--with-grad", "--out-dir", str(tmp_path)]
    )
    assert code == 0
    doc = validate(tmp_path, "distance.json", "distance")
    assert doc["unique"] is True and doc["grad"] is not None


def test_distance_field_artifacts(tmp_path):
    code = run(
        ["distance-field", "--dim", "2", "--grid", "4x4", "--n-start", "2",
         "--out-dir", str(tmp_path)]
    )
    assert code == 0
    doc = validate(tmp_path, "distance_field.json", "distance_field")
    assert doc["n_cells"] == 16
    assert (tmp_path / "distance_field.csv").exists()


def test_morse_artifacts(tmp_path):
    code = run(
        ["morse", "--dim", "2", "--start", "1,0", "--arc", "0.7",
         "--samples", "16", "--out-dir", str(tmp_path)]
    )
    assert code == 0
    doc = validate(tmp_path, "morse.json", "morse")
    assert doc["index"] == 1
    assert doc["conjugate_points"][0]["s"] == pytest.approx(np.pi / 8, abs=1e-3)
    assert (tmp_path / "morse_staircase.csv").exists()


def test_config_file_overridden_by_flags(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"dim": 1, "energy": 0.5, "start": [1.0]}))
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert run(["brake-orbit", "--config", str(cfg), "--out-dir", str(out_a)]) == 0
    # flag overrides the config's start; braking from the opposite wall
    assert run(
        ["brake-orbit", "--config", str(cfg), "--start", "-1.0",
         "--out-dir", str(out_b)]
    ) == 0
    da = json.loads((out_a / "brake_orbit.json").read_text())
    db = json.loads((out_b / "brake_orbit.json").read_text())
    assert da["start"] == [1.0] and db["start"] == [-1.0]


def test_unknown_config_key_rejected(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"bogus": 1}))
    assert run(["verify", "--config", str(cfg)]) == 1


def test_seed_env_var(tmp_path, monkeypatch):
    monkeypatch.setenv("BRAKEORBIT_SEED", "7")
    out = tmp_path / "env"
    assert run(
        ["distance", "--dim", "1", "--point", "0.5", "--backend", "shooting",
         "--out-dir", str(out)]
    ) == 0


def test_potential_spec_file(tmp_path):
    spec = tmp_path / "well.json"
    spec.write_text(
        json.dumps(
            {
                "name": "poly",
                "dim": 1,
                "kind": "polynomial",
                "coefficients": [[0.5, 2]],
                "energy": 0.5,
            }
        )
    )
    assert run(
        ["brake-orbit", "--potential", str(spec), "--start", "1.0",
         "--out-dir", str(tmp_path)]
    ) == 0
    doc = json.loads((tmp_path / "brake_orbit.json").read_text())
    assert doc["half_period"] == pytest.approx(np.pi, abs=1e-6)
