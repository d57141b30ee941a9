import json

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from vsslab.io import RunDirectory, profile_columns, read_csv, write_csv, write_json
from vsslab.profiles import RadialProfile


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1,
                max_size=30))
def test_csv_round_trip_exact(tmp_path_factory, xs):
    path = tmp_path_factory.mktemp("csv") / "a.csv"
    col = np.asarray(xs)
    write_csv(path, {"x": col, "y": -col}, run_id="abc")
    cols, rid = read_csv(path)
    assert rid == "abc"
    np.testing.assert_array_equal(cols["x"], col)
    np.testing.assert_array_equal(cols["y"], -col)


def test_json_encodes_numpy_and_nonfinite(tmp_path):
    path = write_json(tmp_path / "a.json", {"a": np.arange(3), "b": np.float64(np.inf),
                                            "c": float("nan"), "d": np.bool_(True)}, "rid")
    data = json.loads(path.read_text())
    assert data == {"run_id": "rid", "a": [0, 1, 2], "b": "inf", "c": "nan", "d": True}


def test_profile_columns_fill_derivative():
    r = np.linspace(0, 1, 11)
    cols = profile_columns(RadialProfile(r, r ** 2))
    np.testing.assert_allclose(cols["fprime"][1:-1], 2 * r[1:-1], rtol=1e-12)


def test_run_directory_manifest_lists_outputs(tmp_path):
    run = RunDirectory("demo", {"problem": {"N": 1}}, root=tmp_path)
    run.csv("a.csv", {"x": [1.0, 2.0]})
    run.json("b.json", {"k": 1})
    manifest = json.loads(run.finish({"ok": True}).read_text())
    assert manifest["outputs"] == ["a.csv", "b.json"]
    assert manifest["run_id"] == run.run_id and manifest["summary"] == {"ok": True}
    on_disk = {p.name for p in run.path.iterdir()}
    assert on_disk == {"a.csv", "b.json", "manifest.json"}
    assert read_csv(run.path / "a.csv")[1] == run.run_id


def test_run_directories_do_not_collide(tmp_path):
    a = RunDirectory("demo", {}, root=tmp_path)
    b = RunDirectory("demo", {}, root=tmp_path)
    assert a.path != b.path and a.run_id != b.run_id


def test_runs_env_variable(tmp_path, monkeypatch):
    monkeypatch.setenv("VSSLAB_RUNS", str(tmp_path / "env"))
    run = RunDirectory("demo", {})
    assert run.path.parent == tmp_path / "env"
