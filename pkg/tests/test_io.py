import json

import numpy as np
import pytest

from mcsvt import io
from mcsvt.engine import CompletionConfig, DenseRule, run
from mcsvt.linalg import IndexSet
from mcsvt.probe import build_packing_set
from mcsvt.sampling import ObservationSet, SamplingModel


def test_observations_roundtrip(tmp_path, rng):
    X = rng.standard_normal((7, 5)) * 10.0 ** rng.integers(-20, 20, (7, 5))
    obs = ObservationSet.from_dense(X, IndexSet(rng.random((7, 5)) < 0.6))
    path = tmp_path / "obs.txt"
    io.write_observations(obs, path)
    lines = path.read_text().splitlines()
    assert lines[0] == f"%%observations 7 5 {len(obs.mask)}"
    i, j, v = lines[1].split()
    assert int(i) >= 1 and int(j) >= 1 and "e" in v
    back = io.read_observations(path)
    assert back == obs


@pytest.mark.parametrize("content, msg", [
    ("%%observations 2 2 2\n1 1 1.0\n", "announces"),
    ("%%observations 2 2 1\n3 1 1.0\n", "out of range"),
    ("%%observations 2 2 2\n1 1 1.0\n1 1 2.0\n", "duplicate"),
    ("%%matrix 2 2 0\n", "header"),
])
def test_observations_malformed(tmp_path, content, msg):
    path = tmp_path / "bad.txt"
    path.write_text(content)
    with pytest.raises(ValueError, match=msg):
        io.read_observations(path)


def test_sampling_model_files(tmp_path, rng):
    path = tmp_path / "uni.txt"
    io.write_sampling_model(SamplingModel.uniform(0.35, (4, 6)), path)
    assert path.read_text().startswith("uniform ")
    m = io.read_sampling_model(path, (4, 6))
    assert m.kind == "uniform" and m.p == 0.35
    with pytest.raises(ValueError):
        io.read_sampling_model(path)

    P = rng.uniform(0.1, 1.0, (3, 4))
    path = tmp_path / "gen.txt"
    io.write_sampling_model(SamplingModel.general(P), path)
    np.testing.assert_array_equal(io.read_sampling_model(path).probs, P)


def test_sampling_model_partial_rejected(tmp_path):
    path = tmp_path / "p.txt"
    path.write_text("%%probabilities 2 2 1\n1 1 0.5\n")
    with pytest.raises(ValueError, match="all 4"):
        io.read_sampling_model(path)


def test_matrix_csv_exact(tmp_path, rng):
    A = rng.standard_normal((5, 3)) / 3.0
    path = tmp_path / "m.csv"
    io.write_matrix_csv(A, path)
    np.testing.assert_array_equal(io.read_matrix_csv(path), A)
    row = path.read_text().splitlines()[0].split(",")
    assert len(row) == 3


def test_trace_csv(tmp_path, rng):
    obs = ObservationSet.from_dense(rng.standard_normal((6, 6)), IndexSet(rng.random((6, 6)) < 0.5))
    res = run(obs, CompletionConfig(lam=0.2, a=3.0))
    path = tmp_path / "trace.csv"
    io.write_trace_csv(res.trace, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iter,delta_opnorm_unobs,delta_sup,delta_fro,f_lambda,q_value,rank"
    assert len(lines) == res.iterations + 1
    last = lines[-1].split(",")
    assert int(last[0]) == res.iterations and float(last[4]) == res.trace.f_lambda[-1]


def test_config_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"lambda": {"rule": "dense", "b": 0.1}, "a": 1.5}))
    cfg = io.read_config_json(path)
    assert cfg.lam == DenseRule(0.1) and cfg.a == 1.5
    io.write_config_json(cfg, path)
    assert io.read_config_json(path) == cfg


def test_packing_dir(tmp_path):
    ps = build_packing_set(16, 16, 2, 0.5, 1.0, 1.0, 1.0, 5, 0)
    io.write_packing_set(ps, tmp_path / "pk")
    manifest, members = io.read_packing_set(tmp_path / "pk")
    assert manifest == {"r": 2, "a": 1.0, "gamma": 1.0, "separation": ps.separation, "count": 5, "shortfall": False}
    for A, B in zip(members, ps.members):
        np.testing.assert_array_equal(A, B)
