"""Plain-text file formats for observations, sampling models, matrices and reports."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .engine import CompletionConfig, IterationTrace, TRACE_COLUMNS
from .linalg import IndexSet
from .probe import PackingSet
from .sampling import ObservationSet, SamplingModel

OBS_HEADER = "%%observations"
PROB_HEADER = "%%probabilities"


def _num(x: float) -> str:
    # 17 significant digits: exact round trip for doubles
    return f"{x:.16e}"


def _write_coords(path, header: str, m1: int, m2: int, rows, cols, vals) -> None:
    with open(path, "w") as fh:
        fh.write(f"{header} {m1} {m2} {len(vals)}\n")
        for i, j, v in zip(rows, cols, vals):
            fh.write(f"{i + 1} {j + 1} {_num(float(v))}\n")


def _read_coords(path, headers: tuple):
    with open(path) as fh:
        lines = [ln for ln in (raw.strip() for raw in fh) if ln]
    if not lines:
        raise ValueError(f"{path}: empty file")
    head = lines[0].split()
    if len(head) != 4 or head[0] not in headers:
        raise ValueError(f"{path}: expected header '{headers[0]} m1 m2 count', got {lines[0]!r}")
    m1, m2, count = (int(x) for x in head[1:])
    body = lines[1:]
    if len(body) != count:
        raise ValueError(f"{path}: header announces {count} entries, found {len(body)}")
    rows, cols, vals = [], [], []
    for k, ln in enumerate(body, start=2):
        parts = ln.split()
        if len(parts) != 3:
            raise ValueError(f"{path}:{k}: expected 'i j value', got {ln!r}")
        i, j = int(parts[0]) - 1, int(parts[1]) - 1
        if not (0 <= i < m1 and 0 <= j < m2):
            raise ValueError(f"{path}:{k}: index ({i + 1}, {j + 1}) out of range for {m1}x{m2}")
        rows.append(i)
        cols.append(j)
        vals.append(float(parts[2]))
    return m1, m2, np.array(rows, dtype=int), np.array(cols, dtype=int), np.array(vals)


def write_observations(obs: ObservationSet, path) -> None:
    i, j = np.nonzero(obs.mask.mask)
    _write_coords(path, OBS_HEADER, obs.rows, obs.cols, i, j, obs.values)


def read_observations(path) -> ObservationSet:
    m1, m2, i, j, v = _read_coords(path, (OBS_HEADER,))
    mask = np.zeros((m1, m2), dtype=bool)
    Y = np.zeros((m1, m2))
    for a, b, val in zip(i, j, v):
        if mask[a, b]:
            raise ValueError(f"{path}: duplicate observation at ({a + 1}, {b + 1})")
        mask[a, b] = True
        Y[a, b] = val
    return ObservationSet.from_dense(Y, IndexSet(mask))


def write_sampling_model(model: SamplingModel, path) -> None:
    if model.kind == "uniform":
        Path(path).write_text(f"uniform {_num(model.p)}\n")
        return
    m1, m2 = model.shape
    i, j = np.indices(model.shape)
    _write_coords(path, PROB_HEADER, m1, m2, i.ravel(), j.ravel(), model.probs.ravel())


def read_sampling_model(path, shape: tuple | None = None) -> SamplingModel:
    """Read ``uniform p`` (needs ``shape``) or a full coordinate probability matrix."""
    first = Path(path).read_text().split()
    if first and first[0] == "uniform":
        if len(first) != 2:
            raise ValueError(f"{path}: expected 'uniform p'")
        if shape is None:
            raise ValueError("a uniform sampling file needs the matrix shape")
        return SamplingModel.uniform(float(first[1]), shape)
    m1, m2, i, j, v = _read_coords(path, (PROB_HEADER, OBS_HEADER))
    if len(v) != m1 * m2:
        raise ValueError(f"{path}: a probability matrix must list all {m1 * m2} entries")
    probs = np.full((m1, m2), np.nan)
    probs[i, j] = v
    if np.isnan(probs).any():
        raise ValueError(f"{path}: probability matrix has duplicate or missing entries")
    return SamplingModel.general(probs)


def write_matrix_csv(A, path) -> None:
    A = np.asarray(A, dtype=float)
    with open(path, "w") as fh:
        for row in A:
            fh.write(",".join(_num(x) for x in row) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


def write_trace_csv(trace: IterationTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in trace.rows():
            w.writerow([row[0], *(_num(x) for x in row[1:6]), row[6]])


def read_config_json(path) -> CompletionConfig:
    return CompletionConfig.from_dict(json.loads(Path(path).read_text()))


def write_config_json(config: CompletionConfig, path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n")


def write_probe_json(report, path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=2) + "\n")


def write_packing_set(ps: PackingSet, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(len(ps.members) - 1)))
    for k, A in enumerate(ps.members):
        write_matrix_csv(A, out / f"member_{k:0{width}d}.csv")
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps(ps.manifest(), indent=2) + "\n")
    return manifest


def read_packing_set(out_dir) -> tuple[dict, list]:
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text())
    members = [read_matrix_csv(p) for p in sorted(out.glob("member_*.csv"))]
    return manifest, members
