"""Text formats for matrices, vectors, problem bundles, results and CSV tables.

Matrix file: a first line "M N" followed by M rows of N values. Vector file:
one value per line. Floats are written with 17 significant digits so that
they round-trip exactly.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from epsense.errors import ParameterError
from epsense.problem import SensingMatrix, SensingProblem, SparseSignal

RESULT_SCHEMA_VERSION = 1


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.17g}"


def write_matrix(path, A) -> None:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    lines = [f"{A.shape[0]} {A.shape[1]}"]
    lines += [" ".join(fmt(v) for v in row) for row in A]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path) -> np.ndarray:
    with open(path) as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ParameterError(f"{path}: first line must be 'M N'")
        M, N = int(header[0]), int(header[1])
        rows = [line.split() for line in fh if line.strip()]
    if len(rows) != M or any(len(r) != N for r in rows):
        raise ParameterError(f"{path}: expected {M} rows of {N} values")
    return np.array(rows, dtype=float).reshape(M, N)


def write_vector(path, v) -> None:
    v = np.asarray(v, dtype=float).reshape(-1)
    Path(path).write_text("".join(fmt(x) + "\n" for x in v))


def read_vector(path) -> np.ndarray:
    with open(path) as fh:
        return np.array([float(line) for line in fh if line.strip()])


def _dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_bundle(directory, problem: SensingProblem, meta: Optional[dict] = None) -> Path:
    """Write F.mat, y.vec, w.vec (when the truth is known) and meta.json."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix(d / "F.mat", problem.F)
    write_vector(d / "y.vec", problem.y)
    if problem.truth is not None:
        write_vector(d / "w.vec", problem.truth.values)
    info = {
        "M": problem.M,
        "N": problem.N,
        "seed": problem.seed,
        "rho": problem.truth.rho_true if problem.truth is not None else None,
        "lambda": problem.truth.lambda_true if problem.truth is not None else None,
        "kind": problem.matrix.label,
        "k": problem.matrix.k,
        "noise_variance": problem.noise_variance,
    }
    info.update(meta or {})
    _dump_json(d / "meta.json", info)
    return d


def read_bundle(directory) -> tuple[SensingProblem, dict]:
    d = Path(directory)
    meta = json.loads((d / "meta.json").read_text()) if (d / "meta.json").exists() else {}
    F = read_matrix(d / "F.mat")
    y = read_vector(d / "y.vec")
    if y.shape[0] != F.shape[0]:
        raise ParameterError(f"{d}: y has {y.shape[0]} entries, F has {F.shape[0]} rows")
    truth = None
    if (d / "w.vec").exists():
        w = read_vector(d / "w.vec")
        if w.shape[0] != F.shape[1]:
            raise ParameterError(f"{d}: w has {w.shape[0]} entries, F has {F.shape[1]} columns")
        support = np.flatnonzero(w)
        truth = SparseSignal(w, support, meta.get("rho") or support.size / w.size,
                             meta.get("lambda") or 1.0)
    kind = "correlated" if str(meta.get("kind", "IID")).startswith("CORRELATED") else "iid"
    matrix = SensingMatrix(F, kind, meta.get("k"))
    problem = SensingProblem(matrix, y, truth, float(meta.get("noise_variance") or 0.0),
                             meta.get("seed"))
    return problem, meta


def write_result(path, record: dict) -> None:
    out = {"schema_version": RESULT_SCHEMA_VERSION}
    out.update(record)
    _dump_json(path, out)


def read_result(path) -> dict:
    record = json.loads(Path(path).read_text())
    version = record.get("schema_version")
    if version != RESULT_SCHEMA_VERSION:
        raise ParameterError(f"{path}: unsupported result schema version {version}")
    return record


def _row_values(row: Any, fields: Sequence[str]) -> list:
    if dataclasses.is_dataclass(row):
        row = dataclasses.asdict(row)
    return [row.get(f) for f in fields]


def format_csv(rows: Iterable[Any], fields: Sequence[str]) -> str:
    lines = [",".join(fields)]
    for row in rows:
        vals = []
        for v in _row_values(row, fields):
            if isinstance(v, float) and math.isnan(v):
                vals.append("nan")
            elif isinstance(v, str):
                vals.append(v)
            else:
                vals.append(fmt(v))
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def write_csv(path, rows: Iterable[Any], fields: Sequence[str]) -> None:
    text = format_csv(rows, fields)
    if str(path) == "-":
        print(text, end="")
    else:
        Path(path).write_text(text)


def write_manifest(path, command: str, config: dict, root_seed, version: str,
                   started: str, finished: str, outputs: Sequence[str]) -> None:
    _dump_json(path, {
        "command": command,
        "config": config,
        "root_seed": root_seed,
        "artifact_version": version,
        "started": started,
        "finished": finished,
        "outputs": [os.fspath(o) for o in outputs],
    })
