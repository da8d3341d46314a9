"""Binary matrix files and covariance bundles.

Matrix file layout: an 8-byte header of (rows, cols) as little-endian uint32,
followed by row-major little-endian float64 data.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .exceptions import ConfigurationError

_HEADER = np.dtype("<u4")
_VALUE = np.dtype("<f8")


def write_matrix(path, matrix) -> None:
    m = np.ascontiguousarray(np.atleast_2d(np.asarray(matrix, dtype=float)))
    with open(path, "wb") as fh:
        np.array(m.shape, dtype=_HEADER).tofile(fh)
        m.astype(_VALUE).tofile(fh)


def read_matrix(path) -> np.ndarray:
    with open(path, "rb") as fh:
        shape = np.fromfile(fh, dtype=_HEADER, count=2)
        if shape.size != 2:
            raise ConfigurationError(f"{path}: truncated matrix header")
        rows, cols = int(shape[0]), int(shape[1])
        data = np.fromfile(fh, dtype=_VALUE, count=rows * cols)
    if data.size != rows * cols:
        raise ConfigurationError(f"{path}: expected {rows * cols} values, got {data.size}")
    return data.reshape(rows, cols)


def write_bundle(directory, matrices: dict, meta: dict) -> None:
    """Write named matrices plus a manifest JSON into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"files": {}, **meta}
    for name, m in matrices.items():
        fname = f"{name}.mat"
        write_matrix(directory / fname, m)
        manifest["files"][name] = fname
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))


def read_bundle(directory) -> tuple[dict, dict]:
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    matrices = {
        name: read_matrix(directory / fname) for name, fname in manifest["files"].items()
    }
    meta = {k: v for k, v in manifest.items() if k != "files"}
    return matrices, meta
