"""MOCMMAT1 binary matrices and their CSV escape hatch.

Layout: 8-byte magic ``MOCMMAT1``, little-endian u64 rows, u64 cols, then the
row-major float64 payload (little-endian).
"""

import csv
import struct
from pathlib import Path

import numpy as np

MAGIC = b"MOCMMAT1"
_HEADER = struct.Struct("<8sQQ")


class FormatError(ValueError):
    pass


def write_matrix(path, M) -> None:
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(1, -1)
    if M.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {M.shape}")
    rows, cols = M.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, cols))
        fh.write(np.ascontiguousarray(M, dtype="<f8").tobytes())


def read_matrix(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"matrix file not found: {path}")
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * rows * cols
    if len(data) != expected:
        raise FormatError(f"{path}: payload is {len(data) - _HEADER.size} bytes, expected {8 * rows * cols}")
    out = np.frombuffer(data, dtype="<f8", offset=_HEADER.size).reshape(rows, cols)
    return out.astype(float)


def write_matrix_csv(path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"v{j}" for j in range(M.shape[1])])
        for row in M:
            w.writerow([repr(float(x)) for x in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    header, body = rows[0], rows[1:]
    if header != [f"v{j}" for j in range(len(header))]:
        raise FormatError(f"{path}: header must be v0,v1,...")
    return np.array([[float(x) for x in r] for r in body], dtype=float).reshape(len(body), len(header))


def write_onsets_csv(path, tau) -> None:
    """Nonzero onset entries as ``t,c,value`` triplets (T and C come from the manifest)."""
    tau = np.asarray(tau, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "c", "value"])
        for t, c in zip(*np.nonzero(tau)):
            w.writerow([int(t), int(c), repr(float(tau[t, c]))])


def read_onsets_csv(path, T: int, C: int) -> np.ndarray:
    tau = np.zeros((T, C))
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["t", "c", "value"]:
            raise FormatError(f"{path}: header must be t,c,value")
        for row in reader:
            t, c = int(row["t"]), int(row["c"])
            if not (0 <= t < T and 0 <= c < C):
                raise FormatError(f"{path}: entry ({t}, {c}) outside {T}x{C}")
            tau[t, c] = float(row["value"])
    return tau
