"""Data matrix and label files.

CSV files hold comma-separated decimals, one sample per line, with an
optional header line. raw-f64 files start with two little-endian uint64
values (n, d) followed by n*d little-endian float64 values, row-major.
"""
import logging
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

logger = logging.getLogger(__name__)

FORMATS = ("csv", "raw-f64")
HEADER_DTYPE = np.dtype("<u8")
VALUE_DTYPE = np.dtype("<f8")
HEADER_BYTES = 2 * HEADER_DTYPE.itemsize

PathLike = Union[str, Path]


class ParseError(ValueError):
    def __init__(
        self,
        message: str,
        line: Optional[int] = None,
        offset: Optional[int] = None,
    ):
        where = f"line {line}: " if line is not None else ""
        where = f"byte {offset}: " if offset is not None else where
        super().__init__(f"{where}{message}")
        self.line = line
        self.offset = offset


class DimensionError(ValueError):
    pass


def _read_csv(path: PathLike, has_header: bool) -> np.ndarray:
    rows: List[List[float]] = []
    width = None
    with open(path) as f:
        for number, line in enumerate(f, start=1):
            if has_header and number == 1:
                continue
            line = line.strip()
            if not line:
                continue
            try:
                row = [float(token) for token in line.split(",")]
            except ValueError:
                raise ParseError(
                    f"not a list of numbers: {line[:40]!r}", line=number
                )
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DimensionError(
                    f"line {number}: {len(row)} values, expected {width}"
                )
            rows.append(row)
    if not rows:
        raise DimensionError(f"{path} holds no samples")
    return np.array(rows, dtype=np.float64)


def _read_raw(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < HEADER_BYTES:
        raise ParseError("truncated header", offset=len(data))
    n, d = (int(v) for v in np.frombuffer(data[:HEADER_BYTES], HEADER_DTYPE))
    expected = HEADER_BYTES + n * d * VALUE_DTYPE.itemsize
    if len(data) != expected:
        raise DimensionError(
            f"header says {n}x{d} ({expected} bytes), file has {len(data)}"
        )
    values = np.frombuffer(data, VALUE_DTYPE, count=n * d, offset=HEADER_BYTES)
    return values.reshape(n, d).astype(np.float64)


def load_matrix(
    path: PathLike, fmt: str = "csv", has_header: bool = False
) -> np.ndarray:
    if fmt == "csv":
        X = _read_csv(path, has_header)
    elif fmt == "raw-f64":
        X = _read_raw(path)
    else:
        raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")
    logger.debug(f"loaded {X.shape[0]}x{X.shape[1]} matrix from {path}")
    return X


def write_csv(path: PathLike, X: np.ndarray, header: Optional[str] = None):
    X = np.asarray(X, dtype=np.float64)
    with open(path, "w") as f:
        if header is not None:
            f.write(header + "\n")
        for row in X:
            f.write(",".join(repr(float(v)) for v in row) + "\n")


def write_raw_f64(path: PathLike, X: np.ndarray):
    X = np.ascontiguousarray(X, dtype=VALUE_DTYPE)
    if X.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {X.shape}")
    with open(path, "wb") as f:
        f.write(np.array(X.shape, dtype=HEADER_DTYPE).tobytes())
        f.write(X.tobytes())


def write_matrix(path: PathLike, X: np.ndarray, fmt: str = "csv"):
    if fmt == "csv":
        write_csv(path, X)
    elif fmt == "raw-f64":
        write_raw_f64(path, X)
    else:
        raise ValueError(f"unknown format {fmt!r}; choose from {FORMATS}")


def load_labels(path: PathLike) -> np.ndarray:
    labels = []
    with open(path) as f:
        for number, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                labels.append(int(line))
            except ValueError:
                raise ParseError(
                    f"not an integer label: {line[:40]!r}", line=number
                )
    return np.array(labels, dtype=np.int64)


def write_labels(path: PathLike, labels) -> None:
    with open(path, "w") as f:
        f.writelines(f"{int(label)}\n" for label in np.asarray(labels).ravel())
