"""Reader/writer for the line-oriented ``NLDP-DS v1`` dataset format.

::

    NLDP-DS v1 d=2 R=2.8284271247461903 kind=private n=2
    0.5 -1.25 1
    -0.1 0.3 -1

Floats are printed with Python's shortest round-trip ``repr`` so a write/read
cycle is bit-exact.
"""

from __future__ import annotations

import io
import os
import re
from typing import TextIO, Union

import numpy as np

from .core import DATASET_KINDS, Dataset
from .errors import InvalidInputError

MAGIC = "NLDP-DS v1"
_HEADER = re.compile(r"^NLDP-DS v1 d=(\d+) R=(\S+) kind=(\S+) n=(\d+)$")

PathLike = Union[str, os.PathLike]


def format_float(v: float) -> str:
    return repr(float(v))


def dump_dataset(data: Dataset, fh: TextIO) -> None:
    fh.write(f"{MAGIC} d={data.dimension} R={format_float(data.radius)} kind={data.kind} n={len(data)}\n")
    for x, y in zip(data.X, data.y):
        fh.write(" ".join(format_float(v) for v in x))
        fh.write(f" {int(y)}\n")


def load_dataset(fh: TextIO) -> Dataset:
    header = fh.readline().rstrip("\n")
    m = _HEADER.match(header)
    if not m:
        raise InvalidInputError(f"not an NLDP-DS v1 header: {header!r}")
    d, radius, kind, n = int(m[1]), float(m[2]), m[3], int(m[4])
    if kind not in DATASET_KINDS:
        raise InvalidInputError(f"unknown dataset kind {kind!r}")
    X = np.empty((n, d))
    y = np.empty(n, dtype=np.int8)
    for i in range(n):
        line = fh.readline()
        if not line:
            raise InvalidInputError(f"expected {n} examples, file ended after {i}")
        parts = line.split()
        if len(parts) != d + 1:
            raise InvalidInputError(f"line {i + 2}: expected {d + 1} fields, got {len(parts)}")
        X[i] = [float(p) for p in parts[:d]]
        y[i] = int(parts[d])
    if fh.readline().strip():
        raise InvalidInputError("trailing content after the declared n examples")
    return Dataset(d, radius, X, y, kind)


def write_dataset(data: Dataset, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        dump_dataset(data, fh)


def read_dataset(path: PathLike) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        return load_dataset(fh)


def dataset_to_text(data: Dataset) -> str:
    buf = io.StringIO()
    dump_dataset(data, buf)
    return buf.getvalue()


def dataset_from_text(text: str) -> Dataset:
    return load_dataset(io.StringIO(text))
