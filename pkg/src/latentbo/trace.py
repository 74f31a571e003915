"""Per-run optimisation records and their CSV form.

CSV columns are ``iter, f, best_f, x_0 .. x_{D-1}`` optionally followed by
``z_0 .. z_{d-1}``. Initial-design rows carry ``iter = 0``; BO iterations are
numbered from 1. Floats are written with ``repr`` so a read-back is exact.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import InputError


@dataclass
class Trace:
    iters: list[int] = field(default_factory=list)
    f: list[float] = field(default_factory=list)
    best_f: list[float] = field(default_factory=list)
    x: list[np.ndarray] = field(default_factory=list)
    z: list[Optional[np.ndarray]] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def append(self, k: int, x, fx: float, z=None) -> None:
        fx = float(fx)
        best = fx if not self.best_f else min(self.best_f[-1], fx)
        self.iters.append(int(k))
        self.f.append(fx)
        self.best_f.append(best)
        self.x.append(np.asarray(x, dtype=float).copy())
        self.z.append(None if z is None else np.asarray(z, dtype=float).copy())

    def __len__(self):
        return len(self.f)

    @property
    def best(self) -> float:
        return self.best_f[-1]

    @property
    def n_initial(self) -> int:
        return sum(1 for k in self.iters if k == 0)

    def to_csv(self) -> str:
        if not self.f:
            raise InputError("cannot serialise an empty trace")
        dim = self.x[0].size
        zdim = 0 if self.z[0] is None else self.z[0].size
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["iter", "f", "best_f"] + [f"x_{i}" for i in range(dim)] + [f"z_{i}" for i in range(zdim)])
        for k, fx, b, x, z in zip(self.iters, self.f, self.best_f, self.x, self.z):
            row = [str(k), repr(fx), repr(b)] + [repr(float(v)) for v in x]
            if zdim:
                zz = z if z is not None else np.full(zdim, np.nan)
                row += [repr(float(v)) for v in zz]
            writer.writerow(row)
        return buf.getvalue()

    def write(self, path) -> None:
        Path(path).write_text(self.to_csv())


def parse_csv(text: str) -> Trace:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise InputError("trace CSV is empty") from None
    if header[:3] != ["iter", "f", "best_f"]:
        raise InputError(f"line 1: unexpected trace header {header[:3]}")
    xcols = [i for i, h in enumerate(header) if h.startswith("x_")]
    zcols = [i for i, h in enumerate(header) if h.startswith("z_")]
    tr = Trace()
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise InputError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            tr.iters.append(int(row[0]))
            tr.f.append(float(row[1]))
            tr.best_f.append(float(row[2]))
            tr.x.append(np.array([float(row[i]) for i in xcols]))
            tr.z.append(np.array([float(row[i]) for i in zcols]) if zcols else None)
        except ValueError as exc:
            raise InputError(f"line {lineno}: {exc}") from None
    if not tr.f:
        raise InputError("trace CSV has no rows")
    return tr


def read_trace(path) -> Trace:
    return parse_csv(Path(path).read_text())


__all__ = ["Trace", "parse_csv", "read_trace"]
