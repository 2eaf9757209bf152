"""CSV ingestion and emission for panels and objects.

Panel files are long format, one observation per row::

    subject_id,t,x,q_001,...,q_100        # wasserstein
    subject_id,t,x1,x2,c_1_1,...,c_V_V     # correlation, flattened row-major
    subject_id,t,x,y                       # euclidean

Lines starting with ``#`` are comments (output header blocks).
"""

from __future__ import annotations

import csv
import math
import re
from pathlib import Path

import numpy as np

from .errors import ContractError, ParseError
from .panel import SparsePanel
from .spaces import (
    CorrelationSpace,
    CorrMatrixObject,
    EuclideanSpace,
    ObjectSpace,
    QuantileObject,
    WassersteinSpace,
)

PAYLOAD_TOL = 1e-6

_Q = re.compile(r"^q_(\d+)$")
_C = re.compile(r"^c_(\d+)_(\d+)$")
_X = re.compile(r"^x(\d+)$")


def _data_lines(fh):
    """Yield (line_number, line) skipping comment lines."""
    for k, line in enumerate(fh, start=1):
        if line.startswith("#"):
            continue
        yield k, line


def _read_table(path):
    path = Path(path)
    if not path.exists():
        raise ParseError(f"file not found: {path}")
    with open(path, newline="") as fh:
        numbered = list(_data_lines(fh))
    if not numbered:
        raise ParseError("file has no header", row=1)
    reader = csv.reader([line for _, line in numbered])
    rows = list(reader)
    header = [h.strip() for h in rows[0]]
    body = [(numbered[k][0], r) for k, r in enumerate(rows[1:], start=1) if any(c.strip() for c in r)]
    return numbered[0][0], header, body


def _float(value: str, row: int, col: str) -> float:
    try:
        v = float(value)
    except ValueError:
        raise ParseError(f"not a number: {value!r}", row=row, column=col) from None
    if not math.isfinite(v):
        raise ParseError(f"non-finite value {value!r}", row=row, column=col)
    return v


def _layout(header: list[str], space_name: str | None, header_row: int):
    if header[:2] != ["subject_id", "t"]:
        raise ParseError("header must start with subject_id,t", row=header_row)
    rest = header[2:]
    if rest and rest[0] == "x":
        xcols, rest = ["x"], rest[1:]
    else:
        xcols = []
        while rest and _X.match(rest[0]):
            xcols.append(rest[0])
            rest = rest[1:]
        if [int(_X.match(c).group(1)) for c in xcols] != list(range(1, len(xcols) + 1)):
            raise ParseError("covariate columns must be x or x1..xp", row=header_row)
    if not xcols:
        raise ParseError("missing covariate column(s)", row=header_row)

    payload = rest
    if not payload:
        raise ParseError("missing response columns", row=header_row)
    if payload == ["y"]:
        kind = "euclidean"
    elif all(_Q.match(c) for c in payload):
        kind = "wasserstein"
        idx = [int(_Q.match(c).group(1)) for c in payload]
        if idx != list(range(1, len(idx) + 1)):
            raise ParseError("quantile columns must be q_1..q_m in order", row=header_row)
        if len(idx) < 2:
            raise ParseError("need at least 2 quantile columns", row=header_row)
    elif all(_C.match(c) for c in payload):
        kind = "correlation"
        v = int(round(math.sqrt(len(payload))))
        got = [tuple(int(s) for s in _C.match(c).groups()) for c in payload]
        if got != [(q, r) for q in range(1, v + 1) for r in range(1, v + 1)]:
            raise ParseError("correlation columns must be c_1_1..c_V_V row-major",
                             row=header_row)
    else:
        bad = next(c for c in payload if not (_Q.match(c) or _C.match(c) or c == "y"))
        raise ParseError("unknown column", row=header_row, column=bad)
    if space_name is not None and space_name != kind:
        raise ParseError(f"payload columns describe a {kind} response, not {space_name}",
                         row=header_row)
    return xcols, payload, kind


def load_panel(path, space: str | ObjectSpace | None = None, support_bounds=None) -> SparsePanel:
    """Read a long-format panel CSV, validating every row.

    ``space`` may be a space name, an :class:`ObjectSpace`, or None to infer
    it from the payload columns. The quantile grid size and correlation
    dimension always come from the header.
    """
    space_name = space.name if isinstance(space, ObjectSpace) else space
    header_row, header, body = _read_table(path)
    xcols, payload, kind = _layout(header, space_name, header_row)
    if not body:
        raise ParseError("panel file has no data rows", row=header_row + 1)

    ids, ts, xs, ys = [], [], [], []
    width = 2 + len(xcols) + len(payload)
    for row, rec in body:
        if len(rec) != width:
            raise ParseError(f"expected {width} fields, found {len(rec)}", row=row)
        sid = rec[0].strip()
        if not sid:
            raise ParseError("empty subject_id", row=row, column="subject_id")
        ids.append(sid)
        ts.append(_float(rec[1], row, "t"))
        xs.append([_float(rec[2 + k], row, c) for k, c in enumerate(xcols)])
        vals = [_float(rec[2 + len(xcols) + k], row, c) for k, c in enumerate(payload)]
        ys.append(_check_payload(kind, vals, row, payload, support_bounds))

    if kind == "wasserstein":
        sp = space if isinstance(space, WassersteinSpace) else WassersteinSpace(len(payload), support_bounds)
    elif kind == "correlation":
        v = int(round(math.sqrt(len(payload))))
        sp = space if isinstance(space, CorrelationSpace) else CorrelationSpace(v)
    else:
        sp = EuclideanSpace()
    try:
        return SparsePanel.from_records(ids, np.array(ts), np.array(xs), np.array(ys), sp)
    except ContractError as exc:
        raise ParseError(str(exc)) from exc


def _check_payload(kind, vals, row, payload, support_bounds):
    if kind == "euclidean":
        return vals[0]
    if kind == "wasserstein":
        for k in range(len(vals) - 1):
            if vals[k + 1] < vals[k]:
                raise ParseError("quantile values decrease", row=row, column=payload[k + 1])
        if support_bounds is not None:
            lo, hi = support_bounds
            if vals[0] < lo or vals[-1] > hi:
                raise ParseError("quantile values leave the support bounds", row=row)
        return vals
    v = int(round(math.sqrt(len(vals))))
    c = np.array(vals).reshape(v, v)
    for q in range(v):
        if abs(c[q, q] - 1.0) > PAYLOAD_TOL:
            raise ParseError("diagonal entry is not 1", row=row, column=f"c_{q + 1}_{q + 1}")
        for r in range(q + 1, v):
            if abs(c[q, r] - c[r, q]) > PAYLOAD_TOL:
                raise ParseError("matrix is not symmetric", row=row, column=f"c_{q + 1}_{r + 1}")
            if abs(c[q, r]) > 1.0 + PAYLOAD_TOL:
                raise ParseError("entry outside [-1, 1]", row=row, column=f"c_{q + 1}_{r + 1}")
    c = 0.5 * (c + c.T)
    np.fill_diagonal(c, 1.0)
    np.clip(c, -1.0, 1.0, out=c)
    try:
        CorrMatrixObject(c)
    except ContractError as exc:
        raise ParseError(str(exc), row=row) from None
    return c


def payload_header(space: ObjectSpace) -> list[str]:
    if isinstance(space, WassersteinSpace):
        w = max(3, len(str(space.grid_size)))
        return [f"q_{k:0{w}d}" for k in range(1, space.grid_size + 1)]
    if isinstance(space, CorrelationSpace):
        return [f"c_{q}_{r}" for q in range(1, space.dim + 1) for r in range(1, space.dim + 1)]
    return ["y"]


def fmt(v) -> str:
    """Shortest round-tripping text for a float."""
    return repr(float(v))


def write_header_block(fh, meta: dict) -> None:
    for k, v in meta.items():
        fh.write(f"# {k}={v}\n")


def save_panel(panel: SparsePanel, path, meta: dict | None = None) -> None:
    xcols = ["x"] if panel.p == 1 else [f"x{k}" for k in range(1, panel.p + 1)]
    yflat = panel.flat_y()
    with open(path, "w", newline="") as fh:
        if meta:
            write_header_block(fh, meta)
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "t", *xcols, *payload_header(panel.space)])
        for k in range(panel.N):
            w.writerow([panel.subject_ids[panel.subject[k]], fmt(panel.t[k]),
                        *map(fmt, panel.x[k]), *map(fmt, yflat[k])])


# ---------------------------------------------------------------------------
# bare object files


def write_objects(objects, path, flatten: bool = False) -> None:
    """One CSV row per quantile object; correlation objects as V-row blocks
    separated by a blank line, or one flattened row each when ``flatten``."""
    objects = list(objects)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        for k, o in enumerate(objects):
            if isinstance(o, QuantileObject):
                w.writerow(map(fmt, o.values))
            elif isinstance(o, CorrMatrixObject):
                if flatten:
                    w.writerow(map(fmt, o.entries.reshape(-1)))
                else:
                    if k:
                        fh.write("\n")
                    for r in o.entries:
                        w.writerow(map(fmt, r))
            else:
                raise ContractError(f"cannot serialise {type(o).__name__}")


def read_quantile_objects(path, support_bounds=None) -> list[QuantileObject]:
    out = []
    with open(path, newline="") as fh:
        for row, rec in enumerate(csv.reader(fh), start=1):
            if not rec:
                continue
            vals = [_float(v, row, None) for v in rec]
            try:
                out.append(QuantileObject(vals, support_bounds))
            except ContractError as exc:
                raise ParseError(str(exc), row=row) from None
    return out


def read_correlation_objects(path, flatten: bool = False) -> list[CorrMatrixObject]:
    with open(path, newline="") as fh:
        lines = list(enumerate(csv.reader(fh), start=1))
    blocks: list[list] = []
    if flatten:
        blocks = [[(row, rec)] for row, rec in lines if rec]
    else:
        cur: list = []
        for row, rec in lines:
            if not rec or not any(c.strip() for c in rec):
                if cur:
                    blocks.append(cur)
                cur = []
            else:
                cur.append((row, rec))
        if cur:
            blocks.append(cur)
    out = []
    for block in blocks:
        first = block[0][0]
        vals = [_float(v, row, None) for row, rec in block for v in rec]
        v = int(round(math.sqrt(len(vals))))
        if v * v != len(vals) or (not flatten and len(block) != v):
            raise ParseError("object is not a square matrix", row=first)
        try:
            out.append(CorrMatrixObject(np.array(vals).reshape(v, v)))
        except ContractError as exc:
            raise ParseError(str(exc), row=first) from None
    return out
