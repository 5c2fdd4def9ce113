"""CSV/JSON readers and writers for streams, traces, message logs and results.

Writers render to a string first and then replace the target atomically, so a
failed run never leaves a half-written file behind.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import re
import tempfile
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

from .signal import MeterStream

METER_COL = re.compile(r"meter_(\d+)$")


class ParseError(ValueError):
    def __init__(self, path, line: int, msg: str):
        super().__init__(f"{path}:{line}: {msg}")
        self.path = str(path)
        self.line = line


class SchemaError(ValueError):
    pass


def ingest_stream(path, fmt: str = "csv") -> List[MeterStream]:
    """Read ``tick,meter_0,...,meter_{L-1}`` into one :class:`MeterStream` per column."""
    if fmt != "csv":
        raise SchemaError(f"unsupported stream format {fmt!r}")
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if not header or header[0] != "tick":
            raise SchemaError(f"{path}: first column must be 'tick'")
        ids = []
        for name in header[1:]:
            m = METER_COL.match(name)
            if not m:
                raise SchemaError(f"{path}: unexpected column {name!r}")
            ids.append(int(m.group(1)))
        if not ids:
            raise SchemaError(f"{path}: no meter columns")
        if sorted(ids) != list(range(len(ids))):
            raise SchemaError(f"{path}: meter columns must be meter_0..meter_{len(ids) - 1}")
        rows = []
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise SchemaError(f"{path}:{line}: expected {len(header)} fields, got {len(row)}")
            try:
                vals = [float(c) for c in row]
            except ValueError as e:
                raise ParseError(path, line, str(e)) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(path, line, "non-finite value")
            if vals[0] != int(vals[0]):
                raise ParseError(path, line, f"tick {row[0]!r} is not an integer")
            if rows and vals[0] <= rows[-1][0]:
                raise ParseError(path, line, "ticks must be strictly increasing")
            rows.append(vals)
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return sorted((MeterStream(data[:, 1 + j].copy(), meter_id=ids[j]) for j in range(len(ids))),
                  key=lambda s: s.meter_id)


def streams_to_array(streams: Sequence[MeterStream]) -> np.ndarray:
    lengths = {len(s) for s in streams}
    if len(lengths) != 1:
        raise SchemaError("meter streams have different lengths")
    return np.stack([s.samples for s in streams])


# ---------------------------------------------------------------------------
# rendering


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def render_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not serializable: {type(o).__name__}")


def stream_csv(data: np.ndarray) -> str:
    data = np.atleast_2d(data)
    header = ["tick"] + [f"meter_{i}" for i in range(data.shape[0])]
    return render_csv(header, ([t, *data[:, t]] for t in range(data.shape[1])))


def trace_csv(trace) -> str:
    """Statistic trace; multi-meter detectors also get one local-statistic column per meter."""
    if trace.kind == "single":
        return render_csv(["tick", "statistic", "reset_flag"],
                          zip(trace.ticks, trace.statistic, trace.reset))
    L = len(trace.local[0]) if trace.local else 0
    header = ["tick"] + [f"meter_{i}" for i in range(L)] + ["global", "reset_flag"]
    return render_csv(header, ([t, *loc, g, r] for t, loc, g, r in
                               zip(trace.ticks, trace.local, trace.statistic, trace.reset)))


def central_trace_csv(trace) -> str:
    return render_csv(["tick", "s_global", "reset", "alarm"],
                      zip(trace.ticks, trace.statistic, trace.reset, trace.alarm))


def messages_csv(messages) -> str:
    return render_csv(["tick", "meter_id", "bit"], messages)


def results_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    return render_csv(columns, ([r.get(c, "") for c in columns] for r in rows))


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_all(outdir, files: dict) -> List[Path]:
    """Write ``{name: text}`` under ``outdir``; every file is rendered before this is called."""
    outdir = Path(outdir)
    written = []
    for name, text in files.items():
        write_atomic(outdir / name, text)
        written.append(outdir / name)
    return written
