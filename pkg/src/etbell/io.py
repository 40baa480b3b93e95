"""CSV and JSON formats read and written by the command-line tool."""
from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable

import numpy as np

from .analysis import FringeFit
from .errors import DomainError, ParseError
from .events import CountRow, CountTable, FringeScan
from .quantum import DETECTOR_PAIRS
from .tomography import PROJECTOR_CODES, TomographySetting

COUNT_HEADER = ["setting_label", "phi_a", "phi_b", "c11", "c12", "c21", "c22", "duration_s"]
TOMO_HEADER = ["index", "proj_a", "proj_b", "count", "duration_s"]
FRINGE_HEADER = ["phi_b", "phi_a", "c11", "c12", "c21", "c22"]


def fmt_phase(x: float) -> str:
    return f"{x:.9g}"


def fmt_float(x: float) -> str:
    return f"{x:.12g}"


def _csv_text(header: list[str], rows: Iterable[list[str]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def count_table_to_csv(table: CountTable) -> str:
    return _csv_text(COUNT_HEADER, (
        [r.label, fmt_phase(r.phi_a), fmt_phase(r.phi_b), *map(str, r.counts), fmt_float(r.duration_s)]
        for r in table.rows.values()
    ))


def _rows(text: str, header: list[str]) -> list[tuple[int, list[str]]]:
    lines = [(n, line) for n, line in enumerate(text.splitlines(), start=1) if line.strip()]
    if not lines:
        raise ParseError("file is empty", line=1)
    got = [h.strip() for h in next(csv.reader([lines[0][1]]))]
    if got != header:
        raise ParseError(f"expected header {','.join(header)}", line=lines[0][0])
    out = []
    for n, line in lines[1:]:
        fields = [f.strip() for f in next(csv.reader([line]))]
        if len(fields) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(fields)}", line=n)
        out.append((n, fields))
    return out


def _int(s: str, n: int) -> int:
    try:
        v = int(s)
    except ValueError:
        raise ParseError(f"not an integer: {s!r}", line=n) from None
    if v < 0:
        raise ParseError(f"negative count {v}", line=n)
    return v


def _float(s: str, n: int) -> float:
    try:
        v = float(s)
    except ValueError:
        raise ParseError(f"not a number: {s!r}", line=n) from None
    if not np.isfinite(v):
        raise ParseError(f"non-finite value {s!r}", line=n)
    return v


def count_table_from_csv(text: str) -> CountTable:
    rows = []
    for n, f in _rows(text, COUNT_HEADER):
        rows.append(CountRow(f[0], _float(f[1], n), _float(f[2], n),
                             tuple(_int(x, n) for x in f[3:7]), _float(f[7], n)))
    if not rows:
        raise ParseError("no data rows")
    return CountTable.from_rows(rows)


def tomography_to_csv(settings: list[TomographySetting]) -> str:
    return _csv_text(TOMO_HEADER, (
        [str(s.index), s.proj_a, s.proj_b, str(s.count), fmt_float(s.duration)] for s in settings
    ))


def tomography_from_csv(text: str, expected_rows: int = 16) -> list[TomographySetting]:
    out = []
    for n, f in _rows(text, TOMO_HEADER):
        for code in (f[1], f[2]):
            if code not in PROJECTOR_CODES:
                raise ParseError(f"unknown projector code {code!r}", line=n)
        try:
            out.append(TomographySetting(_int(f[0], n), f[1], f[2], _int(f[3], n), _float(f[4], n)))
        except DomainError as exc:
            raise ParseError(str(exc), line=n) from None
    if len(out) != expected_rows:
        raise ParseError(f"expected {expected_rows} measurement rows, found {len(out)}",
                         line=len(text.splitlines()) + 1)
    return out


def fringe_scan_to_csv(scans: Iterable[FringeScan]) -> str:
    return _csv_text(FRINGE_HEADER, (
        [fmt_phase(sc.phi_b), fmt_phase(a), *map(str, c)]
        for sc in scans for a, c in zip(sc.phi_a, sc.counts)
    ))


def fringe_scan_from_csv(text: str) -> list[FringeScan]:
    by_b: dict[float, list[tuple[float, list[int]]]] = {}
    for n, f in _rows(text, FRINGE_HEADER):
        by_b.setdefault(_float(f[0], n), []).append((_float(f[1], n), [_int(x, n) for x in f[2:6]]))
    return [FringeScan(b, np.array([a for a, _ in pts]), np.array([c for _, c in pts], dtype=np.int64))
            for b, pts in by_b.items()]


def fits_to_json(fits: dict[float, dict[str, FringeFit]], mean_v: tuple[float, float]) -> str:
    d = {
        "scans": [
            {"phi_b": b, "fits": {ij: f[ij].to_dict() for ij in DETECTOR_PAIRS}} for b, f in fits.items()
        ],
        "mean_visibility": mean_v[0],
        "delta_visibility": mean_v[1],
    }
    return json.dumps(d, indent=2) + "\n"


def fits_from_json(text: str) -> dict[float, dict[str, FringeFit]]:
    d = json.loads(text)
    return {float(s["phi_b"]): {ij: FringeFit.from_dict(v) for ij, v in s["fits"].items()} for s in d["scans"]}


def read_text(path: str | Path) -> str:
    return Path(path).read_text()


def write_text(path: Path, text: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path
