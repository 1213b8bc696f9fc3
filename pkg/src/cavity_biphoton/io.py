"""Histogram files (CSV with a ``#`` header, or a JSON mirror) and JSON reports.

CSV layout::

    # format: cavity-biphoton-histogram/1
    # config_hash: 3f1c...
    # seed: 7
    # basis: hv
    # duration_s: 960.0
    # bin_width_ps: 38.3
    # origin_ps: -21084.15
    # n_bins: 1101
    # dtype: int64
    # background_subtracted: 0.0
    bin_index,left_edge_ps,counts
    0,-21084.15,12
    ...

Floats are written with ``repr`` so parsing returns the identical values.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from pathlib import Path

import numpy as np

from .errors import HistogramFormatError
from .records import Histogram

FORMAT = "cavity-biphoton-histogram/1"
COLUMNS = ["bin_index", "left_edge_ps", "counts"]
_DTYPES = {"int64": np.int64, "float64": np.float64}


def _header(hist: Histogram) -> dict:
    dtype = "int64" if hist.is_sampled else "float64"
    return {
        "format": FORMAT,
        "config_hash": hist.config_hash,
        "seed": hist.seed,
        "basis": hist.basis,
        "duration_s": float(hist.duration_s),
        "bin_width_ps": float(hist.bin_width_ps),
        "origin_ps": float(hist.origin_ps),
        "n_bins": len(hist.counts),
        "dtype": dtype,
        "background_subtracted": float(hist.background_subtracted),
    }


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def histogram_to_csv(hist: Histogram) -> str:
    buf = io.StringIO()
    for key, value in _header(hist).items():
        buf.write(f"# {key}: {_fmt(value)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    sampled = hist.is_sampled
    for i, (edge, c) in enumerate(zip(hist.geometry.edges_ps[:-1], hist.counts)):
        writer.writerow([i, repr(float(edge)), int(c) if sampled else repr(float(c))])
    return buf.getvalue()


def _parse_header(raw: dict[str, str]) -> dict:
    def opt(key, kind):
        value = raw.get(key, "")
        return kind(value) if value not in ("", "None", None) else None

    try:
        if raw.get("format") != FORMAT:
            raise HistogramFormatError(f"unsupported format {raw.get('format')!r}")
        head = {
            "config_hash": opt("config_hash", str),
            "seed": opt("seed", int),
            "basis": opt("basis", str),
            "duration_s": float(raw["duration_s"]),
            "bin_width_ps": float(raw["bin_width_ps"]),
            "origin_ps": float(raw["origin_ps"]),
            "n_bins": int(raw["n_bins"]),
            "dtype": raw["dtype"],
            "background_subtracted": float(raw.get("background_subtracted", 0.0)),
        }
    except KeyError as exc:
        raise HistogramFormatError(f"header is missing {exc.args[0]!r}")
    except ValueError as exc:
        raise HistogramFormatError(f"bad header value: {exc}")
    if head["dtype"] not in _DTYPES:
        raise HistogramFormatError(f"unknown dtype {head['dtype']!r}")
    return head


def _build(head: dict, counts) -> Histogram:
    if len(counts) != head["n_bins"]:
        raise HistogramFormatError(
            f"expected {head['n_bins']} bins, found {len(counts)} (truncated file?)")
    try:
        return Histogram(
            bin_width_ps=head["bin_width_ps"], origin_ps=head["origin_ps"],
            counts=np.asarray(counts, dtype=_DTYPES[head["dtype"]]),
            duration_s=head["duration_s"], basis=head["basis"], seed=head["seed"],
            config_hash=head["config_hash"],
            background_subtracted=head["background_subtracted"],
        )
    except ValueError as exc:
        raise HistogramFormatError(str(exc))


def histogram_from_csv(text: str) -> Histogram:
    raw: dict[str, str] = {}
    lines = text.splitlines()
    body_start = 0
    for body_start, line in enumerate(lines):
        if not line.startswith("#"):
            break
        key, _, value = line[1:].partition(":")
        raw[key.strip()] = value.strip()
    else:
        body_start = len(lines)
    head = _parse_header(raw)
    reader = csv.reader(lines[body_start:])
    try:
        columns = next(reader)
    except StopIteration:
        raise HistogramFormatError("missing column header")
    if columns != COLUMNS:
        raise HistogramFormatError(f"expected columns {COLUMNS}, got {columns}")
    parse = int if head["dtype"] == "int64" else float
    counts = []
    for lineno, row in enumerate(reader, start=body_start + 2):
        if not row:
            continue
        if len(row) != 3:
            raise HistogramFormatError(f"line {lineno}: expected 3 fields, got {len(row)}")
        try:
            index = int(row[0])
            counts.append(parse(row[2]))
        except ValueError:
            raise HistogramFormatError(f"line {lineno}: malformed row {row!r}")
        if index != len(counts) - 1:
            raise HistogramFormatError(f"line {lineno}: bin index {index} out of sequence")
    return _build(head, counts)


def histogram_to_json(hist: Histogram) -> str:
    counts = hist.counts.tolist()
    return json.dumps({"header": _header(hist), "counts": counts}, indent=1)


def histogram_from_json(text: str) -> Histogram:
    try:
        data = json.loads(text)
        raw = {k: ("" if v is None else str(v) if not isinstance(v, float) else repr(v))
               for k, v in data["header"].items()}
        counts = data["counts"]
    except (json.JSONDecodeError, KeyError, TypeError, AttributeError) as exc:
        raise HistogramFormatError(f"malformed JSON histogram: {exc}")
    return _build(_parse_header(raw), counts)


def _is_json(path: Path) -> bool:
    return path.suffix.lower() == ".json"


def write_histogram(hist: Histogram, path: str | os.PathLike) -> None:
    path = Path(path)
    text = histogram_to_json(hist) if _is_json(path) else histogram_to_csv(hist)
    path.write_text(text)


def read_histogram(path: str | os.PathLike) -> Histogram:
    path = Path(path)
    text = path.read_text()
    if _is_json(path) or text.lstrip().startswith("{"):
        return histogram_from_json(text)
    return histogram_from_csv(text)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, float)):
        value = float(value)
        return value if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


def report_to_json(report: dict) -> str:
    return json.dumps(_jsonable(report), indent=2, sort_keys=True)


def write_report(report: dict, path: str | os.PathLike | None) -> str:
    text = report_to_json(report)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text
