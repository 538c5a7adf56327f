"""File formats.

Parameter table
    UTF-8 JSON object ``{"format": "qcanvas-params", "version": 1,
    "elements": [...]}``; each element carries the ElementParams fields with
    ``onsite`` given as a shell -> energy object.

Record stream
    JSON Lines, one DiatomicRecord per line with exactly the fields of
    ``RECORD_FIELDS`` (atomic units).  Populations are ``[l, m, n]`` triples.

Label table
    CSV with header ``LABEL_COLUMNS``; undefined values are written as ``NA``,
    ``flags`` is a ``;``-separated list.

QCIM tensor file (little-endian)
    ``b"QCIM"``, uint16 version (=1), uint64 record count, 3 x uint32 dims
    (10, 32, 32); then per record a uint16 pair-id byte length, the UTF-8
    pair id and 10*32*32 float32 values in channel-major, row-major order.

Floats in text formats use the shortest round-trip representation.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import struct
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np
import yaml

from .model import (
    IMAGE_SIZE,
    N_CHANNELS,
    DiatomicRecord,
    ElementParams,
    ImageTensor,
    ParamsError,
    ScalarLabels,
)

PARAMS_FORMAT = "qcanvas-params"
PARAMS_VERSION = 1
RECORD_FIELDS = tuple(f.name for f in fields(DiatomicRecord))
LABEL_COLUMNS = tuple(f.name for f in fields(ScalarLabels))
NA = "NA"

QCIM_MAGIC = b"QCIM"
QCIM_VERSION = 1
_QCIM_HEADER = struct.Struct("<4sHQ3I")
_QCIM_IDLEN = struct.Struct("<H")
_PAYLOAD = N_CHANNELS * IMAGE_SIZE * IMAGE_SIZE


class RecordFormatError(ValueError):
    def __init__(self, message, line=None, pair_id=None):
        where = f"line {line}" if line is not None else ""
        if pair_id:
            where += f" ({pair_id})"
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line
        self.pair_id = pair_id


class QcimError(ValueError):
    pass


class BadMagicError(QcimError):
    pass


class UnsupportedVersionError(QcimError):
    pass


class TruncatedError(QcimError):
    pass


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


# -- parameters -------------------------------------------------------------

def params_to_dict(p: ElementParams) -> dict:
    d = asdict(p)
    d["shells"] = list(p.shells)
    d["onsite"] = dict(zip(p.shells, p.onsite))
    return d


def save_params(table: dict[str, ElementParams], path) -> None:
    doc = {"format": PARAMS_FORMAT, "version": PARAMS_VERSION,
           "elements": [params_to_dict(p) for p in table.values()]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def load_params(path) -> dict[str, ElementParams]:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParamsError(f"{path}: parse error at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict) or doc.get("format") != PARAMS_FORMAT:
        raise ParamsError(f"{path}: not a {PARAMS_FORMAT} document")
    if doc.get("version") != PARAMS_VERSION:
        raise ParamsError(f"{path}: unsupported version {doc.get('version')!r}")
    table: dict[str, ElementParams] = {}
    for entry in doc.get("elements", []):
        sym = entry.get("symbol", "?")
        if sym in table:
            raise ParamsError(f"duplicate element {sym!r}")
        try:
            shells = tuple(entry["shells"])
            onsite = entry["onsite"]
            if set(onsite) != set(shells):
                raise ParamsError(f"element {sym!r}: onsite keys {sorted(onsite)} != shells {list(shells)}")
            table[sym] = ElementParams(
                symbol=sym, z=entry["z"], shells=shells,
                onsite=tuple(float(onsite[s]) for s in shells),
                **{k: float(entry[k]) for k in ("hubbard_u", "n_valence", "hop_scale", "hop_decay",
                                               "overlap_scale", "overlap_decay", "rep_a", "rep_b")},
            )
        except KeyError as exc:
            raise ParamsError(f"element {sym!r}: missing field {exc.args[0]!r}") from exc
        except TypeError as exc:
            raise ParamsError(f"element {sym!r}: {exc}") from exc
    return table


# -- records ----------------------------------------------------------------

def record_to_dict(rec: DiatomicRecord) -> dict:
    d = asdict(rec)
    d["populations_a"] = [list(p) for p in rec.populations_a]
    d["populations_b"] = [list(p) for p in rec.populations_b]
    return d


def record_from_dict(d: dict, line=None) -> DiatomicRecord:
    pair_id = d.get("pair_id") if isinstance(d, dict) else None
    if not isinstance(d, dict):
        raise RecordFormatError("record is not an object", line)
    missing = [k for k in RECORD_FIELDS if k not in d]
    if missing:
        raise RecordFormatError(f"missing field(s) {', '.join(missing)}", line, pair_id)
    extra = sorted(set(d) - set(RECORD_FIELDS))
    if extra:
        raise RecordFormatError(f"unknown field(s) {', '.join(extra)}", line, pair_id)
    try:
        vals = dict(d)
        for k in ("eigenvalues", "occupations"):
            vals[k] = tuple(float(x) for x in d[k])
        for k in ("populations_a", "populations_b"):
            vals[k] = tuple((int(l), int(m), float(n)) for l, m, n in d[k])
        vals["dipole"] = tuple(float(x) for x in d["dipole"])
        if len(vals["dipole"]) != 3:
            raise ValueError("dipole must have 3 components")
        vals["scc_iterations"] = int(d["scc_iterations"])
        vals["converged"] = bool(d["converged"])
        return DiatomicRecord(**vals)
    except (TypeError, ValueError) as exc:
        raise RecordFormatError(f"bad value: {exc}", line, pair_id) from exc


def write_records(records, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(record_to_dict(rec), allow_nan=False) + "\n")


def read_records(path) -> list[DiatomicRecord]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordFormatError(f"malformed JSON: {exc.msg}", lineno) from exc
            out.append(record_from_dict(d, lineno))
    return out


# -- labels -----------------------------------------------------------------

def _cell(value) -> str:
    if value is None:
        return NA
    if isinstance(value, tuple):
        return ";".join(value)
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def write_labels(labels, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABEL_COLUMNS)
        for row in labels:
            w.writerow([_cell(getattr(row, c)) for c in LABEL_COLUMNS])


def read_labels(path) -> list[ScalarLabels]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return out
        if tuple(header) != LABEL_COLUMNS:
            raise RecordFormatError(f"label header mismatch: expected {len(LABEL_COLUMNS)} "
                                    f"columns {','.join(LABEL_COLUMNS)}", 1)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(LABEL_COLUMNS):
                raise RecordFormatError(f"expected {len(LABEL_COLUMNS)} columns, got {len(row)}",
                                        lineno, row[0] if row else None)
            vals = {}
            for name, cell in zip(LABEL_COLUMNS, row):
                if name in ("pair_id", "elem_a", "elem_b"):
                    vals[name] = cell
                elif name == "flags":
                    vals[name] = tuple(cell.split(";")) if cell else ()
                else:
                    try:
                        vals[name] = None if cell == NA else float(cell)
                    except ValueError as exc:
                        raise RecordFormatError(f"column {name}: {exc}", lineno, row[0]) from exc
            out.append(ScalarLabels(**vals))
    return out


# -- QCIM tensors -------------------------------------------------------------

def write_tensors(tensors, path) -> None:
    tensors = list(tensors)
    with open(path, "wb") as fh:
        fh.write(_QCIM_HEADER.pack(QCIM_MAGIC, QCIM_VERSION, len(tensors),
                                   N_CHANNELS, IMAGE_SIZE, IMAGE_SIZE))
        for t in tensors:
            pid = t.pair_id.encode("utf-8")
            if len(pid) > 0xFFFF:
                raise ValueError(f"pair id too long: {t.pair_id[:40]}...")
            data = np.ascontiguousarray(t.channels, dtype="<f4")
            if data.shape != (N_CHANNELS, IMAGE_SIZE, IMAGE_SIZE):
                raise ValueError(f"{t.pair_id}: tensor shape {data.shape}")
            fh.write(_QCIM_IDLEN.pack(len(pid)))
            fh.write(pid)
            fh.write(data.tobytes(order="C"))


def read_tensors(path) -> list[ImageTensor]:
    buf = Path(path).read_bytes()
    if len(buf) < 4 or buf[:4] != QCIM_MAGIC:
        raise BadMagicError(f"{path}: bad magic {buf[:4]!r}")
    if len(buf) < _QCIM_HEADER.size:
        raise TruncatedError(f"{path}: header truncated")
    _, version, count, *dims = _QCIM_HEADER.unpack_from(buf, 0)
    if version != QCIM_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported QCIM version {version}")
    if tuple(dims) != (N_CHANNELS, IMAGE_SIZE, IMAGE_SIZE):
        raise QcimError(f"{path}: unexpected dims {tuple(dims)}")
    pos = _QCIM_HEADER.size
    out = []
    nbytes = _PAYLOAD * 4
    for k in range(count):
        if pos + _QCIM_IDLEN.size > len(buf):
            raise TruncatedError(f"{path}: record {k} of {count} missing")
        (n,) = _QCIM_IDLEN.unpack_from(buf, pos)
        pos += _QCIM_IDLEN.size
        if pos + n + nbytes > len(buf):
            raise TruncatedError(f"{path}: record {k} of {count} truncated")
        pid = buf[pos:pos + n].decode("utf-8")
        pos += n
        data = np.frombuffer(buf, dtype="<f4", count=_PAYLOAD, offset=pos)
        pos += nbytes
        out.append(ImageTensor(pid, data.reshape(N_CHANNELS, IMAGE_SIZE, IMAGE_SIZE).astype(np.float32)))
    if pos != len(buf):
        raise QcimError(f"{path}: {len(buf) - pos} trailing bytes after {count} records")
    return out


# -- manifest and report ------------------------------------------------------

def write_manifest(meta: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        yaml.safe_dump(meta, fh, sort_keys=False, default_flow_style=False)


def read_manifest(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return yaml.safe_load(fh) or {}


def write_report(doc: dict, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n", encoding="utf-8")


def dumps_records(records) -> str:
    buf = io.StringIO()
    for rec in records:
        buf.write(json.dumps(record_to_dict(rec), allow_nan=False) + "\n")
    return buf.getvalue()
