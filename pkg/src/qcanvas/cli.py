"""Command-line pipeline: params -> simulate -> label -> encode -> stats, plus validate.

Exit codes
    0  success
    1  usage error (bad flags, unknown element, unreadable input)
    2  data or validation failure
    3  partial convergence (records written, some pairs flagged)
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import record_io as rio
from .images import UPSAMPLING, encode_tensor
from .labels import ETA_FLOOR, IP_EA_METHOD, assemble_labels
from .model import CHANNEL_MAP, ParamsError, validate_record
from .scc import RelaxOptions, SccOptions, simulate_pair
from .stats import build_report
from .toy_params import DEFAULT_TOY_SYMBOLS, builtin_groups, toy_table

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PARTIAL = 3

GAP_CHECK_TOL = 1e-9  # eV, relative to max(1, |gap|)

log = logging.getLogger("qcanvas")


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- pair enumeration ---------------------------------------------------------

def enumerate_pairs(symbols) -> list[tuple[str, str]]:
    """Unordered pairs with repetition, A before B in table order: n(n+1)/2."""
    symbols = list(symbols)
    return [(a, b) for i, a in enumerate(symbols) for b in symbols[i:]]


def parse_pair_list(source: str, symbols) -> list[tuple[str, str]]:
    """``all``, an inline ``A-B,C-D`` list, or a file with one ``A-B`` per line."""
    if source == "all":
        return enumerate_pairs(symbols)
    path = Path(source)
    if path.is_file():
        items = [ln.split("#", 1)[0].strip() for ln in path.read_text(encoding="utf-8").splitlines()]
    else:
        items = [s.strip() for s in source.replace(",", " ").split()]
    known = set(symbols)
    pairs = []
    for item in items:
        if not item:
            continue
        parts = item.split("-")
        if len(parts) != 2 or not all(parts):
            raise UsageError(f"malformed pair {item!r}; expected A-B")
        for sym in parts:
            if sym not in known:
                raise UsageError(f"unknown element {sym!r} in pair {item!r}")
        pairs.append((parts[0], parts[1]))
    if not pairs:
        raise UsageError("no pairs requested")
    return pairs


# -- simulate -------------------------------------------------------------------

@dataclass(frozen=True)
class _Job:
    pa: object
    pb: object
    t_e: float
    charge_total: float
    r0: float
    relax: RelaxOptions
    scc: SccOptions


def _run_job(job: _Job):
    return simulate_pair(job.pa, job.pb, job.t_e, job.charge_total, job.r0, job.relax, job.scc)


def _default_threads() -> int:
    raw = os.environ.get("QCANVAS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"QCANVAS_THREADS must be an integer, got {raw!r}") from None
    return n


def run_pairs(jobs, threads: int):
    if threads <= 1 or len(jobs) <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(threads, len(jobs))) as pool:
        # map() yields in submission order, so the output never depends on scheduling.
        return list(pool.map(_run_job, jobs))


def _digest_or_none(path):
    return rio.sha256_file(path) if path and Path(path).is_file() else None


def build_manifest(args, records, params_path) -> dict:
    return {
        "tool": "qcanvas",
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "params_file": str(params_path),
        "params_sha256": rio.sha256_file(params_path),
        "records_sha256": _digest_or_none(args.out),
        "n_records": len(records),
        "units": {"records": "atomic (hartree, bohr, e, e*bohr)", "labels": "eV, angstrom, debye"},
        "t_e": args.te,
        "charge_total": args.charge_total,
        "tolerances": {
            "mix": args.mix,
            "eps_scc": args.scc_tol,
            "eps_scf": args.scf_tol,
            "eps_geom": args.geom_tol,
            "max_scc_iter": args.max_iter,
            "eta_floor_ev": ETA_FLOOR,
        },
        "ip_ea_method": IP_EA_METHOD,
        "upsampling": dict(UPSAMPLING),
        "channel_map": {int(k): v for k, v in CHANNEL_MAP.items()},
        "unconverged": [{"pair_id": r.pair_id, "status": r.status} for r in records if not r.converged],
    }


def cmd_simulate(args) -> int:
    table = _load_table(args.params)
    pairs = parse_pair_list(args.pairs, list(table))
    if args.list_pairs:
        for a, b in pairs:
            print(f"{a}-{b}")
        return EXIT_OK
    threads = args.threads if args.threads is not None else _default_threads()
    if threads < 1:
        raise UsageError("--threads must be >= 1")
    try:
        scc = SccOptions(mix=args.mix, eps_scc=args.scc_tol, eps_scf=args.scf_tol, max_iter=args.max_iter)
        relax = RelaxOptions(eps_geom=args.geom_tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if not (math.isfinite(args.te) and args.te >= 0):
        raise UsageError("--te must be a finite, non-negative temperature in hartree")
    jobs = [_Job(table[a], table[b], args.te, args.charge_total, args.r0, relax, scc) for a, b in pairs]
    log.info("simulating %d pair(s) on %d worker(s)", len(jobs), threads)
    records = run_pairs(jobs, threads)
    rio.write_records(records, args.out)
    manifest_path = args.manifest or str(Path(args.out).with_suffix(".manifest.yaml"))
    rio.write_manifest(build_manifest(args, records, args.params), manifest_path)
    bad = [r for r in records if not r.converged]
    for r in bad:
        log.warning("%s: %s", r.pair_id, r.status)
    return EXIT_PARTIAL if bad else EXIT_OK


# -- label / encode ---------------------------------------------------------

def _read_records(path):
    try:
        return rio.read_records(path)
    except OSError as exc:
        raise UsageError(f"cannot read records: {exc}") from exc
    except rio.RecordFormatError as exc:
        raise DataError(f"{path}: {exc}") from exc


def cmd_label(args) -> int:
    records = _read_records(args.records)
    bad = [r for r in records if not r.converged]
    if bad and not args.skip_unconverged:
        raise DataError(f"{len(bad)} unconverged record(s) ({', '.join(r.pair_id for r in bad)}); "
                        "use --skip-unconverged to drop them")
    for r in bad:
        log.warning("skipping unconverged pair %s (%s)", r.pair_id, r.status)
    labels = [assemble_labels(r) for r in records if r.converged]
    rio.write_labels(labels, args.out)
    return EXIT_OK


def cmd_encode(args) -> int:
    records = _read_records(args.records)
    rio.write_tensors([encode_tensor(r) for r in records], args.out)
    return EXIT_OK


# -- stats --------------------------------------------------------------------

def _load_groups(source):
    if source is None:
        return None
    if source == "builtin":
        return builtin_groups()
    path = Path(source)
    if not path.is_file():
        raise UsageError(f"groups file not found: {source}")
    groups = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.replace("\t", ",").split(",")]
        if len(parts) != 2 or not all(parts):
            raise UsageError(f"{source}: line {lineno}: expected 'symbol,group'")
        groups[parts[0]] = parts[1]
    return groups


def cmd_stats(args) -> int:
    try:
        labels = rio.read_labels(args.labels)
    except OSError as exc:
        raise UsageError(f"cannot read labels: {exc}") from exc
    tensors = None
    if args.tensors:
        try:
            tensors = rio.read_tensors(args.tensors)
        except OSError as exc:
            raise UsageError(f"cannot read tensors: {exc}") from exc
    try:
        report = build_report(labels, tensors, _load_groups(args.groups), CHANNEL_MAP)
    except KeyError as exc:
        raise DataError(str(exc)) from exc
    rio.write_report(report.to_dict(), args.out)
    return EXIT_OK


# -- validate -----------------------------------------------------------------

def validation_problems(records, labels=None, tensors=None) -> list[str]:
    problems = []
    for rec in records:
        for v in validate_record(rec):
            problems.append(f"{rec.pair_id}: {v}")
    if labels is not None:
        for row in labels:
            if row.e_g is None:
                continue
            if row.e_lumo is None or row.e_homo is None:
                problems.append(f"{row.pair_id}: gap present without both frontier levels")
                continue
            expect = row.e_lumo - row.e_homo
            if abs(row.e_g - expect) > GAP_CHECK_TOL * max(1.0, abs(expect)):
                problems.append(f"{row.pair_id}: gap {row.e_g!r} != LUMO - HOMO {expect!r}")
        rec_ids = {r.pair_id for r in records}
        for row in labels:
            if row.pair_id not in rec_ids:
                problems.append(f"{row.pair_id}: label row without a record")
    if tensors is not None:
        if len(tensors) != len(records):
            problems.append(f"tensor count {len(tensors)} != record count {len(records)}")
        for rec, t in zip(records, tensors):
            if rec.pair_id != t.pair_id:
                problems.append(f"tensor order mismatch: {t.pair_id} where {rec.pair_id} expected")
                break
        for t in tensors:
            if not np.all(np.isfinite(t.channels)):
                problems.append(f"{t.pair_id}: non-finite tensor values")
    return problems


def cmd_validate(args) -> int:
    records = _read_records(args.records)
    labels = tensors = None
    try:
        if args.labels:
            labels = rio.read_labels(args.labels)
        if args.tensors:
            tensors = rio.read_tensors(args.tensors)
    except OSError as exc:
        raise UsageError(str(exc)) from exc
    except (rio.RecordFormatError, rio.QcimError) as exc:
        raise DataError(str(exc)) from exc
    problems = validation_problems(records, labels, tensors)
    for p in problems:
        print(p, file=sys.stderr)
    if problems:
        return EXIT_DATA
    print(f"ok: {len(records)} record(s)")
    return EXIT_OK


# -- params -------------------------------------------------------------------

def cmd_params(args) -> int:
    symbols = args.symbols.replace(",", " ").split() if args.symbols else list(DEFAULT_TOY_SYMBOLS)
    try:
        table = toy_table(symbols)
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from exc
    rio.save_params(table, args.out)
    return EXIT_OK


def _load_table(path):
    try:
        return rio.load_params(path)
    except OSError as exc:
        raise UsageError(f"cannot read parameter file: {exc}") from exc
    except ParamsError as exc:
        raise UsageError(str(exc)) from exc


# -- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="qcanvas", description="Toy SCC tight-binding dimer dataset pipeline.")
    p.add_argument("--version", action="version", version=f"qcanvas {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="relax element pairs and write records")
    s.add_argument("--params", required=True)
    s.add_argument("--pairs", default="all", help="'all', inline 'A-B,C-D', or a file with one A-B per line")
    s.add_argument("--te", type=float, default=0.0, help="electronic temperature (hartree)")
    s.add_argument("--out", required=True)
    s.add_argument("--manifest", help="manifest path (default: <out>.manifest.yaml)")
    s.add_argument("--charge-total", type=float, default=0.0)
    s.add_argument("--scc-tol", type=float, default=SccOptions.eps_scc)
    s.add_argument("--scf-tol", type=float, default=SccOptions.eps_scf)
    s.add_argument("--geom-tol", type=float, default=RelaxOptions.eps_geom)
    s.add_argument("--mix", type=float, default=SccOptions.mix)
    s.add_argument("--max-iter", type=int, default=SccOptions.max_iter)
    s.add_argument("--r0", type=float, default=3.0, help="starting bond length (bohr)")
    s.add_argument("--threads", type=int, default=None, help="worker processes (default: $QCANVAS_THREADS or 1)")
    s.add_argument("--list-pairs", action="store_true", help="print the enumerated pairs and exit")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("label", help="derive scalar labels from records")
    s.add_argument("--records", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--skip-unconverged", action="store_true")
    s.set_defaults(func=cmd_label)

    s = sub.add_parser("encode", help="encode records as 10x32x32 tensors")
    s.add_argument("--records", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_encode)

    s = sub.add_parser("stats", help="dataset statistics report")
    s.add_argument("--labels", required=True)
    s.add_argument("--tensors")
    s.add_argument("--groups", help="'builtin' or a CSV file of symbol,group")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("validate", help="check record/label/tensor consistency")
    s.add_argument("--records", required=True)
    s.add_argument("--labels")
    s.add_argument("--tensors")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("params", help="write a toy parameter table")
    s.add_argument("--symbols", help="element symbols (default: the built-in 10-element set)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_params)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"qcanvas: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"qcanvas: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
