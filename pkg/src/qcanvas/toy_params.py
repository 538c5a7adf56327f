"""Periodic-table reference data and the toy parameter generator.

The generator is a stand-in for a real Slater-Koster parameter set: every
parameter is a smooth function of Pauling electronegativity and covalent
radius, tuned only so that typical dimers have a bound minimum.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .model import BOHR_TO_ANGSTROM, ElementParams

GROUPS = (
    "alkali", "alkaline_earth", "transition", "post_transition", "metalloid",
    "nonmetal", "halogen", "noble_gas", "lanthanide",
)

DEFAULT_TOY_SYMBOLS = ("Li", "B", "C", "N", "O", "F", "Na", "Si", "S", "Cl")


@dataclass(frozen=True)
class ElementData:
    z: int
    symbol: str
    group: str
    electronegativity: float
    covalent_radius: float  # Angstrom


@lru_cache(maxsize=None)
def load_elements() -> dict[str, ElementData]:
    text = resources.files("qcanvas.data").joinpath("elements.csv").read_text(encoding="utf-8")
    out = {}
    for row in csv.DictReader(io.StringIO(text)):
        out[row["symbol"]] = ElementData(int(row["z"]), row["symbol"], row["group"],
                                         float(row["electronegativity"]),
                                         float(row["covalent_radius"]))
    return out


def builtin_groups() -> dict[str, str]:
    return {sym: e.group for sym, e in load_elements().items()}


def periodic_column(z: int) -> int:
    """IUPAC group 1-18; lanthanides are reported as 3."""
    if z == 1:
        return 1
    if z == 2:
        return 18
    for start, stop in ((3, 10), (11, 18)):
        if start <= z <= stop:
            k = z - start + 1
            return k if k <= 2 else k + 10
    for start in (19, 37):
        if start <= z < start + 18:
            return z - start + 1
    if 55 <= z <= 56:
        return z - 54
    if 57 <= z <= 71:
        return 3
    if 72 <= z <= 86:
        return z - 68
    raise ValueError(f"no periodic data for z = {z}")


def valence_electrons(z: int) -> int:
    if z == 2:
        return 2
    col = periodic_column(z)
    return col - 10 if col >= 13 else col


def toy_element(symbol: str) -> ElementParams:
    """Deterministic toy parameters for one element (atomic units).

    ``n_valence`` is half the chemical valence count: with occupations capped
    at 1 per orbital this reproduces closed-shell filling (H2 fills its
    bonding orbital).
    """
    data = load_elements()
    if symbol not in data:
        raise KeyError(f"no reference data for element {symbol!r}")
    e = data[symbol]
    col = periodic_column(e.z)
    en = e.electronegativity
    top = -(0.10 + 0.08 * en)
    if e.group in ("transition", "lanthanide"):
        shells = ("s", "p", "d")
        onsite = (top, top + 0.10, top - 0.03)
    elif col >= 13:
        shells = ("s", "p", "d")
        onsite = (top - (0.15 + 0.05 * en), top, 0.05)
    else:
        shells = ("s", "p")
        onsite = (top, top + 0.08)

    decay = 0.5 * e.covalent_radius / BOHR_TO_ANGSTROM + 0.5
    overlap_scale = 0.4
    deepest = max(-x for x in onsite)
    hop_scale = 2.0 * overlap_scale * deepest
    r_target = 1.9 * e.covalent_radius / BOHR_TO_ANGSTROM + 0.3
    return ElementParams(
        symbol=symbol,
        z=e.z,
        shells=shells,
        onsite=tuple(round(x, 6) for x in onsite),
        hubbard_u=round(0.15 + 0.08 * en, 6),
        n_valence=valence_electrons(e.z) / 2,
        hop_scale=round(hop_scale, 6),
        hop_decay=round(decay, 6),
        overlap_scale=overlap_scale,
        overlap_decay=round(decay, 6),
        rep_a=round(0.5 * hop_scale * math.exp(r_target / decay), 6),
        rep_b=round(2.0 / decay, 6),
    )


def toy_table(symbols=DEFAULT_TOY_SYMBOLS) -> dict[str, ElementParams]:
    return {s: toy_element(s) for s in symbols}
