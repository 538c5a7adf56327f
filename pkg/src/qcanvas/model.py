"""Shared data model, unit conventions and record validation.

Everything inside the engine is carried in atomic units (Hartree, bohr,
elementary charge).  Conversion to eV / Angstrom / Debye happens once, when
labels are assembled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

HARTREE_TO_EV = 27.2114
BOHR_TO_ANGSTROM = 0.529177
EBOHR_TO_DEBYE = 2.541746

SHELL_L = {"s": 0, "p": 1, "d": 2}

# Tolerances of the DiatomicRecord invariants.
OCCUPATION_SUM_TOL = 1e-8
CHARGE_BALANCE_TOL = 1e-8
POPULATION_NOISE_TOL = 1e-10

CHANNEL_MAP = {
    0: "OMAP_A",
    1: "OMAP_B",
    2: "GAF_A",
    3: "GAF_B",
    4: "MTF_A",
    5: "MTF_B",
    6: "COM",
    7: "COM_NORM",
    8: "Q_DIAG",
    9: "Q_ABSDIFF",
}
N_CHANNELS = 10
IMAGE_SIZE = 32


def hartree_to_ev(x):
    return x * HARTREE_TO_EV


def bohr_to_angstrom(x):
    return x * BOHR_TO_ANGSTROM


def ebohr_to_debye(x):
    return x * EBOHR_TO_DEBYE


class ParamsError(ValueError):
    """Raised when an element parameter set violates its invariants."""


@dataclass(frozen=True)
class ElementParams:
    """Toy tight-binding parameters of one element (atomic units).

    ``onsite`` is aligned with ``shells``; ``n_valence`` counts electrons in
    the spin-orbital convention (each orbital holds at most one).
    """

    symbol: str
    z: int
    shells: tuple[str, ...]
    onsite: tuple[float, ...]
    hubbard_u: float
    n_valence: float
    hop_scale: float
    hop_decay: float
    overlap_scale: float
    overlap_decay: float
    rep_a: float
    rep_b: float

    def __post_init__(self):
        object.__setattr__(self, "shells", tuple(self.shells))
        object.__setattr__(self, "onsite", tuple(float(e) for e in self.onsite))
        problems = self.violations()
        if problems:
            raise ParamsError(f"element {self.symbol!r}: " + "; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if not isinstance(self.z, int) or self.z < 1:
            out.append(f"z must be an integer >= 1 (got {self.z!r})")
        if not self.shells:
            out.append("shells must be non-empty")
        elif any(s not in SHELL_L for s in self.shells):
            out.append(f"unknown shell in {self.shells!r}")
        elif [SHELL_L[s] for s in self.shells] != sorted({SHELL_L[s] for s in self.shells}):
            out.append(f"shells must be unique and ordered s, p, d (got {self.shells!r})")
        if len(self.onsite) != len(self.shells):
            out.append("onsite must give one energy per shell")
        numbers = (self.hubbard_u, self.n_valence, self.hop_scale, self.hop_decay,
                   self.overlap_scale, self.overlap_decay, self.rep_a, self.rep_b, *self.onsite)
        if not all(math.isfinite(x) for x in numbers):
            out.append("all parameters must be finite")
            return out
        if self.hubbard_u <= 0:
            out.append(f"hubbard_u must be > 0 (got {self.hubbard_u})")
        if self.hop_decay <= 0:
            out.append(f"hop_decay must be > 0 (got {self.hop_decay})")
        if self.overlap_decay <= 0:
            out.append(f"overlap_decay must be > 0 (got {self.overlap_decay})")
        if not 0 <= self.overlap_scale < 1:
            out.append(f"overlap_scale must lie in [0, 1) (got {self.overlap_scale})")
        if self.n_valence < 0:
            out.append(f"n_valence must be >= 0 (got {self.n_valence})")
        elif self.shells and self.n_valence > 2 * self.n_orbitals:
            out.append(f"n_valence {self.n_valence} exceeds capacity of shells {self.shells!r}")
        return out

    @property
    def n_orbitals(self) -> int:
        return sum(2 * SHELL_L[s] + 1 for s in self.shells if s in SHELL_L)

    def onsite_of(self, shell: str) -> float:
        return self.onsite[self.shells.index(shell)]


@dataclass(frozen=True)
class DiatomicRecord:
    """One converged two-atom system.

    Units are atomic: energies and eigenvalues in Hartree, ``r_eq`` in bohr,
    ``dipole`` in e*bohr, ``t_e`` in Hartree.  Populations are
    ``(l, m, n)`` triples per atom.
    """

    pair_id: str
    elem_a: str
    elem_b: str
    r_eq: float
    charge_total: float
    n_electrons: float
    t_e: float
    eigenvalues: tuple[float, ...]
    occupations: tuple[float, ...]
    fermi_level: float
    populations_a: tuple[tuple[int, int, float], ...]
    populations_b: tuple[tuple[int, int, float], ...]
    gross_charge_a: float
    gross_charge_b: float
    dipole: tuple[float, float, float]
    e_band: float
    e_rep: float
    e_coul2: float
    e_tot: float
    mermin_f: float
    entropy: float
    scc_iterations: int
    scc_residual: float
    converged: bool
    status: str = "converged"


@dataclass(frozen=True)
class ScalarLabels:
    """Label row of one pair in output units (eV, Debye, Angstrom, e).

    ``None`` marks an undefined value; ``flags`` names why
    (``"no-virtual"`` or ``"undefined-metallic"``).
    """

    pair_id: str
    elem_a: str
    elem_b: str
    e_g: float | None
    e_homo: float
    e_lumo: float | None
    e_fermi: float
    e_band: float
    e_rep: float
    e_tot: float
    mermin_f: float
    ip: float
    ea: float | None
    chi: float | None
    eta: float | None
    softness: float | None
    mu_chem: float | None
    omega: float | None
    mu_x: float
    mu_y: float
    mu_z: float
    mu_norm: float
    bond_r: float
    q_maxabs: float
    q_absmean: float
    q_std: float
    flags: tuple[str, ...] = ()


LABEL_TARGETS = tuple(
    name for name in ScalarLabels.__dataclass_fields__
    if name not in ("pair_id", "elem_a", "elem_b", "flags")
)


@dataclass(frozen=True)
class ImageTensor:
    pair_id: str
    channels: np.ndarray = field(repr=False)

    def __post_init__(self):
        shape = (N_CHANNELS, IMAGE_SIZE, IMAGE_SIZE)
        if np.shape(self.channels) != shape:
            raise ValueError(f"{self.pair_id}: tensor shape {np.shape(self.channels)} != {shape}")


@dataclass(frozen=True)
class Violation:
    field: str
    message: str
    magnitude: float

    def __str__(self):
        return f"{self.field}: {self.message} (magnitude {self.magnitude:.3g})"


def validate_record(rec: DiatomicRecord) -> list[Violation]:
    """Return every violated DiatomicRecord invariant; an empty list means ok."""
    out = []
    eps = np.asarray(rec.eigenvalues, dtype=float)
    occ = np.asarray(rec.occupations, dtype=float)
    pops = [p[2] for p in rec.populations_a] + [p[2] for p in rec.populations_b]

    scalars = {
        "r_eq": rec.r_eq, "fermi_level": rec.fermi_level, "gross_charge_a": rec.gross_charge_a,
        "gross_charge_b": rec.gross_charge_b, "e_band": rec.e_band, "e_rep": rec.e_rep,
        "e_coul2": rec.e_coul2, "e_tot": rec.e_tot, "mermin_f": rec.mermin_f,
        "entropy": rec.entropy, "t_e": rec.t_e,
    }
    for name, value in scalars.items():
        if not math.isfinite(value):
            out.append(Violation(name, "non-finite value", math.inf))
    if not (np.all(np.isfinite(eps)) and np.all(np.isfinite(occ)) and all(map(math.isfinite, pops))):
        out.append(Violation("eigenvalues/occupations/populations", "non-finite value", math.inf))
        return out

    if eps.size > 1 and np.any(np.diff(eps) < 0):
        out.append(Violation("eigenvalues", "eigenvalues unsorted", float(-np.diff(eps).max())))
    if occ.size != eps.size:
        out.append(Violation("occupations", "occupation count differs from eigenvalue count",
                             float(abs(occ.size - eps.size))))
    if occ.size:
        excess = max(float(-occ.min()), float(occ.max() - 1.0))
        if excess > 0:
            out.append(Violation("occupations", "occupation outside [0, 1]", excess))
    dn = abs(float(occ.sum()) - rec.n_electrons)
    if dn > OCCUPATION_SUM_TOL:
        out.append(Violation("occupations", "occupation sum", dn))
    if rec.entropy < 0:
        out.append(Violation("entropy", "entropy negative", -rec.entropy))
    dq = abs(rec.gross_charge_a + rec.gross_charge_b - rec.charge_total)
    if dq > CHARGE_BALANCE_TOL:
        out.append(Violation("gross_charge", "charge balance", dq))
    if pops and min(pops) < -POPULATION_NOISE_TOL:
        out.append(Violation("populations", "negative orbital population", -min(pops)))
    if rec.e_tot != rec.e_band + rec.e_coul2 + rec.e_rep:
        out.append(Violation("e_tot", "energy ledger: e_tot != e_band + e_coul2 + e_rep",
                             abs(rec.e_tot - (rec.e_band + rec.e_coul2 + rec.e_rep))))
    if rec.mermin_f != rec.e_tot - rec.t_e * rec.entropy:
        out.append(Violation("mermin_f", "energy ledger: mermin_f != e_tot - t_e * entropy",
                             abs(rec.mermin_f - (rec.e_tot - rec.t_e * rec.entropy))))
    return out
