"""Scalar labels of a converged record: frontier levels, conceptual-DFT
descriptors, point-charge dipole and charge statistics.

Undefined values are ``None``.  Two reasons exist and are recorded in the
label row's ``flags``:

* ``no-virtual``: every orbital is filled, so there is no LUMO.
* ``undefined-metallic``: |eta| <= ETA_FLOOR, softness and electrophilicity
  are not emitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import (
    DiatomicRecord,
    ScalarLabels,
    bohr_to_angstrom,
    ebohr_to_debye,
    hartree_to_ev,
)

ETA_FLOOR = 1e-6  # eV
IP_EA_METHOD = "koopmans"
NO_VIRTUAL = "no-virtual"
UNDEFINED_METALLIC = "undefined-metallic"


@dataclass(frozen=True)
class Frontier:
    e_homo: float
    e_lumo: float | None
    e_g: float | None

    @property
    def no_virtual(self) -> bool:
        return self.e_lumo is None


@dataclass(frozen=True)
class Descriptors:
    chi: float
    eta: float
    softness: float | None
    mu_chem: float
    omega: float | None

    @property
    def metallic(self) -> bool:
        return self.softness is None


def derive_frontier(eigenvalues, n_e: float) -> Frontier:
    """HOMO at 1-based index ceil(n_e) under aufbau filling, LUMO the next level."""
    eps = [float(e) for e in eigenvalues]
    k = math.ceil(n_e)
    if not 1 <= k <= len(eps):
        raise ValueError(f"electron count {n_e} incompatible with {len(eps)} levels")
    if any(b < a for a, b in zip(eps, eps[1:])):
        raise ValueError("eigenvalues must be ascending")
    homo = eps[k - 1]
    if k == len(eps):
        return Frontier(homo, None, None)
    lumo = eps[k]
    return Frontier(homo, lumo, lumo - homo)


def koopmans_ip_ea(e_homo: float, e_lumo: float | None):
    return -e_homo, (None if e_lumo is None else -e_lumo)


def conceptual_dft(ip: float, ea: float, eta_floor: float = ETA_FLOOR) -> Descriptors:
    chi = (ip + ea) / 2
    eta = (ip - ea) / 2
    mu_chem = -chi
    if abs(eta) > eta_floor:
        return Descriptors(chi, eta, 1 / eta, mu_chem, mu_chem**2 / (2 * eta))
    return Descriptors(chi, eta, None, mu_chem, None)


def point_charge_dipole(q_a: float, q_b: float, pos_a, pos_b):
    """Dipole sum_alpha q_alpha R_alpha of two point charges, positions in bohr, result in Debye."""
    if tuple(pos_a) == tuple(pos_b):
        raise ValueError("atomic positions must be distinct")
    mu = [ebohr_to_debye(q_a * a + q_b * b) for a, b in zip(pos_a, pos_b)]
    norm = math.sqrt(mu[0] ** 2 + mu[1] ** 2 + mu[2] ** 2)
    return mu[0], mu[1], mu[2], norm


def charge_statistics(q_a: float, q_b: float):
    q_bar = 0.5 * (q_a + q_b)
    q_maxabs = max(abs(q_a), abs(q_b))
    q_absmean = 0.5 * (abs(q_a) + abs(q_b))
    q_std = math.sqrt(0.5 * ((q_a - q_bar) ** 2 + (q_b - q_bar) ** 2))
    return q_maxabs, q_absmean, q_std


def assemble_labels(rec: DiatomicRecord, eta_floor: float = ETA_FLOOR) -> ScalarLabels:
    if not rec.converged:
        raise ValueError(f"{rec.pair_id}: cannot label an unconverged record ({rec.status})")
    flags = []
    front = derive_frontier([hartree_to_ev(e) for e in rec.eigenvalues], rec.n_electrons)
    ip, ea = koopmans_ip_ea(front.e_homo, front.e_lumo)
    if front.no_virtual:
        flags.append(NO_VIRTUAL)
        desc = Descriptors(None, None, None, None, None)
    else:
        desc = conceptual_dft(ip, ea, eta_floor)
        if desc.metallic:
            flags.append(UNDEFINED_METALLIC)
    mu_x, mu_y, mu_z, mu_norm = point_charge_dipole(
        rec.gross_charge_a, rec.gross_charge_b, (0.0, 0.0, 0.0), (0.0, 0.0, rec.r_eq))
    q_maxabs, q_absmean, q_std = charge_statistics(rec.gross_charge_a, rec.gross_charge_b)
    return ScalarLabels(
        pair_id=rec.pair_id,
        elem_a=rec.elem_a,
        elem_b=rec.elem_b,
        e_g=front.e_g,
        e_homo=front.e_homo,
        e_lumo=front.e_lumo,
        e_fermi=hartree_to_ev(rec.fermi_level),
        e_band=hartree_to_ev(rec.e_band),
        e_rep=hartree_to_ev(rec.e_rep),
        e_tot=hartree_to_ev(rec.e_tot),
        mermin_f=hartree_to_ev(rec.mermin_f),
        ip=ip,
        ea=ea,
        chi=desc.chi,
        eta=desc.eta,
        softness=desc.softness,
        mu_chem=desc.mu_chem,
        omega=desc.omega,
        mu_x=mu_x,
        mu_y=mu_y,
        mu_z=mu_z,
        mu_norm=mu_norm,
        bond_r=bohr_to_angstrom(rec.r_eq),
        q_maxabs=q_maxabs,
        q_absmean=q_absmean,
        q_std=q_std,
        flags=tuple(flags),
    )
