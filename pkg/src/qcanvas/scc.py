"""Finite-temperature self-consistent-charge tight binding for one diatomic.

Toy model, atomic units throughout:

* H0 / S inter-atomic elements decay as single exponentials and couple only
  orbitals with equal (l, m).
* gamma_AB is the Klopman-Ohno interpolation between U and 1/r.
* E_rep is a Born-Mayer exponential.

Atom A sits at the origin and atom B at (0, 0, r).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import expit, xlogy

from .model import SHELL_L, DiatomicRecord, ElementParams

# Orbitals within this distance of mu_F count as "at" the Fermi level when t_e == 0.
DEGENERACY_TOL = 1e-10
MIN_MIX = 1e-6


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Overlap matrix is not positive definite (bad parameters)."""


@dataclass(frozen=True)
class BasisMap:
    atom: np.ndarray  # 0 for A, 1 for B
    l: np.ndarray
    m: np.ndarray

    @classmethod
    def for_pair(cls, pa: ElementParams, pb: ElementParams) -> "BasisMap":
        atom, ls, ms = [], [], []
        for k, p in enumerate((pa, pb)):
            for shell in p.shells:
                l = SHELL_L[shell]
                for m in range(-l, l + 1):
                    atom.append(k)
                    ls.append(l)
                    ms.append(m)
        return cls(np.array(atom), np.array(ls), np.array(ms))

    @property
    def n_orb(self) -> int:
        return len(self.atom)

    def orbitals(self, atom: int) -> np.ndarray:
        return np.flatnonzero(self.atom == atom)


@dataclass(frozen=True)
class SccOptions:
    mix: float = 0.3
    eps_scc: float = 1e-8
    eps_scf: float = 1e-8
    max_iter: int = 200

    def __post_init__(self):
        if not 0 < self.mix <= 1:
            raise ValueError(f"mixing parameter must lie in (0, 1], got {self.mix}")
        if self.eps_scc <= 0 or self.eps_scf <= 0:
            raise ValueError("SCC/SCF tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass(frozen=True)
class SccState:
    dq_a: float
    dq_b: float
    eigenvalues: np.ndarray = field(repr=False)
    coefficients: np.ndarray = field(repr=False)
    occupations: np.ndarray = field(repr=False)
    fermi_level: float
    iterations: int
    residual: float
    converged: bool
    gross: np.ndarray = field(repr=False)  # Mulliken gross population per orbital
    basis: BasisMap = field(repr=False)
    n_electrons: float = 0.0


@dataclass(frozen=True)
class EnergyLedger:
    e_band: float
    e_coul2: float
    e_rep: float
    e_tot: float
    entropy: float
    mermin_f: float

    @classmethod
    def from_terms(cls, e_band, e_coul2, e_rep, entropy, t_e):
        e_tot = e_band + e_coul2 + e_rep
        return cls(e_band, e_coul2, e_rep, e_tot, entropy, e_tot - t_e * entropy)


@dataclass(frozen=True)
class MullikenResult:
    gross: np.ndarray
    populations_a: tuple[tuple[int, int, float], ...]
    populations_b: tuple[tuple[int, int, float], ...]
    g_a: float
    g_b: float
    q_a: float
    q_b: float


def gamma(u_a: float, u_b: float, r: float) -> float:
    if not (u_a > 0 and u_b > 0 and r >= 0):
        raise ValueError(f"gamma needs u_a > 0, u_b > 0, r >= 0 (got {u_a}, {u_b}, {r})")
    a = 0.5 * (1.0 / u_a + 1.0 / u_b)
    return 1.0 / math.sqrt(r * r + a * a)


def _pair_matrices(pa: ElementParams, pb: ElementParams, r: float):
    """Bare H0 and S for separation r, plus the basis map."""
    basis = BasisMap.for_pair(pa, pb)
    n = basis.n_orb
    onsite = [p.onsite_of(s) for p in (pa, pb) for s in p.shells
              for _ in range(2 * SHELL_L[s] + 1)]
    h0 = np.diag(np.array(onsite, dtype=float))
    s = np.eye(n)

    hop = -math.sqrt(pa.hop_scale * pb.hop_scale) * math.exp(-r / math.sqrt(pa.hop_decay * pb.hop_decay))
    ovl = math.sqrt(pa.overlap_scale * pb.overlap_scale) * math.exp(
        -r / math.sqrt(pa.overlap_decay * pb.overlap_decay))
    ia, ib = basis.orbitals(0), basis.orbitals(1)
    for i in ia:
        for j in ib:
            if basis.l[i] == basis.l[j] and basis.m[i] == basis.m[j]:
                h0[i, j] = h0[j, i] = hop
                s[i, j] = s[j, i] = ovl
    return h0, s, basis


def _gamma_matrix(pa, pb, r):
    g_ab = gamma(pa.hubbard_u, pb.hubbard_u, r)
    return np.array([[pa.hubbard_u, g_ab], [g_ab, pb.hubbard_u]])


def _scc_hamiltonian(h0, s, basis, gmat, dq):
    # dq holds net charges (positive = electron deficient); the shift acts on
    # the electron excess -dq.
    v_atom = gmat @ (-np.asarray(dq, dtype=float))
    v = v_atom[basis.atom]
    return h0 + 0.5 * s * (v[:, None] + v[None, :])


def _check_positive_definite(s):
    try:
        return np.linalg.cholesky(s)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError("overlap matrix is not positive definite") from exc


def build_matrices(pa: ElementParams, pb: ElementParams, r: float, dq=(0.0, 0.0)):
    """SCC-corrected Hamiltonian, overlap and basis map for separation ``r``.

    Raises NotPositiveDefiniteError if the overlap is not positive definite.
    """
    if not r > 0:
        raise ValueError(f"separation must be positive, got {r}")
    h0, s, basis = _pair_matrices(pa, pb, r)
    _check_positive_definite(s)
    h = _scc_hamiltonian(h0, s, basis, _gamma_matrix(pa, pb, r), dq)
    return h, s, basis


def solve_generalized_eig(h, s, _chol=None):
    """Solve H C = S C diag(eps) by Cholesky reduction.

    Returns ascending eigenvalues and S-orthonormal coefficient columns, each
    column signed so that its largest-magnitude component is positive.
    """
    h = np.asarray(h, dtype=float)
    s = np.asarray(s, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1] or h.shape != s.shape:
        raise ValueError(f"H and S must be matching square matrices, got {h.shape} and {s.shape}")
    chol = _check_positive_definite(s) if _chol is None else _chol
    a = solve_triangular(chol, h, lower=True)
    a = solve_triangular(chol, a.T, lower=True)
    a = 0.5 * (a + a.T)
    eps, y = np.linalg.eigh(a)
    c = solve_triangular(chol.T, y, lower=False)
    pivot = np.argmax(np.abs(c), axis=0)
    signs = np.where(c[pivot, np.arange(c.shape[1])] < 0, -1.0, 1.0)
    return eps, c * signs


def fermi_occupations(eigenvalues, mu: float, t_e: float, n_e: float | None = None) -> np.ndarray:
    """Fermi-Dirac occupations in [0, 1].

    At ``t_e == 0`` this is the step function with 0.5 at the Fermi level; when
    ``n_e`` is given, orbitals at the Fermi level instead share the remaining
    electrons equally.
    """
    eps = np.asarray(eigenvalues, dtype=float)
    if t_e < 0:
        raise ValueError(f"electronic temperature must be >= 0, got {t_e}")
    if t_e > 0:
        return expit((mu - eps) / t_e)
    at_mu = np.abs(eps - mu) <= DEGENERACY_TOL * max(1.0, abs(mu))
    f = np.where(eps < mu, 1.0, 0.0)
    f[at_mu] = 0.5
    if n_e is not None and at_mu.any():
        below = np.count_nonzero((eps < mu) & ~at_mu)
        f[at_mu] = (n_e - below) / np.count_nonzero(at_mu)
    return f


def find_fermi_level(eigenvalues, n_e: float, t_e: float, tol: float = 1e-12) -> float:
    """Fermi level conserving ``n_e`` electrons.

    Bisection on the monotone occupation sum for ``t_e > 0``; the step limit
    at ``t_e == 0`` returns the HOMO/LUMO midpoint for integer ``n_e`` and the
    partially filled level otherwise.
    """
    eps = np.sort(np.asarray(eigenvalues, dtype=float))
    n = eps.size
    if not 0 < n_e < n:
        raise ValueError(f"electron count {n_e} outside (0, {n})")
    if t_e < 0:
        raise ValueError(f"electronic temperature must be >= 0, got {t_e}")
    if t_e == 0:
        k = math.ceil(n_e)
        if k == n_e:
            return float(0.5 * (eps[k - 1] + eps[k]))
        return float(eps[k - 1])

    lo = eps[0] - 50.0 * t_e
    hi = eps[-1] + 50.0 * t_e
    best, best_err = 0.5 * (lo + hi), math.inf
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        err = float(expit((mid - eps) / t_e).sum()) - n_e
        if abs(err) < best_err:
            best, best_err = mid, abs(err)
        if abs(err) <= tol:
            break
        if err < 0:
            lo = mid
        else:
            hi = mid
    return float(best)


def electronic_entropy(occupations) -> float:
    f = np.asarray(occupations, dtype=float)
    if f.size and (f.min() < 0 or f.max() > 1):
        raise ValueError("occupations must lie in [0, 1]")
    # + 0.0 turns -0.0 from all-integer occupations into 0.0
    return float(-(xlogy(f, f) + xlogy(1.0 - f, 1.0 - f)).sum()) + 0.0


def mulliken(c, f, s, basis: BasisMap, n_valence) -> MullikenResult:
    """Mulliken gross populations and net atomic charges.

    P = sum_i f_i c_i c_i^T; the gross population of orbital mu is (P S)_{mu mu}
    and q_alpha = n_valence(alpha) - sum_{mu in alpha} (P S)_{mu mu}.
    """
    c = np.asarray(c, dtype=float)
    f = np.asarray(f, dtype=float)
    p = (c * f) @ c.T
    gross = np.einsum("ij,ji->i", p, np.asarray(s, dtype=float))
    pops_a, pops_b = atom_populations(gross, basis)
    g_a = float(gross[basis.orbitals(0)].sum())
    g_b = float(gross[basis.orbitals(1)].sum())
    return MullikenResult(gross, pops_a, pops_b, g_a, g_b, n_valence[0] - g_a, n_valence[1] - g_b)


def symmetrize_homonuclear(mull: MullikenResult, basis: BasisMap, n_valence) -> MullikenResult:
    """Average equivalent orbital populations of two identical atoms.

    Identical atoms are exchanged by the inversion centre, so the exact
    populations are equal; averaging removes round-off that the atom-ordered
    Cholesky reduction would otherwise let accumulate across warm starts.
    """
    ia, ib = basis.orbitals(0), basis.orbitals(1)
    gross = mull.gross.copy()
    avg = 0.5 * (gross[ia] + gross[ib])
    gross[ia] = avg
    gross[ib] = avg
    pops_a, pops_b = atom_populations(gross, basis)
    g = float(avg.sum())
    return MullikenResult(gross, pops_a, pops_b, g, g, n_valence[0] - g, n_valence[1] - g)


def atom_populations(gross, basis: BasisMap):
    """Split per-orbital gross populations into (l, m, n) triples per atom."""
    return tuple(
        tuple((int(basis.l[i]), int(basis.m[i]), float(gross[i])) for i in basis.orbitals(atom))
        for atom in (0, 1)
    )


def repulsive_energy(pa: ElementParams, pb: ElementParams, r: float) -> float:
    if not r > 0:
        raise ValueError(f"separation must be positive, got {r}")
    return math.sqrt(pa.rep_a * pb.rep_a) * math.exp(-0.5 * (pa.rep_b + pb.rep_b) * r)


def scc_solve(pa: ElementParams, pb: ElementParams, r: float, t_e: float,
              charge_total: float = 0.0, opts: SccOptions | None = None,
              dq0=None, callback: Callable | None = None):
    """Self-consistent charges at fixed separation ``r``.

    Linear mixing of net charges until both the charge residual
    max|q_out - q_in| and the total-energy change fall below tolerance.  The
    residual is the unmixed one, so it bounds the mixed-iterate change.  The
    mixing factor starts at ``opts.mix`` and is halved whenever the residual
    changes sign without at least halving (overshoot on a steep charge
    response).  Homonuclear pairs have their populations symmetrised every
    cycle.  Non-convergence is reported on the state, not raised.

    ``callback(iteration, state, ledger)`` is invoked after every cycle.
    """
    opts = opts or SccOptions()
    if not r > 0:
        raise ValueError(f"separation must be positive, got {r}")
    if t_e < 0:
        raise ValueError(f"electronic temperature must be >= 0, got {t_e}")

    h0, s, basis = _pair_matrices(pa, pb, r)
    chol = _check_positive_definite(s)
    gmat = _gamma_matrix(pa, pb, r)
    e_rep = repulsive_energy(pa, pb, r)
    n_val = (pa.n_valence, pb.n_valence)
    n_e = n_val[0] + n_val[1] - charge_total
    homonuclear = pa == pb

    dq = np.array(dq0 if dq0 is not None else (0.5 * charge_total, 0.5 * charge_total), dtype=float)
    e_prev = None
    mix = opts.mix
    r_prev = None
    for it in range(1, opts.max_iter + 1):
        h = _scc_hamiltonian(h0, s, basis, gmat, dq)
        eps, c = solve_generalized_eig(h, s, _chol=chol)
        mu = find_fermi_level(eps, n_e, t_e)
        f = fermi_occupations(eps, mu, t_e, n_e)
        mull = mulliken(c, f, s, basis, n_val)
        if homonuclear:
            mull = symmetrize_homonuclear(mull, basis, n_val)
        q_out = np.array([mull.q_a, mull.q_b])
        residual = float(np.abs(q_out - dq).max())

        e_band = float(np.dot(f, eps))
        e_coul2 = float(0.5 * q_out @ gmat @ q_out)
        ledger = EnergyLedger.from_terms(e_band, e_coul2, e_rep, electronic_entropy(f), t_e)
        converged = (residual < opts.eps_scc and e_prev is not None
                     and abs(ledger.e_tot - e_prev) < opts.eps_scf)
        state = SccState(mull.q_a, mull.q_b, eps, c, f, mu, it, residual, converged,
                         mull.gross, basis, n_e)
        if callback is not None:
            callback(it, state, ledger)
        if converged:
            break
        e_prev = ledger.e_tot
        # Overshoot guard: a sign flip without halving the residual means the
        # step exceeds the local response; halve the mixing factor.
        r_vec = q_out - dq
        if r_prev is not None and r_vec @ r_prev < 0 and residual > 0.5 * np.abs(r_prev).max():
            mix = max(0.5 * mix, MIN_MIX)
        r_prev = r_vec
        dq = (1.0 - mix) * dq + mix * q_out
    return state, ledger


@dataclass(frozen=True)
class RelaxOptions:
    eps_geom: float = 1e-4
    bracket: tuple[float, float] = (0.6, 12.0)
    max_steps: int = 200
    xtol: float = 1e-5

    def __post_init__(self):
        lo, hi = self.bracket
        if not 0 < lo < hi:
            raise ValueError(f"bad bracket {self.bracket}")
        if self.eps_geom <= 0 or self.xtol <= 0:
            raise ValueError("geometry tolerances must be positive")


@dataclass(frozen=True)
class RelaxResult:
    r_eq: float
    state: SccState | None
    ledger: EnergyLedger | None
    status: str  # converged | unbound | scc-unconverged | max-steps
    gradient: float
    evaluations: int

    @property
    def converged(self) -> bool:
        return self.status == "converged"


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def fd_step(r: float) -> float:
    return max(1e-4, 1e-6 * r)


def relax_geometry(pa: ElementParams | None, pb: ElementParams | None, r0: float, t_e: float = 0.0,
                   charge_total: float = 0.0, opts: RelaxOptions | None = None,
                   scc_opts: SccOptions | None = None,
                   energy_fn: Callable[[float], float] | None = None) -> RelaxResult:
    """One-dimensional relaxation of the separation.

    Downhill bracketing from ``r0`` inside ``opts.bracket``, then golden-section
    reduction of E_tot(r).  Terminates once the bracket is narrower than
    ``xtol`` and the central finite-difference gradient satisfies
    |dE/dr| < eps_geom.  ``energy_fn`` replaces the SCC engine (test seam).
    """
    opts = opts or RelaxOptions()
    lo_edge, hi_edge = opts.bracket
    if not r0 > 0:
        raise ValueError(f"r0 must be positive, got {r0}")

    cache: dict[float, tuple] = {}
    scc_failed = False
    last_dq = [None]

    def evaluate(r):
        nonlocal scc_failed
        if r in cache:
            return cache[r][0]
        if energy_fn is not None:
            cache[r] = (float(energy_fn(r)), None, None)
        else:
            state, ledger = scc_solve(pa, pb, r, t_e, charge_total, scc_opts, dq0=last_dq[0])
            if state.converged:
                last_dq[0] = (state.dq_a, state.dq_b)
            else:
                scc_failed = True
            cache[r] = (ledger.e_tot, state, ledger)
        return cache[r][0]

    def gradient(r):
        h = fd_step(r)
        return (evaluate(r + h) - evaluate(r - h)) / (2.0 * h)

    def finish(r, status):
        g = gradient(r) if lo_edge < r < hi_edge else math.nan
        if status == "converged" and scc_failed:
            status = "scc-unconverged"
        evaluate(r)
        _, state, ledger = cache[r]
        return RelaxResult(r, state, ledger, status, g, len(cache))

    # Keep finite-difference probes inside the bracket.
    lo = lo_edge + fd_step(lo_edge)
    hi = hi_edge - fd_step(hi_edge)
    x0 = min(max(r0, lo), hi)
    step = 0.05 * max(x0, 1.0)
    x1 = min(x0 + step, hi)
    if x1 == x0:
        x1 = x0 - step
    f0, f1 = evaluate(x0), evaluate(x1)
    if f1 > f0:
        x0, x1, f0, f1 = x1, x0, f1, f0
        step = -step
    # Walk downhill from x0 through x1 until the energy rises.
    a, b = x0, x1
    fb = f1
    while True:
        step *= 1.618
        c = min(max(b + step, lo), hi)
        if c == b:
            return finish(b, "unbound")
        fc = evaluate(c)
        if fc > fb:
            break
        a, b, fb = b, c, fc
    left, right = (a, c) if a < c else (c, a)

    # Golden-section reduction on [left, right].
    x_lo = right - _GOLDEN * (right - left)
    x_hi = left + _GOLDEN * (right - left)
    f_lo, f_hi = evaluate(x_lo), evaluate(x_hi)
    for _ in range(opts.max_steps):
        if f_lo <= f_hi:
            right, x_hi, f_hi = x_hi, x_lo, f_lo
            x_lo = right - _GOLDEN * (right - left)
            f_lo = evaluate(x_lo)
        else:
            left, x_lo, f_lo = x_lo, x_hi, f_hi
            x_hi = left + _GOLDEN * (right - left)
            f_hi = evaluate(x_hi)
        best = x_lo if f_lo <= f_hi else x_hi
        if right - left < opts.xtol and abs(gradient(best)) < opts.eps_geom:
            return finish(best, "converged")
    return finish(x_lo if f_lo <= f_hi else x_hi, "max-steps")


def simulate_pair(pa: ElementParams, pb: ElementParams, t_e: float, charge_total: float = 0.0,
                  r0: float = 3.0, relax_opts: RelaxOptions | None = None,
                  scc_opts: SccOptions | None = None) -> DiatomicRecord:
    """Relax one pair and package the result as a DiatomicRecord."""
    res = relax_geometry(pa, pb, r0, t_e, charge_total, relax_opts, scc_opts)
    st, led = res.state, res.ledger
    r = res.r_eq
    pops_a, pops_b = atom_populations(st.gross, st.basis)
    converged = res.converged and st.converged
    status = res.status if res.status != "converged" or st.converged else "scc-unconverged"
    return DiatomicRecord(
        pair_id=f"{pa.symbol}-{pb.symbol}",
        elem_a=pa.symbol,
        elem_b=pb.symbol,
        r_eq=r,
        charge_total=charge_total,
        n_electrons=st.n_electrons,
        t_e=t_e,
        eigenvalues=tuple(float(e) for e in st.eigenvalues),
        occupations=tuple(float(x) for x in st.occupations),
        fermi_level=st.fermi_level,
        populations_a=pops_a,
        populations_b=pops_b,
        gross_charge_a=st.dq_a,
        gross_charge_b=st.dq_b,
        dipole=(0.0, 0.0, st.dq_b * r),
        e_band=led.e_band,
        e_rep=led.e_rep,
        e_coul2=led.e_coul2,
        e_tot=led.e_tot,
        mermin_f=led.mermin_f,
        entropy=led.entropy,
        scc_iterations=st.iterations,
        scc_residual=st.residual,
        converged=converged,
        status=status,
    )
