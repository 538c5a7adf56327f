import math

import mpmath
import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from conftest import s_element
from qcanvas.scc import (
    BasisMap,
    NotPositiveDefiniteError,
    RelaxOptions,
    SccOptions,
    build_matrices,
    electronic_entropy,
    fermi_occupations,
    find_fermi_level,
    gamma,
    mulliken,
    relax_geometry,
    repulsive_energy,
    scc_solve,
    simulate_pair,
    solve_generalized_eig,
)


# -- gamma ------------------------------------------------------------------

def test_gamma_onsite_limit():
    assert gamma(0.4, 0.4, 0.0) == pytest.approx(0.4, rel=1e-15)


def test_gamma_worked_value():
    oracle = float(1 / mpmath.sqrt(13))
    assert gamma(0.5, 0.5, 3.0) == pytest.approx(oracle, abs=1e-15)
    assert round(gamma(0.5, 0.5, 3.0), 6) == 0.277350


def test_gamma_coulomb_tail():
    assert gamma(0.4, 0.4, 1000.0) == pytest.approx(1e-3, rel=1e-5)


@given(st.floats(0.05, 2.0), st.floats(0.05, 2.0), st.floats(0.0, 50.0))
def test_gamma_symmetric_and_bounded(ua, ub, r):
    g = gamma(ua, ub, r)
    assert g == gamma(ub, ua, r)
    assert 0 < g <= 1.0 / (0.5 * (1 / ua + 1 / ub)) * (1 + 1e-15)


def test_gamma_rejects_bad_input():
    with pytest.raises(ValueError):
        gamma(0.0, 0.4, 1.0)


# -- matrices ---------------------------------------------------------------

def test_offdiagonal_worked_value():
    x = s_element(hop=0.5, decay=1.0)
    h, s, _ = build_matrices(x, x, 1.0)
    assert h[0, 1] == pytest.approx(-0.5 * math.exp(-1.0), abs=1e-15)
    assert round(h[0, 1], 6) == -0.183940


def test_homonuclear_blocks_equal(toy):
    p = toy["Si"]
    h, s, basis = build_matrices(p, p, 3.7)
    n = p.n_orbitals
    assert np.array_equal(h, h.T) and np.array_equal(s, s.T)
    assert np.array_equal(h[:n, :n], h[n:, n:])


def test_decay_at_large_separation(toy):
    h, s, _ = build_matrices(toy["C"], toy["O"], 200.0)
    n = toy["C"].n_orbitals
    assert np.abs(h[:n, n:]).max() < 1e-30 and np.abs(s[:n, n:]).max() < 1e-30


def test_only_equal_lm_couple(toy):
    h, s, basis = build_matrices(toy["N"], toy["Cl"], 2.5)
    for i in range(basis.n_orb):
        for j in range(basis.n_orb):
            if basis.atom[i] != basis.atom[j] and (basis.l[i], basis.m[i]) != (basis.l[j], basis.m[j]):
                assert h[i, j] == 0 and s[i, j] == 0


def test_basis_map(toy):
    b = BasisMap.for_pair(toy["Li"], toy["Cl"])
    assert b.n_orb == 4 + 9
    assert list(b.orbitals(0)) == [0, 1, 2, 3]


# -- eigensolver ----------------------------------------------------------------

def test_eig_diagonal():
    eps, c = solve_generalized_eig(np.diag([-1.0, 2.0]), np.eye(2))
    assert np.array_equal(eps, [-1.0, 2.0])
    assert np.array_equal(np.abs(c), np.eye(2))


def test_eig_offdiagonal():
    eps, _ = solve_generalized_eig(np.array([[0.0, -1.0], [-1.0, 0.0]]), np.eye(2))
    assert eps == pytest.approx([-1.0, 1.0], abs=1e-15)


def test_eig_generalized_worked():
    h = np.array([[-2.0, -1.0], [-1.0, -2.0]])
    s = np.array([[1.0, 0.25], [0.25, 1.0]])
    eps, c = solve_generalized_eig(h, s)
    # Oracle: roots of det(H - eps S) = 0 expanded by hand.
    a = 1 - 0.25**2
    b = -(-2 - 2 - 2 * (-1) * 0.25)
    cc = 4 - 1
    roots = np.sort(np.roots([a, b, cc]).real)
    assert eps == pytest.approx(roots, abs=1e-12)
    assert eps == pytest.approx([-2.4, -4.0 / 3.0], abs=1e-12)
    assert np.allclose(c.T @ s @ c, np.eye(2), atol=1e-14)


def test_eig_column_sign_convention(rng):
    b = rng.normal(size=(5, 5))
    h = b + b.T
    _, c = solve_generalized_eig(h, np.eye(5))
    pivots = c[np.argmax(np.abs(c), axis=0), np.arange(5)]
    assert np.all(pivots > 0)


def test_eig_matches_lapack(rng):
    for n in range(2, 9):
        b = rng.normal(size=(n, n))
        s = b @ b.T + n * np.eye(n)
        h = rng.normal(size=(n, n))
        h = h + h.T
        eps, c = solve_generalized_eig(h, s)
        ref = scipy.linalg.eigh(h, s, eigvals_only=True)
        assert eps == pytest.approx(ref, abs=1e-10)


def test_eig_not_positive_definite():
    with pytest.raises(NotPositiveDefiniteError):
        solve_generalized_eig(np.eye(2), np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_eig_shape_mismatch():
    with pytest.raises(ValueError):
        solve_generalized_eig(np.eye(2), np.eye(3))


# -- occupations ----------------------------------------------------------------

def test_fermi_symmetric_spectrum():
    assert find_fermi_level([-1.0, 1.0], 1, 0.1) == pytest.approx(0.0, abs=1e-12)


def test_fermi_zero_temperature_midpoint():
    assert find_fermi_level([0.0, 1.0], 1, 0.0) == 0.5


def test_fermi_against_brentq():
    eps = np.array([0.0, 0.2, 1.0])
    t = 0.05
    oracle = brentq(lambda mu: sum(1 / (1 + math.exp((e - mu) / t)) for e in eps) - 2, -1, 2,
                    xtol=1e-15)
    mu = find_fermi_level(eps, 2, t)
    assert mu == pytest.approx(oracle, abs=1e-9)
    assert abs(fermi_occupations(eps, mu, t).sum() - 2) <= 1e-10


def test_fermi_function_values():
    assert fermi_occupations([0.3], 0.3, 0.01)[0] == 0.5
    t = 0.02
    f = fermi_occupations([0.1 + t * math.log(3)], 0.1, t)[0]
    assert abs(f - 0.25) <= 1e-12
    assert fermi_occupations([-1.0, 1.0], 0.0, 0.0).tolist() == [1.0, 0.0]


def test_zero_temperature_degenerate_sharing():
    eps = [-1.0, 0.0, 0.0, 1.0]
    mu = find_fermi_level(eps, 2, 0.0)
    f = fermi_occupations(eps, mu, 0.0, n_e=2)
    assert f.tolist() == [1.0, 0.5, 0.5, 0.0]


def test_fractional_filling_at_zero_temperature():
    eps = [-1.0, 0.0, 1.0]
    mu = find_fermi_level(eps, 1.5, 0.0)
    assert mu == 0.0
    assert fermi_occupations(eps, mu, 0.0, n_e=1.5).tolist() == [1.0, 0.5, 0.0]


def test_fermi_rejects_overfilling():
    with pytest.raises(ValueError):
        find_fermi_level([0.0, 1.0], 2, 0.1)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=12), st.floats(0.01, 0.99),
       st.floats(1e-3, 1.0))
def test_fermi_conserves_electrons(eps, frac, t):
    n_e = frac * len(eps)
    mu = find_fermi_level(eps, n_e, t)
    assert abs(fermi_occupations(eps, mu, t).sum() - n_e) <= 1e-10


# -- entropy --------------------------------------------------------------------

def test_entropy_values():
    assert electronic_entropy([0.0, 1.0, 1.0]) == 0.0
    assert electronic_entropy([0.5, 0.5]) == pytest.approx(2 * math.log(2), abs=1e-15)
    assert electronic_entropy([0.25]) == pytest.approx(-(0.25 * math.log(0.25) + 0.75 * math.log(0.75)),
                                                       abs=1e-15)
    assert round(electronic_entropy([0.25]), 6) == 0.562335


def test_entropy_rejects_out_of_range():
    with pytest.raises(ValueError):
        electronic_entropy([1.2])


# -- Mulliken -------------------------------------------------------------------

def test_mulliken_homonuclear_single_s():
    x = s_element(overlap=0.3)
    h, s, basis = build_matrices(x, x, 1.5)
    _, c = solve_generalized_eig(h, s)
    m = mulliken(c, [1.0, 0.0], s, basis, (0.5, 0.5))
    assert m.g_a == pytest.approx(0.5, abs=1e-14) and m.g_b == pytest.approx(0.5, abs=1e-14)
    assert abs(m.q_a - m.q_b) <= 1e-14


def test_mulliken_empty_system(toy):
    h, s, basis = build_matrices(toy["C"], toy["N"], 2.4)
    _, c = solve_generalized_eig(h, s)
    m = mulliken(c, np.zeros(basis.n_orb), s, basis, (2.0, 2.5))
    assert np.all(m.gross == 0) and (m.q_a, m.q_b) == (2.0, 2.5)


def test_mulliken_trace_identity(toy, rng):
    h, s, basis = build_matrices(toy["Na"], toy["S"], 4.1)
    _, c = solve_generalized_eig(h, s)
    f = rng.uniform(size=basis.n_orb)
    m = mulliken(c, f, s, basis, (0.5, 3.0))
    oracle = sum(f[i] * c[:, i] @ s @ c[:, i] for i in range(basis.n_orb))
    assert m.g_a + m.g_b == pytest.approx(oracle, abs=1e-12)
    assert m.g_a + m.g_b == pytest.approx(f.sum(), abs=1e-8)


# -- repulsion ------------------------------------------------------------------

def test_repulsion_values():
    x = s_element(rep_a=1.0, rep_b=1.0)
    assert repulsive_energy(x, x, 1e-12) == pytest.approx(1.0, abs=1e-11)
    assert repulsive_energy(x, x, 2.0) == pytest.approx(math.exp(-2.0), abs=1e-15)
    assert repulsive_energy(x, x, 800.0) == 0.0


# -- SCC loop -------------------------------------------------------------------

def test_homonuclear_scc_zero_fluctuation(toy):
    st_, led = scc_solve(toy["N"], toy["N"], 2.2, 0.0)
    assert st_.converged
    assert abs(st_.dq_a) < 1e-12 and st_.dq_a == st_.dq_b
    assert abs(led.e_coul2) < 1e-20
    # The first cycle is already self-consistent; the second confirms the energy.
    assert st_.iterations == 2


def _brute_force_scc(pa, pb, r, t_e):
    """Undamped SCC with plain LAPACK, independent of the engine's loop."""
    h0, s, basis = build_matrices(pa, pb, r)
    g = gamma(pa.hubbard_u, pb.hubbard_u, r)
    gm = np.array([[pa.hubbard_u, g], [g, pb.hubbard_u]])
    dq = np.zeros(2)
    n_e = pa.n_valence + pb.n_valence
    for _ in range(10000):
        v = gm @ (-dq)
        vv = v[basis.atom]
        h = h0 + 0.5 * s * (vv[:, None] + vv[None, :])
        eps, c = scipy.linalg.eigh(h, s)
        mu = brentq(lambda m: (1 / (1 + np.exp((eps - m) / t_e))).sum() - n_e, eps[0] - 1, eps[-1] + 1,
                    xtol=1e-15)
        f = 1 / (1 + np.exp((eps - mu) / t_e))
        gross = np.einsum("ij,ji->i", (c * f) @ c.T, s)
        q = np.array([pa.n_valence - gross[basis.atom == 0].sum(),
                      pb.n_valence - gross[basis.atom == 1].sum()])
        if np.abs(q - dq).max() < 1e-12:
            return q
        dq = q
    raise AssertionError("oracle did not converge")


def test_deeper_onsite_gains_electrons():
    a = s_element("A", onsite=-0.5, overlap=0.2)
    b = s_element("B", onsite=-0.7, overlap=0.2)
    st_, _ = scc_solve(a, b, 2.0, 0.01, opts=SccOptions(eps_scc=1e-12, eps_scf=1e-12))
    oracle = _brute_force_scc(a, b, 2.0, 0.01)
    assert st_.dq_b < 0 < st_.dq_a
    assert [st_.dq_a, st_.dq_b] == pytest.approx(oracle, abs=1e-10)


def test_low_temperature_free_energy(toy):
    st_, led = scc_solve(toy["C"], toy["O"], 2.2, 1e-6)
    assert st_.converged
    assert abs(led.mermin_f - led.e_tot) <= 1e-6
    assert led.e_tot == led.e_band + led.e_coul2 + led.e_rep


def test_charged_pair_balance(toy):
    st_, _ = scc_solve(toy["C"], toy["O"], 2.2, 0.005, charge_total=1.0)
    assert st_.converged
    assert st_.dq_a + st_.dq_b == pytest.approx(1.0, abs=1e-9)


def test_scc_callback_and_max_iter(toy):
    seen = []
    st_, _ = scc_solve(toy["Li"], toy["F"], 3.0, 0.0, opts=SccOptions(max_iter=3),
                       callback=lambda it, s, led: seen.append(it))
    assert seen == [1, 2, 3]
    assert not st_.converged and st_.iterations == 3


def test_scc_options_validated():
    with pytest.raises(ValueError):
        SccOptions(mix=0.0)
    with pytest.raises(ValueError):
        SccOptions(eps_scc=-1)


def test_scc_rejects_bad_separation(toy):
    with pytest.raises(ValueError):
        scc_solve(toy["C"], toy["C"], 0.0, 0.0)


# -- relaxation -----------------------------------------------------------------

def _morse(r):
    return (1 - math.exp(-(r - 2.0))) ** 2


@pytest.mark.parametrize("r0", [1.0, 2.0, 3.5, 8.0])
def test_relax_morse(r0):
    res = relax_geometry(None, None, r0, energy_fn=_morse)
    assert res.status == "converged"
    assert abs(res.r_eq - 2.0) <= 1e-3
    assert abs(res.gradient) < 1e-4


def test_relax_unbound_repulsive():
    x = s_element(hop=0.0)
    res = relax_geometry(x, x, 2.0)
    assert res.status == "unbound" and not res.converged


def test_relax_max_steps():
    res = relax_geometry(None, None, 3.0, opts=RelaxOptions(max_steps=2), energy_fn=_morse)
    assert res.status == "max-steps"


def test_relax_flags_scc_failure(toy):
    res = relax_geometry(toy["Li"], toy["F"], 3.0, scc_opts=SccOptions(max_iter=2))
    assert res.status == "scc-unconverged"


def test_relax_independent_of_start(toy):
    a = relax_geometry(toy["N"], toy["N"], 1.5)
    b = relax_geometry(toy["N"], toy["N"], 4.0)
    assert a.converged and b.converged
    assert abs(a.r_eq - b.r_eq) <= 1e-3


def test_simulate_pair_record(toy):
    rec = simulate_pair(toy["Na"], toy["Cl"], 0.0)
    assert rec.pair_id == "Na-Cl" and rec.converged and rec.status == "converged"
    assert rec.gross_charge_a > 0 > rec.gross_charge_b
    assert rec.dipole[2] == rec.gross_charge_b * rec.r_eq
    assert rec.n_electrons == toy["Na"].n_valence + toy["Cl"].n_valence
