import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from spinphonon.classical import (
    Pattern,
    PhaseLabel,
    SpinConfiguration,
    exact_ground_state,
    frustration_scan,
    gray_code_drift,
    ising_energy,
    local_search,
    oaf,
    pattern_overlap,
    pattern_signs,
)
from spinphonon.couplings import exact_couplings
from spinphonon.errors import CapacityError
from spinphonon.lattice import ChainConfig, chain_modes

TWO_THIRDS_PI = 2 * np.pi / 3


def exact_J(cfg):
    return exact_couplings(chain_modes(cfg), cfg).J


def random_J(rng, N):
    A = rng.normal(size=(N, N))
    return (A + A.T) / 2


def brute_force(J):
    N = J.shape[0]
    return min(ising_energy(np.array(s), J) for s in itertools.product([-1.0, 1.0], repeat=N))


def test_single_bond_energy():
    J = np.array([[0.0, 0.25], [0.25, 0.0]])
    assert ising_energy([1, -1], J) == pytest.approx(-0.5, abs=1e-15)


def test_energy_ignores_diagonal():
    J = np.array([[7.0, 0.25], [0.25, -3.0]])
    assert ising_energy([1, -1], J) == pytest.approx(-0.5, abs=1e-15)


def test_nearest_neighbour_af_chain():
    J = np.diag(np.ones(3), 1) + np.diag(np.ones(3), -1)
    rep = exact_ground_state(J)
    np.testing.assert_array_equal(rep.ground.s, [1, -1, 1, -1])
    assert rep.degeneracy_count == 2
    assert rep.phase_label is PhaseLabel.AF


@pytest.mark.parametrize("N", [3, 5, 8, 10])
def test_enumeration_matches_brute_force(N):
    J = random_J(np.random.default_rng(N), N)
    rep = exact_ground_state(J)
    assert rep.ground.energy == pytest.approx(brute_force(J), abs=1e-12)
    assert rep.ground.s[0] == 1


def test_lexicographic_tie_break():
    # zero couplings: every state ties, smallest vector with s_0 = +1 wins
    rep = exact_ground_state(np.zeros((4, 4)))
    np.testing.assert_array_equal(rep.ground.s, [1, -1, -1, -1])
    assert rep.degeneracy_count == 16


def test_window_counts_near_ground_states():
    J = np.diag(np.ones(3), 1) + np.diag(np.ones(3), -1)
    J[0, 3] = J[3, 0] = 1e-3
    tight = exact_ground_state(J, window=1e-6)
    wide = exact_ground_state(J, window=0.7)
    assert tight.degeneracy_count == 2
    assert wide.degeneracy_count > 2


def test_ferromagnet_short_range():
    cfg = ChainConfig(20, 0.1, dk_d0=TWO_THIRDS_PI)
    rep = exact_ground_state(exact_J(cfg), cfg.dk_d0)
    assert rep.ground.overlaps["F"] == 1.0
    assert rep.phase_label is PhaseLabel.F


def test_hopfield_long_range():
    cfg = ChainConfig(20, 2.0, dk_d0=TWO_THIRDS_PI)
    rep = exact_ground_state(exact_J(cfg), cfg.dk_d0)
    assert max(rep.ground.overlaps["HOPF_C"], rep.ground.overlaps["HOPF_S"]) >= 0.9
    assert rep.phase_label is PhaseLabel.HOPFIELD


def test_capacity_guard():
    with pytest.raises(CapacityError, match="N <= 24"):
        exact_ground_state(np.zeros((25, 25)))
    with pytest.raises(CapacityError, match="N <= 6"):
        exact_ground_state(np.zeros((8, 8)), max_sites=6)


def test_overlap_examples():
    af = pattern_signs(Pattern.AF, 6)
    assert pattern_overlap(af, Pattern.AF) == 1.0
    assert pattern_overlap([1, 1, 1, 1, -1, -1], Pattern.F) == pytest.approx(1 / 3)
    assert pattern_overlap([1, -1, -1, 1], Pattern.AF) == 0.0


def test_overlap_excludes_vanishing_sites():
    s = np.ones(6)
    ov, excluded = pattern_overlap(s, Pattern.HOPF_S, np.pi / 2, return_excluded=True)
    np.testing.assert_array_equal(excluded, [0, 2, 4])
    # sin(pi j/2)(-1)^j at j = 1, 3, 5 is -1, +1, -1
    assert ov == pytest.approx(1 / 3)
    assert pattern_overlap(s, Pattern.HOPF_S, 0.0) == 0.0


@settings(max_examples=40, deadline=None)
@given(arrays(float, (6, 6), elements=st.floats(-1, 1)), st.lists(st.sampled_from([-1.0, 1.0]), min_size=6, max_size=6))
def test_global_flip_symmetry(A, s):
    J = A + A.T
    s = np.array(s)
    assert ising_energy(s, J) == pytest.approx(ising_energy(-s, J), abs=1e-12)
    for p in Pattern:
        assert pattern_overlap(s, p, 0.7) == pytest.approx(pattern_overlap(-s, p, 0.7), abs=1e-15)


def test_enumeration_agrees_with_local_search():
    rng = np.random.default_rng(2024)
    for _ in range(20):
        J = random_J(rng, 12)
        rep = exact_ground_state(J)
        _, E = local_search(J, restarts=100, rng=rng)
        assert rep.ground.energy == pytest.approx(E, abs=1e-10)


def test_gray_code_drift_small():
    J = exact_J(ChainConfig(20, 1.0, dk_d0=TWO_THIRDS_PI))
    assert gray_code_drift(J) < 1e-9


@pytest.mark.parametrize("model", ["PBC_DIPOLAR", "OPEN_DIPOLAR"])
@pytest.mark.parametrize("t_C", [0.1, 1.0, 5.0])
def test_undressed_dipolar_ground_state_is_af(model, t_C):
    J = exact_J(ChainConfig(12, t_C, hopping_model=model))
    assert exact_ground_state(J).ground.overlaps["AF"] == 1.0


def test_hopfield_patterns_quasi_degenerate():
    cfg = ChainConfig(20, 2.0, dk_d0=5 * np.pi / 3)
    J = exact_J(cfg)
    E0 = exact_ground_state(J, cfg.dk_d0).ground.energy

    def best_completion(pattern):
        # sites where the pattern vanishes are free; take their best assignment
        p = pattern_signs(pattern, cfg.N, cfg.dk_d0)
        free = np.flatnonzero(p == 0)
        energies = []
        for fill in itertools.product([-1.0, 1.0], repeat=free.size):
            q = p.copy()
            q[free] = fill
            energies.append(ising_energy(q, J))
        return min(energies)

    Ec, Es = best_completion(Pattern.HOPF_C), best_completion(Pattern.HOPF_S)
    assert abs(Ec - Es) < 0.05 * abs(E0)


def test_oaf_examples():
    af = pattern_signs(Pattern.AF, 4)
    assert oaf(np.outer(af, af)) == pytest.approx(1.0)
    assert oaf(np.ones((4, 4))) == pytest.approx(-1 / 3)
    assert oaf(np.eye(5)) == 0.0


def test_spin_configuration_label():
    c = SpinConfiguration.from_spins([1, -1, -1], np.zeros((3, 3)))
    assert c.label() == "+--"
    assert c.energy == 0.0
    with pytest.raises(ValueError):
        SpinConfiguration.from_spins([1, 0, -1], np.zeros((3, 3)))


def test_frustration_scan_rows():
    base = ChainConfig(12, 1.0, dk_d0=TWO_THIRDS_PI)
    rows = frustration_scan(base, [0.1, 2.0])
    assert [r.t_C for r in rows] == [0.1, 2.0]
    assert rows[0].phase_label is PhaseLabel.F
    assert rows[0].configuration == "+" * 12
    assert all(r.degeneracy_count >= 2 for r in rows)
