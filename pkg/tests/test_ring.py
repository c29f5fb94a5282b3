import json

import numpy as np
import pytest

from ringdeph.ring import (RingSpec, basis_state, build_hamiltonian, density_matrix,
                           is_density_matrix, ring_hamiltonian, spectral_decompose)


def circulant_eigenvalues(N, J):
    # eigenvalues of the uniform ring: 2J cos(2πk/N)
    return np.sort(2 * J * np.cos(2 * np.pi * np.arange(N) / N))


def test_n4_pattern():
    H = ring_hamiltonian(np.zeros(4), 1.0)
    expected = np.zeros((4, 4))
    for i, j in [(0, 1), (1, 2), (2, 3), (0, 3)]:
        expected[i, j] = expected[j, i] = 1
    assert np.array_equal(H, expected)


def test_n3_uniform_eigenvalues():
    H = ring_hamiltonian(np.zeros(3), 1.0)
    assert np.allclose(np.linalg.eigvalsh(H), [-1, -1, 2], atol=1e-12)
    assert np.allclose(np.linalg.eigvalsh(H), circulant_eigenvalues(3, 1.0), atol=1e-12)


@pytest.mark.parametrize("N", [3, 4, 5, 6, 7, 10])
@pytest.mark.parametrize("J", [1.0, 0.37])
def test_circulant_oracle(N, J):
    model = spectral_decompose(ring_hamiltonian(np.zeros(N), J))
    assert np.allclose(model.energies, circulant_eigenvalues(N, J), atol=1e-12)


def test_n5_trace_and_symmetry(rng):
    D = rng.normal(size=5) * 3
    H = build_hamiltonian(RingSpec(N=5, D=D, T=1.0))
    assert np.array_equal(H, H.T)
    assert np.isclose(np.trace(H), D.sum(), atol=1e-12)
    assert np.array_equal(np.diag(H), D)


def test_n3_degenerate_grouping():
    model = spectral_decompose(ring_hamiltonian(np.zeros(3)))
    assert model.n_levels == 2
    assert sorted(model.ranks.tolist()) == [1, 2]
    assert np.allclose(model.levels, [-1, 2])


def test_scaled_identity_single_projector():
    model = spectral_decompose(2.5 * np.eye(4))
    assert model.n_levels == 1
    assert np.allclose(model.projectors[0], np.eye(4))


def test_generic_rank_one_projectors(rng):
    H = ring_hamiltonian(rng.uniform(0, 10, 6))
    model = spectral_decompose(H)
    assert model.n_levels == 6
    assert np.all(model.ranks == 1)
    assert np.allclose(model.projectors.sum(axis=0), np.eye(6), atol=1e-10)
    assert np.allclose(model.hamiltonian(), H, atol=1e-10)


def test_merge_false_and_resolved_agree():
    H = ring_hamiltonian(np.zeros(4))
    a = spectral_decompose(H, merge=False)
    b = spectral_decompose(H).resolved()
    assert a.n_levels == b.n_levels == 4
    assert np.allclose(a.projectors.sum(0), np.eye(4))
    assert np.allclose(b.hamiltonian(), H, atol=1e-12)


def test_degeneracy_tolerance_configurable():
    H = np.diag([0.0, 1e-6, 1.0])
    assert spectral_decompose(H).n_levels == 3
    assert spectral_decompose(H, degeneracy_tol=1e-5).n_levels == 2


def test_basis_states():
    assert np.array_equal(basis_state(5, 1), np.eye(5)[0])
    assert np.array_equal(basis_state(6, 4), np.eye(6)[3])
    rho = density_matrix(basis_state(6, 4))
    assert is_density_matrix(rho)
    assert np.trace(rho) == 1
    with pytest.raises(ValueError):
        basis_state(3, 4)
    with pytest.raises(ValueError):
        density_matrix(np.ones(3))


@pytest.mark.parametrize("kw", [
    dict(N=2, D=(0, 0), T=1.0),
    dict(N=3, D=(0, 0), T=1.0),
    dict(N=3, D=(0, 0, np.nan), T=1.0),
    dict(N=3, D=(0, 0, 0), T=0.0),
    dict(N=3, D=(0, 0, 0), T=1.0, in_node=2, out_node=2),
    dict(N=3, D=(0, 0, 0), T=1.0, out_node=4),
])
def test_ringspec_validation(kw):
    with pytest.raises(ValueError):
        RingSpec(**kw)


def test_ringspec_self_transfer_allowed_for_diagnostics():
    s = RingSpec(N=3, D=(0, 0, 0), T=1.0, in_node=2, out_node=2, allow_self_transfer=True)
    assert s.in_node == s.out_node


def test_ringspec_round_trip(rng):
    s = RingSpec(N=5, D=rng.uniform(0, 10, 5), T=3.25, in_node=2, out_node=4, J=0.5)
    assert RingSpec.from_dict(s.to_dict()) == s
    assert RingSpec.from_json(s.to_json()) == s
    assert set(json.loads(s.to_json())) >= {"N", "J", "D", "T", "in", "out"}


def test_non_hermitian_rejected():
    with pytest.raises(ValueError):
        spectral_decompose(np.array([[0, 1], [0, 0]]))
