import numpy as np
import pytest
import scipy.linalg

from ringdeph.dynamics import (build_lti, build_lti_rates, devectorize, evolve_lti,
                               evolve_projector, fidelity, gellmann_basis, pair_terms,
                               propagator, rates_from_dephasing_operator, steady_state,
                               trajectory, transfer_fidelity, vectorize)
from ringdeph.ring import basis_state, density_matrix, ring_hamiltonian, spectral_decompose


def random_model(rng, N, merge=True):
    return spectral_decompose(ring_hamiltonian(rng.uniform(0, 10, N)), merge=merge)


def random_pure(rng, N):
    psi = rng.normal(size=N) + 1j * rng.normal(size=N)
    return psi / np.linalg.norm(psi)


def test_rates_constant_c_is_zero():
    model = spectral_decompose(ring_hamiltonian(np.arange(4.0)))
    assert np.all(rates_from_dephasing_operator(model, np.full(4, 0.7)) == 0)


def test_rates_two_level():
    model = spectral_decompose(np.diag([0.0, 1.0]))
    g = rates_from_dephasing_operator(model, [1.0, 0.0])
    assert g[0, 1] == g[1, 0] == 0.5


def test_rates_against_double_loop(rng):
    model = random_model(rng, 5)
    c = rng.normal(size=5)
    g = rates_from_dephasing_operator(model, c)
    ref = np.zeros((5, 5))
    for k in range(5):
        for l in range(5):
            ref[k, l] = (c[k] - c[l]) ** 2 / 2
    assert np.allclose(g, ref, atol=0, rtol=1e-15)


def test_projector_t0_identity(rng):
    model = random_model(rng, 4)
    rho0 = density_matrix(random_pure(rng, 4))
    gamma = rates_from_dephasing_operator(model, rng.normal(size=4))
    assert np.allclose(evolve_projector(model, rho0, gamma, 0.0), rho0, atol=1e-14)


def test_unitary_purity_conserved(rng):
    model = random_model(rng, 5)
    rho0 = density_matrix(random_pure(rng, 5))
    for t in (0.3, 7.0, 55.0):
        rho = evolve_projector(model, rho0, None, t)
        assert abs(np.trace(rho @ rho).real - 1) < 1e-10


def test_long_time_steady_state(rng):
    model = random_model(rng, 4)
    rho0 = density_matrix(random_pure(rng, 4))
    gamma = rates_from_dephasing_operator(model, [0.0, 1.3, -0.8, 2.1])
    assert np.all(gamma[~np.eye(4, dtype=bool)] > 0)
    rho = evolve_projector(model, rho0, gamma, 1e3)
    assert np.allclose(rho, steady_state(model, rho0), atol=1e-12)


def test_projector_matches_unitary_propagation(rng):
    for N in range(3, 7):
        H = ring_hamiltonian(rng.uniform(0, 10, N))
        model = spectral_decompose(H)
        psi = basis_state(N, 1)
        for t in rng.uniform(0, 50, 3):
            U = scipy.linalg.expm(-1j * H * t)
            ref = density_matrix(U @ psi)
            assert np.allclose(evolve_projector(model, density_matrix(psi), None, t), ref, atol=1e-10)


def test_gellmann_orthonormal():
    for N in (2, 3, 5):
        B = gellmann_basis(N)
        G = np.einsum("mab,nba->mn", B, B)
        assert np.allclose(G, np.eye(N * N), atol=1e-12)
        assert np.allclose(B, B.conj().transpose(0, 2, 1))
        assert np.allclose(B[-1], np.eye(N) / np.sqrt(N))


def test_vectorize_round_trip(rng):
    B = gellmann_basis(4)
    rho = density_matrix(random_pure(rng, 4))
    r = vectorize(rho, B)
    assert np.isrealobj(r)
    assert np.allclose(devectorize(r, B), rho, atol=1e-14)
    assert np.isclose(r[-1], 1 / 2)


def test_lti_zero_c_gives_zero_l(rng):
    sys = build_lti(random_model(rng, 4), np.zeros(4))
    assert np.all(sys.L == 0)


def test_lti_structure(rng):
    model = random_model(rng, 5)
    sys = build_lti(model, rng.normal(size=5))
    M = sys.generator
    assert np.allclose(sys.A, -sys.A.T, atol=1e-12)
    assert np.allclose(sys.L, sys.L.T, atol=1e-12)
    assert np.linalg.eigvalsh(sys.L).max() < 1e-10
    assert np.abs(sys.A @ sys.L - sys.L @ sys.A).max() < 1e-9
    assert np.abs(M[-1]).max() < 1e-14 and np.abs(M[:, -1]).max() < 1e-14
    r0 = sys.vectorize(density_matrix(basis_state(5, 1)))
    assert np.isclose(evolve_lti(sys, r0, 13.0)[-1], 1 / np.sqrt(5))


def test_lti_eigenvalues_match_projector_exponents(rng):
    model = random_model(rng, 3)
    c = rng.normal(size=3)
    sys = build_lti(model, c)
    gamma = rates_from_dephasing_operator(model, c)
    w = model.frequencies
    expected = [0.0] * 3
    for k in range(3):
        for l in range(3):
            if k != l:
                expected.append(complex(-gamma[k, l], -w[k, l]))
    got = np.linalg.eigvals(sys.generator)
    assert np.allclose(np.sort_complex(got), np.sort_complex(np.array(expected)), atol=1e-10)


def test_rates_and_c_routes_agree(rng):
    model = random_model(rng, 4)
    c = rng.normal(size=4)
    a = build_lti(model, c)
    b = build_lti_rates(model.resolved(), rates_from_dephasing_operator(model, c))
    assert np.allclose(a.L, b.L, atol=1e-12)


def test_lti_t0_identity(rng):
    sys = build_lti(random_model(rng, 3), rng.normal(size=3))
    r0 = rng.normal(size=9)
    assert np.array_equal(evolve_lti(sys, r0, 0.0), r0)


def test_lti_matches_projector(rng):
    for _ in range(100):
        N = int(rng.integers(3, 7))
        model = random_model(rng, N)
        c = rng.normal(size=N)
        t = rng.uniform(0, 100)
        rho0 = density_matrix(random_pure(rng, N))
        sys = build_lti(model, c)
        a = sys.devectorize(evolve_lti(sys, sys.vectorize(rho0), t))
        b = evolve_projector(model, rho0, rates_from_dephasing_operator(model, c), t)
        assert np.abs(a - b).max() < 1e-10


def test_lti_unitary_fidelity_third_oracle(rng):
    for N in (3, 4, 5, 6):
        H = ring_hamiltonian(rng.uniform(0, 10, N))
        model = spectral_decompose(H)
        rho_out = density_matrix(basis_state(N, 2))
        sys = build_lti(model, None, rho_out)
        T = rng.uniform(1, 60)
        F_lti = sys.c_out @ evolve_lti(sys, sys.vectorize(density_matrix(basis_state(N, 1))), T)
        amp = (scipy.linalg.expm(-1j * H * T) @ basis_state(N, 1))[1]
        assert abs(F_lti - abs(amp) ** 2) < 1e-10


def test_fidelity_examples():
    p = density_matrix(basis_state(4, 2))
    q = density_matrix(basis_state(4, 3))
    assert fidelity(p, p) == 1
    assert fidelity(q, p) == 0
    assert np.isclose(fidelity(np.eye(4) / 4, p), 0.25)


def test_pair_terms_decomposition(rng, small_pools):
    model = random_model(rng, 5).resolved()
    psi_in, psi_out = basis_state(5, 1), basis_state(5, 3)
    pool = small_pools[5]
    t = 4.2
    static, w = pair_terms(model, psi_in, psi_out, t)
    for op in pool.operators[:10]:
        F = transfer_fidelity(model, psi_in, psi_out, t, 0.7 * op.gamma)
        assert np.isclose(F, static + np.exp(-t * 0.7 * op.gamma_lower) @ w, atol=1e-13)


def test_trajectory_outputs(tmp_path, rng):
    model = random_model(rng, 3)
    rho0 = density_matrix(basis_state(3, 1))
    gamma = rates_from_dephasing_operator(model, [0, 1, 2])
    tr = trajectory(model, rho0, gamma, np.linspace(0, 5, 11), density_matrix(basis_state(3, 2)))
    assert np.all(np.diff(tr.purity) <= 1e-12)
    assert abs(tr.fidelity[0]) < 1e-15
    tr.to_csv(tmp_path / "t.csv")
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0] == "t,F,e,purity" and len(rows) == 12


def test_propagator_fallback_non_normal():
    M = np.array([[-1.0, 5.0], [0.0, -2.0]])
    assert np.allclose(propagator(M, 0.7), scipy.linalg.expm(0.7 * M), atol=1e-13)


def test_bad_rates_rejected(rng):
    model = random_model(rng, 3)
    rho0 = density_matrix(basis_state(3, 1))
    with pytest.raises(ValueError):
        evolve_projector(model, rho0, -np.ones((3, 3)) + np.eye(3), 1.0)
    with pytest.raises(ValueError):
        evolve_projector(model, rho0, np.zeros((2, 2)), 1.0)
    with pytest.raises(ValueError):
        evolve_projector(model, rho0, None, -1.0)
