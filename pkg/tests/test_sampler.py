import numpy as np
import pytest

from ringdeph.sampler import (DephasingOperator, DephasingPool, SamplerConfig, cp_admissible,
                              cp_violation, generate_pool, lower_to_matrix, n_pairs,
                              sobol_block, sobol_triangular)

# (s, a, m_1..m_s) for dimensions 2..10 of the Joe-Kuo table; dimension 1 is van der Corput
JOE_KUO = [
    (1, 0, [1]),
    (2, 1, [1, 3]),
    (3, 1, [1, 3, 1]),
    (3, 2, [1, 1, 1]),
    (4, 1, [1, 1, 3, 3]),
    (4, 4, [1, 3, 5, 13]),
    (5, 2, [1, 1, 5, 5, 17]),
    (5, 4, [1, 1, 5, 5, 5]),
    (5, 7, [1, 1, 7, 11, 19]),
]
BITS = 32


def _directions(dim):
    V = np.zeros((dim, BITS), dtype=np.uint64)
    V[0] = [1 << (BITS - 1 - k) for k in range(BITS)]
    for j in range(1, dim):
        s, a, m = JOE_KUO[j - 1]
        m = list(m)
        for k in range(s, BITS):
            new = m[k - s] ^ (m[k - s] << s)
            for i in range(1, s):
                if (a >> (s - 1 - i)) & 1:
                    new ^= m[k - i] << i
            m.append(new)
        V[j] = [m[k] << (BITS - 1 - k) for k in range(BITS)]
    return V


def gray_code_sobol(dim, n):
    """Points 1..n of the Sobol sequence by the Antonov-Saleev recursion."""
    V = _directions(dim)
    x = np.zeros(dim, dtype=np.uint64)
    out = np.empty((n, dim))
    for i in range(n):
        c = 0
        while (i >> c) & 1:
            c += 1
        x ^= V[:, c]
        out[i] = x / 2.0 ** BITS
    return out


def test_sobol_first_point_all_half():
    assert np.all(sobol_block(10, 0, 1) == 0.5)
    T = sobol_triangular(5, 0)
    assert np.all(T[np.tril_indices(5, -1)] == 0.5)
    assert np.all(np.triu(T) == 0)


def test_sobol_matches_gray_code_oracle():
    ref = gray_code_sobol(10, 512)
    got = sobol_block(10, 0, 512)
    assert np.array_equal(got, ref)
    assert np.array_equal(sobol_block(10, 100, 50), ref[100:150])


def test_sobol_entries_in_unit_interval():
    for idx in (0, 1, 17, 4095, 123456):
        T = sobol_triangular(6, idx)
        vals = T[np.tril_indices(6, -1)]
        assert np.all((vals >= 0) & (vals <= 1))


def _box_discrepancy(pts, boxes):
    inside = np.all(pts[None, :, :] < boxes[:, None, :], axis=2).mean(axis=1)
    return np.abs(inside - boxes.prod(axis=1)).max()


def test_sobol_discrepancy_below_pseudorandom():
    rng = np.random.default_rng(7)
    boxes = rng.uniform(0.3, 1.0, size=(3000, 10))
    sob = sobol_block(10, 0, 1024)
    rnd = np.random.default_rng(2024).uniform(size=(1024, 10))
    assert _box_discrepancy(sob, boxes) < _box_discrepancy(rnd, boxes)


def test_zero_rates_admissible():
    assert cp_admissible(np.zeros((4, 4)))


def test_c_vector_rates_admissible(rng):
    for N in (3, 5, 8):
        c = rng.normal(size=N) * 3
        gamma = 0.5 * (c[:, None] - c[None, :]) ** 2
        assert cp_admissible(gamma)
        for t in (0.1, 1.0, 10.0):
            assert np.linalg.eigvalsh(np.exp(-t * gamma)).min() > -1e-12


def test_three_level_example():
    gamma = np.array([[0, 0, 0], [0, 0, 1.0], [0, 1.0, 0]])
    for t in (0.1, 1.0, 10.0):
        lam = np.linalg.eigvalsh(np.exp(-t * gamma)).min()
        assert lam < 0
    assert not cp_admissible(gamma)
    assert not cp_admissible(gamma, probe_times=(0.1, 1.0, 10.0), schoenberg=False)


def test_schoenberg_catches_small_t_violation():
    # sqrt(γ) breaks the triangle inequality (1 + 1 < sqrt(4.5)), so γ is not
    # conditionally negative definite, yet exp(-tγ) is diagonally dominant at large t
    gamma = np.array([[0, 1.0, 1.0], [1.0, 0, 4.5], [1.0, 4.5, 0]])
    assert np.linalg.eigvalsh(np.exp(-0.01 * gamma)).min() < 0
    probe = (10.0, 100.0)
    assert cp_violation(gamma, probe, schoenberg=False) <= 1e-10
    assert not cp_admissible(gamma, probe)


def test_lower_to_matrix_order():
    G = lower_to_matrix([1, 2, 3, 4, 5, 6], 4)
    assert G[1, 0] == 1 and G[2, 0] == 2 and G[2, 1] == 3 and G[3, 0] == 4 and G[3, 2] == 6
    assert np.array_equal(G, G.T) and np.all(np.diag(G) == 0)


def test_pool_invariants_and_stats():
    pool = generate_pool(SamplerConfig(4, pool_target=300, batch_size=256))
    assert len(pool) == 300
    sums = pool.lower_matrix().sum(axis=1)
    assert np.abs(sums - 1).max() < 1e-12
    assert all(cp_admissible(op.gamma) for op in pool.operators)
    mus = [op.mu for op in pool.operators]
    assert mus == sorted(mus) and len(set(mus)) == len(mus)
    s = pool.stats
    assert s["accepted"] == 300
    assert s["candidates"] == s["accepted"] + s["rejected_cp"] + s["rejected_zero"]
    assert s["candidates"] == mus[-1] + 1


def test_operators_regenerate_from_sequence():
    pool = generate_pool(SamplerConfig(5, pool_target=50, batch_size=64))
    for op in pool.operators[:10]:
        raw = sobol_triangular(5, op.mu)[np.tril_indices(5, -1)]
        assert np.allclose(op.gamma_lower, raw / raw.sum(), rtol=0, atol=1e-15)


def test_pool_deterministic_and_batch_independent(tmp_path):
    a = generate_pool(SamplerConfig(5, pool_target=200, batch_size=128))
    b = generate_pool(SamplerConfig(5, pool_target=200, batch_size=1000))
    assert [op.mu for op in a.operators] == [op.mu for op in b.operators]
    assert a.digest == b.digest
    a.save(tmp_path / "a.jsonl")
    generate_pool(SamplerConfig(5, pool_target=200, batch_size=128)).save(tmp_path / "c.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "c.jsonl").read_bytes()


def test_pool_round_trip(tmp_path, small_pools):
    pool = small_pools[4]
    pool.save(tmp_path / "p.jsonl")
    back = DephasingPool.load(tmp_path / "p.jsonl")
    assert back.config == pool.config
    assert back.operators == pool.operators
    assert back.stats == pool.stats


def test_pool_load_rejects_tampering(tmp_path, small_pools):
    pool = small_pools[3]
    bad = DephasingPool(pool.config, [DephasingOperator(0, 3, np.array([0.0, 0.0, 1.0]))])
    bad.save(tmp_path / "bad.jsonl")
    with pytest.raises(ValueError):
        DephasingPool.load(tmp_path / "bad.jsonl")
    unnorm = DephasingPool(pool.config, [DephasingOperator(0, 3, np.array([0.5, 0.5, 0.5]))])
    unnorm.save(tmp_path / "u.jsonl")
    with pytest.raises(ValueError):
        DephasingPool.load(tmp_path / "u.jsonl")


def test_draw(small_pools):
    pool = small_pools[5]
    a = pool.draw(50, 3)
    assert len(a) == 50
    assert a.operators == pool.draw(50, 3).operators
    assert a.operators != pool.draw(50, 4).operators
    mus = [op.mu for op in a.operators]
    assert mus == sorted(mus)
    with pytest.raises(ValueError):
        pool.draw(len(pool) + 1, 0)


def test_acceptance_floor():
    with pytest.raises(RuntimeError):
        generate_pool(SamplerConfig(8, pool_target=10, batch_size=512, min_acceptance=0.5))


def test_config_validation():
    for kw in (dict(N=1), dict(N=4, pool_target=0), dict(N=4, offset=-1),
               dict(N=4, min_acceptance=0)):
        with pytest.raises(ValueError):
            SamplerConfig(**kw)
    assert n_pairs(5) == 10
