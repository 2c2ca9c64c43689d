import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.csgraph import maximum_bipartite_matching

from lapspec.assembly import assemble_laplacian, assemble_stiffness
from lapspec.coefficient import (builtin, constant_field, nodal_values,
                                 random_element_field, support_intervals)
from lapspec.localization import (AdjacencyMatrix, build_adjacency,
                                  canonical_matching, hopcroft_karp,
                                  pair_spectrum, perfect_matching,
                                  sorted_pairing_audit, subset_counting_check)
from lapspec.mesh import uniform_square
from lapspec.spectral import generalized_eigs


def _pipeline(name, cells=10, corners=(0.0, 1.0)):
    m = uniform_square(cells, corners)
    field = builtin(name) if isinstance(name, str) else name
    A = assemble_stiffness(m, field)
    L = assemble_laplacian(m)
    s = generalized_eigs(A, L)
    ivs = support_intervals(field, m)
    return m, field, s, ivs


def test_adjacency_constant_all_true():
    m, field, s, ivs = _pipeline(constant_field(3.0), cells=4)
    G = build_adjacency(s, ivs, 1e-9)
    assert G.matrix.all()
    stats = G.degree_stats()
    assert stats["row_min"] == m.n_free


def test_adjacency_membership_brute_force():
    m, field, s, ivs = _pipeline("quadrant", cells=8, corners=(-1, 1))
    eps = 1e-9
    G = build_adjacency(s, ivs, eps)
    for sidx in range(m.n_free):
        lam = s.eigenvalues[sidx]
        slack = eps * max(1.0, abs(lam))
        for i in range(m.n_free):
            expected = ivs[i].kmin - slack <= lam <= ivs[i].kmax + slack
            assert bool(G.matrix[sidx, i]) == expected


def test_adjacency_count_mismatch():
    m, field, s, ivs = _pipeline("p1", cells=4)
    with pytest.raises(ValueError):
        build_adjacency(s, ivs[:-1])


def test_matching_identity_and_full():
    eye = AdjacencyMatrix(np.eye(6, dtype=bool), 0.0)
    res = perfect_matching(eye)
    assert res.matched and np.array_equal(res.pi, np.arange(6))
    full = AdjacencyMatrix(np.ones((6, 6), dtype=bool), 0.0)
    res = perfect_matching(full)
    assert res.matched
    assert sorted(res.pi) == list(range(6))


def test_hopcroft_karp_against_scipy_oracle():
    rng = np.random.default_rng(11)
    for trial in range(60):
        n_l = int(rng.integers(1, 14))
        n_r = int(rng.integers(1, 14))
        density = rng.uniform(0.05, 0.8)
        adj = rng.random((n_l, n_r)) < density
        ml, mr = hopcroft_karp(adj)
        size = int((ml >= 0).sum())
        # matching is consistent and uses only edges of the graph
        for u, v in enumerate(ml):
            if v >= 0:
                assert adj[u, v] and mr[v] == u
        oracle = maximum_bipartite_matching(sp.csr_matrix(adj),
                                            perm_type="column")
        assert size == int((oracle >= 0).sum())


def test_deficiency_witness_certifies_failure():
    rng = np.random.default_rng(5)
    found = 0
    for trial in range(80):
        n = int(rng.integers(2, 10))
        adj = rng.random((n, n)) < rng.uniform(0.05, 0.5)
        res = perfect_matching(AdjacencyMatrix(adj, 0.0))
        if res.matched:
            continue
        found += 1
        J = res.witness
        reachable = set()
        for j in J:
            reachable |= set(np.nonzero(adj[:, j])[0].tolist())
        assert len(reachable) < len(J)
    assert found > 10


def test_pairing_theorem_p1_to_p4():
    for name in ("p1", "p2", "p3", "p4"):
        m, field, s, ivs = _pipeline(name)
        res = perfect_matching(build_adjacency(s, ivs, 1e-9))
        assert res.matched, name
        # every pair satisfies membership with the tolerance
        for i, sidx in enumerate(res.pi):
            lam = s.eigenvalues[sidx]
            slack = 1e-9 * max(1.0, abs(lam))
            assert ivs[i].kmin - slack <= lam <= ivs[i].kmax + slack


def test_pairing_random_piecewise_fields():
    m = uniform_square(8)
    L = assemble_laplacian(m)
    for seed in range(20):
        field = random_element_field(m, seed)
        A = assemble_stiffness(m, field)
        s = generalized_eigs(A, L)
        ivs = support_intervals(field, m)
        res = perfect_matching(build_adjacency(s, ivs, 1e-9))
        assert res.matched


def test_eps_monotonicity_keeps_matching():
    m, field, s, ivs = _pipeline("p3")
    for eps in (1e-9, 1e-6, 1e-3):
        res = perfect_matching(build_adjacency(s, ivs, eps))
        assert res.matched


def test_sorted_audit_constant_no_violations():
    m, field, s, ivs = _pipeline(constant_field(2.0), cells=6)
    k_nod = nodal_values(field, m)
    order, violations = sorted_pairing_audit(s, k_nod, ivs)
    assert violations == []


def test_sorted_audit_p4_detects_violations():
    m, field, s, ivs = _pipeline("p4")
    k_nod = nodal_values(field, m)
    order, violations = sorted_pairing_audit(s, k_nod, ivs)
    assert len(violations) >= 1
    # concentrated in the transition band between the two branches
    assert all(25 <= v <= 55 for v in violations)
    # audit coherence: the matcher still finds a perfect pairing
    assert perfect_matching(build_adjacency(s, ivs, 1e-9)).matched


def test_sorted_audit_p1_mostly_clean():
    m, field, s, ivs = _pipeline("p1")
    k_nod = nodal_values(field, m)
    _, violations = sorted_pairing_audit(s, k_nod, ivs)
    assert len(violations) == 0


def test_audit_coherence_sorted_valid_implies_matchable():
    for name in ("p1", "p2", "p3"):
        m, field, s, ivs = _pipeline(name)
        k_nod = nodal_values(field, m)
        order, violations = sorted_pairing_audit(s, k_nod, ivs)
        if violations:
            continue
        res = pair_spectrum(s, ivs, nodal_vals=k_nod)
        assert res.matched
        # the returned pairing is the sorted one
        pi = np.empty(len(order), dtype=int)
        pi[order] = np.arange(len(order))
        assert np.array_equal(res.pi, pi)


def test_subset_counting_trivial_cases():
    m, field, s, ivs = _pipeline("p2", cells=6)
    full = subset_counting_check(s, ivs, range(m.n_free))
    assert full.count_hull == m.n_free
    assert full.count_union == m.n_free
    assert full.passed
    single = subset_counting_check(s, ivs, [3])
    assert single.count_hull >= 1 and single.count_union >= 1
    with pytest.raises(ValueError):
        subset_counting_check(s, ivs, [])


def test_subset_counting_random_with_oracle():
    rng = np.random.default_rng(42)
    for name, corners in (("quadrant", (-1, 1)), ("p2", (0, 1))):
        m, field, s, ivs = _pipeline(name, cells=8, corners=corners)
        eigs = s.eigenvalues
        for _ in range(100):
            size = int(rng.integers(1, m.n_free + 1))
            J = rng.choice(m.n_free, size=size, replace=False)
            chk = subset_counting_check(s, ivs, J)
            # independent brute-force membership scan
            eps = 1e-9
            lo = min(ivs[j].kmin for j in J)
            hi = max(ivs[j].kmax for j in J)
            hull = sum(1 for lam in eigs
                       if lo - eps * max(1, abs(lam)) <= lam
                       <= hi + eps * max(1, abs(lam)))
            union = sum(1 for lam in eigs
                        if any(ivs[j].kmin - eps * max(1, abs(lam)) <= lam
                               <= ivs[j].kmax + eps * max(1, abs(lam))
                               for j in J))
            assert chk.count_hull == hull
            assert chk.count_union == union
            assert chk.passed


def test_canonical_matching_lexicographic():
    adj = np.array([[1, 1, 0],
                    [1, 0, 1],
                    [0, 1, 1]], dtype=bool)
    res = canonical_matching(AdjacencyMatrix(adj, 0.0))
    assert res.matched
    # smallest eigenvalue index for interval 0 is 0, then forced choices
    assert res.pi[0] == 0
    assert np.array_equal(np.sort(res.pi), np.arange(3))
    # canonical is minimal among all valid permutations in lex order
    import itertools
    valid = [p for p in itertools.permutations(range(3))
             if all(adj[p[i], i] for i in range(3))]
    assert tuple(res.pi) == min(valid)
