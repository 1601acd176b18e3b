import itertools

import numpy as np
import pytest

from amplab.exceptions import BudgetError, SpecError
from amplab.rng import RngStream
from amplab.tensor_net import (
    BcpQuery,
    DenseTensor,
    OrderedMultigraph,
    alt_cycle_component_bound_check,
    alternating_tensor,
    bcp_ratio,
    contract_leading,
    eval_value_bruteforce,
    eval_value_contraction,
    load_network,
    poly_from_tensors,
    save_network,
    validate_bcp_query,
    wick_expectation,
    wick_expectation_mc,
)
from amplab.vecmat import mat, vec


def test_single_edge_is_inner_product():
    a, b = np.array([1.0, -2.0, 0.5]), np.array([2.0, 0.0, 4.0])
    g = OrderedMultigraph.from_edges(2, [(0, 1)])
    lab = {0: DenseTensor.vector(a), 1: DenseTensor.vector(b)}
    assert eval_value_bruteforce(g, lab, 3) == pytest.approx(a @ b)
    assert eval_value_contraction(g, lab, 3) == pytest.approx(a @ b)


def test_three_cycle_matches_hand_sum_and_trace():
    gen = RngStream(1).generator()
    n = 2
    a, b, c = gen.standard_normal((3, n, n))
    # vertex orderings chosen so each matrix reads (incoming, outgoing) edge
    g = OrderedMultigraph.from_edges(3, [(0, 1), (1, 2), (2, 0)],
                                     incidence=[[2, 0], [0, 1], [1, 2]])
    lab = {0: DenseTensor.from_array(a), 1: DenseTensor.from_array(b),
           2: DenseTensor.from_array(c)}
    hand = 0.0
    for i in range(n):
        for j in range(n):
            for k in range(n):
                hand += a[i, j] * b[j, k] * c[k, i]
    val = eval_value_bruteforce(g, lab, n)
    assert val == pytest.approx(hand, rel=1e-14)
    assert val == pytest.approx(np.trace(a @ b @ c), rel=1e-12)
    assert eval_value_contraction(g, lab, n) == pytest.approx(val, rel=1e-12)


def test_disconnected_union_multiplies():
    gen = RngStream(2).generator()
    vecs = gen.standard_normal((4, 3))
    g = OrderedMultigraph.from_edges(4, [(0, 1), (2, 3)])
    lab = {i: DenseTensor.vector(vecs[i]) for i in range(4)}
    expect = (vecs[0] @ vecs[1]) * (vecs[2] @ vecs[3])
    assert eval_value_bruteforce(g, lab, 3) == pytest.approx(expect)
    assert eval_value_contraction(g, lab, 3) == pytest.approx(expect)


def test_star_with_identity_center():
    gen = RngStream(3).generator()
    n, leaves = 4, 3
    edges = [(0, v) for v in range(1, leaves + 1)]
    g = OrderedMultigraph.from_edges(leaves + 1, edges)
    lab = {0: DenseTensor.identity(n, leaves)}
    for v in range(1, leaves + 1):
        lab[v] = DenseTensor.vector(gen.standard_normal(n))
    brute = eval_value_bruteforce(g, lab, n)
    expect = np.sum(lab[1].values * lab[2].values * lab[3].values)
    assert brute == pytest.approx(expect, rel=1e-12)
    assert eval_value_contraction(g, lab, n) == pytest.approx(brute, rel=1e-12)


def test_contraction_matches_bruteforce_on_random_trees():
    gen = RngStream(4).generator()
    for _ in range(20):
        nv = int(gen.integers(2, 7))
        n = int(gen.integers(2, 7))
        edges = [(int(gen.integers(0, v)), v) for v in range(1, nv)]
        g = OrderedMultigraph.from_edges(nv, edges)
        lab = {v: DenseTensor.from_array(gen.standard_normal((n,) * g.degree(v)))
               for v in range(nv)}
        a = eval_value_bruteforce(g, lab, n)
        b = eval_value_contraction(g, lab, n)
        assert abs(a - b) <= 1e-10 * max(abs(a), 1.0)


def test_bruteforce_budget_error():
    g = OrderedMultigraph.from_edges(2, [(0, 1)] * 16)
    lab = {0: DenseTensor.identity(16, 16), 1: DenseTensor.identity(16, 16)}
    with pytest.raises(BudgetError):
        eval_value_bruteforce(g, lab, 16)


def test_structured_materialization_cap():
    with pytest.raises(BudgetError):
        DenseTensor.identity(65, 2).to_dense()


def test_multigraph_validation():
    with pytest.raises(SpecError):
        OrderedMultigraph.from_edges(2, [(0, 0)])
    with pytest.raises(SpecError):
        OrderedMultigraph.from_edges(3, [(0, 1)])  # vertex 2 isolated


def test_wick_odd_multiplicity_vanishes():
    t = DenseTensor.from_array(RngStream(5).generator().standard_normal((3, 3)))
    assert wick_expectation(t, [0, 1], 3) == 0.0
    t3 = DenseTensor.from_array(RngStream(6).generator().standard_normal((3, 3, 3)))
    assert wick_expectation(t3, [0, 0, 0], 3) == 0.0


def test_wick_matrix_trace():
    m = RngStream(7).generator().standard_normal((4, 4))
    assert wick_expectation(DenseTensor.from_array(m), [0, 0], 4) == pytest.approx(np.trace(m))


def test_wick_rank_one_fourth_moment():
    a = np.array([0.5, -1.0, 2.0])
    t4 = DenseTensor.from_array(np.einsum("i,j,k,l->ijkl", a, a, a, a))
    exact = wick_expectation(t4, [0, 0, 0, 0], 3)
    assert exact == pytest.approx(3 * (a @ a) ** 2, rel=1e-12)
    mc, se = wick_expectation_mc(t4, [0, 0, 0, 0], 3, samples=200_000, rng=RngStream(8))
    assert abs(mc - exact) < 3 * se


def test_wick_mixed_streams_against_mc():
    gen = RngStream(9).generator()
    t = DenseTensor.from_array(gen.standard_normal((3, 3, 3, 3)))
    sigma = [0, 1, 0, 1]
    exact = wick_expectation(t, sigma, 3)
    mc, se = wick_expectation_mc(t, sigma, 3, samples=400_000, rng=RngStream(10))
    assert abs(mc - exact) < 3 * se


def test_bcp_worked_order4_example_vs_nested_loops():
    n = 4
    gen = RngStream(11).generator()
    t1 = gen.standard_normal((n,) * 4)
    t2 = gen.standard_normal((n,) * 4)
    # slots: T1[i1,i1,i2,i3], T2[i2,i3,i4,i4]
    query = BcpQuery(orders=[4, 4], ell=4, pi=[0, 0, 1, 2, 1, 2, 3, 3])
    rep = validate_bcp_query(query)
    assert rep == {"even_multiplicity": True, "connected": True}
    hand = 0.0
    for i1, i2, i3, i4 in itertools.product(range(n), repeat=4):
        hand += t1[i1, i1, i2, i3] * t2[i2, i3, i4, i4]
    ratio = bcp_ratio(query, [DenseTensor.from_array(t1), DenseTensor.from_array(t2)], n)
    assert ratio == pytest.approx(abs(hand) / n, rel=1e-12)


def test_bcp_validation_flags():
    disjoint = BcpQuery(orders=[2, 2], ell=2, pi=[0, 0, 1, 1])
    rep = validate_bcp_query(disjoint)
    assert rep["even_multiplicity"] is True
    assert rep["connected"] is False
    single = BcpQuery(orders=[2], ell=2, pi=[0, 1])
    assert validate_bcp_query(single)["even_multiplicity"] is False


def test_bcp_identity_tensors_ratio_one():
    n = 10
    query = BcpQuery(orders=[2, 2], ell=2, pi=[0, 1, 0, 1])
    tensors = [DenseTensor.identity(n, 2), DenseTensor.identity(n, 2)]
    assert bcp_ratio(query, tensors, n) == pytest.approx(1.0)


def test_bcp_diagonal_bound_holds():
    gen = RngStream(12).generator()
    n = 12
    bound = 1.5
    query = BcpQuery(orders=[2, 4], ell=3, pi=[0, 1, 0, 1, 2, 2])
    tensors = [DenseTensor.diagonal(gen.uniform(-bound, bound, n), 2),
               DenseTensor.diagonal(gen.uniform(-bound, bound, n), 4)]
    assert bcp_ratio(query, tensors, n) <= bound**2


def test_bcp_transposition_invariance():
    gen = RngStream(13).generator()
    n = 3
    for _ in range(10):
        t1 = gen.standard_normal((n,) * 3)
        t2 = gen.standard_normal((n,) * 3)
        query = BcpQuery(orders=[3, 3], ell=3, pi=[0, 1, 2, 0, 1, 2])
        base = bcp_ratio(query, [DenseTensor.from_array(t1), DenseTensor.from_array(t2)], n)
        perm = list(gen.permutation(3))
        # transpose t1's slots by perm and relabel its slice of pi consistently
        t1_t = np.transpose(t1, axes=perm)
        pi_new = [query.pi[perm[j]] for j in range(3)] + list(query.pi[3:])
        query2 = BcpQuery(orders=[3, 3], ell=3, pi=pi_new)
        alt = bcp_ratio(query2, [DenseTensor.from_array(t1_t), DenseTensor.from_array(t2)], n)
        assert alt == pytest.approx(base, rel=1e-12)


def test_alternating_order_two_is_identity():
    t = alternating_tensor(2, 2, 3)
    for i, j in itertools.product(range(6), repeat=2):
        assert t.entry((i, j)) == (1.0 if i == j else 0.0)
    x = RngStream(14).generator().standard_normal(6)
    assert np.allclose(contract_leading(t, [x]), x)


def test_alternating_order_four_contraction():
    t = alternating_tensor(4, 2, 2)
    gen = RngStream(15).generator()
    xs = gen.standard_normal((3, 4))
    x1, x2, x3 = (mat(r, 2, 2) for r in xs)
    out = contract_leading(t, list(xs))
    dense = t.to_dense()
    oracle = np.einsum("abcd,a,b,c->d", dense, xs[0], xs[1], xs[2])
    assert np.allclose(out, oracle, atol=1e-12)
    assert np.allclose(out, vec(x1 @ x2.T @ x3) / 2.0, atol=1e-12)


def test_alternating_order_six_matches_dense():
    t = alternating_tensor(6, 2, 2)
    gen = RngStream(16).generator()
    xs = gen.standard_normal((5, 4))
    out = contract_leading(t, list(xs))
    dense = t.to_dense()
    oracle = np.einsum("abcdef,a,b,c,d,e->f", dense, *xs)
    assert np.allclose(out, oracle, atol=1e-12)


def test_alternating_rejects_odd_order():
    with pytest.raises(SpecError):
        alternating_tensor(3, 2, 2)


def test_poly_diagonal_square():
    n = 6
    z = RngStream(17).generator().standard_normal((n, 2))
    term = ((1, 1), DenseTensor.diagonal(np.ones(n), 3))
    out = poly_from_tensors(None, [term], z)
    assert np.allclose(out, z[:, 1] ** 2)


def test_poly_constant_only():
    c = np.array([1.0, -2.0, 3.0])
    out = poly_from_tensors(DenseTensor.vector(c), [], np.zeros((3, 1)))
    assert np.array_equal(out, c)


def test_poly_alternating_cubic():
    m_dim, n_dim = 2, 3
    n = m_dim * n_dim
    t = alternating_tensor(4, m_dim, n_dim)
    z = RngStream(18).generator().standard_normal((n, 1))
    out = poly_from_tensors(None, [((0, 0, 0), t)], z)
    x = mat(z[:, 0], m_dim, n_dim)
    dense_oracle = np.einsum("abcd,a,b,c->d", t.to_dense(), z[:, 0], z[:, 0], z[:, 0])
    assert np.allclose(out, dense_oracle, atol=1e-12)
    assert np.allclose(out, vec(x @ x.T @ x) / n_dim, atol=1e-12)


def test_graph_lemma_base_case_equality():
    rep = alt_cycle_component_bound_check([[0, 0]])
    assert rep["holds"] and rep["lhs"] == rep["rhs"] == 2


def test_graph_lemma_disjoint_union_doubles():
    rep = alt_cycle_component_bound_check([[0, 0], [1, 1]])
    assert rep["lhs"] == 4 and rep["rhs"] == 4.0 and rep["holds"]


def test_graph_lemma_random_instances():
    gen = RngStream(19).generator()
    for _ in range(300):
        cycles = []
        for _ in range(int(gen.integers(1, 5))):
            walk = [int(v) for v in gen.integers(0, 8, size=int(gen.integers(1, 4)))]
            cycles.append(walk + walk)
        rep = alt_cycle_component_bound_check(cycles)
        assert rep["holds"], cycles


def test_graph_lemma_rejects_malformed():
    with pytest.raises(SpecError):
        alt_cycle_component_bound_check([[0, 1, 2]])  # odd length
    with pytest.raises(SpecError):
        alt_cycle_component_bound_check([[0, 1, 2, 3]])  # odd color degrees
    with pytest.raises(SpecError):
        alt_cycle_component_bound_check([])


def test_network_io_roundtrip(tmp_path):
    gen = RngStream(20).generator()
    n = 4
    g = OrderedMultigraph.from_edges(3, [(0, 1), (1, 2), (2, 0)],
                                     incidence=[[2, 0], [0, 1], [1, 2]])
    lab = {0: DenseTensor.from_array(gen.standard_normal((n, n))),
           1: DenseTensor.diagonal(gen.standard_normal(n), 2),
           2: DenseTensor.identity(n, 2)}
    val = eval_value_bruteforce(g, lab, n)
    path = tmp_path / "net.txt"
    save_network(str(path), g, lab)
    g2, lab2 = load_network(str(path))
    assert eval_value_bruteforce(g2, lab2, n) == pytest.approx(val, rel=1e-15)
    assert [lab2[v].kind for v in range(3)] == ["dense", "diagonal", "identity"]
