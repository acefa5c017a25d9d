import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltnlda.simulate import generate_tree
from ltnlda.tree import (LEFT, NewickError, PhyloTree, beta_to_psi, decompose_counts,
                         parse_newick, partition_nodes, psi_to_beta, root_to_leaf_path)


def test_parse_balanced():
    t = parse_newick("((a,b),(c,d));")
    assert (t.V, t.p) == (4, 3)
    assert t.leaf_desc_count[t.root] == 4
    assert t.labels == ("a", "b", "c", "d")


def test_parse_caterpillar_spine():
    t = parse_newick("(a,(b,(c,d)));")
    assert list(t.leaf_desc_count[: t.p]) == [4, 3, 2]


def test_non_binary_rejected():
    with pytest.raises(NewickError, match="binary"):
        parse_newick("((a,b,c),d);")


@pytest.mark.parametrize("text", ["((a,b),(c,a));", "((a,b),(c,d)", "((a,b),(c,d));x", "();"])
def test_malformed(text):
    with pytest.raises(NewickError):
        parse_newick(text)


def test_branch_lengths_comments_and_quotes():
    t = parse_newick("(('x y':0.1,b:2e-3)90:0.5,[note](c,d):1);")
    assert t.labels == ("x y", "b", "c", "d")
    assert parse_newick(t.to_newick()).labels == t.labels


def test_bad_branch_length():
    with pytest.raises(NewickError):
        parse_newick("((a:xx,b),(c,d));")


def test_nested_round_trip():
    nested = (("a", "b"), ("c", ("d", "e")))
    assert PhyloTree.from_nested(nested).to_nested() == nested


def test_node_table_csv():
    t = parse_newick("((a,b),(c,d));")
    lines = t.to_csv().strip().split("\n")
    assert lines[0] == "node_id,parent_id,left_id,right_id,label,leaf_desc_count"
    assert len(lines) == 1 + t.n_nodes


def test_prune_suppresses_unary_nodes():
    t = parse_newick("((a,b),(c,d));").prune(["a", "c", "d"])
    assert t.V == 3 and t.to_nested() == ("a", ("c", "d"))


@pytest.mark.parametrize("C,upper,lower", [(5, [], [0, 1, 2]), (2, [0, 1, 2], [])])
def test_partition_balanced(C, upper, lower):
    part = partition_nodes(parse_newick("((a,b),(c,d));"), C)
    assert list(part.upper) == upper and list(part.lower) == lower


def test_partition_full_size_tree_deterministic():
    a = partition_nodes(generate_tree(49, "random", seed=0), 5)
    b = partition_nodes(generate_tree(49, "random", seed=0), 5)
    assert np.array_equal(a.upper, b.upper) and np.array_equal(a.lower, b.lower)


def test_uniform_beta_gives_zero_psi():
    np.testing.assert_allclose(beta_to_psi(parse_newick("((a,b),(c,d));"), np.full(4, 0.25)),
                               0.0, atol=1e-15)


def test_hand_computed_psi():
    # theta = (0.75, 2/3, 1/2) by direct evaluation of left mass / node mass
    t = parse_newick("((v1,v2),(v3,v4));")
    beta = np.array([0.5, 0.25, 0.125, 0.125])
    np.testing.assert_allclose(beta_to_psi(t, beta), [np.log(3), np.log(2), 0.0], atol=1e-14)
    np.testing.assert_allclose(psi_to_beta(t, [np.log(3), np.log(2), 0.0]), beta, atol=1e-15)


def test_zero_mass_subtree():
    t = parse_newick("((v1,v2),(v3,v4));")
    beta = np.array([0.5, 0.5, 0.0, 0.0])
    with pytest.raises(ValueError):
        beta_to_psi(t, beta)
    psi = beta_to_psi(t, beta, floor=1e-12)
    assert np.all(np.isfinite(psi))


def test_psi_zero_gives_uniform():
    t = generate_tree(8, "balanced")
    np.testing.assert_allclose(psi_to_beta(t, np.zeros(t.p)), 1 / 8)


def test_decompose_counts():
    t = parse_newick("((v1,v2),(v3,v4));")
    y = decompose_counts(t, [3, 1, 2, 2])
    assert (y[0], y[1], y[2]) == (8, 4, 4)
    assert not decompose_counts(t, [0, 0, 0, 0]).any()
    y = decompose_counts(t, [0, 0, 7, 0])
    assert list(y) == [7, 0, 7, 0, 0, 7, 0]


def test_root_to_leaf_path():
    t = parse_newick("((v1,v2),(v3,v4));")
    assert root_to_leaf_path(t, 0) == [(0, LEFT), (1, LEFT)]
    assert len(root_to_leaf_path(parse_newick("(a,(b,(c,d)));"), 2)) == 3
    with pytest.raises(IndexError):
        root_to_leaf_path(t, 4)


@pytest.mark.parametrize("shape", ["balanced", "caterpillar", "random"])
@pytest.mark.parametrize("V", [4, 16, 49])
def test_round_trip_batch(shape, V):
    t = generate_tree(V, shape, seed=1)
    beta = np.random.default_rng(V).dirichlet(np.ones(V), size=200)
    np.testing.assert_allclose(psi_to_beta(t, beta_to_psi(t, beta)), beta, rtol=0, atol=1e-12)


trees = st.builds(generate_tree, st.integers(2, 30),
                  st.sampled_from(["balanced", "caterpillar", "random"]), st.integers(0, 10**6))


@settings(max_examples=60, deadline=None)
@given(trees, st.integers(0, 2**32 - 1))
def test_round_trip_property(tree, seed):
    beta = np.random.default_rng(seed).dirichlet(np.ones(tree.V))
    beta = np.maximum(beta, 1e-6)
    beta /= beta.sum()
    np.testing.assert_allclose(psi_to_beta(tree, beta_to_psi(tree, beta)), beta, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(trees, st.integers(1, 40), st.integers(1, 40))
def test_partition_monotone_in_C(tree, c1, c2):
    lo, hi = sorted((c1, c2))
    assert set(partition_nodes(tree, hi).upper) <= set(partition_nodes(tree, lo).upper)


@settings(max_examples=60, deadline=None)
@given(trees, st.integers(0, 2**32 - 1))
def test_mass_conservation(tree, seed):
    x = np.random.default_rng(seed).integers(0, 50, size=tree.V)
    y = decompose_counts(tree, x)
    assert y[0] == x.sum()
    np.testing.assert_array_equal(y[: tree.p], y[tree.left] + y[tree.right])
