import numpy as np
import pytest
from scipy import stats

from ltnlda._kernels import leaf_counts_by_topic
from ltnlda.lda_gibbs import LdaHyperparams
from ltnlda.ltn_gibbs import LtnHyperparams
from ltnlda.simulate import (generate_lda_corpus, generate_ltn_corpus, generate_tree,
                             full_setup, sequential_binomial_counts)
from ltnlda.tree import decompose_counts, psi_to_beta


def test_tree_shapes():
    assert generate_tree(4, "balanced").leaf_depths.max() == 2
    assert generate_tree(5, "caterpillar").leaf_depths.max() == 4
    a, b = generate_tree(20, "random", seed=3), generate_tree(20, "random", seed=3)
    assert a.to_newick() == b.to_newick()
    assert generate_tree(7).labels == tuple(f"t{i}" for i in range(1, 8))
    with pytest.raises(ValueError):
        generate_tree(1)


def test_sample_sizes_and_truth_consistency():
    tree = generate_tree(10, "random", seed=0)
    corpus, truth = generate_ltn_corpus(tree, LtnHyperparams(K=3, C=3), 6, 250, seed=1)
    np.testing.assert_array_equal(corpus.N, 250)
    np.testing.assert_array_equal(truth.x.sum(axis=1), corpus.counts)
    # assignments regrouped by subcommunity reproduce the tracked leaf counts
    x = leaf_counts_by_topic(corpus.tokens, corpus.doc_ptr, truth.z, 6, 3, 10)
    np.testing.assert_array_equal(x, truth.x)
    y = decompose_counts(tree, x)
    np.testing.assert_array_equal(y[..., 0], x.sum(-1))


def test_seeded_reproducibility():
    tree = generate_tree(8)
    a = generate_ltn_corpus(tree, LtnHyperparams(K=2, C=2), 3, 100, seed=5)[0]
    b = generate_ltn_corpus(tree, LtnHyperparams(K=2, C=2), 3, 100, seed=5)[0]
    np.testing.assert_array_equal(a.counts, b.counts)


def test_knockout_makes_compositions_identical():
    tree = generate_tree(12, "random", seed=2)
    _, truth = generate_ltn_corpus(tree, LtnHyperparams(K=2, C=4), 5, 100, seed=0,
                                   knockout=True)
    np.testing.assert_allclose(truth.beta_dk, np.broadcast_to(truth.beta_k, truth.beta_dk.shape),
                               atol=1e-15)


def test_sequential_binomial_matches_multinomial():
    tree = generate_tree(6, "random", seed=7)
    psi = np.random.default_rng(0).normal(0, 1, tree.p)
    n = 200_000
    y = sequential_binomial_counts(tree, np.array(n), psi, np.random.default_rng(1))
    observed = y[tree.p:]
    expected = n * psi_to_beta(tree, psi)
    _, pval = stats.chisquare(observed, expected)
    assert pval > 1e-3
    np.testing.assert_array_equal(y[: tree.p], y[tree.left] + y[tree.right])


def test_lda_corpus_single_topic():
    corpus, truth = generate_lda_corpus(LdaHyperparams(K=1), 5, 4, 60, seed=0)
    np.testing.assert_array_equal(truth.x[:, 0], corpus.counts)


def test_lda_large_gamma_near_uniform():
    _, truth = generate_lda_corpus(LdaHyperparams(K=2, gamma=1e6), 4, 2, 10, seed=0)
    np.testing.assert_allclose(truth.beta_k, 0.25, atol=1e-2)


def test_lda_token_frequencies_converge():
    corpus, truth = generate_lda_corpus(LdaHyperparams(K=3), 8, 2, 100_000, seed=4)
    for d in range(2):
        # the realised subcommunity counts are the conditioning, so use them
        nk = truth.x[d].sum(-1)
        expected = (nk[:, None] * truth.beta_k).sum(0)
        _, pval = stats.chisquare(corpus.counts[d], expected)
        assert pval > 1e-3
    mix = truth.phi[0] @ truth.beta_k
    np.testing.assert_allclose(corpus.counts[0] / 100_000, mix, atol=0.01)


def test_full_size_configuration():
    tree, hyper, D, N = full_setup()
    assert (tree.V, hyper.K, hyper.C, D, N) == (49, 4, 5, 50, 10_000)
    assert (hyper.alpha, hyper.a1, hyper.a2, hyper.b) == (1.0, 1e4, 10.0, 10.0)
