"""Synthetic corpora with known ground truth.

Trees are generated rather than read because the trees used for the
published simulations are not available in machine-readable form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .corpus import Corpus
from .ltn_gibbs import LtnHyperparams
from .tree import PhyloTree, psi_to_beta

__all__ = ["generate_tree", "generate_ltn_corpus", "generate_lda_corpus", "LtnTruth",
           "LdaTruth", "full_setup", "reduced_setup", "sequential_binomial_counts"]

TREE_SHAPES = ("balanced", "caterpillar", "random")


def generate_tree(V, shape="balanced", seed=0):
    """Binary tree over leaves ``t1 .. tV`` (left-to-right in that order).

    ``random`` splits each clade at a uniformly chosen point, recursively.
    """
    if V < 2:
        raise ValueError("a tree needs at least two leaves")
    if shape not in TREE_SHAPES:
        raise ValueError(f"shape must be one of {TREE_SHAPES}")
    labels = [f"t{i + 1}" for i in range(V)]
    rng = np.random.default_rng(seed)

    def build(items):
        if len(items) == 1:
            return items[0]
        if shape == "balanced":
            cut = (len(items) + 1) // 2
        elif shape == "caterpillar":
            cut = 1
        else:
            cut = int(rng.integers(1, len(items)))
        return (build(items[:cut]), build(items[cut:]))

    return PhyloTree.from_nested(build(labels))


def sequential_binomial_counts(tree, n, psi, rng):
    """Drop ``n`` tokens down the tree with left-probabilities ``expit(psi)``.

    ``n`` has shape (...,) and ``psi`` shape (..., p); returns node counts
    (..., 2V-1).
    """
    n = np.asarray(n, dtype=np.int64)
    theta = expit(np.asarray(psi, dtype=float))
    y = np.zeros(n.shape + (tree.n_nodes,), dtype=np.int64)
    y[..., 0] = n
    for i in range(tree.p):
        left = rng.binomial(y[..., i], theta[..., i])
        y[..., tree.left[i]] = left
        y[..., tree.right[i]] = y[..., i] - left
    return y


def _tokens_z(x, rng=None):
    """Assignments aligned with :attr:`Corpus.tokens` order.

    Within each run of identical tokens the assignments are sorted by label,
    or randomly arranged when ``rng`` is given.  Samplers that scan tokens
    in a fixed order need the random arrangement to see a draw from the
    joint distribution.
    """
    D, K, V = x.shape
    ks = np.tile(np.arange(K), D * V)
    z = np.repeat(ks, x.transpose(0, 2, 1).ravel()).astype(np.int64)
    if rng is not None:
        group = np.repeat(np.arange(D * V), x.sum(axis=1).ravel())
        z = z[np.lexsort((rng.random(z.shape[0]), group))]
    return z


@dataclass
class LtnTruth:
    tree: PhyloTree
    phi: np.ndarray
    psi: np.ndarray
    mu: np.ndarray
    tau: np.ndarray
    x: np.ndarray
    z: np.ndarray
    seed: int

    @property
    def beta_dk(self):
        return psi_to_beta(self.tree, self.psi)

    @property
    def beta_k(self):
        return psi_to_beta(self.tree, self.mu)

    def to_dict(self):
        return {"model": "ltn", "seed": self.seed, "tree": self.tree.to_newick(),
                "phi": self.phi.tolist(), "mu": self.mu.tolist(), "tau": self.tau.tolist(),
                "psi": self.psi.tolist()}


@dataclass
class LdaTruth:
    phi: np.ndarray
    beta_k: np.ndarray
    x: np.ndarray
    z: np.ndarray
    seed: int

    def to_dict(self):
        return {"model": "lda", "seed": self.seed, "phi": self.phi.tolist(),
                "beta_k": self.beta_k.tolist()}


def _per_sample(N_d, D):
    N = np.broadcast_to(np.asarray(N_d, dtype=np.int64), (D,)).copy()
    if np.any(N < 0):
        raise ValueError("sample sizes must be nonnegative")
    return N


def generate_ltn_corpus(tree, hyper, D, N_d, seed=0, mu=None, tau=None, knockout=False):
    """Draw a corpus from the LTN-LDA generative model.

    Parameters
    ----------
    mu, tau : ndarray (K, p), optional
        Subcommunity means and node variances.  Drawn from the prior when not
        given; pass a training set's values to simulate a matching test set.
    knockout : bool
        Force every node variance to zero so that each subcommunity has the
        same composition in every sample.

    Returns
    -------
    corpus : Corpus
    truth : LtnTruth
    """
    rng = np.random.default_rng(seed)
    K, p = int(hyper.K), tree.p
    mu0, lam0, shape = hyper.node_priors(tree)
    if tau is None:
        tau = hyper.b / rng.gamma(np.broadcast_to(shape, (K, p)))
    if mu is None:
        mu = mu0 + np.sqrt(lam0) * rng.standard_normal((K, p))
    mu = np.asarray(mu, dtype=float)
    tau = np.zeros((K, p)) if knockout else np.asarray(tau, dtype=float)
    N = _per_sample(N_d, D)
    psi = mu[None] + np.sqrt(tau)[None] * rng.standard_normal((D, K, p))
    phi = rng.dirichlet(np.full(K, float(hyper.alpha)), size=D)
    nk = np.stack([rng.multinomial(N[d], phi[d]) for d in range(D)])
    y = sequential_binomial_counts(tree, nk, psi, rng)
    x = y[..., tree.p:]
    corpus = Corpus(x.sum(axis=1), labels=tree.labels)
    truth = LtnTruth(tree=tree, phi=phi, psi=psi, mu=mu, tau=tau, x=x, z=_tokens_z(x, rng),
                     seed=seed)
    return corpus, truth


def generate_lda_corpus(hyper, V, D, N_d, seed=0, labels=None):
    """Draw a corpus from plain LDA with symmetric Dirichlet priors."""
    rng = np.random.default_rng(seed)
    K = int(hyper.K)
    N = _per_sample(N_d, D)
    beta = rng.dirichlet(np.full(V, float(hyper.gamma)), size=K)
    phi = rng.dirichlet(np.full(K, float(hyper.alpha)), size=D)
    x = np.zeros((D, K, V), dtype=np.int64)
    for d in range(D):
        nk = rng.multinomial(N[d], phi[d])
        for k in range(K):
            x[d, k] = rng.multinomial(nk[k], beta[k])
    corpus = Corpus(x.sum(axis=1), labels=labels)
    return corpus, LdaTruth(phi=phi, beta_k=beta, x=x, z=_tokens_z(x, rng), seed=seed)


def full_setup(tree_seed=0):
    """Tree and hyperparameters of the full-size robustness simulation.

    50 samples of 10,000 reads over 49 ASVs, four subcommunities, C = 5.
    Returns ``(tree, hyper, D, N_d)``.
    """
    tree = generate_tree(49, "random", seed=tree_seed)
    return tree, LtnHyperparams(K=4, C=5), 50, 10_000


def reduced_setup(tree_seed=0):
    """Desk-scale version: 20 samples of 2,000 reads over 16 ASVs, K = 3, C = 3."""
    tree = generate_tree(16, "random", seed=tree_seed)
    return tree, LtnHyperparams(K=3, C=3), 20, 2_000
