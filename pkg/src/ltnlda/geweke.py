"""Joint-distribution ("getting it right") checks for the Gibbs kernels.

Two simulators of the joint law of data and latents are compared:

* marginal-conditional: independent draws from the prior, then data;
* successive-conditional: one Gibbs sweep on the latents given the data,
  then fresh data given the latents, repeated.

If every kernel leaves its full conditional invariant, both produce the
same distribution, so summary statistics should agree up to Monte Carlo
error.  Successive draws are autocorrelated and their standard errors use
batch means.
"""

from __future__ import annotations

import numpy as np

from .corpus import Corpus
from .lda_gibbs import LdaState, sweep_lda
from .ltn_gibbs import GibbsState, sweep
from .polya_gamma import DEFAULT_THRESHOLD
from .simulate import _tokens_z, sequential_binomial_counts
from .tree import partition_nodes

__all__ = ["ltn_statistics", "lda_statistics", "LTN_STAT_NAMES", "LDA_STAT_NAMES", "ltn_marginal_conditional",
           "ltn_successive_conditional", "lda_marginal_conditional",
           "lda_successive_conditional", "compare_statistics"]

LTN_STAT_NAMES = ("mean_mu", "mean_psi", "mean_tau_lower", "mean_sq_psi_dev_lower",
                  "frac_z0", "mean_sq_share_z0", "frac_left_root", "mean_psi_sq")
LDA_STAT_NAMES = ("frac_z0", "mean_sq_share_z0", "frac_w0", "frac_w0_and_z0",
                  "mean_sq_word_share", "max_word_share")


# -- LTN-LDA ------------------------------------------------------------

def _ltn_prior_latents(tree, hyper, D, N, rng):
    K, p = int(hyper.K), tree.p
    mu0, lam0, shape = hyper.node_priors(tree)
    tau = hyper.b / rng.gamma(np.broadcast_to(shape, (K, p)))
    mu = mu0 + np.sqrt(lam0) * rng.standard_normal((K, p))
    psi = mu[None] + np.sqrt(tau)[None] * rng.standard_normal((D, K, p))
    phi = rng.dirichlet(np.full(K, float(hyper.alpha)), size=D)
    nk = np.stack([rng.multinomial(N, phi[d]) for d in range(D)])
    return mu, tau, psi, nk


def _ltn_data(tree, psi, nk, rng):
    y = sequential_binomial_counts(tree, nk, psi, rng)
    x = y[..., tree.p:]
    corpus = Corpus(x.sum(axis=1))
    return corpus, x, y


def ltn_statistics(state, corpus, tree, lower):
    nk = state.y[..., 0]
    N = corpus.N
    share = nk[:, 0] / np.maximum(N, 1)
    dev = (state.psi - state.mu[None]) ** 2
    return np.array([
        state.mu.mean(),
        state.psi.mean(),
        state.tau[:, lower].mean() if lower.size else 0.0,
        dev[..., lower].mean() if lower.size else 0.0,
        nk[:, 0].sum() / N.sum(),
        np.mean(share ** 2),
        state.y[..., tree.left[0]].sum() / N.sum(),
        np.mean(state.psi ** 2),
    ])


def ltn_marginal_conditional(tree, hyper, D, N, draws, rng):
    lower = partition_nodes(tree, hyper.C).lower
    out = np.empty((draws, len(LTN_STAT_NAMES)))
    for i in range(draws):
        mu, tau, psi, nk = _ltn_prior_latents(tree, hyper, D, N, rng)
        corpus, x, y = _ltn_data(tree, psi, nk, rng)
        state = GibbsState(z=_tokens_z(x, rng), x=x, y=y, psi=psi, v=np.zeros_like(psi), mu=mu, tau=tau)
        out[i] = ltn_statistics(state, corpus, tree, lower)
    return out


def ltn_successive_conditional(tree, hyper, D, N, sweeps, rng, threshold=DEFAULT_THRESHOLD,
                               block=True):
    lower = partition_nodes(tree, hyper.C).lower
    mu, tau, psi, nk = _ltn_prior_latents(tree, hyper, D, N, rng)
    corpus, x, y = _ltn_data(tree, psi, nk, rng)
    state = GibbsState(z=_tokens_z(x, rng), x=x, y=y, psi=psi, v=np.zeros_like(psi), mu=mu, tau=tau)
    out = np.empty((sweeps, len(LTN_STAT_NAMES)))
    for i in range(sweeps):
        sweep(state, corpus, tree, hyper, rng, threshold, block=block)
        corpus, x, y = _ltn_data(tree, state.psi, state.y[..., 0], rng)
        state.x, state.y, state.z = x, y, _tokens_z(x, rng)
        out[i] = ltn_statistics(state, corpus, tree, lower)
    return out


# -- LDA ----------------------------------------------------------------

def _lda_data(hyper, V, rng, z_counts):
    K = int(hyper.K)
    beta = rng.dirichlet(np.full(V, float(hyper.gamma)), size=K)
    D = z_counts.shape[0]
    x = np.zeros((D, K, V), dtype=np.int64)
    for d in range(D):
        for k in range(K):
            x[d, k] = rng.multinomial(z_counts[d, k], beta[k])
    return x


def _lda_state(x, rng):
    corpus = Corpus(x.sum(axis=1))
    z = _tokens_z(x, rng)
    ndk = x.sum(axis=2)
    nkv = x.sum(axis=0)
    return corpus, LdaState(z=z, ndk=ndk, nkv=nkv, nk=nkv.sum(axis=1))


def lda_statistics(state, corpus):
    N = corpus.N
    share = state.ndk[:, 0] / np.maximum(N, 1)
    word_share = corpus.counts / np.maximum(N, 1)[:, None]
    return np.array([
        state.ndk[:, 0].sum() / N.sum(),
        np.mean(share ** 2),
        corpus.counts[:, 0].sum() / N.sum(),
        state.nkv[0, 0] / N.sum(),
        np.mean(np.sum(word_share ** 2, axis=1)),
        np.mean(word_share.max(axis=1)),
    ])


def _lda_prior_z_counts(hyper, D, N, rng):
    K = int(hyper.K)
    phi = rng.dirichlet(np.full(K, float(hyper.alpha)), size=D)
    return np.stack([rng.multinomial(N, phi[d]) for d in range(D)])


def lda_marginal_conditional(hyper, V, D, N, draws, rng):
    out = np.empty((draws, len(LDA_STAT_NAMES)))
    for i in range(draws):
        ndk = _lda_prior_z_counts(hyper, D, N, rng)
        x = _lda_data(hyper, V, rng, ndk)
        corpus, state = _lda_state(x, rng)
        out[i] = lda_statistics(state, corpus)
    return out


def lda_successive_conditional(hyper, V, D, N, sweeps, rng):
    # beta is integrated out, so fresh data given z use a fresh prior beta
    x = _lda_data(hyper, V, rng, _lda_prior_z_counts(hyper, D, N, rng))
    corpus, state = _lda_state(x, rng)
    out = np.empty((sweeps, len(LDA_STAT_NAMES)))
    for i in range(sweeps):
        sweep_lda(state, corpus, hyper, rng)
        x = _lda_data(hyper, V, rng, state.ndk)
        corpus, state = _lda_state(x, rng)
        out[i] = lda_statistics(state, corpus)
    return out


# -- comparison ---------------------------------------------------------

def _batch_se(samples, n_batches):
    n = samples.shape[0] // n_batches * n_batches
    batches = samples[:n].reshape(n_batches, -1, samples.shape[1]).mean(axis=1)
    return batches.std(axis=0, ddof=1) / np.sqrt(n_batches)


def compare_statistics(marginal, successive, n_batches=50, burn_in=0):
    """z-scores for the difference in means of each statistic."""
    successive = successive[burn_in:]
    se_m = marginal.std(axis=0, ddof=1) / np.sqrt(marginal.shape[0])
    se_s = _batch_se(successive, n_batches)
    diff = marginal.mean(axis=0) - successive.mean(axis=0)
    return diff / np.sqrt(se_m ** 2 + se_s ** 2)
