"""Collapsed blocked Gibbs sampler for LTN-LDA.

The subcommunity abundances ``phi_d`` are integrated out.  Each sweep updates,
in order, the token assignments ``z``, the Polya-Gamma auxiliaries ``v``, the
node log-odds ``psi[d, k]``, the subcommunity means ``mu[k]`` and the
diagonal node variances ``tau[k]``.  With a diagonal covariance every
Gaussian update is a set of independent scalar draws.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import gammaln, log_expit

from ._kernels import leaf_counts_by_topic, sweep_z_given_beta
from .polya_gamma import DEFAULT_THRESHOLD, sample_pg_array
from .tree import _subtree_mass, log_psi_to_beta, partition_nodes

__all__ = [
    "LtnHyperparams",
    "ChainConfig",
    "GibbsState",
    "LtnChain",
    "init_state",
    "update_z",
    "update_v",
    "update_psi",
    "update_mu",
    "update_mu_marginal",
    "update_tau",
    "log_joint",
    "run_chain",
    "sweep",
    "kappa",
    "scaled_leaf_probs",
]

TAU_FLOOR = 1e-12


@dataclass(frozen=True)
class LtnHyperparams:
    """Prior configuration.

    ``mu0`` and ``lambda0`` are the prior mean and the diagonal of the prior
    covariance of each ``mu[k]``; scalars are broadcast over nodes.  Node
    variances get an ``IG(a1, b)`` prior on the upper tree (``|A| >= C``) and
    ``IG(a2, b)`` on the lower tree.
    """

    K: int
    C: int
    alpha: float = 1.0
    mu0: object = 0.0
    lambda0: object = 1.0
    a1: float = 1e4
    a2: float = 10.0
    b: float = 10.0

    def __post_init__(self):
        if int(self.K) < 1:
            raise ValueError("K must be at least 1")
        if int(self.C) < 1:
            raise ValueError("C must be at least 1")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if np.any(np.asarray(self.lambda0, dtype=float) <= 0):
            raise ValueError("lambda0 must be positive")
        if min(self.a1, self.a2, self.b) <= 0:
            raise ValueError("a1, a2 and b must be positive")

    def node_priors(self, tree):
        """Per-node ``(mu0, lambda0, shape)`` arrays of length p."""
        p = tree.p
        mu0 = np.broadcast_to(np.asarray(self.mu0, dtype=float), (p,)).copy()
        lam0 = np.broadcast_to(np.asarray(self.lambda0, dtype=float), (p,)).copy()
        part = partition_nodes(tree, self.C)
        shape = np.where(part.is_upper, float(self.a1), float(self.a2))
        return mu0, lam0, shape

    def to_dict(self):
        d = {}
        for key in ("K", "C", "alpha", "mu0", "lambda0", "a1", "a2", "b"):
            val = getattr(self, key)
            d[key] = np.asarray(val).tolist() if np.ndim(val) else val
        return d


@dataclass(frozen=True)
class ChainConfig:
    iterations: int = 2000
    burn_in: int = 1000
    thin: int = 10
    seed: int = 0
    pg_threshold: int = DEFAULT_THRESHOLD
    fixed_mu_tau: bool = False
    block_mu_psi: bool = True

    def __post_init__(self):
        if not self.iterations > self.burn_in >= 0:
            raise ValueError("need iterations > burn_in >= 0")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")

    @property
    def n_saved(self):
        return -(-(self.iterations - self.burn_in) // self.thin)

    def to_dict(self):
        return {k: getattr(self, k) for k in
                ("iterations", "burn_in", "thin", "seed", "pg_threshold", "fixed_mu_tau",
                 "block_mu_psi")}


@dataclass
class GibbsState:
    """Mutable sampler state.

    ``x[d, k, v]`` counts the tokens of ASV ``v`` in sample ``d`` assigned to
    subcommunity ``k``; ``y`` holds the matching node counts for all
    ``2V - 1`` nodes and ``nk = y[..., 0]`` the per-subcommunity totals.
    """

    z: np.ndarray
    x: np.ndarray
    y: np.ndarray
    psi: np.ndarray
    v: np.ndarray
    mu: np.ndarray
    tau: np.ndarray

    @property
    def nk(self):
        return self.y[..., 0]

    def copy(self):
        return GibbsState(*(getattr(self, f).copy() for f in
                            ("z", "x", "y", "psi", "v", "mu", "tau")))


def _check_inputs(corpus, tree, hyper):
    if corpus.V != tree.V:
        raise ValueError(f"corpus has {corpus.V} ASVs but the tree has {tree.V} leaves")
    if corpus.D < 1:
        raise ValueError("empty corpus")
    if hyper.K < 1:
        raise ValueError("K must be at least 1")


def init_state(corpus, tree, hyper, rng, mu=None, tau=None):
    """Random starting state.

    Token assignments are uniform over subcommunities and the log-odds are
    drawn from the prior.  Passing ``mu`` and ``tau`` (each K x p) fixes the
    subcommunity parameters, as for held-out scoring; ``psi`` is then drawn
    around them.
    """
    _check_inputs(corpus, tree, hyper)
    D, K, p = corpus.D, int(hyper.K), tree.p
    mu0, lam0, shape = hyper.node_priors(tree)
    z = rng.integers(0, K, size=corpus.tokens.shape[0]).astype(np.int64)
    x = leaf_counts_by_topic(corpus.tokens, corpus.doc_ptr, z, D, K, tree.V)
    y = _subtree_mass(tree, x)
    if mu is None:
        mu = mu0 + np.sqrt(lam0) * rng.standard_normal((K, p))
        tau = np.tile(stats.invgamma.median(shape, scale=hyper.b), (K, 1))
        psi = mu0 + np.sqrt(lam0) * rng.standard_normal((D, K, p))
    else:
        mu = np.array(mu, dtype=float)
        tau = np.array(tau, dtype=float)
        if mu.shape != (K, p) or tau.shape != (K, p):
            raise ValueError(f"mu and tau must have shape {(K, p)}")
        psi = mu[None] + np.sqrt(tau)[None] * rng.standard_normal((D, K, p))
    return GibbsState(z=z, x=x, y=y, psi=psi, v=np.zeros((D, K, p)), mu=mu, tau=tau)


def scaled_leaf_probs(tree, psi):
    """Leaf probabilities of each (d, k), rescaled along k so the max is 1.

    Returns an array (D, K, V) suitable for :func:`sweep_z_given_beta`; the
    rescaling keeps the token weights representable for extreme ``psi``.
    """
    logb = log_psi_to_beta(tree, psi)
    logb -= logb.max(axis=1, keepdims=True)
    return np.exp(logb)


def update_z(state, corpus, tree, hyper, rng):
    """Resample every token assignment, then rebuild the node counts."""
    beta = scaled_leaf_probs(tree, state.psi)
    u = rng.random(state.z.shape[0])
    nk = state.y[..., 0].copy()
    sweep_z_given_beta(corpus.tokens, corpus.doc_ptr, state.z, nk, state.x, beta,
                       float(hyper.alpha), u)
    state.y = _subtree_mass(tree, state.x)
    return state


def update_v(state, tree, rng, threshold=DEFAULT_THRESHOLD):
    p = tree.p
    state.v = sample_pg_array(state.y[..., :p], state.psi, rng, threshold)
    return state


def kappa(state, tree):
    p = tree.p
    return state.y[..., tree.left] - 0.5 * state.y[..., :p]


def update_psi(state, tree, rng):
    prior_prec = 1.0 / state.tau[None]
    prec = prior_prec + state.v
    mean = (state.mu[None] * prior_prec + kappa(state, tree)) / prec
    state.psi = mean + rng.standard_normal(mean.shape) / np.sqrt(prec)
    return state


def update_mu(state, tree, hyper, rng):
    mu0, lam0, _ = hyper.node_priors(tree)
    D = state.psi.shape[0]
    prec = 1.0 / lam0 + D / state.tau
    mean = (mu0 / lam0 + state.psi.sum(axis=0) / state.tau) / prec
    state.mu = mean + rng.standard_normal(mean.shape) / np.sqrt(prec)
    return state


def update_mu_marginal(state, tree, hyper, rng):
    """Draw ``mu`` with ``psi`` integrated out, given ``v`` and the counts.

    Under the Polya-Gamma augmentation each ``psi[d, k, i]`` contributes a
    Gaussian pseudo-observation of ``mu[k, i]`` with precision
    ``v / (1 + tau v)``.  Following this with :func:`update_psi` is a blocked
    draw of ``(mu, psi)``, which avoids the slow coupled random walk of the
    two when the node variances are small.
    """
    mu0, lam0, _ = hyper.node_priors(tree)
    shrink = 1.0 / (1.0 + state.tau[None] * state.v)
    prec = 1.0 / lam0 + (state.v * shrink).sum(axis=0)
    mean = (mu0 / lam0 + (kappa(state, tree) * shrink).sum(axis=0)) / prec
    state.mu = mean + rng.standard_normal(mean.shape) / np.sqrt(prec)
    return state


def update_tau(state, tree, hyper, rng):
    _, _, shape = hyper.node_priors(tree)
    D = state.psi.shape[0]
    sq = ((state.psi - state.mu[None]) ** 2).sum(axis=0)
    post_shape = shape + D / 2.0
    rate = hyper.b + 0.5 * sq
    state.tau = np.maximum(rate / rng.gamma(np.broadcast_to(post_shape, rate.shape)), TAU_FLOOR)
    return state


def log_joint(state, corpus, tree, hyper):
    """Log density of (w, z, psi, mu, tau) with phi integrated out."""
    K = int(hyper.K)
    a = float(hyper.alpha)
    mu0, lam0, shape = hyper.node_priors(tree)
    nk = state.y[..., 0]
    N = corpus.N
    lp = np.sum(gammaln(K * a) - gammaln(N + K * a))
    lp += np.sum(gammaln(nk + a)) - nk.size * gammaln(a)
    y_left = state.y[..., tree.left]
    y_right = state.y[..., tree.right]
    lp += np.sum(y_left * log_expit(state.psi) + y_right * log_expit(-state.psi))
    lp += np.sum(stats.norm.logpdf(state.psi, state.mu[None], np.sqrt(state.tau)[None]))
    lp += np.sum(stats.norm.logpdf(state.mu, mu0, np.sqrt(lam0)))
    lp += np.sum(stats.invgamma.logpdf(state.tau, np.broadcast_to(shape, state.tau.shape),
                                       scale=hyper.b))
    return float(lp)


def sweep(state, corpus, tree, hyper, rng, threshold=DEFAULT_THRESHOLD, fixed=False,
          block=True):
    """One full Gibbs scan.

    The plain scan updates z, v, psi, mu, tau.  With ``block`` the means are
    drawn before psi with psi integrated out (see :func:`update_mu_marginal`).
    In ``fixed`` mode mu and tau are left untouched.
    """
    update_z(state, corpus, tree, hyper, rng)
    update_v(state, tree, rng, threshold)
    if fixed:
        update_psi(state, tree, rng)
    elif block:
        update_mu_marginal(state, tree, hyper, rng)
        update_psi(state, tree, rng)
        update_tau(state, tree, hyper, rng)
    else:
        update_psi(state, tree, rng)
        update_mu(state, tree, hyper, rng)
        update_tau(state, tree, hyper, rng)
    return state


@dataclass
class LtnChain:
    """Thinned post-burn-in snapshots of one LTN-LDA chain."""

    hyper: LtnHyperparams
    config: ChainConfig
    N: np.ndarray
    saved_iterations: np.ndarray
    nk: np.ndarray
    psi: np.ndarray
    mu: np.ndarray
    tau: np.ndarray
    log_joint: np.ndarray
    sweep_seconds: np.ndarray
    final_state: GibbsState = field(default=None, repr=False)

    def __len__(self):
        return len(self.saved_iterations)

    @property
    def K(self):
        return int(self.hyper.K)


def run_chain(corpus, tree, hyper, config, rng=None, state=None, mu=None, tau=None,
              record_log_joint=True):
    """Run the sampler and collect thinned snapshots.

    In fixed mode (``config.fixed_mu_tau``) the subcommunity means and
    variances are held at ``mu`` and ``tau`` (both required) and only the
    sample-level quantities are updated.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    fixed = config.fixed_mu_tau
    if fixed and (mu is None or tau is None):
        raise ValueError("fixed mode needs mu and tau")
    if state is None:
        state = init_state(corpus, tree, hyper, rng, mu=mu if fixed else None,
                           tau=tau if fixed else None)
    else:
        _check_inputs(corpus, tree, hyper)

    S = config.n_saved
    D, K, p = corpus.D, int(hyper.K), tree.p
    nk = np.empty((S, D, K), dtype=np.int64)
    psi = np.empty((S, D, K, p))
    mus = np.empty((S, K, p))
    taus = np.empty((S, K, p))
    lj = np.full(config.iterations, np.nan)
    seconds = np.empty(config.iterations)
    saved = []
    for it in range(config.iterations):
        t0 = time.perf_counter()
        sweep(state, corpus, tree, hyper, rng, config.pg_threshold, fixed, config.block_mu_psi)
        seconds[it] = time.perf_counter() - t0
        if record_log_joint:
            lj[it] = log_joint(state, corpus, tree, hyper)
        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            s = len(saved)
            nk[s] = state.y[..., 0]
            psi[s] = state.psi
            mus[s] = state.mu
            taus[s] = state.tau
            saved.append(it)
    return LtnChain(hyper=hyper, config=config, N=corpus.N.copy(),
                    saved_iterations=np.array(saved), nk=nk, psi=psi, mu=mus, tau=taus,
                    log_joint=lj, sweep_seconds=seconds, final_state=state)
