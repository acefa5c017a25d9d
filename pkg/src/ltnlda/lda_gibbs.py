"""Collapsed Gibbs sampling for plain LDA, the baseline model."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from ._kernels import sweep_z_lda
from .ltn_gibbs import ChainConfig

__all__ = ["LdaHyperparams", "LdaState", "LdaChain", "init_lda_state", "sweep_lda",
           "lda_log_joint", "run_lda_chain", "lda_point_estimates"]


@dataclass(frozen=True)
class LdaHyperparams:
    """Symmetric Dirichlet priors: ``alpha`` on abundances, ``gamma`` on compositions."""

    K: int
    alpha: float = 1.0
    gamma: float = 1.0

    def __post_init__(self):
        if int(self.K) < 1:
            raise ValueError("K must be at least 1")
        if not (self.alpha > 0 and self.gamma > 0):
            raise ValueError("alpha and gamma must be positive")

    def to_dict(self):
        return {"K": self.K, "alpha": self.alpha, "gamma": self.gamma}


@dataclass
class LdaState:
    z: np.ndarray
    ndk: np.ndarray
    nkv: np.ndarray
    nk: np.ndarray

    def copy(self):
        return LdaState(self.z.copy(), self.ndk.copy(), self.nkv.copy(), self.nk.copy())


def init_lda_state(corpus, hyper, rng):
    K = int(hyper.K)
    z = rng.integers(0, K, size=corpus.tokens.shape[0]).astype(np.int64)
    return _state_from_z(corpus, z, K)


def _state_from_z(corpus, z, K):
    doc = np.repeat(np.arange(corpus.D), corpus.N)
    ndk = np.zeros((corpus.D, K), dtype=np.int64)
    nkv = np.zeros((K, corpus.V), dtype=np.int64)
    np.add.at(ndk, (doc, z), 1)
    np.add.at(nkv, (z, corpus.tokens), 1)
    return LdaState(z=z, ndk=ndk, nkv=nkv, nk=nkv.sum(axis=1))


def sweep_lda(state, corpus, hyper, rng):
    u = rng.random(state.z.shape[0])
    sweep_z_lda(corpus.tokens, corpus.doc_ptr, state.z, state.ndk, state.nkv, state.nk,
                float(hyper.alpha), float(hyper.gamma), u)
    return state


def lda_log_joint(state, corpus, hyper):
    """Collapsed log p(w, z)."""
    K, a, g = int(hyper.K), float(hyper.alpha), float(hyper.gamma)
    V = corpus.V
    lp = np.sum(gammaln(K * a) - gammaln(corpus.N + K * a))
    lp += np.sum(gammaln(state.ndk + a)) - state.ndk.size * gammaln(a)
    lp += K * gammaln(V * g) - np.sum(gammaln(state.nk + V * g))
    lp += np.sum(gammaln(state.nkv + g)) - state.nkv.size * gammaln(g)
    return float(lp)


def lda_point_estimates(ndk, nkv, N, hyper):
    """Posterior-mean abundances (D, K) and compositions (K, V) from counts."""
    K, a, g = int(hyper.K), float(hyper.alpha), float(hyper.gamma)
    V = nkv.shape[-1]
    phi = (ndk + a) / (np.asarray(N)[:, None] + K * a)
    beta = (nkv + g) / (nkv.sum(axis=-1, keepdims=True) + V * g)
    return phi, beta


@dataclass
class LdaChain:
    hyper: LdaHyperparams
    config: ChainConfig
    N: np.ndarray
    saved_iterations: np.ndarray
    ndk: np.ndarray
    nkv: np.ndarray
    log_joint: np.ndarray
    sweep_seconds: np.ndarray
    final_state: LdaState = field(default=None, repr=False)

    def __len__(self):
        return len(self.saved_iterations)

    @property
    def K(self):
        return int(self.hyper.K)


def run_lda_chain(corpus, hyper, config, rng=None, state=None, record_log_joint=True):
    """Collapsed Gibbs chain for LDA; snapshots keep the count matrices."""
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if state is None:
        state = init_lda_state(corpus, hyper, rng)
    S, K = config.n_saved, int(hyper.K)
    ndk = np.empty((S, corpus.D, K), dtype=np.int64)
    nkv = np.empty((S, K, corpus.V), dtype=np.int64)
    lj = np.full(config.iterations, np.nan)
    seconds = np.empty(config.iterations)
    saved = []
    for it in range(config.iterations):
        t0 = time.perf_counter()
        sweep_lda(state, corpus, hyper, rng)
        seconds[it] = time.perf_counter() - t0
        if record_log_joint:
            lj[it] = lda_log_joint(state, corpus, hyper)
        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            s = len(saved)
            ndk[s] = state.ndk
            nkv[s] = state.nkv
            saved.append(it)
    return LdaChain(hyper=hyper, config=config, N=corpus.N.copy(),
                    saved_iterations=np.array(saved), ndk=ndk, nkv=nkv, log_joint=lj,
                    sweep_seconds=seconds, final_state=state)
