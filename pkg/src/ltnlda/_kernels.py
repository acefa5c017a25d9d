"""Token-level Gibbs sweeps compiled with numba.

Uniform variates are drawn by the caller from its numpy Generator, so the
sweeps themselves are deterministic functions of their inputs.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def _pick(weights, total, u):
    r = u * total
    K = weights.shape[0]
    acc = 0.0
    for j in range(K - 1):
        acc += weights[j]
        if r < acc:
            return j
    return K - 1


@numba.njit(cache=True)
def sweep_z_given_beta(tokens, doc_ptr, z, nk, x, beta, alpha, u):
    """Collapsed-phi update of every token against per-sample compositions.

    ``beta[d, k, v]`` may be any positive rescaling along ``k`` of the leaf
    probabilities of subcommunity ``k`` in sample ``d``.  ``nk`` (D, K) and
    ``x`` (D, K, V) are updated in place.
    """
    D, K = nk.shape
    w = np.empty(K)
    for d in range(D):
        for n in range(doc_ptr[d], doc_ptr[d + 1]):
            v = tokens[n]
            k = z[n]
            nk[d, k] -= 1
            x[d, k, v] -= 1
            total = 0.0
            for j in range(K):
                w[j] = (nk[d, j] + alpha) * beta[d, j, v]
                total += w[j]
            k = _pick(w, total, u[n])
            z[n] = k
            nk[d, k] += 1
            x[d, k, v] += 1


@numba.njit(cache=True)
def sweep_z_lda(tokens, doc_ptr, z, ndk, nkv, nk, alpha, gamma, u):
    """Standard collapsed LDA update (phi and beta both integrated out)."""
    D, K = ndk.shape
    V = nkv.shape[1]
    vg = V * gamma
    w = np.empty(K)
    for d in range(D):
        for n in range(doc_ptr[d], doc_ptr[d + 1]):
            v = tokens[n]
            k = z[n]
            ndk[d, k] -= 1
            nkv[k, v] -= 1
            nk[k] -= 1
            total = 0.0
            for j in range(K):
                w[j] = (ndk[d, j] + alpha) * (nkv[j, v] + gamma) / (nk[j] + vg)
                total += w[j]
            k = _pick(w, total, u[n])
            z[n] = k
            ndk[d, k] += 1
            nkv[k, v] += 1
            nk[k] += 1


@numba.njit(cache=True)
def leaf_counts_by_topic(tokens, doc_ptr, z, D, K, V):
    x = np.zeros((D, K, V), dtype=np.int64)
    for d in range(D):
        for n in range(doc_ptr[d], doc_ptr[d + 1]):
            x[d, z[n], tokens[n]] += 1
    return x
