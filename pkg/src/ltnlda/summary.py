"""Posterior summaries of fitted chains, label alignment and recovery metrics."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment

from .lda_gibbs import lda_point_estimates
from .tree import psi_to_beta

__all__ = ["PosteriorSummary", "align_labels", "match_subcommunities", "summarize_ltn", "summarize_lda",
           "l2_distance", "top_asvs", "EXHAUSTIVE_MAX_K"]

EXHAUSTIVE_MAX_K = 8
_PERM_CACHE = {}


def _all_perms(K):
    if K not in _PERM_CACHE:
        _PERM_CACHE[K] = np.array(list(itertools.permutations(range(K))), dtype=np.int64)
    return _PERM_CACHE[K]


def align_labels(reference, candidate):
    """Permutation matching candidate rows to reference rows.

    Returns ``perm`` such that ``candidate[perm]`` is closest to ``reference``
    in total row-wise Euclidean distance.  The search is exhaustive for
    ``K <= 8`` (first minimiser in lexicographic order, so ties favour the
    identity) and uses an optimal assignment solver above that.
    """
    reference = np.asarray(reference, dtype=float)
    candidate = np.asarray(candidate, dtype=float)
    if reference.shape != candidate.shape:
        raise ValueError(f"shape mismatch: {reference.shape} vs {candidate.shape}")
    K = reference.shape[0]
    # cost[j, m]: distance between reference row j and candidate row m
    cost = np.linalg.norm(reference[:, None, :] - candidate[None, :, :], axis=-1)
    if K <= EXHAUSTIVE_MAX_K:
        perms = _all_perms(K)
        totals = cost[np.arange(K), perms].sum(axis=1)
        return perms[int(np.argmin(totals))].copy()
    rows, cols = linear_sum_assignment(cost)
    return cols[np.argsort(rows)]



def match_subcommunities(reference, candidate):
    """Order of candidate rows that best matches a reference with possibly different K.

    The first ``min(K_ref, K)`` entries are the optimal one-to-one matches of
    the reference rows, in reference order; when the candidate has extra rows
    they follow in their original order.
    """
    reference = np.asarray(reference, dtype=float)
    candidate = np.asarray(candidate, dtype=float)
    if reference.shape[0] == candidate.shape[0]:
        return align_labels(reference, candidate)
    cost = np.linalg.norm(reference[:, None, :] - candidate[None, :, :], axis=-1)
    rows, cols = linear_sum_assignment(cost)
    matched = list(cols[np.argsort(rows)])
    return np.array(matched + [k for k in range(candidate.shape[0]) if k not in matched])

@dataclass
class PosteriorSummary:
    """Label-aligned posterior means with 95% equal-tailed intervals.

    ``beta_dk``, ``mu`` and ``tau`` are only filled for LTN-LDA fits.
    Subcommunities are ordered by decreasing mean abundance.
    """

    phi: np.ndarray
    phi_interval: np.ndarray
    beta_k: np.ndarray
    beta_k_interval: np.ndarray
    beta_dk: np.ndarray = None
    beta_dk_interval: np.ndarray = None
    mu: np.ndarray = None
    tau: np.ndarray = None
    permutations: np.ndarray = None
    labels: tuple = None
    sample_ids: tuple = None

    @property
    def K(self):
        return self.phi.shape[1]

    def permuted(self, perm):
        """Relabel subcommunities: new label ``j`` is old label ``perm[j]``."""
        perm = np.asarray(perm)

        def take(a, axis):
            return None if a is None else np.take(a, perm, axis=axis)

        return replace(
            self,
            phi=take(self.phi, 1), phi_interval=take(self.phi_interval, 1),
            beta_k=take(self.beta_k, 0), beta_k_interval=take(self.beta_k_interval, 0),
            beta_dk=take(self.beta_dk, 1), beta_dk_interval=take(self.beta_dk_interval, 1),
            mu=take(self.mu, 0), tau=take(self.tau, 0),
            permutations=None if self.permutations is None else self.permutations[:, perm],
        )

    def aligned_to(self, reference_beta_k):
        """Relabel to best match another set of compositions (same K)."""
        return self.permuted(align_labels(reference_beta_k, self.beta_k))


def _align_iterations(beta_k):
    """Per-iteration permutations against a running-mean reference."""
    S, K = beta_k.shape[:2]
    perms = np.empty((S, K), dtype=np.int64)
    perms[0] = np.arange(K)
    ref = beta_k[0].copy()
    for i in range(1, S):
        perms[i] = align_labels(ref, beta_k[i])
        ref += (beta_k[i][perms[i]] - ref) / (i + 1)
    return perms


def _interval(a):
    return np.stack([np.quantile(a, 0.025, axis=0), np.quantile(a, 0.975, axis=0)], axis=-1)


def _apply(arr, perms, axis):
    # arr has the iteration axis first; reorder its label axis per iteration
    moved = np.moveaxis(arr, axis, 1)
    idx = perms.reshape(perms.shape + (1,) * (moved.ndim - 2))
    return np.moveaxis(np.take_along_axis(moved, idx, axis=1), 1, axis)


def _canonical(summary):
    order = np.argsort(-summary.phi.mean(axis=0), kind="stable")
    return summary.permuted(order)


def summarize_ltn(chain, tree, labels=None, sample_ids=None):
    """Posterior means of abundances and compositions from an LTN-LDA chain."""
    if len(chain) == 0:
        raise ValueError("chain has no saved iterations")
    K, alpha = chain.K, float(chain.hyper.alpha)
    phi = (chain.nk + alpha) / (chain.N[None, :, None] + K * alpha)
    beta_k = psi_to_beta(tree, chain.mu)
    beta_dk = psi_to_beta(tree, chain.psi)
    perms = _align_iterations(beta_k)
    phi = _apply(phi, perms, 2)
    beta_k = _apply(beta_k, perms, 1)
    beta_dk = _apply(beta_dk, perms, 2)
    mu = _apply(chain.mu, perms, 1)
    tau = _apply(chain.tau, perms, 1)
    summary = PosteriorSummary(
        phi=phi.mean(axis=0), phi_interval=_interval(phi),
        beta_k=beta_k.mean(axis=0), beta_k_interval=_interval(beta_k),
        beta_dk=beta_dk.mean(axis=0), beta_dk_interval=_interval(beta_dk),
        mu=mu.mean(axis=0), tau=tau.mean(axis=0), permutations=perms,
        labels=tuple(labels) if labels is not None else tree.labels,
        sample_ids=tuple(sample_ids) if sample_ids is not None else None,
    )
    return _canonical(summary)


def summarize_lda(chain, labels=None, sample_ids=None):
    """Posterior means from a collapsed LDA chain's count snapshots."""
    if len(chain) == 0:
        raise ValueError("chain has no saved iterations")
    phi, beta_k = lda_point_estimates(chain.ndk, chain.nkv, chain.N, chain.hyper)
    perms = _align_iterations(beta_k)
    phi = _apply(phi, perms, 2)
    beta_k = _apply(beta_k, perms, 1)
    summary = PosteriorSummary(
        phi=phi.mean(axis=0), phi_interval=_interval(phi),
        beta_k=beta_k.mean(axis=0), beta_k_interval=_interval(beta_k),
        permutations=perms,
        labels=tuple(labels) if labels is not None else None,
        sample_ids=tuple(sample_ids) if sample_ids is not None else None,
    )
    return _canonical(summary)


def l2_distance(estimate, truth):
    """Mean Euclidean distance between matching distributions (last axis)."""
    estimate = np.asarray(estimate, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if estimate.shape != truth.shape:
        raise ValueError(f"shape mismatch: {estimate.shape} vs {truth.shape}")
    return float(np.linalg.norm(estimate - truth, axis=-1).mean())


def top_asvs(summary, n, labels=None):
    """The ``n`` most abundant ASV labels of each subcommunity.

    Ties keep the leaf order.
    """
    beta = summary.beta_k if isinstance(summary, PosteriorSummary) else np.asarray(summary)
    V = beta.shape[1]
    if not 0 <= n <= V:
        raise ValueError(f"n must be between 0 and {V}")
    if labels is None:
        labels = getattr(summary, "labels", None) or tuple(str(v) for v in range(V))
    out = []
    for row in beta:
        order = np.argsort(-row, kind="stable")[:n]
        out.append([labels[v] for v in order])
    return out
