"""Document-completion perplexity and the cross-validated (K, C) grid.

Each test sample is split into two halves.  A Gibbs sampler with the
subcommunity-level parameters held at their training posterior means runs on
the first half; the second half is scored by the Monte Carlo average, over
kept iterates, of its log predictive probability.
"""

from __future__ import annotations

import csv
import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from ._kernels import leaf_counts_by_topic, sweep_z_given_beta
from .corpus import Corpus
from .lda_gibbs import LdaHyperparams, run_lda_chain
from .ltn_gibbs import ChainConfig, LtnHyperparams, run_chain
from .summary import summarize_lda, summarize_ltn
from .tree import log_psi_to_beta

__all__ = ["PerplexityResult", "split_document", "split_corpus", "perplexity_ltn",
           "perplexity_lda", "SCORING_CONFIG", "make_folds", "cv_grid", "grid_curves",
           "find_inflection", "two_stage_selection", "write_grid_csv", "write_curves_csv"]

# 100 kept iterates after 100 burn-in sweeps
SCORING_CONFIG = ChainConfig(iterations=200, burn_in=100, thin=1, seed=0)


@dataclass(frozen=True)
class PerplexityResult:
    """Predictive log-likelihoods of the scored halves.

    Attributes
    ----------
    loglik : ndarray (D,)
        Monte Carlo estimate of each sample's log predictive probability.
    tokens : ndarray (D,)
        Number of scored tokens per sample.
    iterations : int
        Number of Gibbs iterates averaged over.
    """

    loglik: np.ndarray
    tokens: np.ndarray
    iterations: int

    @property
    def perplexity(self):
        return float(np.exp(-self.loglik.sum() / self.tokens.sum()))


def split_document(counts):
    """Split one sample's ASV counts into two halves by alternating tokens.

    Tokens are laid out in ASV order; even positions go to the first half, so
    a sample of ``N`` reads gives halves of ``ceil(N/2)`` and ``floor(N/2)``.
    """
    counts = np.asarray(counts, dtype=np.int64)
    N = int(counts.sum())
    if N < 2:
        raise ValueError(f"a sample needs at least 2 reads to be split, got {N}")
    start = np.concatenate([[0], np.cumsum(counts)[:-1]])
    # even positions in [start, start + c)
    first = (counts + (start % 2 == 0)) // 2
    return first, counts - first


def split_corpus(corpus):
    halves = [split_document(row) for row in corpus.counts]
    a = np.stack([h[0] for h in halves])
    b = np.stack([h[1] for h in halves])
    kw = dict(sample_ids=corpus.sample_ids, labels=corpus.labels)
    return Corpus(a, **kw), Corpus(b, **kw)


def _score(phi, log_beta, scored):
    """Per-sample sum over scored tokens of log sum_k phi_k beta_k^w.

    ``phi`` (I, D, K), ``log_beta`` (I, D, K, V) or broadcastable, ``scored``
    (D, V).  Returns the average over iterates, shape (D,).
    """
    logp = logsumexp(np.log(phi)[..., None] + log_beta, axis=-2)  # (I, D, V)
    per_iter = np.where(scored > 0, scored * logp, 0.0).sum(axis=-1)
    return per_iter.mean(axis=0)


def _check_test(test_corpus):
    if test_corpus is None or test_corpus.D == 0:
        raise ValueError("empty test set")


def perplexity_ltn(train_summary, test_corpus, tree, hyper, config=SCORING_CONFIG, rng=None):
    """LTN-LDA perplexity with ``mu`` and ``tau`` fixed at training values.

    ``train_summary`` is a :class:`PosteriorSummary` from an LTN-LDA fit (or
    any object with ``mu`` and ``tau`` attributes of shape (K, p)).
    """
    mu = getattr(train_summary, "mu", None)
    tau = getattr(train_summary, "tau", None)
    if mu is None or tau is None:
        raise ValueError("trained summary lacks mu and tau")
    _check_test(test_corpus)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    hyper = replace(hyper, K=mu.shape[0])
    first, second = split_corpus(test_corpus)
    chain = run_chain(first, tree, hyper, replace(config, fixed_mu_tau=True), rng=rng,
                      mu=mu, tau=tau, record_log_joint=False)
    K, a = chain.K, float(hyper.alpha)
    phi = (chain.nk + a) / (first.N[None, :, None] + K * a)
    log_beta = log_psi_to_beta(tree, chain.psi)
    loglik = _score(phi, log_beta, second.counts)
    return PerplexityResult(loglik=loglik, tokens=second.N, iterations=len(chain))


def perplexity_lda(train_summary, test_corpus, hyper, config=SCORING_CONFIG, rng=None):
    """LDA perplexity with the compositions fixed at ``train_summary.beta_k``."""
    beta = getattr(train_summary, "beta_k", train_summary)
    if beta is None:
        raise ValueError("trained summary lacks beta_k")
    beta = np.asarray(beta, dtype=float)
    _check_test(test_corpus)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    first, second = split_corpus(test_corpus)
    D, (K, V) = first.D, beta.shape
    if V != first.V:
        raise ValueError(f"beta has {V} ASVs but the corpus has {first.V}")
    alpha = float(hyper.alpha)
    z = rng.integers(0, K, size=first.tokens.shape[0]).astype(np.int64)
    x = leaf_counts_by_topic(first.tokens, first.doc_ptr, z, D, K, V)
    nk = x.sum(axis=2)
    table = np.ascontiguousarray(np.broadcast_to(beta, (D, K, V)))
    kept = []
    for it in range(config.iterations):
        u = rng.random(z.shape[0])
        sweep_z_given_beta(first.tokens, first.doc_ptr, z, nk, x, table, alpha, u)
        if it >= config.burn_in and (it - config.burn_in) % config.thin == 0:
            kept.append(nk.copy())
    phi = (np.stack(kept) + alpha) / (first.N[None, :, None] + K * alpha)
    with np.errstate(divide="ignore"):
        log_beta = np.log(beta)[None, None]
    loglik = _score(phi, log_beta, second.counts)
    return PerplexityResult(loglik=loglik, tokens=second.N, iterations=len(kept))


# -- cross-validation grid ------------------------------------------------

def make_folds(D, folds, seed):
    """Random partition of ``range(D)`` into ``folds`` groups."""
    if folds < 2:
        raise ValueError("need at least 2 folds")
    if folds > D:
        raise ValueError(f"{folds} folds leave some fold without samples (D = {D})")
    order = np.random.default_rng(seed).permutation(D)
    return [np.sort(f) for f in np.array_split(order, folds)]


def _cell_seed(master, K, C, fold):
    return np.random.SeedSequence([int(master), int(K), int(C), int(fold)])


def _run_cell(job):
    model, corpus, tree, K, C, fold, test_idx, hyper_kw, fit_config, score_config, master = job
    train_idx = np.setdiff1d(np.arange(corpus.D), test_idx)
    train, test = corpus.subset(train_idx), corpus.subset(test_idx)
    fit_rng, score_rng = (np.random.default_rng(s)
                          for s in _cell_seed(master, K, C, fold).spawn(2))
    if model == "ltn":
        hyper = LtnHyperparams(K=K, C=C, **hyper_kw)
        chain = run_chain(train, tree, hyper, fit_config, rng=fit_rng, record_log_joint=False)
        summary = summarize_ltn(chain, tree)
        res = perplexity_ltn(summary, test, tree, hyper, score_config, rng=score_rng)
    else:
        hyper = LdaHyperparams(K=K, **hyper_kw)
        chain = run_lda_chain(train, hyper, fit_config, rng=fit_rng, record_log_joint=False)
        summary = summarize_lda(chain)
        res = perplexity_lda(summary, test, hyper, score_config, rng=score_rng)
    return {"K": K, "C": C, "fold": fold, "perplexity": res.perplexity,
            "loglik": float(res.loglik.sum()), "tokens": int(res.tokens.sum())}


def cv_grid(corpus, tree, K_grid, C_grid, folds, fit_config, score_config=SCORING_CONFIG,
            seed=0, model="ltn", hyper_kw=None, workers=1):
    """Cross-validated perplexity over a (K, C) grid.

    Every (K, C, fold) cell fits on the other folds and scores the held-out
    one, with its own seed derived from ``(seed, K, C, fold)`` so results do
    not depend on ``workers``.  For ``model="lda"`` the C grid is ignored and
    cells carry ``C = 0``.

    Returns
    -------
    list of dict
        One row per cell with keys K, C, fold, perplexity, loglik, tokens.
    """
    if model not in ("ltn", "lda"):
        raise ValueError("model must be 'ltn' or 'lda'")
    K_grid = [int(k) for k in K_grid]
    C_grid = [int(c) for c in C_grid] if model == "ltn" else [0]
    if not K_grid or not C_grid:
        raise ValueError("empty grid")
    parts = make_folds(corpus.D, folds, seed)
    hyper_kw = dict(hyper_kw or {})
    jobs = [(model, corpus, tree, K, C, f, parts[f], hyper_kw, fit_config, score_config, seed)
            for K in K_grid for C in C_grid for f in range(folds)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_cell, jobs))
    return [_run_cell(j) for j in jobs]


def grid_curves(rows):
    """Per-(K, C) perplexity pooled over folds, with a fold standard error.

    Log-likelihoods are summed over folds before the exponential transform.
    """
    cells = {}
    for r in rows:
        cells.setdefault((r["K"], r["C"]), []).append(r)
    out = []
    for (K, C), rs in sorted(cells.items()):
        ll = sum(r["loglik"] for r in rs)
        n = sum(r["tokens"] for r in rs)
        fold_perp = np.array([r["perplexity"] for r in rs])
        se = float(fold_perp.std(ddof=1) / math.sqrt(len(rs))) if len(rs) > 1 else 0.0
        out.append({"K": K, "C": C, "perplexity": math.exp(-ll / n), "se": se,
                    "folds": len(rs)})
    return out


def find_inflection(values, curve, rtol=0.01):
    """Smallest grid value after which the curve stops improving.

    Returns ``values[i]`` for the first ``i`` such that every later step
    improves the (decreasing) curve by less than ``rtol`` relative to the
    preceding point.  The last value is returned if there is no such ``i``.
    """
    curve = np.asarray(curve, dtype=float)
    if len(values) != len(curve) or len(curve) == 0:
        raise ValueError("values and curve must be non-empty and of equal length")
    gain = (curve[:-1] - curve[1:]) / curve[:-1]
    for i in range(len(curve)):
        if np.all(gain[i:] < rtol):
            return values[i]
    return values[-1]


def two_stage_selection(rows, rtol=0.01):
    """Choose (K, C) from grid rows by the two-stage inflection rule.

    Stage one finds the inflection of each K's perplexity curve over C and
    takes the most frequent one (ties to the smaller C).  Stage two fixes
    that C and takes the inflection of the curve over K.
    """
    curves = grid_curves(rows)
    Ks = sorted({r["K"] for r in curves})
    picks = []
    for K in Ks:
        pts = sorted((r["C"], r["perplexity"]) for r in curves if r["K"] == K)
        picks.append(find_inflection([c for c, _ in pts], [q for _, q in pts], rtol))
    counts = Counter(picks)
    C = min(counts, key=lambda c: (-counts[c], c))
    pts = sorted((r["K"], r["perplexity"]) for r in curves if r["C"] == C)
    K = find_inflection([k for k, _ in pts], [q for _, q in pts], rtol)
    return {"K": K, "C": C, "C_per_K": dict(zip(Ks, picks))}


def write_grid_csv(rows, path):
    _write_rows(rows, path, ["K", "C", "fold", "perplexity", "loglik", "tokens"])


def write_curves_csv(rows, path):
    _write_rows(grid_curves(rows), path, ["K", "C", "perplexity", "se", "folds"])


def _write_rows(rows, path, fields):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(float(r[k])) if isinstance(r[k], float) else r[k])
                        for k in fields})
