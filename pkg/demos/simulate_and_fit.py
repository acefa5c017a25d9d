"""Simulate a heterogeneous corpus, fit LTN-LDA and LDA, and compare recovery.

Run with ``python3 demos/simulate_and_fit.py``; it takes about a minute on one core.
"""

import numpy as np

from ltnlda import (ChainConfig, LdaHyperparams, l2_distance, run_chain, run_lda_chain,
                    summarize_lda, summarize_ltn, top_asvs)
from ltnlda.simulate import generate_ltn_corpus, reduced_setup

tree, hyper, D, N_d = reduced_setup()
corpus, truth = generate_ltn_corpus(tree, hyper, D, N_d, seed=1)
print(f"{D} samples x {tree.V} ASVs, {hyper.K} subcommunities, C = {hyper.C}")

config = ChainConfig(iterations=2000, burn_in=1000, thin=5, seed=1)
ltn = summarize_ltn(run_chain(corpus, tree, hyper, config), tree, labels=tree.labels)
ltn = ltn.aligned_to(truth.beta_k)

lda = summarize_lda(run_lda_chain(corpus, LdaHyperparams(K=hyper.K), config),
                    labels=tree.labels).aligned_to(truth.beta_k)

print("mean L2 error      LTN-LDA    LDA")
print(f"  abundances     {l2_distance(ltn.phi, truth.phi):8.3f} {l2_distance(lda.phi, truth.phi):8.3f}")
print(f"  compositions   {l2_distance(ltn.beta_k, truth.beta_k):8.3f} "
      f"{l2_distance(lda.beta_k, truth.beta_k):8.3f}")
# only LTN-LDA estimates sample-specific compositions
print(f"  per-sample     {l2_distance(ltn.beta_dk, truth.beta_dk):8.3f}      n/a")

for k, asvs in enumerate(top_asvs(ltn, 4, tree.labels)):
    print(f"subcommunity {k + 1}: top ASVs {', '.join(asvs)}; "
          f"mean abundance {ltn.phi[:, k].mean():.2f} (truth {truth.phi[:, k].mean():.2f})")

lo, hi = ltn.phi_interval[0].T
print("sample 1 abundance 95% intervals:", np.round(np.c_[lo, hi], 3).tolist())
