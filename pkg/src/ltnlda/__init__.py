"""LTN-LDA: mixed-membership modelling of microbiome samples with
cross-sample heterogeneity in subcommunity compositions.

Subcommunity compositions vary by sample through a logistic-tree normal
prior on the phylogenetic tree; inference is by collapsed blocked Gibbs
sampling with Polya-Gamma augmentation.
"""

__version__ = "0.1.0"

from .corpus import Corpus
from .evaluation import (PerplexityResult, cv_grid, find_inflection, perplexity_lda,
                         perplexity_ltn, split_document, two_stage_selection)
from .lda_gibbs import LdaHyperparams, run_lda_chain
from .ltn_gibbs import ChainConfig, LtnHyperparams, run_chain
from .polya_gamma import pg_mean, pg_var, sample_pg
from .simulate import generate_lda_corpus, generate_ltn_corpus, generate_tree
from .summary import (PosteriorSummary, align_labels, l2_distance, summarize_lda,
                      summarize_ltn, top_asvs)
from .tree import (PhyloTree, beta_to_psi, parse_newick, partition_nodes, psi_to_beta,
                   read_newick)

__all__ = [
    "Corpus", "PhyloTree", "parse_newick", "read_newick", "partition_nodes", "beta_to_psi",
    "psi_to_beta", "pg_mean", "pg_var", "sample_pg", "LtnHyperparams", "ChainConfig",
    "run_chain", "LdaHyperparams", "run_lda_chain", "PosteriorSummary", "align_labels",
    "summarize_ltn", "summarize_lda", "l2_distance", "top_asvs", "PerplexityResult",
    "split_document", "perplexity_ltn", "perplexity_lda", "cv_grid", "find_inflection",
    "two_stage_selection", "generate_tree", "generate_ltn_corpus", "generate_lda_corpus",
]
