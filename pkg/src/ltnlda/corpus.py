"""Count-matrix corpus of D samples over V ASVs."""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = ["Corpus"]


@dataclass(frozen=True, eq=False)
class Corpus:
    """Samples as ASV count vectors.

    ``counts[d, v]`` is the number of reads of ASV ``v`` in sample ``d``.  The
    token view expands each sample into leaf indices sorted by ASV, so token
    ``n`` of sample ``d`` is ``tokens[doc_ptr[d] + n]``.
    """

    counts: np.ndarray
    sample_ids: tuple = None
    labels: tuple = None

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2:
            raise ValueError("counts must be a D x V matrix")
        if counts.shape[0] == 0:
            raise ValueError("corpus has no samples")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(np.mod(counts, 1) == 0):
                raise ValueError("counts must be integers")
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)
        D, V = counts.shape
        ids = self.sample_ids if self.sample_ids is not None else [f"s{d + 1}" for d in range(D)]
        labels = self.labels if self.labels is not None else [f"t{v + 1}" for v in range(V)]
        if len(ids) != D or len(labels) != V:
            raise ValueError("sample_ids/labels do not match the count matrix shape")
        object.__setattr__(self, "sample_ids", tuple(str(s) for s in ids))
        object.__setattr__(self, "labels", tuple(str(s) for s in labels))

    @classmethod
    def from_tokens(cls, docs, V, **kwargs):
        counts = np.zeros((len(docs), V), dtype=np.int64)
        for d, doc in enumerate(docs):
            np.add.at(counts[d], np.asarray(doc, dtype=np.int64), 1)
        return cls(counts, **kwargs)

    @property
    def D(self):
        return self.counts.shape[0]

    @property
    def V(self):
        return self.counts.shape[1]

    @property
    def N(self):
        return self.counts.sum(axis=1)

    @cached_property
    def doc_ptr(self):
        ptr = np.zeros(self.D + 1, dtype=np.int64)
        np.cumsum(self.N, out=ptr[1:])
        return ptr

    @cached_property
    def tokens(self):
        V = self.V
        leaves = np.tile(np.arange(V), self.D)
        return np.repeat(leaves, self.counts.ravel()).astype(np.int64)

    def doc_tokens(self, d):
        return self.tokens[self.doc_ptr[d]:self.doc_ptr[d + 1]]

    def subset(self, index):
        index = np.asarray(index)
        return Corpus(self.counts[index], tuple(self.sample_ids[i] for i in index), self.labels)

    def align_to(self, tree):
        """Reorder columns to the tree's leaf order, matching by label."""
        if set(self.labels) != set(tree.labels):
            extra = sorted(set(self.labels) - set(tree.labels))
            missing = sorted(set(tree.labels) - set(self.labels))
            raise ValueError(f"labels differ from tree leaves; not in tree: {extra}, not in data: {missing}")
        pos = {label: j for j, label in enumerate(self.labels)}
        order = [pos[label] for label in tree.labels]
        return Corpus(self.counts[:, order], self.sample_ids, tree.labels)
