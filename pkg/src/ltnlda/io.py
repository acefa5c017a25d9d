"""Reading count matrices and writing chains, summaries and manifests.

All writers produce plain CSV or JSON with deterministic float formatting
(shortest round-trip representation), so reruns with the same seeds give
byte-identical files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import Corpus
from .tree import PhyloTree

__all__ = ["DataError", "IngestReport", "read_counts", "ingest_counts", "write_counts",
           "write_chain", "write_summary", "write_json", "read_json", "fmt"]


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class IngestReport:
    """What :func:`ingest_counts` kept and dropped."""

    retained_fraction: float
    dropped_labels: tuple
    pruned_tree_labels: tuple

    def to_dict(self):
        return {"retained_fraction": self.retained_fraction,
                "dropped_labels": list(self.dropped_labels),
                "pruned_tree_labels": list(self.pruned_tree_labels)}


def fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (np.integer,)):
        return str(int(x))
    return str(x)


def read_counts(path):
    """Read a samples-by-ASV count CSV.

    The header holds ASV labels after a leading sample-id column; each row is
    one sample, id first.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if len(rows) < 2 or len(rows[0]) < 2:
        raise DataError(f"{path}: empty count matrix")
    labels = [s.strip() for s in rows[0][1:]]
    if len(set(labels)) != len(labels):
        raise DataError(f"{path}: duplicate ASV labels in header")
    ids, counts = [], []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(labels) + 1:
            raise DataError(f"{path}:{i}: expected {len(labels) + 1} fields, got {len(row)}")
        ids.append(row[0].strip())
        vals = []
        for j, cell in enumerate(row[1:]):
            try:
                vals.append(int(cell))
            except ValueError:
                raise DataError(f"{path}:{i}: non-integer count {cell!r} "
                                f"for {labels[j]!r}") from None
        counts.append(vals)
    counts = np.array(counts, dtype=np.int64)
    if np.any(counts < 0):
        raise DataError(f"{path}: negative counts")
    return Corpus(counts, sample_ids=ids, labels=labels)


def ingest_counts(path, prune_threshold=0, tree=None):
    """Load counts, drop rare ASVs and reconcile the columns with a tree.

    Parameters
    ----------
    prune_threshold : int
        ASVs whose total count over all samples is below this are dropped.
    tree : PhyloTree, optional
        Every remaining ASV label must be a leaf of the tree.  Leaves with
        no remaining ASV are pruned from the tree, and the columns are
        reordered to its leaf order.

    Returns
    -------
    corpus : Corpus
    tree : PhyloTree or None
    report : IngestReport
    """
    corpus = read_counts(path)
    totals = corpus.counts.sum(axis=0)
    keep = totals >= prune_threshold
    if not keep.any():
        raise DataError(f"no ASV reaches the prune threshold {prune_threshold}")
    dropped = tuple(label for label, k in zip(corpus.labels, keep) if not k)
    grand = totals.sum()
    retained = float(totals[keep].sum() / grand) if grand > 0 else 1.0
    corpus = Corpus(corpus.counts[:, keep], corpus.sample_ids,
                    tuple(label for label, k in zip(corpus.labels, keep) if k))
    pruned = ()
    if tree is not None:
        unknown = sorted(set(corpus.labels) - set(tree.labels))
        if unknown:
            raise DataError(f"ASV labels not found in the tree: {unknown}")
        pruned = tuple(label for label in tree.labels if label not in set(corpus.labels))
        if pruned:
            if corpus.V < 2:
                raise DataError("fewer than two ASVs remain after pruning")
            tree = tree.prune(corpus.labels)
        corpus = corpus.align_to(tree)
    return corpus, tree, IngestReport(retained, dropped, pruned)


def write_counts(corpus, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample_id", *corpus.labels])
        for sid, row in zip(corpus.sample_ids, corpus.counts):
            w.writerow([sid, *(int(c) for c in row)])


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(x) for x in r])


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, PhyloTree):
        return o.to_newick()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_chain(chain, outdir, sample_ids=None):
    """Write a chain's snapshots as long-form CSV files.

    LTN-LDA chains produce ``nk.csv``, ``psi.csv``, ``mu.csv``, ``tau.csv``;
    LDA chains ``ndk.csv`` and ``nkv.csv``.  Both write ``log_joint.csv``
    with per-sweep timings.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    its = chain.saved_iterations
    ids = sample_ids if sample_ids is not None else [f"s{d + 1}" for d in range(len(chain.N))]
    if hasattr(chain, "psi"):
        S, D, K, p = chain.psi.shape
        _write_csv(out / "nk.csv", ["iteration", "sample", "k", "count"],
                   ((its[s], ids[d], k, chain.nk[s, d, k])
                    for s in range(S) for d in range(D) for k in range(K)))
        _write_csv(out / "psi.csv", ["iteration", "sample", "k", "node", "psi"],
                   ((its[s], ids[d], k, i, chain.psi[s, d, k, i])
                    for s in range(S) for d in range(D) for k in range(K) for i in range(p)))
        for name in ("mu", "tau"):
            arr = getattr(chain, name)
            _write_csv(out / f"{name}.csv", ["iteration", "k", "node", name],
                       ((its[s], k, i, arr[s, k, i])
                        for s in range(S) for k in range(K) for i in range(p)))
    else:
        S, D, K = chain.ndk.shape
        V = chain.nkv.shape[2]
        _write_csv(out / "ndk.csv", ["iteration", "sample", "k", "count"],
                   ((its[s], ids[d], k, chain.ndk[s, d, k])
                    for s in range(S) for d in range(D) for k in range(K)))
        _write_csv(out / "nkv.csv", ["iteration", "k", "asv", "count"],
                   ((its[s], k, v, chain.nkv[s, k, v])
                    for s in range(S) for k in range(K) for v in range(V)))
    _write_csv(out / "log_joint.csv", ["iteration", "log_joint"],
               ((i, lj) for i, lj in enumerate(chain.log_joint)))


def write_summary(summary, outdir, top_n=5):
    """Write ``phi.csv``, ``beta_k.csv``, ``beta_dk.csv``, ``intervals.csv``
    and ``top_asvs.json`` for a :class:`PosteriorSummary`."""
    from .summary import top_asvs

    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    K = summary.K
    D, V = summary.phi.shape[0], summary.beta_k.shape[1]
    ids = summary.sample_ids or tuple(f"s{d + 1}" for d in range(D))
    labels = summary.labels or tuple(f"t{v + 1}" for v in range(V))
    ks = [f"k{k + 1}" for k in range(K)]
    _write_csv(out / "phi.csv", ["sample_id", *ks],
               ([ids[d], *summary.phi[d]] for d in range(D)))
    _write_csv(out / "beta_k.csv", ["subcommunity", *labels],
               ([ks[k], *summary.beta_k[k]] for k in range(K)))
    rows = []
    for k in range(K):
        for d in range(D):
            rows.append(["phi", ids[d], ks[k], "", summary.phi[d, k],
                         *summary.phi_interval[d, k]])
        for v in range(V):
            rows.append(["beta_k", "", ks[k], labels[v], summary.beta_k[k, v],
                         *summary.beta_k_interval[k, v]])
    if summary.beta_dk is not None:
        _write_csv(out / "beta_dk.csv", ["sample_id", "subcommunity", "asv", "value"],
                   ((ids[d], ks[k], labels[v], summary.beta_dk[d, k, v])
                    for d in range(D) for k in range(K) for v in range(V)))
    _write_csv(out / "intervals.csv",
               ["quantity", "sample_id", "subcommunity", "asv", "mean", "lower", "upper"], rows)
    n = min(top_n, V)
    write_json({ks[k]: lst for k, lst in enumerate(top_asvs(summary, n, labels))},
               out / "top_asvs.json")
