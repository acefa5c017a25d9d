"""Rooted binary phylogenetic trees and the tree-based simplex transforms.

Node numbering
--------------
A tree with ``V`` leaves has ``p = V - 1`` internal nodes.  Internal nodes get
ids ``0 .. p-1`` in depth-first (pre-order, left child first) order, which is
also the order of the log-odds vector ``psi``.  Leaf ``v`` gets node id
``p + v``, with leaves numbered by first appearance in the Newick string.
Node 0 is therefore always the root.  A :class:`NodeCounts` vector has length
``2V - 1`` and follows the same numbering.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

__all__ = [
    "NewickError",
    "PhyloTree",
    "NodePartition",
    "parse_newick",
    "read_newick",
    "partition_nodes",
    "beta_to_psi",
    "psi_to_beta",
    "log_psi_to_beta",
    "decompose_counts",
    "root_to_leaf_path",
    "LEFT",
    "RIGHT",
]

LEFT = "left"
RIGHT = "right"


class NewickError(ValueError):
    """Raised for malformed or unsupported Newick input."""

    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at character {offset})"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class PhyloTree:
    """Immutable rooted binary tree.

    Parameters
    ----------
    left, right : ndarray of int, shape (p,)
        Node ids of the left and right child of each internal node.
    labels : tuple of str
        Leaf labels, in leaf order.
    """

    left: np.ndarray
    right: np.ndarray
    labels: tuple
    parent: np.ndarray = field(init=False, repr=False)
    leaf_desc_count: np.ndarray = field(init=False, repr=False)
    depth: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        left = np.asarray(self.left, dtype=np.int64)
        right = np.asarray(self.right, dtype=np.int64)
        p = left.shape[0]
        V = len(self.labels)
        if V < 2 or p != V - 1 or right.shape != left.shape:
            raise ValueError(f"a binary tree with {V} leaves needs {V - 1} internal nodes, got {p}")
        if len(set(self.labels)) != V:
            raise ValueError("leaf labels must be unique")
        n = 2 * V - 1
        parent = np.full(n, -1, dtype=np.int64)
        for i in range(p):
            for c in (left[i], right[i]):
                if not 0 < c < n or parent[c] != -1 or c <= i:
                    raise ValueError(f"internal node {i} has invalid child id {c}")
                parent[c] = i
        if np.any(parent[1:] < 0):
            raise ValueError("tree is not connected")
        count = np.ones(n, dtype=np.int64)
        for i in range(p - 1, -1, -1):
            count[i] = count[left[i]] + count[right[i]]
        depth = np.zeros(n, dtype=np.int64)
        for i in range(p):
            depth[left[i]] = depth[right[i]] = depth[i] + 1
        for name, value in (("left", left), ("right", right), ("parent", parent),
                            ("leaf_desc_count", count), ("depth", depth)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))

    @property
    def V(self):
        return len(self.labels)

    @property
    def p(self):
        return self.V - 1

    @property
    def n_nodes(self):
        return 2 * self.V - 1

    @property
    def root(self):
        return 0

    @property
    def internal_order(self):
        return np.arange(self.p)

    def leaf_node(self, v):
        """Node id of leaf index ``v``."""
        return self.p + v

    def is_leaf(self, node):
        return node >= self.p

    def leaf_index(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no leaf labelled {label!r}") from None

    @property
    def leaf_depths(self):
        return self.depth[self.p:]

    def leaf_sets(self):
        """List of frozensets of leaf indices under each node."""
        sets = [None] * self.n_nodes
        for v in range(self.V):
            sets[self.p + v] = frozenset([v])
        for i in range(self.p - 1, -1, -1):
            sets[i] = sets[self.left[i]] | sets[self.right[i]]
        return sets

    def path_matrix(self):
        """Signed incidence of internal nodes on root-to-leaf paths.

        Returns an int8 array ``M`` of shape (V, p) with ``M[v, i] = +1`` if the
        path to leaf ``v`` steps left at node ``i``, ``-1`` if it steps right,
        and 0 if node ``i`` is not an ancestor of ``v``.
        """
        M = np.zeros((self.V, self.p), dtype=np.int8)
        for v in range(self.V):
            for node, step in root_to_leaf_path(self, v):
                M[v, node] = 1 if step == LEFT else -1
        return M

    # -- export ---------------------------------------------------------
    def to_newick(self):
        def render(node):
            if self.is_leaf(node):
                return _quote_label(self.labels[node - self.p])
            return f"({render(self.left[node])},{render(self.right[node])})"

        return render(0) + ";"

    def to_node_table(self):
        """Rows of (node_id, parent_id, left_id, right_id, label, leaf_desc_count)."""
        rows = []
        for node in range(self.n_nodes):
            parent = int(self.parent[node]) if node else None
            if self.is_leaf(node):
                rows.append((node, parent, None, None, self.labels[node - self.p],
                             int(self.leaf_desc_count[node])))
            else:
                rows.append((node, parent, int(self.left[node]), int(self.right[node]), "",
                             int(self.leaf_desc_count[node])))
        return rows

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["node_id", "parent_id", "left_id", "right_id", "label", "leaf_desc_count"])
        for row in self.to_node_table():
            writer.writerow(["" if x is None else x for x in row])
        return buf.getvalue()

    # -- construction helpers -------------------------------------------
    @classmethod
    def from_nested(cls, nested):
        """Build from nested 2-tuples of leaf labels, e.g. ``(("a", "b"), "c")``."""
        left, right, labels = [], [], []
        leaves = []

        def count_internal(t):
            if isinstance(t, tuple):
                if len(t) != 2:
                    raise ValueError(f"non-binary node with {len(t)} children: {t!r}")
                return 1 + count_internal(t[0]) + count_internal(t[1])
            return 0

        p = count_internal(nested)
        if p == 0:
            raise ValueError("a tree needs at least two leaves")

        def visit(t):
            if not isinstance(t, tuple):
                leaves.append(t)
                labels.append(t)
                return p + len(leaves) - 1
            i = len(left)
            left.append(-1)
            right.append(-1)
            left[i] = visit(t[0])
            right[i] = visit(t[1])
            return i

        visit(nested)
        return cls(np.array(left), np.array(right), tuple(labels))

    def to_nested(self):
        def build(node):
            if self.is_leaf(node):
                return self.labels[node - self.p]
            return (build(self.left[node]), build(self.right[node]))

        return build(0)

    def prune(self, keep):
        """Restrict the tree to the leaves labelled in ``keep``.

        Unary nodes left behind are suppressed so the result stays binary.
        Leaf order follows this tree's order.
        """
        keep = set(keep)
        missing = keep.difference(self.labels)
        if missing:
            raise KeyError(f"labels not in tree: {sorted(missing)}")

        def build(node):
            if self.is_leaf(node):
                label = self.labels[node - self.p]
                return label if label in keep else None
            a, b = build(self.left[node]), build(self.right[node])
            if a is None:
                return b
            if b is None:
                return a
            return (a, b)

        nested = build(0)
        if not isinstance(nested, tuple):
            raise ValueError("pruned tree would have fewer than two leaves")
        return PhyloTree.from_nested(nested)

    def __repr__(self):
        return f"PhyloTree(V={self.V}, newick={self.to_newick()[:60]!r})"


def _quote_label(label):
    if any(ch in label for ch in " ():;,[]'\t\n"):
        return "'" + label.replace("'", "''") + "'"
    return label


# ----------------------------------------------------------------------
# Newick parsing
# ----------------------------------------------------------------------

_PUNCT = set("(),:;[]'")


class _NewickParser:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def skip(self):
        text = self.text
        while self.pos < len(text):
            ch = text[self.pos]
            if ch.isspace():
                self.pos += 1
            elif ch == "[":
                end = text.find("]", self.pos)
                if end < 0:
                    raise NewickError("unterminated comment", self.pos)
                self.pos = end + 1
            else:
                break

    def peek(self):
        self.skip()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch):
        if self.peek() != ch:
            found = self.peek() or "end of input"
            raise NewickError(f"expected {ch!r}, found {found!r}", self.pos)
        self.pos += 1

    def label(self):
        self.skip()
        text = self.text
        if self.pos < len(text) and text[self.pos] == "'":
            start = self.pos
            self.pos += 1
            chunks = []
            while True:
                end = text.find("'", self.pos)
                if end < 0:
                    raise NewickError("unterminated quoted label", start)
                chunks.append(text[self.pos:end])
                self.pos = end + 1
                if self.pos < len(text) and text[self.pos] == "'":
                    chunks.append("'")
                    self.pos += 1
                else:
                    return "".join(chunks)
        start = self.pos
        while self.pos < len(text) and text[self.pos] not in _PUNCT and not text[self.pos].isspace():
            self.pos += 1
        return text[start:self.pos]

    def branch_length(self):
        if self.peek() == ":":
            self.pos += 1
            self.skip()
            start = self.pos
            tok = self.label()
            try:
                float(tok)
            except ValueError:
                raise NewickError(f"invalid branch length {tok!r}", start) from None

    def clade(self):
        self.skip()
        start = self.pos
        if self.peek() == "(":
            self.pos += 1
            children = [self.clade()]
            while self.peek() == ",":
                self.pos += 1
                children.append(self.clade())
            self.expect(")")
            self.label()  # internal labels are discarded
            self.branch_length()
            if len(children) != 2:
                snippet = self.text[start:self.pos]
                if len(snippet) > 60:
                    snippet = snippet[:57] + "..."
                raise NewickError(
                    f"non-binary node with {len(children)} children: {snippet}", start)
            return (children[0], children[1])
        name = self.label()
        if not name:
            raise NewickError("expected a leaf label", start)
        self.branch_length()
        return _Leaf(name, start)


@dataclass(frozen=True)
class _Leaf:
    name: str
    offset: int


def parse_newick(text):
    """Parse a single rooted binary tree from a Newick string.

    Branch lengths, internal node labels and ``[...]`` comments are accepted
    and discarded.  Leaves are ordered by first appearance.

    Raises
    ------
    NewickError
        On a syntax error (with character offset), a node that does not have
        exactly two children, or a repeated leaf label.
    """
    parser = _NewickParser(text)
    nested = parser.clade()
    parser.expect(";")
    if parser.peek():
        raise NewickError("unexpected text after ';'", parser.pos)
    if isinstance(nested, _Leaf):
        raise NewickError("a tree needs at least two leaves", 0)

    seen = {}

    def strip(t):
        if isinstance(t, _Leaf):
            if t.name in seen:
                raise NewickError(f"duplicate leaf label {t.name!r}", t.offset)
            seen[t.name] = t.offset
            return t.name
        return (strip(t[0]), strip(t[1]))

    return PhyloTree.from_nested(strip(nested))


def read_newick(path):
    with open(path, encoding="utf-8") as fh:
        return parse_newick(fh.read())


# ----------------------------------------------------------------------
# Partition and transforms
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class NodePartition:
    """Split of internal nodes into the upper tree (``|A| >= C``) and lower tree."""

    C: int
    upper: np.ndarray
    lower: np.ndarray

    @property
    def is_upper(self):
        mask = np.zeros(len(self.upper) + len(self.lower), dtype=bool)
        mask[self.upper] = True
        return mask


def partition_nodes(tree, C):
    if C < 1:
        raise ValueError("C must be a positive integer")
    sizes = tree.leaf_desc_count[: tree.p]
    return NodePartition(int(C), np.flatnonzero(sizes >= C), np.flatnonzero(sizes < C))


def _subtree_mass(tree, leaf_values):
    """Sum leaf values (last axis, length V) up the tree; returns (..., 2V-1)."""
    leaf_values = np.asarray(leaf_values)
    out = np.zeros(leaf_values.shape[:-1] + (tree.n_nodes,), dtype=leaf_values.dtype)
    out[..., tree.p:] = leaf_values
    left, right = tree.left, tree.right
    for i in range(tree.p - 1, -1, -1):
        out[..., i] = out[..., left[i]] + out[..., right[i]]
    return out


def beta_to_psi(tree, beta, floor=None):
    """Map compositions over the leaves to node log-odds.

    ``psi[i] = logit(theta[i])`` with ``theta[i]`` the share of internal node
    ``i``'s mass that sits under its left child.  Works on the last axis.

    Parameters
    ----------
    floor : float, optional
        If given, every entry is raised to at least ``floor`` and the vector
        renormalised before transforming.  Without it a subtree with zero
        mass raises ``ValueError``.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape[-1] != tree.V:
        raise ValueError(f"expected {tree.V} leaf probabilities, got {beta.shape[-1]}")
    if np.any(beta < 0):
        raise ValueError("compositions must be nonnegative")
    if floor is not None:
        beta = np.maximum(beta, floor)
        beta = beta / beta.sum(axis=-1, keepdims=True)
    mass = _subtree_mass(tree, beta)
    lm = mass[..., tree.left]
    rm = mass[..., tree.right]
    if np.any(lm <= 0) or np.any(rm <= 0):
        raise ValueError("a subtree has zero mass; pass floor= to regularise")
    return np.log(lm) - np.log(rm)


def log_psi_to_beta(tree, psi):
    """Log leaf probabilities for log-odds ``psi`` (last axis length p)."""
    psi = np.asarray(psi, dtype=float)
    if psi.shape[-1] != tree.p:
        raise ValueError(f"expected {tree.p} log-odds, got {psi.shape[-1]}")
    logp = np.zeros(psi.shape[:-1] + (tree.n_nodes,))
    go_left = log_expit(psi)
    go_right = log_expit(-psi)
    left, right = tree.left, tree.right
    for i in range(tree.p):
        logp[..., left[i]] = logp[..., i] + go_left[..., i]
        logp[..., right[i]] = logp[..., i] + go_right[..., i]
    return logp[..., tree.p:]


def psi_to_beta(tree, psi):
    """Leaf composition from node log-odds; inverse of :func:`beta_to_psi`."""
    beta = np.exp(log_psi_to_beta(tree, psi))
    # absorb the last few ulps of drift so every row lies on the simplex
    return beta / beta.sum(axis=-1, keepdims=True)


def theta_from_psi(psi):
    return expit(psi)


def decompose_counts(tree, leaf_counts):
    """Node counts ``y(A)`` (length 2V-1) from leaf counts (last axis, length V)."""
    leaf_counts = np.asarray(leaf_counts)
    if leaf_counts.shape[-1] != tree.V:
        raise ValueError(f"expected {tree.V} leaf counts, got {leaf_counts.shape[-1]}")
    if np.any(leaf_counts < 0):
        raise ValueError("counts must be nonnegative")
    return _subtree_mass(tree, leaf_counts.astype(np.int64))


def root_to_leaf_path(tree, leaf):
    """Internal nodes from the root down to leaf index ``leaf`` with the step taken."""
    if not 0 <= leaf < tree.V:
        raise IndexError(f"leaf index {leaf} out of range for V={tree.V}")
    path = []
    node = tree.leaf_node(leaf)
    while node != 0:
        parent = int(tree.parent[node])
        path.append((parent, LEFT if tree.left[parent] == node else RIGHT))
        node = parent
    return path[::-1]
