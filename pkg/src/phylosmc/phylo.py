"""Rooted binary phylogenies with node ages measured before present.

Trees are built once and then treated as read-only. Ages count backwards
from the present: extant tips sit at age 0, extinct tips at a positive age,
and every branch length is ``parent.age - child.age``.

A root with a single child is allowed and represents a stem (origin) above
the most recent common ancestor; this is what :func:`simulate_crbd` returns.
Every other internal node has exactly two children.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gammaln, xlogy

__all__ = [
    "NewickError",
    "TreeStructureError",
    "ExtinctTreeError",
    "TreeNode",
    "Tree",
    "TreeStats",
    "parse_newick",
    "read_newick",
    "write_newick",
    "prune",
    "drop_stem",
    "stats",
    "crbd_complete_loglik",
    "simulate_crbd",
    "synthetic_tree",
    "read_tip_states",
    "with_tip_states",
    "trees_equal",
]

#: Relative tolerance (w.r.t. tree depth) used to snap near-present leaves to 0.
ULTRAMETRIC_TOL = 1e-6


class NewickError(ValueError):
    """Malformed Newick text."""

    def __init__(self, message, position):
        super().__init__(f"{message} at position {position}")
        self.position = position


class TreeStructureError(ValueError):
    """Tree violates the binary / positive-branch-length contract."""


class ExtinctTreeError(ValueError):
    """No extant leaves remain."""


@dataclass(eq=False)
class TreeNode:
    age: float
    children: list[TreeNode] = field(default_factory=list)
    label: str | None = None
    tip_state: int | None = None

    @property
    def is_leaf(self):
        return not self.children

    @property
    def is_extant(self):
        return self.is_leaf and self.age == 0.0

    def __repr__(self):
        kind = "leaf" if self.is_leaf else f"{len(self.children)}-ary"
        return f"TreeNode(age={self.age:g}, {kind}, label={self.label!r})"


@dataclass(frozen=True)
class TreeStats:
    """Event counts of a tree.

    ``S`` counts binary nodes other than the root, ``C`` extant leaves,
    ``X`` extinct leaves, ``L`` the summed branch length and ``T`` the number
    of branches (non-root nodes).
    """

    S: int
    C: int
    X: int
    L: float
    T: int


class Tree:
    """A rooted tree plus its pre-order traversal.

    ``nodes`` lists every node in pre-order starting with the root, children
    visited in stored order. ``preorder`` is the same list without the root,
    i.e. one entry per branch; this is the checkpoint order used by the
    inference programs. ``parent[i]`` is the index in ``nodes`` of the parent
    of ``nodes[i]`` (``-1`` for the root).
    """

    def __init__(self, root: TreeNode):
        self.root = root
        nodes, parent = [], []
        stack = [(root, -1)]
        while stack:
            node, par = stack.pop()
            idx = len(nodes)
            nodes.append(node)
            parent.append(par)
            stack.extend((c, idx) for c in reversed(node.children))
        self.nodes = tuple(nodes)
        self.preorder = self.nodes[1:]
        self.parent = np.asarray(parent, dtype=np.intp)
        self.ages = np.array([n.age for n in nodes], dtype=float)
        self._validate()

    def _validate(self):
        for i, node in enumerate(self.nodes):
            nc = len(node.children)
            if nc not in (0, 2) and not (i == 0 and nc == 1):
                raise TreeStructureError(
                    f"node {node!r} has {nc} children; only binary trees are supported"
                )
            if node.age < 0:
                raise TreeStructureError(f"negative age at {node!r}")
        lengths = self.branch_lengths
        if lengths.size and lengths.min() <= 0:
            bad = self.preorder[int(np.argmin(lengths))]
            raise TreeStructureError(f"non-positive branch length above {bad!r}")

    @property
    def branch_lengths(self):
        """Length of the branch above each node in ``preorder``."""
        return self.ages[self.parent[1:]] - self.ages[1:]

    @property
    def n_branches(self):
        return len(self.preorder)

    @property
    def height(self):
        return self.root.age

    def leaves(self):
        return [n for n in self.nodes if n.is_leaf]

    def __len__(self):
        return len(self.nodes)

    def __repr__(self):
        return f"Tree(nodes={len(self.nodes)}, height={self.height:g})"


# ---------------------------------------------------------------------------
# Newick I/O


class _NewickParser:
    """Recursive-descent parser producing (label, length, children) triples."""

    _stop = set("(),:;[]'")

    def __init__(self, text):
        self.text = text
        self.pos = 0

    def error(self, message):
        raise NewickError(message, self.pos)

    def skip_ws(self):
        text = self.text
        while self.pos < len(text):
            ch = text[self.pos]
            if ch.isspace():
                self.pos += 1
            elif ch == "[":
                end = text.find("]", self.pos)
                if end < 0:
                    self.error("unterminated comment")
                self.pos = end + 1
            else:
                break

    def peek(self):
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def expect(self, ch):
        if self.peek() != ch:
            found = self.peek() or "end of input"
            self.error(f"expected {ch!r}, found {found!r}")
        self.pos += 1

    def parse(self):
        tree = self.tree()
        self.expect(";")
        if self.peek():
            self.error("trailing characters after ';'")
        return tree

    def tree(self):
        # iterative so that deep (caterpillar) trees do not exhaust the stack
        open_groups = []
        while True:
            if self.peek() == "(":
                self.pos += 1
                open_groups.append([])
                continue
            node = self.finish([])
            while True:
                if not open_groups:
                    return node
                if node[1] is None:
                    self.error("missing branch length")
                open_groups[-1].append(node)
                if self.peek() == ",":
                    self.pos += 1
                    break
                self.expect(")")
                node = self.finish(open_groups.pop())

    def finish(self, children):
        label = self.label()
        length = None
        if self.peek() == ":":
            self.pos += 1
            length = self.number()
        return label, length, children

    def label(self):
        self.skip_ws()
        text = self.text
        if self.pos < len(text) and text[self.pos] == "'":
            out = []
            self.pos += 1
            while True:
                end = text.find("'", self.pos)
                if end < 0:
                    self.error("unterminated quoted label")
                out.append(text[self.pos:end])
                self.pos = end + 1
                if self.pos < len(text) and text[self.pos] == "'":
                    out.append("'")
                    self.pos += 1
                else:
                    return "".join(out)
        start = self.pos
        while self.pos < len(text) and text[self.pos] not in self._stop and not text[self.pos].isspace():
            self.pos += 1
        name = text[start:self.pos].replace("_", " ")
        return name or None

    def number(self):
        self.skip_ws()
        start = self.pos
        text = self.text
        while self.pos < len(text) and text[self.pos] not in self._stop and not text[self.pos].isspace():
            self.pos += 1
        try:
            return float(text[start:self.pos])
        except ValueError:
            self.pos = start
            self.error("invalid branch length")


def parse_newick(text: str) -> Tree:
    """Parse a single rooted Newick expression into a :class:`Tree`.

    Every non-root edge must carry a branch length. The root age is the
    longest root-to-leaf path; leaves within ``ULTRAMETRIC_TOL * depth`` of
    the deepest leaf are placed exactly at the present.
    """
    raw = _NewickParser(text).parse()

    # depth = distance from root
    depth_of = {}
    flat = []
    stack = [(raw, 0.0)]
    while stack:
        item, depth = stack.pop()
        flat.append((item, depth))
        depth_of[id(item)] = depth
        for child in item[2]:
            stack.append((child, depth + child[1]))
    max_depth = max(d for _, d in flat)
    tol = ULTRAMETRIC_TOL * max(max_depth, 1e-300)

    built = {}
    for item, depth in reversed(flat):
        label, _, children = item
        age = max_depth - depth
        if not children and age <= tol:
            age = 0.0
        built[id(item)] = TreeNode(age, [built[id(c)] for c in children], label)
    return Tree(built[id(raw)])


def read_newick(path) -> Tree:
    return parse_newick(Path(path).read_text())


def _format_label(label):
    if label is None:
        return ""
    if any(ch in label for ch in "(),:;[]'_") or label != label.strip():
        return "'" + label.replace("'", "''") + "'"
    return label.replace(" ", "_")


def _format_length(x):
    s = repr(float(x))
    return s[:-2] if s.endswith(".0") else s


def write_newick(tree: Tree) -> str:
    """Serialize ``tree``; branch lengths are derived from node ages."""
    parts = {}
    for node in reversed(tree.nodes):
        inner = ""
        if node.children:
            inner = "(" + ",".join(
                parts.pop(id(c)) + ":" + _format_length(node.age - c.age)
                for c in node.children
            ) + ")"
        parts[id(node)] = inner + _format_label(node.label)
    return parts[id(tree.root)] + ";"


def trees_equal(a: Tree, b: Tree, tol: float = 1e-9) -> bool:
    """Ordered structural equality with ages compared to ``tol``."""
    if len(a.nodes) != len(b.nodes):
        return False
    for x, y in zip(a.nodes, b.nodes):
        if len(x.children) != len(y.children) or x.label != y.label:
            return False
        if abs(x.age - y.age) > tol:
            return False
    return bool(np.array_equal(a.parent, b.parent))


# ---------------------------------------------------------------------------
# Tree operations


def prune(complete: Tree) -> Tree:
    """Remove every subtree that contains no extant leaf.

    Internal nodes left with a single child are suppressed, so the child's
    branch absorbs the parent's. A stem root (one child) keeps its stem; a
    binary root that loses one side is replaced by the surviving MRCA.
    """
    kept = {}
    for node in reversed(complete.nodes):
        if node.is_leaf:
            kept[id(node)] = (
                TreeNode(0.0, [], node.label, node.tip_state) if node.age == 0.0 else None
            )
            continue
        alive = [kept[id(c)] for c in node.children if kept[id(c)] is not None]
        if len(alive) == 2:
            kept[id(node)] = TreeNode(node.age, alive, node.label, node.tip_state)
        elif len(alive) == 1:
            kept[id(node)] = alive[0]
        else:
            kept[id(node)] = None
    top = kept[id(complete.root)]
    if top is None:
        raise ExtinctTreeError("fully extinct: no extant leaves to keep")
    root = complete.root
    if len(root.children) == 1 and top.age < root.age:
        top = TreeNode(root.age, [top], root.label)
    return Tree(top)


def drop_stem(tree: Tree) -> Tree:
    """Re-root a stemmed tree at its most recent common ancestor."""
    root = tree.root
    if len(root.children) == 1:
        return Tree(root.children[0])
    return tree


def stats(tree: Tree) -> TreeStats:
    S = C = X = 0
    for node in tree.preorder:
        if node.children:
            S += 1
        elif node.age == 0.0:
            C += 1
        else:
            X += 1
    if tree.root.is_leaf:
        C += tree.root.age == 0.0
    return TreeStats(S=S, C=C, X=X, L=float(tree.branch_lengths.sum()), T=tree.n_branches)


def log_orderings(tree: Tree) -> float:
    """``log(2^B / C!)`` with ``B`` binary nodes and ``C`` extant leaves.

    For a tree rooted at its MRCA ``B = S + 1``.
    """
    st = stats(tree)
    binary = st.S + (len(tree.root.children) == 2)
    return binary * math.log(2.0) - float(gammaln(st.C + 1))


def crbd_complete_loglik(tree: Tree, lam: float, mu: float) -> float:
    """Log-likelihood of a complete, unordered, labelled CRBD tree.

    ``log p = log(2^(S+1)/C!) + S log(lam) + X log(mu) - (lam + mu) L``.
    Returns ``-inf`` when ``mu == 0`` and the tree contains extinctions.
    """
    st = stats(tree)
    return float(
        log_orderings(tree) + xlogy(st.S, lam) + xlogy(st.X, mu) - (lam + mu) * st.L
    )


def simulate_crbd(lam: float, mu: float, age: float, rng, max_nodes: int = 1_000_000) -> Tree:
    """Draw a complete tree from the constant-rate birth-death process.

    The process starts with a single lineage at ``age`` (the returned root is
    this origin, with one child). Waiting times are Exponential(lam + mu);
    each event is a speciation with probability ``lam / (lam + mu)``.
    """
    if lam < 0 or mu < 0 or not age > 0:
        raise ValueError("need lam >= 0, mu >= 0 and age > 0")
    total = lam + mu
    origin = TreeNode(float(age))
    stack = [origin]
    count = 1
    while stack:
        parent = stack.pop()
        wait = rng.exponential(1.0 / total) if total > 0 else math.inf
        t = parent.age - wait
        if t < 0:
            child = TreeNode(0.0)
        elif rng.random() < lam / total:
            child = TreeNode(float(t))
            # one pop per daughter lineage
            stack.extend((child, child))
        else:
            child = TreeNode(float(t))
        parent.children.append(child)
        count += 1
        if count > max_nodes:
            raise RuntimeError(f"simulated tree exceeded {max_nodes} nodes")
    _label_extant(origin)
    return Tree(origin)


def _label_extant(root):
    i = 0
    stack = [root]
    while stack:
        node = stack.pop()
        if node.is_extant:
            i += 1
            node.label = f"t{i}"
        stack.extend(reversed(node.children))


def synthetic_tree(n_leaves: int, lam: float = 1.0, mu: float = 0.5, seed: int = 0,
                   max_tries: int = 100_000) -> Tree:
    """Deterministic reconstructed CRBD tree with exactly ``n_leaves`` tips.

    Simulations from ``log(n_leaves) / (lam - mu)`` time units are pruned
    and re-rooted at the MRCA until one has the requested size.
    """
    if n_leaves < 2 or lam <= mu:
        raise ValueError("need n_leaves >= 2 and lam > mu")
    age = math.log(n_leaves) / (lam - mu)
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        try:
            complete = simulate_crbd(lam, mu, age, rng, max_nodes=50 * n_leaves + 1000)
        except RuntimeError:
            continue
        if stats(complete).C != n_leaves:
            continue
        return drop_stem(prune(complete))
    raise RuntimeError(f"no tree with {n_leaves} leaves after {max_tries} tries")


# ---------------------------------------------------------------------------
# Tip states


def read_tip_states(path) -> dict[str, int]:
    """Read a ``label,state`` CSV (state in {0, 1})."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"label", "state"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected header 'label,state'")
        for row in reader:
            state = row["state"].strip()
            if state not in ("0", "1"):
                raise ValueError(f"{path}: state for {row['label']!r} must be 0 or 1")
            out[row["label"].strip()] = int(state)
    return out


def with_tip_states(tree: Tree, table: dict[str, int]) -> Tree:
    """Copy of ``tree`` with leaf ``tip_state`` joined from ``table`` by label.

    Labels missing from the table get ``None`` (unknown).
    """
    copies = {}
    for node in reversed(tree.nodes):
        state = table.get(node.label) if node.is_leaf and node.label is not None else None
        copies[id(node)] = TreeNode(
            node.age, [copies[id(c)] for c in node.children], node.label, state
        )
    return Tree(copies[id(tree.root)])
