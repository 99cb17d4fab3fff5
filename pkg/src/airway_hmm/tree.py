"""Airway tree model: label set, hop distances and the transition penalty."""

from __future__ import annotations

import json
import os
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

#: Name resolving to the tree shipped with the package.
PHANTOM_TREE = "phantom_tree"
#: Environment variable consulted for the default tree path.
TREE_ENV_VAR = "AIRWAY_HMM_TREE"


class TreeError(ValueError):
    """Raised for malformed or non-tree label graphs."""


@dataclass(frozen=True)
class AirwayTree:
    """Undirected labelled tree; node index is the class id.

    Parameters
    ----------
    labels : tuple of str
        Label names in class-index order.
    root : int
        Index of the root label (the trachea).
    edges : tuple of (int, int)
        Undirected edges as index pairs.
    """

    labels: tuple[str, ...]
    root: int
    edges: tuple[tuple[int, int], ...]
    _adjacency: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        edges = tuple((int(a), int(b)) for a, b in self.edges)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "root", int(self.root))
        n = len(labels)
        if n == 0:
            raise TreeError("tree has no labels")
        if any(not isinstance(lab, str) or not lab for lab in labels):
            raise TreeError("label names must be non-empty strings")
        if len(set(labels)) != n:
            dupes = sorted({lab for lab in labels if labels.count(lab) > 1})
            raise TreeError(f"duplicate labels: {dupes}")
        if not 0 <= self.root < n:
            raise TreeError(f"root index {self.root} out of range for {n} labels")
        if len(edges) != n - 1:
            raise TreeError(f"a tree on {n} nodes needs {n - 1} edges, got {len(edges)}")
        adj: list[list[int]] = [[] for _ in range(n)]
        for a, b in edges:
            if not (0 <= a < n and 0 <= b < n):
                raise TreeError(f"edge ({a}, {b}) references an unknown node")
            if a == b:
                raise TreeError(f"self-loop at node {labels[a]!r}")
            adj[a].append(b)
            adj[b].append(a)
        object.__setattr__(self, "_adjacency", tuple(tuple(sorted(x)) for x in adj))
        # n - 1 edges plus full reachability rules out cycles
        seen = _bfs_hops(self._adjacency, self.root)
        if np.any(seen < 0):
            missing = [labels[i] for i in np.flatnonzero(seen < 0)]
            raise TreeError(f"nodes unreachable from root: {missing}")

    @property
    def size(self) -> int:
        return len(self.labels)

    def neighbors(self, node: int) -> tuple[int, ...]:
        return self._adjacency[node]

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise TreeError(f"unknown label {label!r}") from None

    def depths(self) -> np.ndarray:
        """Hop distance of every node from the root."""
        return _bfs_hops(self._adjacency, self.root)

    def parents(self) -> np.ndarray:
        """Parent index of every node when rooted at ``root`` (-1 for the root)."""
        parent = np.full(self.size, -1, dtype=np.int64)
        queue = deque([self.root])
        seen = {self.root}
        while queue:
            u = queue.popleft()
            for v in self._adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    parent[v] = u
                    queue.append(v)
        return parent

    def dfs_order(self) -> list[int]:
        """Pre-order depth-first linearization from the root, children in index order.

        Neighbouring branches end up next to each other, which collapses the
        tree onto a line for cost-over-time plots.
        """
        order: list[int] = []
        stack = [self.root]
        seen = {self.root}
        while stack:
            u = stack.pop()
            order.append(u)
            children = [v for v in self._adjacency[u] if v not in seen]
            seen.update(children)
            stack.extend(reversed(children))
        return order

    def to_document(self) -> dict[str, Any]:
        return {
            "labels": list(self.labels),
            "root": self.labels[self.root],
            "edges": [[self.labels[a], self.labels[b]] for a, b in self.edges],
        }


def _bfs_hops(adjacency: Sequence[Sequence[int]], source: int) -> np.ndarray:
    hops = np.full(len(adjacency), -1, dtype=np.int64)
    hops[source] = 0
    queue = deque([source])
    while queue:
        u = queue.popleft()
        for v in adjacency[u]:
            if hops[v] < 0:
                hops[v] = hops[u] + 1
                queue.append(v)
    return hops


def tree_from_document(doc: Mapping[str, Any]) -> AirwayTree:
    """Build a tree from a parsed ``{labels, root, edges}`` document.

    ``root`` may be a label name or an index; edges may use names or indices.
    Unknown keys are ignored.
    """
    for key in ("labels", "root", "edges"):
        if key not in doc:
            raise TreeError(f"tree document is missing {key!r}")
    labels = doc["labels"]
    if not isinstance(labels, list):
        raise TreeError("'labels' must be a list")
    lookup = {lab: i for i, lab in enumerate(labels) if isinstance(lab, str)}

    def resolve(ref: Any) -> int:
        if isinstance(ref, bool):
            raise TreeError(f"invalid node reference {ref!r}")
        if isinstance(ref, int):
            return ref
        if isinstance(ref, str) and ref in lookup:
            return lookup[ref]
        raise TreeError(f"unknown node reference {ref!r}")

    edges = []
    for edge in doc["edges"]:
        if not isinstance(edge, (list, tuple)) or len(edge) != 2:
            raise TreeError(f"edge {edge!r} is not a pair")
        edges.append((resolve(edge[0]), resolve(edge[1])))
    return AirwayTree(labels=tuple(labels), root=resolve(doc["root"]), edges=tuple(edges))


def load_tree(source: str | os.PathLike[str] | Mapping[str, Any] | None = None) -> AirwayTree:
    """Load a tree from a JSON file, a parsed document, or the shipped name.

    ``None`` falls back to ``$AIRWAY_HMM_TREE`` and then to the phantom tree.
    """
    if source is None:
        source = os.environ.get(TREE_ENV_VAR) or PHANTOM_TREE
    if isinstance(source, Mapping):
        return tree_from_document(source)
    if str(source) == PHANTOM_TREE:
        text = resources.files("airway_hmm").joinpath("data/phantom_tree.json").read_text()
    else:
        text = Path(source).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise TreeError(f"cannot parse tree document {source}: {exc}") from exc
    if not isinstance(doc, dict):
        raise TreeError(f"tree document {source} must be a JSON object")
    return tree_from_document(doc)


def distance_matrix(tree: AirwayTree) -> np.ndarray:
    """All-pairs hop counts, one BFS per source node (unit edge weights)."""
    return np.stack([_bfs_hops(tree._adjacency, s) for s in range(tree.size)])


def regularization_matrix(d: np.ndarray) -> np.ndarray:
    """Transition penalty ``exp(d / max(d))`` with a global normalizer.

    Entries range from 1 on the diagonal to e at the tree diameter.
    """
    d = np.asarray(d, dtype=np.float64)
    dmax = d.max() if d.size else 0.0
    if dmax <= 0:
        raise TreeError("regularizer undefined for a tree without edges (max distance 0)")
    return np.exp(d / dmax)
