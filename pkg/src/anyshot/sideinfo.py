"""Per-class side information: taxonomy similarities and word vectors.

The hierarchical embedding of a class is its similarity to every taxonomy
node in fixed node order; the text embedding comes from a word-vector
file.  Both concatenate into the per-class side-information table the
trainer consumes.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import MissingEmbeddingError, ShapeError, SideInfoError, TaxonomyError

SIMILARITY_KINDS = ("path", "lin", "jiang_conrath")

_SPLIT = re.compile(r"[ _\-]+")


@dataclass
class Taxonomy:
    """Rooted tree over node names plus a class-index -> node-index map."""

    nodes: list[str]
    parent: np.ndarray
    class_nodes: np.ndarray
    depth: np.ndarray = field(init=False)
    n_desc: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        n = len(self.nodes)
        self.parent = np.asarray(self.parent, dtype=np.int64)
        self.class_nodes = np.asarray(self.class_nodes, dtype=np.int64)
        roots = np.flatnonzero(self.parent < 0)
        if roots.size != 1:
            raise TaxonomyError(f"expected exactly one root, found {roots.size}")
        if self.parent.shape != (n,) or (self.parent >= n).any():
            raise TaxonomyError("parent indices out of range")
        depth = np.full(n, -1, dtype=np.int64)
        depth[roots[0]] = 0
        for node in range(n):
            chain = []
            cur = node
            while depth[cur] < 0:
                chain.append(cur)
                cur = self.parent[cur]
                if len(chain) > n:
                    raise TaxonomyError("parent edges contain a cycle")
            base = depth[cur]
            for step, member in enumerate(reversed(chain), start=1):
                depth[member] = base + step
        self.depth = depth
        n_desc = np.zeros(n, dtype=np.int64)
        for node in np.argsort(depth)[::-1]:
            p = self.parent[node]
            if p >= 0:
                n_desc[p] += n_desc[node] + 1
        self.n_desc = n_desc
        if self.class_nodes.size and (
            (self.class_nodes < 0) | (self.class_nodes >= n)
        ).any():
            raise TaxonomyError("class maps to a node outside the taxonomy")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)


def _parse_sections(text: str) -> dict[str, list[str]]:
    sections: dict[str, list[str]] = {}
    current: list[str] | None = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].rstrip()
        if not line.strip():
            continue
        if line.startswith("[") and line.endswith("]"):
            current = sections.setdefault(line[1:-1].strip(), [])
            continue
        if current is None:
            raise TaxonomyError(f"content before any section: {line!r}")
        current.append(line.strip())
    return sections


def load_taxonomy(path, class_names: list[str]) -> Taxonomy:
    """Parse the sectioned taxonomy text file and map classes onto nodes.

    Class names resolve through [classes], then [aliases] (whose
    replacement may itself be a class or node name), then as a literal
    node name.
    """
    with open(path, "r", encoding="utf-8") as fh:
        sections = _parse_sections(fh.read())
    for required in ("nodes", "edges"):
        if required not in sections:
            raise TaxonomyError(f"missing [{required}] section")
    nodes = sections["nodes"]
    index = {name: i for i, name in enumerate(nodes)}
    if len(index) != len(nodes):
        raise TaxonomyError("duplicate node names")
    parent = np.full(len(nodes), -1, dtype=np.int64)
    seen_child = set()
    for line in sections["edges"]:
        parts = line.split("\t")
        if len(parts) != 2:
            raise TaxonomyError(f"bad edge line {line!r}")
        child, par = parts
        if child not in index or par not in index:
            raise TaxonomyError(f"edge references unknown node: {line!r}")
        if child in seen_child:
            raise TaxonomyError(f"node {child!r} has two parents")
        seen_child.add(child)
        parent[index[child]] = index[par]
    class_map = {}
    for line in sections.get("classes", []):
        parts = line.split("\t")
        if len(parts) != 2:
            raise TaxonomyError(f"bad class line {line!r}")
        class_map[parts[0]] = parts[1]
    aliases = {}
    for line in sections.get("aliases", []):
        parts = line.split("\t")
        if len(parts) != 2:
            raise TaxonomyError(f"bad alias line {line!r}")
        aliases[parts[0]] = parts[1]

    def resolve(name: str) -> int:
        for candidate in (name, class_map.get(name), aliases.get(name)):
            if candidate is None:
                continue
            if candidate in class_map and candidate != name:
                candidate = class_map[candidate]
            if candidate in index:
                return index[candidate]
        raise TaxonomyError(f"class {name!r} maps to no taxonomy node")

    class_nodes = np.array([resolve(c) for c in class_names], dtype=np.int64)
    return Taxonomy(nodes=nodes, parent=parent, class_nodes=class_nodes)


def intrinsic_ic(t: Taxonomy, node: int) -> float:
    """Information content from subtree size alone: 0 at the root, 1 at leaves."""
    if t.n_nodes < 2:
        raise TaxonomyError("degenerate taxonomy: need at least 2 nodes")
    if not 0 <= node < t.n_nodes:
        raise TaxonomyError(f"node {node} out of range")
    return 1.0 - math.log(t.n_desc[node] + 1.0) / math.log(t.n_nodes)


def _lcs(t: Taxonomy, a: int, b: int) -> int:
    da, db = int(t.depth[a]), int(t.depth[b])
    while da > db:
        a = int(t.parent[a])
        da -= 1
    while db > da:
        b = int(t.parent[b])
        db -= 1
    while a != b:
        a = int(t.parent[a])
        b = int(t.parent[b])
    return a


def taxonomy_similarity(t: Taxonomy, a: int, b: int, kind: str) -> float:
    """Node similarity in [0,1]; 'path' counts hops, the others use IC."""
    for node in (a, b):
        if not 0 <= node < t.n_nodes:
            raise TaxonomyError(f"node {node} out of range")
    if kind not in SIMILARITY_KINDS:
        raise SideInfoError(f"unknown similarity kind {kind!r}")
    lcs = _lcs(t, a, b)
    if kind == "path":
        hops = int(t.depth[a]) + int(t.depth[b]) - 2 * int(t.depth[lcs])
        return 1.0 / (1.0 + hops)
    ic_a, ic_b = intrinsic_ic(t, a), intrinsic_ic(t, b)
    if kind == "lin":
        if ic_a + ic_b == 0.0:
            return 0.0
        if a == b:
            return 1.0
        return 2.0 * intrinsic_ic(t, lcs) / (ic_a + ic_b)
    dist = ic_a + ic_b - 2.0 * intrinsic_ic(t, lcs)
    return 1.0 / (1.0 + dist)


def build_hier_embedding(t: Taxonomy, class_c: int, kind: str) -> np.ndarray:
    """Similarity of the class node to every node, in fixed node order."""
    if not 0 <= class_c < t.class_nodes.size:
        raise TaxonomyError(f"class index {class_c} has no taxonomy mapping")
    node = int(t.class_nodes[class_c])
    return np.array(
        [taxonomy_similarity(t, node, j, kind) for j in range(t.n_nodes)],
        dtype=np.float64,
    )


def hier_table(t: Taxonomy, kind: str) -> np.ndarray:
    """Stack the hierarchical embedding of every class, C x |nodes|."""
    return np.stack(
        [build_hier_embedding(t, c, kind) for c in range(t.class_nodes.size)]
    )


def load_word_vectors(path, class_names: list[str]) -> np.ndarray:
    """One text vector per class; multi-word names average their sub-tokens."""
    table: dict[str, np.ndarray] = {}
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.split()
            if not parts:
                continue
            try:
                vec = np.array([float(v) for v in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise SideInfoError(f"line {lineno}: non-numeric value") from exc
            if vec.size == 0:
                raise SideInfoError(f"line {lineno}: token without values")
            if width is None:
                width = vec.size
            elif vec.size != width:
                raise SideInfoError(
                    f"line {lineno}: expected {width} values, got {vec.size}"
                )
            table[parts[0]] = vec
    if width is None:
        raise SideInfoError("word-vector file holds no vectors")
    rows, missing = [], []
    for name in class_names:
        if name in table:
            rows.append(table[name])
            continue
        hits = [table[tok] for tok in _SPLIT.split(name) if tok in table]
        if hits:
            rows.append(np.mean(hits, axis=0))
        else:
            rows.append(np.zeros(width))
            missing.append(name)
    if missing:
        raise MissingEmbeddingError(missing)
    return np.stack(rows)


@dataclass
class ClassEmbeddingTable:
    """Per-class side information: text part, hierarchy part, and the fusion."""

    text_vectors: np.ndarray
    hier_vectors: np.ndarray
    fused: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.text_vectors = np.asarray(self.text_vectors, dtype=np.float32)
        self.hier_vectors = np.asarray(self.hier_vectors, dtype=np.float32)
        if self.text_vectors.ndim != 2 or self.hier_vectors.ndim != 2:
            raise ShapeError("side-information blocks must be 2-d")
        if self.text_vectors.shape[0] != self.hier_vectors.shape[0]:
            raise ShapeError(
                f"row counts differ: {self.text_vectors.shape[0]} text vs "
                f"{self.hier_vectors.shape[0]} hierarchy"
            )
        self.fused = np.hstack([self.text_vectors, self.hier_vectors])
        if not np.isfinite(self.fused).all():
            raise SideInfoError("non-finite side-information values")

    @property
    def n_classes(self) -> int:
        return self.fused.shape[0]

    @property
    def dim(self) -> int:
        return self.fused.shape[1]

    def take_dims(self, keep: np.ndarray) -> "ClassEmbeddingTable":
        """New table restricted to the kept fused-dimension indices."""
        keep = np.asarray(keep, dtype=np.int64)
        kt = self.text_vectors.shape[1]
        text_keep = keep[keep < kt]
        hier_keep = keep[keep >= kt] - kt
        return ClassEmbeddingTable(
            text_vectors=self.text_vectors[:, text_keep],
            hier_vectors=self.hier_vectors[:, hier_keep],
        )


def fuse_side_info(text: np.ndarray, hier: np.ndarray) -> ClassEmbeddingTable:
    """Concatenate text and hierarchy blocks per class."""
    return ClassEmbeddingTable(text_vectors=text, hier_vectors=hier)
