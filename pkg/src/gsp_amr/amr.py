"""AMR graph data model, PENMAN I/O and top-down linearization."""

from __future__ import annotations

import random
import re
from collections import Counter, deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

__all__ = [
    "STOP",
    "DUMMY_INDEX",
    "ROOT_RELATION",
    "AmrError",
    "PenmanError",
    "IntegrityError",
    "StructureError",
    "Node",
    "Edge",
    "AmrGraph",
    "SpanningAction",
    "OrderStrategy",
    "inverse_relation",
    "is_inverse",
    "looks_literal",
    "parse_penman",
    "serialize_penman",
    "penman_variable_names",
    "root_distances",
    "cut_graph",
    "graph_depth",
    "relation_frequency_table",
    "linearize",
    "rebuild",
    "format_actions",
    "parse_actions",
]

STOP = "<stop>"
DUMMY_INDEX = 0
ROOT_RELATION = ":root"

# Roles whose name ends in -of without being inverses.
_INHERENT_OF = frozenset({":consist-of", ":prep-out-of", ":prep-on-behalf-of"})
_BARE_CONSTANTS = frozenset({"-", "+", "imperative", "expressive", "interrogative"})
_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


class AmrError(ValueError):
    pass


class PenmanError(AmrError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class IntegrityError(AmrError):
    pass


class StructureError(AmrError):
    pass


def is_inverse(relation: str) -> bool:
    return relation.endswith("-of") and relation not in _INHERENT_OF


def inverse_relation(relation: str) -> str:
    """Toggle the ``-of`` suffix: ``:ARG0`` <-> ``:ARG0-of``."""
    if is_inverse(relation):
        return relation[:-3]
    return relation + "-of"


def looks_literal(concept: str) -> bool:
    """True for strings a decoder output should treat as a constant."""
    return (
        concept in _BARE_CONSTANTS
        or bool(_NUMBER.match(concept))
        or (len(concept) >= 2 and concept[0] == '"' and concept[-1] == '"')
    )


@dataclass(frozen=True)
class Node:
    id: str
    concept: str
    is_constant: bool = False

    def __post_init__(self):
        if not self.concept:
            raise IntegrityError(f"node {self.id!r} has an empty concept")


@dataclass(frozen=True)
class Edge:
    head: str
    child: str
    relation: str

    def __post_init__(self):
        if self.head == self.child:
            raise IntegrityError(f"self-loop on node {self.head!r}")
        if not self.relation.startswith(":"):
            raise IntegrityError(f"relation {self.relation!r} must start with ':'")


@dataclass(frozen=True)
class AmrGraph:
    """Rooted, labeled, directed concept graph.

    Instances are immutable; all operations in this module return new graphs.
    """

    nodes: Tuple[Node, ...]
    edges: Tuple[Edge, ...]
    root: str
    metadata: Mapping[str, str] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        object.__setattr__(self, "metadata", dict(self.metadata))
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise IntegrityError("duplicate node ids")
        known = set(ids)
        if self.root not in known:
            raise IntegrityError(f"root {self.root!r} is not a node")
        if len(set(self.edges)) != len(self.edges):
            raise IntegrityError("duplicate (head, child, relation) edge")
        for e in self.edges:
            if e.head not in known or e.child not in known:
                raise IntegrityError(f"edge {e} references an unknown node")
        for e in self.edges:
            if self.node(e.head).is_constant:
                raise IntegrityError(f"constant {e.head!r} has an outgoing edge")
        # reachability is checked by root_distances
        root_distances(self)

    @cached_property
    def _index(self) -> Dict[str, Node]:
        return {n.id: n for n in self.nodes}

    def node(self, node_id: str) -> Node:
        return self._index[node_id]

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def root_concept(self) -> str:
        return self.node(self.root).concept

    def neighbors(self) -> Dict[str, List[Tuple[str, Edge]]]:
        """Undirected adjacency: node id -> [(other id, edge)] in edge order."""
        adj: Dict[str, List[Tuple[str, Edge]]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            adj[e.head].append((e.child, e))
            adj[e.child].append((e.head, e))
        return adj

    def with_metadata(self, **items: str) -> "AmrGraph":
        meta = dict(self.metadata)
        meta.update(items)
        return AmrGraph(self.nodes, self.edges, self.root, meta)


# --------------------------------------------------------------------------
# PENMAN reading

_TOKEN = re.compile(
    r'\s*(?:(?P<lp>\()|(?P<rp>\))|(?P<slash>/)|(?P<str>"(?:[^"\\]|\\.)*")'
    r"|(?P<role>:[^\s()\"]*)|(?P<sym>[^\s()/:\"][^\s()\"]*))"
)


def _tokenize(block: Sequence[Tuple[int, str]]):
    for lineno, line in block:
        pos = 0
        while pos < len(line):
            if line[pos:].strip() == "":
                break
            m = _TOKEN.match(line, pos)
            if m is None or m.end() == pos:
                raise PenmanError(f"unexpected character {line[pos:].strip()[:1]!r}", lineno)
            pos = m.end()
            kind = m.lastgroup
            yield kind, m.group(kind), lineno


class _BlockParser:
    def __init__(self, lines: Sequence[Tuple[int, str]]):
        self.tokens = list(_tokenize(lines))
        self.pos = 0
        self.last_line = lines[-1][0] if lines else None
        self.nodes: Dict[str, Node] = {}
        self.order: List[str] = []
        self.raw_edges: List[Tuple[str, str, str, int]] = []  # head, rel, target-symbol-or-id, line
        self.n_constants = 0

    def peek(self):
        if self.pos >= len(self.tokens):
            return None, None, self.last_line
        return self.tokens[self.pos]

    def take(self, expected: Optional[str] = None):
        kind, text, line = self.peek()
        if kind is None:
            raise PenmanError("unexpected end of graph (unbalanced parentheses)", line)
        if expected is not None and kind != expected:
            raise PenmanError(f"expected {expected}, found {text!r}", line)
        self.pos += 1
        return kind, text, line

    def parse(self) -> AmrGraph:
        root = self.node()
        kind, text, line = self.peek()
        if kind is not None:
            raise PenmanError(f"unexpected token {text!r} after graph end", line)
        edges: List[Edge] = []
        seen = set()
        for head, rel, target, line in self.raw_edges:
            if target.startswith("\0"):
                child = target[1:]
            elif target in self.nodes:
                child = target
            else:
                child = self._constant(target)
            if rel != ":" and is_inverse(rel) and not self.nodes[child].is_constant:
                head, child, rel = child, head, inverse_relation(rel)
            if head == child:
                raise PenmanError(f"self-loop on variable {head!r}", line)
            e = Edge(head, child, rel)
            if e not in seen:
                seen.add(e)
                edges.append(e)
        nodes = [self.nodes[i] for i in self.order]
        return AmrGraph(nodes, edges, root)

    def _constant(self, literal: str) -> str:
        self.n_constants += 1
        cid = f"\0c{self.n_constants}"
        self.nodes[cid] = Node(cid, literal, True)
        self.order.append(cid)
        return cid

    def node(self) -> str:
        _, _, line = self.take("lp")
        _, var, vline = self.take("sym")
        if var in self.nodes:
            raise PenmanError(f"duplicate variable definition {var!r}", vline)
        kind, text, line = self.peek()
        if kind != "slash":
            raise PenmanError(f"variable {var!r} has no concept", line)
        self.take("slash")
        kind, concept, line = self.take()
        if kind not in ("sym", "str"):
            raise PenmanError(f"bad concept {concept!r}", line)
        self.nodes[var] = Node(var, concept, False)
        self.order.append(var)
        while True:
            kind, text, line = self.peek()
            if kind == "rp":
                self.take()
                return var
            if kind != "role":
                if kind is None:
                    raise PenmanError("unbalanced parentheses", line)
                raise PenmanError(f"expected a role, found {text!r}", line)
            self.take()
            role = text
            if len(role) < 2:
                raise PenmanError("empty role name", line)
            kind, target, tline = self.peek()
            if kind == "lp":
                child = self.node()
                self.raw_edges.append((var, role, "\0" + child, tline))
            elif kind in ("sym", "str"):
                self.take()
                self.raw_edges.append((var, role, target, tline))
            else:
                raise PenmanError(f"role {role} has no target", tline)


def _split_blocks(text: str):
    block: List[Tuple[int, str]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.strip() == "":
            if block:
                yield block
                block = []
        else:
            block.append((lineno, line))
    if block:
        yield block


def _parse_metadata(line: str, meta: Dict[str, str]) -> None:
    body = line.lstrip()[1:]
    for chunk in body.split("::")[1:]:
        chunk = chunk.strip()
        if not chunk:
            continue
        key, _, value = chunk.partition(" ")
        meta[key] = value.strip()


def parse_penman(text: str) -> List[AmrGraph]:
    """Read every blank-line separated PENMAN block in ``text``.

    ``# ::key value`` comment lines become graph metadata. Repeated variables
    are reentrancies; quoted strings, numbers and non-variable symbols become
    constant nodes. Inverse roles (``:ARG0-of``) are normalized to forward
    edges.
    """
    graphs = []
    for block in _split_blocks(text):
        meta: Dict[str, str] = {}
        body = []
        for lineno, line in block:
            if line.lstrip().startswith("#"):
                _parse_metadata(line, meta)
            else:
                body.append((lineno, line))
        if not body:
            raise PenmanError("empty graph block", block[0][0])
        try:
            graph = _BlockParser(body).parse()
        except IntegrityError as exc:
            raise PenmanError(str(exc), body[0][0]) from exc
        graphs.append(AmrGraph(graph.nodes, graph.edges, graph.root, meta))
    return graphs


# --------------------------------------------------------------------------
# PENMAN writing


def _variable_names(graph: AmrGraph, order: Sequence[str]) -> Dict[str, str]:
    names: Dict[str, str] = {}
    used: Counter = Counter()
    for node_id in order:
        concept = graph.node(node_id).concept
        letter = next((ch for ch in concept.lower() if "a" <= ch <= "z"), "x")
        used[letter] += 1
        names[node_id] = letter if used[letter] == 1 else f"{letter}{used[letter]}"
    return names


def _definition_edges(graph: AmrGraph) -> Dict[str, Edge]:
    """Pick, for every non-root node, the edge under which it is written in full.

    Nodes reachable from the root along forward edges are defined there;
    the rest hang off the defined part through an inverse role.
    """
    out: Dict[str, List[Edge]] = {n.id: [] for n in graph.nodes}
    into: Dict[str, List[Edge]] = {n.id: [] for n in graph.nodes}
    concept = {n.id: n.concept for n in graph.nodes}
    for e in sorted(graph.edges, key=lambda e: (e.relation, concept[e.child], concept[e.head], e.child, e.head)):
        out[e.head].append(e)
        into[e.child].append(e)
    chosen: Dict[str, Edge] = {}
    reached = {graph.root}

    def spread(frontier):
        queue = deque(frontier)
        while queue:
            u = queue.popleft()
            for e in out[u]:
                if e.child not in reached:
                    reached.add(e.child)
                    chosen[e.child] = e
                    queue.append(e.child)

    spread([graph.root])
    while len(reached) < len(graph.nodes):
        for n in sorted(reached):
            link = next((e for e in into[n] if e.head not in reached), None)
            if link is not None:
                reached.add(link.head)
                chosen[link.head] = link
                spread([link.head])
                break
        else:
            raise IntegrityError("graph is not connected")
    return chosen


def _layout(graph: AmrGraph):
    """The tree of mentions the writer prints, plus variable names."""
    adj = graph.neighbors()
    definition = _definition_edges(graph)
    emitted_edges = set()
    order: List[str] = []

    def plan(node_id: str) -> tuple:
        order.append(node_id)
        incident = []
        for other, e in adj[node_id]:
            forward = e.head == node_id
            rel = e.relation if forward else inverse_relation(e.relation)
            incident.append((rel, graph.node(other).concept, other, e))
        incident.sort(key=lambda item: item[:3])
        children = []
        for rel, _, other, e in incident:
            if e in emitted_edges:
                continue
            emitted_edges.add(e)
            if graph.node(other).is_constant:
                children.append((rel, "const", graph.node(other).concept))
            elif definition.get(other) is e:
                children.append((rel, "node", plan(other)))
            else:
                children.append((rel, "ref", other))
        return node_id, children

    tree = plan(graph.root)
    return tree, _variable_names(graph, order)


def penman_variable_names(graph: AmrGraph) -> Dict[str, str]:
    """Node id -> the variable name ``serialize_penman`` will print."""
    return _layout(graph)[1]


def serialize_penman(graph: AmrGraph, metadata: bool = True) -> str:
    """Write ``graph`` as indented PENMAN.

    Children are ordered by (relation, child concept). A variable is written
    in full where a forward role first reaches it; other mentions are bare.
    """
    tree, names = _layout(graph)

    def render(item, depth: int) -> str:
        node_id, children = item
        parts = [f"({names[node_id]} / {graph.node(node_id).concept}"]
        for rel, kind, child in children:
            if kind == "node":
                text = render(child, depth + 1)
            elif kind == "ref":
                text = names[child]
            else:
                text = child
            parts.append("\n" + "    " * (depth + 1) + rel + " " + text)
        return "".join(parts) + ")"

    lines = []
    if metadata:
        for key, value in graph.metadata.items():
            lines.append(f"# ::{key} {value}")
    lines.append(render(tree, 0))
    return "\n".join(lines)


# --------------------------------------------------------------------------
# distances and cutting


def root_distances(graph: AmrGraph) -> Dict[str, int]:
    """Breadth-first hop count from the root, ignoring edge direction."""
    adj: Dict[str, List[str]] = {n.id: [] for n in graph.nodes}
    for e in graph.edges:
        adj[e.head].append(e.child)
        adj[e.child].append(e.head)
    dist = {graph.root: 0}
    queue = deque([graph.root])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    if len(dist) != len(graph.nodes):
        missing = sorted(set(adj) - set(dist))
        raise IntegrityError(f"nodes unreachable from root: {missing}")
    return dist


def graph_depth(graph: AmrGraph) -> int:
    return max(root_distances(graph).values())


def cut_graph(graph: AmrGraph, d_max: int) -> AmrGraph:
    if d_max < 0:
        raise ValueError("d_max must be >= 0")
    dist = root_distances(graph)
    keep = {k for k, d in dist.items() if d <= d_max}
    nodes = [n for n in graph.nodes if n.id in keep]
    edges = [e for e in graph.edges if e.head in keep and e.child in keep]
    return AmrGraph(nodes, edges, graph.root, graph.metadata)


def relation_frequency_table(corpus: Iterable[AmrGraph]) -> Dict[str, int]:
    counts: Counter = Counter()
    for g in corpus:
        counts.update(e.relation for e in g.edges)
    return dict(sorted(counts.items()))


# --------------------------------------------------------------------------
# linearization


@dataclass(frozen=True)
class SpanningAction:
    """One expansion step: a new concept and its arcs from existing nodes.

    ``parents`` holds (existing index, relation) pairs; index 0 is the dummy
    node, which only the first action (the root) attaches to.
    """

    step: int
    concept: str
    parents: Tuple[Tuple[int, str], ...] = ()

    @property
    def is_stop(self) -> bool:
        return self.concept == STOP

    @property
    def parent_indices(self) -> Tuple[int, ...]:
        seen = []
        for i, _ in self.parents:
            if i not in seen:
                seen.append(i)
        return tuple(seen)


@dataclass(frozen=True)
class OrderStrategy:
    kind: str = "relation-freq"
    frequencies: Mapping[str, int] = field(default_factory=dict)

    KINDS = ("random", "relation-freq", "combined")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown order strategy {self.kind!r}; expected one of {self.KINDS}")


def linearize(graph: AmrGraph, strategy: OrderStrategy = OrderStrategy(), seed: int = 0) -> List[SpanningAction]:
    """Breadth-first action sequence used for teacher forcing.

    Arcs always run existing -> new; an edge pointing the other way is given
    with its inverse relation.
    """
    rng = random.Random(seed)
    kind = strategy.kind
    if kind == "combined":
        kind = rng.choice(["random", "relation-freq"])
    freq = strategy.frequencies
    adj = graph.neighbors()

    order: List[str] = [graph.root]
    discovered = {graph.root}
    queue = deque([graph.root])
    while queue:
        u = queue.popleft()
        fresh = []
        for other, e in adj[u]:
            if other in discovered:
                continue
            rel = e.relation if e.head == u else inverse_relation(e.relation)
            fresh.append((rel, graph.node(other).concept, other))
        # a neighbor may be reachable through several edges from u
        best: Dict[str, Tuple[str, str, str]] = {}
        for item in sorted(fresh, key=lambda it: (-freq.get(it[0], 0), it[0], it[1], it[2])):
            best.setdefault(item[2], item)
        children = list(best.values())
        if kind == "random":
            rng.shuffle(children)
        for _, _, other in children:
            discovered.add(other)
            order.append(other)
            queue.append(other)

    index = {node_id: i + 1 for i, node_id in enumerate(order)}
    actions = []
    for node_id in order:
        t = index[node_id]
        if t == 1:
            parents: List[Tuple[int, str]] = [(DUMMY_INDEX, ROOT_RELATION)]
        else:
            parents = []
            for other, e in adj[node_id]:
                if index[other] < t:
                    rel = e.relation if e.head == other else inverse_relation(e.relation)
                    parents.append((index[other], rel))
            parents.sort()
        actions.append(SpanningAction(t, graph.node(node_id).concept, tuple(parents)))
    actions.append(SpanningAction(len(order) + 1, STOP, ()))
    return actions


def rebuild(actions: Sequence[SpanningAction], metadata: Optional[Mapping[str, str]] = None) -> AmrGraph:
    """Inverse of :func:`linearize`; the first action becomes the root."""
    if not actions:
        raise StructureError("empty action sequence")
    if not actions[-1].is_stop:
        raise StructureError("action sequence has no stop action")
    body = actions[:-1]
    if not body:
        raise StructureError("action sequence has no concepts")
    ids = [f"n{t}" for t in range(1, len(body) + 1)]
    edges: List[Edge] = []
    seen = set()
    for t, act in enumerate(body, start=1):
        if act.is_stop:
            raise StructureError(f"stop concept at step {t} before the end")
        if t >= 2 and not act.parents:
            raise StructureError(f"step {t} has no parents")
        for i, rel in act.parents:
            if i >= t or i < 0:
                raise StructureError(f"step {t} has parent index {i} >= {t}")
            if i == DUMMY_INDEX:
                if t != 1:
                    raise StructureError(f"step {t} attaches to the dummy node")
                continue
            if is_inverse(rel):
                e = Edge(ids[t - 1], ids[i - 1], inverse_relation(rel))
            else:
                e = Edge(ids[i - 1], ids[t - 1], rel)
            if e not in seen:
                seen.add(e)
                edges.append(e)
    out_deg = Counter(e.head for e in edges)
    in_deg = Counter(e.child for e in edges)
    nodes = []
    for node_id, act in zip(ids, body):
        constant = (
            looks_literal(act.concept)
            and out_deg[node_id] == 0
            and in_deg[node_id] == 1
            and node_id != ids[0]
        )
        nodes.append(Node(node_id, act.concept, constant))
    return AmrGraph(nodes, edges, ids[0], metadata or {})


def format_actions(actions: Sequence[SpanningAction]) -> str:
    """Line records ``t<TAB>concept<TAB>parent:relation,...``."""
    lines = []
    for a in actions:
        parents = ",".join(f"{i}:{rel}" for i, rel in a.parents)
        lines.append(f"{a.step}\t{a.concept}\t{parents}")
    return "\n".join(lines)


def parse_actions(text: str) -> List[SpanningAction]:
    actions = []
    for line in text.splitlines():
        if not line.strip():
            continue
        step, concept, parents = (line.split("\t") + ["", ""])[:3]
        pairs = []
        for item in filter(None, parents.split(",")):
            i, _, rel = item.partition(":")
            pairs.append((int(i), rel if rel.startswith(":") else ":" + rel))
        actions.append(SpanningAction(int(step), concept, tuple(pairs)))
    return actions
