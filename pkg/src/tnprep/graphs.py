"""Bounded-degree interaction graphs and their partition into matchings.

A graph here is the interaction layout of a tensor-network state: vertices
carry site tensors, edges carry entangled bond states.  The edge coloring
groups edges into matchings so that the two-site channels within one class
act on disjoint supports and commute; the discrete protocol picks one class
uniformly at random per step.
"""

from dataclasses import dataclass, field

from .errors import ValidationError


@dataclass(frozen=True)
class Graph:
    """Simple connected graph with canonically ordered edges.

    Edges are stored as (i, j) with i < j, sorted lexicographically; every
    downstream object (colorings, Kraus lists, jump orderings) inherits its
    determinism from this ordering.
    """

    num_vertices: int
    edges: tuple
    adjacency: tuple = field(init=False, repr=False)

    def __post_init__(self):
        n = self.num_vertices
        if n < 2:
            raise ValidationError(f"graph needs at least 2 vertices, got {n}")
        seen = set()
        adj = [[] for _ in range(n)]
        for e in self.edges:
            if len(e) != 2:
                raise ValidationError(f"edge {e!r} is not a pair")
            i, j = e
            if not (0 <= i < n and 0 <= j < n):
                raise ValidationError(f"edge {e} references a vertex outside 0..{n-1}")
            if i == j:
                raise ValidationError(f"self-loop at vertex {i}")
            if i > j:
                raise ValidationError(f"edge {e} not in canonical (i < j) order")
            if (i, j) in seen:
                raise ValidationError(f"duplicate edge {e}")
            seen.add((i, j))
            adj[i].append(j)
            adj[j].append(i)
        if list(self.edges) != sorted(self.edges):
            raise ValidationError("edges not sorted lexicographically")
        object.__setattr__(self, "adjacency", tuple(tuple(sorted(a)) for a in adj))
        if not self._connected():
            raise ValidationError("graph is not connected")

    def _connected(self):
        if self.num_vertices == 0:
            return False
        seen = {0}
        stack = [0]
        while stack:
            v = stack.pop()
            for u in self.adjacency[v]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        return len(seen) == self.num_vertices

    @property
    def max_degree(self):
        return max(len(a) for a in self.adjacency)

    def degree(self, v):
        return len(self.adjacency[v])


@dataclass(frozen=True)
class EdgeColoring:
    """Partition of the edge set into matchings E_1 ... E_k."""

    classes: tuple

    def __post_init__(self):
        for cls in self.classes:
            touched = set()
            for (i, j) in cls:
                if i in touched or j in touched:
                    raise ValidationError(f"class {cls} is not a matching")
                touched.update((i, j))

    @property
    def k(self):
        return len(self.classes)


def make_graph(num_vertices, edges):
    """Canonicalize an edge list (any order, any pair orientation) into a Graph."""
    canon = sorted(tuple(sorted(e)) for e in edges)
    return Graph(num_vertices, tuple(canon))


def build_lattice_graph(kind, dims):
    """Named lattices: 'ring' [N], 'path' [N], 'grid2d' [rows, cols] (open boundaries)."""
    if any(d <= 0 for d in dims):
        raise ValidationError(f"dims must be positive, got {dims}")
    if kind == "ring":
        (n,) = dims
        if n < 3:
            raise ValidationError(f"ring needs length >= 3, got {n}")
        edges = [(i, (i + 1) % n) for i in range(n)]
        return make_graph(n, edges)
    if kind == "path":
        (n,) = dims
        if n < 2:
            raise ValidationError(f"path needs length >= 2, got {n}")
        return make_graph(n, [(i, i + 1) for i in range(n - 1)])
    if kind == "grid2d":
        rows, cols = dims
        n = rows * cols
        if n < 2:
            raise ValidationError(f"grid2d needs at least 2 vertices, got {rows}x{cols}")
        idx = lambda r, c: r * cols + c
        edges = []
        for r in range(rows):
            for c in range(cols):
                if c + 1 < cols:
                    edges.append((idx(r, c), idx(r, c + 1)))
                if r + 1 < rows:
                    edges.append((idx(r, c), idx(r + 1, c)))
        return make_graph(n, edges)
    raise ValidationError(f"unknown lattice kind {kind!r}")


def edge_color(g):
    """Greedy proper edge coloring: scan edges in canonical order, assign the
    lowest class index free at both endpoints.  Uses at most 2*max_degree - 1
    classes, which suffices for the protocol's O(degree) schedule."""
    classes = []
    busy = []  # per class: set of touched vertices
    for e in g.edges:
        i, j = e
        c = 0
        while c < len(classes) and (i in busy[c] or j in busy[c]):
            c += 1
        if c == len(classes):
            classes.append([])
            busy.append(set())
        classes[c].append(e)
        busy[c].update(e)
    coloring = EdgeColoring(tuple(tuple(cls) for cls in classes))
    assert coloring.k <= 2 * g.max_degree - 1
    return coloring
