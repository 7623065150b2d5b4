"""Blockade graphs, registers and their self-reductions.

A blockade graph ``G = (V, E)`` encodes the monotone 2SAT formula
``AND_{(i,j) in E} (not x_i or not x_j)``; satisfying assignments are exactly the
independent sets of ``G``.  Vertices are stored positionally (``0..n-1``) but every
vertex carries a stable integer label that survives reductions, so assignments can
always be reported in terms of the original instance.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Sequence


class InstanceError(ValueError):
    """Invalid instance construction or reduction."""


class CNFParseError(InstanceError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class BlockadeGraph:
    n: int
    edges: tuple[tuple[int, int], ...]
    coords: tuple[tuple[float, float], ...] | None = None
    labels: tuple[int, ...] = ()
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if self.n < 0:
            raise InstanceError("vertex count must be non-negative")
        labels = tuple(int(v) for v in (self.labels or range(self.n)))
        if len(labels) != self.n:
            raise InstanceError(f"expected {self.n} labels, got {len(labels)}")
        if len(set(labels)) != self.n:
            raise InstanceError("labels must be unique")
        canon = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise InstanceError(f"self-loop on vertex {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise InstanceError(f"edge ({i}, {j}) out of range for n={self.n}")
            e = (min(i, j), max(i, j))
            if e in canon:
                raise InstanceError(f"duplicate edge {e}")
            canon.add(e)
        if self.coords is not None:
            if len(self.coords) != self.n:
                raise InstanceError("coords length does not match n")
            object.__setattr__(
                self, "coords", tuple((float(x), float(y)) for x, y in self.coords)
            )
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    @property
    def m(self) -> int:
        return len(self.edges)

    def neighbors(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def neighbor_masks(self) -> list[int]:
        """Bitmask of neighbours for every vertex position."""
        masks = [0] * self.n
        for i, j in self.edges:
            masks[i] |= 1 << j
            masks[j] |= 1 << i
        return masks

    def index_of(self, label: int) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise InstanceError(f"unknown vertex label {label}") from None

    def induced(self, keep: Iterable[int]) -> "BlockadeGraph":
        """Induced subgraph on the given vertex positions, labels preserved."""
        keep = sorted(set(keep))
        pos = {v: k for k, v in enumerate(keep)}
        edges = [(pos[i], pos[j]) for i, j in self.edges if i in pos and j in pos]
        coords = None if self.coords is None else [self.coords[v] for v in keep]
        return BlockadeGraph(len(keep), tuple(edges), coords, tuple(self.labels[v] for v in keep))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "edges": [list(e) for e in self.edges],
            "coords": None if self.coords is None else [list(c) for c in self.coords],
            "labels": list(self.labels),
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "BlockadeGraph":
        try:
            coords = data.get("coords")
            return cls(
                int(data["n"]),
                tuple((int(i), int(j)) for i, j in data["edges"]),
                None if coords is None else tuple(tuple(c) for c in coords),
                tuple(data.get("labels") or ()),
            )
        except (KeyError, TypeError) as exc:
            raise InstanceError(f"malformed instance JSON: {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "BlockadeGraph":
        return cls.from_dict(json.loads(text))


Assignment = str
"""Bitstring over a graph's vertex positions; the rightmost character is position 0."""


def assignment_to_int(a: Assignment) -> int:
    if a and set(a) - {"0", "1"}:
        raise InstanceError(f"assignment must be a 0/1 string, got {a!r}")
    return int(a, 2) if a else 0


def int_to_assignment(x: int, n: int) -> Assignment:
    return format(x, f"0{n}b") if n else ""


def build_chain(n: int) -> BlockadeGraph:
    if n < 1:
        raise InstanceError(f"chain length must be >= 1, got {n}")
    return BlockadeGraph(
        n, tuple((i, i + 1) for i in range(n - 1)), tuple((float(i), 0.0) for i in range(n))
    )


def build_grid(lx: int, ly: int) -> BlockadeGraph:
    """Rectangular grid with rook adjacency; vertex ``x * ly + y`` sits at ``(x, y)``.

    ``build_grid(1, n)`` is the same graph as ``build_chain(n)`` up to coordinates
    (they lie along the y axis instead of the x axis).
    """
    if lx < 1 or ly < 1:
        raise InstanceError(f"grid dimensions must be >= 1, got {lx}x{ly}")
    edges = []
    for x in range(lx):
        for y in range(ly):
            v = x * ly + y
            if y + 1 < ly:
                edges.append((v, v + 1))
            if x + 1 < lx:
                edges.append((v, v + ly))
    coords = tuple((float(x), float(y)) for x in range(lx) for y in range(ly))
    return BlockadeGraph(lx * ly, tuple(edges), coords)


def punch_grid(g: BlockadeGraph, holes: Sequence[int]) -> BlockadeGraph:
    """Remove the vertices labelled ``holes`` and keep the induced subgraph."""
    seen = set()
    for h in holes:
        if h in seen:
            raise InstanceError(f"duplicate hole {h}")
        seen.add(h)
    drop = {g.index_of(h) for h in holes}
    return g.induced(v for v in range(g.n) if v not in drop)


def unit_disk_graph(coords: Sequence[Sequence[float]], r_b: float) -> BlockadeGraph:
    """Connect every pair of points strictly closer than the blockade radius."""
    if len(coords) < 1:
        raise InstanceError("need at least one point")
    if not r_b > 0:
        raise InstanceError(f"blockade radius must be positive, got {r_b}")
    pts = [(float(x), float(y)) for x, y in coords]
    edges, notes = [], []
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            d = math.dist(pts[i], pts[j])
            if d == 0.0:
                notes.append(f"vertices {i} and {j} share coordinates")
            if d < r_b:
                edges.append((i, j))
    for msg in notes:
        warnings.warn(msg, stacklevel=2)
    return BlockadeGraph(len(pts), tuple(edges), tuple(pts), warnings=tuple(notes))


@dataclass(frozen=True)
class Register:
    """Active (unfixed) part of an instance plus the variables fixed so far."""

    graph: BlockadeGraph
    fixed: Mapping[int, int] = field(default_factory=dict)
    original: BlockadeGraph | None = None

    def __post_init__(self):
        object.__setattr__(self, "fixed", MappingProxyType(dict(self.fixed)))
        if self.original is None:
            object.__setattr__(self, "original", self.graph)
        if set(self.fixed) & set(self.graph.labels):
            raise InstanceError("fixed and active labels overlap")

    @classmethod
    def from_graph(cls, g: BlockadeGraph) -> "Register":
        return cls(g, {}, g)

    @property
    def active(self) -> tuple[int, ...]:
        return self.graph.labels

    def full_assignment(self, active_bits: Mapping[int, int] | None = None) -> dict[int, int]:
        """Fixed bits merged with bits for the active labels (default all zero)."""
        out = dict(self.fixed)
        for lab in self.graph.labels:
            out[lab] = int((active_bits or {}).get(lab, 0))
        return out


def _require_active(r: Register, v: int) -> int:
    if v not in r.graph.labels:
        raise InstanceError(f"vertex {v} is not active in the register")
    return r.graph.index_of(v)


def fix_zero(r: Register, v: int) -> Register:
    pos = _require_active(r, v)
    g = r.graph.induced(u for u in range(r.graph.n) if u != pos)
    return Register(g, {**r.fixed, v: 0}, r.original)


def fix_one(r: Register, v: int) -> Register:
    pos = _require_active(r, v)
    nbrs = r.graph.neighbors()[pos]
    fixed = {**r.fixed, v: 1}
    for u in nbrs:
        fixed[r.graph.labels[u]] = 0
    drop = {pos, *nbrs}
    g = r.graph.induced(u for u in range(r.graph.n) if u not in drop)
    return Register(g, fixed, r.original)


def satisfies(g: BlockadeGraph, a: Assignment | Sequence[int]) -> bool:
    """True iff no edge has both endpoints set, i.e. ``a`` is an independent set."""
    if isinstance(a, str):
        if len(a) != g.n:
            raise InstanceError(f"assignment length {len(a)} != n={g.n}")
        x = assignment_to_int(a)
        return all(not ((x >> i) & 1 and (x >> j) & 1) for i, j in g.edges)
    if len(a) != g.n:
        raise InstanceError(f"assignment length {len(a)} != n={g.n}")
    return all(not (a[i] and a[j]) for i, j in g.edges)


def satisfies_labels(g: BlockadeGraph, bits: Mapping[int, int]) -> bool:
    """Check an assignment given as ``label -> bit`` against ``g``."""
    return all(not (bits[g.labels[i]] and bits[g.labels[j]]) for i, j in g.edges)


def to_cnf(g: BlockadeGraph) -> str:
    """DIMACS CNF with one clause ``-i -j 0`` (1-indexed) per edge.

    Non-default labels are kept in a ``c labels`` comment so the round trip is exact.
    """
    lines = []
    if g.labels != tuple(range(g.n)):
        lines.append("c labels " + " ".join(str(v) for v in g.labels))
    lines.append(f"p cnf {g.n} {g.m}")
    lines.extend(f"-{i + 1} -{j + 1} 0" for i, j in g.edges)
    return "\n".join(lines) + "\n"


def parse_cnf(text: str) -> BlockadeGraph:
    n = m = None
    labels: tuple[int, ...] = ()
    edges = []
    pending: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        if line.startswith("c"):
            parts = line.split()
            if len(parts) >= 2 and parts[1] == "labels":
                try:
                    labels = tuple(int(v) for v in parts[2:])
                except ValueError:
                    raise CNFParseError(lineno, "malformed labels comment") from None
            continue
        if line.startswith("p"):
            parts = line.split()
            if n is not None:
                raise CNFParseError(lineno, "duplicate header")
            if len(parts) != 4 or parts[1] != "cnf":
                raise CNFParseError(lineno, "malformed header, expected 'p cnf <vars> <clauses>'")
            try:
                n, m = int(parts[2]), int(parts[3])
            except ValueError:
                raise CNFParseError(lineno, "malformed header counts") from None
            if n < 0 or m < 0:
                raise CNFParseError(lineno, "negative header counts")
            continue
        if n is None:
            raise CNFParseError(lineno, "clause before header")
        try:
            lits = [int(t) for t in line.split()]
        except ValueError:
            raise CNFParseError(lineno, "non-integer literal") from None
        for lit in lits:
            if lit == 0:
                if len(pending) != 2:
                    raise CNFParseError(lineno, f"clause has {len(pending)} literals, expected 2")
                i, j = pending
                pending = []
                if i > 0 or j > 0:
                    raise CNFParseError(lineno, "non-monotone clause")
                i, j = -i, -j
                if not (1 <= i <= n and 1 <= j <= n):
                    raise CNFParseError(lineno, "variable out of range")
                if i == j:
                    raise CNFParseError(lineno, "clause repeats a variable")
                edges.append((i - 1, j - 1))
            else:
                pending.append(lit)
    if n is None:
        raise CNFParseError(0, "missing header")
    if pending:
        raise CNFParseError(0, "unterminated clause")
    if len(edges) != m:
        raise CNFParseError(0, f"header announces {m} clauses, found {len(edges)}")
    try:
        return BlockadeGraph(n, tuple(edges), None, labels)
    except InstanceError as exc:
        raise CNFParseError(0, str(exc)) from exc


def load_instance(path) -> BlockadeGraph:
    """Read native JSON or DIMACS, chosen by content."""
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("{"):
        return BlockadeGraph.from_json(text)
    return parse_cnf(text)


def punched_grid_ensemble() -> dict[str, BlockadeGraph]:
    """Fixed set of punched grids used for benchmarking (n <= 18).

    Holes are chosen by hand to break the grid's reflection symmetries.
    """
    return {
        "punched_4x4_h5": punch_grid(build_grid(4, 4), [5]),
        "punched_4x5_h6_13": punch_grid(build_grid(4, 5), [6, 13]),
        "punched_3x6_h7": punch_grid(build_grid(3, 6), [7]),
        "punched_4x5_h1_12": punch_grid(build_grid(4, 5), [1, 12]),
    }
