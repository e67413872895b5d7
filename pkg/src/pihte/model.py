"""Variables, causal graphs, datasets, and empirical probability extraction."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from fractions import Fraction

from .errors import (
    CycleError,
    DomainViolation,
    EmptyDataset,
    ParseError,
    UnknownVariable,
)

_NUM_RE = re.compile(r"(\d+)")


def name_key(name: str):
    """Natural sort key: digit runs compare numerically, primes sort after the base.

    Gives the canonical global variable order (V2 < V10, V0 < V0' < V1).
    """
    base = name.rstrip("'")
    primes = len(name) - len(base)
    parts = tuple(
        (1, int(tok)) if tok.isdigit() else (0, tok)
        for tok in _NUM_RE.split(base)
        if tok
    )
    return (parts, primes)


def base_name(name: str) -> str:
    """Strip renamer primes, recovering the dataset column a variable reads."""
    return name.rstrip("'")


@dataclass(frozen=True, order=True)
class Variable:
    name: str
    domain_size: int

    def __post_init__(self):
        if self.domain_size < 1:
            raise ValueError(f"domain_size of {self.name!r} must be >= 1")


class CausalGraph:
    """DAG over observed variables with bidirected confounder surrogates.

    Bidirected edges are metadata: preserved for fixtures and reporting, and
    expanded into explicit latents only by the simulator.
    """

    def __init__(self, variables, directed_edges, bidirected_edges=()):
        self.variables = tuple(variables)
        self._by_name = {v.name: v for v in self.variables}
        if len(self._by_name) != len(self.variables):
            raise ParseError("duplicate variable declaration")
        for a, b in list(directed_edges) + [tuple(e) for e in bidirected_edges]:
            for end in (a, b):
                if end not in self._by_name:
                    raise UnknownVariable(f"edge endpoint {end!r} not declared")
        self.directed_edges = tuple(tuple(e) for e in directed_edges)
        self.bidirected_edges = tuple(tuple(sorted(e, key=name_key)) for e in bidirected_edges)
        self._check_acyclic()

    def _check_acyclic(self):
        children = {v.name: [] for v in self.variables}
        indeg = {v.name: 0 for v in self.variables}
        for a, b in self.directed_edges:
            children[a].append(b)
            indeg[b] += 1
        queue = [n for n, d in indeg.items() if d == 0]
        seen = 0
        while queue:
            n = queue.pop()
            seen += 1
            for c in children[n]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if seen != len(self.variables):
            raise CycleError("directed edges contain a cycle")

    def variable(self, name: str) -> Variable:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownVariable(name) from None

    def domain_size(self, name: str) -> int:
        return self.variable(name).domain_size

    @property
    def names(self):
        return tuple(v.name for v in self.variables)

    def parents(self, name: str):
        return tuple(a for a, b in self.directed_edges if b == name)

    def topological_order(self):
        order = []
        children = {v.name: [] for v in self.variables}
        indeg = {v.name: 0 for v in self.variables}
        for a, b in self.directed_edges:
            children[a].append(b)
            indeg[b] += 1
        pending = sorted((n for n, d in indeg.items() if d == 0), key=name_key)
        while pending:
            n = pending.pop(0)
            order.append(n)
            ready = []
            for c in children[n]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
            pending = sorted(pending + ready, key=name_key)
        return tuple(order)


class Dataset:
    """Integer-coded sample rows over named columns. Immutable after load."""

    def __init__(self, columns, rows, domains):
        self.columns = tuple(columns)
        self.rows = tuple(tuple(r) for r in rows)
        self.domains = dict(domains)
        self._col_index = {c: i for i, c in enumerate(self.columns)}
        for c in self.columns:
            if c not in self.domains:
                raise UnknownVariable(f"no domain for column {c!r}")
        for i, row in enumerate(self.rows):
            if len(row) != len(self.columns):
                raise ParseError(f"row {i} has {len(row)} cells, expected {len(self.columns)}")
            for c, v in zip(self.columns, row):
                if not 0 <= v < self.domains[c]:
                    raise DomainViolation(i, c, v)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def column_index(self, name: str) -> int:
        try:
            return self._col_index[name]
        except KeyError:
            raise UnknownVariable(name) from None

    def project(self, names):
        """Distinct-preserving projection: per-row tuples for the given columns."""
        idx = [self.column_index(n) for n in names]
        return [tuple(row[i] for i in idx) for row in self.rows]


def load_graph(path) -> CausalGraph:
    """Parse the graph text format: `var <name> <k>`, `a -> b`, `a <-> b`."""
    variables = []
    directed = []
    bidirected = []
    declared = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "var":
                if len(parts) != 3:
                    raise ParseError("expected `var <name> <domain_size>`", path, lineno)
                try:
                    k = int(parts[2])
                except ValueError:
                    raise ParseError(f"bad domain size {parts[2]!r}", path, lineno) from None
                if k < 1:
                    raise ParseError(f"domain size must be >= 1, got {k}", path, lineno)
                if parts[1] in declared:
                    raise ParseError(f"variable {parts[1]!r} declared twice", path, lineno)
                declared.add(parts[1])
                variables.append(Variable(parts[1], k))
            elif len(parts) == 3 and parts[1] == "->":
                directed.append((parts[0], parts[2]))
            elif len(parts) == 3 and parts[1] == "<->":
                bidirected.append((parts[0], parts[2]))
            else:
                raise ParseError(f"unrecognized statement {line!r}", path, lineno)
    return CausalGraph(variables, directed, bidirected)


def load_dataset(path, graph: CausalGraph) -> Dataset:
    """Load a CSV of integer cells, range-checked against the graph's domains."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", path) from None
        columns = [c.strip() for c in header]
        for c in columns:
            graph.variable(c)  # raises UnknownVariable
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                rows.append(tuple(int(cell) for cell in rec))
            except ValueError:
                raise ParseError(f"non-integer cell in {rec!r}", path, lineno) from None
    domains = {c: graph.domain_size(c) for c in columns}
    return Dataset(columns, rows, domains)


def empirical_prob(data: Dataset, left, right=()) -> "SparseFactor":
    """Empirical conditional table P_D(left | right) as a sparse factor.

    Entries exist only for configurations seen in the data; counts are exact
    integers, divided once per entry. With right empty this is the empirical
    marginal over `left`.
    """
    from .factor import SparseFactor

    left = tuple(left)
    right = tuple(right)
    if not left:
        raise ValueError("left variable set must be non-empty")
    if set(left) & set(right):
        raise ValueError("left and right sets must be disjoint")
    if data.n_rows == 0:
        raise EmptyDataset("cannot extract probabilities from zero rows")

    scope_names = sorted(left + right, key=name_key)
    scope = tuple(Variable(n, data.domains[n]) for n in scope_names)
    joint_proj = data.project(scope_names)

    joint_counts = {}
    for key in joint_proj:
        joint_counts[key] = joint_counts.get(key, 0) + 1

    if right:
        right_pos = [scope_names.index(n) for n in sorted(right, key=name_key)]
        cond_counts = {}
        for key, c in joint_counts.items():
            rkey = tuple(key[i] for i in right_pos)
            cond_counts[rkey] = cond_counts.get(rkey, 0) + c
        entries = {
            key: float(Fraction(c, cond_counts[tuple(key[i] for i in right_pos)]))
            for key, c in joint_counts.items()
        }
    else:
        n = data.n_rows
        entries = {key: float(Fraction(c, n)) for key, c in joint_counts.items()}
    return SparseFactor(scope, entries)
