"""Hypergraphs, tree decompositions, and hypertree covers.

The pipeline is: GYO reduction first (acyclic hypergraphs get a join tree
with one cover function per cluster); otherwise a greedy min-fill elimination
ordering builds a bucket tree, subsumed clusters are merged, and a greedy set
cover per cluster measures the hypertree width.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace

from .errors import ParseError, UncoverableCluster, UnknownVariable, ValidationError
from .model import Variable, name_key


@dataclass(frozen=True)
class Hypergraph:
    """Variables as nodes, one hyperedge per factor scope (ids kept distinct)."""

    edges: tuple  # ((factor_id, scope_tuple), ...)
    domains: dict = field(default_factory=dict, compare=False)
    empty: bool = False

    @property
    def nodes(self):
        seen = set()
        for _, scope in self.edges:
            seen.update(scope)
        return tuple(sorted(seen, key=name_key))

    def scope_of(self, factor_id):
        for fid, scope in self.edges:
            if fid == factor_id:
                return scope
        raise KeyError(factor_id)

    def primal_adjacency(self):
        adj = {n: set() for n in self.nodes}
        for _, scope in self.edges:
            for a in scope:
                for b in scope:
                    if a != b:
                        adj[a].add(b)
        return adj


def build_hypergraph(level, domains=None) -> Hypergraph:
    """One hyperedge per level factor, child output functions included.

    ProbTerms get ids f0..fN in flattened order; the output function of child
    level c gets id g<c>. An empty factor list yields a flagged 0-edge graph.
    """
    edges = []
    for i, term in enumerate(level.factors):
        edges.append((f"f{i}", term.scope))
    for child_id, scope in level.child_outputs:
        edges.append((f"g{child_id}", tuple(sorted(scope, key=name_key))))
    return Hypergraph(tuple(edges), domains or {}, empty=not edges)


@dataclass
class Cluster:
    chi: frozenset
    psi: frozenset
    cover: tuple = ()


@dataclass
class TreeDecomposition:
    clusters: dict          # id -> Cluster
    edges: list             # (u, v) pairs, u < v
    root: int = 0

    def separator(self, u, v):
        return self.clusters[u].chi & self.clusters[v].chi

    def neighbors(self, u):
        out = []
        for a, b in self.edges:
            if a == u:
                out.append(b)
            elif b == u:
                out.append(a)
        return sorted(out)

    @property
    def treewidth(self):
        return max(len(c.chi) for c in self.clusters.values()) - 1

    @property
    def hyperwidth(self):
        return max(len(c.cover) for c in self.clusters.values())

    @property
    def max_degree(self):
        return max((len(self.neighbors(u)) for u in self.clusters), default=0)

    @property
    def n_clusters(self):
        return len(self.clusters)

    def stats(self):
        return {
            "w": self.treewidth,
            "hw": self.hyperwidth,
            "deg": self.max_degree,
            "m": self.n_clusters,
        }

    def canonical_bytes(self) -> bytes:
        parts = []
        for cid in sorted(self.clusters):
            c = self.clusters[cid]
            parts.append(
                f"cluster {cid}: chi={{{','.join(sorted(c.chi, key=name_key))}}} "
                f"psi={{{','.join(sorted(c.psi))}}} "
                f"cover={{{','.join(c.cover)}}}"
            )
        for u, v in sorted(self.edges):
            parts.append(f"edge {u} {v}")
        return "\n".join(parts).encode()


# -- GYO reduction ---------------------------------------------------------


def gyo_acyclic(h: Hypergraph):
    """Ear-removal acyclicity test; acyclic graphs get their induced join tree.

    Returns a dict {"is_hypertree": bool, "join_tree": TreeDecomposition|None}.
    The join tree keeps one cluster per original hyperedge with that edge as
    its single cover function, so hw = 1 by construction.
    """
    if not h.edges:
        return {"is_hypertree": True, "join_tree": None}
    remaining = {fid: set(scope) for fid, scope in h.edges}
    parent = {}
    order = [fid for fid, _ in h.edges]

    changed = True
    while changed and len(remaining) > 1:
        changed = False
        counts = {}
        for scope in remaining.values():
            for n in scope:
                counts[n] = counts.get(n, 0) + 1
        for fid in list(remaining):
            lonely = {n for n in remaining[fid] if counts[n] == 1}
            if lonely:
                remaining[fid] -= lonely
                changed = True
        for fid in sorted(remaining, key=lambda f: (len(remaining[f]), order.index(f))):
            witness = None
            for other in sorted(remaining, key=order.index):
                if other != fid and remaining[fid] <= remaining[other]:
                    witness = other
                    break
            if witness is not None:
                parent[fid] = witness
                del remaining[fid]
                changed = True

    if len(remaining) > 1:
        return {"is_hypertree": False, "join_tree": None}

    ids = [fid for fid, _ in h.edges]
    id_to_cluster = {fid: i for i, fid in enumerate(ids)}
    clusters = {
        id_to_cluster[fid]: Cluster(chi=frozenset(scope), psi=frozenset([fid]), cover=(fid,))
        for fid, scope in h.edges
    }
    edges = sorted(
        tuple(sorted((id_to_cluster[a], id_to_cluster[b]))) for a, b in parent.items()
    )
    root_fid = next(iter(remaining))
    td = TreeDecomposition(clusters=clusters, edges=edges, root=id_to_cluster[root_fid])
    return {"is_hypertree": True, "join_tree": td}


# -- elimination orderings -------------------------------------------------


def min_fill_order(h: Hypergraph, seed: int = 0, randomize: bool = False):
    """Greedy min-fill over the primal graph.

    Deterministic tie-breaking by (fill, degree, name); with `randomize` the
    seeded RNG permutes only among exact (fill, degree) ties.
    """
    adj = {n: set(nbrs) for n, nbrs in h.primal_adjacency().items()}
    rng = random.Random(seed)
    order = []
    while adj:
        scored = []
        for n, nbrs in adj.items():
            nb = list(nbrs)
            fill = 0
            for i in range(len(nb)):
                for j in range(i + 1, len(nb)):
                    if nb[j] not in adj[nb[i]]:
                        fill += 1
            scored.append(((fill, len(nbrs)), n))
        best = min(s for s, _ in scored)
        ties = sorted((n for s, n in scored if s == best), key=name_key)
        pick = ties[rng.randrange(len(ties))] if randomize and len(ties) > 1 else ties[0]
        order.append(pick)
        nbrs = adj.pop(pick)
        for a in nbrs:
            adj[a].discard(pick)
            for b in nbrs:
                if a != b:
                    adj[a].add(b)
    return order


def tree_decomposition(h: Hypergraph, order) -> TreeDecomposition:
    """Bucket-elimination construction along an elimination ordering.

    One cluster per bucket ({v} plus its induced neighbors), connected to the
    bucket of the earliest-eliminated separator variable. Each factor lands in
    the bucket of its earliest-eliminated scope variable; subsumed clusters
    are merged afterwards.
    """
    missing = set(h.nodes) - set(order)
    if missing:
        raise UnknownVariable(f"ordering omits {sorted(missing, key=name_key)}")
    pos = {n: i for i, n in enumerate(order)}
    adj = {n: set(nbrs) for n, nbrs in h.primal_adjacency().items()}
    for n in order:
        adj.setdefault(n, set())

    chi = {}
    parent_of = {}
    for i, v in enumerate(order):
        nbrs = {u for u in adj[v] if pos[u] > i}
        chi[i] = frozenset([v]) | nbrs
        if nbrs:
            parent_of[i] = pos[min(nbrs, key=lambda u: pos[u])]
        elif i + 1 < len(order):
            parent_of[i] = i + 1  # disconnected component: chain to keep a tree
        for a in nbrs:
            for b in nbrs:
                if a != b:
                    adj[a].add(b)

    psi = {i: set() for i in chi}
    for fid, scope in h.edges:
        bucket = min(pos[n] for n in scope)
        psi[bucket].add(fid)

    clusters = {i: Cluster(chi=chi[i], psi=frozenset(psi[i])) for i in chi}
    edges = sorted(tuple(sorted((u, v))) for u, v in parent_of.items())
    td = TreeDecomposition(clusters=clusters, edges=edges, root=len(order) - 1)
    return _merge_subsumed(td)


def _merge_subsumed(td: TreeDecomposition) -> TreeDecomposition:
    clusters = {cid: replace(c) for cid, c in td.clusters.items()}
    edges = set(td.edges)
    root = td.root
    changed = True
    while changed:
        changed = False
        for cid in sorted(clusters):
            for nbr in sorted(_neighbors(edges, cid)):
                if clusters[cid].chi <= clusters[nbr].chi:
                    clusters[nbr] = Cluster(
                        chi=clusters[nbr].chi,
                        psi=clusters[nbr].psi | clusters[cid].psi,
                        cover=clusters[nbr].cover,
                    )
                    for other in _neighbors(edges, cid):
                        edges.discard(tuple(sorted((cid, other))))
                        if other != nbr:
                            edges.add(tuple(sorted((nbr, other))))
                    del clusters[cid]
                    if root == cid:
                        root = nbr
                    changed = True
                    break
            if changed:
                break
    return TreeDecomposition(clusters=clusters, edges=sorted(edges), root=root)


def _neighbors(edges, u):
    out = set()
    for a, b in edges:
        if a == u:
            out.add(b)
        elif b == u:
            out.add(a)
    return out


# -- hypertree covers ------------------------------------------------------


def hypertree_cover(td: TreeDecomposition, h: Hypergraph) -> TreeDecomposition:
    """Greedy set cover of each cluster's variables by hyperedge scopes.

    Largest residual intersection first, ties by factor id. Covers measure
    width only and may reuse a hyperedge across clusters.
    """
    scopes = {fid: frozenset(scope) for fid, scope in h.edges}
    clusters = {}
    for cid in sorted(td.clusters):
        c = td.clusters[cid]
        residual = set(c.chi)
        cover = []
        while residual:
            best = None
            for fid in sorted(scopes, key=lambda f: (int(f[0] != "f"), name_key(f))):
                gain = len(scopes[fid] & residual)
                if gain and (best is None or gain > best[0]):
                    best = (gain, fid)
            if best is None:
                raise UncoverableCluster(
                    f"cluster {cid}: variables {sorted(residual, key=name_key)} "
                    "appear in no hyperedge"
                )
            cover.append(best[1])
            residual -= scopes[best[1]]
        clusters[cid] = Cluster(chi=c.chi, psi=c.psi, cover=tuple(cover))
    return TreeDecomposition(clusters=clusters, edges=list(td.edges), root=td.root)


def cover_width_excluding_outputs(td: TreeDecomposition, h: Hypergraph):
    """hw when child output functions (g-edges) are not eligible as cover edges.

    Returns None when some cluster cannot be covered without them.
    """
    base_edges = tuple(e for e in h.edges if not e[0].startswith("g"))
    if not base_edges:
        return None
    try:
        alt = hypertree_cover(td, Hypergraph(base_edges, h.domains))
    except UncoverableCluster:
        return None
    return alt.hyperwidth


# -- validation ------------------------------------------------------------


def validate(td: TreeDecomposition, h: Hypergraph):
    """All four decomposition conditions plus tree-ness; [] means clean."""
    violations = []
    scopes = {fid: frozenset(scope) for fid, scope in h.edges}

    assigned = {}
    for cid, c in td.clusters.items():
        for fid in c.psi:
            assigned.setdefault(fid, []).append(cid)
    for fid in scopes:
        where = assigned.get(fid, [])
        if len(where) != 1:
            violations.append(
                f"condition 1: factor {fid} assigned to {len(where)} clusters {sorted(where)}"
            )
    for fid in assigned:
        if fid not in scopes:
            violations.append(f"condition 1: unknown factor {fid} in psi")

    for cid, c in td.clusters.items():
        for fid in c.psi:
            if fid in scopes and not scopes[fid] <= c.chi:
                extra = sorted(scopes[fid] - c.chi, key=name_key)
                violations.append(
                    f"condition 2: cluster {cid} misses {extra} from scope of {fid}"
                )

    # tree-ness
    ids = set(td.clusters)
    for u, v in td.edges:
        if u not in ids or v not in ids:
            violations.append(f"tree: edge ({u},{v}) references a missing cluster")
    if len(td.edges) != max(len(ids) - 1, 0) or not _connected(ids, td.edges):
        violations.append("tree: cluster graph is not a tree")
    else:
        # running intersection only meaningful on a tree
        all_vars = set()
        for c in td.clusters.values():
            all_vars |= c.chi
        for var in sorted(all_vars, key=name_key):
            holding = {cid for cid, c in td.clusters.items() if var in c.chi}
            sub_edges = [e for e in td.edges if e[0] in holding and e[1] in holding]
            if not _connected(holding, sub_edges):
                violations.append(
                    f"condition 3: clusters containing {var!r} are disconnected: "
                    f"{sorted(holding)}"
                )

    for cid, c in td.clusters.items():
        if not c.cover:
            continue
        covered = set()
        for fid in c.cover:
            if fid not in scopes:
                violations.append(f"condition 4: cluster {cid} cover uses unknown {fid}")
                continue
            covered |= scopes[fid]
        if not c.chi <= covered:
            missing = sorted(c.chi - covered, key=name_key)
            violations.append(f"condition 4: cluster {cid} cover misses {missing}")
    return violations


def _connected(nodes, edges):
    nodes = set(nodes)
    if not nodes:
        return True
    adj = {n: set() for n in nodes}
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    seen = set()
    stack = [next(iter(sorted(nodes, key=str)))]
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        stack.extend(adj[n] - seen)
    return seen == nodes


# -- pipeline --------------------------------------------------------------


def decompose(h: Hypergraph, seed: int = 0, restarts: int = 0) -> TreeDecomposition:
    """GYO join tree when acyclic; otherwise min-fill + cover, best of restarts.

    Restarts permute min-fill tie-breaking; the best (hw, w) result wins, with
    the deterministic (non-randomized) attempt as the tie-break baseline.
    """
    gyo = gyo_acyclic(h)
    if gyo["is_hypertree"] and gyo["join_tree"] is not None:
        td = gyo["join_tree"]
        issues = validate(td, h)
        if issues:
            raise ValidationError(issues)
        return td

    candidates = [min_fill_order(h, seed=seed, randomize=False)]
    for r in range(restarts):
        candidates.append(min_fill_order(h, seed=seed + 1 + r, randomize=True))
    best = None
    for order in candidates:
        td = hypertree_cover(tree_decomposition(h, order), h)
        issues = validate(td, h)
        if issues:
            raise ValidationError(issues)
        score = (td.hyperwidth, td.treewidth, td.canonical_bytes())
        if best is None or score < best[0]:
            best = (score, td)
    return best[1]


def select_root(td: TreeDecomposition, free_vars) -> int:
    """Cluster holding the most output variables, ties by id."""
    free = set(free_vars)
    return min(
        td.clusters,
        key=lambda cid: (-len(td.clusters[cid].chi & free), cid),
    )


# -- decomposition text format --------------------------------------------


def load_decomposition(path, h: Hypergraph) -> TreeDecomposition:
    """Parse `cluster <id>: chi={..} psi={..} cover={..}` / `edge <u> <v>` lines."""
    clusters = {}
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("cluster"):
                head, _, body = line.partition(":")
                try:
                    cid = int(head.split()[1])
                except (IndexError, ValueError):
                    raise ParseError("expected `cluster <id>: ...`", path, lineno) from None
                fields = dict(_parse_sets(body, path, lineno))
                if "chi" not in fields or "psi" not in fields:
                    raise ParseError("cluster needs chi={...} and psi={...}", path, lineno)
                clusters[cid] = Cluster(
                    chi=frozenset(fields["chi"]),
                    psi=frozenset(fields["psi"]),
                    cover=tuple(fields.get("cover", ())),
                )
            elif line.startswith("edge"):
                parts = line.split()
                if len(parts) != 3:
                    raise ParseError("expected `edge <id> <id>`", path, lineno)
                try:
                    edges.append(tuple(sorted((int(parts[1]), int(parts[2])))))
                except ValueError:
                    raise ParseError("edge ids must be integers", path, lineno) from None
            else:
                raise ParseError(f"unrecognized line {line!r}", path, lineno)
    if not clusters:
        raise ParseError("no clusters defined", path)
    td = TreeDecomposition(clusters=clusters, edges=sorted(edges), root=min(clusters))
    issues = validate(td, h)
    if issues:
        raise ValidationError(issues)
    return td


def _parse_sets(body, path, lineno):
    import re as _re

    for m in _re.finditer(r"(\w+)\s*=\s*\{([^}]*)\}", body):
        name = m.group(1)
        items = [s.strip() for s in m.group(2).split(",") if s.strip()]
        yield name, items
