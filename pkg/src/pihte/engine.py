"""Cluster-tree elimination and the level-by-level plug-in evaluator.

Each hierarchy level becomes an empirical graphical model: its probability
terms bind to frequency tables extracted from the dataset (primed variables
read their base column), child denominator outputs are inverted and injected
as ordinary factors, and CTE runs leaves-to-root over a hypertree
decomposition of the level.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field

from . import factor as sf
from .decomposition import (
    TreeDecomposition,
    build_hypergraph,
    cover_width_excluding_outputs,
    decompose,
    gyo_acyclic,
    select_root,
    validate,
)
from .errors import (
    DenseLimitExceeded,
    ResourceLimitExceeded,
    UnboundFactor,
    ValidationError,
)
from .estimand import dense_expr_eval, free_vars, prob_terms
from .model import Variable, base_name, empirical_prob, name_key

MAX_ENTRIES_ENV = "PIHTE_MAX_ENTRIES"


class TableTracker:
    """Accounts for every factor materialized during a run."""

    def __init__(self, cap=None):
        if cap is None:
            env = os.environ.get(MAX_ENTRIES_ENV)
            cap = int(env) if env else None
        self.cap = cap
        self.max_entries = 0
        self.total_entries = 0

    def record(self, f: sf.SparseFactor):
        t = f.tightness
        self.max_entries = max(self.max_entries, t)
        self.total_entries += t
        if self.cap is not None and t > self.cap:
            raise ResourceLimitExceeded(
                f"table with {t} entries exceeds cap {self.cap}"
            )
        return f


class _ScopedTracker:
    """Per-level view that forwards every record to the global tracker."""

    def __init__(self, parent: TableTracker):
        self.parent = parent
        self.max_entries = 0
        self.total_entries = 0

    def record(self, f):
        self.parent.record(f)
        self.max_entries = max(self.max_entries, f.tightness)
        self.total_entries += f.tightness
        return f


def cte(td: TreeDecomposition, factors, free_vars_out, tracker=None, root=None):
    """One-way message passing leaves-to-root; returns the factor over the
    requested output variables.

    Messages keep the output variables alongside the edge separator so queries
    whose outputs straddle clusters still collect correctly at the root.
    """
    tracker = tracker or TableTracker()
    free = set(free_vars_out)
    issues = validate_psi_bound(td, factors)
    if issues:
        raise UnboundFactor("; ".join(issues))
    if root is None:
        root = select_root(td, free)

    # BFS orientation away from the root
    parent = {root: None}
    order = [root]
    frontier = [root]
    while frontier:
        nxt = []
        for u in frontier:
            for v in td.neighbors(u):
                if v not in parent:
                    parent[v] = u
                    order.append(v)
                    nxt.append(v)
        frontier = nxt

    messages = {}
    for u in reversed(order):
        h = sf.unit_factor()
        for fid in sorted(td.clusters[u].psi, key=name_key):
            h = tracker.record(sf.product(h, factors[fid]))
        for v in td.neighbors(u):
            if v != parent[u] and (v, u) in messages:
                h = tracker.record(sf.product(h, messages[(v, u)]))
        if parent[u] is None:
            drop = set(h.names) - free
            result = tracker.record(sf.marginalize(h, drop & set(h.names)))
            return result
        sep = td.separator(u, parent[u])
        drop = set(h.names) - sep - free
        messages[(u, parent[u])] = tracker.record(sf.marginalize(h, drop))
    raise AssertionError("unreachable: tree has no root")


def validate_psi_bound(td, factors):
    issues = []
    for cid in sorted(td.clusters):
        for fid in sorted(td.clusters[cid].psi):
            if fid not in factors:
                issues.append(f"cluster {cid}: no factor bound for {fid}")
    return issues


# -- per-level empirical binding ------------------------------------------


def empirical_term_factor(term, data):
    """Bind one probability term, routing primed names to their base column."""
    base_left = tuple(base_name(n) for n in term.left)
    base_right = tuple(base_name(n) for n in term.right)
    if len(set(base_left + base_right)) != len(set(term.left + term.right)):
        raise ValueError(
            f"term {term.key()} mixes a variable with its primed copy"
        )
    emp = empirical_prob(data, base_left, base_right)
    mapping = {base_name(n): n for n in term.left + term.right if n != base_name(n)}
    return emp.rename(mapping) if mapping else emp


# -- evaluation report -----------------------------------------------------


@dataclass
class LevelStats:
    level_id: int
    n_vars: int
    n_factors: int
    w: int
    hw: int
    hw_no_outputs: object  # int or None when outputs are needed for coverage
    is_hypertree: bool
    t: int
    k: int
    max_table_entries: int
    total_entries: int
    wall_time: float

    def as_dict(self):
        return dict(self.__dict__)


@dataclass
class EvalReport:
    result: sf.SparseFactor
    normalized: object  # SparseFactor or None
    levels: list
    n_rows: int
    max_table_entries: int
    total_entries: int
    wall_time: float
    largest_scope_cells: float
    bounds: dict = field(default_factory=dict)

    @property
    def hierarchy_bound_exponent(self):
        return sum(lv.hw for lv in self.levels)

    @property
    def tightness(self):
        return max(lv.t for lv in self.levels)

    @property
    def density(self):
        return self.max_table_entries / self.largest_scope_cells

    def result_table(self, normalized=True):
        if normalized and self.normalized is not None:
            return self.normalized
        return self.result

    def to_dict(self, include_timing=True):
        out = {
            "n_rows": self.n_rows,
            "max_table_entries": self.max_table_entries,
            "total_entries": self.total_entries,
            "tightness": self.tightness,
            "density": self.density,
            "hierarchy_bound_exponent": self.hierarchy_bound_exponent,
            "levels": [lv.as_dict() for lv in self.levels],
            "bounds": self.bounds,
            "result": {
                "scope": [[v.name, v.domain_size] for v in self.result.scope],
                "entries": [
                    [list(k), v] for k, v in self.result.items()
                ],
            },
        }
        if self.normalized is not None:
            out["normalized"] = {
                "scope": [[v.name, v.domain_size] for v in self.normalized.scope],
                "entries": [[list(k), v] for k, v in self.normalized.items()],
            }
        if include_timing:
            out["wall_time"] = self.wall_time
        else:
            for lv in out["levels"]:
                lv.pop("wall_time", None)
        return out

    def to_json(self, include_timing=True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2, sort_keys=True)


def run_metrics(report: EvalReport):
    """One Table-style row: samples, time, max table size, tightness, density."""
    return {
        "samples": report.n_rows,
        "time": round(max(report.wall_time, 0.0), 6),
        "max_table_size": report.max_table_entries,
        "t": report.tightness,
        "density": report.density,
    }


# -- options ---------------------------------------------------------------


@dataclass
class EvalOptions:
    seed: int = 0
    restarts: int = 0
    dense_limit: int = 10**6
    do: dict = field(default_factory=dict)
    outcome_vars: tuple = ()
    decompositions: dict = field(default_factory=dict)  # level_id -> TreeDecomposition
    max_entries: object = None  # None -> read PIHTE_MAX_ENTRIES


# -- PI-HTE driver ---------------------------------------------------------


def pi_hte(hier, data, opts: EvalOptions | None = None) -> EvalReport:
    """Evaluate a flattened hierarchy bottom-up against a dataset."""
    opts = opts or EvalOptions()
    tracker = TableTracker(cap=opts.max_entries)
    level_stats = []
    largest_cells = [1.0]
    start = time.monotonic()

    def eval_level(level_id):
        level = hier.level(level_id)
        t0 = time.monotonic()
        scoped = _ScopedTracker(tracker)

        factors = {}
        for i, term in enumerate(level.factors):
            f = empirical_term_factor(term, data)
            if opts.do:
                f = f.restrict({k: v for k, v in opts.do.items() if k in f.names})
            factors[f"f{i}"] = scoped.record(f)
        for child_id, scope in level.child_outputs:
            child_out = eval_level(child_id)
            inv = sf.invert(child_out)
            inv.require_support = True
            factors[f"g{child_id}"] = scoped.record(inv)

        domains = {}
        for fid, f in factors.items():
            for v in f.scope:
                domains[v.name] = v.domain_size
        hg = build_hypergraph_bound(level, factors, domains)
        for _, scope in hg.edges:
            cells = 1.0
            for n in scope:
                cells *= domains[n]
            largest_cells[0] = max(largest_cells[0], cells)

        if level_id in opts.decompositions:
            td = opts.decompositions[level_id]
            issues = validate(td, hg)
            if issues:
                raise ValidationError(issues)
        else:
            td = decompose(hg, seed=opts.seed, restarts=opts.restarts)

        out = cte(td, factors, level.free_vars, tracker=scoped)

        level_stats.append(
            LevelStats(
                level_id=level_id,
                n_vars=len(hg.nodes),
                n_factors=len(hg.edges),
                w=td.treewidth,
                hw=td.hyperwidth,
                hw_no_outputs=cover_width_excluding_outputs(td, hg),
                is_hypertree=gyo_acyclic(hg)["is_hypertree"],
                t=max(f.tightness for f in factors.values()),
                k=max(domains.values()),
                max_table_entries=scoped.max_entries,
                total_entries=scoped.total_entries,
                wall_time=time.monotonic() - t0,
            )
        )
        return out

    result = eval_level(hier.root)
    wall = time.monotonic() - start

    normalized = None
    outcome = tuple(opts.outcome_vars) or (
        tuple(n for n in result.names if n not in opts.do) if opts.do else ()
    )
    if outcome:
        normalized = _renormalize(result, outcome)

    level_stats.sort(key=lambda lv: lv.level_id)
    report = EvalReport(
        result=result,
        normalized=normalized,
        levels=level_stats,
        n_rows=data.n_rows,
        max_table_entries=tracker.max_entries,
        total_entries=tracker.total_entries,
        wall_time=wall,
        largest_scope_cells=largest_cells[0],
    )
    stats_by_level = [lv.as_dict() for lv in level_stats]
    report.bounds = predicted_bounds(
        stats_by_level,
        t=report.tightness,
        k=max(lv.k for lv in level_stats),
        n=max(lv.n_vars for lv in level_stats),
    )
    return report


def build_hypergraph_bound(level, factors, domains):
    """Hypergraph whose edge scopes match the actual bound factor scopes."""
    edges = []
    for i, term in enumerate(level.factors):
        edges.append((f"f{i}", factors[f"f{i}"].names))
    for child_id, _ in level.child_outputs:
        edges.append((f"g{child_id}", factors[f"g{child_id}"].names))
    from .decomposition import Hypergraph

    return Hypergraph(tuple(edges), domains, empty=not edges)


def _renormalize(result, outcome):
    """Divide by the per-group total over the outcome variables."""
    group_vars = [n for n in result.names if n not in set(outcome)]
    totals = sf.marginalize(result, set(outcome) & set(result.names))
    pos = [i for i, n in enumerate(result.names) if n in set(group_vars)]
    tot_map = dict(totals.items())
    entries = {}
    for key, value in result.items():
        gkey = tuple(key[i] for i in pos)
        denom = tot_map.get(gkey, 0.0)
        if denom:
            entries[key] = value / denom
    return sf.SparseFactor(result.scope, entries)


# -- brute-force oracle ----------------------------------------------------


def brute_force_eval(expr, data, dense_limit=10**6) -> sf.SparseFactor:
    """Literal dense evaluation of the original (unflattened) estimand.

    Binds every probability term empirically from the same dataset and
    enumerates all assignments of the free variables.
    """
    free = tuple(sorted(free_vars(expr), key=name_key))
    bindings = {}
    for term in prob_terms(expr):
        key = term.key()
        if key not in bindings:
            bindings[key] = empirical_term_factor(term, data)
    domains = {}
    for f in bindings.values():
        for v in f.scope:
            domains[v.name] = v.domain_size

    cells = 1
    for n in free:
        cells *= domains[n]
    if cells > dense_limit:
        raise DenseLimitExceeded(f"{cells} free-variable cells exceeds {dense_limit}")

    scope = tuple(Variable(n, domains[n]) for n in free)
    entries = {}
    assignment = {}

    def rec(i):
        if i == len(free):
            val = dense_expr_eval(expr, bindings, assignment, domains, dense_limit)
            if val != 0.0:
                entries[tuple(assignment[n] for n in free)] = val
            return
        for v in range(domains[free[i]]):
            assignment[free[i]] = v
            rec(i + 1)
        del assignment[free[i]]

    rec(0)
    return sf.SparseFactor(scope, entries)


# -- bound prediction ------------------------------------------------------


def predicted_bounds(level_stats, t, k, n):
    """Numeric treewidth/hyperwidth bounds plus the hierarchy exponent.

    Values too large for a float are reported in log10 only.
    """
    levels = []
    for lv in level_stats:
        w, hw = lv["w"], lv["hw"]
        tw_table_log10 = (w + 1) * math.log10(k) if k > 1 else 0.0
        tw_time_log10 = tw_table_log10 + math.log10(max(n, 1))
        log_t = math.log(t) if t > 1 else 0.0
        hw_time = max(float(n), n * hw * log_t * float(t) ** hw)
        levels.append(
            {
                "level": lv["level_id"],
                "w": w,
                "hw": hw,
                "tw_table_log10": tw_table_log10,
                "tw_time_log10": tw_time_log10,
                "tw_time": 10.0 ** tw_time_log10 if tw_time_log10 < 300 else None,
                "hw_time": hw_time,
                "hw_space": float(t) ** hw,
            }
        )
    sum_hw = sum(lv["hw"] for lv in level_stats)
    max_hw = max(lv["hw"] for lv in level_stats)
    max_w = max(lv["w"] for lv in level_stats)
    hw_total_log10 = sum_hw * math.log10(t) if t > 1 else 0.0
    tw_total_log10 = max(lv["tw_table_log10"] for lv in levels)
    return {
        "levels": levels,
        "sum_hw": sum_hw,
        "max_hw": max_hw,
        "max_w": max_w,
        "t": t,
        "k": k,
        "n": n,
        "hw_bound_log10": hw_total_log10,
        "hw_bound_value": float(t) ** sum_hw if hw_total_log10 < 300 else None,
        "tw_bound_log10": tw_total_log10,
        "tighter": "hw" if hw_total_log10 <= tw_total_log10 else "tw",
    }
