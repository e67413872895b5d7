"""Ground-truth simulator: random CBNs, sampling, and interventional truth.

Bidirected edges are expanded into explicit binary latent parents before
parameterization; samples drop the latent columns so datasets contain only
the observed variables.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .model import CausalGraph, Dataset, Variable, name_key
from .factor import SparseFactor

LATENT_DOMAIN = 2


def expand_bidirected(graph: CausalGraph):
    """Replace each bidirected edge with a fresh binary latent common parent.

    Returns (expanded graph, tuple of latent names). Latents are named
    U_<a>_<b> after their endpoints.
    """
    variables = list(graph.variables)
    directed = list(graph.directed_edges)
    latents = []
    for a, b in graph.bidirected_edges:
        name = f"U_{a}_{b}"
        while any(v.name == name for v in variables):
            name += "_"
        variables.append(Variable(name, LATENT_DOMAIN))
        directed.append((name, a))
        directed.append((name, b))
        latents.append(name)
    return CausalGraph(variables, directed, ()), tuple(latents)


@dataclass
class CBN:
    """Fully parameterized Bayesian network over observed + latent variables."""

    graph: CausalGraph
    latents: tuple
    # name -> ndarray of shape (*parent domain sizes in sorted parent order, k)
    cpts: dict

    def parents_sorted(self, name):
        return tuple(sorted(self.graph.parents(name), key=name_key))

    @property
    def observed(self):
        lat = set(self.latents)
        return tuple(n for n in self.graph.names if n not in lat)

    def to_json(self) -> str:
        payload = {
            "variables": [[v.name, v.domain_size] for v in self.graph.variables],
            "directed_edges": [list(e) for e in self.graph.directed_edges],
            "latents": list(self.latents),
            "cpts": {
                name: {"shape": list(arr.shape), "probs": arr.ravel().tolist()}
                for name, arr in self.cpts.items()
            },
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "CBN":
        payload = json.loads(text)
        graph = CausalGraph(
            [Variable(n, k) for n, k in payload["variables"]],
            [tuple(e) for e in payload["directed_edges"]],
        )
        cpts = {
            name: np.asarray(spec["probs"], dtype=float).reshape(spec["shape"])
            for name, spec in payload["cpts"].items()
        }
        return cls(graph, tuple(payload["latents"]), cpts)


def _cond_dist(rng, k, dist, alpha):
    if dist == "uniform":
        return rng.dirichlet(np.ones(k))
    if dist == "dirichlet":
        return rng.dirichlet(np.full(k, alpha))
    if dist == "deterministic":
        out = np.zeros(k)
        out[rng.integers(k)] = 1.0
        return out
    if dist == "mixture":
        if rng.random() < 0.5:
            out = np.zeros(k)
            out[rng.integers(k)] = 1.0
            return out
        return rng.dirichlet(np.full(k, alpha))
    raise ValueError(f"unknown distribution family {dist!r}")


def random_cbn(graph: CausalGraph, dist="dirichlet", alpha=1.0, seed=0) -> CBN:
    """Expand bidirected edges and draw every CPT from the given family."""
    expanded, latents = expand_bidirected(graph)
    rng = np.random.default_rng(seed)
    cpts = {}
    for name in sorted(expanded.names, key=name_key):
        k = expanded.domain_size(name)
        parents = tuple(sorted(expanded.parents(name), key=name_key))
        pshape = tuple(expanded.domain_size(p) for p in parents)
        table = np.empty(pshape + (k,), dtype=float)
        for idx in itertools.product(*(range(s) for s in pshape)):
            table[idx] = _cond_dist(rng, k, dist, alpha)
        cpts[name] = table
    return CBN(expanded, latents, cpts)


def sample_dataset(cbn: CBN, n: int, seed=0) -> Dataset:
    """Ancestral sampling; returns a Dataset over the observed columns only."""
    rng = np.random.default_rng(seed)
    order = cbn.graph.topological_order()
    samples = {}
    for name in order:
        parents = cbn.parents_sorted(name)
        table = cbn.cpts[name]
        k = cbn.graph.domain_size(name)
        if not parents:
            samples[name] = rng.choice(k, size=n, p=table)
            continue
        pcols = np.stack([samples[p] for p in parents], axis=1)
        out = np.empty(n, dtype=np.int64)
        # draw per distinct parent configuration to stay vectorized
        uniq, inverse = np.unique(pcols, axis=0, return_inverse=True)
        for u_i, cfg in enumerate(uniq):
            mask = inverse == u_i
            out[mask] = rng.choice(k, size=int(mask.sum()), p=table[tuple(cfg)])
        samples[name] = out
    cols = tuple(sorted(cbn.observed, key=name_key))
    rows = np.stack([samples[c] for c in cols], axis=1)
    domains = {c: cbn.graph.domain_size(c) for c in cols}
    return Dataset(cols, [tuple(int(x) for x in row) for row in rows], domains)


def joint_observed(cbn: CBN) -> SparseFactor:
    """Exact observational joint over the observed variables (latents summed)."""
    return _truncated_joint(cbn, {})


def interventional_truth(cbn: CBN, do: dict, outcome) -> SparseFactor:
    """Exact P(outcome | do(...)) by truncated-product enumeration.

    Drops the CPTs of intervened variables, fixes their values, multiplies the
    rest over all configurations, and marginalizes onto `outcome`.
    """
    joint = _truncated_joint(cbn, do)
    keep = set(outcome)
    drop = set(joint.names) - keep
    from .factor import marginalize

    return marginalize(joint, drop)


def _truncated_joint(cbn: CBN, do: dict) -> SparseFactor:
    names = [n for n in cbn.graph.names]
    order = sorted(names, key=name_key)
    sizes = [cbn.graph.domain_size(n) for n in order]
    pos = {n: i for i, n in enumerate(order)}

    obs = [n for n in cbn.observed if n not in do]
    obs_sorted = sorted(obs, key=name_key)
    obs_pos = [pos[n] for n in obs_sorted]
    sums = {}
    for cfg in itertools.product(*(range(s) for s in sizes)):
        ok = True
        for n, v in do.items():
            if cfg[pos[n]] != v:
                ok = False
                break
        if not ok:
            continue
        p = 1.0
        for n in order:
            if n in do:
                continue
            parents = cbn.parents_sorted(n)
            idx = tuple(cfg[pos[q]] for q in parents) + (cfg[pos[n]],)
            p *= cbn.cpts[n][idx]
            if p == 0.0:
                break
        if p == 0.0:
            continue
        key = tuple(cfg[i] for i in obs_pos)
        sums.setdefault(key, []).append(p)
    scope = tuple(Variable(n, cbn.graph.domain_size(n)) for n in obs_sorted)
    entries = {k: math.fsum(v) for k, v in sums.items() if math.fsum(v) != 0.0}
    return SparseFactor(scope, entries)


def total_variation(p: SparseFactor, q: SparseFactor) -> float:
    """TV distance between two factors over the same scope."""
    if p.names != q.names:
        raise ValueError(f"scope mismatch: {p.names} vs {q.names}")
    keys = set(dict(p.items())) | set(dict(q.items()))
    pd, qd = dict(p.items()), dict(q.items())
    return 0.5 * math.fsum(abs(pd.get(k, 0.0) - qd.get(k, 0.0)) for k in keys)
