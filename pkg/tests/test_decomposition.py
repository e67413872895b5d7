import random

import pytest

from pihte.decomposition import (
    Hypergraph,
    build_hypergraph,
    decompose,
    gyo_acyclic,
    hypertree_cover,
    load_decomposition,
    min_fill_order,
    select_root,
    tree_decomposition,
    validate,
)
from pihte.errors import ParseError, UncoverableCluster, ValidationError
from pihte.estimand import flatten, parse


def hg(*scopes, domains=None):
    edges = tuple((f"f{i}", tuple(s)) for i, s in enumerate(scopes))
    return Hypergraph(edges, domains or {})


# -- GYO -------------------------------------------------------------------


def test_gyo_accepts_acyclic():
    h = hg(("A", "B"), ("B", "C"), ("C", "D"))
    out = gyo_acyclic(h)
    assert out["is_hypertree"]
    td = out["join_tree"]
    assert td.hyperwidth == 1
    assert not validate(td, h)


def test_gyo_rejects_cycle():
    h = hg(("A", "B"), ("B", "C"), ("A", "C"))
    assert not gyo_acyclic(h)["is_hypertree"]


def test_gyo_alpha_acyclic_triangle_with_cover():
    # the 3-edge triangle plus its covering edge is alpha-acyclic
    h = hg(("A", "B"), ("B", "C"), ("A", "C"), ("A", "B", "C"))
    out = gyo_acyclic(h)
    assert out["is_hypertree"]
    assert out["join_tree"].hyperwidth == 1


def test_gyo_chain7_estimand(fixture_path):
    lv = flatten(parse(open(fixture_path("chain7.estimand")).read())).level(0)
    h = build_hypergraph(lv)
    out = gyo_acyclic(h)
    assert out["is_hypertree"]
    assert out["join_tree"].treewidth == 6


# -- min-fill + bucket construction ---------------------------------------


def test_min_fill_deterministic():
    h = hg(("A", "B"), ("B", "C"), ("A", "C"), ("C", "D"))
    assert min_fill_order(h, seed=0) == min_fill_order(h, seed=99)


def test_min_fill_covers_all_nodes():
    h = hg(("A", "B", "C"), ("C", "D"), ("E",))
    assert sorted(min_fill_order(h)) == ["A", "B", "C", "D", "E"]


def test_tree_decomposition_validates_on_cycle():
    h = hg(("A", "B"), ("B", "C"), ("A", "C"))
    td = hypertree_cover(tree_decomposition(h, min_fill_order(h)), h)
    assert not validate(td, h)
    assert td.hyperwidth == 2


def random_hypergraph(rng):
    n = rng.randint(3, 8)
    nodes = [f"X{i}" for i in range(n)]
    edges = []
    for i in range(rng.randint(2, 6)):
        size = rng.randint(1, min(4, n))
        edges.append((f"f{i}", tuple(sorted(rng.sample(nodes, size)))))
    # guarantee every node appears somewhere
    covered = {v for _, s in edges for v in s}
    leftovers = [v for v in nodes if v not in covered]
    if leftovers:
        edges.append((f"f{len(edges)}", tuple(leftovers)))
    return Hypergraph(tuple(edges), {})


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_decompose_valid_on_random_hypergraphs(seed):
    rng = random.Random(seed)
    for _ in range(25):
        h = random_hypergraph(rng)
        td = decompose(h, seed=seed)
        assert not validate(td, h)
        assert td.hyperwidth >= 1
        assert td.treewidth >= 0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_decompose_deterministic(seed):
    rng = random.Random(seed + 1000)
    for _ in range(10):
        h = random_hypergraph(rng)
        a = decompose(h, seed=seed, restarts=3)
        b = decompose(h, seed=seed, restarts=3)
        assert a.canonical_bytes() == b.canonical_bytes()


def test_restarts_never_worse():
    rng = random.Random(7)
    for _ in range(10):
        h = random_hypergraph(rng)
        base = decompose(h, seed=0, restarts=0)
        more = decompose(h, seed=0, restarts=5)
        assert (more.hyperwidth, more.treewidth) <= (base.hyperwidth, base.treewidth)


def test_cover_unreachable_variable():
    td = tree_decomposition(hg(("A", "B")), ["A", "B"])
    bad = Hypergraph((("f0", ("A",)),), {})
    with pytest.raises(UncoverableCluster):
        hypertree_cover(td, bad)


# -- validate --------------------------------------------------------------


def test_validate_detects_missing_factor_assignment():
    h = hg(("A", "B"), ("B", "C"))
    td = gyo_acyclic(h)["join_tree"]
    td.clusters[0].psi = frozenset()
    issues = validate(td, h)
    assert any("condition 1" in v for v in issues)


def test_validate_detects_scope_not_contained():
    h = hg(("A", "B"))
    td = gyo_acyclic(h)["join_tree"]
    td.clusters[0].chi = frozenset({"A"})
    issues = validate(td, h)
    assert any("condition 2" in v for v in issues)


def test_validate_detects_broken_running_intersection():
    h = hg(("A", "B"), ("B", "C"), ("C", "D"), ("B", "D"))
    td = decompose(h)
    # force a disconnect by removing B from a middle cluster if one holds it
    holders = [cid for cid, c in td.clusters.items() if "B" in c.chi]
    if len(holders) >= 3:
        mid = holders[1]
        td.clusters[mid].chi = td.clusters[mid].chi - {"B"}
        issues = validate(td, h)
        assert issues


def test_validate_detects_non_tree():
    h = hg(("A", "B"), ("B", "C"), ("C", "D"))
    td = gyo_acyclic(h)["join_tree"]
    td.edges.append((0, 2))
    issues = validate(td, h)
    assert any("tree" in v for v in issues)


def test_validate_detects_bad_cover():
    h = hg(("A", "B"), ("B", "C"))
    td = gyo_acyclic(h)["join_tree"]
    td.clusters[0].cover = ("f1",)
    issues = validate(td, h)
    assert any("condition 4" in v for v in issues)


# -- root selection / decomposition files ----------------------------------


def test_select_root_prefers_free_vars():
    h = hg(("A", "B"), ("B", "C"))
    td = gyo_acyclic(h)["join_tree"]
    assert select_root(td, {"C"}) == 1
    assert select_root(td, {"A"}) == 0
    # tie broken by lowest id
    assert select_root(td, set()) == 0


def test_load_decomposition_fixture(fixture_path):
    lv = flatten(parse(open(fixture_path("cone_cloud.estimand")).read())).level(0)
    h = build_hypergraph(lv)
    td = load_decomposition(fixture_path("cone_cloud.td"), h)
    assert td.hyperwidth == 2
    assert td.treewidth == 14
    assert td.n_clusters == 2


def test_load_decomposition_rejects_invalid(tmp_path):
    h = hg(("A", "B"))
    p = tmp_path / "bad.td"
    p.write_text("cluster 0: chi={A} psi={f0} cover={f0}\n")
    with pytest.raises(ValidationError):
        load_decomposition(p, h)


def test_load_decomposition_parse_error(tmp_path):
    p = tmp_path / "bad.td"
    p.write_text("cluster zero: chi={A}\n")
    with pytest.raises(ParseError):
        load_decomposition(p, hg(("A",)))
