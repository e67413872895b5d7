import itertools
import json
import math

import pytest

from pihte.decomposition import TreeDecomposition, Cluster, build_hypergraph, decompose
from pihte.engine import (
    EvalOptions,
    TableTracker,
    brute_force_eval,
    cte,
    empirical_term_factor,
    pi_hte,
    predicted_bounds,
    run_metrics,
)
from pihte.errors import ResourceLimitExceeded, UnboundFactor
from pihte.estimand import ProbTerm, flatten, parse
from pihte.factor import SparseFactor, product, unit_factor
from pihte.model import CausalGraph, Dataset, Variable, empirical_prob
from pihte.simulate import random_cbn, sample_dataset


def chain_graph(n, k=2):
    return CausalGraph(
        [Variable(f"V{i}", k) for i in range(n)],
        [(f"V{i}", f"V{i+1}") for i in range(n - 1)],
    )


def small_data(seed=0, n=200):
    cbn = random_cbn(chain_graph(3), dist="dirichlet", alpha=1.0, seed=seed)
    return sample_dataset(cbn, n, seed=seed + 1)


# -- cte -------------------------------------------------------------------


def test_cte_single_cluster_matches_dense():
    data = small_data()
    fa = empirical_prob(data, ("V0",))
    fb = empirical_prob(data, ("V1",), ("V0",))
    td = TreeDecomposition(
        clusters={0: Cluster(chi=frozenset({"V0", "V1"}), psi=frozenset({"f0", "f1"}),
                             cover=("f1",))},
        edges=[],
    )
    out = cte(td, {"f0": fa, "f1": fb}, {"V1"})
    for v1 in range(2):
        want = math.fsum(
            fa.dense_eval({"V0": v0}) * fb.dense_eval({"V0": v0, "V1": v1})
            for v0 in range(2)
        )
        assert out.dense_eval({"V1": v1}) == pytest.approx(want, rel=1e-12)


def test_cte_two_clusters_matches_dense():
    data = small_data(seed=3)
    f0 = empirical_prob(data, ("V1",), ("V0",))
    f1 = empirical_prob(data, ("V2",), ("V1",))
    td = TreeDecomposition(
        clusters={
            0: Cluster(chi=frozenset({"V0", "V1"}), psi=frozenset({"f0"}), cover=("f0",)),
            1: Cluster(chi=frozenset({"V1", "V2"}), psi=frozenset({"f1"}), cover=("f1",)),
        },
        edges=[(0, 1)],
    )
    out = cte(td, {"f0": f0, "f1": f1}, {"V0", "V2"})
    for v0, v2 in itertools.product(range(2), range(2)):
        want = math.fsum(
            f0.dense_eval({"V0": v0, "V1": v1}) * f1.dense_eval({"V1": v1, "V2": v2})
            for v1 in range(2)
        )
        assert out.dense_eval({"V0": v0, "V2": v2}) == pytest.approx(want, rel=1e-12)


def test_cte_root_invariance():
    data = small_data(seed=4)
    f0 = empirical_prob(data, ("V1",), ("V0",))
    f1 = empirical_prob(data, ("V2",), ("V1",))
    td = TreeDecomposition(
        clusters={
            0: Cluster(chi=frozenset({"V0", "V1"}), psi=frozenset({"f0"}), cover=("f0",)),
            1: Cluster(chi=frozenset({"V1", "V2"}), psi=frozenset({"f1"}), cover=("f1",)),
        },
        edges=[(0, 1)],
    )
    factors = {"f0": f0, "f1": f1}
    a = cte(td, factors, {"V0", "V2"}, root=0)
    b = cte(td, factors, {"V0", "V2"}, root=1)
    assert a.allclose(b, rel=1e-9)


def test_cte_scalar_factors():
    td = TreeDecomposition(
        clusters={0: Cluster(chi=frozenset(), psi=frozenset({"f0", "f1"}), cover=())},
        edges=[],
    )
    two = SparseFactor((), {(): 2.0})
    three = SparseFactor((), {(): 3.0})
    out = cte(td, {"f0": two, "f1": three}, set())
    assert out.dense_eval({}) == 6.0


def test_cte_unbound_factor():
    td = TreeDecomposition(
        clusters={0: Cluster(chi=frozenset({"A"}), psi=frozenset({"f0"}), cover=("f0",))},
        edges=[],
    )
    with pytest.raises(UnboundFactor):
        cte(td, {}, set())


def test_tracker_cap():
    tracker = TableTracker(cap=3)
    f = SparseFactor((Variable("A", 4),), {(i,): 1.0 for i in range(4)})
    with pytest.raises(ResourceLimitExceeded):
        tracker.record(f)


def test_tracker_env_cap(monkeypatch):
    monkeypatch.setenv("PIHTE_MAX_ENTRIES", "2")
    tracker = TableTracker()
    assert tracker.cap == 2


# -- pi_hte ----------------------------------------------------------------


def test_pi_hte_depth_one_equals_brute_force():
    data = small_data(seed=5)
    expr = parse("sum[V1](P(V1|V0) P(V2|V1))")
    got = pi_hte(flatten(expr), data).result
    want = brute_force_eval(expr, data)
    assert got.allclose(want, rel=1e-9)


def test_pi_hte_napkin_matches_oracle(fixture_path):
    from pihte.model import load_graph

    g = load_graph(fixture_path("napkin.graph"))
    cbn = random_cbn(g, dist="dirichlet", alpha=1.0, seed=11)
    data = sample_dataset(cbn, 1000, seed=12)
    expr = parse(open(fixture_path("napkin.estimand")).read())
    got = pi_hte(flatten(expr), data).result
    want = brute_force_eval(expr, data)
    assert got.allclose(want, rel=1e-9)


def test_pi_hte_do_restricts_slice():
    data = small_data(seed=6)
    expr = parse("sum[V1](P(V1|V0) P(V2|V1))")
    hier = flatten(expr)
    full = pi_hte(hier, data).result
    sliced = pi_hte(hier, data, EvalOptions(do={"V0": 1})).result
    assert all(k[full.names.index("V0")] == 1 for k, _ in sliced.items())
    for key, val in sliced.items():
        assert val == pytest.approx(dict(full.items())[key], rel=1e-12)


def test_pi_hte_normalizes_per_do_configuration():
    data = small_data(seed=7)
    expr = parse("sum[V1](P(V1|V0) P(V2|V1))")
    rep = pi_hte(flatten(expr), data, EvalOptions(do={"V0": 0}))
    assert rep.normalized is not None
    total = math.fsum(v for _, v in rep.normalized.items())
    assert total == pytest.approx(1.0, rel=1e-9)


def test_pi_hte_respects_entry_cap():
    data = small_data(seed=8, n=300)
    expr = parse("sum[V1](P(V1|V0) P(V2|V1))")
    with pytest.raises(ResourceLimitExceeded):
        pi_hte(flatten(expr), data, EvalOptions(max_entries=1))


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_pi_hte_deterministic(seed):
    data = small_data(seed=seed)
    expr = parse("sum[V1](P(V1|V0) P(V2|V1) P(V0))")
    hier = flatten(expr)
    a = pi_hte(hier, data, EvalOptions(seed=seed))
    b = pi_hte(hier, data, EvalOptions(seed=seed))
    assert dict(a.result.items()) == dict(b.result.items())  # bitwise
    assert a.to_json(include_timing=False) == b.to_json(include_timing=False)


def test_level_stats_reported():
    data = small_data(seed=9)
    rep = pi_hte(flatten(parse("sum[V1](P(V1|V0) P(V2|V1))")), data)
    assert len(rep.levels) == 1
    lv = rep.levels[0]
    assert lv.hw == 1 and lv.is_hypertree
    assert lv.t <= data.n_rows
    assert rep.max_table_entries >= lv.max_table_entries


# -- brute force -----------------------------------------------------------


def test_brute_force_hand_example():
    data = Dataset(("A", "B"), [(0, 0), (0, 1), (1, 1), (1, 1)], {"A": 2, "B": 2})
    out = brute_force_eval(parse("sum[A](P(A) P(B|A))"), data)
    # P(B=1) = P(A=0)P(B=1|A=0) + P(A=1)P(B=1|A=1) = .5*.5 + .5*1
    assert out.dense_eval({"B": 1}) == pytest.approx(0.75)
    assert out.dense_eval({"B": 0}) == pytest.approx(0.25)


def test_brute_force_single_term_is_marginal():
    data = small_data(seed=10)
    out = brute_force_eval(parse("P(V0)"), data)
    want = empirical_prob(data, ("V0",))
    assert out.allclose(want, rel=1e-15)


# -- bounds / metrics ------------------------------------------------------


def test_predicted_bounds_chain99_log():
    stats = [{"level_id": 0, "w": 98, "hw": 1}]
    b = predicted_bounds(stats, t=10000, k=4, n=99)
    assert b["tw_bound_log10"] == pytest.approx(99 * math.log10(4), abs=1e-9)
    assert 59.5 <= b["tw_bound_log10"] <= 59.7
    assert b["sum_hw"] == 1
    assert b["hw_bound_value"] == pytest.approx(10000.0)
    assert b["tighter"] == "hw"


def test_predicted_bounds_hierarchy_exponents():
    stats = [{"level_id": 0, "w": 3, "hw": 1}, {"level_id": 1, "w": 2, "hw": 1}]
    b = predicted_bounds(stats, t=500, k=3, n=4)
    assert b["sum_hw"] == 2
    assert b["max_hw"] == 1


def test_predicted_bounds_t1_floor():
    stats = [{"level_id": 0, "w": 5, "hw": 2}]
    b = predicted_bounds(stats, t=1, k=2, n=6)
    assert b["levels"][0]["hw_time"] == 6.0


def test_run_metrics_row():
    data = small_data(seed=12)
    rep = pi_hte(flatten(parse("sum[V1](P(V1|V0) P(V2|V1))")), data)
    row = run_metrics(rep)
    assert set(row) == {"samples", "time", "max_table_size", "t", "density"}
    assert row["samples"] == data.n_rows
    assert row["time"] >= 0.0
    # intermediate joins can exceed the largest input factor's dense size
    assert row["density"] > 0


def test_empirical_term_factor_primed_reads_base_column():
    data = small_data(seed=13)
    f = empirical_term_factor(ProbTerm(("V1",), ("V0'",)), data)
    base = empirical_prob(data, ("V1",), ("V0",))
    assert f.names == ("V0'", "V1")
    assert dict(f.items()) == dict(base.items())
