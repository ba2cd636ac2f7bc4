import math

import numpy as np
import pytest

from clexsim.clique_router import BalancerConfig
from clexsim.hierarchical_router import RouterConfig
from clexsim.sim_engine import (
    CSV_HEADER,
    MemoryBudgetError,
    TrafficSpec,
    check_memory,
    estimate_memory,
    generate_traffic,
    run_experiment,
)
from clexsim.topology import build_clex


def test_permutation_traffic_degrees():
    tr = generate_traffic(TrafficSpec(57, seed=3), 512)
    assert len(tr) == 57 * 512
    assert (tr.out_counts(512) == 57).all()
    assert (tr.in_counts(512) == 57).all()


def test_empty_traffic():
    assert len(generate_traffic(TrafficSpec(0), 100)) == 0


def test_uir_in_load_tail():
    n, S = 1024, 8
    bound = S + 6 * math.sqrt(S * math.log(n))
    for seed in range(100):
        tr = generate_traffic(TrafficSpec(S, "uir", seed), n)
        assert tr.in_counts(n).max() <= bound


def test_custom_traffic_and_validation():
    tr = generate_traffic(TrafficSpec(0, "custom", pairs=((0, 3), (2, 1))), 4)
    assert list(tr.src) == [0, 2] and list(tr.dst) == [3, 1]
    with pytest.raises(ValueError):
        generate_traffic(TrafficSpec(0, "custom", pairs=((0, 9),)), 4)
    with pytest.raises(ValueError):
        TrafficSpec(1, "hotspot")
    with pytest.raises(ValueError):
        TrafficSpec(-1)


def test_traffic_budget():
    with pytest.raises(MemoryBudgetError):
        generate_traffic(TrafficSpec(10), 1000, budget=1000)


def test_memory_gate():
    t = build_clex(32, 4)
    assert estimate_memory(t, 28) > estimate_memory(t, 4)
    with pytest.raises(MemoryBudgetError, match="GiB"):
        check_memory(t, 28, budget=2**30)
    assert check_memory(build_clex(4, 2), 3, budget=2**30) > 0


def dense_run(seed=1, base=8, levels=3, per_node=7, **kw):
    t = build_clex(base, levels, aggregated=False)
    tr = generate_traffic(TrafficSpec(per_node, seed=seed), t.n)
    cfg = RouterConfig(BalancerConfig(request_ack=True), seed=seed)
    return t, tr, run_experiment(t, tr, cfg, **kw)


def test_report_invariants():
    t, tr, rep = dense_run()
    assert all(rep.checks.values()), rep.checks
    assert [r.level for r in rep.level_metrics] == [1, 2, 3]
    assert rep.level(3).max_avg_load == 7
    for r in rep.level_metrics:
        assert r.max_rounds >= 0 and r.avg_rounds >= 0 and r.avg_hops >= 0
        assert r.avg_latency >= r.avg_rounds
    # at most one top link, two level-2 links, four clique links of two hops
    assert rep.level(3).avg_hops <= 1
    assert rep.level(2).avg_hops <= 2
    assert rep.level(1).avg_hops <= 8
    assert rep.balancing.size == rep.phase_counts.size > 0


def test_report_is_reproducible():
    _, _, a = dense_run(seed=5)
    _, _, b = dense_run(seed=5)
    _, _, c = dense_run(seed=6)
    assert a.to_csv() == b.to_csv()
    assert a.to_csv() != c.to_csv()


def test_csv_layout():
    _, _, rep = dense_run()
    lines = rep.to_csv().splitlines()
    assert lines[0] == ",".join(CSV_HEADER) == "level,max_rounds,avg_rounds,max_avg_load,avg_hops"
    first = lines[1].split(",")
    assert first[0] == "1"
    assert all(len(x.split(".")[1]) == 2 for x in first[1:])
    assert len(rep.to_table().splitlines()) == 2 + 3


def test_valiant_full_doubles_top_level_hops():
    _, _, direct = dense_run(seed=2)
    _, _, two = dense_run(seed=2, valiant_mode="full")
    assert all(two.checks.values())
    assert two.level(3).avg_hops == pytest.approx(2 * direct.level(3).avg_hops, rel=0.02)


def test_valiant_cluster_keeps_top_level():
    _, _, rep = dense_run(seed=2, valiant_mode="cluster:2")
    assert all(rep.checks.values())
    assert rep.level(3).avg_hops == pytest.approx(1.0, abs=0.01)
    assert rep.level(2).avg_hops > 2.5


def test_sampling_limits_vectors_not_metrics():
    _, tr, full = dense_run(seed=3)
    _, _, sampled = dense_run(seed=3, sample_limit=100)
    assert sampled.samples["hops"].shape == (100, 3)
    assert full.samples["hops"].shape == (len(tr), 3)
    assert sampled.to_csv() == full.to_csv()


def test_uir_traffic_runs():
    t = build_clex(4, 3)
    tr = generate_traffic(TrafficSpec(3, "uir", seed=4), t.n)
    rep = run_experiment(t, tr)
    assert rep.checks["delivered"] and rep.checks["delivered_multiset"]


def test_json_report_fields():
    _, _, rep = dense_run()
    data = rep.to_json()
    assert data["n"] == 512 and len(data["level_metrics"]) == 3
    assert 0 <= data["fraction_within_3_phases"] <= 1
    assert sum(data["phase_histogram"].values()) == rep.balancing.size
