import math

import numpy as np
import pytest

from multilru.analytics import che_single_hit, two_cache_hit
from multilru.engine import (ExperimentConfig, HitReport, coverage_profile_for, replay_stream, run_experiment,
                             run_replication, run_sweep, two_cache_simulation)
from multilru.geometry import StationField, Window, covering_stations
from multilru.policies import CacheInventory, Policy, handle_request
from multilru.results import SWEEP_COLUMNS, write_rows_csv
from multilru.traffic import generate_irm_stream, zipf_popularities

SMALL = dict(width=4.0, height=4.0, catalogue_size=500, capacity=10, replications=2,
             duration=20_000 / (0.023 * 16))


def small(**kw):
    return ExperimentConfig(**{**SMALL, **kw})


class TestConfig:
    def test_defaults(self):
        c = ExperimentConfig()
        assert c.cache_size == 100 and c.window.margin == c.radius
        assert c.user_intensity * 144 * c.duration == pytest.approx(1e6)
        assert c.catalogue().size == 10_000

    def test_margin_and_capacity_overrides(self):
        c = ExperimentConfig(margin=0.0, capacity=7)
        assert c.window.margin == 0.0 and c.cache_size == 7

    @pytest.mark.parametrize("kw", [dict(geometry="hex"), dict(radius=0.0), dict(alpha=0.0), dict(alpha=1.5),
                                    dict(replications=0), dict(policy="multi-all", q=0.5), dict(warmup=1.0),
                                    dict(traffic="bursty"), dict(capacity=0)])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            ExperimentConfig(**kw)


class TestHitReport:
    def test_statistics(self):
        r = HitReport.combine([HitReport(100, 30, [0.3], [1]), HitReport(300, 120, [0.4], [2])])
        assert r.hit_probability == pytest.approx(150 / 400)
        assert r.mean == pytest.approx(0.35)
        assert r.ci95 == pytest.approx(1.96 * np.std([0.3, 0.4], ddof=1) / math.sqrt(2))
        assert r.seeds == [1, 2] and r.n_replications == 2

    def test_single_replication(self):
        r = HitReport(10, 4, [0.4], [0])
        assert r.mean == r.hit_probability and math.isnan(r.ci95)

    def test_undefined(self):
        r = HitReport(0, 0)
        assert not r.defined and math.isnan(r.hit_probability)


class TestReplication:
    def test_determinism(self):
        cfg = small(policy="multi-all", radius=1.38)
        a, b = run_replication(cfg, 5), run_replication(cfg, 5)
        assert a.as_dict() == b.as_dict()
        assert run_replication(cfg, 6).as_dict() != a.as_dict()

    def test_conservation(self):
        r = run_replication(small(), 1)
        assert 0 <= r.hits <= r.requests and r.requests > 0

    def test_empty_stream(self):
        r = run_replication(small(duration=1e-9), 0)
        assert r.requests == 0 and not r.defined

    def test_no_stations(self):
        cfg = small(intensity=1e-6, radius=0.5)
        r = run_replication(cfg, 3)
        assert r.requests > 0 and r.hits == 0

    def test_degeneracy_without_overlap(self):
        # lattice spacing 1.41 > 2 * 0.6: every user has at most one covering station
        base = small(geometry="lattice", radius=0.6, intensity=0.5)
        hits = {p: run_replication(base.replace(policy=p), 9).hits for p in ("single-lru", "multi-one", "multi-all")}
        assert len(set(hits.values())) == 1

    def test_lfu_oracle(self):
        cfg = small(geometry="lattice", radius=0.6, policy="lfu", replications=4)
        rep = run_experiment(cfg)
        covered = 1 - coverage_profile_for(cfg).pmf[0]
        expected = covered * cfg.catalogue().popularities[:cfg.cache_size].sum()
        assert rep.hit_probability == pytest.approx(expected, abs=0.01)

    def test_static_needs_irm(self):
        with pytest.raises(ValueError):
            run_replication(small(policy="gfi", traffic="temporal", temporal_days=1.0), 0)

    def test_experiment_seeds(self):
        rep = run_experiment(small(seed=40, replications=3))
        assert rep.seeds == [40, 41, 42] and rep.n_replications == 3

    def test_single_replication_mean(self):
        cfg = small(replications=1)
        assert run_experiment(cfg).mean == run_replication(cfg, cfg.seed).hit_probability

    def test_warmup_counts_tail_only(self):
        full = run_replication(small(), 2)
        tail = run_replication(small(warmup=0.5), 2)
        assert tail.requests < full.requests and tail.requests > 0.4 * full.requests

    def test_temporal_runs(self):
        cfg = small(traffic="temporal", temporal_days=2.0, request_rate=500.0, birth_rate=50.0,
                    mean_lifespan=1.0, policy="multi-all", geometry="lattice", margin=0.0)
        r = run_replication(cfg, 0)
        assert r.requests > 0 and 0 < r.hits < r.requests


def test_replay_matches_reference_semantics():
    rng = np.random.default_rng(3)
    cat = zipf_popularities(60, 0.8)
    w = Window(3, 3, 1.0)
    field = StationField(rng.uniform(-1, 4, (20, 2)), 1.0, 1.0, w)
    stream = generate_irm_stream(1.0, w, 1.0, cat, rng, count=3000)
    for pol in (Policy("single-lru"), Policy("multi-one"), Policy("multi-one", one_update="nearest"),
                Policy("multi-all")):
        hits, state = replay_stream(pol, field, stream, cat.size, 4, np.random.default_rng(0))
        caches = [CacheInventory(4) for _ in range(len(field))]
        ref = [handle_request(pol, caches, covering_stations(field, (r.x, r.y)), None, r.object).hit for r in stream]
        assert list(hits) == ref
        assert all(state.items(s) == caches[s].items() for s in range(len(field)))


def test_single_cache_simulation_matches_che():
    cat = zipf_popularities(10_000, 0.78)
    sim = two_cache_simulation("single-lru", cat, 100, 600_000, seed=1)
    # one cache serving half of the users: a single LRU driven by half the stream
    assert sim == pytest.approx(che_single_hit(cat, 1.0, 100), abs=0.01)


def test_two_cache_all_matches_exact_formula():
    cat = zipf_popularities(2000, 0.7)
    sim = two_cache_simulation("multi-all", cat, 40, 400_000, seed=2)
    assert sim == pytest.approx(two_cache_hit("all", cat, 1.0, 1.0, 40), abs=0.01)


class TestSweep:
    def test_rows_and_mapping(self):
        rows = run_sweep(small(), "radius", [0.8, 1.13, 1.38], ["multi-one", "single-lru"])
        assert len(rows) == 6 and all(tuple(r) == SWEEP_COLUMNS for r in rows)
        assert [round(r["N_bs_mean"]) for r in rows[::2]] == [1, 2, 3]
        assert [r["seed"] for r in rows[::2]] == [0, 2, 4]
        assert all(r["n_replications"] == 2 for r in rows)

    def test_q_sweep_only_touches_q_policies(self):
        rows = run_sweep(small(), "q", [0.5, 1.0], ["q-multi-all", "multi-all"])
        assert [r["policy"] for r in rows] == ["q-multi-all(q=0.5)", "multi-all", "q-multi-all(q=1)", "multi-all"]

    def test_alpha_sweep_resets_capacity(self):
        rows = run_sweep(small(replications=1), "alpha", [0.01, 0.2], ["multi-all"])
        assert rows[1]["p_hit_mean"] > rows[0]["p_hit_mean"]

    def test_rejects(self):
        with pytest.raises(ValueError):
            run_sweep(small(), "radius", [])
        with pytest.raises(ValueError):
            run_sweep(small(), "margin", [1.0])

    def test_csv_bytes_reproducible(self, tmp_path):
        cfg = small(replications=1)
        a = write_rows_csv(run_sweep(cfg, "gamma", [0.5, 1.0]), tmp_path / "a.csv", SWEEP_COLUMNS)
        b = write_rows_csv(run_sweep(cfg, "gamma", [0.5, 1.0]), tmp_path / "b.csv", SWEEP_COLUMNS)
        assert a.read_bytes() == b.read_bytes()

    def test_gamma_increases_hits(self):
        rows = run_sweep(small(), "gamma", [0.4, 0.8, 1.2], ["multi-one", "multi-all"])
        for pol in ("multi-one", "multi-all"):
            vals = [r["p_hit_mean"] for r in rows if r["policy"] == pol]
            assert vals[0] < vals[1] < vals[2]
