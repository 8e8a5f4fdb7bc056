"""Two-agent simulation: engines, detection, delays, sweeps, and case tags."""

import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from linemeet.sim import (
    CASE_TAGS,
    CSV_COLUMNS,
    AgentPlan,
    SimConfig,
    SimError,
    case_classifier,
    default_round_cap,
    grid_configs,
    lmin_stats,
    run,
    run_row,
    sweep,
    write_csv,
)
from linemeet.logstar import log_star
from linemeet.world import ExplicitScheme, make_world

RAND = "random-injective:0:1000000000"
CLASS4 = "uniform-logstar-class:4"
CLASS5 = "uniform-logstar-class:5"


def both_engines(cfg):
    return run(cfg), run(replace(cfg, engine="reference"))


class TestConfigValidation:
    def test_unknown_detection(self):
        with pytest.raises(SimError, match="detection"):
            run(SimConfig(detection="telepathy"))

    def test_negative_delay(self):
        with pytest.raises(SimError, match="nonnegative"):
            run(SimConfig(tau=-1))

    def test_start_off_the_path(self):
        with pytest.raises(SimError, match="invalid"):
            run(SimConfig(topology="path", n=5, va=0, vb=9))

    def test_identical_starts_guarded(self):
        with pytest.raises(SimError, match="allow_same_start"):
            run(SimConfig(va=2, vb=2))

    def test_identical_starts_meet_immediately(self):
        trace = run(SimConfig(va=2, vb=2, allow_same_start=True))
        assert trace.t_rdv == 0
        assert trace.event == "node"
        assert trace.meet_position == 2

    def test_node_only_requires_care(self):
        with pytest.raises(SimError, match="allow_mispairing"):
            run(SimConfig(detection="node-only"))

    def test_care_requires_node_only(self):
        with pytest.raises(SimError, match="allow_mispairing"):
            run(SimConfig(care=True))

    def test_mispairing_override(self):
        trace = run(SimConfig(detection="node-only", allow_mispairing=True))
        assert trace.t_rdv is not None

    def test_unknown_engine(self):
        with pytest.raises(SimError, match="engine"):
            run(SimConfig(engine="warp"))

    def test_engine_variant_must_match_care_flag(self):
        with pytest.raises(SimError, match="care"):
            run(SimConfig(engine="fast-care"))
        with pytest.raises(SimError, match="care"):
            run(SimConfig(care=True, detection="node-only", engine="fast"))


# Times cross-checked against the reference engine before being frozen here.
PINNED = [
    (SimConfig(va=0, vb=3), 503, "node", "other"),
    (SimConfig(va=0, vb=3, tau=5), 87, "node", "discovery-collision"),
    (SimConfig(va=0, vb=3, tau=37), 87, "node", "out-of-sync"),
    (SimConfig(scheme=CLASS4, va=0, vb=9, tau=5),
     34992, "node", "distinct-nodes-colored"),
    (SimConfig(scheme=CLASS5, va=0, vb=9, tau=5),
     270377, "crossing", "distinct-nodes-colored"),
    (SimConfig(scheme=CLASS4, va=-11, vb=11), 131057, "node", "same-node"),
    (SimConfig(scheme=CLASS4, va=-21, vb=22), 135160, "node", "mismatched-R"),
    (SimConfig(scheme=RAND, va=-1, vb=1, tau=1),
     135255, "node", "distinct-nodes-colored"),
    (SimConfig(topology="path", n=2, va=0, vb=1), 1, "crossing", "other"),
    (SimConfig(topology="path", n=5, va=0, vb=4, tau=3),
     4, "crossing", "out-of-sync"),
    (SimConfig(topology="path", n=9, va=6, vb=8, tau=3),
     5, "node", "out-of-sync"),
    (SimConfig(topology="cycle", n=12, va=0, vb=4),
     34, "node", "discovery-collision"),
    (SimConfig(topology="cycle", n=8, va=0, vb=5, tau=6),
     87, "node", "discovery-collision"),
    (SimConfig(topology="cycle", n=3, va=0, vb=2, tau=4),
     3, "node", "out-of-sync"),
]


class TestPinnedOutcomes:
    @pytest.mark.parametrize("cfg,t,event,tag", PINNED)
    def test_outcome(self, cfg, t, event, tag):
        trace = run(cfg)
        assert trace.t_rdv == t
        assert trace.event == event
        assert case_classifier(trace) == tag

    def test_every_tag_is_catalogued(self):
        seen = {tag for _, _, _, tag in PINNED}
        assert seen <= set(CASE_TAGS)
        assert {"same-node", "mismatched-R", "distinct-nodes-colored",
                "out-of-sync"} <= seen


class TestEngineAgreement:
    CASES = [
        SimConfig(va=0, vb=3),
        SimConfig(va=0, vb=3, tau=5),
        SimConfig(va=0, vb=3, tau=37),
        SimConfig(va=-2, vb=2, tau=7),
        SimConfig(scheme="random-injective:7", va=0, vb=2, tau=2),
        SimConfig(topology="path", n=9, va=6, vb=8, tau=3),
        SimConfig(topology="path", n=5, va=0, vb=4, tau=3),
        SimConfig(topology="cycle", n=12, va=0, vb=4),
        SimConfig(topology="cycle", n=8, va=0, vb=5, tau=6),
        SimConfig(va=0, vb=3, care=True, detection="node-only"),
        SimConfig(va=0, vb=3, tau=5, care=True, detection="node-only"),
        SimConfig(topology="cycle", n=12, va=0, vb=4, tau=2, care=True,
                  detection="node-only"),
        SimConfig(topology="path", n=9, va=2, vb=7, tau=1, care=True,
                  detection="node-only"),
    ]

    @pytest.mark.parametrize("cfg", CASES)
    def test_fast_matches_reference(self, cfg):
        fast, ref = both_engines(cfg)
        assert (fast.t_rdv, fast.event) == (ref.t_rdv, ref.event)
        assert fast.meet_position == ref.meet_position

    @settings(max_examples=20, deadline=None)
    @given(va=st.integers(-2, 2), d=st.integers(1, 6),
           tau=st.integers(0, 12))
    def test_fast_matches_reference_randomized(self, va, d, tau):
        cfg = SimConfig(va=va, vb=va + d, tau=tau)
        fast, ref = both_engines(cfg)
        assert (fast.t_rdv, fast.event, fast.meet_position) == \
            (ref.t_rdv, ref.event, ref.meet_position)

    def test_reference_trace_answers_position_queries(self):
        trace = run(SimConfig(va=0, vb=3, tau=5, engine="reference"))
        xa, xb = trace.positions_at(0, trace.t_rdv)
        assert xa[0] == 0 and xb[0] == 3
        assert xa[-1] == xb[-1]


class TestTrajectoryInvariants:
    @pytest.mark.parametrize("cfg", [
        SimConfig(va=0, vb=3, tau=5),
        SimConfig(scheme=RAND, va=-1, vb=1, tau=1),
        SimConfig(topology="path", n=9, va=6, vb=8, tau=3),
        SimConfig(va=0, vb=3, tau=5, care=True, detection="node-only"),
    ])
    def test_unit_steps_only(self, cfg):
        trace = run(cfg)
        xa, xb = trace.positions_at(0, trace.t_rdv)
        for x in (xa, xb):
            assert np.abs(np.diff(x)).max() <= 1

    def test_unit_steps_only_cycle(self):
        trace = run(SimConfig(topology="cycle", n=12, va=0, vb=4))
        xa, xb = trace.positions_at(0, trace.t_rdv)
        for x in (xa, xb):
            steps = np.diff(x) % 12
            assert set(np.unique(steps)) <= {0, 1, 11}

    def test_cycle_positions_stay_on_the_ring(self):
        trace = run(SimConfig(topology="cycle", n=8, va=0, vb=5, tau=6))
        xa, xb = trace.positions_at(0, trace.t_rdv)
        assert xa.min() >= 0 and xa.max() < 8
        assert xb.min() >= 0 and xb.max() < 8

    def test_sleeper_is_pinned_until_wake(self):
        trace = run(SimConfig(va=0, vb=3, tau=9))
        _, xb = trace.positions_at(0, 8)
        assert (xb == 3).all()

    def test_delay_shifts_the_sleeper_in_time(self):
        late = run(SimConfig(va=0, vb=3, tau=5))
        base = run(SimConfig(va=0, vb=3))
        _, xb_late = late.positions_at(5, 90)
        _, xb_base = base.positions_at(0, 85)
        assert (xb_late == xb_base).all()

    def test_care_mode_lands_on_plain_positions_every_fourth_round(self):
        care = run(SimConfig(va=0, vb=3, care=True, detection="node-only"))
        plain = run(SimConfig(va=0, vb=3))
        xa_care, _ = care.positions_at(0, 400)
        xa_plain, _ = plain.positions_at(0, 100)
        assert (xa_care[::4] == xa_plain).all()

    def test_care_meets_within_four_times_plain(self):
        # a care delay of 4k aligns the crossing gadgets with the plain
        # run at delay k; misaligned delays can miss lucky early collisions
        for tau in (0, 5, 9):
            care = run(SimConfig(va=0, vb=3, tau=4 * tau, care=True,
                                 detection="node-only"))
            plain = run(SimConfig(va=0, vb=3, tau=tau))
            assert care.t_rdv <= 4 * plain.t_rdv + 3

    def test_sleeping_target_is_found_without_waking(self):
        trace = run(SimConfig(va=0, vb=1, tau=10**6))
        assert trace.t_rdv == 1
        assert case_classifier(trace) == "out-of-sync"


class TestPhaseAccounting:
    def test_counts_match_hand_tally(self):
        trace = run(SimConfig(va=0, vb=3, tau=5))
        assert trace.phase_counts() == {
            "alpha": {"discovery": 16, "wait": 72},
            "beta": {"asleep": 5, "discovery": 12, "wait": 71},
        }

    @pytest.mark.parametrize("cfg", [
        SimConfig(va=0, vb=3, tau=5),
        SimConfig(va=0, vb=3, tau=5, care=True, detection="node-only"),
        SimConfig(topology="cycle", n=12, va=0, vb=4),
        SimConfig(topology="path", n=9, va=6, vb=8, tau=3),
        SimConfig(scheme=CLASS4, va=-11, vb=11),
    ])
    def test_counts_cover_every_round_exactly_once(self, cfg):
        trace = run(cfg)
        counts = trace.phase_counts()
        for agent in ("alpha", "beta"):
            assert sum(counts[agent].values()) == trace.t_rdv + 1

    def test_sleeper_phase_before_wake(self):
        trace = run(SimConfig(va=0, vb=3, tau=5))
        assert trace.phase_of("beta", 0) == "asleep"
        assert trace.phase_of("beta", 4) == "asleep"
        assert trace.phase_of("beta", 5) != "asleep"
        assert trace.note_of("beta", 2) is None

    def test_shared_landmark_is_visible_in_the_notes(self):
        trace = run(SimConfig(scheme=CLASS4, va=-11, vb=11))
        na = trace.note_of("alpha", trace.t_rdv)
        nb = trace.note_of("beta", trace.t_rdv)
        assert na.phase == nb.phase == "searching"
        assert na.R == nb.R
        assert na.r == nb.r

    def test_distinct_landmarks_in_the_mixed_spacing_cell(self):
        trace = run(SimConfig(scheme=CLASS4, va=-21, vb=22))
        na = trace.note_of("alpha", trace.t_rdv)
        nb = trace.note_of("beta", trace.t_rdv)
        assert na.R != nb.R


class TestBoundBookkeeping:
    def brute_window(self, world, va, vb):
        D = world.distance(va, vb)
        rad = max(D, 1)
        coords = set()
        for v in (va, vb):
            for off in range(-rad, rad + 1):
                c = v + off
                if world.topology == "cycle":
                    coords.add(c % world.n)
                elif world.valid(c):
                    coords.add(c)
        labels = [world.label(c) for c in coords]
        return min(labels), max(labels)

    @pytest.mark.parametrize("topology,n,va,vb", [
        ("infinite", None, -3, 4),
        ("path", 9, 0, 2),
        ("path", 9, 6, 8),
        ("cycle", 8, 0, 4),
        ("cycle", 12, 10, 1),
    ])
    def test_window_extremes_match_brute_force(self, topology, n, va, vb):
        world = make_world(topology, "random-injective:3", n=n)
        assert lmin_stats(world, va, vb) == self.brute_window(world, va, vb)

    def test_cycle_window_wraps_to_the_global_minimum(self):
        world = make_world("cycle", "random-injective:3", n=8)
        lmin, _ = lmin_stats(world, 0, 4)
        assert lmin == min(world.label(v) for v in range(8))

    def test_default_cap_formula(self):
        scheme = ExplicitScheme({0: 40, 1: 7, 2: 90, 3: 11, 4: 2,
                                 -1: 65536, -2: 13, -3: 5, -4: 260})
        world = make_world("infinite", scheme)
        assert default_round_cap(world, -1, 1) == 10**5 * 2 * log_star(65536)

    def test_expired_cap_reports_no_meeting(self):
        trace = run(SimConfig(va=0, vb=3, round_cap=10))
        assert trace.t_rdv is None
        assert trace.event is None
        assert trace.meet_position is None


class TestRowsAndSweeps:
    def test_row_columns(self):
        row = run_row(SimConfig(va=0, vb=3, tau=5))
        assert set(row) == set(CSV_COLUMNS)
        assert row["topology"] == "infinite"
        assert row["n"] == ""
        assert row["D"] == 3
        assert row["tau"] == 5
        assert row["t_rdv"] == 87
        assert row["case_tag"] == "discovery-collision"

    def test_row_ratio_formula(self):
        row = run_row(SimConfig(va=0, vb=3, tau=5))
        denom = row["D"] * row["logstar_lmin"]
        assert row["ratio"] == f"{87 / denom:.6f}"
        assert row["lmin"] == 1
        assert row["logstar_lmin"] == log_star(1)

    def test_row_flags_cap_expiry(self):
        row = run_row(SimConfig(va=0, vb=3, round_cap=10))
        assert row["t_rdv"] == ""
        assert row["ratio"] == ""
        assert row["case_tag"] == "bound-violation"

    def test_sweep_preserves_input_order(self):
        configs = grid_configs(d_values=(1, 2, 3), taus=(0, 5))
        rows = sweep(configs)
        assert [(r["D"], r["tau"]) for r in rows] == \
            [(1, 0), (1, 5), (2, 0), (2, 5), (3, 0), (3, 5)]

    def test_parallel_sweep_matches_serial(self):
        configs = grid_configs(d_values=(1, 2, 3), taus=(0, 5))
        assert sweep(configs, jobs=2) == sweep(configs, jobs=1)

    def test_csv_round_trip_is_deterministic(self, tmp_path):
        configs = grid_configs(d_values=(2, 3), taus=(0, 5))
        spec = {"purpose": "unit", "cells": len(configs)}
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        write_csv(sweep(configs), p1, runspec=spec)
        write_csv(sweep(configs), p2, runspec=spec)
        text = p1.read_text()
        assert text == p2.read_text()
        lines = text.splitlines()
        assert json.loads(lines[0].removeprefix("# runspec=")) == spec
        assert lines[1] == ",".join(CSV_COLUMNS)
        assert len(lines) == 2 + len(configs)


class TestGridConfigs:
    def test_straddle_starts_on_the_line(self):
        cfgs = grid_configs(d_values=(5, 6), taus=(0,))
        assert [(c.va, c.vb) for c in cfgs] == [(-2, 3), (-3, 3)]

    def test_finite_starts_stay_in_range(self):
        for n in (8, 9):
            for d in range(1, n):
                cfg, = grid_configs(topology="path", n=n, d_values=(d,),
                                    taus=(0,))
                assert 0 <= cfg.va < n and 0 <= cfg.vb < n
                assert cfg.vb - cfg.va == d

    def test_cartesian_size(self):
        cfgs = grid_configs(schemes=("sequential", RAND),
                            d_values=(1, 2, 3), taus=(0, 1, 2, 3))
        assert len(cfgs) == 2 * 3 * 4


class TestTraceExport:
    def test_jsonl_rows(self, tmp_path):
        trace = run(SimConfig(va=0, vb=3, tau=5))
        path = tmp_path / "trace.jsonl"
        trace.to_jsonl(path)
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(rows) == trace.t_rdv + 1
        assert rows[0] == {"round": 0, "xa": 0, "xb": 3,
                           "phase_a": "discovery", "phase_b": "asleep",
                           "event": None}
        assert rows[-1]["event"] == "node"
        assert rows[-1]["xa"] == rows[-1]["xb"]
        assert all(r["event"] is None for r in rows[:-1])

    def test_jsonl_limit(self, tmp_path):
        trace = run(SimConfig(va=0, vb=3, tau=5))
        path = tmp_path / "trace.jsonl"
        trace.to_jsonl(path, limit=10)
        assert len(path.read_text().splitlines()) == 11


class TestSharedRulingWindows:
    def test_canonical_windows_do_not_change_the_plan(self):
        cfg = SimConfig(scheme=CLASS4, va=-11, vb=11)
        cached = run(cfg)
        bare = AgentPlan(cfg.world(), -11)
        bare.ensure(cached.t_rdv)
        horizon = np.arange(cached.t_rdv + 1)
        xa, _ = cached.positions_at(0, cached.t_rdv)
        assert (bare.positions(horizon) == xa).all()
