import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fcmac.errors import SimulationInvariantError
from fcmac.observe import (DecisionBatch, NeighborTracker, build_global_state, build_local_observation,
                           update_tracker)
from fcmac.sim import LEGACY, EventKind, SimConfig, SimEvent, Simulator, StationState, advance_station, run
from conftest import ObservationPolicy


def feed(tracker, events):
    for t, kind, sid in events:
        update_tracker(tracker, SimEvent(t, kind, sid), t)
    return tracker


def frame_events(t, sid, airtime=100, sifs=10, ack=20):
    return [(t, EventKind.TX_START, sid), (t + airtime, EventKind.TX_END, sid),
            (t + airtime + sifs, EventKind.ACK_START, sid), (t + airtime + sifs + ack, EventKind.ACK_END, sid)]


class TestTracker:
    def test_ack_resets(self):
        tr = feed(NeighborTracker(3), frame_events(50, 1))
        assert tr.d2lt(1, 180) == 0 and tr.ci2la(1, 180) == 0

    def test_busy_subtraction(self):
        tr = feed(NeighborTracker(3), frame_events(0, 1, airtime=100, sifs=10, ack=20))
        # ACK ends at 130; a 300 us frame from station 2 runs 200..500
        feed(tr, [(200, EventKind.TX_START, 2), (500, EventKind.TX_END, 2)])
        tr.advance_to(630)
        assert tr.d2lt(1, 630) == 500
        assert tr.busy_since_ack(1, 630) == 300
        assert tr.ci2la(1, 630) == 200

    def test_sentinel_origin(self):
        cfg = SimConfig(n_stations=3, sim_time=0.05, warmup=0.01)
        tr = NeighborTracker(3, warmup=cfg.warmup_us)
        # no ACK ever observed: clocks run from the end of warm-up
        now = cfg.warmup_us + 777
        tr.advance_to(now)
        assert tr.d2lt(2, now) == now - cfg.warmup_us
        assert tr.ci2la(2, now) == now - cfg.warmup_us
        # before warm-up ends the origin is time zero
        tr2 = NeighborTracker(3, warmup=cfg.warmup_us)
        tr2.advance_to(400)
        assert tr2.d2lt(0, 400) == 400

    def test_sentinel_in_ack_free_trace(self):
        # two agents that always pick zero collide forever, so no ACK is ever heard
        cfg = SimConfig(n_stations=2, sim_time=0.03, warmup=0.01)
        sim = Simulator(cfg, agent_ids=[0, 1])
        checked = 0
        while (batch := sim.next_decision()) is not None:
            if batch.time >= cfg.warmup_us:
                assert (batch.pairs[:, 0] == batch.time - cfg.warmup_us).all()
                checked += 1
            sim.apply_actions(np.zeros(len(batch.stations), dtype=np.int64))
        assert checked > 10
        assert sim.trace().successes.sum() == 0

    def test_backwards_rejected(self):
        tr = NeighborTracker(2)
        tr.advance_to(100)
        with pytest.raises(SimulationInvariantError):
            update_tracker(tr, SimEvent(50, EventKind.TX_START, 0), 50)
        with pytest.raises(SimulationInvariantError):
            update_tracker(tr, SimEvent(150, EventKind.TX_START, 0), 160)

    @settings(max_examples=100)
    @given(st.lists(st.tuples(st.integers(1, 400), st.integers(0, 3), st.booleans()), min_size=1, max_size=25),
           st.integers(0, 2000))
    def test_ci2la_identity(self, frames, warmup):
        tr = NeighborTracker(4, warmup=warmup)
        t = 0
        for gap, sid, acked in frames:
            t += gap
            events = frame_events(t, sid) if acked else frame_events(t, sid)[:2]
            feed(tr, events)
            t = events[-1][0]
            for probe in (t, t + gap):
                tr.advance_to(probe)
                for j in range(4):
                    d, c, b = tr.d2lt(j, probe), tr.ci2la(j, probe), tr.busy_since_ack(j, probe)
                    assert c + b == d
                    assert 0 <= c <= d
            t += gap


class TestLocalObservation:
    def test_fresh_attempt(self):
        tr = NeighborTracker(4)
        obs = build_local_observation(StationState(0, is_agent=True), tr, 0)
        assert obs.self_obs.deferral_count == 0 and obs.self_obs.cumulative_backoff == 0

    def test_counts(self):
        s = StationState(1, is_agent=True, cw=31, backoff_counter=20)
        t = 0
        for _ in range(2):
            for _ in range(4):
                s, _ = advance_station(s, SimEvent(t, EventKind.SLOT_BOUNDARY), False)
                t += 9
            s, _ = advance_station(s, SimEvent(t, EventKind.TX_START, 0), True)
        obs = build_local_observation(s, NeighborTracker(2), t)
        # 2 deferrals, 8 boundaries of which the first of each idle period only arms
        assert (obs.self_obs.deferral_count, obs.self_obs.cumulative_backoff) == (2, 6)

    def test_all_active_neighbors(self):
        tr = NeighborTracker(4)
        for k, sid in enumerate(range(4)):
            feed(tr, frame_events(1000 * k, sid))
        obs = build_local_observation(StationState(2), tr, 5000)
        assert len(obs.neighbor_obs) == 3

    def test_global_state(self):
        tr = NeighborTracker(4)
        locs = [build_local_observation(StationState(i, True), tr, 0) for i in range(4)]
        assert build_global_state(locs, tr, range(4), 0).legacy_obs == ()
        g = build_global_state(locs[:2], tr, [0, 1], 0)
        assert len(g.agent_self_obs) == 2 and len(g.legacy_obs) == 2
        with pytest.raises(ValueError):
            build_global_state(locs[:1], tr, [0, 1], 0)

    def test_global_contains_single_agent(self):
        tr = NeighborTracker(3)
        feed(tr, frame_events(0, 1) + frame_events(400, 2))
        loc = build_local_observation(StationState(0, True), tr, 800)
        g = build_global_state([loc], tr, [0], 800)
        assert g.agent_self_obs == (loc.self_obs,)
        assert set(loc.neighbor_obs) <= set(g.legacy_obs)


class TestDecisionBatches:
    def collect(self, cfg, agents):
        batches = []
        sim = Simulator(cfg, agent_ids=agents)
        rng = np.random.default_rng(0)
        while (b := sim.next_decision()) is not None:
            batches.append(b)
            sim.apply_actions(rng.integers(0, 4, len(b.stations)))
        return batches

    def test_invariants(self):
        cfg = SimConfig(n_stations=5, sim_time=0.3, warmup=0.05, seed=2)
        for b in self.collect(cfg, [0, 2, 3]):
            since, idle = b.self_obs[:, 3], b.self_obs[:, 4]
            assert (b.self_obs >= 0).all()
            assert (idle <= since).all()
            assert (b.pairs[:, 1] <= b.pairs[:, 0]).all() and (b.pairs >= 0).all()
            assert b.is_agent[b.stations].all()

    def test_staleness(self):
        # a run cut short just after a decision saw exactly the same features
        cfg = SimConfig(n_stations=4, sim_time=0.1, warmup=0.02, seed=5)
        full = self.collect(cfg, [1, 3])
        cut = full[len(full) // 2]
        short = SimConfig(n_stations=4, sim_time=(cut.time + 1) / 1e6, warmup=0.02, seed=5)
        part = self.collect(short, [1, 3])
        assert part[-1].time == cut.time
        for a, b in zip(part, full):
            assert a.time == b.time
            assert np.array_equal(a.self_obs, b.self_obs) and np.array_equal(a.pairs, b.pairs)

    def test_actor_inputs(self):
        b = DecisionBatch(100, np.array([0, 2]), np.arange(20).reshape(4, 5), np.arange(8).reshape(4, 2),
                          np.array([True, True, False, True]), np.array([True, False, True, False]))
        own, neigh, mask = b.actor_inputs()
        assert own.shape == (2, 5) and neigh.shape == (2, 3, 2)
        assert mask.tolist() == [[True, True, False], [True, True, True]]
        assert neigh[0, :2].tolist() == [[2, 3], [6, 7]]
        agents, legacy = b.critic_inputs()
        assert agents.shape == (2, 5) and legacy.shape == (2, 2)
        loc = b.local_observation(0)
        assert loc.neighbor_obs == ((2, 3), (6, 7))
        assert len(b.global_state().legacy_obs) == 2

    def test_matches_reference_observations(self):
        from fcmac.sim.reference import run_reference
        cfg = SimConfig(n_stations=4, sim_time=0.05, warmup=0.01, seed=1)
        pa, pb = ObservationPolicy(), ObservationPolicy()
        run(cfg, [pa, LEGACY, pa, LEGACY])
        run_reference(cfg, [pb, LEGACY, pb, LEGACY])
        assert pa.log == pb.log and len(pa.log) > 10
