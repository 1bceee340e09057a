import numpy as np
import pytest

from pestlaser.geometry import StereoRig, back_project, point3, stereo_depth
from pestlaser.perception import (
    Detection,
    PerceptionParams,
    PerceptionState,
    detect_probability,
    sense,
    throttle,
    track_update,
)
from pestlaser.world import PlatformRail, Species, WorldConfig, spawn_scenario

RIG = StereoRig()
CATERPILLAR = Species(name="cabbage_caterpillar", mass_g=2.0, speed_mm_s=3.0,
                      detect_latency_ms=300.0, p_detect_ref=0.9, dwell_ms=50.0)


def make_world(n=50, seed=0, z=1.0, fp=0.0, speed=0.0):
    cfg = WorldConfig(species_counts=[(CATERPILLAR, n)], arena_w_m=0.6,
                      arena_h_m=0.6, crop_distance_m=z,
                      rail=PlatformRail(speed_mm_s=speed))
    return spawn_scenario(cfg, seed)


class TestDetectProbability:
    def test_flat_inside_reference_depth(self):
        p = PerceptionParams(z_ref_m=1.0, falloff_lambda_per_m=0.25)
        assert detect_probability(p, 0.9, 0.4) == pytest.approx(0.9)
        assert detect_probability(p, 0.9, 1.0) == pytest.approx(0.9)

    def test_exponential_falloff(self):
        p = PerceptionParams(z_ref_m=1.0, falloff_lambda_per_m=0.25)
        assert detect_probability(p, 0.9, 3.0) == \
            pytest.approx(0.9 * np.exp(-0.5), rel=1e-12)

    def test_nonincreasing_in_depth(self):
        p = PerceptionParams()
        z = np.linspace(0.1, 10.0, 400)
        vals = detect_probability(p, 0.9, z)
        assert np.all(np.diff(vals) <= 0)

    def test_zero_lambda_is_flat(self):
        p = PerceptionParams(falloff_lambda_per_m=0.0)
        z = np.linspace(0.1, 10.0, 50)
        np.testing.assert_allclose(detect_probability(p, 0.9, z), 0.9)


class TestSense:
    def test_deterministic(self):
        params = PerceptionParams()
        da = sense(make_world(), RIG, params, 0.0)
        db = sense(make_world(), RIG, params, 0.0)
        assert len(da) == len(db)
        for a, b in zip(da, db):
            assert a.truth_link == b.truth_link
            np.testing.assert_array_equal(a.est_position_world,
                                          b.est_position_world)

    def test_persistent_misses(self):
        # The same pests stay undetected across repeated ticks (no re-roll).
        w = make_world()
        params = PerceptionParams()
        ids0 = {d.truth_link for d in sense(w, RIG, params, 0.0)}
        ids1 = {d.truth_link for d in sense(w, RIG, params, 0.1)}
        assert ids0 == ids1
        assert 0 < len(ids0) < w.n

    def test_estimate_is_pixel_round_trip(self):
        w = make_world(n=20)
        for det in sense(w, RIG, PerceptionParams(), 0.0):
            z = stereo_depth(RIG, det.obs.disparity_px)
            np.testing.assert_allclose(det.est_position_cam,
                                       back_project(RIG, det.obs, z),
                                       atol=1e-12)
            truth = w.pos[det.truth_link]
            assert np.linalg.norm(det.est_position_world - truth) <= 1e-9

    def test_latency_tag(self):
        w = make_world(n=20)
        for det in sense(w, RIG, PerceptionParams(), 2.0):
            assert det.t_available_s == pytest.approx(2.3)

    def test_dead_pests_invisible(self):
        w = make_world(n=20)
        for i in range(w.n):
            w.neutralize(i, 0.0)
        assert sense(w, RIG, PerceptionParams(), 0.0) == []

    def test_false_positive_rate(self):
        w = make_world(n=1, seed=3)
        w.detectability[:] = 2.0  # nothing real gets reported
        params = PerceptionParams(fp_rate_per_s=3.0, revisit_period_s=1.0 / 3.0)
        total = sum(len(sense(w, RIG, params, 0.0)) for _ in range(3000))
        # Poisson mean 1.0 per tick; 3000 ticks -> tight relative bounds.
        assert 2700 < total < 3300
        for det in sense(w, RIG, params, 0.0):
            assert det.truth_link is None


class TestThrottle:
    def _det(self, t):
        return Detection(t_captured_s=t, t_available_s=t, obs=None,
                         species_label="x", truth_link=None,
                         est_position_cam=point3(0, 0, 1),
                         est_position_world=point3(0, 0, 1))

    def test_budget_within_window(self):
        ps = PerceptionState()
        params = PerceptionParams(throughput_cap_per_s=10.0)
        log = []
        kept = throttle(ps, params, [self._det(0.0)] * 15, 0.0, log)
        assert len(kept) == 10
        assert log[-1] == {"t": 0.0, "kind": "detections_dropped", "n": 5}
        # Window still saturated a third of a second later.
        assert throttle(ps, params, [self._det(0.3)] * 4, 0.3, log) == []

    def test_window_slides(self):
        ps = PerceptionState()
        params = PerceptionParams(throughput_cap_per_s=10.0)
        assert len(throttle(ps, params, [self._det(0.0)] * 10, 0.0)) == 10
        assert len(throttle(ps, params, [self._det(1.0)] * 10, 1.0)) == 10

    def test_drop_newest_keeps_order(self):
        ps = PerceptionState()
        params = PerceptionParams(throughput_cap_per_s=3.0)
        dets = [self._det(float(i)) for i in range(5)]
        kept = throttle(ps, params, dets, 0.0)
        assert kept == dets[:3]


class TestTrackUpdate:
    def _det(self, x, t, truth=0):
        return Detection(t_captured_s=t, t_available_s=t, obs=None,
                         species_label="cabbage_caterpillar", truth_link=truth,
                         est_position_cam=point3(x, 0, 1),
                         est_position_world=point3(x, 0, 1))

    def test_open_and_refresh(self):
        ps = PerceptionState()
        params = PerceptionParams()
        track_update(ps, params, [self._det(0.0, 0.0)], 0.0)
        assert len(ps.tracks) == 1
        tr = ps.tracks[0]
        assert tr.state == "pending"
        # 5 mm shift sits inside the 10 mm gate: refresh, not a new track.
        track_update(ps, params, [self._det(0.005, 0.4)], 0.4)
        assert len(ps.tracks) == 1
        assert tr.est_world[0] == pytest.approx(0.005)
        assert tr.t_last_seen == 0.4

    def test_outside_gate_opens_new_track(self):
        ps = PerceptionState()
        params = PerceptionParams()
        track_update(ps, params, [self._det(0.0, 0.0)], 0.0)
        track_update(ps, params, [self._det(0.02, 0.4)], 0.4)
        assert len(ps.tracks) == 2

    def test_one_to_one_assignment(self):
        # Two detections near one track: the closer one refreshes it, the
        # other opens its own track instead of being swallowed.
        ps = PerceptionState()
        params = PerceptionParams()
        track_update(ps, params, [self._det(0.0, 0.0)], 0.0)
        track_update(ps, params,
                     [self._det(0.006, 0.4, truth=1), self._det(0.002, 0.4)],
                     0.4)
        assert len(ps.tracks) == 2
        assert ps.tracks[0].est_world[0] == pytest.approx(0.002)
        assert ps.tracks[1].truth_link == 1

    def test_expiry_after_silence(self):
        ps = PerceptionState()
        params = PerceptionParams()  # lost after 3 revisit periods = 1 s
        track_update(ps, params, [self._det(0.0, 0.0)], 0.0)
        track_update(ps, params, [], 0.9)
        assert ps.tracks[0].state == "pending"
        track_update(ps, params, [], 1.1)
        assert ps.tracks[0].state == "lost"
