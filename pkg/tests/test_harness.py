import io

import numpy as np
import pytest

from pestlaser.config import default_config
from pestlaser.errors import EmptyResults, EmptyScenario, ValidationError
from pestlaser.harness import (
    CSV_HEADER,
    TrialResult,
    build_perception,
    build_world_config,
    derive_seed,
    dump_event_log,
    emit_chart,
    emit_csv,
    format_csv,
    run_trial,
    score_event_log,
    summarize,
    sweep_distance,
    sweep_speed,
)


def small_cfg(overrides=None):
    base = {
        ("sim", "duration_s"): 5.0,
        ("species.cabbage_caterpillar", "count"): 20,
        ("sweep", "distances_m"): [0.5, 1.0],
        ("sweep", "distance_trials"): 2,
        ("sweep", "speeds_mm_s"): [0.0, 100.0],
        ("sweep", "speed_trials"): 2,
        ("sweep", "speed_duration_s"): 3.0,
        ("sweep", "speed_pest_count"): 40,
    }
    base.update(overrides or {})
    return default_config().with_overrides(base)


class TestDeriveSeed:
    def test_stable(self):
        assert derive_seed(0, 0, 0) == derive_seed(0, 0, 0)

    def test_distinct_across_grid(self):
        seeds = {derive_seed(0, p, t) for p in range(10) for t in range(30)}
        assert len(seeds) == 300

    def test_base_seed_matters(self):
        assert derive_seed(0, 0, 0) != derive_seed(1, 0, 0)


class TestBuilders:
    def test_auto_arena_scales_with_distance(self):
        near = build_world_config(small_cfg())
        far = build_world_config(small_cfg({("arena", "crop_distance_m"): 2.0}))
        assert far.arena_w_m == pytest.approx(2.0 * near.arena_w_m)
        # Default 0.95 margin of a 400 px / 500 px-focal footprint at 1 m.
        assert near.arena_w_m == pytest.approx(0.95 * 0.8)

    def test_auto_arena_widens_for_moving_rail(self):
        still = build_world_config(small_cfg())
        moving = build_world_config(small_cfg({("rail", "speed_mm_s"): 100.0}))
        assert moving.arena_w_m == pytest.approx(still.arena_w_m + 0.6)
        assert moving.arena_cx_m == pytest.approx(0.3)

    def test_fp_rate_spreads_per_trial_budget(self):
        # 20 caterpillars at 10 phantom reports per 100 pests over 5 s.
        params = build_perception(small_cfg())
        assert params.fp_rate_per_s == pytest.approx(20 * 0.10 / 5.0)


class TestRunTrial:
    def test_deterministic(self):
        cfg = small_cfg()
        a = run_trial(cfg, 123)
        b = run_trial(cfg, 123)
        assert (a.detected_true, a.detected_false, a.neutralized) == \
            (b.detected_true, b.detected_false, b.neutralized)

    def test_scores_consistent(self):
        r = run_trial(small_cfg(), 7)
        assert r.n_pests == 20
        assert 0 <= r.neutralized <= r.n_pests
        assert r.efficiency == pytest.approx(r.neutralized / r.n_pests)
        assert r.neutralized_per_s == pytest.approx(r.neutralized / 5.0)
        assert 0 <= r.detected_true <= r.n_pests

    def test_empty_scenario_rejected(self):
        cfg = small_cfg({("species.cabbage_caterpillar", "count"): 0})
        with pytest.raises(EmptyScenario):
            run_trial(cfg, 0)


class TestSweeps:
    def test_distance_grid_shape(self):
        res = sweep_distance(small_cfg())
        assert [(r.point, r.trial) for r in res] == \
            [(0.5, 0), (0.5, 1), (1.0, 0), (1.0, 1)]

    def test_speed_grid_shape(self):
        res = sweep_speed(small_cfg())
        assert [(r.point, r.trial) for r in res] == \
            [(0.0, 0), (0.0, 1), (100.0, 0), (100.0, 1)]
        assert all(r.n_pests == 40 for r in res)

    def test_parallel_results_identical(self):
        cfg = small_cfg()
        assert format_csv(sweep_distance(cfg, jobs=1)) == \
            format_csv(sweep_distance(cfg, jobs=4))

    def test_sweep_seeds_disjoint(self):
        cfg = small_cfg()
        d = {r.seed for r in sweep_distance(cfg)}
        s = {r.seed for r in sweep_speed(cfg)}
        assert not d & s


class TestSummarize:
    def _fake(self, point, vals):
        return [TrialResult(point=point, trial=i, seed=i, n_pests=10,
                            detected_true=8, detected_false=0,
                            neutralized=int(v * 10), efficiency=v,
                            neutralized_per_s=v) for i, v in enumerate(vals)]

    def test_stats(self):
        rows = summarize(self._fake(1.0, [0.4, 0.6]))
        assert rows[0]["mean"] == pytest.approx(0.5)
        assert rows[0]["sd"] == pytest.approx(np.std([0.4, 0.6], ddof=1))
        assert rows[0]["min"] == 0.4 and rows[0]["max"] == 0.6

    def test_empty_rejected(self):
        with pytest.raises(EmptyResults):
            summarize([])


class TestOutputs:
    def test_csv_header_and_shape(self):
        res = self_results = sweep_distance(small_cfg())
        text = format_csv(res)
        lines = text.strip().split("\n")
        assert lines[0] == CSV_HEADER
        assert len(lines) == 1 + len(self_results)
        assert all(len(l.split(",")) == 9 for l in lines[1:])

    def test_emit_csv_stream(self):
        buf = io.StringIO()
        emit_csv(sweep_distance(small_cfg()), buf)
        assert buf.getvalue().startswith(CSV_HEADER)

    def test_chart_svg(self, tmp_path):
        res = sweep_distance(small_cfg())
        out = tmp_path / "chart.svg"
        emit_chart(summarize(res), str(out), xlabel="distance (m)")
        assert out.read_text().lstrip().startswith("<?xml")

    def test_event_log_round_trip(self, tmp_path):
        r = run_trial(small_cfg(), 11, keep_log=True)
        path = tmp_path / "events.ndjson"
        dump_event_log(r, str(path))
        stats = score_event_log(str(path))
        assert stats["n_pests"] == r.n_pests
        assert stats["detected_true"] == r.detected_true
        assert stats["detected_false"] == r.detected_false
        assert stats["neutralized"] == r.neutralized
        assert stats["efficiency"] == pytest.approx(r.efficiency)


def test_invalid_override_propagates():
    with pytest.raises(ValidationError):
        small_cfg({("laser", "power_w"): 99.0})
