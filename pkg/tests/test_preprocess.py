import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aerosurrogate import preprocess, simgen
from aerosurrogate.core import Config, PipelineConfig, RAW_COLUMNS
from aerosurrogate.preprocess import StableInterval


def raw_rows(n=5, **over):
    base = dict(time_s=np.arange(n), alt_ft=35000, tas_kt=450, mach=0.78, aoa_deg=2.0,
                pitch_deg_or_gamma_deg=0.0, mass_kg=65000, ff_kgph=2400, sat_c=-56.5, heading_deg=90,
                wind_kt=20)
    base.update(over)
    return {c: [str(v) for v in np.broadcast_to(base[c], (n,))] for c in RAW_COLUMNS}


class TestToSi:
    def test_unit_conversions(self):
        f = preprocess.to_si(raw_rows())
        assert f.altitude[0] == pytest.approx(10668.0, abs=1e-9)
        assert f.sat[0] == pytest.approx(216.65, abs=1e-9)
        assert f.tas[0] == pytest.approx(450 * 0.514444, rel=1e-12)
        assert f.fuel_flow[0] == pytest.approx(2400 / 3600, rel=1e-12)
        assert f.alpha[0] == pytest.approx(np.radians(2.0), rel=1e-12)

    def test_zero_airspeed(self):
        assert preprocess.to_si(raw_rows(tas_kt=0)).tas[0] == 0.0

    def test_missing_column(self):
        raw = raw_rows()
        del raw["wind_kt"]
        with pytest.raises(preprocess.SchemaError):
            preprocess.to_si(raw)

    def test_unparsable_cell_reports_row(self):
        raw = raw_rows()
        raw["mach"][3] = "abc"
        with pytest.raises(preprocess.SchemaError, match="row 4"):
            preprocess.to_si(raw)

    def test_empty_cells_flag_rows_invalid(self):
        raw = raw_rows()
        raw["ff_kgph"][2] = ""
        f = preprocess.to_si(raw)
        assert f.valid.tolist() == [True, True, False, True, True]

    def test_heading_unwrapped(self):
        f = preprocess.to_si(raw_rows(n=4, heading_deg=[359.0, 0.0, 1.0, 2.0]))
        assert np.all(np.diff(f.heading) > 0)


def iv(length, start=100.0):
    return StableInterval("F", start, start + length, "cruise", 0, 0, 0, 0)


class TestSampling:
    def test_counts(self):
        assert preprocess.sample_times(iv(35.0), 10.0).tolist() == [100.0, 110.0, 120.0, 130.0]
        assert preprocess.sample_times(iv(10.5), 10.0).size == 2
        assert preprocess.sample_times(iv(30.0), 10.0).size == 4

    def test_empty_interval_list(self, engine):
        assert preprocess.sample([], None, engine) == []


class TestSplit:
    def test_sizes(self):
        assert preprocess.split(100).sizes == (70, 20, 10)
        tr, va, te = preprocess.split(164054).sizes
        assert abs(tr - 114838) <= 1 and abs(va - 32811) <= 1 and abs(te - 16405) <= 1

    def test_deterministic_and_partition(self):
        a, b = preprocess.split(57, seed=3), preprocess.split(57, seed=3)
        assert all(np.array_equal(x, y) for x, y in zip((a.train, a.validation, a.test), (b.train, b.validation, b.test)))
        allidx = np.sort(np.concatenate([a.train, a.validation, a.test]))
        assert np.array_equal(allidx, np.arange(57))
        assert not np.array_equal(a.train, preprocess.split(57, seed=4).train)

    def test_errors(self):
        with pytest.raises(ValueError):
            preprocess.split(2)
        with pytest.raises(ValueError):
            preprocess.split(10, (0.5, 0.5, 0.1))

    def test_by_flight_keeps_flights_whole(self, sim_data):
        ds, _ = sim_data
        sp = preprocess.split(ds, seed=1, by_flight=True)
        ids = ds["flight_id"]
        groups = [set(ids[p]) for p in (sp.train, sp.validation, sp.test)]
        assert not (groups[0] & groups[1]) and not (groups[0] & groups[2]) and not (groups[1] & groups[2])

    @settings(max_examples=50)
    @given(st.integers(3, 5000), st.integers(0, 10**6))
    def test_partition_property(self, n, seed):
        sp = preprocess.split(n, seed=seed)
        assert sum(sp.sizes) == n
        assert len(np.unique(np.concatenate([sp.train, sp.validation, sp.test]))) == n


def _sf(profile, engine, polar, seed=0):
    frame, _ = simgen.generate(polar, profile, engine, seed=seed)
    return preprocess.smooth_frame(frame), frame


class TestSegmentation:
    def test_clean_cruise_single_interval(self, engine, polar):
        sf, frame = _sf(simgen.level_cruise(1800, quiet=False), engine, polar)
        ivs = preprocess.segment(sf, PipelineConfig())
        assert len(ivs) == 1
        assert ivs[0].length_s > 1700

    def test_step_climb_excluded(self, engine, polar):
        step = simgen.ClimbStep(900.0, 120.0)
        sf, _ = _sf(simgen.level_cruise(2400, quiet=False, disturbances=(step,)), engine, polar)
        ivs = preprocess.segment(sf, PipelineConfig())
        assert len(ivs) == 2
        assert all(i.end_s <= step.start_s or i.start_s >= step.start_s + step.duration_s for i in ivs)

    def test_turn_splits_interval(self, engine, polar):
        turn = simgen.HeadingTurn(1000.0, 20.0)
        sf, _ = _sf(simgen.level_cruise(2400, quiet=False, disturbances=(turn,)), engine, polar)
        ivs = preprocess.segment(sf, PipelineConfig())
        assert len(ivs) == 2
        assert all(i.end_s <= 1000.0 or i.start_s >= 1020.0 for i in ivs)

    def test_diagnostics_satisfy_thresholds(self, engine, polar):
        cfg = PipelineConfig()
        sf, _ = _sf(simgen.level_cruise(1800, quiet=False, disturbances=(simgen.WindGust(700.0, 40.0),)),
                    engine, polar)
        for i in preprocess.segment(sf, cfg):
            assert i.altitude_std < cfg.altitude_std_max and i.heading_std < cfg.heading_std_max
            assert abs(i.wind_rate_mean) < cfg.wind_rate_mean_max and i.wind_rate_std < cfg.wind_rate_std_max
            assert i.length_s > cfg.min_interval_s

    def test_threshold_monotone(self, engine, polar):
        prof = simgen.random_profile(np.random.default_rng(11), "M", simgen.SimulationSettings(
            cruise_s=(2400.0, 2400.0), climb=False, turn_prob=1.0, gust_prob=1.0, step_climb_prob=1.0))
        sf, _ = _sf(prof, engine, polar)
        base = PipelineConfig()
        cover = []
        for scale in (4.0, 1.0, 0.5, 0.1):
            cfg = PipelineConfig(altitude_std_max=base.altitude_std_max * scale,
                                 heading_std_max=base.heading_std_max * scale,
                                 wind_rate_mean_max=base.wind_rate_mean_max * scale,
                                 wind_rate_std_max=base.wind_rate_std_max * scale)
            cover.append(sum(i.length_s for i in preprocess.segment(sf, cfg)))
        assert all(a >= b for a, b in zip(cover, cover[1:]))

    def test_climb_window(self, engine, polar):
        cfg = PipelineConfig(phase="climb")
        sf, _ = _sf(simgen.climb_then_cruise(noise=simgen.SensorNoise.none()), engine, polar)
        ivs = preprocess.segment_climb(sf, cfg)
        assert len(ivs) == 1
        assert ivs[0].end_s <= 1500.0 + 60.0

    def test_climb_level_off_retained(self, engine, polar):
        cfg = PipelineConfig(phase="climb")
        prof = simgen.climb_then_cruise(level_off=(3048.0, 120.0), noise=simgen.SensorNoise.none())
        sf, _ = _sf(prof, engine, polar)
        ivs = preprocess.segment_climb(sf, cfg)
        t_lo = (3048.0 - 914.4) / (10668.0 - 914.4) * 1500.0
        assert any(i.start_s <= t_lo and i.end_s >= t_lo + 120.0 for i in ivs)

    def test_all_cruise_gives_no_climb(self, engine, polar):
        sf, _ = _sf(simgen.level_cruise(900), engine, polar)
        assert preprocess.segment_climb(sf, PipelineConfig(phase="climb")) == []


class TestPipeline:
    def test_deterministic(self, engine, polar):
        frame, _ = simgen.generate(polar, simgen.level_cruise(900, quiet=False), engine, seed=5)
        a, _ = preprocess.preprocess_flights([frame], Config())
        b, _ = preprocess.preprocess_flights([frame], Config())
        assert a.equals(b)

    def test_lift_positive(self, sim_data):
        ds, _ = sim_data
        assert len(ds) > 100
        assert np.all(ds["cl"] > 0)

    def test_gap_splits_into_runs(self, engine, polar):
        frame, _ = simgen.generate(polar, simgen.level_cruise(1200, quiet=False), engine, seed=2)
        valid = np.ones(len(frame), bool)
        valid[600:605] = False
        obs, rep = preprocess.preprocess_frame(frame.replace(valid=valid), Config())
        assert rep.n_invalid_rows == 5
        assert len(rep.intervals) == 2
        assert all(not (600 <= o.time_s < 605) for o in obs)

    def test_bad_time_grid_reports_error(self, engine, polar):
        frame, _ = simgen.generate(polar, simgen.level_cruise(300), engine, seed=2)
        t = frame.time.copy()
        t[100:] += 0.5
        obs, rep = preprocess.preprocess_frame(frame.replace(time=t), Config())
        assert obs == [] and rep.error is not None
