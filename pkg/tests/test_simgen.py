import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aerosurrogate import preprocess, simgen
from aerosurrogate.core import Config, PipelineConfig


class TestPolar:
    def test_drag_polar_example(self):
        p = simgen.GroundTruthPolar(cd0=0.02, induced_k=0.05)
        assert p.cd_from_cl(0.5, 0.6) == pytest.approx(0.0325, rel=1e-14)

    def test_no_induced_drag(self):
        p = simgen.GroundTruthPolar(induced_k=0.0)
        cd, _ = simgen.oracle_eval(p, 0.05, 0.6)
        assert cd == p.cd0

    def test_zero_lift_angle(self, polar):
        cd, cl = simgen.oracle_eval(polar, polar.zero_lift_alpha, 0.78)
        assert cl == 0.0

    def test_out_of_range(self, polar):
        with pytest.raises(ValueError):
            simgen.oracle_eval(polar, 0.5, 0.78)
        with pytest.raises(ValueError):
            simgen.oracle_eval(polar, 0.02, 0.95)

    @settings(max_examples=100)
    @given(st.floats(-0.1, 0.249), st.floats(1e-4, 1e-3), st.floats(0.2, 0.9))
    def test_lift_increasing_drag_positive(self, a, da, m):
        p = simgen.GroundTruthPolar()
        cd0, cl0 = simgen.oracle_eval(p, a, m)
        _, cl1 = simgen.oracle_eval(p, min(a + da, 0.25), m)
        assert cl1 > cl0 and cd0 > 0


class TestGenerate:
    def test_force_balance_exact(self, engine, polar):
        prof = simgen.climb_then_cruise(cruise_s=600.0, mach_amplitude=0.005, csr_error_level=0.0368)
        _, tr = simgen.generate(polar, prof, engine, seed=1)
        r1, r2 = simgen.force_residuals(tr, engine)
        assert r1.max() < 1e-9 and r2.max() < 1e-9

    def test_mass_decreasing(self, engine, polar):
        f, tr = simgen.generate(polar, simgen.level_cruise(600), engine)
        assert np.all(tr.fuel_flow > 0)
        assert np.all(np.diff(tr.mass) < 0)

    def test_steady_lift_matches_weight(self, engine, polar):
        _, tr = simgen.generate(polar, simgen.level_cruise(300), engine)
        qs = 0.5 * tr.rho * tr.tas ** 2 * engine.wing_area
        cl_weight = tr.mass * engine.g / qs
        corr = np.sin(tr.alpha) * tr.thrust / (qs * tr.cl)
        assert np.all(np.abs(cl_weight - tr.cl) / tr.cl <= corr * (1 + 1e-9) + 1e-12)
        assert np.all(np.abs(cl_weight - tr.cl) / tr.cl < 5e-3)

    def test_csr_error_level(self):
        d = simgen.csr_error_process(200000, 3.68e-2, 5.0, np.random.default_rng(0))
        assert abs(np.mean(np.abs(d)) - 3.68e-2) / 3.68e-2 < 0.05
        assert abs(np.mean(d)) < 1e-12

    def test_long_run_error_level(self, engine, polar):
        _, tr = simgen.generate(polar, simgen.level_cruise(7200, quiet=False), engine, seed=9)
        assert np.mean(np.abs(tr.csr_true / tr.csr_model - 1)) == pytest.approx(3.68e-2, rel=0.05)

    def test_mach_range_for_typical_profiles(self, engine, polar):
        rng = np.random.default_rng(0)
        mach = []
        st_ = simgen.SimulationSettings(climb=False, cruise_s=(1800.0, 1800.0))
        for i in range(5):
            f, _ = simgen.generate(polar, simgen.random_profile(rng, f"P{i}", st_), engine, seed=i)
            mach.append(f.mach)
        mach = np.concatenate(mach)
        assert np.mean((mach >= 0.77) & (mach <= 0.80)) >= 0.9
        assert mach.min() >= 0.70 and mach.max() <= 0.85

    def test_coefficient_scale(self, sim_data):
        ds, traces = sim_data
        assert 0.02 < np.mean(ds["cd"]) < 0.05
        assert 0.3 < np.mean(ds["cl"]) < 0.7

    def test_deterministic(self, engine, polar):
        prof = simgen.level_cruise(300, quiet=False)
        a, _ = simgen.generate(polar, prof, engine, seed=3)
        b, _ = simgen.generate(polar, prof, engine, seed=3)
        c, _ = simgen.generate(polar, prof, engine, seed=4)
        assert a.equals(b) and not a.equals(c)

    def test_trim_failure_reports_time(self, engine, polar):
        prof = simgen.level_cruise(100, initial_mass_kg=400000.0)
        with pytest.raises(simgen.SimulationError, match="t=0"):
            simgen.generate(polar, prof, engine)

    def test_profile_rejects_bad_mach(self):
        with pytest.raises(ValueError):
            simgen.level_cruise(100, mach=0.95)


class TestDisturbances:
    def _base(self, engine, polar):
        return simgen.generate(polar, simgen.level_cruise(1200), engine)[0]

    def test_empty_script_identity(self, engine, polar):
        f = self._base(engine, polar)
        assert simgen.inject_disturbance(f, []) is f

    def test_step_monotone_ramp(self, engine, polar):
        f = simgen.inject_disturbance(self._base(engine, polar), [simgen.ClimbStep(300.0, 120.0)])
        seg = f.altitude[300:421]
        assert np.all(np.diff(seg) >= 0)
        assert seg[-1] - seg[0] == pytest.approx(609.6, rel=1e-9)

    def test_turn_heading_spread(self, engine, polar):
        f = simgen.inject_disturbance(self._base(engine, polar), [simgen.HeadingTurn(500.0, 20.0)])
        assert np.std(f.heading[500:521]) >= 10 * PipelineConfig().heading_std_max

    def test_gust_returns_to_baseline(self, engine, polar):
        base = self._base(engine, polar)
        f = simgen.inject_disturbance(base, [simgen.WindGust(500.0, 40.0)])
        assert f.wind[520] > base.wind[520] + 9
        assert f.wind[600] == base.wind[600]

    def test_overlap_rejected(self, engine, polar):
        with pytest.raises(ValueError, match="overlapping"):
            simgen.inject_disturbance(self._base(engine, polar),
                                      [simgen.ClimbStep(300.0, 120.0), simgen.HeadingTurn(400.0, 20.0)])

    def test_outside_frame_rejected(self, engine, polar):
        with pytest.raises(ValueError):
            simgen.inject_disturbance(self._base(engine, polar), [simgen.WindGust(1190.0, 40.0)])

    def test_undisturbed_flight_single_interval(self, engine, polar):
        f, _ = simgen.generate(polar, simgen.level_cruise(1800, quiet=False), engine, seed=8)
        _, rep = preprocess.preprocess_frame(f, Config())
        assert len(rep.intervals) == 1


class TestFiles:
    def test_raw_round_trip(self, tmp_path, engine, polar):
        f, tr = simgen.generate(polar, simgen.level_cruise(120, quiet=False), engine, seed=1)
        simgen.write_raw_csv(f, tmp_path / "f.csv")
        back = preprocess.to_si(preprocess.read_raw_csv(tmp_path / "f.csv"), f.flight_id)
        for name in ("altitude", "tas", "mach", "alpha", "gamma", "mass", "fuel_flow", "sat", "wind"):
            assert np.allclose(getattr(back, name), getattr(f, name), rtol=1e-12, atol=1e-9), name
        simgen.write_truth_csv(tr, tmp_path / "t.csv")
        truth = simgen.read_truth_csv(tmp_path / "t.csv")
        assert np.array_equal(truth["cd_true"], tr.cd)
        assert tuple(truth) == simgen.TRUTH_COLUMNS
