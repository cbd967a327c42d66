import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aerosurrogate.core import (
    Config, ConfigError, Dataset, EngineParams, FlightFrame, PipelineConfig, PiecewiseLinear,
    load_config, read_dataset_csv, read_frame_csv, save_config, validate_frame, write_dataset_csv,
    write_frame_csv,
)


def make_frame(n=20, **over):
    t = np.arange(n, dtype=float)
    kw = dict(time=t, altitude=np.full(n, 10000.0), tas=np.full(n, 230.0), mach=np.full(n, 0.78),
              alpha=np.full(n, 0.04), gamma=np.zeros(n), mass=np.linspace(65000, 64990, n),
              fuel_flow=np.full(n, 0.7), sat=np.full(n, 223.15), rho=np.full(n, 0.41),
              heading=np.full(n, 1.0), wind=np.full(n, 10.0), flight_id="X")
    kw.update(over)
    return FlightFrame(**kw)


def test_valid_frame_has_no_violations():
    assert validate_frame(make_frame()) == []


def test_zero_airspeed_flagged_at_index():
    tas = np.full(20, 230.0)
    tas[7] = 0.0
    v = validate_frame(make_frame(tas=tas))
    assert [(x.index, x.field) for x in v] == [(7, "tas")]


def test_time_step_jump_flagged():
    t = np.arange(20, dtype=float)
    t[10:] += 1.0  # one 2 s step
    v = validate_frame(make_frame(time=t))
    assert len(v) == 1 and v[0].field == "time" and v[0].index == 10


def test_invalid_rows_are_not_checked():
    tas = np.full(20, 230.0)
    tas[3] = np.nan
    valid = np.ones(20, bool)
    valid[3] = False
    assert validate_frame(make_frame(tas=tas, valid=valid)) == []


def test_mach_outside_unit_interval():
    m = np.full(20, 0.78)
    m[2] = 1.0
    assert [(x.index, x.field) for x in validate_frame(make_frame(mach=m))] == [(2, "mach")]


def test_validate_is_pure():
    f = make_frame(tas=np.r_[0.0, np.full(19, 230.0)])
    assert validate_frame(f) == validate_frame(f)


def test_frame_arrays_are_read_only():
    f = make_frame()
    with pytest.raises(ValueError):
        f.tas[0] = 1.0


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False, allow_subnormal=True), min_size=5, max_size=30))
def test_frame_csv_round_trip_is_bit_exact(tmp_path_factory, vals):
    n = len(vals)
    v = np.array(vals)
    valid = np.ones(n, bool)
    valid[0] = False
    f = make_frame(n, altitude=v, wind=v[::-1].copy(), valid=valid)
    p = tmp_path_factory.mktemp("rt") / "f.csv"
    write_frame_csv(f, p)
    assert read_frame_csv(p).equals(f)


def _dataset(n, rng):
    cols = {c: rng.normal(size=n) * 10.0 ** rng.integers(-8, 8) for c in (
        "time_s", "rho", "tas", "alpha", "fuel_flow", "sat", "altitude", "mach", "mass", "gamma",
        "tas_rate", "gamma_rate", "cd", "cl")}
    cols["flight_id"] = np.array([f"F{i % 3}" for i in range(n)], dtype=object)
    cols["interval_id"] = np.arange(n) % 4
    return Dataset(cols)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 40), st.integers(0, 2**32 - 1))
def test_dataset_csv_round_trip_is_bit_exact(tmp_path_factory, n, seed):
    ds = _dataset(n, np.random.default_rng(seed))
    p = tmp_path_factory.mktemp("ds") / "d.csv"
    write_dataset_csv(ds, p)
    assert read_dataset_csv(p).equals(ds)


def test_dataset_target_selection():
    ds = _dataset(5, np.random.default_rng(0))
    assert np.array_equal(ds.y, ds["cd"])
    assert np.array_equal(ds.with_target("cl").y, ds["cl"])
    assert ds.X.shape == (5, 2)
    with pytest.raises(ValueError):
        Dataset(ds.columns, "cm")


def test_piecewise_continuity_of_shipped_params():
    p = EngineParams()
    for f in (p.a1, p.a2, p.b1, p.b2):
        for b in f.breakpoints[1:-1]:
            left = f(np.nextafter(b, -np.inf))
            assert left == pytest.approx(f(b), rel=1e-12)


def test_piecewise_out_of_domain():
    f = PiecewiseLinear.through((0.0, 1000.0), (1.0, 2.0))
    assert f(500.0) == pytest.approx(1.5)
    assert f(1000.0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        f(1000.1)


def test_pipeline_config_validation():
    with pytest.raises(ConfigError):
        PipelineConfig(altitude_std_max=0.0)
    with pytest.raises(ConfigError):
        PipelineConfig(split_fractions=(0.5, 0.2, 0.2))
    with pytest.raises(ConfigError):
        PipelineConfig(phase="descent")
    assert PipelineConfig().bounds_available
    assert not Config().with_phase("climb").pipeline.bounds_available


def test_config_json_round_trip(tmp_path):
    cfg = Config(PipelineConfig(altitude_std_max=3.0, split_fractions=[0.6, 0.3, 0.1]), EngineParams(c=2e-7),
                 {"bounds": {"cd": {"r": 0.0}}})
    p = tmp_path / "c.json"
    save_config(cfg, p)
    back = load_config(p)
    assert back.digest() == cfg.digest()
    assert back.pipeline.altitude_std_max == 3.0
    assert back.engine.c == 2e-7
    assert json.loads(p.read_text())["bounds"] == {"cd": {"r": 0.0}}


def test_config_digest_changes_with_content():
    assert Config().digest() != Config(PipelineConfig(seed=1)).digest()
