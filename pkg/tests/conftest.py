import numpy as np
import pytest

from aerosurrogate import preprocess, simgen
from aerosurrogate.core import Config, EngineParams


@pytest.fixture(scope="session")
def engine():
    return EngineParams()


@pytest.fixture(scope="session")
def polar():
    return simgen.GroundTruthPolar()


def simulate_flights(n, seed, engine, polar, **settings):
    st = simgen.SimulationSettings(**settings)
    frames, traces = [], []
    for i in range(n):
        prof = simgen.random_profile(np.random.default_rng([seed, i]), f"S{seed}F{i}", st)
        f, t = simgen.generate(polar, prof, engine, seed=seed * 1000 + i)
        frames.append(f)
        traces.append(t)
    return frames, traces


def truth_for(dataset, traces_by_id, key):
    return np.array([traces_by_id[f].at([t])[key][0] for f, t in zip(dataset["flight_id"], dataset["time_s"])])


@pytest.fixture(scope="session")
def sim_data(engine, polar):
    """Small cruise dataset with known ground truth: (dataset, traces by flight id)."""
    frames, traces = simulate_flights(6, 7, engine, polar, cruise_s=(1500.0, 2400.0), climb=False)
    ds, _ = preprocess.preprocess_flights(frames, Config(), "cd")
    return ds, {f.flight_id: t for f, t in zip(frames, traces)}


# acceptance criteria register their outcome here; printed after the run
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def record(number: int, name: str, ok: bool, detail: str = "") -> bool:
    ACCEPTANCE[number] = (name, bool(ok), detail)
    print(f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return bool(ok)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} [{'PASS' if ok else 'FAIL'}] {name}: {detail}")
