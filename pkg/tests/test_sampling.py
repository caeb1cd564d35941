import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multiscale_discovery.dynamics import make_system, simulate
from multiscale_discovery.sampling import (
    BurstSchedule,
    extract_training_pairs,
    jittered_burst_schedule,
    n_fine_slots,
    poisson_burst_schedule,
    uniform_schedule,
)
from multiscale_discovery.timeseries import TimeSeries


def assert_valid(s: BurstSchedule):
    starts = s.start_indices
    assert np.all(np.diff(starts) >= s.burst_size)
    assert starts.min(initial=0) >= 0
    assert starts.max(initial=0) <= n_fine_slots(s.span, s.fine_dt) - s.burst_size
    assert len(s.indices()) == s.n_bursts * s.burst_size == s.n_samples


def test_uniform_examples():
    idx = uniform_schedule(2**18, 2**10, 1.0)
    assert len(idx) == 1024 and np.all(np.diff(idx) == 256)
    np.testing.assert_array_equal(uniform_schedule(64, 64, 1.0), np.arange(64))
    assert len(uniform_schedule(2**10, 2**5, 0.85)) == int(np.floor(0.85 * 32)) + 1


def test_uniform_rejects_non_divisible_rates():
    with pytest.raises(ValueError):
        uniform_schedule(1000, 3, 1.0)


def test_jittered_schedule_count_and_layout():
    s = jittered_burst_schedule(2.0, 1 / 4096, 8, 40, rng_seed=5)
    assert s.n_samples == 320
    assert_valid(s)
    edges = (np.arange(41) * n_fine_slots(2.0, 1 / 4096)) // 40
    assert np.all(s.start_indices >= edges[:-1]) and np.all(s.start_indices + 8 <= edges[1:])


def test_non_overlap_over_ten_thousand_seeds():
    fine_dt = 1 / 1024
    for seed in range(10_000):
        k = 1 + seed % 97
        s = jittered_burst_schedule(1.5, fine_dt, 8, k, rng_seed=seed)
        starts = s.start_indices
        assert len(starts) == k
        assert np.all(np.diff(starts) >= 8)
        assert starts[0] >= 0 and starts[-1] <= n_fine_slots(1.5, fine_dt) - 8


def test_single_burst_can_land_anywhere():
    n = n_fine_slots(1.0, 0.01)
    starts = {int(jittered_burst_schedule(1.0, 0.01, 8, 1, rng_seed=s).start_indices[0]) for s in range(3000)}
    assert min(starts) == 0 and max(starts) == n - 8
    assert len(starts) == n - 8 + 1


def test_no_slack_is_deterministic_and_evenly_spaced():
    a = jittered_burst_schedule(0.8, 0.01, 8, 10, rng_seed=1)
    b = jittered_burst_schedule(0.8, 0.01, 8, 10, rng_seed=2)
    np.testing.assert_array_equal(a.start_indices, np.arange(10) * 8)
    np.testing.assert_array_equal(a.start_indices, b.start_indices)


def test_infeasible_packing_rejected():
    with pytest.raises(ValueError):
        jittered_burst_schedule(0.5, 0.01, 8, 10)


@given(seed=st.integers(0, 2**63 - 1))
def test_same_seed_same_schedule(seed):
    a = jittered_burst_schedule(3.0, 1e-3, 8, 30, rng_seed=seed)
    b = jittered_burst_schedule(3.0, 1e-3, 8, 30, rng_seed=seed)
    np.testing.assert_array_equal(a.start_indices, b.start_indices)
    c = poisson_burst_schedule(3.0, 1e-3, 8, 200.0, rng_seed=seed)
    d = poisson_burst_schedule(3.0, 1e-3, 8, 200.0, rng_seed=seed)
    np.testing.assert_array_equal(c.start_indices, d.start_indices)


def test_poisson_mean_burst_count():
    # sparse enough that overlap drops are rare: expected 20 bursts of 8 in 40000 slots
    duration, fine_dt, size, rate = 10.0, 2.5e-4, 8, 16.0
    counts = [poisson_burst_schedule(duration, fine_dt, size, rate, rng_seed=s).n_bursts for s in range(1000)]
    expected = rate / size * duration
    assert abs(np.mean(counts) - expected) < 0.05 * expected


@given(seed=st.integers(0, 2**32 - 1), rate=st.floats(8.0, 4000.0))
def test_poisson_schedules_are_valid(seed, rate):
    assert_valid(poisson_burst_schedule(2.0, 1e-3, 8, rate, rng_seed=seed))


def test_poisson_minimal_budget_gives_about_one_burst():
    counts = [poisson_burst_schedule(1.0, 1e-3, 8, 8.0, rng_seed=s).n_bursts for s in range(500)]
    assert 0.5 < np.mean(counts) < 1.0 and max(counts) >= 1


def test_poisson_rejects_tiny_budget():
    with pytest.raises(ValueError):
        poisson_burst_schedule(1.0, 1e-3, 8, 4.0)


def test_schedule_validation():
    with pytest.raises(ValueError):
        BurstSchedule(8, np.array([0, 4]), 0.01, 1.0)
    with pytest.raises(ValueError):
        BurstSchedule(8, np.array([95]), 0.01, 1.0)


@given(seed=st.integers(0, 2**63 - 1), k=st.integers(1, 50))
def test_schedule_json_round_trip(seed, k):
    s = jittered_burst_schedule(1.0, 1 / 3000, 8, k, rng_seed=seed)
    back = BurstSchedule.from_json(s.to_json())
    np.testing.assert_array_equal(back.start_indices, s.start_indices)
    assert (back.burst_size, back.fine_dt, back.span, back.seed) == (8, s.fine_dt, 1.0, seed)


def test_burst_pairs_have_six_rows_per_burst():
    ts = TimeSeries(0.0, 0.01, np.random.default_rng(0).normal(size=(500, 2)))
    s = jittered_burst_schedule(5.0, 0.01, 8, 12, rng_seed=3)
    X, dX = extract_training_pairs(ts, s)
    assert X.shape == dX.shape == (72, 2)
    first = s.start_indices[0]
    np.testing.assert_array_equal(X[0], ts.values[first + 1])
    np.testing.assert_allclose(dX[0], (ts.values[first + 2] - ts.values[first]) / 0.02)


@pytest.mark.parametrize("stride", [1, 3, 16])
def test_uniform_pairs_on_a_ramp(stride):
    ts = TimeSeries(0.0, 0.125, np.arange(400) * 0.125)
    X, dX = extract_training_pairs(ts, np.arange(0, 400, stride))
    np.testing.assert_allclose(dX, 1.0, rtol=1e-12)
    assert len(X) == len(np.arange(0, 400, stride)) - 2


def test_extraction_errors():
    ts = TimeSeries(0.0, 0.01, np.zeros((100, 1)))
    with pytest.raises(ValueError):
        extract_training_pairs(ts, BurstSchedule(2, np.array([0]), 0.01, 1.0))
    with pytest.raises(ValueError):
        extract_training_pairs(ts, BurstSchedule(8, np.array([0]), 0.02, 1.0))
    with pytest.raises(ValueError):
        extract_training_pairs(ts, np.array([0, 2, 5]))
    with pytest.raises(ValueError):
        extract_training_pairs(ts, np.array([90, 100, 110]))


def test_burst_derivatives_match_lorenz_rhs_on_fine_grid():
    spec = make_system("lorenz")
    x0 = simulate(spec, rate=256, n_periods=1, transient=2).values[-1]
    ts = simulate(spec, x0=x0, rate=2**18, n_periods=0.05, transient=0)
    s = jittered_burst_schedule(ts.m * ts.dt, ts.dt, 8, 50, rng_seed=0)
    X, dX = extract_training_pairs(ts, s)
    exact = spec.rhs(X)
    assert np.abs(dX - exact).max() / np.abs(exact).max() < 1e-6


@pytest.mark.parametrize("rate", [2**6, 2**8, 2**9])
def test_bursts_beat_decimation_at_equal_budget(rate):
    spec = make_system("lorenz")
    fine = 2**12
    ts = simulate(spec, rate=fine, n_periods=1, transient=2)
    idx = uniform_schedule(fine, rate, 1.0)
    Xu, dXu = extract_training_pairs(ts, idx)
    budget = len(idx)
    s = jittered_burst_schedule(spec.period, ts.dt, 8, max(1, budget // 8), rng_seed=1)
    Xb, dXb = extract_training_pairs(ts, s)
    err_u = np.abs(dXu - spec.rhs(Xu)).max()
    err_b = np.abs(dXb - spec.rhs(Xb)).max()
    assert err_b < err_u
