import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multiscale_discovery.dynamics import make_system, simulate
from multiscale_discovery.havok import (
    HankelConfig,
    HankelPair,
    HavokModel,
    build_hankel,
    fit_dmd,
    fit_havok,
    hankel_indices,
    one_step_residual,
    predict,
    reconstruct,
    stabilize,
    svd_mode_report,
)
from multiscale_discovery.timeseries import TimeSeries


def tone_series(freqs, amps=None, phases=None, dt=1 / 31, m=200):
    t = np.arange(m) * dt
    amps = np.ones(len(freqs)) if amps is None else amps
    phases = np.zeros(len(freqs)) if phases is None else phases
    x = sum(a * np.cos(2 * np.pi * f * t + p) for f, a, p in zip(freqs, amps, phases))
    return TimeSeries(0.0, dt, x)


def textbook_hankel(x, q):
    """Shift-stacked matrices written out element by element."""
    p = len(x) - q
    H = np.empty((q, p))
    Hs = np.empty((q, p))
    for i in range(q):
        for j in range(p):
            H[i, j] = x[i + j]
            Hs[i, j] = x[i + j + 1]
    return H, Hs


# ----------------------------------------------------------------- Hankel construction


def test_small_hankel_example():
    pair = build_hankel(TimeSeries(0, 1, np.arange(5.0)), HankelConfig(3, 1.0))
    np.testing.assert_array_equal(pair.H, [[0, 1], [1, 2], [2, 3]])
    np.testing.assert_array_equal(pair.H_shift, [[1, 2], [2, 3], [3, 4]])


def test_spaced_hankel_example():
    x = np.arange(20.0) * 10
    pair = build_hankel(TimeSeries(0, 1, x), HankelConfig(2, 1.0, d=3, c=2))
    np.testing.assert_array_equal(pair.H[:, :3], [[0, 20, 40], [30, 50, 70]])
    np.testing.assert_array_equal(pair.H_shift, pair.H + 10)
    assert pair.p == (20 - 2 - 3) // 2 + 1


@given(m=st.integers(4, 60), q=st.integers(2, 10), seed=st.integers(0, 2**32 - 1))
def test_reduces_to_textbook_construction(m, q, seed):
    if m < q + 1:
        return
    x = np.random.default_rng(seed).normal(size=m)
    pair = build_hankel(TimeSeries(0, 0.1, x), HankelConfig(q, 0.1))
    H, Hs = textbook_hankel(x, q)
    np.testing.assert_array_equal(pair.H, H)
    np.testing.assert_array_equal(pair.H_shift, Hs)


@given(q=st.integers(2, 6), d=st.integers(1, 5), c=st.integers(1, 5), m=st.integers(30, 80))
def test_shift_advances_every_entry_by_one_step(q, d, c, m):
    cfg = HankelConfig(q, 0.5, d, c)
    if cfg.max_columns(m) < 1:
        return
    x = np.arange(m, dtype=float) ** 1.5
    pair = build_hankel(TimeSeries(0, 0.5, x), cfg)
    idx = hankel_indices(cfg, pair.p)
    np.testing.assert_array_equal(pair.H, x[idx])
    np.testing.assert_array_equal(pair.H_shift, x[idx + 1])
    assert cfg.samples_needed(pair.p) <= m < cfg.samples_needed(pair.p + 1)
    assert cfg.delay_duration == (q - 1) * d * 0.5


def test_multivariate_blocks():
    vals = np.column_stack([np.arange(6.0), 100 + np.arange(6.0)])
    pair = build_hankel(TimeSeries(0, 1, vals), HankelConfig(2, 1.0))
    np.testing.assert_array_equal(pair.H[:, 0], [0, 100, 1, 101])
    assert pair.H.shape == (4, 4)


def test_constant_series_has_rank_one():
    pair = build_hankel(TimeSeries(0, 1, np.full(50, 3.0)), HankelConfig(8, 1.0))
    assert np.linalg.matrix_rank(pair.H) == 1
    sigma, _ = svd_mode_report(pair, 3)
    np.testing.assert_allclose(sigma, [1, 0, 0], atol=1e-14)


@pytest.mark.parametrize(
    "kw", [{"q": 1, "dt": 1.0}, {"q": 3, "dt": 0.0}, {"q": 3, "dt": 1.0, "d": 0}, {"q": 3, "dt": 1.0, "c": 0}]
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        HankelConfig(**kw)


def test_build_errors():
    with pytest.raises(ValueError):
        build_hankel(TimeSeries(0, 1, np.arange(4.0)), HankelConfig(4, 1.0))
    with pytest.raises(ValueError):
        build_hankel(TimeSeries(0, 1, np.arange(40.0)), HankelConfig(4, 0.5))
    with pytest.raises(ValueError):
        build_hankel(TimeSeries(0, 1, np.arange(40.0)), HankelConfig(4, 1.0, n_columns=100))


# ----------------------------------------------------------------- DMD


def test_pure_tone_is_exact():
    ts = tone_series([1.0], m=5 * 31 + 1)
    model = fit_havok(ts, HankelConfig(32, ts.dt), 2)
    assert HankelConfig(32, ts.dt).delay_duration == pytest.approx(1.0)
    np.testing.assert_allclose(sorted(model.omegas.imag), [-2 * np.pi, 2 * np.pi], rtol=1e-6)
    np.testing.assert_allclose(reconstruct(model, ts)[:, 0], ts.values[:, 0], atol=1e-6)
    t = np.linspace(0, 1, 17)
    np.testing.assert_allclose(predict(model, t + 1.0), predict(model, t), atol=1e-6)


def test_two_tones():
    from multiscale_discovery.multiscale import dominant_frequency

    ts = tone_series([1.0, 2.7], amps=[1.0, 0.4], dt=1 / 60, m=1200)
    pair = build_hankel(ts, HankelConfig(40, ts.dt))
    omegas = np.sort(fit_dmd(pair, 4).omegas.imag)
    np.testing.assert_allclose(omegas[2:], [2 * np.pi, 2 * np.pi * 2.7], rtol=1e-6)
    assert dominant_frequency(ts.values, ts.dt) == pytest.approx(2 * np.pi, rel=1e-3)
    only = fit_dmd(pair, 2)
    assert np.abs(only.omegas.imag).max() == pytest.approx(2 * np.pi, rel=0.05)


def test_linear_system_eigenvalues():
    rng = np.random.default_rng(4)
    blocks = []
    for radius, angle in [(0.99, 0.3), (0.97, 1.1)]:
        c, s = np.cos(angle), np.sin(angle)
        blocks.append(radius * np.array([[c, -s], [s, c]]))
    A0 = np.zeros((5, 5))
    A0[:2, :2], A0[2:4, 2:4], A0[4, 4] = blocks[0], blocks[1], 0.95
    P = rng.normal(size=(5, 5))
    A = P @ A0 @ np.linalg.inv(P)
    x = [rng.normal(size=5)]
    for _ in range(60):
        x.append(A @ x[-1])
    ts = TimeSeries(0, 0.1, np.array(x))
    model = fit_dmd(build_hankel(ts, HankelConfig(2, 0.1)), 5)
    got = np.sort_complex(model.eigenvalues)
    want = np.sort_complex(np.linalg.eigvals(A))
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-8)


def test_zero_singular_value_rejected():
    pair = build_hankel(TimeSeries(0, 1, np.full(40, 2.0)), HankelConfig(5, 1.0))
    with pytest.raises(ValueError, match="reduce the rank"):
        fit_dmd(pair, 2)
    with pytest.raises(ValueError):
        fit_dmd(pair, 99)


def test_zero_eigenvalue_modes_dropped():
    cfg = HankelConfig(2, 1.0)
    pair = HankelPair(np.eye(2), np.diag([0.5, 0.0]), cfg, 1, 0.0)
    with pytest.warns(RuntimeWarning, match="zero eigenvalue"):
        model = fit_dmd(pair, 2)
    assert model.rank == 1
    assert model.eigenvalues[0] == pytest.approx(0.5)


def test_negative_eigenvalue_gives_real_predictions():
    x = (-1.0) ** np.arange(30) * 0.9 ** np.arange(30)
    ts = TimeSeries(0, 0.25, x)
    model = fit_dmd(build_hankel(ts, HankelConfig(2, 0.25)), 1)
    assert model.rank == 2
    with warnings.catch_warnings():
        warnings.simplefilter("error", RuntimeWarning)
        on_grid = predict(model, ts.times)[:, 0]
        predict(model, ts.times + 0.1)
    np.testing.assert_allclose(on_grid, x, atol=1e-12)


def test_first_column_reproduced():
    spec = make_system("vanderpol")
    ts = simulate(spec, rate=127, n_periods=5, substeps=8).column(0)
    pair = build_hankel(ts, HankelConfig(64, ts.dt))
    model = fit_dmd(pair, 20)
    U, S, Vh = np.linalg.svd(pair.H, full_matrices=False)
    at_ref = predict(model, model.t_ref, full_state=True)
    # the first column can only be matched inside the span of the exact modes
    proj = model.modes @ np.linalg.lstsq(model.modes, pair.H[:, 0].astype(complex), rcond=None)[0]
    np.testing.assert_allclose(at_ref, proj.real, atol=1e-9)
    assert np.linalg.norm(at_ref - pair.H[:, 0]) <= 1.5 * np.linalg.norm(S[20:]) + 1e-9


def test_one_step_residual_matches_projection_oracle():
    ts = simulate(make_system("vanderpol"), rate=127, n_periods=5, substeps=8).column(0)
    pair = build_hankel(ts, HankelConfig(64, ts.dt))
    for r in (4, 10, 20):
        model = fit_dmd(pair, r)
        Phi = model.modes
        advanced = Phi @ np.diag(model.eigenvalues) @ np.linalg.pinv(Phi) @ pair.H
        oracle = np.linalg.norm(pair.H_shift - advanced) / np.linalg.norm(pair.H_shift)
        assert abs(one_step_residual(model, pair) - oracle) < 1e-8


# ----------------------------------------------------------------- stabilisation and prediction


def _model(omegas, amps=None):
    omegas = np.asarray(omegas, dtype=complex)
    amps = np.ones(len(omegas), complex) if amps is None else np.asarray(amps, complex)
    return HavokModel(omegas, np.ones((3, len(omegas)), complex), amps, HankelConfig(3, 0.1), 0.0)


def test_stabilize_definition_and_idempotence():
    model = _model([0.01 + 3j, 0.01 - 3j])
    once = stabilize(model)
    np.testing.assert_array_equal(once.omegas, [3j, -3j])
    np.testing.assert_array_equal(stabilize(once).omegas, once.omegas)
    assert once.modes is model.modes and once.amplitudes is model.amplitudes


def test_stabilized_predictions_are_bounded():
    ts = simulate(make_system("vanderpol"), rate=127, n_periods=5, substeps=8).column(0)
    model = fit_havok(ts, HankelConfig(128, ts.dt), 24)
    bound = np.sum(np.abs(model.modes[0]) * np.abs(model.amplitudes))
    far = predict(model, np.linspace(0, 1e6, 20001))
    assert np.abs(far).max() <= bound * (1 + 1e-12)
    assert np.all(model.omegas.real == 0)


def test_predict_shapes():
    model = _model([2j, -2j])
    assert predict(model, 0.3).shape == (1,)
    assert predict(model, [0.1, 0.2]).shape == (2, 1)
    assert predict(model, [0.1, 0.2], full_state=True).shape == (2, 3)
    with pytest.raises(ValueError):
        predict(model, [np.nan])


def test_predict_warns_on_unpaired_spectrum():
    with pytest.warns(RuntimeWarning, match="imaginary residue"):
        predict(_model([2j]), 0.3)


@given(
    seed=st.integers(0, 2**32 - 1),
    n_tones=st.integers(1, 3),
    noise=st.sampled_from([0.0, 1e-3, 0.3]),
    extra=st.integers(0, 5),
)
def test_real_series_give_conjugate_closed_spectrum(seed, n_tones, noise, extra):
    rng = np.random.default_rng(seed)
    freqs = rng.uniform(0.2, 6.0, n_tones)
    ts = tone_series(freqs, rng.uniform(0.5, 2, n_tones), rng.uniform(0, 2 * np.pi, n_tones), dt=1 / 31, m=400)
    values = ts.values[:, 0] + noise * rng.normal(size=ts.m)
    ts = TimeSeries(0.0, ts.dt, values)
    pair = build_hankel(ts, HankelConfig(24, ts.dt))
    r = min(2 * n_tones + extra, 24)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        try:
            model = stabilize(fit_dmd(pair, r))
        except ValueError:
            return  # rank exceeds the numerical rank of a noiseless signal
    w = model.omegas
    scale = max(1.0, np.abs(w).max())
    assert np.abs(np.sort_complex(w) - np.sort_complex(w.conj())).max() <= 1e-8 * scale
    t = rng.uniform(-50, 500, 64)
    full = np.exp(np.outer(t - model.t_ref, w)) * model.amplitudes @ model.modes[:1].T
    assert np.abs(full.imag).max() <= 1e-8 * max(np.abs(full).max(), 1e-300)


# ----------------------------------------------------------------- SVD report and serialisation


def test_pure_tone_has_two_singular_values():
    ts = tone_series([1.0], dt=1 / 50, m=800)
    S = np.linalg.svd(build_hankel(ts, HankelConfig(200, ts.dt)).H, compute_uv=False)
    assert S[2] / S[0] < 1e-10 and S[1] / S[0] > 0.1
    sigma, U = svd_mode_report(build_hankel(ts, HankelConfig(200, ts.dt)), 4)
    assert sigma.sum() == pytest.approx(1.0, abs=1e-9) and U.shape == (200, 4)


def test_short_delays_concentrate_energy():
    ts = simulate(make_system("vanderpol"), rate=127, n_periods=5, substeps=8).column(0)
    e8 = svd_mode_report(build_hankel(ts, HankelConfig(8, ts.dt)), 1)[0][0]
    e64 = svd_mode_report(build_hankel(ts, HankelConfig(64, ts.dt)), 1)[0][0]
    assert e8 > 0.7 and e8 > e64


@given(seed=st.integers(0, 2**32 - 1), r=st.integers(1, 12))
def test_model_json_round_trip_is_bit_exact(seed, r):
    rng = np.random.default_rng(seed)
    ts = TimeSeries(rng.normal(), 0.05, rng.normal(size=(80, 2)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        model = fit_dmd(build_hankel(ts, HankelConfig(6, 0.05, d=2)), r)
    back = HavokModel.from_json(model.to_json())
    for name in ("omegas", "modes", "amplitudes"):
        np.testing.assert_array_equal(getattr(back, name), getattr(model, name))
    assert back.config == model.config and back.t_ref == model.t_ref and back.n_observables == 2
    assert back.to_json() == model.to_json()
