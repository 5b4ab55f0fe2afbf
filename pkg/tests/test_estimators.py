import numpy as np
import pytest

from rfsense.antenna import (
    ArrayGeometry,
    IdealVectorAntenna,
    PolarizationState,
    WaveDirection,
)
from rfsense.channel import (
    ChannelConfig,
    PathParams,
    add_noise,
    synthesize_clean,
)
from rfsense.estimators import (
    CovarianceMatrix,
    Estimate,
    MusicEstimator,
    SageEstimator,
    SearchGrid,
    equalized_pilot_snapshots,
    export_spectrum_csv,
    matched_filter_power,
    music_spectrum,
    noise_subspace,
    pilot_decimate,
    sage_estimate,
    sample_covariance,
    signal_subspace_from_noise,
    stack_snapshots,
)
from rfsense.waveforms import CombConfig, generate_zadoff_chu, map_to_comb

MODEL = IdealVectorAntenna()
SINGLE = ArrayGeometry.single()
POL = PolarizationState()

GRID = SearchGrid(
    azimuth_deg=(20.0, 30.0, 5.0),
    elevation_deg=(90.0, 110.0, 10.0),
    delay_s=(0.0, 100e-9, 50e-9),
)
TRUTH = (25.0, 100.0, 50e-9)


def _scene(truth=TRUTH, n_sc=16, n_sym=2, gain=1.0 + 0.0j, velocity=0.0):
    """Single on-grid path over a comb-2 pilot grid; returns (h, freqs)."""
    comb = CombConfig(comb_size=2, n_symbols=n_sym)
    seq = generate_zadoff_chu(3, 7).samples
    seq = np.concatenate([seq, seq[:1]])  # 8 pilot tones
    grid_tx = map_to_comb(seq, comb, n_sc, n_sym, 15e3)
    cfg = ChannelConfig(carrier_hz=3.5e9, t_symbol_s=1 / 15e3)
    az, el, tau = truth
    path = PathParams(gain, tau, WaveDirection(az, el), velocity)
    clean = synthesize_clean(grid_tx, [path], cfg, MODEL, SINGLE)
    return equalized_pilot_snapshots(clean, grid_tx, grid_tx.occupied_subcarriers)


# ---------------------------------------------------------------------------
# Search grid
# ---------------------------------------------------------------------------


def test_search_grid_axes():
    g = SearchGrid((0.0, 10.0, 5.0), (90.0, 90.0, 1.0), (0.0, 2e-9, 1e-9))
    assert np.allclose(g.azimuth_axis, [0.0, 5.0, 10.0])
    assert np.allclose(g.elevation_axis, [90.0])
    assert np.allclose(g.delay_axis, [0.0, 1e-9, 2e-9])
    assert g.shape == (3, 1, 3)


def test_search_grid_wraps_azimuth_period():
    g = SearchGrid((0.0, 360.0, 1.0), (90.0, 90.0, 1.0), (0.0, 0.0, 1.0))
    assert g.azimuth_axis.size == 360  # 360 deg aliases 0 deg, so it is dropped
    assert g.azimuth_axis[0] == 0.0 and g.azimuth_axis[-1] == 359.0


def test_search_grid_validation():
    with pytest.raises(ValueError):
        SearchGrid((0.0, 10.0, 0.0), (90.0, 90.0, 1.0), (0.0, 0.0, 1.0)).azimuth_axis
    with pytest.raises(ValueError):
        SearchGrid((0.0, 10.0, 1.0), (90.0, 80.0, 1.0), (0.0, 0.0, 1.0)).elevation_axis


def test_search_grid_step_rounding_is_robust():
    # 0.1 deg steps accumulate float error; the axis must still hit the stop.
    g = SearchGrid((0.0, 1.0, 0.1), (90.0, 90.0, 1.0), (0.0, 0.0, 1.0))
    assert g.azimuth_axis.size == 11
    assert g.azimuth_axis[-1] == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# Pilot handling
# ---------------------------------------------------------------------------


def test_pilot_decimate_passthrough_and_subsample():
    occ = np.arange(0, 100, 2)
    out = pilot_decimate(occ, max_joint_dim=600, n_ports=6)
    assert np.array_equal(out, occ)
    out = pilot_decimate(occ, max_joint_dim=60, n_ports=6)  # budget 10
    assert out.size <= 10
    assert out[0] == occ[0] and out[-1] == occ[-1]  # endpoints preserve aperture
    assert np.all(np.diff(out) > 0)
    assert np.all(np.isin(out, occ))
    with pytest.raises(ValueError):
        pilot_decimate(occ, max_joint_dim=11, n_ports=6)


def test_equalized_pilot_snapshots_divides_out_pilots():
    h, freqs = _scene()
    assert h.shape == (6, 8, 2)
    assert np.allclose(freqs, np.arange(0, 16, 2) * 15e3)
    # After equalization every pilot tone carries the same steering sample,
    # so symbol columns are identical for a static path.
    assert np.allclose(h[..., 0], h[..., 1], atol=1e-12)


def test_equalized_pilot_snapshots_rejects_zero_pilot():
    comb = CombConfig(comb_size=2, n_symbols=1)
    seq = np.ones(4, dtype=complex)
    seq[2] = 0.0
    grid_tx = map_to_comb(seq, comb, 8, 1, 15e3)
    data = np.ones((1, 8, 1), dtype=complex)
    with pytest.raises(ValueError):
        equalized_pilot_snapshots(data, grid_tx, np.array([0, 2, 4, 6]))


def test_stack_snapshots_row_major():
    d = np.arange(12, dtype=complex).reshape(2, 3, 2)
    y = stack_snapshots(d)
    assert y.shape == (6, 2)
    assert np.array_equal(y, d.reshape(6, 2))


# ---------------------------------------------------------------------------
# Covariance and subspaces
# ---------------------------------------------------------------------------


def test_sample_covariance_hand_case():
    data = np.array([1.0, 1j]).reshape(2, 1, 1)
    cov = sample_covariance(data)
    assert cov.n_ports == 2 and cov.n_pilots == 1
    assert np.allclose(cov.values, [[1.0, -1j], [1j, 1.0]])
    cov.validate()


def test_sample_covariance_averages_symbols():
    rng = np.random.default_rng(5)
    data = rng.standard_normal((2, 3, 10)) + 1j * rng.standard_normal((2, 3, 10))
    cov = sample_covariance(data)
    y = data.reshape(6, 10)
    ref = (y @ y.conj().T) / 10
    assert np.allclose(cov.values, ref)


def test_covariance_validate_rejects_non_hermitian():
    bad = CovarianceMatrix(np.array([[1.0, 1.0], [0.0, 1.0]], complex), 2, 1)
    with pytest.raises(ValueError):
        bad.validate()


def test_noise_subspace_properties():
    h, _ = _scene()
    cov = sample_covariance(h)
    e_n = noise_subspace(cov, n_sources=1)
    dim = 48
    assert e_n.shape == (dim, dim - 1)
    assert np.allclose(e_n.conj().T @ e_n, np.eye(dim - 1), atol=1e-10)
    # Noiseless single path: the signal vector lies entirely outside E_n.
    y = stack_snapshots(h)[:, :1]
    assert np.linalg.norm(e_n.conj().T @ y) < 1e-8 * np.linalg.norm(y)


def test_noise_subspace_validates_source_count():
    cov = sample_covariance(np.ones((2, 2, 1), dtype=complex))
    with pytest.raises(ValueError):
        noise_subspace(cov, 0)
    with pytest.raises(ValueError):
        noise_subspace(cov, 4)


def test_signal_subspace_complements_noise():
    h, _ = _scene()
    e_n = noise_subspace(sample_covariance(h), 1)
    e_s = signal_subspace_from_noise(e_n)
    dim = e_n.shape[0]
    assert e_s.shape == (dim, 1)
    assert np.allclose(e_s.conj().T @ e_s, np.eye(1), atol=1e-10)
    assert np.linalg.norm(e_s.conj().T @ e_n) < 1e-10
    p_s = e_s @ e_s.conj().T
    p_n = e_n @ e_n.conj().T
    assert np.allclose(p_s + p_n, np.eye(dim), atol=1e-9)


# ---------------------------------------------------------------------------
# MUSIC
# ---------------------------------------------------------------------------


def test_music_noiseless_exact_recovery():
    h, freqs = _scene()
    e_n = noise_subspace(sample_covariance(h), 1)
    spectrum, est = music_spectrum(e_n, GRID, MODEL, SINGLE, freqs, POL)
    assert spectrum.shape == GRID.shape
    assert (est.azimuth_deg, est.elevation_deg, est.delay_s) == TRUTH
    assert est.power > 0


def test_music_svd_and_eig_agree_on_argmax():
    h, freqs = _scene()
    rng = np.random.default_rng(2)
    noisy = add_noise(h, 1e-4, rng)
    m_svd = MusicEstimator(GRID, MODEL, None, POL, solver="svd").fit(noisy, freqs)
    m_eig = MusicEstimator(GRID, MODEL, None, POL, solver="eig").fit(noisy, freqs)
    assert m_svd.estimate_.azimuth_deg == m_eig.estimate_.azimuth_deg
    assert m_svd.estimate_.elevation_deg == m_eig.estimate_.elevation_deg
    assert m_svd.estimate_.delay_s == m_eig.estimate_.delay_s


def test_music_scale_invariance():
    h, freqs = _scene()
    e_n = noise_subspace(sample_covariance(h), 1)
    s1, _ = music_spectrum(e_n, GRID, MODEL, SINGLE, freqs, POL)
    e_n2 = noise_subspace(sample_covariance(5.0 * h), 1)
    s2, _ = music_spectrum(e_n2, GRID, MODEL, SINGLE, freqs, POL)
    assert np.allclose(s1, s2, rtol=1e-6)


def test_music_peak_sharpens_with_less_noise():
    h, freqs = _scene()
    iz = tuple(int(np.flatnonzero(np.isclose(ax, t))[0]) for ax, t in
               zip((GRID.azimuth_axis, GRID.elevation_axis, GRID.delay_axis), TRUTH))
    contrasts = []
    for nv in (1e-2, 1e-4):
        noisy = add_noise(h, nv, np.random.default_rng(7))
        est = MusicEstimator(GRID, MODEL, None, POL).fit(noisy, freqs)
        spec = est.spectrum_
        contrasts.append(spec[iz] / np.median(spec))
    assert contrasts[1] > contrasts[0]


def test_music_estimator_attributes_and_params():
    h, freqs = _scene()
    est = MusicEstimator(GRID, MODEL, None, POL)
    out = est.fit(h, freqs)
    assert out is est
    assert est.azimuth_deg_ == TRUTH[0]
    assert est.elevation_deg_ == TRUTH[1]
    assert est.delay_s_ == TRUTH[2]
    params = est.get_params()
    assert params["n_sources"] == 1 and params["solver"] == "svd"
    est.set_params(n_sources=2)
    assert est.n_sources == 2
    with pytest.raises(ValueError):
        est.set_params(no_such_param=1)


def test_music_estimator_rejects_unknown_solver():
    h, freqs = _scene()
    with pytest.raises(ValueError):
        MusicEstimator(GRID, MODEL, None, POL, solver="qr").fit(h, freqs)


# ---------------------------------------------------------------------------
# Matched filter and SAGE
# ---------------------------------------------------------------------------


def test_matched_filter_peak_at_truth():
    h, freqs = _scene()
    power = matched_filter_power(h, GRID, MODEL, SINGLE, freqs, POL)
    assert power.shape == GRID.shape
    idx = np.unravel_index(np.argmax(power), power.shape)
    got = (
        GRID.azimuth_axis[idx[0]],
        GRID.elevation_axis[idx[1]],
        GRID.delay_axis[idx[2]],
    )
    assert got == TRUTH


def test_sage_noiseless_exact_and_quick_convergence():
    h, freqs = _scene(gain=0.7 - 0.4j)
    res = sage_estimate(h, GRID, MODEL, SINGLE, freqs, POL)
    est = res.estimate
    assert (est.azimuth_deg, est.elevation_deg, est.delay_s) == TRUTH
    assert res.converged
    assert res.iterations <= 2
    # The single-path residual after cancelling the estimate is ~zero.
    assert res.residual < 1e-8 * np.linalg.norm(h)


def test_sage_one_iteration_equals_matched_filter():
    h, freqs = _scene()
    noisy = add_noise(h, 0.5, np.random.default_rng(11))
    res = sage_estimate(
        noisy, GRID, MODEL, SINGLE, freqs, POL, xi=1e12, max_iter=20
    )
    assert res.iterations == 1
    power = matched_filter_power(noisy, GRID, MODEL, SINGLE, freqs, POL)
    idx = np.unravel_index(np.argmax(power), power.shape)
    assert res.estimate.azimuth_deg == GRID.azimuth_axis[idx[0]]
    assert res.estimate.elevation_deg == GRID.elevation_axis[idx[1]]
    assert res.estimate.delay_s == GRID.delay_axis[idx[2]]


def test_sage_reports_non_convergence():
    h, freqs = _scene()
    noisy = add_noise(h, 0.5, np.random.default_rng(13))
    res = sage_estimate(noisy, GRID, MODEL, SINGLE, freqs, POL, xi=0.0, max_iter=1)
    assert res.iterations == 1
    assert not res.converged


def test_sage_stationary_stop_matches_exhaustion():
    h, freqs = _scene()
    a = sage_estimate(h, GRID, MODEL, SINGLE, freqs, POL, stop_on_stationary=True)
    b = sage_estimate(h, GRID, MODEL, SINGLE, freqs, POL, stop_on_stationary=False)
    assert a.estimate == b.estimate


def test_sage_estimator_wrapper():
    h, freqs = _scene()
    est = SageEstimator(GRID, MODEL, None, POL, xi_rel=1e-3, max_iter=10)
    est.fit(h, freqs)
    assert (est.azimuth_deg_, est.elevation_deg_, est.delay_s_) == TRUTH
    assert est.converged_
    assert est.n_iter_ <= 2
    assert est.get_params()["xi_rel"] == 1e-3


def test_estimators_agree_off_grid_to_nearest_point():
    # Truth between grid nodes: both estimators pick an adjacent node.
    h, freqs = _scene(truth=(23.0, 100.0, 50e-9))
    m = MusicEstimator(GRID, MODEL, None, POL).fit(h, freqs)
    s = SageEstimator(GRID, MODEL, None, POL).fit(h, freqs)
    for az in (m.azimuth_deg_, s.azimuth_deg_):
        assert az in (20.0, 25.0)


def test_export_spectrum_csv(tmp_path):
    h, freqs = _scene()
    est = MusicEstimator(GRID, MODEL, None, POL).fit(h, freqs)
    path = tmp_path / "spec.csv"
    export_spectrum_csv(est.spectrum_, GRID, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "phi_deg,theta_deg,delay_s,power"
    assert len(lines) == 1 + np.prod(GRID.shape)
