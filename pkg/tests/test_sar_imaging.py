import numpy as np
import pytest

from rfsense.channel import ChannelConfig
from rfsense.sar_imaging import (
    ImageAxes,
    ImagePeak,
    Scatterer,
    detect_peaks,
    flag_mirrors,
    form_image,
    matched_filter,
    mirror_spacing,
    natural_axes,
    save_image_csv,
    save_peaks_csv,
    simulate_reflection,
)
from rfsense.waveforms import pilot_sequence

CFG = ChannelConfig(carrier_hz=3.5e9, t_symbol_s=1 / 15e3, t_cp_s=0.0)


def _pilot(n):
    return pilot_sequence("srs", n)


def _scene(n_sc=64, n_total=140, period=1, scatterers=None, cfg=CFG, rng=None):
    sym = np.arange(0, n_total, period)
    pilot = _pilot(n_sc)
    scatterers = scatterers or [Scatterer(1.0, 2e-6, 10.0)]
    rx = simulate_reflection(pilot, sym, scatterers, 15e3, cfg, rng=rng)
    h = matched_filter(np.broadcast_to(pilot, rx.shape), rx)
    return h, sym


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------


def test_natural_axes_values():
    axes = natural_axes(8, 10, 15e3, CFG)
    assert np.allclose(axes.delay_s, np.arange(8) / (8 * 15e3))
    lam = CFG.wavelength_m
    ref_v = np.fft.fftshift(np.fft.fftfreq(10)) * lam / (2 * CFG.t_total_s)
    assert np.allclose(axes.velocity_mps, ref_v)


def test_image_axes_must_increase():
    with pytest.raises(ValueError):
        ImageAxes(np.array([0.0, 0.0]), np.array([0.0, 1.0]))
    with pytest.raises(ValueError):
        ImageAxes(np.array([0.0, 1.0]), np.array([1.0, 0.0]))


def test_mirror_spacing_formula():
    lam = CFG.wavelength_m
    assert mirror_spacing(lam, 7, CFG.t_total_s) == pytest.approx(
        lam / (2 * 7 * CFG.t_total_s)
    )
    # Full occupancy: spacing equals the whole unambiguous span.
    assert mirror_spacing(lam, 1, CFG.t_total_s) == pytest.approx(
        lam / (2 * CFG.t_total_s)
    )
    with pytest.raises(ValueError):
        mirror_spacing(lam, 0, CFG.t_total_s)


def test_matched_filter_is_conjugate_product():
    x = np.array([[1 + 1j, 2.0]])
    y = np.array([[2.0, 1 - 1j]])
    assert np.allclose(matched_filter(x, y), np.conj(x) * y)
    with pytest.raises(ValueError):
        matched_filter(np.ones((1, 3)), np.ones((1, 4)))


def test_simulate_reflection_hand_formula():
    n = 4
    pilot = np.exp(1j * np.arange(n))
    sym = np.array([0, 3, 6])
    sc = Scatterer(0.5 - 0.5j, 1e-6, 8.0)
    rx = simulate_reflection(pilot, sym, [sc], 15e3, CFG)
    assert rx.shape == (3, 4)
    lam = CFG.wavelength_m
    k = np.arange(n)
    g = np.exp(-2j * np.pi * k * 15e3 * sc.delay_s)
    dv = np.exp(-2j * np.pi * k * CFG.t_symbol_s * 2 * sc.velocity_mps / (n * lam))
    c = np.exp(-2j * np.pi * sym * CFG.t_total_s * 2 * sc.velocity_mps / lam)
    expected = sc.gain * c[:, None] * (g * dv * pilot)[None, :]
    assert np.allclose(rx, expected, atol=1e-12)


def test_simulate_reflection_noise_needs_rng_and_is_seeded():
    pilot = _pilot(16)
    sym = np.arange(10)
    noisy_cfg = ChannelConfig(
        carrier_hz=3.5e9, t_symbol_s=1 / 15e3, noise_variance=0.1
    )
    with pytest.raises(ValueError):
        simulate_reflection(pilot, sym, [Scatterer(1.0, 0.0)], 15e3, noisy_cfg)
    a = simulate_reflection(pilot, sym, [Scatterer(1.0, 0.0)], 15e3, noisy_cfg, rng=5)
    b = simulate_reflection(pilot, sym, [Scatterer(1.0, 0.0)], 15e3, noisy_cfg, rng=5)
    assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# Image formation
# ---------------------------------------------------------------------------


def test_full_occupancy_argmax_at_truth():
    n_sc, n_total = 64, 140
    truth = Scatterer(1.0, 2e-6, 10.0)
    h, sym = _scene(n_sc, n_total, period=1, scatterers=[truth])
    image = form_image(h, sym, n_total, 15e3, CFG)
    assert image.magnitudes.shape == (n_sc, n_total)
    idx = np.unravel_index(np.argmax(image.magnitudes), image.magnitudes.shape)
    assert abs(image.axes.delay_s[idx[0]] - truth.delay_s) <= image.delay_cell_s
    assert (
        abs(image.axes.velocity_mps[idx[1]] - truth.velocity_mps)
        <= image.velocity_cell_mps
    )


def test_fft_path_matches_direct_evaluation():
    n_sc, n_total, period = 16, 35, 7
    h, sym = _scene(n_sc, n_total, period=period)
    fast = form_image(h, sym, n_total, 15e3, CFG, return_complex=True)
    axes = natural_axes(n_sc, n_total, 15e3, CFG)
    direct = form_image(
        h, sym, n_total, 15e3, CFG, axes=axes, return_complex=True, chunk=3
    )
    assert np.allclose(fast.complex_image, direct.complex_image, atol=1e-9)
    assert np.allclose(fast.magnitudes, direct.magnitudes, atol=1e-9)


def test_no_subcarrier_ramp_means_exact_velocity_periodicity():
    cfg = ChannelConfig(
        carrier_hz=3.5e9, t_symbol_s=1 / 15e3, subcarrier_doppler=False
    )
    n_total, period = 140, 7
    h, sym = _scene(32, n_total, period, cfg=cfg)
    image = form_image(h, sym, n_total, 15e3, cfg, return_complex=True)
    # Period-7 occupancy makes the velocity response exactly periodic with
    # period M/7 bins when M is a multiple of 7.
    shift = n_total // period
    assert np.allclose(
        image.complex_image, np.roll(image.complex_image, shift, axis=1), atol=1e-9
    )


def test_sparse_occupancy_aliases_match_gapped_dft_oracle():
    # Disable the subcarrier ramp so velocity responses are exactly
    # separable from delay; the ramp only skews aliases by a sub-cell tilt.
    cfg = ChannelConfig(
        carrier_hz=3.5e9, t_symbol_s=1 / 15e3, subcarrier_doppler=False
    )
    lam = cfg.wavelength_m
    n_total, period = 140, 7
    v = 8.0
    h, sym = _scene(
        32, n_total, period, scatterers=[Scatterer(1.0, 1e-6, v)], cfg=cfg
    )
    image = form_image(h, sym, n_total, 15e3, cfg)
    # Oracle: DFT of the gap-sampled symbol-axis exponential.  Peaks sit at
    # f0 + p/period cycles per symbol.
    f0 = 2 * v * cfg.t_total_s / lam
    x = np.zeros(n_total, dtype=complex)
    x[sym] = np.exp(-2j * np.pi * f0 * sym)
    spec = np.abs(np.fft.fftshift(np.fft.ifft(x)))
    expected_bins = set()
    freqs = np.fft.fftshift(np.fft.fftfreq(n_total))
    for p in range(period):
        f_alias = (f0 + p / period + 0.5) % 1.0 - 0.5
        expected_bins.add(int(np.argmin(np.abs(freqs - f_alias))))
    oracle_peaks = set(np.argsort(spec)[-period:])
    assert oracle_peaks == expected_bins
    # The image's velocity profile at the true delay shows the same comb.
    delay_idx = int(np.argmin(np.abs(image.axes.delay_s - 1e-6)))
    profile = image.magnitudes[delay_idx]
    image_peaks = set(np.argsort(profile)[-period:])
    assert image_peaks == expected_bins
    # Adjacent aliases are spaced by the closed-form mirror spacing.
    spacing = mirror_spacing(lam, period, cfg.t_total_s)
    vbins = sorted(image.axes.velocity_mps[list(image_peaks)])
    gaps = np.diff(vbins)
    central = gaps[np.abs(gaps - spacing) < image.velocity_cell_mps]
    assert central.size >= period - 2


def test_form_image_validation():
    h, sym = _scene(16, 35, 7)
    with pytest.raises(ValueError):
        form_image(h[0], sym, 35, 15e3, CFG)  # 1-D
    with pytest.raises(ValueError):
        form_image(h, sym[:-1], 35, 15e3, CFG)  # row count mismatch
    with pytest.raises(ValueError):
        form_image(h[:1], sym[:1], 35, 15e3, CFG)  # fewer than 2 symbols
    with pytest.raises(ValueError):
        form_image(h, sym, 28, 15e3, CFG)  # occupied index beyond grid


# ---------------------------------------------------------------------------
# Peak detection and mirror flagging
# ---------------------------------------------------------------------------


def test_detect_peaks_finds_both_scatterers():
    scat = [Scatterer(1.0, 1e-6, 8.0), Scatterer(0.8, 3e-6, -3.0)]
    h, sym = _scene(64, 120, 1, scatterers=scat)
    image = form_image(h, sym, 120, 15e3, CFG)
    peaks = detect_peaks(image, k_sigma=6.0)
    assert len(peaks) >= 2
    assert peaks[0].magnitude >= peaks[1].magnitude  # sorted by magnitude
    for s in scat:
        hit = min(peaks, key=lambda p: abs(p.delay_s - s.delay_s))
        assert abs(hit.delay_s - s.delay_s) <= image.delay_cell_s
        assert abs(hit.velocity_mps - s.velocity_mps) <= image.velocity_cell_mps


def test_flag_mirrors_hand_case():
    def pk(delay, vel):
        return ImagePeak(
            delay_s=delay, velocity_mps=vel, magnitude=1.0, delay_idx=0,
            velocity_idx=0, is_mirror=False,
        )

    spacing, d_cell, v_cell = 10.0, 1e-7, 0.5
    peaks = [
        pk(1e-6, 0.0),      # primary
        pk(1e-6, 10.2),     # +1 mirror (within half a cell of the multiple)
        pk(1e-6, -19.9),    # -2 mirror
        pk(1e-6, 4.0),      # not a multiple: stays primary
        pk(3e-6, 10.0),     # different delay: not a mirror of the first
    ]
    flag_mirrors(peaks, spacing, d_cell, v_cell)
    assert [p.is_mirror for p in peaks] == [False, True, True, False, False]


def test_detect_peaks_flags_sparse_aliases():
    h, sym = _scene(32, 140, 7, scatterers=[Scatterer(1.0, 1e-6, 8.0)])
    image = form_image(h, sym, 140, 15e3, CFG)
    spacing = mirror_spacing(CFG.wavelength_m, 7, CFG.t_total_s)
    peaks = detect_peaks(image, k_sigma=6.0, spacing_mps=spacing)
    primaries = [p for p in peaks if not p.is_mirror]
    mirrors = [p for p in peaks if p.is_mirror]
    assert len(mirrors) >= 4
    assert len(primaries) >= 1


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def test_save_image_csv(tmp_path):
    h, sym = _scene(8, 12, 1)
    image = form_image(h, sym, 12, 15e3, CFG)
    path = tmp_path / "image.csv"
    save_image_csv(image, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "delay_s,velocity_mps,magnitude"
    assert len(lines) == 1 + 8 * 12
    # Delay-major ordering: the first block shares delay_s[0].
    first = lines[1].split(",")
    assert float(first[0]) == image.axes.delay_s[0]
    assert float(first[1]) == image.axes.velocity_mps[0]


def test_save_peaks_csv(tmp_path):
    peaks = [
        ImagePeak(1e-6, 5.0, 2.0, 3, 4, False),
        ImagePeak(1e-6, 15.0, 1.0, 3, 9, True),
    ]
    path = tmp_path / "peaks.csv"
    save_peaks_csv(peaks, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "delay_s,velocity_mps,magnitude,is_mirror"
    assert lines[1].endswith(",0")
    assert lines[2].endswith(",1")
