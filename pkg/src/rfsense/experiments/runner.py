"""Config-driven scenario execution.

One entry point per scenario kind: Monte Carlo positioning trials (single
station, uplink or downlink), multi-station fusion, SNR sweeps, reflection
imaging scenes and FMCW radar frames.  Every run derives per-trial seeds
from the scenario seed, writes its outputs under one directory and returns
a manifest whose checksums are reproducible from (config, seed) alone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .. import __version__
from .. import fmcw as radar
from ..antenna import (
    ArrayGeometry,
    IdealVectorAntenna,
    PolarizationState,
    ScalarElement,
    WaveDirection,
)
from ..channel import (
    ChannelConfig,
    PathParams,
    add_noise,
    mean_occupied_power,
    snr_to_noise_variance,
    synthesize_clean,
)
from ..estimators import (
    MusicEstimator,
    SageEstimator,
    SearchGrid,
    equalized_pilot_snapshots,
    pilot_decimate,
)
from ..pgm import axis_comment, write_pgm
from ..positioning import (
    StationPose,
    multi_station_average,
    save_histogram_csv,
    save_report_csv,
    score_trials,
    single_station_fix,
)
from ..sar_imaging import (
    Scatterer,
    detect_peaks,
    form_image,
    matched_filter,
    mirror_spacing,
    save_image_csv,
    save_image_pgm,
    save_peaks_csv,
    simulate_reflection,
)
from ..util import SPEED_OF_LIGHT, derive_trial_seed, fmt_float
from ..waveforms import CombConfig, ResourceGrid, comb_subcarriers, map_symbols_to_grid, pilot_sequence
from .config import (
    AntennaSection,
    ConfigError,
    GridSection,
    ScenarioConfig,
    SceneSection,
    SignalSection,
    config_hash,
    serialize_config,
    srs_symbol_chunks,
)
from .manifest import RunManifest, build_manifest, write_manifest

_SINGLE_KINDS = ("positioning-ul", "positioning-dl")
_UNSET = object()


# ---------------------------------------------------------------------------
# scenario geometry and signal assembly


def station_model(ant: AntennaSection):
    """(steering model, array geometry) for an antenna section."""
    model = IdealVectorAntenna(hz_row=ant.hz_row) if ant.kind == "vector" else ScalarElement()
    if ant.nx == 1 and ant.ny == 1:
        geometry = ArrayGeometry.single()
    else:
        geometry = ArrayGeometry.planar(ant.nx, ant.ny, ant.spacing_wl)
    return model, geometry


def build_pilot_grid(sig: SignalSection) -> ResourceGrid:
    """Transmitted resource grid for a signal section.

    A sounding resource spans at most 12 symbols, so longer snapshots stack
    several back-to-back resources on the same comb; pseudo-random families
    occupy one block and may refresh the sequence per symbol.
    """
    n_grid_symbols = sig.start_symbol + sig.n_symbols
    probe = CombConfig(sig.comb_size, sig.comb_offset, sig.start_symbol, 1)
    n_tones = comb_subcarriers(probe, sig.n_subcarriers).size
    per = (sig.family != "srs") if sig.per_symbol is None else sig.per_symbol
    samples = pilot_sequence(
        sig.family, n_tones, sig.n_symbols, sig.zc_root, sig.pn_seed, per_symbol=per
    )
    chunks = srs_symbol_chunks(sig.n_symbols) if sig.family == "srs" else [sig.n_symbols]
    cells = np.zeros((sig.n_subcarriers, n_grid_symbols), dtype=complex)
    start = sig.start_symbol
    col = 0
    for chunk in chunks:
        comb = CombConfig(sig.comb_size, sig.comb_offset, start, chunk)
        comb.validate_family(sig.family)
        block = samples if samples.ndim == 1 else samples[:, col : col + chunk]
        part = map_symbols_to_grid(block, comb, sig.n_subcarriers, n_grid_symbols, sig.scs_hz)
        cells += part.cells
        start += chunk
        col += chunk
    return ResourceGrid(
        n_subcarriers=sig.n_subcarriers,
        n_symbols=n_grid_symbols,
        scs_hz=sig.scs_hz,
        cells=cells,
    )


def station_to_ue(station: np.ndarray, ue: np.ndarray) -> tuple[float, float, float]:
    """(azimuth, polar elevation, range) of the station->UE ray."""
    d = np.asarray(ue, dtype=float) - np.asarray(station, dtype=float)
    r = float(np.linalg.norm(d))
    if r == 0.0:
        raise ValueError("UE coincides with the station")
    az = float(np.degrees(np.arctan2(d[1], d[0])) % 360.0)
    el = float(np.degrees(np.arccos(np.clip(d[2] / r, -1.0, 1.0))))
    return az, el, r


def antipode(azimuth_deg: float, elevation_deg: float) -> tuple[float, float]:
    """Direction of the reversed ray."""
    return (azimuth_deg + 180.0) % 360.0, 180.0 - elevation_deg


def great_circle_deg(az1: float, el1: float, az2: float, el2: float) -> float:
    """Angle between two directions, insensitive to the polar singularity."""
    u1 = WaveDirection(az1, el1).unit_vector
    u2 = WaveDirection(az2, el2).unit_vector
    return float(np.degrees(np.arccos(np.clip(float(np.dot(u1, u2)), -1.0, 1.0))))


def local_axis(
    center: float,
    step: float,
    halfwidth: float,
    lo: float | None = None,
    hi: float | None = None,
) -> tuple[float, float, float]:
    """(start, stop, step) window of absolute step multiples around center.

    Anchoring nodes to multiples of ``step`` (rather than to the center)
    keeps the discretization error of an off-grid truth uniform over
    [-step/2, step/2]; bounds trim whole nodes and never shift the lattice.
    """
    if step <= 0:
        raise ValueError("axis step must be positive")
    n_half = max(1, int(round(halfwidth / step)))
    k_lo = int(round(center / step)) - n_half
    k_hi = k_lo + 2 * n_half
    if lo is not None:
        k_lo = max(k_lo, int(np.ceil(lo / step - 1e-9)))
        k_hi = max(k_hi, k_lo)
    if hi is not None:
        k_hi = min(k_hi, int(np.floor(hi / step + 1e-9)))
        k_lo = min(k_lo, k_hi)
    return (k_lo * step, k_hi * step, step)


def trial_grid(gcfg: GridSection, az: float, el: float, delay_s: float) -> SearchGrid:
    """Search grid for one trial: fixed global axes or a truth-centered window."""
    if gcfg.mode == "global":
        return SearchGrid(
            tuple(gcfg.azimuth_deg), tuple(gcfg.elevation_deg), tuple(gcfg.delay_s)
        )
    return SearchGrid(
        local_axis(az, gcfg.azimuth_step_deg, gcfg.azimuth_halfwidth_deg),
        local_axis(el, gcfg.elevation_step_deg, gcfg.elevation_halfwidth_deg, 0.0, 180.0),
        local_axis(delay_s, gcfg.delay_step_s, gcfg.delay_halfwidth_s, 0.0, None),
    )


def _draw_ue(scene: SceneSection, rng: np.random.Generator) -> np.ndarray:
    return np.array(
        [
            rng.uniform(scene.ue_x_m[0], scene.ue_x_m[1]),
            rng.uniform(scene.ue_y_m[0], scene.ue_y_m[1]),
            rng.uniform(scene.ue_z_m[0], scene.ue_z_m[1]),
        ]
    )


def scene_paths(
    station: np.ndarray,
    ue: np.ndarray,
    pol: PolarizationState,
    carrier_hz: float,
    downlink: bool,
    ground_amp: float,
) -> tuple[PathParams, PathParams | None, tuple[float, float, float]]:
    """Line-of-sight path plus an optional diffuse ground bounce.

    Returns (los, bounce, (arrival azimuth, arrival elevation, LoS delay))
    in the observer frame: the station for uplink, the UE for downlink.
    The bounce points at the flat-ground image of the source with mean
    amplitude ``ground_amp``; rough-surface scatter decorrelates across
    symbols, so the caller refreshes its gain per snapshot (see
    ``synthesize_scene``) while the LoS term stays coherent.
    """
    observer, source = (ue, station) if downlink else (station, ue)
    az, el, r = station_to_ue(observer, source)
    delay = r / SPEED_OF_LIGHT
    los = PathParams(
        gain=np.exp(-2j * np.pi * carrier_hz * delay),
        delay_s=delay,
        direction=WaveDirection(az, el),
        polarization=pol,
    )
    bounce = None
    if ground_amp > 0.0:
        mirrored = np.array([source[0], source[1], -source[2]])
        g_az, g_el, g_r = station_to_ue(observer, mirrored)
        g_delay = g_r / SPEED_OF_LIGHT
        bounce = PathParams(
            gain=ground_amp * np.exp(-2j * np.pi * carrier_hz * g_delay),
            delay_s=g_delay,
            direction=WaveDirection(g_az, g_el),
            polarization=pol,
        )
    return los, bounce, (az, el, delay)


def synthesize_scene(grid_tx, los, bounce, ch, model, geometry, rng):
    """Received grid for one trial: coherent LoS plus Rayleigh-faded bounce.

    The bounce contribution is synthesized once and scaled by an i.i.d.
    unit-variance complex Gaussian per occupied symbol, the standard model
    for scatter that stays put in angle and delay but fades between
    snapshots.  A fully coherent bounce would leave the clean covariance
    rank one and estimators indistinguishable; fading is what lets a
    subspace method separate clutter from the LoS line.
    """
    data = synthesize_clean(grid_tx, [los], ch, model, geometry)
    if bounce is not None:
        clut = synthesize_clean(grid_tx, [bounce], ch, model, geometry)
        occ = grid_tx.occupied_symbols
        g = (rng.standard_normal(occ.size) + 1j * rng.standard_normal(occ.size)) / np.sqrt(2)
        data[:, :, occ] += g[None, None, :] * clut[:, :, occ]
    return data


def _make_estimator(name, grid, model, geometry, pol, es):
    if name == "music":
        return MusicEstimator(
            grid, model, geometry, pol, n_sources=es.n_sources, solver=es.solver
        )
    if name == "sage":
        return SageEstimator(grid, model, geometry, pol, xi_rel=es.xi_rel, max_iter=es.max_iter)
    raise ValueError("unknown estimator %r" % name)


# ---------------------------------------------------------------------------
# positioning trial loops


@dataclass
class PositioningResult:
    estimator_names: list[str]
    truth_m: np.ndarray  # (trials, 3)
    positions_m: dict[str, np.ndarray]  # name -> (trials, 3)
    errors_m: dict[str, np.ndarray]  # name -> (trials,)


@dataclass
class MultibsResult:
    estimator: str
    truth_m: np.ndarray  # (trials, 3)
    station_positions_m: np.ndarray  # (trials, n_stations, 3)
    fused_positions_m: np.ndarray  # (trials, 3)
    station_errors_m: np.ndarray  # (trials, n_stations)
    fused_errors_m: np.ndarray  # (trials,)


@dataclass
class SweepResult:
    estimator_names: list[str]
    snr_db: list[float]
    values: dict[str, np.ndarray]  # name -> (points,)
    metric: str  # rmse_deg | mean_rmse_m


def run_positioning_trials(
    cfg: ScenarioConfig,
    seed: int | None = None,
    n_trials: int | None = None,
    snr_db=_UNSET,
    trial_offset: int = 0,
    quiet: bool = True,
) -> PositioningResult:
    """Single-station Monte Carlo loop shared by the UL and DL kinds.

    Per trial: draw the UE, synthesize the full clean grid, add noise on
    exactly the decimated pilot cells the estimators read (the remaining
    cells never enter any statistic), equalize, then fit every configured
    estimator on the identical snapshots.  Downlink runs model the arrival
    at the UE (reversed ray) and convert the estimate back to a fix from
    the station.
    """
    if cfg.kind not in _SINGLE_KINDS:
        raise ValueError("trial loop needs an uplink or downlink positioning kind")
    seed = cfg.seed if seed is None else seed
    n_trials = cfg.trials if n_trials is None else n_trials
    snr = cfg.channel.snr_db if snr_db is _UNSET else snr_db
    downlink = cfg.kind == "positioning-dl"
    sig = cfg.signal
    grid_tx = build_pilot_grid(sig)
    model, geometry = station_model(cfg.antenna)
    n_ports = geometry.n_elements * model.n_ports
    pilots = pilot_decimate(grid_tx.occupied_subcarriers, sig.max_joint_dim, n_ports)
    cell_idx = np.ix_(np.arange(n_ports), pilots, grid_tx.occupied_symbols)
    pol = PolarizationState(cfg.polarization.gamma_deg, cfg.polarization.eta_deg)
    ch = ChannelConfig(
        carrier_hz=cfg.channel.carrier_hz,
        t_symbol_s=1.0 / sig.scs_hz,
        t_cp_s=cfg.channel.t_cp_s,
        subcarrier_doppler=cfg.channel.subcarrier_doppler,
    )
    station = np.asarray(cfg.scene.stations[0], dtype=float)
    pose = StationPose(position_m=station)
    names = list(cfg.estimators.use)
    truth = np.empty((n_trials, 3))
    positions = {nm: np.empty((n_trials, 3)) for nm in names}
    shared: dict[str, object] = {}
    for t in range(n_trials):
        rng = np.random.default_rng(derive_trial_seed(seed, trial_offset + t))
        ue = _draw_ue(cfg.scene, rng)
        truth[t] = ue
        los, bounce, (arr_az, arr_el, delay) = scene_paths(
            station, ue, pol, ch.carrier_hz, downlink, cfg.scene.ground_amp
        )
        data = synthesize_scene(grid_tx, los, bounce, ch, model, geometry, rng)
        if snr is not None:
            nv = snr_to_noise_variance(snr, mean_occupied_power(data, grid_tx))
            data[cell_idx] = add_noise(data[cell_idx], nv, rng)
        h, freqs = equalized_pilot_snapshots(data, grid_tx, pilots)
        sgrid = trial_grid(cfg.grid, arr_az, arr_el, delay)
        for nm in names:
            est = shared.get(nm)
            if est is None:
                est = _make_estimator(nm, sgrid, model, geometry, pol, cfg.estimators)
                if cfg.grid.mode == "global":
                    # fixed axes: reuse the instance so steering matrices cache
                    shared[nm] = est
            est.fit(h, freqs)
            e_az, e_el = est.azimuth_deg_, est.elevation_deg_
            if downlink:
                e_az, e_el = antipode(e_az, e_el)
            positions[nm][t] = single_station_fix(pose, e_az, e_el, est.delay_s_).position_m
        if not quiet and (t + 1) % max(1, n_trials // 10) == 0:
            print("  trial %d/%d" % (t + 1, n_trials), flush=True)
    errors = {nm: np.linalg.norm(positions[nm] - truth, axis=1) for nm in names}
    return PositioningResult(names, truth, positions, errors)


def run_multibs_trials(
    cfg: ScenarioConfig,
    seed: int | None = None,
    n_trials: int | None = None,
    quiet: bool = True,
) -> MultibsResult:
    """Shared-UE trials across all stations, fused by coordinate averaging.

    Noise is drawn sequentially from one per-trial generator, so station
    errors are independent; with truth-centered windows they are also
    zero-mean, which is what makes uniform averaging cut the MSE by the
    station count.
    """
    if cfg.kind != "positioning-multibs":
        raise ValueError("multi-station loop needs kind positioning-multibs")
    seed = cfg.seed if seed is None else seed
    n_trials = cfg.trials if n_trials is None else n_trials
    snr = cfg.channel.snr_db
    sig = cfg.signal
    grid_tx = build_pilot_grid(sig)
    model, geometry = station_model(cfg.antenna)
    n_ports = geometry.n_elements * model.n_ports
    pilots = pilot_decimate(grid_tx.occupied_subcarriers, sig.max_joint_dim, n_ports)
    cell_idx = np.ix_(np.arange(n_ports), pilots, grid_tx.occupied_symbols)
    pol = PolarizationState(cfg.polarization.gamma_deg, cfg.polarization.eta_deg)
    ch = ChannelConfig(
        carrier_hz=cfg.channel.carrier_hz,
        t_symbol_s=1.0 / sig.scs_hz,
        t_cp_s=cfg.channel.t_cp_s,
        subcarrier_doppler=cfg.channel.subcarrier_doppler,
    )
    stations = [np.asarray(s, dtype=float) for s in cfg.scene.stations]
    name = cfg.estimators.use[0]
    n_st = len(stations)
    truth = np.empty((n_trials, 3))
    st_pos = np.empty((n_trials, n_st, 3))
    fused = np.empty((n_trials, 3))
    shared = None
    for t in range(n_trials):
        rng = np.random.default_rng(derive_trial_seed(seed, t))
        ue = _draw_ue(cfg.scene, rng)
        truth[t] = ue
        fixes = []
        for si, station in enumerate(stations):
            los, bounce, (az, el, delay) = scene_paths(
                station, ue, pol, ch.carrier_hz, False, cfg.scene.ground_amp
            )
            data = synthesize_scene(grid_tx, los, bounce, ch, model, geometry, rng)
            if snr is not None:
                nv = snr_to_noise_variance(snr, mean_occupied_power(data, grid_tx))
                data[cell_idx] = add_noise(data[cell_idx], nv, rng)
            h, freqs = equalized_pilot_snapshots(data, grid_tx, pilots)
            sgrid = trial_grid(cfg.grid, az, el, delay)
            est = shared
            if est is None:
                est = _make_estimator(name, sgrid, model, geometry, pol, cfg.estimators)
                if cfg.grid.mode == "global":
                    shared = est
            est.fit(h, freqs)
            fix = single_station_fix(
                StationPose(position_m=station), est.azimuth_deg_, est.elevation_deg_, est.delay_s_
            )
            fixes.append(fix)
            st_pos[t, si] = fix.position_m
        fused[t] = multi_station_average(fixes)
        if not quiet and (t + 1) % max(1, n_trials // 10) == 0:
            print("  trial %d/%d" % (t + 1, n_trials), flush=True)
    st_err = np.linalg.norm(st_pos - truth[:, None, :], axis=2)
    fused_err = np.linalg.norm(fused - truth, axis=1)
    return MultibsResult(name, truth, st_pos, fused, st_err, fused_err)


def snr_offset_db(snr_db, rmse_ref, rmse_test) -> float:
    """Mean horizontal shift between two monotone RMSE-vs-SNR curves.

    For every reference point whose RMSE both curves cover, interpolate the
    SNR (log-RMSE domain) at which the test curve reaches the same RMSE;
    the returned mean of (reference SNR - test SNR) is positive when the
    test curve needs that much less SNR for equal accuracy.
    """
    snr = np.asarray(snr_db, dtype=float)
    ref = np.asarray(rmse_ref, dtype=float)
    test = np.asarray(rmse_test, dtype=float)
    if snr.size < 2 or snr.size != ref.size or snr.size != test.size:
        raise ValueError("curves need matching SNR axes with at least two points")
    if np.any(ref <= 0) or np.any(test <= 0):
        raise ValueError("RMSE values must be positive")
    lo = max(ref.min(), test.min())
    hi = min(ref.max(), test.max())
    offsets = [
        s - float(np.interp(np.log(r), np.log(test[::-1]), snr[::-1]))
        for s, r in zip(snr, ref)
        if lo <= r <= hi
    ]
    if not offsets:
        raise ValueError("curves do not overlap in RMSE")
    return float(np.mean(offsets))


def run_sweep(cfg: ScenarioConfig, seed: int | None = None, quiet: bool = True) -> SweepResult:
    """SNR sweep: angle-only RMSE (degrees) or full positioning RMSE (meters).

    Trial seeds are indexed by (point, trial) so two configs sharing a seed
    see identical UE draws at every sweep point; that common-random-numbers
    pairing is what makes curve ordering comparisons reproducible.
    """
    if cfg.sweep is None:
        raise ValueError("config has no sweep table")
    seed = cfg.seed if seed is None else seed
    points = [float(s) for s in cfg.sweep.snr_db]
    trials = cfg.trials if cfg.sweep.trials is None else cfg.sweep.trials
    names = list(cfg.estimators.use)
    values = {nm: np.empty(len(points)) for nm in names}
    if not cfg.sweep.aoa_only:
        for pi, snr in enumerate(points):
            if not quiet:
                print("sweep point %d/%d: snr %s dB" % (pi + 1, len(points), fmt_float(snr)))
            res = run_positioning_trials(
                cfg, seed=seed, n_trials=trials, snr_db=snr, trial_offset=pi * trials, quiet=quiet
            )
            for nm in names:
                values[nm][pi] = float(np.mean(res.errors_m[nm]))
        return SweepResult(names, points, values, "mean_rmse_m")

    downlink = cfg.kind == "positioning-dl"
    sig = cfg.signal
    grid_tx = build_pilot_grid(sig)
    model, geometry = station_model(cfg.antenna)
    n_ports = geometry.n_elements * model.n_ports
    pilots = pilot_decimate(grid_tx.occupied_subcarriers, sig.max_joint_dim, n_ports)
    cell_idx = np.ix_(np.arange(n_ports), pilots, grid_tx.occupied_symbols)
    pol = PolarizationState(cfg.polarization.gamma_deg, cfg.polarization.eta_deg)
    ch = ChannelConfig(
        carrier_hz=cfg.channel.carrier_hz,
        t_symbol_s=1.0 / sig.scs_hz,
        t_cp_s=cfg.channel.t_cp_s,
        subcarrier_doppler=cfg.channel.subcarrier_doppler,
    )
    station = np.asarray(cfg.scene.stations[0], dtype=float)
    # angle-only search: port-space snapshots against a zero-delay manifold
    grid = SearchGrid(
        tuple(cfg.grid.azimuth_deg), tuple(cfg.grid.elevation_deg), (0.0, 0.0, 1.0)
    )
    pseudo_freqs = np.zeros(1)
    ests = {nm: _make_estimator(nm, grid, model, geometry, pol, cfg.estimators) for nm in names}
    for pi, snr in enumerate(points):
        if not quiet:
            print("sweep point %d/%d: snr %s dB" % (pi + 1, len(points), fmt_float(snr)))
        errs = {nm: np.empty(trials) for nm in names}
        for t in range(trials):
            rng = np.random.default_rng(derive_trial_seed(seed, pi * trials + t))
            ue = _draw_ue(cfg.scene, rng)
            los, bounce, (arr_az, arr_el, _) = scene_paths(
                station, ue, pol, ch.carrier_hz, downlink, cfg.scene.ground_amp
            )
            data = synthesize_scene(grid_tx, los, bounce, ch, model, geometry, rng)
            if snr is not None:
                nv = snr_to_noise_variance(snr, mean_occupied_power(data, grid_tx))
                data[cell_idx] = add_noise(data[cell_idx], nv, rng)
            h, _ = equalized_pilot_snapshots(data, grid_tx, pilots)
            # every (tone, symbol) cell is one port-space snapshot
            hp = h.reshape(h.shape[0], 1, -1)
            for nm in names:
                est = ests[nm]
                est.fit(hp, pseudo_freqs)
                errs[nm][t] = great_circle_deg(arr_az, arr_el, est.azimuth_deg_, est.elevation_deg_)
        for nm in names:
            values[nm][pi] = float(np.sqrt(np.mean(errs[nm] ** 2)))
    return SweepResult(names, points, values, "rmse_deg")


# ---------------------------------------------------------------------------
# output assembly


def _write_lines(lines: list[str], path: Path) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_summary(rows: list[tuple[str, str]], path: Path) -> None:
    _write_lines(["key,value"] + ["%s,%s" % (k, v) for k, v in rows], path)


def _run_single_outputs(cfg, out: Path, quiet: bool):
    res = run_positioning_trials(cfg, quiet=quiet)
    rel = []
    rows = []
    for nm in res.estimator_names:
        report = score_trials(res.positions_m[nm], res.truth_m, cfg.output.histogram_bins)
        if cfg.output.write_trials:
            save_report_csv(report, out / ("trials_%s.csv" % nm))
            rel.append("trials_%s.csv" % nm)
        save_histogram_csv(report, out / ("hist_%s.csv" % nm))
        rel.append("hist_%s.csv" % nm)
        rows.append(("mean_rmse_m_%s" % nm, fmt_float(report.mean_rmse_m)))
        rows.append(("std_m_%s" % nm, fmt_float(float(np.std(report.errors_m)))))
    return rel, rows


def _run_sweep_outputs(cfg, out: Path, quiet: bool):
    res = run_sweep(cfg, quiet=quiet)
    lines = ["snr_db,estimator," + res.metric]
    for pi, snr in enumerate(res.snr_db):
        for nm in res.estimator_names:
            lines.append("%s,%s,%s" % (fmt_float(snr), nm, fmt_float(res.values[nm][pi])))
    _write_lines(lines, out / "sweep.csv")
    rows = [
        ("sweep_points", str(len(res.snr_db))),
        ("sweep_metric", res.metric),
        ("trials_per_point", str(cfg.trials if cfg.sweep.trials is None else cfg.sweep.trials)),
    ]
    return ["sweep.csv"], rows


def _run_multibs_outputs(cfg, out: Path, quiet: bool):
    res = run_multibs_trials(cfg, quiet=quiet)
    n_st = res.station_errors_m.shape[1]
    rel = []
    if cfg.output.write_trials:
        header = "trial," + ",".join("err_s%d_m" % i for i in range(n_st)) + ",err_fused_m"
        lines = [header]
        for t in range(res.fused_errors_m.size):
            cells = [str(t)]
            cells += [fmt_float(res.station_errors_m[t, i]) for i in range(n_st)]
            cells.append(fmt_float(res.fused_errors_m[t]))
            lines.append(",".join(cells))
        _write_lines(lines, out / "trials.csv")
        rel.append("trials.csv")
    report = score_trials(res.fused_positions_m, res.truth_m, cfg.output.histogram_bins)
    save_histogram_csv(report, out / "hist_fused.csv")
    rel.append("hist_fused.csv")
    station_mse = np.mean(res.station_errors_m**2, axis=0)
    mean_single_mse = float(np.mean(station_mse))
    fused_mse = float(np.mean(res.fused_errors_m**2))
    rows = [("estimator", res.estimator)]
    for i in range(n_st):
        rows.append(("mse_s%d_m2" % i, fmt_float(station_mse[i])))
    rows += [
        ("mean_single_mse_m2", fmt_float(mean_single_mse)),
        ("fused_mse_m2", fmt_float(fused_mse)),
        ("fused_over_single_mse", fmt_float(fused_mse / mean_single_mse if mean_single_mse else 0.0)),
        ("mean_rmse_m_fused", fmt_float(report.mean_rmse_m)),
    ]
    return rel, rows


def _measured_mirror_spacing(
    peaks, spacing_mps: float, delay_cell_s: float, velocity_cell_mps: float
) -> float | None:
    """Mean per-multiple spacing between mirror peaks and their primaries.

    Pairs each flagged mirror with a primary under the same delay/velocity
    gates the flagging pass used, so the mean reads back the geometry that
    produced the flags rather than the offset to an unrelated peak.
    """
    gaps = []
    for j, p in enumerate(peaks):
        if not p.is_mirror:
            continue
        for q in peaks[:j]:
            if q.is_mirror or abs(p.delay_s - q.delay_s) > delay_cell_s + 1e-15:
                continue
            d_v = p.velocity_mps - q.velocity_mps
            mult = np.rint(d_v / spacing_mps)
            if mult != 0 and abs(d_v - mult * spacing_mps) <= velocity_cell_mps + 1e-12:
                gaps.append(abs(d_v) / abs(mult))
                break
    return float(np.mean(gaps)) if gaps else None


def _run_imaging_outputs(cfg, out: Path, quiet: bool):
    sig, im = cfg.signal, cfg.imaging
    ch = ChannelConfig(
        carrier_hz=cfg.channel.carrier_hz,
        t_symbol_s=1.0 / sig.scs_hz,
        t_cp_s=cfg.channel.t_cp_s,
        subcarrier_doppler=cfg.channel.subcarrier_doppler,
    )
    comb = CombConfig(sig.comb_size, sig.comb_offset, 0, 1)
    comb.validate_family(sig.family)
    occupied = comb_subcarriers(comb, sig.n_subcarriers)
    row = np.zeros(sig.n_subcarriers, dtype=complex)
    row[occupied] = pilot_sequence(
        sig.family, occupied.size, 1, sig.zc_root, sig.pn_seed, per_symbol=False
    )
    symbol_indices = np.arange(0, im.n_total_symbols, im.occupancy_period)
    scatterers = [Scatterer(s.gain, s.delay_s, s.velocity_mps) for s in im.scatterers]
    received = simulate_reflection(row, symbol_indices, scatterers, sig.scs_hz, ch)
    if im.snr_db is not None:
        power = float(np.mean(np.abs(received[:, occupied]) ** 2))
        nv = snr_to_noise_variance(im.snr_db, power)
        rng = np.random.default_rng(derive_trial_seed(cfg.seed, 0))
        received[:, occupied] = add_noise(received[:, occupied], nv, rng)
    h = matched_filter(np.broadcast_to(row, received.shape), received)
    image = form_image(h, symbol_indices, im.n_total_symbols, sig.scs_hz, ch)
    spacing = mirror_spacing(ch.wavelength_m, im.occupancy_period, ch.t_total_s)
    peaks = detect_peaks(image, im.k_sigma, spacing)
    save_image_pgm(image, out / "image.pgm", log_scale=im.log_scale)
    save_peaks_csv(peaks, out / "peaks.csv")
    rel = ["image.pgm", "peaks.csv"]
    if im.write_csv:
        save_image_csv(image, out / "image.csv")
        rel.append("image.csv")
    rows = [
        ("occupied_symbols", str(symbol_indices.size)),
        ("occupancy_period", str(im.occupancy_period)),
        ("delay_cell_s", fmt_float(image.delay_cell_s)),
        ("velocity_cell_mps", fmt_float(image.velocity_cell_mps)),
        ("mirror_spacing_mps", fmt_float(spacing)),
        ("n_peaks", str(len(peaks))),
        ("n_mirror_peaks", str(sum(p.is_mirror for p in peaks))),
    ]
    measured = _measured_mirror_spacing(
        peaks, spacing, image.delay_cell_s, image.velocity_cell_mps
    )
    if measured is not None:
        rows.append(("measured_mirror_spacing_mps", fmt_float(measured)))
    if im.reference_spacing_mps is not None:
        rows.append(("reference_spacing_mps", fmt_float(im.reference_spacing_mps)))
        rows.append(("spacing_minus_reference_mps", fmt_float(spacing - im.reference_spacing_mps)))
    if not quiet:
        print("imaging: %d peaks, mirror spacing %s m/s" % (len(peaks), fmt_float(spacing)))
    return rel, rows


def _cluster_centroids(dets) -> list[tuple[int, np.ndarray]]:
    cents = []
    for cid in sorted({d.cluster_id for d in dets if d.cluster_id >= 0}):
        members = [d for d in dets if d.cluster_id == cid]
        xy = np.array(
            [
                [
                    d.range_m * np.sin(np.deg2rad(d.azimuth_deg)),
                    d.range_m * np.cos(np.deg2rad(d.azimuth_deg)),
                ]
                for d in members
            ]
        )
        cents.append((cid, xy.mean(axis=0)))
    return cents


def _run_fmcw_outputs(cfg, out: Path, quiet: bool):
    f = cfg.fmcw
    chirp = radar.ChirpConfig(
        f_start_hz=f.f_start_hz,
        slope_hz_per_s=f.slope_hz_per_s,
        t_chirp_s=f.t_chirp_s,
        t_idle_s=f.t_idle_s,
        fs_hz=f.fs_hz,
        n_samples=f.n_samples,
        n_chirps=f.n_chirps,
        rx_positions_wl=tuple(0.5 * i for i in range(f.n_rx)),
    )
    # SNR is per unit-gain target against the raw ADC noise floor
    nv = 10.0 ** (-f.snr_db / 10.0) if f.snr_db is not None else 0.0
    frame_period = f.n_chirps * chirp.t_total_s
    all_dets = []
    frame_pts = []
    frame_cents = []
    first_cube = None
    for fr in range(f.n_frames):
        targets = [
            radar.RadarTarget(
                range_m=t.range_m + t.velocity_mps * frame_period * fr,
                velocity_mps=t.velocity_mps,
                azimuth_deg=t.azimuth_deg,
                rcs_gain=t.rcs_gain,
            )
            for t in f.targets
        ]
        rng = np.random.default_rng(derive_trial_seed(cfg.seed, fr))
        cube = radar.synthesize_cube(targets, chirp, nv, rng)
        if fr == 0:
            first_cube = cube
        dets = radar.detect_rd_peaks(cube, f.k_sigma, n_angle=f.n_angle, frame=fr)
        radar.cluster_detections(dets, f.eps_m, f.min_pts)
        cents = _cluster_centroids(dets)
        frame_cents.append(cents)
        frame_pts.append(
            np.array([c for _, c in cents]) if cents else np.zeros((0, 2))
        )
        all_dets.extend(dets)
        if not quiet:
            print("frame %d: %d detections, %d clusters" % (fr, len(dets), len(cents)))
    tracks = radar.associate_detections(frame_pts, f.gate_m)
    for tr in tracks:
        for fi, pt in zip(tr.frames, tr.points):
            for cid, cent in frame_cents[fi]:
                if np.array_equal(cent, pt):
                    for d in all_dets:
                        if d.frame == fi and d.cluster_id == cid:
                            d.track_id = tr.track_id
                    break
    radar.save_detections_csv(all_dets, out / "detections.csv")
    rel = ["detections.csv"]
    if f.save_cube:
        radar.save_cube(first_cube, out / "cube.bin")
        rel.append("cube.bin")
    if f.micro_doppler:
        first_dets = [d for d in all_dets if d.frame == 0]
        if first_dets:
            gate = max(first_dets, key=lambda d: d.magnitude).range_idx
        else:
            rd = np.sum(np.abs(radar.range_doppler_map(first_cube)) ** 2, axis=0)
            gate = int(np.argmax(np.max(rd, axis=0)))
        spec, v_axis, t_axis = radar.micro_doppler(first_cube, gate, f.md_window, f.md_hop)
        write_pgm(
            spec,
            out / "micro_doppler.pgm",
            log_scale=True,
            comments=[axis_comment("velocity_mps", v_axis), axis_comment("time_s", t_axis)],
        )
        lines = ["velocity_mps,time_s,magnitude"]
        for i in range(spec.shape[0]):
            for j in range(spec.shape[1]):
                lines.append(
                    "%s,%s,%s" % (fmt_float(v_axis[i]), fmt_float(t_axis[j]), fmt_float(spec[i, j]))
                )
        _write_lines(lines, out / "micro_doppler.csv")
        rel += ["micro_doppler.pgm", "micro_doppler.csv"]
    n_clusters = sum(len(c) for c in frame_cents)
    rows = [
        ("n_targets", str(len(f.targets))),
        ("n_frames", str(f.n_frames)),
        ("n_detections", str(len(all_dets))),
        ("n_clusters", str(n_clusters)),
        ("n_tracks", str(len(tracks))),
        ("range_bin_m", fmt_float(chirp.range_bin_m)),
        ("velocity_bin_mps", fmt_float(chirp.velocity_bin_mps)),
        ("max_range_m", fmt_float(chirp.max_range_m)),
        ("max_velocity_mps", fmt_float(chirp.max_velocity_mps)),
    ]
    return rel, rows


def _resolve_out_dir(cfg: ScenarioConfig, out_dir) -> Path:
    if out_dir is not None:
        return Path(out_dir)
    if cfg.output.dir:
        return Path(cfg.output.dir)
    return Path("runs") / cfg.name


def run_scenario(
    cfg: ScenarioConfig,
    out_dir=None,
    seed: int | None = None,
    quiet: bool = True,
) -> RunManifest:
    """Execute one scenario and write config echo, outputs and manifest."""
    if seed is not None and int(seed) != cfg.seed:
        cfg = replace(cfg, seed=int(seed))
    out = _resolve_out_dir(cfg, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    serialize_config(cfg, out / "config.toml")
    rel_paths = ["config.toml"]
    rows = [
        ("kind", cfg.kind),
        ("name", cfg.name),
        ("seed", str(cfg.seed)),
        ("trials", str(cfg.trials)),
    ]
    if cfg.kind in _SINGLE_KINDS:
        if cfg.sweep is not None:
            rel, extra = _run_sweep_outputs(cfg, out, quiet)
        else:
            rel, extra = _run_single_outputs(cfg, out, quiet)
    elif cfg.kind == "positioning-multibs":
        rel, extra = _run_multibs_outputs(cfg, out, quiet)
    elif cfg.kind == "imaging":
        rel, extra = _run_imaging_outputs(cfg, out, quiet)
    elif cfg.kind == "fmcw":
        rel, extra = _run_fmcw_outputs(cfg, out, quiet)
    else:  # pragma: no cover - config validation rejects unknown kinds
        raise ValueError("unknown scenario kind %r" % cfg.kind)
    rel_paths += rel
    _write_summary(rows + extra, out / "summary.csv")
    rel_paths.append("summary.csv")
    manifest = build_manifest(out, rel_paths, config_hash(cfg), cfg.seed, __version__)
    write_manifest(manifest, out / "manifest.txt")
    if not quiet:
        print("wrote %s" % (out / "manifest.txt"))
    return manifest


def compare_estimators(
    cfg: ScenarioConfig,
    out_dir=None,
    seed: int | None = None,
    quiet: bool = True,
) -> RunManifest:
    """Paired subspace-vs-EM comparison on identical per-trial snapshots."""
    if cfg.kind not in _SINGLE_KINDS:
        raise ConfigError("scenario.kind", "comparison needs a single-station positioning kind")
    if not {"music", "sage"} <= set(cfg.estimators.use):
        raise ConfigError("estimators.use", "comparison needs both music and sage")
    if seed is not None and int(seed) != cfg.seed:
        cfg = replace(cfg, seed=int(seed))
    out = _resolve_out_dir(cfg, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    serialize_config(cfg, out / "config.toml")
    res = run_positioning_trials(cfg, quiet=quiet)
    lines = ["trial,error_music_m,error_sage_m"]
    for t in range(cfg.trials):
        lines.append(
            "%d,%s,%s"
            % (t, fmt_float(res.errors_m["music"][t]), fmt_float(res.errors_m["sage"][t]))
        )
    _write_lines(lines, out / "paired.csv")
    lines = ["estimator,mean_rmse_m,std_m"]
    for nm in ("music", "sage"):
        errs = res.errors_m[nm]
        lines.append("%s,%s,%s" % (nm, fmt_float(float(np.mean(errs))), fmt_float(float(np.std(errs)))))
    _write_lines(lines, out / "compare_summary.csv")
    rel_paths = ["config.toml", "paired.csv", "compare_summary.csv"]
    manifest = build_manifest(out, rel_paths, config_hash(cfg), cfg.seed, __version__)
    write_manifest(manifest, out / "manifest.txt")
    if not quiet:
        print("wrote %s" % (out / "manifest.txt"))
    return manifest
