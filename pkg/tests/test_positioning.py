import numpy as np
import pytest

from rfsense.positioning import (
    StationPose,
    multi_station_average,
    range_from_delay,
    save_histogram_csv,
    save_report_csv,
    score_trials,
    single_station_fix,
)
from rfsense.util import SPEED_OF_LIGHT


def test_range_from_delay():
    assert range_from_delay(0.0) == 0.0
    assert range_from_delay(1e-6) == pytest.approx(SPEED_OF_LIGHT * 1e-6)
    with pytest.raises(ValueError):
        range_from_delay(-1e-9)


def test_single_station_fix_geometry():
    station = StationPose(np.array([10.0, -5.0, 30.0]), name="gnb0")
    tau = 100e-9
    r = SPEED_OF_LIGHT * tau
    # Straight down the +x axis (elevation 90 = horizontal).
    fix = single_station_fix(station, 0.0, 90.0, tau)
    assert np.allclose(fix.position_m, station.position_m + [r, 0.0, 0.0], atol=1e-9)
    assert fix.station is station
    assert fix.delay_s == tau
    # Below the horizon: elevation 180 points along -z.
    fix = single_station_fix(station, 0.0, 180.0, tau)
    assert np.allclose(fix.position_m, station.position_m + [0.0, 0.0, -r], atol=1e-9)


def test_single_station_fix_round_trip():
    # Forward geometry: place a target, compute its true angles/delay, and
    # check that the fix lands back on it.
    station = StationPose(np.array([0.0, 0.0, 10.0]))
    target = np.array([30.0, 20.0, 1.5])
    d = target - station.position_m
    rng = np.linalg.norm(d)
    az = np.degrees(np.arctan2(d[1], d[0]))
    el = np.degrees(np.arccos(d[2] / rng))
    fix = single_station_fix(station, az, el, rng / SPEED_OF_LIGHT)
    assert np.allclose(fix.position_m, target, atol=1e-9)


def test_multi_station_average():
    s = StationPose(np.zeros(3))
    fixes = [
        single_station_fix(s, 0.0, 90.0, 10.0 / SPEED_OF_LIGHT),
        single_station_fix(s, 90.0, 90.0, 20.0 / SPEED_OF_LIGHT),
        single_station_fix(s, 0.0, 0.0, 30.0 / SPEED_OF_LIGHT),
    ]
    avg = multi_station_average(fixes)
    assert np.allclose(avg, [10.0 / 3.0, 20.0 / 3.0, 10.0], atol=1e-9)
    with pytest.raises(ValueError):
        multi_station_average([])


def test_score_trials_errors_and_running_mean():
    truth = np.zeros((4, 3))
    est = np.array(
        [[3.0, 4.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]
    )
    report = score_trials(est, truth, n_bins=4)
    assert np.allclose(report.errors_m, [5.0, 0.0, 1.0, 2.0])
    assert report.mean_rmse_m == pytest.approx(2.0)
    assert np.allclose(report.running_mean_m, [5.0, 2.5, 2.0, 2.0])
    # Histogram integrates to one.
    widths = np.diff(report.hist_edges)
    assert np.sum(report.hist_density * widths) == pytest.approx(1.0)


def test_score_trials_degenerate_histogram():
    truth = np.ones((3, 3))
    report = score_trials(truth.copy(), truth)
    assert report.mean_rmse_m == 0.0
    assert report.hist_density.size == 1
    assert np.sum(report.hist_density * np.diff(report.hist_edges)) == pytest.approx(1.0)


def test_report_csv_round_trip(tmp_path):
    truth = np.zeros((3, 3))
    est = np.array([[1.0, 0, 0], [0, 2.0, 0], [0, 0, 3.0]])
    report = score_trials(est, truth, n_bins=3)
    rpath = tmp_path / "report.csv"
    hpath = tmp_path / "hist.csv"
    save_report_csv(report, rpath)
    save_histogram_csv(report, hpath)
    rlines = rpath.read_text().strip().splitlines()
    assert rlines[0] == "trial,error_m,running_mean_rmse_m"
    assert len(rlines) == 4
    first = rlines[1].split(",")
    assert int(first[0]) == 0 and float(first[1]) == 1.0
    hlines = hpath.read_text().strip().splitlines()
    assert hlines[0] == "bin_lo_m,bin_hi_m,density"
    assert len(hlines) == 4
    lo, hi, dens = map(float, hlines[1].split(","))
    assert hi > lo and dens >= 0
