"""OFDM reference-signal range-Doppler imaging and mirror-artifact handling.

A stationary receiver correlates the known transmitted grid with the
reflected grid (matched filter H = conj(X) .* Y per resource element) and
forms the delay/velocity image

    f(tau, nu) = | sum_i sum_k H[i,k] conj(g_k(tau) Dv_k(nu) C_i(nu)) |

by scanning delay across subcarriers and velocity across symbols.  When the
pilot occupies only every S-th symbol the symbol-rate axis is undersampled
and each scatterer aliases at the mirror spacing lambda / (2 S T_total);
the detector flags those replicas instead of reporting them as targets.

The default axes are the transform-natural grids: delay [0, 1/scs) at
1/(n scs), velocity centred on zero at lambda/(2 M T_total).  On those axes
the image is computed with zero-filled FFTs; arbitrary axes fall back to a
velocity-chunked direct evaluation of the same sum.  The per-subcarrier
Doppler ramp Dv makes the aliases slightly weaker than the true response
(it acts as a 1/S-cell delay skew per mirror order); disable it with
``subcarrier_doppler=False`` to study the pure symbol-rate aliasing, in
which case the pre-magnitude image is exactly periodic in velocity.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .channel import ChannelConfig, delay_steering, doppler_factors
from .pgm import axis_comment, write_pgm
from .util import fmt_float


@dataclass(frozen=True)
class Scatterer:
    gain: complex
    delay_s: float
    velocity_mps: float = 0.0

    def __post_init__(self):
        if self.delay_s < 0:
            raise ValueError("scatterer delay must be non-negative")


@dataclass(frozen=True)
class ImageAxes:
    delay_s: np.ndarray
    velocity_mps: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.delay_s, dtype=float)
        v = np.asarray(self.velocity_mps, dtype=float)
        if d.size > 1 and np.any(np.diff(d) <= 0):
            raise ValueError("delay axis must be strictly increasing")
        if v.size > 1 and np.any(np.diff(v) <= 0):
            raise ValueError("velocity axis must be strictly increasing")
        object.__setattr__(self, "delay_s", d)
        object.__setattr__(self, "velocity_mps", v)


@dataclass
class RangeDopplerImage:
    magnitudes: np.ndarray  # (n_delay, n_velocity)
    axes: ImageAxes
    complex_image: np.ndarray | None = None

    @property
    def delay_cell_s(self) -> float:
        d = self.axes.delay_s
        return float(d[1] - d[0]) if d.size > 1 else 0.0

    @property
    def velocity_cell_mps(self) -> float:
        v = self.axes.velocity_mps
        return float(v[1] - v[0]) if v.size > 1 else 0.0


@dataclass
class ImagePeak:
    delay_s: float
    velocity_mps: float
    magnitude: float
    delay_idx: int
    velocity_idx: int
    is_mirror: bool = False


def natural_axes(
    n_subcarriers: int, n_symbols: int, scs_hz: float, cfg: ChannelConfig
) -> ImageAxes:
    """Transform-natural grids: full unambiguous delay and velocity spans."""
    delay = np.arange(n_subcarriers) / (n_subcarriers * scs_hz)
    cycles = np.fft.fftshift(np.fft.fftfreq(n_symbols))  # cycles per symbol
    velocity = cycles * cfg.wavelength_m / (2.0 * cfg.t_total_s)
    return ImageAxes(delay_s=delay, velocity_mps=velocity)


def simulate_reflection(
    pilot_row: np.ndarray,
    symbol_indices: np.ndarray,
    scatterers: list[Scatterer],
    scs_hz: float,
    cfg: ChannelConfig,
    rng: np.random.Generator | int | None = None,
) -> np.ndarray:
    """Received rows (occupied symbols x subcarriers) for a scalar receiver.

    Same path model as the array channel with a unit scalar element; noise
    is drawn only on the occupied symbols (the matched filter zeroes the
    rest anyway), keeping acceptance-scale scenes inside memory.
    """
    pilot_row = np.asarray(pilot_row)
    symbol_indices = np.asarray(symbol_indices, dtype=int)
    n = pilot_row.size
    freqs = np.arange(n) * scs_hz
    out = np.zeros((symbol_indices.size, n), dtype=complex)
    for sc in scatterers:
        g = delay_steering(sc.delay_s, freqs)
        c_full, dv = doppler_factors(
            sc.velocity_mps, cfg, int(symbol_indices.max()) + 1, n
        )
        c_occ = c_full[symbol_indices]
        out += sc.gain * c_occ[:, None] * (dv * g * pilot_row)[None, :]
    if cfg.noise_variance > 0.0:
        if rng is None:
            raise ValueError("noise requested but no rng/seed given")
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        scale = np.sqrt(cfg.noise_variance / 2.0)
        out = out + scale * (
            rng.standard_normal(out.shape) + 1j * rng.standard_normal(out.shape)
        )
    return out


def matched_filter(pilot_rows: np.ndarray, received_rows: np.ndarray) -> np.ndarray:
    """H = conj(X) .* Y element-wise; cells where X = 0 stay zero."""
    x = np.asarray(pilot_rows)
    y = np.asarray(received_rows)
    if x.shape != y.shape:
        raise ValueError("pilot/received shape mismatch")
    return np.conj(x) * y


def mirror_spacing(wavelength_m: float, occupancy_period: int, t_total_s: float) -> float:
    """Velocity spacing of aliased replicas: lambda / (2 S T_total)."""
    if occupancy_period < 1:
        raise ValueError("occupancy period must be >= 1")
    return wavelength_m / (2.0 * occupancy_period * t_total_s)


def form_image(
    h_rows: np.ndarray,
    symbol_indices: np.ndarray,
    n_total_symbols: int,
    scs_hz: float,
    cfg: ChannelConfig,
    axes: ImageAxes | None = None,
    return_complex: bool = False,
    chunk: int = 128,
) -> RangeDopplerImage:
    """Delay/velocity scan of the matched-filtered grid.

    ``h_rows`` holds the occupied symbols only, (len(symbol_indices), n).
    With ``axes=None`` the natural grids are used and the scan reduces to
    zero-filled inverse FFTs (the velocity DFT lands exactly on the axis,
    the delay DFT on [0, 1/scs)); explicit axes are evaluated directly in
    velocity chunks.  Both routes compute the same double sum; magnitudes
    are returned, optionally with the complex image.
    """
    h_rows = np.asarray(h_rows, dtype=complex)
    symbol_indices = np.asarray(symbol_indices, dtype=int)
    if h_rows.ndim != 2 or h_rows.shape[0] != symbol_indices.size:
        raise ValueError("h_rows must be (occupied symbols, subcarriers)")
    if symbol_indices.size < 2:
        raise ValueError("need at least two occupied symbols")
    if symbol_indices.max() >= n_total_symbols:
        raise ValueError("symbol index outside the grid")
    n = h_rows.shape[1]
    lam = cfg.wavelength_m
    if axes is None:
        axes = natural_axes(n, n_total_symbols, scs_hz, cfg)
        full = np.zeros((n_total_symbols, n), dtype=complex)
        full[symbol_indices] = h_rows
        w = np.fft.ifft(full, axis=0) * n_total_symbols
        del full
        w = np.fft.fftshift(w, axes=0)
        cycles = np.fft.fftshift(np.fft.fftfreq(n_total_symbols))
        if cfg.subcarrier_doppler:
            k_idx = np.arange(n)
            scale = cfg.t_symbol_s / (n * cfg.t_total_s)
            for lo in range(0, n_total_symbols, chunk):
                hi = min(lo + chunk, n_total_symbols)
                w[lo:hi] *= np.exp(2j * np.pi * np.outer(cycles[lo:hi], k_idx) * scale)
        cplx = (np.fft.ifft(w, axis=1) * n).T  # (delay, velocity)
        del w
    else:
        taus = axes.delay_s
        vels = axes.velocity_mps
        cplx = np.empty((taus.size, vels.size), dtype=complex)
        freqs = np.arange(n) * scs_hz
        e_delay = np.exp(2j * np.pi * np.outer(freqs, taus))  # conj(g_k(tau))
        k_idx = np.arange(n)
        for lo in range(0, vels.size, chunk):
            hi = min(lo + chunk, vels.size)
            v = vels[lo:hi]
            c_mat = np.exp(
                2j * np.pi * np.outer(v, symbol_indices) * (2.0 * cfg.t_total_s / lam)
            )
            wc = c_mat @ h_rows  # (chunk, n)
            if cfg.subcarrier_doppler:
                wc *= np.exp(
                    2j
                    * np.pi
                    * np.outer(v, k_idx)
                    * (2.0 * cfg.t_symbol_s / (n * lam))
                )
            cplx[:, lo:hi] = (wc @ e_delay).T
    image = RangeDopplerImage(
        magnitudes=np.abs(cplx),
        axes=axes,
        complex_image=cplx if return_complex else None,
    )
    return image


def detect_peaks(
    image: RangeDopplerImage,
    k_sigma: float = 6.0,
    spacing_mps: float | None = None,
) -> list[ImagePeak]:
    """Local maxima above mean + k_sigma * std, with mirror flagging.

    A cell is a peak when it is >= all eight neighbours and clears the
    global threshold.  When ``spacing_mps`` is given, any peak that matches
    a stronger peak at the same delay (within one cell) and at a nonzero
    integer multiple of the spacing in velocity (within one cell) is
    flagged as a mirror replica.
    """
    mag = image.magnitudes
    thr = float(np.mean(mag) + k_sigma * np.std(mag))
    padded = np.full((mag.shape[0] + 2, mag.shape[1] + 2), -np.inf)
    padded[1:-1, 1:-1] = mag
    is_max = np.ones(mag.shape, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            is_max &= mag >= padded[1 + di : 1 + di + mag.shape[0], 1 + dj : 1 + dj + mag.shape[1]]
    rows, cols = np.nonzero(is_max & (mag > thr))
    peaks = [
        ImagePeak(
            delay_s=float(image.axes.delay_s[r]),
            velocity_mps=float(image.axes.velocity_mps[c]),
            magnitude=float(mag[r, c]),
            delay_idx=int(r),
            velocity_idx=int(c),
        )
        for r, c in zip(rows.tolist(), cols.tolist())
    ]
    peaks.sort(key=lambda p: (-p.magnitude, p.delay_idx, p.velocity_idx))
    if spacing_mps is not None and spacing_mps > 0:
        flag_mirrors(peaks, spacing_mps, image.delay_cell_s, image.velocity_cell_mps)
    return peaks


def flag_mirrors(
    peaks: list[ImagePeak],
    spacing_mps: float,
    delay_cell_s: float,
    velocity_cell_mps: float,
) -> None:
    """Mark replicas in a magnitude-sorted peak list (in place).

    Peak j is a mirror of an earlier (stronger or equal, first-sorted) peak
    i when their delays agree within one cell and their velocity offset is
    within one cell of a nonzero multiple of the spacing.
    """
    for j in range(len(peaks)):
        for i in range(j):
            if peaks[i].is_mirror:
                continue
            d_tau = abs(peaks[j].delay_s - peaks[i].delay_s)
            if d_tau > delay_cell_s + 1e-15:
                continue
            d_v = peaks[j].velocity_mps - peaks[i].velocity_mps
            p = np.rint(d_v / spacing_mps)
            if p != 0 and abs(d_v - p * spacing_mps) <= velocity_cell_mps + 1e-12:
                peaks[j].is_mirror = True
                break


def save_image_pgm(image: RangeDopplerImage, path, log_scale: bool = False) -> None:
    comments = [
        axis_comment("delay_s", image.axes.delay_s),
        axis_comment("velocity_mps", image.axes.velocity_mps),
    ]
    write_pgm(image.magnitudes, path, log_scale=log_scale, comments=comments)


def save_image_csv(image: RangeDopplerImage, path) -> None:
    """Full image as delay_s, velocity_mps, magnitude rows (delay-major)."""
    lines = ["delay_s,velocity_mps,magnitude"]
    d = image.axes.delay_s
    v = image.axes.velocity_mps
    mag = image.magnitudes
    for i in range(d.size):
        for j in range(v.size):
            lines.append(
                "%s,%s,%s" % (fmt_float(d[i]), fmt_float(v[j]), fmt_float(mag[i, j]))
            )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def save_peaks_csv(peaks: list[ImagePeak], path) -> None:
    lines = ["delay_s,velocity_mps,magnitude,is_mirror"]
    for p in peaks:
        lines.append(
            "%s,%s,%s,%d"
            % (fmt_float(p.delay_s), fmt_float(p.velocity_mps), fmt_float(p.magnitude), int(p.is_mirror))
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
