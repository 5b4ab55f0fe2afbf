"""FMCW mmWave radar processing: range/Doppler/angle FFTs, clustering,
micro-Doppler analysis and greedy track association.

Signal model (complex baseband IF, stop-and-hop): a point target at range
R, radial velocity v (positive receding) and azimuth az contributes

    x[rx, m, s] = A exp(j 2 pi f_b s / fs) exp(-j 2 pi (2 v T_total/lambda) m)
                    exp(+j 2 pi d_rx sin(az)) exp(-j 4 pi R / lambda)

with beat frequency f_b = 2 slope R / c and rx positions d_rx in
wavelengths.  The Doppler and angle transforms use the exponent signs that
make both output axes strictly increasing: range bin b maps to
b (fs/n) c / (2 slope), velocity bin k (centred) to k lambda / (2 N T_total)
and angle bin k (centred, zero-padded to n_angle) to arcsin(2k / n_angle)
at half-wavelength spacing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .util import SPEED_OF_LIGHT, fmt_float

_HALF_WL_RX_4 = (0.0, 0.5, 1.0, 1.5)


@dataclass(frozen=True)
class ChirpConfig:
    f_start_hz: float = 77.0e9
    slope_hz_per_s: float = 30.0e12  # 30 MHz / us
    t_chirp_s: float = 25.6e-6
    t_idle_s: float = 0.0
    fs_hz: float = 10.0e6
    n_samples: int = 256
    n_chirps: int = 128
    rx_positions_wl: tuple = _HALF_WL_RX_4

    def __post_init__(self):
        if min(self.f_start_hz, self.slope_hz_per_s, self.fs_hz, self.t_chirp_s) <= 0:
            raise ValueError("chirp parameters must be positive")
        if self.t_idle_s < 0:
            raise ValueError("idle time must be non-negative")
        if min(self.n_samples, self.n_chirps) < 1:
            raise ValueError("cube dimensions must be >= 1")
        # allow exact equality n = fs * t_chirp up to float rounding
        if self.n_samples > self.fs_hz * self.t_chirp_s * (1.0 + 1e-9):
            raise ValueError("n_samples exceeds fs * t_chirp")
        if len(self.rx_positions_wl) < 1:
            raise ValueError("at least one rx channel required")
        object.__setattr__(self, "rx_positions_wl", tuple(float(p) for p in self.rx_positions_wl))

    @property
    def n_rx(self) -> int:
        return len(self.rx_positions_wl)

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.f_start_hz

    @property
    def t_total_s(self) -> float:
        return self.t_chirp_s + self.t_idle_s

    @property
    def range_bin_m(self) -> float:
        return (self.fs_hz / self.n_samples) * SPEED_OF_LIGHT / (2.0 * self.slope_hz_per_s)

    @property
    def max_range_m(self) -> float:
        """Unambiguous range: beat frequency up to fs maps to fs c / (2 slope)."""
        return self.fs_hz * SPEED_OF_LIGHT / (2.0 * self.slope_hz_per_s)

    @property
    def max_velocity_mps(self) -> float:
        """Unambiguous |v|: half-cycle phase step per chirp, lambda/(4 T_total)."""
        return self.wavelength_m / (4.0 * self.t_total_s)

    @property
    def velocity_bin_mps(self) -> float:
        return self.wavelength_m / (2.0 * self.n_chirps * self.t_total_s)

    def range_axis(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.range_bin_m

    def velocity_axis(self) -> np.ndarray:
        k = np.arange(self.n_chirps) - self.n_chirps // 2
        return k * self.velocity_bin_mps


@dataclass(frozen=True)
class RadarTarget:
    range_m: float
    velocity_mps: float  # positive receding
    azimuth_deg: float = 0.0
    rcs_gain: float = 1.0

    def __post_init__(self):
        if self.range_m < 0:
            raise ValueError("range must be non-negative")
        if not -90.0 <= self.azimuth_deg <= 90.0:
            raise ValueError("azimuth must lie in [-90, 90] deg")


@dataclass
class RadarCube:
    data: np.ndarray  # (n_rx, n_chirps, n_samples)
    cfg: ChirpConfig

    def __post_init__(self):
        expected = (self.cfg.n_rx, self.cfg.n_chirps, self.cfg.n_samples)
        if self.data.shape != expected:
            raise ValueError("cube shape %s != config %s" % (self.data.shape, expected))


@dataclass
class RadarDetection:
    range_m: float
    velocity_mps: float
    azimuth_deg: float
    magnitude: float
    range_idx: int
    velocity_idx: int
    frame: int = 0
    cluster_id: int = -1
    track_id: int = -1


def _validate_targets(targets, cfg: ChirpConfig) -> None:
    for t in targets:
        if t.range_m >= cfg.max_range_m:
            raise ValueError(
                "target range %g m exceeds unambiguous range %g m (fs c / 2 slope)"
                % (t.range_m, cfg.max_range_m)
            )
        if abs(t.velocity_mps) >= cfg.max_velocity_mps:
            raise ValueError(
                "target |velocity| %g m/s exceeds unambiguous limit %g m/s"
                " (lambda / 4 T_total)" % (abs(t.velocity_mps), cfg.max_velocity_mps)
            )
        migration = abs(t.velocity_mps) * cfg.n_chirps * cfg.t_total_s
        if migration >= cfg.range_bin_m / 2.0:
            warnings.warn(
                "target moves %.3g m over the frame, >= half a range bin;"
                " range-bin migration is not modeled" % migration,
                stacklevel=3,
            )


def synthesize_cube(
    targets: list[RadarTarget],
    cfg: ChirpConfig,
    noise_variance: float = 0.0,
    rng: np.random.Generator | int | None = None,
) -> RadarCube:
    """Superpose IF tones for all targets plus circular Gaussian noise."""
    _validate_targets(targets, cfg)
    s_idx = np.arange(cfg.n_samples)
    m_idx = np.arange(cfg.n_chirps)
    rx_pos = np.asarray(cfg.rx_positions_wl)
    data = np.zeros((cfg.n_rx, cfg.n_chirps, cfg.n_samples), dtype=complex)
    lam = cfg.wavelength_m
    for t in targets:
        f_beat = 2.0 * cfg.slope_hz_per_s * t.range_m / SPEED_OF_LIGHT
        fast = np.exp(2j * np.pi * f_beat * s_idx / cfg.fs_hz)
        slow = np.exp(-2j * np.pi * (2.0 * t.velocity_mps * cfg.t_total_s / lam) * m_idx)
        across = np.exp(2j * np.pi * rx_pos * np.sin(np.deg2rad(t.azimuth_deg)))
        phase0 = np.exp(-4j * np.pi * t.range_m / lam)
        data += (
            t.rcs_gain
            * phase0
            * across[:, None, None]
            * slow[None, :, None]
            * fast[None, None, :]
        )
    if noise_variance > 0.0:
        if rng is None:
            raise ValueError("noise requested but no rng/seed given")
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        scale = np.sqrt(noise_variance / 2.0)
        data = data + scale * (
            rng.standard_normal(data.shape) + 1j * rng.standard_normal(data.shape)
        )
    return RadarCube(data=data, cfg=cfg)


def _window(name: str | None, n: int) -> np.ndarray:
    if name is None or name == "rect":
        return np.ones(n)
    if name == "hann":
        return np.hanning(n)
    raise ValueError("unknown window %r" % name)


def range_fft(cube: RadarCube, window: str | None = "hann") -> np.ndarray:
    """FFT across fast time; bin b is range b (fs/n) c / (2 slope)."""
    if cube.cfg.n_samples < 2:
        raise ValueError("range FFT needs at least 2 samples")
    w = _window(window, cube.cfg.n_samples)
    return np.fft.fft(cube.data * w[None, None, :], axis=2)


def doppler_fft(range_spectrum: np.ndarray, cfg: ChirpConfig, window: str | None = "hann"):
    """Positive-exponent DFT across chirps, fftshifted.

    A target with slow-time phase e^{-j 2 pi (2 v T/lambda) m} lands at
    centred bin k = 2 v T N / lambda, i.e. v = k lambda / (2 N T_total);
    zero velocity is the middle row of the shifted axis.
    """
    if cfg.n_chirps < 2:
        raise ValueError("Doppler FFT needs at least 2 chirps")
    w = _window(window, cfg.n_chirps)
    spec = np.fft.ifft(range_spectrum * w[None, :, None], axis=1) * cfg.n_chirps
    return np.fft.fftshift(spec, axes=1)


def range_doppler_map(cube: RadarCube, window: str | None = "hann") -> np.ndarray:
    """Noncoherent power map (n_chirps, n_samples): sum over rx of |.|^2."""
    rd = doppler_fft(range_fft(cube, window), cube.cfg, window)
    return np.sum(np.abs(rd) ** 2, axis=0)


def angle_fft(rx_values: np.ndarray, rx_positions_wl, n_angle: int = 64):
    """Zero-padded FFT across the rx axis at half-wavelength spacing.

    Returns (spectrum, azimuth_deg): centred bin k maps to
    arcsin(2 k / n_angle).  The input phase ramp e^{+j 2 pi d sin(az)} per
    element puts the peak at the matching bin of the standard
    (negative-exponent) FFT after fftshift.  Requires uniform half-lambda
    rx positions; arbitrary geometries need a steered scan instead.
    """
    rx_values = np.asarray(rx_values)
    pos = np.asarray(rx_positions_wl, dtype=float)
    if rx_values.size < 2:
        raise ValueError("angle estimation requires at least 2 rx channels")
    if rx_values.size != pos.size:
        raise ValueError("rx_values and rx_positions_wl length mismatch")
    if rx_values.size > n_angle:
        raise ValueError("n_angle must be >= number of rx channels")
    spacing = np.diff(pos)
    if not np.allclose(spacing, 0.5, atol=1e-9):
        raise ValueError("angle FFT assumes uniform half-wavelength rx spacing")
    spec = np.fft.fftshift(np.fft.fft(rx_values, n=n_angle))
    k = np.arange(n_angle) - n_angle // 2
    azimuth = np.rad2deg(np.arcsin(np.clip(2.0 * k / n_angle, -1.0, 1.0)))
    return spec, azimuth


def detect_rd_peaks(
    cube: RadarCube,
    k_sigma: float = 6.0,
    window: str | None = "hann",
    n_angle: int = 64,
    frame: int = 0,
) -> list[RadarDetection]:
    """Full single-frame chain: RD map peaks, then per-peak angle estimate.

    A cell is detected when it dominates its eight neighbours and exceeds
    mean + k_sigma * std of the rx-summed power map; the angle comes from
    the zero-padded FFT of the per-rx complex values at that cell (skipped
    for a single rx, azimuth reported as 0).
    """
    rd_per_rx = doppler_fft(range_fft(cube, window), cube.cfg, window)
    power = np.sum(np.abs(rd_per_rx) ** 2, axis=0)  # (n_chirps, n_samples)
    thr = float(np.mean(power) + k_sigma * np.std(power))
    padded = np.full((power.shape[0] + 2, power.shape[1] + 2), -np.inf)
    padded[1:-1, 1:-1] = power
    is_max = np.ones(power.shape, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            is_max &= power >= padded[
                1 + di : 1 + di + power.shape[0], 1 + dj : 1 + dj + power.shape[1]
            ]
    v_axis = cube.cfg.velocity_axis()
    r_axis = cube.cfg.range_axis()
    detections = []
    rows, cols = np.nonzero(is_max & (power > thr))
    for vi, ri in zip(rows.tolist(), cols.tolist()):
        if cube.cfg.n_rx >= 2:
            spec, az_axis = angle_fft(rd_per_rx[:, vi, ri], cube.cfg.rx_positions_wl, n_angle)
            az = float(az_axis[int(np.argmax(np.abs(spec)))])
        else:
            az = 0.0
        detections.append(
            RadarDetection(
                range_m=float(r_axis[ri]),
                velocity_mps=float(v_axis[vi]),
                azimuth_deg=az,
                magnitude=float(power[vi, ri]),
                range_idx=int(ri),
                velocity_idx=int(vi),
                frame=frame,
            )
        )
    detections.sort(key=lambda d: (-d.magnitude, d.range_idx, d.velocity_idx))
    return detections


def dbscan(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Deterministic DBSCAN labels; noise = -1.

    Neighbour counts are Euclidean and include the point itself.  Points
    are visited in ascending index order and clusters expand through a FIFO
    queue, so labels depend only on the data: cluster 0 grows from the
    lowest-index core point, cluster 1 from the next unclaimed core, etc.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    labels = np.full(n, -1, dtype=int)
    if n == 0:
        return labels
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=2)
    neighbors = [np.flatnonzero(d2[i] <= eps * eps) for i in range(n)]
    core = np.array([nb.size >= min_pts for nb in neighbors])
    cluster = 0
    visited = np.zeros(n, dtype=bool)
    for i in range(n):
        if visited[i] or not core[i]:
            continue
        queue = [i]
        visited[i] = True
        labels[i] = cluster
        while queue:
            j = queue.pop(0)
            for k in neighbors[j].tolist():
                if labels[k] == -1:
                    labels[k] = cluster
                if not visited[k] and core[k]:
                    visited[k] = True
                    queue.append(k)
        cluster += 1
    return labels


def cluster_detections(
    detections: list[RadarDetection], eps_m: float, min_pts: int
) -> list[RadarDetection]:
    """DBSCAN on the (x, y) ground projection; annotates cluster_id."""
    if not detections:
        return detections
    xy = np.array(
        [
            [
                d.range_m * np.sin(np.deg2rad(d.azimuth_deg)),
                d.range_m * np.cos(np.deg2rad(d.azimuth_deg)),
            ]
            for d in detections
        ]
    )
    labels = dbscan(xy, eps_m, min_pts)
    for d, label in zip(detections, labels.tolist()):
        d.cluster_id = int(label)
    return detections


def micro_doppler(
    cube: RadarCube,
    range_bin: int,
    window: int = 64,
    hop: int = 16,
    range_window: str | None = "hann",
):
    """Short-time velocity spectrogram of one range gate.

    Range-FFTs each chirp, extracts ``range_bin``, averages rx channels,
    then applies a Hann-windowed short-time DFT (positive exponent,
    fftshifted) over slow time.  Returns (spectrogram, velocity_axis_mps,
    frame_times_s) with rows = velocity and one column per frame; a
    constant radial velocity shows as one horizontal ridge.
    """
    cfg = cube.cfg
    if not 0 <= range_bin < cfg.n_samples:
        raise ValueError("range_bin outside the cube")
    if window < 2 or window > cfg.n_chirps:
        raise ValueError("window must lie in [2, n_chirps]")
    if hop < 1:
        raise ValueError("hop must be >= 1")
    spec = range_fft(cube, range_window)[:, :, range_bin]  # (n_rx, n_chirps)
    series = np.mean(spec, axis=0)
    taper = np.hanning(window)
    starts = np.arange(0, cfg.n_chirps - window + 1, hop)
    frames = np.empty((window, starts.size))
    for col, s0 in enumerate(starts.tolist()):
        seg = series[s0 : s0 + window] * taper
        frames[:, col] = np.abs(np.fft.fftshift(np.fft.ifft(seg))) * window
    k = np.arange(window) - window // 2
    v_axis = k * cfg.wavelength_m / (2.0 * window * cfg.t_total_s)
    t_axis = (starts + window / 2.0) * cfg.t_total_s
    return frames, v_axis, t_axis


@dataclass
class Track:
    track_id: int
    frames: list = field(default_factory=list)
    points: list = field(default_factory=list)

    @property
    def last_point(self) -> np.ndarray:
        return self.points[-1]


def associate_detections(frames: list[np.ndarray], gate: float) -> list[Track]:
    """Greedy nearest-neighbour association of per-frame points.

    Pairs are claimed in ascending distance order (ties: lower track id,
    then lower detection index); a track missing a frame terminates, and
    unmatched detections open new tracks in detection order.
    """
    if gate <= 0:
        raise ValueError("gate must be positive")
    tracks: list[Track] = []
    active: list[Track] = []
    next_id = 0
    for fi, pts in enumerate(frames):
        pts = np.atleast_2d(np.asarray(pts, dtype=float)) if np.size(pts) else np.zeros((0, 2))
        pairs = []
        for ti, tr in enumerate(active):
            for di in range(pts.shape[0]):
                dist = float(np.linalg.norm(pts[di] - tr.last_point))
                if dist <= gate:
                    pairs.append((dist, ti, di))
        pairs.sort()
        used_t: set[int] = set()
        used_d: set[int] = set()
        for dist, ti, di in pairs:
            if ti in used_t or di in used_d:
                continue
            used_t.add(ti)
            used_d.add(di)
            active[ti].frames.append(fi)
            active[ti].points.append(pts[di])
        survivors = [tr for ti, tr in enumerate(active) if ti in used_t]
        for di in range(pts.shape[0]):
            if di in used_d:
                continue
            tr = Track(track_id=next_id, frames=[fi], points=[pts[di]])
            next_id += 1
            tracks.append(tr)
            survivors.append(tr)
        active = survivors
    return tracks


def save_cube(cube: RadarCube, path) -> None:
    """ASCII header 'FMCW1 n_rx n_chirps n_samples fs slope f_start' then
    little-endian float32 (re, im) pairs in C order (rx, chirp, sample)."""
    cfg = cube.cfg
    header = "FMCW1 %d %d %d %s %s %s\n" % (
        cfg.n_rx,
        cfg.n_chirps,
        cfg.n_samples,
        fmt_float(cfg.fs_hz),
        fmt_float(cfg.slope_hz_per_s),
        fmt_float(cfg.f_start_hz),
    )
    flat = np.empty(cube.data.size * 2, dtype="<f4")
    flat[0::2] = cube.data.real.ravel().astype(np.float32)
    flat[1::2] = cube.data.imag.ravel().astype(np.float32)
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(flat.tobytes())


def load_cube(path, cfg_overrides: dict | None = None) -> RadarCube:
    """Read a cube written by save_cube; rx spacing defaults to half-lambda
    (the header does not store element positions)."""
    with open(path, "rb") as fh:
        header = b""
        while not header.endswith(b"\n"):
            ch = fh.read(1)
            if not ch:
                raise ValueError("truncated cube header")
            header += ch
        parts = header.decode("ascii").split()
        if parts[0] != "FMCW1" or len(parts) != 7:
            raise ValueError("not an FMCW1 cube file")
        n_rx, n_chirps, n_samples = int(parts[1]), int(parts[2]), int(parts[3])
        fs, slope, f_start = float(parts[4]), float(parts[5]), float(parts[6])
        raw = np.frombuffer(fh.read(), dtype="<f4")
    if raw.size != 2 * n_rx * n_chirps * n_samples:
        raise ValueError("cube payload size mismatch")
    data = (raw[0::2] + 1j * raw[1::2]).astype(complex).reshape(n_rx, n_chirps, n_samples)
    kwargs = dict(
        f_start_hz=f_start,
        slope_hz_per_s=slope,
        t_chirp_s=n_samples / fs,
        fs_hz=fs,
        n_samples=n_samples,
        n_chirps=n_chirps,
        rx_positions_wl=tuple(0.5 * i for i in range(n_rx)),
    )
    if cfg_overrides:
        kwargs.update(cfg_overrides)
    return RadarCube(data=data, cfg=ChirpConfig(**kwargs))


def save_detections_csv(detections: list[RadarDetection], path) -> None:
    lines = ["frame,range_m,velocity_mps,azimuth_deg,cluster_id,track_id"]
    for d in detections:
        lines.append(
            "%d,%s,%s,%s,%d,%d"
            % (
                d.frame,
                fmt_float(d.range_m),
                fmt_float(d.velocity_mps),
                fmt_float(d.azimuth_deg),
                d.cluster_id,
                d.track_id,
            )
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
