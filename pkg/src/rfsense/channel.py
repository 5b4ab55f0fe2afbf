"""Multipath frequency-domain channel synthesis for OFDM pilot grids.

The received grid for port m, subcarrier k, symbol i is

    Y[m,k,i] = sum_l  gain_l * C_i(v_l) * D_l[m] * Dv_k(v_l) * g_k(t_l) * X[k,i]  + N[m,k,i]

with g the delay steering across subcarriers, C the symbol-rate Doppler
rotation, Dv the (small) Doppler phase ramp across subcarriers, D the array
steering vector, and N circular complex Gaussian noise.  Velocity is
positive for a receding scatterer, matching the e^{-j2pi(2v/lambda)t}
Doppler convention used throughout.

The symbol-rate Doppler factor is applied per absolute symbol index i with
the full symbol duration T_total = T_symbol + T_cp, so sparse symbol
occupancy produces the aliasing that the imaging chain studies.  The
subcarrier ramp Dv has no independently documented physical origin; it is
implemented verbatim and can be disabled with ``subcarrier_doppler=False``
for sensitivity analysis (it amounts to a sub-cell delay skew).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .antenna import (
    ArrayGeometry,
    PolarizationState,
    SteeringModel,
    WaveDirection,
    steering_vector,
)
from .util import SPEED_OF_LIGHT, fmt_float
from .waveforms import ResourceGrid


@dataclass(frozen=True)
class PathParams:
    """One propagation path: complex gain, delay, arrival direction, motion."""

    gain: complex
    delay_s: float
    direction: WaveDirection
    velocity_mps: float = 0.0
    polarization: PolarizationState = PolarizationState()

    def __post_init__(self):
        if self.delay_s < 0:
            raise ValueError("path delay must be non-negative")


@dataclass(frozen=True)
class ChannelConfig:
    carrier_hz: float
    t_symbol_s: float
    t_cp_s: float = 0.0
    noise_variance: float = 0.0  # per complex sample; sigma^2/2 per real axis
    subcarrier_doppler: bool = True

    def __post_init__(self):
        if self.carrier_hz <= 0 or self.t_symbol_s <= 0 or self.t_cp_s < 0:
            raise ValueError("carrier and symbol timing must be positive")
        if self.noise_variance < 0:
            raise ValueError("noise variance must be non-negative")

    @property
    def t_total_s(self) -> float:
        return self.t_symbol_s + self.t_cp_s

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_hz


@dataclass
class PortSnapshots:
    """Received tensor, shape (n_ports, n_subcarriers, n_symbols)."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3:
            raise ValueError("snapshots must be (ports, subcarriers, symbols)")

    @property
    def n_ports(self) -> int:
        return self.data.shape[0]

    @property
    def n_subcarriers(self) -> int:
        return self.data.shape[1]

    @property
    def n_symbols(self) -> int:
        return self.data.shape[2]


def grid_subcarrier_freqs(grid: ResourceGrid) -> np.ndarray:
    """Baseband subcarrier frequencies k * scs relative to subcarrier 0."""
    return np.arange(grid.n_subcarriers) * grid.scs_hz


def delay_steering(delay_s: float, subcarrier_freqs: np.ndarray) -> np.ndarray:
    """g_k = exp(-j 2 pi (f_k - f_0) * delay); element 0 is always 1.

    Referencing every frequency to the first keeps the common carrier phase
    out of the model (it is absorbed by the path gain), so synthesis and
    estimation agree on what "delay" means.
    """
    f = np.asarray(subcarrier_freqs, dtype=float)
    return np.exp(-2j * np.pi * (f - f[0]) * delay_s)


def doppler_factors(
    velocity_mps: float,
    cfg: ChannelConfig,
    n_symbols: int,
    n_subcarriers: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-symbol rotation C_i and per-subcarrier ramp Dv_k for one velocity.

    C_i = exp(-j 2 pi i T_total 2 v / lambda), i = 0..n_symbols-1
    Dv_k = exp(-j 2 pi k T_symbol 2 v / (n lambda)), k = 0..n_subcarriers-1

    A velocity satisfying 2 v T_total / lambda = 1 wraps C by a full cycle
    per symbol and is therefore invisible to the symbol-rate axis.
    """
    lam = cfg.wavelength_m
    i = np.arange(n_symbols)
    c_sym = np.exp(-2j * np.pi * i * cfg.t_total_s * 2.0 * velocity_mps / lam)
    if cfg.subcarrier_doppler:
        k = np.arange(n_subcarriers)
        dv = np.exp(
            -2j * np.pi * k * cfg.t_symbol_s * 2.0 * velocity_mps / (n_subcarriers * lam)
        )
    else:
        dv = np.ones(n_subcarriers, dtype=complex)
    return c_sym, dv


def snr_to_noise_variance(snr_db: float, signal_power: float) -> float:
    """sigma^2 = P / 10^(snr/10); P is mean per-port per-RE signal power."""
    if signal_power < 0:
        raise ValueError("signal power must be non-negative")
    return signal_power / 10.0 ** (snr_db / 10.0)


def mean_occupied_power(clean: np.ndarray, grid: ResourceGrid) -> float:
    """Mean |Y|^2 over ports and occupied resource elements."""
    mask = grid.cells != 0
    if not np.any(mask):
        raise ValueError("grid has no occupied cells")
    return float(np.mean(np.abs(clean[:, mask]) ** 2))


def add_noise(clean: np.ndarray, noise_variance: float, rng: np.random.Generator):
    """Circular complex Gaussian, variance/2 per real axis, i.i.d. per cell."""
    if noise_variance == 0.0:
        return clean.copy()
    scale = np.sqrt(noise_variance / 2.0)
    noise = rng.standard_normal(clean.shape) + 1j * rng.standard_normal(clean.shape)
    return clean + scale * noise


def synthesize_received(
    grid: ResourceGrid,
    paths: list[PathParams],
    cfg: ChannelConfig,
    model: SteeringModel,
    geometry: ArrayGeometry | None = None,
    rng: np.random.Generator | int | None = None,
) -> PortSnapshots:
    """Superpose all paths on the transmitted grid and add seeded noise.

    Synthesis is linear in the path list and in the transmitted cells; the
    noise realization is fully determined by ``rng`` (an integer seed or a
    Generator).  With ``noise_variance == 0`` the output is deterministic.
    """
    geometry = geometry or ArrayGeometry.single()
    clean = synthesize_clean(grid, paths, cfg, model, geometry)
    if cfg.noise_variance > 0.0:
        if rng is None:
            raise ValueError("noise requested but no rng/seed given")
        if not isinstance(rng, np.random.Generator):
            rng = np.random.default_rng(rng)
        data = add_noise(clean, cfg.noise_variance, rng)
    else:
        data = clean
    return PortSnapshots(data=data)


def synthesize_clean(
    grid: ResourceGrid,
    paths: list[PathParams],
    cfg: ChannelConfig,
    model: SteeringModel,
    geometry: ArrayGeometry,
) -> np.ndarray:
    freqs = grid_subcarrier_freqs(grid)
    n_ports = geometry.n_elements * model.n_ports
    out = np.zeros((n_ports, grid.n_subcarriers, grid.n_symbols), dtype=complex)
    x = grid.cells
    for path in paths:
        d = steering_vector(model, geometry, path.direction, path.polarization)
        g = delay_steering(path.delay_s, freqs)
        c_sym, dv = doppler_factors(
            path.velocity_mps, cfg, grid.n_symbols, grid.n_subcarriers
        )
        faded = (g * dv)[:, None] * (x * c_sym[None, :])
        out += path.gain * d[:, None, None] * faded[None, :, :]
    return out


def dump_snapshots_csv(snapshots: PortSnapshots, path) -> None:
    """All cells: port, subcarrier, symbol, re, im (row-major)."""
    lines = ["port,subcarrier,symbol,re,im"]
    m, n, k = snapshots.data.shape
    for p in range(m):
        for sc in range(n):
            row = snapshots.data[p, sc]
            for sym in range(k):
                v = row[sym]
                lines.append(
                    "%d,%d,%d,%s,%s" % (p, sc, sym, fmt_float(v.real), fmt_float(v.imag))
                )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
