"""Scenario configuration: TOML schema, validation and canonical output.

One file describes one scenario.  The ``[scenario]`` table selects the
kind (positioning-ul, positioning-dl, positioning-multibs, imaging, fmcw)
and the remaining tables configure the modules that kind touches.  Parsing
is strict: unknown keys, wrong types and out-of-range values raise
:class:`ConfigError` with the dotted path of the offending field, so a
batch driver can point at the exact line to fix.

Serialization is canonical (fixed table order, fixed key order, ``repr``
floats), which makes parse -> serialize -> parse an identity and gives the
run manifest a stable config hash.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

try:
    import tomllib as _toml
except ModuleNotFoundError:  # python < 3.11
    import tomli as _toml

from ..waveforms import CombConfig

KINDS = ("positioning-ul", "positioning-dl", "positioning-multibs", "imaging", "fmcw")

_REQUIRED = object()


class ConfigError(ValueError):
    """Validation failure at a specific dotted config path."""

    def __init__(self, path: str, message: str):
        self.path = path
        self.message = message
        super().__init__("%s: %s" % (path, message))


def _toml_escape(s: str) -> str:
    out = []
    for ch in s:
        if ch == "\\":
            out.append("\\\\")
        elif ch == '"':
            out.append('\\"')
        elif ord(ch) < 0x20:
            out.append("\\u%04x" % ord(ch))
        else:
            out.append(ch)
    return "".join(out)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        r = repr(v)
        # repr of an integral float already carries ".0"; exponents are fine
        return r
    if isinstance(v, str):
        return '"%s"' % _toml_escape(v)
    if isinstance(v, (list, tuple)):
        return "[%s]" % ", ".join(_toml_value(x) for x in v)
    raise TypeError("cannot serialize %r" % type(v))


def write_toml(tables: dict, path=None) -> str:
    """Serialize {table: {key: value}} deterministically.

    A list of dicts becomes an array of tables ``[[table.key]]``; nested
    dicts become subtables.  Key order is the dict insertion order, which
    the schema below keeps fixed.
    """
    lines: list[str] = []

    def emit(prefix: str, table: dict):
        scalars = [(k, v) for k, v in table.items() if not _is_table(v)]
        subtables = [(k, v) for k, v in table.items() if _is_table(v)]
        if prefix:
            lines.append("[%s]" % prefix)
        for k, v in scalars:
            lines.append("%s = %s" % (k, _toml_value(v)))
        if prefix:
            lines.append("")
        for k, v in subtables:
            name = "%s.%s" % (prefix, k) if prefix else k
            if isinstance(v, dict):
                emit(name, v)
            else:  # list of dicts -> array of tables
                for item in v:
                    lines.append("[[%s]]" % name)
                    for ik, iv in item.items():
                        lines.append("%s = %s" % (ik, _toml_value(iv)))
                    lines.append("")

    def _is_table(v):
        return isinstance(v, dict) or (
            isinstance(v, list) and len(v) > 0 and isinstance(v[0], dict)
        )

    for name, table in tables.items():
        emit(name, table)
    text = "\n".join(lines).rstrip("\n") + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _take(table: dict, key: str, path: str, kind, default=_REQUIRED):
    """Pop a typed value; kind is a type, tuple of types, or 'number'."""
    if key not in table:
        if default is _REQUIRED:
            raise ConfigError("%s.%s" % (path, key), "missing required key")
        return default
    v = table.pop(key)
    if kind == "number":
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError("%s.%s" % (path, key), "expected a number, got %r" % v)
        return float(v)
    if kind is int and isinstance(v, bool):
        raise ConfigError("%s.%s" % (path, key), "expected an integer, got a bool")
    if not isinstance(v, kind):
        raise ConfigError(
            "%s.%s" % (path, key), "expected %s, got %r" % (getattr(kind, "__name__", kind), v)
        )
    return v


def _no_extras(table: dict, path: str):
    if table:
        raise ConfigError("%s.%s" % (path, sorted(table)[0]), "unknown key")


def _number_list(v, path: str, length: int | None = None) -> list[float]:
    if not isinstance(v, list) or any(
        isinstance(x, bool) or not isinstance(x, (int, float)) for x in v
    ):
        raise ConfigError(path, "expected a list of numbers")
    if length is not None and len(v) != length:
        raise ConfigError(path, "expected %d entries, got %d" % (length, len(v)))
    return [float(x) for x in v]


@dataclass
class SignalSection:
    family: str = "srs"
    n_subcarriers: int = 256
    scs_hz: float = 15000.0
    comb_size: int = 2
    comb_offset: int = 0
    start_symbol: int = 0
    n_symbols: int = 8
    zc_root: int = 25
    pn_seed: int = 0
    per_symbol: bool | None = None
    max_joint_dim: int = 768

    def resolved_per_symbol(self) -> bool:
        if self.per_symbol is None:
            return self.family != "srs"
        return self.per_symbol


@dataclass
class ChannelSection:
    carrier_hz: float = 3.5e9
    snr_db: float | None = 0.0
    t_cp_s: float = 0.0
    subcarrier_doppler: bool = True


@dataclass
class AntennaSection:
    kind: str = "vector"  # vector | scalar
    nx: int = 1
    ny: int = 1
    spacing_wl: float = 0.5
    hz_row: str = "orthonormal"


@dataclass
class PolarizationSection:
    gamma_deg: float = 45.0
    eta_deg: float = 0.0


@dataclass
class SceneSection:
    stations: list = field(default_factory=lambda: [[0.0, 0.0, 25.0]])
    ue_x_m: list = field(default_factory=lambda: [8.0, 18.0])
    ue_y_m: list = field(default_factory=lambda: [8.0, 18.0])
    ue_z_m: list = field(default_factory=lambda: [0.0, 6.0])
    ground_amp: float = 0.0  # image-method ground bounce amplitude, 0 disables


@dataclass
class GridSection:
    mode: str = "local"  # local | global
    azimuth_step_deg: float = 1.0
    elevation_step_deg: float = 1.0
    delay_step_s: float = 1.0e-9
    azimuth_halfwidth_deg: float = 4.0
    elevation_halfwidth_deg: float = 4.0
    delay_halfwidth_s: float = 4.0e-9
    azimuth_deg: list | None = None  # [start, stop, step] in global mode
    elevation_deg: list | None = None
    delay_s: list | None = None


@dataclass
class EstimatorSection:
    use: list = field(default_factory=lambda: ["music", "sage"])
    n_sources: int = 1
    solver: str = "svd"
    xi_rel: float = 1.0e-3
    max_iter: int = 20


@dataclass
class SweepSection:
    snr_db: list = field(default_factory=list)
    aoa_only: bool = True
    trials: int | None = None


@dataclass
class ImagingScatterer:
    gain: float = 1.0
    delay_s: float = 0.0
    velocity_mps: float = 0.0


@dataclass
class ImagingSection:
    n_total_symbols: int = 500
    occupancy_period: int = 7
    snr_db: float | None = None
    k_sigma: float = 6.0
    log_scale: bool = True
    write_csv: bool = False
    reference_spacing_mps: float | None = None
    scatterers: list = field(default_factory=list)


@dataclass
class FmcwTargetSpec:
    range_m: float = 10.0
    velocity_mps: float = 0.0
    azimuth_deg: float = 0.0
    rcs_gain: float = 1.0


@dataclass
class FmcwSection:
    f_start_hz: float = 77.0e9
    slope_hz_per_s: float = 30.0e12
    t_chirp_s: float = 25.6e-6
    t_idle_s: float = 0.0
    fs_hz: float = 10.0e6
    n_samples: int = 256
    n_chirps: int = 128
    n_rx: int = 4
    snr_db: float | None = 20.0
    k_sigma: float = 6.0
    n_angle: int = 64
    eps_m: float = 1.0
    min_pts: int = 1
    n_frames: int = 1
    gate_m: float = 3.0
    save_cube: bool = False
    micro_doppler: bool = False
    md_window: int = 64
    md_hop: int = 16
    targets: list = field(default_factory=list)


@dataclass
class OutputSection:
    dir: str = ""  # empty -> runs/<name>
    histogram_bins: int = 30
    write_trials: bool = True


@dataclass
class ScenarioConfig:
    kind: str = "positioning-ul"
    name: str = "scenario"
    seed: int = 0
    trials: int = 1
    signal: SignalSection = field(default_factory=SignalSection)
    channel: ChannelSection = field(default_factory=ChannelSection)
    antenna: AntennaSection = field(default_factory=AntennaSection)
    polarization: PolarizationSection = field(default_factory=PolarizationSection)
    scene: SceneSection = field(default_factory=SceneSection)
    grid: GridSection = field(default_factory=GridSection)
    estimators: EstimatorSection = field(default_factory=EstimatorSection)
    sweep: SweepSection | None = None
    imaging: ImagingSection = field(default_factory=ImagingSection)
    fmcw: FmcwSection = field(default_factory=FmcwSection)
    output: OutputSection = field(default_factory=OutputSection)

    @property
    def is_positioning(self) -> bool:
        return self.kind.startswith("positioning")


def srs_symbol_chunks(n_symbols: int, max_per_resource: int = 12) -> list[int]:
    """Split a symbol budget into per-resource blocks of <= 12 symbols.

    A single sounding resource spans at most 12 symbols; longer snapshots
    stack several resources back to back on the same comb.
    """
    chunks = []
    left = n_symbols
    while left > 0:
        take = min(left, max_per_resource)
        chunks.append(take)
        left -= take
    return chunks


def _parse_signal(table: dict, path: str) -> SignalSection:
    s = SignalSection(
        family=_take(table, "family", path, str, "srs"),
        n_subcarriers=_take(table, "n_subcarriers", path, int, 256),
        scs_hz=_take(table, "scs_hz", path, "number", 15000.0),
        comb_size=_take(table, "comb_size", path, int, 2),
        comb_offset=_take(table, "comb_offset", path, int, 0),
        start_symbol=_take(table, "start_symbol", path, int, 0),
        n_symbols=_take(table, "n_symbols", path, int, 8),
        zc_root=_take(table, "zc_root", path, int, 25),
        pn_seed=_take(table, "pn_seed", path, int, 0),
        per_symbol=_take(table, "per_symbol", path, bool, None),
        max_joint_dim=_take(table, "max_joint_dim", path, int, 768),
    )
    _no_extras(table, path)
    if s.family not in ("srs", "prs", "csirs"):
        raise ConfigError(path + ".family", "must be srs, prs or csirs")
    if s.n_subcarriers < 2:
        raise ConfigError(path + ".n_subcarriers", "must be >= 2")
    if s.scs_hz <= 0:
        raise ConfigError(path + ".scs_hz", "must be positive")
    if s.n_symbols < 1:
        raise ConfigError(path + ".n_symbols", "must be >= 1")
    if s.max_joint_dim < 2:
        raise ConfigError(path + ".max_joint_dim", "must be >= 2")
    return s


def _validate_signal_comb(s: SignalSection, path: str) -> None:
    try:
        for n_sym in srs_symbol_chunks(s.n_symbols) if s.family == "srs" else [s.n_symbols]:
            CombConfig(
                comb_size=s.comb_size,
                comb_offset=s.comb_offset,
                start_symbol=s.start_symbol,
                n_symbols=n_sym,
            ).validate_family(s.family)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


def _parse_channel(table: dict, path: str) -> ChannelSection:
    c = ChannelSection(
        carrier_hz=_take(table, "carrier_hz", path, "number", 3.5e9),
        snr_db=_take(table, "snr_db", path, "number", None),
        t_cp_s=_take(table, "t_cp_s", path, "number", 0.0),
        subcarrier_doppler=_take(table, "subcarrier_doppler", path, bool, True),
    )
    _no_extras(table, path)
    if c.carrier_hz <= 0:
        raise ConfigError(path + ".carrier_hz", "must be positive")
    if c.t_cp_s < 0:
        raise ConfigError(path + ".t_cp_s", "must be >= 0")
    return c


def _parse_antenna(table: dict, path: str) -> AntennaSection:
    a = AntennaSection(
        kind=_take(table, "kind", path, str, "vector"),
        nx=_take(table, "nx", path, int, 1),
        ny=_take(table, "ny", path, int, 1),
        spacing_wl=_take(table, "spacing_wl", path, "number", 0.5),
        hz_row=_take(table, "hz_row", path, str, "orthonormal"),
    )
    _no_extras(table, path)
    if a.kind not in ("vector", "scalar"):
        raise ConfigError(path + ".kind", "must be vector or scalar")
    if a.nx < 1 or a.ny < 1:
        raise ConfigError(path + ".nx", "array dimensions must be >= 1")
    if a.spacing_wl <= 0:
        raise ConfigError(path + ".spacing_wl", "must be positive")
    if a.hz_row not in ("orthonormal", "printed"):
        raise ConfigError(path + ".hz_row", "must be orthonormal or printed")
    return a


def _parse_polarization(table: dict, path: str) -> PolarizationSection:
    p = PolarizationSection(
        gamma_deg=_take(table, "gamma_deg", path, "number", 45.0),
        eta_deg=_take(table, "eta_deg", path, "number", 0.0),
    )
    _no_extras(table, path)
    if not 0.0 <= p.gamma_deg <= 90.0:
        raise ConfigError(path + ".gamma_deg", "must lie in [0, 90]")
    if not -180.0 <= p.eta_deg <= 180.0:
        raise ConfigError(path + ".eta_deg", "must lie in [-180, 180]")
    return p


def _parse_scene(table: dict, path: str, kind: str) -> SceneSection:
    raw_stations = _take(table, "stations", path, list, [[0.0, 0.0, 25.0]])
    stations = [
        _number_list(st, "%s.stations[%d]" % (path, i), 3) for i, st in enumerate(raw_stations)
    ]
    sc = SceneSection(
        stations=stations,
        ue_x_m=_number_list(_take(table, "ue_x_m", path, list, [8.0, 18.0]), path + ".ue_x_m", 2),
        ue_y_m=_number_list(_take(table, "ue_y_m", path, list, [8.0, 18.0]), path + ".ue_y_m", 2),
        ue_z_m=_number_list(_take(table, "ue_z_m", path, list, [0.0, 6.0]), path + ".ue_z_m", 2),
        ground_amp=_take(table, "ground_amp", path, "number", 0.0),
    )
    _no_extras(table, path)
    if not 0.0 <= sc.ground_amp < 1.0:
        raise ConfigError(path + ".ground_amp", "must lie in [0, 1)")
    if len(sc.stations) < 1:
        raise ConfigError(path + ".stations", "need at least one station")
    if kind == "positioning-multibs" and len(sc.stations) < 2:
        raise ConfigError(path + ".stations", "multi-station fusion needs >= 2 stations")
    if kind in ("positioning-ul", "positioning-dl") and len(sc.stations) != 1:
        raise ConfigError(path + ".stations", "single-station kinds take exactly one station")
    for key in ("ue_x_m", "ue_y_m", "ue_z_m"):
        lo, hi = getattr(sc, key)
        if hi < lo:
            raise ConfigError("%s.%s" % (path, key), "range must be [lo, hi] with hi >= lo")
    return sc


def _parse_grid(table: dict, path: str) -> GridSection:
    g = GridSection(
        mode=_take(table, "mode", path, str, "local"),
        azimuth_step_deg=_take(table, "azimuth_step_deg", path, "number", 1.0),
        elevation_step_deg=_take(table, "elevation_step_deg", path, "number", 1.0),
        delay_step_s=_take(table, "delay_step_s", path, "number", 1.0e-9),
        azimuth_halfwidth_deg=_take(table, "azimuth_halfwidth_deg", path, "number", 4.0),
        elevation_halfwidth_deg=_take(table, "elevation_halfwidth_deg", path, "number", 4.0),
        delay_halfwidth_s=_take(table, "delay_halfwidth_s", path, "number", 4.0e-9),
        azimuth_deg=_take(table, "azimuth_deg", path, list, None),
        elevation_deg=_take(table, "elevation_deg", path, list, None),
        delay_s=_take(table, "delay_s", path, list, None),
    )
    _no_extras(table, path)
    if g.mode not in ("local", "global"):
        raise ConfigError(path + ".mode", "must be local or global")
    if g.mode == "local":
        for key in ("azimuth_deg", "elevation_deg", "delay_s"):
            if getattr(g, key) is not None:
                raise ConfigError("%s.%s" % (path, key), "only valid in global mode")
        for key in (
            "azimuth_step_deg",
            "elevation_step_deg",
            "delay_step_s",
            "azimuth_halfwidth_deg",
            "elevation_halfwidth_deg",
            "delay_halfwidth_s",
        ):
            if getattr(g, key) <= 0:
                raise ConfigError("%s.%s" % (path, key), "must be positive")
    else:
        for key in ("azimuth_deg", "elevation_deg", "delay_s"):
            v = getattr(g, key)
            if v is None:
                raise ConfigError("%s.%s" % (path, key), "required in global mode")
            vv = _number_list(v, "%s.%s" % (path, key), 3)
            setattr(g, key, vv)
            if vv[2] <= 0:
                raise ConfigError("%s.%s" % (path, key), "step must be positive")
            if vv[1] < vv[0]:
                raise ConfigError("%s.%s" % (path, key), "stop must be >= start")
    return g


def _parse_estimators(table: dict, path: str) -> EstimatorSection:
    use = _take(table, "use", path, list, ["music", "sage"])
    e = EstimatorSection(
        use=use,
        n_sources=_take(table, "n_sources", path, int, 1),
        solver=_take(table, "solver", path, str, "svd"),
        xi_rel=_take(table, "xi_rel", path, "number", 1.0e-3),
        max_iter=_take(table, "max_iter", path, int, 20),
    )
    _no_extras(table, path)
    if not e.use:
        raise ConfigError(path + ".use", "need at least one estimator")
    for name in e.use:
        if name not in ("music", "sage"):
            raise ConfigError(path + ".use", "unknown estimator %r" % name)
    if len(set(e.use)) != len(e.use):
        raise ConfigError(path + ".use", "duplicate estimator")
    if e.solver not in ("svd", "eig"):
        raise ConfigError(path + ".solver", "must be svd or eig")
    if e.n_sources < 1:
        raise ConfigError(path + ".n_sources", "must be >= 1")
    if e.max_iter < 1:
        raise ConfigError(path + ".max_iter", "must be >= 1")
    if e.xi_rel <= 0:
        raise ConfigError(path + ".xi_rel", "must be positive")
    return e


def _parse_sweep(table: dict, path: str) -> SweepSection:
    sw = SweepSection(
        snr_db=_number_list(_take(table, "snr_db", path, list), path + ".snr_db"),
        aoa_only=_take(table, "aoa_only", path, bool, True),
        trials=_take(table, "trials", path, int, None),
    )
    _no_extras(table, path)
    if not sw.snr_db:
        raise ConfigError(path + ".snr_db", "need at least one SNR point")
    if sw.trials is not None and sw.trials < 1:
        raise ConfigError(path + ".trials", "must be >= 1")
    return sw


def _parse_imaging(table: dict, path: str) -> ImagingSection:
    raw_scat = _take(table, "scatterers", path, list, [])
    scatterers = []
    for i, item in enumerate(raw_scat):
        ipath = "%s.scatterers[%d]" % (path, i)
        if not isinstance(item, dict):
            raise ConfigError(ipath, "expected a table")
        item = dict(item)
        sc = ImagingScatterer(
            gain=_take(item, "gain", ipath, "number", 1.0),
            delay_s=_take(item, "delay_s", ipath, "number", 0.0),
            velocity_mps=_take(item, "velocity_mps", ipath, "number", 0.0),
        )
        _no_extras(item, ipath)
        if sc.delay_s < 0:
            raise ConfigError(ipath + ".delay_s", "must be >= 0")
        scatterers.append(sc)
    im = ImagingSection(
        n_total_symbols=_take(table, "n_total_symbols", path, int, 500),
        occupancy_period=_take(table, "occupancy_period", path, int, 7),
        snr_db=_take(table, "snr_db", path, "number", None),
        k_sigma=_take(table, "k_sigma", path, "number", 6.0),
        log_scale=_take(table, "log_scale", path, bool, True),
        write_csv=_take(table, "write_csv", path, bool, False),
        reference_spacing_mps=_take(table, "reference_spacing_mps", path, "number", None),
        scatterers=scatterers,
    )
    _no_extras(table, path)
    if im.occupancy_period < 1:
        raise ConfigError(path + ".occupancy_period", "must be >= 1")
    if im.n_total_symbols < 2 * im.occupancy_period:
        raise ConfigError(path + ".n_total_symbols", "need at least two occupied symbols")
    if not scatterers:
        raise ConfigError(path + ".scatterers", "need at least one scatterer")
    return im


def _parse_fmcw(table: dict, path: str) -> FmcwSection:
    raw_targets = _take(table, "targets", path, list, [])
    targets = []
    for i, item in enumerate(raw_targets):
        ipath = "%s.targets[%d]" % (path, i)
        if not isinstance(item, dict):
            raise ConfigError(ipath, "expected a table")
        item = dict(item)
        t = FmcwTargetSpec(
            range_m=_take(item, "range_m", ipath, "number", 10.0),
            velocity_mps=_take(item, "velocity_mps", ipath, "number", 0.0),
            azimuth_deg=_take(item, "azimuth_deg", ipath, "number", 0.0),
            rcs_gain=_take(item, "rcs_gain", ipath, "number", 1.0),
        )
        _no_extras(item, ipath)
        if t.range_m < 0:
            raise ConfigError(ipath + ".range_m", "must be >= 0")
        if not -90.0 <= t.azimuth_deg <= 90.0:
            raise ConfigError(ipath + ".azimuth_deg", "must lie in [-90, 90]")
        targets.append(t)
    f = FmcwSection(
        f_start_hz=_take(table, "f_start_hz", path, "number", 77.0e9),
        slope_hz_per_s=_take(table, "slope_hz_per_s", path, "number", 30.0e12),
        t_chirp_s=_take(table, "t_chirp_s", path, "number", 25.6e-6),
        t_idle_s=_take(table, "t_idle_s", path, "number", 0.0),
        fs_hz=_take(table, "fs_hz", path, "number", 10.0e6),
        n_samples=_take(table, "n_samples", path, int, 256),
        n_chirps=_take(table, "n_chirps", path, int, 128),
        n_rx=_take(table, "n_rx", path, int, 4),
        snr_db=_take(table, "snr_db", path, "number", 20.0),
        k_sigma=_take(table, "k_sigma", path, "number", 6.0),
        n_angle=_take(table, "n_angle", path, int, 64),
        eps_m=_take(table, "eps_m", path, "number", 1.0),
        min_pts=_take(table, "min_pts", path, int, 1),
        n_frames=_take(table, "n_frames", path, int, 1),
        gate_m=_take(table, "gate_m", path, "number", 3.0),
        save_cube=_take(table, "save_cube", path, bool, False),
        micro_doppler=_take(table, "micro_doppler", path, bool, False),
        md_window=_take(table, "md_window", path, int, 64),
        md_hop=_take(table, "md_hop", path, int, 16),
        targets=targets,
    )
    _no_extras(table, path)
    if not targets:
        raise ConfigError(path + ".targets", "need at least one target")
    if f.n_rx < 1:
        raise ConfigError(path + ".n_rx", "must be >= 1")
    if f.n_angle < f.n_rx:
        raise ConfigError(path + ".n_angle", "must be >= n_rx")
    if f.n_frames < 1:
        raise ConfigError(path + ".n_frames", "must be >= 1")
    if f.eps_m <= 0:
        raise ConfigError(path + ".eps_m", "must be positive")
    if f.min_pts < 1:
        raise ConfigError(path + ".min_pts", "must be >= 1")
    if f.gate_m <= 0:
        raise ConfigError(path + ".gate_m", "must be positive")
    if f.micro_doppler and not 2 <= f.md_window <= f.n_chirps:
        raise ConfigError(path + ".md_window", "must lie in [2, n_chirps]")
    if f.md_hop < 1:
        raise ConfigError(path + ".md_hop", "must be >= 1")
    try:
        from ..fmcw import ChirpConfig

        ChirpConfig(
            f_start_hz=f.f_start_hz,
            slope_hz_per_s=f.slope_hz_per_s,
            t_chirp_s=f.t_chirp_s,
            t_idle_s=f.t_idle_s,
            fs_hz=f.fs_hz,
            n_samples=f.n_samples,
            n_chirps=f.n_chirps,
            rx_positions_wl=tuple(0.5 * i for i in range(f.n_rx)),
        )
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc
    return f


def _parse_output(table: dict, path: str) -> OutputSection:
    o = OutputSection(
        dir=_take(table, "dir", path, str, ""),
        histogram_bins=_take(table, "histogram_bins", path, int, 30),
        write_trials=_take(table, "write_trials", path, bool, True),
    )
    _no_extras(table, path)
    if o.histogram_bins < 1:
        raise ConfigError(path + ".histogram_bins", "must be >= 1")
    return o


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate a scenario from TOML text."""
    try:
        raw = _toml.loads(text)
    except _toml.TOMLDecodeError as exc:
        raise ConfigError("<toml>", str(exc)) from exc
    return config_from_dict(raw)


def load_config(path) -> ScenarioConfig:
    with open(path, "rb") as fh:
        data = fh.read()
    return parse_config(data.decode("utf-8"))


def config_from_dict(raw: dict) -> ScenarioConfig:
    raw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in raw.items()}
    if "scenario" not in raw:
        raise ConfigError("scenario", "missing required table")
    sc_table = raw.pop("scenario")
    if not isinstance(sc_table, dict):
        raise ConfigError("scenario", "must be a table")
    kind = _take(sc_table, "kind", "scenario", str)
    if kind not in KINDS:
        raise ConfigError("scenario.kind", "must be one of %s" % (KINDS,))
    cfg = ScenarioConfig(
        kind=kind,
        name=_take(sc_table, "name", "scenario", str, "scenario"),
        seed=_take(sc_table, "seed", "scenario", int, 0),
        trials=_take(sc_table, "trials", "scenario", int, 1),
    )
    _no_extras(sc_table, "scenario")
    if cfg.trials < 1:
        raise ConfigError("scenario.trials", "must be >= 1")
    if cfg.seed < 0:
        raise ConfigError("scenario.seed", "must be >= 0")
    if not cfg.name:
        raise ConfigError("scenario.name", "must be non-empty")

    def table(name: str) -> dict:
        v = raw.pop(name, {})
        if not isinstance(v, dict):
            raise ConfigError(name, "must be a table")
        return v

    if cfg.is_positioning:
        cfg.signal = _parse_signal(table("signal"), "signal")
        _validate_signal_comb(cfg.signal, "signal")
        cfg.channel = _parse_channel(table("channel"), "channel")
        cfg.antenna = _parse_antenna(table("antenna"), "antenna")
        cfg.polarization = _parse_polarization(table("polarization"), "polarization")
        cfg.scene = _parse_scene(table("scene"), "scene", cfg.kind)
        cfg.grid = _parse_grid(table("grid"), "grid")
        cfg.estimators = _parse_estimators(table("estimators"), "estimators")
        if "sweep" in raw:
            cfg.sweep = _parse_sweep(table("sweep"), "sweep")
            if cfg.kind == "positioning-multibs":
                raise ConfigError("sweep", "sweeps apply to single-station kinds only")
            if cfg.sweep.aoa_only and cfg.grid.mode != "global":
                raise ConfigError("grid.mode", "aoa_only sweeps need global grid axes")
    elif cfg.kind == "imaging":
        cfg.signal = _parse_signal(table("signal"), "signal")
        cfg.channel = _parse_channel(table("channel"), "channel")
        cfg.imaging = _parse_imaging(table("imaging"), "imaging")
    elif cfg.kind == "fmcw":
        cfg.fmcw = _parse_fmcw(table("fmcw"), "fmcw")
    cfg.output = _parse_output(table("output"), "output")
    _no_extras(raw, "<root>")
    return cfg


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Canonical nested-dict form with every relevant field materialized."""
    out: dict = {
        "scenario": {
            "kind": cfg.kind,
            "name": cfg.name,
            "seed": cfg.seed,
            "trials": cfg.trials,
        }
    }
    if cfg.is_positioning or cfg.kind == "imaging":
        sig = {
            "family": cfg.signal.family,
            "n_subcarriers": cfg.signal.n_subcarriers,
            "scs_hz": cfg.signal.scs_hz,
            "comb_size": cfg.signal.comb_size,
            "comb_offset": cfg.signal.comb_offset,
            "start_symbol": cfg.signal.start_symbol,
            "n_symbols": cfg.signal.n_symbols,
            "zc_root": cfg.signal.zc_root,
            "pn_seed": cfg.signal.pn_seed,
            "max_joint_dim": cfg.signal.max_joint_dim,
        }
        if cfg.signal.per_symbol is not None:
            sig["per_symbol"] = cfg.signal.per_symbol
        out["signal"] = sig
        ch = {
            "carrier_hz": cfg.channel.carrier_hz,
            "t_cp_s": cfg.channel.t_cp_s,
            "subcarrier_doppler": cfg.channel.subcarrier_doppler,
        }
        if cfg.channel.snr_db is not None:
            ch["snr_db"] = cfg.channel.snr_db
        out["channel"] = ch
    if cfg.is_positioning:
        out["antenna"] = {
            "kind": cfg.antenna.kind,
            "nx": cfg.antenna.nx,
            "ny": cfg.antenna.ny,
            "spacing_wl": cfg.antenna.spacing_wl,
            "hz_row": cfg.antenna.hz_row,
        }
        out["polarization"] = {
            "gamma_deg": cfg.polarization.gamma_deg,
            "eta_deg": cfg.polarization.eta_deg,
        }
        out["scene"] = {
            "stations": cfg.scene.stations,
            "ue_x_m": cfg.scene.ue_x_m,
            "ue_y_m": cfg.scene.ue_y_m,
            "ue_z_m": cfg.scene.ue_z_m,
            "ground_amp": cfg.scene.ground_amp,
        }
        grid: dict = {"mode": cfg.grid.mode}
        if cfg.grid.mode == "local":
            grid.update(
                {
                    "azimuth_step_deg": cfg.grid.azimuth_step_deg,
                    "elevation_step_deg": cfg.grid.elevation_step_deg,
                    "delay_step_s": cfg.grid.delay_step_s,
                    "azimuth_halfwidth_deg": cfg.grid.azimuth_halfwidth_deg,
                    "elevation_halfwidth_deg": cfg.grid.elevation_halfwidth_deg,
                    "delay_halfwidth_s": cfg.grid.delay_halfwidth_s,
                }
            )
        else:
            grid.update(
                {
                    "azimuth_deg": cfg.grid.azimuth_deg,
                    "elevation_deg": cfg.grid.elevation_deg,
                    "delay_s": cfg.grid.delay_s,
                }
            )
        out["grid"] = grid
        out["estimators"] = {
            "use": cfg.estimators.use,
            "n_sources": cfg.estimators.n_sources,
            "solver": cfg.estimators.solver,
            "xi_rel": cfg.estimators.xi_rel,
            "max_iter": cfg.estimators.max_iter,
        }
        if cfg.sweep is not None:
            sw = {"snr_db": cfg.sweep.snr_db, "aoa_only": cfg.sweep.aoa_only}
            if cfg.sweep.trials is not None:
                sw["trials"] = cfg.sweep.trials
            out["sweep"] = sw
    if cfg.kind == "imaging":
        im: dict = {
            "n_total_symbols": cfg.imaging.n_total_symbols,
            "occupancy_period": cfg.imaging.occupancy_period,
            "k_sigma": cfg.imaging.k_sigma,
            "log_scale": cfg.imaging.log_scale,
            "write_csv": cfg.imaging.write_csv,
        }
        if cfg.imaging.snr_db is not None:
            im["snr_db"] = cfg.imaging.snr_db
        if cfg.imaging.reference_spacing_mps is not None:
            im["reference_spacing_mps"] = cfg.imaging.reference_spacing_mps
        im["scatterers"] = [
            {"gain": s.gain, "delay_s": s.delay_s, "velocity_mps": s.velocity_mps}
            for s in cfg.imaging.scatterers
        ]
        out["imaging"] = im
    if cfg.kind == "fmcw":
        f = cfg.fmcw
        fm: dict = {
            "f_start_hz": f.f_start_hz,
            "slope_hz_per_s": f.slope_hz_per_s,
            "t_chirp_s": f.t_chirp_s,
            "t_idle_s": f.t_idle_s,
            "fs_hz": f.fs_hz,
            "n_samples": f.n_samples,
            "n_chirps": f.n_chirps,
            "n_rx": f.n_rx,
            "k_sigma": f.k_sigma,
            "n_angle": f.n_angle,
            "eps_m": f.eps_m,
            "min_pts": f.min_pts,
            "n_frames": f.n_frames,
            "gate_m": f.gate_m,
            "save_cube": f.save_cube,
            "micro_doppler": f.micro_doppler,
            "md_window": f.md_window,
            "md_hop": f.md_hop,
        }
        if f.snr_db is not None:
            fm["snr_db"] = f.snr_db
        fm["targets"] = [
            {
                "range_m": t.range_m,
                "velocity_mps": t.velocity_mps,
                "azimuth_deg": t.azimuth_deg,
                "rcs_gain": t.rcs_gain,
            }
            for t in f.targets
        ]
        out["fmcw"] = fm
    out["output"] = {
        "dir": cfg.output.dir,
        "histogram_bins": cfg.output.histogram_bins,
        "write_trials": cfg.output.write_trials,
    }
    return out


def serialize_config(cfg: ScenarioConfig, path=None) -> str:
    return write_toml(config_to_dict(cfg), path)


def config_hash(cfg: ScenarioConfig) -> str:
    """SHA-256 of the canonical serialization (comment/order independent)."""
    return hashlib.sha256(serialize_config(cfg).encode("utf-8")).hexdigest()
