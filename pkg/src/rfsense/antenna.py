"""Electromagnetic vector-antenna steering models.

A vector antenna (VA) co-locates three orthogonal electric and three
orthogonal magnetic dipoles, so a single element measures the full (E, H)
field and therefore carries direction and polarization information without
any spatial aperture.  This module builds the 6x2 ideal-dipole response, the
polarization mixing vector, and steering vectors for arrays of VAs (or of
scalar elements) including the spatial phase.

Conventions
-----------
Azimuth ``phi`` is measured from +x in [0, 360) deg, ``theta`` is the polar
angle from +z in [0, 180] deg.  Degrees at every interface, radians only
inside.  ``u = (sin th cos ph, sin th sin ph, cos th)`` points from the
array toward the source; the incoming propagation direction is ``k = -u``
and the per-element spatial phase is exp(-j 2 pi k . r) = exp(+j 2 pi u . r)
with element positions in wavelengths.  The dipole matrix columns form the
transmit-sense triad (E = theta_hat, H = phi_hat, Re(E x H*) parallel to u).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .util import fmt_float


@dataclass(frozen=True)
class WaveDirection:
    azimuth_deg: float
    elevation_deg: float  # polar angle from +z

    def __post_init__(self):
        if not 0.0 <= self.elevation_deg <= 180.0:
            raise ValueError("elevation (polar) angle must lie in [0, 180] deg")

    @property
    def unit_vector(self) -> np.ndarray:
        ph = np.deg2rad(self.azimuth_deg)
        th = np.deg2rad(self.elevation_deg)
        return np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])


@dataclass(frozen=True)
class PolarizationState:
    """Polarization ellipse parameters: gamma in [0, 90], eta in [-180, 180] deg."""

    gamma_deg: float = 90.0
    eta_deg: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.gamma_deg <= 90.0:
            raise ValueError("gamma must lie in [0, 90] deg")
        if not -180.0 <= self.eta_deg <= 180.0:
            raise ValueError("eta must lie in [-180, 180] deg")


@dataclass(frozen=True)
class ArrayGeometry:
    """Element positions in wavelengths, shape (n_elements, 3)."""

    positions_wl: np.ndarray

    def __post_init__(self):
        p = np.atleast_2d(np.asarray(self.positions_wl, dtype=float))
        if p.ndim != 2 or p.shape[1] != 3:
            raise ValueError("positions must be (n_elements, 3)")
        object.__setattr__(self, "positions_wl", p)

    @property
    def n_elements(self) -> int:
        return self.positions_wl.shape[0]

    @staticmethod
    def single() -> "ArrayGeometry":
        return ArrayGeometry(np.zeros((1, 3)))

    @staticmethod
    def planar(nx: int, ny: int, spacing_wl: float = 0.5) -> "ArrayGeometry":
        """nx-by-ny grid in the xy plane, centred on the origin."""
        xs = (np.arange(nx) - (nx - 1) / 2.0) * spacing_wl
        ys = (np.arange(ny) - (ny - 1) / 2.0) * spacing_wl
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        pos = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(nx * ny)])
        return ArrayGeometry(pos)


def ideal_dipole_matrix(
    azimuth_deg, elevation_deg, hz_row: str = "orthonormal"
) -> np.ndarray:
    """6x2 ideal-dipole response F(phi, theta), broadcasting over angles.

    Rows are (Ex, Ey, Ez, Hx, Hy, Hz); columns are the theta- and
    phi-polarized unit excitations.  ``hz_row`` selects the bottom-right
    entry: "orthonormal" (default) uses sin(theta), which keeps both columns
    at norm sqrt(2), mutually orthogonal, and the Poynting vector radial;
    "printed" reproduces a commonly printed variant, -sin(phi), which breaks
    those properties and is retained only for comparison.
    """
    if hz_row not in ("orthonormal", "printed"):
        raise ValueError("hz_row must be 'orthonormal' or 'printed'")
    ph = np.deg2rad(np.asarray(azimuth_deg, dtype=float))
    th = np.deg2rad(np.asarray(elevation_deg, dtype=float))
    ph, th = np.broadcast_arrays(ph, th)
    sp, cp = np.sin(ph), np.cos(ph)
    st, ct = np.sin(th), np.cos(th)
    zero = np.zeros_like(sp)
    hz_phi = st if hz_row == "orthonormal" else -sp
    col_theta = np.stack([cp * ct, sp * ct, -st, -sp, cp, zero], axis=-1)
    col_phi = np.stack([-sp, cp, zero, -cp * ct, -sp * ct, hz_phi], axis=-1)
    return np.stack([col_theta, col_phi], axis=-1)


def polarization_vector(pol: PolarizationState) -> np.ndarray:
    """p = (sin(gamma) e^{j eta}, cos(gamma)); unit norm by construction."""
    g = np.deg2rad(pol.gamma_deg)
    e = np.deg2rad(pol.eta_deg)
    return np.array([np.sin(g) * np.exp(1j * e), np.cos(g)])


def orthogonal_polarization_vector(pol: PolarizationState) -> np.ndarray:
    """Mixing vector of the state orthogonal to ``pol``.

    The complement is (90 - gamma) with the relative phase flipped by 180
    deg, i.e. (-cos g e^{j eta}, sin g); the flip cannot be stored in a
    PolarizationState (eta is confined to [-90, 90]), so the vector is
    returned directly.  <p, p_orth> = 0 exactly.
    """
    g = np.deg2rad(pol.gamma_deg)
    e = np.deg2rad(pol.eta_deg)
    return np.array([-np.cos(g) * np.exp(1j * e), np.sin(g)])


class SteeringModel:
    """Per-element port response; subclasses define n_ports and the pattern."""

    n_ports: int = 1

    def port_response(self, direction: WaveDirection, pol: PolarizationState) -> np.ndarray:
        raise NotImplementedError

    def port_response_many(self, azimuth_deg, elevation_deg, pol: PolarizationState):
        """Vectorized pattern evaluation, shape (n_ports, n_directions)."""
        az = np.atleast_1d(np.asarray(azimuth_deg, dtype=float))
        el = np.atleast_1d(np.asarray(elevation_deg, dtype=float))
        out = np.empty((self.n_ports, az.size), dtype=complex)
        for i in range(az.size):
            out[:, i] = self.port_response(WaveDirection(az[i], el[i]), pol)
        return out


class IdealVectorAntenna(SteeringModel):
    """Six-port ideal VA: response D = F(phi, theta) @ p."""

    n_ports = 6

    def __init__(self, hz_row: str = "orthonormal"):
        if hz_row not in ("orthonormal", "printed"):
            raise ValueError("hz_row must be 'orthonormal' or 'printed'")
        self.hz_row = hz_row

    def port_response(self, direction, pol):
        f = ideal_dipole_matrix(direction.azimuth_deg, direction.elevation_deg, self.hz_row)
        return f @ polarization_vector(pol)

    def port_response_many(self, azimuth_deg, elevation_deg, pol):
        f = ideal_dipole_matrix(azimuth_deg, elevation_deg, self.hz_row)
        d = f @ polarization_vector(pol)  # (..., 6)
        return np.moveaxis(np.atleast_2d(d), -1, 0).reshape(6, -1)


class ScalarElement(SteeringModel):
    """Isotropic single-port element, pattern identically 1."""

    n_ports = 1

    def port_response(self, direction, pol):
        return np.ones(1, dtype=complex)

    def port_response_many(self, azimuth_deg, elevation_deg, pol):
        n = np.atleast_1d(np.asarray(azimuth_deg, dtype=float)).size
        return np.ones((1, n), dtype=complex)


class TabulatedPattern(SteeringModel):
    """Measured/exported pattern on a rectangular (phi, theta) grid.

    Stores the theta- and phi-polarized port responses at the grid nodes and
    interpolates bilinearly between them; node queries are exact.
    """

    def __init__(self, phi_deg: np.ndarray, theta_deg: np.ndarray, resp_theta, resp_phi):
        self.phi_deg = np.asarray(phi_deg, dtype=float)
        self.theta_deg = np.asarray(theta_deg, dtype=float)
        # (n_phi, n_theta, n_ports)
        self.resp_theta = np.asarray(resp_theta, dtype=complex)
        self.resp_phi = np.asarray(resp_phi, dtype=complex)
        if self.resp_theta.shape != self.resp_phi.shape:
            raise ValueError("theta/phi response tables must match in shape")
        if self.resp_theta.shape[:2] != (self.phi_deg.size, self.theta_deg.size):
            raise ValueError("response table shape does not match the angle grids")
        if np.any(np.diff(self.phi_deg) <= 0) or np.any(np.diff(self.theta_deg) <= 0):
            raise ValueError("angle grids must be strictly increasing")
        self.n_ports = self.resp_theta.shape[2]

    def _interp(self, table: np.ndarray, ph: float, th: float) -> np.ndarray:
        def bracket(axis, v):
            if v < axis[0] or v > axis[-1]:
                raise ValueError("query angle outside the tabulated grid")
            j = int(np.searchsorted(axis, v, side="right") - 1)
            j = min(j, axis.size - 2) if axis.size > 1 else 0
            if axis.size == 1:
                return 0, 0, 0.0
            w = (v - axis[j]) / (axis[j + 1] - axis[j])
            return j, j + 1, w

        i0, i1, wp = bracket(self.phi_deg, ph)
        j0, j1, wt = bracket(self.theta_deg, th)
        return (
            (1 - wp) * (1 - wt) * table[i0, j0]
            + wp * (1 - wt) * table[i1, j0]
            + (1 - wp) * wt * table[i0, j1]
            + wp * wt * table[i1, j1]
        )

    def port_response(self, direction, pol):
        p = polarization_vector(pol)
        rt = self._interp(self.resp_theta, direction.azimuth_deg, direction.elevation_deg)
        rp = self._interp(self.resp_phi, direction.azimuth_deg, direction.elevation_deg)
        return rt * p[0] + rp * p[1]


def spatial_phases(geometry: ArrayGeometry, azimuth_deg, elevation_deg) -> np.ndarray:
    """exp(-j 2 pi k . r_e) per element, (n_elements, n_directions)."""
    az = np.atleast_1d(np.asarray(azimuth_deg, dtype=float))
    el = np.atleast_1d(np.asarray(elevation_deg, dtype=float))
    ph = np.deg2rad(az)
    th = np.deg2rad(el)
    u = np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
    return np.exp(2j * np.pi * (geometry.positions_wl @ u))


def steering_vector(
    model: SteeringModel,
    geometry: ArrayGeometry,
    direction: WaveDirection,
    pol: PolarizationState,
) -> np.ndarray:
    """Stacked array response, element-major: (n_elements * n_ports,).

    Each element contributes its port pattern scaled by the element's
    spatial phase; a single-element geometry reduces to the bare pattern.
    """
    return steering_matrix(model, geometry, [direction.azimuth_deg], [direction.elevation_deg], pol)[:, 0]


def steering_matrix(
    model: SteeringModel, geometry: ArrayGeometry, azimuth_deg, elevation_deg, pol
) -> np.ndarray:
    """Steering vectors for many directions at once, (M, n_directions)."""
    d = model.port_response_many(azimuth_deg, elevation_deg, pol)  # (P, n)
    phases = spatial_phases(geometry, azimuth_deg, elevation_deg)  # (E, n)
    return (phases[:, None, :] * d[None, :, :]).reshape(
        geometry.n_elements * model.n_ports, -1
    )


def tabulate_pattern_csv(model: SteeringModel, phi_deg, theta_deg, path) -> None:
    """Export a model's per-port theta/phi responses on a rectangular grid.

    Columns: phi_deg, theta_deg, port, re_theta, im_theta, re_phi, im_phi.
    """
    pol_t = PolarizationState(gamma_deg=90.0, eta_deg=0.0)  # p = (1, 0)
    pol_p = PolarizationState(gamma_deg=0.0, eta_deg=0.0)  # p = (0, 1)
    lines = ["phi_deg,theta_deg,port,re_theta,im_theta,re_phi,im_phi"]
    for ph in np.asarray(phi_deg, dtype=float):
        for th in np.asarray(theta_deg, dtype=float):
            d = WaveDirection(ph, th)
            rt = model.port_response(d, pol_t)
            rp = model.port_response(d, pol_p)
            for port in range(model.n_ports):
                lines.append(
                    "%s,%s,%d,%s,%s,%s,%s"
                    % (
                        fmt_float(ph),
                        fmt_float(th),
                        port,
                        fmt_float(rt[port].real),
                        fmt_float(rt[port].imag),
                        fmt_float(rp[port].real),
                        fmt_float(rp[port].imag),
                    )
                )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_pattern_csv(path) -> TabulatedPattern:
    """Inverse of :func:`tabulate_pattern_csv`; requires a full rectangle."""
    rows = []
    with open(path) as fh:
        header = fh.readline()
        if not header.startswith("phi_deg,theta_deg,port"):
            raise ValueError("not a tabulated-pattern CSV")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 7:
                continue
            rows.append(
                (
                    float(parts[0]),
                    float(parts[1]),
                    int(parts[2]),
                    float(parts[3]) + 1j * float(parts[4]),
                    float(parts[5]) + 1j * float(parts[6]),
                )
            )
    phis = np.unique([r[0] for r in rows])
    thetas = np.unique([r[1] for r in rows])
    n_ports = max(r[2] for r in rows) + 1
    if len(rows) != phis.size * thetas.size * n_ports:
        raise ValueError("pattern CSV does not cover a full rectangular grid")
    rt = np.zeros((phis.size, thetas.size, n_ports), dtype=complex)
    rp = np.zeros_like(rt)
    pi = {v: i for i, v in enumerate(phis.tolist())}
    ti = {v: i for i, v in enumerate(thetas.tolist())}
    for ph, th, port, vt, vp in rows:
        rt[pi[ph], ti[th], port] = vt
        rp[pi[ph], ti[th], port] = vp
    return TabulatedPattern(phis, thetas, rt, rp)
