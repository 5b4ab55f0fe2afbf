"""Joint angle/delay estimation: subspace (MUSIC) and EM (SAGE-style) search.

Both estimators share one measurement model.  After conjugate-pilot
equalization the snapshot for symbol i is

    y_i = s_i * (D(phi, theta) kron g(t)) + n_i

with D the array steering vector over ports and g the delay steering over
the selected pilot tones, stacked port-major: index m * n_pilots + j.

The subspace route forms the sample covariance over symbols, splits signal
and noise subspaces by eigendecomposition, and scans the pseudospectrum
P = ||A||^2 / (A^H E_n E_n^H A) on a brute-force grid.  The EM route scans
the per-symbol matched-filter power L = sum_i |<A, y_i>|^2 / ||A||^2 (the
per-symbol amplitudes s_i are profiled out by least squares, consistent
with a time-varying signal), then iterates expectation/maximization until
the reconstruction residual passes below xi.  With a single path the
complete-data estimate equals the observation, so the objective is static
across iterations; the loop is kept for its convergence bookkeeping and
exits early at a stationary point (results are identical either way).

Grid argmax ties break toward the lexicographically smallest
(azimuth, elevation, delay) triple.
"""

from __future__ import annotations

import inspect
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .antenna import ArrayGeometry, PolarizationState, SteeringModel, steering_matrix
from .channel import PortSnapshots, delay_steering
from .util import fmt_float
from .waveforms import ResourceGrid


def _axis(start: float, stop: float, step: float, wrap_deg: float | None = None):
    if step <= 0:
        raise ValueError("grid step must be positive")
    span = stop - start
    if span < 0:
        raise ValueError("grid stop must be >= start")
    n = int(np.floor(span / step * (1 + 1e-12))) + 1
    axis = start + step * np.arange(n)
    # a full azimuth circle omits the duplicate endpoint
    if wrap_deg is not None and n > 1 and abs(span - wrap_deg) < 1e-9:
        axis = axis[:-1]
    return axis


@dataclass(frozen=True)
class SearchGrid:
    """Brute-force grid: (start, stop, step) per axis, degrees and seconds."""

    azimuth_deg: tuple[float, float, float]
    elevation_deg: tuple[float, float, float]
    delay_s: tuple[float, float, float]

    @property
    def azimuth_axis(self) -> np.ndarray:
        return _axis(*self.azimuth_deg, wrap_deg=360.0)

    @property
    def elevation_axis(self) -> np.ndarray:
        return _axis(*self.elevation_deg)

    @property
    def delay_axis(self) -> np.ndarray:
        return _axis(*self.delay_s)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.azimuth_axis.size, self.elevation_axis.size, self.delay_axis.size)


@dataclass(frozen=True)
class Estimate:
    azimuth_deg: float
    elevation_deg: float
    delay_s: float
    power: float


@dataclass(frozen=True)
class SageResult:
    estimate: Estimate
    iterations: int
    converged: bool
    residual: float
    xi: float


@dataclass
class CovarianceMatrix:
    """Hermitian sample covariance of stacked (port x pilot) snapshots."""

    values: np.ndarray
    n_ports: int
    n_pilots: int

    def __post_init__(self):
        if self.values.shape != (self.dim, self.dim):
            raise ValueError("covariance shape mismatch")

    @property
    def dim(self) -> int:
        return self.n_ports * self.n_pilots

    def validate(self, tol: float = 1e-10) -> None:
        """Hermitian within tol, eigenvalues >= -tol * trace."""
        r = self.values
        if np.max(np.abs(r - r.conj().T)) > tol * max(1.0, np.abs(np.trace(r))):
            raise ValueError("covariance is not Hermitian")
        w = scipy.linalg.eigvalsh(r)
        if w[0] < -tol * max(1.0, abs(np.trace(r).real)):
            raise ValueError("covariance is not positive semidefinite")


def pilot_decimate(
    occupied_subcarriers: np.ndarray, max_joint_dim: int, n_ports: int
) -> np.ndarray:
    """Pick <= max_joint_dim / n_ports tones spanning the occupied band.

    Selection is uniform over the occupied comb and always includes both
    endpoints, so the frequency aperture (and with it the delay resolution)
    is preserved; only the unambiguous delay window shrinks.
    """
    occupied = np.asarray(occupied_subcarriers)
    if max_joint_dim < 2 * n_ports:
        raise ValueError("max_joint_dim must allow at least two tones per port")
    budget = max_joint_dim // n_ports
    if occupied.size <= budget:
        return occupied.copy()
    pick = np.unique(np.round(np.linspace(0, occupied.size - 1, budget)).astype(int))
    return occupied[pick]


def equalized_pilot_snapshots(
    snapshots: PortSnapshots | np.ndarray,
    grid: ResourceGrid,
    pilot_subcarriers: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Conjugate-equalize the known pilots and extract the estimator input.

    Returns (h, pilot_freqs): h has shape (ports, pilots, occupied symbols)
    with h = conj(X) Y / |X|^2.  Equalization is what restores the rank-one
    snapshot structure when the pilot sequence varies across symbols.
    """
    data = snapshots.data if isinstance(snapshots, PortSnapshots) else snapshots
    pilots = np.asarray(pilot_subcarriers, dtype=int)
    symbols = grid.occupied_symbols
    x = grid.cells[np.ix_(pilots, symbols)]
    if np.any(x == 0):
        raise ValueError("pilot subcarriers must be occupied on every occupied symbol")
    y = data[:, pilots][:, :, symbols]
    h = y * (x.conj() / np.abs(x) ** 2)[None, :, :]
    freqs = pilots * grid.scs_hz
    return h, freqs


def stack_snapshots(data: np.ndarray) -> np.ndarray:
    """(ports, pilots, symbols) -> (ports*pilots, symbols), port-major."""
    m, n_p, k = data.shape
    return data.reshape(m * n_p, k)


def sample_covariance(
    snapshots: PortSnapshots | np.ndarray,
    pilot_subcarriers: np.ndarray | None = None,
) -> CovarianceMatrix:
    """Average of y y^H over symbols of the stacked (port x pilot) vectors."""
    data = snapshots.data if isinstance(snapshots, PortSnapshots) else snapshots
    if data.ndim != 3:
        raise ValueError("expected (ports, subcarriers, symbols)")
    if pilot_subcarriers is not None:
        data = data[:, np.asarray(pilot_subcarriers, dtype=int), :]
    m, n_p, k = data.shape
    y = stack_snapshots(data)
    r = (y @ y.conj().T) / k
    r = (r + r.conj().T) / 2.0  # keep exactly Hermitian against fp drift
    return CovarianceMatrix(values=r, n_ports=m, n_pilots=n_p)


def noise_subspace(cov: CovarianceMatrix | np.ndarray, n_sources: int) -> np.ndarray:
    """Eigenvectors of the dim - n_sources smallest eigenvalues (ascending)."""
    r = cov.values if isinstance(cov, CovarianceMatrix) else cov
    dim = r.shape[0]
    if not 1 <= n_sources < dim:
        raise ValueError("need 1 <= n_sources < dim")
    _, vecs = scipy.linalg.eigh(r)
    return vecs[:, : dim - n_sources]


def signal_subspace_from_noise(e_n: np.ndarray) -> np.ndarray:
    """Orthonormal complement of E_n, recovered deterministically.

    Projects standard basis vectors with the largest complement component
    (I - E_n E_n^H) e_j and Gram-Schmidts them; avoids a full QR of the
    (dim x dim-K) block, which would dominate the spectrum evaluation.
    """
    dim, dn = e_n.shape
    k = dim - dn
    if k <= 0:
        raise ValueError("E_n already spans the whole space")
    residual_norm2 = 1.0 - np.sum(np.abs(e_n) ** 2, axis=1)
    order = np.argsort(-residual_norm2, kind="stable")
    cols = []
    for j in order:
        w = np.zeros(dim, dtype=complex)
        w[j] = 1.0
        w -= e_n @ e_n[j, :].conj()
        for c in cols:
            w -= c * (c.conj() @ w)
        norm = np.linalg.norm(w)
        if norm > 1e-8:
            cols.append(w / norm)
        if len(cols) == k:
            break
    if len(cols) < k:
        raise ValueError("could not complete the signal subspace")
    return np.column_stack(cols)


def _grid_matrices(
    grid: SearchGrid,
    model: SteeringModel,
    geometry: ArrayGeometry,
    pol: PolarizationState,
    pilot_freqs: np.ndarray,
):
    az = grid.azimuth_axis
    el = grid.elevation_axis
    taus = grid.delay_axis
    az_g, el_g = np.meshgrid(az, el, indexing="ij")
    d_mat = steering_matrix(model, geometry, az_g.ravel(), el_g.ravel(), pol)
    f = np.asarray(pilot_freqs, dtype=float)
    g_mat = np.exp(-2j * np.pi * np.outer(f - f[0], taus))
    return d_mat, g_mat, (az.size, el.size, taus.size)


def music_spectrum(
    e_n: np.ndarray,
    grid: SearchGrid,
    model: SteeringModel,
    geometry: ArrayGeometry,
    pilot_freqs: np.ndarray,
    pol: PolarizationState = PolarizationState(),
    matrices=None,
) -> tuple[np.ndarray, Estimate]:
    """MUSIC pseudospectrum over the grid and its (tie-broken) argmax.

    P = ||A||^2 / (A^H E_n E_n^H A) with A = D(phi, theta) kron g(t).  The
    denominator is evaluated as ||A||^2 - ||E_s^H A||^2 through the
    orthonormal complement of E_n, which is exact and keeps the grid scan
    at O(K) inner products per point instead of O(dim).  ``matrices`` can
    carry a precomputed ``_grid_matrices`` result when the same grid is
    scanned many times.
    """
    e_s = signal_subspace_from_noise(e_n)
    d_mat, g_mat, shape = matrices or _grid_matrices(grid, model, geometry, pol, pilot_freqs)
    m = d_mat.shape[0]
    n_p = g_mat.shape[0]
    if e_n.shape[0] != m * n_p:
        raise ValueError("subspace dimension does not match ports x pilots")
    d_norm2 = np.sum(np.abs(d_mat) ** 2, axis=0)
    g_norm2 = np.sum(np.abs(g_mat) ** 2, axis=0)
    a_norm2 = np.outer(d_norm2, g_norm2)  # (n_dir, n_tau)
    sig = np.zeros_like(a_norm2)
    for col in range(e_s.shape[1]):
        s_mat = e_s[:, col].reshape(m, n_p)
        t = s_mat @ np.conj(g_mat)  # (m, n_tau)
        proj = d_mat.conj().T @ t  # (n_dir, n_tau)
        sig += np.abs(proj) ** 2
    denom = np.maximum(a_norm2 - sig, 1e-300)
    spectrum = (a_norm2 / denom).reshape(shape)
    return spectrum, _argmax_estimate(spectrum, grid)


def _argmax_estimate(volume: np.ndarray, grid: SearchGrid) -> Estimate:
    flat = int(np.argmax(volume))  # first max in C order = lexicographic smallest
    ia, ie, it = np.unravel_index(flat, volume.shape)
    return Estimate(
        azimuth_deg=float(grid.azimuth_axis[ia]),
        elevation_deg=float(grid.elevation_axis[ie]),
        delay_s=float(grid.delay_axis[it]),
        power=float(volume[ia, ie, it]),
    )


def matched_filter_power(
    data: np.ndarray,
    grid: SearchGrid,
    model: SteeringModel,
    geometry: ArrayGeometry,
    pilot_freqs: np.ndarray,
    pol: PolarizationState = PolarizationState(),
    matrices=None,
) -> np.ndarray:
    """L(phi, theta, t) = sum_i |<A, y_i>|^2 / ||A||^2 over the grid."""
    d_mat, g_mat, shape = matrices or _grid_matrices(grid, model, geometry, pol, pilot_freqs)
    # contract delay first: z[m, i, t] = sum_j conj(g[j,t]) data[m, j, i]
    z = np.tensordot(data, np.conj(g_mat), axes=([1], [0]))  # (m, k, n_tau)
    corr = np.tensordot(np.conj(d_mat), z, axes=([0], [0]))  # (n_dir, k, n_tau)
    power = np.sum(np.abs(corr) ** 2, axis=1)
    d_norm2 = np.sum(np.abs(d_mat) ** 2, axis=0)
    g_norm2 = np.sum(np.abs(g_mat) ** 2, axis=0)
    power /= np.outer(d_norm2, g_norm2)
    return power.reshape(shape)


def sage_estimate(
    data: np.ndarray,
    grid: SearchGrid,
    model: SteeringModel,
    geometry: ArrayGeometry,
    pilot_freqs: np.ndarray,
    pol: PolarizationState = PolarizationState(),
    xi: float | None = None,
    max_iter: int = 20,
    stop_on_stationary: bool = True,
    matrices=None,
) -> SageResult:
    """EM search for the single dominant path.

    E-step: per-symbol amplitudes by least squares at the current grid
    point, reconstruction Yhat = alpha_i A, noise estimate N = Y - Yhat.
    M-step: grid argmax of the profiled matched-filter power.  Stops when
    ||Y - Yhat||_F < xi (default 1e-3 ||Y||_F) or at max_iter; a repeated
    estimate ends the loop early when ``stop_on_stationary`` (the objective
    is static for one path, so later iterations are provably identical).
    Non-convergence is reported through ``converged``, never raised.
    """
    m, n_p, k = data.shape
    y_norm = float(np.linalg.norm(data))
    if xi is None:
        xi = 1e-3 * y_norm
    objective = matched_filter_power(
        data, grid, model, geometry, pilot_freqs, pol, matrices=matrices
    )
    f = np.asarray(pilot_freqs, dtype=float)
    est = None
    residual = y_norm
    converged = False
    iterations = 0
    prev = None
    while iterations < max_iter:
        iterations += 1
        est = _argmax_estimate(objective, grid)
        a = _steering_joint(est, model, geometry, pol, f)
        amps = np.tensordot(a.conj(), data.reshape(m * n_p, k), axes=([0], [0]))
        amps /= np.sum(np.abs(a) ** 2)
        recon = np.outer(a, amps).reshape(m, n_p, k)
        residual = float(np.linalg.norm(data - recon))
        if residual < xi:
            converged = True
            break
        if stop_on_stationary and prev == (est.azimuth_deg, est.elevation_deg, est.delay_s):
            break
        prev = (est.azimuth_deg, est.elevation_deg, est.delay_s)
    assert est is not None
    return SageResult(
        estimate=est, iterations=iterations, converged=converged, residual=residual, xi=xi
    )


def _steering_joint(est: Estimate, model, geometry, pol, pilot_freqs) -> np.ndarray:
    d = steering_matrix(model, geometry, [est.azimuth_deg], [est.elevation_deg], pol)[:, 0]
    g = delay_steering(est.delay_s, pilot_freqs)
    return np.kron(d, g)


class _ParamsMixin:
    """Minimal sklearn-style parameter introspection."""

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [p for p in sig.parameters if p != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for key, value in params.items():
            if key not in valid:
                raise ValueError("unknown parameter %r" % key)
            setattr(self, key, value)
        return self

    def _cached_matrices(self, pilot_freqs: np.ndarray):
        """Reuse the grid steering/delay matrices across fit() calls.

        Building them dominates repeated fits on a fixed grid (Monte Carlo
        sweeps); the key covers everything they depend on.
        """
        f = np.asarray(pilot_freqs, dtype=float)
        key = (self.grid, f.tobytes(), self.pol, id(self.model), id(self.geometry))
        cache = getattr(self, "_matrix_cache", None)
        if cache is None or cache[0] != key:
            mats = _grid_matrices(self.grid, self.model, self.geometry, self.pol, f)
            self._matrix_cache = (key, mats)
            return mats
        return cache[1]


class MusicEstimator(_ParamsMixin):
    """Subspace angle/delay estimator with a fit() interface.

    Parameters mirror :func:`music_spectrum`; ``solver="svd"`` (default)
    takes the signal subspace from a thin SVD of the snapshot matrix, which
    is the same eigenbasis as the covariance route at a fraction of the
    cost; ``solver="eig"`` goes through sample_covariance/noise_subspace.
    """

    def __init__(
        self,
        grid: SearchGrid,
        model: SteeringModel,
        geometry: ArrayGeometry | None = None,
        pol: PolarizationState = PolarizationState(),
        n_sources: int = 1,
        solver: str = "svd",
    ):
        self.grid = grid
        self.model = model
        self.geometry = geometry or ArrayGeometry.single()
        self.pol = pol
        self.n_sources = n_sources
        self.solver = solver

    def fit(self, data: np.ndarray, pilot_freqs: np.ndarray):
        """data: equalized (ports, pilots, symbols) tensor."""
        m, n_p, k = data.shape
        mats = self._cached_matrices(pilot_freqs)
        if self.solver == "eig":
            cov = sample_covariance(data)
            e_n = noise_subspace(cov, self.n_sources)
            spectrum, est = music_spectrum(
                e_n, self.grid, self.model, self.geometry, pilot_freqs, self.pol,
                matrices=mats,
            )
        elif self.solver == "svd":
            y = stack_snapshots(data)
            u, s, _ = np.linalg.svd(y, full_matrices=False)
            e_s = u[:, : self.n_sources]
            spectrum, est = _music_from_signal_subspace(
                e_s, self.grid, self.model, self.geometry, pilot_freqs, self.pol,
                matrices=mats,
            )
        else:
            raise ValueError("solver must be 'svd' or 'eig'")
        self.spectrum_ = spectrum
        self.estimate_ = est
        self.azimuth_deg_ = est.azimuth_deg
        self.elevation_deg_ = est.elevation_deg
        self.delay_s_ = est.delay_s
        return self


def _music_from_signal_subspace(e_s, grid, model, geometry, pilot_freqs, pol, matrices=None):
    d_mat, g_mat, shape = matrices or _grid_matrices(grid, model, geometry, pol, pilot_freqs)
    m = d_mat.shape[0]
    n_p = g_mat.shape[0]
    d_norm2 = np.sum(np.abs(d_mat) ** 2, axis=0)
    g_norm2 = np.sum(np.abs(g_mat) ** 2, axis=0)
    a_norm2 = np.outer(d_norm2, g_norm2)
    sig = np.zeros_like(a_norm2)
    for col in range(e_s.shape[1]):
        s_mat = e_s[:, col].reshape(m, n_p)
        t = s_mat @ np.conj(g_mat)
        proj = d_mat.conj().T @ t
        sig += np.abs(proj) ** 2
    denom = np.maximum(a_norm2 - sig, 1e-300)
    spectrum = (a_norm2 / denom).reshape(shape)
    return spectrum, _argmax_estimate(spectrum, grid)


class SageEstimator(_ParamsMixin):
    """EM angle/delay estimator with a fit() interface."""

    def __init__(
        self,
        grid: SearchGrid,
        model: SteeringModel,
        geometry: ArrayGeometry | None = None,
        pol: PolarizationState = PolarizationState(),
        xi_rel: float = 1e-3,
        max_iter: int = 20,
    ):
        self.grid = grid
        self.model = model
        self.geometry = geometry or ArrayGeometry.single()
        self.pol = pol
        self.xi_rel = xi_rel
        self.max_iter = max_iter

    def fit(self, data: np.ndarray, pilot_freqs: np.ndarray):
        xi = self.xi_rel * float(np.linalg.norm(data))
        res = sage_estimate(
            data,
            self.grid,
            self.model,
            self.geometry,
            pilot_freqs,
            self.pol,
            xi=xi,
            max_iter=self.max_iter,
            matrices=self._cached_matrices(pilot_freqs),
        )
        self.result_ = res
        self.estimate_ = res.estimate
        self.azimuth_deg_ = res.estimate.azimuth_deg
        self.elevation_deg_ = res.estimate.elevation_deg
        self.delay_s_ = res.estimate.delay_s
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        return self


def export_spectrum_csv(spectrum: np.ndarray, grid: SearchGrid, path) -> None:
    """phi_deg, theta_deg, delay_s, power for every grid point."""
    az = grid.azimuth_axis
    el = grid.elevation_axis
    taus = grid.delay_axis
    lines = ["phi_deg,theta_deg,delay_s,power"]
    for ia in range(az.size):
        for ie in range(el.size):
            for it in range(taus.size):
                lines.append(
                    "%s,%s,%s,%s"
                    % (
                        fmt_float(az[ia]),
                        fmt_float(el[ie]),
                        fmt_float(taus[it]),
                        fmt_float(spectrum[ia, ie, it]),
                    )
                )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
