"""Uplink/downlink pilot sequence generation and resource-grid mapping.

Covers the three pilot families used by the positioning and imaging chains:
Zadoff-Chu sounding sequences, and the two-register length-31 pseudo-random
(Gold) construction behind the downlink positioning and CSI pilot families.
Sequences are laid onto an OFDM resource grid on an interleaved comb, which
is what gives the delay estimators their frequency aperture.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .util import fmt_float

# family -> admissible comb sizes
_COMB_SIZES = {
    "srs": (2, 4, 8),
    "prs": (2, 4, 6, 12),
    "csirs": (2, 4, 6, 12),
}
_MAX_OCCUPIED_SYMBOLS = {"srs": 12}

PN_ADVANCE = 1600  # fast-forward offset of the two-register sequence


@dataclass(frozen=True)
class ZcSequence:
    """Constant-amplitude zero-autocorrelation sequence.

    samples[n] = exp(-j pi root n (n+1) / length).  ``length`` must be odd
    (>= 3) and coprime with ``root`` so the sequence stays CAZAC: constant
    modulus in the time domain and, after a DFT, in the frequency domain.
    """

    root: int
    length: int
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.length < 3 or self.length % 2 == 0:
            raise ValueError("ZC length must be odd and >= 3, got %d" % self.length)
        if math.gcd(self.root, self.length) != 1:
            raise ValueError(
                "ZC root %d not coprime with length %d" % (self.root, self.length)
            )


@dataclass(frozen=True)
class PseudoRandomSequence:
    """QPSK-mapped output of the length-31 two-register generator."""

    seed: int
    length: int
    samples: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class CombConfig:
    """Comb mapping: subcarriers with index = comb_offset (mod comb_size).

    ``n_symbols`` counts the occupied OFDM symbols starting at
    ``start_symbol``; the admissible comb sizes depend on the pilot family.
    """

    comb_size: int
    comb_offset: int = 0
    start_symbol: int = 0
    n_symbols: int = 1

    def __post_init__(self):
        if not 0 <= self.comb_offset < self.comb_size:
            raise ValueError("comb_offset must lie in [0, comb_size)")
        if self.n_symbols < 1 or self.start_symbol < 0:
            raise ValueError("need n_symbols >= 1 and start_symbol >= 0")

    def validate_family(self, family: str) -> None:
        fam = family.lower()
        if fam not in _COMB_SIZES:
            raise ValueError("unknown pilot family %r" % family)
        if self.comb_size not in _COMB_SIZES[fam]:
            raise ValueError(
                "comb size %d not admissible for %s (allowed %s)"
                % (self.comb_size, fam, _COMB_SIZES[fam])
            )
        max_sym = _MAX_OCCUPIED_SYMBOLS.get(fam)
        if max_sym is not None and self.n_symbols > max_sym:
            raise ValueError(
                "%s occupies at most %d symbols, got %d" % (fam, max_sym, self.n_symbols)
            )


@dataclass
class ResourceGrid:
    """Frequency-time pilot grid: cells[subcarrier, symbol]."""

    n_subcarriers: int
    n_symbols: int
    scs_hz: float
    cells: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.cells.shape != (self.n_subcarriers, self.n_symbols):
            raise ValueError("cells shape mismatch")

    @property
    def occupied_subcarriers(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.cells != 0, axis=1))

    @property
    def occupied_symbols(self) -> np.ndarray:
        return np.flatnonzero(np.any(self.cells != 0, axis=0))


def generate_zadoff_chu(root: int, length: int) -> ZcSequence:
    """Generate a Zadoff-Chu sequence of odd ``length`` with the given root."""
    n = np.arange(length)
    samples = np.exp(-1j * np.pi * root * n * (n + 1) / length)
    return ZcSequence(root=root, length=length, samples=samples)


def pn_bits(seed: int, n_bits: int) -> np.ndarray:
    """Raw bits of the two-register length-31 generator.

    Register 1 starts as (1, 0, ..., 0) with taps x1(n+31) = x1(n+3) + x1(n);
    register 2 is initialised with the binary expansion of ``seed`` and uses
    taps x2(n+31) = x2(n+3) + x2(n+2) + x2(n+1) + x2(n).  The output is
    c(n) = x1(n + 1600) + x2(n + 1600), all mod 2.
    """
    if seed < 0 or seed >= 2**31:
        raise ValueError("seed must fit in 31 bits")
    total = PN_ADVANCE + n_bits
    x1 = np.zeros(total + 31, dtype=np.uint8)
    x2 = np.zeros(total + 31, dtype=np.uint8)
    x1[0] = 1
    for i in range(31):
        x2[i] = (seed >> i) & 1
    for i in range(total):
        x1[i + 31] = (x1[i + 3] + x1[i]) & 1
        x2[i + 31] = (x2[i + 3] + x2[i + 2] + x2[i + 1] + x2[i]) & 1
    return (x1[PN_ADVANCE : PN_ADVANCE + n_bits] + x2[PN_ADVANCE : PN_ADVANCE + n_bits]) % 2


def generate_pseudo_random(seed: int, length: int) -> PseudoRandomSequence:
    """QPSK symbols from the pseudo-random bit generator.

    sample[i] = (1 - 2 c(2i))/sqrt(2) + j (1 - 2 c(2i+1))/sqrt(2), giving a
    unit-modulus sequence suitable for conjugate matched filtering.
    """
    bits = pn_bits(seed, 2 * length).astype(np.float64)
    samples = ((1.0 - 2.0 * bits[0::2]) + 1j * (1.0 - 2.0 * bits[1::2])) / np.sqrt(2.0)
    return PseudoRandomSequence(seed=seed, length=length, samples=samples)


def cyclic_extend(samples: np.ndarray, length: int) -> np.ndarray:
    """Cyclically repeat ``samples`` to reach ``length`` elements.

    Used to fill a comb whose occupied-tone count is even (Zadoff-Chu lengths
    are odd): the base sequence keeps its CAZAC invariants, the mapped copy
    is its cyclic extension.
    """
    if length <= samples.size:
        return samples[:length].copy()
    reps = int(np.ceil(length / samples.size))
    return np.tile(samples, reps)[:length]


def comb_subcarriers(comb: CombConfig, n_subcarriers: int) -> np.ndarray:
    return np.arange(comb.comb_offset, n_subcarriers, comb.comb_size)


def map_symbols_to_grid(
    samples: np.ndarray,
    comb: CombConfig,
    n_subcarriers: int,
    n_grid_symbols: int,
    scs_hz: float,
    symbol_indices: np.ndarray | None = None,
) -> ResourceGrid:
    """Place pilot samples on an interleaved comb over arbitrary symbols.

    ``samples`` is either 1-D (reused on every occupied symbol) or 2-D with
    one column per occupied symbol.  ``symbol_indices`` defaults to the
    contiguous block described by ``comb``; imaging scenes pass sparse
    (periodic) occupancy instead.
    """
    sc = comb_subcarriers(comb, n_subcarriers)
    if symbol_indices is None:
        symbol_indices = np.arange(comb.start_symbol, comb.start_symbol + comb.n_symbols)
    symbol_indices = np.asarray(symbol_indices, dtype=int)
    if symbol_indices.size == 0:
        raise ValueError("at least one occupied symbol required")
    if symbol_indices.min() < 0 or symbol_indices.max() >= n_grid_symbols:
        raise ValueError("occupied symbols fall outside the grid")
    samples = np.asarray(samples)
    if samples.ndim == 1:
        if samples.size != sc.size:
            raise ValueError(
                "sequence length %d != occupied tone count %d" % (samples.size, sc.size)
            )
        block = np.broadcast_to(samples[:, None], (sc.size, symbol_indices.size))
    elif samples.ndim == 2:
        if samples.shape != (sc.size, symbol_indices.size):
            raise ValueError("2-D sequence must be (occupied tones, occupied symbols)")
        block = samples
    else:
        raise ValueError("sequence must be 1-D or 2-D")
    cells = np.zeros((n_subcarriers, n_grid_symbols), dtype=complex)
    cells[np.ix_(sc, symbol_indices)] = block
    return ResourceGrid(
        n_subcarriers=n_subcarriers, n_symbols=n_grid_symbols, scs_hz=scs_hz, cells=cells
    )


def map_to_comb(
    samples: np.ndarray,
    comb: CombConfig,
    n_subcarriers: int,
    n_grid_symbols: int,
    scs_hz: float,
) -> ResourceGrid:
    """Comb mapping over the contiguous symbol block described by ``comb``."""
    return map_symbols_to_grid(samples, comb, n_subcarriers, n_grid_symbols, scs_hz)


def pilot_sequence(
    family: str,
    n_tones: int,
    n_occupied_symbols: int = 1,
    zc_root: int = 25,
    pn_seed: int = 0,
    per_symbol: bool = False,
) -> np.ndarray:
    """Family dispatch used by the scenario runner.

    SRS: Zadoff-Chu of the largest prime length <= n_tones, cyclically
    extended; the same sequence repeats on every occupied symbol.  PRS and
    CSI-RS: fresh pseudo-random QPSK, one column per occupied symbol when
    ``per_symbol`` is set.
    """
    fam = family.lower()
    if fam == "srs":
        from .util import largest_prime_at_most

        base_len = largest_prime_at_most(n_tones) if n_tones >= 3 else 3
        zc = generate_zadoff_chu(zc_root % base_len or 1, base_len)
        return cyclic_extend(zc.samples, n_tones)
    if fam in ("prs", "csirs"):
        if per_symbol:
            seq = generate_pseudo_random(pn_seed, n_tones * n_occupied_symbols)
            return seq.samples.reshape(n_occupied_symbols, n_tones).T
        return generate_pseudo_random(pn_seed, n_tones).samples
    raise ValueError("unknown pilot family %r" % family)


def dump_grid_csv(grid: ResourceGrid, path) -> None:
    """Occupied cells only: subcarrier_index, symbol_index, re, im."""
    lines = ["subcarrier_index,symbol_index,re,im"]
    sc_idx, sym_idx = np.nonzero(grid.cells)
    for k, i in zip(sc_idx.tolist(), sym_idx.tolist()):
        v = grid.cells[k, i]
        lines.append("%d,%d,%s,%s" % (k, i, fmt_float(v.real), fmt_float(v.imag)))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
