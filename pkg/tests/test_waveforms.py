import numpy as np
import pytest

from rfsense.waveforms import (
    CombConfig,
    ResourceGrid,
    comb_subcarriers,
    cyclic_extend,
    dump_grid_csv,
    generate_pseudo_random,
    generate_zadoff_chu,
    map_symbols_to_grid,
    map_to_comb,
    pilot_sequence,
    pn_bits,
)


# ---------------------------------------------------------------------------
# Zadoff-Chu
# ---------------------------------------------------------------------------


def test_zc_matches_closed_form():
    root, length = 25, 139
    zc = generate_zadoff_chu(root, length)
    n = np.arange(length)
    ref = np.exp(-1j * np.pi * root * n * (n + 1) / length)
    assert np.allclose(zc.samples, ref, atol=1e-12)
    assert zc.root == root and zc.length == length


def test_zc_constant_amplitude_both_domains():
    zc = generate_zadoff_chu(7, 139)
    assert np.allclose(np.abs(zc.samples), 1.0, atol=1e-12)
    # CAZAC property: the DFT of a ZC sequence is again constant modulus.
    spec = np.fft.fft(zc.samples)
    assert np.allclose(np.abs(spec), np.sqrt(139), atol=1e-9)


def test_zc_zero_cyclic_autocorrelation():
    zc = generate_zadoff_chu(5, 63).samples
    for shift in (1, 2, 10, 31):
        corr = np.vdot(zc, np.roll(zc, shift))
        assert abs(corr) < 1e-9


def test_zc_validation():
    with pytest.raises(ValueError):
        generate_zadoff_chu(1, 4)  # even length
    with pytest.raises(ValueError):
        generate_zadoff_chu(1, 1)  # too short
    with pytest.raises(ValueError):
        generate_zadoff_chu(3, 9)  # gcd(3, 9) != 1


# ---------------------------------------------------------------------------
# Pseudo-random (two-register Gold construction)
# ---------------------------------------------------------------------------


def _reference_pn_bits(seed, n_bits):
    """Independent bit-by-bit reference for the length-31 generator."""
    nc = 1600
    total = n_bits + nc + 31
    x1 = [0] * total
    x2 = [0] * total
    x1[0] = 1
    for i in range(31):
        x2[i] = (seed >> i) & 1
    for n in range(total - 31):
        x1[n + 31] = (x1[n + 3] + x1[n]) % 2
        x2[n + 31] = (x2[n + 3] + x2[n + 2] + x2[n + 1] + x2[n]) % 2
    return np.array(
        [(x1[n + nc] + x2[n + nc]) % 2 for n in range(n_bits)], dtype=np.int8
    )


@pytest.mark.parametrize("seed", [0, 1, 4660, 2**31 - 1])
def test_pn_bits_match_reference(seed):
    got = pn_bits(seed, 200)
    ref = _reference_pn_bits(seed, 200)
    assert np.array_equal(np.asarray(got, dtype=np.int8), ref)


def test_pn_qpsk_mapping():
    seed = 17
    seq = generate_pseudo_random(seed, 64)
    bits = _reference_pn_bits(seed, 128)
    ref = ((1 - 2 * bits[0::2]) + 1j * (1 - 2 * bits[1::2])) / np.sqrt(2.0)
    assert np.allclose(seq.samples, ref, atol=1e-12)
    assert np.allclose(np.abs(seq.samples), 1.0, atol=1e-12)
    assert seq.seed == seed and seq.length == 64


def test_pn_distinct_seeds_differ():
    a = generate_pseudo_random(1, 128).samples
    b = generate_pseudo_random(2, 128).samples
    assert not np.allclose(a, b)


# ---------------------------------------------------------------------------
# Cyclic extension and comb mapping
# ---------------------------------------------------------------------------


def test_cyclic_extend():
    base = np.arange(5, dtype=complex)
    out = cyclic_extend(base, 12)
    assert np.array_equal(out, np.array([0, 1, 2, 3, 4, 0, 1, 2, 3, 4, 0, 1]))
    trunc = cyclic_extend(base, 3)
    assert np.array_equal(trunc, np.array([0, 1, 2]))


def test_comb_subcarriers_partition():
    n_sc = 24
    all_tones = []
    for off in range(4):
        tones = comb_subcarriers(CombConfig(comb_size=4, comb_offset=off), n_sc)
        assert np.array_equal(tones, np.arange(off, n_sc, 4))
        all_tones.append(tones)
    union = np.sort(np.concatenate(all_tones))
    assert np.array_equal(union, np.arange(n_sc))


def test_comb_config_validation():
    with pytest.raises(ValueError):
        CombConfig(comb_size=4, comb_offset=4)
    with pytest.raises(ValueError):
        CombConfig(comb_size=2, n_symbols=0)
    with pytest.raises(ValueError):
        CombConfig(comb_size=2, start_symbol=-1)


def test_family_comb_admissibility():
    CombConfig(comb_size=2).validate_family("srs")
    CombConfig(comb_size=8).validate_family("srs")
    CombConfig(comb_size=12).validate_family("prs")
    CombConfig(comb_size=6).validate_family("csirs")
    with pytest.raises(ValueError):
        CombConfig(comb_size=12).validate_family("srs")
    with pytest.raises(ValueError):
        CombConfig(comb_size=8).validate_family("prs")
    with pytest.raises(ValueError):
        CombConfig(comb_size=2, n_symbols=13).validate_family("srs")
    with pytest.raises(ValueError):
        CombConfig(comb_size=2).validate_family("ssb")


def test_map_to_comb_occupancy():
    comb = CombConfig(comb_size=2, comb_offset=1, start_symbol=2, n_symbols=3)
    samples = generate_zadoff_chu(3, 7).samples
    grid = map_to_comb(samples, comb, n_subcarriers=14, n_grid_symbols=6, scs_hz=15e3)
    assert grid.cells.shape == (14, 6)
    assert np.array_equal(grid.occupied_subcarriers, np.arange(1, 14, 2))
    assert np.array_equal(grid.occupied_symbols, np.array([2, 3, 4]))
    # Same 1-D sequence repeated on every occupied symbol.
    for s in (2, 3, 4):
        assert np.allclose(grid.cells[1::2, s], samples)
    # Everything else stays zero.
    mask = np.zeros((14, 6), dtype=bool)
    mask[np.ix_(np.arange(1, 14, 2), [2, 3, 4])] = True
    assert np.all(grid.cells[~mask] == 0)


def test_map_symbols_to_grid_sparse_and_2d():
    comb = CombConfig(comb_size=2, n_symbols=3)
    occupied = np.array([0, 7, 14])
    block = np.arange(12, dtype=complex).reshape(4, 3)
    grid = map_symbols_to_grid(block, comb, 8, 21, 15e3, symbol_indices=occupied)
    assert np.array_equal(grid.occupied_symbols, occupied)
    assert np.allclose(grid.cells[np.ix_(np.arange(0, 8, 2), occupied)], block)


def test_map_symbols_to_grid_validation():
    comb = CombConfig(comb_size=2, n_symbols=2)
    with pytest.raises(ValueError):
        map_to_comb(np.ones(3), comb, 8, 4, 15e3)  # length mismatch (4 tones)
    with pytest.raises(ValueError):
        map_symbols_to_grid(np.ones(4), comb, 8, 4, 15e3, symbol_indices=np.array([4]))
    with pytest.raises(ValueError):
        map_symbols_to_grid(np.ones((4, 3)), comb, 8, 4, 15e3)  # symbol count mismatch
    with pytest.raises(ValueError):
        map_symbols_to_grid(np.ones(4), comb, 8, 4, 15e3, symbol_indices=np.array([], int))


def test_resource_grid_shape_validation():
    with pytest.raises(ValueError):
        ResourceGrid(n_subcarriers=4, n_symbols=2, scs_hz=15e3, cells=np.zeros((4, 3)))


# ---------------------------------------------------------------------------
# Family dispatch
# ---------------------------------------------------------------------------


def test_pilot_sequence_srs_is_extended_prime_zc():
    seq = pilot_sequence("srs", 128, zc_root=25)
    prime = 127
    zc = generate_zadoff_chu(25, prime).samples
    assert np.allclose(seq, cyclic_extend(zc, 128), atol=1e-12)
    assert np.allclose(np.abs(seq), 1.0, atol=1e-12)


def test_pilot_sequence_srs_root_reduced_mod_prime():
    # Root larger than the prime must wrap instead of failing validation.
    seq = pilot_sequence("srs", 8, zc_root=25)
    zc = generate_zadoff_chu(25 % 7, 7).samples
    assert np.allclose(seq, cyclic_extend(zc, 8), atol=1e-12)


def test_pilot_sequence_prs_per_symbol_columns_differ():
    block = pilot_sequence("prs", 32, n_occupied_symbols=4, pn_seed=9, per_symbol=True)
    assert block.shape == (32, 4)
    flat = generate_pseudo_random(9, 128).samples
    assert np.allclose(block, flat.reshape(4, 32).T)
    assert not np.allclose(block[:, 0], block[:, 1])


def test_pilot_sequence_prs_single():
    seq = pilot_sequence("csirs", 24, pn_seed=3)
    assert seq.shape == (24,)
    assert np.allclose(seq, generate_pseudo_random(3, 24).samples)


def test_pilot_sequence_unknown_family():
    with pytest.raises(ValueError):
        pilot_sequence("dmrs", 16)


def test_dump_grid_csv(tmp_path):
    comb = CombConfig(comb_size=2, n_symbols=1)
    grid = map_to_comb(np.array([1 + 2j, 3 - 4j]), comb, 4, 2, 15e3)
    path = tmp_path / "grid.csv"
    dump_grid_csv(grid, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "subcarrier_index,symbol_index,re,im"
    assert len(lines) == 3
    fields = lines[1].split(",")
    assert int(fields[0]) == 0 and int(fields[1]) == 0
    assert float(fields[2]) == 1.0 and float(fields[3]) == 2.0
