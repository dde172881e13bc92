import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shearcs.numerics import Grid3, load_volume, norm2
from shearcs.transforms import (
    Gradient3D,
    ShearletSystem,
    Wavelet3D,
    build_transform,
    default_scales,
    export_subbands,
)
from shearcs.transforms.shearlet import (
    radial_windows,
    shear_limit,
    shear_window,
    shearlet_filters,
)
from shearcs.transforms.wavelet import DB2_HIGH, DB2_LOW

from conftest import crandn

G32 = Grid3.cube(32)
ALL_KINDS = ["shearlet3d", "shearlet2d-slicewise", "wavelet3d", "grad3d"]


@pytest.fixture(scope="module")
def systems():
    return {kind: build_transform(kind, G32) for kind in ALL_KINDS}


def test_shear_limits():
    assert [shear_limit(j) for j in range(5)] == [1, 2, 2, 3, 4]


def test_window_partitions_of_unity():
    t = np.linspace(-3, 3, 1001)
    total = sum(shear_window(t - k) ** 2 for k in range(-5, 6))
    np.testing.assert_allclose(total, 1.0, atol=1e-12)
    r = np.linspace(0, 1, 513)
    np.testing.assert_allclose(sum(w**2 for w in radial_windows(r, 3)), 1.0, atol=1e-12)


def test_2d_shear_counts():
    f, sb = shearlet_filters((64, 64), 3)
    per = {}
    for s in sb[1:]:
        per.setdefault((s.scale, s.cone), 0)
        per[(s.scale, s.cone)] += 1
    assert per[(0, 0)] == per[(0, 1)] == 3  # j = 0: k in {-1, 0, 1}
    assert per[(2, 0)] == per[(2, 1)] == 5  # j = 2: |k| <= 2
    assert sum(1 for s in sb if s.scale == 0) == 6
    assert len(sb) == 1 + 2 * (3 + 5 + 5)


def test_3d_shear_counts(systems):
    T = systems["shearlet3d"]
    counts = T.shear_counts()
    assert all(counts[(0, cone)] == 9 for cone in range(3))
    assert sum(v for (j, _), v in counts.items() if j == 0) == 27
    assert T.n_subbands == 1 + 27 + 75


def test_2d_partition_matches_build_counts():
    T = ShearletSystem(Grid3(64, 64, 8), 2, kind="2d-slicewise")
    counts = T.shear_counts()
    sizes = {}
    for level, a, b in T.level_partition():
        sizes[level] = sizes.get(level, 0) + (b - a)
    vox = 64 * 64 * 8
    assert sizes[0] == vox
    for j in range(2):
        assert sizes[j + 1] == vox * (counts[(j, 0)] + counts[(j, 1)])


def test_wavelet_level_sizes_32_three_scales():
    T = Wavelet3D(G32, 3)
    sizes = [b - a for _, a, b in T.level_partition()]
    assert sizes == [4**3, 7 * 4**3, 7 * 8**3, 7 * 16**3]


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_partition_tiles_indices(systems, kind):
    T = systems[kind]
    pos = 0
    for level, a, b in T.level_partition():
        assert a == pos and b > a
        pos = b
    assert pos == T.n_coefficients
    assert {lvl for lvl, _, _ in T.level_partition()} == set(range(T.n_levels))


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_adjoint_identity(systems, kind, rng):
    T = systems[kind]
    x = crandn(rng, G32.shape)
    c = crandn(rng, T.n_coefficients)
    lhs = np.vdot(T.analyze(x).data, c)
    rhs = np.vdot(x, T.synthesize(c))
    assert abs(lhs - rhs) < 1e-8 * norm2(x) * norm2(c)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_zero_maps_to_zero(systems, kind):
    T = systems[kind]
    assert not np.any(T.analyze(np.zeros(G32.shape)).data)
    assert not np.any(T.synthesize(np.zeros(T.n_coefficients)))


@pytest.mark.parametrize("kind", ["shearlet3d", "shearlet2d-slicewise"])
def test_shearlet_parseval_round_trip(systems, kind, rng):
    T = systems[kind]
    x = crandn(rng, G32.shape)
    c = T.analyze(x)
    assert abs(norm2(c) / norm2(x) - 1) < 1e-6
    assert norm2(T.synthesize(c) - x) / norm2(x) < 1e-6


def test_shearlet_parseval_many_volumes():
    T = ShearletSystem(Grid3.cube(32), 1)
    r = np.random.default_rng(7)
    for _ in range(100):
        x = crandn(r, T.grid.shape) * r.uniform(0.01, 100)
        assert abs(norm2(T.analyze(x)) / norm2(x) - 1) <= 1e-6


def test_shearlet_single_precision_coefficients(systems, rng):
    T = systems["shearlet3d"]
    x = crandn(rng, G32.shape)
    c = T.analyze(x, dtype=np.complex64)
    assert c.data.dtype == np.complex64
    assert norm2(T.synthesize(c) - x) / norm2(x) < 1e-5


def test_db2_filters_orthonormal():
    assert np.dot(DB2_LOW, DB2_LOW) == pytest.approx(1.0, abs=1e-15)
    assert np.dot(DB2_LOW, DB2_HIGH) == pytest.approx(0.0, abs=1e-15)
    assert np.sum(DB2_LOW) == pytest.approx(np.sqrt(2.0), abs=1e-15)
    # two vanishing moments of the high-pass filter
    assert abs(np.sum(DB2_HIGH)) < 1e-15 and abs(np.dot(np.arange(4), DB2_HIGH)) < 1e-14


def test_wavelet_perfect_reconstruction(rng):
    for grid, J in [(G32, 3), (Grid3(16, 8, 24), 2)]:
        T = Wavelet3D(grid, J)
        x = crandn(rng, grid.shape)
        c = T.analyze(x)
        assert abs(norm2(c) - norm2(x)) < 1e-10 * norm2(x)
        assert norm2(T.synthesize(c) - x) < 1e-10 * norm2(x)


def test_wavelet_constant_only_in_approximation(systems):
    T = systems["wavelet3d"]
    c = T.analyze(np.full(G32.shape, 2.0))
    lo_end = T.level_partition()[0][2]
    assert np.max(np.abs(c.data[lo_end:])) < 1e-12
    assert np.all(np.abs(c.data[:lo_end]) > 0)


def test_gradient_of_constant_and_ramp():
    T = Gradient3D(Grid3(6, 5, 4))
    assert not np.any(T.analyze(np.full((6, 5, 4), 3.0 + 1j)).data)
    ramp = np.arange(6)[:, None, None] * np.ones((6, 5, 4))
    g = T.analyze(ramp).data.reshape(3, 6, 5, 4)
    assert np.all(g[0, :-1] == 1) and np.all(g[0, -1] == 0)
    assert not np.any(g[1]) and not np.any(g[2])


def test_gradient_adjoint_against_dense_matrix():
    grid = Grid3(4, 4, 5)
    T = Gradient3D(grid)
    n = grid.size
    D = np.stack([T.analyze(e.reshape(grid.shape)).data for e in np.eye(n)], axis=1)
    for k in range(0, D.shape[0], 7):
        np.testing.assert_allclose(T.synthesize(np.eye(D.shape[0])[k]).ravel(), D[k], atol=1e-14)


def test_invalid_dimensions():
    with pytest.raises(ValueError, match="cubic"):
        ShearletSystem(Grid3(32, 32, 64), 2)
    with pytest.raises(ValueError, match="power-of-two"):
        ShearletSystem(Grid3.cube(48), 2)
    with pytest.raises(ValueError, match="2\\^\\(J\\+1\\)"):
        ShearletSystem(Grid3.cube(32), 5)
    with pytest.raises(ValueError, match="divisible"):
        Wavelet3D(Grid3.cube(20), 3)
    with pytest.raises(ValueError):
        build_transform("curvelet", G32)


def test_layout_mismatch(systems):
    with pytest.raises(ValueError):
        systems["wavelet3d"].synthesize(systems["grad3d"].analyze(np.zeros(G32.shape)))
    with pytest.raises(ValueError):
        systems["grad3d"].analyze(np.zeros((8, 8, 8)))


def test_default_scales():
    assert [default_scales(n) for n in (16, 32, 64, 128)] == [1, 2, 3, 4]


def test_subband_export(tmp_path, rng):
    T = Wavelet3D(Grid3.cube(16), 1)
    c = T.analyze(crandn(rng, (16, 16, 16)))
    paths = export_subbands(c, tmp_path)
    assert len(paths) == 8
    np.testing.assert_array_equal(load_volume(paths[3]).data, list(c.subbands())[3])


@settings(max_examples=15)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["wavelet3d", "grad3d", "shearlet2d-slicewise"]))
def test_analysis_is_linear(seed, kind):
    T = build_transform(kind, Grid3.cube(16), 1)
    r = np.random.default_rng(seed)
    x, z = crandn(r, (16, 16, 16)), crandn(r, (16, 16, 16))
    a = complex(*r.standard_normal(2))
    lhs = T.analyze(a * x + z).data
    rhs = a * T.analyze(x).data + T.analyze(z).data
    assert norm2(lhs - rhs) <= 1e-12 * norm2(lhs)
