import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shearcs.encoding import EncodingOperator
from shearcs.numerics import ComplexVolume, Grid3
from shearcs.sampling import generate_rpe
from shearcs.simulation import (
    Ellipsoid,
    PhantomSpec,
    Tube,
    default_phantom_spec,
    load_centerlines,
    load_phantom_spec,
    make_coils,
    make_phantom,
    noise_sigma_for_snr,
    phantom_spec_from_text,
    rotation_matrix,
    save_centerlines,
    save_phantom_spec,
    simulate_acquisition,
    smooth_membership,
)
from shearcs.textio import FormatError
from shearcs.transforms import build_transform


@pytest.fixture(scope="module")
def g32():
    return Grid3.cube(32, 1.0)


def test_empty_spec_is_constant(g32):
    vol, lines = make_phantom(g32, PhantomSpec(background=0.3))
    assert np.all(vol.data == 0.3) and lines == []


def test_single_ellipsoid_range(g32):
    spec = PhantomSpec([Ellipsoid((15.5, 15.5, 15.5), (8, 6, 5), (0.3, 0.2, 0.1), 1.0)], background=0.1)
    vol, _ = make_phantom(g32, spec)
    assert vol.data.real.max() == pytest.approx(1.0)
    assert vol.data.real.min() == pytest.approx(0.1)
    assert not np.any(vol.data.imag)


def test_tube_cross_section_area(g32):
    # straight tube along z, radius 2 voxels; count pixels above half intensity
    spec = PhantomSpec(tubes=[Tube(((15.3, 16.1, 3.0), (15.3, 16.1, 28.0)), 2.0, 1.0)])
    vol, lines = make_phantom(g32, spec)
    area = np.count_nonzero(vol.data.real[:, :, 16] > 0.5)
    assert abs(area - math.pi * 4) <= 0.15 * math.pi * 4
    np.testing.assert_allclose(lines[0][0][0], (15.3, 16.1, 3.0))
    assert lines[0][1] == 2.0


def test_smooth_edge_transition():
    d = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])
    np.testing.assert_allclose(smooth_membership(d), [1, 1, 0.5, 0, 0])


@pytest.mark.parametrize(
    "spec",
    [
        PhantomSpec([Ellipsoid((5, 16, 16), (8, 4, 4))]),
        PhantomSpec(tubes=[Tube(((2, 16, 16), (30, 16, 16)), 3.0)]),
    ],
)
def test_geometry_outside_fov(g32, spec):
    with pytest.raises(ValueError, match="outside"):
        make_phantom(g32, spec)


def test_rotated_ellipsoid_extent_is_exact(g32):
    # a 14 x 2 x 2 ellipsoid turned by 90 degrees fits although its long axis would not
    e = Ellipsoid((15.5, 15.5, 15.5), (14.0, 2.0, 2.0), (math.pi / 2, 0, 0))
    make_phantom(g32, PhantomSpec([e]))
    with pytest.raises(ValueError):
        make_phantom(g32, PhantomSpec([Ellipsoid((10.0, 15.5, 15.5), (14.0, 2.0, 2.0))]))


@pytest.mark.parametrize("bad", [dict(background=1.5), dict(tubes=[Tube(((0, 0, 0), (1, 1, 1)), -1.0)]),
                                 dict(ellipsoids=[Ellipsoid((1, 1, 1), (0, 1, 1))])])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        PhantomSpec(**bad)


def test_rotation_is_orthonormal():
    R = rotation_matrix((0.3, -1.2, 2.0))
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-14)
    assert np.linalg.det(R) == pytest.approx(1.0)


def test_default_phantom_properties():
    g = Grid3.cube(32, 3.0)
    a, lines = make_phantom(g, default_phantom_spec(g), seed=4)
    b, _ = make_phantom(g, default_phantom_spec(g), seed=4)
    assert np.array_equal(a.data, b.data)
    assert a.data.real.min() >= 0 and not np.any(a.data.imag)
    assert len(lines) == 3


def test_default_phantom_is_shearlet_compressible():
    g = Grid3.cube(32, 3.0)
    x, _ = make_phantom(g, default_phantom_spec(g))
    c = build_transform("shearlet3d", g).analyze(x.data).data
    energy = np.sort(np.abs(c) ** 2)[::-1]
    top = int(math.ceil(0.05 * energy.size))
    assert energy[:top].sum() >= 0.95 * energy.sum()


def test_texture_is_seeded(g32):
    spec = PhantomSpec([Ellipsoid((15.5, 15.5, 15.5), (8, 8, 8), intensity=0.5)], texture=0.2)
    a = make_phantom(g32, spec, seed=1)[0].data
    b = make_phantom(g32, spec, seed=2)[0].data
    assert not np.array_equal(a, b)
    assert np.array_equal(a, make_phantom(g32, spec, seed=1)[0].data)


# -- coils ---------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 3, 8])
def test_coils_normalised(n):
    g = Grid3.cube(24, 2.0)
    S = make_coils(g, n, seed=5)
    ssq = np.sum(np.abs(S.maps) ** 2, axis=0)
    assert np.max(np.abs(ssq - 1)) < 1e-6
    assert S.support.all()
    if n == 1:
        np.testing.assert_allclose(np.abs(S.maps[0]), 1.0, atol=1e-12)


def test_coils_are_smooth():
    g = Grid3.cube(64, 1.5)
    mag = np.abs(make_coils(g, 8, seed=1).maps)
    jump = max(np.max(np.abs(np.diff(mag, axis=a))) for a in (1, 2, 3))
    assert jump < 0.1


def test_coils_seeded():
    g = Grid3.cube(16)
    assert np.array_equal(make_coils(g, 4, 7).maps, make_coils(g, 4, 7).maps)
    with pytest.raises(ValueError):
        make_coils(g, 0)


# -- acquisition ---------------------------------------------------------


@pytest.fixture(scope="module")
def enc():
    g = Grid3.cube(16)
    return EncodingOperator(make_coils(g, 4, 1), generate_rpe(16, 12, 16))


def test_noiseless_acquisition_is_forward(enc):
    x = np.random.default_rng(0).standard_normal(enc.grid.shape) + 0j
    y = simulate_acquisition(ComplexVolume(enc.grid, x), enc, 0.0)
    assert np.array_equal(y.data, enc.forward(x))
    y2 = simulate_acquisition(2 * x, enc, 0.0)
    np.testing.assert_allclose(y2.data, 2 * y.data, rtol=1e-12)


def test_pure_noise_is_rayleigh(enc):
    y = simulate_acquisition(np.zeros(enc.grid.shape, complex), enc, 1.0, seed=3)
    assert y.data.size >= 10**4
    assert abs(np.mean(np.abs(y.data)) / math.sqrt(math.pi / 2) - 1) < 0.05
    with pytest.raises(ValueError):
        simulate_acquisition(np.zeros(enc.grid.shape), enc, -1.0)


def test_acquisition_seeded(enc):
    x = np.ones(enc.grid.shape, complex)
    a = simulate_acquisition(x, enc, 0.1, seed=9).data
    assert np.array_equal(a, simulate_acquisition(x, enc, 0.1, seed=9).data)
    assert not np.array_equal(a, simulate_acquisition(x, enc, 0.1, seed=8).data)


@given(st.floats(0, 60))
def test_snr_sigma(snr):
    samples = np.full(100, 3.0 + 4.0j)
    sigma = noise_sigma_for_snr(samples, snr)
    # complex noise power 2 sigma^2 relative to signal power 25
    assert 10 * math.log10(25 / (2 * sigma**2)) == pytest.approx(snr)


# -- files ---------------------------------------------------------------


def test_phantom_spec_round_trip(tmp_path):
    spec = default_phantom_spec(Grid3.cube(32, 3.0))
    spec = PhantomSpec(spec.ellipsoids, spec.tubes, 0.05, 0.1)
    save_phantom_spec(tmp_path / "p.txt", spec)
    assert load_phantom_spec(tmp_path / "p.txt") == spec


def test_phantom_spec_errors():
    with pytest.raises(FormatError):
        phantom_spec_from_text("ellipsoid = 1 2 3 ; 1 1 1")
    with pytest.raises(FormatError):
        phantom_spec_from_text("tube = x ; 1 ; 0 0 0 , 1 1 1")


def test_centerline_round_trip(tmp_path):
    lines = [(np.array([[0.0, 1.0, 2.0], [3.0, 4.5, 6.0]]), 2.25), (np.eye(3), 1.0)]
    save_centerlines(tmp_path / "c.txt", lines)
    back = load_centerlines(tmp_path / "c.txt")
    assert len(back) == 2
    for (p, r), (q, s) in zip(lines, back):
        assert r == s and np.array_equal(p, q)
    (tmp_path / "bad.txt").write_text("1 2 3\n")
    with pytest.raises(FormatError):
        load_centerlines(tmp_path / "bad.txt")
