"""
Tests for conical patches, link grids and the AC smoothing
"""
import numpy as np
import pytest

from cayley.conical_scenarios import (
    fitted_decay_rate,
    link_axes,
    make_flat_cone,
    make_flat_torus4,
    make_link_grid,
    make_quadric_cone,
    make_quadric_smoothing,
    tangent_normal_frames,
)
from cayley.errors import BadRange
from cayley.spin7_algebra import OrientedPlane4


def test_round_link_volume():
    """vol(S³) = 2π²"""
    grid = make_link_grid("round_s3", (16, 8, 8))
    assert grid.volume == pytest.approx(2 * np.pi ** 2, rel=1e-2)


def test_flat_cone_is_calibrated():
    """The Cayley plane seen as a cone has margin 1 everywhere"""
    patch = make_flat_cone(0.1, 1.0, (4, 4, 4), n_r=8)
    assert np.allclose(patch.margins, 1.0, atol=1e-9)


def test_quadric_cone_is_calibrated():
    """The quadric cone is a complex, hence Cayley, cone"""
    patch = make_quadric_cone(0.1, 1.0, (4, 4, 4), n_r=8)
    assert np.abs(patch.margins).min() >= 1 - 1e-9


def test_quadric_smoothing_is_calibrated():
    """The smoothing {Σz² = ε²} is Cayley at every node"""
    patch = make_quadric_smoothing(0.25, 4.0, (4, 4, 4), n_r=8)
    assert patch.margins.min() >= 1 - 1e-9
    assert patch.rate == -1.0


def test_smoothing_radius_is_norm():
    """The radial coordinate equals |f|"""
    patch = make_quadric_smoothing(0.25, 4.0, (4, 4, 4), n_r=8)
    coords = patch.grid.coordinates()
    assert np.allclose(np.linalg.norm(patch.points, axis=-1), coords[:, 0], rtol=1e-12)


def test_smoothing_decays_at_rate_minus_one():
    """|f_ε − ι| ~ r^{−1}"""
    assert fitted_decay_rate(0.25) == pytest.approx(-1.0, abs=0.05)


def test_flat_torus_patch():
    """T⁴ × {0} is calibrated and periodic"""
    patch = make_flat_torus4(5)
    assert patch.kind == "torus4"
    assert patch.size == 5 ** 4
    assert np.allclose(patch.margins, 1.0)


def test_tangent_normal_frames():
    """Frames at a node: an oriented Cayley plane and its normal complement"""
    patch = make_quadric_cone(0.1, 1.0, (4, 4, 4), n_r=8)
    frames = tangent_normal_frames(patch, (3, 1, 2, 0))
    assert isinstance(frames["tangent"], OrientedPlane4)
    tangent = frames["tangent"].array
    normal = frames["normal"]
    assert np.allclose(tangent @ normal.T, 0.0, atol=1e-12)
    assert np.linalg.det(np.vstack([tangent, normal])) > 0


def test_invalid_ranges():
    """Inverted radii and odd quadric resolution are rejected"""
    with pytest.raises(BadRange):
        make_quadric_cone(1.0, 0.5)
    with pytest.raises(BadRange):
        link_axes("quadric", (4, 4, 5))
    with pytest.raises(BadRange):
        make_quadric_smoothing(0.25, 4.0, r_lo=0.2)
