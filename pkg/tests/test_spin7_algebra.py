"""
Tests for octonions, the Cayley form, τ and characteristic angles
"""
import numpy as np
import pytest
from scipy.linalg import expm

from cayley.errors import Degenerate, RankDeficient
from cayley.spin7_algebra import (
    PHI0_TERMS,
    angle_criterion,
    cayley_margin,
    e_basis,
    octonion_mul,
    phi0_eval,
    phi0_form,
    spin7_generators,
    standard_plane,
    tau_eval,
    normal_complement,
    tau_jacobian,
)


def random_frames(count, seed=0):
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.normal(size=(count, 8, 4)))
    return np.swapaxes(q, -1, -2)


def random_cayley_frames(count, seed=0):
    rng = np.random.default_rng(seed)
    gens = spin7_generators()
    base = standard_plane([1, 2, 3, 4]).array
    frames = []
    for _ in range(count):
        g = expm(np.einsum("k,kij->ij", rng.normal(size=len(gens)), gens))
        frames.append(base @ g.T)
    return np.array(frames)


def test_phi0_coefficients_match_table():
    """The octonion-derived form has exactly the 14 ±1 coefficients"""
    coeffs = {label: int(c) for label, c in phi0_form().coeffs.items() if c != 0}
    assert coeffs == PHI0_TERMS


def test_octonion_norm_is_multiplicative():
    """|ab| = |a||b|"""
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(2, 50, 8))
    lhs = np.linalg.norm(octonion_mul(a, b), axis=-1)
    rhs = np.linalg.norm(a, axis=-1) * np.linalg.norm(b, axis=-1)
    assert np.allclose(lhs, rhs, rtol=1e-12)


def test_calibration_identity_on_random_frames():
    """Φ₀ ∈ [−1, 1] and Φ₀² + |τ|² = 1 on 10⁵ frames"""
    for batch in range(10):
        frames = random_frames(10_000, seed=batch)
        phi = phi0_eval(frames)
        tau = np.linalg.norm(tau_eval(frames), axis=-1)
        assert np.all(np.abs(phi) <= 1 + 1e-12)
        assert np.allclose(phi ** 2 + tau ** 2, 1.0, atol=1e-10)


def test_standard_plane_is_cayley():
    """e1234 is calibrated with τ = 0"""
    plane = standard_plane([1, 2, 3, 4])
    assert phi0_eval(plane) == pytest.approx(1.0, abs=1e-14)
    assert np.linalg.norm(tau_eval(plane)) < 1e-14


def test_spin7_has_21_generators():
    """The stabilizer algebra of Φ₀ has dimension 21"""
    assert spin7_generators().shape == (21, 8, 8)


def test_tau_jacobian_rank_four_at_cayley_planes():
    """Rank 4 with a singular-value gap of at least 10²"""
    frames = random_cayley_frames(20, seed=3)
    assert np.allclose(phi0_eval(frames), 1.0, atol=1e-10)
    s = np.linalg.svd(tau_jacobian(frames, normal_complement(frames)), compute_uv=False)
    assert np.all(s[:, 3] / np.maximum(s[:, 4], 1e-300) >= 1e2)


def test_e_basis_is_orthonormal():
    """E has an orthonormal 4-frame inside Im O"""
    basis = e_basis(standard_plane([1, 2, 3, 4])).basis
    assert np.allclose(basis.T @ basis, np.eye(4), atol=1e-12)


def test_margin_and_projection_near_a_cayley_plane():
    """Tilting e4 towards e5 by θ: margin cos θ, τ lies in E to first order"""
    theta = 1e-3
    frame = standard_plane([1, 2, 3, 4]).array.copy()
    frame[3] = np.cos(theta) * frame[3] + np.sin(theta) * np.eye(8)[4]
    assert cayley_margin(frame) == pytest.approx(np.cos(theta), abs=1e-14)
    basis = e_basis(standard_plane([1, 2, 3, 4]))
    assert np.allclose(basis.projector @ basis.projector, basis.projector, atol=1e-12)
    tau = tau_eval(frame)
    assert np.linalg.norm(basis.coefficients(tau)) == pytest.approx(np.linalg.norm(tau), rel=1e-2)


def test_e_basis_rejects_far_planes():
    """Margin below 0.9 raises RankDeficient"""
    with pytest.raises(RankDeficient):
        e_basis(standard_plane([1, 2, 3, 5]))


def test_complex_pair_fails_angle_criterion():
    """{e1..e4} vs {e5..e8}: all angles π/2, sum 2π"""
    result = angle_criterion(standard_plane([1, 2, 3, 4]), standard_plane([5, 6, 7, 8]))
    assert result["sum"] == pytest.approx(2 * np.pi, abs=1e-9)
    assert result["passes"] is False


def test_rotated_plane_angles_are_recovered():
    """Planes rotated by (0.3, 0.4, 0.5, 0.2) report those angles"""
    thetas = [0.3, 0.4, 0.5, 0.2]
    frame = np.zeros((4, 8))
    for i, theta in enumerate(thetas):
        frame[i, i] = np.cos(theta)
        frame[i, i + 4] = np.sin(theta)
    result = angle_criterion(standard_plane([1, 2, 3, 4]), frame)
    assert sorted(result["angles"]) == pytest.approx(sorted(thetas), abs=1e-12)
    assert result["passes"] is True


def test_shared_direction_is_degenerate():
    """Planes sharing a line raise Degenerate"""
    with pytest.raises(Degenerate):
        angle_criterion(standard_plane([1, 2, 3, 4]), standard_plane([1, 5, 6, 7]))


def test_octonion_unit_laws():
    """e₀ is a two-sided unit and every imaginary unit squares to −e₀"""
    basis = np.eye(8)
    x = np.random.default_rng(4).normal(size=(20, 8))
    assert np.allclose(octonion_mul(basis[0], x), x, atol=1e-14)
    assert np.allclose(octonion_mul(x, basis[0]), x, atol=1e-14)
    for i in range(1, 8):
        assert np.allclose(octonion_mul(basis[i], basis[i]), -basis[0], atol=1e-14)


def test_swapping_two_vectors_flips_phi0_and_tau():
    """Φ₀ and τ are alternating in their four arguments"""
    frames = random_frames(200, seed=5)
    for i, j in ((0, 1), (1, 3), (0, 3)):
        order = [0, 1, 2, 3]
        order[i], order[j] = order[j], order[i]
        swapped = frames[:, order]
        assert np.allclose(phi0_eval(swapped), -phi0_eval(frames), atol=1e-12)
        assert np.allclose(tau_eval(swapped), -tau_eval(frames), atol=1e-12)


def test_unit_phi0_exactly_when_tau_vanishes():
    """|Φ₀| = 1 if and only if |τ| ≤ 1e−9 on orthonormal frames of either orientation"""
    cayley = random_cayley_frames(30, seed=6)
    reversed_cayley = cayley[:, [1, 0, 2, 3]]
    frames = np.concatenate([cayley, reversed_cayley, random_frames(60, seed=7)])
    unit = np.abs(np.abs(phi0_eval(frames)) - 1.0) <= 1e-9
    small_tau = np.linalg.norm(tau_eval(frames), axis=-1) <= 1e-9
    assert np.array_equal(unit, small_tau)
    assert unit.sum() == 60
    assert np.all(phi0_eval(reversed_cayley) < 0)


def random_rotation(seed):
    q, _ = np.linalg.qr(np.random.default_rng(seed).normal(size=(8, 8)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def test_angle_criterion_is_symmetric_and_rotation_invariant():
    """Swapping the planes or rotating both by SO(8) keeps angles and sign"""
    frames = random_frames(10, seed=8)
    for k in range(5):
        p1, p2 = frames[2 * k], frames[2 * k + 1]
        base = angle_criterion(p1, p2)
        swapped = angle_criterion(p2, p1)
        assert swapped["angles"] == pytest.approx(base["angles"], abs=1e-10)
        assert swapped["intersection_sign"] == base["intersection_sign"]
        g = random_rotation(k)
        rotated = angle_criterion(p1 @ g.T, p2 @ g.T)
        assert rotated["angles"] == pytest.approx(base["angles"], abs=1e-10)
        assert rotated["intersection_sign"] == base["intersection_sign"]
        assert base["intersection_sign"] in (-1, 1)


def test_intersection_sign_follows_orientation():
    """Reversing one plane flips the sign; the rotated pair meets positively"""
    thetas = [0.3, 0.4, 0.5, 0.2]
    frame = np.zeros((4, 8))
    for i, theta in enumerate(thetas):
        frame[i, i] = np.cos(theta)
        frame[i, i + 4] = np.sin(theta)
    plane = standard_plane([1, 2, 3, 4])
    assert angle_criterion(plane, frame)["intersection_sign"] == 1
    assert angle_criterion(plane, frame[[1, 0, 2, 3]])["intersection_sign"] == -1
