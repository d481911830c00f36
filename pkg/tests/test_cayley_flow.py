"""
Tests for the deformation operator F, its linearization D and the iteration
"""
import numpy as np
import pytest

from cayley.cayley_flow import (
    NormalField,
    apply_D,
    assemble_D,
    initial_error_scan,
    iterate_to_cayley,
    kernel_basis,
    linearize_D,
    nonlinear_F,
    quadratic_Q,
)
from cayley.conical_scenarios import ParametricPatch, loglog_slope, make_flat_torus4, make_quadric_cone
from cayley.errors import BadRange, GridMismatch, MarginTooLow, NoContraction
from cayley.gluing import build_scenario
from cayley.grids import Axis, StructuredGrid
from cayley.schemas import IterationParams
from cayley.weighted_analysis import WeightedNormSpec, random_smooth_field, weighted_sobolev_norm


@pytest.fixture(scope="module")
def cone_patch():
    return make_quadric_cone(0.2, 1.0, (4, 4, 4), n_r=8)


def smooth_normal_field(immersion, seed, scale=1.0):
    return NormalField(immersion, scale * random_smooth_field(immersion, seed=seed))


def test_flat_torus_is_a_zero_of_F():
    """F vanishes on T⁴ × {p}"""
    for offset in (None, np.full(8, 0.3)):
        assert nonlinear_F(make_flat_torus4(5, offset)).sup_norm() < 1e-12


def test_flat_torus_kernel_is_translations():
    """D on the 5⁴ torus has a 4-dimensional kernel with a clear gap"""
    sigma, vectors = kernel_basis(assemble_D(make_flat_torus4(5)), count=5)
    assert sigma[3] < 1e-8
    assert sigma[4] / max(sigma[3], 1e-300) >= 1e3
    assert vectors.shape == (5, 4 * 5 ** 4)


def test_even_torus_kernel_includes_checkerboards():
    """On 4⁴ central differences add the 15 sign-alternating wavevectors: 64 modes"""
    torus = make_flat_torus4(4)
    sigma, _ = kernel_basis(assemble_D(torus), count=65)
    assert sigma[63] < 1e-8
    assert sigma[64] / max(sigma[63], 1e-300) >= 1e3
    theta = torus.grid.coordinates()
    checker = np.cos(np.pi * 4 * theta[:, 0]) * np.cos(np.pi * 4 * theta[:, 2])
    mode = NormalField(torus, np.outer(checker, np.eye(4)[1]))
    assert apply_D(torus, mode).sup_norm() < 1e-10


def test_normal_translation_is_in_the_kernel():
    """A constant normal shift of the torus is annihilated by D"""
    torus = make_flat_torus4(5)
    shift = NormalField.from_ambient(torus, np.eye(8)[5])
    assert np.abs(shift.ambient() - np.eye(8)[5]).max() < 1e-12
    assert apply_D(torus, shift).sup_norm() < 1e-10


def test_cone_is_a_zero_of_F(cone_patch):
    """The quadric cone is Cayley"""
    assert nonlinear_F(cone_patch).sup_norm() < 1e-10


def test_assembled_D_matches_directional_derivative(cone_patch):
    """Dv from the sparse matrix equals the central difference of F"""
    v = smooth_normal_field(cone_patch, seed=4)
    assembled = apply_D(cone_patch, v).values
    directional = linearize_D(cone_patch, v).values
    scale = np.abs(assembled).max()
    assert np.abs(assembled - directional).max() <= 1e-5 * scale


def test_Q_is_quadratic(cone_patch):
    """Q(2v) ≈ 4 Q(v) for small v"""
    v = smooth_normal_field(cone_patch, seed=5, scale=1e-3)
    q1 = np.linalg.norm(quadratic_Q(cone_patch, v).values)
    q2 = np.linalg.norm(quadratic_Q(cone_patch, 2.0 * v).values)
    assert q2 / q1 == pytest.approx(4.0, rel=0.1)


def test_normal_field_shape_is_checked(cone_patch):
    """Wrong shapes raise GridMismatch"""
    with pytest.raises(GridMismatch):
        NormalField(cone_patch, np.zeros((cone_patch.size, 3)))


def test_far_from_cayley_base_is_rejected():
    """span(e1, e2, e3, e5) has margin 0"""
    axes = [Axis(f"theta{i + 1}", np.arange(4) / 4, "periodic", 1.0) for i in range(4)]

    def evaluate(coords):
        lead = coords.shape[:-1]
        f = np.zeros(lead + (8,))
        f[..., [0, 1, 2, 4]] = coords
        df = np.zeros(lead + (4, 8))
        for j, a in enumerate((0, 1, 2, 4)):
            df[..., j, a] = 1.0
        return f, df, np.zeros(lead + (4, 4, 8))

    patch = ParametricPatch("torus4", StructuredGrid(axes), evaluate)
    with pytest.raises(MarginTooLow):
        nonlinear_F(patch)


def test_error_scan_validates_inputs():
    """t_list must be geometric and δ inside the weight window"""
    build = lambda t: build_scenario("quadric", t, link_res=(4, 4, 4), radial_density=6)  # noqa: E731
    with pytest.raises(BadRange):
        initial_error_scan(build, [0.08, 0.05, 0.02], 0.8, 1.5, 1.25)
    with pytest.raises(BadRange):
        initial_error_scan(build, [0.08, 0.04, 0.02], 0.8, 1.5, 1.45)


def test_error_scan_rows_follow_input_order():
    """Rows come back in t_list order with positive norms"""
    build = lambda t: build_scenario("quadric", t, link_res=(4, 4, 4), radial_density=6)  # noqa: E731
    result = initial_error_scan(build, [0.08, 0.04, 0.02], 0.8, 1.5, 1.25, threads=2)
    assert [row.t for row in result.rows] == [0.08, 0.04, 0.02]
    assert all(row.F_norm > 0 for row in result.rows)
    assert result.predicted == pytest.approx(0.2)


def test_cayley_input_converges_immediately(cone_glued):
    """Gluing the cone to itself gives a Cayley input: one step, negligible v"""
    result = iterate_to_cayley(cone_glued, IterationParams(max_iter=3))
    assert result.converged
    assert len(result.history) == 1
    assert np.abs(result.v_final.values).max() <= 1e-8


@pytest.fixture(scope="module")
def quadric_iteration(quadric_glued):
    return iterate_to_cayley(quadric_glued, IterationParams(max_iter=20, tol=1e-10))


def test_quadric_iteration_contracts(quadric_iteration):
    """t = 0.02: converged within 20 steps, every ratio ≤ ½"""
    assert quadric_iteration.converged
    assert len(quadric_iteration.history) <= 20
    assert quadric_iteration.ratios
    assert max(quadric_iteration.ratios) <= 0.5


def test_quadric_iteration_improves_the_immersion(quadric_iteration):
    """‖F‖ drops by 10³, decreases after the second step and the margin rises"""
    result = quadric_iteration
    assert result.final_F_norm <= 1e-3 * result.initial_F_norm
    f_norms = [h.F_norm for h in result.history]
    for before, after in zip(f_norms[1:], f_norms[2:]):
        assert after <= 1.1 * before + 1e-12
    assert result.final_margin > result.initial_margin


def test_quadric_iteration_stays_near_first_step(quadric_glued, quadric_iteration):
    """‖v_∞‖ ≤ 2‖v_1‖ in L²_{1,δ}"""
    spec = WeightedNormSpec(p=2, k=1, deltas=[1.25])
    final = weighted_sobolev_norm(quadric_iteration.v_final, quadric_glued, spec, quadric_glued.rho)
    assert final <= 2.0 * quadric_iteration.step_norms[0]


def test_exhausted_iterations_raise(quadric_glued):
    """Stopping at max_iter without reaching tol is NoContraction"""
    with pytest.raises(NoContraction) as info:
        iterate_to_cayley(quadric_glued, IterationParams(max_iter=2))
    assert len(info.value.ratios) == 1


def test_relinearized_D_matches_directional_derivative(quadric_glued):
    """D assembled at v is the derivative of F at v"""
    v = decaying_field(quadric_glued, seed=3, size=1e-2)
    w = decaying_field(quadric_glued, seed=4, size=1e-2)
    assembled = assemble_D(quadric_glued, at=v) @ w.values.ravel()
    h = 1e-4
    plus = nonlinear_F(quadric_glued, v + h * w).values
    minus = nonlinear_F(quadric_glued, v - h * w).values
    directional = ((plus - minus) / (2.0 * h)).ravel()
    assert np.abs(assembled - directional).max() <= 1e-5 * np.abs(assembled).max()
    assert np.abs(assembled - assemble_D(quadric_glued) @ w.values.ravel()).max() > 0


def test_error_scan_slope_matches_prediction():
    """Quadric, ν = 0.8, μ = 1.5, δ = 1.25: slope within 15% of 0.2"""
    build = lambda t: build_scenario("quadric", t, link_res=(6, 6, 6), radial_density=8)  # noqa: E731
    result = initial_error_scan(build, [0.08, 0.04, 0.02, 0.01], 0.8, 1.5, 1.25, threads=2)
    assert result.predicted == pytest.approx(0.2)
    assert abs(result.slope - result.predicted) <= 0.15 * result.predicted


def test_initial_error_is_supported_in_the_neck(quadric_glued):
    """F(0) vanishes on the upper and lower parts"""
    outside = ~quadric_glued.part_mask("middle")
    assert np.any(outside)
    assert np.abs(nonlinear_F(quadric_glued).values[outside]).max() <= 1e-9


def decaying_field(glued, seed, size):
    """Smooth field ρ^δ·u rescaled to L²_{1,δ} norm `size`"""
    values = random_smooth_field(glued, seed=seed) * glued.rho.values[:, None] ** 1.25
    norm = weighted_sobolev_norm(values, glued, WeightedNormSpec(p=2, k=1, deltas=[1.25]), glued.rho)
    return NormalField(glued, values * (size / norm))


def test_Q_scales_quadratically_on_glued(quadric_glued):
    """log ‖Q(sv)‖ against log s has slope ≥ 1.9 for s = 0.1, 0.05, 0.025"""
    spec = WeightedNormSpec(p=2, k=0, deltas=[0.25])
    f0 = nonlinear_F(quadric_glued)
    v = decaying_field(quadric_glued, seed=7, size=0.1)
    scales = [0.1, 0.05, 0.025]
    norms = [
        weighted_sobolev_norm(quadratic_Q(quadric_glued, s * v, f0), quadric_glued, spec, quadric_glued.rho)
        for s in scales
    ]
    assert loglog_slope(scales, norms) >= 1.9


def test_D_is_first_order_accurate(quadric_glued):
    """‖(F(hv) − F(0))/h − Dv‖ halves with h along 10 directions"""
    f0 = nonlinear_F(quadric_glued).values
    for seed in range(10):
        v = decaying_field(quadric_glued, seed=seed, size=0.05)
        dv = apply_D(quadric_glued, v).values
        errors = [
            np.linalg.norm((nonlinear_F(quadric_glued, h * v).values - f0) / h - dv)
            for h in (0.2, 0.1, 0.05)
        ]
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all((orders >= 0.9) & (orders <= 1.1)), (seed, orders)


def test_Q_difference_bound_is_uniform_in_t(quadric_glued):
    """One C_Q, fixed at t = 0.04, bounds ‖Q(v) − Q(w)‖ at t = 0.02 on 20 pairs"""
    radius = 1e-2
    spec_v = WeightedNormSpec(p=2, k=1, deltas=[1.25])
    spec_q = WeightedNormSpec(p=2, k=0, deltas=[0.25])

    def worst_ratio(glued):
        f0 = nonlinear_F(glued)
        sizes = np.random.default_rng(11).uniform(0.25, 1.0, size=(20, 2)) * radius
        ratios = []
        for pair, (a, b) in enumerate(sizes):
            v = decaying_field(glued, seed=2 * pair, size=a)
            w = decaying_field(glued, seed=2 * pair + 1, size=b)
            dq = quadratic_Q(glued, v, f0).values - quadratic_Q(glued, w, f0).values
            num = weighted_sobolev_norm(dq, glued, spec_q, glued.rho)
            den = weighted_sobolev_norm(v - w, glued, spec_v, glued.rho) * (a + b)
            ratios.append(num / den)
        return max(ratios)

    coarse = build_scenario("quadric", 0.04, link_res=(4, 4, 4), radial_density=6)
    c_q = 2.0 * worst_ratio(coarse)
    assert worst_ratio(quadric_glued) <= c_q


def test_kernel_basis_count_is_checked(cone_patch):
    """count must lie in [1, n)"""
    with pytest.raises(BadRange):
        kernel_basis(assemble_D(cone_patch), count=0)
