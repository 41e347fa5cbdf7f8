import numpy as np
import pytest

from querloc.localize import (
    Estimate,
    GdOptions,
    LinearSystem,
    SingularGeometryError,
    build_linear_system,
    clamped_weights,
    gd_objective,
    gd_refine,
    gd_refine_batch,
    multilateration_init,
    multilateration_init_batch,
    tdoa_chan_solve,
    wls_solve,
)
from querloc.model import AnchorSet, ProbeScheme, default_scheme_list

ANCHORS = AnchorSet(
    np.array(
        [
            [0.0, 0.0, 0.0],
            [50.0, 0.0, 0.0],
            [0.0, 50.0, 0.0],
            [0.0, 0.0, 50.0],
            [50.0, 50.0, 50.0],
            [50.0, 0.0, 50.0],
            [50.0, 50.0, 0.0],
            [0.0, 50.0, 50.0],
            [25.0, 25.0, 0.0],
            [25.0, 25.0, 50.0],
        ]
    )
)


def _exact_lambdas(x, schemes):
    out = []
    for s in schemes:
        lam = 0.0
        for i, w in s.members:
            lam += w * float(np.sum((x - ANCHORS.position(i)) ** 2))
        out.append(lam)
    return np.array(out)


def test_build_linear_system_worked_example():
    scheme = ProbeScheme(((1, +1), (2, -1)))
    system = build_linear_system(ANCHORS, [scheme], [-1500.0], kappa_s=100.0)
    np.testing.assert_allclose(system.L[0], [-100.0, 0.0, 0.0])
    assert system.h_tilde[0] == pytest.approx(-1000.0)
    # consistency: the noise-free row equation holds at the true position
    x = np.array([10.0, 20.0, 30.0])
    assert float(system.L[0] @ x) == pytest.approx(system.h_tilde[0])


def test_build_linear_system_weights_are_clamped_inverse_squares():
    schemes = default_scheme_list(3, 10)
    lams = np.array([-1500.0, 2000.0, 0.0])
    system = build_linear_system(ANCHORS, schemes, lams, kappa_s=100.0)
    np.testing.assert_allclose(system.weights[:2], 1.0 / lams[:2] ** 2)
    cap = (1e-6 * 1500.0) ** -2
    assert system.weights[2] == pytest.approx(cap)


def test_build_linear_system_unit_weights_when_all_readouts_vanish():
    schemes = default_scheme_list(2, 10)
    system = build_linear_system(ANCHORS, schemes, [0.0, 0.0], kappa_s=100.0)
    np.testing.assert_array_equal(system.weights, [1.0, 1.0])


def test_build_linear_system_shape_for_three_default_schemes():
    schemes = default_scheme_list(3, 10)
    system = build_linear_system(ANCHORS, schemes, [1.0, 2.0, 3.0])
    assert system.L.shape == (3, 3)


def test_build_linear_system_zero_rows_surface_in_solver():
    coincident = AnchorSet(np.zeros((2, 3)) + 1.0)
    scheme = ProbeScheme(((1, +1), (2, -1)))
    system = build_linear_system(coincident, [scheme] * 3, [0.0, 0.0, 0.0])
    np.testing.assert_array_equal(system.L, np.zeros((3, 3)))
    with pytest.raises(SingularGeometryError):
        wls_solve(system)


def test_build_linear_system_length_mismatch():
    with pytest.raises(ValueError):
        build_linear_system(ANCHORS, default_scheme_list(3, 10), [1.0, 2.0])


def test_wls_identity_system():
    system = LinearSystem(np.eye(3), np.array([10.0, 20.0, 30.0]), np.ones(3))
    np.testing.assert_allclose(wls_solve(system).x_hat, [10.0, 20.0, 30.0], atol=1e-12)


def test_wls_zero_noise_recovers_position_exactly():
    rng = np.random.default_rng(2)
    for m in (3, 4, 5):
        schemes = default_scheme_list(m, 10)
        for _ in range(50):
            x = rng.uniform(0.0, 100.0, size=3)
            system = build_linear_system(ANCHORS, schemes, _exact_lambdas(x, schemes), kappa_s=100.0)
            est = wls_solve(system)
            assert np.linalg.norm(est.x_hat - x) <= 1e-9 * 100.0


def test_wls_matches_normal_equations_oracle():
    rng = np.random.default_rng(8)
    for _ in range(100):
        L = rng.normal(size=(5, 3))
        h = rng.normal(size=5)
        w = rng.uniform(0.5, 2.0, size=5)
        system = LinearSystem(L, h, w)
        est = wls_solve(system)
        # brute-force dense solve of (L^T W L) x = L^T W h
        lhs = L.T @ (w[:, None] * L)
        rhs = L.T @ (w * h)
        oracle = np.linalg.solve(lhs, rhs)
        assert np.linalg.norm(est.x_hat - oracle) <= 1e-10 * max(1.0, np.linalg.norm(oracle))


def test_wls_minimizer_cannot_be_improved_by_perturbation():
    rng = np.random.default_rng(13)
    L = rng.normal(size=(5, 3))
    h = rng.normal(size=5)
    w = rng.uniform(0.5, 2.0, size=5)
    system = LinearSystem(L, h, w)
    x = wls_solve(system).x_hat

    def objective(y):
        r = L @ y - h
        return float(r @ (w * r))

    base = objective(x)
    for _ in range(100):
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        assert objective(x + 1e-3 * 100.0 * direction) >= base


def test_wls_weight_scale_invariance():
    rng = np.random.default_rng(21)
    L = rng.normal(size=(4, 3))
    h = rng.normal(size=4)
    w = rng.uniform(0.1, 1.0, size=4)
    a = wls_solve(LinearSystem(L, h, w)).x_hat
    b = wls_solve(LinearSystem(L, h, 173.5 * w)).x_hat
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_wls_underdetermined_raises():
    system = LinearSystem(np.ones((2, 3)), np.ones(2), np.ones(2))
    with pytest.raises(SingularGeometryError):
        wls_solve(system)


def test_clamped_weights_median_convention():
    lam = np.array([-10.0, 4.0, 2.0, -8.0])
    got = clamped_weights(lam, 1.0)
    np.testing.assert_allclose(got, 1.0 / np.maximum(np.abs(lam), 1e-6 * 6.0) ** 2)


def test_multilateration_exact_recovery():
    rng = np.random.default_rng(4)
    coords = ANCHORS.coords[:4]
    for _ in range(50):
        x = rng.uniform(0.0, 100.0, size=3)
        d = np.linalg.norm(coords - x, axis=1)
        est = multilateration_init(coords, d)
        assert np.linalg.norm(est.x_hat - x) <= 1e-9 * 100.0


def test_multilateration_underdetermined_raises():
    coords = ANCHORS.coords[:3]
    with pytest.raises(SingularGeometryError):
        multilateration_init(coords, np.ones(3))


def test_multilateration_degenerate_geometry_raises():
    coords = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [3.0, 0.0, 0.0]])
    with pytest.raises(SingularGeometryError):
        multilateration_init(coords, np.ones(4))


def test_multilateration_matches_grid_refinement_oracle():
    coords = ANCHORS.coords[:5]
    x = np.array([37.2, 61.9, 14.4])
    d = np.linalg.norm(coords - x, axis=1)
    est = multilateration_init(coords, d)

    # nested grid search over sum (||y - a_i|| - d_i)^2
    center = np.array([50.0, 50.0, 50.0])
    half = 60.0
    for _ in range(40):
        axes = [np.linspace(c - half, c + half, 9) for c in center]
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
        resid = np.linalg.norm(grid[:, None, :] - coords[None, :, :], axis=2) - d
        center = grid[np.argmin(np.sum(resid**2, axis=1))]
        half *= 0.55
    assert np.linalg.norm(est.x_hat - center) <= 1e-6


def test_multilateration_batch_matches_per_trial():
    rng = np.random.default_rng(6)
    coords = ANCHORS.coords[:5]
    D = rng.uniform(10.0, 150.0, size=(64, 5))
    batch = multilateration_init_batch(coords, D)
    for i in range(64):
        single = multilateration_init(coords, D[i]).x_hat
        np.testing.assert_allclose(batch[i], single, rtol=1e-10, atol=1e-10)


def test_gd_zero_gradient_at_truth():
    coords = ANCHORS.coords[:5]
    x = np.array([20.0, 30.0, 40.0])
    d = np.linalg.norm(coords - x, axis=1)
    est = gd_refine(x, coords, d, GdOptions(grad_tol=1e-7))
    np.testing.assert_allclose(est.x_hat, x, atol=1e-12)
    assert est.iterations == 0


def test_gd_converges_from_small_offset():
    coords = ANCHORS.coords[:5]
    x = np.array([20.0, 30.0, 40.0])
    d = np.linalg.norm(coords - x, axis=1)
    est = gd_refine(x + np.array([0.5, -0.4, 0.3]), coords, d, GdOptions(grad_tol=1e-10))
    assert np.linalg.norm(est.x_hat - x) <= 1e-6


def test_gd_objective_never_increases():
    rng = np.random.default_rng(14)
    coords = ANCHORS.coords[:5]
    for _ in range(20):
        x = rng.uniform(0, 100, size=3)
        d = np.linalg.norm(coords - x, axis=1) * (1 + 0.05 * rng.standard_normal(5))
        x0 = rng.uniform(0, 100, size=3)
        est = gd_refine(x0, coords, d, GdOptions(max_iters=200))
        f0 = gd_objective(x0, coords, d)[0]
        f1 = gd_objective(est.x_hat, coords, d)[0]
        assert f1 <= f0 + 1e-12


def test_gd_gradient_matches_finite_differences():
    rng = np.random.default_rng(23)
    coords = ANCHORS.coords[:6]
    step = 1e-6 * 100.0
    for _ in range(100):
        x = rng.uniform(0, 100, size=3)
        d = rng.uniform(10, 200, size=6)
        _, grad = gd_objective(x, coords, d)
        fd = np.empty(3)
        for j in range(3):
            e = np.zeros(3)
            e[j] = step
            fd[j] = (gd_objective(x + e, coords, d)[0] - gd_objective(x - e, coords, d)[0]) / (
                2 * step
            )
        assert np.linalg.norm(fd - grad) <= 1e-5 * max(1.0, np.linalg.norm(grad))


def test_gd_batch_matches_per_trial_on_converging_instances():
    rng = np.random.default_rng(31)
    coords = ANCHORS.coords[:6]
    opts = GdOptions(max_iters=300, grad_tol=1e-7)
    X0 = []
    D = []
    for _ in range(32):
        x = rng.uniform(0, 100, size=3)
        D.append(np.linalg.norm(coords - x, axis=1) * (1 + 0.01 * rng.standard_normal(6)))
        X0.append(x + rng.normal(scale=2.0, size=3))
    X0 = np.array(X0)
    D = np.array(D)
    batch, iters = gd_refine_batch(X0, coords, D, opts)
    for i in range(32):
        single = gd_refine(X0[i], coords, D[i], opts)
        f_batch = gd_objective(batch[i], coords, D[i])[0]
        f_single = gd_objective(single.x_hat, coords, D[i])[0]
        assert f_batch == pytest.approx(f_single, rel=1e-6, abs=1e-9)


def test_gd_anchor_collision_is_nudged_not_fatal():
    coords = ANCHORS.coords[:5]
    d = np.linalg.norm(coords - np.array([20.0, 30.0, 40.0]), axis=1)
    est = gd_refine(coords[0], coords, d, GdOptions(max_iters=50))
    assert np.all(np.isfinite(est.x_hat))


def test_tdoa_exact_recovery_and_reference_distance():
    rng = np.random.default_rng(12)
    coords = ANCHORS.coords[:5]
    for _ in range(50):
        x = rng.uniform(0.0, 100.0, size=3)
        d = np.linalg.norm(coords - x, axis=1)
        est = tdoa_chan_solve(coords, d[1:] - d[0])
        assert np.linalg.norm(est.x_hat - x) <= 1e-8 * 100.0
        assert est.d1_hat == pytest.approx(d[0], rel=1e-8)


def test_tdoa_zero_differences_recover_equidistant_point():
    center = np.array([25.0, 25.0, 25.0])
    offsets = np.array(
        [
            [1.0, 1.0, 1.0],
            [1.0, -1.0, -1.0],
            [-1.0, 1.0, -1.0],
            [-1.0, -1.0, 1.0],
            [1.0, 1.0, -1.0],
        ]
    )
    coords = center + 30.0 * offsets / np.sqrt(3)
    est = tdoa_chan_solve(coords, np.zeros(4))
    np.testing.assert_allclose(est.x_hat, center, atol=1e-8)


def test_tdoa_underdetermined_raises():
    with pytest.raises(SingularGeometryError):
        tdoa_chan_solve(ANCHORS.coords[:4], np.zeros(3))


def test_tdoa_noisy_instance_close_to_nonlinear_oracle():
    from scipy.optimize import minimize

    rng = np.random.default_rng(1)
    coords = ANCHORS.coords
    x = rng.uniform(0, 100, size=3)
    d = np.linalg.norm(coords - x, axis=1)
    dt = d * (1 + 0.01 * rng.standard_normal(coords.shape[0]))
    r = dt[1:] - dt[0]
    est = tdoa_chan_solve(coords, r, two_stage=False)

    def objective(y):
        dy = np.linalg.norm(coords - y, axis=1)
        return float(np.sum((dy[1:] - dy[0] - r) ** 2))

    # coarse grid start, then simplex polish
    axes = [np.linspace(0, 100, 11)] * 3
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    start = grid[np.argmin([objective(g) for g in grid])]
    oracle = minimize(
        objective, start, method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-14, "maxiter": 4000}
    ).x
    assert np.linalg.norm(est.x_hat - x) <= 3 * max(np.linalg.norm(oracle - x), 1e-6)


def test_translation_equivariance_of_all_solvers():
    rng = np.random.default_rng(19)
    x = np.array([30.0, 60.0, 20.0])
    v = np.array([-120.0, 45.0, 310.0])
    schemes = default_scheme_list(4, 10)
    lams = _exact_lambdas(x, schemes)
    base = wls_solve(build_linear_system(ANCHORS, schemes, lams, kappa_s=100.0)).x_hat
    shifted_anchors = AnchorSet(ANCHORS.coords + v)
    lams_shifted = []
    for s in schemes:
        lam = 0.0
        for i, w in s.members:
            lam += w * float(np.sum((x + v - shifted_anchors.position(i)) ** 2))
        lams_shifted.append(lam)
    shifted = wls_solve(
        build_linear_system(shifted_anchors, schemes, lams_shifted, kappa_s=100.0)
    ).x_hat
    np.testing.assert_allclose(shifted, base + v, atol=1e-6)

    coords = ANCHORS.coords[:5]
    d = np.linalg.norm(coords - x, axis=1)
    a = multilateration_init(coords, d).x_hat
    b = multilateration_init(coords + v, d).x_hat
    np.testing.assert_allclose(b, a + v, atol=1e-6)
    a = gd_refine(x + 1.0, coords, d).x_hat
    b = gd_refine(x + v + 1.0, coords + v, d).x_hat
    np.testing.assert_allclose(b, a + v, atol=1e-5)
    a = tdoa_chan_solve(coords, d[1:] - d[0]).x_hat
    b = tdoa_chan_solve(coords + v, d[1:] - d[0]).x_hat
    np.testing.assert_allclose(b, a + v, atol=1e-5)


def test_estimate_rejects_non_finite_coordinates():
    with pytest.raises(ValueError):
        Estimate(np.array([np.nan, 0.0, 0.0]), "wls")
