"""Basis construction: pointwise values, Gram matrices, target coefficients."""

import itertools

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.interpolate import BSpline

from sievemle.basis import (
    BasisSpec,
    _bspline_knots,
    basis_design,
    coefficients_for_target,
    evaluate_basis,
    gram_and_orthonormalize,
    sup_norm,
)
from sievemle.errors import DomainError, RankDeficiencyError


def scipy_bspline_design(k, degree, z):
    """Independent B-spline evaluation via scipy, NaN outside support."""
    t = _bspline_knots(k, degree)
    cols = []
    for i in range(k):
        elem = BSpline.basis_element(t[i : i + degree + 2], extrapolate=False)
        cols.append(np.nan_to_num(elem(z)))
    return np.column_stack(cols)


class TestEvaluate:
    def test_pc_cox_scale_indicator(self):
        spec = BasisSpec("piecewise-constant", 4, scaling="cox-scale")
        np.testing.assert_array_equal(evaluate_basis(spec, 0.3), [0.0, 4.0, 0.0, 0.0])

    def test_pc_right_endpoint_in_last_cell(self):
        spec = BasisSpec("piecewise-constant", 2)
        np.testing.assert_array_equal(evaluate_basis(spec, 1.0), [0.0, 1.0])

    def test_pc_single_nonzero_everywhere(self):
        spec = BasisSpec("piecewise-constant", 7)
        design = basis_design(spec, np.linspace(0, 1, 301))
        assert np.all((design != 0).sum(axis=1) == 1)

    def test_bspline_partition_of_unity_at_midpoint(self):
        spec = BasisSpec("bspline", 8, degree=3)
        vals = evaluate_basis(spec, 0.5)
        assert abs(vals.sum() - 1.0) < 1e-12
        assert (vals != 0).sum() <= 4

    @pytest.mark.parametrize("degree,k", [(1, 4), (2, 5), (3, 8), (3, 12)])
    def test_bspline_partition_of_unity_dense(self, degree, k):
        spec = BasisSpec("bspline", k, degree=degree)
        design = basis_design(spec, np.linspace(0, 1, 1001))
        np.testing.assert_allclose(design.sum(axis=1), 1.0, atol=1e-12)

    @pytest.mark.parametrize("degree,k", [(1, 4), (2, 6), (3, 8)])
    def test_bspline_matches_scipy(self, degree, k):
        z = np.linspace(0, 1, 513)
        ours = basis_design(BasisSpec("bspline", k, degree=degree), z)
        ref = scipy_bspline_design(k, degree, z)
        # scipy's basis_element is ambiguous exactly at interior knots for
        # degree 0 pieces; compare away from knots plus endpoint behaviour
        np.testing.assert_allclose(ours[1:-1], ref[1:-1], atol=1e-12)
        assert abs(ours[-1].sum() - 1.0) < 1e-12

    def test_domain_error(self):
        spec = BasisSpec("piecewise-constant", 3)
        with pytest.raises(DomainError):
            evaluate_basis(spec, 1.2)
        with pytest.raises(DomainError):
            evaluate_basis(spec, -0.1)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            BasisSpec("bspline", 3, degree=3)
        with pytest.raises(ValueError):
            BasisSpec("bspline", 4, degree=2, scaling="cox-scale")
        with pytest.raises(ValueError):
            BasisSpec("piecewise-constant", 0)


class TestGram:
    def test_pc_lebesgue_diagonal(self):
        bm = gram_and_orthonormalize(BasisSpec("piecewise-constant", 3))
        np.testing.assert_allclose(bm.gram, np.eye(3) / 3, atol=1e-14)

    def test_pc_orthonormal_transform_uniform(self):
        spec = BasisSpec("piecewise-constant", 3, scaling="probability-orthonormal")
        bm = gram_and_orthonormalize(spec)
        np.testing.assert_allclose(bm.transform, np.sqrt(3) * np.eye(3), atol=1e-12)

    def test_bspline_gram_against_quad_oracle(self):
        spec = BasisSpec("bspline", 4, degree=1)
        bm = gram_and_orthonormalize(spec)
        t = _bspline_knots(4, 1)
        pts = list(np.unique(t))
        for i, j in itertools.product(range(4), repeat=2):
            bi = BSpline.basis_element(t[i : i + 3], extrapolate=False)
            bj = BSpline.basis_element(t[j : j + 3], extrapolate=False)
            ref, _ = quad(
                lambda x: np.nan_to_num(bi(x)) * np.nan_to_num(bj(x)),
                0.0, 1.0, points=pts, limit=200,
            )
            assert abs(ref - bm.gram[i, j]) < 1e-10

    @pytest.mark.parametrize(
        "spec",
        [
            BasisSpec("piecewise-constant", 5, scaling="probability-orthonormal"),
            BasisSpec("bspline", 6, degree=2, scaling="probability-orthonormal"),
            BasisSpec("bspline", 9, degree=3, scaling="probability-orthonormal"),
        ],
    )
    def test_transform_orthonormalizes(self, spec):
        bm = gram_and_orthonormalize(spec)
        eye = bm.transform @ bm.gram @ bm.transform.T
        np.testing.assert_allclose(eye, np.eye(spec.k), atol=1e-10)

    def test_empirical_gram_orthonormality(self):
        rng = np.random.default_rng(5)
        z = rng.uniform(size=4000)
        spec = BasisSpec("bspline", 5, degree=2, scaling="probability-orthonormal")
        bm = gram_and_orthonormalize(spec, z_points=z, measure="empirical")
        design = bm.design
        emp = design.T @ design / len(z)
        np.testing.assert_allclose(emp, np.eye(5), atol=1e-8)

    def test_empirical_gram_rank_deficiency_names_index(self):
        # all points in the first cell: cell 2 (index 1) never hit
        z = np.full(50, 0.05)
        spec = BasisSpec("piecewise-constant", 3)
        with pytest.raises(RankDeficiencyError) as exc:
            gram_and_orthonormalize(spec, z_points=z, measure="empirical")
        assert exc.value.index == 1

    def test_values_match_pointwise_evaluation(self):
        z = np.array([0.1, 0.47, 0.93])
        spec = BasisSpec("bspline", 6, degree=2)
        bm = gram_and_orthonormalize(spec, z_points=z)
        for i, zi in enumerate(z):
            np.testing.assert_allclose(bm.values[i], evaluate_basis(spec, zi))


class TestCoefficients:
    def test_constant_target_reproduced(self):
        spec = BasisSpec("piecewise-constant", 5, scaling="cox-scale")
        gamma = coefficients_for_target(spec, lambda z: np.ones_like(z) if np.ndim(z) else 1.0,
                                        "cox-left-endpoint")
        np.testing.assert_allclose(gamma, 0.2)
        z = np.linspace(0, 1, 101)
        np.testing.assert_allclose(basis_design(spec, z) @ gamma, 1.0)

    def test_linear_target_left_endpoint(self):
        spec = BasisSpec("piecewise-constant", 2, scaling="cox-scale")
        gamma = coefficients_for_target(spec, lambda t: t, "cox-left-endpoint")
        np.testing.assert_allclose(gamma, [0.0, 0.25])
        z = np.linspace(0, 1, 2001)
        sup_err = np.max(np.abs(basis_design(spec, z) @ gamma - z))
        assert abs(sup_err - 0.5) < 1e-12

    def test_l2_projection_error_matches_quadrature_oracle(self):
        # orthonormal cells: squared L2(U(0,1)) error = ||eta||^2 - sum <beta_j, eta>^2
        k = 16
        spec = BasisSpec("piecewise-constant", k, scaling="probability-orthonormal")
        eta = lambda z: np.sin(2 * np.pi * z)
        gamma = coefficients_for_target(spec, eta, "l2-projection")
        edges = np.linspace(0, 1, k + 1)
        norm_sq, _ = quad(lambda z: eta(z) ** 2, 0, 1, limit=200)
        cell_means = np.array([
            quad(eta, lo, hi, limit=100)[0] * k for lo, hi in zip(edges[:-1], edges[1:])
        ])
        oracle_err_sq = norm_sq - np.sum(cell_means**2) / k
        bm = gram_and_orthonormalize(spec)
        fn = bm.function(gamma)
        err_sq = sum(
            quad(lambda z: (fn(np.array([z]))[0] - eta(z)) ** 2, lo, hi, limit=100)[0]
            for lo, hi in zip(edges[:-1], edges[1:])
        )
        assert abs(err_sq - oracle_err_sq) < 1e-8

    @pytest.mark.parametrize(
        "eta",
        [
            lambda z: np.sin(2 * np.pi * z),
            lambda z: np.asarray(z) ** 2,
            lambda z: np.exp(z),
            lambda z: np.abs(np.asarray(z) - 0.4),
        ],
    )
    def test_nested_projection_error_non_increasing(self, eta):
        def proj_err_sq(k):
            spec = BasisSpec("piecewise-constant", k, scaling="probability-orthonormal")
            gamma = coefficients_for_target(spec, eta, "l2-projection")
            fn = gram_and_orthonormalize(spec).function(gamma)
            edges = np.linspace(0, 1, k + 1)
            return sum(
                quad(lambda z: (fn(np.array([z]))[0] - eta(z)) ** 2, lo, hi)[0]
                for lo, hi in zip(edges[:-1], edges[1:])
            )

        errs = [proj_err_sq(k) for k in (4, 8, 16)]
        assert errs[1] <= errs[0] + 1e-12
        assert errs[2] <= errs[1] + 1e-12

    @pytest.mark.parametrize("k", [4, 8, 16, 32])
    def test_left_endpoint_sup_error_bound(self, k):
        z = np.linspace(0, 1, 20_001)
        spec = BasisSpec("piecewise-constant", k, scaling="cox-scale")
        # monotone target: bound holds as stated
        eta = lambda t: np.exp(np.asarray(t, dtype=float))
        gamma = coefficients_for_target(spec, eta, "cox-left-endpoint")
        sup_err = np.max(np.abs(basis_design(spec, z) @ gamma - eta(z)))
        assert sup_err <= np.e / k + 1e-12
        # non-monotone target: within factor 2
        eta2 = lambda t: np.sin(2 * np.pi * np.asarray(t, dtype=float)) + 2.0
        gamma2 = coefficients_for_target(spec, eta2, "cox-left-endpoint")
        sup_err2 = np.max(np.abs(basis_design(spec, z) @ gamma2 - eta2(z)))
        assert sup_err2 <= 2 * (2 * np.pi) / k


class TestSupNorm:
    def test_pc_orthonormal_analytic(self):
        spec = BasisSpec("piecewise-constant", 9, scaling="probability-orthonormal")
        bm = gram_and_orthonormalize(spec)
        assert abs(sup_norm(spec, bm.transform) - 3.0) < 1e-12

    def test_bspline_grid_search_bounded_below_by_values(self):
        spec = BasisSpec("bspline", 7, degree=2)
        xi = sup_norm(spec)
        design = basis_design(spec, np.linspace(0, 1, 101))
        assert xi >= np.max(np.linalg.norm(design, axis=1)) - 1e-12


class TestConfigRoundTrip:
    def test_to_from_config(self):
        spec = BasisSpec("bspline", 6, degree=3, scaling="probability-orthonormal")
        assert BasisSpec.from_config(spec.to_config()) == spec
