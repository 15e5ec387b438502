import math

import numpy as np
import pytest

from conftest import FIXTURE_X, FIXTURE_Y, random_orthogonal
from waxplain import ot, uwax, wax
from waxplain.errors import DimensionMismatchError, NotConvergedError, NotOrthogonalError


def diagonal_coupling(n):
    idx = np.arange(n)
    return ot.Coupling(n, n, idx, idx, np.full(n, 1.0 / n))


def shifted_pair(rng, n=12, d=4):
    x = rng.normal(size=(n, d))
    return x, rng.normal(size=(n, d)) + rng.normal(size=d)


class TestBasis:
    def test_rejects_non_orthogonal(self):
        with pytest.raises(NotOrthogonalError):
            uwax.SubspaceBasis(np.array([[1.0, 0.5], [0.0, 1.0]]), (1,))

    @pytest.mark.parametrize("sizes", [(), (0,), (2, 2)])
    def test_rejects_bad_blocks(self, sizes):
        with pytest.raises(ValueError):
            uwax.SubspaceBasis(np.eye(3), sizes)

    def test_blocks_and_complement(self):
        blocks = uwax.SubspaceBasis(np.eye(4), (1, 2)).blocks()
        assert [b.shape[1] for b in blocks] == [1, 2, 1]

    def test_empty_complement(self):
        blocks = uwax.SubspaceBasis(np.eye(2), (2,)).blocks()
        assert blocks[-1].shape == (2, 0)


class TestForwardAndAttribution:
    def test_fixture_second_axis(self):
        basis = uwax.SubspaceBasis(np.eye(2), (1,))
        a = uwax.explain_subspaces(FIXTURE_X, FIXTURE_Y, basis)
        assert a.distance == pytest.approx(1.0)
        np.testing.assert_allclose(a.concept_relevances, [0.0, 1.0], atol=1e-15)
        np.testing.assert_allclose(a.feature_relevances.sum(axis=0), [0.0, 1.0], atol=1e-15)

    def test_identity_basis_per_feature(self, rng):
        # one singleton block per axis: each concept carries exactly one feature
        x, y = shifted_pair(rng, d=3)
        a = uwax.explain_subspaces(x, y, uwax.SubspaceBasis(np.eye(3), (1, 1, 1)))
        off = a.feature_relevances[:3] - np.diag(np.diag(a.feature_relevances[:3]))
        assert np.max(np.abs(off)) <= 1e-15
        assert a.concept_relevances[-1] == 0.0

    def test_parseval(self, rng):
        x, y = shifted_pair(rng, d=5)
        coupling = uwax.solve_w2(x, y)
        w2 = ot.wasserstein_distance(coupling, ot.pair_distances(x, y, 2), 2)
        basis = uwax.SubspaceBasis(random_orthogonal(5, rng), (2, 1))
        fwd = uwax.forward_subspace(x, y, coupling, basis)
        assert fwd.distance == pytest.approx(w2, rel=1e-10)
        assert math.sqrt(np.sum(fwd.scores**2)) == pytest.approx(w2, rel=1e-10)

    def test_conservation(self, rng):
        x, y = shifted_pair(rng, n=9, d=6)
        basis = uwax.SubspaceBasis(random_orthogonal(6, rng), (2, 2))
        res = uwax.explain_subspaces(x, y, basis).conservation_residuals()
        assert max(abs(v) for v in res.values()) <= 1e-8

    def test_single_full_block_reduces_to_wax(self, rng):
        x, y = shifted_pair(rng, d=4)
        basis = uwax.SubspaceBasis(random_orthogonal(4, rng), (4,))
        sub = uwax.explain_subspaces(x, y, basis)
        ref = wax.explain(x, y, ot.WassersteinSpec(2, 2), wax.WaxHyperparams(2, 2))
        np.testing.assert_allclose(sub.concept_relevances, [ref.distance, 0.0], atol=1e-12)
        np.testing.assert_allclose(sub.pair_relevances[0], ref.pair_relevances, rtol=1e-10)
        np.testing.assert_allclose(sub.feature_relevances[0], ref.feature_relevances, rtol=1e-9, atol=1e-12)

    def test_zero_block_gets_nothing(self):
        # all motion is along e2, so the e1 block carries no relevance
        a = uwax.explain_subspaces(FIXTURE_X, FIXTURE_Y, uwax.SubspaceBasis(np.eye(2), (1, 1)))
        assert a.concept_relevances[0] == 0 and not np.any(a.pair_relevances[0])
        assert not np.any(a.feature_relevances[0])

    def test_feature_split_uses_projector(self, rng):
        # summing over pairs recovers the moment-matrix form diag(M P_c) scaled per concept
        x, y = shifted_pair(rng, n=10, d=4)
        basis = uwax.SubspaceBasis(random_orthogonal(4, rng), (1,))
        coupling = uwax.solve_w2(x, y)
        a = uwax.explain_subspaces(x, y, basis, coupling)
        moment = uwax.coupled_second_moment(x, y, coupling)
        for c, block in enumerate(basis.blocks()):
            proj = block @ block.T
            expected = np.diag(moment @ proj) / np.trace(moment @ proj) * a.concept_relevances[c]
            np.testing.assert_allclose(a.feature_relevances[c], expected, rtol=1e-9, atol=1e-13)

    def test_pair_split_denominator(self, rng):
        x, y = shifted_pair(rng, d=3)
        basis = uwax.SubspaceBasis(random_orthogonal(3, rng), (1,))
        coupling = uwax.solve_w2(x, y)
        fwd = uwax.forward_subspace(x, y, coupling, basis)
        np.testing.assert_allclose(fwd.z**2 @ coupling.mass, fwd.scores**2, rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            uwax.explain_subspaces(FIXTURE_X, FIXTURE_Y, uwax.SubspaceBasis(np.eye(3), (1,)))

    def test_json_payload(self):
        a = uwax.explain_subspaces(FIXTURE_X, FIXTURE_Y, uwax.SubspaceBasis(np.eye(2), (1,)))
        payload = a.to_json(top_pairs=1)
        assert payload["concept_order"] == [0]
        assert len(payload["top_pairs_per_concept"]) == 2
        assert "pair_relevances_per_concept" in a.to_json()


class TestTailedness:
    def test_two_pair_example(self):
        # block distances (0, 2) with equal mass: (0.5 * 2**4) ** (1/4) = 8 ** (1/4)
        c = ot.Coupling(1, 2, np.array([0, 0]), np.array([0, 1]), np.array([0.5, 0.5]))
        q = uwax.tailedness([[0.0]], [[0.0], [2.0]], c, uwax.SubspaceBasis(np.eye(1), (1,)), 4)
        np.testing.assert_allclose(q, [8 ** 0.25], rtol=1e-14)

    def test_r2_equals_score(self, rng):
        x, y = shifted_pair(rng)
        basis = uwax.SubspaceBasis(random_orthogonal(4, rng), (1, 2))
        coupling = uwax.solve_w2(x, y)
        np.testing.assert_allclose(
            uwax.tailedness(x, y, coupling, basis, 2),
            uwax.forward_subspace(x, y, coupling, basis).scores[:2],
            rtol=1e-12,
        )

    def test_rejects_small_r(self):
        with pytest.raises(ValueError):
            uwax.tailedness(FIXTURE_X, FIXTURE_Y, diagonal_coupling(2), uwax.SubspaceBasis(np.eye(2), (1,)), 1.5)


class TestLearnSubspaces:
    def test_fixture_finds_second_axis(self):
        fit = uwax.learn_subspaces(FIXTURE_X, FIXTURE_Y, diagonal_coupling(2))
        # a relative objective tolerance of 1e-8 fixes the direction to about its square root
        np.testing.assert_allclose(np.abs(fit.basis.U[:, 0]), [0.0, 1.0], atol=1e-3)
        assert fit.objective == pytest.approx(1.0, rel=1e-8)

    def test_matches_eigen_solution(self, rng):
        x, y = shifted_pair(rng, n=15, d=5)
        coupling = uwax.solve_w2(x, y)
        fit = uwax.learn_subspaces(x, y, coupling, uwax.SubspaceOptConfig(dims=(1,), r=2))
        eig = uwax.principal_subspace_eigen(x, y, coupling)
        best = uwax.tailedness(x, y, coupling, eig, 2)[0]
        assert fit.objective >= best * (1 - 1e-6)
        assert abs(float(fit.basis.U[:, 0] @ eig.U[:, 0])) >= 1 - 1e-4

    def test_trajectory_non_decreasing(self, rng):
        x, y = shifted_pair(rng, d=6)
        fit = uwax.learn_subspaces(x, y, uwax.solve_w2(x, y), uwax.SubspaceOptConfig(dims=(2, 1), r=4))
        steps = np.diff(fit.trajectory)
        assert np.all(steps >= 0)
        assert fit.converged

    def test_seed_determinism(self, rng):
        x, y = shifted_pair(rng)
        coupling = uwax.solve_w2(x, y)
        cfg = uwax.SubspaceOptConfig(dims=(1, 1), r=3, seed=4)
        a = uwax.learn_subspaces(x, y, coupling, cfg)
        b = uwax.learn_subspaces(x, y, coupling, cfg)
        np.testing.assert_array_equal(a.basis.U, b.basis.U)

    def test_objective_rotation_covariant(self, rng):
        # rotating the data and the basis together leaves tailedness unchanged
        x, y = shifted_pair(rng)
        coupling = uwax.solve_w2(x, y)
        basis = uwax.SubspaceBasis(random_orthogonal(4, rng), (2,))
        rot = random_orthogonal(4, rng)
        moved = uwax.SubspaceBasis(rot @ basis.U, (2,))
        np.testing.assert_allclose(
            uwax.tailedness(x @ rot.T, y @ rot.T, coupling, moved, 3),
            uwax.tailedness(x, y, coupling, basis, 3),
            rtol=1e-12,
        )

    def test_isotropic_data_any_direction_is_optimal(self):
        # coupled differences along +-e1, +-e2 with equal mass: every direction scores the same
        x = np.zeros((4, 2))
        y = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
        fit = uwax.learn_subspaces(x, y, diagonal_coupling(4))
        assert fit.objective == pytest.approx(math.sqrt(0.5), rel=1e-12)
        assert fit.converged

    def test_not_converged_carries_fit(self, rng):
        x, y = shifted_pair(rng, d=6)
        cfg = uwax.SubspaceOptConfig(dims=(1,), r=4, max_iters=1, objective_tol=1e-300)
        with pytest.raises(NotConvergedError) as info:
            uwax.learn_subspaces(x, y, uwax.solve_w2(x, y), cfg)
        assert info.value.result.iterations == 1

    def test_dims_too_large(self):
        with pytest.raises(ValueError):
            uwax.learn_subspaces(FIXTURE_X, FIXTURE_Y, diagonal_coupling(2), uwax.SubspaceOptConfig(dims=(2, 1)))


class TestEigen:
    def test_beats_random_directions(self, rng):
        x, y = shifted_pair(rng, n=20, d=5)
        coupling = uwax.solve_w2(x, y)
        moment = uwax.coupled_second_moment(x, y, coupling)
        top = uwax.principal_subspace_eigen(x, y, coupling).U[:, 0]
        best = top @ moment @ top
        for _ in range(100):
            u = rng.normal(size=5)
            u /= np.linalg.norm(u)
            assert u @ moment @ u <= best + 1e-12

    def test_sign_convention(self, rng):
        x, y = shifted_pair(rng)
        U = uwax.principal_subspace_eigen(x, y, uwax.solve_w2(x, y)).U
        pivot = np.argmax(np.abs(U), axis=0)
        assert np.all(U[pivot, np.arange(U.shape[1])] > 0)

    def test_identical_data_gives_identity(self, rng):
        x = rng.normal(size=(5, 3))
        np.testing.assert_array_equal(uwax.principal_subspace_eigen(x, x, uwax.solve_w2(x, x)).U, np.eye(3))

    def test_fixture(self):
        U = uwax.principal_subspace_eigen(FIXTURE_X, FIXTURE_Y, diagonal_coupling(2)).U
        np.testing.assert_allclose(U[:, 0], [0.0, 1.0], atol=1e-15)
