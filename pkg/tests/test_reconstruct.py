import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_force_min, random_candidate_set

from seqfill.constraints import ConstraintSpec, Continuity, ForwardMapping, NormKind, Quadratic, Smoothness
from seqfill.experiments import make_mask, toy_forward, toy_trajectory
from seqfill.mixture import ISOTROPIC, GaussianMixture, IndexSplit, condition
from seqfill.modes import find_all_modes
from seqfill.reconstruct import (METHODS, CandidateSet, MaskedSequence, avg_squared_error, build_candidates,
                                 candidates_for_step, dp_reconstruct, dp_reconstruct_chunked, greedy_reconstruct,
                                 reconstruct, reconstruct_detailed, split_at_singletons)

SPECS = [ConstraintSpec(), ConstraintSpec((Continuity(NormKind("squared_euclidean")),)),
         ConstraintSpec((Continuity(), Smoothness(coef=0.7))),
         ConstraintSpec((Continuity(), Quadratic(np.eye(2), np.array([0.5, -0.5]), coef=0.2)))]

seeds = st.integers(0, 2**32 - 1)


@pytest.fixture(scope="module")
def toy_inv_candidates(toy_gm):
    truth = toy_trajectory(12)
    mask = make_mask(12, 2, "inv", [0])
    return truth, mask, build_candidates(toy_gm, MaskedSequence.from_complete(truth, mask))


def two_blob_gm():
    return GaussianMixture([0.5, 0.5], [[-2.0, 0.0], [2.0, 0.0]], 0.25, ISOTROPIC)


class TestMaskedSequence:
    def test_missing_cells_become_nan(self):
        seq = MaskedSequence([[1.0, 2.0]], [[True, False]])
        assert np.isnan(seq.values[0, 1]) and seq.values[0, 0] == 1.0

    def test_present_cells_must_be_finite(self):
        with pytest.raises(ValueError):
            MaskedSequence([[np.nan, 2.0]], [[True, True]])

    def test_timestamps_strictly_increasing(self):
        with pytest.raises(ValueError):
            MaskedSequence(np.zeros((3, 1)), np.ones((3, 1), bool), [0.0, 1.0, 1.0])

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            MaskedSequence(np.zeros((0, 2)), np.zeros((0, 2), bool))
        with pytest.raises(ValueError):
            MaskedSequence(np.zeros((2, 2)), np.ones((2, 1), bool))


class TestCandidates:
    def test_fully_present_row(self):
        c, tags = candidates_for_step(two_blob_gm(), [0.3, 0.4])
        np.testing.assert_array_equal(c, [[0.3, 0.4]])
        assert tags == ("observed",)

    def test_toy_conditional_three_modes(self, toy_gm):
        c, tags = candidates_for_step(toy_gm, [np.nan, -3.8])
        assert c.shape == (3, 2)
        assert set(tags) == {"mode"}
        np.testing.assert_array_equal(c[:, 1], -3.8)

    def test_all_missing_centroids(self):
        gm = GaussianMixture([0.2, 0.3, 0.5], [[0.0, 0.0], [1.0, 1.0], [5.0, 5.0]], 1.0, ISOTROPIC)
        c, tags = candidates_for_step(gm, [np.nan, np.nan], all_centroids_when_all_missing=True)
        np.testing.assert_array_equal(c, gm.means)
        assert set(tags) == {"centroid"}

    def test_all_missing_default_is_joint_modes(self):
        gm = two_blob_gm()
        c, _ = candidates_for_step(gm, [np.nan, np.nan])
        np.testing.assert_allclose(np.sort(c[:, 0]), [-2.0, 2.0], atol=1e-6)

    def test_present_coordinates_copied_exactly(self):
        x = 0.1 + 1e-17
        c, _ = candidates_for_step(two_blob_gm(), [np.nan, x])
        assert np.all(c[:, 1] == x)

    def test_mean_if_unimodal(self):
        gm = GaussianMixture([0.5, 0.5], [[0.0, 0.0], [0.3, 0.0]], 1.0, ISOTROPIC)
        c, tags = candidates_for_step(gm, [np.nan, 0.0], "modes_mean_if_unimodal")
        assert tags == ("mean",)
        assert c[0, 0] == pytest.approx(0.15, abs=1e-15)

    def test_samples_reproducible(self):
        a, _ = candidates_for_step(two_blob_gm(), [np.nan, 0.0], "samples", samples=6, seed=3)
        b, _ = candidates_for_step(two_blob_gm(), [np.nan, 0.0], "samples", samples=6, seed=3)
        assert a.shape == (6, 2)
        np.testing.assert_array_equal(a, b)

    def test_unknown_policy(self):
        with pytest.raises(ValueError):
            candidates_for_step(two_blob_gm(), [np.nan, 0.0], "best")

    def test_component_floor_removes_far_tail_modes(self):
        # a far component with negligible conditional weight adds a spurious mode without the floor
        gm = GaussianMixture([0.5, 0.5], [[0.0, 0.0], [30.0, 12.0]], 1.0, ISOTROPIC)
        with_tail, _ = candidates_for_step(gm, [np.nan, 0.0], component_floor=0.0)
        floored, _ = candidates_for_step(gm, [np.nan, 0.0])
        assert with_tail.shape[0] == 2 and floored.shape[0] == 1
        np.testing.assert_allclose(floored[0], [0.0, 0.0], atol=1e-9)

    def test_thread_count_does_not_change_result(self, monkeypatch, toy_gm):
        truth = toy_trajectory(30)
        seq = MaskedSequence.from_complete(truth, make_mask(30, 2, "random", p=0.5, seed=4))
        monkeypatch.setenv("SEQFILL_THREADS", "1")
        a = build_candidates(toy_gm, seq, "samples", seed=2)
        monkeypatch.setenv("SEQFILL_THREADS", "4")
        b = build_candidates(toy_gm, seq, "samples", seed=2)
        for la, lb in zip(a.layers, b.layers):
            np.testing.assert_array_equal(la, lb)


class TestDp:
    def test_singleton_layers(self):
        cands = CandidateSet.from_layers([[[0.0, 0.0]], [[3.0, 4.0]], [[3.0, 5.0]]])
        res = dp_reconstruct(cands)
        np.testing.assert_array_equal(res.choice, [0, 0, 0])
        assert res.cost == 6.0

    def test_hand_example(self):
        cands = CandidateSet.from_layers([[[0.0], [10.0]], [[1.0], [11.0]], [[2.0], [12.0]]])
        res = dp_reconstruct(cands)
        np.testing.assert_array_equal(res.choice, [0, 0, 0])
        assert res.cost == 2.0

    def test_ties_go_to_lowest_index(self):
        cands = CandidateSet.from_layers([[[0.0], [0.0]], [[1.0], [-1.0]]])
        np.testing.assert_array_equal(dp_reconstruct(cands).choice, [0, 0])

    def test_path_table_recursion(self):
        cands = random_candidate_set(np.random.default_rng(0), n_max=6, n_min=6)
        spec = ConstraintSpec()
        res = dp_reconstruct(cands, spec)
        L, B = res.table.lengths, res.table.back
        np.testing.assert_array_equal(L[0], 0.0)
        for n in range(1, len(cands)):
            total = L[n - 1][:, None] + spec.edge_cost(cands.layers[n - 1], cands.layers[n], n - 1)
            np.testing.assert_array_equal(L[n], total.min(axis=0))
            np.testing.assert_array_equal(B[n], total.argmin(axis=0))

    @pytest.mark.parametrize("spec", SPECS, ids=["C", "C2", "C+S", "C+Q"])
    @given(seed=seeds)
    def test_matches_enumeration(self, spec, seed):
        cands = random_candidate_set(np.random.default_rng(seed), n_max=6)
        best, _ = brute_force_min(cands, spec)
        assert dp_reconstruct(cands, spec).cost == best

    @given(seed=seeds)
    def test_direction_invariance(self, seed):
        cands = random_candidate_set(np.random.default_rng(seed))
        fwd = dp_reconstruct(cands)
        bwd = dp_reconstruct(cands.reversed())
        np.testing.assert_array_equal(bwd.choice[::-1], fwd.choice)
        assert bwd.cost == fwd.cost

    # mode search on the toy model dominates; a few examples suffice
    @settings(max_examples=10)
    @given(seed=seeds)
    def test_time_warp_invariance(self, seed, toy_gm, toy_inv_candidates):
        rng = np.random.default_rng(seed)
        truth, mask, cands = toy_inv_candidates
        z1 = np.cumsum(rng.uniform(0.1, 2.0, 12))
        z2 = np.exp(z1 / z1.max())
        a = reconstruct(toy_gm, MaskedSequence.from_complete(truth, mask, z1), "dpmode", candidates=cands)
        b = reconstruct(toy_gm, MaskedSequence.from_complete(truth, mask, z2), "dpmode", candidates=cands)
        np.testing.assert_array_equal(a, b)

    def test_forward_mapping_node_costs(self):
        # two candidates per step; only the first is a consistent inverse of g
        x = np.linspace(-1, 1, 5)
        layers = [np.array([[xi, toy_forward(xi)], [xi + 2.0, toy_forward(xi)]]) for xi in x]
        cands = CandidateSet.from_layers(layers)
        spec = ConstraintSpec((Continuity(coef=1e-3), ForwardMapping(toy_forward, (1,), (0,))))
        res = dp_reconstruct(cands, spec)
        np.testing.assert_array_equal(res.choice, np.zeros(5))


class TestGreedy:
    def test_singletons_match_dp(self):
        cands = CandidateSet.from_layers([[[0.0]], [[2.0]], [[1.0]]])
        assert greedy_reconstruct(cands).cost == dp_reconstruct(cands).cost == 3.0

    def test_decoy_edge(self):
        # from 0, the nearest next node is 0.9, which forces an expensive tail
        cands = CandidateSet.from_layers([[[0.0]], [[0.9], [-1.0]], [[-1.0], [-1.1]], [[-1.0]]])
        g = greedy_reconstruct(cands)
        d = dp_reconstruct(cands)
        best, _ = brute_force_min(cands, ConstraintSpec())
        assert d.cost == best
        assert g.cost > d.cost

    def test_start_layer_honoured(self):
        cands = CandidateSet.from_layers([[[0.0], [5.0]], [[0.0], [5.0]], [[0.0], [5.0]]])
        res = greedy_reconstruct(cands, start_layer=2, start_node=1)
        np.testing.assert_array_equal(res.choice, [1, 1, 1])
        np.testing.assert_array_equal(greedy_reconstruct(cands, start_layer=1).choice, [0, 0, 0])
        with pytest.raises(ValueError):
            greedy_reconstruct(cands, start_layer=3)

    def test_auto_start_is_smallest_layer(self):
        cands = CandidateSet.from_layers([[[0.0], [5.0]], [[4.0]], [[0.0], [5.0]]])
        np.testing.assert_array_equal(greedy_reconstruct(cands).choice, [1, 0, 1])

    @pytest.mark.parametrize("spec", SPECS, ids=["C", "C2", "C+S", "C+Q"])
    @given(seed=seeds)
    def test_never_beats_dp(self, spec, seed):
        cands = random_candidate_set(np.random.default_rng(seed))
        assert greedy_reconstruct(cands, spec).cost >= dp_reconstruct(cands, spec).cost


class TestSplit:
    def test_all_singletons(self):
        cands = CandidateSet.from_layers([[[float(i)]] for i in range(4)])
        assert split_at_singletons(cands) == [(0, 1), (1, 2), (2, 3), (3, 4)]
        np.testing.assert_array_equal(dp_reconstruct_chunked(cands).choice, [0, 0, 0, 0])

    def test_three_one_three(self):
        rng = np.random.default_rng(0)
        cands = CandidateSet.from_layers([rng.normal(size=(3, 1)), rng.normal(size=(1, 1)), rng.normal(size=(3, 1))])
        assert split_at_singletons(cands) == [(0, 2), (2, 3)]
        best, _ = brute_force_min(cands, ConstraintSpec())
        assert dp_reconstruct_chunked(cands).cost == dp_reconstruct(cands).cost == best

    def test_no_singletons(self):
        cands = CandidateSet.from_layers([np.zeros((2, 1)), np.ones((3, 1))])
        assert split_at_singletons(cands) == [(0, 2)]

    def test_second_order_needs_runs_of_two(self):
        cands = CandidateSet.from_layers([np.zeros((2, 1)), np.ones((1, 1)), np.ones((2, 1)),
                                          np.ones((1, 1)), np.ones((1, 1)), np.ones((2, 1))])
        assert split_at_singletons(cands, min_run=2) == [(0, 5), (5, 6)]

    @pytest.mark.parametrize("spec", SPECS, ids=["C", "C2", "C+S", "C+Q"])
    @given(seed=seeds)
    def test_chunked_equals_whole(self, spec, seed):
        cands = random_candidate_set(np.random.default_rng(seed), n_max=12, singleton_p=0.35)
        whole = dp_reconstruct(cands, spec)
        chunked = dp_reconstruct_chunked(cands, spec)
        np.testing.assert_array_equal(chunked.choice, whole.choice)
        assert chunked.cost == whole.cost


class TestMethods:
    @pytest.mark.parametrize("method", METHODS)
    def test_fully_present_is_identity(self, method):
        truth = np.random.default_rng(0).normal(size=(5, 2))
        out = reconstruct(two_blob_gm(), MaskedSequence(truth, np.ones((5, 2), bool)), method, truth=truth)
        np.testing.assert_array_equal(out, truth)

    @pytest.mark.parametrize("method", METHODS)
    @given(seed=seeds)
    def test_pass_through(self, method, seed):
        rng = np.random.default_rng(seed)
        truth = rng.normal(0, 2, (6, 2))
        mask = rng.random((6, 2)) < 0.6
        res = reconstruct(two_blob_gm(), MaskedSequence.from_complete(truth, mask), method, truth=truth, seed=seed)
        np.testing.assert_array_equal(res[mask], truth[mask])
        assert np.all(np.isfinite(res))

    def test_cmode_needs_truth(self):
        seq = MaskedSequence([[np.nan, 0.0]], [[False, True]])
        with pytest.raises(ValueError, match="cmode"):
            reconstruct(two_blob_gm(), seq, "cmode")

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            reconstruct(two_blob_gm(), MaskedSequence(np.zeros((2, 3)), np.ones((2, 3), bool)))

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            reconstruct(two_blob_gm(), MaskedSequence(np.zeros((2, 2)), np.ones((2, 2), bool)), "median")

    def test_rmode_reproducible(self):
        truth = np.column_stack([np.tile([-2.0, 2.0], 10), np.zeros(20)])
        seq = MaskedSequence.from_complete(truth, make_mask(20, 2, "fwd", [0]))
        a = reconstruct(two_blob_gm(), seq, "rmode", seed=5)
        b = reconstruct(two_blob_gm(), seq, "rmode", seed=5)
        np.testing.assert_array_equal(a, b)

    def test_cmode_picks_closest_mode(self):
        truth = np.column_stack([np.tile([-2.0, 2.0], 5), np.zeros(10)])
        seq = MaskedSequence.from_complete(truth, make_mask(10, 2, "fwd", [0]))
        out = reconstruct(two_blob_gm(), seq, "cmode", truth=truth)
        np.testing.assert_allclose(out, truth, atol=1e-6)

    @settings(max_examples=10)
    @given(seed=seeds)
    def test_cmode_lower_bounds_other_mode_methods(self, seed, toy_gm):
        rng = np.random.default_rng(seed)
        truth = toy_trajectory(15, 0.05, seed=seed)
        seq = MaskedSequence.from_complete(truth, rng.random((15, 2)) >= 0.5)
        cands = build_candidates(toy_gm, seq)
        err = {m: avg_squared_error(truth, reconstruct_detailed(toy_gm, seq, m, truth=truth, seed=seed,
                                                                 candidates=cands).sequence)
               for m in ("cmode", "gmode", "rmode", "grmode", "dpmode")}
        assert all(err["cmode"] <= e for e in err.values())

    def test_dp_picks_consistent_branch(self):
        gm = two_blob_gm()
        truth = np.array([[-2.0, 0.0], [-2.0, 0.0], [-2.0, 0.0]])
        seq = MaskedSequence.from_complete(truth, [[True, True], [False, True], [True, True]])
        res = reconstruct_detailed(gm, seq, "dpmode")
        assert res.candidates.sizes == [1, 2, 1]
        np.testing.assert_allclose(res.sequence, truth, atol=1e-6)
        d = res.diagnostics()
        assert d["nu"] == [1, 2, 1] and d["method"] == "dpmode" and d["total_cost"] == res.cost

    def test_toy_inverse_candidate_counts(self, toy_gm):
        truth = toy_trajectory(100)
        seq = MaskedSequence.from_complete(truth, make_mask(100, 2, "inv", [0]))
        counts = np.array(build_candidates(toy_gm, seq).sizes)
        # number of solutions of x + 3 sin x = t2 on [-2pi, 2pi], by sign changes on a fine grid
        xs = np.linspace(-2 * np.pi, 2 * np.pi, 200_001)
        g = toy_forward(xs)
        roots = np.array([np.sum(np.diff(np.sign(g - t)) != 0) for t in truth[:, 1]])
        assert roots.max() == 3
        assert set(counts) <= {1, 2, 3}
        assert set(counts) == {1, 2, 3}
        # near a fold two close branches may merge into one smoothed mode
        assert np.all(np.abs(counts - roots) <= 1)

    def test_gmode_with_centroid_fallback_uses_joint_global_mode(self):
        gm = GaussianMixture([0.7, 0.3], [[0.0, 0.0], [5.0, 5.0]], 1.0, ISOTROPIC)
        seq = MaskedSequence(np.full((2, 2), np.nan), np.zeros((2, 2), bool))
        out = reconstruct(gm, seq, "gmode", all_centroids_when_all_missing=True)
        np.testing.assert_allclose(out, 0.0, atol=1e-3)


class TestError:
    def test_zero(self):
        x = np.random.default_rng(0).normal(size=(4, 3))
        assert avg_squared_error(x, x) == 0.0

    def test_hand_value(self):
        assert avg_squared_error([[0.0], [0.0]], [[1.0], [3.0]]) == 5.0

    @given(seed=seeds)
    def test_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=(7, 2)), rng.normal(size=(7, 2))
        p = rng.permutation(7)
        assert avg_squared_error(a[p], b[p]) == pytest.approx(avg_squared_error(a, b), rel=1e-14)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            avg_squared_error(np.zeros((2, 2)), np.zeros((3, 2)))
