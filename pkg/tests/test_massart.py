import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nldp_halfspace.core import PSEUDO_LABELED, Dataset, PrivacyParams, predict
from nldp_halfspace.distributions import (GAUSSIAN, MarginalSpec, MassartSpec, corrupt_massart,
                                          random_unit_vector, sample_realizable, strip_labels)
from nldp_halfspace.errors import ConfigError, ContractViolationError, DegenerateVectorError, InvalidInputError
from nldp_halfspace.ldp_server import OptimizerConfig
from nldp_halfspace.massart import (Committee, CommitteeConfig, LhmnConfig, MassartPipelineConfig,
                                    _selection_errors, build_oracle, default_committee_size, label_public,
                                    lhmn_fit, lhmn_train, run_massart_pipeline, sigmoid_loss, sigmoid_loss_grad,
                                    split_groups, vote)


class TestCommittee:
    def test_default_size_frozen(self):
        # smallest odd integer >= 32 ln 40 = 118.04
        assert default_committee_size(0.1) == 119
        assert default_committee_size(0.5) % 2 == 1
        with pytest.raises(ConfigError):
            default_committee_size(1.0)

    def test_validation(self):
        with pytest.raises(InvalidInputError):
            Committee(([1.0, 0.0], [0.0, 1.0]))
        with pytest.raises(InvalidInputError):
            Committee(([2.0, 0.0],))
        with pytest.raises(InvalidInputError):
            Committee(([1.0, 0.0], [1.0], [0.0, 1.0]))
        with pytest.raises(ConfigError):
            CommitteeConfig(k=4).resolved_k()

    def test_vote_majority_and_zero_margin(self):
        com = Committee(([1.0, 0.0], [0.0, 1.0], [0.0, 0.0]))
        # the zero member always says +1, so two negatives are needed to win
        assert vote(com, [-1.0, -1.0]) == -1
        assert vote(com, [-1.0, 0.5]) == 1
        X = np.random.default_rng(0).normal(size=(5000, 2))
        assert vote(com, X).tolist() == [vote(com, x) for x in X]

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 200), st.integers(1, 15), st.integers(0, 1000))
    def test_split_groups_disjoint(self, n, k, seed):
        if n < k:
            return
        data = Dataset(1, 1e6, np.arange(n, dtype=float)[:, None], np.ones(n))
        groups = split_groups(data, k, seed)
        ids = np.concatenate([g.X[:, 0] for g in groups])
        assert len(groups) == k and all(len(g) == n // k for g in groups)
        assert len(np.unique(ids)) == len(ids)

    def test_label_public_contract(self):
        com = Committee(([1.0, 0.0],))
        labeled = Dataset(2, 1.0, [[0.5, 0.0]], [1])
        with pytest.raises(ContractViolationError):
            label_public(com, labeled)
        pseudo = label_public(com, strip_labels(labeled))
        assert pseudo.kind == PSEUDO_LABELED and pseudo.labels.tolist() == [1.0]

    def test_build_oracle_members(self):
        spec = MarginalSpec(GAUSSIAN, 2)
        data = sample_realizable(spec, [1.0, 0.0], 600, 1)
        cfg = CommitteeConfig(k=3, p=2, optimizer=OptimizerConfig(radius=0.5))
        com = build_oracle(data, PrivacyParams(4.0, 0.1), cfg, 5)
        assert com.k == 3 and all(m.norm <= 0.5 + 1e-12 for m in com.members)
        again = build_oracle(data, PrivacyParams(4.0, 0.1), cfg, 5)
        np.testing.assert_array_equal(com.matrix, again.matrix)


class TestSigmoidSurrogate:
    def test_value(self):
        assert sigmoid_loss([1.0, 0.0], [0.0, 3.0], 1.0, 0.1) == 0.5
        assert sigmoid_loss([2.0, 0.0], [1.0, 0.0], 1.0, 0.1) == pytest.approx(1 / (1 + math.exp(10)))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2 ** 31), st.sampled_from([-1.0, 1.0]), st.floats(0.05, 2.0))
    def test_gradient_finite_difference_and_orthogonal(self, seed, y, sigma):
        rng = np.random.default_rng(seed)
        w, x = rng.normal(size=4), rng.normal(size=4)
        g = sigmoid_loss_grad(w, x, y, sigma)
        assert abs(g @ w) <= 1e-9 * max(1.0, np.linalg.norm(g) * np.linalg.norm(w))
        h = 1e-6
        fd = np.array([(sigmoid_loss(w + h * e, x, y, sigma) - sigmoid_loss(w - h * e, x, y, sigma)) / (2 * h)
                       for e in np.eye(4)])
        np.testing.assert_allclose(g, fd, atol=1e-7)

    def test_degenerate(self):
        with pytest.raises(DegenerateVectorError):
            sigmoid_loss_grad([0.0, 0.0], [1.0, 0.0], 1.0, 0.1)


class TestLhmnConfig:
    def test_formulas_at_unit_constants(self):
        cfg = LhmnConfig(0.1, 0.1, 10, 2.0)
        assert cfg.C1 == 1.0 and cfg.C2 == 1.0
        assert cfg.T_formula == pytest.approx(10 * 2.0 ** 8 * math.log(10) / 1e-4)
        assert cfg.sigma == pytest.approx(0.1 / (math.sqrt(2) * 4))
        assert cfg.N == math.ceil(math.log(cfg.T / 0.1) / 0.01)
        assert cfg.eta == pytest.approx(10 * 0.01 / (8 * 16 * math.sqrt(cfg.T)))

    def test_overrides(self):
        cfg = LhmnConfig(0.1, 0.1, 10, 2.0, T_override=100, N_override=7, eta_override=0.5)
        assert (cfg.T, cfg.N, cfg.eta) == (100, 7, 0.5)
        assert cfg.to_dict()["derived"]["T"] == 100

    def test_constants(self):
        cfg = LhmnConfig(0.1, 0.1, 2, 1.0, U=2.0, r=0.5, c2=3.0)
        assert cfg.C1 == pytest.approx(2.0 ** 12 / 0.5 ** 12)
        assert cfg.C2 == pytest.approx(3.0 * 0.5 / 4.0)

    def test_validation(self):
        with pytest.raises(ConfigError):
            LhmnConfig(0.0, 0.1, 2, 1.0)
        with pytest.raises(ConfigError):
            LhmnConfig(0.1, 0.1, 2, 1.0, T_override=0)


class TestSelection:
    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 31), st.integers(1, 30), st.integers(1, 50), st.booleans())
    def test_counting_matches_brute_force(self, seed, T, N, with_zeros):
        rng = np.random.default_rng(seed)
        W = rng.normal(size=(T, 3))
        X = rng.normal(size=(N, 3))
        if with_zeros:
            X[: N // 2] = 0.0
        y = rng.choice([-1.0, 1.0], N)
        got = _selection_errors(W, X, y)
        for i in range(T):
            assert got[2 * i] == np.count_nonzero(predict(W[i], X) != y)
            assert got[2 * i + 1] == np.count_nonzero(predict(-W[i], X) != y)


class TestLhmnFit:
    def test_learns_massart_halfspace(self):
        spec = MarginalSpec(GAUSSIAN, 3)
        w_star = random_unit_vector(3, 2)
        clean = sample_realizable(spec, w_star, 30_000, 1)
        noisy = corrupt_massart(clean, MassartSpec.constant(0.1), 2)
        pseudo = noisy.with_labels(noisy.y, PSEUDO_LABELED)
        cfg = LhmnConfig(0.1, 0.1, 3, spec.radius, T_override=25_000, N_override=5000, eta_override=1e-3)
        result = lhmn_fit(pseudo, cfg, 0)
        assert result.iterates.shape == (25_000, 3)
        np.testing.assert_allclose(np.linalg.norm(result.iterates, axis=1), 1.0)
        test = sample_realizable(spec, w_star, 20_000, 3)
        assert np.mean(predict(result.hypothesis.w, test.X) != test.labels) < 0.05
        assert result.validation_error == pytest.approx(0.1, abs=0.03)
        np.testing.assert_array_equal(lhmn_train(pseudo, cfg, 0).w, result.hypothesis.w)
        assert result.learning_log_csv(every=10000).count("\n") == 4

    def test_sign_flip_candidate(self):
        # labels of -w*: the selection should return a negated iterate
        spec = MarginalSpec(GAUSSIAN, 2)
        data = sample_realizable(spec, [1.0, 0.0], 3000, 1)
        flipped = data.with_labels(-data.y, PSEUDO_LABELED)
        cfg = LhmnConfig(0.1, 0.1, 2, spec.radius, T_override=5, N_override=2000, eta_override=1e-9)
        result = lhmn_fit(flipped, cfg, 0)
        assert result.selected % 2 == 1
        assert result.hypothesis.w[0] < 0

    def test_size_checks(self):
        spec = MarginalSpec(GAUSSIAN, 2)
        data = sample_realizable(spec, [1.0, 0.0], 10, 1)
        with pytest.raises(InvalidInputError):
            lhmn_fit(data, LhmnConfig(0.1, 0.1, 2, 1.0, T_override=8, N_override=8), 0)
        with pytest.raises(InvalidInputError):
            lhmn_fit(data, LhmnConfig(0.1, 0.1, 3, 1.0, T_override=2, N_override=2), 0)


class TestPipeline:
    def test_injected_committee(self):
        spec = MarginalSpec(GAUSSIAN, 2)
        w_star = np.array([0.6, 0.8])
        public_truth = sample_realizable(spec, w_star, 12_000, 1)
        evaluation = sample_realizable(spec, w_star, 5000, 2)
        com = Committee(([0.6, 0.8], [0.8, 0.6], [0.0, 1.0]))
        lh = LhmnConfig(0.1, 0.1, 2, spec.radius, T_override=10_000, N_override=2000, eta_override=1e-3)
        cfg = MassartPipelineConfig(CommitteeConfig(), lh)
        out = run_massart_pipeline(None, strip_labels(public_truth), PrivacyParams(4.0, 0.1), cfg, 0,
                                   evaluation, public_truth.labels, committee=com)
        assert out.committee is com
        assert out.report.intermediate_label == "committee_vote"
        assert out.report.final_error.estimate < 0.05
        assert out.report.hash == run_massart_pipeline(
            None, strip_labels(public_truth), PrivacyParams(4.0, 0.1), cfg, 0, evaluation,
            public_truth.labels, committee=com).report.hash
