import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nldp_halfspace.core import Dataset, Example, PrivacyParams
from nldp_halfspace.errors import InvalidInputError, MalformedReportError, PreconditionError
from nldp_halfspace.ldp_client import (HINGE, LOGISTIC, ReportBatch, budget_report, encode_dataset,
                                       gaussian_epsilon, gaussian_release, hinge_encode, hinge_encode_batch,
                                       hinge_noise, hinge_sigma_base, hinge_variance_base, hinge_variance_copy,
                                       logistic_encode, logistic_noise, logistic_variance_label,
                                       per_user_budget, read_reports, report_from_dict, report_to_dict,
                                       write_reports)
from nldp_halfspace.rng import substream

# frozen: 32 ln(1.25 / 0.05) = 32 ln 25
BASE_VARIANCE_EPS1_DELTA005 = 103.00402639578242

eps_st = st.floats(0.05, 20)
delta_st = st.floats(1e-10, 0.5)


class TestCalibration:
    def test_frozen_base_variance(self):
        assert hinge_variance_base(1.0, 0.05) == pytest.approx(BASE_VARIANCE_EPS1_DELTA005, rel=1e-12)
        assert hinge_variance_base(1.0, 0.05) == pytest.approx(32 * math.log(25), rel=1e-15)

    def test_copy_and_label(self):
        L = math.log(1.25 / 1e-5)
        assert hinge_variance_copy(4.0, 1e-5, 8) == 8 * L * 64 * 81 / 16
        assert logistic_variance_label(4.0, 1e-5, 8) == 8 * L * 64 / 16

    @given(eps_st, delta_st)
    def test_sigma_inverts_to_epsilon(self, eps, delta):
        # each base release is an (eps/2, delta) Gaussian mechanism with sensitivity 2
        assert gaussian_epsilon(hinge_sigma_base(eps, delta), delta) == pytest.approx(eps / 2, rel=1e-12)

    @given(eps_st, delta_st, st.integers(1, 12))
    def test_noise_records(self, eps, delta, p):
        params = PrivacyParams(eps, delta)
        h, l = hinge_noise(params, p), logistic_noise(params, p)
        assert h.var_label == 0.0 and h.var_base == l.var_base and h.var_copy == l.var_copy
        assert l.var_label == logistic_variance_label(eps, delta, p)

    def test_gaussian_release(self):
        rng = substream(0, "t")
        with pytest.raises(InvalidInputError):
            gaussian_release([0.0], 2.0, 0.0, rng)
        out = gaussian_release(np.zeros(100_000), 2.0, 3.0, rng)
        assert out.std() == pytest.approx(3.0, rel=0.02)


class TestEncoders:
    params = PrivacyParams(4.0, 1e-5)

    def test_shapes(self):
        rep = hinge_encode(Example([0.6, 0.0], 1), self.params, 3, substream(1, "a"))
        rep.validate()
        assert rep.x_copies.shape == (12, 2) and rep.y_copies.shape == (12,)
        lrep = logistic_encode(Example([1.2, 0.0], -1), self.params, 3, 2.0, substream(1, "b"))
        assert lrep.x_copies.shape == (12, 2) and np.ndim(lrep.y_p) == 0

    def test_preconditions(self):
        with pytest.raises(PreconditionError):
            hinge_encode(Example([1.5, 0.0], 1), self.params, 2, substream(0))
        with pytest.raises(PreconditionError):
            logistic_encode(Example([3.0], 1), self.params, 2, 2.0, substream(0))
        with pytest.raises(PreconditionError):
            hinge_encode(Example([0.5], 0), self.params, 2, substream(0))
        with pytest.raises(InvalidInputError):
            hinge_encode_batch(np.zeros((1, 1)), np.ones(1), self.params, -1, substream(0))

    def test_noise_is_centered_with_calibrated_scale(self):
        X = np.tile([0.3, -0.4], (20_000, 1))
        batch = hinge_encode_batch(X, np.ones(20_000), self.params, 2, substream(2, "c"))
        noise = batch.x_copies - X[:, None, :]
        assert abs(noise.mean()) < 4 * batch.noise.sigma_copy / math.sqrt(noise.size)
        assert noise.std() == pytest.approx(batch.noise.sigma_copy, rel=0.01)
        assert (batch.x0 - X).std() == pytest.approx(batch.noise.sigma_base, rel=0.02)

    def test_encode_dataset_per_user_streams(self):
        data = Dataset(2, 1.0, [[0.1, 0.2], [0.3, -0.1], [0.0, 0.5]], [1, -1, 1])
        full = encode_dataset(data, HINGE, self.params, 2, 9)
        tail = encode_dataset(data.subset([1, 2]), HINGE, self.params, 2, 9, offset=1)
        np.testing.assert_array_equal(full.x_copies[1:], tail.x_copies)
        with pytest.raises(InvalidInputError):
            encode_dataset(data, "probit", self.params, 2, 9)

    def test_logistic_normalizes_by_R(self):
        data = Dataset(1, 4.0, [[4.0]] * 5000, [1] * 5000)
        batch = encode_dataset(data, LOGISTIC, self.params, 1, 3)
        assert batch.x_copies.mean() == pytest.approx(1.0, abs=4 * batch.noise.sigma_copy / math.sqrt(10_000))


class TestBatchAndWire:
    params = PrivacyParams(2.0, 1e-3)

    def test_batch_roundtrip_via_reports(self):
        X = np.array([[0.1, 0.2], [0.3, 0.4]])
        batch = hinge_encode_batch(X, np.array([1.0, -1.0]), self.params, 2, substream(0))
        again = ReportBatch.from_reports(list(batch))
        np.testing.assert_array_equal(again.x_copies, batch.x_copies)
        with pytest.raises(InvalidInputError):
            ReportBatch.from_reports([])

    def test_mixed_batch_rejected(self):
        a = hinge_encode(Example([0.1], 1), self.params, 2, substream(0))
        b = hinge_encode(Example([0.1], 1), self.params, 3, substream(1))
        with pytest.raises(MalformedReportError):
            ReportBatch.from_reports([a, b])

    @settings(max_examples=25, deadline=None)
    @given(st.sampled_from([HINGE, LOGISTIC]), st.integers(0, 4), st.integers(0, 2 ** 31))
    def test_wire_roundtrip_bit_exact(self, kind, p, seed):
        ex = Example([0.25, -0.5], 1)
        rng = substream(seed)
        rep = hinge_encode(ex, self.params, p, rng) if kind == HINGE else logistic_encode(ex, self.params, p, 1.0, rng)
        back = report_from_dict(report_to_dict(rep))
        assert back.kind == kind and back.noise == rep.noise
        np.testing.assert_array_equal(back.x_copies, rep.x_copies)
        assert back.y0 == rep.y0

    def test_file_roundtrip(self, tmp_path):
        batch = hinge_encode_batch(np.array([[0.1, 0.0]] * 3), np.ones(3), self.params, 2, substream(4))
        assert write_reports(tmp_path / "r.jsonl", batch) == 3
        back = ReportBatch.from_reports(read_reports(tmp_path / "r.jsonl"))
        np.testing.assert_array_equal(back.y_copies, batch.y_copies)

    @pytest.mark.parametrize("mutate", [
        lambda d: d.pop("x0"),
        lambda d: d.update(kind="probit"),
        lambda d: d.update(x_copies=d["x_copies"][:-1]),
    ])
    def test_malformed(self, mutate):
        d = report_to_dict(hinge_encode(Example([0.1], 1), self.params, 2, substream(0)))
        mutate(d)
        with pytest.raises(MalformedReportError):
            report_from_dict(d)


class TestBudget:
    @given(eps_st, delta_st, st.integers(1, 10))
    def test_hinge_ledger(self, eps, delta, p):
        ledger = per_user_budget(HINGE, PrivacyParams(eps, delta), p)
        P = p * (p + 1)
        assert len(ledger) == 2 + 2 * P
        # base releases cost eps/2 each; every x or y copy costs eps / (p (p+1))
        assert ledger.epsilon_total == pytest.approx(eps + 2 * eps, rel=1e-9)
        assert ledger.delta_total == pytest.approx((2 + 2 * P) * delta)

    def test_logistic_ledger(self):
        ledger = per_user_budget(LOGISTIC, PrivacyParams(1.0, 1e-5), 4)
        assert len(ledger) == 2 + 20 + 1
        labels = [r[0] for r in ledger.releases]
        assert labels[-1] == "y_p"
        assert ledger.releases[-1][1] == pytest.approx(1.0 / 4)
        assert ledger.epsilon_total == pytest.approx(1.0 + 1.0 + 0.25)

    def test_budget_report_accepts_collections(self):
        rep = hinge_encode(Example([0.1], 1), PrivacyParams(1.0, 0.01), 1, substream(0))
        assert len(budget_report(None)) == 0
        assert len(budget_report([])) == 0
        assert len(budget_report([rep, rep])) == 2 * len(budget_report(rep))
        assert budget_report(rep).to_dict()["composition"] == "basic"
