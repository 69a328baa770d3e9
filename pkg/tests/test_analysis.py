"""Spectral profile, attenuation and theorem-probe tests."""

import json

import numpy as np
import pytest

from freqrec.analysis import (
    SpectralProfile,
    attenuation_metric,
    emit_report,
    load_profile_json,
    profile_from_trace,
    theorem1_probe,
    trace_spectral_profile,
)
from freqrec.dataset import SynthConfig, build_split, synthesize
from freqrec.errors import InputError
from freqrec.graph import build_cooccurrence
from freqrec.spectral import basis_from_matrix
from freqrec.tfm import ButterworthSpec
from tests.test_model import small_model


@pytest.fixture(scope="module")
def setup():
    log, _ = synthesize(SynthConfig(users=40, items=30, mean_length=12, rho=0.5, seed=0))
    split = build_split(log, min_interactions=5)
    graph = build_cooccurrence(split)
    model = small_model(split, d_model=16, n_layers=2)
    return split, graph, model


class TestProfile:
    def test_eigenvector_signal_all_band_one(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((6, 6))
        basis = basis_from_matrix((x + x.T) / 2)
        u1 = basis.eigenvectors[:, :1]
        trace = [u1 @ rng.standard_normal((1, 4)) for _ in range(3)]
        raw = profile_from_trace(trace, basis, n_bands=3)
        shares = raw / raw.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(shares[:, 0], 1.0, atol=1e-10)

    def test_two_node_hand_case(self):
        # two targets joined by weight w > 0: L = [[1,-1],[-1,1]], modes
        # (1,1)/sqrt(2) at 0 and (1,-1)/sqrt(2) at 2; H = [[1,0],[-1,0]]
        # lies entirely on the high mode
        lap = np.array([[1.0, -1.0], [-1.0, 1.0]])
        basis = basis_from_matrix(lap)
        np.testing.assert_allclose(basis.eigenvalues, [0.0, 2.0], atol=1e-12)
        h = np.array([[1.0, 0.0], [-1.0, 0.0]])
        raw = profile_from_trace([h], basis, n_bands=2)
        shares = raw / raw.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(shares[0], [0.0, 1.0], atol=1e-12)

    def test_trace_shapes_and_share_rows(self, setup):
        split, graph, model = setup
        profile = trace_spectral_profile(model, split.sequences, graph, n_bands=4)
        assert profile.raw.shape == (model.backbone.n_layers + 1, 4)
        assert profile.user_count > 0
        shares = profile.shares()
        np.testing.assert_allclose(shares.sum(axis=1), 1.0, atol=1e-9)

    def test_short_sequences_skipped(self, setup):
        split, graph, model = setup
        seqs = [split.sequences[0], np.array([1, 2]), np.array([3])]
        profile = trace_spectral_profile(model, seqs, graph, n_bands=4)
        assert profile.skipped_short == 2
        assert profile.user_count == 1

    def test_energy_conservation_per_user(self, setup):
        split, graph, model = setup
        from freqrec.graph import local_subgraph
        from freqrec.model.network import forward
        seq = split.sequences[0]
        _, _, trace = forward(model, seq, capture=True)
        local = local_subgraph(graph, seq[1:])
        basis = basis_from_matrix(local.laplacian)
        cut = [h[:-1] for h in trace.matrices]
        raw = profile_from_trace(cut, basis, n_bands=4)
        for l, h in enumerate(cut):
            total = float(np.sum(h * h))
            assert abs(raw[l].sum() - total) <= 1e-9 * max(total, 1.0)

    def test_additivity(self, setup):
        split, graph, model = setup
        seqs = list(split.sequences)
        half = len(seqs) // 2
        full = trace_spectral_profile(model, seqs, graph, n_bands=4)
        part_a = trace_spectral_profile(model, seqs[:half], graph, n_bands=4)
        part_b = trace_spectral_profile(model, seqs[half:], graph, n_bands=4)
        np.testing.assert_allclose(full.raw, part_a.raw + part_b.raw, rtol=1e-12)


class TestAttenuation:
    def make_profile(self, shares):
        shares = np.asarray(shares, dtype=float)
        return SpectralProfile(raw=shares, n_bands=shares.shape[1], user_count=1)

    def test_constant_profile(self):
        profile = self.make_profile([[0.5, 0.5], [0.5, 0.5], [0.5, 0.5]])
        report = attenuation_metric(profile)
        assert report.ratios == [1.0, 1.0]
        np.testing.assert_allclose(report.slopes, 0.0, atol=1e-12)

    def test_linear_decay_slope(self):
        profile = self.make_profile([[1.0, 0.0], [0.8, 0.2], [0.6, 0.4]])
        report = attenuation_metric(profile)
        assert report.slopes[0] == pytest.approx(-0.2)
        assert report.ratios[0] == pytest.approx(0.6)

    def test_zero_initial_band_undefined(self):
        profile = self.make_profile([[1.0, 0.0], [0.9, 0.1]])
        report = attenuation_metric(profile)
        assert report.ratios[1] is None

    def test_hand_case_band2_ratio_one(self):
        profile = self.make_profile([[0.0, 1.0], [0.0, 1.0]])
        report = attenuation_metric(profile)
        assert report.ratios[1] == pytest.approx(1.0)

    def test_single_layer_rejected(self):
        with pytest.raises(InputError):
            attenuation_metric(self.make_profile([[1.0, 0.0]]))


class TestTheoremProbe:
    def test_ring_family_zero_violations(self):
        report = theorem1_probe(ButterworthSpec(0.3, 2), "ring", trials=300, seed=0)
        assert report.violations_rayleigh == 0
        assert report.mean_smoothness_after < report.mean_smoothness_before

    def test_locality_within_pilot_threshold(self):
        report = theorem1_probe(ButterworthSpec(0.3, 2), "locality", rho=0.5,
                                trials=300, seed=1)
        assert report.within_threshold()
        assert report.mean_smoothness_after < report.mean_smoothness_before

    def test_identity_filter_exact(self):
        report = theorem1_probe(None, "ring", trials=100, seed=2)
        assert report.violations_rayleigh == 0
        assert report.violations_quadratic == 0
        assert report.mean_smoothness_before == report.mean_smoothness_after

    def test_bad_family(self):
        with pytest.raises(InputError):
            theorem1_probe(ButterworthSpec(0.3, 2), "torus", trials=10)

    def test_bad_rho(self):
        with pytest.raises(InputError):
            theorem1_probe(ButterworthSpec(0.3, 2), "locality", rho=1.5, trials=10)


class TestEmit:
    def test_profile_csv_rows(self, tmp_path):
        profile = SpectralProfile(raw=np.array([[1.0, 2.0], [3.0, 4.0]]),
                                  n_bands=2, user_count=3)
        path = tmp_path / "profile.csv"
        emit_report(profile, path, format="csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "layer,band,energy,share"
        assert len(lines) == 5

    def test_reemit_byte_identical(self, tmp_path):
        profile = SpectralProfile(raw=np.array([[1.0, 2.0], [3.0, 4.0]]) / 3.0,
                                  n_bands=2, user_count=3)
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        emit_report(profile, p1, format="csv")
        emit_report(profile, p2, format="csv")
        assert p1.read_bytes() == p2.read_bytes()

    def test_json_roundtrip_full_precision(self, tmp_path):
        rng = np.random.default_rng(0)
        raw = rng.random((3, 4))
        profile = SpectralProfile(raw=raw, n_bands=4, user_count=7,
                                  fingerprint="fp")
        path = tmp_path / "profile.json"
        emit_report(profile, path, format="json")
        loaded, payload = load_profile_json(path)
        np.testing.assert_array_equal(loaded.raw, raw)
        assert loaded.user_count == 7
        assert loaded.fingerprint == "fp"

    def test_theorem_report_json(self, tmp_path):
        report = theorem1_probe(ButterworthSpec(0.3, 2), "ring", trials=20, seed=3)
        path = tmp_path / "thm.json"
        emit_report(report, path, format="json")
        payload = json.loads(path.read_text())
        assert payload["trials"] == 20
        assert payload["threshold"] == report.threshold

    def test_bad_format(self, tmp_path):
        profile = SpectralProfile(raw=np.ones((2, 2)), n_bands=2, user_count=1)
        with pytest.raises(InputError):
            emit_report(profile, tmp_path / "x", format="yaml")
