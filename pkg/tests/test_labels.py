"""Feature extraction and pseudo-label oracles."""

import math

import numpy as np
import pytest

from uxenc import labels as L
from uxenc import mixsim
from uxenc.encoder import EncoderConfig
from uxenc.errors import DataError, DegenerateSignalError
from uxenc.mixsim import PretrainSimConfig, simulate_pretrain_batch


class TestFrameFeatures:
    def test_frame_count_matches_cnn_downsampler(self):
        cfg = EncoderConfig()
        for n in (400, 720, 1000, 16000, 32000):
            feats = L.frame_features(np.random.default_rng(0).standard_normal(n))
            assert feats.shape == (cfg.frame_count(n), 39)

    def test_silence_gives_constant_rows(self):
        feats = L.frame_features(np.zeros(4000))
        np.testing.assert_allclose(feats - feats[0], 0.0, atol=1e-12)

    def test_amplitude_scaling_shifts_only_c0(self):
        # stationary input: 100 Hz sine has whole periods per 320-sample hop,
        # so every frame is identical and deltas vanish
        t = np.arange(8000)
        wave = 0.2 * np.sin(2 * np.pi * 100 * t / 16000)
        f1 = L.frame_features(wave)
        f2 = L.frame_features(2.0 * wave)
        np.testing.assert_allclose(f1[:, 13:], 0.0, atol=1e-9)
        np.testing.assert_allclose(f2[:, 13:], 0.0, atol=1e-9)
        np.testing.assert_allclose(f1[:, 1:13], f2[:, 1:13], atol=1e-9)
        # log power rises by 2 ln 2 in every mel channel; the orthonormal DCT
        # concentrates a constant shift into c0 with gain sqrt(n_mels)
        expected_shift = 2.0 * math.log(2.0) * math.sqrt(L.N_MELS)
        np.testing.assert_allclose(f2[:, 0] - f1[:, 0], expected_shift, atol=1e-9)

    def test_too_short_raises(self):
        with pytest.raises(DegenerateSignalError):
            L.frame_features(np.zeros(399))


class TestKmeans:
    def test_k_equals_n_points_zero_inertia(self):
        rng = np.random.default_rng(0)
        pts = rng.standard_normal((6, 3))
        cb = L.kmeans_fit(pts, 6, rng=np.random.default_rng(1))
        assert cb.inertia == pytest.approx(0.0, abs=1e-20)
        got = sorted(map(tuple, np.round(cb.centroids, 9)))
        want = sorted(map(tuple, np.round(pts, 9)))
        assert got == want

    def test_two_blobs_recovers_means(self):
        rng = np.random.default_rng(2)
        a = rng.normal(loc=(-3, 0), scale=0.05, size=(100, 2))
        b = rng.normal(loc=(3, 1), scale=0.05, size=(100, 2))
        cb = L.kmeans_fit(np.concatenate([a, b]), 2, rng=np.random.default_rng(3))
        cents = cb.centroids[np.argsort(cb.centroids[:, 0])]
        np.testing.assert_allclose(cents[0], a.mean(axis=0), atol=0.1)
        np.testing.assert_allclose(cents[1], b.mean(axis=0), atol=0.1)

    def test_inertia_non_increasing(self):
        rng = np.random.default_rng(4)
        pts = rng.standard_normal((200, 4))
        cb = L.kmeans_fit(pts, 7, iters=25, rng=np.random.default_rng(5))
        assert all(b <= a + 1e-9 for a, b in zip(cb.history, cb.history[1:]))

    def test_k_larger_than_rows_raises(self):
        with pytest.raises(DataError):
            L.kmeans_fit(np.zeros((3, 2)), 5)

    def test_fixed_seed_deterministic(self):
        rng = np.random.default_rng(6)
        pts = rng.standard_normal((50, 3))
        a = L.kmeans_fit(pts, 4, rng=np.random.default_rng(7))
        b = L.kmeans_fit(pts, 4, rng=np.random.default_rng(7))
        np.testing.assert_array_equal(a.centroids, b.centroids)

    def test_row_permutation_preserves_centroid_set(self):
        rng = np.random.default_rng(8)
        pts = rng.standard_normal((60, 3))
        perm = np.random.default_rng(9).permutation(60)
        a = L.kmeans_fit(pts, 5, rng=np.random.default_rng(10))
        b = L.kmeans_fit(pts[perm], 5, rng=np.random.default_rng(10))
        sa = np.array(sorted(map(tuple, a.centroids)))
        sb = np.array(sorted(map(tuple, b.centroids)))
        np.testing.assert_allclose(sa, sb, atol=1e-9)


class TestAssign:
    def _codebook(self, cents):
        return L.Codebook(centroids=np.asarray(cents, dtype=float))

    def test_exact_centroid_match(self):
        cb = self._codebook([[0, 0], [1, 1], [2, 2], [3, 3]])
        out = L.assign(np.array([[3.0, 3.0]]), cb)
        assert out[0] == 3

    def test_tie_goes_to_lowest_index(self):
        cb = self._codebook([[0.0, 0.0], [2.0, 0.0]])
        out = L.assign(np.array([[1.0, 0.0]]), cb)
        assert out[0] == 0

    def test_matches_brute_force_scan(self):
        rng = np.random.default_rng(11)
        feats = rng.standard_normal((40, 5))
        cb = self._codebook(rng.standard_normal((8, 5)))
        got = L.assign(feats, cb)
        for t in range(40):
            d = [np.sum((feats[t] - c) ** 2) for c in cb.centroids]
            assert got[t] == int(np.argmin(d))


class TestBilabelTargets:
    def _fit_codebook(self, clean_pool):
        feats = np.concatenate([L.frame_features(u.wave) for u in clean_pool[:6]])
        return L.kmeans_fit(feats, 8, rng=np.random.default_rng(12))

    def _simulate(self, clean_pool, rir_bank, p_i, p_n, noise_pool, seed):
        cfg = PretrainSimConfig(p_interference=p_i, p_noise=p_n, c_min=2, c_max=2,
                                batch_size=4, n_samples=16000)
        batch = clean_pool[:4]
        return simulate_pretrain_batch(batch, noise_pool, rir_bank, cfg,
                                       np.random.default_rng(seed))

    def test_no_secondary_all_invalid(self, clean_pool, rir_bank):
        cb = self._fit_codebook(clean_pool)
        examples = self._simulate(clean_pool, rir_bank, 0.0, 0.0, [], 20)
        out = L.bilabel_targets(examples[0], cb)
        assert not out.valid_secondary.any()
        assert np.all(out.secondary == -1)

    def test_secondary_valid_frame_count(self, clean_pool, rir_bank):
        cb = self._fit_codebook(clean_pool)
        examples = self._simulate(clean_pool, rir_bank, 1.0, 0.0, [], 21)
        for ex in examples:
            sec = next(s for s in ex.sources if s.kind == "secondary")
            out = L.bilabel_targets(ex, cb)
            active = sec.active[1] - sec.active[0]
            assert abs(out.valid_secondary.sum() - active // 320) <= 2

    def test_primary_labels_ignore_noise_and_rir(self, clean_pool, rir_bank, noise_pool):
        cb = self._fit_codebook(clean_pool)
        with_noise = self._simulate(clean_pool, rir_bank, 0.0, 1.0, noise_pool, 22)
        without = self._simulate(clean_pool, rir_bank, 0.0, 0.0, [], 23)
        for a, b in zip(with_noise, without):
            la = L.bilabel_targets(a, cb)
            lb = L.bilabel_targets(b, cb)
            np.testing.assert_array_equal(la.primary, lb.primary)

    def test_missing_clean_sources_raises(self, clean_pool, rir_bank):
        cb = self._fit_codebook(clean_pool)
        ex = self._simulate(clean_pool, rir_bank, 0.0, 0.0, [], 24)[0]
        ex.sources[0].clean = None
        with pytest.raises(DataError):
            L.bilabel_targets(ex, cb)


class TestLabelCache:
    def test_roundtrip(self, tmp_path):
        pseudo = L.PseudoLabels(
            primary=np.array([1, 2, 3, 4], dtype=np.int64),
            secondary=np.array([-1, 5, 6, -1], dtype=np.int64),
            valid_secondary=np.array([False, True, True, False]))
        path = tmp_path / "labels.bin"
        L.save_label_cache(path, pseudo)
        loaded = L.load_label_cache(path)
        np.testing.assert_array_equal(loaded.primary, pseudo.primary)
        np.testing.assert_array_equal(loaded.secondary, pseudo.secondary)
        np.testing.assert_array_equal(loaded.valid_secondary, pseudo.valid_secondary)
