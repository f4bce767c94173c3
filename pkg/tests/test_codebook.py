import numpy as np
import pytest

from leobeam import codebook
from leobeam.codebook import DegenerateChannelError


class TestSteeringVector:
    def test_boresight_is_uniform(self):
        v = codebook.steering_vector(0.0, 0.0)
        assert np.allclose(v, 0.25 + 0j)
        assert len(v) == 16

    def test_unit_norm(self, rng):
        for _ in range(20):
            az, el = rng.uniform(-80, 80, 2)
            v = codebook.steering_vector(az, el)
            assert np.linalg.norm(v) == pytest.approx(1.0, abs=1e-12)

    def test_conjugate_symmetry(self, rng):
        for _ in range(10):
            az, el = rng.uniform(-80, 80, 2)
            a = codebook.steering_vector(az, el)
            b = codebook.steering_vector(-az, -el)
            assert np.allclose(b, np.conj(a), atol=1e-14)

    def test_phase_formula_oracle(self):
        # Independent recomputation of the (30, 0) entries element by element.
        az, el, spacing = 30.0, 0.0, 0.5
        v = codebook.steering_vector(az, el, spacing)
        ux = np.sin(np.radians(az)) * np.cos(np.radians(el))
        uy = np.sin(np.radians(el))
        k = 0
        for m in range(4):
            for n in range(4):
                phase = 2 * np.pi * spacing * (m * ux + n * uy)
                expect = (np.cos(phase) + 1j * np.sin(phase)) / 4.0
                assert v[k] == pytest.approx(expect, abs=1e-14)
                k += 1


class TestBuildCodebook:
    def test_degenerate_grid(self):
        cb = codebook.build_codebook(1, 1, 100.0, 100.0)
        assert cb.n_beams == 1
        assert np.allclose(cb.steer_offsets[0], [0.0, 0.0])
        assert np.allclose(cb.weights[0], 0.25 + 0j)

    def test_grid_center_offsets(self):
        cb = codebook.build_codebook(4, 4, 100.0, 100.0)
        az = sorted(set(np.round(cb.steer_offsets[:, 0], 9)))
        assert az == [-37.5, -12.5, 12.5, 37.5]
        el = sorted(set(np.round(cb.steer_offsets[:, 1], 9)))
        assert el == [-37.5, -12.5, 12.5, 37.5]

    def test_all_weights_unit_norm(self):
        cb = codebook.build_codebook()
        assert np.allclose(np.linalg.norm(cb.weights, axis=1), 1.0, atol=1e-12)

    def test_invalid_grid(self):
        from leobeam.errors import ConfigError

        with pytest.raises(ConfigError):
            codebook.build_codebook(0, 4)


class TestArrayGain:
    def test_matched_beam_gain(self):
        cb = codebook.build_codebook()
        for b in (0, 5, 10, 15):
            h = codebook.steering_vector(*cb.steer_offsets[b])
            assert codebook.array_gain_db(cb.weights[b], h) == pytest.approx(
                10 * np.log10(16), abs=1e-9
            )

    def test_orthogonal_floor(self, rng):
        w = codebook.steering_vector(0.0, 0.0)
        v = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        h = v - w * np.vdot(w, v)  # exact orthogonal complement
        assert codebook.array_gain_db(w, h) == codebook.GAIN_FLOOR_DB

    def test_zero_channel_raises(self):
        w = codebook.steering_vector(0.0, 0.0)
        with pytest.raises(DegenerateChannelError):
            codebook.array_gain_db(w, np.zeros(16, dtype=complex))

    def test_exhaustive_argmax_oracle(self, rng):
        cb = codebook.build_codebook()
        for _ in range(20):
            h = rng.standard_normal(16) + 1j * rng.standard_normal(16)
            gains = [codebook.array_gain_db(w, h) for w in cb.weights]
            brute = np.argmax([abs(np.vdot(w, h)) ** 2 for w in cb.weights])
            assert np.argmax(gains) == brute

    def test_vectorized_matches_scalar(self, rng):
        cb = codebook.build_codebook()
        h_rows = rng.standard_normal((5, 16)) + 1j * rng.standard_normal((5, 16))
        table = codebook.array_gains_db(cb.weights, h_rows)
        for i in range(5):
            for b in range(16):
                assert table[i, b] == pytest.approx(
                    codebook.array_gain_db(cb.weights[b], h_rows[i]), abs=1e-9
                )

    def test_invariance_global_phase_and_scale(self, rng):
        cb = codebook.build_codebook()
        h = rng.standard_normal(16) + 1j * rng.standard_normal(16)
        g0 = codebook.array_gain_db(cb.weights[3], h)
        assert codebook.array_gain_db(cb.weights[3], np.exp(1j * 0.7) * h) == pytest.approx(g0)
        assert codebook.array_gain_db(cb.weights[3], 4.2 * h) == pytest.approx(g0)

    def test_nearest_beam_wins_for_los(self, rng):
        # Pure LoS toward directions near beam centers: the argmax-gain beam
        # is the nearest one in direction-cosine space.
        cb = codebook.build_codebook()
        def cosines(az, el):
            return np.array([
                np.sin(np.radians(az)) * np.cos(np.radians(el)),
                np.sin(np.radians(el)),
            ])
        beams_u = np.stack([cosines(*off) for off in cb.steer_offsets])
        for b in range(cb.n_beams):
            for _ in range(4):
                az = cb.steer_offsets[b, 0] + rng.uniform(-5, 5)
                el = cb.steer_offsets[b, 1] + rng.uniform(-5, 5)
                h = codebook.steering_vector(az, el)
                gains = codebook.array_gains_db(cb.weights, h[None, :])[0]
                nearest = np.argmin(np.sum((beams_u - cosines(az, el)) ** 2, axis=1))
                assert np.argmax(gains) == nearest == b


class TestBeamGraph:
    def test_single_beam(self):
        cb = codebook.build_codebook(1, 1)
        g = codebook.beam_graph(cb)
        assert not g.adjacency.any()
        assert np.allclose(g.normalized_adjacency, [[1.0]])

    def test_grid_degrees(self):
        g = codebook.beam_graph(codebook.build_codebook(4, 4))
        deg = g.adjacency.sum(axis=1)
        assert sorted(deg) == [2, 2, 2, 2, 3, 3, 3, 3, 3, 3, 3, 3, 4, 4, 4, 4]
        assert not np.any(np.diag(g.adjacency))
        assert np.array_equal(g.adjacency, g.adjacency.T)

    def test_normalization_identity(self):
        g = codebook.beam_graph(codebook.build_codebook(4, 4))
        deg = g.adjacency.sum(axis=1)
        a_plus_i = g.adjacency.astype(float) + np.eye(16)
        assert np.allclose(a_plus_i.sum(axis=1), deg + 1)
        assert np.allclose(g.normalized_adjacency, g.normalized_adjacency.T, atol=1e-12)
        # Reconstruct A + I from the normalized form.
        d_sqrt = np.sqrt(deg + 1.0)
        assert np.allclose(
            g.normalized_adjacency * d_sqrt[:, None] * d_sqrt[None, :], a_plus_i
        )

    def test_eigenvalues_bounded(self):
        for shape in ((4, 4), (2, 3), (1, 5)):
            g = codebook.beam_graph(codebook.build_codebook(*shape))
            ev = np.linalg.eigvalsh(g.normalized_adjacency)
            assert ev.min() >= -1.0 - 1e-9
            assert ev.max() <= 1.0 + 1e-9
