"""Unit tests for channel module."""

import numpy as np
import pytest
from secure_cra_isac.channel import (
    AngleGrid,
    ChannelSet,
    CompoundChannel,
    PathLossSpec,
    Position,
    ScatteringModel,
    compound_channel,
    eve_from_target,
    generate_bob_channel,
    link_amplitude,
    make_path,
    path_loss,
    quantize_angle,
    sample_scattering_matrices,
    sample_scattering_matrix,
    scattering_template,
    steering_vector,
)
from secure_cra_isac.em_core import SelectionMatrix, assemble_em_beamformer, build_dictionary
from secure_cra_isac.errors import ChannelError, OracleBudgetError


class TestGeometryHelpers:
    """Test grids, steering vectors and path loss."""

    def test_quantize_to_nearest_sample(self):
        """Angles map to the nearest grid sample."""
        grid = AngleGrid(180)
        assert quantize_angle(np.radians(90.2), grid) == 90
        assert quantize_angle(0.0, grid) == 0

    def test_quantize_tie_goes_to_lower_index(self):
        """An angle exactly between two samples maps to the lower index."""
        grid = AngleGrid(4)
        assert quantize_angle(np.pi / 8, grid) == 0

    def test_quantize_rejects_out_of_range(self):
        """Angles outside [0, π) raise ChannelError."""
        with pytest.raises(ChannelError):
            quantize_angle(np.pi, AngleGrid(8))

    def test_steering_vector_unit_modulus(self):
        """ULA steering entries have unit modulus and start at 1."""
        a = steering_vector(0.7, 8)
        np.testing.assert_allclose(np.abs(a), 1.0)
        assert a[0] == pytest.approx(1.0)

    def test_path_loss_value(self):
        """Loss at 10 m with κ=2, C0=30 dB, D0=1 m is 1e-5."""
        assert path_loss(10.0, 2.0, 30.0, 1.0) == pytest.approx(1e-5)

    def test_amplitude_modes(self):
        """Power mode takes the square root of the loss, amplitude mode uses it as is."""
        loss = path_loss(20.0, 2.5, 30.0, 1.0)
        assert link_amplitude(20.0, 2.5, 30.0, 1.0, "power") == pytest.approx(np.sqrt(loss))
        assert link_amplitude(20.0, 2.5, 30.0, 1.0, "amplitude") == pytest.approx(loss)
        with pytest.raises(ChannelError):
            link_amplitude(20.0, 2.5, 30.0, 1.0, "decibel")

    def test_nonpositive_distance_rejected(self):
        """Zero distance raises ChannelError."""
        with pytest.raises(ChannelError):
            path_loss(0.0, 2.0, 30.0, 1.0)


class TestScattering:
    """Test scattering covariance models."""

    def test_template_is_hermitian_psd(self):
        """The ε-scaled template is Hermitian and PSD."""
        cov = scattering_template(0.5)
        np.testing.assert_allclose(cov, cov.conj().T)
        assert np.min(np.linalg.eigvalsh(cov)) >= 0

    def test_non_psd_covariance_rejected(self):
        """A covariance with a negative eigenvalue is rejected."""
        with pytest.raises(ChannelError):
            ScatteringModel(np.diag([1.0, 1.0, 1.0, -1.0]))

    def test_factor_reproduces_covariance(self):
        """factor() Lᴴ equals the covariance."""
        model = ScatteringModel.from_template(0.5, 2.0)
        L = model.factor()
        np.testing.assert_allclose(L @ L.conj().T, model.covariance, atol=1e-12)

    def test_sample_covariance_converges(self, rng):
        """Empirical covariance of vec(Φ) approaches the model covariance."""
        model = ScatteringModel.from_template(0.5)
        draws = sample_scattering_matrices(rng, model, 200_000).reshape(-1, 4)
        empirical = draws.T @ draws.conj() / draws.shape[0]
        np.testing.assert_allclose(empirical, model.covariance, atol=0.02)

    def test_same_seed_same_draws(self):
        """Sampling is reproducible for a given seed."""
        model = ScatteringModel.from_template()
        a = sample_scattering_matrices(np.random.default_rng(3), model, 5)
        b = sample_scattering_matrices(np.random.default_rng(3), model, 5)
        np.testing.assert_array_equal(a, b)


    def test_single_draw_shape(self, rng):
        """sample_scattering_matrix returns one complex 2×2 matrix."""
        phi = sample_scattering_matrix(rng, ScatteringModel.from_template())
        assert phi.shape == (2, 2)
        assert np.iscomplexobj(phi)

class TestCompoundChannel:
    """Test factored compound channels against their dense forms."""

    def _bob(self, rng, N=2, M=8, L=2):
        return generate_bob_channel(rng, Position(np.radians(80), 55.0), L, AngleGrid(M), N)

    def test_factor_dimension_mismatch_rejected(self):
        """Spatial factors must have one row per angle index."""
        with pytest.raises(ChannelError):
            CompoundChannel("target", 8, np.array([1, 2]), np.ones((1, 2)), np.eye(2)[None])

    def test_eve_requires_identity_scattering(self):
        """Eve links are single-path with identity depolarization."""
        with pytest.raises(ChannelError):
            CompoundChannel("eve", 8, np.array([1]), np.ones((1, 2)), 2 * np.eye(2)[None])

    def test_compound_channel_defaults(self):
        """Omitted scattering and rotation default to identities."""
        grid = AngleGrid(8)
        paths = [make_path(np.radians(60), 0.1, grid, 2), make_path(np.radians(120), 0.05, grid, 2)]
        link = compound_channel("bob", paths, 8)
        assert link.dims == (4, 32)
        np.testing.assert_array_equal(link.scattering, np.tile(np.eye(2), (2, 1, 1)))
        np.testing.assert_array_equal(link.rotation, np.eye(2))
        np.testing.assert_array_equal(link.angle_indices, [p.angle_index for p in paths])

    def test_compound_channel_needs_paths(self):
        """An empty path list raises ChannelError."""
        with pytest.raises(ChannelError):
            compound_channel("target", [], 8)

    def test_bob_dims(self, rng):
        """A Bob link is 2L × 2MN."""
        bob = self._bob(rng, N=3, M=8, L=2)
        assert bob.dims == (4, 48)

    def test_effective_row_matches_dense(self, rng):
        """The factored effective row equals p̄ᵀ M F_EM from dense matrices."""
        bob = self._bob(rng)
        dictionary = build_dictionary(8, 1, 3)
        em = assemble_em_beamformer(dictionary, SelectionMatrix.one_hot([2, 1], dictionary.P))
        pol = np.array([1.0, 1.0]) / np.sqrt(2.0)
        dense_row = np.tile(pol, bob.L) @ bob.dense() @ em.dense()
        np.testing.assert_allclose(bob.effective_row(em, pol), dense_row, atol=1e-14)

    def test_radar_matrix_matches_dense(self, tiny_channels, tiny_dictionary):
        """W_EMᵀ M F_EM from factors equals the dense product."""
        target = tiny_channels.target
        em_tx = assemble_em_beamformer(tiny_dictionary, SelectionMatrix.one_hot([0, 2], tiny_dictionary.P))
        em_rx = assemble_em_beamformer(tiny_dictionary, SelectionMatrix.one_hot([1, 1], tiny_dictionary.P))
        dense = em_rx.dense().T @ target.dense() @ em_tx.dense()
        np.testing.assert_allclose(target.radar_matrix(em_tx, em_rx), dense, atol=1e-14)

    def test_selection_rows_reproduce_effective_row(self, rng):
        """Σ_n F[n] r_n S[:, n] equals the effective row times F."""
        bob = self._bob(rng)
        dictionary = build_dictionary(8, 1, 3)
        sel = SelectionMatrix.one_hot([0, 2], dictionary.P)
        em = assemble_em_beamformer(dictionary, sel)
        pol = np.array([1.0, 0.0])
        rows = bob.selection_rows(dictionary, pol)
        f = np.array([0.3 + 0.1j, -0.2 + 0.5j])
        via_rows = sum(f[n] * rows[n] @ sel.entries[:, n] for n in range(2))
        assert via_rows == pytest.approx(bob.effective_row(em, pol) @ f)

    def test_dense_budget(self):
        """Dense materialization beyond the size limit raises OracleBudgetError."""
        channel = CompoundChannel("target", 180, np.array([3]), np.ones((1, 8)), np.eye(2)[None])
        with pytest.raises(OracleBudgetError):
            channel.dense()

    def test_radar_matrix_only_for_radar_links(self, rng):
        """radar_matrix on a Bob link raises ChannelError."""
        bob = self._bob(rng)
        dictionary = build_dictionary(8, 1, 3)
        em = assemble_em_beamformer(dictionary, SelectionMatrix.one_hot([0, 0], dictionary.P))
        with pytest.raises(ChannelError):
            bob.radar_matrix(em, em)

    def test_eve_shares_target_geometry(self, tiny_channels):
        """Eve sits at the target: same angle index and spatial factor."""
        eve = eve_from_target(tiny_channels.target)
        np.testing.assert_array_equal(eve.angle_indices, tiny_channels.target.angle_indices)
        np.testing.assert_allclose(eve.spatial, tiny_channels.target.spatial)


class TestChannelSet:
    """Test full realizations."""

    def test_realization_counts(self, tiny_channels, tiny_config):
        """A realization holds K Bobs and C clutter links on one grid."""
        assert tiny_channels.K == tiny_config.K
        assert tiny_channels.C == tiny_config.C
        assert tiny_channels.N == tiny_config.N
        assert tiny_channels.M == tiny_config.M
        assert all(bob.L == tiny_config.L for bob in tiny_channels.bobs)

    def test_document_roundtrip(self, tiny_channels):
        """to_document/from_document reproduce the factors."""
        restored = ChannelSet.from_document(tiny_channels.to_document())
        np.testing.assert_allclose(restored.target.spatial, tiny_channels.target.spatial)
        np.testing.assert_allclose(restored.bobs[0].scattering, tiny_channels.bobs[0].scattering)
        assert restored.noise == tiny_channels.noise

    def test_path_loss_spec_amplitude(self):
        """PathLossSpec delegates to link_amplitude with its own parameters."""
        spec = PathLossSpec(kappa=2.0, c0_db=30.0, d0_m=1.0, mode="amplitude")
        assert spec.amplitude(10.0) == pytest.approx(1e-5)
