"""
Unit tests for the three generator families

Tests layer shapes, output ranges, noise injection, batch-norm modes,
coupling masks and the flow's bijectivity and log-determinants.
"""
import math
import os
import sys

import pytest
import torch

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'src'))

from geogan.errors import InvalidArgumentError, NumericalOverflowError, ShapeError
from geogan.models import (
    ArchConfig,
    BNMode,
    MaskKind,
    NoiseMode,
    NoiseSpec,
    Parity,
    Variant,
    default_couplings,
    discriminate,
    discriminator_direct_forward,
    discriminator_enc_forward,
    encoder_forward,
    flow_log_likelihood,
    generate,
    generate_inverse,
    generator_direct_forward,
    generator_enc_forward,
    init_params,
    inject_noise,
    layer_shapes,
    make_mask,
    nvp_forward,
    nvp_inverse,
)


def small(variant: Variant, size: int = 16, divisor: int = 16, **kwargs) -> ArchConfig:
    return ArchConfig(variant=variant, image_size=size, **kwargs).scaled(divisor)


def images(n: int, size: int, seed: int = 0, dtype=torch.float32) -> torch.Tensor:
    g = torch.Generator().manual_seed(seed)
    return (torch.rand((n, size, size, 3), generator=g, dtype=torch.float64) * 1.8 - 0.9).to(dtype)


def zero_flow_nets(params):
    for name, value in params.items():
        if "/fc2/" in name:
            with torch.no_grad():
                value.zero_()
    return params


class TestEncoderGan:
    """Test suite for the encoder-conditioned GAN"""

    def setup_method(self):
        """Setup for each test"""
        self.config = small(Variant.ENCODER_GAN)
        self.params = init_params(self.config, seed=0)

    def test_native_embedding_shape(self):
        """Test 1x64x64x3 -> 1x1x1x512 at the default widths"""
        config = ArchConfig(variant=Variant.ENCODER_GAN)
        params = init_params(config, seed=0)
        trace = []
        with torch.no_grad():
            out = encoder_forward(params, images(1, 64), config, trace=trace)
        assert out.shape == (1, 1, 1, 512)
        assert [shape for _, shape in trace] == [
            (1, 32, 32, 1024), (1, 16, 16, 512), (1, 8, 8, 256), (1, 4, 4, 128), (1, 1, 1, 512)
        ]

    def test_native_generator_shapes(self):
        """Test the 4 -> 8 -> 16 -> 32 -> 64 transposed-conv chain"""
        config = ArchConfig(variant=Variant.ENCODER_GAN)
        params = init_params(config, seed=0)
        trace = []
        with torch.no_grad():
            out = generator_enc_forward(params, torch.randn(1, 512), config, trace=trace)
        assert out.shape == (1, 64, 64, 3)
        assert [shape for _, shape in trace] == [
            (1, 4, 4, 1024), (1, 8, 8, 512), (1, 16, 16, 128), (1, 32, 32, 32), (1, 64, 64, 3)
        ]

    def test_batch_independence(self):
        """Test that inference outputs do not depend on batch companions"""
        sat = images(16, 16, seed=1)
        with torch.no_grad():
            batch = encoder_forward(self.params, sat, self.config, BNMode.EVAL)
            single = encoder_forward(self.params, sat[3:4], self.config, BNMode.EVAL)
        assert batch.shape == (16, 1, 1, self.config.embed_dim)
        assert torch.allclose(batch[3:4], single, atol=1e-6)

    def test_deterministic(self):
        """Test that the same seed and input give bit-identical embeddings"""
        other = init_params(self.config, seed=0)
        sat = images(2, 16)
        with torch.no_grad():
            assert torch.equal(encoder_forward(self.params, sat, self.config),
                               encoder_forward(other, sat, self.config))

    def test_wrong_input_shape(self):
        """Test that a mis-sized tile names the input layer"""
        with pytest.raises(ShapeError) as info:
            encoder_forward(self.params, images(1, 8), self.config)
        assert info.value.layer == "encoder/input"

    def test_train_mode_updates_running_stats(self):
        """Test TRAIN versus FROZEN batch-norm behaviour"""
        key = "encoder/head/bn/running_mean"
        before = self.params[key].clone()
        encoder_forward(self.params, images(4, 16), self.config, BNMode.FROZEN)
        assert torch.equal(self.params[key], before)
        encoder_forward(self.params, images(4, 16), self.config, BNMode.TRAIN)
        assert not torch.equal(self.params[key], before)

    def test_generator_range_and_finiteness(self):
        """Test 100 random latents give finite maps strictly inside (-1, 1)"""
        g = torch.Generator().manual_seed(3)
        latent = torch.randn((100, self.config.latent_dim), generator=g)
        with torch.no_grad():
            out = generator_enc_forward(self.params, latent, self.config)
        assert out.shape == (100, 16, 16, 3)
        assert torch.isfinite(out).all()
        assert out.abs().max() < 1.0

    def test_zero_latent_deterministic(self):
        """Test that a zero latent gives the same map twice"""
        zero = torch.zeros(2, self.config.latent_dim)
        with torch.no_grad():
            assert torch.equal(generator_enc_forward(self.params, zero, self.config),
                               generator_enc_forward(self.params, zero, self.config))

    def test_generator_latent_mismatch(self):
        """Test that a latent of the wrong length is rejected"""
        with pytest.raises(ShapeError):
            generator_enc_forward(self.params, torch.zeros(1, self.config.latent_dim + 1), self.config)

    def test_discriminator_range_and_batch(self):
        """Test 8 probabilities strictly inside (0, 1)"""
        sat, maps = images(8, 16, 1), images(8, 16, 2)
        with torch.no_grad():
            cond = encoder_forward(self.params, sat, self.config)
            p = discriminator_enc_forward(self.params, maps, cond, self.config)
        assert p.shape == (8,)
        assert ((p > 0) & (p < 1)).all()

    def test_discriminator_permutation(self):
        """Test that permuting the batch permutes the outputs"""
        sat, maps = images(6, 16, 1), images(6, 16, 2)
        perm = torch.tensor([5, 2, 0, 4, 1, 3])
        with torch.no_grad():
            p = discriminate(self.params, sat, maps, self.config)
            q = discriminate(self.params, sat[perm], maps[perm], self.config)
        assert torch.allclose(p[perm], q, atol=1e-6)

    def test_discriminator_embedding_mismatch(self):
        """Test an embedding of the wrong width"""
        cond = torch.zeros(2, 1, 1, self.config.embed_dim + 3)
        with pytest.raises(ShapeError):
            discriminator_enc_forward(self.params, images(2, 16), cond, self.config)

    def test_separate_encoder(self):
        """Test that an unshared discriminator encoder owns its own tensors"""
        config = small(Variant.ENCODER_GAN, shared_encoder=False)
        params = init_params(config, seed=0)
        assert any(k.startswith("disc_encoder/") for k in params)
        with torch.no_grad():
            p = discriminate(params, images(2, 16), images(2, 16, 5), config)
        assert p.shape == (2,)


class TestNoise:
    """Test suite for inject_noise"""

    def test_append_length(self):
        """Test APPEND with a 512 embedding and 100 noise values"""
        spec = NoiseSpec(mode=NoiseMode.APPEND, dim=100, fraction=0.1)
        latent = inject_noise(torch.randn(3, 1, 1, 512), spec)
        assert latent.shape == (3, 612)

    def test_append_requires_dim(self):
        """Test that APPEND with dim 0 is rejected"""
        with pytest.raises(InvalidArgumentError):
            NoiseSpec(mode=NoiseMode.APPEND, dim=0)

    def test_add_zero_fraction(self):
        """Test that 0% additive noise leaves the embedding unchanged"""
        embed = torch.randn(4, 1, 1, 32)
        latent = inject_noise(embed, NoiseSpec(mode=NoiseMode.ADD, fraction=0.0))
        assert torch.equal(latent, embed.reshape(4, 32))

    def test_none_passthrough(self):
        """Test NONE mode"""
        embed = torch.randn(2, 1, 1, 8)
        assert torch.equal(inject_noise(embed, NoiseSpec()), embed.reshape(2, 8))

    def test_add_noise_is_centered(self):
        """Test the sample mean of the additive term over 10^4 draws"""
        spec = NoiseSpec(mode=NoiseMode.ADD, fraction=0.5, relative=False)
        embed = torch.ones(10_000, 4, dtype=torch.float64)
        g = torch.Generator().manual_seed(11)
        diff = inject_noise(embed, spec, g) - embed
        sigma = 0.5
        assert (diff.mean(dim=0).abs() < 3 * sigma / math.sqrt(10_000)).all()
        assert diff.std(dim=0).sub(sigma).abs().max() < 0.05

    def test_relative_scale(self):
        """Test that relative noise scales with the embedding RMS"""
        spec = NoiseSpec(mode=NoiseMode.ADD, fraction=0.1)
        g = torch.Generator().manual_seed(0)
        unit = inject_noise(torch.ones(1, 64, dtype=torch.float64), spec, g) - 1.0
        g = torch.Generator().manual_seed(0)
        big = inject_noise(torch.full((1, 64), 10.0, dtype=torch.float64), spec, g) - 10.0
        assert torch.allclose(big, 10.0 * unit)


class TestDirectGan:
    """Test suite for the encoder-free generator and its discriminator"""

    def setup_method(self):
        """Setup for each test"""
        self.config = small(Variant.DIRECT_GAN, divisor=10)
        self.params = init_params(self.config, seed=0)

    def test_first_block_channels(self):
        """Test that the first dual-kernel block outputs 2n = 600 channels"""
        config = ArchConfig(variant=Variant.DIRECT_GAN, image_size=16)
        params = init_params(config, seed=0)
        trace = []
        with torch.no_grad():
            out = generator_direct_forward(params, images(1, 16), config, trace=trace)
        channels = [shape[-1] for _, shape in trace]
        assert channels == [600, 300, 120, 40, 3]
        assert out.shape == (1, 16, 16, 3)

    def test_native_discriminator_table(self):
        """Test five stride-2 stages from 256 down to 8"""
        config = ArchConfig(variant=Variant.DIRECT_GAN)
        assert config.image_size == 256
        assert config.direct_disc_table() == [128, 256, 512, 768, 1024]

    def test_output_range(self):
        """Test shape preservation and the tanh range"""
        with torch.no_grad():
            out = generator_direct_forward(self.params, images(2, 16), self.config)
        assert out.shape == (2, 16, 16, 3)
        assert out.abs().max() < 1.0

    def test_zero_input_constant_output(self):
        """Test that a zero tile maps to tanh of the output bias everywhere"""
        bias = torch.tensor([0.1, -0.2, 0.3])
        with torch.no_grad():
            self.params["generator/out/bias"].copy_(bias)
            out = generator_direct_forward(self.params, torch.zeros(1, 16, 16, 3), self.config)
        expected = torch.tanh(bias).expand(1, 16, 16, 3)
        assert torch.allclose(out, expected, atol=1e-7)

    def test_discriminator_sees_six_channels(self):
        """Test the satellite/map channel concatenation"""
        trace = []
        with torch.no_grad():
            p = discriminator_direct_forward(self.params, images(2, 16), images(2, 16, 1),
                                             self.config, trace=trace)
        assert trace[0] == ("discriminator/concat", (2, 16, 16, 6))
        assert ((p > 0) & (p < 1)).all()

    def test_discriminator_sensitive_to_map(self):
        """Test that a different map changes the score"""
        params = init_params(self.config.scaled(1, init_std=0.1), seed=4)
        sat = images(3, 16, 1)
        with torch.no_grad():
            a = discriminator_direct_forward(params, sat, images(3, 16, 2), self.config)
            b = discriminator_direct_forward(params, sat, images(3, 16, 3), self.config)
        assert not torch.allclose(a, b)

    def test_misaligned(self):
        """Test that sat and map must have the same shape"""
        with pytest.raises(ShapeError):
            discriminator_direct_forward(self.params, images(2, 16), images(3, 16), self.config)

    def test_no_inverse(self):
        """Test that only flows can be inverted"""
        with pytest.raises(InvalidArgumentError):
            generate_inverse(self.params, images(1, 16), self.config)


class TestMasks:
    """Test suite for coupling masks"""

    def test_checkerboard_even(self):
        """Test the 2x2 even checkerboard"""
        mask = make_mask(MaskKind.CHECKERBOARD, Parity.EVEN, 2, 2, 3)
        expected = torch.tensor([[1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
        for c in range(3):
            assert torch.equal(mask[:, :, c], expected)

    def test_complements(self):
        """Test that opposite parities sum to all ones"""
        for kind in (MaskKind.CHECKERBOARD, MaskKind.CHANNEL):
            even = make_mask(kind, Parity.EVEN, 5, 4, 3)
            odd = make_mask(kind, Parity.ODD, 5, 4, 3)
            assert torch.equal(even + odd, torch.ones(5, 4, 3, dtype=torch.float64))

    def test_checkerboard_count(self):
        """Test ceil(HW / 2) kept positions for even parity"""
        for h, w in [(2, 2), (3, 5), (7, 7), (8, 3)]:
            mask = make_mask(MaskKind.CHECKERBOARD, Parity.EVEN, h, w, 1)
            assert int(mask.sum()) == math.ceil(h * w / 2)

    def test_channel_split(self):
        """Test that EVEN keeps the first ceil(C/2) channels"""
        mask = make_mask(MaskKind.CHANNEL, Parity.EVEN, 2, 2, 3)
        assert mask[0, 0].tolist() == [1.0, 1.0, 0.0]

    def test_stack_transforms_every_coordinate(self):
        """Test that the product of (1 - m) over the default stack is zero"""
        config = small(Variant.FLOW_GAN, size=8)
        product = torch.ones(config.flat_dim, dtype=torch.float64)
        for layer in default_couplings({}, config):
            product = product * (1 - layer.mask)
        assert torch.count_nonzero(product) == 0

    def test_invalid_dims(self):
        """Test that empty masks are rejected"""
        with pytest.raises(InvalidArgumentError):
            make_mask(MaskKind.CHECKERBOARD, Parity.EVEN, 0, 2, 3)


class TestFlow:
    """Test suite for the RealNVP flow generator"""

    def setup_method(self):
        """Setup for each test"""
        self.config = small(Variant.FLOW_GAN, size=8)
        self.params = init_params(self.config, seed=0, dtype=torch.float64)
        self.z = torch.randn(4, 8, 8, 3, generator=torch.Generator().manual_seed(2), dtype=torch.float64)

    def test_zero_nets_identity(self):
        """Test that zero scale and shift nets make the flow the identity"""
        params = zero_flow_nets(self.params)
        with torch.no_grad():
            x, log_det = nvp_forward(default_couplings(params, self.config), self.z)
        assert torch.equal(x, self.z)
        assert torch.equal(log_det, torch.zeros(4, dtype=torch.float64))

    def seeded(self, seed: int):
        params = init_params(self.config, seed=seed, dtype=torch.float64)
        z = torch.randn(4, 8, 8, 3, generator=torch.Generator().manual_seed(1000 + seed), dtype=torch.float64)
        return default_couplings(params, self.config), z

    @pytest.mark.parametrize("seed", range(100))
    def test_bijection(self, seed):
        """Test inverse(forward(z)) == z at 64-bit precision"""
        layers, z = self.seeded(seed)
        with torch.no_grad():
            x, _ = nvp_forward(layers, z)
            back, _ = nvp_inverse(layers, x)
        assert (back - z).abs().max() < 1e-5

    @pytest.mark.parametrize("seed", range(100))
    def test_log_det_consistency(self, seed):
        """Test that forward and inverse log-determinants cancel"""
        layers, z = self.seeded(seed)
        with torch.no_grad():
            x, ld_fwd = nvp_forward(layers, z)
            _, ld_inv = nvp_inverse(layers, x)
        assert (ld_fwd + ld_inv).abs().max() < 1e-8

    def test_outputs_finite_over_random_inputs(self):
        """Test 100 random tiles of varying contrast through both generator directions"""
        g = torch.Generator().manual_seed(11)
        for _ in range(100):
            spread = 0.1 + 5.0 * float(torch.rand(1, generator=g, dtype=torch.float64))
            sat = torch.tanh(spread * torch.randn(2, 8, 8, 3, generator=g, dtype=torch.float64))
            with torch.no_grad():
                fake = generate(self.params, sat, self.config, generator=g).fake
                back = generate_inverse(self.params, fake, self.config)
                ll = flow_log_likelihood(self.params, fake, self.config)
            assert torch.isfinite(fake).all() and fake.abs().max() <= 1.0
            assert torch.isfinite(back).all()
            assert torch.isfinite(ll).all()

    def test_each_layer_alone(self):
        """Test bijectivity and log-det consistency per coupling"""
        flat = self.z.reshape(4, -1)
        with torch.no_grad():
            for layer in default_couplings(self.params, self.config):
                y, ld = layer.forward(flat)
                u, ld_inv = layer.inverse(y)
                assert (u - flat).abs().max() < 1e-10
                assert (ld + ld_inv).abs().max() < 1e-10
                assert not torch.equal(y, flat)

    def test_generator_roundtrip(self):
        """Test that the inverse generator recovers the satellite tile"""
        sat = images(3, 8, dtype=torch.float64)
        with torch.no_grad():
            fake = generate(self.params, sat, self.config).fake
            back = generate_inverse(self.params, fake, self.config)
        assert fake.shape == sat.shape
        assert (back - sat).abs().max() < 1e-6

    def test_overflow_detected(self):
        """Test that an unbounded exploding scale raises"""
        config = small(Variant.FLOW_GAN, size=8, flow_bounded_scale=False)
        params = init_params(config, seed=0, dtype=torch.float64)
        with torch.no_grad():
            params["flow/coupling0/scale/fc2/bias"].fill_(1000.0)
        with pytest.raises(NumericalOverflowError):
            nvp_forward(default_couplings(params, config), self.z)

    def test_bidirectional_discriminators(self):
        """Test that a bidirectional flow owns an inverse-direction discriminator"""
        assert any(k.startswith("discriminator_inv/") for k in self.params)
        one_way = small(Variant.FLOW_GAN, size=8, flow_bidirectional=False)
        assert not any(k.startswith("discriminator_inv/") for k in layer_shapes(one_way))

    def test_log_likelihood_of_identity_flow(self):
        """Test the standard-normal density of a zero map under an identity flow"""
        params = zero_flow_nets(self.params)
        zero = torch.zeros(2, 8, 8, 3, dtype=torch.float64)
        with torch.no_grad():
            ll = flow_log_likelihood(params, zero, self.config)
        expected = torch.full((2,), -0.5 * math.log(2 * math.pi), dtype=torch.float64)
        torch.testing.assert_close(ll, expected, atol=1e-12, rtol=0)

    def test_log_likelihood_finite(self):
        """Test finiteness near the ends of the tanh range"""
        edge = torch.full((1, 8, 8, 3), 0.999999, dtype=torch.float64)
        with torch.no_grad():
            ll = flow_log_likelihood(self.params, edge, self.config)
        assert torch.isfinite(ll).all()


class TestInitParams:
    """Test suite for parameter initialization"""

    def test_same_seed(self):
        """Test bit-identical parameter sets for one seed"""
        config = small(Variant.ENCODER_GAN)
        assert init_params(config, seed=7).equal(init_params(config, seed=7))

    def test_different_seed(self):
        """Test that another seed changes at least one tensor"""
        config = small(Variant.DIRECT_GAN)
        assert not init_params(config, seed=1).equal(init_params(config, seed=2))

    def test_encoder_head_width(self):
        """Test that the encoder head produces 512 channels by default"""
        shapes = layer_shapes(ArchConfig(variant=Variant.ENCODER_GAN))
        assert shapes["encoder/head/kernel"] == (512, 128, 4, 4)

    def test_batch_norm_identity(self):
        """Test scale 1, shift 0 and identity running statistics"""
        params = init_params(small(Variant.FLOW_GAN, size=8), seed=0)
        for name, value in params.items():
            leaf = name.rsplit("/", 1)[-1]
            if leaf in ("scale", "running_var") and "/bn" in name:
                assert torch.equal(value, torch.ones_like(value))
            if leaf in ("shift", "running_mean"):
                assert torch.equal(value, torch.zeros_like(value))

    def test_no_bias_before_batch_norm(self):
        """Test that layers feeding batch norm have no bias"""
        shapes = layer_shapes(small(Variant.FLOW_GAN, size=8))
        assert "flow/coupling0/scale/fc0/bias" not in shapes
        assert "flow/coupling0/scale/fc1/bias" not in shapes
        assert "flow/coupling0/scale/fc2/bias" in shapes
        assert "encoder/head/bias" not in layer_shapes(small(Variant.ENCODER_GAN))

    def test_kernels_truncated(self):
        """Test that kernels stay within two standard deviations"""
        config = small(Variant.ENCODER_GAN)
        for name, value in init_params(config, seed=0).items():
            if name.endswith("/kernel"):
                assert value.abs().max() <= 2 * config.init_std + 1e-7

    def test_image_size_validation(self):
        """Test that each variant bounds its image size"""
        with pytest.raises(InvalidArgumentError):
            ArchConfig(variant=Variant.ENCODER_GAN, image_size=128)
        with pytest.raises(InvalidArgumentError):
            ArchConfig(variant=Variant.DIRECT_GAN, image_size=48)
        with pytest.raises(InvalidArgumentError):
            ArchConfig(variant=Variant.FLOW_GAN, noise=NoiseSpec(mode=NoiseMode.APPEND, dim=4))

    def test_config_dict_roundtrip(self):
        """Test that to_dict / from_dict reproduce the config"""
        config = small(Variant.ENCODER_GAN, noise=NoiseSpec(mode=NoiseMode.APPEND, dim=64, fraction=0.1))
        assert ArchConfig.from_dict(config.to_dict()) == config
