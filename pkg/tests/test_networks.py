import numpy as np
import pytest
import torch

from otenhance.networks import (
    CheckpointError,
    CriticSpec,
    EcaGate,
    FingerprintMismatch,
    GeneratorSpec,
    build_critic,
    build_generator,
    eca_kernel_size,
    load_parameters,
    parameter_count,
    save_parameters,
    spec_fingerprint,
)

import oracles

MICRO_GEN = GeneratorSpec(in_channels=1, base_channels=4, depth=1, residual_blocks=1)
MICRO_CRITIC = CriticSpec(in_channels=1, base_channels=4, conv_layers=2)


class TestGeneratorContract:
    def test_output_shape_and_range(self):
        gen = build_generator(GeneratorSpec(in_channels=1, base_channels=8, depth=2), rng=0)
        x = torch.rand(2, 1, 64, 64)
        with torch.no_grad():
            out = gen(x)
        assert out.shape == (2, 1, 64, 64)
        assert float(out.min()) >= 0.0 and float(out.max()) <= 1.0

    def test_identical_seed_builds_identical_parameters(self):
        a = build_generator(GeneratorSpec(), rng=7)
        b = build_generator(GeneratorSpec(), rng=7)
        for (na, pa), (nb, pb) in zip(a.state_dict().items(), b.state_dict().items()):
            assert na == nb
            assert torch.equal(pa, pb)

    def test_fresh_generator_is_identity(self, rng):
        gen = build_generator(MICRO_GEN, rng=3)
        x = torch.from_numpy(rng.random((2, 1, 16, 16)).astype(np.float32))
        with torch.no_grad():
            out = gen(x)
        assert float((out - x).abs().max()) < 1e-5

    def test_identity_holds_at_intensity_extremes(self):
        gen = build_generator(MICRO_GEN, rng=3)
        x = torch.zeros(1, 1, 16, 16)
        x[0, 0, :8] = 1.0
        with torch.no_grad():
            out = gen(x)
        assert float((out - x).abs().max()) < 1e-5

    def test_incompatible_input_side_rejected(self):
        gen = build_generator(GeneratorSpec(in_channels=1, depth=2), rng=0)
        with torch.no_grad():
            with pytest.raises(ValueError):
                gen(torch.rand(1, 1, 30, 30))

    def test_parameter_gradients_match_finite_differences(self, rng):
        gen = build_generator(MICRO_GEN, rng=1).double()
        assert parameter_count(gen) < 5000
        with torch.no_grad():
            for p in gen.parameters():  # move off the zero-init saddle
                p.add_(torch.empty_like(p).uniform_(-0.05, 0.05,
                       generator=torch.Generator().manual_seed(8)))
        x = torch.from_numpy(rng.random((2, 1, 8, 8)))

        def value():
            return gen(x).mean()

        analytic = torch.autograd.grad(value(), list(gen.parameters()))
        numeric = oracles.central_diff_params(value, list(gen.parameters()), step=1e-5)
        for a, n in zip(analytic, numeric):
            assert oracles.relative_error(n, a) < 1e-3

    def test_input_gradients_match_finite_differences(self, rng):
        gen = build_generator(MICRO_GEN, rng=2).double()
        x = torch.from_numpy(rng.random((1, 1, 8, 8)) * 0.8 + 0.1)
        xr = x.clone().requires_grad_(True)
        analytic = torch.autograd.grad(gen(xr).mean(), xr)[0]

        def value():
            return gen(x).mean()

        numeric = oracles.central_diff_params(value, [x], step=1e-6)
        assert oracles.relative_error(numeric[0], analytic) < 1e-3


class TestEcaGate:
    def test_kernel_size_rule(self):
        assert eca_kernel_size(4) == 1
        assert eca_kernel_size(16) == 3
        assert eca_kernel_size(64) == 3
        assert eca_kernel_size(256) == 5
        assert eca_kernel_size(2, gamma=1.0, beta=0.0) == 1

    def test_identical_channels_get_identical_gates(self):
        gate = EcaGate(8)
        x = torch.rand(2, 1, 6, 6).repeat(1, 8, 1, 1)
        out = gate(x)
        for c in range(1, 8):
            assert torch.allclose(out[:, 0], out[:, c])

    def test_zero_input_gives_zero_output(self):
        gate = EcaGate(16)
        out = gate(torch.zeros(3, 16, 5, 5))
        assert torch.equal(out, torch.zeros_like(out))

    @pytest.mark.parametrize("channels", [4, 16, 64])
    def test_shape_preserved(self, channels):
        gate = EcaGate(channels)
        x = torch.rand(2, channels, 7, 9)
        assert gate(x).shape == x.shape

    def test_input_gradients_match_finite_differences(self, rng):
        gate = EcaGate(4).double()
        with torch.no_grad():
            gate.conv.weight.uniform_(-0.5, 0.5, generator=torch.Generator().manual_seed(4))
        x = torch.from_numpy(rng.random((1, 4, 5, 5)))

        def value():
            return (gate(x) * torch.linspace(0.5, 1.5, 100, dtype=torch.float64)
                    .view(1, 4, 5, 5)).sum()

        xr = x.requires_grad_(True)
        analytic = torch.autograd.grad(
            (gate(xr) * torch.linspace(0.5, 1.5, 100, dtype=torch.float64).view(1, 4, 5, 5)).sum(),
            xr,
        )[0]
        numeric = oracles.central_diff_params(value, [x.detach()], step=1e-6)
        assert oracles.relative_error(numeric[0], analytic) < 1e-3

    def test_disabled_gates_reduce_to_plain_residual_network(self, rng):
        spec_gated = GeneratorSpec(in_channels=1, base_channels=8, depth=1,
                                   residual_blocks=2, eca_enabled=True)
        spec_plain = GeneratorSpec(in_channels=1, base_channels=8, depth=1,
                                   residual_blocks=2, eca_enabled=False)
        gated = build_generator(spec_gated, rng=5)
        plain = build_generator(spec_plain, rng=5)
        for module in gated.modules():
            if isinstance(module, EcaGate):
                module.force_identity = True
        x = torch.from_numpy(rng.random((2, 1, 16, 16)).astype(np.float32))
        with torch.no_grad():
            assert torch.equal(gated(x), plain(x))


class TestCriticContract:
    def test_scalar_per_image(self):
        critic = build_critic(CriticSpec(in_channels=3), rng=0)
        scores = critic(torch.rand(7, 3, 64, 64))
        assert scores.shape == (7,)

    def test_duplicated_sample_scores_identically(self):
        critic = build_critic(MICRO_CRITIC, rng=1)
        x = torch.rand(1, 1, 16, 16)
        batch = torch.cat([x, torch.rand(2, 1, 16, 16), x], dim=0)
        scores = critic(batch)
        assert torch.equal(scores[0], scores[3])

    def test_batch_permutation_equivariance(self, rng):
        critic = build_critic(MICRO_CRITIC, rng=2)
        batch = torch.from_numpy(rng.random((5, 1, 16, 16)).astype(np.float32))
        perm = torch.tensor([3, 0, 4, 1, 2])
        assert torch.allclose(critic(batch)[perm], critic(batch[perm]))

    def test_input_gradients_match_finite_differences(self, rng):
        critic = build_critic(MICRO_CRITIC, rng=3).double()
        assert parameter_count(critic) < 5000
        x = torch.from_numpy(rng.random((2, 1, 8, 8)))

        def value():
            return critic(x).sum()

        xr = x.requires_grad_(True)
        analytic = torch.autograd.grad(critic(xr).sum(), xr)[0]
        numeric = oracles.central_diff_params(value, [x.detach()], step=1e-6)
        assert oracles.relative_error(numeric[0], analytic) < 1e-3

    def test_parameter_gradients_match_finite_differences(self, rng):
        critic = build_critic(MICRO_CRITIC, rng=4).double()
        x = torch.from_numpy(rng.random((2, 1, 8, 8)))

        def value():
            return critic(x).sum()

        analytic = torch.autograd.grad(value(), list(critic.parameters()))
        numeric = oracles.central_diff_params(value, list(critic.parameters()), step=1e-5)
        for a, n in zip(analytic, numeric):
            assert oracles.relative_error(n, a) < 1e-3


class TestParameterIo:
    def test_round_trip_is_bitwise(self, tmp_path):
        net = build_critic(MICRO_CRITIC, rng=5)
        path = tmp_path / "critic.npz"
        save_parameters(net, MICRO_CRITIC, path)
        clone = build_critic(MICRO_CRITIC, rng=99)
        load_parameters(path, MICRO_CRITIC, clone)
        for a, b in zip(net.state_dict().values(), clone.state_dict().values()):
            assert torch.equal(a, b)

    def test_wrong_spec_is_a_fingerprint_error(self, tmp_path):
        net = build_critic(MICRO_CRITIC, rng=5)
        path = tmp_path / "critic.npz"
        save_parameters(net, MICRO_CRITIC, path)
        other = CriticSpec(in_channels=1, base_channels=8, conv_layers=2)
        with pytest.raises(FingerprintMismatch):
            load_parameters(path, other, build_critic(other, rng=0))

    def test_truncated_file_rejected(self, tmp_path):
        net = build_critic(MICRO_CRITIC, rng=5)
        path = tmp_path / "critic.npz"
        save_parameters(net, MICRO_CRITIC, path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 3])
        with pytest.raises(CheckpointError):
            load_parameters(path, MICRO_CRITIC, build_critic(MICRO_CRITIC, rng=0))

    def test_checksum_recorded_and_verifiable(self, tmp_path):
        import hashlib
        import json

        net = build_generator(MICRO_GEN, rng=6)
        path = tmp_path / "gen.npz"
        reported = save_parameters(net, MICRO_GEN, path)
        with np.load(path) as data:
            meta = json.loads(bytes(data["__meta__"]).decode())
            digest = hashlib.sha256()
            arrays = {k: data[k] for k in data.files if k != "__meta__"}
            for name in sorted(arrays):
                digest.update(name.encode())
                digest.update(np.ascontiguousarray(arrays[name]).tobytes())
        assert meta["checksum"] == reported == digest.hexdigest()

    def test_fingerprint_depends_on_fields(self):
        assert spec_fingerprint(MICRO_GEN) != spec_fingerprint(GeneratorSpec())
        assert spec_fingerprint(MICRO_GEN) == spec_fingerprint(
            GeneratorSpec(in_channels=1, base_channels=4, depth=1, residual_blocks=1)
        )

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            GeneratorSpec(depth=0)
        with pytest.raises(ValueError):
            GeneratorSpec(base_channels=2)
        with pytest.raises(ValueError):
            CriticSpec(conv_layers=1)
