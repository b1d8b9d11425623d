import math

import numpy as np
import pytest

from bb84lab import channels as ch
from bb84lab import protocol as proto
from bb84lab import security as sec
from bb84lab.linalg import DimensionError
from bb84lab.protocol import (ChannelAttack, InterceptResend, MemoryAttack,
                              ProtocolConfig, exact_detection_probability, run_protocol)
from bb84lab.spiders import standard_pair


def three_sigma(p, n):
    return 3 * math.sqrt(p * (1 - p) / n)


def identity_memory(d=2, de=2):
    rho0 = np.zeros((de, de))
    rho0[0, 0] = 1
    return MemoryAttack(ch.identity((d, de)), rho0, d)


class TestConfig:
    def test_rounds_is_four_times_key(self):
        assert ProtocolConfig(target_key_bits=10).rounds == 40

    @pytest.mark.parametrize("kwargs", [dict(dim=1), dict(target_key_bits=0),
                                        dict(check_fraction=1.5), dict(seed=-1)])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            ProtocolConfig(**kwargs)

    def test_unknown_policy(self):
        with pytest.raises(ValueError):
            InterceptResend("sometimes")


class TestRandomness:
    def test_chunks_match_whole(self):
        whole = proto.round_uniforms(5, 0, 100)
        parts = np.concatenate([proto.round_uniforms(5, a, a + 25) for a in range(0, 100, 25)])
        np.testing.assert_array_equal(whole, parts)

    def test_odd_offsets(self):
        whole = proto.round_uniforms(9, 0, 10)
        np.testing.assert_array_equal(proto.round_uniforms(9, 3, 7), whole[3:7])

    def test_seeds_differ(self):
        assert not np.array_equal(proto.round_uniforms(1, 0, 5), proto.round_uniforms(2, 0, 5))

    def test_check_bits_are_a_seeded_subset(self):
        idx = np.arange(0, 200, 3)
        a = proto.select_check_bits(4, idx, 0.5)
        b = proto.select_check_bits(4, idx, 0.5)
        np.testing.assert_array_equal(a, b)
        assert len(a) == len(idx) // 2
        assert set(a) <= set(idx)
        assert len(set(a)) == len(a)

    def test_run_is_deterministic(self):
        cfg = ProtocolConfig(target_key_bits=200, seed=17)
        r1 = run_protocol(cfg, InterceptResend())
        r2 = run_protocol(cfg, InterceptResend())
        assert r1.to_dict() == r2.to_dict()


class TestHonestRun:
    @pytest.mark.parametrize("d", [2, 3])
    def test_keys_agree(self, d):
        run = run_protocol(ProtocolConfig(dim=d, target_key_bits=500, seed=1))
        assert run.qber_estimate == 0.0
        assert not run.aborted
        np.testing.assert_array_equal(run.final_key_alice, run.final_key_bob)
        assert len(run.final_key_alice) == run.n_sifted - run.n_check

    def test_sift_rate(self):
        run = run_protocol(ProtocolConfig(target_key_bits=10_000, seed=3))
        n = run.config.rounds
        assert abs(run.n_sifted / n - 0.5) <= three_sigma(0.5, n)

    def test_summary_fields(self):
        s = run_protocol(ProtocolConfig(target_key_bits=16)).summary()
        assert list(s) == ["seed", "dim", "rounds", "sifted", "qber", "aborted", "key_len"]

    def test_zero_check_fraction(self):
        run = run_protocol(ProtocolConfig(target_key_bits=16, check_fraction=0.0))
        assert run.n_check == 0 and run.qber_estimate == 0.0


class TestInterceptResend:
    @pytest.mark.parametrize("policy", ["always-Z", "always-X", "uniform-random"])
    @pytest.mark.parametrize("d", [2, 3, 4])
    def test_exact_mismatch(self, policy, d):
        # a wrong-basis guess happens on half the sifted rounds and then
        # Bob's value is uniform: mismatch (D - 1) / D there
        p = exact_detection_probability(ProtocolConfig(dim=d), InterceptResend(policy))
        assert p == pytest.approx((d - 1) / (2 * d), abs=1e-12)

    @pytest.mark.parametrize("policy", ["always-Z", "uniform-random"])
    def test_simulated_qber(self, policy):
        cfg = ProtocolConfig(target_key_bits=20_000, seed=11, abort_threshold=1.0)
        run = run_protocol(cfg, InterceptResend(policy))
        exact = exact_detection_probability(cfg, InterceptResend(policy))
        assert abs(run.qber_estimate - exact) <= three_sigma(exact, run.n_check)
        assert not run.aborted

    def test_always_z_errors_only_on_x_rounds(self):
        run = run_protocol(ProtocolConfig(target_key_bits=2000, seed=2), InterceptResend("always-Z"))
        z_sifted = run.sifted & (run.alice_basis == 0)
        np.testing.assert_array_equal(run.alice_bit[z_sifted], run.bob_bit[z_sifted])
        np.testing.assert_array_equal(run.eve_outcome[z_sifted], run.alice_bit[z_sifted])

    def test_abort_empties_keys(self):
        run = run_protocol(ProtocolConfig(target_key_bits=500, seed=2), InterceptResend())
        assert run.aborted
        assert len(run.final_key_alice) == 0 == len(run.final_key_bob)


class TestChannelAttacks:
    def test_separable_channel_is_invisible(self, rng):
        from bb84lab.randomness import random_density_matrix
        phi = sec.separable_channel(random_density_matrix(3, rng), 2)
        cfg = ProtocolConfig(target_key_bits=1000, seed=4)
        run = run_protocol(cfg, ChannelAttack(phi))
        assert run.qber_estimate == 0.0
        assert exact_detection_probability(cfg, ChannelAttack(phi)) == pytest.approx(0, abs=1e-12)

    def test_nondemolition_attack_matches_intercept_resend(self):
        cfg = ProtocolConfig(target_key_bits=20_000, seed=5, abort_threshold=1.0)
        attack = ChannelAttack(sec.z_attack(standard_pair(2).white))
        assert exact_detection_probability(cfg, attack) == pytest.approx(0.25, abs=1e-12)
        run = run_protocol(cfg, attack)
        assert abs(run.qber_estimate - 0.25) <= three_sigma(0.25, run.n_check)
        z = run.alice_basis == 0
        np.testing.assert_array_equal(run.eve_outcome[z], run.alice_bit[z])

    def test_wiretap_exact(self):
        # with probability t Bob receives I/2: mismatch t/2
        cfg = ProtocolConfig()
        p = exact_detection_probability(cfg, ChannelAttack(sec.wiretap(2, 0.3)))
        assert p == pytest.approx(0.15, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            run_protocol(ProtocolConfig(dim=3), ChannelAttack(sec.z_attack(standard_pair(2).white)))

    def test_non_trace_preserving_rejected(self):
        with pytest.raises(ValueError):
            ChannelAttack(ch.Channel.from_kraus([0.5 * np.eye(4)[:, :2]], (2,), (2, 2)))


class TestMemoryAttacks:
    def test_identity_memory_is_invisible(self):
        run = run_protocol(ProtocolConfig(target_key_bits=300, seed=6), identity_memory())
        assert run.qber_estimate == 0.0

    def test_controlled_swap_delays_by_one_round(self):
        # the stored copy goes out next round, so Bob sees an unrelated state
        cfg = ProtocolConfig(target_key_bits=3000, seed=7, abort_threshold=1.0)
        run = run_protocol(cfg, sec.controlled_swap_memory())
        assert abs(run.qber_estimate - 0.5) <= three_sigma(0.5, run.n_check)
        z_next = (run.alice_basis[1:] == 0) & (run.bob_basis[1:] == 0) & (run.alice_basis[:-1] == 0)
        np.testing.assert_array_equal(run.bob_bit[1:][z_next], run.alice_bit[:-1][z_next])

    def test_exact_probability_unavailable(self):
        with pytest.raises(TypeError):
            exact_detection_probability(ProtocolConfig(), identity_memory())

    def test_bad_memory_dimensions(self):
        with pytest.raises(DimensionError):
            MemoryAttack(ch.identity((2, 2)), np.eye(3) / 3, 2)

    def test_unrolled_identity(self, rng):
        from bb84lab.randomness import random_density_matrix
        attack = identity_memory(2, 2)
        u = proto.memory_unrolled_channel(attack, 3)
        assert u.out_shape == (2, 2, 2, 2)
        rho = random_density_matrix(8, rng)
        np.testing.assert_allclose(ch.apply(u, rho), np.kron(rho, attack.rho0), atol=1e-12)

    def test_unrolled_local_unitary_precesses(self):
        x = np.array([[0, 1], [1, 0]])
        attack = sec.local_unitary_memory(2, 2, x)
        u = proto.memory_unrolled_channel(attack, 2)
        out = ch.apply(u, np.eye(4) / 4)
        # two flips bring |0> back
        np.testing.assert_allclose(out, np.kron(np.eye(4) / 4, np.diag([1, 0])), atol=1e-12)

    def test_size_guard(self):
        with pytest.raises(ValueError):
            proto.memory_unrolled_channel(identity_memory(2, 4), 7)
