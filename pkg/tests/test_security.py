import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bb84lab import channels as ch
from bb84lab import linalg
from bb84lab import security as sec
from bb84lab.channels import Channel
from bb84lab.randomness import haar_unitary, random_density_matrix, random_kraus
from bb84lab.spiders import standard_pair

PAIR = standard_pair(2)


def worst_error_oracle(phi, basis):
    """``max_i P(Bob reads j != i | Alice sent b_i)`` from density matrices alone."""
    d = phi.in_dim
    de = phi.out_dim // d
    worst = 0.0
    for i in range(d):
        bob = linalg.partial_trace(ch.apply(phi, basis.projector(i)), (d, de), [1])
        worst = max(worst, 1.0 - float(np.real(basis.vector(i).conj().T @ bob @ basis.vector(i))[0, 0]))
    return worst


def random_attack(d, de, rank, seed):
    rng = np.random.default_rng(seed)
    return Channel.from_kraus(random_kraus(d, d * de, rank, rng), (d,), (d, de))


def local_unitary_separable(d, de, rng):
    """``id (x) rho`` with Kraus operators scrambled by a unitary on ``E``."""
    rho = random_density_matrix(de, rng)
    base = sec.separable_channel(rho, d)
    u = np.kron(np.eye(d), haar_unitary(de, rng))
    return Channel(tuple(u @ k for k in base.kraus), base.inputs, base.outputs)


class TestPresets:
    def test_z_attack_action(self):
        out = ch.apply(sec.z_attack(PAIR.white), np.full((2, 2), 0.5))
        np.testing.assert_allclose(out, np.diag([0.5, 0, 0, 0.5]), atol=1e-15)

    @pytest.mark.parametrize("t", [0.0, 0.3, 1.0])
    def test_wiretap_marginals(self, t, rng):
        rho = random_density_matrix(2, rng)
        out = ch.apply(sec.wiretap(2, t), rho)
        np.testing.assert_allclose(linalg.partial_trace(out, (2, 2), [1]),
                                   (1 - t) * rho + t * np.eye(2) / 2, atol=1e-12)
        np.testing.assert_allclose(linalg.partial_trace(out, (2, 2), [0]),
                                   (1 - t) * np.diag([1, 0]) + t * rho, atol=1e-12)

    def test_controlled_swap_is_unitary(self):
        attack = sec.controlled_swap_memory()
        assert linalg.is_unitary(attack.channel.kraus[0])
        assert attack.env_dim == 4

    def test_adversarial_channels_are_cptp(self):
        for s in range(12):
            phi = sec.adversarial_channel(2, np.random.default_rng(s))
            assert phi.is_trace_preserving(1e-9)
            assert phi.out_shape == (2, 2)


class TestDisturbance:
    @pytest.mark.parametrize("de", [1, 2, 3])
    def test_separable_is_zero(self, de, rng):
        for _ in range(3):
            rep = sec.disturbance(sec.separable_channel(random_density_matrix(de, rng), 2), PAIR)
            for eps in (rep.eps_z, rep.eps_x):
                assert eps.lower == pytest.approx(0, abs=1e-9)
                assert eps.upper == pytest.approx(0, abs=1e-9)

    def test_z_attack(self):
        rep = sec.disturbance(sec.z_attack(PAIR.white), PAIR)
        assert rep.eps_z.upper <= 1e-9
        # X inputs are read as a fair coin: worst error 1/2, distance 1
        assert rep.eps_x.lower == pytest.approx(1.0, abs=1e-9)
        assert rep.eps_x.lower > 0.4

    @given(st.integers(2, 3), st.integers(1, 2), st.integers(1, 3), st.integers(0, 10_000))
    def test_lower_equals_twice_worst_error(self, d, de, rank, seed):
        phi = random_attack(d, de, rank, seed)
        pair = standard_pair(d)
        rep = sec.disturbance(phi, pair)
        for eps, b in ((rep.eps_z, pair.white), (rep.eps_x, pair.gray)):
            oracle = 2 * worst_error_oracle(phi, b)
            assert eps.lower == pytest.approx(oracle, abs=1e-8)
            assert eps.upper >= oracle - 1e-9

    def test_wiretap_grid_increasing(self):
        prev = None
        for t in np.linspace(0, 0.5, 11):
            rep = sec.disturbance(sec.wiretap(2, t), PAIR)
            # Bob's worst error is t/2 in both bases
            assert rep.eps_z.lower == pytest.approx(t, abs=1e-9)
            if prev is not None:
                assert rep.eps_z.upper >= prev.eps_z.upper - 1e-6
                assert rep.eps_x.upper >= prev.eps_x.upper - 1e-6
            prev = rep

    def test_dimension_mismatch(self):
        with pytest.raises(linalg.DimensionError):
            sec.disturbance(sec.z_attack(standard_pair(3).white), PAIR)


class TestSeparabilityGap:
    def test_recovers_planted_state(self, rng):
        for de in (1, 2, 3):
            rho0 = random_density_matrix(de, rng)
            rho, gap = sec.separability_gap(sec.separable_channel(rho0, 2))
            np.testing.assert_allclose(rho, rho0, atol=1e-8)
            assert gap.as_tuple() == pytest.approx((0, 0), abs=1e-9)

    def test_z_attack_is_far(self):
        rho, gap = sec.separability_gap(sec.z_attack(PAIR.white), pair=PAIR)
        assert gap.lower >= 0.4
        assert gap.lower <= gap.upper
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-10)
        assert np.min(np.linalg.eigvalsh(rho)) >= -1e-12

    def test_grid_toward_z_attack(self):
        base = sec.separable_channel(np.diag([1.0, 0.0]), 2)
        attack = sec.z_attack(PAIR.white)
        gaps = [sec.separability_gap(ch.mix(base, attack, t), pair=PAIR)[1]
                for t in np.linspace(0, 0.5, 11)]
        assert gaps[0].upper <= 1e-9
        for a, b in zip(gaps, gaps[1:]):
            assert b.lower >= a.lower - 1e-6
            assert b.upper >= a.upper - 1e-6

    def test_line_search_never_worse_than_start(self):
        phi = random_attack(2, 2, 2, 3)
        start = sec._normalise(ch.apply(ch.compose(ch.discard((2, 2), [0]), phi), np.eye(2) / 2))
        objective = sec._UpperObjective(phi)
        rho, _ = sec.separability_gap(phi, pair=PAIR)
        assert objective(rho) <= objective(start) + 1e-12

    def test_separable_dilation_matches_purification(self, rng):
        rho = random_density_matrix(3, rng)
        dil = sec.separable_dilation(rho, 2)
        np.testing.assert_allclose(ch.choi(dil.channel()), ch.choi(sec.separable_channel(rho, 2)),
                                   atol=1e-12)


class TestExactSecurity:
    def test_separable_passes(self, rng):
        v = sec.verify_exact_security(sec.separable_channel(random_density_matrix(2, rng), 2), PAIR)
        assert v.hypothesis_met and v.passed and v.status == "separates"
        assert max(v.residuals.values()) <= 1e-8

    def test_scrambled_separable_channels_pass(self, rng):
        for _ in range(10):
            phi = local_unitary_separable(2, 2, rng)
            v = sec.verify_exact_security(phi, PAIR)
            assert v.passed
            assert v.gap.upper <= 1e-6

    def test_z_attack_no_false_claim(self):
        v = sec.verify_exact_security(sec.z_attack(PAIR.white), PAIR, tol=1e-9)
        assert not v.hypothesis_met
        assert not v.passed
        assert v.status == "hypothesis not met"
        assert v.gap is None

    def test_to_dict_round_trips_numbers(self, rng):
        v = sec.verify_exact_security(sec.separable_channel(random_density_matrix(2, rng), 2), PAIR)
        d = v.to_dict()
        assert d["status"] == "separates"
        assert len(d["rho"]) == 2 and len(d["rho"][0][0]) == 2


class TestProofReplay:
    @given(st.integers(1, 3), st.integers(0, 10_000))
    def test_step_inequalities(self, rank, seed):
        phi = random_attack(2, 2, rank, seed)
        r = sec.proof_replay(phi, PAIR)
        for tag in ("z", "x"):
            # capping the copy legs of the exact left side gives back V
            assert r[f"capped_lhs_{tag}"] <= 1e-10
            # the counits have norm sqrt(D) each
            assert r[f"capped_{tag}"] <= 2 * r[f"uniqueness_{tag}"] + 1e-10
            # the capped right side is diagonal; pinching costs at most a factor 2
            assert r[f"offdiag_{tag}"] <= 2 * r[f"capped_{tag}"] + 1e-10

    def test_z_attack_residuals(self):
        r = sec.proof_replay(sec.z_attack(PAIR.white), PAIR)
        assert r["uniqueness_z"] <= 1e-12 and r["offdiag_z"] <= 1e-12
        # V|z_i> = |z_i>|i>: removing the diagonal leaves nothing, but V is
        # not of the form 1 (x) phi; distance 1/sqrt 2 from the averaged block
        assert r["separation"] == pytest.approx(1 / np.sqrt(2), abs=1e-12)

    def test_random_channels_obey_replay_constants(self):
        consts = sec.replay_constants(2)
        for s in range(10):
            phi = sec.adversarial_channel(2, np.random.default_rng([1, s]))
            eps = sec.disturbance(phi, PAIR).max_upper
            r = sec.proof_replay(phi, PAIR)
            root = np.sqrt(eps)
            assert max(r["offdiag_z"], r["offdiag_x"]) <= consts["offdiag"] * root + 1e-9
            assert r["separation"] <= consts["separation"] * root + 1e-9


class TestNoiseBound:
    def test_noise_constant(self):
        # 6 (4 D + 8 D^{3/2}) at D = 2
        assert sec.noise_constant(2) == pytest.approx(6 * (8 + 16 * np.sqrt(2)), rel=1e-15)
        assert sec.noise_constant(2) == pytest.approx(183.76450198781714, rel=1e-12)
        assert sec.noise_constant(3) > sec.noise_constant(2)

    def test_separable_trivially_passes(self, rng):
        rep = sec.verify_noise_bound(sec.separable_channel(random_density_matrix(2, rng), 2), PAIR)
        assert rep.gap.lower <= 1e-9 and rep.consistent

    @pytest.mark.parametrize("t", [0.01, 0.05, 0.1, 0.2, 0.3])
    def test_z_family(self, t):
        base = sec.separable_channel(np.diag([0.7, 0.3]), 2)
        rep = sec.verify_noise_bound(ch.mix(base, sec.z_attack(PAIR.white), t), PAIR)
        assert rep.consistent
        assert rep.gap.lower <= rep.bound_rhs

    def test_calibration_small(self):
        art = sec.calibrate(2, 15, seed=3)
        assert art["violations"] == 0
        assert 0 < art["n_empirical"] <= art["n_analytic"]
        for k, v in art["replay_empirical"].items():
            assert v <= art["replay_analytic"][k]
        assert sec.calibrate(2, 15, seed=3) == art


class TestMemorySeparation:
    def test_identity_interaction(self, rng):
        rho0 = random_density_matrix(2, rng)
        attack = sec.MemoryAttack(ch.identity((2, 2)), rho0, 2)
        v = sec.memory_separation(attack, 4)
        assert v.separates and v.status == "separates"
        for s in v.states:
            np.testing.assert_allclose(s, rho0, atol=1e-8)

    def test_local_unitary_precesses(self):
        u = haar_unitary(3, np.random.default_rng(2))
        attack = sec.local_unitary_memory(2, 3, u)
        v = sec.memory_separation(attack, 4)
        assert v.separates
        expected = attack.rho0
        for s, rec in zip(v.states[1:], v.rounds):
            expected = u @ expected @ u.conj().T
            np.testing.assert_allclose(s, expected, atol=1e-8)
            assert rec["gap"][1] <= 1e-8

    def test_controlled_swap_detected(self):
        v = sec.memory_separation(sec.controlled_swap_memory(), 3)
        assert not v.separates
        assert v.status == "detectable" and v.detected_round == 1
        assert v.rounds[0]["eps_x"][0] > 0.4

    def test_size_guard(self):
        attack = sec.MemoryAttack(ch.identity((2, 4)), np.eye(4) / 4, 2)
        with pytest.raises(ValueError):
            sec.memory_separation(attack, 7)
