"""Executable security statements for an eavesdropper channel ``B(H) -> B(H (x) E)``.

Disturbance in one basis compares two classical-in channels with outputs
``classical (x) E``: Bob's measured value next to Eve's system, against a
perfect copy of Alice's value next to Eve's marginal for that value. Their
cb distance is twice Bob's worst-case error probability, so Eve's
information never enters the hypothesis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import channels as ch
from . import linalg
from .channels import CbBounds, Channel
from .protocol import MemoryAttack
from .randomness import haar_unitary, random_density_matrix, random_hermitian, random_kraus
from .spiders import (Basis, SpiderPair, classical_identity, copy_channel, encode_map,
                      measure_map, spider, standard_pair)

HYPOTHESIS_TOL = 1e-9
GAP_TOL = 1e-6
LINE_SEARCH_ITERS = 200
_STEPS = (1.0, 0.5, 0.25, 0.125, 0.0625)


@dataclass(frozen=True)
class Interval:
    lower: float
    upper: float

    @classmethod
    def of(cls, b: CbBounds) -> "Interval":
        return cls(float(b.lower), float(b.upper))

    def as_list(self) -> list[float]:
        return [self.lower, self.upper]


@dataclass(frozen=True, eq=False)
class DisturbanceReport:
    eps_z: Interval
    eps_x: Interval
    pair: SpiderPair = field(repr=False)

    @property
    def max_upper(self) -> float:
        return max(self.eps_z.upper, self.eps_x.upper)

    def to_dict(self) -> dict:
        return {"eps_z": self.eps_z.as_list(), "eps_x": self.eps_x.as_list()}


@dataclass(frozen=True, eq=False)
class SeparabilityReport:
    rho_candidate: np.ndarray
    gap: Interval
    bound_rhs: float
    n_est: float
    disturbance: DisturbanceReport

    @property
    def verdict(self) -> bool:
        """The bound is certified: even the gap's upper end satisfies it."""
        return self.gap.upper <= self.bound_rhs

    @property
    def consistent(self) -> bool:
        """No violation witnessed: the gap's lower end satisfies the bound."""
        return self.gap.lower <= self.bound_rhs

    def to_dict(self) -> dict:
        return {
            "rho_candidate": matrix_to_json(self.rho_candidate),
            "gap": self.gap.as_list(),
            "bound_rhs": self.bound_rhs,
            "n_est": self.n_est,
            "verdict": self.verdict,
            "consistent": self.consistent,
        }


def matrix_to_json(m) -> list:
    m = linalg.as_matrix(m)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


# ---------------------------------------------------------------------------
# channels


def env_dim(phi: Channel) -> int:
    if phi.out_dim % phi.in_dim:
        raise linalg.DimensionError("eavesdropper channel must map H to H (x) E")
    return phi.out_dim // phi.in_dim


def separable_channel(rho, dim: int) -> Channel:
    """``id_H (x) rho``: Eve ignores the transmission and holds ``rho``."""
    return ch.tensor(ch.identity(dim), ch.prepare(rho))


def z_attack(basis: Basis) -> Channel:
    """Non-demolition measurement in ``basis``; Eve keeps the outcome in ``E``."""
    d = basis.dim
    kraus = [np.kron(basis.vector(i), linalg.ket(i, d)) @ basis.vector(i).conj().T
             for i in range(d)]
    return Channel.from_kraus(kraus, (d,), (d, d))


def wiretap(dim: int, t: float) -> Channel:
    """With probability ``t`` Eve steals the system and Bob gets ``I/D``."""
    keep = [np.sqrt(1 - t) * np.kron(np.eye(dim), linalg.ket(0, dim))]
    # |k>_H (x) (input moved to E), so Bob's system is I/D
    steal = [np.sqrt(t / dim) * np.kron(linalg.ket(k, dim), np.eye(dim)) for k in range(dim)]
    return Channel.from_kraus(keep + steal, (dim,), (dim, dim))


def controlled_swap_memory(dim: int = 2) -> MemoryAttack:
    """Memory ``E = control (x) store``; control ``|1>`` swaps ``H`` into the store."""
    d = dim
    swap = linalg.permutation_matrix((d, d), (1, 0))
    p0, p1 = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
    # factors ordered (H, control, store)
    shape = (d, 2, d)
    u = (linalg.embed(p0, shape, [1])
         + linalg.embed(p1, shape, [1]) @ linalg.embed(swap, shape, [0, 2]))
    rho0 = np.kron(p1, np.diag([1.0] + [0.0] * (d - 1)))
    return MemoryAttack(ch.unitary_channel(u, (d, 2 * d)), rho0, d)


def disturbance_composites(phi: Channel, b: Basis) -> tuple[Channel, Channel]:
    """Both sides of the undetectability requirement in basis ``b``.

    Left: encode, Eve, measure Bob's system (classical -> classical (x) E).
    Right: copy Alice's value; one copy goes out, the other feeds Eve's
    marginal for that value.
    """
    d, de = phi.in_dim, env_dim(phi)
    left = ch.compose_all(ch.tensor(measure_map(b), ch.identity(de)), phi, encode_map(b))
    marginal = ch.compose_all(ch.discard((d, de), [0]), phi, encode_map(b))
    right = ch.compose(ch.tensor(classical_identity(d), marginal), copy_channel(d))
    return left, right


def disturbance(phi: Channel, pair: SpiderPair, seed: int = 0) -> DisturbanceReport:
    if phi.in_dim != pair.dim:
        raise linalg.DimensionError(f"channel acts on dimension {phi.in_dim}, pair on {pair.dim}")
    out = []
    for b in (pair.white, pair.gray):
        left, right = disturbance_composites(phi, b)
        out.append(Interval.of(ch.cb_distance_bounds(left, right, seed=seed)))
    return DisturbanceReport(out[0], out[1], pair)


# ---------------------------------------------------------------------------
# separability


def separable_dilation(rho, dim: int) -> ch.Dilation:
    """Dilation of ``id (x) rho`` built from ``sqrt(rho)`` directly."""
    w, u = np.linalg.eigh(linalg.as_matrix(rho))
    cols = u * np.sqrt(np.clip(w, 0, None))  # (E, env)
    de = cols.shape[0]
    b = np.einsum("hg,ek->hekg", np.eye(dim), cols).reshape(dim * de, de, dim)
    return ch.Dilation(b.reshape(-1, dim), dim * de, de)


class _UpperObjective:
    """Polar upper bound on ``||phi - id (x) rho||`` with ``phi``'s dilation cached."""

    def __init__(self, phi: Channel):
        self.dim = phi.in_dim
        self.dil = ch.purify(phi)
        self.norm = linalg.operator_norm(self.dil.v)

    def __call__(self, rho) -> float:
        other = separable_dilation(rho, self.dim)
        it = ch.dilation_intertwiner(self.dil, other)
        return (self.norm + linalg.operator_norm(other.v)) * it.residual


def _normalise(rho: np.ndarray) -> np.ndarray:
    rho = (rho + rho.conj().T) / 2
    w, v = np.linalg.eigh(rho)
    w = np.clip(w, 0, None)
    rho = (v * w) @ v.conj().T
    return rho / np.trace(rho).real


def proof_state(phi: Channel, basis: Basis) -> np.ndarray:
    """Eve's state from the averaged diagonal blocks of a purification.

    With ``v_i = (<b_i| (x) 1) V |b_i>`` and ``phi = (1/D) sum v_i``, returns
    ``Tr_L |phi><phi|`` normalised.
    """
    d, de = phi.in_dim, env_dim(phi)
    dil = ch.purify(phi)
    f = de * dil.env_dim
    v = dil.v.reshape(d, f, d)
    bv = basis.vectors
    blocks = np.einsum("xi,xfy,yi->if", bv.conj(), v, bv)
    mean = blocks.mean(axis=0).reshape(de, dil.env_dim)
    rho = mean @ mean.conj().T
    if np.trace(rho).real < 1e-14:
        return np.eye(de, dtype=complex) / de
    return _normalise(rho)


def separability_gap(phi: Channel, seed: int = 0, pair: SpiderPair | None = None,
                     max_iter: int = LINE_SEARCH_ITERS) -> tuple[np.ndarray, CbBounds]:
    """Closest ``id (x) rho`` found and the cb-distance bracket to it.

    Starts from Eve's average marginal ``Tr_H phi(I/D)`` and moves along
    convex combinations toward Eve's per-input marginals (and the
    purification-derived state when a basis pair is given), accepting a move
    only when the polar upper bound drops.
    """
    d, de = phi.in_dim, env_dim(phi)
    marginal = ch.compose(ch.discard((d, de), [0]), phi)
    rho = _normalise(ch.apply(marginal, np.eye(d) / d))
    targets = []
    bases = (pair.white, pair.gray) if pair is not None else ()
    for b in bases:
        targets.append(proof_state(phi, b))
        for i in range(d):
            targets.append(_normalise(ch.apply(marginal, b.projector(i))))
    if pair is None:
        for i in range(d):
            targets.append(_normalise(ch.apply(marginal, linalg.ket(i, d) @ linalg.ket(i, d).T)))
    objective = _UpperObjective(phi)
    best = objective(rho)
    for _ in range(max_iter):
        if best <= 1e-14:
            break
        improved = False
        for sigma in targets:
            for lam in _STEPS:
                cand = (1 - lam) * rho + lam * sigma
                val = objective(cand)
                if val < best - 1e-13:
                    rho, best, improved = cand, val, True
                    break
        if not improved:
            break
    rho = _normalise(rho)
    return rho, ch.cb_distance_bounds(phi, separable_channel(rho, d), seed=seed)


# ---------------------------------------------------------------------------
# noise constant


def noise_constant(dim: int) -> float:
    """Dimension-only constant ``N`` with ``gap <= N sqrt(eps)``.

    Chain of estimates, ``eps`` the worst disturbance over both bases:

    * uniqueness of dilations up to ``eps``: the two dilated sides of the
      decohered requirement differ by at most ``2 sqrt(eps)`` after the best
      environment unitary;
    * capping both copy legs with counits (norm ``sqrt D`` each) gives
      ``||V - R_b|| <= a = 2 D sqrt(eps)`` with ``R_b`` diagonal in basis ``b``;
    * comparing the two diagonal forms through overlaps of modulus
      ``1/sqrt D`` makes all diagonal blocks agree up to ``2 sqrt(D) a``;
    * hence ``||V - 1 (x) phi|| <= eta = (2 + 4 sqrt D) a`` for the averaged
      block ``phi``;
    * dilation distance ``eta`` gives channel distance ``eta (2 + eta)``, plus
      the same again for normalising ``phi``; since channel distances are at
      most 2, ``gap <= 6 eta`` for every ``eta``.
    """
    return 6.0 * (4.0 * dim + 8.0 * dim**1.5)


def replay_constants(dim: int) -> dict[str, float]:
    """Analytic slopes of the proof-replay residuals against ``sqrt(eps)``."""
    return {"offdiag": 4.0 * dim, "separation": 4.0 * dim + 8.0 * dim**1.5}


# ---------------------------------------------------------------------------
# proof replay


def _requirement_dilations(v: np.ndarray, d: int, f: int, b: Basis):
    """Dilations of both sides of the decohered requirement.

    ``v`` maps ``H -> H (x) F``. Environment legs are ordered
    ``(H_bob_copy, F, H_alice_copy)`` for both.
    """
    delta = spider(b, 1, 2)  # H -> H (x) H
    # A = (delta (x) 1_F (x) 1_H')(v (x) 1_H') delta
    a = np.einsum("bcx,xfy,yzi->bcfzi",
                  delta.reshape(d, d, d), v.reshape(d, f, d), delta.reshape(d, d, d))
    a = a.reshape(d * d * f * d, d)
    # B = delta (x) psi with psi = |0> on (H_bob_copy, F); delta's copy goes to H'
    psi = np.zeros((d, f), dtype=complex)
    psi[0, 0] = 1.0
    bt = np.einsum("bzi,cf->bcfzi", delta.reshape(d, d, d), psi).reshape(d * d * f * d, d)
    env = d * f * d
    return ch.Dilation(a, d, env), ch.Dilation(bt, d, env)


def proof_replay(phi: Channel, pair: SpiderPair) -> dict[str, float]:
    """Residuals of each step of the separation argument, replayed numerically.

    For each basis: ``uniqueness`` (dilations of the two sides related by an
    environment unitary), ``capped`` (counits applied to the copy legs),
    ``offdiag`` (purification diagonal in that basis with environment blocks).
    Finally ``separation``: distance of the purification from ``1 (x) phi``.
    """
    d, de = phi.in_dim, env_dim(phi)
    dil = ch.purify(phi)
    f = de * dil.env_dim
    v = dil.v  # H -> H (x) F, F = E (x) L
    res: dict[str, float] = {}
    for tag, b in (("z", pair.white), ("x", pair.gray)):
        counit = spider(b, 1, 0)
        a_dil, b_dil = _requirement_dilations(v, d, f, b)
        it = ch.dilation_intertwiner(b_dil, a_dil)
        res[f"uniqueness_{tag}"] = it.residual
        cap = np.kron(np.kron(np.kron(np.eye(d), counit), np.eye(f)), counit)
        capped_a = cap @ a_dil.v
        rhs = cap @ np.einsum("lm,omi->oli", it.unitary, b_dil.blocks()).reshape(-1, d)
        res[f"capped_lhs_{tag}"] = linalg.operator_norm(capped_a - v)
        res[f"capped_{tag}"] = linalg.operator_norm(v - rhs)
        bv = b.vectors
        blocks = np.einsum("xi,xfy,yi->if", bv.conj(), v.reshape(d, f, d), bv)
        diag = sum(np.kron(b.vector(i), blocks[i][:, None]) @ b.vector(i).conj().T
                   for i in range(d))
        res[f"offdiag_{tag}"] = linalg.operator_norm(v - diag)
    bv = pair.white.vectors
    blocks = np.einsum("xi,xfy,yi->if", bv.conj(), v.reshape(d, f, d), bv)
    mean = blocks.mean(axis=0)
    res["separation"] = linalg.operator_norm(v - np.kron(np.eye(d), mean[:, None]))
    return res


# ---------------------------------------------------------------------------
# verdicts


@dataclass(frozen=True, eq=False)
class ExactSecurityVerdict:
    disturbance: DisturbanceReport
    hypothesis_met: bool
    rho: np.ndarray | None
    gap: Interval | None
    residuals: dict[str, float]
    passed: bool
    status: str

    def to_dict(self) -> dict:
        return {
            "disturbance": self.disturbance.to_dict(),
            "hypothesis_met": self.hypothesis_met,
            "rho": matrix_to_json(self.rho) if self.rho is not None else None,
            "gap": self.gap.as_list() if self.gap is not None else None,
            "residuals": dict(self.residuals),
            "passed": self.passed,
            "status": self.status,
        }


def verify_exact_security(phi: Channel, pair: SpiderPair, tol: float = HYPOTHESIS_TOL,
                          gap_tol: float = GAP_TOL, seed: int = 0) -> ExactSecurityVerdict:
    """Zero-disturbance check: undetectable channels must separate.

    ``status`` is ``"separates"``, ``"hypothesis not met"`` or
    ``"separation failed"``. A channel that disturbs is never declared to
    separate.
    """
    dist = disturbance(phi, pair, seed=seed)
    residuals = proof_replay(phi, pair)
    if dist.max_upper > tol:
        return ExactSecurityVerdict(dist, False, None, None, residuals, False,
                                    "hypothesis not met")
    rho, gap = separability_gap(phi, seed=seed, pair=pair)
    ok = gap.upper <= gap_tol
    return ExactSecurityVerdict(dist, True, rho, Interval.of(gap), residuals, ok,
                                "separates" if ok else "separation failed")


def verify_noise_bound(phi: Channel, pair: SpiderPair, seed: int = 0,
                       n_est: float | None = None) -> SeparabilityReport:
    dist = disturbance(phi, pair, seed=seed)
    rho, gap = separability_gap(phi, seed=seed, pair=pair)
    n_est = noise_constant(pair.dim) if n_est is None else n_est
    rhs = n_est * math.sqrt(max(dist.max_upper, 0.0))
    return SeparabilityReport(rho, Interval.of(gap), rhs, n_est, dist)


@dataclass(frozen=True, eq=False)
class MemoryVerdict:
    rounds: list[dict]
    states: list[np.ndarray]
    separates: bool
    status: str
    detected_round: int | None

    def to_dict(self) -> dict:
        return {
            "rounds": self.rounds,
            "states": [matrix_to_json(s) for s in self.states],
            "separates": self.separates,
            "status": self.status,
            "detected_round": self.detected_round,
        }


def memory_separation(attack: MemoryAttack, n_rounds: int, tol: float = HYPOTHESIS_TOL,
                      gap_tol: float = GAP_TOL, pair: SpiderPair | None = None,
                      seed: int = 0) -> MemoryVerdict:
    """Round-by-round induction for an eavesdropper with memory.

    Round ``k`` feeds the current memory state ``rho_k`` into the memory
    channel, checks the zero-disturbance hypothesis for the resulting
    ``B(H) -> B(H (x) E)`` map, and takes ``rho_{k+1}`` from its separation.
    """
    from .protocol import memory_unrolled_channel  # size guard lives there

    d, de = attack.dim, attack.env_dim
    if d**n_rounds * de > 256:
        memory_unrolled_channel(attack, n_rounds)  # raises the guard error
    pair = pair or standard_pair(d)
    rho = attack.rho0
    states = [rho]
    rounds = []
    for k in range(1, n_rounds + 1):
        phi_k = ch.compose(attack.channel, ch.tensor(ch.identity(d), ch.prepare(rho)))
        phi_k = phi_k.with_wires(outputs=(d, de))
        dist = disturbance(phi_k, pair, seed=seed)
        rec = {"round": k, "eps_z": dist.eps_z.as_list(), "eps_x": dist.eps_x.as_list()}
        if dist.max_upper > tol:
            rec["gap"] = None
            rounds.append(rec)
            return MemoryVerdict(rounds, states, False, "detectable", k)
        rho_next, gap = separability_gap(phi_k, seed=seed, pair=pair)
        rec["gap"] = [gap.lower, gap.upper]
        rounds.append(rec)
        if gap.upper > gap_tol:
            return MemoryVerdict(rounds, states, False, "separation failed", None)
        rho = rho_next
        states.append(rho)
    return MemoryVerdict(rounds, states, True, "separates", None)


def local_unitary_memory(dim: int, env: int, u_env) -> MemoryAttack:
    """``id_H (x) U`` on the memory, starting from ``|0><0|``."""
    u = np.kron(np.eye(dim), linalg.as_matrix(u_env))
    rho0 = np.zeros((env, env), dtype=complex)
    rho0[0, 0] = 1.0
    return MemoryAttack(ch.unitary_channel(u, (dim, env)), rho0, dim)


# ---------------------------------------------------------------------------
# calibration


def adversarial_channel(dim: int, rng: np.random.Generator, env: int = 2) -> Channel:
    """A random channel near the separable set, from one of three families.

    The scale is log-uniform so that small disturbances, where the ratio
    ``gap / sqrt(eps)`` is largest, are well represented.
    """
    family = int(rng.integers(3))
    scale = float(10 ** rng.uniform(-4, 0))
    rho = random_density_matrix(env, rng)
    base = separable_channel(rho, dim)
    if family == 0:
        other = Channel.from_kraus(random_kraus(dim, dim * env, int(rng.integers(1, 4)), rng),
                                   (dim,), (dim, env))
        return ch.mix(base, other, min(scale, 1.0))
    if family == 1:
        # rotate a separable isometry by exp(i s G) on H (x) E (x) L
        lenv = env
        phi_vec = np.linalg.qr(rng.standard_normal((env * lenv, 1))
                               + 1j * rng.standard_normal((env * lenv, 1)))[0]
        v = np.kron(np.eye(dim), phi_vec)
        g = random_hermitian(dim * env * lenv, rng)
        g /= linalg.operator_norm(g)
        w, q = np.linalg.eigh(g)
        rot = (q * np.exp(1j * scale * w)) @ q.conj().T
        v = rot @ v
        blocks = v.reshape(dim * env, lenv, dim)
        return Channel.from_kraus([blocks[:, k, :] for k in range(lenv)], (dim,), (dim, env))
    attack = _pad_env(z_attack(Basis(haar_unitary(dim, rng))), dim, env)
    return ch.mix(base, attack, min(scale, 1.0))


def _pad_env(c: Channel, dim: int, env: int) -> Channel:
    """Embed a ``H -> H (x) C^dim`` channel into ``H -> H (x) C^env``."""
    if env < dim:
        raise linalg.DimensionError("environment too small")
    iso = np.eye(env, dim, dtype=complex)
    lift = np.kron(np.eye(dim), iso)
    return Channel(tuple(lift @ k for k in c.kraus), (ch.Wire(dim),), (ch.Wire(dim), ch.Wire(env)))


def calibrate(dim: int, n_seeds: int, seed: int = 0, env: int | None = None) -> dict:
    """Check the analytic noise constant against a randomized adversarial search."""
    env = env or dim
    pair = standard_pair(dim)
    n_analytic = noise_constant(dim)
    consts = replay_constants(dim)
    worst_ratio = 0.0
    worst_replay = {"offdiag": 0.0, "separation": 0.0}
    violations = 0
    for s in range(n_seeds):
        rng = np.random.default_rng([seed, s])
        phi = adversarial_channel(dim, rng, env)
        report = verify_noise_bound(phi, pair, seed=s, n_est=n_analytic)
        eps = report.disturbance.max_upper
        if eps <= 0:
            continue
        root = math.sqrt(eps)
        worst_ratio = max(worst_ratio, report.gap.lower / root)
        if not report.consistent:
            violations += 1
        replay = proof_replay(phi, pair)
        worst_replay["offdiag"] = max(worst_replay["offdiag"],
                                      max(replay["offdiag_z"], replay["offdiag_x"]) / root)
        worst_replay["separation"] = max(worst_replay["separation"], replay["separation"] / root)
    return {
        "schema_version": 1,
        "dim": dim,
        "env_dim": env,
        "n_analytic": n_analytic,
        "n_empirical": worst_ratio,
        "violations": violations,
        "replay_analytic": consts,
        "replay_empirical": worst_replay,
        "seeds": n_seeds,
        "seed": seed,
    }
