"""Seeded simulation of the prepare-and-measure key distribution protocol.

Randomness
----------
All protocol randomness comes from numpy's ``Philox`` counter-based
generator keyed by the 64-bit run seed. Round ``r`` owns the fixed block of
``ROUND_DRAWS`` uniforms starting at counter ``r * ROUND_DRAWS / 4``, so any
range of rounds can be regenerated independently (``round_uniforms``) and
the assembled run does not depend on how rounds are chunked. Column usage
per round:

    0 Alice's value, 1 Alice's basis, 2 Bob's basis, 3 Eve's basis,
    4 Eve's outcome, 5 Bob's outcome (or joint Bob/Eve outcome), 6-7 spare

Check bits are picked by a Fisher-Yates prefix shuffle of the sifted round
indices driven by a second Philox stream with key ``seed + 2**64``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Union

import numpy as np

from . import channels as ch
from . import linalg
from .channels import Channel
from .linalg import DimensionError
from .spiders import SpiderPair, standard_pair

ROUND_DRAWS = 8
# Philox emits 4 x 64-bit words per counter step; one double per word
_DRAWS_PER_STEP = 4
CPTP_TOL = 1e-10
MEMORY_GUARD = 256


@dataclass(frozen=True)
class ProtocolConfig:
    dim: int = 2
    target_key_bits: int = 64
    check_fraction: float = 0.5
    abort_threshold: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dimension must be at least 2")
        if self.target_key_bits < 1:
            raise ValueError("target_key_bits must be positive")
        if not 0.0 <= self.check_fraction <= 1.0:
            raise ValueError("check_fraction must lie in [0, 1]")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @property
    def rounds(self) -> int:
        return 4 * self.target_key_bits


# ---------------------------------------------------------------------------
# attack models


@dataclass(frozen=True)
class NoAttack:
    kind: Literal["none"] = "none"


@dataclass(frozen=True)
class InterceptResend:
    """Eve measures in a guessed basis and re-prepares her outcome."""

    policy: Literal["always-Z", "always-X", "uniform-random"] = "uniform-random"
    kind: Literal["intercept_resend"] = "intercept_resend"

    def __post_init__(self):
        if self.policy not in ("always-Z", "always-X", "uniform-random"):
            raise ValueError(f"unknown intercept-resend policy {self.policy!r}")

    def basis_weights(self) -> tuple[float, float]:
        return {"always-Z": (1.0, 0.0), "always-X": (0.0, 1.0),
                "uniform-random": (0.5, 0.5)}[self.policy]


def _check_cptp(c: Channel, what: str):
    r = c.tp_residual()
    if r > CPTP_TOL:
        raise ValueError(f"{what} is not trace preserving (residual {r:.3g})")


@dataclass(frozen=True, eq=False)
class ChannelAttack:
    """Eve applies ``B(H) -> B(H (x) E)`` to every transmitted system."""

    channel: Channel
    kind: Literal["channel"] = "channel"

    def __post_init__(self):
        _check_cptp(self.channel, "attack channel")
        if self.channel.out_dim % self.channel.in_dim:
            raise DimensionError("attack output must be H (x) E")

    @property
    def dim(self) -> int:
        return self.channel.in_dim

    @property
    def env_dim(self) -> int:
        return self.channel.out_dim // self.channel.in_dim


@dataclass(frozen=True, eq=False)
class MemoryAttack:
    """Eve threads a memory ``E`` through ``B(H (x) E) -> B(H (x) E)``."""

    channel: Channel
    rho0: np.ndarray
    dim: int
    kind: Literal["memory"] = "memory"

    def __post_init__(self):
        _check_cptp(self.channel, "memory channel")
        rho0 = linalg.as_matrix(self.rho0)
        object.__setattr__(self, "rho0", rho0)
        if self.channel.in_dim != self.channel.out_dim:
            raise DimensionError("memory channel must map H (x) E to itself")
        if self.channel.in_dim != self.dim * rho0.shape[0]:
            raise DimensionError("memory channel does not act on H (x) E")
        if abs(np.trace(rho0) - 1) > CPTP_TOL:
            raise ValueError("initial memory state must have unit trace")

    @property
    def env_dim(self) -> int:
        return self.rho0.shape[0]


AttackModel = Union[NoAttack, InterceptResend, ChannelAttack, MemoryAttack]


def attack_dim(attack: AttackModel) -> int | None:
    if isinstance(attack, (ChannelAttack, MemoryAttack)):
        return attack.dim
    return None


# ---------------------------------------------------------------------------
# runs


@dataclass(eq=False)
class ProtocolRun:
    config: ProtocolConfig
    attack_kind: str
    alice_bit: np.ndarray
    alice_basis: np.ndarray
    bob_basis: np.ndarray
    bob_bit: np.ndarray
    sifted: np.ndarray
    check: np.ndarray
    qber_estimate: float
    aborted: bool
    final_key_alice: np.ndarray
    final_key_bob: np.ndarray
    eve_basis: np.ndarray = field(default=None)
    eve_outcome: np.ndarray = field(default=None)

    @property
    def n_sifted(self) -> int:
        return int(self.sifted.sum())

    @property
    def n_check(self) -> int:
        return int(self.check.sum())

    def summary(self) -> dict:
        return {
            "seed": self.config.seed,
            "dim": self.config.dim,
            "rounds": self.config.rounds,
            "sifted": self.n_sifted,
            "qber": self.qber_estimate,
            "aborted": self.aborted,
            "key_len": int(len(self.final_key_alice)),
        }

    def to_dict(self) -> dict:
        def ints(a):
            return [int(x) for x in a]

        cfg = self.config
        out = {
            "config": {"dim": cfg.dim, "target_key_bits": cfg.target_key_bits,
                       "rounds": cfg.rounds, "check_fraction": cfg.check_fraction,
                       "abort_threshold": cfg.abort_threshold, "seed": cfg.seed},
            "attack": self.attack_kind,
            "rounds": {
                "alice_bit": ints(self.alice_bit),
                "alice_basis": ints(self.alice_basis),
                "bob_basis": ints(self.bob_basis),
                "bob_bit": ints(self.bob_bit),
                "sifted": [bool(x) for x in self.sifted],
                "check": [bool(x) for x in self.check],
            },
            "n_sifted": self.n_sifted,
            "n_check": self.n_check,
            "qber_estimate": self.qber_estimate,
            "aborted": self.aborted,
            "final_key_alice": ints(self.final_key_alice),
            "final_key_bob": ints(self.final_key_bob),
            "eve_transcript": None,
        }
        if self.eve_outcome is not None:
            out["eve_transcript"] = {
                "basis": ints(self.eve_basis) if self.eve_basis is not None else None,
                "outcome": ints(self.eve_outcome),
            }
        return out


def round_uniforms(seed: int, start: int, stop: int) -> np.ndarray:
    """Uniforms for rounds ``start..stop-1``, shape ``(stop - start, ROUND_DRAWS)``."""
    bg = np.random.Philox(key=seed)
    bg.advance(start * ROUND_DRAWS // _DRAWS_PER_STEP)
    return np.random.Generator(bg).random((stop - start, ROUND_DRAWS))


def _sample(u: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling; row ``r`` of ``probs`` is the law for ``u[r]``."""
    cdf = np.cumsum(probs, axis=1)
    cdf[:, -1] = np.inf
    return np.argmax(u[:, None] < cdf, axis=1)


def _born_table(states: np.ndarray, basis_vectors: np.ndarray) -> np.ndarray:
    """``|<b_j|psi>|^2`` for each state (columns) and basis vector."""
    return np.abs(basis_vectors.conj().T @ states) ** 2


def _bases(pair: SpiderPair) -> np.ndarray:
    return np.stack([pair.white.vectors, pair.gray.vectors])


def select_check_bits(seed: int, sifted_idx: np.ndarray, fraction: float) -> np.ndarray:
    """Seeded Fisher-Yates prefix of ``floor(fraction * n)`` sifted indices."""
    arr = np.array(sifted_idx, dtype=np.int64)
    n = len(arr)
    k = int(math.floor(fraction * n))
    gen = np.random.Generator(np.random.Philox(key=seed + 2**64))
    u = gen.random(k)
    for i in range(k):
        j = i + int(u[i] * (n - i))
        arr[i], arr[j] = arr[j], arr[i]
    return np.sort(arr[:k])


def run_protocol(cfg: ProtocolConfig, attack: AttackModel = NoAttack(),
                 pair: SpiderPair | None = None) -> ProtocolRun:
    d = cfg.dim
    pair = pair or standard_pair(d)
    if pair.dim != d:
        raise DimensionError("basis pair dimension differs from the configuration")
    ad = attack_dim(attack)
    if ad is not None and ad != d:
        raise DimensionError(f"attack acts on dimension {ad}, protocol uses {d}")

    n = cfg.rounds
    u = round_uniforms(cfg.seed, 0, n)
    alice_bit = np.minimum((u[:, 0] * d).astype(np.int64), d - 1)
    alice_basis = (u[:, 1] >= 0.5).astype(np.int64)
    bob_basis = (u[:, 2] >= 0.5).astype(np.int64)
    bases = _bases(pair)
    sent = bases[alice_basis, :, alice_bit]  # (n, d) state vectors
    eve_basis = eve_outcome = None

    if isinstance(attack, NoAttack):
        probs = np.abs(np.einsum("rji,rj->ri", bases[bob_basis].conj(), sent)) ** 2
        bob_bit = _sample(u[:, 5], probs)
    elif isinstance(attack, InterceptResend):
        wz, _ = attack.basis_weights()
        eve_basis = (u[:, 3] >= wz).astype(np.int64)
        q = np.abs(np.einsum("rji,rj->ri", bases[eve_basis].conj(), sent)) ** 2
        eve_outcome = _sample(u[:, 4], q)
        resent = bases[eve_basis, :, eve_outcome]
        probs = np.abs(np.einsum("rji,rj->ri", bases[bob_basis].conj(), resent)) ** 2
        bob_bit = _sample(u[:, 5], probs)
    elif isinstance(attack, ChannelAttack):
        de = attack.env_dim
        # joint law of (Bob outcome j, Eve computational outcome e), per class
        table = np.zeros((2, d, 2, d * de))
        for ab in range(2):
            for ai in range(d):
                v = bases[ab][:, [ai]]
                out = ch.apply(attack.channel, v @ v.conj().T).reshape(d, de, d, de)
                for bb in range(2):
                    b = bases[bb]
                    joint = np.einsum("jx,xeye,yj->je", b.conj().T, out, b)
                    table[ab, ai, bb] = np.clip(joint.real, 0, None).reshape(-1)
        probs = table[alice_basis, alice_bit, bob_basis]
        joint = _sample(u[:, 5], probs)
        bob_bit, eve_outcome = joint // de, joint % de
    elif isinstance(attack, MemoryAttack):
        bob_bit = _run_memory(attack, bases, alice_basis, alice_bit, bob_basis, u[:, 5])
    else:
        raise TypeError(f"unsupported attack {attack!r}")

    sifted = alice_basis == bob_basis
    sifted_idx = np.flatnonzero(sifted)
    check_idx = select_check_bits(cfg.seed, sifted_idx, cfg.check_fraction)
    check = np.zeros(n, dtype=bool)
    check[check_idx] = True
    if len(check_idx):
        qber = float(np.mean(alice_bit[check_idx] != bob_bit[check_idx]))
    else:
        qber = 0.0
    aborted = bool(qber > cfg.abort_threshold)
    key_idx = np.flatnonzero(sifted & ~check)
    if aborted:
        key_idx = key_idx[:0]
    return ProtocolRun(
        config=cfg, attack_kind=attack.kind,
        alice_bit=alice_bit, alice_basis=alice_basis, bob_basis=bob_basis, bob_bit=bob_bit,
        sifted=sifted, check=check, qber_estimate=qber, aborted=aborted,
        final_key_alice=alice_bit[key_idx], final_key_bob=bob_bit[key_idx],
        eve_basis=eve_basis, eve_outcome=eve_outcome,
    )


def _run_memory(attack: MemoryAttack, bases, alice_basis, alice_bit, bob_basis, ub) -> np.ndarray:
    d, de = attack.dim, attack.env_dim
    sigma = attack.rho0
    kraus = np.stack(attack.channel.kraus)
    bob = np.empty(len(alice_bit), dtype=np.int64)
    for r in range(len(alice_bit)):
        v = bases[alice_basis[r]][:, alice_bit[r]]
        rho = np.kron(np.outer(v, v.conj()), sigma)
        out = np.einsum("kab,bc,kdc->ad", kraus, rho, kraus.conj()).reshape(d, de, d, de)
        b = bases[bob_basis[r]]
        # (j, e, f) conditional memory blocks for each Bob outcome j
        blocks = np.einsum("xj,xeyf,yj->jef", b.conj(), out, b)
        p = np.clip(np.real(np.einsum("jee->j", blocks)), 0, None)
        j = int(_sample(np.array([ub[r]]), p[None, :] / p.sum())[0])
        bob[r] = j
        sigma = blocks[j] / p[j]
    return bob


def exact_detection_probability(cfg: ProtocolConfig, attack: AttackModel,
                                pair: SpiderPair | None = None) -> float:
    """Mismatch probability of a sifted round, by density-matrix algebra.

    Averages ``1 - <a|out|a>`` over Alice's basis and value, with Bob
    measuring in Alice's basis.
    """
    d = cfg.dim
    pair = pair or standard_pair(d)
    bases = _bases(pair)
    if isinstance(attack, MemoryAttack):
        raise TypeError("exact detection probability is not available for memory attacks")
    ad = attack_dim(attack)
    if ad is not None and ad != d:
        raise DimensionError(f"attack acts on dimension {ad}, protocol uses {d}")
    total = 0.0
    for ab in range(2):
        for ai in range(d):
            v = bases[ab][:, [ai]]
            rho = v @ v.conj().T
            if isinstance(attack, NoAttack):
                out = rho
            elif isinstance(attack, InterceptResend):
                out = np.zeros_like(rho)
                for eb, w in enumerate(attack.basis_weights()):
                    if w:
                        proj = [bases[eb][:, [k]] @ bases[eb][:, [k]].conj().T for k in range(d)]
                        out = out + w * sum(p @ rho @ p for p in proj)
            elif isinstance(attack, ChannelAttack):
                out = linalg.partial_trace(ch.apply(attack.channel, rho), (d, attack.env_dim), [1])
            else:
                raise TypeError(f"unsupported attack {attack!r}")
            total += 1.0 - float(np.real(v.conj().T @ out @ v)[0, 0])
    return total / (2 * d)


def memory_unrolled_channel(attack: MemoryAttack, n_rounds: int) -> Channel:
    """``B(H^n) -> B(H^n (x) E)``: the memory threaded through ``n`` rounds.

    Output legs are ``H_1 .. H_n`` followed by ``E``.
    """
    if n_rounds < 1:
        raise ValueError("n_rounds must be positive")
    d, de = attack.dim, attack.env_dim
    if d**n_rounds * de > MEMORY_GUARD:
        raise ValueError(f"unrolled system {d}^{n_rounds} x {de} exceeds the size guard {MEMORY_GUARD}")
    shape = (d,) * n_rounds + (de,)
    current = ch.tensor(ch.identity((d,) * n_rounds), ch.prepare(attack.rho0))
    for k in range(n_rounds):
        step = Channel(tuple(linalg.embed(K, shape, [k, n_rounds]) for K in attack.channel.kraus),
                       current.outputs, current.outputs)
        current = ch.compose(step, current)
    return current
