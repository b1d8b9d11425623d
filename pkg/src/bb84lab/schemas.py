"""JSON config and output schemas for the command-line tools (version 1).

Complex numbers are ``[re, im]`` pairs and matrices row-major nested lists
of them. Unknown fields are rejected everywhere.
"""

from __future__ import annotations

from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .linalg import DimensionError

SCHEMA_VERSION = 1

ComplexPair = Annotated[list[float], Field(min_length=2, max_length=2)]
Matrix = list[list[ComplexPair]]
Seed = Annotated[int, Field(ge=0, lt=2**64)]


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


def matrix_from_json(m: Matrix) -> np.ndarray:
    rows = len(m)
    cols = {len(r) for r in m}
    if rows == 0 or len(cols) != 1 or 0 in cols:
        raise DimensionError("matrix must be a non-empty rectangular array")
    arr = np.asarray(m, dtype=float)
    return arr[..., 0] + 1j * arr[..., 1]


def matrix_to_json(m) -> Matrix:
    m = np.asarray(m, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in m]


# ---------------------------------------------------------------------------
# configs


class CommonConfig(Strict):
    schema_version: Literal[1] = 1
    seed: Seed = 0
    out: Optional[str] = None


class VerifySpidersConfig(CommonConfig):
    dims: list[Annotated[int, Field(ge=1, le=8)]] = [2, 3, 4, 5]
    max_fusion_legs: Annotated[int, Field(ge=0, le=4)] = 3
    tol: Annotated[float, Field(ge=0)] = 1e-10


class NoAttackSpec(Strict):
    kind: Literal["none"] = "none"


class InterceptResendSpec(Strict):
    kind: Literal["intercept_resend"] = "intercept_resend"
    policy: Literal["always-Z", "always-X", "uniform-random"] = "uniform-random"


class ChannelSpec(Strict):
    """``H -> H (x) E`` attack, from Kraus matrices or a named preset.

    Presets: ``separable`` (``id (x) rho``, default ``rho = |0><0|``),
    ``z_attack``/``x_attack`` (non-demolition measurement, outcome to Eve),
    ``wiretap`` (Eve steals the system with probability ``t``).
    """

    kind: Literal["channel"] = "channel"
    kraus: Optional[list[Matrix]] = None
    preset: Optional[Literal["separable", "z_attack", "x_attack", "wiretap"]] = None
    rho: Optional[Matrix] = None
    t: Annotated[float, Field(ge=0, le=1)] = 1.0

    @model_validator(mode="after")
    def _one_source(self):
        if (self.kraus is None) == (self.preset is None):
            raise ValueError("give exactly one of 'kraus' or 'preset'")
        return self


class MemorySpec(Strict):
    """``H (x) E -> H (x) E`` attack with initial memory state ``rho0``.

    Presets: ``identity``, ``local_unitary`` (``id_H (x) unitary``, default a
    cyclic shift), ``controlled_swap`` (control qubit ``|1>`` swaps ``H``
    into a stored copy; ``rho0`` fixed).
    """

    kind: Literal["memory"] = "memory"
    kraus: Optional[list[Matrix]] = None
    preset: Optional[Literal["identity", "local_unitary", "controlled_swap"]] = None
    env_dim: Annotated[int, Field(ge=1)] = 2
    rho0: Optional[Matrix] = None
    unitary: Optional[Matrix] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.kraus is None) == (self.preset is None):
            raise ValueError("give exactly one of 'kraus' or 'preset'")
        return self


AttackSpec = Annotated[Union[NoAttackSpec, InterceptResendSpec, ChannelSpec, MemorySpec],
                       Field(discriminator="kind")]


class ProtocolSpec(Strict):
    dim: Annotated[int, Field(ge=2)] = 2
    target_key_bits: Annotated[int, Field(ge=1)] = 64
    check_fraction: Annotated[float, Field(ge=0, le=1)] = 0.5
    abort_threshold: Annotated[float, Field(ge=0)] = 0.0


class SimulateConfig(CommonConfig):
    protocol: ProtocolSpec = ProtocolSpec()
    attack: AttackSpec = NoAttackSpec()
    include_rounds: bool = False
    csv: Optional[str] = None


class GridSpec(Strict):
    """Convex path ``(1 - t) base + t attack``; ``base`` defaults to ``id (x) |0><0|``."""

    t: list[Annotated[float, Field(ge=0, le=1)]]
    base: Optional[ChannelSpec] = None


class AnalyzeAttackConfig(CommonConfig):
    dim: Annotated[int, Field(ge=2)] = 2
    attack: Annotated[Union[ChannelSpec, MemorySpec], Field(discriminator="kind")]
    n_rounds: Annotated[int, Field(ge=1)] = 3
    tol: Annotated[float, Field(ge=0)] = 1e-9
    gap_tol: Annotated[float, Field(ge=0)] = 1e-6
    grid: Optional[GridSpec] = None
    csv: Optional[str] = None


class CalibrateConfig(CommonConfig):
    dim: Annotated[int, Field(ge=2, le=4)] = 2
    seeds: Annotated[int, Field(ge=1)] = 1000
    env_dim: Optional[Annotated[int, Field(ge=1, le=4)]] = None
    date: Optional[str] = None


# ---------------------------------------------------------------------------
# outputs


class SpiderDimReport(Strict):
    dim: int
    residuals: dict[str, float]
    max_residual: float
    passed: bool


class SpiderReport(Strict):
    schema_version: Literal[1] = 1
    command: Literal["verify-spiders"] = "verify-spiders"
    tol: float
    dims: list[SpiderDimReport]
    max_residual: float
    passed: bool


class RunSummary(Strict):
    seed: int
    dim: int
    rounds: int
    sifted: int
    qber: float
    aborted: bool
    key_len: int


class SimulateReport(Strict):
    schema_version: Literal[1] = 1
    command: Literal["simulate"] = "simulate"
    attack: str
    summary: RunSummary
    n_check: int
    exact_detection_probability: Optional[float]
    run: Optional[dict]


Pair = Annotated[list[float], Field(min_length=2, max_length=2)]


class DisturbanceOut(Strict):
    eps_z: Pair
    eps_x: Pair


class SeparabilityOut(Strict):
    rho_candidate: Matrix
    gap: Pair
    bound_rhs: float
    n_est: float
    verdict: bool
    consistent: bool


class ExactOut(Strict):
    hypothesis_met: bool
    passed: bool
    status: str
    gap: Optional[Pair]


class MemoryRound(Strict):
    round: int
    eps_z: Pair
    eps_x: Pair
    gap: Optional[Pair]


class MemoryOut(Strict):
    rounds: list[MemoryRound]
    states: list[Matrix]
    separates: bool
    status: str
    detected_round: Optional[int]


class GridRow(Strict):
    t: float
    eps_z: Pair
    eps_x: Pair
    gap: Pair
    bound_rhs: float


class AnalyzeReport(Strict):
    schema_version: Literal[1] = 1
    command: Literal["analyze-attack"] = "analyze-attack"
    kind: Literal["channel", "memory"]
    disturbance: Optional[DisturbanceOut] = None
    separability: Optional[SeparabilityOut] = None
    exact: Optional[ExactOut] = None
    proof_replay: Optional[dict[str, float]] = None
    memory: Optional[MemoryOut] = None
    grid: Optional[list[GridRow]] = None
    grid_monotone: Optional[bool] = None
    passed: bool


class ReplayConstants(Strict):
    offdiag: float
    separation: float


class CalibrationArtifact(Strict):
    schema_version: Literal[1] = 1
    dim: int
    env_dim: int
    n_analytic: float
    n_empirical: float
    violations: int
    replay_analytic: ReplayConstants
    replay_empirical: ReplayConstants
    seeds: int
    seed: int
    date: Optional[str]


CONFIGS = {
    "verify-spiders": VerifySpidersConfig,
    "simulate": SimulateConfig,
    "analyze-attack": AnalyzeAttackConfig,
    "calibrate": CalibrateConfig,
}

OUTPUTS = {
    "verify-spiders": SpiderReport,
    "simulate": SimulateReport,
    "analyze-attack": AnalyzeReport,
    "calibrate": CalibrationArtifact,
}


def config_schema(command: str) -> dict:
    return CONFIGS[command].model_json_schema()


def output_schema(command: str) -> dict:
    return OUTPUTS[command].model_json_schema()
