"""Command-line entry point.

    bb84lab verify-spiders --config cfg.json
    bb84lab simulate --config cfg.json --out run.json
    bb84lab analyze-attack --config cfg.json
    bb84lab calibrate --config cfg.json --seed 3
    bb84lab schema simulate [--output]

Exit codes: 0 ok, 1 a check failed, 2 bad config, 3 dimension error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import channels as ch
from . import protocol as proto
from . import schemas as sc
from . import security as sec
from .linalg import DimensionError
from .spiders import identity_residuals, standard_pair

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_DIMENSION = 0, 1, 2, 3

SIMULATE_COLUMNS = ("seed", "dim", "rounds", "sifted", "qber", "aborted", "key_len")
GRID_COLUMNS = ("t", "eps_z_lower", "eps_z_upper", "eps_x_lower", "eps_x_upper",
                "gap_lower", "gap_upper", "bound_rhs")
MONOTONE_SLACK = 1e-6


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# building domain objects from specs


def build_channel(spec: sc.ChannelSpec, dim: int) -> ch.Channel:
    if spec.kraus is not None:
        kraus = [sc.matrix_from_json(k) for k in spec.kraus]
        rows, cols = kraus[0].shape
        if cols != dim or rows % dim or any(k.shape != (rows, cols) for k in kraus):
            raise DimensionError(f"Kraus operators of shape {kraus[0].shape} do not map "
                                 f"dimension {dim} into {dim} x E")
        return ch.Channel.from_kraus(kraus, (dim,), (dim, rows // dim))
    pair = standard_pair(dim)
    if spec.preset == "separable":
        rho = np.diag([1.0] + [0.0] * (dim - 1)) if spec.rho is None else sc.matrix_from_json(spec.rho)
        return sec.separable_channel(rho, dim)
    if spec.preset == "z_attack":
        return sec.z_attack(pair.white)
    if spec.preset == "x_attack":
        return sec.z_attack(pair.gray)
    return sec.wiretap(dim, spec.t)


def build_memory(spec: sc.MemorySpec, dim: int) -> proto.MemoryAttack:
    if spec.preset == "controlled_swap":
        if dim != 2:
            raise DimensionError("the controlled-swap preset is defined for qubits")
        return sec.controlled_swap_memory(dim)
    de = spec.env_dim
    if spec.rho0 is None:
        rho0 = np.zeros((de, de), dtype=complex)
        rho0[0, 0] = 1.0
    else:
        rho0 = sc.matrix_from_json(spec.rho0)
    if spec.kraus is not None:
        kraus = [sc.matrix_from_json(k) for k in spec.kraus]
        n = dim * rho0.shape[0]
        if any(k.shape != (n, n) for k in kraus):
            raise DimensionError(f"memory Kraus operators must be {n} x {n}")
        return proto.MemoryAttack(ch.Channel.from_kraus(kraus, (n,), (n,)), rho0, dim)
    if spec.preset == "identity":
        return proto.MemoryAttack(ch.identity((dim, rho0.shape[0])), rho0, dim)
    u = (np.roll(np.eye(de), 1, axis=0) if spec.unitary is None
         else sc.matrix_from_json(spec.unitary))
    if u.shape != rho0.shape:
        raise DimensionError("memory unitary and rho0 differ in dimension")
    attack = sec.local_unitary_memory(dim, rho0.shape[0], u)
    return proto.MemoryAttack(attack.channel, rho0, dim)


def build_attack(spec, dim: int) -> proto.AttackModel:
    if isinstance(spec, sc.NoAttackSpec):
        return proto.NoAttack()
    if isinstance(spec, sc.InterceptResendSpec):
        return proto.InterceptResend(spec.policy)
    if isinstance(spec, sc.ChannelSpec):
        return proto.ChannelAttack(build_channel(spec, dim))
    return build_memory(spec, dim)


# ---------------------------------------------------------------------------
# output helpers


def dumps(model) -> str:
    return json.dumps(model.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def csv_text(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([fmt(r[c]) for c in columns])
    return buf.getvalue()


def _write(path: str | None, text: str):
    if path is None:
        return
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text)


def _csv_path(cfg_csv: str | None, out: str) -> str:
    return cfg_csv if cfg_csv is not None else str(Path(out).with_suffix(".csv"))


# ---------------------------------------------------------------------------
# commands; each returns (report model, extra files, passed)


def cmd_verify_spiders(cfg: sc.VerifySpidersConfig):
    reports = []
    for d in cfg.dims:
        res = identity_residuals(standard_pair(d), max_fusion_legs=cfg.max_fusion_legs)
        worst = max(res.values())
        reports.append(sc.SpiderDimReport(dim=d, residuals=res, max_residual=worst,
                                          passed=worst <= cfg.tol))
    worst = max((r.max_residual for r in reports), default=0.0)
    ok = all(r.passed for r in reports)
    return sc.SpiderReport(tol=cfg.tol, dims=reports, max_residual=worst, passed=ok), {}, ok


def cmd_simulate(cfg: sc.SimulateConfig):
    p = cfg.protocol
    pcfg = proto.ProtocolConfig(dim=p.dim, target_key_bits=p.target_key_bits,
                                check_fraction=p.check_fraction,
                                abort_threshold=p.abort_threshold, seed=cfg.seed)
    attack = build_attack(cfg.attack, p.dim)
    run = proto.run_protocol(pcfg, attack)
    exact = (None if isinstance(attack, proto.MemoryAttack)
             else proto.exact_detection_probability(pcfg, attack))
    summary = run.summary()
    report = sc.SimulateReport(attack=run.attack_kind, summary=sc.RunSummary(**summary),
                               n_check=run.n_check, exact_detection_probability=exact,
                               run=run.to_dict() if cfg.include_rounds else None)
    files = {_csv_path(cfg.csv, cfg.out): csv_text(SIMULATE_COLUMNS, [summary])}
    return report, files, True


def _monotone(rows, key) -> bool:
    vals = [key(r) for r in rows]
    return all(b >= a - MONOTONE_SLACK for a, b in zip(vals, vals[1:]))


def cmd_analyze_attack(cfg: sc.AnalyzeAttackConfig):
    d = cfg.dim
    pair = standard_pair(d)
    if isinstance(cfg.attack, sc.MemorySpec):
        attack = build_memory(cfg.attack, d)
        verdict = sec.memory_separation(attack, cfg.n_rounds, tol=cfg.tol, gap_tol=cfg.gap_tol,
                                        pair=pair, seed=cfg.seed)
        mem = sc.MemoryOut(**verdict.to_dict())
        ok = verdict.status != "separation failed"
        return sc.AnalyzeReport(kind="memory", memory=mem, passed=ok), {}, ok

    phi = build_channel(cfg.attack, d)
    if not phi.is_trace_preserving():
        raise ValueError("attack channel is not trace preserving")
    exact = sec.verify_exact_security(phi, pair, tol=cfg.tol, gap_tol=cfg.gap_tol, seed=cfg.seed)
    report = sec.verify_noise_bound(phi, pair, seed=cfg.seed)
    ok = report.consistent and exact.status != "separation failed"
    out = dict(
        kind="channel",
        disturbance=sc.DisturbanceOut(**report.disturbance.to_dict()),
        separability=sc.SeparabilityOut(**report.to_dict()),
        exact=sc.ExactOut(hypothesis_met=exact.hypothesis_met, passed=exact.passed,
                          status=exact.status,
                          gap=exact.gap.as_list() if exact.gap is not None else None),
        proof_replay=exact.residuals,
    )
    files = {}
    if cfg.grid is not None:
        base = (sec.separable_channel(np.diag([1.0] + [0.0] * (d - 1)), d)
                if cfg.grid.base is None else build_channel(cfg.grid.base, d))
        rows = []
        for t in sorted(cfg.grid.t):
            r = sec.verify_noise_bound(ch.mix(base, phi, t), pair, seed=cfg.seed)
            rows.append(sc.GridRow(t=t, eps_z=r.disturbance.eps_z.as_list(),
                                   eps_x=r.disturbance.eps_x.as_list(), gap=r.gap.as_list(),
                                   bound_rhs=r.bound_rhs))
        mono = (_monotone(rows, lambda r: r.eps_z[1]) and _monotone(rows, lambda r: r.eps_x[1])
                and _monotone(rows, lambda r: r.gap[0]))
        sound = all(r.gap[0] <= r.bound_rhs for r in rows)
        ok = ok and mono and sound
        out.update(grid=rows, grid_monotone=mono)
        flat = [dict(t=r.t, eps_z_lower=r.eps_z[0], eps_z_upper=r.eps_z[1],
                     eps_x_lower=r.eps_x[0], eps_x_upper=r.eps_x[1],
                     gap_lower=r.gap[0], gap_upper=r.gap[1], bound_rhs=r.bound_rhs)
                for r in rows]
        files[_csv_path(cfg.csv, cfg.out)] = csv_text(GRID_COLUMNS, flat)
    return sc.AnalyzeReport(passed=ok, **out), files, ok


def cmd_calibrate(cfg: sc.CalibrateConfig):
    art = sec.calibrate(cfg.dim, cfg.seeds, seed=cfg.seed, env=cfg.env_dim)
    art["date"] = cfg.date
    model = sc.CalibrationArtifact(**art)
    ok = model.violations == 0 and model.n_empirical <= model.n_analytic
    return model, {}, ok


COMMANDS = {
    "verify-spiders": cmd_verify_spiders,
    "simulate": cmd_simulate,
    "analyze-attack": cmd_analyze_attack,
    "calibrate": cmd_calibrate,
}

DEFAULT_OUT = {
    "verify-spiders": "spiders.json",
    "simulate": "run.json",
    "analyze-attack": "analysis.json",
    "calibrate": "calibration.json",
}


# ---------------------------------------------------------------------------
# argument handling


def load_config(command: str, path: str | None, seed: int | None, out: str | None):
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["out"] = out
    raw.setdefault("out", DEFAULT_OUT[command])
    try:
        return sc.CONFIGS[command].model_validate(raw)
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bb84lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output JSON path (overrides the config)")
        p.add_argument("--seed", type=int, help="seed (overrides the config)")
        p.add_argument("--quiet", action="store_true", help="no summary on stdout")
    p = sub.add_parser("schema", help="print a published JSON schema")
    p.add_argument("name", choices=sorted(COMMANDS))
    p.add_argument("--output", action="store_true", help="output schema instead of config schema")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        schema = sc.output_schema(args.name) if args.output else sc.config_schema(args.name)
        print(json.dumps(schema, indent=2, sort_keys=True))
        return EXIT_OK
    try:
        cfg = load_config(args.command, args.config, args.seed, args.out)
        report, files, ok = COMMANDS[args.command](cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DimensionError as e:
        print(f"dimension error: {e}", file=sys.stderr)
        return EXIT_DIMENSION
    except ValueError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    _write(cfg.out, dumps(report))
    for path, text in files.items():
        _write(path, text)
    if not args.quiet:
        status = "ok" if ok else "FAILED"
        print(f"{args.command}: {status} -> {cfg.out}")
    return EXIT_OK if ok else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
