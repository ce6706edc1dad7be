"""Batch front end: config parsing, experiment orchestration, report files.

Configs are flat ``key = value`` text with bracketed section headers
(INI style).  All randomness flows from a single seed recorded in the
reports, outputs carry no timestamps, and identical config + seed produces
byte-identical files.  Exit codes: 0 = pass, 2 = checked and failed
(anomaly), 1 = operational error.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np

from . import foliation as _foliation
from . import heteroclinic as _het
from . import minimize as _minimize
from . import orbit as _orbit
from .field import (
    BoxAxis,
    GridError,
    PeriodicAxis,
    ScalarField,
    constant_field,
    dump_csv,
    field_from_values,
    load_csv,
)
from .integrand import get_integrand

EXIT_PASS = 0
EXIT_ERROR = 1
EXIT_FAIL = 2


class ConfigError(ValueError):
    pass


def _read_config(path) -> configparser.ConfigParser:
    cfg = configparser.ConfigParser(inline_comment_prefixes=("#",))
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cfg.read(path)
    return cfg


def _split_list(raw: str) -> list[str]:
    return [tok.strip() for tok in raw.split(",") if tok.strip()]


def _per_axis(raw: str, n: int, name: str) -> list[str]:
    toks = _split_list(raw)
    if len(toks) == 1:
        return toks * n
    if len(toks) != n:
        raise ConfigError(f"{name} needs 1 or {n} comma-separated entries, got {len(toks)}")
    return toks


def _points_per_unit(tok: str) -> int:
    val = float(tok)
    if val >= 4 and abs(val - round(val)) < 1e-9:
        return int(round(val))
    if 0 < val < 1:
        m = 1.0 / val
        if abs(m - round(m)) < 1e-6 and round(m) >= 4:
            return int(round(m))
        raise ConfigError(f"spacing h={tok} is not 1/m for integer m >= 4")
    raise ConfigError(f"cannot read grid resolution from {tok!r}")


def _build_axes(cfg) -> tuple:
    if not cfg.has_section("grid"):
        raise ConfigError("missing [grid] section")
    g = cfg["grid"]
    try:
        n = int(g.get("n", "1"))
    except ValueError as exc:
        raise ConfigError(f"bad grid dimension: {exc}") from None
    kinds = _per_axis(g.get("kind", "box"), n, "grid.kind")
    raw_m = g.get("m", "") or g.get("h", "")
    if not raw_m:
        raise ConfigError("grid needs m (points per unit) or h (spacing)")
    ms = [_points_per_unit(tok) for tok in _per_axis(raw_m, n, "grid.m")]
    los = _per_axis(g.get("lo", "0"), n, "grid.lo")
    his = _per_axis(g.get("hi", "1"), n, "grid.hi")
    periods = _per_axis(g.get("period", "1"), n, "grid.period")
    axes = []
    for i in range(n):
        try:
            if kinds[i] == "box":
                axes.append(BoxAxis(int(los[i]), int(his[i]), ms[i]))
            elif kinds[i] == "periodic":
                axes.append(PeriodicAxis(int(periods[i]), ms[i]))
            else:
                raise ConfigError(f"unknown axis kind {kinds[i]!r}")
        except (ValueError, GridError) as exc:
            raise ConfigError(f"bad grid axis {i + 1}: {exc}") from None
    return tuple(axes)


def _build_initial(cfg, axes) -> ScalarField:
    sec = cfg["initial"] if cfg.has_section("initial") else {}
    kind = sec.get("kind", "constant")
    if kind == "constant":
        return constant_field(axes, float(sec.get("value", "0")))
    if kind == "ramp":
        ax0 = axes[0]
        if not isinstance(ax0, BoxAxis):
            raise ConfigError("ramp initial data needs a box first axis")
        x = ax0.coords()
        ramp = (x - ax0.lo) / (ax0.hi - ax0.lo)
        shape = [1] * len(axes)
        shape[0] = x.size
        samples = np.broadcast_to(
            ramp.reshape(shape), tuple(a.nodes for a in axes)
        ).copy()
        return field_from_values(axes, samples)
    if kind == "member":
        direction = [int(tok) for tok in _split_list(sec.get("direction", "1"))]
        b = float(sec.get("b", "0"))
        fam = _foliation.FoliationFamily(direction, [b - 1.0, b + 1.0], axes)
        return fam.member_at(b)
    raise ConfigError(f"unknown initial kind {kind!r}")


def _relax_options(cfg, seed: int) -> _minimize.RelaxOptions:
    sec = cfg["relax"] if cfg.has_section("relax") else {}
    clamp_raw = sec.get("clamp", "") if hasattr(sec, "get") else ""
    clamp = None
    if clamp_raw:
        toks = _split_list(clamp_raw)
        if len(toks) != 2:
            raise ConfigError("clamp needs two comma-separated values")
        clamp = (float(toks[0]), float(toks[1]))
    try:
        return _minimize.RelaxOptions(
            max_iterations=int(sec.get("max_iterations", "200000")),
            gradient_tolerance=float(sec.get("gradient_tolerance", "1e-10")),
            step_rule=sec.get("step_rule", "adaptive"),
            initial_step=float(sec.get("initial_step", "1e-5")),
            clamp=clamp,
            seed=seed,
            pin_boundary=_get_bool(sec, "pin_boundary", True),
            log_every=int(sec.get("log_every", "100")),
        )
    except ValueError as exc:
        raise ConfigError(f"bad relax options: {exc}") from None


def _get_bool(sec, key, default):
    raw = sec.get(key, None) if hasattr(sec, "get") else None
    if raw is None:
        return default
    raw = raw.strip().lower()
    if raw in ("1", "true", "yes", "on"):
        return True
    if raw in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"bad boolean for {key}: {raw!r}")


def _seed(cfg, override) -> int:
    if override is not None:
        return int(override)
    if cfg.has_section("experiment"):
        return int(cfg["experiment"].get("seed", "0"))
    return 0


def _scan_radius(cfg) -> int:
    if cfg.has_section("scan"):
        return int(cfg["scan"].get("radius", "3"))
    return 3


def _tol(cfg, key, default) -> float:
    if cfg.has_section("tolerances"):
        val = float(cfg["tolerances"].get(key, str(default)))
    else:
        val = default
    if val <= 0:
        raise ConfigError(f"tolerance {key} must be positive")
    return val


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _out_dir(cfg, override) -> Path:
    if override is not None:
        out = Path(override)
    elif cfg.has_section("experiment") and cfg["experiment"].get("out", ""):
        out = Path(cfg["experiment"]["out"])
    else:
        out = Path("results")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _family_from_config(cfg, axes) -> _foliation.FoliationFamily:
    if not cfg.has_section("foliate"):
        raise ConfigError("missing [foliate] section")
    sec = cfg["foliate"]
    direction = [int(tok) for tok in _split_list(sec.get("direction", "1"))]
    return _foliation.build_family(
        direction,
        float(sec.get("b_min", "-5")),
        float(sec.get("b_max", "5")),
        int(sec.get("count", "11")),
        axes,
    )


# ---------------------------------------------------------------------------
# subcommands


def cmd_relax(cfg, out: Path, seed: int) -> int:
    axes = _build_axes(cfg)
    name = cfg["integrand"].get("name", "allen-cahn") if cfg.has_section("integrand") else "allen-cahn"
    integrand = get_integrand(name, len(axes))
    u0 = _build_initial(cfg, axes)
    opts = _relax_options(cfg, seed)
    result = _minimize.relax(u0, integrand, opts)
    dump_csv(result.field, out / "field.csv")
    hist = result.history
    with open(out / "iterations.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("iteration,energy,grad_norm,step\n")
        for it, e, g, s in zip(
            hist["iteration"], hist["energy"], hist["grad_norm"], hist["step"]
        ):
            fh.write(f"{int(it)},{e:.17g},{g:.17g},{s:.17g}\n")
    msec = cfg["minimality"] if cfg.has_section("minimality") else {}
    report = _minimize.minimality_spot_check(
        result.field,
        integrand,
        trials=int(msec.get("trials", "50")),
        max_radius=float(msec.get("max_radius", "2.0")),
        seed=seed,
    )
    _write_json(
        out / "minimality.json",
        {
            "kind": "minimality",
            "passed": report.passed,
            "trials": report.trials,
            "worst_delta": report.worst_delta,
            "worst_trial": report.worst_trial,
            "failures": report.failures,
            "seed": report.seed,
            "note": "sampled evidence of local minimality, not certification",
        },
    )
    _write_json(
        out / "relax_report.json",
        {
            "kind": "relax",
            "passed": result.converged,
            "status": result.status,
            "iterations": result.iterations,
            "final_energy": result.final_energy,
            "final_gradient_norm": result.final_gradient_norm,
            "seed": seed,
        },
    )
    return EXIT_PASS if result.converged else EXIT_FAIL


def cmd_classify(cfg, field_file, out: Path, seed: int) -> int:
    u = load_csv(field_file)
    radius = _scan_radius(cfg)
    order_tol = _tol(cfg, "order", 1e-8)
    witnesses = _orbit.self_intersection_scan(u, radius, order_tol)
    _write_json(
        out / "witnesses.json",
        {
            "kind": "self-intersection-scan",
            "passed": not witnesses,
            "radius": radius,
            "witnesses": [
                {
                    "kbar": list(w.kbar.spatial) + [w.kbar.vertical],
                    "relation": w.relation.kind.value,
                    "points": [
                        {"point": list(p.point), "delta": p.delta}
                        for p in w.relation.witnesses
                    ],
                }
                for w in witnesses
            ],
        },
    )
    if witnesses:
        print(f"self-intersections detected: {len(witnesses)} crossing translates")
        return EXIT_FAIL
    try:
        sys_u = _orbit.extract_invariants(u, radius, order_tol, require_no_self_intersections=False)
    except (_orbit.InvariantExtractionError, _orbit.LatticeEnumerationError) as exc:
        _write_json(
            out / "invariants.json",
            {"kind": "invariants", "passed": False, "error": str(exc)},
        )
        print(f"invariant extraction failed: {exc}")
        return EXIT_FAIL
    payload = sys_u.to_json_dict()
    payload.update({"kind": "invariants", "passed": True, "admissible": _orbit.is_admissible(sys_u)})
    _write_json(out / "invariants.json", payload)
    return EXIT_PASS


def cmd_foliate(cfg, out: Path, seed: int) -> int:
    axes = _build_axes(cfg)
    fam = _family_from_config(cfg, axes)
    sec = cfg["foliate"]
    fol_tol = _tol(cfg, "foliation", 1e-6)
    steps = int(sec.get("envelope_steps", "60"))
    env_sample_raw = sec.get("envelope_sample", "")
    if env_sample_raw:
        k = min(int(env_sample_raw), len(fam.members))
        sample = sorted(set(np.linspace(0, len(fam.members) - 1, k).astype(int).tolist()))
    else:
        sample = None
    report = _foliation.verify_foliation(fam, fol_tol)
    env_report = _foliation.envelope_identity_check(fam, fol_tol, steps=steps, sample=sample)
    order_fields = list(fam.members) + [fam.lower, fam.upper]
    extra = sec.get("extra_member_csv", "")
    if extra:
        order_fields.append(load_csv(extra))
    order_report = _orbit.total_order_check(order_fields, _tol(cfg, "order", 1e-8))
    manifest = {
        "kind": "family-manifest",
        "direction": list(fam.direction),
        "omega": [float(w) for w in fam.omega],
        "b_grid": [float(b) for b in fam.b_grid],
        "members": [f"member_{i:04d}.csv" for i in range(len(fam.members))],
        "written": _get_bool(sec, "write_members", False),
    }
    if manifest["written"]:
        for i, member in enumerate(fam.members):
            dump_csv(member, out / manifest["members"][i])
    _write_json(out / "family_manifest.json", manifest)
    passed = report.passed and env_report.passed and order_report.passed
    _write_json(
        out / "foliation_report.json",
        {
            "kind": "foliate",
            "passed": passed,
            "foliation": report.to_json_dict(),
            "envelope_identity": env_report.to_json_dict(),
            "total_order": order_report.to_json_dict(),
        },
    )
    return EXIT_PASS if passed else EXIT_FAIL


def cmd_rigidity(cfg, field_file, out: Path, seed: int) -> int:
    axes = _build_axes(cfg)
    fam = _family_from_config(cfg, axes)
    u = load_csv(field_file)
    match = _foliation.rigidity_check(
        u,
        fam,
        tol=_tol(cfg, "match", 1e-3),
        order_tol=_tol(cfg, "order", 1e-8),
        radius=_scan_radius(cfg),
    )
    _write_json(out / "rigidity_report.json", match.to_json_dict())
    return EXIT_PASS if match.matched else EXIT_FAIL


def cmd_asymptote(cfg, field_file, out: Path, seed: int) -> int:
    axes = _build_axes(cfg)
    fam = _family_from_config(cfg, axes)
    u = load_csv(field_file)
    sec = cfg["asymptote"] if cfg.has_section("asymptote") else {}
    direction = [int(tok) for tok in _split_list(sec.get("direction", ""))]
    if not direction:
        raise ConfigError("missing [asymptote] direction")
    n = len(axes)
    e_last = np.zeros(n + 1)
    e_last[-1] = 1.0
    gamma2 = _orbit.lattice_in_orthocomplement([e_last], _scan_radius(cfg))
    result = _foliation.asymptotic_limit(
        u,
        fam,
        gamma2,
        direction,
        steps=int(sec.get("steps", "80")),
        tol=float(sec.get("tol", "1e-7")),
        classify_tol=float(sec.get("classify_tol", "1e-5")),
        radius=_scan_radius(cfg),
    )
    _write_json(out / "asymptote_report.json", result.to_json_dict())
    return EXIT_PASS if result.classification != "unclassified" else EXIT_FAIL


def cmd_report(out: Path) -> int:
    reports = sorted(out.glob("*.json"))
    seen = 0
    failed = 0
    for path in reports:
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError):
            continue
        if not isinstance(obj, dict) or "passed" not in obj:
            continue
        seen += 1
        status = "PASS" if obj["passed"] else "FAIL"
        if not obj["passed"]:
            failed += 1
        print(f"{path.name}: {status} ({obj.get('kind', 'report')})")
    if seen == 0:
        print("no reports found", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_PASS if failed == 0 else EXIT_FAIL


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="phaselab",
        description="batch experiments for periodic variational problems",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("relax", "classify", "foliate", "rigidity", "asymptote"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        if name in ("classify", "rigidity", "asymptote"):
            p.add_argument("--field", required=True)
    p_rep = sub.add_parser("report")
    p_rep.add_argument("--out", required=True)
    args = parser.parse_args(argv)

    try:
        if args.command == "report":
            return cmd_report(Path(args.out))
        cfg = _read_config(args.config)
        seed = _seed(cfg, args.seed)
        out = _out_dir(cfg, args.out)
        if args.command == "relax":
            return cmd_relax(cfg, out, seed)
        if args.command == "classify":
            return cmd_classify(cfg, args.field, out, seed)
        if args.command == "foliate":
            return cmd_foliate(cfg, out, seed)
        if args.command == "rigidity":
            return cmd_rigidity(cfg, args.field, out, seed)
        if args.command == "asymptote":
            return cmd_asymptote(cfg, args.field, out, seed)
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, GridError, OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (_minimize.EnergyDivergedError, _het.BvpConvergenceError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_ERROR


def script_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    script_main()
