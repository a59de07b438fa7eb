"""Batch front end: JSON configs in, machine-readable reports out.

Four commands share one strict config schema.  ``inspect`` runs the
full residual suite over sampled points, ``verify`` checks the tensor
identities and the harmonicity verdict coupling, ``classify`` reports
the Gray-Hervella label, and ``flow`` descends the discrete energy and
writes its trace.  Reports are deterministic for a fixed config and
seed; every float is serialized with 17 significant digits.

Exit codes: 0 pass, 1 residual failure, 2 config error, 3 geometry
error, 4 flow stall.
"""

from __future__ import annotations

import argparse
import json
import sys
import unicodedata
from pathlib import Path

import numpy as np

from .catalog import build_structure, sample_points, spec_from_config
from .diagnostics import (
    IDENTITY_NAMES,
    classify_gh,
    coderivative_xi,
    hermitian_harmonicity,
    point_scale,
    run_diagnostics,
    section_residuals,
    star_ricci,
)
from .exprlang import EvalError, ParseError
from .flow import (
    GridError,
    calibrate_sign,
    descend,
    energy,
    gradient,
    grid_payload,
    l2_norm,
    random_grid,
    write_trace_csv,
)
from .geometry import GeometryError

__all__ = ["ConfigError", "load_config", "render_json", "run_command", "main"]

EXIT_PASS = 0
EXIT_RESIDUAL = 1
EXIT_CONFIG = 2
EXIT_GEOMETRY = 3
EXIT_STALL = 4

_TOP_KEYS = {
    "inspect": ("schema", "command", "geometry", "points", "tol"),
    "verify": ("schema", "command", "geometry", "points", "tol"),
    "classify": ("schema", "command", "geometry", "points", "tol"),
    "flow": ("schema", "command", "flow", "tol"),
}
_POINT_KEYS = ("count", "seed")
_FLOW_KEYS = ("seed", "n", "m", "amplitude", "max_iter", "tol_grad")

# residuals that vanish exactly when |d*xi| does (Sections 2 and 5)
_COUPLED = (
    "comm_JLapJ",
    "herm_defect",
    "cond_iv",
    "torsion_iv_a",
    "torsion_iv_b",
)


class ConfigError(ValueError):
    """Malformed or out-of-schema run configuration."""


# -- config -----------------------------------------------------------------


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _check_schema(cfg: dict, command: str) -> None:
    allowed = _TOP_KEYS[command]
    unknown = [k for k in cfg if k not in allowed]
    if unknown:
        raise ConfigError(f"unknown config fields: {', '.join(sorted(unknown))}")
    if cfg.get("schema") != 1:
        raise ConfigError("config needs \"schema\": 1")
    if "command" in cfg and cfg["command"] != command:
        raise ConfigError(
            f"config is for command {cfg['command']!r}, not {command!r}"
        )
    if command == "flow":
        if "flow" not in cfg:
            raise ConfigError("flow command needs a \"flow\" section")
    elif "geometry" not in cfg:
        raise ConfigError(f"{command} command needs a \"geometry\" section")


def _resolve_tol(cfg: dict, override) -> float:
    tol = override if override is not None else cfg.get("tol", 1e-6)
    if not isinstance(tol, (int, float)) or isinstance(tol, bool) or not tol > 0:
        raise ConfigError("tol must be a positive number")
    return float(tol)


def _int_field(section: dict, key: str, default=None, minimum=None):
    value = section.get(key, default)
    if value is None:
        raise ConfigError(f"missing required field {key!r}")
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"field {key!r} must be an integer")
    if minimum is not None and value < minimum:
        raise ConfigError(f"field {key!r} must be at least {minimum}")
    return value


def _float_field(section: dict, key: str, default):
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"field {key!r} must be a number")
    return float(value)


def _resolve_points(cfg: dict, spec, seed_override) -> np.ndarray:
    section = cfg.get("points", {})
    if not isinstance(section, dict):
        raise ConfigError("\"points\" must be an object")
    unknown = [k for k in section if k not in _POINT_KEYS]
    if unknown:
        raise ConfigError(f"unknown points fields: {', '.join(sorted(unknown))}")
    count = _int_field(section, "count", default=20, minimum=1)
    seed = _int_field(section, "seed", default=0, minimum=0)
    if seed_override is not None:
        seed = seed_override
    return sample_points(spec, count, seed)


# -- serialization ----------------------------------------------------------


def render_json(value) -> str:
    """Deterministic JSON with floats at 17 significant digits."""
    if value is None or isinstance(value, (bool, np.bool_)):
        return json.dumps(bool(value) if value is not None else None)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not np.isfinite(v):
            raise ValueError("non-finite number in report")
        return format(v, ".17g")
    if isinstance(value, dict):
        items = (f"{json.dumps(str(k))}: {render_json(v)}" for k, v in value.items())
        return "{" + ", ".join(items) + "}"
    if isinstance(value, (list, tuple, np.ndarray)):
        return "[" + ", ".join(render_json(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {type(value).__name__}")


def _ascii(label: str) -> str:
    return unicodedata.normalize("NFKD", label).encode("ascii", "ignore").decode()


def _geometry_echo(cfg: dict) -> dict:
    return dict(cfg["geometry"])


# -- commands ---------------------------------------------------------------


def _run_inspect(cfg: dict, tol: float, seed_override) -> tuple[dict, int]:
    spec = spec_from_config(cfg["geometry"])
    structure = build_structure(spec)
    pts = _resolve_points(cfg, spec, seed_override)
    report = run_diagnostics(structure, pts, tol=tol)

    point_rows = []
    components: set[str] = set()
    for p, row in zip(pts, report.residuals):
        label = classify_gh(structure, [p], tol)["label"]
        if label != "Kahler":
            components.update(label.split("+"))
        point_rows.append(
            {
                "x": [float(v) for v in p],
                "residuals": dict(row),
                "class": label,
            }
        )
    ordered = [w for w in ("W1", "W2", "W3", "W4") if w in components]
    label = "+".join(ordered) if ordered else "Kahler"

    expected_zero = tuple(spec.metadata.get("expected_zero", ()))
    expected_class = spec.metadata.get("expected_class")
    checked = list(IDENTITY_NAMES) + [k for k in expected_zero]
    ok = all(report.passes[k] for k in checked)
    class_match = None
    if expected_class is not None:
        class_match = _ascii(str(expected_class)) == label
        ok = ok and class_match

    payload = {
        "schema": 1,
        "geometry": _geometry_echo(cfg),
        "sign_audit": "paper-convention",
        "points": point_rows,
        "summary": {
            "command": "inspect",
            "tol": tol,
            "count": len(point_rows),
            "label": label,
            "expected_class": expected_class,
            "class_match": class_match,
            "checked": checked,
            "max_residuals": dict(report.max_residuals),
            "passes": dict(report.passes),
            "metadata": dict(report.metadata),
        },
        "pass": ok,
    }
    return payload, EXIT_PASS if ok else EXIT_RESIDUAL


def _run_verify(cfg: dict, tol: float, seed_override) -> tuple[dict, int]:
    spec = spec_from_config(cfg["geometry"])
    structure = build_structure(spec)
    pts = _resolve_points(cfg, spec, seed_override)
    report = run_diagnostics(structure, pts, tol=tol)

    mixed = 0
    route_gap = uperp = ricci_gap = 0.0
    for p, row, scale in zip(pts, report.residuals, report.scales):
        harmonic = row["harmonic"] < tol * scale
        for name in _COUPLED:
            if (row[name] < tol * scale) != harmonic:
                mixed += 1
                break
        cod = coderivative_xi(structure, p)
        route_gap = max(route_gap, cod.route_gap / scale)
        uperp = max(uperp, cod.uperp_defect / scale)
        ricci_gap = max(ricci_gap, star_ricci(structure, p).route_gap / scale)

    checks = []
    for name in IDENTITY_NAMES:
        value = max(
            row[name] / scale for row, scale in zip(report.residuals, report.scales)
        )
        checks.append(
            {"name": f"identity:{name}", "value": value, "pass": value < tol}
        )
    checks.append(
        {
            "name": "harmonicity_coupling",
            "value": float(mixed),
            "pass": mixed == 0,
        }
    )
    for name, value in (
        ("coderivative_route_gap", route_gap),
        ("coderivative_uperp_defect", uperp),
        ("star_ricci_route_gap", ricci_gap),
    ):
        checks.append({"name": name, "value": value, "pass": value < tol})

    ok = all(c["pass"] for c in checks)
    payload = {
        "schema": 1,
        "geometry": _geometry_echo(cfg),
        "sign_audit": "paper-convention",
        "checks": checks,
        "summary": {
            "command": "verify",
            "tol": tol,
            "count": len(pts),
            "coupled_residuals": list(_COUPLED),
        },
        "pass": ok,
    }
    return payload, EXIT_PASS if ok else EXIT_RESIDUAL


def _run_classify(cfg: dict, tol: float, seed_override) -> tuple[dict, int]:
    spec = spec_from_config(cfg["geometry"])
    structure = build_structure(spec)
    pts = _resolve_points(cfg, spec, seed_override)
    verdict = classify_gh(structure, pts, tol)
    expected = spec.metadata.get("expected_class")
    match = None
    if expected is not None:
        match = _ascii(str(expected)) == verdict["label"]
    ok = match is not False
    payload = {
        "schema": 1,
        "geometry": _geometry_echo(cfg),
        "sign_audit": "paper-convention",
        "label": verdict["label"],
        "component_norms": verdict["component_norms"],
        "summary": {
            "command": "classify",
            "tol": tol,
            "count": len(pts),
            "expected_class": expected,
            "class_match": match,
        },
        "pass": ok,
    }
    return payload, EXIT_PASS if ok else EXIT_RESIDUAL


def _run_flow(cfg: dict, tol: float, seed_override, out) -> tuple[dict, int]:
    section = cfg["flow"]
    if not isinstance(section, dict):
        raise ConfigError("\"flow\" must be an object")
    unknown = [k for k in section if k not in _FLOW_KEYS]
    if unknown:
        raise ConfigError(f"unknown flow fields: {', '.join(sorted(unknown))}")
    seed = _int_field(section, "seed", default=0, minimum=0)
    if seed_override is not None:
        seed = seed_override
    n = _int_field(section, "n", default=2, minimum=1)
    m = _int_field(section, "m", default=None)
    amplitude = _float_field(section, "amplitude", 0.3)
    max_iter = _int_field(section, "max_iter", default=5000, minimum=1)
    tol_grad = _float_field(section, "tol_grad", 1e-5)
    if not tol_grad > 0:
        raise ConfigError("field 'tol_grad' must be positive")

    grid = random_grid(seed, n, m, amplitude)
    initial_energy = energy(grid)
    initial_grad = l2_norm(grid, gradient(grid))
    sign = calibrate_sign(grid) if initial_grad > 1e-10 else None

    result = descend(grid, max_iter=max_iter, tol_grad=tol_grad)
    energies = [row.energy for row in result.trace]
    monotone = all(b <= a for a, b in zip(energies, energies[1:]))

    if out is not None:
        base = Path(out)
        stem = base.parent / base.stem
        write_trace_csv(result.trace, f"{stem}.trace.csv")
        Path(f"{stem}.grid.json").write_text(
            render_json(grid_payload(result.grid)) + "\n"
        )

    ok = result.converged and monotone
    payload = {
        "schema": 1,
        "flow": dict(section),
        "sign_audit": "paper-convention",
        "sign": sign,
        "initial_energy": initial_energy,
        "final_energy": energies[-1],
        "iterations": len(result.trace) - 1,
        "terminal_grad_norm": result.terminal_grad_norm,
        "terminal_pointwise": result.terminal_pointwise,
        "max_drift": result.max_drift,
        "monotone": monotone,
        "converged": result.converged,
        "stalled": result.stalled,
        "message": result.message,
        "pass": ok,
    }
    if result.stalled:
        return payload, EXIT_STALL
    return payload, EXIT_PASS if ok else EXIT_RESIDUAL


# -- entry point --------------------------------------------------------------


def run_command(command: str, cfg: dict, tol=None, seed=None, out=None) -> tuple[dict, int]:
    """Dispatch a validated command; returns (report payload, exit code)."""
    _check_schema(cfg, command)
    resolved = _resolve_tol(cfg, tol)
    if command == "inspect":
        return _run_inspect(cfg, resolved, seed)
    if command == "verify":
        return _run_verify(cfg, resolved, seed)
    if command == "classify":
        return _run_classify(cfg, resolved, seed)
    return _run_flow(cfg, resolved, seed, out)


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="torsionflow",
        description="Diagnostics and gradient flow for almost Hermitian structures.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "inspect": "full residual suite over sampled points",
        "verify": "tensor identities and harmonicity verdict coupling",
        "classify": "Gray-Hervella class label",
        "flow": "energy descent on a periodic grid",
    }
    for name, text in helps.items():
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=True, help="JSON run configuration")
        cmd.add_argument("--out", help="write the report (and flow artifacts) here")
        cmd.add_argument("--tol", type=float, help="override the config tolerance")
        cmd.add_argument("--seed", type=int, help="override the sampling seed")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        payload, code = run_command(
            args.command, cfg, tol=args.tol, seed=args.seed, out=args.out
        )
    except (ConfigError, GridError) as exc:
        print(render_json({"schema": 1, "error": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except (GeometryError, ParseError, EvalError) as exc:
        print(render_json({"schema": 1, "error": str(exc)}), file=sys.stderr)
        return EXIT_GEOMETRY

    text = render_json(payload)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
