"""Command-line entry point.

Configuration comes from built-in defaults, then an optional flat
``key = value`` file (``--config``), then command-line flags; later sources
win. Every key has a flag of the same name with dashes, e.g. ``--refine-tol``.

Exit status: 0 success, 1 verification failure, 2 configuration error,
3 numerical failure. Errors are written to stderr as one JSON object with
``code``, ``message`` and ``context``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import DomainError, NumericalError, QDiracError
from .qcore import build_lattice
from .qtrig import QTrigContext, trig_zeros
from .solver import (BoundarySpec, Problem, free_solutions, make_potential, propagate,
                     successive_approx, wronskian)
from .spectrum import boundary_case, char_delta, find_eigenvalues

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


# name -> (parser, default)
_KEYS = {
    "q": (float, 0.5),
    "a": (float, 1.0),
    "depth": (int, 64),
    "k11": (float, 0.0),
    "k12": (float, 1.0),
    "k21": (float, 1.0),
    "k22": (float, 0.0),
    "potential_p": (str, "zero"),
    "potential_r": (str, "zero"),
    "count": (int, 8),
    "both_signs": (_bool, True),
    "scan_density": (int, 96),
    "precision_bits": (int, 53),
    "extended_bits": (int, 256),
    "refine_tol": (float, 1e-12),
    "solver_tol": (float, 1e-12),
    "format": (str, "csv"),
    "output": (str, "-"),
}


class ConfigError(QDiracError):
    pass


@dataclass(frozen=True)
class RunConfig:
    q: float
    a: float
    depth: int
    boundary: BoundarySpec
    potential_p: str
    potential_r: str
    count: int
    both_signs: bool
    scan_density: int
    precision_bits: int
    extended_bits: int
    refine_tol: float
    solver_tol: float
    format: str
    output: str

    @classmethod
    def from_mapping(cls, values: Dict[str, object]) -> "RunConfig":
        unknown = sorted(set(values) - set(_KEYS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        v = {k: values.get(k, default) for k, (_, default) in _KEYS.items()}
        if v["format"] not in ("csv", "json"):
            raise ConfigError(f"format must be csv or json, got {v['format']!r}")
        for key in ("count", "scan_density", "precision_bits", "extended_bits"):
            if v[key] < 1:
                raise ConfigError(f"{key} must be >= 1")
        for key in ("refine_tol", "solver_tol"):
            if not v[key] > 0:
                raise ConfigError(f"{key} must be positive")
        boundary = BoundarySpec(v.pop("k11"), v.pop("k12"), v.pop("k21"), v.pop("k22"))
        cfg = cls(boundary=boundary, **v)
        cfg.problem()  # validates lattice and potentials
        return cfg

    def lattice(self):
        return build_lattice(self.q, self.a, self.depth)

    def problem(self) -> Problem:
        lat = self.lattice()
        return Problem(lat, make_potential(self.potential_p, lat),
                       make_potential(self.potential_r, lat), self.boundary)

    def context(self) -> QTrigContext:
        return QTrigContext(self.q, precision_bits=self.precision_bits,
                            extended_bits=self.extended_bits)


def parse_config_text(text: str, origin: str = "<config>") -> Dict[str, object]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: Dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{origin}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        try:
            out[key] = _KEYS[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"{origin}:{lineno}: bad value for {key}: {exc}") from None
    return out


def default_config_text() -> str:
    lines = []
    for key, (_, default) in _KEYS.items():
        if isinstance(default, bool):
            default = "true" if default else "false"
        lines.append(f"{key} = {default}")
    return "\n".join(lines) + "\n"


# -- output helpers ---------------------------------------------------------

def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- subcommands -------------------------------------------------------------

def cmd_eigenvalues(cfg: RunConfig, args) -> tuple:
    rep = find_eigenvalues(cfg.problem(), cfg.context(), count=cfg.count,
                           both_signs=cfg.both_signs, scan_density=cfg.scan_density,
                           refine_tol=cfg.refine_tol)
    text = rep.to_json() if cfg.format == "json" else rep.to_csv()
    return text, EXIT_OK


def cmd_eigenfunction(cfg: RunConfig, args) -> tuple:
    m = args.m
    count = max(cfg.count, abs(m), 1)
    rep = find_eigenvalues(cfg.problem(), cfg.context(), count=count,
                           both_signs=m < 0 or cfg.both_signs, scan_density=cfg.scan_density,
                           refine_tol=cfg.refine_tol)
    try:
        eig = rep.by_index(m)
    except KeyError:
        raise DomainError(f"no eigenvalue with index {m}") from None
    phi = eig.phi
    lat = phi.lattice
    if cfg.format == "json":
        return _json_text({
            "m": m,
            "lambda": eig.lam,
            "q_norm_sq": eig.q_norm_sq,
            "nodes": [{"n": n, "t": float(t), "y1": float(u), "y2": float(v)}
                      for n, (t, u, v) in enumerate(zip(lat.nodes, phi.y1.values,
                                                        phi.y2.values))],
            "ext": {"t": float(lat.ext_node), "y2": _num(phi.y2.ext_value)},
        }), EXIT_OK
    rows = [(n, float(t), float(u), float(v))
            for n, (t, u, v) in enumerate(zip(lat.nodes, phi.y1.values, phi.y2.values))]
    rows.append((-1, float(lat.ext_node), "", float(phi.y2.ext_value)))
    return _csv_text(["n", "t", "y1", "y2"], rows), EXIT_OK


def cmd_zeros(cfg: RunConfig, args) -> tuple:
    table = trig_zeros(cfg.context(), args.kind, cfg.count, refinement_tol=cfg.refine_tol)
    if cfg.format == "json":
        return _json_text({"kind": table.kind, "q": table.q,
                           "zeros": [{"m": m, "zero": float(z), "residual": float(r)}
                                     for m, (z, r) in enumerate(zip(table.zeros,
                                                                    table.residuals), 1)]}), EXIT_OK
    return table.to_csv(), EXIT_OK


def cmd_delta(cfg: RunConfig, args) -> tuple:
    if args.points < 2 or not args.lambda_max > args.lambda_min:
        raise ConfigError("need --points >= 2 and --lambda-max > --lambda-min")
    lam = np.linspace(args.lambda_min, args.lambda_max, args.points)
    d = np.atleast_1d(char_delta(cfg.problem(), cfg.context(), lam))
    if cfg.format == "json":
        return _json_text({"samples": [{"lambda": float(x), "delta": _num(y)}
                                       for x, y in zip(lam, d)]}), EXIT_OK
    return _csv_text(["lambda", "delta"], zip(lam.tolist(), d.tolist())), EXIT_OK


def run_verification(cfg: RunConfig) -> List[dict]:
    """Property suite on the configured problem; one record per check."""
    problem = cfg.problem()
    ctx = cfg.context()
    lat = problem.lattice
    zero_pot = not (np.any(problem.p.values) or np.any(problem.r.values))
    checks = []

    def add(name, value, tol):
        checks.append({"check": name, "passed": bool(value <= tol), "value": float(value),
                       "tol": float(tol)})

    rep = find_eigenvalues(problem, ctx, count=cfg.count, both_signs=cfg.both_signs,
                           scan_density=cfg.scan_density, refine_tol=cfg.refine_tol)
    for name, c in rep.verification_flags.items():
        if name == "reality":
            checks.append({"check": name, "passed": bool(c.passed), "value": c.value,
                           "tol": c.tol})
        elif name == "asymptotics":
            add(name, c.value, 1.0)
        else:
            add(name, c.value, c.tol)

    worst = 0.0
    for lam in (0.5, 2.0, 8.0):
        s1, s2 = free_solutions(lat, ctx, lam)
        worst = max(worst, max(abs(wronskian(s1, s2, n) - 1.0) for n in range(lat.size)))
    add("wronskian", worst, 1e-11)

    lams = [0.7, -1.3, 2.9]
    sols = [propagate(problem, x) for x in lams]
    worst = 0.0
    h = lat.weights
    for i in range(len(sols)):
        for j in range(i + 1, len(sols)):
            y, z = sols[i].phi, sols[j].phi
            up_y = np.concatenate(([y.y2.ext_value], y.y2.values[:-1]))
            up_z = np.concatenate(([z.y2.ext_value], z.y2.values[:-1]))
            F = y.y1.values * up_z - up_y * z.y1.values
            lhs = F[:-1] - F[1:]
            rhs = (h * (lams[i] - lams[j]) * (y.y1.values * z.y1.values
                                              + y.y2.values * z.y2.values))[:-1]
            scale = np.maximum(np.abs(F[:-1]) + np.abs(F[1:]), 1.0)
            worst = max(worst, float(np.max(np.abs(lhs - rhs) / scale)))
    add("lagrange", worst, 1e-10)

    worst = 0.0
    for lam in (-2.0, 0.5, 3.0):
        a = propagate(problem, lam)
        b = successive_approx(problem, ctx, lam, tol=min(cfg.solver_tol, 1e-10))
        sup = max(np.max(np.abs(a.phi.y1.values)), np.max(np.abs(a.phi.y2.values)), 1e-300)
        worst = max(worst, float(max(np.max(np.abs(a.phi.y1.values - b.phi.y1.values)),
                                     np.max(np.abs(a.phi.y2.values - b.phi.y2.values))) / sup))
    add("oracle_equivalence", worst, 1e-9)
    return checks


def cmd_verify(cfg: RunConfig, args) -> tuple:
    checks = run_verification(cfg)
    ok = all(c["passed"] for c in checks)
    if cfg.format == "json":
        text = _json_text({"passed": ok, "checks": checks})
    else:
        text = _csv_text(["check", "passed", "value", "tol"],
                         [(c["check"], "true" if c["passed"] else "false", c["value"], c["tol"])
                          for c in checks])
    return text, EXIT_OK if ok else EXIT_VERIFY


_COMMANDS = {
    "eigenvalues": cmd_eigenvalues,
    "eigenfunction": cmd_eigenfunction,
    "zeros": cmd_zeros,
    "verify": cmd_verify,
    "delta": cmd_delta,
}


class _ParseError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _ParseError(message)


def build_parser() -> argparse.ArgumentParser:
    # SUPPRESS keeps a subcommand's unset flags from hiding ones given before it
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="flat key = value file")
    for key in _KEYS:
        common.add_argument("--" + key.replace("_", "-"), dest=key, default=argparse.SUPPRESS,
                            metavar=key.upper())

    parser = _Parser(prog="qdirac", description="q-Dirac boundary value problem toolkit",
                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("eigenvalues", parents=[common], help="eigenvalue table")
    p = sub.add_parser("eigenfunction", parents=[common], help="m-th eigenfunction node table")
    p.add_argument("--m", type=int, required=True)
    p = sub.add_parser("zeros", parents=[common],
                       help="zeros of cos(.;q) or sin(.;q); --count sets how many")
    p.add_argument("--kind", choices=("cos", "sin"), required=True)
    sub.add_parser("verify", parents=[common], help="run the property suite")
    p = sub.add_parser("delta", parents=[common], help="sample the characteristic function")
    p.add_argument("--lambda-min", type=float, required=True)
    p.add_argument("--lambda-max", type=float, required=True)
    p.add_argument("--points", type=int, required=True)
    sub.add_parser("default-config", help="print the default configuration")
    return parser


def load_config(args) -> RunConfig:
    values: Dict[str, object] = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        values.update(parse_config_text(text, str(path)))
    for key, (kind, _) in _KEYS.items():
        raw = getattr(args, key, None)
        if raw is not None:
            try:
                values[key] = kind(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for --{key.replace('_', '-')}: {exc}") from None
    return RunConfig.from_mapping(values)


def _report_error(code: int, exc: BaseException, context: dict) -> int:
    sys.stderr.write(json.dumps({"code": code, "message": str(exc), "context": context},
                                sort_keys=True) + "\n")
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(argv)
    except _ParseError as exc:
        return _report_error(EXIT_CONFIG, exc, {"argv": argv})
    if args.command == "default-config":
        sys.stdout.write(default_config_text())
        return EXIT_OK
    context = {"command": args.command}
    try:
        cfg = load_config(args)
        context["case"] = boundary_case(cfg.boundary)
        text, status = _COMMANDS[args.command](cfg, args)
    except (ConfigError, DomainError) as exc:
        return _report_error(EXIT_CONFIG, exc, context)
    except NumericalError as exc:
        context["type"] = type(exc).__name__
        return _report_error(EXIT_NUMERIC, exc, context)
    if cfg.output == "-":
        sys.stdout.write(text)
    else:
        Path(cfg.output).write_text(text)
    return status


if __name__ == "__main__":
    sys.exit(main())
