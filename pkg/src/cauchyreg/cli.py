"""Command-line entry point: ``cauchyreg {solve,study,verify}``.

Exit codes: 0 success, 1 verification or solver failure, 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

from . import __version__
from .errors import ConvergenceError, OverflowGuardError
from .experiments import (
    PROBLEM_IDS,
    atomic_write,
    error_metrics,
    exact_grid,
    get_problem,
    run_convergence_study,
    solve_problem,
)
from .grid import fmt
from .kernels import KernelFamily, KernelVariant, RegParams
from .linear_solver import NoiseModel
from .semilinear_solver import MarchingConfig, SolverMode
from .verification import run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
SUITES = ("kernels", "theorem2", "theorem8", "contraction")


class ConfigError(ValueError):
    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(message)
        self.key = key


@dataclass
class RunConfig:
    """Fully resolved run parameters; echoed verbatim into the manifest."""

    problem: str
    eps: List[float]
    m: float = 0.99
    kernel: str = KernelVariant.SEMILINEAR.value
    mode: str = SolverMode.TIME_MARCHING.value
    grid_m: int = 20
    grid_k: int = 20
    modes: int = 3
    quad_time: int = 16
    quad_space: int = 32
    seeds: List[int] = field(default_factory=lambda: [0])
    noise: str = NoiseModel.SCALAR_RAND.value

    def marching(self) -> MarchingConfig:
        return MarchingConfig(
            m_steps=self.grid_m,
            k_steps=self.grid_k,
            quad_time_order=self.quad_time,
            quad_space_order=self.quad_space,
            mode=SolverMode(self.mode),
        )

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# Keys accepted in a config file, mapped to RunConfig fields.
_KEYS = {
    "problem": "problem",
    "eps": "eps",
    "eps_list": "eps",
    "m": "m",
    "kernel": "kernel",
    "mode": "mode",
    "grid_m": "grid_m",
    "grid_k": "grid_k",
    "modes": "modes",
    "quad_time": "quad_time",
    "quad_space": "quad_space",
    "seed": "seeds",
    "seeds": "seeds",
    "noise": "noise",
}


def _parse_floats(value) -> List[float]:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [float(value)]
    if isinstance(value, str):
        parts = [p for p in value.replace(" ", "").split(",") if p]
        return [float(p) for p in parts]
    if isinstance(value, list):
        return [float(v) for v in value]
    raise ValueError(f"expected a number or list of numbers, got {value!r}")


def _parse_seeds(value) -> List[int]:
    """Accept an int, a list, ``"0,3,5"`` or an inclusive range ``"0-9"``."""
    if isinstance(value, bool):
        raise ValueError("seed must be an integer")
    if isinstance(value, int):
        return [value]
    if isinstance(value, list):
        return [int(v) for v in value]
    if isinstance(value, str):
        out = []
        for part in value.replace(" ", "").split(","):
            if not part:
                continue
            lo, sep, hi = part.partition("-")
            if sep and lo:
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
        return out
    raise ValueError(f"expected an integer seed list, got {value!r}")


def _load_config_file(path: str) -> tuple[Dict[str, Any], str]:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}:1: config must be a JSON object")
    # A run manifest is also a valid config.
    if "config" in doc and isinstance(doc["config"], dict):
        doc = doc["config"]
    return doc, text


def _key_line(text: str, key: str) -> int:
    needle = f'"{key}"'
    for i, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return i
    return 1


def resolve_config(args: argparse.Namespace, command: str) -> RunConfig:
    raw: Dict[str, Any] = {}
    origin: Dict[str, str] = {}
    text = ""
    if getattr(args, "config", None):
        doc, text = _load_config_file(args.config)
        for key, value in doc.items():
            if key not in _KEYS:
                line = _key_line(text, key)
                raise ConfigError(f"{args.config}:{line}: unknown field '{key}'", key)
            raw[_KEYS[key]] = value
            origin[_KEYS[key]] = key
    for name in ("problem", "eps", "m", "kernel", "mode", "grid_m", "grid_k", "modes", "quad_time", "quad_space", "noise"):
        value = getattr(args, name, None)
        if value is not None:
            raw[name] = value
            origin.pop(name, None)
    seeds = getattr(args, "seeds", None)
    if seeds is None:
        seeds = getattr(args, "seed", None)
    if seeds is not None:
        raw["seeds"] = seeds
        origin.pop("seeds", None)

    def fail(name, message):
        if name in origin and args.config:
            line = _key_line(text, origin[name])
            raise ConfigError(f"{args.config}:{line}: field '{origin[name]}': {message}", name)
        raise ConfigError(f"field '{name}': {message}", name)

    for required in ("problem", "eps"):
        if required not in raw:
            where = f"{args.config}:1: " if getattr(args, "config", None) else ""
            raise ConfigError(f"{where}missing required field '{required}'", required)

    try:
        problem = get_problem(str(raw["problem"]), raw.get("modes"))
    except (ValueError, TypeError) as exc:
        fail("problem" if "modes" not in raw else "modes", str(exc))

    cfg: Dict[str, Any] = {"problem": str(raw["problem"]), "grid_m": problem.m_steps, "grid_k": problem.k_steps}
    cfg["modes"] = problem.system.n_modes
    try:
        cfg["eps"] = _parse_floats(raw["eps"])
    except (ValueError, TypeError) as exc:
        fail("eps", str(exc))
    if not cfg["eps"]:
        fail("eps", "empty epsilon list")
    if any(not e >= 0 for e in cfg["eps"]):
        fail("eps", "epsilon values must be >= 0")
    if command == "solve" and len(cfg["eps"]) != 1:
        fail("eps", "solve takes exactly one epsilon")

    for name, conv in (("m", float), ("grid_m", int), ("grid_k", int), ("quad_time", int), ("quad_space", int)):
        if name in raw:
            try:
                value = conv(raw[name])
                if isinstance(raw[name], bool) or (conv is int and float(raw[name]) != value):
                    raise ValueError
            except (ValueError, TypeError):
                fail(name, f"expected {'an integer' if conv is int else 'a number'}, got {raw[name]!r}")
            cfg[name] = value
    if "m" in cfg and not 0 < cfg["m"] < 1:
        fail("m", "m must lie in (0, 1)")
    for name in ("grid_m", "grid_k", "quad_time", "quad_space"):
        if name in cfg and cfg[name] < 1:
            fail(name, "must be a positive integer")

    for name, enum_cls in (("kernel", KernelVariant), ("mode", SolverMode), ("noise", NoiseModel)):
        if name in raw:
            try:
                cfg[name] = enum_cls(raw[name]).value
            except ValueError:
                choices = ", ".join(e.value for e in enum_cls)
                fail(name, f"unknown value {raw[name]!r}; expected one of {choices}")
    kernel = cfg.get("kernel", KernelVariant.SEMILINEAR.value)
    if kernel != KernelVariant.SEMILINEAR.value and not problem.is_linear:
        fail("kernel", f"problem '{cfg['problem']}' is semilinear and needs the semilinear kernel")

    if "seeds" in raw:
        try:
            cfg["seeds"] = _parse_seeds(raw["seeds"])
        except (ValueError, TypeError) as exc:
            fail("seeds", str(exc))
        if not cfg["seeds"]:
            fail("seeds", "empty seed list")
    elif command == "study":
        cfg["seeds"] = list(range(10))
    if command == "solve" and len(cfg.get("seeds", [0])) != 1:
        fail("seeds", "solve takes exactly one seed")
    return RunConfig(**cfg)


def _manifest(command: str, rc: RunConfig, outputs: List[str]) -> str:
    doc = {
        "tool": "cauchyreg",
        "version": __version__,
        "command": command,
        "config_sha256": rc.digest(),
        "config": asdict(rc),
        "outputs": outputs,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _header(command: str, rc: RunConfig) -> str:
    return f"manifest sha256={rc.digest()} command={command}"


def cmd_solve(args) -> int:
    rc = resolve_config(args, "solve")
    problem = get_problem(rc.problem, rc.modes)
    cfg = rc.marching()
    params = RegParams(rc.eps[0], rc.m, problem.horizon)
    sol = solve_problem(problem, params, cfg, rc.seeds[0], KernelFamily(rc.kernel), NoiseModel(rc.noise))
    report = error_metrics(exact_grid(problem, cfg.m_steps, cfg.k_steps), sol)
    head = _header("solve", rc)
    buf = io.StringIO()
    buf.write(f"# {head}\r\n")
    w = csv.writer(buf)
    w.writerow(["t", "E", "R", "R_absolute"])
    for t, E, R, flag in zip(report.t_grid, report.midpoint_errors, report.rrms_errors, report.rrms_absolute):
        w.writerow([fmt(t), fmt(E), fmt(R), int(flag)])
    out = args.out
    atomic_write(os.path.join(out, "solution.csv"), sol.to_csv(head))
    atomic_write(os.path.join(out, "errors.csv"), buf.getvalue())
    atomic_write(os.path.join(out, "manifest.json"), _manifest("solve", rc, ["solution.csv", "errors.csv"]))
    mid = len(report.t_grid) // 2
    print(
        f"solved {rc.problem} eps={rc.eps[0]:g} seed={rc.seeds[0]}: "
        f"E(t={report.t_grid[mid]:g})={report.midpoint_errors[mid]:.6g} "
        f"E(t={report.t_grid[-1]:g})={report.midpoint_errors[-1]:.6g} -> {out}"
    )
    return EXIT_OK


def cmd_study(args) -> int:
    rc = resolve_config(args, "study")
    problem = get_problem(rc.problem, rc.modes)
    result = run_convergence_study(
        problem, rc.eps, rc.m, rc.seeds, rc.marching(), KernelFamily(rc.kernel), workers=args.workers
    )
    head = _header("study", rc)
    out = args.out
    outputs = ["study.csv", "summary.csv"]
    atomic_write(os.path.join(out, "study.csv"), result.to_csv(head))
    atomic_write(os.path.join(out, "summary.csv"), result.summary_csv(head))
    if result.failures:
        buf = io.StringIO()
        buf.write(f"# {head}\r\n")
        w = csv.writer(buf)
        w.writerow(["epsilon", "seed", "error", "message"])
        for f in result.failures:
            w.writerow([fmt(f["epsilon"]), f["seed"], f["error"], f["message"]])
        atomic_write(os.path.join(out, "failures.csv"), buf.getvalue())
        outputs.append("failures.csv")
        print(f"warning: {len(result.failures)} cell(s) failed; see failures.csv", file=sys.stderr)
    atomic_write(os.path.join(out, "manifest.json"), _manifest("study", rc, outputs))
    for s in result.slopes():
        print(f"t={s['t']:.6g} slope={s['slope']:.4f} theoretical={s['theoretical']:.4f}")
    return EXIT_OK


def cmd_verify(args) -> int:
    results = run_suite(args.suite, args.case)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    if args.out:
        doc = {
            "suite": args.suite,
            "case": args.case if args.suite == "theorem2" else None,
            "passed": not failed,
            "checks": [{"name": r.name, "passed": r.passed, "margin": r.margin, "detail": r.detail} for r in results],
        }
        atomic_write(os.path.join(args.out, "verify.json"), json.dumps(doc, indent=2) + "\n")
    if failed:
        print(f"{len(failed)} check(s) failed: " + ", ".join(r.name for r in failed), file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def _run_options(p: argparse.ArgumentParser, study: bool) -> None:
    p.add_argument("--config", help="JSON config file (a run manifest is accepted)")
    p.add_argument("--problem", choices=PROBLEM_IDS + ("example1-poly",))
    p.add_argument("--eps", help="noise level" + ("s, comma-separated" if study else ""))
    p.add_argument("--m", type=float, help="exponent in beta = eps**m (default 0.99)")
    p.add_argument("--kernel", help="kernel family (default semilinear)")
    p.add_argument("--mode", help="march or picard (default march)")
    p.add_argument("--grid-m", dest="grid_m", type=int, help="time steps M")
    p.add_argument("--grid-k", dest="grid_k", type=int, help="space steps K")
    p.add_argument("--modes", type=int, help="number of eigenmodes N")
    p.add_argument("--quad-time", dest="quad_time", type=int)
    p.add_argument("--quad-space", dest="quad_space", type=int)
    p.add_argument("--noise", help="scalar or per-point")
    p.add_argument("--seed", type=int)
    p.add_argument("--seeds", help="seed list, e.g. 0-9 or 1,4,7")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--format", choices=("csv",), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cauchyreg", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p_solve = sub.add_parser("solve", help="one regularized solve with error report")
    _run_options(p_solve, study=False)
    p_study = sub.add_parser("study", help="sweep eps and seeds, fit convergence rates")
    _run_options(p_study, study=True)
    p_study.add_argument("--workers", type=int, help="worker threads (capped by CAUCHYREG_THREADS)")
    p_verify = sub.add_parser("verify", help="run a pass/fail check suite")
    p_verify.add_argument("suite", choices=SUITES)
    p_verify.add_argument("--case", default="iii", type=str.lower, choices=("i", "ii", "iii"))
    p_verify.add_argument("--out", help="directory for verify.json")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "study":
            return cmd_study(args)
        return cmd_verify(args)
    except ConfigError as exc:
        print(f"cauchyreg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, OverflowGuardError) as exc:
        print(f"cauchyreg: solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
