"""Command-line front end.

Subcommands
-----------
solve   one saddle point, printed as the parameter tuple
sweep   a local-entropy curve over a delta_bar grid, with breakdown detection
oracle  brute-force finite-n local entropy averaged over seeded instances
smax    the counting upper bound log binom over a delta_bar grid

Every numeric setting can also come from ``--config FILE`` (flat ``key=value``
lines, ``#`` comments); flags given on the command line win.  Output goes to
``--out`` or standard output, as CSV (default) or JSON.  Identical settings
produce byte-identical output.

Exit status: 0 success, 1 numerical failure or unwritable output, 2 usage error.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
import warnings
from dataclasses import asdict, dataclass, field

from .kernels import ModelParams
from .oracle import (
    DEFAULT_REFERENCES,
    MAX_ENUM_N,
    admissible_deltas,
    empirical_curve,
    hamming_distance,
)
from .saddle import Branch, SolverOptions, solve
from .sweep import build_curve, delta_grid, s_max

QUAD_ORDER_ENV = "ABPLE_QUAD_ORDER"

CURVE_COLUMNS = ("delta_bar", "s_l", "s_max", "nu", "p1", "p2", "q1s", "q2s", "c2",
                 "residual_norm", "converged", "breakdown")
SOLVE_COLUMNS = ("alpha", "delta_bar", "gamma_sq", "nu", "p2", "p1", "q2s", "q1s", "c2",
                 "s_l", "residual_norm", "converged", "branch")
ORACLE_COLUMNS = ("delta_bar", "distance", "mean", "stderr", "upper_bound")
SMAX_COLUMNS = ("delta_bar", "s_max")


@dataclass(frozen=True)
class RunConfig:
    command: str
    model: ModelParams
    solver: SolverOptions
    delta_min: float | None = None
    delta_max: float | None = None
    step: float | None = None
    refine: bool = False
    n: int | None = None
    instances: int = 1
    seed: int = 0
    mode: str = "auto"
    references: int = DEFAULT_REFERENCES
    deltas: tuple[float, ...] = field(default_factory=tuple)
    out: str | None = None
    format: str = "csv"


class _UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# argument parsing


def _bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _float_list(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in str(text).split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _default_quad_order() -> int:
    raw = os.environ.get(QUAD_ORDER_ENV)
    if raw is None or raw.strip() == "":
        return SolverOptions.quadrature_order
    try:
        return int(raw)
    except ValueError:
        raise _UsageError(f"{QUAD_ORDER_ENV}={raw!r} is not an integer")


def _add_common(p: argparse.ArgumentParser, quad_default: int) -> None:
    p.add_argument("--config", metavar="PATH", help="key=value settings file")
    p.add_argument("--out", metavar="PATH", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--quad-order", type=int, default=quad_default,
                   help=f"quadrature nodes per segment (env {QUAD_ORDER_ENV})")
    p.add_argument("--tol", type=float, default=SolverOptions.tolerance,
                   help="residual tolerance")
    p.add_argument("--max-iter", type=int, default=SolverOptions.max_iterations)
    p.add_argument("--damping", type=float, default=SolverOptions.damping)
    p.add_argument("--nu-floor", type=float, default=SolverOptions.nu_floor,
                   help="nu below this counts as breakdown")


def _add_model(p: argparse.ArgumentParser, delta: bool) -> None:
    p.add_argument("--alpha", type=float, required=True, help="constraint density m/n")
    p.add_argument("--kappa", type=float, default=0.0, help="margin threshold")
    if delta:
        p.add_argument("--delta", type=float, required=True, help="overlap delta_bar")


def build_parser(quad_default: int | None = None) -> argparse.ArgumentParser:
    if quad_default is None:
        quad_default = SolverOptions.quadrature_order
    parser = argparse.ArgumentParser(
        prog="abple",
        description="Worst-case local entropy of the asymmetric binary perceptron "
                    "(second level of lifted random duality).")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("solve", help="solve the saddle point at one delta_bar")
    _add_model(p, delta=True)
    _add_common(p, quad_default)

    p = sub.add_parser("sweep", help="local-entropy curve and breakdown")
    _add_model(p, delta=False)
    p.add_argument("--delta-min", type=float, required=True)
    p.add_argument("--delta-max", type=float, required=True)
    p.add_argument("--step", type=float, required=True)
    p.add_argument("--refine", type=_bool, nargs="?", const=True, default=False,
                   help="bisect the breakdown to 1e-4")
    _add_common(p, quad_default)

    p = sub.add_parser("oracle", help="brute-force local entropy on small instances")
    _add_model(p, delta=False)
    p.add_argument("--n", type=int, required=True, help="dimension (<= %d)" % MAX_ENUM_N)
    p.add_argument("--deltas", type=_float_list, default=(),
                   help="comma-separated delta_bar values (default: all admissible)")
    p.add_argument("--instances", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="seed of the first instance")
    p.add_argument("--mode", choices=("auto", "exhaustive", "sampled"), default="auto")
    p.add_argument("--references", type=int, default=DEFAULT_REFERENCES,
                   help="reference count in sampled mode")
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--config", metavar="PATH")

    p = sub.add_parser("smax", help="counting upper bound on the local entropy")
    p.add_argument("--delta", type=float, help="single delta_bar")
    p.add_argument("--delta-min", type=float)
    p.add_argument("--delta-max", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--config", metavar="PATH")
    return parser


def _read_config(path: str) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise _UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.lstrip("-").replace("-", "_")] = value
    return out


def _config_path(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    path = _config_path(argv)
    command = next((t for t in argv if not t.startswith("-")), None)
    subs = parser._subparsers._group_actions[0].choices
    if path is None or command not in subs:
        return parser.parse_args(argv)
    sub = subs[command]
    try:
        values = _read_config(path)
    except OSError as exc:
        parser.error(f"--config: cannot read {path!r}: {exc.strerror}")
    except _UsageError as exc:
        parser.error(f"--config: {exc}")
    known = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    for key in values:
        if key not in known:
            parser.error(f"--config: unknown key {key!r}")
    # config values act as defaults (argparse converts string defaults with
    # the action's type), so explicit flags override them
    for key in values:
        known[key].required = False
    sub.set_defaults(**values)
    return parser.parse_args(argv)


def _check(parser, ok: bool, flag: str, value, rule: str) -> None:
    if not ok:
        parser.error(f"argument {flag}: {value!r} must be {rule}")


def parse_args(argv: list[str] | None = None) -> RunConfig:
    """Parse and validate ``argv``; usage problems exit with status 2."""
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        quad = _default_quad_order()
    except _UsageError as exc:
        build_parser().error(str(exc))
    parser = build_parser(quad)
    ns = _apply_config(parser, argv)
    cmd = ns.command

    if cmd == "smax":
        if ns.delta is not None:
            _check(parser, 0 <= ns.delta <= 1, "--delta", ns.delta, "in [0, 1]")
            deltas = (ns.delta,)
        else:
            if None in (ns.delta_min, ns.delta_max, ns.step):
                parser.error("smax needs --delta or all of --delta-min, --delta-max, --step")
            _check(parser, 0 <= ns.delta_min <= 1, "--delta-min", ns.delta_min, "in [0, 1]")
            _check(parser, ns.delta_min < ns.delta_max <= 1, "--delta-max", ns.delta_max,
                   "in (delta-min, 1]")
            _check(parser, ns.step > 0, "--step", ns.step, "positive")
            deltas = tuple(delta_grid(ns.delta_min, ns.delta_max, ns.step))
        return RunConfig(command=cmd, model=ModelParams(alpha=0.0), solver=SolverOptions(),
                         deltas=deltas, out=ns.out, format=ns.format)

    _check(parser, math.isfinite(ns.alpha) and ns.alpha >= 0, "--alpha", ns.alpha, ">= 0")
    _check(parser, math.isfinite(ns.kappa), "--kappa", ns.kappa, "finite")

    if cmd == "oracle":
        _check(parser, 1 <= ns.n <= MAX_ENUM_N, "--n", ns.n, f"in [1, {MAX_ENUM_N}]")
        _check(parser, ns.instances >= 1, "--instances", ns.instances, ">= 1")
        _check(parser, ns.references >= 1, "--references", ns.references, ">= 1")
        if ns.mode == "exhaustive":
            _check(parser, ns.n <= 20, "--n", ns.n, "<= 20 in exhaustive mode")
        deltas = ns.deltas or tuple(admissible_deltas(ns.n))
        for d in deltas:
            try:
                hamming_distance(ns.n, d)
            except ValueError as exc:
                parser.error(f"argument --deltas: {exc}")
        return RunConfig(command=cmd, model=ModelParams(alpha=ns.alpha, kappa=ns.kappa),
                         solver=SolverOptions(), n=ns.n, instances=ns.instances,
                         seed=ns.seed, mode=ns.mode, references=ns.references,
                         deltas=tuple(deltas), out=ns.out, format=ns.format)

    _check(parser, ns.quad_order >= 2, "--quad-order", ns.quad_order, ">= 2")
    _check(parser, ns.tol > 0, "--tol", ns.tol, "positive")
    _check(parser, ns.max_iter >= 1, "--max-iter", ns.max_iter, ">= 1")
    _check(parser, 0 < ns.damping <= 1, "--damping", ns.damping, "in (0, 1]")
    _check(parser, ns.nu_floor >= 0, "--nu-floor", ns.nu_floor, ">= 0")
    solver = SolverOptions(tolerance=ns.tol, max_iterations=ns.max_iter, damping=ns.damping,
                           quadrature_order=ns.quad_order, nu_floor=ns.nu_floor)

    if cmd == "solve":
        _check(parser, 0 < ns.delta < 1, "--delta", ns.delta, "in (0, 1)")
        return RunConfig(command=cmd,
                         model=ModelParams(alpha=ns.alpha, kappa=ns.kappa, delta_bar=ns.delta),
                         solver=solver, out=ns.out, format=ns.format)

    _check(parser, 0 < ns.delta_min < 1, "--delta-min", ns.delta_min, "in (0, 1)")
    _check(parser, ns.delta_min < ns.delta_max < 1, "--delta-max", ns.delta_max,
           "in (delta-min, 1)")
    _check(parser, ns.step > 0, "--step", ns.step, "positive")
    return RunConfig(command=cmd, model=ModelParams(alpha=ns.alpha, kappa=ns.kappa),
                     solver=solver, delta_min=ns.delta_min, delta_max=ns.delta_max,
                     step=ns.step, refine=ns.refine, out=ns.out, format=ns.format)


# --------------------------------------------------------------------------
# formatting


def fmt(value) -> str:
    """CSV cell: 17 significant digits for floats, lower-case booleans."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _json_value(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, Branch):
        return value.value
    return value


def _provenance(cfg: RunConfig) -> dict:
    prov = {"command": cfg.command}
    if cfg.command in ("solve", "sweep"):
        s = cfg.solver
        prov.update(alpha=cfg.model.alpha, kappa=cfg.model.kappa,
                    quadrature_order=s.quadrature_order, tolerance=s.tolerance,
                    max_iterations=s.max_iterations, damping=s.damping,
                    nu_floor=s.nu_floor, fd_step=s.fd_step)
    if cfg.command == "sweep":
        prov.update(delta_min=cfg.delta_min, delta_max=cfg.delta_max, step=cfg.step,
                    refine=cfg.refine)
    if cfg.command == "oracle":
        prov.update(alpha=cfg.model.alpha, kappa=cfg.model.kappa, n=cfg.n,
                    instances=cfg.instances, base_seed=cfg.seed, mode=cfg.mode,
                    references=cfg.references)
    return prov


def _comment(prov: dict) -> str:
    return "# " + " ".join(f"{k}={fmt(v)}" for k, v in prov.items()) + "\n"


def _table(columns, rows, comments=()) -> str:
    buf = io.StringIO()
    for line in comments:
        buf.write(line)
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(fmt(row[c]) for c in columns) + "\n")
    return buf.getvalue()


def _json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


# --------------------------------------------------------------------------
# commands


def _run_solve(cfg: RunConfig) -> tuple[str, int]:
    sol = solve(cfg.model, None, cfg.solver)
    p = sol.params
    row = dict(alpha=cfg.model.alpha, delta_bar=cfg.model.delta_bar, gamma_sq=p.gamma_sq,
               nu=p.nu, p2=p.p2, p1=p.p1, q2s=p.q2s, q1s=p.q1s, c2=p.c2, s_l=sol.s_l,
               residual_norm=sol.residual_norm, converged=sol.converged,
               branch=sol.branch_tag.value)
    status = 0 if sol.converged else 1
    if cfg.format == "json":
        return _json({"provenance": _provenance(cfg),
                      **{k: _json_value(row[k]) for k in SOLVE_COLUMNS}}), status
    return _table(SOLVE_COLUMNS, [row], [_comment(_provenance(cfg))]), status


def _run_sweep(cfg: RunConfig) -> tuple[str, int]:
    curve = build_curve(cfg.model, (cfg.delta_min, cfg.delta_max), cfg.step,
                        cfg.solver, refine=cfg.refine)
    summary = {"breakdown_delta": curve.breakdown_delta}
    if cfg.refine:
        summary["refined_breakdown_delta"] = curve.refined_breakdown_delta
    summary["reemergence_delta"] = curve.reemergence_delta
    summary["reemergence_reliable"] = curve.reemergence_reliable
    rows = [asdict(p) for p in curve.points]
    if cfg.format == "json":
        return _json({"provenance": _provenance(cfg), **summary,
                      "points": [{k: _json_value(r[k]) for k in CURVE_COLUMNS} for r in rows]}), 0
    comments = [_comment(_provenance(cfg)),
                _comment({k: ("none" if v is None else v) for k, v in summary.items()})]
    return _table(CURVE_COLUMNS, rows, comments), 0


def _run_oracle(cfg: RunConfig) -> tuple[str, int]:
    stats = empirical_curve(cfg.n, cfg.model.alpha, cfg.model.kappa, cfg.deltas,
                            cfg.instances, cfg.seed, cfg.mode, cfg.references)
    rows = []
    for d, mean, se in stats:
        k = hamming_distance(cfg.n, d)
        rows.append(dict(delta_bar=d, distance=k, mean=mean, stderr=se,
                         upper_bound=math.log(math.comb(cfg.n, k)) / cfg.n))
    if cfg.format == "json":
        return _json({"provenance": _provenance(cfg),
                      "rows": [{k: _json_value(r[k]) for k in ORACLE_COLUMNS} for r in rows]}), 0
    return _table(ORACLE_COLUMNS, rows, [_comment(_provenance(cfg))]), 0


def _run_smax(cfg: RunConfig) -> tuple[str, int]:
    rows = [dict(delta_bar=float(d), s_max=s_max(d)) for d in cfg.deltas]
    if cfg.format == "json":
        return _json({"provenance": _provenance(cfg), "rows": rows}), 0
    return _table(SMAX_COLUMNS, rows, [_comment(_provenance(cfg))]), 0


_COMMANDS = {"solve": _run_solve, "sweep": _run_sweep, "oracle": _run_oracle, "smax": _run_smax}


def run(cfg: RunConfig, stdout=None) -> int:
    """Execute ``cfg`` and write its output; returns the exit status."""
    stdout = stdout or sys.stdout
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            text, status = _COMMANDS[cfg.command](cfg)
    except (RuntimeError, ValueError, FloatingPointError) as exc:
        print(f"abple {cfg.command}: numerical failure: {exc}", file=sys.stderr)
        return 1
    if cfg.out is None:
        stdout.write(text)
        stdout.flush()
    else:
        try:
            with open(cfg.out, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"abple {cfg.command}: cannot write {cfg.out!r}: {exc.strerror}",
                  file=sys.stderr)
            return 1
    if status:
        print(f"abple {cfg.command}: solver did not converge", file=sys.stderr)
    return status


def main(argv: list[str] | None = None) -> int:
    return run(parse_args(argv))


if __name__ == "__main__":
    sys.exit(main())
