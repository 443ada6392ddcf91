"""Batch experiment driver.

Subcommands: ``gen`` (object generators), ``flow`` (integrate a flow and
emit its CSV trace), ``solve`` (basic or smoothed pipeline over seeded
trials), ``capacity`` (capacity report, with both matrix routes),
``perturb`` (one perturbation step with its constraint stats), and
``check`` (the full invariant suite, or revalidation of a saved trace).

Exit codes: 0 success, 1 usage (bad flags, unreadable/malformed input),
2 numeric failure, 3 invariant violation.  Outputs are deterministic for a
fixed config and seed: JSON is emitted with sorted keys and no timestamps,
trials are seeded by (seed, trial-index) and collected in index order.
FRAMEFLOW_THREADS caps the worker pool.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .capacity import (
    CapacityError,
    frame_capacity,
    matrix_capacity,
    matrix_capacity_convex,
    operator_capacity,
    tight_example,
)
from .core import (
    SCHEMA_VERSION,
    Frame,
    NonNegMatrix,
    OperatorTuple,
    delta_of,
    dist,
    eps_nearness,
    load_json,
    size_of,
    to_dict,
)
from .discrete_scaling import ScalingError
from .dynamics import (
    FlowError,
    FlowOptions,
    frame_flow,
    matrix_flow,
    operator_flow,
    trajectory_csv,
    validation_options,
)
from .generate import near_parseval_frame, random_matrix, random_operator
from .paulsen import PerturbationError, perturb, solve_basic, solve_smoothed
from . import checks as checks_mod


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


_DEFAULTS = {
    "seed": 0,
    "d": 3,
    "n": 12,
    "m": 4,
    "k": 4,
    "eps": 0.01,
    "sigma2": 1e-6,
    "tol": None,
    "trials": 1,
    "demo": False,
    "out": None,
    "infile": None,
    "kind": "frame",
    "mode": "basic",
    "zeta": 0.1,
    "kappa": 1e-3,
    "t_max": 1e6,
    "final_delta": None,
}


@dataclasses.dataclass
class RunConfig:
    seed: int = 0
    d: int = 3
    n: int = 12
    m: int = 4
    k: int = 4
    eps: float = 0.01
    sigma2: float = 1e-6
    tol: float | None = None
    trials: int = 1
    demo: bool = False
    out: str | None = None
    infile: str | None = None
    kind: str = "frame"
    mode: str = "basic"
    zeta: float = 0.1
    kappa: float = 1e-3
    t_max: float = 1e6
    final_delta: float | None = None

    def validate(self) -> None:
        for name in ("d", "n", "m", "k", "trials"):
            if getattr(self, name) < 1:
                raise UsageError(f"--{name} must be a positive integer")
        for name in ("eps", "sigma2"):
            if getattr(self, name) < 0:
                raise UsageError(f"--{name} must be nonnegative")
        for name in ("tol", "final_delta"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise UsageError(f"--{name.replace('_', '-')} must be positive")
        if self.seed < 0:
            raise UsageError("--seed must be nonnegative")


def _build_config(args: argparse.Namespace) -> RunConfig:
    merged = dict(_DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path) as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"malformed config JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(loaded) - set(_DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        merged.update(loaded)
    for key in _DEFAULTS:
        value = getattr(args, key, None)
        if value is not None and value is not False:
            merged[key] = value
    cfg = RunConfig(**merged)
    cfg.validate()
    return cfg


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--sigma2", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--demo", action="store_true", default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--in", dest="infile", default=None, help="input object JSON")
    p.add_argument("--config", default=None, help="JSON config file; flags override it")


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(out, "w") as fh:
            fh.write(text)
            if not text.endswith("\n"):
                fh.write("\n")


def _dump_report(doc: dict) -> str:
    doc.setdefault("schema_version", SCHEMA_VERSION)
    return json.dumps(doc, sort_keys=True)


def _load_object(cfg: RunConfig):
    if cfg.infile is None:
        raise UsageError("--in is required for this subcommand")
    try:
        return load_json(cfg.infile)
    except OSError as exc:
        raise UsageError(f"cannot read input: {exc}") from exc
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise UsageError(f"malformed object JSON: {exc}") from exc


def _thread_count(trials: int) -> int:
    env = os.environ.get("FRAMEFLOW_THREADS", "")
    cap = int(env) if env.strip() else (os.cpu_count() or 1)
    return max(1, min(trials, cap))


def _run_trials(trials: int, fn) -> list:
    """Run fn(trial_index) for each trial, collected in index order."""
    if trials == 1:
        return [fn(0)]
    with ThreadPoolExecutor(max_workers=_thread_count(trials)) as pool:
        return list(pool.map(fn, range(trials)))


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen(cfg: RunConfig) -> int:
    if cfg.kind == "frame":
        frame, measured = near_parseval_frame(cfg.d, cfg.n, cfg.eps, cfg.seed)
        doc = to_dict(frame)
        doc["meta"] = {"seed": cfg.seed, "requested_eps": cfg.eps, "measured_eps": measured}
    elif cfg.kind == "operator":
        doc = to_dict(random_operator(cfg.k, cfg.d, cfg.n, cfg.seed))
        doc["meta"] = {"seed": cfg.seed}
    elif cfg.kind == "matrix":
        doc = to_dict(random_matrix(cfg.m, cfg.n, cfg.seed))
        doc["meta"] = {"seed": cfg.seed}
    elif cfg.kind == "tight":
        ex = tight_example(cfg.k)
        doc = to_dict(ex.A)
        doc["meta"] = {"k": ex.k, "x": ex.x, "y": ex.y, "E": ex.E, "F": ex.F}
    else:
        raise UsageError(f"unknown --kind {cfg.kind!r} (frame|operator|matrix|tight)")
    _emit(json.dumps(doc, sort_keys=True), cfg.out)
    return 0


def cmd_flow(cfg: RunConfig) -> int:
    obj = _load_object(cfg)
    flows = {Frame: frame_flow, OperatorTuple: operator_flow, NonNegMatrix: matrix_flow}
    flow = flows[type(obj)]
    # fine recording profile so the emitted trace re-validates against the
    # derivative identities under `check`
    _, traj = flow(obj, target_delta=cfg.tol, t_max=cfg.t_max, opts=validation_options())
    _emit(trajectory_csv(traj), cfg.out)
    return 0


def _solve_input(cfg: RunConfig, trial: int):
    if cfg.infile is not None:
        obj = _load_object(cfg)
        if not isinstance(obj, Frame):
            raise UsageError("solve expects a frame input")
        return obj
    return near_parseval_frame(cfg.d, cfg.n, cfg.eps, (cfg.seed, trial))[0]


def cmd_solve(cfg: RunConfig) -> int:
    def one(trial: int) -> dict:
        frame = _solve_input(cfg, trial)
        eps_in = eps_nearness(frame)
        rec = {
            "trial": trial,
            "seed": cfg.seed,
            "mode": cfg.mode,
            "input_eps": eps_in,
            "input_delta": delta_of(frame),
            "input": to_dict(frame),
        }
        if cfg.mode == "smoothed":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                v, trace = solve_smoothed(
                    frame,
                    zeta=cfg.zeta,
                    kappa=cfg.kappa,
                    final_delta=cfg.final_delta if cfg.final_delta is not None else 1e-10,
                    seed=cfg.seed + trial,
                    t_max=cfg.t_max,
                )
            rec["trace"] = trace.to_dict()
            rec["output"] = to_dict(v)
            rec["dist"] = dist(frame, v)
            rec["output_delta"] = delta_of(v)
        else:
            v, report = solve_basic(
                frame,
                final_delta=cfg.final_delta if cfg.final_delta is not None else 3e-17,
                t_max=cfg.t_max,
            )
            rec["output"] = to_dict(v)
            rec["dist"] = report.dist
            rec["output_delta"] = report.delta_final
            rec["status"] = report.status
            rec["bound_100_d2_n_eps"] = 100.0 * frame.d**2 * frame.n * eps_in
        return rec

    results = _run_trials(cfg.trials, one)
    doc = {"command": "solve", "seed": cfg.seed, "trials": cfg.trials, "results": results}
    _emit(_dump_report(doc), cfg.out)
    return 0


def cmd_capacity(cfg: RunConfig) -> int:
    obj = _load_object(cfg)
    tol = cfg.tol if cfg.tol is not None else 1e-12
    doc: dict = {"command": "capacity"}
    if isinstance(obj, NonNegMatrix):
        scaling = matrix_capacity(obj, tol=tol)
        convex = matrix_capacity_convex(obj)
        agree = abs(scaling.value - convex.value) / max(scaling.value, convex.value, 1e-300)
        doc.update(
            kind="matrix",
            value=scaling.value,
            method=scaling.method,
            certificate=scaling.certificate,
            lower=scaling.lower,
            upper=scaling.upper,
            converged=scaling.converged,
            convex_value=convex.value,
            dual_relative_gap=agree,
        )
    elif isinstance(obj, Frame):
        res = frame_capacity(obj)
        doc.update(
            kind="frame", value=res.value, method=res.method,
            certificate=res.certificate, lower=res.lower, upper=res.upper,
            converged=res.converged,
        )
    else:
        res = operator_capacity(obj, tol=tol)
        doc.update(
            kind="operator", value=res.value, method=res.method,
            certificate=res.certificate, lower=res.lower, upper=res.upper,
            converged=res.converged,
        )
    doc["size"] = size_of(obj)
    doc["delta"] = delta_of(obj)
    _emit(_dump_report(doc), cfg.out)
    return 0


def cmd_perturb(cfg: RunConfig) -> int:
    if cfg.infile is not None:
        obj = _load_object(cfg)
        if not isinstance(obj, Frame):
            raise UsageError("perturb expects a frame input")
        frame = obj
    else:
        frame = near_parseval_frame(cfg.d, cfg.n, cfg.eps, (cfg.seed, 0))[0]
    d, n = frame.d, frame.n
    base = Frame(frame.vectors * math.sqrt(d / n) / np.sqrt(frame.norms2())[:, None])
    w, noise = perturb(frame, cfg.sigma2, cfg.seed)
    znorms = np.linalg.norm(noise.z, axis=1)
    unorms = np.linalg.norm(base.vectors, axis=1)
    inner = float(
        (np.abs(np.einsum("nd,nd->n", base.vectors, noise.z))
         / np.maximum(unorms * znorms, 1e-300)).max()
    )
    outer = float(
        np.linalg.norm(base.vectors.T @ noise.z)
        / max(float((unorms * znorms).sum()), 1e-300)
    )
    doc = {
        "command": "perturb",
        "seed": cfg.seed,
        "sigma2": cfg.sigma2,
        "output": to_dict(w),
        "stats": {
            "dist": dist(base, w),
            "delta_before": delta_of(base),
            "delta_after": delta_of(w),
            "max_inner_violation": inner,
            "outer_violation": outer,
            "max_norm_error": float(np.abs(w.norms2() - d / n).max()),
            "z_mass": float((znorms**2).sum()),
        },
    }
    _emit(_dump_report(doc), cfg.out)
    return 0


def cmd_check(cfg: RunConfig) -> int:
    if cfg.infile is not None:
        try:
            with open(cfg.infile) as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read trace: {exc}") from exc
        results = checks_mod.validate_trace_csv(text)
    else:
        results = checks_mod.run_all(seed=cfg.seed)
    lines = []
    failed = 0
    for res in results:
        tag = "OK" if res.ok else "VIOLATION"
        failed += 0 if res.ok else 1
        lines.append(f"{tag:9s} {res.name}: {res.detail}")
    lines.append(f"{len(results) - failed}/{len(results)} checks passed")
    _emit("\n".join(lines), cfg.out)
    return 3 if failed else 0


# ---------------------------------------------------------------------------
# entry point


def _make_parser() -> _Parser:
    parser = _Parser(prog="frameflow", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    for name, helptext in [
        ("gen", "generate a frame/operator/matrix/tight-example object"),
        ("flow", "integrate the flow for an object and emit the CSV trace"),
        ("solve", "run the basic or smoothed pipeline"),
        ("capacity", "capacity report for an object"),
        ("perturb", "one constrained perturbation step with stats"),
        ("check", "run the invariant suite, or revalidate a trace CSV"),
    ]:
        p = sub.add_parser(name, help=helptext)
        _add_common(p)
        if name == "gen":
            p.add_argument("--kind", default=None, help="frame|operator|matrix|tight")
        if name == "solve":
            p.add_argument(
                "--smoothed", dest="mode", action="store_const", const="smoothed", default=None
            )
            p.add_argument("--basic", dest="mode", action="store_const", const="basic")
            p.add_argument("--zeta", type=float, default=None)
            p.add_argument("--kappa", type=float, default=None)
            p.add_argument("--final-delta", dest="final_delta", type=float, default=None)
    return parser


_COMMANDS = {
    "gen": cmd_gen,
    "flow": cmd_flow,
    "solve": cmd_solve,
    "capacity": cmd_capacity,
    "perturb": cmd_perturb,
    "check": cmd_check,
}


def main(argv: list[str] | None = None) -> int:
    parser = _make_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        cfg = _build_config(args)
        return _COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (FlowError, ScalingError, CapacityError, PerturbationError,
            np.linalg.LinAlgError, FloatingPointError, ValueError, OverflowError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
