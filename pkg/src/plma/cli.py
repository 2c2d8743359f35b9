"""Command-line front end: ``plma <transform|solve|verify|sweep> ...``.

Exit status: 0 all HARD certificates pass, 1 a certificate (or case
validation) failed, 2 configuration error, 3 solver non-convergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import certlab
from .cases import CaseSpec, case_names, get_case, registry, validate
from .errors import CaseValidationError, ConvergenceError, MaskCollapseError, NonConvexError
from .grid import disc_mask, interior_mask, sample
from .gridio import dumps_csv, dumps_records, write_atomic
from .pipeline import ReferenceReport, disagreement, solve_ma_plt, solve_ma_reference, _residual_sup
from .plegendre import (
    derivative_identity_residuals,
    inverse_partial_legendre,
    laplacian_sup,
    partial_legendre,
)

log = logging.getLogger("plma")

EXIT_OK, EXIT_CERT, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3
COMMANDS = ("transform", "solve", "verify", "sweep")
DEFAULTS = {"n": [65], "tol": 1e-8, "out": "plma_out", "seed": 0, "eps": None,
            "f_scale": 1.0, "max_outer": 200, "R": 1.0}
MIN_SOLVER_N = 33


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    cases: list = field(default_factory=list)
    n: list = field(default_factory=lambda: [65])
    tol: float = 1e-8
    out: Path = Path("plma_out")
    seed: int = 0
    eps: Optional[list] = None
    f_scale: float = 1.0
    max_outer: int = 200
    R: float = 1.0

    def validate(self):
        if not self.n:
            raise ConfigError("empty grid size list")
        for n in self.n:
            if n % 2 == 0:
                raise ConfigError(f"grid size {n} is even; odd sizes keep the origin on a node")
            low = MIN_SOLVER_N if self.command == "solve" else 9
            if n < low:
                raise ConfigError(f"grid size {n} below the minimum {low} for {self.command}")
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if self.command != "sweep" and not self.cases:
            raise ConfigError("no case selected; use --case NAME or --all")


def _int_list(text) -> list:
    if isinstance(text, list):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _float_list(text) -> list:
    if isinstance(text, list):
        return [float(v) for v in text]
    return [float(v) for v in str(text).split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="plma", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    sel = p.add_mutually_exclusive_group()
    sel.add_argument("--case", action="append", help="case name (repeatable), e.g. eps:0.5, quad, exp")
    sel.add_argument("--all", action="store_true", default=None, help="every registry case")
    p.add_argument("--n", help="comma-separated odd grid sizes, e.g. 65,129")
    p.add_argument("--tol", type=float)
    p.add_argument("--out", help="output directory")
    p.add_argument("--config", help="JSON run config; command-line flags override it")
    p.add_argument("--seed", type=int, help="seed for case-validation probes")
    p.add_argument("--eps", help="comma-separated eps values for sweep")
    p.add_argument("--f-scale", type=float, dest="f_scale",
                   help="multiply f by this factor without changing u (consistency drill)")
    p.add_argument("--max-outer", type=int, dest="max_outer")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, the JSON config file and flags (flags win)."""
    merged = dict(DEFAULTS)
    if args.config:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(data) - set(DEFAULTS) - {"case", "all", "command"}
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        if "command" in data and data["command"] != args.command:
            raise ConfigError(f"config is for command {data['command']!r}, not {args.command!r}")
        merged.update({k: v for k, v in data.items() if k in DEFAULTS})
        if data.get("all"):
            merged["cases"] = "all"
        elif "case" in data:
            merged["cases"] = data["case"] if isinstance(data["case"], list) else [data["case"]]
    for key in ("n", "tol", "out", "seed", "eps", "f_scale", "max_outer"):
        val = getattr(args, key)
        if val is not None:
            merged[key] = val
    if args.all:
        merged["cases"] = "all"
    elif args.case:
        merged["cases"] = args.case
    if merged.get("cases") == ["all"]:
        merged["cases"] = "all"
    try:
        cfg = RunConfig(command=args.command, cases=merged.get("cases", []), n=_int_list(merged["n"]),
                        tol=float(merged["tol"]), out=Path(merged["out"]), seed=int(merged["seed"]),
                        eps=None if merged["eps"] is None else _float_list(merged["eps"]),
                        f_scale=float(merged["f_scale"]), max_outer=int(merged["max_outer"]),
                        R=float(merged["R"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None
    cfg.validate()
    return cfg


def load_cases(cfg: RunConfig) -> list[CaseSpec]:
    """Resolve names, apply the f scale and probe every case before any work."""
    if cfg.cases == "all":
        cases = registry(check=False)
    else:
        cases = []
        for name in cfg.cases:
            try:
                cases.append(get_case(name, check=False))
            except KeyError as exc:
                raise ConfigError(exc.args[0]) from None
    if cfg.f_scale != 1.0:
        cases = [c.with_f_scale(cfg.f_scale) for c in cases]
    for c in cases:
        validate(c, seed=cfg.seed)
    return cases


def _slug(name: str) -> str:
    return name.replace(":", "_").replace("*", "_").replace("@", "_")


def _write(path: Path, text: str):
    write_atomic(path, text)
    log.info("wrote %s", path)


def cmd_transform(cfg: RunConfig, cases) -> int:
    for case in cases:
        for n in cfg.n:
            d = cfg.out / _slug(case.name) / f"n{n}"
            u = case.sample(n)
            f = case.sample_f(n)
            T = partial_legendre(u, case.R)
            back = inverse_partial_legendre(T.ustar, u.grid)
            region = interior_mask(u.grid, u.valid & ~np.isnan(back))
            inv = float(np.max(np.abs(back - u.values)[region]))
            res = derivative_identity_residuals(u, f, case.R, transform=T)
            h = u.grid.h1
            rows = [{"n": n, "h": h, "r11": res.r11, "r12": res.r12, "r22": res.r22,
                     "involution_error": inv,
                     "laplacian_sup": laplacian_sup(T.ustar) if case.family in ("eps", "radial") else "",
                     "bound_10h2": 10 * h * h, "nodes": res.n_nodes, "skipped": res.n_skipped}]
            _write(d / "u.csv", dumps_csv(u))
            _write(d / "ustar.csv", dumps_csv(T.ustar, {"argmax_x1": T.argmax}))
            _write(d / "identities.csv", dumps_records(rows, list(rows[0])))
            print(f"{case.name} n={n}: r11 {res.r11:.3e} r12 {res.r12:.3e} r22 {res.r22:.3e} "
                  f"involution {inv:.3e} (10h^2 = {10 * h * h:.3e})")
    return EXIT_OK


def cmd_solve(cfg: RunConfig, cases) -> int:
    status = EXIT_OK
    rows = []
    report = {}
    for case in cases:
        prob = case.problem()
        for n in cfg.n:
            d = cfg.out / _slug(case.name) / f"n{n}"
            grid = case.grid(n)
            exact = sample(case.u, grid)
            region = disc_mask(grid, case.R)
            rref = ReferenceReport()
            row = {"case": case.name, "n": n}
            try:
                ref = solve_ma_reference(prob, grid, cfg.tol, report=rref)
            except (ConvergenceError, NonConvexError) as exc:
                print(f"{case.name} n={n}: reference solver failed: {exc}", file=sys.stderr)
                status = EXIT_SOLVER
                continue
            converged = True
            try:
                plt, state = solve_ma_plt(prob, grid, cfg.tol, max_outer=cfg.max_outer)
            except ConvergenceError as exc:
                state = getattr(exc, "state", None)
                if state is None:
                    print(f"{case.name} n={n}: transform pipeline failed: {exc}", file=sys.stderr)
                    status = EXIT_SOLVER
                    continue
                plt, converged = state.u, False
                print(f"{case.name} n={n}: transform pipeline did not converge: {exc}", file=sys.stderr)
                status = EXIT_SOLVER
            except (MaskCollapseError, NonConvexError) as exc:
                print(f"{case.name} n={n}: transform pipeline failed: {exc}", file=sys.stderr)
                status = EXIT_SOLVER
                continue
            row.update({
                "plt_converged": int(converged), "plt_outer": state.outer_iterations,
                "reference_iterations": rref.iterations,
                "disagreement": disagreement(plt, ref),
                "plt_error": float(np.max(np.abs(plt.values - exact.values)[region])),
                "reference_error": float(np.max(np.abs(ref.values - exact.values)[region])),
                "plt_ma_residual": _residual_sup(prob, plt),
                "reference_ma_residual": _residual_sup(prob, ref),
                "convexity_all_pass": int(all(state.convexity_log))})
            rows.append(row)
            report[f"{case.name}/n{n}"] = {**row, "plt_time": state.wall_time, "reference_time": rref.wall_time,
                                            "plt": state.to_record(), "reference": rref.to_record()}
            _write(d / "u_plt.csv", dumps_csv(plt))
            _write(d / "u_reference.csv", dumps_csv(ref))
            _write(d / "plt_history.csv", dumps_records(
                ({"step": k + 1, "increment": a, "ma_residual": b, "damping": c, "convex": int(v)}
                 for k, (a, b, c, v) in enumerate(zip(state.increment_history, state.residual_history,
                                                      state.damping_history, state.convexity_log))),
                ["step", "increment", "ma_residual", "damping", "convex"]))
            _write(d / "reference_history.csv", dumps_records(
                ({"iteration": k + 1, "ma_residual": r} for k, r in enumerate(rref.residual_history)),
                ["iteration", "ma_residual"]))
            print(f"{case.name} n={n}: disagreement {row['disagreement']:.3e}, errors plt "
                  f"{row['plt_error']:.3e} reference {row['reference_error']:.3e}, "
                  f"{state.outer_iterations} pipeline steps, convexity log "
                  f"{'all pass' if row['convexity_all_pass'] else 'has failures'}")
    if rows:
        _write(cfg.out / "crossval.csv", dumps_records(rows, list(rows[0])))
        _write(cfg.out / "solve_report.json", json.dumps(report, indent=2, sort_keys=True))
    return status


def cmd_verify(cfg: RunConfig, cases) -> int:
    certs = certlab.run_suite(cases, cfg.n)
    _write(cfg.out / "certificates.csv", certlab.certificates_csv(certs))
    table = certlab.summary_table(certs)
    _write(cfg.out / "summary.txt", table + "\n")
    print(table)
    eps = [c.eps for c in cases if c.family == "eps"]
    if eps:
        sweeps = [certlab.sweep_epsilon(eps, cfg.R, n) for n in cfg.n]
        text = "".join(s.to_csv() if k == 0 else s.to_csv().split("\n", 1)[1] for k, s in enumerate(sweeps))
        _write(cfg.out / "sweep.csv", text)
    failures = certlab.hard_failures(certs)
    for c in failures:
        print(f"HARD certificate failed: {c.case} n={c.n} {c.inequality} {c.detail}", file=sys.stderr)
    return EXIT_CERT if failures else EXIT_OK


def cmd_sweep(cfg: RunConfig, cases) -> int:
    if not cfg.eps:
        raise ConfigError("sweep needs a non-empty --eps list")
    try:
        tables = [certlab.sweep_epsilon(cfg.eps, cfg.R, n) for n in cfg.n]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    text = "".join(t.to_csv() if k == 0 else t.to_csv().split("\n", 1)[1] for k, t in enumerate(tables))
    _write(cfg.out / "sweep.csv", text)
    print(text, end="")
    return EXIT_OK if all(t.agree for t in tables) else EXIT_CERT


def _set_threads():
    val = os.environ.get("PLMA_THREADS")
    if not val:
        return
    try:
        import numba
        numba.set_num_threads(max(1, min(int(val), numba.config.NUMBA_NUM_THREADS)))
    except ValueError:
        raise ConfigError(f"PLMA_THREADS must be an integer, got {val!r}") from None


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _set_threads()
        cfg = resolve_config(args)
        cases = [] if cfg.command == "sweep" else load_cases(cfg)
        handler = {"transform": cmd_transform, "solve": cmd_solve,
                   "verify": cmd_verify, "sweep": cmd_sweep}[cfg.command]
        return handler(cfg, cases)
    except ConfigError as exc:
        print(f"plma: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CaseValidationError as exc:
        print(f"plma: case validation failed: {exc}", file=sys.stderr)
        return EXIT_CERT
    except OSError as exc:
        print(f"plma: cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
