"""Command-line front end.

Every run reads a flat ``key = value`` configuration (file and/or flags),
writes ``solution.csv``, ``report.csv`` and ``manifest.txt`` into the output
directory, and exits with

    0  all requested verdicts pass
    1  a verdict failed
    2  configuration error
    3  solver or fit error

``FRACREG_MAX_WORKERS`` caps the thread pool used by ``paper-suite``.
"""
from __future__ import annotations

import argparse
import csv
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy

from . import __version__
from .errors import ConfigError, FracregError
from .formula import parse_formula
from .fraclap import assemble
from .grid1d import Grid, GridFunction, distance_field, make_grid, sample_closed_form
from .probe import (ENDPOINTS, MIN_SEPARATION, limited_regularity_verdict,
                    trace_time_series)
from .solvers import ProblemSpec, Solution, TimeGrid, TimeStepping, solve, solve_dirichlet
from .suite import CRITERIA, VERDICT_A_VALUES, CriterionResult
from .traces import decompose, extract_traces

COMMANDS = ("dirichlet", "resolvent", "schrodinger", "heat", "traces", "decompose", "probe",
            "paper-suite")
WORKERS_ENV = "FRACREG_MAX_WORKERS"
SOLUTION_HEADER = ["x", "u", "u_over_d_mu", "d"]
REPORT_HEADER = ["endpoint", "quantity", "value", "stderr", "verdict"]
RESIDUAL_LIMIT = 1e-10

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    a: float = 0.5
    n: int = 512
    domain: Tuple[float, float] = (-1.0, 1.0)
    rhs: str = "1"
    potential: Optional[str] = None
    lam: Optional[complex] = None
    dt: Optional[float] = None
    t_end: Optional[float] = None
    scheme: str = "ImplicitEuler"
    mu: Optional[float] = None
    M: int = 2
    out: str = "fracreg-out"
    seed: Optional[int] = None

    @property
    def weight(self) -> float:
        return self.a if self.mu is None else self.mu


KEYS = ("command", "a", "n", "domain", "rhs", "potential", "lambda", "dt", "t_end", "scheme",
        "mu", "M", "out", "seed")


def _fmt_float(v: float) -> str:
    return repr(float(v))


def _fmt_complex(z: Optional[complex]) -> str:
    if z is None:
        return "none"
    z = complex(z)
    if z.imag == 0:
        return _fmt_float(z.real)
    return f"{z.real!r}{z.imag:+}j"


def _none_or(v, fmt=str) -> str:
    return "none" if v is None else fmt(v)


def emit(cfg: ExperimentConfig) -> str:
    """Canonical text: every key, fixed order, one ``key = value`` per line."""
    vals = {
        "command": cfg.command,
        "a": _fmt_float(cfg.a),
        "n": str(cfg.n),
        "domain": f"{_fmt_float(cfg.domain[0])},{_fmt_float(cfg.domain[1])}",
        "rhs": cfg.rhs,
        "potential": _none_or(cfg.potential),
        "lambda": _fmt_complex(cfg.lam),
        "dt": _none_or(cfg.dt, _fmt_float),
        "t_end": _none_or(cfg.t_end, _fmt_float),
        "scheme": cfg.scheme,
        "mu": _none_or(cfg.mu, _fmt_float),
        "M": str(cfg.M),
        "out": cfg.out,
        "seed": _none_or(cfg.seed),
    }
    return "".join(f"{k} = {vals[k]}\n" for k in KEYS)


def read_pairs(text: str) -> Dict[str, str]:
    pairs: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in pairs:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        pairs[key] = value
    return pairs


def _float(key, text):
    try:
        v = float(text)
    except ValueError:
        raise ConfigError(f"{key} must be a number, got {text!r}") from None
    if not np.isfinite(v):
        raise ConfigError(f"{key} must be finite, got {text!r}")
    return v


def _int(key, text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{key} must be an integer, got {text!r}") from None


def _optional(text):
    return None if text is None or text.lower() == "none" else text


def build_config(pairs: Dict[str, str]) -> ExperimentConfig:
    """Validate raw ``key -> text`` pairs into an :class:`ExperimentConfig`."""
    command = pairs.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"command must be one of {', '.join(COMMANDS)}, got {command!r}")
    kw = {"command": command}
    if "a" in pairs:
        kw["a"] = _float("a", pairs["a"])
    if "n" in pairs:
        kw["n"] = _int("n", pairs["n"])
    if "domain" in pairs:
        parts = pairs["domain"].replace("(", "").replace(")", "").split(",")
        if len(parts) != 2:
            raise ConfigError(f"domain must be 'lo,hi', got {pairs['domain']!r}")
        kw["domain"] = (_float("domain", parts[0]), _float("domain", parts[1]))
    if "rhs" in pairs:
        kw["rhs"] = pairs["rhs"]
    kw["potential"] = _optional(pairs.get("potential"))
    lam = _optional(pairs.get("lambda"))
    if lam is not None:
        try:
            kw["lam"] = complex(lam.replace(" ", ""))
        except ValueError:
            raise ConfigError(f"lambda must be a real or complex number, got {lam!r}") from None
    for key in ("dt", "t_end", "mu"):
        v = _optional(pairs.get(key))
        if v is not None:
            kw[key] = _float(key, v)
    if "scheme" in pairs:
        kw["scheme"] = pairs["scheme"]
    if "M" in pairs:
        kw["M"] = _int("M", pairs["M"])
    if "out" in pairs:
        kw["out"] = pairs["out"]
    seed = _optional(pairs.get("seed"))
    if seed is not None:
        kw["seed"] = _int("seed", seed)
    cfg = ExperimentConfig(**kw)
    validate(cfg)
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    return build_config(read_pairs(text))


def normalize(text: str) -> str:
    return emit(parse_config(text))


def validate(cfg: ExperimentConfig) -> None:
    if not 0 < cfg.a < 1:
        raise ConfigError(f"a must satisfy 0 < a < 1 (the admissible order range), got {cfg.a:g}")
    if cfg.n < 4:
        raise ConfigError(f"n must be at least 4, got {cfg.n}")
    lo, hi = cfg.domain
    if not lo < hi:
        raise ConfigError(f"domain must satisfy lo < hi, got {cfg.domain}")
    if cfg.mu is not None and cfg.mu <= -1:
        raise ConfigError("mu must exceed -1")
    if not 1 <= cfg.M <= 6:
        raise ConfigError(f"M must lie in 1..6, got {cfg.M}")
    if cfg.scheme not in {s.value for s in TimeStepping}:
        raise ConfigError(f"scheme must be ImplicitEuler or CrankNicolson, got {cfg.scheme!r}")
    for key in ("rhs", "potential"):
        text = getattr(cfg, key)
        if text is not None:
            parse_formula(text, cfg.domain)
    timed = cfg.dt is not None or cfg.t_end is not None
    if timed:
        if cfg.dt is None or cfg.t_end is None:
            raise ConfigError("dt and t_end must be given together")
        if not cfg.dt > 0 or cfg.t_end < cfg.dt:
            raise ConfigError("need dt > 0 and t_end >= dt")
    kinds = sum([cfg.lam is not None, cfg.potential is not None, timed])
    need = {"resolvent": "lambda", "schrodinger": "potential", "heat": "dt"}
    if cfg.command in need:
        present = {"resolvent": cfg.lam is not None, "schrodinger": cfg.potential is not None,
                   "heat": timed}[cfg.command]
        if not present:
            raise ConfigError(f"{cfg.command} needs {need[cfg.command]}")
        if kinds > 1:
            raise ConfigError(f"{cfg.command} takes only {need[cfg.command]} among lambda/potential/dt")
    elif cfg.command == "dirichlet" and kinds:
        raise ConfigError("dirichlet takes none of lambda, potential, dt")
    elif cfg.command == "probe" and kinds != 1:
        raise ConfigError("probe needs exactly one of lambda, potential, dt/t_end for the test run")
    elif cfg.command in ("traces", "decompose") and kinds > 1:
        raise ConfigError("give at most one of lambda, potential, dt/t_end")


# --- execution ------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def write_solution(path: Path, u: GridFunction, mu: float) -> None:
    g = u.grid
    d = distance_field(g).values
    vals = np.real(u.values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SOLUTION_HEADER)
        for x, ui, di in zip(g.nodes, vals, d):
            w.writerow([_fmt(float(x)), _fmt(float(ui)), _fmt(float(ui / di ** mu)), _fmt(float(di))])


def write_report(path: Path, rows: Sequence[Tuple]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for endpoint, quantity, value, stderr, verdict in rows:
            w.writerow([endpoint, quantity, _fmt(float(value)), _fmt(float(stderr)), verdict])


def write_manifest(path: Path, cfg: ExperimentConfig, extra: Dict[str, object]) -> None:
    lines = ["# fracreg run manifest", emit(cfg).rstrip("\n")]
    info = {
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "workers_env": WORKERS_ENV,
    }
    info.update(extra)
    lines += [f"{k} = {_fmt(v)}" for k, v in info.items()]
    path.write_text("\n".join(lines) + "\n")


def _grid(cfg) -> Grid:
    return make_grid(cfg.domain[0], cfg.domain[1], cfg.n)


def _spec(cfg: ExperimentConfig, grid: Grid) -> ProblemSpec:
    f = parse_formula(cfg.rhs, cfg.domain)
    pot = None if cfg.potential is None else sample_closed_form(grid, parse_formula(cfg.potential, cfg.domain))
    if cfg.dt is not None:
        steps = int(round(cfg.t_end / cfg.dt))
        tg = TimeGrid(cfg.dt, cfg.t_end, TimeStepping(cfg.scheme), max(1, steps // 20))
        return ProblemSpec(cfg.a, grid, lambda x, t, f=f: f(x), time=tg)
    rhs = sample_closed_form(grid, f)
    return ProblemSpec(cfg.a, grid, rhs, potential=pot, lam=cfg.lam)


def _sigma(mu):
    two = 2 * mu
    return None if any(abs(two - j) < MIN_SEPARATION for j in range(8)) else two


def _solution_rows(sol: Solution, mu: float) -> List[Tuple]:
    rows = [("", "residual_norm", sol.residual_norm, float("nan"),
             "pass" if sol.residual_norm <= RESIDUAL_LIMIT else "fail"),
            ("", "condition_estimate", sol.solver_report.condition_estimate, float("nan"), "-")]
    if np.iscomplexobj(sol.u.values):
        return rows
    for ep in ENDPOINTS:
        tv = extract_traces(sol.u, mu, 1, ep, sigma=_sigma(mu))
        rows.append((ep.value, "gamma0_mu", tv.values[0], tv.stderr[0], "-"))
    if sol.snapshots is not None:
        for ep in ENDPOINTS:
            times, vals, errs = trace_time_series(sol, mu, ep)
            rows += [(ep.value, f"gamma0_mu(t={t:.6g})", v, e, "-") for t, v, e in zip(times, vals, errs)]
    return rows


def _run_solve(cfg, out, extra):
    grid = _grid(cfg)
    sol = solve(_spec(cfg, grid))
    extra.update(_solution_extra(sol))
    write_solution(out / "solution.csv", sol.u, cfg.weight)
    return _solution_rows(sol, cfg.weight)


def _solution_extra(sol: Solution) -> Dict[str, object]:
    g = sol.spec.grid
    return {"kind": sol.spec.kind.value, "h": g.h, "residual_norm": sol.residual_norm,
            "solver_method": sol.solver_report.method,
            "factorization": sol.solver_report.factorization,
            "condition_estimate": sol.solver_report.condition_estimate,
            "time_steps": sol.solver_report.steps,
            "u_column": "real part" if np.iscomplexobj(sol.u.values) else "value"}


def _run_traces(cfg, out, extra):
    grid = _grid(cfg)
    sol = solve(_spec(cfg, grid))
    extra.update(_solution_extra(sol))
    mu = cfg.weight
    write_solution(out / "solution.csv", sol.u, mu)
    rows = []
    for ep in ENDPOINTS:
        tv = extract_traces(sol.u, mu, cfg.M, ep, sigma=_sigma(mu))
        zero = tv.consistent_with_zero()
        for j in range(cfg.M):
            rows.append((ep.value, f"gamma{j}_mu", tv.values[j], tv.stderr[j],
                         "zero" if zero[j] else "nonzero"))
    return rows


def _run_decompose(cfg, out, extra):
    grid = _grid(cfg)
    sol = solve(_spec(cfg, grid))
    extra.update(_solution_extra(sol))
    mu = cfg.weight
    write_solution(out / "solution.csv", sol.u, mu)
    dec = decompose(sol.u, mu, cfg.M, sigma_hint=_sigma(mu))
    with open(out / "decomposition.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "u", "singular_part", "remainder"])
        for row in zip(grid.nodes, np.real(sol.u.values), dec.singular_part.values, dec.remainder.values):
            w.writerow([_fmt(float(v)) for v in row])
    rows = []
    for ep in ENDPOINTS:
        tv = dec.traces[ep]
        rt = extract_traces(dec.remainder, mu, cfg.M, ep, sigma=_sigma(mu))
        for j in range(cfg.M):
            rows.append((ep.value, f"phi{j}", tv.values[j], tv.stderr[j], "-"))
            rows.append((ep.value, f"psi{j}", dec.coefficients[ep][j], float("nan"), "-"))
            ok = abs(rt.values[j]) <= max(1e-6, 3 * rt.stderr[j])
            rows.append((ep.value, f"remainder_gamma{j}_mu", rt.values[j], rt.stderr[j],
                         "pass" if ok else "fail"))
    return rows


def _run_probe(cfg, out, extra):
    grid = _grid(cfg)
    A = assemble(cfg.a, grid)
    test = solve(_spec(cfg, grid), A)
    control = solve_dirichlet(ProblemSpec(cfg.a, grid, sample_closed_form(grid, parse_formula(cfg.rhs, cfg.domain))), A)
    extra.update(_solution_extra(test))
    mu = cfg.weight
    write_solution(out / "solution.csv", test.u, mu)
    rep = limited_regularity_verdict(test, control, mu)
    rows = []
    for ep in ENDPOINTS:
        rows.append((ep.value, "gamma0_a", *rep.gamma0_a[ep], "-"))
        rows.append((ep.value, "c_2a", *rep.c_2a[ep], "-"))
        rows.append((ep.value, "control_c_2a", *rep.control_c_2a[ep], "-"))
        rows.append((ep.value, "c_2a_ratio", rep.ratios[ep], float("nan"), "-"))
        win = rep.expansions[ep].window
        rows.append((ep.value, "fit_window_d_max", win[1], float("nan"), "-"))
    rows.append(("right", "holder_exponent", rep.holder_exponent_boundary, float("nan"), "-"))
    for name, ok in rep.verdicts.items():
        rows.append(("", name, rep.control_ratio, float("nan"), "pass" if ok else "fail"))
    return rows


def _suite_jobs(cfg: ExperimentConfig):
    a_values = tuple(sorted(set(VERDICT_A_VALUES) | {cfg.a}))
    seed = 20240607 if cfg.seed is None else cfg.seed
    return [
        (1, {}), (2, {}), (3, {}), (4, {}), (5, {}), (6, {}),
        (7, {"a_values": a_values, "n": cfg.n}),
        (8, {"a": cfg.a, "n": cfg.n}),
        (9, {}), (10, {"seed": seed}),
    ]


def max_workers() -> int:
    raw = os.environ.get(WORKERS_ENV)
    if raw is None:
        return max(1, os.cpu_count() or 1)
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None


def run_suite(cfg: ExperimentConfig, echo=print) -> List[CriterionResult]:
    jobs = _suite_jobs(cfg)
    with ThreadPoolExecutor(max_workers=max_workers()) as pool:
        futures = [pool.submit(CRITERIA[k], **kw) for k, kw in jobs]
        results = [f.result() for f in futures]
    for r in results:
        echo(r.line())
    return results


def _run_suite(cfg, out, extra, echo=print):
    results = run_suite(cfg, echo)
    rows = []
    for r in results:
        for endpoint, quantity, value, stderr, verdict in r.rows:
            rows.append((endpoint, f"c{r.number}: {quantity}", value, stderr, verdict))
        rows.append(("", f"c{r.number}: criterion", float(r.passed), float("nan"),
                     "pass" if r.passed else "fail"))
    grid = make_grid(-1.0, 1.0, cfg.n)
    central = solve(ProblemSpec(cfg.a, grid, GridFunction(grid, np.ones(cfg.n)), lam=-1.0))
    extra.update({"solution_csv": f"resolvent lambda=-1 rhs=1 a={cfg.a!r} on (-1,1)",
                  "criteria": ",".join(str(k) for k, _ in _suite_jobs(cfg))})
    extra.update({f"criterion_{k}_args": repr(kw) for k, kw in _suite_jobs(cfg)})
    write_solution(out / "solution.csv", central.u, cfg.a)
    return rows


RUNNERS = {
    "dirichlet": _run_solve, "resolvent": _run_solve, "schrodinger": _run_solve, "heat": _run_solve,
    "traces": _run_traces, "decompose": _run_decompose, "probe": _run_probe,
    "paper-suite": _run_suite,
}


def run(cfg: ExperimentConfig) -> int:
    """Execute ``cfg`` and write its outputs; returns the exit code."""
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    extra: Dict[str, object] = {}
    rows = RUNNERS[cfg.command](cfg, out, extra)
    write_report(out / "report.csv", rows)
    write_manifest(out / "manifest.txt", cfg, extra)
    return EXIT_VERDICT if any(r[4] == "fail" for r in rows) else EXIT_OK


# --- argument handling ----------------------------------------------------------------

FLAG_KEYS = {"a": "a", "n": "n", "domain": "domain", "rhs": "rhs", "potential": "potential",
             "lam": "lambda", "dt": "dt", "t_end": "t_end", "scheme": "scheme", "mu": "mu",
             "M": "M", "out": "out", "seed": "seed"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fracreg",
                                description="Fractional Laplacian boundary-regularity experiments.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", help="flat 'key = value' file; flags override it")
    p.add_argument("--a", help="order, 0 < a < 1")
    p.add_argument("--n", help="interior nodes")
    p.add_argument("--domain", help="lo,hi")
    p.add_argument("--rhs", help="formula in x and d")
    p.add_argument("--potential", help="formula, or none")
    p.add_argument("--lambda", dest="lam", help="real or complex spectral parameter, or none")
    p.add_argument("--dt")
    p.add_argument("--t-end", dest="t_end")
    p.add_argument("--scheme", help="ImplicitEuler or CrankNicolson")
    p.add_argument("--mu", help="trace weight; defaults to a")
    p.add_argument("--M", help="number of traces")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed")
    p.add_argument("--print-config", action="store_true",
                   help="print the normalized configuration and exit")
    return p


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    pairs: Dict[str, str] = {}
    if args.config:
        try:
            pairs.update(read_pairs(Path(args.config).read_text()))
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    pairs["command"] = args.command
    for attr, key in FLAG_KEYS.items():
        v = getattr(args, attr)
        if v is not None:
            pairs[key] = v
    return build_config(pairs)


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.print_config:
            sys.stdout.write(emit(cfg))
            return EXIT_OK
        return run(cfg)
    except ConfigError as exc:
        print(f"fracreg: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FracregError, np.linalg.LinAlgError) as exc:
        print(f"fracreg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
