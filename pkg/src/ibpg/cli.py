"""Config-driven experiment runner.

Experiments are described by an INI-style file (flat key = value entries in
sections); see README for the full schema.  Three commands are exposed:

* ``run``      solve one instance, writing trace.csv, summary.json, and the
               diagnostics reports; exit 0 iff the run completed and every
               gated diagnostic passed.
* ``certify``  sampled relative-smoothness certification only.
* ``sweep``    one run per inertia weight in ``beta_sweep`` with shared data
               and starting point, writing sweep.csv and a comparison table.

Exit codes: 0 success, 1 diagnostic failure, 2 config/usage error,
3 infeasible parameters, 4 divergence (non-finite values).
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
from dataclasses import dataclass

import numpy as np

from . import diagnostics
from .kernels import Kernel
from .problems import (
    CompositeProblem,
    ConfigurationError,
    LeastSquares,
    NonsmoothPart,
    QuadraticInverse,
    load_matrix,
    random_least_squares,
    random_quadratic_inverse,
    validate_problem,
)
from .solver import (
    DivergenceError,
    InfeasibleParametersError,
    ParameterSchedule,
    StoppingRule,
    parameter_window,
    run,
    validate_parameters,
    write_trace_csv,
)

EXIT_OK = 0
EXIT_DIAGNOSTIC_FAIL = 1
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_DIVERGED = 4


class ConfigError(ValueError):
    """Malformed experiment config; message names the section and key."""


@dataclass
class ExperimentConfig:
    problem: CompositeProblem
    schedule: ParameterSchedule
    beta_sweep: list[float] | None
    stop: StoppingRule
    out_dir: str
    seed: int
    x0: np.ndarray
    certify_samples: int
    certify_radius: float
    certify_l_override: float | None


def _parse_inline_matrix(text: str, what: str) -> np.ndarray:
    rows = [r.strip() for r in text.split(";") if r.strip()]
    try:
        data = [[float(v) for v in r.replace(",", " ").split()] for r in rows]
    except ValueError as exc:
        raise ConfigError(f"{what}: non-numeric entry in inline matrix") from exc
    widths = {len(r) for r in data}
    if len(widths) != 1:
        raise ConfigError(f"{what}: ragged inline matrix rows")
    return np.array(data, dtype=float)


def _get(cfg, section, key, default=None, cast=str, required=False):
    if not cfg.has_option(section, key):
        if required:
            raise ConfigError(f"[{section}] {key}: required key missing")
        return default
    raw = cfg.get(section, key)
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from exc


def _float_list(raw: str) -> list[float]:
    return [float(v) for v in raw.replace(",", " ").split()]


def _build_instance(cfg) -> tuple[CompositeProblem, int, float]:
    family = _get(cfg, "instance", "family", required=True).strip().lower()
    if family not in ("least_squares", "quadratic_inverse"):
        raise ConfigError(f"[instance] family: unknown family {family!r}")
    seed = _get(cfg, "instance", "seed", default=0, cast=int)

    if cfg.has_option("instance", "a_file") or cfg.has_option("instance", "a"):
        if cfg.has_option("instance", "a_file"):
            try:
                A = load_matrix(_get(cfg, "instance", "a_file"))
                b = load_matrix(_get(cfg, "instance", "b_file", required=True)).ravel()
            except (OSError, ConfigurationError) as exc:
                raise ConfigError(f"[instance] data file: {exc}") from exc
        else:
            A = _parse_inline_matrix(_get(cfg, "instance", "a"), "[instance] a")
            b = _parse_inline_matrix(_get(cfg, "instance", "b", required=True),
                                     "[instance] b").ravel()
    else:
        d = _get(cfg, "instance", "d", cast=int, required=True)
        m = _get(cfg, "instance", "m", cast=int, required=True)
        if family == "least_squares":
            noise = _get(cfg, "instance", "noise", default=0.1, cast=float)
            A, b, _ = random_least_squares(d, m, seed, noise=noise)
        else:
            A, b, _ = random_quadratic_inverse(d, m, seed)

    synthetic_qi = (family == "quadratic_inverse"
                    and not (cfg.has_option("instance", "a_file")
                             or cfg.has_option("instance", "a")))
    f = LeastSquares(A, b) if family == "least_squares" else QuadraticInverse(A, b)

    g_kind = (_get(cfg, "regularizer", "kind", default="zero") or "zero").strip().lower()
    weight = _get(cfg, "regularizer", "weight", default=0.0, cast=float)
    try:
        g = NonsmoothPart(g_kind, weight)
        kernel_kind = _get(cfg, "kernel", "kind", default=f.kernel_kind).strip().lower()
        h = Kernel(kernel_kind, f.dimension)
        # synthetic quadratic-inverse data is consistent, so inf Psi = 0 there
        known = 0.0 if (synthetic_qi and g.kind == "zero") else None
        problem = CompositeProblem(f, g, h, known_optimum=known)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    x0_scale = _get(cfg, "instance", "x0_scale", default=1.0, cast=float)
    return problem, seed, x0_scale


def _build_schedule(cfg, problem: CompositeProblem) -> tuple[ParameterSchedule, list[float] | None]:
    L = problem.smad_L
    sigma = problem.h.sigma
    lam_raw = (_get(cfg, "schedule", "lambda", default="auto") or "auto").strip().lower()
    if lam_raw == "auto":
        frac = _get(cfg, "schedule", "lambda_frac", default=0.99, cast=float)
        lambdas: list[float] | float = frac / L
    else:
        lambdas = _float_list(lam_raw)
    sched_probe = ParameterSchedule(lambdas, 0.0)

    beta_raw = (_get(cfg, "schedule", "beta", default="auto") or "auto").strip().lower()
    if beta_raw == "auto":
        frac = _get(cfg, "schedule", "beta_frac", default=0.9, cast=float)
        bound = 0.5 * sigma * (sched_probe.lambda_min / sched_probe.lambda_max
                               - sched_probe.lambda_min * L)
        betas: list[float] | float = frac * bound
    else:
        betas = _float_list(beta_raw)

    m_raw = (_get(cfg, "schedule", "m", default="auto") or "auto").strip().lower()
    M = None if m_raw == "auto" else float(m_raw)

    sweep = None
    if cfg.has_option("schedule", "beta_sweep"):
        sweep = _float_list(_get(cfg, "schedule", "beta_sweep"))
    return ParameterSchedule(lambdas, betas, M), sweep


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    cfg = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cfg.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if seed_override is not None:
        if not cfg.has_section("instance"):
            cfg.add_section("instance")
        cfg.set("instance", "seed", str(seed_override))

    problem, seed, x0_scale = _build_instance(cfg)
    schedule, sweep = _build_schedule(cfg, problem)
    stop = StoppingRule(
        max_iter=_get(cfg, "stopping", "max_iter", default=1000, cast=int),
        residual_tol=_get(cfg, "stopping", "residual_tol", default=1e-8, cast=float),
        step_tol=_get(cfg, "stopping", "step_tol", default=0.0, cast=float),
    )
    out_dir = _get(cfg, "output", "dir", default=".")
    x0 = x0_scale * np.random.default_rng([seed, 17]).standard_normal(problem.dimension)
    return ExperimentConfig(
        problem=problem,
        schedule=schedule,
        beta_sweep=sweep,
        stop=stop,
        out_dir=out_dir,
        seed=seed,
        x0=x0,
        certify_samples=_get(cfg, "certify", "samples", default=10_000, cast=int),
        certify_radius=_get(cfg, "certify", "radius", default=3.0, cast=float),
        certify_l_override=_get(cfg, "certify", "l_override", default=None, cast=float),
    )


def _write_json(path, payload: dict) -> None:
    for v in payload.values():
        if isinstance(v, float) and not np.isfinite(v):
            raise DivergenceError(f"non-finite value in {os.path.basename(path)}", [])
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def cmd_run(config_path, out_dir=None, seed=None, samples=None) -> int:
    try:
        exp = load_config(config_path, seed_override=seed)
        validate_problem(exp.problem, seed=exp.seed)
    except (ConfigError, ConfigurationError) as exc:
        print(f"config error: {exc}")
        return EXIT_CONFIG

    L = exp.problem.smad_L
    sigma = exp.problem.h.sigma
    try:
        window = validate_parameters(L, sigma, exp.schedule)
    except InfeasibleParametersError as exc:
        print(f"infeasible parameters: {exc}")
        return EXIT_INFEASIBLE

    out = out_dir or exp.out_dir
    os.makedirs(out, exist_ok=True)
    try:
        result = run(exp.problem, exp.schedule, exp.x0, exp.stop)
        write_trace_csv(result.records, os.path.join(out, "trace.csv"))
    except DivergenceError as exc:
        print(f"diverged: {exc}")
        if exc.records:
            write_trace_csv(exc.records, os.path.join(out, "trace_partial.csv"))
        return EXIT_DIVERGED

    final = result.final
    _write_json(os.path.join(out, "summary.json"), {
        "iterations": final.k,
        "termination_reason": result.termination_reason,
        "final_psi": final.psi,
        "final_residual": final.residual_norm,
        "M": result.M,
        "window": [window.m_lo, window.m_hi],
    })

    reports = {}
    reports["descent"] = diagnostics.check_descent(
        result.records, result.M, L, sigma, exp.schedule)
    reports["rate_bound"] = diagnostics.check_rate_bound(
        result.records, result.M, sigma, exp.schedule.lambda_min, exp.schedule.beta_max)
    n_smad = samples if samples is not None else exp.certify_samples
    reports["smad"] = diagnostics.certify_smad(
        exp.problem.f, exp.problem.h, L, n_samples=n_smad,
        radius=exp.certify_radius, seed=exp.seed)
    for name, rep in reports.items():
        _write_json(os.path.join(out, f"{name}_report.json"), rep.to_dict())
        print(f"{name}: {'PASS' if rep.passed else 'FAIL'} "
              f"(worst slack {rep.worst_slack:.3e} at {rep.location})")
    flr = diagnostics.finite_length_report(result.records)
    _write_json(os.path.join(out, "finite_length_report.json"), flr.to_dict())
    print(f"finite_length: cumulative {flr.cumulative_length:.6g}, "
          f"tail slope {flr.tail_slope:.3g}, h2 constant {flr.h2_constant:.6g}")
    print(f"terminated: {result.termination_reason} after {final.k} iterations, "
          f"Psi = {final.psi:.12g}, residual = {final.residual_norm:.3e}")
    return EXIT_OK if all(r.passed for r in reports.values()) else EXIT_DIAGNOSTIC_FAIL


def cmd_certify(config_path, n_samples=None, out_dir=None, seed=None) -> int:
    try:
        exp = load_config(config_path, seed_override=seed)
    except ConfigError as exc:
        print(f"config error: {exc}")
        return EXIT_CONFIG
    n = n_samples if n_samples is not None else exp.certify_samples
    if n < 1:
        print(f"invalid argument: samples must be >= 1, got {n}")
        return EXIT_CONFIG
    L = exp.certify_l_override if exp.certify_l_override is not None else exp.problem.smad_L
    report = diagnostics.certify_smad(
        exp.problem.f, exp.problem.h, L,
        n_samples=n, radius=exp.certify_radius, seed=exp.seed)
    out = out_dir or exp.out_dir
    os.makedirs(out, exist_ok=True)
    _write_json(os.path.join(out, "smad_report.json"), report.to_dict())
    print(f"smad_certification: {'PASS' if report.passed else 'FAIL'} "
          f"(declared L {report.details['declared_L']:.6g}, "
          f"empirical L {report.details['empirical_L']:.6g}, "
          f"worst slack {report.worst_slack:.3e} at sample {report.location})")
    return EXIT_OK if report.passed else EXIT_DIAGNOSTIC_FAIL


def cmd_sweep(config_path, out_dir=None, seed=None) -> int:
    try:
        exp = load_config(config_path, seed_override=seed)
        validate_problem(exp.problem, seed=exp.seed)
    except (ConfigError, ConfigurationError) as exc:
        print(f"config error: {exc}")
        return EXIT_CONFIG
    if not exp.beta_sweep:
        print("config error: [schedule] beta_sweep is required for the sweep command")
        return EXIT_CONFIG

    L = exp.problem.smad_L
    sigma = exp.problem.h.sigma
    rows = []
    for beta in sorted(exp.beta_sweep):
        sched = ParameterSchedule(exp.schedule.lambdas, beta, exp.schedule.M)
        if not parameter_window(L, sigma, sched).feasible:
            rows.append((beta, "infeasible", "", "", ""))
            continue
        try:
            result = run(exp.problem, sched, exp.x0, exp.stop)
        except DivergenceError as exc:
            print(f"diverged at beta={beta:g}: {exc}")
            return EXIT_DIVERGED
        final = result.final
        rows.append((beta, "ok", final.k, final.psi, final.residual_norm))

    out = out_dir or exp.out_dir
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "sweep.csv"), "w", encoding="utf-8") as fh:
        fh.write("beta,status,iterations,final_psi,final_residual\n")
        for beta, status, iters, psi, res in rows:
            fh.write(f"{repr(beta)},{status},{iters},"
                     f"{repr(psi) if psi != '' else ''},"
                     f"{repr(res) if res != '' else ''}\n")

    header = f"{'beta':>12}  {'status':>10}  {'iterations':>10}  {'final_psi':>22}  {'final_residual':>14}"
    lines = [header, "-" * len(header)]
    for beta, status, iters, psi, res in rows:
        psi_s = f"{psi:.12g}" if psi != "" else "-"
        res_s = f"{res:.3e}" if res != "" else "-"
        lines.append(f"{beta:>12.6g}  {status:>10}  {str(iters) if iters != '' else '-':>10}  "
                     f"{psi_s:>22}  {res_s:>14}")
    table = "\n".join(lines)
    with open(os.path.join(out, "comparison.txt"), "w", encoding="utf-8") as fh:
        fh.write(table + "\n")
    print(table)
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ibpg",
        description="Inertial Bregman proximal gradient experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "certify", "sweep"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="instance seed override")
        if name in ("run", "certify"):
            p.add_argument("--samples", type=int, default=None,
                           help="relative-smoothness certification sample count")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0

    if args.command == "run":
        return cmd_run(args.config, out_dir=args.out, seed=args.seed, samples=args.samples)
    if args.command == "certify":
        return cmd_certify(args.config, n_samples=args.samples, out_dir=args.out,
                           seed=args.seed)
    return cmd_sweep(args.config, out_dir=args.out, seed=args.seed)


if __name__ == "__main__":
    raise SystemExit(main())
