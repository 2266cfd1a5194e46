"""Command-line front end.

Subcommands: ``fit``, ``solve``, ``evaluate``, ``experiment``, ``pwl``,
``ptdf``. A declarative JSON config drives every pipeline command; flags
override individual fields and the effective (defaults-resolved) config is
written next to the outputs. Single-run commands (fit/solve/evaluate) use
the first entry of the seed list.

Exit codes: 0 ok, 2 infeasible model, 3 validation error, 4 backend failure.
Backend selection: --backend flag or the CCOPF_SOLVER environment variable.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

from .cdf_approx import build_pwl
from .config import RunConfig
from .estimation import gmm_loglik
from .grid import GridValidationError, compute_ptdf, load_case
from .reformulate import MethodSpec, classical_inputs
from .risk import (
    evaluate_pipeline,
    fit_classical,
    fit_ci,
    make_dataset,
    run_experiment,
    to_omega,
    violation_rates,
)
from .scenarios import SplitSpec, split
from .solver import SolveSettings

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_VALIDATION = 3
EXIT_BACKEND = 4


def _dump(obj: dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {}
    for name in ("case", "approach", "distribution", "k", "epsilon", "pwl_delta",
                 "restarts", "train_fraction", "zero_mean", "output_dir",
                 "classical_structure"):
        val = getattr(args, name, None)
        if val is not None:
            overrides[name] = val
    for name in ("kind", "n_samples", "mu", "sigma", "x0", "gamma", "path", "normalize"):
        val = getattr(args, f"dataset_{name}", None)
        if val is not None:
            overrides[name] = val
    if getattr(args, "seeds", None):
        overrides["seeds"] = tuple(int(s) for s in args.seeds.split(","))
    return cfg.with_overrides(**overrides)


def _settings(args) -> SolveSettings:
    return SolveSettings(backend=getattr(args, "backend", None))


def _prepare_run(config: RunConfig):
    """Case, PTDF, seeded dataset and split for single-run commands."""
    case = config.load_case()
    ptdf = compute_ptdf(case)
    seed = config.seeds[0]
    dataset = make_dataset(config, case, seed)
    train, holdout = split(dataset, SplitSpec(config.train_fraction, seed))
    return case, ptdf, seed, train, holdout


def cmd_fit(args) -> int:
    config = _load_config(args)
    case, ptdf, seed, train, _ = _prepare_run(config)
    outdir = Path(config.output_dir)
    _dump(config.to_dict(), outdir / "effective_config.json")
    t0 = time.perf_counter()
    if config.approach == "classical":
        xi_model, fit_time = fit_classical(train, config, seed)
        _dump(xi_model.to_dict(), outdir / "xi_model.json")
        omega_view = classical_inputs(case, ptdf, xi_model).omega
        n_files = 1
    else:
        inputs, fit_time = fit_ci(train, ptdf, case, config, seed)
        _dump(inputs.omega.to_dict(), outdir / "omega_model.json")
        for l, m in enumerate(inputs.eta):
            _dump(m.to_dict(), outdir / f"eta_model_{case.lines[l].id}.json")
        omega_view = inputs.omega
        n_files = 1 + case.n_line
    ll = gmm_loglik(omega_view, to_omega(train).values[:, None])
    _dump({"approach": config.approach, "k": config.k, "seed": seed,
           "n_model_files": n_files, "train_size": train.n,
           "omega_log_likelihood": ll}, outdir / "fit_report.json")
    _dump({"fit_time": fit_time, "total_time": time.perf_counter() - t0},
          outdir / "timing.json")
    print(f"wrote {n_files} model file(s) to {outdir}")
    return EXIT_OK


def _solve_single(config: RunConfig, args):
    case, ptdf, seed, train, holdout = _prepare_run(config)
    pwl = build_pwl(config.pwl_delta) if config.distribution == "gmm" else None
    spec = MethodSpec(approach=config.approach, distribution=config.distribution,
                      k=config.k, epsilon=config.epsilon, pwl=pwl,
                      zero_mean=config.zero_mean)
    if config.approach == "classical":
        xi_model, fit_time = fit_classical(train, config, seed)
        inputs = classical_inputs(case, ptdf, xi_model)
    else:
        xi_model = None
        inputs, fit_time = fit_ci(train, ptdf, case, config, seed)
    outcome = evaluate_pipeline(case, ptdf, config.approach, inputs, spec, holdout,
                                _settings(args), xi_model=xi_model)
    outcome.fit_time = fit_time
    return case, ptdf, holdout, outcome


def cmd_solve(args) -> int:
    config = _load_config(args)
    outdir = Path(config.output_dir)
    _dump(config.to_dict(), outdir / "effective_config.json")
    case, ptdf, holdout, outcome = _solve_single(config, args)
    sol = outcome.solution
    payload = sol.to_dict()
    timing = {"fit_time": outcome.fit_time, "solve_time": payload.pop("solve_time")}
    _dump(payload, outdir / "solution.json")
    _dump(timing, outdir / "timing.json")
    print(f"status: {sol.status}  objective: {sol.objective:.4f}  "
          f"(fit {timing['fit_time']:.2f}s, solve {timing['solve_time']:.3f}s)")
    if sol.status == "optimal":
        return EXIT_OK
    return EXIT_INFEASIBLE if sol.status == "infeasible" else EXIT_BACKEND


def cmd_evaluate(args) -> int:
    config = _load_config(args)
    outdir = Path(config.output_dir)
    _dump(config.to_dict(), outdir / "effective_config.json")
    case, ptdf, holdout, outcome = _solve_single(config, args)
    sol = outcome.solution
    if not sol.is_optimal:
        _dump({"status": sol.status}, outdir / "risk.json")
        print(f"no risk report: solver status {sol.status}")
        return EXIT_INFEASIBLE if sol.status == "infeasible" else EXIT_BACKEND
    report = violation_rates(case, ptdf, sol, holdout, config.epsilon)
    _dump({"epsilon": report.epsilon, "holdout_size": report.holdout_size,
           "worst_case": report.worst_case, "per_constraint": report.per_constraint,
           "audit_min_probability": outcome.audit_min_prob},
          outdir / "risk.json")
    with open(outdir / "risk.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["constraint", "violation_rate"])
        for k, v in report.per_constraint.items():
            w.writerow([k, repr(float(v))])
    print(f"worst-case violation {report.worst_case:.4f} (epsilon {config.epsilon})")
    return EXIT_OK


def cmd_experiment(args) -> int:
    config = _load_config(args)
    outdir = Path(config.output_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    _dump(config.to_dict(), outdir / "effective_config.json")
    result = run_experiment(config, _settings(args))
    rows = [r.row() for r in result.runs]
    summary = result.summary()
    with open(outdir / "runs.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        for row in rows:
            w.writerow(row)
        agg = {k: "" for k in rows[0]}
        agg.update({
            "seed": "aggregate",
            "ll_classical": summary["ll_classical_mean"],
            "ll_ci": summary["ll_ci_mean"],
            "worst_violation_classical": summary["worst_violation_classical_mean"],
            "worst_violation_ci": summary["worst_violation_ci_mean"],
            "status_classical": f"infeasible={summary['infeasible_classical']}",
            "status_ci": f"infeasible={summary['infeasible_ci']}",
        })
        w.writerow(agg)
    _dump(summary, outdir / "summary.json")
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_pwl(args) -> int:
    pwl = build_pwl(args.delta)
    out = Path(args.out or "pwl.json")
    pwl.save_json(out)
    print(f"S = {pwl.n_segments} segments at delta = {args.delta}; wrote {out}")
    return EXIT_OK


def cmd_ptdf(args) -> int:
    config = _load_config(args)
    case = config.load_case()
    ptdf = compute_ptdf(case)
    out = Path(args.out or "ptdf.csv")
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["line_id"] + [str(b.id) for b in case.buses])
        for l, line in enumerate(case.lines):
            w.writerow([line.id] + [repr(float(v)) for v in ptdf.H[l]])
    print(f"wrote {case.n_line} x {case.n_bus} PTDF to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ccopf",
                                description="Chance-constrained DC-OPF toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def add_common(sp):
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--case", help="case JSON path or builtin:<name>")
        sp.add_argument("--approach", choices=["classical", "constraint-informed"])
        sp.add_argument("--distribution", choices=["gaussian", "gmm"])
        sp.add_argument("--k", type=int)
        sp.add_argument("--epsilon", type=float)
        sp.add_argument("--pwl-delta", dest="pwl_delta", type=float)
        sp.add_argument("--restarts", type=int)
        sp.add_argument("--seeds", help="comma-separated seed list")
        sp.add_argument("--train-fraction", dest="train_fraction", type=float)
        sp.add_argument("--zero-mean", dest="zero_mean", action="store_const", const=True)
        sp.add_argument("--output-dir", dest="output_dir")
        sp.add_argument("--backend", help="solver backend (default CLARABEL)")
        sp.add_argument("--dataset-kind", dest="dataset_kind",
                        choices=["synthetic-G", "synthetic-C", "csv"])
        sp.add_argument("--n-samples", dest="dataset_n_samples", type=int)
        sp.add_argument("--csv-path", dest="dataset_path")
        sp.add_argument("--normalize", dest="dataset_normalize",
                        action="store_const", const=True)

    for name, fn in (("fit", cmd_fit), ("solve", cmd_solve),
                     ("evaluate", cmd_evaluate), ("experiment", cmd_experiment)):
        sp = sub.add_parser(name)
        add_common(sp)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("pwl", help="dump the normal-CDF under-estimator")
    sp.add_argument("--delta", type=float, required=True)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_pwl)

    sp = sub.add_parser("ptdf", help="dump the PTDF matrix as CSV")
    add_common(sp)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_ptdf)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (GridValidationError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
