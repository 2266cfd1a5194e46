"""Backend adapter: solve a ConicProgram with cvxpy and re-verify the result.

Rows are equilibrated (scaled to unit max coefficient) before they reach
the backend; feasibility of a reported optimum is re-checked on the
original unscaled program, so a backend's internal transforms can never
mask an infeasible answer. Infeasibility is a status, not an error: the
experiment harness counts infeasible models.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np
import scipy.sparse as sp

from .reformulate import ConicProgram, FeasibilityReport

__all__ = ["SolveSettings", "DispatchSolution", "solve"]

_ENV_BACKEND = "CCOPF_SOLVER"


@dataclass(frozen=True)
class SolveSettings:
    backend: str | None = None       # None: env CCOPF_SOLVER, else CLARABEL
    feas_tol: float = 1e-6           # absolute, MW-scale rows, for re-verification
    time_limit: float | None = None
    max_iters: int | None = None
    verbose: bool = False
    backend_options: dict = field(default_factory=dict)

    def resolved_backend(self) -> str:
        return (self.backend or os.environ.get(_ENV_BACKEND) or "CLARABEL").upper()


@dataclass(frozen=True)
class DispatchSolution:
    status: str                      # optimal | infeasible | numerical-failure
    objective: float
    pbar: np.ndarray
    alpha: np.ndarray
    aux: dict[str, np.ndarray]
    x: np.ndarray | None
    solve_time: float
    feasibility: FeasibilityReport | None
    backend: str
    message: str = ""

    @property
    def is_optimal(self) -> bool:
        return self.status == "optimal"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "objective": self.objective,
            "pbar": self.pbar.tolist(),
            "alpha": self.alpha.tolist(),
            "aux": {k: v.tolist() for k, v in self.aux.items()},
            "solve_time": self.solve_time,
            "backend": self.backend,
            "max_violation": None if self.feasibility is None
            else self.feasibility.max_violation,
            "message": self.message,
        }


def _row_scaled(a, b):
    """Equilibrate rows: divide each row and its rhs by max(|coefs|, |rhs|)."""
    if a.shape[0] == 0:
        return a, b
    mags = np.abs(a).max(axis=1)
    mags = np.asarray(mags.todense()).ravel() if hasattr(mags, "todense") else np.ravel(mags)
    mags = np.maximum(mags, np.abs(b))
    scale = 1.0 / np.where(mags > 0, mags, 1.0)
    return sp.diags(scale) @ a, b * scale


def _backend_options(backend: str, settings: SolveSettings) -> dict:
    opts = dict(settings.backend_options)
    if backend == "CLARABEL":
        # rows are equilibrated; 1e-11 relative keeps absolute residuals on
        # raw MW-scale rows comfortably inside the 1e-6 re-verification gate
        opts.setdefault("tol_feas", 1e-11)
        opts.setdefault("tol_gap_abs", 1e-11)
        opts.setdefault("tol_gap_rel", 1e-11)
        if settings.max_iters:
            opts.setdefault("max_iter", settings.max_iters)
        if settings.time_limit:
            opts.setdefault("time_limit", settings.time_limit)
    elif backend == "SCS":
        opts.setdefault("eps", 1e-9)
        if settings.max_iters:
            opts.setdefault("max_iters", settings.max_iters)
    elif backend == "ECOS":
        opts.setdefault("abstol", 1e-9)
        opts.setdefault("feastol", 1e-9)
        if settings.max_iters:
            opts.setdefault("max_iters", settings.max_iters)
    return opts


def _empty(program: ConicProgram, status: str, t: float, backend: str,
           message: str) -> DispatchSolution:
    ng = program.blocks.get("pbar", (0, 0))
    na = program.blocks.get("alpha", (0, 0))
    return DispatchSolution(
        status=status, objective=float("nan"),
        pbar=np.full(ng[1] - ng[0], np.nan), alpha=np.full(na[1] - na[0], np.nan),
        aux={}, x=None, solve_time=t, feasibility=None, backend=backend,
        message=message)


def solve(program: ConicProgram, settings: SolveSettings | None = None) -> DispatchSolution:
    """Solve the program; status reflects the backend's termination plus an
    independent primal feasibility re-check on the original rows."""
    settings = settings or SolveSettings()
    backend = settings.resolved_backend()
    if backend not in cp.installed_solvers():
        raise ValueError(f"backend {backend!r} not available; installed: "
                         f"{cp.installed_solvers()}")

    x = cp.Variable(program.n)
    cons = []
    a_eq, b_eq = _row_scaled(program.A_eq, program.b_eq)
    a_ub, b_ub = _row_scaled(program.A_ub, program.b_ub)
    if b_eq.size:
        cons.append(a_eq @ x == b_eq)
    if b_ub.size:
        cons.append(a_ub @ x <= b_ub)
    for soc in program.socs:
        m = max(np.abs(soc.F).max(), np.abs(soc.g).max(initial=0.0),
                np.abs(soc.c).max(), abs(soc.d), 1e-12)
        cons.append(cp.SOC((soc.c / m) @ x + soc.d / m, (soc.F / m) @ x + soc.g / m))
    obj = program.lin_cost @ x + program.cost0
    if program.quad_w.size:
        obj = obj + cp.sum(cp.multiply(program.quad_w,
                                       cp.square(program.quad_rows @ x + program.quad_offsets)))
    problem = cp.Problem(cp.Minimize(obj), cons)

    t0 = time.perf_counter()
    try:
        problem.solve(solver=backend, verbose=settings.verbose,
                      **_backend_options(backend, settings))
    except (cp.SolverError, Exception) as exc:  # backend crash -> diagnostic status
        return _empty(program, "numerical-failure", time.perf_counter() - t0,
                      backend, f"backend error: {exc}")
    elapsed = time.perf_counter() - t0
    if problem.solver_stats is not None and problem.solver_stats.solve_time:
        elapsed = float(problem.solver_stats.solve_time)

    if problem.status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        return _empty(program, "infeasible", elapsed, backend,
                      f"backend status {problem.status}")
    if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE) or x.value is None:
        return _empty(program, "numerical-failure", elapsed, backend,
                      f"backend status {problem.status}")

    xv = np.asarray(x.value, dtype=float)
    feas = program.feasibility(xv)
    status = "optimal" if feas.ok(settings.feas_tol) else "numerical-failure"
    aux = {name: program.block(name, xv)
           for name in program.blocks if name not in ("pbar", "alpha")}
    ng = program.blocks.get("pbar", (0, 0))
    na = program.blocks.get("alpha", (0, 0))
    return DispatchSolution(
        status=status,
        objective=program.objective_value(xv),
        pbar=xv[ng[0]:ng[1]],
        alpha=xv[na[0]:na[1]],
        aux=aux, x=xv, solve_time=elapsed, feasibility=feas, backend=backend,
        message="" if status == "optimal"
        else f"primal re-verification failed on {feas.worst_row} "
             f"({feas.max_violation:.3e} > {settings.feas_tol:.1e})",
    )
