"""Out-of-sample risk evaluation and the seeded experiment harness.

``violation_rates`` replays a solved dispatch against every holdout
scenario through the affine recourse and reports the empirical violation
frequency of each generation and flow limit. ``run_experiment`` runs the
full classical vs. constraint-informed comparison over seeded splits:
fit both pipelines, diagnose the domain-restriction conditions, build and
solve both conic models, and audit the winners out of sample. Infeasible
models are counted, not averaged into violations.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .cdf_approx import build_pwl
from .estimation import GmmModel, fit_gmm_em, gmm_loglik
from .grid import GridCase, PtdfMatrix, compute_ptdf, realized_state
from .reformulate import (
    FittedInputs,
    MethodSpec,
    audit_solution,
    build_ci_model,
    build_classical_model,
    build_gaussian_model,
    check_mean_conditions,
    classical_inputs,
)
from .scenarios import ScenarioSet, SplitSpec, generate_cauchy, generate_gaussian, \
    ingest_csv, split, to_eta, to_omega
from .solver import DispatchSolution, SolveSettings, solve

__all__ = ["RiskReport", "RunRecord", "ExperimentResult", "violation_rates",
           "run_experiment", "evaluate_pipeline", "make_dataset", "fit_classical",
           "fit_ci", "APPROACHES"]

APPROACHES = ("classical", "constraint-informed")

# strict breach beyond this slack (MW) counts as a violation; solver noise does not
VIOLATION_SLACK = 1e-7


@dataclass(frozen=True)
class RiskReport:
    per_constraint: dict[str, float]
    epsilon: float
    holdout_size: int
    infeasible: bool = False

    @property
    def worst_case(self) -> float:
        return max(self.per_constraint.values()) if self.per_constraint else float("nan")

    def exceeding(self) -> dict[str, float]:
        return {k: v for k, v in self.per_constraint.items() if v > self.epsilon}


def violation_rates(case: GridCase, ptdf: PtdfMatrix, solution: DispatchSolution,
                    holdout: ScenarioSet, epsilon: float) -> RiskReport:
    """Empirical violation frequency of each of the 2|G| + 2|L| limits."""
    if not solution.is_optimal:
        raise ValueError("violation_rates needs an optimal solution")
    if holdout.n == 0:
        raise ValueError("holdout set is empty")
    pg, f = realized_state(case, ptdf, solution.pbar, solution.alpha, holdout.samples)
    rates: dict[str, float] = {}
    for g in range(case.n_gen):
        rates[f"gen_max[{g}]"] = float((pg[:, g] > case.p_max[g] + VIOLATION_SLACK).mean())
        rates[f"gen_min[{g}]"] = float((pg[:, g] < case.p_min[g] - VIOLATION_SLACK).mean())
    for l in range(case.n_line):
        rates[f"flow_max[{l}]"] = float((f[:, l] > case.f_max[l] + VIOLATION_SLACK).mean())
        rates[f"flow_min[{l}]"] = float((f[:, l] < -case.f_max[l] - VIOLATION_SLACK).mean())
    return RiskReport(per_constraint=rates, epsilon=epsilon, holdout_size=holdout.n)


# ---------------------------------------------------------------------------
# Experiment harness
# ---------------------------------------------------------------------------


@dataclass
class PipelineOutcome:
    """One approach on one seed: fit, build, solve, audit."""

    approach: str
    status: str
    objective: float = float("nan")
    worst_violation: float = float("nan")
    risk: RiskReport | None = None
    audit_min_prob: float = float("nan")
    fit_time: float = 0.0
    solve_time: float = 0.0
    mean_condition_flags: int = 0
    solution: DispatchSolution | None = None
    inputs: FittedInputs | None = None


@dataclass
class RunRecord:
    seed: int
    ll_classical: float
    ll_ci: float
    classical: PipelineOutcome
    ci: PipelineOutcome

    def row(self) -> dict:
        # column order fixed: classical before constraint-informed
        return {
            "seed": self.seed,
            "ll_classical": self.ll_classical,
            "ll_ci": self.ll_ci,
            "status_classical": self.classical.status,
            "status_ci": self.ci.status,
            "worst_violation_classical": self.classical.worst_violation,
            "worst_violation_ci": self.ci.worst_violation,
            "objective_classical": self.classical.objective,
            "objective_ci": self.ci.objective,
            "fit_time_classical": self.classical.fit_time,
            "fit_time_ci": self.ci.fit_time,
            "solve_time_classical": self.classical.solve_time,
            "solve_time_ci": self.ci.solve_time,
            "mean_flags_classical": self.classical.mean_condition_flags,
            "mean_flags_ci": self.ci.mean_condition_flags,
        }


@dataclass
class ExperimentResult:
    label: str
    config: RunConfig
    runs: list[RunRecord] = field(default_factory=list)

    def _collect(self, approach: str) -> list[PipelineOutcome]:
        return [r.classical if approach == "classical" else r.ci for r in self.runs]

    def infeasible_count(self, approach: str) -> int:
        return sum(1 for o in self._collect(approach) if o.status == "infeasible")

    def mean_worst_violation(self, approach: str) -> float:
        vals = [o.worst_violation for o in self._collect(approach)
                if o.status == "optimal" and np.isfinite(o.worst_violation)]
        return float(np.mean(vals)) if vals else float("nan")

    def loglik_wins_ci(self) -> int:
        return sum(1 for r in self.runs if r.ll_ci > r.ll_classical)

    def mean_loglik(self) -> tuple[float, float]:
        return (float(np.mean([r.ll_classical for r in self.runs])),
                float(np.mean([r.ll_ci for r in self.runs])))

    def summary(self) -> dict:
        ll_cl, ll_ci = self.mean_loglik()
        return {
            "label": self.label,
            "n_runs": len(self.runs),
            "ll_classical_mean": ll_cl,
            "ll_ci_mean": ll_ci,
            "ll_ci_wins": self.loglik_wins_ci(),
            "worst_violation_classical_mean": self.mean_worst_violation("classical"),
            "worst_violation_ci_mean": self.mean_worst_violation("constraint-informed"),
            "infeasible_classical": self.infeasible_count("classical"),
            "infeasible_ci": self.infeasible_count("constraint-informed"),
        }


def make_dataset(config: RunConfig, case: GridCase, seed: int) -> ScenarioSet:
    ds = config.dataset
    if ds.kind == "synthetic-G":
        return generate_gaussian(case, ds.n_samples, ds.mu, ds.sigma, seed)
    if ds.kind == "synthetic-C":
        return generate_cauchy(case, ds.n_samples, ds.x0, ds.gamma, seed)
    sset, _ = ingest_csv(ds.path, normalize=ds.normalize, case=case)
    return sset


def fit_classical(train: ScenarioSet, config: RunConfig, seed: int) -> tuple[GmmModel, float]:
    structure = "full" if config.k == 1 else config.classical_structure
    t0 = time.perf_counter()
    model, _ = fit_gmm_em(train.samples, config.k, structure=structure,
                          restarts=config.restarts, seed=seed,
                          zero_mean=config.zero_mean)
    return model, time.perf_counter() - t0


def fit_ci(train: ScenarioSet, ptdf: PtdfMatrix, case: GridCase, config: RunConfig,
            seed: int) -> tuple[FittedInputs, float]:
    t0 = time.perf_counter()
    omega_model, _ = fit_gmm_em(to_omega(train).values[:, None], config.k,
                                structure="full", restarts=config.restarts,
                                seed=seed, zero_mean=config.zero_mean)
    eta_models = []
    for l in range(case.n_line):
        m, _ = fit_gmm_em(to_eta(train, ptdf, l).values, config.k,
                          structure="tied-scaled", restarts=config.restarts,
                          seed=seed + 1 + l, zero_mean=config.zero_mean)
        eta_models.append(m)
    inputs = FittedInputs(omega=omega_model, eta=tuple(eta_models))
    return inputs, time.perf_counter() - t0


def evaluate_pipeline(case: GridCase, ptdf: PtdfMatrix, approach: str,
                      inputs: FittedInputs, spec: MethodSpec, holdout: ScenarioSet,
                      settings: SolveSettings | None = None,
                      xi_model: GmmModel | None = None) -> PipelineOutcome:
    """Build, solve and audit one approach; infeasibility becomes a status."""
    out = PipelineOutcome(approach=approach, status="infeasible")
    report = check_mean_conditions(case, ptdf, inputs, spec)
    out.mean_condition_flags = len(report.gen_flags) + len(report.line_flags)
    if spec.distribution == "gaussian":
        program = build_gaussian_model(case, ptdf, inputs, spec)
    elif approach == "classical":
        program = build_classical_model(case, ptdf, xi_model, spec)
    else:
        program = build_ci_model(case, ptdf, inputs, spec)
    solution = solve(program, settings)
    out.solve_time = solution.solve_time
    out.status = solution.status
    out.solution = solution
    out.inputs = inputs
    if solution.is_optimal:
        out.objective = solution.objective
        risk = violation_rates(case, ptdf, solution, holdout, spec.epsilon)
        out.risk = risk
        out.worst_violation = risk.worst_case
        probs = audit_solution(case, ptdf, inputs, solution.pbar, solution.alpha)
        out.audit_min_prob = min(probs.values())
    return out


def run_experiment(config: RunConfig, settings: SolveSettings | None = None) -> ExperimentResult:
    """Full seeded comparison of both approaches on the configured dataset."""
    case = config.load_case()
    ptdf = compute_ptdf(case)
    pwl = build_pwl(config.pwl_delta) if config.distribution == "gmm" else None
    result = ExperimentResult(label=config.dataset.kind, config=config)
    for seed in config.seeds:
        dataset = make_dataset(config, case, seed)
        train, holdout = split(dataset, SplitSpec(config.train_fraction, seed))
        omega_train = to_omega(train).values[:, None]

        xi_model, t_cl = fit_classical(train, config, seed)
        ci_inputs, t_ci = fit_ci(train, ptdf, case, config, seed)
        cl_inputs = classical_inputs(case, ptdf, xi_model)

        ll_classical = gmm_loglik(cl_inputs.omega, omega_train)
        ll_ci = gmm_loglik(ci_inputs.omega, omega_train)

        spec_cl = MethodSpec(approach="classical", distribution=config.distribution,
                             k=config.k, epsilon=config.epsilon, pwl=pwl,
                             zero_mean=config.zero_mean)
        spec_ci = MethodSpec(approach="constraint-informed",
                             distribution=config.distribution, k=config.k,
                             epsilon=config.epsilon, pwl=pwl, zero_mean=config.zero_mean)
        out_cl = evaluate_pipeline(case, ptdf, "classical", cl_inputs, spec_cl,
                                   holdout, settings, xi_model=xi_model)
        out_cl.fit_time = t_cl
        out_ci = evaluate_pipeline(case, ptdf, "constraint-informed", ci_inputs,
                                   spec_ci, holdout, settings)
        out_ci.fit_time = t_ci
        result.runs.append(RunRecord(seed=seed, ll_classical=ll_classical,
                                     ll_ci=ll_ci, classical=out_cl, ci=out_ci))
    return result
