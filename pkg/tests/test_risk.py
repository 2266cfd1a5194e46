"""Out-of-sample violation rates and the experiment harness."""

import numpy as np
import pytest

from ccopf.config import DatasetSpec, RunConfig
from ccopf.estimation import fit_mle_gaussian
from ccopf.reformulate import (
    FittedInputs,
    MethodSpec,
    audit_solution,
    build_deterministic_model,
    build_gaussian_model,
)
from ccopf.risk import run_experiment, violation_rates
from ccopf.scenarios import ScenarioSet, SplitSpec, generate_gaussian, split, \
    to_eta, to_omega
from ccopf.solver import DispatchSolution, solve


def manual_solution(pbar, alpha):
    return DispatchSolution(status="optimal", objective=0.0,
                            pbar=np.asarray(pbar, float), alpha=np.asarray(alpha, float),
                            aux={}, x=None, solve_time=0.0, feasibility=None,
                            backend="manual")


def test_no_violations_for_comfortable_dispatch(case3, ptdf3):
    det = solve(build_deterministic_model(case3, ptdf3))
    sol = manual_solution(det.pbar, np.array([0.5, 0.5]))
    holdout = generate_gaussian(case3, 500, 0.0, 1e-4, seed=0)
    report = violation_rates(case3, ptdf3, sol, holdout, epsilon=0.05)
    assert report.worst_case == 0.0
    assert len(report.per_constraint) == 2 * case3.n_gen + 2 * case3.n_line


def test_half_violation_rate(case3, ptdf3):
    # alpha all on generator 1; samples alternate between pushing it
    # just over and keeping it under its limit
    pbar = np.array([case3.p_max[0] - 5.0, 55.0])
    alpha = np.array([1.0, 0.0])
    wpos = case3.wind_bus_positions[0]
    xi = np.zeros((10, case3.n_bus))
    xi[::2, wpos] = -10.0   # omega = -10 -> p1 = pmax + 5: violated
    xi[1::2, wpos] = 10.0   # omega = +10 -> p1 = pmax - 15: fine
    holdout = ScenarioSet(xi, tuple(b.id for b in case3.buses))
    report = violation_rates(case3, ptdf3, manual_solution(pbar, alpha), holdout, 0.05)
    assert report.per_constraint["gen_max[0]"] == 0.5


def test_rates_match_brute_force_exactly(case14, ptdf14, rng):
    pbar = rng.uniform(10, 60, size=case14.n_gen)
    alpha = rng.dirichlet(np.ones(case14.n_gen))
    holdout = generate_gaussian(case14, 777, -0.024, 0.2, seed=1)
    report = violation_rates(case14, ptdf14, manual_solution(pbar, alpha), holdout, 0.05)
    slack = 1e-7
    # independent path: raw bus injections and H @ p per sample
    counts = {k: 0 for k in report.per_constraint}
    for xi in holdout.samples:
        omega = xi.sum()
        pg = pbar - alpha * omega
        p_bus = case14.gen_bus_matrix @ pg + case14.wind + xi - case14.loads
        f = ptdf14.H @ p_bus
        for g in range(case14.n_gen):
            counts[f"gen_max[{g}]"] += pg[g] > case14.p_max[g] + slack
            counts[f"gen_min[{g}]"] += pg[g] < case14.p_min[g] - slack
        for l in range(case14.n_line):
            counts[f"flow_max[{l}]"] += f[l] > case14.f_max[l] + slack
            counts[f"flow_min[{l}]"] += f[l] < -case14.f_max[l] - slack
    for k, v in report.per_constraint.items():
        assert v == counts[k] / holdout.n


def test_requires_optimal_solution(case3, ptdf3):
    sol = manual_solution(np.zeros(2), np.array([0.5, 0.5]))
    object.__setattr__(sol, "status", "infeasible")
    holdout = generate_gaussian(case3, 10, 0.0, 0.01, seed=2)
    with pytest.raises(ValueError, match="optimal"):
        violation_rates(case3, ptdf3, sol, holdout, 0.05)


def test_empty_holdout_rejected(case3, ptdf3):
    sol = manual_solution(np.array([100.0, 50.0]), np.array([0.5, 0.5]))
    empty = ScenarioSet(np.zeros((0, case3.n_bus)), tuple(b.id for b in case3.buses))
    with pytest.raises(ValueError, match="empty"):
        violation_rates(case3, ptdf3, sol, empty, 0.05)


def test_monte_carlo_consistency_gaussian(case14, ptdf14):
    """Audit probabilities from fitted parameters track empirical holdout rates."""
    eps = 0.05
    data = generate_gaussian(case14, 10_000, -0.024, 0.036, seed=3)
    train, holdout = split(data, SplitSpec(0.8, seed=3))
    inputs = FittedInputs(
        omega=fit_mle_gaussian(to_omega(train).values),
        eta=tuple(fit_mle_gaussian(to_eta(train, ptdf14, l).values)
                  for l in range(case14.n_line)),
    )
    spec = MethodSpec(distribution="gaussian", k=1, epsilon=eps)
    sol = solve(build_gaussian_model(case14, ptdf14, inputs, spec))
    assert sol.status == "optimal"
    report = violation_rates(case14, ptdf14, sol, holdout, eps)
    probs = audit_solution(case14, ptdf14, inputs, sol.pbar, sol.alpha)
    bound = 3 * np.sqrt(eps * (1 - eps) / holdout.n)
    diffs = [abs(report.per_constraint[k] - (1.0 - probs[k])) for k in probs]
    within = np.mean([d <= bound for d in diffs])
    assert within >= 0.95


# -- experiment harness ---------------------------------------------------------


@pytest.fixture(scope="module")
def small_config():
    return RunConfig(
        case="builtin:case3",
        dataset=DatasetSpec(kind="synthetic-G", n_samples=2000),
        k=2, epsilon=0.05, pwl_delta=0.01, restarts=3,
        seeds=(0, 1, 2), train_fraction=0.8,
    )


@pytest.fixture(scope="module")
def small_result(small_config):
    return run_experiment(small_config)


def test_experiment_run_count(small_config, small_result):
    assert len(small_result.runs) == len(small_config.seeds)


def test_experiment_records_both_approaches(small_result):
    for run in small_result.runs:
        assert run.classical.approach == "classical"
        assert run.ci.approach == "constraint-informed"
        assert run.classical.status in ("optimal", "infeasible", "numerical-failure")
        assert np.isfinite(run.ll_classical) and np.isfinite(run.ll_ci)


def test_experiment_violations_only_for_optimal(small_result):
    for run in small_result.runs:
        for out in (run.classical, run.ci):
            if out.status == "optimal":
                assert 0.0 <= out.worst_violation <= 1.0
                assert out.audit_min_prob >= 1 - 0.05 - 1e-9
            else:
                assert np.isnan(out.worst_violation)


def test_experiment_summary_keys(small_result):
    s = small_result.summary()
    for key in ("ll_classical_mean", "ll_ci_mean", "ll_ci_wins",
                "worst_violation_classical_mean", "worst_violation_ci_mean",
                "infeasible_classical", "infeasible_ci"):
        assert key in s


def test_experiment_csv_dataset(case3, tmp_path, rng):
    rows = 1200
    per_unit = rng.normal(-0.02, 0.05, size=rows)
    p = tmp_path / "wind.csv"
    p.write_text("u1\n" + "\n".join(repr(float(v)) for v in per_unit) + "\n")
    cfg = RunConfig(case="builtin:case3",
                    dataset=DatasetSpec(kind="csv", path=str(p), n_samples=rows),
                    distribution="gaussian", k=1, restarts=2, seeds=(0, 1))
    res = run_experiment(cfg)
    assert len(res.runs) == 2
    # same file, different seeded splits: fits differ across seeds
    assert res.runs[0].ll_ci != res.runs[1].ll_ci
    assert all(r.ci.status == "optimal" for r in res.runs)


def test_experiment_gaussian_distribution_path(case3):
    cfg = RunConfig(case="builtin:case3",
                    dataset=DatasetSpec(kind="synthetic-G", n_samples=1500),
                    distribution="gaussian", k=1, restarts=2, seeds=(0,))
    res = run_experiment(cfg)
    run = res.runs[0]
    assert run.classical.status == "optimal" and run.ci.status == "optimal"
    # K=1 fits: both approaches coincide
    assert np.isclose(run.ll_classical, run.ll_ci, rtol=1e-8)
    assert np.allclose(run.classical.solution.pbar, run.ci.solution.pbar, atol=1e-5)
