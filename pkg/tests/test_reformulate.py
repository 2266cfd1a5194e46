"""Conic model assembly: structure counts, objective, Gaussian coincidence,
domain-restriction diagnostics and conservativeness of solved models."""

import numpy as np
import pytest

from ccopf.cdf_approx import build_pwl
from ccopf.estimation import GmmModel, fit_gmm_em, fit_mle_gaussian
from ccopf.grid import Bus, Generator, GridCase, Line, compute_ptdf
from ccopf.reformulate import (
    FittedInputs,
    MethodSpec,
    ObjectiveSpec,
    as_tied_scaled,
    audit_solution,
    build_ci_model,
    build_classical_model,
    build_deterministic_model,
    build_gaussian_model,
    build_objective,
    check_mean_conditions,
    classical_inputs,
    ConicProgram,
)
from ccopf.scenarios import generate_gaussian, to_eta, to_omega
from ccopf.solver import solve


def toy_case(n_bus=3, n_gen=2, n_line=3):
    """|B|=3 ring with 2 generators and 1 wind bus."""
    return GridCase(
        buses=(Bus(1), Bus(2, load=120.0), Bus(3, load=80.0, wind_forecast=50.0)),
        lines=(Line(1, 1, 2, 0.1, 120.0), Line(2, 2, 3, 0.1, 120.0),
               Line(3, 1, 3, 0.1, 120.0)),
        generators=(Generator(1, bus=1, p_min=0.0, p_max=150.0, c1=20.0, c2=0.05),
                    Generator(2, bus=2, p_min=0.0, p_max=120.0, c1=30.0, c2=0.08)),
        slack_bus=1,
    )


def make_inputs(case, ptdf, k=2, spread=4.0, seed=0):
    """Synthetic low-dimensional mixtures consistent in shape with the case."""
    rng = np.random.default_rng(seed)
    w = np.full(k, 1.0 / k)
    om_means = rng.normal(0.0, spread, size=(k, 1))
    om_vars = rng.uniform(1.0, 9.0, size=(k, 1, 1))
    omega = GmmModel(weights=w, means=om_means, covariances=om_vars)
    base = np.array([[4.0, 1.0], [1.0, 2.0]])
    scales = np.linspace(1.0, 2.0, k)
    scales = scales / (w @ scales)
    eta = tuple(
        GmmModel(weights=w, means=rng.normal(0, spread, size=(k, 2)),
                 covariances=scales[:, None, None] * base[None],
                 structure="tied-scaled", base=base, scales=scales)
        for _ in range(case.n_line)
    )
    return FittedInputs(omega=omega, eta=eta)


@pytest.fixture(scope="module")
def pwl():
    return build_pwl(0.002)


# -- objective -------------------------------------------------------------------


def test_objective_hand_value():
    obj = ObjectiveSpec(c1=np.array([0.0]), c2=np.array([1.0]), mean=1.0, var=2.0)
    assert np.isclose(obj.value(np.array([3.0]), np.array([1.0])), 6.0)


def test_objective_zero_mean_reduction(rng):
    c1 = np.array([2.0, 1.0])
    c2 = np.array([0.5, 0.3])
    obj = ObjectiveSpec(c1=c1, c2=c2, mean=0.0, var=4.0)
    pbar = rng.uniform(0, 10, 2)
    alpha = np.array([0.7, 0.3])
    expected = c2 @ pbar**2 + 4.0 * (c2 @ alpha**2) + c1 @ pbar
    assert np.isclose(obj.value(pbar, alpha), expected)


def test_objective_deterministic_limit(rng):
    c1 = np.array([2.0])
    c2 = np.array([0.5])
    obj = ObjectiveSpec(c1=c1, c2=c2, mean=0.0, var=0.0)
    pbar = np.array([7.0])
    assert np.isclose(obj.value(pbar, np.array([1.0])), 0.5 * 49 + 14)


def test_build_objective_uses_mixture_moments():
    omega = GmmModel(weights=np.array([0.5, 0.5]), means=np.array([[-1.0], [1.0]]),
                     covariances=np.ones((2, 1, 1)))
    case = toy_case()
    obj = build_objective(case, omega)
    assert np.isclose(obj.mean, 0.0) and np.isclose(obj.var, 2.0)


# -- structural counts -------------------------------------------------------------


def test_variable_and_cut_counts(pwl):
    case = toy_case()
    ptdf = compute_ptdf(case)
    inputs = make_inputs(case, ptdf, k=2, spread=0.5)
    spec = MethodSpec(approach="constraint-informed", distribution="gmm", k=2,
                      epsilon=0.05, pwl=pwl)
    prog = build_ci_model(case, ptdf, inputs, spec)
    # pbar(2) + alpha(2) + delta(3) + M1(4) + M2(4) + M3(6) + M4(6)
    assert prog.n == 27
    n_cuts = sum(1 for lab in prog.ub_labels if "_cut_" in lab)
    assert n_cuts == 200
    assert prog.meta["n_pwl_cuts"] == 200
    assert len(prog.socs) == case.n_line


def test_classical_same_counts_as_ci(pwl, case14, ptdf14):
    s = generate_gaussian(case14, 400, -0.024, 0.036, seed=1)
    xi_model, _ = fit_gmm_em(s.samples, k=2, structure="tied-scaled", restarts=2, seed=1)
    spec = MethodSpec(approach="classical", distribution="gmm", k=2,
                      epsilon=0.05, pwl=pwl)
    prog_cl = build_classical_model(case14, ptdf14, xi_model, spec)
    inputs = make_inputs(case14, ptdf14, k=2, spread=0.5)
    prog_ci = build_ci_model(case14, ptdf14, inputs,
                             MethodSpec(distribution="gmm", k=2, epsilon=0.05, pwl=pwl))
    assert prog_cl.n == prog_ci.n
    assert prog_cl.ub_labels == prog_ci.ub_labels
    assert prog_cl.eq_labels == prog_ci.eq_labels


def test_tied_scaled_detection():
    base = np.array([[2.0, 0.3], [0.3, 1.0]])
    model = GmmModel(weights=np.array([0.5, 0.5]),
                     means=np.zeros((2, 2)),
                     covariances=np.stack([base, 4.0 * base]))
    c0, scales = as_tied_scaled(model)
    assert np.isclose(scales[1] / scales[0], 4.0)
    for c, s in zip(model.covariances, scales):
        assert np.allclose(c, s * c0)


def test_free_covariances_rejected(pwl, case14, ptdf14, rng):
    covs = np.stack([np.diag([1.0, 2.0] + [1.0] * 12), np.eye(14)])
    model = GmmModel(weights=np.array([0.5, 0.5]), means=np.zeros((2, 14)),
                     covariances=covs)
    spec = MethodSpec(approach="classical", distribution="gmm", k=2,
                      epsilon=0.05, pwl=pwl)
    with pytest.raises(ValueError, match="convexity"):
        build_classical_model(case14, ptdf14, model, spec)


# -- Gaussian special case ---------------------------------------------------------


def test_gaussian_row_quantile_coefficient(pwl):
    case = toy_case()
    ptdf = compute_ptdf(case)
    omega = GmmModel(weights=np.ones(1), means=np.zeros((1, 1)),
                     covariances=np.ones((1, 1, 1)))
    eta = tuple(GmmModel(weights=np.ones(1), means=np.zeros((1, 2)),
                         covariances=np.eye(2)[None]) for _ in range(case.n_line))
    spec = MethodSpec(distribution="gaussian", k=1, epsilon=0.05)
    prog = build_gaussian_model(case, ptdf, FittedInputs(omega=omega, eta=eta), spec)
    row = prog.ub_labels.index("gen_max[0]")
    a = prog.A_ub[row].toarray().ravel()
    lo, _ = prog.blocks["pbar"]
    la, _ = prog.blocks["alpha"]
    assert np.isclose(a[lo], 1.0)
    assert np.isclose(a[la], 1.6448536269514722, atol=1e-9)


def test_gaussian_epsilon_near_half_reduces_to_nominal():
    case = toy_case()
    ptdf = compute_ptdf(case)
    m1 = -2.0
    omega = GmmModel(weights=np.ones(1), means=np.array([[m1]]),
                     covariances=np.ones((1, 1, 1)))
    eta = tuple(GmmModel(weights=np.ones(1), means=np.zeros((1, 2)),
                         covariances=np.eye(2)[None]) for _ in range(case.n_line))
    spec = MethodSpec(distribution="gaussian", k=1, epsilon=0.5 - 1e-12)
    prog = build_gaussian_model(case, ptdf, FittedInputs(omega=omega, eta=eta), spec)
    row = prog.ub_labels.index("gen_max[0]")
    a = prog.A_ub[row].toarray().ravel()
    la, _ = prog.blocks["alpha"]
    assert np.isclose(a[la], -m1, atol=1e-6)  # quantile term vanishes


def test_gaussian_zero_variance_deterministic():
    case = toy_case()
    ptdf = compute_ptdf(case)
    omega = GmmModel(weights=np.ones(1), means=np.array([[1.5]]),
                     covariances=np.zeros((1, 1, 1)))
    eta = tuple(GmmModel(weights=np.ones(1), means=np.zeros((1, 2)),
                         covariances=np.zeros((2, 2))[None]) for _ in range(case.n_line))
    spec = MethodSpec(distribution="gaussian", k=1, epsilon=0.1)
    prog = build_gaussian_model(case, ptdf, FittedInputs(omega=omega, eta=eta), spec)
    row = prog.ub_labels.index("gen_max[0]")
    a = prog.A_ub[row].toarray().ravel()
    la, _ = prog.blocks["alpha"]
    assert np.isclose(a[la], -1.5)  # only the mean survives at sigma = 0


def test_gaussian_coincidence_classical_vs_ci(case14, ptdf14):
    """Both approaches build identical programs from K=1 MLE fits."""
    s = generate_gaussian(case14, 3000, -0.024, 0.036, seed=2)
    xi_model = fit_mle_gaussian(s.samples)
    cl = classical_inputs(case14, ptdf14, xi_model)
    ci = FittedInputs(
        omega=fit_mle_gaussian(to_omega(s).values),
        eta=tuple(fit_mle_gaussian(to_eta(s, ptdf14, l).values)
                  for l in range(case14.n_line)),
    )
    spec = MethodSpec(distribution="gaussian", k=1, epsilon=0.05)
    prog_cl = build_gaussian_model(case14, ptdf14, cl, spec)
    prog_ci = build_gaussian_model(case14, ptdf14, ci, spec)
    assert prog_cl.ub_labels == prog_ci.ub_labels
    d = prog_cl.A_ub - prog_ci.A_ub
    scale = np.abs(prog_cl.A_ub).max()
    assert abs(d).max() <= 1e-9 * scale
    assert np.allclose(prog_cl.b_ub, prog_ci.b_ub, rtol=1e-9, atol=1e-9)
    for s_cl, s_ci in zip(prog_cl.socs, prog_ci.socs):
        assert np.allclose(s_cl.F @ s_cl.F.T, s_ci.F @ s_ci.F.T, rtol=1e-8, atol=1e-10)
        assert np.allclose(s_cl.g @ s_cl.g, s_ci.g @ s_ci.g, rtol=1e-8, atol=1e-10)


# -- diagnostics ------------------------------------------------------------------


def test_mean_conditions_zero_mean_clean(pwl):
    case = toy_case()
    ptdf = compute_ptdf(case)
    inputs = make_inputs(case, ptdf, k=2, spread=0.0)
    # force means exactly zero
    omega = GmmModel(weights=inputs.omega.weights, means=np.zeros((2, 1)),
                     covariances=inputs.omega.covariances)
    eta = tuple(GmmModel(weights=m.weights, means=np.zeros((2, 2)),
                         covariances=m.covariances, structure=m.structure,
                         base=m.base, scales=m.scales) for m in inputs.eta)
    spec = MethodSpec(distribution="gmm", k=2, epsilon=0.05, pwl=pwl)
    report = check_mean_conditions(case, ptdf, FittedInputs(omega=omega, eta=eta), spec)
    assert report.clean
    assert not report.zero_mean_clears  # nothing to clear


def test_mean_conditions_flags_large_negative_mean(pwl):
    case = toy_case()
    ptdf = compute_ptdf(case)
    # a component mean far below what the generators can absorb
    omega = GmmModel(weights=np.array([0.9, 0.1]),
                     means=np.array([[0.0], [-5000.0]]),
                     covariances=np.ones((2, 1, 1)))
    eta = tuple(GmmModel(weights=np.array([0.9, 0.1]), means=np.zeros((2, 2)),
                         covariances=np.stack([np.eye(2), np.eye(2)]),
                         structure="tied-scaled", base=np.eye(2),
                         scales=np.ones(2)) for _ in range(case.n_line))
    spec = MethodSpec(distribution="gmm", k=2, epsilon=0.05, pwl=pwl)
    report = check_mean_conditions(case, ptdf, FittedInputs(omega=omega, eta=eta), spec)
    assert any(k == 1 and side == "max" for _, k, side in report.gen_flags)
    assert report.zero_mean_clears


def test_flagged_component_makes_model_infeasible(pwl):
    case = toy_case()
    ptdf = compute_ptdf(case)
    omega = GmmModel(weights=np.array([0.9, 0.1]),
                     means=np.array([[0.0], [-5000.0]]),
                     covariances=np.ones((2, 1, 1)))
    eta = tuple(GmmModel(weights=np.array([0.9, 0.1]), means=np.zeros((2, 2)),
                         covariances=np.stack([np.eye(2), np.eye(2)]),
                         structure="tied-scaled", base=np.eye(2),
                         scales=np.ones(2)) for _ in range(case.n_line))
    spec = MethodSpec(distribution="gmm", k=2, epsilon=0.05, pwl=pwl)
    inputs = FittedInputs(omega=omega, eta=eta)
    prog = build_ci_model(case, ptdf, inputs, spec)
    sol = solve(prog)
    assert sol.status == "infeasible"
    assert not check_mean_conditions(case, ptdf, inputs, spec).clean


# -- end-to-end model behavior ------------------------------------------------------


def test_solved_model_passes_exact_audit(pwl):
    case = toy_case()
    ptdf = compute_ptdf(case)
    inputs = make_inputs(case, ptdf, k=2, spread=1.0, seed=3)
    eps = 0.05
    spec = MethodSpec(distribution="gmm", k=2, epsilon=eps, pwl=pwl)
    prog = build_ci_model(case, ptdf, inputs, spec)
    sol = solve(prog)
    assert sol.status == "optimal"
    probs = audit_solution(case, ptdf, inputs, sol.pbar, sol.alpha)
    assert min(probs.values()) >= 1.0 - eps - 1e-9


def test_epsilon_monotonicity(pwl):
    case = toy_case()
    ptdf = compute_ptdf(case)
    inputs = make_inputs(case, ptdf, k=2, spread=1.0, seed=4)
    objs = []
    for eps in (0.02, 0.05, 0.2):
        spec = MethodSpec(distribution="gmm", k=2, epsilon=eps, pwl=pwl)
        sol = solve(build_ci_model(case, ptdf, inputs, spec))
        assert sol.status == "optimal"
        objs.append(sol.objective)
    assert objs[0] >= objs[1] - 1e-6 and objs[1] >= objs[2] - 1e-6


def test_epsilon_near_half_matches_deterministic_feasibility(pwl):
    case = toy_case()
    ptdf = compute_ptdf(case)
    inputs = make_inputs(case, ptdf, k=2, spread=0.0, seed=5)
    omega = GmmModel(weights=inputs.omega.weights, means=np.zeros((2, 1)),
                     covariances=inputs.omega.covariances)
    eta = tuple(GmmModel(weights=m.weights, means=np.zeros((2, 2)),
                         covariances=m.covariances, structure=m.structure,
                         base=m.base, scales=m.scales) for m in inputs.eta)
    spec = MethodSpec(distribution="gmm", k=2, epsilon=0.4999, pwl=pwl)
    sol = solve(build_ci_model(case, ptdf, FittedInputs(omega=omega, eta=eta), spec))
    assert sol.status == "optimal"
    # its dispatch satisfies the risk-free program
    det = build_deterministic_model(case, ptdf)
    feas = det.feasibility(sol.pbar)
    assert feas.ok(1e-4)


def test_program_json_roundtrip(pwl, tmp_path):
    case = toy_case()
    ptdf = compute_ptdf(case)
    inputs = make_inputs(case, ptdf, k=2, spread=1.0, seed=6)
    spec = MethodSpec(distribution="gmm", k=2, epsilon=0.05, pwl=pwl)
    prog = build_ci_model(case, ptdf, inputs, spec)
    p = tmp_path / "program.json"
    prog.save_json(p)
    import json

    back = ConicProgram.from_dict(json.loads(p.read_text()))
    assert back.n == prog.n
    assert (back.A_ub != prog.A_ub).nnz == 0
    assert np.array_equal(back.b_eq, prog.b_eq)
    x = np.random.default_rng(0).normal(size=prog.n)
    assert np.isclose(back.objective_value(x), prog.objective_value(x))
