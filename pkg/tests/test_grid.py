"""Grid loading, PTDF and DC physics.

Derived expectations come from independent oracles: direct solves of the
reduced susceptance system and brute-force H @ p(xi) reconstruction.
"""

import json

import numpy as np
import pytest

from ccopf.grid import (
    Bus,
    Generator,
    GridCase,
    GridValidationError,
    Line,
    compute_ptdf,
    flows_from_angles,
    load_case,
    nominal_state,
    realized_state,
    recover_angles,
)


def two_bus_case(b_pu=10.0, load2=100.0, wind2=0.0):
    # single line 1 -> 2 with susceptance b (x = 1/b)
    return GridCase(
        buses=(Bus(1), Bus(2, load=load2, wind_forecast=wind2)),
        lines=(Line(1, 1, 2, reactance=1.0 / b_pu, f_max=500.0),),
        generators=(Generator(1, bus=1, p_min=0.0, p_max=300.0, c1=10.0),),
        slack_bus=1,
    )


def ring3_case():
    # 3-bus ring, equal reactances, slack at bus 1
    return GridCase(
        buses=(Bus(1), Bus(2, load=50.0), Bus(3, load=50.0)),
        lines=(Line(1, 1, 2, 0.1, 200.0), Line(2, 2, 3, 0.1, 200.0),
               Line(3, 1, 3, 0.1, 200.0)),
        generators=(Generator(1, bus=1, p_min=0.0, p_max=200.0),),
        slack_bus=1,
    )


def oracle_ptdf(case):
    """Direct reduced-B solve, independently of compute_ptdf internals."""
    nb, nl = case.n_bus, case.n_line
    b = np.array([1.0 / l.reactance for l in case.lines])
    A = np.zeros((nl, nb))
    for k, l in enumerate(case.lines):
        A[k, case.bus_index[l.from_bus]] = 1.0
        A[k, case.bus_index[l.to_bus]] = -1.0
    B = A.T @ np.diag(b) @ A
    s = case.bus_index[case.slack_bus]
    keep = [i for i in range(nb) if i != s]
    H = np.zeros((nl, nb))
    for j in keep:
        p = np.zeros(nb)
        p[j] = 1.0
        theta = np.zeros(nb)
        theta[keep] = np.linalg.solve(B[np.ix_(keep, keep)], p[keep])
        H[:, j] = b * (A @ theta)
    return H


# -- loading and validation --------------------------------------------------


def test_builtin_case3_shape(case3):
    assert case3.n_bus == 3 and case3.n_line == 3 and case3.n_gen == 2
    assert len(case3.wind_bus_positions) == 1


def test_builtin_case118_shape(case118):
    # 10 of the 19 generator sites carry wind units, 9 stay controllable
    assert case118.n_bus == 118
    assert case118.n_gen == 9
    assert len(case118.wind_bus_positions) == 10


def test_load_case_dangling_reference(tmp_path):
    raw = {
        "base_mva": 100.0, "slack_bus": 1,
        "buses": [{"id": 1, "load": 0}, {"id": 2, "load": 10}],
        "lines": [{"id": 1, "from": 1, "to": 99, "reactance": 0.1, "f_max": 50}],
        "generators": [{"id": 1, "bus": 1, "p_min": 0, "p_max": 50}],
    }
    p = tmp_path / "bad.json"
    p.write_text(json.dumps(raw))
    with pytest.raises(GridValidationError, match="unknown bus"):
        load_case(p)


def test_load_case_malformed_json(tmp_path):
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    with pytest.raises(GridValidationError, match="parse"):
        load_case(p)


def test_disconnected_network_rejected():
    with pytest.raises(GridValidationError, match="disconnected"):
        GridCase(
            buses=(Bus(1), Bus(2), Bus(3)),
            lines=(Line(1, 1, 2, 0.1, 100.0),),
            generators=(Generator(1, bus=1, p_min=0.0, p_max=10.0),),
            slack_bus=1,
        )


# -- PTDF --------------------------------------------------------------------


def test_ptdf_two_bus_row():
    case = two_bus_case()
    H = compute_ptdf(case).H
    assert np.allclose(H, [[0.0, -1.0]], atol=1e-12)


def test_ptdf_slack_column_zero(case14, ptdf14):
    s = case14.bus_index[case14.slack_bus]
    assert np.allclose(ptdf14.H[:, s], 0.0)
    e_slack = np.zeros(case14.n_bus)
    e_slack[s] = 1.0
    assert np.allclose(ptdf14.H @ e_slack, 0.0)


def test_ptdf_ring_split():
    case = ring3_case()
    H = compute_ptdf(case).H
    j = case.bus_index[2]
    # injection at bus 2: 2/3 returns on line 1-2, 1/3 via 1-3-2
    assert np.isclose(H[0, j], -2.0 / 3.0)
    assert np.isclose(H[1, j], 1.0 / 3.0)
    assert np.isclose(H[2, j], -1.0 / 3.0)


def test_ptdf_matches_direct_solve(case14, ptdf14):
    assert np.allclose(ptdf14.H, oracle_ptdf(case14), atol=1e-9)


def test_ptdf_entries_bounded(case118):
    H = compute_ptdf(case118).H
    assert (np.abs(H) <= 1.0 + 1e-9).all()


# -- nominal and realized states ----------------------------------------------


def test_nominal_state_zero():
    case = two_bus_case(load2=0.0)
    ptdf = compute_ptdf(case)
    p0, f0 = nominal_state(case, ptdf, np.zeros(1))
    assert np.allclose(p0, 0.0) and np.allclose(f0, 0.0)


def test_nominal_state_two_bus_flow():
    case = two_bus_case(load2=100.0)
    ptdf = compute_ptdf(case)
    p0, f0 = nominal_state(case, ptdf, np.array([100.0]))
    assert np.allclose(p0, [100.0, -100.0])
    assert np.isclose(f0[0], 100.0)


def test_nominal_balance_identity(case14, ptdf14):
    # when generation covers load minus wind, injections sum to zero
    residual = case14.total_load - case14.total_wind
    pbar = np.full(case14.n_gen, residual / case14.n_gen)
    p0, _ = nominal_state(case14, ptdf14, pbar)
    assert abs(p0.sum()) < 1e-9


def test_realized_state_zero_error(case3, ptdf3):
    pbar = np.array([100.0, 50.0])
    alpha = np.array([0.6, 0.4])
    pg, f = realized_state(case3, ptdf3, pbar, alpha, np.zeros(case3.n_bus))
    _, f0 = nominal_state(case3, ptdf3, pbar)
    assert np.allclose(pg, pbar) and np.allclose(f, f0)


def test_realized_state_balances_for_any_xi(case3, ptdf3, rng):
    pbar = np.array([100.0, 50.0])
    alpha = np.array([0.3, 0.7])
    for _ in range(20):
        xi = np.zeros(case3.n_bus)
        xi[case3.wind_bus_positions] = rng.normal(0, 5, size=1)
        pg, _ = realized_state(case3, ptdf3, pbar, alpha, xi)
        total = pg.sum() + (case3.wind + xi).sum() - case3.loads.sum()
        # pbar covers load - wind, so sum(alpha)=1 cancels the imbalance
        assert abs(total - (pbar.sum() - (case3.total_load - case3.total_wind))) < 1e-9


def test_realized_flow_matches_brute_force(case14, ptdf14, rng):
    # Eq-by-eq decomposition equals H @ p(xi) built from raw injections
    for _ in range(100):
        pbar = rng.uniform(0, 50, size=case14.n_gen)
        w = rng.dirichlet(np.ones(case14.n_gen))
        xi = np.zeros(case14.n_bus)
        xi[case14.wind_bus_positions] = rng.normal(0, 10, size=len(case14.wind_bus_positions))
        pg, f = realized_state(case14, ptdf14, pbar, w, xi)
        omega = xi.sum()
        p_bus = case14.gen_bus_matrix @ (pbar - w * omega) + case14.wind + xi - case14.loads
        assert np.allclose(f, ptdf14.H @ p_bus, atol=1e-9)


def test_realized_state_batch_matches_single(case14, ptdf14, rng):
    pbar = rng.uniform(0, 50, size=case14.n_gen)
    w = rng.dirichlet(np.ones(case14.n_gen))
    xis = np.zeros((7, case14.n_bus))
    xis[:, case14.wind_bus_positions] = rng.normal(0, 5, size=(7, len(case14.wind_bus_positions)))
    pg_b, f_b = realized_state(case14, ptdf14, pbar, w, xis)
    for i in range(7):
        pg, f = realized_state(case14, ptdf14, pbar, w, xis[i])
        assert np.allclose(pg_b[i], pg) and np.allclose(f_b[i], f)


def test_gamma_linear_in_alpha(ptdf14, rng):
    a1 = rng.random(ptdf14.h_gen.shape[1])
    a2 = rng.random(ptdf14.h_gen.shape[1])
    s, t = 0.3, -1.7
    assert np.allclose(ptdf14.gamma(s * a1 + t * a2),
                       s * ptdf14.gamma(a1) + t * ptdf14.gamma(a2))


# -- angle recovery ------------------------------------------------------------


def test_recover_angles_zero():
    case = ring3_case()
    theta = recover_angles(case, np.zeros(3))
    assert np.allclose(theta, 0.0)


def test_recover_angles_two_bus():
    case = two_bus_case(b_pu=10.0)
    p = np.array([100.0, -100.0])  # 1 p.u. transfer on 100 MVA base
    theta = recover_angles(case, p)
    assert np.isclose(theta[1], -0.1)


def test_recover_angles_unbalanced_rejected():
    case = two_bus_case()
    with pytest.raises(ValueError, match="unbalanced"):
        recover_angles(case, np.array([10.0, 0.0]))


def test_angle_flow_roundtrip(case14, ptdf14, rng):
    for _ in range(10):
        p = rng.normal(0, 30, size=case14.n_bus)
        p -= p.mean()  # balance
        theta = recover_angles(case14, p)
        f_theta = flows_from_angles(case14, theta)
        f_ptdf = ptdf14.H @ p
        assert np.allclose(f_theta, f_ptdf, rtol=1e-9, atol=1e-9)
