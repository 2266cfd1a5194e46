"""Regenerate the bundled case fixtures (src/ccopf/cases/*.json).

Three cases ship with the package:

* case3   -- a hand-sized 3-bus ring: two controllable generators, one
             wind bus. Used by the analytic-oracle tests.
* case14  -- patterned on the classic 14-bus test network (topology,
             reactances and loads); two of the five generator sites are
             converted to wind units. Branch ratings in the classic data
             are unspecified, so they are derived here from the
             risk-free optimal dispatch with a 40% margin.
* case118 -- a synthetic network at the scale of the classic 118-bus
             system: 118 buses, 186 lines, 19 generator sites of which
             the 10 smallest are converted to wind units. The classic
             dataset itself is not bundled; every value below is a
             documented fixture property, generated deterministically
             from the seed in this script.

Run from the repo root after installing the package:

    python tools/make_cases.py
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from scipy.sparse.csgraph import minimum_spanning_tree
from scipy.spatial import distance_matrix

from ccopf.grid import case_from_dict, compute_ptdf
from ccopf.reformulate import build_deterministic_model
from ccopf.solver import solve

OUT = Path(__file__).resolve().parent.parent / "src" / "ccopf" / "cases"

# classic 14-bus branch table: (from, to, reactance p.u.)
BRANCHES_14 = [
    (1, 2, 0.05917), (1, 5, 0.22304), (2, 3, 0.19797), (2, 4, 0.17632),
    (2, 5, 0.17388), (3, 4, 0.17103), (4, 5, 0.04211), (4, 7, 0.20912),
    (4, 9, 0.55618), (5, 6, 0.25202), (6, 11, 0.19890), (6, 12, 0.25581),
    (6, 13, 0.13027), (7, 8, 0.17615), (7, 9, 0.11001), (9, 10, 0.08450),
    (9, 14, 0.27038), (10, 11, 0.19207), (12, 13, 0.19988), (13, 14, 0.34802),
]

# classic 14-bus loads (MW)
LOADS_14 = {2: 21.7, 3: 94.2, 4: 47.8, 5: 7.6, 6: 11.2, 9: 29.5, 10: 9.0,
            11: 3.5, 12: 6.1, 13: 13.5, 14: 14.9}

# generator sites of the classic case; buses 3 and 8 become wind units here
GENS_14 = [
    # (bus, p_max, c1, c2)
    (1, 332.4, 20.0, 0.0430293),
    (2, 140.0, 20.0, 0.25),
    (6, 100.0, 40.0, 0.01),
]
WIND_14 = {3: 35.0, 8: 35.0}  # forecast MW (0.35 x the converted 100 MW sites)


def _with_ratings(data: dict, margin: float = 1.4, floor: float = 20.0) -> dict:
    """Set line ratings from the risk-free optimal dispatch flows."""
    big = dict(data)
    big["lines"] = [dict(l, f_max=1e6) for l in data["lines"]]
    case = case_from_dict(big)
    ptdf = compute_ptdf(case)
    sol = solve(build_deterministic_model(case, ptdf))
    assert sol.status == "optimal", f"rating probe solve failed: {sol.status}"
    p0 = case.gen_bus_matrix @ sol.pbar + case.wind - case.loads
    f0 = ptdf.H @ p0
    out = dict(data)
    out["lines"] = [
        dict(l, f_max=round(max(margin * abs(f0[i]), floor), 1))
        for i, l in enumerate(data["lines"])
    ]
    return out


def make_case3() -> dict:
    data = {
        "base_mva": 100.0,
        "slack_bus": 1,
        "buses": [
            {"id": 1, "load": 0.0, "wind_forecast": 0.0},
            {"id": 2, "load": 120.0, "wind_forecast": 0.0},
            {"id": 3, "load": 80.0, "wind_forecast": 50.0},
        ],
        "lines": [
            {"id": 1, "from": 1, "to": 2, "reactance": 0.1, "f_max": 0.0},
            {"id": 2, "from": 2, "to": 3, "reactance": 0.1, "f_max": 0.0},
            {"id": 3, "from": 1, "to": 3, "reactance": 0.1, "f_max": 0.0},
        ],
        "generators": [
            {"id": 1, "bus": 1, "p_min": 0.0, "p_max": 150.0, "c1": 20.0, "c2": 0.05},
            {"id": 2, "bus": 2, "p_min": 0.0, "p_max": 120.0, "c1": 30.0, "c2": 0.08},
        ],
    }
    return _with_ratings(data, margin=1.3, floor=30.0)


def make_case14() -> dict:
    data = {
        "base_mva": 100.0,
        "slack_bus": 1,
        "buses": [
            {"id": i, "load": LOADS_14.get(i, 0.0), "wind_forecast": WIND_14.get(i, 0.0)}
            for i in range(1, 15)
        ],
        "lines": [
            {"id": k + 1, "from": f, "to": t, "reactance": x, "f_max": 0.0}
            for k, (f, t, x) in enumerate(BRANCHES_14)
        ],
        "generators": [
            {"id": k + 1, "bus": bus, "p_min": 0.0, "p_max": pmax, "c1": c1, "c2": c2}
            for k, (bus, pmax, c1, c2) in enumerate(GENS_14)
        ],
    }
    return _with_ratings(data, margin=1.4)


def make_case118(seed: int = 118) -> dict:
    rng = np.random.default_rng(seed)
    n_bus, n_line, n_gen_sites, n_wind = 118, 186, 19, 10
    total_load = 4242.0

    # meshed topology: spanning tree over random plane positions plus the
    # shortest unused edges until the line count is reached
    pos = rng.random((n_bus, 2))
    dist = distance_matrix(pos, pos)
    mst = minimum_spanning_tree(dist).tocoo()
    edges = {(min(i, j), max(i, j)) for i, j in zip(mst.row, mst.col)}
    order = np.dstack(np.unravel_index(np.argsort(dist, axis=None), dist.shape))[0]
    for i, j in order:
        if len(edges) >= n_line:
            break
        if i < j and (i, j) not in edges:
            edges.add((int(i), int(j)))
    edges = sorted(edges)
    reactance = np.round(0.02 + 0.28 * dist[tuple(np.array(edges).T)] / dist.max(), 5)

    # loads on ~84% of buses, scaled to the target system demand
    load_buses = rng.choice(n_bus, size=99, replace=False)
    raw = rng.lognormal(mean=0.0, sigma=0.6, size=99)
    loads = np.zeros(n_bus)
    loads[load_buses] = np.round(raw / raw.sum() * total_load, 1)

    # 19 generator sites; capacities span the 100-800 MW range
    gen_buses = rng.choice(n_bus, size=n_gen_sites, replace=False)
    caps = np.round(np.sort(rng.uniform(100.0, 820.0, size=n_gen_sites)), 1)
    c1 = np.round(rng.uniform(8.0, 40.0, size=n_gen_sites), 2)
    c2 = np.round(rng.uniform(0.002, 0.07, size=n_gen_sites), 5)

    # the 10 smallest sites become wind units at a 0.05 capacity factor
    wind = np.zeros(n_bus)
    for i in range(n_wind):
        wind[gen_buses[i]] = round(0.05 * caps[i], 1)
    generators = [
        {"id": k + 1, "bus": int(gen_buses[i]) + 1, "p_min": 0.0,
         "p_max": float(caps[i]), "c1": float(c1[i]), "c2": float(c2[i])}
        for k, i in enumerate(range(n_wind, n_gen_sites))
    ]
    assert sum(g["p_max"] for g in generators) > total_load - wind.sum()

    data = {
        "base_mva": 100.0,
        "slack_bus": int(gen_buses[-1]) + 1,  # largest unit holds the reference
        "buses": [
            {"id": i + 1, "load": float(loads[i]), "wind_forecast": float(wind[i])}
            for i in range(n_bus)
        ],
        "lines": [
            {"id": k + 1, "from": int(i) + 1, "to": int(j) + 1,
             "reactance": float(reactance[k]), "f_max": 0.0}
            for k, (i, j) in enumerate(edges)
        ],
        "generators": generators,
    }
    return _with_ratings(data, margin=5.0, floor=2500.0)


def main() -> None:
    OUT.mkdir(parents=True, exist_ok=True)
    for name, builder in (("case3", make_case3), ("case14", make_case14),
                          ("case118", make_case118)):
        data = builder()
        case = case_from_dict(data)  # validation round-trip
        path = OUT / f"{name}.json"
        path.write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")
        print(f"{name}: |B|={case.n_bus} |L|={case.n_line} |G|={case.n_gen} "
              f"wind buses={len(case.wind_bus_positions)} -> {path}")


if __name__ == "__main__":
    main()
