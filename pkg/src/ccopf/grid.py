"""Network data model, PTDF computation and deterministic DC power-flow physics.

All powers are in MW; per-unit quantities appear only inside susceptance
assembly. The PTDF matrix uses the slack-deletion convention: the slack
column of H is identically zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

__all__ = [
    "GridValidationError",
    "Bus",
    "Generator",
    "Line",
    "GridCase",
    "PtdfMatrix",
    "load_case",
    "case_from_dict",
    "builtin_case_path",
    "builtin_case",
    "compute_ptdf",
    "nominal_state",
    "realized_state",
    "recover_angles",
    "flows_from_angles",
]


class GridValidationError(ValueError):
    """Raised when a case file fails schema or network validation."""


@dataclass(frozen=True)
class Bus:
    id: int
    load: float = 0.0           # load forecast, MW
    wind_forecast: float = 0.0  # total wind forecast at this bus, MW (0 = no wind unit)


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    p_min: float
    p_max: float
    c1: float = 0.0  # $/MWh
    c2: float = 0.0  # $/MWh^2


@dataclass(frozen=True)
class Line:
    id: int
    from_bus: int
    to_bus: int
    reactance: float  # per-unit
    f_max: float      # MW


@dataclass(frozen=True)
class GridCase:
    """Validated network: buses, lines, controllable generators, slack bus."""

    buses: tuple[Bus, ...]
    lines: tuple[Line, ...]
    generators: tuple[Generator, ...]
    slack_bus: int
    base_mva: float = 100.0

    def __post_init__(self):
        _validate_case(self)

    # -- index helpers (cached; the dataclass is immutable) --

    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def line_index(self) -> dict[int, int]:
        return {l.id: i for i, l in enumerate(self.lines)}

    @cached_property
    def gen_index(self) -> dict[int, int]:
        return {g.id: i for i, g in enumerate(self.generators)}

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_line(self) -> int:
        return len(self.lines)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @cached_property
    def loads(self) -> np.ndarray:
        return np.array([b.load for b in self.buses])

    @cached_property
    def wind(self) -> np.ndarray:
        return np.array([b.wind_forecast for b in self.buses])

    @cached_property
    def wind_bus_positions(self) -> np.ndarray:
        """Positions (not ids) of buses carrying a wind unit."""
        return np.flatnonzero(self.wind > 0)

    @cached_property
    def gen_bus_matrix(self) -> np.ndarray:
        """|B| x |G| incidence M with M[i,g]=1 iff generator g sits at bus i."""
        m = np.zeros((self.n_bus, self.n_gen))
        for g, gen in enumerate(self.generators):
            m[self.bus_index[gen.bus], g] = 1.0
        return m

    @cached_property
    def p_min(self) -> np.ndarray:
        return np.array([g.p_min for g in self.generators])

    @cached_property
    def p_max(self) -> np.ndarray:
        return np.array([g.p_max for g in self.generators])

    @cached_property
    def c1(self) -> np.ndarray:
        return np.array([g.c1 for g in self.generators])

    @cached_property
    def c2(self) -> np.ndarray:
        return np.array([g.c2 for g in self.generators])

    @cached_property
    def f_max(self) -> np.ndarray:
        return np.array([l.f_max for l in self.lines])

    @property
    def total_load(self) -> float:
        return float(self.loads.sum())

    @property
    def total_wind(self) -> float:
        return float(self.wind.sum())


def _validate_case(case: GridCase) -> None:
    if not case.buses:
        raise GridValidationError("case has no buses")
    ids = [b.id for b in case.buses]
    if len(set(ids)) != len(ids):
        raise GridValidationError("duplicate bus ids")
    bus_ids = set(ids)
    if case.slack_bus not in bus_ids:
        raise GridValidationError(f"slack bus {case.slack_bus} is not a valid bus id")
    if case.base_mva <= 0:
        raise GridValidationError("base_mva must be positive")
    for b in case.buses:
        if b.load < 0 or b.wind_forecast < 0:
            raise GridValidationError(f"bus {b.id}: load and wind forecast must be >= 0")
    lids = [l.id for l in case.lines]
    if len(set(lids)) != len(lids):
        raise GridValidationError("duplicate line ids")
    for l in case.lines:
        if l.from_bus not in bus_ids or l.to_bus not in bus_ids:
            raise GridValidationError(f"line {l.id} references unknown bus")
        if l.from_bus == l.to_bus:
            raise GridValidationError(f"line {l.id} connects a bus to itself")
        if l.reactance <= 0:
            raise GridValidationError(f"line {l.id}: reactance must be > 0")
        if l.f_max <= 0:
            raise GridValidationError(f"line {l.id}: f_max must be > 0")
    gids = [g.id for g in case.generators]
    if len(set(gids)) != len(gids):
        raise GridValidationError("duplicate generator ids")
    for g in case.generators:
        if g.bus not in bus_ids:
            raise GridValidationError(f"generator {g.id} references unknown bus {g.bus}")
        if not (0 <= g.p_min <= g.p_max):
            raise GridValidationError(f"generator {g.id}: need 0 <= p_min <= p_max")
        if g.c2 < 0:
            raise GridValidationError(f"generator {g.id}: c2 must be >= 0")
    # connectivity via BFS over lines
    adj: dict[int, set[int]] = {i: set() for i in bus_ids}
    for l in case.lines:
        adj[l.from_bus].add(l.to_bus)
        adj[l.to_bus].add(l.from_bus)
    seen = {case.buses[0].id}
    stack = [case.buses[0].id]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    if seen != bus_ids:
        missing = sorted(bus_ids - seen)
        raise GridValidationError(f"network is disconnected; unreachable buses {missing}")


def case_from_dict(data: dict) -> GridCase:
    """Build a GridCase from the JSON schema dict (see load_case)."""
    try:
        buses = tuple(
            Bus(id=int(b["id"]), load=float(b.get("load", 0.0)),
                wind_forecast=float(b.get("wind_forecast", 0.0)))
            for b in data["buses"]
        )
        lines = tuple(
            Line(id=int(l["id"]), from_bus=int(l["from"]), to_bus=int(l["to"]),
                 reactance=float(l["reactance"]), f_max=float(l["f_max"]))
            for l in data["lines"]
        )
        gens = tuple(
            Generator(id=int(g["id"]), bus=int(g["bus"]), p_min=float(g["p_min"]),
                      p_max=float(g["p_max"]), c1=float(g.get("c1", 0.0)),
                      c2=float(g.get("c2", 0.0)))
            for g in data["generators"]
        )
        slack = int(data["slack_bus"])
        base = float(data.get("base_mva", 100.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise GridValidationError(f"malformed case data: {exc}") from exc
    return GridCase(buses=buses, lines=lines, generators=gens, slack_bus=slack, base_mva=base)


def load_case(path: str | Path) -> GridCase:
    """Load and validate a grid case from a JSON file.

    Schema: top-level keys ``base_mva``, ``slack_bus``,
    ``buses: [{id, load, wind_forecast}]``,
    ``lines: [{id, from, to, reactance, f_max}]``,
    ``generators: [{id, bus, p_min, p_max, c1, c2}]``.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise GridValidationError(f"cannot parse {path}: {exc}") from exc
    return case_from_dict(data)


def builtin_case_path(name: str) -> Path:
    """Path of a bundled case fixture, e.g. 'case3', 'case14', 'case118'."""
    p = Path(__file__).parent / "cases" / f"{name}.json"
    if not p.exists():
        raise FileNotFoundError(f"no bundled case named {name!r}")
    return p


def builtin_case(name: str) -> GridCase:
    return load_case(builtin_case_path(name))


@dataclass(frozen=True)
class PtdfMatrix:
    """Power transfer distribution factors H (|L| x |B|) plus derived views.

    ``h_gen`` aggregates each row onto generator positions (|L| x |G|);
    ``wind_rows`` restricts rows to wind-bus columns.
    """

    H: np.ndarray       # |L| x |B|
    h_gen: np.ndarray   # |L| x |G|, h_gen[l,g] = H[l, bus_of(g)]
    slack_position: int
    wind_positions: np.ndarray

    @property
    def wind_rows(self) -> np.ndarray:
        return self.H[:, self.wind_positions]

    def gamma(self, alpha: np.ndarray) -> np.ndarray:
        """Flow deviation per unit of aggregate imbalance: -(h_gen) @ alpha."""
        return -self.h_gen @ np.asarray(alpha, dtype=float)


def _susceptance(case: GridCase) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Line susceptances (p.u.), incidence A (L x B), nodal matrix B = A' diag(b) A."""
    nb, nl = case.n_bus, case.n_line
    b = np.array([1.0 / l.reactance for l in case.lines])
    A = np.zeros((nl, nb))
    for k, l in enumerate(case.lines):
        A[k, case.bus_index[l.from_bus]] = 1.0
        A[k, case.bus_index[l.to_bus]] = -1.0
    Bbus = A.T @ (b[:, None] * A)
    return b, A, Bbus


def compute_ptdf(case: GridCase) -> PtdfMatrix:
    """Compute H such that f = H @ p for any balanced injection vector p (MW).

    The slack row/column of the susceptance matrix is deleted before
    inversion and the slack column of H is set to zero.
    """
    b, A, Bbus = _susceptance(case)
    s = case.bus_index[case.slack_bus]
    keep = [i for i in range(case.n_bus) if i != s]
    Bred = Bbus[np.ix_(keep, keep)]
    rhs = (b[:, None] * A)[:, keep]
    try:
        Hred = np.linalg.solve(Bred, rhs.T).T
    except np.linalg.LinAlgError as exc:
        raise GridValidationError(
            "singular reduced susceptance matrix (disconnected network?)") from exc
    H = np.zeros((case.n_line, case.n_bus))
    H[:, keep] = Hred
    return PtdfMatrix(
        H=H,
        h_gen=H @ case.gen_bus_matrix,
        slack_position=s,
        wind_positions=case.wind_bus_positions,
    )


def nominal_state(case: GridCase, ptdf: PtdfMatrix, pbar: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nominal injections p0 (per bus) and flows f0 = H p0 under perfect forecast."""
    pbar = np.asarray(pbar, dtype=float)
    if pbar.shape != (case.n_gen,):
        raise ValueError(f"pbar must have length {case.n_gen}")
    p0 = case.gen_bus_matrix @ pbar + case.wind - case.loads
    return p0, ptdf.H @ p0


def realized_state(
    case: GridCase,
    ptdf: PtdfMatrix,
    pbar: np.ndarray,
    alpha: np.ndarray,
    xi: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Generator outputs and line flows under forecast-error realization(s) xi.

    Implements the affine recourse p_g = pbar_g - alpha_g * Omega with
    Omega = sum(xi), and the flow decomposition
    f = f0 + gamma(alpha) * Omega + H @ xi.

    ``xi`` may be one sample (|B|,) or a batch (N, |B|); outputs broadcast
    to (|G|,)/(|L|,) or (N, |G|)/(N, |L|).
    """
    pbar = np.asarray(pbar, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if alpha.shape != (case.n_gen,) or pbar.shape != (case.n_gen,):
        raise ValueError(f"pbar and alpha must have length {case.n_gen}")
    if xi.shape[-1] != case.n_bus:
        raise ValueError(f"xi must have {case.n_bus} columns")
    if not np.isclose(alpha.sum(), 1.0, atol=1e-6):
        raise ValueError("participation factors must sum to 1")
    _, f0 = nominal_state(case, ptdf, pbar)
    omega = xi.sum(axis=-1)
    gamma = ptdf.gamma(alpha)
    if xi.ndim == 1:
        pg = pbar - alpha * omega
        f = f0 + gamma * omega + ptdf.H @ xi
    else:
        pg = pbar[None, :] - np.outer(omega, alpha)
        f = f0[None, :] + np.outer(omega, gamma) + xi @ ptdf.H.T
    return pg, f


def recover_angles(case: GridCase, p: np.ndarray) -> np.ndarray:
    """Voltage angles (rad) with theta_slack = 0 for a balanced injection p (MW)."""
    p = np.asarray(p, dtype=float)
    if p.shape != (case.n_bus,):
        raise ValueError(f"p must have length {case.n_bus}")
    imbalance = abs(p.sum())
    if imbalance > 1e-6 * max(1.0, np.abs(p).max()):
        raise ValueError(f"injection is unbalanced (sum = {p.sum():.6g} MW)")
    _, _, Bbus = _susceptance(case)
    s = case.bus_index[case.slack_bus]
    keep = [i for i in range(case.n_bus) if i != s]
    theta = np.zeros(case.n_bus)
    theta[keep] = np.linalg.solve(Bbus[np.ix_(keep, keep)], p[keep] / case.base_mva)
    return theta


def flows_from_angles(case: GridCase, theta: np.ndarray) -> np.ndarray:
    """Line flows (MW) implied by bus angles: f_l = b_l (theta_from - theta_to) * base."""
    b, A, _ = _susceptance(case)
    return b * (A @ np.asarray(theta, dtype=float)) * case.base_mva
