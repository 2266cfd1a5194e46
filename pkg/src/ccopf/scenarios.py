"""Forecast-error scenario sets: synthetic generation, CSV ingestion and the
constraint-informed data transforms (aggregate and per-line streams).

Synthetic draws are per-unit (fraction of forecast) and scaled by each
bus's wind forecast to obtain MW; buses without wind units stay at zero.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import GridCase, PtdfMatrix

__all__ = [
    "ScenarioSet",
    "OmegaSamples",
    "EtaSamples",
    "SplitSpec",
    "IngestSummary",
    "generate_gaussian",
    "generate_cauchy",
    "ingest_csv",
    "to_omega",
    "to_eta",
    "split",
]


@dataclass(frozen=True)
class ScenarioSet:
    """N x |B| matrix of forecast-error samples xi (MW), one row per scenario."""

    samples: np.ndarray
    bus_ids: tuple[int, ...]
    label: str = ""
    seed: int | None = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 2:
            raise ValueError("samples must be a 2-d array")
        if s.shape[1] != len(self.bus_ids):
            raise ValueError("one column per bus id required")
        object.__setattr__(self, "samples", s)

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    @property
    def n_bus(self) -> int:
        return self.samples.shape[1]

    def take(self, idx: np.ndarray, label_suffix: str = "") -> "ScenarioSet":
        return ScenarioSet(self.samples[idx], self.bus_ids,
                           label=self.label + label_suffix, seed=self.seed)

    def to_csv(self, path: str | Path) -> None:
        """One CSV with bus-id headers; values in MW."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([str(b) for b in self.bus_ids])
            for row in self.samples:
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path: str | Path, label: str = "") -> "ScenarioSet":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows:
            raise ValueError(f"{path}: empty scenario CSV")
        bus_ids = tuple(int(h) for h in rows[0])
        data = np.array([[float(v) for v in r] for r in rows[1:]])
        return cls(data, bus_ids, label=label or str(path))


@dataclass(frozen=True)
class OmegaSamples:
    """Aggregate system forecast error per scenario: Omega = sum_i xi_i."""

    values: np.ndarray  # (N,)


@dataclass(frozen=True)
class EtaSamples:
    """Per-line 2-d uncertainty samples (Omega, PTDF-weighted local error)."""

    line_id: int
    values: np.ndarray  # (N, 2); column 0 is Omega


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie in (0, 1)")


@dataclass
class IngestSummary:
    rows_read: int
    rows_dropped: int
    units: tuple[str, ...]


def _wind_scaled(case: GridCase, per_unit: np.ndarray, label: str, seed: int | None) -> ScenarioSet:
    """Embed per-unit wind-bus draws into an N x |B| MW matrix."""
    n = per_unit.shape[0]
    samples = np.zeros((n, case.n_bus))
    wpos = case.wind_bus_positions
    samples[:, wpos] = per_unit * case.wind[wpos][None, :]
    return ScenarioSet(samples, tuple(b.id for b in case.buses), label=label, seed=seed)


def generate_gaussian(case: GridCase, n_samples: int, mu: float, sigma: float,
                      seed: int) -> ScenarioSet:
    """I.i.d. per-unit Gaussian errors N(mu, sigma^2) scaled by each wind forecast."""
    if sigma <= 0:
        raise ValueError("sigma must be > 0")
    rng = np.random.default_rng(seed)
    draws = rng.normal(mu, sigma, size=(n_samples, len(case.wind_bus_positions)))
    return _wind_scaled(case, draws, f"synthetic-G(mu={mu},sigma={sigma})", seed)


def generate_cauchy(case: GridCase, n_samples: int, x0: float, gamma: float,
                    seed: int) -> ScenarioSet:
    """I.i.d. per-unit Cauchy errors via inverse CDF x0 + gamma*tan(pi*(u - 1/2))."""
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    rng = np.random.default_rng(seed)
    u = rng.random(size=(n_samples, len(case.wind_bus_positions)))
    draws = x0 + gamma * np.tan(np.pi * (u - 0.5))
    return _wind_scaled(case, draws, f"synthetic-C(x0={x0},gamma={gamma})", seed)


def ingest_csv(path: str | Path, normalize: bool = False,
               case: GridCase | None = None) -> tuple[ScenarioSet, IngestSummary]:
    """Read forecast-error data from a CSV with a header row of unit names.

    With ``normalize`` the file must carry paired ``<unit>_actual`` /
    ``<unit>_forecast`` columns and errors are (actual - forecast)/actual;
    rows where any actual is 0 are dropped and counted. Without it the body
    is taken as per-unit errors directly.

    With ``case`` the unit columns are mapped in order onto the case's wind
    buses and scaled to MW by the bus wind forecasts; otherwise bus ids are
    the column positions and values stay per-unit.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: no data rows")
    header = [h.strip() for h in rows[0]]
    try:
        body = np.array([[float(v) for v in r] for r in rows[1:] if r])
    except ValueError as exc:
        raise ValueError(f"{path}: malformed numeric body: {exc}") from exc
    rows_read = body.shape[0]

    if normalize:
        units = []
        for h in header:
            if h.endswith("_actual"):
                u = h[: -len("_actual")]
                if f"{u}_forecast" not in header:
                    raise ValueError(f"{path}: missing forecast column for unit {u!r}")
                units.append(u)
        if not units:
            raise ValueError(f"{path}: no <unit>_actual columns to normalize")
        actual = body[:, [header.index(f"{u}_actual") for u in units]]
        forecast = body[:, [header.index(f"{u}_forecast") for u in units]]
        ok = np.all(actual != 0.0, axis=1)
        dropped = int((~ok).sum())
        if not ok.any():
            raise ValueError(f"{path}: all rows dropped (actual = 0 everywhere)")
        per_unit = (actual[ok] - forecast[ok]) / actual[ok]
    else:
        units = header
        per_unit = body
        dropped = 0

    summary = IngestSummary(rows_read=rows_read, rows_dropped=dropped, units=tuple(units))
    if case is not None:
        wpos = case.wind_bus_positions
        if per_unit.shape[1] != len(wpos):
            raise ValueError(
                f"{path}: {per_unit.shape[1]} unit columns but case has {len(wpos)} wind buses")
        return _wind_scaled(case, per_unit, str(path), None), summary
    return ScenarioSet(per_unit, tuple(range(per_unit.shape[1])), label=str(path)), summary


def to_omega(scenario_set: ScenarioSet) -> OmegaSamples:
    """Aggregate transform: Omega^(n) = sum_i xi_i^(n)."""
    return OmegaSamples(scenario_set.samples.sum(axis=1))


def to_eta(scenario_set: ScenarioSet, ptdf: PtdfMatrix, line_position: int) -> EtaSamples:
    """Per-line transform: eta_l^(n) = (Omega^(n), sum_i H_li xi_i^(n))."""
    h = ptdf.H[line_position]
    if h.shape[0] != scenario_set.n_bus:
        raise ValueError("PTDF row length does not match scenario columns")
    omega = scenario_set.samples.sum(axis=1)
    local = scenario_set.samples @ h
    return EtaSamples(line_id=line_position, values=np.column_stack([omega, local]))


def split(scenario_set: ScenarioSet, spec: SplitSpec) -> tuple[ScenarioSet, ScenarioSet]:
    """Seeded-shuffle split into train (floor(f*N)) and holdout (rest)."""
    n = scenario_set.n
    if n < 2:
        raise ValueError("need at least 2 samples to split")
    rng = np.random.default_rng(spec.seed)
    perm = rng.permutation(n)
    n_train = int(np.floor(spec.train_fraction * n))
    return (scenario_set.take(perm[:n_train], "/train"),
            scenario_set.take(perm[n_train:], "/holdout"))
