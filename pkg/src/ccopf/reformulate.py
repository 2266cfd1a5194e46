"""Deterministic conic reformulation of the chance-constrained dispatch problem.

Three builders share one assembly core:

* ``build_ci_model`` — constraint-informed inputs (1-d aggregate mixture
  plus per-line 2-d mixtures with tied-scaled covariances),
* ``build_classical_model`` — a single |B|-d mixture whose parameters are
  linearly transformed into the same low-dimensional form first,
* ``build_gaussian_model`` — the K = 1 special case where the chance
  constraints collapse to linear rows with the exact normal quantile.

The mixture constraints follow the auxiliary-variable scheme: per
generator/component pair the domain restriction rows, S piecewise-linear
cuts on an auxiliary M bounded by the under-estimator, and a weighted
aggregation row; per line additionally one second-order cone tying the
auxiliary delta_l to the decision-dependent standard deviation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.special import ndtr, ndtri

from .cdf_approx import PwlCdf
from .estimation import GmmModel, gmm_moments, transform_classical
from .grid import GridCase, PtdfMatrix

__all__ = [
    "MethodSpec",
    "FittedInputs",
    "SocConstraint",
    "ConicProgram",
    "ObjectiveSpec",
    "MeanConditionReport",
    "build_objective",
    "build_ci_model",
    "build_classical_model",
    "build_gaussian_model",
    "build_deterministic_model",
    "check_mean_conditions",
    "audit_solution",
    "as_tied_scaled",
]

_APPROACHES = ("classical", "constraint-informed")
_DISTRIBUTIONS = ("gaussian", "gmm")


@dataclass(frozen=True)
class MethodSpec:
    """Which pipeline variant to build and at what risk level."""

    approach: str = "constraint-informed"
    distribution: str = "gmm"
    k: int = 1
    epsilon: float = 0.05
    pwl: PwlCdf | None = None
    zero_mean: bool = False

    def __post_init__(self):
        if self.approach not in _APPROACHES:
            raise ValueError(f"unknown approach {self.approach!r}")
        if self.distribution not in _DISTRIBUTIONS:
            raise ValueError(f"unknown distribution {self.distribution!r}")
        if not 0.0 < self.epsilon < 0.5:
            raise ValueError("epsilon must lie in (0, 0.5)")
        if self.distribution == "gaussian" and self.k != 1:
            raise ValueError("the Gaussian special case requires K = 1")
        if self.distribution == "gmm" and self.pwl is None:
            raise ValueError("GMM reformulation needs a PwlCdf")


@dataclass(frozen=True)
class FittedInputs:
    """Low-dimensional fitted models: aggregate (1-d) and one 2-d per line."""

    omega: GmmModel
    eta: tuple[GmmModel, ...]
    source: str = "constraint-informed"

    def __post_init__(self):
        if self.omega.dim != 1:
            raise ValueError("the aggregate model must be 1-d")
        for m in self.eta:
            if m.dim != 2:
                raise ValueError("line models must be 2-d")


def as_tied_scaled(model: GmmModel, rtol: float = 1e-8) -> tuple[np.ndarray, np.ndarray]:
    """Return (C_0, tau^2 scales) for a mixture with proportional covariances.

    Accepts tied-scaled and spherical structures directly, any K = 1
    model, and full-structure models whose covariances happen to be
    proportional. Raises ValueError otherwise (that case is nonconvex in
    the line reformulation and is rejected).
    """
    if model.structure == "tied-scaled" and model.base is not None:
        return model.base, model.scales
    covs = model.covariances
    if model.k == 1:
        return covs[0], np.ones(1)
    ref = covs[0]
    tr_ref = np.trace(ref)
    scales = np.array([np.trace(c) / tr_ref for c in covs])
    for c, s in zip(covs, scales):
        if not np.allclose(c, s * ref, rtol=rtol, atol=rtol * max(tr_ref, 1.0)):
            raise ValueError(
                "free per-component covariances break convexity of the line "
                "reformulation; fit with a tied-scaled (or spherical) structure")
    c = float(model.weights @ scales)
    return ref * c, scales / c


# ---------------------------------------------------------------------------
# Program container
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SocConstraint:
    """||F x + g||_2 <= c' x + d."""

    F: np.ndarray
    g: np.ndarray
    c: np.ndarray
    d: float
    label: str = ""

    def residual(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(self.F @ x + self.g) - (self.c @ x + self.d))


@dataclass(frozen=True)
class FeasibilityReport:
    max_eq_residual: float
    max_ub_residual: float
    max_soc_residual: float
    worst_row: str

    @property
    def max_violation(self) -> float:
        return max(self.max_eq_residual, self.max_ub_residual, self.max_soc_residual)

    def ok(self, tol: float = 1e-6) -> bool:
        return self.max_violation <= tol


@dataclass(frozen=True)
class ConicProgram:
    """Solver-independent convex program: affine rows, SOC blocks and a
    PSD quadratic objective given as a weighted sum of squared affine terms."""

    n: int
    blocks: dict[str, tuple[int, int]]
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    eq_labels: tuple[str, ...]
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    ub_labels: tuple[str, ...]
    socs: tuple[SocConstraint, ...]
    quad_w: np.ndarray
    quad_rows: np.ndarray     # (Q, n): objective += sum_q w_q (row_q x + off_q)^2
    quad_offsets: np.ndarray
    lin_cost: np.ndarray
    cost0: float = 0.0
    meta: dict = field(default_factory=dict)

    def block(self, name: str, x: np.ndarray) -> np.ndarray:
        lo, hi = self.blocks[name]
        return x[lo:hi]

    def objective_value(self, x: np.ndarray) -> float:
        r = self.quad_rows @ x + self.quad_offsets
        return float(self.quad_w @ (r * r) + self.lin_cost @ x + self.cost0)

    def feasibility(self, x: np.ndarray) -> FeasibilityReport:
        """Residuals of every constraint family at x (absolute, MW scale)."""
        eq_r = np.abs(self.A_eq @ x - self.b_eq) if self.b_eq.size else np.zeros(1)
        ub_r = self.A_ub @ x - self.b_ub if self.b_ub.size else np.zeros(1)
        soc_r = np.array([s.residual(x) for s in self.socs]) if self.socs else np.zeros(1)
        worst = ""
        worst_val = -np.inf
        for arr, labels in ((eq_r, self.eq_labels), (ub_r, self.ub_labels),
                            (soc_r, tuple(s.label for s in self.socs))):
            if labels and arr.size == len(labels):
                i = int(np.argmax(arr))
                if arr[i] > worst_val:
                    worst_val, worst = float(arr[i]), labels[i]
        return FeasibilityReport(
            max_eq_residual=float(eq_r.max(initial=0.0)),
            max_ub_residual=float(ub_r.max(initial=0.0)),
            max_soc_residual=float(soc_r.max(initial=0.0)),
            worst_row=worst,
        )

    def to_dict(self) -> dict:
        def tri(m: sp.csr_matrix) -> dict:
            coo = m.tocoo()
            return {"shape": list(coo.shape), "i": coo.row.tolist(),
                    "j": coo.col.tolist(), "v": coo.data.tolist()}

        return {
            "n": self.n,
            "blocks": {k: list(v) for k, v in self.blocks.items()},
            "eq": {"A": tri(self.A_eq), "b": self.b_eq.tolist(), "labels": list(self.eq_labels)},
            "ub": {"A": tri(self.A_ub), "b": self.b_ub.tolist(), "labels": list(self.ub_labels)},
            "socs": [
                {"F": s.F.tolist(), "g": s.g.tolist(), "c": s.c.tolist(),
                 "d": s.d, "label": s.label}
                for s in self.socs
            ],
            "objective": {
                "quad_w": self.quad_w.tolist(),
                "quad_rows": self.quad_rows.tolist(),
                "quad_offsets": self.quad_offsets.tolist(),
                "lin": self.lin_cost.tolist(),
                "const": self.cost0,
            },
            "meta": self.meta,
        }

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), sort_keys=True))

    @classmethod
    def from_dict(cls, d: dict) -> "ConicProgram":
        def untri(t: dict) -> sp.csr_matrix:
            return sp.coo_matrix((t["v"], (t["i"], t["j"])), shape=tuple(t["shape"])).tocsr()

        obj = d["objective"]
        return cls(
            n=d["n"],
            blocks={k: tuple(v) for k, v in d["blocks"].items()},
            A_eq=untri(d["eq"]["A"]), b_eq=np.array(d["eq"]["b"]),
            eq_labels=tuple(d["eq"]["labels"]),
            A_ub=untri(d["ub"]["A"]), b_ub=np.array(d["ub"]["b"]),
            ub_labels=tuple(d["ub"]["labels"]),
            socs=tuple(SocConstraint(np.array(s["F"]), np.array(s["g"]),
                                     np.array(s["c"]), float(s["d"]), s["label"])
                       for s in d["socs"]),
            quad_w=np.array(obj["quad_w"]),
            quad_rows=np.array(obj["quad_rows"]).reshape(len(obj["quad_w"]), d["n"]),
            quad_offsets=np.array(obj["quad_offsets"]),
            lin_cost=np.array(obj["lin"]),
            cost0=float(obj["const"]),
            meta=d.get("meta", {}),
        )


class _Builder:
    def __init__(self):
        self.n = 0
        self.blocks: dict[str, tuple[int, int]] = {}
        self._eq_rows: list[dict[int, float]] = []
        self._eq_rhs: list[float] = []
        self._eq_labels: list[str] = []
        self._ub_rows: list[dict[int, float]] = []
        self._ub_rhs: list[float] = []
        self._ub_labels: list[str] = []
        self.socs: list[SocConstraint] = []
        self._quad: list[tuple[float, dict[int, float], float]] = []
        self._lin: dict[int, float] = {}
        self.cost0 = 0.0
        self.meta: dict = {}

    def add_block(self, name: str, size: int) -> int:
        start = self.n
        self.n += size
        self.blocks[name] = (start, self.n)
        return start

    def add_eq(self, coeffs: dict[int, float], rhs: float, label: str) -> None:
        self._eq_rows.append(coeffs)
        self._eq_rhs.append(rhs)
        self._eq_labels.append(label)

    def add_ub(self, coeffs: dict[int, float], rhs: float, label: str) -> None:
        self._ub_rows.append(coeffs)
        self._ub_rhs.append(rhs)
        self._ub_labels.append(label)

    def add_quad(self, w: float, coeffs: dict[int, float], offset: float = 0.0) -> None:
        if w != 0.0:
            self._quad.append((w, coeffs, offset))

    def add_lin(self, idx: int, coef: float) -> None:
        self._lin[idx] = self._lin.get(idx, 0.0) + coef

    def build(self) -> ConicProgram:
        def mat(rows: list[dict[int, float]]) -> sp.csr_matrix:
            i, j, v = [], [], []
            for r, coeffs in enumerate(rows):
                for col, val in coeffs.items():
                    i.append(r)
                    j.append(col)
                    v.append(val)
            return sp.coo_matrix((v, (i, j)), shape=(len(rows), self.n)).tocsr()

        qn = len(self._quad)
        quad_w = np.array([q[0] for q in self._quad]) if qn else np.zeros(0)
        quad_rows = np.zeros((qn, self.n))
        quad_off = np.zeros(qn)
        for r, (_, coeffs, off) in enumerate(self._quad):
            for col, val in coeffs.items():
                quad_rows[r, col] = val
            quad_off[r] = off
        lin = np.zeros(self.n)
        for col, val in self._lin.items():
            lin[col] = val
        return ConicProgram(
            n=self.n, blocks=self.blocks,
            A_eq=mat(self._eq_rows), b_eq=np.array(self._eq_rhs),
            eq_labels=tuple(self._eq_labels),
            A_ub=mat(self._ub_rows), b_ub=np.array(self._ub_rhs),
            ub_labels=tuple(self._ub_labels),
            socs=tuple(self.socs),
            quad_w=quad_w, quad_rows=quad_rows, quad_offsets=quad_off,
            lin_cost=lin, cost0=self.cost0, meta=self.meta,
        )


# ---------------------------------------------------------------------------
# Objective (expected quadratic cost under the aggregate-error moments)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObjectiveSpec:
    """Expected cost: sum_g c2 (pbar - a E)^2 + c2 a^2 V + c1 (pbar - a E)."""

    c1: np.ndarray
    c2: np.ndarray
    mean: float
    var: float

    def value(self, pbar: np.ndarray, alpha: np.ndarray) -> float:
        shifted = np.asarray(pbar) - self.mean * np.asarray(alpha)
        return float(self.c2 @ (shifted**2) + self.var * (self.c2 @ (np.asarray(alpha)**2))
                     + self.c1 @ shifted)


def build_objective(case: GridCase, omega_model: GmmModel) -> ObjectiveSpec:
    mean, var = gmm_moments(omega_model)
    return ObjectiveSpec(c1=case.c1, c2=case.c2, mean=mean, var=var)


def _install_objective(b: _Builder, case: GridCase, obj: ObjectiveSpec,
                       pbar0: int, alpha0: int | None) -> None:
    for g in range(case.n_gen):
        coeffs = {pbar0 + g: 1.0}
        if alpha0 is not None and obj.mean != 0.0:
            coeffs[alpha0 + g] = -obj.mean
        b.add_quad(obj.c2[g], coeffs)
        if alpha0 is not None:
            b.add_quad(obj.c2[g] * obj.var, {alpha0 + g: 1.0})
        b.add_lin(pbar0 + g, obj.c1[g])
        if alpha0 is not None and obj.mean != 0.0:
            b.add_lin(alpha0 + g, -obj.c1[g] * obj.mean)


# ---------------------------------------------------------------------------
# Shared assembly pieces
# ---------------------------------------------------------------------------


def _line_offsets(case: GridCase, ptdf: PtdfMatrix) -> np.ndarray:
    """Constant part of nominal flows: H (wind - load)."""
    return ptdf.H @ (case.wind - case.loads)


def _base_rows(b: _Builder, case: GridCase, pbar0: int, alpha0: int | None) -> None:
    b.add_eq({pbar0 + g: 1.0 for g in range(case.n_gen)},
             case.total_load - case.total_wind, "balance")
    for g in range(case.n_gen):
        b.add_ub({pbar0 + g: -1.0}, 0.0, f"pbar_nonneg[{g}]")
    if alpha0 is not None:
        b.add_eq({alpha0 + g: 1.0 for g in range(case.n_gen)}, 1.0, "simplex")
        for g in range(case.n_gen):
            b.add_ub({alpha0 + g: -1.0}, 0.0, f"alpha_nonneg[{g}]")


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    """Some L with L L' = cov; eigen-based so singular matrices are fine."""
    vals, vecs = np.linalg.eigh(0.5 * (cov + cov.T))
    return vecs * np.sqrt(np.maximum(vals, 0.0))


def _line_cone(b: _Builder, case: GridCase, ptdf: PtdfMatrix, l: int,
               base_cov: np.ndarray, alpha0: int, delta0: int) -> None:
    """delta_l >= || L' (gamma_l(alpha), 1) || with L L' = C_0."""
    chol = _psd_factor(base_cov)
    w_map = np.zeros((2, case.n_gen))
    w_map[0] = -ptdf.h_gen[l]
    F = np.zeros((2, b.n))
    F[:, alpha0:alpha0 + case.n_gen] = chol.T @ w_map
    g_vec = chol.T @ np.array([0.0, 1.0])
    c = np.zeros(b.n)
    c[delta0 + l] = 1.0
    b.socs.append(SocConstraint(F=F, g=g_vec, c=c, d=0.0, label=f"flow_cone[{l}]"))


def _gen_chance_rows(b: _Builder, case: GridCase, omega: GmmModel, pwl: PwlCdf,
                     epsilon: float, pbar0: int, alpha0: int, m1_0: int, m2_0: int) -> None:
    k_n = omega.k
    m_k = omega.means[:, 0]
    s_k = omega.sigmas
    w_k = omega.weights
    S = pwl.n_segments
    for g in range(case.n_gen):
        pmin, pmax = case.p_min[g], case.p_max[g]
        for k in range(k_n):
            iv1 = m1_0 + g * k_n + k
            iv2 = m2_0 + g * k_n + k
            # domain restriction: the PWL argument must stay nonnegative
            b.add_ub({pbar0 + g: 1.0, alpha0 + g: -m_k[k]}, pmax, f"gen_mean_max[{g},{k}]")
            b.add_ub({pbar0 + g: -1.0, alpha0 + g: m_k[k]}, -pmin, f"gen_mean_min[{g},{k}]")
            for s in range(S):
                a_s, b_s = pwl.slopes[s], pwl.intercepts[s]
                r = a_s / s_k[k]
                b.add_ub({iv1: 1.0, pbar0 + g: r, alpha0 + g: -(r * m_k[k] + b_s)},
                         r * pmax, f"gen_cut_max[{g},{k},{s}]")
                b.add_ub({iv2: 1.0, pbar0 + g: -r, alpha0 + g: r * m_k[k] - b_s},
                         -r * pmin, f"gen_cut_min[{g},{k},{s}]")
            # probabilities never exceed 1 per unit alpha; alpha <= 1 on the simplex
            b.add_ub({iv1: 1.0}, 1.0, f"gen_cap_max[{g},{k}]")
            b.add_ub({iv2: 1.0}, 1.0, f"gen_cap_min[{g},{k}]")
        agg1 = {alpha0 + g: 1.0 - epsilon}
        agg2 = {alpha0 + g: 1.0 - epsilon}
        for k in range(k_n):
            agg1[m1_0 + g * k_n + k] = -w_k[k]
            agg2[m2_0 + g * k_n + k] = -w_k[k]
        b.add_ub(agg1, 0.0, f"gen_agg_max[{g}]")
        b.add_ub(agg2, 0.0, f"gen_agg_min[{g}]")


def _line_chance_rows(b: _Builder, case: GridCase, ptdf: PtdfMatrix, eta: tuple[GmmModel, ...],
                      pwl: PwlCdf, epsilon: float, pbar0: int, alpha0: int, delta0: int,
                      m3_0: int, m4_0: int) -> None:
    S = pwl.n_segments
    offsets = _line_offsets(case, ptdf)
    for l in range(case.n_line):
        model = eta[l]
        base_cov, scales = as_tied_scaled(model)
        taus = np.sqrt(scales)
        k_n = model.k
        fmax = case.f_max[l]
        h_gen = ptdf.h_gen[l]
        c0 = offsets[l]
        for k in range(k_n):
            nu0, nu1 = model.means[k]
            iv3 = m3_0 + l * k_n + k
            iv4 = m4_0 + l * k_n + k
            # E_lk = h_gen p - nu0 h_gen a + (c0 + nu1)
            mean_row = {pbar0 + g: h_gen[g] for g in range(case.n_gen)}
            for g in range(case.n_gen):
                mean_row[alpha0 + g] = mean_row.get(alpha0 + g, 0.0) - nu0 * h_gen[g]
            b.add_ub(dict(mean_row), fmax - c0 - nu1, f"flow_mean_max[{l},{k}]")
            b.add_ub({i: -v for i, v in mean_row.items()}, fmax + c0 + nu1,
                     f"flow_mean_min[{l},{k}]")
            for s in range(S):
                a_s, b_s = pwl.slopes[s], pwl.intercepts[s]
                r = a_s / taus[k]
                cut3 = {iv3: 1.0, delta0 + l: -b_s}
                cut4 = {iv4: 1.0, delta0 + l: -b_s}
                for i, v in mean_row.items():
                    cut3[i] = cut3.get(i, 0.0) + r * v
                    cut4[i] = cut4.get(i, 0.0) - r * v
                b.add_ub(cut3, r * (fmax - c0 - nu1), f"flow_cut_max[{l},{k},{s}]")
                b.add_ub(cut4, r * (fmax + c0 + nu1), f"flow_cut_min[{l},{k},{s}]")
        agg3 = {delta0 + l: 1.0 - epsilon}
        agg4 = {delta0 + l: 1.0 - epsilon}
        for k in range(k_n):
            agg3[m3_0 + l * k_n + k] = -model.weights[k]
            agg4[m4_0 + l * k_n + k] = -model.weights[k]
        b.add_ub(agg3, 0.0, f"flow_agg_max[{l}]")
        b.add_ub(agg4, 0.0, f"flow_agg_min[{l}]")
        b.add_ub({delta0 + l: -1.0}, 0.0, f"delta_nonneg[{l}]")
        _line_cone(b, case, ptdf, l, base_cov, alpha0, delta0)


# ---------------------------------------------------------------------------
# Model builders
# ---------------------------------------------------------------------------


def _build_gmm_program(case: GridCase, ptdf: PtdfMatrix, inputs: FittedInputs,
                       spec: MethodSpec) -> ConicProgram:
    if len(inputs.eta) != case.n_line:
        raise ValueError(f"need one line model per line ({case.n_line}), got {len(inputs.eta)}")
    k_n = inputs.omega.k
    b = _Builder()
    pbar0 = b.add_block("pbar", case.n_gen)
    alpha0 = b.add_block("alpha", case.n_gen)
    delta0 = b.add_block("delta", case.n_line)
    m1_0 = b.add_block("M1", case.n_gen * k_n)
    m2_0 = b.add_block("M2", case.n_gen * k_n)
    m3_0 = b.add_block("M3", case.n_line * k_n)
    m4_0 = b.add_block("M4", case.n_line * k_n)

    _base_rows(b, case, pbar0, alpha0)
    _gen_chance_rows(b, case, inputs.omega, spec.pwl, spec.epsilon, pbar0, alpha0, m1_0, m2_0)
    _line_chance_rows(b, case, ptdf, inputs.eta, spec.pwl, spec.epsilon,
                      pbar0, alpha0, delta0, m3_0, m4_0)
    _install_objective(b, case, build_objective(case, inputs.omega), pbar0, alpha0)
    S = spec.pwl.n_segments
    b.meta = {
        "approach": spec.approach, "distribution": spec.distribution,
        "k": k_n, "epsilon": spec.epsilon, "segments": S,
        "n_pwl_cuts": S * (2 * case.n_gen * k_n + 2 * case.n_line * k_n),
    }
    return b.build()


def build_ci_model(case: GridCase, ptdf: PtdfMatrix, inputs: FittedInputs,
                   spec: MethodSpec) -> ConicProgram:
    """Conic model from constraint-informed fits (transform-then-fit)."""
    return _build_gmm_program(case, ptdf, inputs, spec)


def classical_inputs(case: GridCase, ptdf: PtdfMatrix, xi_model: GmmModel) -> FittedInputs:
    """Transform a |B|-d fit into the aggregate + per-line mixture forms."""
    if xi_model.dim != case.n_bus:
        raise ValueError(f"xi model must be {case.n_bus}-d")
    if xi_model.k > 1:
        as_tied_scaled(xi_model)  # raises if per-component covariances are free
    return FittedInputs(
        omega=transform_classical(xi_model, target="omega"),
        eta=tuple(transform_classical(xi_model, ptdf, l) for l in range(case.n_line)),
        source="classical",
    )


def build_classical_model(case: GridCase, ptdf: PtdfMatrix, xi_model: GmmModel,
                          spec: MethodSpec) -> ConicProgram:
    """Conic model from a |B|-d fit (fit-then-transform).

    The high-dimensional parameters are linearly transformed into the
    aggregate and per-line forms first; the assembled constraint structure
    is then identical to the constraint-informed build. K > 1 requires
    proportional component covariances (tied-scaled / spherical fits).
    """
    return _build_gmm_program(case, ptdf, classical_inputs(case, ptdf, xi_model), spec)


def build_gaussian_model(case: GridCase, ptdf: PtdfMatrix, inputs: FittedInputs,
                         spec: MethodSpec) -> ConicProgram:
    """K = 1 special case: linear generator rows with the exact normal
    quantile and line rows using the same cone on delta_l."""
    if inputs.omega.k != 1 or any(m.k != 1 for m in inputs.eta):
        raise ValueError("the Gaussian model requires K = 1 inputs")
    z = float(ndtri(1.0 - spec.epsilon))
    m1 = float(inputs.omega.means[0, 0])
    s1 = float(inputs.omega.sigmas[0])
    b = _Builder()
    pbar0 = b.add_block("pbar", case.n_gen)
    alpha0 = b.add_block("alpha", case.n_gen)
    delta0 = b.add_block("delta", case.n_line)
    _base_rows(b, case, pbar0, alpha0)
    for g in range(case.n_gen):
        b.add_ub({pbar0 + g: 1.0, alpha0 + g: -(m1 - z * s1)}, case.p_max[g],
                 f"gen_max[{g}]")
        b.add_ub({pbar0 + g: -1.0, alpha0 + g: m1 + z * s1}, -case.p_min[g],
                 f"gen_min[{g}]")
    offsets = _line_offsets(case, ptdf)
    for l in range(case.n_line):
        model = inputs.eta[l]
        nu0, nu1 = model.means[0]
        h_gen = ptdf.h_gen[l]
        c0 = offsets[l]
        row = {pbar0 + g: h_gen[g] for g in range(case.n_gen)}
        for g in range(case.n_gen):
            row[alpha0 + g] = row.get(alpha0 + g, 0.0) - nu0 * h_gen[g]
        row_max = dict(row)
        row_max[delta0 + l] = z
        b.add_ub(row_max, case.f_max[l] - c0 - nu1, f"flow_max[{l}]")
        row_min = {i: -v for i, v in row.items()}
        row_min[delta0 + l] = z
        b.add_ub(row_min, case.f_max[l] + c0 + nu1, f"flow_min[{l}]")
        b.add_ub({delta0 + l: -1.0}, 0.0, f"delta_nonneg[{l}]")
        _line_cone(b, case, ptdf, l, model.covariances[0], alpha0, delta0)
    _install_objective(b, case, build_objective(case, inputs.omega), pbar0, alpha0)
    b.meta = {"approach": spec.approach, "distribution": "gaussian", "k": 1,
              "epsilon": spec.epsilon}
    return b.build()


def build_deterministic_model(case: GridCase, ptdf: PtdfMatrix) -> ConicProgram:
    """Risk-free dispatch (errors pinned at zero): box limits on pbar and
    nominal-flow limits; used as oracle baseline and feasibility probe."""
    b = _Builder()
    pbar0 = b.add_block("pbar", case.n_gen)
    _base_rows(b, case, pbar0, None)
    for g in range(case.n_gen):
        b.add_ub({pbar0 + g: 1.0}, case.p_max[g], f"gen_max[{g}]")
        b.add_ub({pbar0 + g: -1.0}, -case.p_min[g], f"gen_min[{g}]")
    offsets = _line_offsets(case, ptdf)
    for l in range(case.n_line):
        row = {pbar0 + g: ptdf.h_gen[l][g] for g in range(case.n_gen)}
        b.add_ub(dict(row), case.f_max[l] - offsets[l], f"flow_max[{l}]")
        b.add_ub({i: -v for i, v in row.items()}, case.f_max[l] + offsets[l], f"flow_min[{l}]")
    _install_objective(b, case, ObjectiveSpec(case.c1, case.c2, 0.0, 0.0), pbar0, None)
    b.meta = {"approach": "deterministic", "k": 0, "epsilon": 0.0}
    return b.build()


# ---------------------------------------------------------------------------
# A-priori diagnostics and exact post-solve audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeanConditionReport:
    """A-priori detectable violations of the domain-restriction rows.

    ``gen_flags``/``line_flags`` hold (index-or-None, component, side)
    triples; index None marks an aggregate (summed over generators) test.
    """

    gen_flags: tuple[tuple[int | None, int, str], ...]
    line_flags: tuple[tuple[int, int, str], ...]
    zero_mean_clears: bool

    @property
    def clean(self) -> bool:
        return not self.gen_flags and not self.line_flags


def _mean_condition_flags(case: GridCase, ptdf: PtdfMatrix, omega_means: np.ndarray,
                          eta_means: np.ndarray):
    gen_flags: list[tuple[int | None, int, str]] = []
    line_flags: list[tuple[int, int, str]] = []
    p_bal = case.total_load - case.total_wind
    span = case.p_max - case.p_min
    for k, m_k in enumerate(omega_means):
        if m_k < p_bal - case.p_max.sum():
            gen_flags.append((None, k, "max"))
        if m_k > p_bal - case.p_min.sum():
            gen_flags.append((None, k, "min"))
        # participation caps: alpha_g <= span_g/|m_k| must leave room for sum(alpha)=1
        if m_k < 0 and (span / -m_k).sum() < 1.0:
            gen_flags.append((None, k, "max"))
        if m_k > 0 and (span / m_k).sum() < 1.0:
            gen_flags.append((None, k, "min"))
    offsets = _line_offsets(case, ptdf)
    for l in range(case.n_line):
        h_gen = ptdf.h_gen[l]
        f0_lo = float(np.minimum(h_gen * case.p_min, h_gen * case.p_max).sum() + offsets[l])
        f0_hi = float(np.maximum(h_gen * case.p_min, h_gen * case.p_max).sum() + offsets[l])
        g_lo, g_hi = float(-h_gen.max()), float(-h_gen.min())
        for k in range(eta_means.shape[1]):
            nu0, nu1 = eta_means[l, k]
            lo = f0_lo + min(g_lo * nu0, g_hi * nu0) + nu1
            hi = f0_hi + max(g_lo * nu0, g_hi * nu0) + nu1
            if lo > case.f_max[l]:
                line_flags.append((l, k, "max"))
            if hi < -case.f_max[l]:
                line_flags.append((l, k, "min"))
    return tuple(gen_flags), tuple(line_flags)


def check_mean_conditions(case: GridCase, ptdf: PtdfMatrix,
                          inputs: FittedInputs, spec: MethodSpec) -> MeanConditionReport:
    """Flag (g,k)/(l,k) pairs whose domain-restriction rows provably cannot
    hold jointly with power balance and the participation simplex.

    Diagnostic only; the rows themselves are always part of the model.
    """
    k_n = inputs.omega.k
    eta_means = np.stack([m.means for m in inputs.eta]) if inputs.eta else \
        np.zeros((0, k_n, 2))
    gen_flags, line_flags = _mean_condition_flags(
        case, ptdf, inputs.omega.means[:, 0], eta_means)
    gen_flags = tuple(dict.fromkeys(gen_flags))
    line_flags = tuple(dict.fromkeys(line_flags))
    zg, zl = _mean_condition_flags(case, ptdf, np.zeros(k_n),
                                   np.zeros_like(eta_means))
    return MeanConditionReport(
        gen_flags=gen_flags, line_flags=line_flags,
        zero_mean_clears=bool((gen_flags or line_flags) and not zg and not zl),
    )


def audit_solution(case: GridCase, ptdf: PtdfMatrix, inputs: FittedInputs,
                   pbar: np.ndarray, alpha: np.ndarray,
                   alpha_tol: float = 1e-9) -> dict[str, float]:
    """Exact mixture-CDF satisfaction probability of every chance constraint
    at (pbar, alpha), keyed like the risk module's constraint ids."""
    pbar = np.asarray(pbar, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    out: dict[str, float] = {}
    w = inputs.omega.weights
    m_k = inputs.omega.means[:, 0]
    s_k = inputs.omega.sigmas
    for g in range(case.n_gen):
        a = alpha[g]
        if a <= alpha_tol:
            out[f"gen_max[{g}]"] = 1.0 if pbar[g] <= case.p_max[g] + 1e-9 else 0.0
            out[f"gen_min[{g}]"] = 1.0 if pbar[g] >= case.p_min[g] - 1e-9 else 0.0
            continue
        zmax = (case.p_max[g] - pbar[g] + m_k * a) / (s_k * a)
        zmin = (pbar[g] - m_k * a - case.p_min[g]) / (s_k * a)
        out[f"gen_max[{g}]"] = float(w @ ndtr(zmax))
        out[f"gen_min[{g}]"] = float(w @ ndtr(zmin))
    offsets = _line_offsets(case, ptdf)
    for l in range(case.n_line):
        model = inputs.eta[l]
        gam = float(ptdf.gamma(alpha)[l])
        f0 = float(ptdf.h_gen[l] @ pbar + offsets[l])
        vec = np.array([gam, 1.0])
        mean_lk = f0 + model.means @ vec
        sd_lk = np.sqrt(np.einsum("i,kij,j->k", vec, model.covariances, vec))
        zmax = np.where(sd_lk > 1e-12, (case.f_max[l] - mean_lk) / np.maximum(sd_lk, 1e-300),
                        np.where(mean_lk <= case.f_max[l] + 1e-9, np.inf, -np.inf))
        zmin = np.where(sd_lk > 1e-12, (mean_lk + case.f_max[l]) / np.maximum(sd_lk, 1e-300),
                        np.where(mean_lk >= -case.f_max[l] - 1e-9, np.inf, -np.inf))
        out[f"flow_max[{l}]"] = float(model.weights @ ndtr(zmax))
        out[f"flow_min[{l}]"] = float(model.weights @ ndtr(zmin))
    return out
