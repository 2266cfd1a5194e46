"""Gaussian and Gaussian-mixture estimation.

Provides closed-form Gaussian MLE, a multi-start EM fitter with BIC
selection supporting three covariance structures (full, spherical,
tied-scaled C_k = tau_k^2 C_0), an optional zero-mean constraint (the
mean M-step is skipped and all component means stay exactly 0), the
fit-then-transform parameter maps for the aggregate and per-line
uncertainties, and mixture log-likelihood/CDF/moment evaluation.

Covariance eigenvalues are floored at 1e-10 times the average data
variance so that collapsed components keep a finite likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import ndtr

from .grid import PtdfMatrix

__all__ = [
    "GmmModel",
    "FitReport",
    "fit_mle_gaussian",
    "fit_gmm_em",
    "transform_classical",
    "gmm_loglik",
    "gmm_cdf",
    "gmm_moments",
]

STRUCTURES = ("full", "spherical", "tied-scaled")
_LOG2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class GmmModel:
    """K-component Gaussian mixture in d dimensions.

    For structure "tied-scaled", ``base`` holds the shared matrix C_0 and
    ``scales`` the per-component factors tau_k^2 with covariances
    C_k = tau_k^2 C_0 (scales are normalized to weighted mean 1).
    """

    weights: np.ndarray       # (K,)
    means: np.ndarray         # (K, d)
    covariances: np.ndarray   # (K, d, d)
    structure: str = "full"
    zero_mean: bool = False
    base: np.ndarray | None = None    # (d, d), tied-scaled only
    scales: np.ndarray | None = None  # (K,), tied-scaled only

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.atleast_2d(np.asarray(self.means, dtype=float))
        c = np.asarray(self.covariances, dtype=float)
        if c.ndim == 2:
            c = c[None, :, :]
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        object.__setattr__(self, "covariances", c)
        if self.structure not in STRUCTURES:
            raise ValueError(f"unknown covariance structure {self.structure!r}")
        if abs(w.sum() - 1.0) > 1e-12 or (w < -1e-15).any():
            raise ValueError("mixture weights must be a probability simplex")
        if m.shape != (w.size, c.shape[1]) or c.shape[0] != w.size:
            raise ValueError("inconsistent mixture parameter shapes")

    @property
    def k(self) -> int:
        return self.weights.size

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def sigmas(self) -> np.ndarray:
        """Per-component standard deviations (1-d models only)."""
        if self.dim != 1:
            raise ValueError("sigmas is defined for 1-d models")
        return np.sqrt(self.covariances[:, 0, 0])

    def to_dict(self) -> dict:
        d = {
            "dim": self.dim,
            "K": self.k,
            "structure": self.structure,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "zero_mean": self.zero_mean,
        }
        if self.structure == "tied-scaled":
            d["base"] = self.base.tolist()
            d["scales"] = self.scales.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GmmModel":
        return cls(
            weights=np.array(d["weights"]),
            means=np.array(d["means"]),
            covariances=np.array(d["covariances"]),
            structure=d.get("structure", "full"),
            zero_mean=bool(d.get("zero_mean", False)),
            base=np.array(d["base"]) if "base" in d else None,
            scales=np.array(d["scales"]) if "scales" in d else None,
        )


@dataclass(frozen=True)
class FitReport:
    log_likelihood: float
    bic: float
    iterations: int
    restarts_used: int
    converged: bool
    zero_mean: bool
    degenerate: bool = False
    trace: tuple[float, ...] = ()   # per-iteration log-likelihood of the winning restart


def _floor_value(data: np.ndarray) -> float:
    scale = float(np.mean(np.var(data, axis=0))) if data.size else 0.0
    return 1e-10 * (scale if scale > 0 else 1.0)


def _floor_cov(cov: np.ndarray, floor: float) -> tuple[np.ndarray, bool]:
    """Symmetrize and clip eigenvalues from below; report whether clipping hit."""
    cov = 0.5 * (cov + cov.T)
    vals, vecs = np.linalg.eigh(cov)
    if vals[0] >= floor:
        return cov, False
    vals = np.maximum(vals, floor)
    return (vecs * vals) @ vecs.T, True


def _log_gauss(data: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Log N(x; mean, cov) for each row of data.

    d = 1 and d = 2 (the aggregate and per-line fits, the hot path) use
    closed forms; larger d goes through a Cholesky solve.
    """
    d = data.shape[1]
    if d == 1:
        v = cov[0, 0]
        dx = data[:, 0] - mean[0]
        return -0.5 * (_LOG2PI + np.log(v)) - 0.5 * dx * dx / v
    if d == 2:
        a, b, c = cov[0, 0], cov[0, 1], cov[1, 1]
        det = a * c - b * b
        dx = data[:, 0] - mean[0]
        dy = data[:, 1] - mean[1]
        quad = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det
        return -_LOG2PI - 0.5 * np.log(det) - 0.5 * quad
    chol = np.linalg.cholesky(cov)
    dev = solve_triangular(chol, (data - mean).T, lower=True)
    return -0.5 * d * _LOG2PI - np.log(np.diag(chol)).sum() - 0.5 * np.einsum("ij,ij->j", dev, dev)


def _logsumexp0(comp: np.ndarray) -> np.ndarray:
    """logsumexp over axis 0; components are finite (floored covariances)."""
    m = comp.max(axis=0)
    return m + np.log(np.exp(comp - m).sum(axis=0))


def _mixture_logpdf(model: GmmModel, data: np.ndarray) -> np.ndarray:
    comp = np.stack([
        np.log(max(w, 1e-300)) + _log_gauss(data, m, c)
        for w, m, c in zip(model.weights, model.means, model.covariances)
    ])
    return _logsumexp0(comp)


def gmm_loglik(model: GmmModel, data: np.ndarray) -> float:
    """Total log-likelihood sum_n ln sum_k w_k N(x_n; mean_k, cov_k)."""
    data = np.asarray(data, dtype=float)
    data = data[:, None] if data.ndim == 1 else data
    if data.shape[1] != model.dim:
        raise ValueError(f"data has {data.shape[1]} columns, model is {model.dim}-d")
    return float(_mixture_logpdf(model, data).sum())


def gmm_cdf(model: GmmModel, x) -> np.ndarray | float:
    """Mixture CDF of a 1-d model: sum_k w_k Phi((x - m_k)/sigma_k)."""
    if model.dim != 1:
        raise ValueError("gmm_cdf requires a 1-d model")
    x = np.asarray(x, dtype=float)
    sig = model.sigmas
    z = (x[..., None] - model.means[:, 0]) / sig
    out = (model.weights * ndtr(z)).sum(axis=-1)
    return float(out) if out.ndim == 0 else out


def gmm_moments(model: GmmModel) -> tuple[float, float]:
    """Mean and variance of a 1-d mixture (law of total variance)."""
    if model.dim != 1:
        raise ValueError("gmm_moments requires a 1-d model")
    m = model.means[:, 0]
    v = model.covariances[:, 0, 0]
    mean = float(model.weights @ m)
    var = float(model.weights @ (v + m * m) - mean * mean)
    return mean, var


def fit_mle_gaussian(data: np.ndarray) -> GmmModel:
    """Closed-form Gaussian MLE: sample mean and biased (1/N) covariance."""
    data = np.asarray(data, dtype=float)
    data = data[:, None] if data.ndim == 1 else data
    n, d = data.shape
    if n < 2:
        raise ValueError("need at least 2 samples")
    mean = data.mean(axis=0)
    dev = data - mean
    cov = dev.T @ dev / n
    cov, _ = _floor_cov(cov, _floor_value(data))
    return GmmModel(weights=np.ones(1), means=mean[None, :], covariances=cov[None, :, :])


# ---------------------------------------------------------------------------
# EM fitter
# ---------------------------------------------------------------------------


def _kmeanspp_centers(data: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ D^2 seeding; returns k rows of data as initial centers."""
    n = data.shape[0]
    centers = [data[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min([((data - c) ** 2).sum(axis=1) for c in centers], axis=0)
        total = d2.sum()
        if total <= 0:
            centers.append(data[rng.integers(n)])
            continue
        centers.append(data[rng.choice(n, p=d2 / total)])
    return np.array(centers)


def _mstep(data, resp, structure, zero_mean, floor):
    """Maximization step; returns (weights, means, covs, base, scales, degenerate)."""
    n, d = data.shape
    k = resp.shape[1]
    nk = resp.sum(axis=0)
    degenerate = bool((nk < d + 1).any())
    nk_safe = np.maximum(nk, 1e-12)
    weights = np.maximum(nk / n, 1e-12)
    weights = weights / weights.sum()
    if zero_mean:
        means = np.zeros((k, d))
    else:
        means = (resp.T @ data) / nk_safe[:, None]
    scatters = np.empty((k, d, d))
    for j in range(k):
        dev = (data - means[j]) * np.sqrt(resp[:, j])[:, None]
        scatters[j] = dev.T @ dev

    base = scales = None
    if structure == "full":
        covs = np.empty((k, d, d))
        for j in range(k):
            covs[j], hit = _floor_cov(scatters[j] / nk_safe[j], floor)
            degenerate |= hit
    elif structure == "spherical":
        covs = np.empty((k, d, d))
        for j in range(k):
            var = max(np.trace(scatters[j]) / (d * nk_safe[j]), floor)
            covs[j] = var * np.eye(d)
    else:  # tied-scaled: C_k = tau_k^2 C_0, alternating updates
        scales = np.ones(k)
        base = scatters.sum(axis=0) / n
        ridge = floor * np.eye(d)
        for _ in range(4):
            bb = base + ridge
            if d == 2:
                det = bb[0, 0] * bb[1, 1] - bb[0, 1] * bb[1, 0]
                binv_tr = (bb[1, 1] * scatters[:, 0, 0] - 2.0 * bb[0, 1] * scatters[:, 0, 1]
                           + bb[0, 0] * scatters[:, 1, 1]) / det
            else:
                binv_tr = np.array([
                    np.trace(np.linalg.solve(bb, scatters[j])) for j in range(k)
                ])
            scales = np.maximum(binv_tr / (d * nk_safe), 1e-12)
            base = np.einsum("k,kij->ij", 1.0 / scales, scatters) / n
        # identification: responsibility-weighted mean of tau^2 equals 1
        c = float(weights @ scales)
        scales = scales / c
        base, hit = _floor_cov(base * c, floor)
        degenerate |= hit
        covs = scales[:, None, None] * base[None, :, :]
    return weights, means, covs, base, scales, degenerate


def _estep_comp(data, weights, means, covs, structure):
    """K x N matrix of log w_k + log N(x; mean_k, cov_k).

    Spherical models take one GEMM for all components; everything else is
    evaluated per component.
    """
    d = data.shape[1]
    if structure == "spherical" and d > 2:
        sig2 = covs[:, 0, 0]
        sq = ((data**2).sum(axis=1)[None, :] - 2.0 * (means @ data.T)
              + (means**2).sum(axis=1)[:, None])
        return (np.log(weights) - 0.5 * d * (_LOG2PI + np.log(sig2)))[:, None] \
            - 0.5 * sq / sig2[:, None]
    return np.stack([
        np.log(weights[j]) + _log_gauss(data, means[j], covs[j])
        for j in range(weights.size)
    ])


def _em_single(data, k, structure, rng, zero_mean, max_iter, tol, floor):
    n, d = data.shape
    centers = np.zeros((k, d)) if zero_mean and k == 1 else _kmeanspp_centers(data, k, rng)
    d2 = ((data[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    resp = np.zeros((n, k))
    resp[np.arange(n), d2.argmin(axis=1)] = 1.0

    weights, means, covs, base, scales, degenerate = _mstep(data, resp, structure, zero_mean, floor)
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        comp = _estep_comp(data, weights, means, covs, structure)
        lse = _logsumexp0(comp)
        ll = float(lse.sum())
        trace.append(ll)
        if len(trace) > 1:
            prev = trace[-2]
            if abs(ll - prev) < tol * (abs(prev) + 1e-12):
                converged = True
                break
        resp = np.exp(comp - lse).T
        weights, means, covs, base, scales, deg = _mstep(data, resp, structure, zero_mean, floor)
        degenerate |= deg
    model = GmmModel(weights=weights, means=means, covariances=covs, structure=structure,
                     zero_mean=zero_mean, base=base, scales=scales)
    return model, trace, it, converged, degenerate


def _n_free_params(k: int, d: int, structure: str, zero_mean: bool) -> int:
    p = (k - 1) + (0 if zero_mean else k * d)
    if structure == "full":
        p += k * d * (d + 1) // 2
    elif structure == "spherical":
        p += k
    else:
        p += d * (d + 1) // 2 + (k - 1)
    return p


def _split_constant_columns(data: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Indices of varying columns, the reduced data, and per-column constants."""
    const_vals = data[0].copy()
    varying = np.flatnonzero((data != const_vals[None, :]).any(axis=0))
    return varying, data[:, varying], const_vals


def _embed_model(model: GmmModel, varying, const_vals, d_full, floor) -> GmmModel:
    """Lift a model fitted on the varying columns back to the full dimension.

    Constant columns get their observed value as mean and a floor-scale
    variance, with zero cross-covariance; this matches what full-space EM
    with eigenvalue flooring would produce. Spherical fits are re-tagged
    tied-scaled (their special case) so that the per-component
    proportionality survives the embedding exactly.
    """
    k = model.k
    means = np.tile(const_vals, (k, 1))
    means[:, varying] = model.means
    structure = model.structure
    base = scales = None
    if model.structure == "tied-scaled" or (model.structure == "spherical" and varying.size):
        if model.structure == "tied-scaled":
            act_base, scales = model.base, model.scales
        else:
            structure = "tied-scaled"
            sig2 = model.covariances[:, 0, 0].copy()
            c = float(model.weights @ sig2)
            scales = sig2 / c
            act_base = c * np.eye(varying.size)
        base = np.zeros((d_full, d_full))
        base[np.diag_indices(d_full)] = floor
        base[np.ix_(varying, varying)] = act_base
        covs = scales[:, None, None] * base[None, :, :]
    else:
        covs = np.zeros((k, d_full, d_full))
        for j in range(k):
            covs[j][np.diag_indices(d_full)] = floor
            covs[j][np.ix_(varying, varying)] = model.covariances[j]
    return GmmModel(weights=model.weights, means=means, covariances=covs,
                    structure=structure, zero_mean=model.zero_mean,
                    base=base, scales=scales)


def fit_gmm_em(
    data: np.ndarray,
    k: int,
    structure: str = "full",
    restarts: int = 10,
    seed: int = 0,
    zero_mean: bool = False,
    max_iter: int = 500,
    tol: float = 1e-7,
) -> tuple[GmmModel, FitReport]:
    """Multi-start EM fit of a K-component mixture; best restart by BIC.

    Initialization is k-means++-style seeding of one-hot responsibilities,
    one independent RNG stream per restart. ``zero_mean`` pins every
    component mean at exactly 0 and skips the mean M-step.
    """
    data = np.asarray(data, dtype=float)
    data = data[:, None] if data.ndim == 1 else data
    n, d_full = data.shape
    if k < 1:
        raise ValueError("k must be >= 1")
    if n <= k:
        raise ValueError(f"need more than {k} samples to fit {k} components")
    if structure not in STRUCTURES:
        raise ValueError(f"unknown covariance structure {structure!r}")
    floor = _floor_value(data)

    varying, reduced, const_vals = _split_constant_columns(data)
    if zero_mean and (np.abs(const_vals) > 0)[np.setdiff1d(np.arange(d_full), varying)].any():
        # a nonzero constant column cannot have mean 0; fall back to full-space EM
        varying, reduced, const_vals = np.arange(d_full), data, np.zeros(d_full)

    if reduced.shape[1] == 0:
        # all columns constant: point mass, every component identical
        model = _embed_model(
            GmmModel(weights=np.full(k, 1.0 / k), means=np.zeros((k, 0)),
                     covariances=np.zeros((k, 0, 0)), structure=structure,
                     zero_mean=zero_mean,
                     base=np.zeros((0, 0)) if structure == "tied-scaled" else None,
                     scales=np.ones(k) if structure == "tied-scaled" else None),
            varying, const_vals, d_full, floor)
        ll = gmm_loglik(model, data)
        bic = -2.0 * ll + _n_free_params(k, d_full, structure, zero_mean) * np.log(n)
        return model, FitReport(ll, float(bic), 0, restarts, True, zero_mean,
                                degenerate=True, trace=(ll,))

    # constant columns contribute a fixed per-sample term; exact, see _embed_model
    const_shift = (varying.size - d_full) * 0.5 * (_LOG2PI + np.log(floor)) * n

    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(max(restarts, 1))]
    best = None
    for rng in streams:
        model_r, trace, iters, conv, deg = _em_single(
            reduced, k, structure, rng, zero_mean, max_iter, tol, floor)
        ll = trace[-1] + const_shift
        bic = -2.0 * ll + _n_free_params(k, d_full, structure, zero_mean) * np.log(n)
        if best is None or bic < best[1]:
            best = (model_r, bic, ll, trace, iters, conv, deg)
    model_r, bic, ll, trace, iters, conv, deg = best
    model = _embed_model(model_r, varying, const_vals, d_full, floor) \
        if varying.size < d_full else model_r
    report = FitReport(
        log_likelihood=ll, bic=float(bic), iterations=iters,
        restarts_used=max(restarts, 1), converged=conv, zero_mean=zero_mean,
        degenerate=deg, trace=tuple(t + const_shift for t in trace))
    return model, report


# ---------------------------------------------------------------------------
# Fit-then-transform parameter maps
# ---------------------------------------------------------------------------


def transform_classical(model: GmmModel, ptdf: PtdfMatrix | None = None,
                        target: int | str = "omega") -> GmmModel:
    """Linearly transform a fitted |B|-d mixture into the constraint space.

    ``target="omega"`` gives the 1-d aggregate model (weights unchanged,
    means 1'mu_k, variances 1'Sigma_k 1). An integer target is a line
    position and gives the 2-d model with map A = [1'; h_l'], i.e. means
    A mu_k and covariances A Sigma_k A'. Tied-scaled structure is
    preserved (base A C_0 A', same scales); spherical sources become
    tied-scaled with base A A'.
    """
    d = model.dim
    if target == "omega":
        a_map = np.ones((1, d))
    else:
        if ptdf is None:
            raise ValueError("line transforms need the PTDF matrix")
        h = ptdf.H[int(target)]
        if h.shape[0] != d:
            raise ValueError(f"model dimension {d} does not match PTDF columns {h.shape[0]}")
        a_map = np.vstack([np.ones(d), h])

    means = model.means @ a_map.T
    covs = np.einsum("ij,kjl,ml->kim", a_map, model.covariances, a_map)
    base = scales = None
    structure = "full"
    if target != "omega":
        if model.structure == "tied-scaled":
            structure = "tied-scaled"
            base = a_map @ model.base @ a_map.T
            scales = model.scales.copy()
        elif model.structure == "spherical":
            # spherical C_k = s_k I maps to s_k (A A'): tied-scaled in 2-d
            structure = "tied-scaled"
            base = a_map @ a_map.T
            scales = model.covariances[:, 0, 0].copy()
            c = float(model.weights @ scales)
            scales = scales / c
            base = base * c
            covs = scales[:, None, None] * base[None, :, :]
    return GmmModel(weights=model.weights.copy(), means=means, covariances=covs,
                    structure=structure, zero_mean=model.zero_mean, base=base, scales=scales)
