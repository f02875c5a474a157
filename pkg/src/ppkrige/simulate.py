"""Replicated log-Gaussian Cox processes on site grids and the Monte Carlo study.

Each replicate draws a common factor ``W`` and site noises ``E_j`` and sets
``Lambda(t, s_j) = exp(nu(t) + U_j phi(t))`` with ``U_j = g(s_j) W + E_j``.
Events are sampled exactly by thinning a homogeneous process whose rate is
the analytic supremum of the intensity.

Random streams are keyed by ``(seed, grid, model, n, mc_rep, replicate)``
through ``numpy.random.SeedSequence`` spawn keys, so a dataset never depends
on which other cells or replicates are generated, or in which order.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .basis import (TimeDomain, gram_matrix, make_spatial_basis, make_time_basis, roughness_matrix,
                    spatial_gram)
from .data import PointPattern, SiteSet
from .krige import KrigingError, solve_kriging
from .moments import estimate_moments
from .spatial import (CovarianceSmoother, SingularSystemError, default_xi_grid, design_matrix,
                      fit_mean_surface, gcv_mean, predict_cov_at, predict_mean_at)

GRIDS: Dict[str, Tuple[int, float]] = {"i": (4, 0.5), "ii": (4, 0.2), "iii": (8, 0.5)}
_GRID_CODE = {"i": 1, "ii": 2, "iii": 3}


def grid_sites(name: str) -> SiteSet:
    """Uniform ``m x m`` grid on ``[-h, h]^2``; sites ordered by x, then y."""
    if name not in GRIDS:
        raise ValueError(f"unknown grid {name!r}; choose from {sorted(GRIDS)}")
    m, h = GRIDS[name]
    ax = np.linspace(-h, h, m)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    coords = np.column_stack([X.ravel(), Y.ravel()])
    ids = tuple(f"s{j + 1:02d}" for j in range(m * m))
    return SiteSet(ids, coords, region=(-h, h, -h, h))


def g_model1(s) -> np.ndarray:
    return 1.0 / (1.0 + np.linalg.norm(np.atleast_2d(s), axis=1))


def g_model2(s) -> np.ndarray:
    return np.ones(np.atleast_2d(s).shape[0])


MODELS: Dict[int, Callable] = {1: g_model1, 2: g_model2}


@dataclass(frozen=True)
class LgcpParams:
    """``nu(t) = sin(pi t) + log(base_rate)``, ``phi(t) = phi_scale sin(pi t)`` on [0, 1]."""

    var_W: float = 0.072
    var_E: float = 0.018
    base_rate: float = 20.0
    phi_scale: float = math.sqrt(2.0)

    def __post_init__(self):
        if self.var_W < 0 or self.var_E < 0:
            raise ValueError("latent variances must be non-negative")
        if self.base_rate <= 0 or self.phi_scale < 0:
            raise ValueError("base_rate must be positive and phi_scale non-negative")

    @property
    def domain(self) -> TimeDomain:
        return TimeDomain(0.0, 1.0)

    def nu(self, t):
        return np.sin(np.pi * np.asarray(t, dtype=float)) + math.log(self.base_rate)

    def phi(self, t):
        return self.phi_scale * np.sin(np.pi * np.asarray(t, dtype=float))

    def intensity(self, t, U):
        """``exp(nu(t) + U phi(t))`` broadcast over ``t`` and ``U``."""
        return np.exp(self.nu(t) + np.asarray(U) * self.phi(t))

    def bound(self, U):
        # nu and phi both peak at t = 1/2 and phi >= 0
        return np.exp(self.nu(0.5) + np.maximum(np.asarray(U) * self.phi(0.5), 0.0))


@dataclass(frozen=True)
class SimulationScenario:
    grid: Union[str, SiteSet] = "ii"
    model: int = 2
    n: int = 50
    mc_reps: int = 200
    seed: int = 20240601
    target: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {sorted(MODELS)}")
        if self.n < 1 or self.mc_reps < 1:
            raise ValueError("n and mc_reps must be positive")

    @property
    def sites(self) -> SiteSet:
        return self.grid if isinstance(self.grid, SiteSet) else grid_sites(self.grid)

    @property
    def g(self) -> Callable:
        return MODELS[self.model]

    def key(self) -> tuple:
        code = _GRID_CODE.get(self.grid, 0) if isinstance(self.grid, str) else 0
        return (code, self.model, self.n)


def replicate_rng(seed: int, key: Sequence[int]) -> np.random.Generator:
    """Independent stream for one replicate, a pure function of ``(seed, key)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=tuple(key))))


@dataclass
class SimulatedData:
    pattern: PointPattern
    U: np.ndarray                 # (n, d) latent scores


def simulate_replicate(rng: np.random.Generator, gvals: np.ndarray, params: LgcpParams):
    """One replicate: latent ``U`` (d,) and per-site sorted event times."""
    d = gvals.shape[0]
    W = rng.normal(0.0, math.sqrt(params.var_W))
    E = rng.normal(0.0, math.sqrt(params.var_E), size=d)
    U = gvals * W + E
    lam_max = params.bound(U)
    L = params.domain.length
    counts = rng.poisson(lam_max * L)
    site = np.repeat(np.arange(d), counts)
    t = params.domain.a + L * rng.random(site.size)
    keep = rng.random(site.size) * lam_max[site] < params.intensity(t, U[site])
    t, site = t[keep], site[keep]
    order = np.lexsort((t, site))
    t, site = t[order], site[order]
    cuts = np.searchsorted(site, np.arange(1, d))
    return U, np.split(t, cuts)


def simulate_dataset(scenario: SimulationScenario, params: LgcpParams = LgcpParams(),
                     mc_rep: int = 0) -> SimulatedData:
    """``scenario.n`` replicates for Monte Carlo dataset ``mc_rep``."""
    sites = scenario.sites
    gvals = scenario.g(sites.coords)
    base = scenario.key() + (mc_rep,)
    events, Us = [], []
    for i in range(scenario.n):
        U, ev = simulate_replicate(replicate_rng(scenario.seed, base + (i,)), gvals, params)
        Us.append(U)
        events.append(ev)
    pattern = PointPattern(params.domain, sites, tuple(events))
    return SimulatedData(pattern, np.array(Us))


# -- exact moments ---------------------------------------------------------------

@dataclass
class TrueMoments:
    """Closed-form lognormal moments and their time integrals."""

    params: LgcpParams
    g_sites: np.ndarray
    g0: float
    nodes: np.ndarray
    weights: np.ndarray
    M: np.ndarray
    Sigma: np.ndarray
    sigma0: np.ndarray
    m0: np.ndarray
    sigma00: float
    m00: float
    spe0: float = float("nan")
    c0: Optional[np.ndarray] = None

    def var_U(self) -> np.ndarray:
        return self.g_sites ** 2 * self.params.var_W + self.params.var_E

    def cov_U(self) -> np.ndarray:
        C = np.outer(self.g_sites, self.g_sites) * self.params.var_W
        return C + np.eye(self.g_sites.size) * self.params.var_E

    def mu(self, t) -> np.ndarray:
        """``mu(t, s_j)``, shape ``t.shape + (d,)``."""
        t = np.asarray(t, dtype=float)[..., None]
        return np.exp(self.params.nu(t) + self.params.phi(t) ** 2 * self.var_U() / 2)

    def second_moment(self, j, k, t, s) -> np.ndarray:
        """``E{Lambda(t, s_j) Lambda(s, s_k)}`` on the grid ``t x s``."""
        t = np.asarray(t, dtype=float)[:, None]
        s = np.asarray(s, dtype=float)[None, :]
        mj = self.mu(t)[..., j]
        mk = self.mu(s)[..., k]
        return mj * mk * np.exp(self.params.phi(t) * self.params.phi(s) * self.cov_U()[j, k])

    def covariance(self, j, k, t, s) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        s = np.asarray(s, dtype=float)
        return self.second_moment(j, k, t, s) - self.mu(t)[:, j][:, None] * self.mu(s)[:, k][None, :]

    def full_spe(self, c) -> float:
        """``E ||Lambda(., s0) - sum_j c_j Lambda(., s_j)||^2`` (variance plus squared bias)."""
        c = np.asarray(c, dtype=float)
        var = c @ self.Sigma @ c - 2.0 * c @ self.sigma0 + self.sigma00
        bias = c @ self.M @ c - 2.0 * c @ self.m0 + self.m00
        return float(var + bias)


def true_moments(scenario: SimulationScenario, params: LgcpParams = LgcpParams(), nodes: int = 128,
                 threshold_M: float = 0.9) -> TrueMoments:
    """Exact moments at the sites and the target; ``spe0`` from kriging with them.

    The reference weights use the true ``M`` truncated at ``threshold_M`` (the
    same rule applied to estimates) and the untruncated true ``Sigma``.
    """
    sites = scenario.sites
    gs = scenario.g(sites.coords)
    g0 = float(scenario.g(np.asarray(scenario.target, dtype=float))[0])
    x, w = np.polynomial.legendre.leggauss(nodes)
    a, b = params.domain.a, params.domain.b
    t = 0.5 * (b - a) * x + 0.5 * (a + b)
    w = 0.5 * (b - a) * w
    nu, ph = params.nu(t), params.phi(t)
    vU = gs ** 2 * params.var_W + params.var_E
    v0 = g0 ** 2 * params.var_W + params.var_E
    mu = np.exp(nu[:, None] + ph[:, None] ** 2 * vU / 2)                   # (T, d)
    mu0 = np.exp(nu + ph ** 2 * v0 / 2)
    cU = np.outer(gs, gs) * params.var_W + np.eye(gs.size) * params.var_E
    c0 = gs * g0 * params.var_W                                            # target has its own nugget
    M = (mu * w[:, None]).T @ mu
    m0 = (mu * w[:, None]).T @ mu0
    # cov at equal times: mu_j mu_k (exp(phi^2 cov U) - 1)
    ph2 = ph ** 2
    Sigma = np.einsum("t,tj,tk,tjk->jk", w, mu, mu, np.expm1(ph2[:, None, None] * cU[None]))
    sigma0 = np.einsum("t,tj,t,tj->j", w, mu, mu0, np.expm1(ph2[:, None] * c0[None]))
    sigma00 = float(np.sum(w * mu0 ** 2 * np.expm1(ph2 * v0)))
    m00 = float(np.sum(w * mu0 ** 2))
    tm = TrueMoments(params, gs, g0, t, w, 0.5 * (M + M.T), 0.5 * (Sigma + Sigma.T),
                     sigma0, m0, sigma00, m00)
    if np.any(tm.Sigma):
        sol = solve_kriging(tm.Sigma, tm.M, sigma0, m0, threshold_M, 1.0,
                            sigma00=sigma00, rtol_M=1e-10, rtol_Sigma=1e-12)
        tm.c0 = sol.c_star
        tm.spe0 = tm.full_spe(sol.c_star)
    return tm


# -- error measures --------------------------------------------------------------

def vech(S) -> np.ndarray:
    """Lower triangle (diagonal included), row by row."""
    S = np.asarray(S)
    i, j = np.tril_indices(S.shape[-1])
    return S[..., i, j]


@dataclass(frozen=True)
class ErrorMetrics:
    bias: float
    sd: float
    rmse: float


def error_metrics(estimates, truth) -> ErrorMetrics:
    """Relative bias, standard deviation and rmse of Monte Carlo estimates.

    ``estimates`` has one row per Monte Carlo replicate (already vectorized);
    expectations are plain Monte Carlo averages, so ``bias^2 + sd^2 = rmse^2``.
    """
    X = np.asarray(estimates, dtype=float)
    X = X.reshape(X.shape[0], -1)
    v = np.asarray(truth, dtype=float).ravel()
    if X.shape[0] < 2:
        raise ValueError("need at least two Monte Carlo replicates")
    if X.shape[1] != v.size:
        raise ValueError(f"estimate length {X.shape[1]} differs from truth length {v.size}")
    scale = float(np.linalg.norm(v))
    if scale == 0:
        raise ValueError("true value has zero norm; relative errors undefined")
    mean = X.mean(axis=0)
    bias = np.linalg.norm(mean - v)
    sd = math.sqrt(float(((X - mean) ** 2).sum(axis=1).mean()))
    rmse = math.sqrt(float(((X - v) ** 2).sum(axis=1).mean()))
    return ErrorMetrics(bias / scale, sd / scale, rmse / scale)


# -- study -------------------------------------------------------------------------

QUANTITIES = ("M", "m0", "Sigma", "sigma0", "SPE")


@dataclass
class StudyConfig:
    grids: Tuple[str, ...] = ("ii",)
    models: Tuple[int, ...] = (2,)
    ns: Tuple[int, ...] = (50, 200)
    mc_reps: int = 200
    seed: int = 20240601
    threshold_M: float = 0.9
    threshold_Sigma: float = 0.9
    time_order: int = 4
    time_knots: int = 5
    space_order: int = 4
    space_knots: int = 6
    xi_grid_B: np.ndarray = field(default_factory=default_xi_grid)
    xi_grid_C: np.ndarray = field(default_factory=default_xi_grid)
    output: Optional[str] = None

    def __post_init__(self):
        for th in (self.threshold_M, self.threshold_Sigma):
            if not 0.0 < th <= 1.0:
                raise ValueError(f"thresholds must lie in (0, 1], got {th}")
        if self.mc_reps < 2:
            raise ValueError("the study needs at least two Monte Carlo replicates")
        for gname in self.grids:
            if gname not in GRIDS:
                raise ValueError(f"unknown grid {gname!r}")


@dataclass
class RepOutcome:
    M: np.ndarray
    m0: np.ndarray
    Sigma: np.ndarray
    sigma0: np.ndarray
    spe: float
    c: np.ndarray
    xi_B: float
    xi_C: float


class Pipeline:
    """Moments, GCV-tuned surfaces and kriging at the target for one site layout."""

    def __init__(self, sites: SiteSet, target, cfg: StudyConfig, domain: TimeDomain):
        self.sites = sites
        self.target = np.asarray(target, dtype=float)
        self.cfg = cfg
        self.tbasis = make_time_basis(domain, cfg.time_order, cfg.time_knots)
        self.G = gram_matrix(self.tbasis)
        self.sb = make_spatial_basis(sites.region if sites.region is not None else sites.bounding_box(),
                                     cfg.space_order, cfg.space_knots)
        self.J = roughness_matrix(self.sb)
        self.Gamma = design_matrix(self.sb, sites.coords)
        self.smoother = CovarianceSmoother(self.Gamma, self.J, spatial_gram(self.sb))

    def run(self, pattern: PointPattern) -> RepOutcome:
        cfg = self.cfg
        est = estimate_moments(pattern, self.tbasis)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            gb = gcv_mean(est.A, self.Gamma, self.J, cfg.xi_grid_B)
            gc = self.smoother.gcv(est.Sigma, cfg.xi_grid_C)
        B = fit_mean_surface(est.A, self.Gamma, self.J, gb.xi)
        C = self.smoother.fit(est.Sigma, gc.xi)
        _, m0 = predict_mean_at(B, est.G, est.A, self.sb, self.target)
        sigma0, sigma00 = predict_cov_at(C, self.Gamma, self.sb, self.target)
        sol = solve_kriging(est.Sigma, est.M, sigma0, m0, cfg.threshold_M, cfg.threshold_Sigma, sigma00)
        return RepOutcome(est.M, m0, est.Sigma, sigma0, float("nan"), sol.c_star, gb.xi, gc.xi)


@dataclass
class CellResult:
    grid: str
    model: int
    n: int
    metrics: Dict[str, ErrorMetrics]
    spe_hat: np.ndarray
    spe0: float
    failures: int
    error: Optional[str] = None


def run_cell(grid: str, model: int, n: int, cfg: StudyConfig, params: LgcpParams = LgcpParams(),
             progress: Optional[Callable[[int], None]] = None) -> CellResult:
    scen = SimulationScenario(grid, model, n, cfg.mc_reps, cfg.seed)
    truth = true_moments(scen, params, threshold_M=cfg.threshold_M)
    pipe = Pipeline(scen.sites, scen.target, cfg, params.domain)
    rows = {q: [] for q in QUANTITIES}
    failures = 0
    for r in range(cfg.mc_reps):
        data = simulate_dataset(scen, params, r)
        try:
            out = pipe.run(data.pattern)
        except (KrigingError, SingularSystemError, np.linalg.LinAlgError):
            failures += 1
            continue
        rows["M"].append(vech(out.M))
        rows["m0"].append(out.m0)
        rows["Sigma"].append(vech(out.Sigma))
        rows["sigma0"].append(out.sigma0)
        rows["SPE"].append(truth.full_spe(out.c))
        if progress is not None:
            progress(r)
    if len(rows["SPE"]) < 2:
        return CellResult(grid, model, n, {}, np.array(rows["SPE"]), truth.spe0, failures,
                          error="fewer than two successful replicates")
    targets = {"M": vech(truth.M), "m0": truth.m0, "Sigma": vech(truth.Sigma),
               "sigma0": truth.sigma0, "SPE": np.array([truth.spe0])}
    metrics = {q: error_metrics(np.array(rows[q]).reshape(len(rows[q]), -1), targets[q])
               for q in QUANTITIES}
    return CellResult(grid, model, n, metrics, np.array(rows["SPE"]), truth.spe0, failures)


def run_study(cfg: StudyConfig, params: LgcpParams = LgcpParams()) -> List[CellResult]:
    """Every (grid, model, n) cell; a failing cell is recorded and the study goes on."""
    cells = []
    for grid in cfg.grids:
        for n in cfg.ns:
            for model in cfg.models:
                try:
                    cells.append(run_cell(grid, model, n, cfg, params))
                except Exception as exc:   # recorded per cell, study continues
                    cells.append(CellResult(grid, model, n, {}, np.empty(0), float("nan"), cfg.mc_reps,
                                            error=f"{type(exc).__name__}: {exc}"))
    if cfg.output:
        write_study_table(cells, cfg.output)
    return cells


def study_table(cells: Sequence[CellResult], stat: str = "rmse") -> Tuple[List[str], List[list]]:
    """Rows ``(grid, n)``; columns per model for M, m0, Sigma, sigma0, SPE."""
    models = sorted({c.model for c in cells})
    header = ["grid", "n"] + [f"model{m}_{q}" for m in models for q in QUANTITIES] + ["failures"]
    keyed = {(c.grid, c.n, c.model): c for c in cells}
    rows = []
    seen = []
    for c in cells:
        if (c.grid, c.n) not in seen:
            seen.append((c.grid, c.n))
    for grid, n in seen:
        row: list = [grid, n]
        fails = 0
        for m in models:
            cell = keyed.get((grid, n, m))
            for q in QUANTITIES:
                if cell is None or q not in cell.metrics:
                    row.append("NA")
                else:
                    row.append(f"{getattr(cell.metrics[q], stat):.4f}")
            fails += 0 if cell is None else cell.failures
        row.append(fails)
        rows.append(row)
    return header, rows


def write_study_table(cells: Sequence[CellResult], path, stat: str = "rmse") -> None:
    header, rows = study_table(cells, stat)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
