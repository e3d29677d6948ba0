"""Empirical verification harness for FMD comparison machinery.

Each check fits the smallest constant that makes an inequality hold on a
deterministic sample of balls, levels, or cells, and reports it together
with hypothesis flags.  A finite, stable fitted constant is evidence that
the inequality scales as claimed on the configured instance; a diverging
one localizes the failure.

Conventions.  Surface balls Omega_r(nu) = B_r(nu) & Omega are averaged with
the count of domain cells they contain; plain-ball averages use the lattice
ball count (zero extension).  Distribution values are cell counts times the
cell area, and all sampling is driven by an explicit seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .distribution import LevelGrid
from .funcspaces import NormSpec, certify_young, evaluate_norm
from .grid import (
    DomainGrid,
    ScalarField,
    VectorField,
    ball_average,
    ball_cells,
    gradient,
    mean,
)
from .maximal import MaximalResult, RadiusSet, frac_maximal
from .pde import OperatorSpec, ProblemSpec, SolveReport, solve

_N = 2  # lattice dimension

__all__ = [
    "RangeRuleError",
    "ComparisonPair",
    "BuilderResult",
    "make_p1_pair",
    "make_dop_pair",
    "sample_centers",
    "dyadic_radii",
    "QuasiTriangleReport",
    "check_quasi_triangle",
    "ReverseHolderReport",
    "check_reverse_holder",
    "reverse_holder_sweep",
    "LocalComparisonReport",
    "check_local_comparison",
    "GlobalComparisonReport",
    "check_global_comparison",
    "LemmaA1Report",
    "check_lemma_A1",
    "LemmaA2Report",
    "check_lemma_A2",
    "DensityReport",
    "density_check",
    "GoodLambdaReport",
    "goodlambda_scan",
    "CoveringReport",
    "covering_check",
    "NormComparisonReport",
    "norm_comparison_report",
]


class RangeRuleError(ValueError):
    """A norm comparison was requested outside its admissible range."""

    def __init__(self, rule: str, message: str):
        super().__init__(f"[{rule}] {message}")
        self.rule = rule


@dataclass(frozen=True)
class BuilderResult:
    """Reference fields attached to one ball: phi, psi and the raw solves."""

    phi: ScalarField
    psi: ScalarField
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ComparisonPair:
    """A data field G, a control field F, and a reference-solution builder.

    builder(center, r, mode) solves the reference problem attached to the
    ball B_2r(center) (mode "A2_1": original coefficient; mode "A2_2": the
    ball-averaged frozen coefficient on B_{3r/2}, warm started from the
    first reference) and returns phi and psi fields for the comparison.
    """

    G: ScalarField
    F: ScalarField
    builder: Callable[..., BuilderResult] | None
    c_tilde: float
    gamma: float | None = None
    meta: dict = field(default_factory=dict)


def sample_centers(
    grid: DomainGrid, n_interior: int, n_boundary: int, seed: int = 1234
) -> list[tuple[float, float]]:
    """Deterministic sample of interior and boundary cell centers."""
    rng = np.random.default_rng(seed)
    out: list[tuple[float, float]] = []
    for sel, n in ((grid.interior, n_interior), (grid.boundary, n_boundary)):
        ii, jj = np.nonzero(sel)
        if ii.size == 0 or n <= 0:
            continue
        take = min(n, ii.size)
        pick = rng.choice(ii.size, size=take, replace=False)
        out.extend((float(grid.xs[i]), float(grid.ys[j]))
                   for i, j in zip(ii[pick], jj[pick]))
    return out


def dyadic_radii(grid: DomainGrid, r0: float | None = None) -> list[float]:
    """Radii 2h, 4h, 8h, ... up to half the reference radius r0."""
    if r0 is None:
        r0 = 0.5 * grid.diameter()
    out = []
    r = 2 * grid.h
    while r <= 0.5 * r0:
        out.append(r)
        r *= 2
    return out or [2 * grid.h]


def _power_field(grid, arr: np.ndarray) -> ScalarField:
    vals = np.where(grid.mask, arr, 0.0)
    return ScalarField(grid, vals)


def _solve_on_ball(
    op: OperatorSpec,
    grid: DomainGrid,
    trace: ScalarField,
    center: tuple[float, float],
    radius: float,
) -> ScalarField:
    """Homogeneous Dirichlet reference solve on a ball, merged into the trace."""
    region = ball_cells(grid, center, radius)
    zero_vec = VectorField(grid, np.zeros_like(trace.values), np.zeros_like(trace.values))
    sub = ProblemSpec(grid, op, "dirichlet", zero_vec, trace, region=region)
    act = sub.active_cells()
    ring = sub.dirichlet_ring()
    if not (act & ~ring).any():
        return trace
    rep = solve(sub)
    merged = trace.values.copy()
    merged[act] = rep.u.values[act]
    return ScalarField(grid, np.where(grid.mask, merged, 0.0))


def _make_pair(prob: ProblemSpec, rep: SolveReport, F_extra: np.ndarray) -> ComparisonPair:
    grid = prob.grid
    op = prob.op
    p, vs = op.p, op.varsigma
    u = rep.u
    gu = gradient(u)
    G = _power_field(grid, (vs + gu.magnitude().values) ** p)
    Fmag = np.hypot(prob.F.vx, prob.F.vy)
    F = _power_field(grid, Fmag**p + F_extra)

    def builder(center, r, mode="A2_1") -> BuilderResult:
        v = _solve_on_ball(op, grid, u, center, 2 * r)
        if mode == "A2_1":
            ref = v
        elif mode == "A2_2":
            b2 = ball_cells(grid, center, 2 * r) & grid.mask
            abar = float(op.coeff.values[b2].mean()) if b2.any() else 1.0
            frozen = op.with_coeff(
                ScalarField(grid, np.where(grid.mask, abar, 0.0))
            )
            ref = _solve_on_ball(frozen, grid, v, center, 1.5 * r)
        else:
            raise ValueError(f"unknown comparison mode {mode!r}")
        gr = gradient(ref)
        phi = _power_field(grid, (vs + gr.magnitude().values) ** p)
        diff = np.hypot(gu.vx - gr.vx, gu.vy - gr.vy)
        psi = _power_field(grid, diff**p)
        return BuilderResult(phi, psi, {"ref": ref, "mode": mode})

    return ComparisonPair(G, F, builder, c_tilde=2.0 ** (p - 1), meta={"p": p, "vs": vs})


def make_p1_pair(prob: ProblemSpec, rep: SolveReport) -> ComparisonPair:
    """Comparison pair for the Dirichlet problem: F collects data and datum."""
    gg = gradient(prob.g)
    extra = gg.magnitude().values ** prob.op.p
    pair = _make_pair(prob, rep, extra)
    pair.meta["kind"] = "dirichlet"
    return pair


def make_dop_pair(prob: ProblemSpec, rep: SolveReport) -> ComparisonPair:
    """Comparison pair for the double obstacle problem.

    F additionally carries the degeneracy level and the obstacle gradients;
    reference solves drop the obstacles and keep the solution as trace.
    """
    p = prob.op.p
    g1 = gradient(prob.f1).magnitude().values ** p
    g2 = gradient(prob.f2).magnitude().values ** p
    extra = prob.op.varsigma**p + g1 + g2
    pair = _make_pair(prob, rep, extra)
    pair.meta["kind"] = "double_obstacle"
    return pair


@dataclass(frozen=True)
class QuasiTriangleReport:
    c_tilde: float
    sup_ratios: tuple[float, float, float]  # G vs phi+psi, phi vs G+psi, psi vs G+phi
    passed: bool


def _dom_ratio(num: np.ndarray, den: np.ndarray) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(num == 0, 0.0, num / den)
    if np.isnan(r).any():
        return math.inf
    return float(r.max(initial=0.0))


def check_quasi_triangle(
    G: ScalarField, phi: ScalarField, psi: ScalarField,
    c_tilde: float, region: np.ndarray | None = None,
) -> QuasiTriangleReport:
    """Cellwise mutual domination of the comparison triplet with constant c~."""
    sel = G.grid.mask if region is None else (G.grid.mask & region)
    g, f, s = G.values[sel], phi.values[sel], psi.values[sel]
    r1 = _dom_ratio(g, c_tilde * (f + s))
    r2 = _dom_ratio(f, c_tilde * (g + s))
    r3 = _dom_ratio(s, c_tilde * (g + f))
    ok = max(r1, r2, r3) <= 1.0 + 1e-12
    return QuasiTriangleReport(c_tilde, (r1, r2, r3), ok)


@dataclass(frozen=True)
class ReverseHolderReport:
    gamma: float
    sup_ratio: float
    cap: float
    passed: bool
    rows: tuple[tuple[float, float, float, float, float, float], ...]
    # rows: (cx, cy, r, lhs, rhs, ratio)


def check_reverse_holder(
    source: ScalarField | Callable[[tuple[float, float], float], ScalarField],
    gamma: float,
    centers: Sequence[tuple[float, float]],
    radii: Sequence[float],
    cap: float = 10.0,
) -> ReverseHolderReport:
    """Self-improving integrability on surface balls.

    Fits (mean of phi^gamma over Omega_r)^{1/gamma} <= C * mean of phi over
    Omega_2r and reports the largest ratio; `source` is either a fixed field
    or a per-ball builder returning the field attached to that ball.
    """
    if gamma < 1:
        raise ValueError("reverse Holder exponent must be >= 1")
    rows = []
    sup = 0.0
    for c in centers:
        for r in radii:
            phi = source(c, r) if callable(source) else source
            grid = phi.grid
            b1 = ball_cells(grid, c, r) & grid.mask
            b2 = ball_cells(grid, c, 2 * r) & grid.mask
            if not b1.any() or not b2.any():
                continue
            lhs = float(np.mean(np.abs(phi.values[b1]) ** gamma)) ** (1.0 / gamma)
            rhs = float(np.mean(np.abs(phi.values[b2])))
            if lhs == 0:
                ratio = 0.0
            elif rhs == 0:
                ratio = math.inf
            else:
                ratio = lhs / rhs
            sup = max(sup, ratio)
            rows.append((c[0], c[1], r, lhs, rhs, ratio))
    return ReverseHolderReport(gamma, sup, cap, sup <= cap, tuple(rows))


def reverse_holder_sweep(
    source, gammas: Sequence[float],
    centers, radii, cap: float = 10.0,
) -> tuple[float | None, dict[float, float]]:
    """Largest sampled gamma whose sup-ratio stays under the cap."""
    sups: dict[float, float] = {}
    best = None
    for g in sorted(gammas):
        rep = check_reverse_holder(source, g, centers, radii, cap)
        sups[g] = rep.sup_ratio
        if rep.passed:
            best = g
    return best, sups


@dataclass(frozen=True)
class LocalComparisonReport:
    mode: str
    eps_values: tuple[float, ...]
    c_eps: dict
    c_inf: float | None
    rows: tuple[dict, ...]


def check_local_comparison(
    pair: ComparisonPair,
    mode: str,
    eps_values: Sequence[float],
    centers: Sequence[tuple[float, float]],
    radii: Sequence[float],
) -> LocalComparisonReport:
    """Fit c_eps in: mean psi over B_r <= eps mean G over B_2r + c mean F over B_2r.

    Plain-ball averages (zero extension).  Mode "A2_2" uses the frozen
    coefficient reference and additionally fits the sup-bound constant
    c_inf with sup of phi over B_r against the B_2r averages of G + F.
    """
    if pair.builder is None:
        raise ValueError("this pair carries no reference builder")
    if mode not in ("A2_1", "A2_2"):
        raise ValueError("mode must be 'A2_1' or 'A2_2'")
    rows = []
    for c in centers:
        for r in radii:
            built = pair.builder(c, r, mode)
            lhs = ball_average(built.psi, c, r)
            mG = ball_average(pair.G, c, 2 * r)
            mF = ball_average(pair.F, c, 2 * r)
            row = {"center": c, "r": r, "lhs": lhs, "mG": mG, "mF": mF}
            if mode == "A2_2":
                grid = built.phi.grid
                cells = ball_cells(grid, c, r)
                row["sup_phi"] = float(built.phi.values[cells].max(initial=0.0))
            rows.append(row)
    c_eps = {}
    for eps in eps_values:
        worst = 0.0
        for row in rows:
            slack = row["lhs"] - eps * row["mG"]
            if slack <= 0:
                continue
            worst = math.inf if row["mF"] == 0 else max(worst, slack / row["mF"])
        c_eps[eps] = worst
    c_inf = None
    if mode == "A2_2":
        c_inf = 0.0
        for row in rows:
            den = row["mG"] + row["mF"]
            if row["sup_phi"] > 0:
                c_inf = math.inf if den == 0 else max(c_inf, row["sup_phi"] / den)
    return LocalComparisonReport(mode, tuple(eps_values), c_eps, c_inf, tuple(rows))


@dataclass(frozen=True)
class GlobalComparisonReport:
    mean_F: float
    mean_G: float
    ratio: float  # mean F / mean G
    reciprocal: float


def check_global_comparison(pair: ComparisonPair) -> GlobalComparisonReport:
    """Domainwide average comparison of the pair's two fields."""
    mF = mean(pair.F)
    mG = mean(pair.G)
    ratio = math.inf if mG == 0 and mF > 0 else (0.0 if mF == 0 else mF / mG)
    recip = math.inf if mF == 0 and mG > 0 else (0.0 if mG == 0 else mG / mF)
    return GlobalComparisonReport(mF, mG, ratio, recip)


@dataclass(frozen=True)
class LemmaA1Report:
    alpha: float
    kappa: float
    rows: tuple[dict, ...]
    C_sup: float


def check_lemma_A1(
    f: ScalarField,
    alpha: float,
    lam_values: Sequence[float],
    kappa: float,
    sigmas: Sequence[float],
    radii: RadiusSet | None = None,
    maximal: MaximalResult | None = None,
) -> LemmaA1Report:
    """Smallness of high superlevel sets once one low maximal value exists.

    When some cell has M_alpha f <= kappa lam, the measure of
    {M_alpha f > sigma lam} in the domain is fitted against
    (kappa/sigma)^{n/(n-alpha)} diam(Omega)^n.
    """
    if maximal is None:
        maximal = frac_maximal(f, alpha, radii)
    grid = f.grid
    mv = maximal.values[grid.mask]
    diam = grid.diameter()
    expo = _N / (_N - alpha)
    rows = []
    csup = 0.0
    for lam in lam_values:
        hyp = bool(mv.min(initial=math.inf) <= kappa * lam)
        for sig in sigmas:
            lhs = float((mv > sig * lam).sum()) * grid.cell_area
            rhs_unit = (kappa / sig) ** expo * diam**_N
            C = lhs / rhs_unit if rhs_unit > 0 else math.inf
            rows.append(
                {"lam": lam, "sigma": sig, "hypothesis": hyp, "lhs": lhs,
                 "rhs_unit": rhs_unit, "C": C}
            )
            if hyp:
                csup = max(csup, C)
    return LemmaA1Report(alpha, kappa, tuple(rows), csup)


@dataclass(frozen=True)
class LemmaA2Report:
    alpha: float
    center: tuple[float, float]
    rho: float
    rows: tuple[dict, ...]
    passed: bool


def check_lemma_A2(
    G: ScalarField,
    alpha: float,
    center: tuple[float, float],
    rho: float,
    lam_values: Sequence[float],
    sigmas: Sequence[float],
    radii: RadiusSet | None = None,
) -> LemmaA2Report:
    """Localization: on Omega_rho(xi) high levels of M_alpha G only see B_2rho.

    Requires sigma > 3^n; under the low-value hypothesis the superlevel
    cells of the full and the truncated maximal function must coincide.
    """
    for sig in sigmas:
        if sig <= 3.0**_N:
            raise ValueError(f"sigma must exceed 3^n = {3.0**_N:g}")
    grid = G.grid
    mres = frac_maximal(G, alpha, radii)
    surf = ball_cells(grid, center, rho) & grid.mask
    if not surf.any():
        raise ValueError("surface ball contains no domain cells")
    trunc_vals = np.where(ball_cells(grid, center, 2 * rho), G.values, 0.0)
    trunc = ScalarField(grid, np.where(grid.mask, trunc_vals, 0.0))
    mtr = frac_maximal(trunc, alpha, radii if radii is not None else mres.radius_set)
    mv = mres.values[surf]
    tv = mtr.values[surf]
    rows = []
    ok = True
    for lam in lam_values:
        hyp = bool(mv.min() <= lam)
        for sig in sigmas:
            n_full = int((mv > sig * lam).sum())
            n_trunc = int((tv > sig * lam).sum())
            same = bool((mv > sig * lam).sum() == (tv > sig * lam).sum()
                        and ((mv > sig * lam) == (tv > sig * lam)).all())
            rows.append(
                {"lam": lam, "sigma": sig, "hypothesis": hyp,
                 "count_full": n_full, "count_trunc": n_trunc, "equal": same}
            )
            if hyp and not same:
                ok = False
    return LemmaA2Report(alpha, center, rho, tuple(rows), ok)


def _sigma_mode_a(eps: float, alpha: float, gamma: float) -> float:
    return eps ** (-(_N - alpha * gamma) / (_N * gamma))


@dataclass(frozen=True)
class DensityReport:
    mode: str
    eps: float
    sigma: float
    kappa: float
    lam: float
    hyp_G: bool
    hyp_F: bool
    lhs: float
    rhs_unit: float
    C: float


def density_check(
    pair: ComparisonPair,
    alpha: float,
    gamma: float,
    mode: str,
    eps: float,
    c_eps: float,
    center: tuple[float, float],
    rho: float,
    lam: float,
    sigma: float | None = None,
    radii: RadiusSet | None = None,
    maximal_G: MaximalResult | None = None,
    maximal_F: MaximalResult | None = None,
) -> DensityReport:
    """Measure decay of one good-lambda step on a single surface ball.

    Mode "A" derives sigma from eps through the scaling exponent; mode "B"
    takes it explicitly.  Both require the two low-value hypotheses on the
    ball before the fitted constant means anything.
    """
    if mode not in ("A", "B"):
        raise ValueError("mode must be 'A' or 'B'")
    if mode == "A":
        sigma = _sigma_mode_a(eps, alpha, gamma)
        rhs_unit = sigma ** (-_N * gamma / (_N - alpha * gamma)) * rho**_N
    else:
        if sigma is None:
            raise ValueError("mode B needs an explicit sigma")
        rhs_unit = (eps / sigma) ** (_N / (_N - alpha)) * rho**_N
    kappa = eps / max(c_eps, 1.0 + 1e-9)
    grid = pair.G.grid
    if maximal_G is None:
        maximal_G = frac_maximal(pair.G, alpha, radii)
    if maximal_F is None:
        maximal_F = frac_maximal(pair.F, alpha, radii)
    surf = ball_cells(grid, center, rho) & grid.mask
    if not surf.any():
        raise ValueError("surface ball contains no domain cells")
    mg = maximal_G.values[surf]
    mf = maximal_F.values[surf]
    hyp_G = bool(mg.min() <= lam)
    hyp_F = bool(mf.min() <= kappa * lam)
    lhs = float((mg > sigma * lam).sum()) * grid.cell_area
    C = lhs / rhs_unit if rhs_unit > 0 else math.inf
    return DensityReport(mode, eps, float(sigma), kappa, lam, hyp_G, hyp_F,
                         lhs, rhs_unit, C)


@dataclass(frozen=True)
class GoodLambdaReport:
    mode: str
    alpha: float
    gamma: float
    eps_values: tuple[float, ...]
    sigma_by_eps: dict
    kappa_by_eps: dict
    C_by_eps: dict
    c_eps: dict
    c_inf: float | None
    sigma0: float | None
    sigma_search: tuple[tuple[float, float], ...]  # (sigma, C) trail, mode B
    levels: np.ndarray
    rows: tuple[dict, ...]

    @property
    def passed(self) -> bool:
        return all(math.isfinite(v) for v in self.C_by_eps.values())


def _dist_values(sorted_vals: np.ndarray, lam: float, h2: float) -> float:
    pos = np.searchsorted(sorted_vals, lam, side="right")
    return (sorted_vals.size - pos) * h2


def goodlambda_scan(
    pair: ComparisonPair,
    alpha: float,
    gamma: float,
    mode: str,
    eps_values: Sequence[float],
    levels: LevelGrid | None = None,
    radii: RadiusSet | None = None,
    c_eps: dict | None = None,
    c_inf: float | None = None,
    sigma0: float | None = None,
    n_interior: int = 20,
    n_boundary: int = 12,
    seed: int = 1234,
) -> GoodLambdaReport:
    """Fit the constant of the level-set decay inequality across levels.

    Mode "A":  d(sigma(eps) lam) <= C eps d(lam) + d_F(kappa lam) with
    sigma(eps) from the scaling exponent; C(eps) is fitted as the smallest
    constant covering all sampled levels.  Mode "B" keeps sigma fixed and
    doubles it from its structural floor until the fitted constant
    stabilizes within 10 percent.
    """
    if mode not in ("A", "B"):
        raise ValueError("mode must be 'A' or 'B'")
    grid = pair.G.grid
    h2 = grid.cell_area
    MG = frac_maximal(pair.G, alpha, radii)
    MF = frac_maximal(pair.F, alpha, radii)
    svG = np.sort(MG.values[grid.mask])
    svF = np.sort(MF.values[grid.mask])
    if levels is None:
        top = float(svG[-1]) if svG.size and svG[-1] > 0 else 1.0
        levels = LevelGrid.default(top)
    lam_grid = levels.lambdas

    if c_eps is None or (mode == "B" and c_inf is None):
        centers = sample_centers(grid, n_interior, n_boundary, seed)
        rads = dyadic_radii(grid)
        lc_mode = "A2_1" if mode == "A" else "A2_2"
        lc = check_local_comparison(pair, lc_mode, tuple(eps_values), centers, rads)
        if c_eps is None:
            c_eps = lc.c_eps
        if c_inf is None:
            c_inf = lc.c_inf

    def fit_C(eps: float, sigma: float) -> tuple[float, dict]:
        kappa = eps / max(c_eps[eps], 1.0 + 1e-9)
        worst = 0.0
        worst_lam = None
        for lam in lam_grid:
            lhs = _dist_values(svG, sigma * lam, h2)
            t2 = _dist_values(svF, kappa * lam, h2)
            t1 = eps * _dist_values(svG, lam, h2)
            if t1 > 0:
                c = max(0.0, (lhs - t2) / t1)
            else:
                c = 0.0 if lhs <= t2 else math.inf
            if c > worst:
                worst = c
                worst_lam = float(lam)
        return worst, {"eps": eps, "sigma": sigma, "kappa": kappa,
                       "C": worst, "worst_lam": worst_lam}

    sigma_by_eps: dict = {}
    kappa_by_eps: dict = {}
    C_by_eps: dict = {}
    rows = []
    search_trail: list[tuple[float, float]] = []
    found_sigma0 = None

    if mode == "A":
        for eps in eps_values:
            sigma = _sigma_mode_a(eps, alpha, gamma)
            C, row = fit_C(eps, sigma)
            row["sigma_admissible"] = sigma > 3.0**_N
            sigma_by_eps[eps] = sigma
            kappa_by_eps[eps] = row["kappa"]
            C_by_eps[eps] = C
            rows.append(row)
    else:
        floor = 3.0**_N * (1 + 1e-6)
        if sigma0 is not None:
            start = sigma0
        else:
            struct = 2.0 ** (_N + 1) * pair.c_tilde * (c_inf or 1.0)
            start = max(floor, struct)
        sigma = start
        prev = None
        for _ in range(24):
            C_all = max(fit_C(eps, sigma)[0] for eps in eps_values)
            search_trail.append((sigma, C_all))
            if prev is not None and (
                (math.isinf(prev) and math.isinf(C_all))
                or (math.isfinite(C_all) and abs(C_all - prev) <= 0.1 * max(prev, 1e-30))
            ):
                found_sigma0 = sigma
                break
            prev = C_all
            sigma *= 2
        if found_sigma0 is None:
            found_sigma0 = sigma
        for eps in eps_values:
            C, row = fit_C(eps, found_sigma0)
            sigma_by_eps[eps] = found_sigma0
            kappa_by_eps[eps] = row["kappa"]
            C_by_eps[eps] = C
            rows.append(row)

    return GoodLambdaReport(
        mode, alpha, gamma, tuple(eps_values), sigma_by_eps, kappa_by_eps,
        C_by_eps, dict(c_eps), c_inf, found_sigma0, tuple(search_trail),
        lam_grid, tuple(rows),
    )


@dataclass(frozen=True)
class CoveringReport:
    eps: float
    r: float
    hyp_size: bool
    hyp_density: bool
    measure_P: float
    measure_Q: float
    C: float
    passed: bool


def _pure_ball_count(k: int) -> int:
    # lattice cells with center strictly inside a radius-k ball, no clipping
    c = 0
    for dj in range(-k + 1, k):
        c += 2 * math.isqrt(k * k - dj * dj - 1) + 1
    return c


def covering_check(
    grid: DomainGrid, P: np.ndarray, Q: np.ndarray, eps: float, r: float
) -> CoveringReport:
    """Vitali-type covering inequality |P| <= C eps |Q| on the lattice.

    Hypotheses verified: P is small against the radius-r ball, and every
    lattice ball where P is eps-dense has its domain part inside Q.
    """
    P = P & grid.mask
    Q = Q & grid.mask
    if (P & ~Q).any():
        raise ValueError("P must be contained in Q")
    h = grid.h
    k_r = int(round(r / h))
    if k_r < 1 or abs(k_r * h - r) > 1e-9 * h:
        raise ValueError("r must be a positive integer multiple of h")
    mP = float(P.sum()) * grid.cell_area
    mQ = float(Q.sum()) * grid.cell_area
    hyp_size = mP <= eps * _pure_ball_count(k_r) * grid.cell_area + 1e-15
    hyp_density = True
    Pf = P.astype(np.float64)
    out_f = (grid.mask & ~Q).astype(np.float64)
    for k in range(1, k_r + 1):
        djs = np.arange(-k + 1, k)
        ws = np.array([math.isqrt(k * k - int(dj) ** 2 - 1) for dj in djs])
        kern = np.zeros((2 * k - 1, 2 * k - 1))
        for row, w in enumerate(ws):
            kern[row, (k - 1 - w):(k - 1 + w + 1)] = 1.0
        cnt_P = np.rint(fftconvolve(Pf, kern, mode="same"))
        cnt_out = np.rint(fftconvolve(out_f, kern, mode="same"))
        dense = grid.mask & (cnt_P > eps * _pure_ball_count(k))
        if (dense & (cnt_out > 0.5)).any():
            hyp_density = False
            break
    C = mP / (eps * mQ) if mQ > 0 else math.inf
    return CoveringReport(eps, r, bool(hyp_size), bool(hyp_density), mP, mQ, C,
                          bool(hyp_size and hyp_density))


@dataclass(frozen=True)
class NormComparisonReport:
    space_label: str
    rule: str
    norm_G: float
    norm_F: float
    ratio: float
    params: dict


def _check_norm_range(
    spec: NormSpec, alpha: float, mode: str, gamma: float | None
) -> tuple[str, dict]:
    """Validate (alpha, q, s, Phi) against the comparison range rules."""
    n = float(_N)
    route = "A" if mode == "A" else "B"
    rule = f"{spec.space.replace('_', '-')}/{route}"
    params: dict = {"alpha": alpha, "mode": route}
    if route == "A":
        if gamma is None or gamma < 1:
            raise RangeRuleError(rule, "route A needs a certified gamma >= 1")
        params["gamma"] = gamma
    if not (0 <= alpha < n):
        raise RangeRuleError(rule, f"alpha={alpha:g} outside [0, {n:g})")

    cert = None
    if spec.space in ("orlicz", "orlicz_lorentz"):
        cert = certify_young(spec.phi)
        params["p1"] = cert.p1
        if not cert.young_ok:
            raise RangeRuleError(rule, f"{spec.phi.name}: " + "; ".join(cert.messages))
        if not cert.delta2_ok:
            raise RangeRuleError(rule, f"{spec.phi.name} is not doubling")

    if route == "A":
        if not (alpha < n / gamma):
            raise RangeRuleError(rule, f"alpha={alpha:g} >= n/gamma={n / gamma:g}")
        if spec.space == "lorentz":
            q_hi = n * gamma / (n - alpha * gamma)
            if not (0 < spec.q < q_hi):
                raise RangeRuleError(
                    rule, f"q={spec.q:g} outside (0, n*gamma/(n-alpha*gamma)={q_hi:g})"
                )
        elif spec.space == "orlicz":
            a_lo = n * (1.0 / gamma - 1.0 / cert.p1)
            if not (alpha > a_lo):
                raise RangeRuleError(
                    rule,
                    f"alpha={alpha:g} not above n(1/gamma - 1/p1)={a_lo:g}",
                )
        else:
            q_hi = n * gamma / (cert.p1 * (n - alpha * gamma))
            if not (0 < spec.q < q_hi):
                raise RangeRuleError(
                    rule,
                    f"q={spec.q:g} outside (0, n*gamma/(p1(n-alpha*gamma))={q_hi:g})",
                )
    else:
        if spec.space in ("lorentz", "orlicz_lorentz") and not (spec.q > 0):
            raise RangeRuleError(rule, f"q={spec.q:g} must be positive")
    return rule, params


def norm_comparison_report(
    pair: ComparisonPair,
    alpha: float,
    spec: NormSpec,
    mode: str,
    gamma: float | None = None,
    radii: RadiusSet | None = None,
) -> NormComparisonReport:
    """Ratio of maximal-function norms of the pair in one admissible space."""
    if gamma is None:
        gamma = pair.gamma
    rule, params = _check_norm_range(spec, alpha, mode, gamma)
    MG = frac_maximal(pair.G, alpha, radii).restricted()
    MF = frac_maximal(pair.F, alpha, radii).restricted()
    nG = evaluate_norm(MG, spec)
    nF = evaluate_norm(MF, spec)
    if nG == 0:
        ratio = 0.0
    elif nF == 0:
        ratio = math.inf
    else:
        ratio = nG / nF
    params["alpha"] = alpha
    return NormComparisonReport(spec.label, rule, nG, nF, ratio, params)
