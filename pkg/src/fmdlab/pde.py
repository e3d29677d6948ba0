"""Finite-difference energy minimization for quasilinear Dirichlet problems.

The flux family is A(x, xi) = a(x) (vs^2 + |xi|^2)^{(p-2)/2} xi with a
measurable coefficient a bounded between 1/Lambda and Lambda.  Solutions
minimize the convex energy

    E(u) = sum_cells w [ a (vs^2 + |grad u|^2)^{p/2} / p - <B(x,F), grad u> ]

over fields with prescribed values on a Dirichlet ring, optionally confined
between two obstacle fields.  The quadrature evaluates one-sided gradients
at the four corner stencils of each cell, each carrying a quarter of the
cell area (stencils that exit the active set are dropped); for p = 2 the
Euler-Lagrange system at free cells is the standard five-point Laplacian,
so the discrete weak maximum principle and harmonic quadratics are exact.

Degenerate exponents are handled by continuation: the solver walks a
decreasing regularization ladder delta in {1e-1 ... 1e-6} added in
quadrature to vs, then removes it, warm-starting each stage.  Steps are
damped Newton with a sparse factorization, an Armijo backtracking line
search, a Barzilai-Borwein projected-gradient fallback, and cellwise
projection onto the obstacle interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .grid import DomainGrid, ScalarField, VectorField

__all__ = [
    "psi_varsigma",
    "OperatorSpec",
    "ProblemSpec",
    "SolveReport",
    "solve",
    "monotonicity_constant",
    "structure_margins",
    "max_principle_violation",
    "BMOReport",
    "bmo_seminorm",
]

_CORNERS = ((1, 1), (1, -1), (-1, 1), (-1, -1))


def _as_xy(xi) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(xi, VectorField):
        return xi.vx, xi.vy
    x, y = xi
    return np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)


def psi_varsigma(xi1, xi2, varsigma: float, p: float) -> np.ndarray:
    """(vs^2 + |xi1|^2 + |xi2|^2)^{(p-2)/2} |xi1 - xi2|^2, 0 when degenerate."""
    x1, y1 = _as_xy(xi1)
    x2, y2 = _as_xy(xi2)
    base = varsigma**2 + x1**2 + y1**2 + x2**2 + y2**2
    diff2 = (x1 - x2) ** 2 + (y1 - y2) ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = base ** ((p - 2) / 2) * diff2
    return np.where(diff2 == 0, 0.0, np.where(base == 0, 0.0, out))


def _omega(gx, gy, varsigma, p):
    """The unit-coefficient flux (vs^2 + |xi|^2)^{(p-2)/2} xi."""
    base = varsigma**2 + gx**2 + gy**2
    with np.errstate(divide="ignore", invalid="ignore"):
        m = base ** ((p - 2) / 2)
    m = np.where(base == 0, 0.0, m)  # p<2 limit: |xi|^{p-1} -> 0
    return m * gx, m * gy


def monotonicity_constant(
    p: float, varsigma: float, n_mag: int = 21, n_ang: int = 17
) -> float:
    """Sampled lower bound for <omega(x1)-omega(x2), x1-x2> / Psi_vs.

    The ratio is >= some c(p) > 0 for p in (1, 3]; the returned value is the
    sampled minimum scaled by a 0.8 safety margin.
    """
    mags = np.geomspace(1e-3, 1e3, n_mag) * max(varsigma, 1.0)
    angs = np.linspace(0.0, math.pi, n_ang)
    t1, t2, th = np.meshgrid(mags, mags, angs, indexing="ij")
    x1, y1 = t1, np.zeros_like(t1)
    x2, y2 = t2 * np.cos(th), t2 * np.sin(th)
    w1x, w1y = _omega(x1, y1, varsigma, p)
    w2x, w2y = _omega(x2, y2, varsigma, p)
    num = (w1x - w2x) * (x1 - x2) + (w1y - w2y) * (y1 - y2)
    den = psi_varsigma((x1, y1), (x2, y2), varsigma, p)
    ok = den > 1e-290
    ratios = num[ok] / den[ok]
    if ratios.size == 0:
        return 0.8
    return 0.8 * float(ratios.min())


@dataclass(frozen=True)
class OperatorSpec:
    """Exponent, degeneracy parameter, coefficient and ellipticity constant.

    `bform` picks the data map B used in the right-hand side:
    "p1" gives B(x, xi) = |xi|^{p-2} xi and "dop" gives the full-growth
    map (vs^2 + |xi|^2)^{(p-1)/2} xi / |xi| (zero at the origin).
    """

    p: float
    varsigma: float
    lam: float
    coeff: ScalarField
    bform: str = "p1"
    strict_range: bool = False

    def __post_init__(self):
        hi = 2.0 if self.strict_range else 3.0
        if not (1.0 < self.p <= hi):
            raise ValueError(f"exponent p must lie in (1, {hi}]")
        if not (0.0 <= self.varsigma <= 1.0):
            raise ValueError("varsigma must lie in [0, 1]")
        if not (self.lam >= 1.0):
            raise ValueError("ellipticity constant must be >= 1")
        if self.bform not in ("p1", "dop"):
            raise ValueError("bform must be 'p1' or 'dop'")
        a = self.coeff.values[self.coeff.grid.mask]
        if a.size and not ((a >= 1.0 / self.lam - 1e-12) & (a <= self.lam + 1e-12)).all():
            raise ValueError("coefficient exits [1/lam, lam]")
        if a.size and a.min() <= 0:
            raise ValueError("coefficient must be positive")

    @classmethod
    def create(
        cls,
        p: float,
        varsigma: float,
        coeff: ScalarField,
        bform: str = "p1",
        strict_range: bool = False,
    ) -> "OperatorSpec":
        """Build a spec with a certified ellipticity constant.

        Lambda is the smallest value >= 1 covering the coefficient range,
        the growth bound, and the sampled monotonicity constant of the flux
        family (with margin), so the structure inequalities hold on samples.
        """
        a = coeff.values[coeff.grid.mask]
        if a.size == 0 or a.min() <= 0:
            raise ValueError("coefficient must be positive on the domain")
        c = monotonicity_constant(p, varsigma)
        lam = max(1.0, float(a.max()), 1.0 / (float(a.min()) * c)) * (1 + 1e-9)
        return cls(p, varsigma, lam, coeff, bform, strict_range)

    def flux(self, gx: np.ndarray, gy: np.ndarray, a: np.ndarray):
        """A(x, xi) components for gradient arrays and coefficient values."""
        wx, wy = _omega(gx, gy, self.varsigma, self.p)
        return a * wx, a * wy

    def bmap(self, fx: np.ndarray, fy: np.ndarray):
        """B(x, xi) components for the configured form."""
        mag2 = fx**2 + fy**2
        if self.bform == "p1":
            with np.errstate(divide="ignore", invalid="ignore"):
                m = mag2 ** ((self.p - 2) / 2)
            m = np.where(mag2 == 0, 0.0, m)
            return m * fx, m * fy
        with np.errstate(divide="ignore", invalid="ignore"):
            m = (self.varsigma**2 + mag2) ** ((self.p - 1) / 2) / np.sqrt(mag2)
        m = np.where(mag2 == 0, 0.0, m)
        return m * fx, m * fy

    def with_coeff(self, coeff: ScalarField) -> "OperatorSpec":
        return replace(self, coeff=coeff)


def structure_margins(op: OperatorSpec, n_samples: int = 400, seed: int = 7) -> dict:
    """Worst-case slack of the growth and monotonicity inequalities.

    Both reported margins are nonnegative when the inequalities hold on the
    sampled gradient pairs and coefficient values.
    """
    rng = np.random.default_rng(seed)
    a = op.coeff.values[op.coeff.grid.mask]
    av = rng.choice(a, size=n_samples)
    scale = 10.0 ** rng.uniform(-3, 3, size=(2, n_samples))
    th = rng.uniform(0, 2 * math.pi, size=(2, n_samples))
    x1, y1 = scale[0] * np.cos(th[0]), scale[0] * np.sin(th[0])
    x2, y2 = scale[1] * np.cos(th[1]), scale[1] * np.sin(th[1])
    a1x, a1y = op.flux(x1, y1, av)
    a2x, a2y = op.flux(x2, y2, av)
    g1 = op.varsigma**2 + x1**2 + y1**2
    growth = op.lam * g1 ** ((op.p - 1) / 2) - np.hypot(a1x, a1y)
    mono = (a1x - a2x) * (x1 - x2) + (a1y - a2y) * (y1 - y2)
    psi = psi_varsigma((x1, y1), (x2, y2), op.varsigma, op.p)
    mono_slack = mono - psi / op.lam
    bx, by = op.bmap(x1, y1)
    bgrow = op.lam * g1 ** ((op.p - 1) / 2) - np.hypot(bx, by)
    return {
        "growth": float(growth.min()),
        "monotonicity": float(mono_slack.min()),
        "b_growth": float(bgrow.min()),
    }


@dataclass(frozen=True)
class ProblemSpec:
    """A Dirichlet or double-obstacle problem on a region of the grid.

    `g` supplies the fixed values on the Dirichlet ring (the active cells
    with a 4-neighbor outside the active set) and the initial guess.
    `region` restricts the active set; None means the whole domain.
    """

    grid: DomainGrid
    op: OperatorSpec
    kind: str  # "dirichlet" | "double_obstacle"
    F: VectorField
    g: ScalarField
    f1: ScalarField | None = None
    f2: ScalarField | None = None
    region: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("dirichlet", "double_obstacle"):
            raise ValueError("kind must be 'dirichlet' or 'double_obstacle'")
        for fld in (self.op.coeff, self.g):
            if fld.grid is not self.grid and fld.grid.mask.shape != self.grid.mask.shape:
                raise ValueError("fields must live on the problem grid")
        if self.kind == "double_obstacle":
            if self.f1 is None or self.f2 is None:
                raise ValueError("double obstacle problem needs f1 and f2")
            act = self.active_cells()
            lo, hi = self.f1.values[act], self.f2.values[act]
            if not (lo <= hi + 1e-12).all():
                raise ValueError("obstacles must satisfy f1 <= f2")
            ring = self.dirichlet_ring()
            gv = self.g.values[ring]
            if ((gv < self.f1.values[ring] - 1e-9) | (gv > self.f2.values[ring] + 1e-9)).any():
                raise ValueError("boundary values must sit between the obstacles")
        elif self.f1 is not None or self.f2 is not None:
            raise ValueError("obstacles only apply to the double obstacle problem")

    def active_cells(self) -> np.ndarray:
        act = self.grid.mask
        if self.region is not None:
            act = act & self.region
        return act

    def dirichlet_ring(self) -> np.ndarray:
        act = self.active_cells()
        inner = np.zeros_like(act)
        inner[1:-1, 1:-1] = (
            act[1:-1, 1:-1]
            & act[2:, 1:-1] & act[:-2, 1:-1] & act[1:-1, 2:] & act[1:-1, :-2]
        )
        return act & ~inner


@dataclass(frozen=True)
class SolveReport:
    u: ScalarField
    converged: bool
    iterations: int
    residual: float
    relative_residual: float
    energy: float
    energy_trace: tuple[float, ...]
    stages: tuple[tuple[float, int], ...]  # (delta, iterations)
    message: str


class _Quadrature:
    """Geometry of the four-corner one-sided gradient quadrature."""

    def __init__(self, prob: ProblemSpec):
        grid = prob.grid
        act = prob.active_cells()
        self.act = act
        ii, jj = np.nonzero(act)
        self.cells = (ii, jj)
        self.n = ii.size
        idx = -np.ones((grid.nx + 2, grid.ny + 2), dtype=np.int64)
        idx[1:-1, 1:-1][act] = np.arange(self.n)
        h = grid.h
        self.h = h
        corners = []
        for sx, sy in _CORNERS:
            nbx = idx[1 + ii + sx, 1 + jj]
            nby = idx[1 + ii, 1 + jj + sy]
            here = idx[1 + ii, 1 + jj]
            ok = (nbx >= 0) & (nby >= 0)
            rows = np.nonzero(ok)[0]
            m = rows.size
            r = np.arange(m)
            dx = sp.coo_matrix(
                (
                    np.concatenate([np.full(m, sx / h), np.full(m, -sx / h)]),
                    (np.concatenate([r, r]), np.concatenate([nbx[rows], here[rows]])),
                ),
                shape=(m, self.n),
            ).tocsr()
            dy = sp.coo_matrix(
                (
                    np.concatenate([np.full(m, sy / h), np.full(m, -sy / h)]),
                    (np.concatenate([r, r]), np.concatenate([nby[rows], here[rows]])),
                ),
                shape=(m, self.n),
            ).tocsr()
            corners.append((rows, dx, dy))
        self.corners = corners
        # each corner branch carries a fixed quarter cell; branches whose
        # stencil exits the active set are dropped, which keeps the p = 2
        # Euler-Lagrange rows at free cells exactly five-point
        self.weights = [np.full(rows.size, 0.25 * h * h) for rows, _, _ in corners]

        ring = prob.dirichlet_ring()
        self.fixed = ring[ii, jj]
        self.free = ~self.fixed

        a_full = prob.op.coeff.values
        self.a = [a_full[ii[rows], jj[rows]] for rows, _, _ in corners]
        bx_full, by_full = prob.op.bmap(prob.F.vx, prob.F.vy)
        self.b = [
            (bx_full[ii[rows], jj[rows]], by_full[ii[rows], jj[rows]])
            for rows, _, _ in corners
        ]


def _energy_grad_hess(
    quad: _Quadrature, op: OperatorSpec, u: np.ndarray, vs2: float, want_hess: bool
):
    p = op.p
    E = 0.0
    g = np.zeros(quad.n)
    blocks = []
    for (rows, dx, dy), w, a, (bx, by) in zip(
        quad.corners, quad.weights, quad.a, quad.b
    ):
        gx = dx @ u
        gy = dy @ u
        base = vs2 + gx**2 + gy**2
        with np.errstate(divide="ignore", invalid="ignore"):
            m0 = base ** ((p - 2) / 2)
            dens = base ** (p / 2)
        m0 = np.where(base == 0, 0.0, m0)
        dens = np.where(base == 0, 0.0, dens)
        E += float(np.dot(w, a * dens / p - bx * gx - by * gy))
        dwx = a * m0 * gx - bx
        dwy = a * m0 * gy - by
        g += dx.T @ (w * dwx) + dy.T @ (w * dwy)
        if want_hess:
            base_h = np.maximum(base, 1e-28)
            m0h = base_h ** ((p - 2) / 2)
            m1h = (p - 2) * base_h ** ((p - 4) / 2)
            hxx = w * a * (m0h + m1h * gx * gx)
            hyy = w * a * (m0h + m1h * gy * gy)
            hxy = w * a * m1h * gx * gy
            blocks.append(
                dx.T @ sp.diags(hxx) @ dx
                + dy.T @ sp.diags(hyy) @ dy
                + dx.T @ sp.diags(hxy) @ dy
                + dy.T @ sp.diags(hxy) @ dx
            )
    H = None
    if want_hess:
        H = blocks[0]
        for b in blocks[1:]:
            H = H + b
    return E, g, H


def _energy_only(quad, op, u, vs2):
    E, _, _ = _energy_grad_hess(quad, op, u, vs2, want_hess=False)
    return E


def solve(
    prob: ProblemSpec,
    tol: float = 1e-8,
    max_iter: int = 10000,
    deltas: Sequence[float] | None = None,
) -> SolveReport:
    """Minimize the problem energy; returns the field and a convergence report."""
    quad = _Quadrature(prob)
    op = prob.op
    ii, jj = quad.cells
    u = prob.g.values[ii, jj].astype(np.float64).copy()
    free = quad.free.copy()
    lo = hi = None
    if prob.kind == "double_obstacle":
        lo = prob.f1.values[ii, jj].copy()
        hi = prob.f2.values[ii, jj].copy()
        u[free] = np.clip(u[free], lo[free], hi[free])

    if deltas is None:
        deltas = () if op.p == 2.0 else (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    schedule = list(deltas) + [0.0]

    def project(vec):
        if lo is None:
            return vec
        out = vec.copy()
        out[free] = np.clip(out[free], lo[free], hi[free])
        return out

    def residual_vec(grad):
        r = np.zeros(quad.n)
        if lo is None:
            r[free] = grad[free]
        else:
            step = u - grad
            r[free] = u[free] - np.clip(step[free], lo[free], hi[free])
        return r

    total_it = 0
    trace: list[float] = []
    stages: list[tuple[float, int]] = []
    rnorm0 = None
    rnorm = math.inf
    message = "converged"
    converged = True

    for delta in schedule:
        vs2 = op.varsigma**2 + delta**2
        stage_it = 0
        stage_tol = tol if delta == 0.0 else max(tol, 1e-6)
        prev_u = None
        prev_g = None
        while True:
            E, grad, H = _energy_grad_hess(quad, op, u, vs2, want_hess=True)
            r = residual_vec(grad)
            rnorm = float(np.linalg.norm(r))
            if rnorm0 is None:
                rnorm0 = max(rnorm, 1e-30)
            if rnorm <= stage_tol * max(1.0, rnorm0):
                break
            if total_it >= max_iter:
                message = "iteration cap reached"
                converged = False
                break

            # active-set reduction: obstacle-pinned cells leave the Newton solve
            sub = free.copy()
            if lo is not None:
                atol = 1e-12 * (1.0 + float(np.abs(u).max()))
                pin_lo = free & (u <= lo + atol) & (grad > 0)
                pin_hi = free & (u >= hi - atol) & (grad < 0)
                sub &= ~(pin_lo | pin_hi)
            d = np.zeros(quad.n)
            solved = False
            if sub.any():
                Hs = H.tocsr()[sub][:, sub].tocsc()
                try:
                    d[sub] = -splu(Hs).solve(grad[sub])
                    solved = True
                except RuntimeError:
                    ridge = 1e-10 * (abs(Hs.diagonal()).mean() + 1.0)
                    try:
                        d[sub] = -splu(
                            (Hs + ridge * sp.identity(Hs.shape[0], format="csc")).tocsc()
                        ).solve(grad[sub])
                        solved = True
                    except RuntimeError:
                        solved = False
            if not solved:
                # Barzilai-Borwein projected gradient fallback
                if prev_u is not None:
                    su = u - prev_u
                    sy = grad - prev_g
                    denom = float(np.dot(su[free], sy[free]))
                    tbb = (
                        float(np.dot(su[free], su[free])) / denom
                        if denom > 0
                        else 1.0
                    )
                else:
                    tbb = 1.0 / max(1.0, rnorm)
                d[free] = -tbb * grad[free]

            prev_u, prev_g = u.copy(), grad.copy()
            t = 1.0
            accepted = False
            while t >= 1e-14:
                u_try = project(u + t * d)
                delta_u = u_try - u
                pred = float(np.dot(grad, delta_u))
                E_try = _energy_only(quad, op, u_try, vs2)
                if E_try <= E + 1e-4 * pred or (pred == 0.0 and E_try <= E):
                    u = u_try
                    accepted = True
                    break
                t *= 0.5
            total_it += 1
            stage_it += 1
            trace.append(E)
            if not accepted:
                # gradient fallback with plain decrease test
                tg = 1.0 / max(1.0, rnorm)
                stepped = False
                for _ in range(60):
                    u_try = project(u - tg * grad * free)
                    if _energy_only(quad, op, u_try, vs2) < E:
                        u = u_try
                        stepped = True
                        break
                    tg *= 0.5
                if not stepped:
                    message = "line search stalled"
                    converged = rnorm <= 1e-6 * max(1.0, rnorm0)
                    break
        stages.append((delta, stage_it))
        if not converged and message != "converged":
            break

    E_final, grad, _ = _energy_grad_hess(quad, op, u, op.varsigma**2, False)
    r = residual_vec(grad)
    rnorm = float(np.linalg.norm(r))
    rel = rnorm / max(1.0, rnorm0 if rnorm0 is not None else 1.0)
    converged = converged and rel <= max(tol, 1e-6)

    vals = np.zeros((prob.grid.nx, prob.grid.ny))
    vals[ii, jj] = u
    vals[~prob.grid.mask] = 0.0
    ufield = ScalarField(prob.grid, vals)
    trace.append(E_final)
    return SolveReport(
        ufield, converged, total_it, rnorm, rel, E_final, tuple(trace),
        tuple(stages), message,
    )


def max_principle_violation(report: SolveReport, prob: ProblemSpec) -> float:
    """How far the solution exits the Dirichlet-ring value range (0 = clean)."""
    quad_act = prob.active_cells()
    ring = prob.dirichlet_ring()
    inner = quad_act & ~ring
    if not inner.any() or not ring.any():
        return 0.0
    uv = report.u.values
    over = float(uv[inner].max() - uv[ring].max())
    under = float(uv[ring].min() - uv[inner].min())
    return max(0.0, over, under)


@dataclass(frozen=True)
class BMOReport:
    value: float
    t: float
    r0: float
    worst_center: tuple[float, float]
    worst_radius: float


def bmo_seminorm(
    op: OperatorSpec,
    t: float = 2.0,
    r0: float | None = None,
    centers: Sequence[tuple[float, float]] | None = None,
    radii: Sequence[float] | None = None,
    n_dirs: int = 8,
) -> BMOReport:
    """Mean-oscillation seminorm of the flux coefficient over small balls.

    For each sampled ball the flux is compared with its ball average in the
    normalized distance sup_xi |A(x,xi) - avg_A(xi)| / |xi|^{p-1} over unit
    directions, and the t-mean of that distance is taken over the ball.
    """
    grid = op.coeff.grid
    if r0 is None:
        r0 = 0.25 * grid.diameter()
    if radii is None:
        radii = []
        rr = 2 * grid.h
        while rr <= r0:
            radii.append(rr)
            rr *= 2
        if not radii:
            radii = [grid.h]
    if centers is None:
        ii, jj = np.nonzero(grid.mask)
        stride = max(1, ii.size // 400)
        centers = [
            (grid.xs[i], grid.ys[j]) for i, j in zip(ii[::stride], jj[::stride])
        ]
    a = op.coeff.values
    dirs = np.linspace(0, 2 * math.pi, n_dirs, endpoint=False)
    wx, wy = _omega(np.cos(dirs), np.sin(dirs), op.varsigma, op.p)
    fac = float(np.hypot(wx, wy).max())
    best = 0.0
    wc, wr = (math.nan, math.nan), math.nan
    from .grid import ball_cells

    for c in centers:
        for rho in radii:
            cells = ball_cells(grid, c, rho) & grid.mask
            cnt = int(cells.sum())
            if cnt == 0:
                continue
            av = a[cells]
            abar = av.mean()
            theta = np.abs(av - abar) * fac
            val = float((theta**t).mean() ** (1.0 / t))
            if val > best:
                best, wc, wr = val, (float(c[0]), float(c[1])), float(rho)
    return BMOReport(best, t, float(r0), wc, wr)
