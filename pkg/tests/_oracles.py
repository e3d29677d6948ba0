"""Independent reference implementations used to cross-check the package.

The maximal-function oracle below recomputes every ball average from exact
integer sums, walking the cells of each ball one by one.  It shares no code
with the production path (which uses limb-decomposed prefix tables); only
the final float operations (one rounding per division / multiplication)
follow the same sequence, since bit-for-bit agreement pins those.
"""

import itertools
import math

import numpy as np

from fmdlab import ScalarField
from fmdlab.maximal import RadiusSet


def exact_ints(values) -> tuple[list[int], int]:
    """Integers n_i and quantum q with |values[i]| = n_i * 2**q exactly."""
    flat = [abs(float(v)) for v in np.asarray(values).ravel()]
    exps = []
    for v in flat:
        if v != 0.0:
            _, e = math.frexp(v)
            exps.append(e)
    if not exps:
        return [0] * len(flat), 0
    q = min(exps) - 53
    ints = []
    for v in flat:
        if v == 0.0:
            ints.append(0)
        else:
            m, e = math.frexp(v)
            ints.append(int(m * (1 << 53)) << (e - 53 - q))
    return ints, q


def oracle_candidates(f: ScalarField, alphas, ks):
    """Per-radius candidate values rho^alpha * (exact ball average of |f|).

    Returns {alpha: array of shape (len(ks), nx, ny)}.  Ball membership is
    integer-exact (offsets with di^2 + dj^2 < k^2), the divisor counts the
    in-grid cells, and each sum is accumulated as a Python integer before a
    single correctly rounded conversion to float.
    """
    grid = f.grid
    nx, ny, h = grid.nx, grid.ny, grid.h
    ks = list(ks)
    ints, q = exact_ints(f.values)
    kmax = max(ks)
    offs = sorted(
        (di * di + dj * dj, di, dj)
        for di in range(-kmax + 1, kmax)
        for dj in range(-kmax + 1, kmax)
        if di * di + dj * dj < kmax * kmax
    )
    d2s = np.array([o[0] for o in offs])
    dis = np.array([o[1] for o in offs])
    djs = np.array([o[2] for o in offs])
    k2s = np.array([k * k for k in ks])
    pows = {a: [float(k * h) ** a for k in ks] for a in alphas}
    out = {a: np.zeros((len(ks), nx, ny)) for a in alphas}
    for i in range(nx):
        for j in range(ny):
            ii = dis + i
            jj = djs + j
            ok = (ii >= 0) & (ii < nx) & (jj >= 0) & (jj < ny)
            d2v = d2s[ok]
            lin = ii[ok] * ny + jj[ok]
            pref = list(itertools.accumulate(ints[t] for t in lin))
            cuts = np.searchsorted(d2v, k2s, side="left")
            for t, (k, cut) in enumerate(zip(ks, cuts)):
                if cut == 0:
                    continue
                avg = math.ldexp(float(pref[cut - 1]), q) / int(cut)
                for a in alphas:
                    out[a][t, i, j] = pows[a][t] * avg
    return out


def oracle_reduce(cands: np.ndarray, ks, h: float, pred=None):
    """Streaming max over radii (strict improvement keeps the smaller one)."""
    nx, ny = cands.shape[1:]
    best = np.zeros((nx, ny))
    argr = np.zeros((nx, ny))
    for t, k in enumerate(ks):
        if pred is not None and not pred(k):
            continue
        vals = cands[t]
        upd = vals > best
        best = np.where(upd, vals, best)
        argr = np.where(upd, k * h, argr)
    return best, argr


def oracle_maximal(f: ScalarField, alpha: float, rset: RadiusSet, pred=None):
    cands = oracle_candidates(f, [alpha], rset.ks)[alpha]
    return oracle_reduce(cands, rset.ks, rset.h, pred)


def direct_riesz(f: ScalarField, alpha: float, self_weight: float) -> np.ndarray:
    """Dense O(cells^2) evaluation of the kernel sum behind the potential."""
    grid = f.grid
    nx, ny, h = grid.nx, grid.ny, grid.h
    vals = np.abs(f.values)
    out = np.zeros((nx, ny))
    for i in range(nx):
        for j in range(ny):
            acc = 0.0
            for ii in range(nx):
                for jj in range(ny):
                    v = vals[ii, jj]
                    if v == 0.0:
                        continue
                    if ii == i and jj == j:
                        acc += v * self_weight
                    else:
                        d = math.hypot((ii - i) * h, (jj - j) * h)
                        acc += v * d ** (alpha - 2.0) * h * h
            out[i, j] = acc
    return out


def lorentz_by_quadrature(f: ScalarField, q: float, s: float) -> float:
    """Numeric integral of the distribution-function formula for the norm."""
    from scipy.integrate import quad

    vals = np.abs(f.values[f.grid.mask])
    h2 = f.grid.cell_area
    knots = np.unique(vals[vals > 0])
    if knots.size == 0:
        return 0.0

    def d(lam):
        return float((vals > lam).sum()) * h2

    if math.isinf(s):
        lams = np.concatenate([knots * (1 - 1e-12), knots * 0.5])
        return float(max(lam * d(lam) ** (1.0 / q) for lam in lams))
    total = 0.0
    edges = np.concatenate([[0.0], knots])
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = quad(
            lambda lam: q * lam ** (s - 1.0) * d(lam) ** (s / q),
            lo, hi, limit=200,
        )
        total += val
    return total ** (1.0 / s)


def bmap_reference(p: float, varsigma: float, bform: str, fx, fy):
    """Data map |xi|^{p-2} xi or its full-growth variant, recomputed."""
    fx = np.asarray(fx, dtype=float)
    fy = np.asarray(fy, dtype=float)
    mag = np.hypot(fx, fy)
    with np.errstate(divide="ignore", invalid="ignore"):
        if bform == "p1":
            m = mag ** (p - 2.0)
        else:
            m = (varsigma**2 + mag**2) ** ((p - 1.0) / 2.0) / mag
    m = np.where(mag == 0, 0.0, m)
    return m * fx, m * fy


def energy_reference(prob, u_values: np.ndarray) -> float:
    """Independent four-corner quadrature energy of a full-lattice iterate.

    Plain Python loops over active cells; each corner whose two neighbors
    are active contributes a quarter cell.
    """
    grid = prob.grid
    op = prob.op
    h = grid.h
    p, vs = op.p, op.varsigma
    act = prob.active_cells()
    a = op.coeff.values
    bx, by = bmap_reference(p, vs, op.bform, prob.F.vx, prob.F.vy)
    total = 0.0
    nx, ny = grid.nx, grid.ny
    for i in range(nx):
        for j in range(ny):
            if not act[i, j]:
                continue
            for sx in (-1, 1):
                for sy in (-1, 1):
                    ni, nj = i + sx, j + sy
                    if not (0 <= ni < nx and act[ni, j]):
                        continue
                    if not (0 <= nj < ny and act[i, nj]):
                        continue
                    gx = sx * (u_values[ni, j] - u_values[i, j]) / h
                    gy = sy * (u_values[i, nj] - u_values[i, j]) / h
                    dens = (vs**2 + gx * gx + gy * gy) ** (p / 2.0)
                    total += 0.25 * h * h * (
                        a[i, j] * dens / p - bx[i, j] * gx - by[i, j] * gy
                    )
    return total


def _corner_terms(prob, u, cells) -> float:
    """Sum of the quadrature terms owned by the given cells."""
    grid = prob.grid
    op = prob.op
    h = grid.h
    p, vs = op.p, op.varsigma
    act = prob.active_cells()
    a = op.coeff.values
    bx, by = bmap_reference(p, vs, op.bform, prob.F.vx, prob.F.vy)
    nx, ny = grid.nx, grid.ny
    total = 0.0
    for i, j in cells:
        if not (0 <= i < nx and 0 <= j < ny and act[i, j]):
            continue
        for sx in (-1, 1):
            ni = i + sx
            if not (0 <= ni < nx and act[ni, j]):
                continue
            for sy in (-1, 1):
                nj = j + sy
                if not (0 <= nj < ny and act[i, nj]):
                    continue
                gx = sx * (u[ni, j] - u[i, j]) / h
                gy = sy * (u[i, nj] - u[i, j]) / h
                dens = (vs**2 + gx * gx + gy * gy) ** (p / 2.0)
                total += 0.25 * h * h * (
                    a[i, j] * dens / p - bx[i, j] * gx - by[i, j] * gy
                )
    return total


def complementarity_residual(prob, u_field, delta: float = 1e-7,
                             n_probe: int = 80) -> float:
    """Projected first-order optimality gap measured by energy differences.

    At free cells strictly inside the obstacles both one-sided energy
    slopes must vanish; at a pinned cell only the feasible direction is
    required not to decrease the energy.  Only the quadrature terms that
    involve the probed cell are re-evaluated.
    """
    act = prob.active_cells()
    ring = prob.dirichlet_ring()
    free = act & ~ring
    u = u_field.values.copy()
    scale = max(1.0, float(np.abs(u[act]).max()))
    step = delta * scale
    worst = 0.0
    f1 = prob.f1.values if prob.f1 is not None else None
    f2 = prob.f2.values if prob.f2 is not None else None
    ii, jj = np.nonzero(free)
    rng = np.random.default_rng(5)
    take = rng.choice(ii.size, size=min(n_probe, ii.size), replace=False)
    for t in take:
        i, j = int(ii[t]), int(jj[t])
        near = [(i, j), (i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)]
        e0 = _corner_terms(prob, u, near)
        at_lo = f1 is not None and u[i, j] <= f1[i, j] + 1e-12 * scale
        at_hi = f2 is not None and u[i, j] >= f2[i, j] - 1e-12 * scale
        for sgn in (+1.0, -1.0):
            if sgn > 0 and at_hi:
                continue
            if sgn < 0 and at_lo:
                continue
            u[i, j] += sgn * step
            e1 = _corner_terms(prob, u, near)
            u[i, j] -= sgn * step
            slope = (e1 - e0) / step
            worst = max(worst, -slope)
    return worst
