"""Rearrangement-invariant norms on lattice fields.

Lorentz norms are computed in closed form: the distribution function of a
lattice field is a step function, so the defining level integral is a finite
sum of exact power-law segment integrals (no quadrature error).  Orlicz and
Orlicz-Lorentz norms are Luxemburg-type gauges evaluated by bisection on the
scaling parameter.

Young function growth is certified empirically: sampled doubling exponents
give an upper growth index (p1, K1) and a lower index (p2, K2) such that

    Phi(a mu) <= K1 a^{p1} Phi(mu)   for a > 1,
    Phi(a mu) <= K2 a^{p2} Phi(mu)   for a < 1,

on the sampled range.  Doubling fails when the fitted exponent keeps growing
with mu; the lower index exceeding 1 certifies the complementary-doubling
property used by the norm comparison rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid import ScalarField

__all__ = [
    "YoungFn",
    "young_power",
    "young_plog",
    "young_exp",
    "YoungCertificate",
    "certify_young",
    "lorentz_norm",
    "luxemburg_norm",
    "orlicz_lorentz_norm",
    "NormSpec",
    "evaluate_norm",
]


@dataclass(frozen=True)
class YoungFn:
    """A Young function with an optional stable log-scale evaluator."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray]
    log_fn: Callable[[np.ndarray], np.ndarray] | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, mu):
        return self.fn(np.asarray(mu, dtype=np.float64))

    def log_eval(self, mu):
        """log Phi(mu) for mu > 0, overflow-safe when log_fn is provided."""
        mu = np.asarray(mu, dtype=np.float64)
        if self.log_fn is not None:
            return self.log_fn(mu)
        with np.errstate(divide="ignore"):
            return np.log(self.fn(mu))


def young_power(p: float) -> YoungFn:
    """Phi(mu) = mu^p, the model doubling Young function (p > 1)."""
    if p <= 1:
        raise ValueError("power Young function needs p > 1")
    return YoungFn(
        f"power({p:g})",
        lambda mu: mu**p,
        log_fn=lambda mu: p * np.log(mu),
        params={"p": p},
    )


def young_plog(p: float) -> YoungFn:
    """Phi(mu) = mu^p log(e + mu), a doubling perturbation of the power."""
    if p <= 1:
        raise ValueError("log-perturbed power needs p > 1")
    return YoungFn(
        f"plog({p:g})",
        lambda mu: mu**p * np.log(math.e + mu),
        log_fn=lambda mu: p * np.log(mu) + np.log(np.log(math.e + mu)),
        params={"p": p},
    )


def young_exp() -> YoungFn:
    """Phi(mu) = e^mu - 1; exponential growth, doubling fails."""

    def _log(mu):
        return mu + np.log1p(-np.exp(-mu))

    return YoungFn("exp", lambda mu: np.expm1(mu), log_fn=_log)


@dataclass(frozen=True)
class YoungCertificate:
    """Outcome of the empirical growth certification of a Young function."""

    name: str
    young_ok: bool
    p1: float
    K1: float
    delta2_ok: bool
    p2: float
    K2: float
    nabla2_ok: bool
    mu_range: tuple[float, float]
    messages: tuple[str, ...]

    @property
    def sandwich_constant(self) -> float:
        """max(K1, K2); the constant in the norm/modular sandwich bounds."""
        return max(self.K1, self.K2)


def certify_young(
    phi: YoungFn,
    mu_range: tuple[float, float] = (1e-3, 1e3),
    n_mu: int = 121,
    growth_cap: float = 1e3,
) -> YoungCertificate:
    """Certify convexity, monotonicity and doubling indices on samples."""
    lo, hi = mu_range
    if not (0 < lo < hi):
        raise ValueError("mu_range must be positive and increasing")
    mus = np.geomspace(lo, hi, n_mu)
    msgs: list[str] = []
    ok = True

    with np.errstate(over="ignore"):
        vals = np.asarray(phi(mus), dtype=np.float64)
    finite = np.isfinite(vals)
    if not finite.all():
        cut = int(np.argmin(finite))
        msgs.append(f"values overflow above mu={mus[cut]:.3g}; checks truncated")
        mus, vals = mus[:cut], vals[:cut]
    if mus.size < 8:
        raise ValueError("too few finite samples to certify")

    if abs(float(phi(np.array(0.0)))) > 0:
        ok = False
        msgs.append("Phi(0) != 0")
    if not (np.diff(vals) > 0).all():
        ok = False
        msgs.append("not strictly increasing on samples")
    slopes = np.diff(vals) / np.diff(mus)
    if not (np.diff(slopes) >= -1e-9 * np.abs(slopes[1:]).max()).all():
        ok = False
        msgs.append("chord slopes decrease somewhere: not convex on samples")
    ratios = vals / mus
    if not ratios[-1] > ratios[0] * (1 + 1e-9):
        ok = False
        msgs.append("Phi(mu)/mu not increasing: superlinearity not visible")

    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        logs = np.asarray(phi.log_eval(mus), dtype=np.float64)

    def _exponents(a: float) -> np.ndarray:
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            la = np.asarray(phi.log_eval(a * mus), dtype=np.float64)
        good = np.isfinite(la) & np.isfinite(logs)
        return (la[good] - logs[good]) / math.log(a)

    ups = [1.5, 2.0, 4.0, 8.0, 16.0]
    half = mus.size // 2
    e_low, e_all = [], []
    for a in ups:
        e = _exponents(a)
        e_all.append(e)
        e_low.append(e[: max(half, 1)])
    p1 = float(max(e.max() for e in e_all))
    p1_low = float(max(e.max() for e in e_low))
    delta2_ok = ok and p1 <= growth_cap and (p1 - p1_low) <= max(0.25, 0.05 * abs(p1_low))
    if not delta2_ok and ok:
        msgs.append(
            f"doubling exponent grows with mu (low {p1_low:.3g} vs full {p1:.3g})"
        )

    k1 = 1.0
    for a in ups:
        e = _exponents(a)
        k1 = max(k1, float(np.exp(((e - p1) * math.log(a)).max())))

    e_dn = [_exponents(1.0 / a) for a in ups]
    p2 = float(min(e.min() for e in e_dn))
    k2 = 1.0
    for a, e in zip(ups, e_dn):
        k2 = max(k2, float(np.exp(((p2 - e) * math.log(a)).max())))
    nabla2_ok = ok and p2 > 1 + 1e-9
    if ok and not nabla2_ok:
        msgs.append(f"lower growth index {p2:.6g} <= 1")

    return YoungCertificate(
        phi.name, ok, p1, k1, delta2_ok, p2, k2, nabla2_ok,
        (float(mus[0]), float(mus[-1])), tuple(msgs),
    )


def _lorentz_from_values(vals: np.ndarray, h2: float, q: float, s: float) -> float:
    """Lorentz q,s norm of |vals| with cell measure h2 (exact step integral)."""
    if not (q > 0):
        raise ValueError("lorentz norm needs q > 0")
    if not (s > 0):
        raise ValueError("lorentz norm needs s > 0 (math.inf allowed)")
    av = np.abs(np.asarray(vals, dtype=np.float64)).ravel()
    sv = np.sort(av)
    knots = np.unique(sv)
    knots = knots[knots > 0]
    if knots.size == 0:
        return 0.0
    # d on [t_{k-1}, t_k) is the count of values >= t_k, scaled by h2
    above = (sv.size - np.searchsorted(sv, knots, side="left")) * h2
    t_hi = knots
    t_lo = np.concatenate(([0.0], knots[:-1]))
    if math.isinf(s):
        return float(np.max(t_hi * above ** (1.0 / q)))
    terms = (q / s) * above ** (s / q) * (t_hi**s - t_lo**s)
    return math.fsum(terms.tolist()) ** (1.0 / s)


def lorentz_norm(f: ScalarField, q: float, s: float) -> float:
    """Lorentz norm over the domain; s = math.inf gives the weak norm."""
    return _lorentz_from_values(f.values[f.grid.mask], f.grid.cell_area, q, s)


def _gauge_bisect(J, vmax: float, tol: float, max_iter: int) -> float:
    """Smallest tau with J(tau) <= 1 for a decreasing gauge J; 0 if vmax=0."""
    if vmax == 0:
        return 0.0
    hi = vmax
    it = 0
    while J(hi) > 1:
        hi *= 2
        it += 1
        if it > 2000:
            raise ArithmeticError("gauge bracket failed to close from above")
    lo = hi / 2
    while J(lo) <= 1:
        hi = lo
        lo /= 2
        if lo < 1e-280:
            return 0.0
    for _ in range(max_iter):
        if hi - lo <= tol * hi:
            break
        mid = 0.5 * (lo + hi)
        if J(mid) <= 1:
            hi = mid
        else:
            lo = mid
    return hi


def luxemburg_norm(
    f: ScalarField, phi: YoungFn, tol: float = 1e-8, max_iter: int = 200
) -> float:
    """Luxemburg gauge inf{tau : integral of Phi(|f|/tau) <= 1}."""
    vals = np.abs(f.values[f.grid.mask])
    h2 = f.grid.cell_area

    def J(tau):
        with np.errstate(over="ignore"):
            return h2 * math.fsum(np.asarray(phi(vals / tau)).tolist())

    return _gauge_bisect(J, float(vals.max(initial=0.0)), tol, max_iter)


def orlicz_lorentz_norm(
    f: ScalarField, phi: YoungFn, q: float, s: float,
    tol: float = 1e-8, max_iter: int = 200,
) -> float:
    """Gauge inf{tau : lorentz norm of Phi(|f|/tau) <= 1}."""
    vals = np.abs(f.values[f.grid.mask])
    h2 = f.grid.cell_area

    def J(tau):
        with np.errstate(over="ignore"):
            return _lorentz_from_values(np.asarray(phi(vals / tau)), h2, q, s)

    return _gauge_bisect(J, float(vals.max(initial=0.0)), tol, max_iter)


@dataclass(frozen=True)
class NormSpec:
    """Which rearrangement-invariant norm to evaluate."""

    space: str  # "lorentz" | "orlicz" | "orlicz_lorentz"
    q: float | None = None
    s: float | None = None
    phi: YoungFn | None = None

    def __post_init__(self):
        if self.space not in ("lorentz", "orlicz", "orlicz_lorentz"):
            raise ValueError(f"unknown space {self.space!r}")
        if self.space in ("lorentz", "orlicz_lorentz") and (
            self.q is None or self.s is None
        ):
            raise ValueError(f"{self.space} needs q and s")
        if self.space in ("orlicz", "orlicz_lorentz") and self.phi is None:
            raise ValueError(f"{self.space} needs a Young function")

    @property
    def label(self) -> str:
        if self.space == "lorentz":
            return f"L({self.q:g},{self.s:g})"
        if self.space == "orlicz":
            return f"L_{self.phi.name}"
        return f"L_{self.phi.name}({self.q:g},{self.s:g})"


def evaluate_norm(f: ScalarField, spec: NormSpec) -> float:
    if spec.space == "lorentz":
        return lorentz_norm(f, spec.q, spec.s)
    if spec.space == "orlicz":
        return luxemburg_norm(f, spec.phi)
    return orlicz_lorentz_norm(f, spec.phi, spec.q, spec.s)
