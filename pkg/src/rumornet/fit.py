"""Least-squares estimation for the growth law and its coefficient laws.

Curve fits solve for (a, eps) with b = 0 and C tied to the initial condition,
using scipy's trust-region reflective solver. Law fits that are linear in
some coefficients are solved by variable projection: the nonlinear coefficient
is searched in one dimension with the linear ones eliminated exactly.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import bisect, least_squares, minimize_scalar

from .model import (
    FITTED_USG_RANGE,
    TABLE2,
    CurveCoefficients,
    UsgPolynomials,
    epsilon_law_raw,
    eval_F,
    law_coeffs_of_usg,
)
from .netgen import SurveyDistributions
from .spread import BurnSeries

XTOL = 1e-8
MAX_ITER = 200
EPS_BOUNDS = (1e-6, 1.0 - 1e-9)


class FitError(ValueError):
    pass


@dataclass
class FitResult:
    coefficients: object
    residual_norm: float
    r_squared: float
    iterations_used: int = 0
    converged: bool = True
    gradient_norm: float = 0.0
    flags: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        c = self.coefficients
        if hasattr(c, "to_dict"):
            c = c.to_dict()
        return {
            "coefficients": c,
            "residual_norm": self.residual_norm,
            "r_squared": self.r_squared,
            "iterations_used": self.iterations_used,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
            "tolerances": {"xtol": XTOL, "max_iter": MAX_ITER},
            "flags": list(self.flags),
            **self.extra,
        }


def r_squared(y, yhat) -> float:
    y, yhat = np.asarray(y, float), np.asarray(yhat, float)
    sst = float(np.sum((y - y.mean()) ** 2))
    ssr = float(np.sum((y - yhat) ** 2))
    return 1.0 - ssr / sst if sst > 0 else (1.0 if ssr == 0 else 0.0)


def _curve(t, a, eps, p_ii):
    return eval_F(t, CurveCoefficients.from_initial(a, eps, p_ii))


def _solve_curve(t, f, p_ii, a0, eps0) -> tuple:
    def resid(x):
        return _curve(t, x[0], x[1], p_ii) - f

    x0 = np.array([a0, min(max(eps0, EPS_BOUNDS[0]), EPS_BOUNDS[1])])
    res = least_squares(resid, x0, bounds=([1e-9, EPS_BOUNDS[0]], [np.inf, EPS_BOUNDS[1]]),
                        method="trf", x_scale="jac", xtol=XTOL, ftol=1e-15, gtol=1e-15,
                        max_nfev=MAX_ITER)
    return res


def _curve_result(res, t, f, p_ii) -> FitResult:
    a, eps = (float(v) for v in res.x)
    coeffs = CurveCoefficients.from_initial(a, eps, p_ii)
    fhat = eval_F(t, coeffs)
    flags = []
    if not res.success:
        flags.append("not converged")
    if eps >= EPS_BOUNDS[1] * (1 - 1e-9):
        flags.append("epsilon at logistic bound")
    return FitResult(
        coefficients=coeffs,
        residual_norm=float(np.sum((f - fhat) ** 2)),
        r_squared=r_squared(f, fhat),
        iterations_used=int(res.nfev),
        converged=bool(res.success),
        gradient_norm=float(res.optimality),
        flags=flags,
    )


def fit_curve(series, p_ii: Optional[float] = None) -> FitResult:
    """Fit (a, eps) of the growth law to a burn series sampled at n = 0, 1, ...

    ``p_ii`` defaults to f(0); if given it must agree with f(0) within 1e-3.
    """
    f = np.asarray(series.f if isinstance(series, BurnSeries) else series, dtype=float)
    if len(f) < 4:
        raise FitError("need at least 4 points")
    if p_ii is None:
        p_ii = float(f[0])
    elif abs(p_ii - f[0]) > 1e-3:
        raise FitError(f"p_ii={p_ii} disagrees with f(0)={f[0]}")
    if not 0.0 < p_ii < 1.0:
        raise FitError("p_ii must be in (0, 1)")
    if f.max() - f[0] < 1e-9:
        raise FitError("no growth")
    t = np.arange(len(f), dtype=float)
    half = (1.0 + p_ii) / 2.0
    above = np.flatnonzero(f > half)
    a0 = float(above[0]) if len(above) and above[0] > 0 else float(len(f) - 1)
    res = _solve_curve(t, f, p_ii, a0, 0.9)
    return _curve_result(res, t, f, p_ii)


def fit_four_points(points: Sequence, p_ii: float, max_fraction: float = 0.2) -> FitResult:
    """Fit the growth law to a handful of early (t, F) observations.

    All F must be below ``max_fraction``. Starts are taken over a small
    deterministic grid of eps values and the best local solution kept.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 4:
        raise FitError("need at least 4 (t, F) points")
    t, f = pts[:, 0], pts[:, 1]
    if len(np.unique(t)) != len(t):
        raise FitError("t values must be distinct")
    if np.any(f >= max_fraction):
        raise FitError(f"all F must be below {max_fraction}")
    if not 0.0 < p_ii < 1.0:
        raise FitError("p_ii must be in (0, 1)")
    if np.all(f <= p_ii):
        raise FitError("degenerate: no growth above the seed fraction")
    # logit slope of the growth gives a rough time scale
    logit = np.log(np.clip(f, 1e-12, None) / (1 - f))
    slope = np.polyfit(t, logit, 1)[0] if np.ptp(t) > 0 else 0.0
    if not slope > 0:
        raise FitError("degenerate: no growth trend in the points")
    best = None
    for eps0 in (0.3, 0.6, 0.9, 0.99):
        a0 = (1.0 + eps0) / slope
        res = _solve_curve(t, f, p_ii, a0, eps0)
        if best is None or res.cost < best.cost:
            best = res
    return _curve_result(best, t, f, p_ii)


def _laws_from_samples(samples, ncols, name) -> np.ndarray:
    arr = np.asarray(samples, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != ncols:
        raise FitError(f"{name}: samples must be rows of {ncols} values")
    return arr


def fit_epsilon_law(samples: Sequence, units: str = "fraction") -> FitResult:
    """Fit eps = 1 + aa P_II / (1 + exp(bb inv_a)) to (inv_a, eps, p_ii) rows.

    ``p_ii`` is taken in the given ``units``. aa is constrained negative.
    """
    arr = _laws_from_samples(samples, 3, "fit_epsilon_law")
    x, eps, p = arr.T
    flags = []
    if len(arr) < 4 or len(np.unique(x)) < 2:
        raise FitError("underdetermined: need >= 4 samples with distinct inv_a")
    if len(np.unique(p)) < 2:
        flags.append("underdetermined: single p_ii value")
    y = eps - 1.0

    def aa_for(bb):
        basis = p / (1.0 + np.exp(np.clip(bb * x, -700, 700)))
        aa = float(basis @ y / (basis @ basis))
        return min(aa, -1e-300), basis

    def cost(bb):
        aa, basis = aa_for(bb)
        r = y - aa * basis
        return float(r @ r)

    span = 50.0 / max(np.max(np.abs(x)), 1e-12)
    grid = np.linspace(-span, span, 401)
    costs = [cost(b) for b in grid]
    i = int(np.argmin(costs))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    opt = minimize_scalar(cost, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12 * max(1.0, abs(grid[i]))})
    bb = float(opt.x)
    aa0, _ = aa_for(bb)

    def resid(c):
        return 1.0 + c[0] * p / (1.0 + np.exp(np.clip(c[1] * x, -700, 700))) - eps

    res = least_squares(resid, [aa0, bb], bounds=([-np.inf, -np.inf], [0.0, np.inf]),
                        xtol=XTOL, ftol=1e-15, gtol=1e-15, max_nfev=MAX_ITER, x_scale="jac")
    aa, bb = (float(v) for v in res.x)
    if not aa < 0:
        flags.append("sign violation: aa >= 0")
    fhat = eps + resid(res.x)
    return FitResult({"aa": aa, "bb": bb, "units": units}, float(np.sum(res.fun ** 2)),
                     r_squared(eps, fhat), int(res.nfev), bool(res.success),
                     float(res.optimality), flags)


def fit_power_law(samples: Sequence, units: str = "fraction") -> FitResult:
    """Fit 1/a = cc P_IP^ee (1 + gg P_II) to (p_ip, p_ii, inv_a) rows.

    Stage one regresses log inv_a on log p_ip ignoring P_II. Stage two adds
    the (1 + gg P_II) factor and refines all three in log space starting from
    gg = 0, so the corrected fit is never worse. Collapse quality is reported
    as log-space r^2 for both stages.
    """
    arr = _laws_from_samples(samples, 3, "fit_power_law")
    pip, pii, inv_a = arr.T
    if len(arr) < 6 or len(np.unique(pii)) < 2 or len(np.unique(pip)) < 2:
        raise FitError("underdetermined: need >= 6 samples over >= 2 p_ii and >= 2 p_ip values")
    if np.any(pip <= 0) or np.any(inv_a <= 0):
        raise FitError("p_ip and inv_a must be positive")
    ly, lx = np.log(inv_a), np.log(pip)
    ee1, lcc1 = np.polyfit(lx, ly, 1)
    r2_before = r_squared(ly, lcc1 + ee1 * lx)

    def resid(c):
        return c[0] + c[1] * lx + np.log1p(np.maximum(c[2] * pii, -1 + 1e-12)) - ly

    res = least_squares(resid, [lcc1, ee1, 0.0], xtol=XTOL, ftol=1e-15, gtol=1e-15,
                        max_nfev=MAX_ITER, x_scale="jac")
    lcc, ee, gg = (float(v) for v in res.x)
    if np.sum(res.fun ** 2) > np.sum((lcc1 + ee1 * lx - ly) ** 2):
        # solver drifted; the stage-one point is feasible and better
        lcc, ee, gg = float(lcc1), float(ee1), 0.0
    cc = math.exp(lcc)
    h = inv_a / (1.0 + gg * pii)
    r2_after = r_squared(np.log(h), lcc + ee * lx)
    fitted = lcc + ee * lx + np.log1p(gg * pii)
    return FitResult(
        {"cc": cc, "ee": ee, "gg": gg, "units": units},
        float(np.sum((fitted - ly) ** 2)), r2_after, int(res.nfev), bool(res.success),
        float(res.optimality), [],
        extra={"stage1": {"cc": math.exp(lcc1), "ee": float(ee1)},
               "collapse_r2_before": r2_before, "collapse_r2_after": r2_after},
    )


def _fit_rational_quartic(p, y) -> tuple:
    """y = x1 + x2 p^4 / (1 + x3 p^3), x3 >= 0, by projection over log x3."""

    def linear(x3):
        basis = p ** 4 / (1.0 + x3 * p ** 3)
        A = np.column_stack([np.ones_like(p), basis])
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        r = y - A @ coef
        return coef, float(r @ r)

    pmax = max(np.max(np.abs(p)), 1e-12)
    # x3 spans "negligible" to "dominant" relative to p^3
    logs = np.linspace(np.log(1e-6 / pmax ** 3), np.log(1e6 / pmax ** 3), 601)
    costs = [linear(math.exp(s))[1] for s in logs]
    zero_cost = linear(0.0)[1]
    i = int(np.argmin(costs))
    if zero_cost <= costs[i]:
        coef, cost = linear(0.0)
        return (float(coef[0]), float(coef[1]), 0.0), cost
    lo, hi = logs[max(i - 1, 0)], logs[min(i + 1, len(logs) - 1)]
    opt = minimize_scalar(lambda s: linear(math.exp(s))[1], bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12})
    x3 = math.exp(opt.x)
    coef, cost = linear(x3)
    return (float(coef[0]), float(coef[1]), x3), cost


def fit_usg_polynomials(rows: Sequence) -> FitResult:
    """Fit the P_USG dependence of each law coefficient.

    ``rows`` are (p_usg, LawCoefficients) pairs in any units; they are
    converted to fraction units first.
    """
    if len(rows) < 4:
        raise FitError("need at least 4 rows")
    p = np.array([float(r[0]) for r in rows])
    laws = [r[1].to_fraction() for r in rows]
    if len(np.unique(p)) < 4:
        raise FitError("need at least 4 distinct p_usg values")
    out, ssr, r2 = {}, {}, {}
    for name in ("aa", "cc", "ee"):
        y = np.array([getattr(l, name) for l in laws])
        c2, c1, c0 = np.polyfit(p, y, 2)
        out[name] = (float(c0), float(c1), float(c2))
        yhat = c0 + c1 * p + c2 * p * p
        ssr[name], r2[name] = float(np.sum((y - yhat) ** 2)), r_squared(y, yhat)
    for name in ("bb", "gg"):
        y = np.array([getattr(l, name) for l in laws])
        out[name], ssr[name] = _fit_rational_quartic(p, y)
        c = out[name]
        r2[name] = r_squared(y, c[0] + c[1] * p ** 4 / (1 + c[2] * p ** 3))
    poly = UsgPolynomials(**out)
    return FitResult(poly, float(sum(ssr.values())), float(min(r2.values())),
                     extra={"per_coefficient_ssr": ssr, "per_coefficient_r2": r2})


def fit_group_size_cdf(sizes, dist: Optional[SurveyDistributions] = None,
                       truncated: bool = True) -> FitResult:
    """Fit the exponential group-size CDF to observed sizes.

    With ``truncated=True`` the model is the CDF renormalized to the size
    window [min, max]; the shift a_shift cancels there and is not estimated.
    ``truncated=False`` fits 1 - exp(-lam (N - a)) directly, which is the
    right model only when the empirical CDF is taken over a wider population
    of groups.
    """
    dist = dist or SurveyDistributions()
    s = np.asarray(sizes)
    if len(s) < 30:
        raise FitError("need at least 30 sizes")
    lo_s, hi_s = dist.min_group_size, dist.max_group_size
    if s.min() < lo_s or s.max() > hi_s:
        raise FitError(f"sizes must lie in [{lo_s}, {hi_s}]")
    support = np.arange(lo_s, hi_s + 1)
    ecdf = np.searchsorted(np.sort(s), support, side="right") / len(s)
    if len(np.unique(s)) < 2:
        raise FitError("degenerate: all sizes equal")
    width = hi_s - (lo_s - 1)

    if truncated:
        def model(lam):
            return (-np.expm1(-lam * (support - (lo_s - 1)))) / (-math.expm1(-lam * width))

        opt = minimize_scalar(lambda lam: float(np.sum((model(lam) - ecdf) ** 2)),
                              bounds=(1e-6, 5.0), method="bounded", options={"xatol": 1e-12})
        lam, a_shift = float(opt.x), None
        fhat = model(lam)
        flags = ["a_shift not identifiable from a truncated sample"]
        nit = int(opt.nfev)
        ok = bool(opt.success)
    else:
        res = least_squares(lambda c: 1 - np.exp(-c[0] * (support - c[1])) - ecdf,
                            [0.1, 1.0], xtol=XTOL, max_nfev=MAX_ITER)
        lam, a_shift = (float(v) for v in res.x)
        fhat = 1 - np.exp(-lam * (support - a_shift))
        flags, nit, ok = [], int(res.nfev), bool(res.success)
    return FitResult({"lam": lam, "a_shift": a_shift},
                     float(np.sum((ecdf - fhat) ** 2)), r_squared(ecdf, fhat), nit, ok, 0.0, flags)


@dataclass
class InferredNetwork:
    p_ii: float
    p_ip: float
    p_usg: float
    coeffs: CurveCoefficients
    diagnostics: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"p_ii": self.p_ii, "p_ip": self.p_ip, "p_usg": self.p_usg,
                "coeffs": self.coeffs.to_dict(), "diagnostics": self.diagnostics,
                "flags": list(self.flags)}


def infer_network_params(series, p_ii: Optional[float] = None,
                         poly: UsgPolynomials = TABLE2, tol: float = 1e-6) -> InferredNetwork:
    """Recover (P_IP, P_USG) from an observed burn series and known P_II.

    The series is fitted for (a, eps); P_USG is the root of the eps law in
    [0, 0.1] at that a, then P_IP follows by inverting the 1/a law.
    """
    fit = fit_curve(series, p_ii)
    coeffs = fit.coefficients
    p_ii = coeffs.p_ii
    a, eps = coeffs.a, coeffs.epsilon
    flags = list(fit.flags)
    diag = {"curve_fit": fit.to_dict()}
    lo, hi = FITTED_USG_RANGE

    def residual(pu):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return epsilon_law_raw(a, p_ii, law_coeffs_of_usg(pu, poly)) - eps

    r_lo, r_hi = residual(lo), residual(hi)
    if eps >= 1.0 - 1e-6:
        flags.append("p_usg indeterminate: fitted eps ~ 1 (P_II -> 0 regime)")
        p_usg = lo if abs(r_lo) <= abs(r_hi) else hi
    elif r_lo * r_hi > 0:
        p_usg = lo if abs(r_lo) <= abs(r_hi) else hi
        flags.append(f"no root for p_usg in [{lo}, {hi}]; boundary value returned")
    elif r_lo == 0:
        p_usg = lo
    elif r_hi == 0:
        p_usg = hi
    else:
        p_usg = float(bisect(residual, lo, hi, xtol=tol))
    diag["epsilon_residual"] = residual(p_usg)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        laws = law_coeffs_of_usg(p_usg, poly)
    p_ip = ((1.0 / a) / (laws.cc * (1.0 + laws.gg * p_ii))) ** (1.0 / laws.ee)
    if p_ip > 1.0:
        flags.append("inferred p_ip above 1")
    diag["laws_at_p_usg"] = laws.to_dict()
    return InferredNetwork(p_ii, float(p_ip), float(p_usg), coeffs, diag, flags)
