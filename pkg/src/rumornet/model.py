"""Closed-form growth law for the burned fraction and its coefficient chain.

    F(t) = (C e^{(1+eps)(t-b)/a} - 1) / (2 eps/(1-eps) + C e^{(1+eps)(t-b)/a})

interpolates between an exponential approach to 1 (eps -> 0) and a logistic
(eps -> 1). With G = (1-eps)/(2 eps) the same law reads

    F = 1 - (1 + G) / (1 + G C e^{(1+eps)(t-b)/a}),

which is what is evaluated here. It solves dF/dt = (2 eps/a)(G + F)(1 - F).

The coefficients (a, eps) follow from (P_II, P_IP) through fitted laws whose
coefficients are themselves polynomial in P_USG.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.special import expit

# eps at or above this is treated as the logistic limit
EPS_LOGISTIC = 1.0 - 1e-9
FITTED_USG_RANGE = (0.0, 0.1)


class RangeWarning(UserWarning):
    """Parameters outside the range the laws were fitted on."""


@dataclass(frozen=True)
class CurveCoefficients:
    a: float
    epsilon: float
    c: float
    b: float = 0.0
    # initial burned fraction, needed for the logistic limit where c diverges
    p_ii: Optional[float] = None

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("a must be positive")
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must be in (0, 1]")
        if self.epsilon < EPS_LOGISTIC and not self.c > 0:
            raise ValueError("c must be positive")
        if self.epsilon >= EPS_LOGISTIC and self.p_ii is None:
            raise ValueError("logistic limit needs p_ii attached")

    @property
    def invisible_population(self) -> float:
        return invisible_population(self.epsilon)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_initial(cls, a: float, epsilon: float, p_ii: float, b: float = 0.0) -> "CurveCoefficients":
        """Coefficients with C pinned so that F(0) = p_ii."""
        if epsilon >= EPS_LOGISTIC:
            return cls(a=a, epsilon=epsilon, c=math.inf, b=b, p_ii=p_ii)
        return cls(a=a, epsilon=epsilon, c=c_from_initial(a, b, epsilon, p_ii), b=b, p_ii=p_ii)


def invisible_population(epsilon: float) -> float:
    """G = (1 - eps) / (2 eps)."""
    return (1.0 - epsilon) / (2.0 * epsilon)


def c_from_initial(a: float, b: float, epsilon: float, p_ii: float) -> float:
    """Amplitude C that makes F(0) equal the seed fraction p_ii."""
    if not 0.0 < p_ii < 1.0:
        raise ValueError("p_ii must be in (0, 1)")
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must be in (0, 1); use the logistic limit for eps = 1")
    g = invisible_population(epsilon)
    return (1.0 + p_ii / g) / ((1.0 - p_ii) * math.exp((1.0 + epsilon) * b / a))


def eval_F(t, coeffs: CurveCoefficients):
    """Burned fraction at time(s) ``t``; returns exactly 1.0 once it saturates."""
    t = np.asarray(t, dtype=float)
    a, eps, b = coeffs.a, coeffs.epsilon, coeffs.b
    if eps >= EPS_LOGISTIC:
        p = coeffs.p_ii
        out = expit(2.0 * (t - b) / a - math.log((1.0 - p) / p))
    else:
        g = invisible_population(eps)
        x = math.log(coeffs.c) + math.log(g) + (1.0 + eps) * (t - b) / a
        # 1/(1 + G C E) = expit(-x)
        out = 1.0 - (1.0 + g) * expit(-x)
    return float(out) if out.ndim == 0 else out


def dF_dt(t, coeffs: CurveCoefficients):
    """Analytic time derivative of :func:`eval_F`."""
    f = eval_F(t, coeffs)
    return df_dt(f, coeffs.a, coeffs.epsilon)


def df_dt(f, a: float, epsilon: float):
    """Mass-action rate (2 eps/a)(G + F)(1 - F)."""
    f = np.asarray(f, dtype=float)
    g = invisible_population(epsilon)
    out = (2.0 * epsilon / a) * (g + f) * (1.0 - f)
    return float(out) if out.ndim == 0 else out


def time_to_fraction(x: float, coeffs: CurveCoefficients) -> float:
    """Time t_X at which F reaches x (closed-form inverse)."""
    f0 = eval_F(0.0, coeffs)
    if not x < 1.0:
        raise ValueError("x must be below 1")
    if x < f0 - 1e-12:
        raise ValueError(f"x={x} is below the initial fraction F(0)={f0:.6g}")
    a, eps, b = coeffs.a, coeffs.epsilon, coeffs.b
    if eps >= EPS_LOGISTIC:
        p = coeffs.p_ii
        return b + 0.5 * a * math.log(((1.0 - p) / p) * x / (1.0 - x))
    g = invisible_population(eps)
    return b + a / (1.0 + eps) * math.log((1.0 + x / g) / ((1.0 - x) * coeffs.c))


UNIT_SCALE = {"fraction": 1.0, "percent": 100.0}


@dataclass(frozen=True)
class LawCoefficients:
    """Coefficients of the eps(a, P_II) and 1/a(P_IP, P_II) laws.

    ``units`` records whether they were fitted with probabilities as fractions
    or as percentages; the law functions below always take fractions and
    rescale internally.
    """

    aa: float
    bb: float
    cc: float
    ee: float
    gg: float
    units: str = "fraction"

    def __post_init__(self):
        if self.units not in UNIT_SCALE:
            raise ValueError(f"units must be one of {sorted(UNIT_SCALE)}")

    @property
    def scale(self) -> float:
        return UNIT_SCALE[self.units]

    def check(self) -> list:
        """Names of violated sign/range constraints."""
        bad = []
        if not self.aa < 0:
            bad.append("aa >= 0")
        if not self.cc > 0:
            bad.append("cc <= 0")
        if not 0.0 < self.ee <= 1.0:
            bad.append("ee outside (0, 1]")
        if self.gg < 0:
            bad.append("gg < 0")
        return bad

    def to_fraction(self) -> "LawCoefficients":
        """Same laws expressed for probabilities given as fractions."""
        s = self.scale
        return LawCoefficients(aa=self.aa * s, bb=self.bb, cc=self.cc * s ** self.ee,
                               ee=self.ee, gg=self.gg * s, units="fraction")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class UsgPolynomials:
    """Dependence of the law coefficients on P_USG (fraction units).

    aa, cc, ee are quadratics; bb and gg are x1 + x2 P^4 / (1 + x3 P^3).
    The gg form mirrors bb; only its coefficients are tabulated.
    """

    aa: tuple = (-2.2, -63.0, -2410.0)
    bb: tuple = (7.319, 1.09e6, 49000.0)
    cc: tuple = (2.405, 4.7, -35.0)
    ee: tuple = (0.9375, -0.25, -7.0)
    gg: tuple = (0.3541, 10800.0, 4700.0)

    def to_dict(self) -> dict:
        return {k: list(v) for k, v in asdict(self).items()}


def quadratic(coefs, p):
    return coefs[0] + coefs[1] * p + coefs[2] * p * p


def rational_quartic(coefs, p):
    return coefs[0] + coefs[1] * p ** 4 / (1.0 + coefs[2] * p ** 3)


# Reference values as tabulated: law coefficients per P_USG (percent units)
# and their one-sigma errors, then the P_USG polynomials with errors.
TABLE1 = {
    0.00: LawCoefficients(-0.0208, 7.32, 0.03204, 0.9381, 0.00354, "percent"),
    0.03: LawCoefficients(-0.0663, 7.69, 0.03579, 0.9228, 0.0036, "percent"),
    0.05: LawCoefficients(-0.1148, 8.28, 0.0391, 0.907, 0.0039, "percent"),
    0.07: LawCoefficients(-0.180, 8.77, 0.0431, 0.888, 0.0045, "percent"),
    0.10: LawCoefficients(-0.328, 9.47, 0.0521, 0.843, 0.0054, "percent"),
}
TABLE1_ERRORS = {
    0.00: dict(aa=0.0003, bb=0.16, cc=0.00011, ee=0.0015, gg=0.00019),
    0.03: dict(aa=0.0006, bb=0.09, cc=0.00015, ee=0.0019, gg=0.0002),
    0.05: dict(aa=0.0010, bb=0.09, cc=0.0002, ee=0.002, gg=0.0003),
    0.07: dict(aa=0.002, bb=0.11, cc=0.0002, ee=0.003, gg=0.0003),
    0.10: dict(aa=0.006, bb=0.19, cc=0.0004, ee=0.004, gg=0.0005),
}
TABLE2 = UsgPolynomials()
TABLE2_ERRORS = UsgPolynomials(
    aa=(0.4, 18.0, 170.0),
    bb=(0.010, 0.09e6, 4000.0),
    cc=(0.010, 0.5, 4.0),
    ee=(0.0017, 0.08, 0.7),
    gg=(0.0010, 600.0, 300.0),
)
TABLES_VERSION = "1"


def law_coeffs_of_usg(p_usg: float, poly: UsgPolynomials = TABLE2) -> LawCoefficients:
    """Law coefficients at a given USG fraction (fraction units)."""
    lo, hi = FITTED_USG_RANGE
    if not lo <= p_usg <= hi:
        warnings.warn(f"p_usg={p_usg} outside fitted range [{lo}, {hi}]; extrapolating",
                      RangeWarning, stacklevel=2)
    return LawCoefficients(
        aa=quadratic(poly.aa, p_usg),
        bb=rational_quartic(poly.bb, p_usg),
        cc=quadratic(poly.cc, p_usg),
        ee=quadratic(poly.ee, p_usg),
        gg=rational_quartic(poly.gg, p_usg),
        units="fraction",
    )


def epsilon_law_raw(a: float, p_ii: float, laws: LawCoefficients) -> float:
    """eps = 1 + aa P_II / (1 + exp(bb/a)), unclamped; p_ii as a fraction."""
    return 1.0 + laws.aa * p_ii * laws.scale / (1.0 + math.exp(laws.bb / a))


def epsilon_law(a: float, p_ii: float, laws: LawCoefficients) -> float:
    """Interpolation parameter from the characteristic time and seed fraction.

    Clamped into (0, 1 - 1e-9]; leaving (0, 1] raises a RangeWarning.
    """
    eps = epsilon_law_raw(a, p_ii, laws)
    if eps > 1.0 or eps <= 0.0:
        warnings.warn(f"epsilon law gives {eps:.6g}; parameters outside the fitted regime",
                      RangeWarning, stacklevel=2)
    return min(max(eps, 1e-9), EPS_LOGISTIC)


def inv_a_law(p_ip: float, p_ii: float, laws: LawCoefficients) -> float:
    """1/a = cc P_IP^ee (1 + gg P_II); probabilities as fractions.

    p_ip = 0 gives 0, i.e. an infinite characteristic time.
    """
    if p_ip < 0:
        raise ValueError("p_ip must be >= 0")
    s = laws.scale
    return laws.cc * (p_ip * s) ** laws.ee * (1.0 + laws.gg * p_ii * s)


@dataclass
class GrowthPrediction:
    p_ii: float
    p_ip: float
    p_usg: float
    coeffs: CurveCoefficients
    laws: LawCoefficients
    invisible_population: float
    warnings: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "params": {"p_ii": self.p_ii, "p_ip": self.p_ip, "p_usg": self.p_usg},
            "coeffs": self.coeffs.to_dict(),
            "laws": self.laws.to_dict(),
            "invisible_population": self.invisible_population,
            "warnings": list(self.warnings),
        }


def predict_curve(params, poly: UsgPolynomials = TABLE2,
                  laws: Optional[LawCoefficients] = None) -> GrowthPrediction:
    """Curve coefficients from (P_II, P_IP, P_USG) alone.

    ``params`` is anything with ``p_ii``, ``p_ip`` and ``p_usg`` attributes.
    Passing ``laws`` skips the P_USG polynomials (e.g. to use a tabulated row).
    """
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RangeWarning)
        for name in ("p_ii", "p_ip"):
            v = getattr(params, name)
            if v > 0.1:
                warnings.warn(f"{name}={v} above the fitted range 0.1", RangeWarning)
        if laws is None:
            laws = law_coeffs_of_usg(params.p_usg, poly)
        inv_a = inv_a_law(params.p_ip, params.p_ii, laws)
        if inv_a <= 0:
            raise ValueError("p_ip = 0: characteristic time is infinite")
        a = 1.0 / inv_a
        eps = epsilon_law(a, params.p_ii, laws)
        coeffs = CurveCoefficients.from_initial(a, eps, params.p_ii)
    for w in caught:
        notes.append(str(w.message))
        warnings.warn(w.message, w.category, stacklevel=2)
    return GrowthPrediction(params.p_ii, params.p_ip, params.p_usg, coeffs, laws,
                            invisible_population(eps), notes)
