"""Problem parameters, absorption potentials and the analytic classification tests.

The absorption coefficient ``h(r)`` enters the equation

    u_t - Laplacian(u) + h(|x|) |u|^(p-1) u = 0

and comes in three flavours: a power ``r**beta``, a flat potential
``exp(-omega(r) / r**2)`` driven by a nondecreasing modulus ``omega``, and a
tabulated potential interpolated log-log between samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate, optimize


class InvalidParameterError(ValueError):
    """Raised when problem parameters violate their basic constraints."""


class DomainError(ValueError):
    """Raised when a function is evaluated outside its domain."""


class DivergenceError(ArithmeticError):
    """Raised when an improper integral is detected to diverge."""


class NumericError(ArithmeticError):
    """Raised when a quadrature or root finder fails to converge."""


# surface measure of the unit sphere S^{N-1}; for N=1 the "sphere" is two points
def sphere_area(N: int) -> float:
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


def gamma_exponent(p: float, beta: float) -> float:
    """Self-similar decay exponent ``(2 + beta) / (2 (p - 1))``."""
    if not p > 1:
        raise InvalidParameterError(f"p must exceed 1, got {p}")
    return (2.0 + beta) / (2.0 * (p - 1.0))


def critical_beta(N: int, p: float) -> float:
    """Threshold ``N (p - 1) - 2``; a very singular solution exists iff beta exceeds it."""
    if N < 1 or int(N) != N:
        raise InvalidParameterError(f"N must be a positive integer, got {N}")
    if not p > 1:
        raise InvalidParameterError(f"p must exceed 1, got {p}")
    return N * (p - 1.0) - 2.0


@dataclass(frozen=True)
class ProblemParams:
    """Dimension ``N``, absorption exponent ``p`` and the power ``beta`` of the potential.

    ``beta`` only matters for power potentials and for the similarity
    variables; flat potentials use the default ``beta = 0``.
    """

    N: int
    p: float
    beta: float = 0.0

    def __post_init__(self):
        if self.N < 1 or int(self.N) != self.N:
            raise InvalidParameterError(f"N must be a positive integer, got {self.N}")
        if not self.p > 1:
            raise InvalidParameterError(f"p must exceed 1, got {self.p}")

    @property
    def gamma(self) -> float:
        return gamma_exponent(self.p, self.beta)

    @property
    def critical_beta(self) -> float:
        return critical_beta(self.N, self.p)

    @property
    def supercritical(self) -> bool:
        return self.beta > self.critical_beta

    def to_dict(self) -> dict:
        return {"N": self.N, "p": self.p, "beta": self.beta, "gamma": self.gamma}


# ---------------------------------------------------------------------------
# omega moduli


@dataclass(frozen=True)
class OmegaSpec:
    """The modulus ``omega`` of a flat potential ``h(s) = exp(-omega(s)/s^2)``.

    Use the constructors :meth:`power_law`, :meth:`constant` and
    :meth:`custom` rather than the raw initializer.
    """

    form: str
    alpha0: Optional[float] = None
    omega0: Optional[float] = None
    func: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    s_max: float = math.inf
    label: str = ""

    @classmethod
    def power_law(cls, alpha0: float) -> "OmegaSpec":
        if not 0 < alpha0 < 2:
            raise InvalidParameterError(f"alpha0 must lie in (0, 2), got {alpha0}")
        return cls("power_law", alpha0=float(alpha0), label=f"s^{2 - alpha0:g}")

    @classmethod
    def constant(cls, omega0: float) -> "OmegaSpec":
        if not omega0 > 0:
            raise InvalidParameterError(f"omega0 must be positive, got {omega0}")
        return cls("constant", omega0=float(omega0), label=f"{omega0:g}")

    @classmethod
    def custom(cls, func, s_max: float = math.inf, label: str = "custom") -> "OmegaSpec":
        """Wrap a callable ``omega``; a ``(s, omega)`` table pair is also accepted."""
        if isinstance(func, tuple):
            s_tab, w_tab = (np.asarray(a, dtype=float) for a in func)
            if np.any(np.diff(s_tab) <= 0) or np.any(w_tab < 0):
                raise InvalidParameterError("omega table needs increasing s and nonnegative values")
            tab = (s_tab, w_tab)
            s_max = min(s_max, float(s_tab[-1]))

            def func(s, _tab=tab):
                return np.interp(s, _tab[0], _tab[1])

        spec = cls("custom", func=func, s_max=float(s_max), label=label)
        spec.check_monotone()
        return spec

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        if self.form == "power_law":
            return s ** (2.0 - self.alpha0)
        if self.form == "constant":
            return np.full_like(s, self.omega0)
        return np.asarray(self.func(s), dtype=float)

    def log_derivative(self, s):
        """``s omega'(s) / omega(s)``; exact for the closed forms, central differences otherwise."""
        s = np.asarray(s, dtype=float)
        if self.form == "power_law":
            return np.full_like(s, 2.0 - self.alpha0)
        if self.form == "constant":
            return np.zeros_like(s)
        d = 1e-4
        hi = np.log(self(s * math.exp(d)))
        lo = np.log(self(s * math.exp(-d)))
        return (hi - lo) / (2 * d)

    def check_monotone(self, n: int = 400) -> None:
        hi = min(self.s_max, 1.0)
        s = np.geomspace(1e-12, hi * (1 - 1e-9), n)
        w = self(s)
        if np.any(w < 0) or np.any(np.diff(w) < -1e-12 * np.abs(w[1:])):
            raise InvalidParameterError("omega must be nonnegative and nondecreasing")

    def to_dict(self) -> dict:
        return {"form": self.form, "alpha0": self.alpha0, "omega0": self.omega0,
                "label": self.label}


# ---------------------------------------------------------------------------
# potentials


class Potential:
    """Common interface; subclasses implement :meth:`log_values`."""

    kind = "abstract"

    def log_values(self, r: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def values(self, r) -> np.ndarray:
        """Vectorised ``h(r)`` for ``r >= 0``; ``r = 0`` returns the limit value."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", over="ignore", under="ignore"):
            return np.exp(self.log_values(r))

    def __call__(self, r):
        return self.values(r)

    def omega_of(self, r) -> np.ndarray:
        """``r^2 ln(1/h(r))``, the quantity probed by the razor-blade test."""
        r = np.asarray(r, dtype=float)
        return -(r ** 2) * self.log_values(r)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class PowerPotential(Potential):
    beta: float
    kind = "power"

    def log_values(self, r):
        r = np.asarray(r, dtype=float)
        if self.beta == 0:
            return np.zeros_like(r)
        with np.errstate(divide="ignore"):
            return self.beta * np.log(r)

    def to_dict(self):
        return {"kind": "power", "beta": self.beta}


@dataclass(frozen=True)
class FlatPotential(Potential):
    omega: OmegaSpec
    kind = "flat"

    def log_values(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -self.omega(np.maximum(r, 0.0)) / r ** 2
        return np.where(r > 0, out, -np.inf)

    def to_dict(self):
        return {"kind": "flat", "omega": self.omega.to_dict()}


@dataclass(frozen=True)
class TabulatedPotential(Potential):
    """Log-log linear interpolation of positive samples ``(r_i, h_i)``."""

    radii: tuple
    heights: tuple
    kind = "tabulated"

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        h = np.asarray(self.heights, dtype=float)
        if r.ndim != 1 or r.shape != h.shape or len(r) < 2:
            raise InvalidParameterError("table needs two equal-length columns with >= 2 rows")
        if np.any(r <= 0) or np.any(np.diff(r) <= 0):
            raise InvalidParameterError("table radii must be positive and strictly increasing")
        if np.any(h <= 0):
            raise InvalidParameterError("table values must be strictly positive")

    @classmethod
    def from_csv(cls, path) -> "TabulatedPotential":
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        return cls(tuple(data[:, 0]), tuple(data[:, 1]))

    def log_values(self, r):
        r = np.asarray(r, dtype=float)
        lr = np.log(np.asarray(self.radii))
        lh = np.log(np.asarray(self.heights))
        if np.any(r < self.radii[0] * (1 - 1e-12)) or np.any(r > self.radii[-1] * (1 + 1e-12)):
            raise DomainError(f"r outside table range [{self.radii[0]}, {self.radii[-1]}]")
        return np.interp(np.log(r), lr, lh)

    def to_dict(self):
        return {"kind": "tabulated", "rows": len(self.radii)}


def potential_eval(h: Potential, r: float) -> float:
    """``h(r)`` at a single positive radius."""
    if not r > 0:
        raise DomainError(f"potential evaluated at r={r}; r must be positive")
    return float(h.values(r))


def make_potential(kind: str, *, beta=None, alpha0=None, omega0=None, table_path=None) -> Potential:
    """Build a potential from config-style keywords."""
    kind = kind.lower().replace("_", "-")
    if kind == "power":
        return PowerPotential(float(beta if beta is not None else 0.0))
    if kind in ("flat", "flat-power", "flat-powerlaw"):
        if omega0 is not None and alpha0 is None:
            return FlatPotential(OmegaSpec.constant(float(omega0)))
        return FlatPotential(OmegaSpec.power_law(float(alpha0 if alpha0 is not None else 1.0)))
    if kind == "flat-constant":
        return FlatPotential(OmegaSpec.constant(float(omega0 if omega0 is not None else 1.0)))
    if kind == "tabulated":
        if table_path is None:
            raise InvalidParameterError("tabulated potential needs a table path")
        return TabulatedPotential.from_csv(table_path)
    raise InvalidParameterError(f"unknown potential kind {kind!r}")


# ---------------------------------------------------------------------------
# dyadic-shell quadrature


@dataclass
class ShellSum:
    value: float
    converged: bool
    shells: list
    tail: float


def dyadic_shell_integral(f, s: float, *, rtol: float = 1e-10, tail_tol: float = 1e-12,
                          max_shells: int = 60, extrapolate: bool = True) -> ShellSum:
    """Integrate ``f`` over ``(0, s]`` shell by shell, ``[s 2^-(j+1), s 2^-j]``.

    Stops when a shell (or the geometric tail extrapolated from the last
    shells) falls below ``tail_tol`` times the running total.  If
    ``max_shells`` pass without a stable contraction ratio the integral is
    flagged as not converged.
    """
    shells = []
    total = 0.0
    for j in range(max_shells):
        hi = s * 2.0 ** (-j)
        lo = hi / 2
        val, err = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=rtol, limit=200)
        shells.append(val)
        total += val
        scale = max(abs(total), 1e-300)
        if val == 0.0 or abs(val) <= tail_tol * scale:
            return ShellSum(total, True, shells, 0.0)
        if extrapolate and j >= 4 and min(shells[-4:]) > 0:
            q = [shells[-i] / shells[-i - 1] for i in (1, 2, 3)]
            # a genuinely geometric tail has a settled ratio; slowly creeping
            # ratios (harmonic-like shells) are not extrapolated
            settled = max(q) - min(q) <= 1e-6 * q[0]
            if settled and q[0] < 0.999:
                tail = val * q[0] / (1 - q[0])
                if tail <= tail_tol * scale or j >= 20:
                    return ShellSum(total + tail, True, shells, tail)
    return ShellSum(total, False, shells, math.nan)


# ---------------------------------------------------------------------------
# Phi and its inverse


def dini_integral(omega: OmegaSpec, upper: float = 1.0) -> ShellSum:
    """``int_0^upper omega(s)/s ds`` with the shell convergence test."""
    upper = min(upper, omega.s_max)

    def f(s):
        return float(omega(s)) / s

    return dyadic_shell_integral(f, upper, rtol=1e-10, tail_tol=1e-12, max_shells=60)


def phi(omega: OmegaSpec, s: float) -> float:
    """``Phi(s) = int_0^s omega(r)/r dr``; raises when the integral diverges."""
    if not s > 0:
        raise DomainError("Phi needs s > 0")
    if s > omega.s_max:
        raise DomainError(f"s={s} beyond the omega domain {omega.s_max}")
    if omega.form == "constant":
        raise DivergenceError("Dini integral of a positive constant diverges")
    res = dyadic_shell_integral(lambda r: float(omega(r)) / r, s, rtol=1e-12,
                                tail_tol=1e-13, max_shells=2000)
    if not res.converged:
        raise DivergenceError("Dini integral appears divergent (no shell contraction)")
    return res.value


def phi_inverse(omega: OmegaSpec, y: float, s_hi: float = 1.0) -> float:
    """Solve ``Phi(s) = y`` by bracketing root-finding (``Phi`` is increasing)."""
    if not y > 0:
        raise DomainError("Phi^-1 needs a positive argument")
    s_hi = min(s_hi, omega.s_max)
    while phi(omega, s_hi) < y:
        if s_hi >= omega.s_max or s_hi > 1e12:
            raise NumericError(f"Phi^-1({y}) out of range")
        s_hi = min(2 * s_hi, omega.s_max)
    s_lo = s_hi / 2
    while phi(omega, s_lo) > y:
        s_lo /= 2
        if s_lo < 1e-300:
            raise NumericError(f"Phi^-1({y}) underflow")
    return optimize.brentq(lambda s: phi(omega, s) - y, s_lo, s_hi, xtol=1e-300, rtol=1e-14)


def phi_and_inverse(omega: OmegaSpec, s: float) -> tuple:
    """Return ``(Phi(s), Phi^-1(Phi(s)))`` as a round-trip consistency pair."""
    value = phi(omega, s)
    return value, phi_inverse(omega, value, s_hi=max(s, 1e-300) * 2)


# ---------------------------------------------------------------------------
# classification


VSS = "VSS"
RAZOR_BLADE = "RazorBlade"
INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class Classification:
    verdict: str
    dini_value: Optional[float]
    dini_converged: bool
    technical_margin: Optional[float]
    liminf_sample: Optional[float]
    tail_ratio: Optional[float] = None
    note: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def classify_potential(h: Potential, params: Optional[ProblemParams] = None, *,
                       liminf_floor: float = 1e-6, sample_j=(4, 40),
                       trend_tol: float = 0.05) -> Classification:
    """Very-singular-solution versus razor-blade verdict for a potential.

    Flat potentials are decided by the Dini test together with the
    technical growth condition (VSS side) or by the sampled lower limit of
    ``r^2 ln(1/h)`` (razor-blade side).  A sample minimum that is above the
    floor but still sliding towards zero counts as ambiguous.
    """
    if isinstance(h, PowerPotential):
        if params is None:
            raise InvalidParameterError("power potentials are classified against (N, p)")
        crit = critical_beta(params.N, params.p)
        verdict = VSS if h.beta > crit else INDETERMINATE
        note = f"beta={h.beta:g} vs critical {crit:g}"
        if verdict == INDETERMINATE:
            note += " (point singularities removable)"
        return Classification(verdict, None, False, None, None, None, note)

    j_lo, j_hi = sample_j
    radii = 2.0 ** -np.arange(j_lo, j_hi + 1, dtype=float)

    if isinstance(h, TabulatedPotential):
        r_tab = np.asarray(h.radii)
        probe = r_tab[r_tab <= np.median(r_tab)]
        w = h.omega_of(probe)
        lim = float(np.min(w))
        verdict = RAZOR_BLADE if lim >= liminf_floor and w[0] >= (1 - trend_tol) * np.median(w) \
            else INDETERMINATE
        return Classification(verdict, None, False, None, lim, None,
                              "tabulated: probes restricted to the table range")

    omega = h.omega
    dini = dini_integral(omega)
    tech = omega.log_derivative(radii[radii < omega.s_max])
    margin = float(2.0 - np.max(tech))
    if dini.converged and margin > 0:
        return Classification(VSS, dini.value, True, margin, float(np.min(omega(radii))), None,
                              "Dini integral finite and technical condition holds")

    w = omega(radii)
    lim = float(np.min(w))
    deep = w[-1]
    mid = w[len(w) // 2]
    tail_ratio = float(deep / mid) if mid > 0 else 0.0
    if lim >= liminf_floor and tail_ratio >= 1 - trend_tol:
        return Classification(RAZOR_BLADE, dini.value if dini.converged else None,
                              dini.converged, margin, lim, tail_ratio,
                              "r^2 ln(1/h) bounded away from zero")
    note = "Dini integral diverges" if not dini.converged else "technical condition fails"
    note += "; r^2 ln(1/h) not bounded away from zero on the sample"
    return Classification(INDETERMINATE, dini.value if dini.converged else None,
                          dini.converged, margin, lim, tail_ratio, note)


# ---------------------------------------------------------------------------
# energy majorant


def _majorant_exponents(params: ProblemParams):
    N, p = params.N, params.p
    a = (N - 1) * (p - 1) / (p + 3)
    b = 2.0 / (p + 3)
    outer = -(p + 3) / (p - 1)
    return a, b, outer


def log_energy_majorant_g(h: Potential, s: float, params: ProblemParams) -> float:
    """Natural log of the majorant ``g(s)``; safe where ``g`` itself overflows."""
    if not s > 0:
        raise DomainError("g(s) needs s > 0")
    a, b, outer = _majorant_exponents(params)

    def log_integrand(r):
        return -a * math.log(r) + b * float(h.log_values(r))

    if isinstance(h, PowerPotential) and -a + b * h.beta <= -1:
        raise DivergenceError("majorant integrand not integrable at the origin")
    ref = log_integrand(s)

    def f(r):
        return math.exp(log_integrand(r) - ref)

    res = dyadic_shell_integral(f, s, rtol=1e-10, tail_tol=1e-13, max_shells=4000)
    if not res.converged:
        raise DivergenceError("majorant integrand not integrable at the origin")
    return outer * (ref + math.log(res.value))


def energy_majorant_g(h: Potential, s: float, params: ProblemParams) -> float:
    """``g(s) = (int_0^s r^{-(N-1)(p-1)/(p+3)} h(r)^{2/(p+3)} dr)^{-(p+3)/(p-1)}``."""
    return math.exp(log_energy_majorant_g(h, s, params))


def flat_g_sandwich(omega: OmegaSpec, s: float, p: float, nu0: float) -> tuple:
    """Logs of the lower/upper exponential bounds bracketing ``g`` for small ``s``."""
    x = float(omega(s)) / s ** 2 * 2.0 / (p - 1.0)
    return x * (1 - nu0), x * (1 + nu0)


def flat_g_two_sided(omega: OmegaSpec, s: float, params: ProblemParams, alpha0: float) -> tuple:
    """Logs of the power-corrected two-sided bounds ``c g_1(s)`` with the technical constant."""
    N, p = params.N, params.p
    w = float(omega(s))
    log_g1 = ((N - 1 - 3 * (p + 3) / (p - 1)) * math.log(s) + (p + 3) / (p - 1) * math.log(w)
              + 2.0 / (p - 1) * w / s ** 2)
    e = (p + 3) / (p - 1)
    return e * math.log(2 * alpha0 / (p + 3)) + log_g1, e * math.log(4 / (p + 3)) + log_g1
