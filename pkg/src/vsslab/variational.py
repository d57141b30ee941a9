"""The weighted energy whose critical points are self-similar profiles.

For ``K(r) = exp(r^2/4)`` and ``gamma = (2+beta)/(2(p-1))``,

    J(v) = 1/2 int (|v'|^2 - gamma v^2 + 2/(p+1) r^beta |v|^(p+1)) K dx,

discretised on a uniform radial grid of ``[0, R_var]`` with ``v(R_var) = 0``.
The gradient term uses the exact face conductances of the weight
``r^(N-1) K`` and the other two use dual-cell integrals of that weight, so
the discrete Euler-Lagrange equation is the finite-volume form of

    -v'' - ((N-1)/r + r/2) v' - gamma v + r^beta v^p = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, linalg
from sklearn.isotonic import isotonic_regression

from .model import InvalidParameterError, ProblemParams, sphere_area
from .profiles import RadialProfile
from .radial import RadialFV, _log_int


class InadmissibleFunctionError(ValueError):
    """A weighted norm of the function is not finite."""


@dataclass
class WeightedFunction:
    """Nodal values on a uniform grid of ``[0, R_var]`` carrying the Hermite weight."""

    r: np.ndarray
    v: np.ndarray
    N: int
    _op: Optional[RadialFV] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.r.shape != self.v.shape:
            raise InvalidParameterError("grid and values differ in length")
        if self.r[0] != 0.0:
            raise InvalidParameterError("grid must start at the origin")

    @classmethod
    def on_grid(cls, func, N: int, R_var: float = 8.0, n: int = 800) -> "WeightedFunction":
        r = np.linspace(0.0, R_var, n + 1)
        v = np.asarray(func(r), dtype=float)
        v[-1] = 0.0
        return cls(r, v, N)

    @property
    def R_var(self) -> float:
        return float(self.r[-1])

    @property
    def op(self) -> RadialFV:
        if self._op is None:
            self._op = RadialFV(self.r, self.N, kappa=1.0)
        return self._op

    @property
    def K(self):
        return np.exp(self.r ** 2 / 4)

    def with_values(self, v) -> "WeightedFunction":
        return WeightedFunction(self.r, v, self.N, self._op)

    def is_nonincreasing(self, tol: float = 0.0) -> bool:
        return bool(np.all(np.diff(self.v) <= tol))

    def to_profile(self, kind: str = "Minimizer", meta=None) -> RadialProfile:
        return RadialProfile(self.r, self.v, None, kind, dict(meta or {}))


@dataclass(frozen=True)
class FunctionalValue:
    total: float
    gradient: float
    mass: float
    absorption: float

    def to_dict(self) -> dict:
        return {"total": self.total, "gradient": self.gradient, "mass": self.mass,
                "absorption": self.absorption}


class _Quadrature:
    """Weights shared by J, its gradient and the weighted inequalities."""

    _cache: dict = {}

    def __init__(self, w: WeightedFunction, beta: float):
        op = w.op
        self.area = sphere_area(w.N)
        self.vol = op.vol
        self.cond = op.cond
        if beta == 0:
            self.vol_beta = self.vol
        else:
            # dual-cell integrals of r^beta r^(N-1) K; the origin cell needs them when beta < 0
            r = w.r
            lo = np.concatenate(([0.0], op.faces))
            hi = np.concatenate((op.faces, [r[-1]]))
            self.vol_beta = np.exp(_log_int(lo, hi, w.N + beta, 1.0, +1))
        # second moment for the Poincare-type checks
        lo = np.concatenate(([0.0], op.faces))
        hi = np.concatenate((op.faces, [w.r[-1]]))
        self.vol_r2 = np.exp(_log_int(lo, hi, w.N + 2, 1.0, +1))

    @classmethod
    def of(cls, w: WeightedFunction, beta: float) -> "_Quadrature":
        key = (id(w.op), beta)
        hit = cls._cache.get(key)
        # the operator is stored with its weights so a recycled id cannot alias
        if hit is not None and hit[0] is w.op:
            return hit[1]
        if len(cls._cache) > 64:
            cls._cache.clear()
        q = cls(w, beta)
        cls._cache[key] = (w.op, q)
        return q


def evaluate_J(w: WeightedFunction, params: ProblemParams) -> FunctionalValue:
    """The three parts of ``J`` and their sum."""
    q = _Quadrature.of(w, params.beta)
    v = w.v
    with np.errstate(over="ignore", invalid="ignore"):
        grad = 0.5 * q.area * float(np.sum(q.cond * np.diff(v) ** 2))
        mass = -0.5 * params.gamma * q.area * float(np.sum(q.vol * v ** 2))
        absn = q.area / (params.p + 1) * float(np.sum(q.vol_beta * np.abs(v) ** (params.p + 1)))
    if not all(math.isfinite(x) for x in (grad, mass, absn)):
        raise InadmissibleFunctionError("weighted norms of v are not finite on the grid")
    return FunctionalValue(grad + mass + absn, grad, mass, absn)


def gradient_J(w: WeightedFunction, params: ProblemParams) -> np.ndarray:
    """Derivative of the discrete ``J`` with respect to the nodal values (zero at ``R_var``)."""
    q = _Quadrature.of(w, params.beta)
    v = w.v
    flux = q.cond * np.diff(v)
    g = np.zeros_like(v)
    g[:-1] -= flux
    g[1:] += flux
    g += -params.gamma * q.vol * v + q.vol_beta * np.abs(v) ** (params.p - 1) * v
    g *= q.area
    g[-1] = 0.0
    return g


def euler_lagrange_residual(w: WeightedFunction, params: ProblemParams) -> float:
    """Weighted ``L^2`` norm of the strong residual relative to that of ``v``."""
    q = _Quadrature.of(w, params.beta)
    res = gradient_J(w, params)[:-1] / (q.area * q.vol[:-1])
    num = math.sqrt(float(np.sum(q.vol[:-1] * res ** 2)))
    den = math.sqrt(float(np.sum(q.vol * w.v ** 2)))
    return num / den if den > 0 else num


def _riesz_matrix(w: WeightedFunction, params: ProblemParams) -> np.ndarray:
    """Banded ``H^1_K`` Gram matrix on the free nodes."""
    q = _Quadrature.of(w, params.beta)
    c = q.cond
    n = len(w.v) - 1
    ab = np.zeros((3, n))
    diag = q.vol[:n].copy()
    diag += c[:n]
    diag[1:] += c[:n - 1]
    ab[1] = q.area * diag
    ab[0, 1:] = -q.area * c[:n - 1]
    ab[2, :-1] = -q.area * c[:n - 1]
    return ab


def project_cone(w: WeightedFunction, values) -> np.ndarray:
    """Closest nonnegative nonincreasing function in the cell-volume weighted ``L^2`` metric."""
    vol = w.op.vol
    y = np.asarray(values, dtype=float)
    out = isotonic_regression(y[:-1], sample_weight=vol[:-1], y_min=0.0, increasing=False)
    return np.append(out, 0.0)


####################################################################
# rearrangement


def threshold_curve(r, params: ProblemParams) -> np.ndarray:
    """``(gamma r^-beta)^(1/(p-1))``, where ``x -> -gamma x^2/2 + r^beta x^(p+1)/(p+1)`` turns."""
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        return (params.gamma * r ** (-params.beta)) ** (1 / (params.p - 1))


def decreasing_rearrangement(w: WeightedFunction, params: ProblemParams) -> WeightedFunction:
    """Nonincreasing replacement of ``v >= 0`` that does not increase ``J``.

    The grid is split into maximal runs lying below and above the threshold
    curve.  Below it the pointwise potential decreases in ``v``, so each run
    is raised to its running maximum taken from the right; above it the
    potential increases in ``v``, so each run is lowered to its running
    minimum taken from the left.  Neither step lengthens any difference
    ``|v_(i+1) - v_i|``.  Where a run meets the next at a grid node the two
    sides can disagree by one step; a final running minimum reconciles them.
    """
    v = np.asarray(w.v, dtype=float)
    if np.any(v < 0):
        raise InvalidParameterError("rearrangement needs v >= 0")
    above = v > threshold_curve(w.r, params)
    out = v.copy()
    edges = np.flatnonzero(np.diff(above.astype(np.int8))) + 1
    starts = np.concatenate(([0], edges))
    stops = np.concatenate((edges, [len(v)]))
    for a, b in zip(starts, stops):
        seg = v[a:b]
        if above[a]:
            out[a:b] = np.minimum.accumulate(seg)
        else:
            out[a:b] = np.maximum.accumulate(seg[::-1])[::-1]
    out = np.minimum.accumulate(out)
    return w.with_values(out)


####################################################################
# minimisation


@dataclass
class MinimizationResult:
    minimizer: WeightedFunction
    J: FunctionalValue
    status: str
    converged: bool
    iterations: int
    pg_norm: float
    el_residual: float
    history: list = field(default_factory=list)


MINIMIZER = "Minimizer"
TRIVIAL = "Trivial"
UNBOUNDED = "UnboundedSuspected"


def gaussian_seed(N: int, t: float = 1.0, R_var: float = 8.0, n: int = 800) -> WeightedFunction:
    """``t K^-1`` on the grid."""
    return WeightedFunction.on_grid(lambda r: t * np.exp(-r ** 2 / 4), N, R_var, n)


def minimize_J(params: ProblemParams, init: Optional[WeightedFunction] = None, *,
               pg_tol: float = 1e-8, j_tol: float = 1e-12, max_iter: int = 20000,
               rearrange: bool = False, divergence_level: float = 1e12) -> MinimizationResult:
    """Projected gradient descent for ``J`` on ``{v >= 0, v nonincreasing}``.

    The descent direction is the Riesz representative of the derivative in
    the ``H^1_K`` inner product; after each step the iterate is projected on
    the cone by weighted isotonic regression.  Step lengths start at 1 and
    halve until an Armijo decrease holds.  Stops when the projected-gradient
    norm (``H^1_K`` norm of the projected step at unit length, relative to
    ``v``) is below ``pg_tol`` and ``J`` changes by less than ``j_tol``
    relative.
    """
    w = init if init is not None else gaussian_seed(params.N)
    w = w.with_values(project_cone(w, w.v))
    if not np.any(w.v > 0):
        raise InvalidParameterError("initial function vanishes")
    ab = _riesz_matrix(w, params)
    q = _Quadrature.of(w, params.beta)

    def h1_norm(x):
        return math.sqrt(q.area * float(np.sum(q.cond * np.diff(x) ** 2) + np.sum(q.vol * x ** 2)))

    J = evaluate_J(w, params)
    history = [J.total]
    restarted = False
    pg = math.inf
    status = MINIMIZER
    converged = False
    for it in range(1, max_iter + 1):
        g = gradient_J(w, params)
        d = np.zeros_like(w.v)
        d[:-1] = -linalg.solve_banded((1, 1), ab, g[:-1])
        unit = project_cone(w, w.v + d)
        scale = max(h1_norm(w.v), 1e-300)
        pg = h1_norm(unit - w.v) / scale
        tau = 1.0
        while True:
            trial = unit if tau == 1.0 else project_cone(w, w.v + tau * d)
            Jt = evaluate_J(w.with_values(trial), params)
            if Jt.total <= J.total + 1e-4 * float(np.dot(g, trial - w.v)) or tau < 1e-12:
                break
            tau *= 0.5
        if rearrange:
            trial = decreasing_rearrangement(w.with_values(trial), params).v
            Jt = evaluate_J(w.with_values(trial), params)
        change = abs(Jt.total - J.total) / max(abs(Jt.total), 1e-300)
        w = w.with_values(trial)
        J = Jt
        history.append(J.total)
        if J.total < -divergence_level or np.max(w.v) > divergence_level:
            status = UNBOUNDED
            break
        if pg < pg_tol and change < j_tol:
            converged = True
            break
        if J.total > 0 and it > 50 and change < j_tol and not restarted:
            # stalled on the wrong side of zero: restart from a Gaussian seed
            w = gaussian_seed(params.N, params.gamma ** (1 / (params.p - 1)), w.R_var, len(w.r) - 1)
            J = evaluate_J(w, params)
            restarted = True
    if status != UNBOUNDED and float(np.max(w.v)) < 1e-10:
        status = TRIVIAL
    el = euler_lagrange_residual(w, params) if status == MINIMIZER else math.nan
    return MinimizationResult(w, J, status, converged, it, pg, el, history)


####################################################################
# weighted inequalities


@dataclass(frozen=True)
class InequalityCheck:
    lhs: float
    rhs: float
    holds: bool


def weighted_poincare_check(w: WeightedFunction, form: str = "sharp") -> InequalityCheck:
    """Compare ``int c(r) v^2 K`` with ``int |v'|^2 K``.

    ``form="sharp"`` uses ``c = (4N + r^2)/16``, which follows from writing
    ``v = w K^(-1/2)`` and integrating by parts; equality is approached by
    ``v = K^-1``, the ground state of the Hermite operator.
    ``form="stated"`` uses ``c = (2N + r^2)/4``, a version with the cross
    term counted twice; it fails for ``v = K^-1``.
    """
    q = _Quadrature.of(w, 0.0)
    v = w.v
    if form == "sharp":
        a, b = 4 * w.N / 16, 1 / 16
    elif form == "stated":
        a, b = 2 * w.N / 4, 1 / 4
    else:
        raise InvalidParameterError(f"unknown form {form!r}")
    lhs = q.area * float(np.sum((a * q.vol + b * q.vol_r2) * v ** 2))
    rhs = q.area * float(np.sum(q.cond * np.diff(v) ** 2))
    return InequalityCheck(lhs, rhs, lhs <= rhs * (1 + 1e-6))


@dataclass
class Est2Report:
    C: float
    eps: float
    R: float
    n_samples: int
    n_fail: int
    worst_ratio: float

    @property
    def verified(self) -> bool:
        return self.n_samples > 0 and self.n_fail == 0


def est2_constant(params: ProblemParams, R: float) -> float:
    """``(int_{|x|<=R} |x|^(-2 beta/(p-1)) K dx)^((p-1)/(p+1))``."""
    N, p, beta = params.N, params.p, params.beta
    if not beta < N * (p - 1) / 2:
        raise InvalidParameterError("need beta < N(p-1)/2")
    e = N - 1 - 2 * beta / (p - 1)
    val, _ = integrate.quad(lambda r: r ** e * math.exp(r * r / 4), 0.0, R,
                            epsabs=0, epsrel=1e-12, limit=200)
    return (sphere_area(N) * val) ** ((p - 1) / (p + 1))


def est2_constant_check(params: ProblemParams, R: float, samples=None, *, n_samples: int = 100,
                        seed: int = 0, eps: Optional[float] = None) -> Est2Report:
    """Check ``int v^2 K <= eps int |v'|^2 K + C (int |v|^(p+1) r^beta K)^(2/(p+1))``.

    ``eps`` defaults to ``4/R^2``.  The sharp weighted Poincare constant
    ``(4N + r^2)/16`` only guarantees the bound with ``eps = 16/R^2``.
    """
    C = est2_constant(params, R)
    if eps is None:
        eps = 4.0 / R ** 2
    if samples is None:
        samples = random_admissible(params.N, n_samples, seed=seed)
    n_fail = 0
    worst = 0.0
    for w in samples:
        q = _Quadrature.of(w, params.beta)
        v = w.v
        lhs = q.area * float(np.sum(q.vol * v ** 2))
        grad = q.area * float(np.sum(q.cond * np.diff(v) ** 2))
        absn = q.area * float(np.sum(q.vol_beta * np.abs(v) ** (params.p + 1)))
        rhs = eps * grad + C * absn ** (2 / (params.p + 1))
        worst = max(worst, lhs / rhs)
        n_fail += lhs > rhs * (1 + 1e-9)
    return Est2Report(C, eps, R, len(samples), int(n_fail), worst)


def random_admissible(N: int, count: int, *, seed: int = 0, R_var: float = 8.0, n: int = 800,
                      max_bumps: int = 4, amplitude: float = 3.0) -> list:
    """Seeded corpus of positive bump sums vanishing at ``R_var``; most are not monotone."""
    rng = np.random.default_rng(seed)
    r = np.linspace(0.0, R_var, n + 1)
    proto = WeightedFunction(r, np.zeros_like(r), N)
    out = []
    taper = np.clip(1 - (r / R_var) ** 2, 0.0, None) ** 2
    for _ in range(count):
        m = rng.integers(1, max_bumps + 1)
        v = np.zeros_like(r)
        for _ in range(m):
            a = rng.uniform(0.05, amplitude)
            c = rng.uniform(0.0, 4.0)
            s = rng.uniform(0.2, 1.5)
            v += a * np.exp(-0.5 * ((r - c) / s) ** 2)
        v *= taper * np.exp(-r ** 2 / 16)
        v[-1] = 0.0
        out.append(proto.with_values(v))
    return out


def compare_with_profile(w: WeightedFunction, profile: RadialProfile, r_max: float = 4.0) -> float:
    """``sup |v - f| / sup |f|`` on ``[0, r_max]``."""
    x = w.r[w.r <= r_max]
    ref = profile(x)
    return float(np.max(np.abs(w.v[: len(x)] - ref)) / np.max(np.abs(ref)))


def hermite_lowest_eigenvalue(N: int, R: float = 8.0, n: int = 4000,
                              extrapolate: bool = True) -> float:
    """Lowest radial eigenvalue of ``-K^-1 div(K grad)`` with a Dirichlet wall at ``R``.

    The symmetric tridiagonal form ``M^-1/2 S M^-1/2`` of the finite-volume
    operator is handed to ``eigh_tridiagonal``; two grids are combined by
    Richardson extrapolation.
    """
    def lowest(m):
        r = np.linspace(0.0, R, m + 1)
        op = RadialFV(r, N, 1.0)
        vol = op.vol[:-1]
        cond = op.cond
        d = (np.concatenate(([0.0], cond[:-1])) + cond) / vol
        e = -cond[:-1] / np.sqrt(vol[:-1] * vol[1:])
        return float(linalg.eigh_tridiagonal(d, e, select="i", select_range=(0, 0),
                                             eigvals_only=True)[0])

    lam = lowest(n)
    if extrapolate:
        lam = (4 * lowest(2 * n) - lam) / 3
    return lam
