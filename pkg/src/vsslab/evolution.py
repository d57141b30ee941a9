"""Radial parabolic solver with concentrated initial data and energy bookkeeping.

Each step applies backward-Euler diffusion (an M-matrix solve, so the
scheme is positive and order preserving) followed by the exact solution of
the pointwise absorption ODE ``v' = -h v^p``.  Both sub-steps dissipate
``L^2`` energy in closed form, and the per-face and per-cell dissipation is
accumulated so that the localized energies can be evaluated afterwards
without storing every step.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, linalg

from .model import (DomainError, InvalidParameterError, Potential, ProblemParams,
                    TabulatedPotential, sphere_area)
from .radial import RadialFV, geometric_then_uniform

log = logging.getLogger(__name__)


class GridError(ValueError):
    """The mesh cannot represent the requested data."""


class StepCollapseError(RuntimeError):
    """The adaptive time step fell below the round-off floor."""


####################################################################
# grid and initial data


@dataclass
class RadialGrid:
    """Node-centred radial mesh on ``[0, R]`` with exact ``r^(N-1)`` cell measures."""

    r: np.ndarray
    N: int

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.fv = RadialFV(self.r, self.N, kappa=0.0)
        self.area = sphere_area(self.N)
        # dual cells
        self.lo = np.concatenate(([0.0], self.fv.faces))
        self.hi = np.concatenate((self.fv.faces, [self.r[-1]]))
        self.measure = self.area * self.fv.vol

    @classmethod
    def graded(cls, N: int, R: float, *, h0: float = 1e-4, ratio: float = 1.05,
               h_max: float = 0.02) -> "RadialGrid":
        return cls(geometric_then_uniform(h0, ratio, h_max, R), N)

    @property
    def R(self) -> float:
        return float(self.r[-1])

    def integrate(self, values) -> float:
        """``int u dx`` with the cell-average quadrature."""
        return float(np.dot(self.measure, values))

    def outside_fraction(self, s: float) -> np.ndarray:
        """Measure fraction of each dual cell lying in ``|x| >= s``."""
        N = self.N
        lo, hi = self.lo, self.hi
        cut = np.clip(s, lo, hi)
        return (hi ** N - cut ** N) / (hi ** N - lo ** N)

    def face_outside_fraction(self, s: float) -> np.ndarray:
        a, b = self.r[:-1], self.r[1:]
        return np.clip((b - s) / (b - a), 0.0, 1.0)


@dataclass(frozen=True)
class DiracApprox:
    mass: float
    rho: float
    shape: str = "tophat"

    def __post_init__(self):
        if not (self.mass > 0 and self.rho > 0):
            raise InvalidParameterError("mass and support radius must be positive")
        if self.shape not in ("tophat", "bump"):
            raise InvalidParameterError(f"unknown shape {self.shape!r}")


def make_dirac_approx(mass: float, rho: float, shape: str, grid: RadialGrid) -> np.ndarray:
    """Cell-average projection of a compactly supported approximate point mass.

    ``tophat`` is the uniform density on the ball of radius ``rho``;
    ``bump`` is proportional to ``(1 - (r/rho)^2)^2``.  The discrete mass
    ``sum(measure * u)`` equals ``mass`` up to round-off.
    """
    d = DiracApprox(mass, rho, shape)
    if np.count_nonzero(grid.r < rho) < 3:
        raise GridError(f"support radius {rho:g} is covered by fewer than 3 nodes")
    N = grid.N
    lo, hi = grid.lo, grid.hi
    if d.shape == "tophat":
        top = np.minimum(hi, rho)
        part = np.where(top > lo, (top ** N - lo ** N) / N, 0.0)
    else:
        part = np.zeros_like(lo)
        for i in np.nonzero(lo < rho)[0]:
            b = min(hi[i], rho)
            part[i], _ = integrate.quad(lambda r: (1 - (r / rho) ** 2) ** 2 * r ** (N - 1),
                                        lo[i], b, epsabs=0, epsrel=1e-13)
    u = part / grid.fv.vol
    u *= mass / grid.integrate(u)
    return u


####################################################################
# time stepping


@dataclass
class StepLog:
    t: list = field(default_factory=list)
    dt: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    l2: list = field(default_factory=list)
    absorbed: list = field(default_factory=list)
    outflow: list = field(default_factory=list)
    balance: list = field(default_factory=list)


@dataclass
class SpaceTimeField:
    """Snapshots ``u(r_i, t_n)`` plus cumulative dissipation at each snapshot."""

    grid: RadialGrid
    times: np.ndarray
    values: np.ndarray
    grad_dissipation: np.ndarray
    abs_dissipation: np.ndarray
    params: ProblemParams
    steps: StepLog
    meta: dict = field(default_factory=dict)

    def at(self, t: float) -> np.ndarray:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, t):
            raise DomainError(f"no snapshot at t={t}")
        return self.values[i]

    def l2_norm_sq(self, t: float) -> float:
        return self.grid.integrate(self.at(t) ** 2)

    def interpolate(self, t: float, x) -> np.ndarray:
        return np.interp(np.abs(np.asarray(x, dtype=float)), self.grid.r, self.at(t))

    @property
    def n_steps(self) -> int:
        return len(self.steps.t)


def _node_potential(h: Potential, r: np.ndarray) -> np.ndarray:
    if isinstance(h, TabulatedPotential):
        rr = np.clip(r, h.radii[0], h.radii[-1])
        return h.values(rr)
    return h.values(r)


def _absorb(u, hv, p, dt):
    with np.errstate(over="ignore"):
        return u * (1.0 + (p - 1) * hv * u ** (p - 1) * dt) ** (-1.0 / (p - 1))


def _implicit_step(u_old, base, log_hv, p, dt, tol=1e-12, max_iter=60):
    """Backward Euler for diffusion and absorption together, by Newton's method.

    ``h u^(p-1)`` is formed in logs so that very large ``u`` cannot
    overflow.  Returns ``None`` when Newton does not converge.
    """
    n = len(u_old)
    u = u_old.copy()
    for _ in range(max_iter):
        with np.errstate(divide="ignore", over="ignore", under="ignore"):
            a = np.exp(np.minimum(log_hv + (p - 1) * np.log(u), 700.0))
        lap = np.zeros(n)
        lap[:-1] += base[0, 1:] * u[1:]
        lap += base[1] * u
        lap[1:] += base[2, :-1] * u[:-1]
        F = u - dt * lap + dt * a * u - u_old
        F[-1] = 0.0
        ab = -dt * base
        ab[1] += 1.0 + dt * p * a
        ab[0, -1] = 0.0
        ab[1, -1] = 1.0
        ab[2, -2] = 0.0
        step = linalg.solve_banded((1, 1), ab, -F, check_finite=False)
        if not np.all(np.isfinite(step)):
            return None
        u_new = np.maximum(u + step, 0.1 * u)
        u_new[-1] = 0.0
        live = u_new > 1e-280 * max(float(np.max(u_new)), 1e-300)
        change = float(np.max(np.abs(u_new - u)[live] / u_new[live])) if live.any() else 0.0
        u = u_new
        if change < tol:
            return u
    return None


def evolve(params: ProblemParams, h: Potential, initial: np.ndarray, grid: RadialGrid,
           T: float, *, t_out: Optional[Sequence[float]] = None, rel_change: float = 0.05,
           floor: float = 1e-3, dt0: Optional[float] = None, dt_max: Optional[float] = None,
           growth: float = 1.5, strang: bool = False, domain_tol: float = 1e-10,
           max_steps: int = 2_000_000, scheme: str = "split") -> SpaceTimeField:
    """Advance the radial equation from ``initial`` to time ``T``.

    Parameters
    ----------
    rel_change : accepted bound on ``max |u_new - u_old| / max(|u_old|, floor*max|u_old|)``
    floor : relative floor in the change measure, so that the far field does
        not dictate the step
    strang : apply the absorption in two half steps around the diffusion
    scheme : ``"split"`` (implicit diffusion, then the exact absorption
        step) or ``"implicit"`` (backward Euler for the whole equation,
        solved by Newton).  The split scheme must resolve the reaction time
        ``1/(h u^(p-1))`` wherever ``u`` is near its maximum; the implicit
        one keeps quasi-steady absorption layers intact at large steps.

    Snapshots are taken at the sorted ``t_out`` (``T`` is always included).
    """
    if T <= 0:
        raise InvalidParameterError("T must be positive")
    if scheme not in ("split", "implicit"):
        raise InvalidParameterError(f"unknown scheme {scheme!r}")
    u = np.asarray(initial, dtype=float).copy()
    if np.any(u < 0):
        raise InvalidParameterError("initial data must be nonnegative")
    u[-1] = 0.0
    mass0 = grid.integrate(u)
    p = params.p
    n = len(grid.r)
    fv = grid.fv
    hv = _node_potential(h, grid.r)
    with np.errstate(divide="ignore"):
        log_hv = np.log(hv)
    outs = sorted(set([float(x) for x in (t_out or [])] + [float(T)]))
    outs = [x for x in outs if 0 < x <= T]
    snaps = [u.copy()]
    times = [0.0]
    cum_grad = np.zeros(n - 1)
    cum_abs = np.zeros(n)
    snap_grad = [cum_grad.copy()]
    snap_abs = [cum_abs.copy()]
    logs = StepLog()
    area = grid.area
    meas = grid.measure
    cond = fv.cond
    base = fv.banded()
    base[1, -1] = 0.0
    base[2, -2] = 0.0

    if dt0 is None:
        dt0 = 1e-3 * (grid.r[1] - grid.r[0]) ** 2
    dt = dt0
    t = 0.0
    k_out = 0
    warned = False
    for step in range(max_steps):
        if k_out >= len(outs):
            break
        target = outs[k_out]
        planned = dt if dt_max is None else min(dt, dt_max)
        dt_try = min(planned, target - t)
        clipped = dt_try < planned
        while True:
            if scheme == "implicit":
                u_new = _implicit_step(u, base, log_hv, p, dt_try)
                u_d = u_new
                if u_new is None:
                    rc = math.inf
                    u_new = u_d = u
            else:
                u_a = _absorb(u, hv, p, dt_try / 2) if strang else u
                ab = -dt_try * base
                ab[1] += 1.0
                u_d = linalg.solve_banded((1, 1), ab, u_a, overwrite_ab=True,
                                          check_finite=False)
                u_d[-1] = 0.0
                np.maximum(u_d, 0.0, out=u_d)
                u_new = _absorb(u_d, hv, p, dt_try / 2 if strang else dt_try)
            scale = np.maximum(np.abs(u), floor * np.max(np.abs(u)))
            if u_d is not u:
                rc = float(np.max(np.abs(u_new - u) / np.where(scale > 0, scale, 1.0)))
            if rc <= rel_change or (math.isfinite(rc) and dt_try <= 1e-14 * max(t, 1e-300)):
                break
            dt_try *= max(0.2, 0.9 * rel_change / rc)
            clipped = False
            if dt_try < 1e-300 or dt_try < 1e-15 * t:
                raise StepCollapseError(f"time step collapsed at t={t:.6g}")
        # energy bookkeeping: backward Euler dissipates dt * G * (grad u)^2 exactly
        du = np.diff(u_d)
        cum_grad += area * dt_try * cond * du ** 2
        if scheme == "implicit":
            with np.errstate(divide="ignore", over="ignore", under="ignore"):
                rate = np.exp(np.minimum(log_hv + (p - 1) * np.log(u_new), 700.0))
            cum_abs += dt_try * meas * rate * u_new ** 2
            absorbed = dt_try * float(np.dot(meas, rate * u_new))
        elif strang:
            cum_abs += 0.5 * meas * (u ** 2 - u_a ** 2)
            cum_abs += 0.5 * meas * (u_d ** 2 - u_new ** 2)
            absorbed = grid.integrate(u - u_a) + grid.integrate(u_d - u_new)
        else:
            cum_abs += 0.5 * meas * (u_d ** 2 - u_new ** 2)
            absorbed = grid.integrate(u_d - u_new)
        outflow = area * dt_try * cond[-1] * u_d[-2]
        m_old = grid.integrate(u)
        m_new = grid.integrate(u_new)
        balance = (m_new - m_old + absorbed + outflow) / max(m_old, 1e-300)
        t += dt_try
        u = u_new
        logs.t.append(t)
        logs.dt.append(dt_try)
        logs.mass.append(m_new)
        logs.l2.append(grid.integrate(u * u))
        logs.absorbed.append(absorbed)
        logs.outflow.append(outflow)
        logs.balance.append(balance)
        if not warned and u[-2] > domain_tol * max(np.max(u), 1e-300):
            warnings.warn(f"solution reaches the outer boundary at t={t:.4g}; enlarge R",
                          RuntimeWarning)
            warned = True
        if abs(t - target) <= 1e-12 * max(target, 1.0):
            t = target
            snaps.append(u.copy())
            times.append(t)
            snap_grad.append(cum_grad.copy())
            snap_abs.append(cum_abs.copy())
            k_out += 1
        dt = dt_try * (min(growth, 0.9 * rel_change / rc) if rc > 0 else growth)
        if clipped:
            # a step shortened to hit an output time says nothing about the next one
            dt = max(dt, planned)
    else:
        raise StepCollapseError(f"step budget exhausted at t={t:.6g}")
    return SpaceTimeField(grid, np.asarray(times), np.asarray(snaps), np.asarray(snap_grad),
                          np.asarray(snap_abs), params, logs,
                          {"rel_change": rel_change, "strang": strang, "scheme": scheme,
                           "steps": len(logs.t), "mass": mass0})


####################################################################
# energies


@dataclass
class EnergyRecord:
    s: np.ndarray
    t: np.ndarray
    I: np.ndarray
    J: np.ndarray
    E: np.ndarray
    total: np.ndarray


def energy_functionals(fld: SpaceTimeField, s_values, t_values) -> EnergyRecord:
    """Localized energies on ``|x| >= s`` (``I``, ``J``) and ``|x| < s`` (``E``).

    ``I`` uses the dissipation accumulated by the scheme itself, so the
    discrete energy identity ``J(s,t) + 2 I(s,t) = J(s,0) + flux terms``
    holds without extra quadrature error.
    """
    s_values = np.asarray(s_values, dtype=float)
    t_values = np.asarray(t_values, dtype=float)
    g = fld.grid
    if np.any(s_values > g.R):
        raise DomainError("s beyond the computational domain")
    I = np.zeros((len(s_values), len(t_values)))
    J = np.zeros_like(I)
    E = np.zeros_like(I)
    tot = np.zeros(len(t_values))
    for jt, t in enumerate(t_values):
        k = int(np.argmin(np.abs(fld.times - t)))
        if abs(fld.times[k] - t) > 1e-9 * max(1.0, t):
            raise DomainError(f"no snapshot at t={t}")
        u2 = fld.values[k] ** 2 * g.measure
        tot[jt] = u2.sum()
        for js, s in enumerate(s_values):
            w = g.outside_fraction(s)
            J[js, jt] = np.dot(w, u2)
            E[js, jt] = np.dot(1 - w, u2)
            I[js, jt] = (np.dot(g.face_outside_fraction(s), fld.grad_dissipation[k])
                         + np.dot(w, fld.abs_dissipation[k]))
    return EnergyRecord(s_values, t_values, I, J, E, tot)


def cutoff(r, s_c: float):
    """``1`` on ``[0, s_c]``, ``cos^2`` ramp to ``0`` at ``2 s_c``; ``|phi'| <= pi/(2 s_c)``."""
    r = np.asarray(r, dtype=float)
    x = np.clip((r - s_c) / s_c, 0.0, 1.0)
    return np.cos(0.5 * math.pi * x) ** 2


@dataclass
class PsiSeries:
    t: np.ndarray
    psi: np.ndarray
    s_c: float
    d0: float
    c_bar: float
    decay_rate: float
    reference_rate: float


def localized_energy_psi(fld: SpaceTimeField, s_c: float, *, lambda1: float, g_sc: float = 1.0,
                         fit_window: Optional[tuple] = None) -> PsiSeries:
    """``psi(t) = int u^2 phi^2`` at the snapshots, with the fitted source constant.

    ``d0 = lambda1 / 2`` where ``lambda1`` is the principal Dirichlet
    eigenvalue of the unit ball.  ``c_bar`` is the smallest constant making
    ``psi' + d0 psi / s_c^2 <= c_bar t g(s_c) / s_c^2`` hold at every
    interior snapshot (``g_sc`` is ``g(s_c)``).
    """
    g = fld.grid
    if 2 * s_c > g.R:
        raise DomainError("cutoff support exceeds the domain")
    phi2 = cutoff(g.r, s_c) ** 2
    psi = np.array([np.dot(g.measure * phi2, v ** 2) for v in fld.values])
    t = fld.times
    d0 = lambda1 / 2
    dpsi = np.gradient(psi, t)
    lhs = dpsi + d0 * psi / s_c ** 2
    inner = t > 0
    c_bar = float(np.max(lhs[inner] * s_c ** 2 / (t[inner] * g_sc)))
    sel = inner if fit_window is None else (t >= fit_window[0]) & (t <= fit_window[1])
    sel &= psi > 0
    rate = math.nan
    if np.count_nonzero(sel) >= 2:
        rate = -float(np.polyfit(t[sel], np.log(psi[sel]), 1)[0])
    return PsiSeries(t, psi, s_c, d0, max(c_bar, 0.0), rate, d0 / (2 * s_c ** 2))


####################################################################
# k-sequences and derived checks


@dataclass
class LevelResult:
    mass: float
    rho: float
    center: dict
    l2: dict
    steps: int
    field: Optional[SpaceTimeField] = None


@dataclass
class DichotomyReport:
    verdict: str
    levels: list
    ratios: list
    l2_ratios: dict
    lower_bound: Optional[float] = None
    note: str = ""


SATURATING = "Saturating"
DIVERGING = "Diverging"
INDETERMINATE = "Indeterminate"


def run_levels(params: ProblemParams, h: Potential, masses, rhos, grid: RadialGrid, T: float,
               t_probe, *, keep_fields: bool = False, shape: str = "tophat", **kw) -> list:
    """Evolve each ``(mass, rho)`` level and record ``u(0, t)`` and ``int u^2`` at the probes."""
    t_probe = sorted(float(x) for x in np.atleast_1d(t_probe))
    out = []
    for m, rho in zip(masses, rhos):
        u0 = make_dirac_approx(m, rho, shape, grid)
        fld = evolve(params, h, u0, grid, T, t_out=t_probe, **kw)
        c = {t: float(fld.at(t)[0]) for t in t_probe}
        l2 = {t: fld.l2_norm_sq(t) for t in t_probe}
        log.info("level mass=%.3g rho=%.3g steps=%d u0=%s", m, rho, fld.n_steps, c)
        out.append(LevelResult(m, rho, c, l2, fld.n_steps, fld if keep_fields else None))
    return out


def razor_lower_bound(omega0: float, p: float, t: float, lambda1: float, N: int = 1) -> tuple:
    """Maximise ``eps^(-2/(p-1)) exp(omega0/((p-1) eps^2)) exp(-lambda1 t / eps^2)`` over ``eps``.

    Returns ``(log_bound, eps_star)``; the bound is infinite (``log = inf``)
    when ``omega0/(p-1) > lambda1 t``.
    """
    c = omega0 / (p - 1) - lambda1 * t
    if c > 0:
        return math.inf, 0.0
    # log b = (1/(p-1)) ln(1/eps^2) + c / eps^2, maximal at 1/eps^2 = 1/((p-1)|c|)
    if c == 0:
        return math.inf, 0.0
    x = 1.0 / ((p - 1) * -c)
    return (math.log(x) / (p - 1) + c * x), 1 / math.sqrt(x)


def k_sequence_limit(params: ProblemParams, h: Potential, masses, rhos, grid: RadialGrid,
                     T: float, t_probe: float, *, sat_tol: float = 0.02, div_margin: float = 0.25,
                     div_run: int = 3, lambda1: Optional[float] = None, **kw) -> DichotomyReport:
    """Classify the trend of ``u_k(0, t_probe)`` over at least five levels.

    ``Saturating`` when the last successive ratio is within ``sat_tol`` of
    one; ``Diverging`` when ``div_run`` consecutive ratios are at least
    ``1 + div_margin``.
    """
    if len(masses) < 5:
        raise InvalidParameterError("a dichotomy needs at least five levels")
    lev = run_levels(params, h, masses, rhos, grid, T, [t_probe], **kw)
    vals = [L.center[t_probe] for L in lev]
    ratios = [b / a for a, b in zip(vals[:-1], vals[1:])]
    l2 = [L.l2[t_probe] for L in lev]
    l2r = {t_probe: [b / a for a, b in zip(l2[:-1], l2[1:])]}
    run = 0
    best = 0
    for q in ratios:
        run = run + 1 if q >= 1 + div_margin else 0
        best = max(best, run)
    lb = None
    if lambda1 is not None and hasattr(h, "omega") and h.omega.form == "constant":
        lb = razor_lower_bound(h.omega.omega0, params.p, t_probe, lambda1, params.N)[0]
    if best >= div_run:
        verdict = DIVERGING
    elif abs(ratios[-1] - 1) <= sat_tol:
        verdict = SATURATING
    else:
        verdict = INDETERMINATE
    return DichotomyReport(verdict, lev, ratios, l2r, lb,
                           f"{len(lev)} levels, longest run of ratios >= {1 + div_margin:g}: {best}")


@dataclass
class ScalingReport:
    ell: float
    k: float
    k_prime: float
    deviation: float
    window: tuple


def transformed_mass(params: ProblemParams, k: float, ell: float) -> float:
    """Mass ``ell^(gamma - N/2) k`` of the run that ``T_ell`` maps ``u_k`` to."""
    return ell ** (params.gamma - params.N / 2) * k


def scaling_transform_check(params: ProblemParams, fld_k: SpaceTimeField, fld_kp: SpaceTimeField,
                            ell: float, t: float, window: tuple) -> float:
    """Sup-relative distance between ``ell^gamma u_k(sqrt(ell) x, ell t)`` and ``u_k'(x, t)``.

    ``window`` bounds ``|x|``; the distance is ``sup|diff| / sup|ref|`` there.
    """
    gam = params.gamma
    x = np.linspace(window[0], window[1], 401)
    if math.sqrt(ell) * window[1] > fld_k.grid.R or window[1] > fld_kp.grid.R:
        raise DomainError("scaling window leaves the computational domain")
    a = ell ** gam * fld_k.interpolate(ell * t, math.sqrt(ell) * x)
    b = fld_kp.interpolate(t, x)
    return float(np.max(np.abs(a - b)) / np.max(np.abs(b)))


@dataclass
class LongTimeReport:
    monotone_violation: float
    profile: np.ndarray
    times: np.ndarray
    decaying: bool


def longtime_profile(fld: SpaceTimeField, r_probe=None) -> LongTimeReport:
    """Largest relative decrease in time over the probe radii, and the final profile."""
    g = fld.grid
    idx = np.arange(len(g.r) - 1) if r_probe is None else \
        np.searchsorted(g.r, np.asarray(r_probe, dtype=float))
    vals = fld.values[1:, idx]
    drops = (vals[:-1] - vals[1:]) / np.maximum(np.abs(vals[1:]), 1e-300)
    worst = float(max(np.max(drops), 0.0)) if drops.size else 0.0
    decaying = bool(vals[-1, 0] < vals[0, 0])
    return LongTimeReport(worst, fld.values[-1].copy(), fld.times.copy(), decaying)


def envelope_constant(params: ProblemParams, fld: SpaceTimeField, t_min: float = 0.0) -> float:
    """Smallest ``c`` with ``u (r^2 + t)^gamma <= c`` over all snapshots with ``t > t_min``."""
    gam = params.gamma
    r2 = fld.grid.r ** 2
    best = 0.0
    for t, v in zip(fld.times, fld.values):
        if t > t_min:
            best = max(best, float(np.max(v * (r2 + t) ** gam)))
    return best
