"""Self-similar profiles and boundary blow-up solutions.

All radial problems here share the operator

    f'' + ((N-1)/r + r/2) f' + gamma f - r**beta |f|**(p-1) f = 0,

either as an initial value problem shot from the origin (very singular
profiles) or as a two-point problem that blows up on the sphere ``r = a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, interpolate, linalg, optimize

from .model import InvalidParameterError, NumericError, ProblemParams
from .radial import RadialFV

UNDERSHOOT = "Undershoot"
OVERSHOOT = "Overshoot"
CONVERGED = "Converged"


class StiffFailureError(RuntimeError):
    """The integrator's step size collapsed before reaching the target radius."""


class SearchFailureError(RuntimeError):
    """No undershoot/overshoot bracket was found in the allowed range."""


class ResolutionError(RuntimeError):
    """A limit did not settle within the allowed number of refinements."""


@dataclass
class RadialProfile:
    """Samples of a radial function with optional derivative values."""

    r: np.ndarray
    f: np.ndarray
    fprime: Optional[np.ndarray] = None
    kind: str = "VSSProfile"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.f = np.asarray(self.f, dtype=float)
        if self.fprime is not None:
            self.fprime = np.asarray(self.fprime, dtype=float)
        if np.any(np.diff(self.r) <= 0):
            raise ValueError("profile radii must be strictly increasing")

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.fprime is not None:
            return interpolate.CubicHermiteSpline(self.r, self.f, self.fprime)(x)
        return interpolate.PchipInterpolator(self.r, self.f)(x)

    def restrict(self, r_lo: float, r_hi: float) -> "RadialProfile":
        keep = (self.r >= r_lo) & (self.r <= r_hi)
        fp = None if self.fprime is None else self.fprime[keep]
        return RadialProfile(self.r[keep], self.f[keep], fp, self.kind, dict(self.meta))


####################################################################
# shooting


def _profile_rhs(params: ProblemParams):
    N, p, beta, gam = params.N, params.p, params.beta, params.gamma

    def rhs(r, y):
        f, fp = y
        return [fp, -((N - 1) / r + r / 2) * fp - gam * f + r ** beta * abs(f) ** (p - 1) * f]

    return rhs


def origin_series(params: ProblemParams, f0: float, r: float) -> tuple:
    """Leading terms of the regular solution with ``f(0) = f0``, ``f'(0) = 0``.

    The absorption contributes ``f0^p r^(beta+2) / ((beta+2)(beta+N))``, which
    is the dominant correction when ``-1 < beta < 0``.
    """
    N, p, beta, gam = params.N, params.p, params.beta, params.gamma
    a = f0 ** p / ((beta + 2) * (beta + N))
    f = f0 - gam * f0 * r ** 2 / (2 * N) + a * r ** (beta + 2)
    fp = -gam * f0 * r / N + a * (beta + 2) * r ** (beta + 1)
    return f, fp


def algebraic_amplitude(params: ProblemParams, r):
    """Large-``r`` branch ``((1/(p-1)) r^-beta)^(1/(p-1))`` of the profile equation."""
    p = params.p
    return (1.0 / (p - 1)) ** (1.0 / (p - 1)) * np.asarray(r, dtype=float) ** (-params.beta / (p - 1))


def fast_branch_log_slope(params: ProblemParams, r):
    """``y'/y`` of the Gaussian branch ``r^(2 gamma - N) exp(-r^2/4)``."""
    r = np.asarray(r, dtype=float)
    return (2 * params.gamma - params.N) / r - r / 2


@dataclass
class Trajectory:
    profile: RadialProfile
    outcome: str
    r_end: float
    discriminant: float
    solution: object = None


def integrate_profile_ode(params: ProblemParams, f0: float, r_max: float = 12.0, *,
                          rtol: float = 1e-12, atol: float = 1e-300, r0: float = 1e-6,
                          blowup_factor: float = 10.0, dense: bool = False) -> Trajectory:
    """Shoot the profile equation from ``f(0) = f0`` out to ``r_max``.

    Terminates early with ``Undershoot`` when ``f`` reaches zero and with
    ``Overshoot`` when ``f`` exceeds ``blowup_factor`` times both ``f0`` and
    the algebraic branch.  Otherwise the outcome is decided at ``r_max`` by
    the sign of ``f' - ((2 gamma - N)/r - r/2) f``, which annihilates the
    Gaussian branch to leading order and is positive on the slowly decaying
    branch.
    """
    if not f0 > 0:
        raise InvalidParameterError("f0 must be positive")
    if params.beta <= -1:
        raise InvalidParameterError("the regular shooting problem needs beta > -1")
    rhs = _profile_rhs(params)

    def crossing(r, y):
        return y[0]

    crossing.terminal = True
    crossing.direction = -1

    def blowup(r, y):
        cap = blowup_factor * max(f0, float(algebraic_amplitude(params, r)))
        return y[0] - cap

    blowup.terminal = True
    blowup.direction = 1

    y0 = origin_series(params, f0, r0)
    sol = integrate.solve_ivp(rhs, (r0, r_max), y0, method="DOP853", rtol=rtol,
                              atol=atol, events=(crossing, blowup), dense_output=dense)
    runaway = False
    if sol.status == -1:
        # a step-size collapse while f grows is blow-up at finite radius
        if sol.y[0, -1] > f0 and sol.y[1, -1] > 0:
            runaway = True
        else:
            raise StiffFailureError(f"integrator failed at r={sol.t[-1]:.6g}: {sol.message}")
    r_end = float(sol.t[-1])
    if dense:
        # solver steps are too sparse for interpolating second derivatives
        rs = np.union1d(sol.t, np.arange(r0, r_end, 0.002))
        ys = sol.sol(rs)
    else:
        rs, ys = sol.t, sol.y
    r = np.concatenate(([0.0], rs))
    f = np.concatenate(([f0], ys[0]))
    fp = np.concatenate(([0.0], ys[1]))
    if sol.t_events[0].size:
        outcome = UNDERSHOOT
    elif sol.t_events[1].size or runaway:
        outcome = OVERSHOOT
    else:
        outcome = None
    disc = float(fp[-1] - fast_branch_log_slope(params, r_end) * f[-1])
    if outcome is None:
        outcome = OVERSHOOT if disc > 0 else UNDERSHOOT
    prof = RadialProfile(r, f, fp, "VSSProfile", {"f0": f0, **params.to_dict()})
    return Trajectory(prof, outcome, r_end, disc, sol)


@dataclass
class ShootingResult:
    found: bool
    f0: float
    bracket: tuple
    profile: Optional[RadialProfile]
    trials: list
    resolved_radius: float = math.nan
    note: str = ""

    def to_dict(self) -> dict:
        return {"found": self.found, "f0": self.f0, "bracket": list(self.bracket),
                "resolved_radius": self.resolved_radius, "trials": len(self.trials),
                "note": self.note}


def find_vss_profile(params: ProblemParams, *, rel_width: float = 1e-10, r_max: float = 12.0,
                     rtol: float = 1e-12, f0_range=(1e-6, 1e6), sweep_points: int = 49,
                     require_supercritical: bool = True) -> ShootingResult:
    """Bisect ``f(0)`` between an undershoot and an overshoot.

    A coarse logarithmic sweep over ``f0_range`` locates the sign change;
    when the sweep is one-signed the result reports no solution together
    with the trial outcomes.  The returned profile is truncated where the
    two bracketing trajectories separate by more than ``1e-6`` relative.
    """
    trials = []

    def shoot(f0):
        traj = integrate_profile_ode(params, f0, r_max, rtol=rtol)
        trials.append((f0, traj.outcome))
        return traj

    grid = np.geomspace(f0_range[0], f0_range[1], sweep_points)
    lo = hi = None
    for f0 in grid:
        if shoot(f0).outcome == UNDERSHOOT:
            lo = f0
        elif lo is not None:
            hi = f0
            break
    outcomes = {o for _, o in trials}
    if hi is None:
        crit = params.critical_beta
        note = f"one-signed sweep ({', '.join(sorted(outcomes))}); beta={params.beta:g}, critical {crit:g}"
        if params.beta > crit and require_supercritical:
            raise SearchFailureError("no bracket in the f0 range: " + note)
        return ShootingResult(False, math.nan, (math.nan, math.nan), None, trials, note=note)

    while hi - lo > rel_width * lo:
        mid = math.sqrt(lo * hi)
        if mid in (lo, hi):
            break
        if shoot(mid).outcome == UNDERSHOOT:
            lo = mid
        else:
            hi = mid
    t_lo = integrate_profile_ode(params, lo, r_max, rtol=rtol, dense=True)
    t_hi = integrate_profile_ode(params, hi, r_max, rtol=rtol, dense=True)
    r_common = min(t_lo.r_end, t_hi.r_end)
    rr = t_lo.profile.r[t_lo.profile.r <= r_common]
    rr = rr[rr > 0]
    fl = t_lo.solution.sol(rr)[0]
    fh = t_hi.solution.sol(rr)[0]
    bad = np.nonzero(np.abs(fh - fl) > 1e-6 * np.abs(fl))[0]
    r_res = float(rr[bad[0]]) if bad.size else r_common
    f0 = 0.5 * (lo + hi)
    prof = t_lo.profile.restrict(0.0, r_res)
    prof.meta.update({"f0": f0, "bracket": [lo, hi], "resolved_radius": r_res})
    return ShootingResult(True, f0, (lo, hi), prof, trials, r_res,
                          note=f"supercritical; resolved to r={r_res:.3g}")


@dataclass
class GaussianFit:
    c: float
    residual: float
    slope_deviation: float
    corrected_slope_deviation: float


def fit_gaussian_asymptote(profile: RadialProfile, params: ProblemParams, window=(4.0, 6.0),
                           n: int = 201) -> GaussianFit:
    """Least-squares constant in ``f ~ c r^(2 gamma - N) exp(-r^2/4)`` on ``window``.

    ``residual`` is the max relative deviation of the scaled tail from
    ``c``.  ``slope_deviation`` compares ``f'/f`` with ``-r/2`` and
    ``corrected_slope_deviation`` with the full ``(2 gamma - N)/r - r/2``.
    """
    r1, r2 = window
    if r2 > profile.r_max:
        raise ValueError(f"window end {r2} beyond resolved range {profile.r_max:.4g}")
    rr = np.linspace(r1, r2, n)
    f = profile(rr)
    scaled = f * rr ** (params.N - 2 * params.gamma) * np.exp(rr ** 2 / 4)
    c = float(np.mean(scaled))
    residual = float(np.max(np.abs(scaled - c)) / abs(c))
    fp = np.interp(rr, profile.r, profile.fprime) if profile.fprime is not None \
        else np.gradient(f, rr)
    ratio = fp / f
    slope_dev = float(np.max(np.abs(ratio / (-rr / 2) - 1)))
    full = fast_branch_log_slope(params, rr)
    corrected = float(np.max(np.abs(ratio / full - 1)))
    return GaussianFit(c, residual, slope_dev, corrected)


def self_similar_residual(profile: RadialProfile, params: ProblemParams, x, t,
                          dx: float = 1e-3, dt: float = 1e-3) -> np.ndarray:
    """Parabolic residual of ``u = t^-gamma f(|x|/sqrt t)`` by central differences."""
    N, p, beta, gam = params.N, params.p, params.beta, params.gamma
    x = np.asarray(x, dtype=float)

    def u(xx, tt):
        return tt ** -gam * profile(np.abs(xx) / np.sqrt(tt))

    ut = (-u(x, t + 2 * dt) + 8 * u(x, t + dt) - 8 * u(x, t - dt) + u(x, t - 2 * dt)) / (12 * dt)
    uxx = (-u(x + 2 * dx, t) + 16 * u(x + dx, t) - 30 * u(x, t) + 16 * u(x - dx, t)
           - u(x - 2 * dx, t)) / (12 * dx ** 2)
    ux = (-u(x + 2 * dx, t) + 8 * u(x + dx, t) - 8 * u(x - dx, t) + u(x - 2 * dx, t)) / (12 * dx)
    val = u(x, t)
    lap = uxx + (N - 1) / x * ux
    return ut - lap + np.abs(x) ** beta * np.abs(val) ** (p - 1) * val


####################################################################
# boundary blow-up profiles


def boundary_constant(p: float, beta: float, a: float, power_of_a: float = 1.0) -> float:
    """``(2(p+1) / (a^(power*beta) (p-1)^2))^(1/(p-1))``.

    ``power_of_a = 1`` is the balance of ``z'' = C z^p`` with ``C = a^beta``;
    ``power_of_a = p`` is kept for comparison with the other normalisation.
    """
    return (2 * (p + 1) / (a ** (power_of_a * beta) * (p - 1) ** 2)) ** (1 / (p - 1))


def blowup_mesh(a: float, *, ratio: float = 0.9, gap_min: float = 1e-12,
                h_interior: Optional[float] = None) -> np.ndarray:
    """Uniform nodes away from the boundary, then ``a - r`` geometric with ``ratio``.

    The interior spacing defaults to ``min(0.05, 1/a)`` and the geometric
    part starts where its first step equals that spacing.
    """
    h = h_interior if h_interior is not None else min(0.05, 1.0 / a)
    g0 = min(a / 2, h / (1 - ratio))
    gaps = [g0]
    while gaps[-1] * ratio > gap_min:
        gaps.append(gaps[-1] * ratio)
    outer = a - np.asarray(gaps)
    m = max(int(math.ceil((a - g0) / h)), 4)
    inner = np.linspace(0.0, a - g0, m + 1)[:-1]
    return np.concatenate((inner, outer, [a]))


def _solve_dirichlet(params: ProblemParams, op: RadialFV, k: float, w_init: np.ndarray,
                     tol: float = 1e-12, max_iter: int = 100) -> np.ndarray:
    """Damped Newton for ``L w + gamma w - r^beta w^p = 0``, ``w(a) = k``."""
    p, beta, gam = params.p, params.beta, params.gamma
    r = op.r
    with np.errstate(divide="ignore"):
        rb = np.where(r > 0, r ** beta, 0.0 if beta > 0 else 1.0)
    w = w_init.copy()
    w[-1] = k

    def resid(w):
        res = op.apply(w) + gam * w - rb * w ** p
        res[-1] = 0.0
        return res

    def scale(w):
        return op.up * np.abs(w) + op.dn * np.abs(w) + gam * np.abs(w) + rb * np.abs(w) ** p + 1e-300

    res = resid(w)
    for it in range(max_iter):
        ab = op.banded()
        ab[1] += gam - p * rb * w ** (p - 1)
        ab[1, -1] = 1.0
        ab[2, -2] = 0.0
        step = linalg.solve_banded((1, 1), ab, -res)
        norm0 = np.max(np.abs(res) / scale(w))
        lam = 1.0
        while True:
            w_new = w + lam * step
            if np.all(w_new[:-1] > 0.1 * w[:-1]):
                res_new = resid(w_new)
                if np.max(np.abs(res_new) / scale(w_new)) <= (1 - 1e-4 * lam) * norm0 or lam < 1e-3:
                    break
            lam *= 0.5
            if lam < 1e-8:
                raise NumericError("Newton line search failed")
        w, res = w_new, res_new
        if np.max(np.abs(lam * step) / np.abs(w)) < tol:
            return w
    raise NumericError(f"Newton did not converge for k={k:g}")


@dataclass
class BlowupResult:
    profile: RadialProfile
    levels: list
    constant_measured: float
    constant_balance: float
    constant_alt: float
    flatness: float
    window: tuple


def blowup_profile(params: ProblemParams, a: float, *, ratio: float = 0.9, interior=0.9,
                   tol: float = 1e-8, max_levels: int = 90, h_interior: Optional[float] = None,
                   resolve_boundary: bool = True) -> BlowupResult:
    """Large solution ``F_a`` on the ball of radius ``a`` as the limit of ``w_k``, ``k = 2^j``.

    Each level is solved by Newton from the supersolution ``2 w_{k/2}``
    and the ladder stops once consecutive levels agree to ``tol``
    (relative sup norm) on ``[0, interior*a]``.  The boundary constant is
    read from ``(a - r)^(2/(p-1)) F_a`` over the innermost decade that the
    final level still resolves, i.e. gaps between 1000 and 10000 boundary
    layer widths ``(L/k)^((p-1)/2)``.  With ``resolve_boundary`` the ladder
    continues until that decade lies within ``1e-4/max(a, 1)`` of the sphere,
    where the drift correction to the rate is negligible.
    """
    if not a > 0:
        raise InvalidParameterError("a must be positive")
    if params.beta <= -2:
        raise InvalidParameterError("blow-up profiles need beta > -2")
    p = params.p
    L = boundary_constant(p, params.beta, a)
    k_final_guess = 2.0 ** max_levels
    gap_min = 1e-3 * (L / k_final_guess) ** ((p - 1) / 2)
    gap_min = max(gap_min, 1e-14 * a)
    r = blowup_mesh(a, ratio=ratio, gap_min=gap_min, h_interior=h_interior)
    op = RadialFV(r, params.N, kappa=1.0)
    inner = r <= interior * a
    w = np.ones_like(r)
    levels = []
    prev = None
    for j in range(max_levels + 1):
        k = 2.0 ** j
        w0 = 2 * w if prev is not None else np.full_like(r, k)
        w = _solve_dirichlet(params, op, k, w0)
        if prev is not None:
            diff = float(np.max(np.abs(w[inner] - prev[inner])) / np.max(np.abs(w[inner])))
            levels.append((k, diff))
            layer = (L / k) ** ((p - 1) / 2)
            deep = (not resolve_boundary) or 1000 * layer <= 1e-4 / max(a, 1.0)
            if diff < tol and deep:
                break
        prev = w
    else:
        raise ResolutionError(f"F_a levels did not settle below {tol:g}")
    layer = (L / k) ** ((p - 1) / 2)
    gap = a - r
    g_lo = 1000 * layer
    win = (gap >= g_lo) & (gap <= 10 * g_lo)
    scaled = gap[win] ** (2 / (p - 1)) * w[win]
    measured = float(np.mean(scaled))
    flat = float((scaled.max() - scaled.min()) / measured)
    keep = gap >= g_lo
    prof = RadialProfile(r[keep], w[keep], None, "BlowupProfile",
                         {"a": a, "k_final": k, "levels": len(levels), **params.to_dict()})
    return BlowupResult(prof, levels, measured, L, boundary_constant(p, params.beta, a, p),
                        flat, (g_lo, 10 * g_lo))


@dataclass
class FInfinityResult:
    profile: RadialProfile
    radii: list
    cauchy: list
    extrapolated: bool


def f_infinity_limit(params: ProblemParams, *, a0: float = 2.0, window: float = 1.0,
                     max_doublings: int = 8, tol: float = 1e-6, n_window: int = 101,
                     extrapolate: bool = True, **kw) -> FInfinityResult:
    """Decreasing limit of ``F_a`` as ``a`` doubles, sampled on ``[0, window]``.

    The interior error of ``F_a`` decays like ``a^-2`` (consecutive
    differences shrink by a factor 4), so with ``extrapolate`` the Cauchy
    test runs on the Richardson values ``F_2a + (F_2a - F_a)/3``.
    """
    rr = np.linspace(0.0, window, n_window)
    samples = []
    radii = []
    cauchy = []
    a = a0
    best = None
    for j in range(max_doublings + 1):
        res = blowup_profile(params, a, resolve_boundary=False, **kw)
        samples.append(res.profile(rr))
        radii.append(a)
        cur = samples[-1]
        if extrapolate and len(samples) >= 2:
            cur = samples[-1] + (samples[-1] - samples[-2]) / 3
        if best is not None:
            c = float(np.max(np.abs(cur - best)) / np.max(np.abs(cur)))
            cauchy.append(c)
            if c < tol:
                best = cur
                break
        best = cur
        a *= 2
    else:
        raise ResolutionError(f"F_infinity not settled after {max_doublings} doublings: {cauchy}")
    prof = RadialProfile(rr, best, None, "FInfinity", {"radii": radii, **params.to_dict()})
    return FInfinityResult(prof, radii, cauchy, extrapolate)


####################################################################
# one-dimensional boundary blow-up by quadrature


def _tail_integral(x: float, p: float) -> float:
    """``int_x^inf ds / sqrt(s^(p+1) - 1)`` for ``x >= 1`` via ``s = 1 + u^2``."""
    def g(u):
        s = 1 + u * u
        den = s ** (p + 1) - 1
        if u < 1e-4:
            den = u * u * ((p + 1) + (p + 1) * p / 2 * u * u)
        return 2 * u / math.sqrt(den)

    u0 = math.sqrt(max(x - 1, 0.0))
    val, _ = integrate.quad(g, u0, math.inf, epsabs=0, epsrel=1e-12, limit=400)
    return val


def _mixed_integral(z: float, A: float, gam: float, Ct: float, p: float) -> float:
    def rad(s):
        return A * A - gam * s * s + 2 * Ct * s ** (p + 1) / (p + 1)

    s_star = (gam / Ct) ** (1 / (p - 1))
    mid = max(2 * z, 1.0, 2 * s_star)
    pts = [s_star] if z < s_star < mid else None
    head, _ = integrate.quad(lambda s: 1 / math.sqrt(rad(s)), z, mid, epsabs=0,
                             epsrel=1e-12, limit=400, points=pts)
    # the tail in u = 1/s has an integrable singularity at most like u^-1/2
    tail, _ = integrate.quad(lambda u: 1 / (u * u * math.sqrt(rad(1 / u))) if u > 0 else 0.0,
                             0.0, 1 / mid, epsabs=0, epsrel=1e-12, limit=400)
    val = head + tail
    return val


@dataclass
class QuadratureBlowup:
    t: np.ndarray
    z: np.ndarray
    variant: str
    alpha: float
    z0: float
    slope0: float
    rate_limit: float


def one_d_blowup_quadrature(C: float, alpha: float, p: float, variant: str = "symmetric", *,
                            gamma: float = 0.0, t=None, n: int = 201) -> QuadratureBlowup:
    """Solutions of ``z'' = C z^p`` (symmetric, on ``(-alpha, alpha)``) or of
    ``z'' + gamma z = C z^p`` with ``z(0) = 0`` (mixed, on ``(0, alpha)``)
    that blow up at the open ends, recovered from the first integral.
    """
    if not (C > 0 and alpha > 0 and p > 1):
        raise InvalidParameterError("C, alpha must be positive and p > 1")
    rate = (2 * (p + 1) / (C * (p - 1) ** 2)) ** (1 / (p - 1))
    variant = variant.lower()
    if variant == "symmetric":
        if t is None:
            t = alpha * np.sin(np.linspace(-math.pi / 2, math.pi / 2, n + 2)[1:-1])
        t = np.asarray(t, dtype=float)
        k = math.sqrt(2 * C / (p + 1))
        Ip = _tail_integral(1.0, p)
        z0 = (Ip / (k * alpha)) ** (2 / (p - 1))
        e = (p - 1) / 2
        z = np.empty_like(t)
        for i, ti in enumerate(t):
            target = k * (alpha - abs(ti)) * z0 ** e
            if target >= Ip:
                z[i] = z0
                continue
            # tail integral decreases from Ip at sigma = 1 to 0 at infinity
            hi = 2.0
            while _tail_integral(hi, p) > target:
                hi *= 2
            sig = optimize.brentq(lambda s: _tail_integral(s, p) - target, 1.0, hi,
                                  xtol=1e-15, rtol=1e-15, maxiter=200)
            z[i] = z0 * sig
        return QuadratureBlowup(t, z, variant, alpha, z0, 0.0, rate)
    if variant == "mixed":
        if not gamma > 0:
            raise InvalidParameterError("mixed variant needs gamma > 0")
        if t is None:
            t = alpha * (1 - np.cos(np.linspace(0, math.pi / 2, n + 1)[:-1]))
        t = np.asarray(t, dtype=float)
        # the radicand must stay positive: A^2 above max_s (gamma s^2 - 2C s^(p+1)/(p+1))
        s_star = (gamma / C) ** (1 / (p - 1))
        a_min2 = gamma * s_star ** 2 - 2 * C * s_star ** (p + 1) / (p + 1)
        a_lo = math.sqrt(max(a_min2, 0.0)) * (1 + 1e-6) + 1e-300
        a_hi = max(1.0, 2 * a_lo)
        while _mixed_integral(0.0, a_hi, gamma, C, p) > alpha:
            a_hi *= 2
        if _mixed_integral(0.0, a_lo, gamma, C, p) < alpha:
            raise NumericError("mixed blow-up: alpha too large for a positive slope bracket")
        A = optimize.brentq(lambda A_: _mixed_integral(0.0, A_, gamma, C, p) - alpha, a_lo, a_hi,
                            xtol=1e-300, rtol=1e-14)
        z = np.empty_like(t)
        for i, ti in enumerate(t):
            target = alpha - ti
            if ti == 0:
                z[i] = 0.0
                continue
            hi = 1.0
            while _mixed_integral(hi, A, gamma, C, p) > target:
                hi *= 2
            z[i] = optimize.brentq(lambda s: _mixed_integral(s, A, gamma, C, p) - target, 0.0, hi,
                                   xtol=1e-300, rtol=1e-14)
        return QuadratureBlowup(t, z, variant, alpha, 0.0, A, rate)
    raise InvalidParameterError(f"unknown variant {variant!r}")


def blowup_time_by_ode(C: float, p: float, z0: float, slope0: float = 0.0, gamma: float = 0.0,
                       cap: float = 1e8) -> tuple:
    """Integrate ``z'' = C z^p - gamma z`` from ``(z0, slope0)`` until ``z`` exceeds ``cap``.

    Returns the exit time and the solver (with dense output).  Used as an
    independent check of the quadrature construction.
    """
    def rhs(t, y):
        return [y[1], C * abs(y[0]) ** p - gamma * y[0]]

    def big(t, y):
        return y[0] - cap

    big.terminal = True
    atol = 1e-16 * max(abs(z0), abs(slope0), 1e-300)
    sol = integrate.solve_ivp(rhs, (0, 1e6), [z0, slope0], method="DOP853", rtol=1e-13,
                              atol=atol, events=big, dense_output=True)
    if not sol.t_events[0].size:
        raise NumericError(f"no blow-up detected: {sol.message}")
    return float(sol.t_events[0][0]), sol


####################################################################
# a priori envelopes


def ko_envelope(params: ProblemParams, x_abs, t, F_inf: RadialProfile, c_star: float,
                c_tilde: float) -> tuple:
    """Upper envelopes of a solution vanishing off the origin at ``t = 0``.

    Returns ``(min(c* |x|^-2gamma, u_M), c~ (|x|^2 + t)^-gamma, u_M)`` with
    ``u_M = t^-gamma F_inf(|x|/sqrt t)``; beyond the sampled range of
    ``F_inf`` its algebraic tail is used.
    """
    gam = params.gamma
    x_abs = np.asarray(x_abs, dtype=float)
    eta = x_abs / np.sqrt(t)
    inside = eta <= F_inf.r_max
    tail = algebraic_amplitude(params, np.maximum(eta, 1e-300))
    fv = np.where(inside, F_inf(np.minimum(eta, F_inf.r_max)), tail)
    u_m = t ** -gam * fv
    with np.errstate(divide="ignore"):
        near = c_star * x_abs ** (-2 * gam)
    b5 = np.minimum(near, u_m)
    b5p = c_tilde * (x_abs ** 2 + t) ** (-gam)
    return b5, b5p, u_m
