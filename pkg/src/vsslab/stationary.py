"""Radial solutions of ``-Laplacian(U) + h U^p = 0`` away from the origin, and ball eigenpairs.

Point-source solutions carry a prescribed flux ``k`` through the inner
sphere ``r = r_min``; the minimal large solution is their limit as ``k``
doubles.  Exterior problems blowing up on ``r = eps`` give the maximal
solution from above.  All nonlinear solves use Newton's method started from
a supersolution: the residual is convex in ``U`` and its Jacobian is an
M-matrix, so the iterates decrease monotonically to the solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg

from .model import InvalidParameterError, NumericError, Potential, ProblemParams, sphere_area
from .profiles import RadialProfile
from .radial import RadialFV


@dataclass
class StationarySolution:
    profile: RadialProfile
    kind: str
    k: float = math.nan
    flux_inner: float = math.nan
    residual: float = math.nan
    iterations: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def r(self):
        return self.profile.r

    @property
    def U(self):
        return self.profile.f


def adapted_mesh(h: Potential, a: float, R: float, *, rel: float = 0.01, frac: float = 0.05,
                 h_max: float = 0.02, log_h_floor: float = -np.inf) -> np.ndarray:
    """Nodes from ``a`` to ``R`` with spacing ``min(rel r, frac/|d log h/dr|, h_max)``.

    The log-derivative of ``h`` sets the length scale of solutions wherever
    absorption is active; where ``log h < log_h_floor`` it is inactive and
    only the geometric spacing applies.
    """
    nodes = [a]
    r = a
    while r < R:
        dr = min(rel * r, h_max)
        lh = float(h.log_values(r))
        if lh >= log_h_floor:
            d = 1e-6 * r
            slope = abs(float(h.log_values(r + d)) - float(h.log_values(r - d))) / (2 * d)
            if slope > 0:
                dr = min(dr, frac / slope)
        r += dr
        nodes.append(r)
    nodes = np.asarray(nodes)
    nodes[-1] = R
    if nodes[-1] - nodes[-2] < 0.3 * (nodes[-2] - nodes[-3]):
        nodes = np.delete(nodes, -2)
    return nodes


def _log_h(h: Potential, r):
    return np.asarray(h.log_values(r), dtype=float)


def _newton(op: RadialFV, log_h, p, src, U, fixed, *, tol=1e-13, res_tol=1e-8, max_iter=5000):
    """Solve ``-op(U) + h U^p = src`` with ``U`` held at the ``fixed`` rows.

    ``U`` must be a supersolution; the step is clipped so iterates stay
    positive.  The iteration runs on ``V = U/S`` with ``S = max U`` so that
    ``h U^p`` never overflows, the coefficient ``h S^(p-1)`` being formed in
    logs.  Returns ``(U, scaled residual, iterations)``.
    """
    free = ~fixed
    n = len(U)
    S = float(np.max(U))
    V = U / S
    src = src / S
    log_c = log_h + (p - 1) * math.log(S)

    def absorb(V):
        # h U^(p-1) in logs: V^p alone underflows where V < 1e-160
        with np.errstate(divide="ignore", over="ignore", under="ignore"):
            return np.exp(np.minimum(log_c + (p - 1) * np.log(V), 700.0))

    def resid(V):
        F = -op.apply(V) + absorb(V) * V - src
        F[fixed] = 0.0
        return F

    def scale(V):
        return (op.up * np.abs(np.roll(V, -1)) + op.dn * np.abs(np.roll(V, 1))
                + (op.up + op.dn) * np.abs(V) + absorb(V) * V + np.abs(src) + 1e-300)

    for it in range(1, max_iter + 1):
        F = resid(V)
        ab = -op.banded()
        ab[1] += p * absorb(V)
        for i in np.nonzero(fixed)[0]:
            ab[1, i] = 1.0
            if i + 1 < n:
                ab[0, i + 1] = 0.0
            if i - 1 >= 0:
                ab[2, i - 1] = 0.0
        step = linalg.solve_banded((1, 1), ab, -F, check_finite=False)
        step[fixed] = 0.0
        V_new = np.maximum(V + step, 0.5 * V * free + V * fixed)
        # ignore values too small to carry relative precision
        live = V_new > 1e-280
        change = float(np.max(np.abs(V_new - V)[live] / V_new[live]))
        V = V_new
        if change < tol:
            break
    else:
        raise NumericError("Newton iteration did not converge")
    live = V > 1e-280
    res = float(np.max((np.abs(resid(V)) / scale(V))[live]))
    if res > res_tol:
        raise NumericError(f"Newton stalled with scaled residual {res:.3g}")
    return V * S, res, it


def solve_point_source(params: ProblemParams, h: Potential, k: float, *, r_min: float = 1e-4,
                       R: float = 4.0, r=None, U_init=None) -> StationarySolution:
    """``-U'' - (N-1)/r U' + h U^p = 0`` on ``(r_min, R)``, flux ``k`` in at ``r_min``, ``U(R) = 0``.

    The flux convention is ``|S^(N-1)| r_min^(N-1) (-U'(r_min)) = k``; for
    ``N = 1`` the two half-lines share the mass, so ``-U'(r_min) = k/2``.
    Without ``U_init`` Newton starts from the harmonic solution with the
    same flux, which is a supersolution.  The default mesh is adapted to
    ``h`` wherever ``h k^(p-1)`` is not negligible.
    """
    if not k > 0:
        raise InvalidParameterError("k must be positive")
    N, p = params.N, params.p
    if r is None:
        r = adapted_mesh(h, r_min, R, log_h_floor=-(p - 1) * math.log(k * R + 1.0) - 10.0)
    r = np.asarray(r, dtype=float)
    op = RadialFV(r, N)
    log_h = _log_h(h, r)
    area = sphere_area(N)
    src = np.zeros_like(r)
    src[0] = k / area / op.vol[0]
    fixed = np.zeros(len(r), dtype=bool)
    fixed[-1] = True
    if U_init is None:
        # discrete harmonic solution: constant flux k/area through every face
        drops = (k / area) / op.cond
        U = np.concatenate((np.cumsum(drops[::-1])[::-1], [0.0]))
    else:
        U = np.asarray(U_init, dtype=float).copy()
    U[-1] = 0.0
    U, res, it = _newton(op, log_h, p, src, U, fixed)
    flux = float(area * (op.cond[0] * (U[0] - U[1])
                        + op.vol[0] * np.exp(log_h[0] + p * np.log(U[0]))))
    prof = RadialProfile(r, U, None, "Stationary", {"N": N, "k": k, "R": R, "r_min": r_min})
    return StationarySolution(prof, "PointSource", k, flux, res, it)


def maximal_exhaustion(params: ProblemParams, h: Potential, eps: float, *, R: float = 4.0,
                       ratio: float = 0.9, tol: float = 1e-8,
                       max_levels: int = 200, jump: float = 16.0) -> StationarySolution:
    """Exterior large solution on ``(eps, R)`` with ``U(eps) = inf`` and ``U(R) = 0``.

    Boundary values ``K`` rise by ``jump`` per level (Newton from
    ``jump * U_K``, a supersolution) until the solution on ``[2 eps, 0.9 R]``
    changes by less than ``tol`` relative.
    """
    N, p = params.N, params.p
    log_h_eps = float(h.log_values(eps))
    if not np.isfinite(log_h_eps):
        raise NumericError(f"h vanishes at eps={eps}")
    L = math.exp((math.log(2 * (p + 1) / (p - 1) ** 2) - log_h_eps) / (p - 1))
    gap_top = min(0.5 * eps, 0.1 * (R - eps))
    # innermost gap: a thousandth of the layer width at the largest level reached
    gap_min = 1e-6 * gap_top
    gaps = [gap_top]
    while gaps[-1] * ratio > gap_min:
        gaps.append(gaps[-1] * ratio)
    near = eps + np.asarray(gaps[::-1])
    far = adapted_mesh(h, eps + gap_top, R)[1:]
    r = np.concatenate(([eps], near, far))
    op = RadialFV(r, N)
    log_h = _log_h(h, r)
    src = np.zeros_like(r)
    fixed = np.zeros(len(r), dtype=bool)
    fixed[0] = fixed[-1] = True
    win = (r >= 2 * eps) & (r <= 0.9 * R)
    # the first level sits at the boundary-layer scale of the innermost gap
    K = L * gap_top ** (-2 / (p - 1))
    U = np.full_like(r, K)
    U[-1] = 0.0
    prev = None
    it_total = 0
    for lev in range(max_levels):
        U[0] = K
        U, res, it = _newton(op, log_h, p, src, U, fixed)
        it_total += it
        if prev is not None:
            diff = float(np.max(np.abs(U[win] - prev[win]) / U[win]))
            layer = (L / K) ** ((p - 1) / 2)
            if diff < tol and layer < 10 * gap_min:
                break
            if layer < gap_min:
                break
        prev = U.copy()
        K *= jump
        U = U * jump
        U[-1] = 0.0
    else:
        raise NumericError("exhaustion ladder did not settle")
    prof = RadialProfile(r, U, None, "Stationary", {"N": N, "eps": eps, "R": R, "K": K})
    return StationarySolution(prof, "MaximalExhaustion", math.inf, math.nan, res, it_total,
                              {"boundary_constant": L, "K_final": K})


def minimal_large_solution(params: ProblemParams, h: Potential, *, r_min: float = 1e-4,
                           R: float = 4.0, window=(0.1, None), tol: float = 1e-6,
                           max_doublings: int = 40, k0: Optional[float] = None,
                           eps_ref: float = 0.05) -> StationarySolution:
    """Limit of point-source solutions as ``k`` doubles.

    The starting flux ``k0`` defaults to a quarter of the flux of the
    exterior large solution on ``(eps_ref, R)`` through ``r = window[0]``;
    point-source solutions lie below that solution, so this only skips
    levels that are far from saturation.
    """
    N, p = params.N, params.p
    lo, hi = window[0], window[1] if window[1] is not None else 0.9 * R
    if k0 is None:
        ex = maximal_exhaustion(params, h, eps_ref, R=R)
        j = int(np.searchsorted(ex.r, lo))
        slope = (ex.U[j - 1] - ex.U[j + 1]) / (ex.r[j + 1] - ex.r[j - 1])
        k0 = 0.25 * sphere_area(N) * lo ** (N - 1) * slope
    # one mesh for every level, resolving the largest flux allowed
    k_cap = k0 * 2.0 ** max_doublings
    r = adapted_mesh(h, r_min, R, log_h_floor=-(p - 1) * math.log(k_cap * R + 1.0) - 10.0)
    win = (r >= lo) & (r <= hi)
    k = k0
    sol = solve_point_source(params, h, k, r_min=r_min, R=R, r=r)
    history = []
    for j in range(max_doublings):
        k *= 2
        nxt = solve_point_source(params, h, k, r=r, R=R, r_min=r_min, U_init=2 * sol.U)
        diff = float(np.max(np.abs(nxt.U[win] - sol.U[win]) / nxt.U[win]))
        history.append((k, diff))
        sol = nxt
        if diff < tol:
            break
    else:
        sol.kind = "MinimalLarge"
        sol.meta.update({"converged": False, "history": history, "k0": k0})
        return sol
    sol.kind = "MinimalLarge"
    sol.meta.update({"converged": True, "history": history, "k0": k0})
    return sol


def inner_mass(sol: StationarySolution, eps: float, r_lo: float) -> float:
    """``|S^(N-1)| int_{r_lo}^{eps} U r^(N-1) dr`` (trapezoid on the mesh)."""
    r, U = sol.r, sol.U
    N = int(sol.profile.meta.get("N", 1))
    sel = (r >= r_lo) & (r <= eps)
    return float(sphere_area(N) * np.trapezoid(U[sel] * r[sel] ** (N - 1), r[sel]))


####################################################################
# eigenpairs


def _dirichlet_tridiagonal(N: int, R: float, n: int, kappa: float = 0.0):
    """Symmetric tridiagonal form of ``-(1/m)(m f')'`` on ``[0, R]``, ``f(R) = 0``."""
    r = np.linspace(0.0, R, n + 1)
    op = RadialFV(r, N, kappa)
    vol = op.vol[:-1]
    cond = op.cond
    # stiffness S and mass M = diag(vol); symmetric form M^-1/2 S M^-1/2
    diag = (np.concatenate(([0.0], cond[:-1])) + cond) / vol
    off = -cond[:-1] / np.sqrt(vol[:-1] * vol[1:])
    return r[:-1], diag, off, vol


def _principal_pair(N, R, n, kappa=0.0, iters=200):
    r, d, e, vol = _dirichlet_tridiagonal(N, R, n, kappa)
    # inverse iteration with Rayleigh quotient (no shift: the matrix is SPD)
    ab = np.zeros((3, len(d)))
    ab[0, 1:] = e
    ab[1] = d
    ab[2, :-1] = e
    x = np.ones_like(d)
    lam = math.nan
    for _ in range(iters):
        y = linalg.solve_banded((1, 1), ab, x)
        y /= np.linalg.norm(y)
        Ay = d * y
        Ay[:-1] += e * y[1:]
        Ay[1:] += e * y[:-1]
        new = float(y @ Ay)
        x = y
        if abs(new - lam) <= 1e-15 * new:
            lam = new
            break
        lam = new
    phi = x / np.sqrt(vol)
    phi /= phi[0]
    return lam, r, phi


def ball_eigenpair(N: int, R: float = 1.0, *, n: int = 4000, extrapolate: bool = True):
    """Principal Dirichlet eigenpair of ``-Laplacian`` on the ball ``B_R``.

    The second-order eigenvalue on ``n`` and ``2n`` cells is combined by
    Richardson extrapolation.  ``phi`` is normalised to ``phi(0) = 1``.
    """
    if N < 1 or R <= 0:
        raise InvalidParameterError("need N >= 1 and R > 0")
    lam, r, phi = _principal_pair(N, R, n)
    if extrapolate:
        lam2, r2, phi2 = _principal_pair(N, R, 2 * n)
        lam = (4 * lam2 - lam) / 3
        r, phi = r2, phi2
    r = np.append(r, R)
    phi = np.append(phi, 0.0)
    return lam, RadialProfile(r, phi, None, "Eigenfunction", {"N": N, "R": R, "lambda1": lam})
