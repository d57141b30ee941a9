"""Radial meshes and the finite-volume diffusion operator shared by the solvers.

For a weight ``m(r) = r^(N-1) exp(kappa r^2/4)`` the operator

    (1/m) (m f')'

is discretised node-centred with the first node at the origin.  Cell
volumes are ``int m`` over the dual cell and face conductances are the
harmonic values ``1 / int_{r_i}^{r_(i+1)} dr/m``, both by Gauss-Legendre
quadrature in log-scaled form so that ``exp(r^2/4)`` never overflows.
"""

from __future__ import annotations

import math

import numpy as np

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def log_weight(r, N: int, kappa: float):
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        lr = np.log(r) if N != 1 else np.zeros_like(r)
    return (N - 1) * lr + kappa * r ** 2 / 4


def _log_int(lo, hi, N, kappa, sign, pieces=4):
    """``log int_lo^hi m(r)^sign dr`` for arrays of intervals."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    out = np.empty_like(lo)
    edges = lo[:, None] + (hi - lo)[:, None] * np.linspace(0, 1, pieces + 1)[None, :]
    a = edges[:, :-1]
    b = edges[:, 1:]
    x = 0.5 * (a[..., None] + b[..., None]) + 0.5 * (b - a)[..., None] * _GL_X
    w = 0.5 * (b - a)[..., None] * _GL_W
    lw = sign * log_weight(x, N, kappa)
    ref = np.max(lw, axis=(1, 2))
    with np.errstate(under="ignore"):
        s = np.sum(w * np.exp(lw - ref[:, None, None]), axis=(1, 2))
    out[:] = ref + np.log(s)
    return out


def geometric_then_uniform(h0: float, ratio: float, h_max: float, R: float) -> np.ndarray:
    """Nodes ``0, h0, h0 + h0*ratio, ...`` with spacing capped at ``h_max``, ending at ``R``."""
    r = [0.0]
    h = h0
    while r[-1] < R:
        r.append(r[-1] + h)
        h = min(h * ratio, h_max)
    r = np.asarray(r)
    r[-1] = R
    if r[-1] - r[-2] < 0.3 * (r[-2] - r[-3]):
        r = np.delete(r, -2)
    return r


class RadialFV:
    """Node-centred finite volumes for ``(1/m)(m f')'`` on ``r_0 < ... < r_n``.

    With ``r_0 = 0`` the origin cell has a zero inner flux; with ``r_0 > 0``
    the first dual cell is ``[r_0, (r_0 + r_1)/2]`` and any inner flux is
    supplied by the caller.

    Attributes
    ----------
    log_vol : log of the dual-cell volumes ``int m``
    log_cond : log of the face conductances (length ``n``)
    up, dn : ``G_{i+1/2}/V_i`` and ``G_{i-1/2}/V_i``; zero where absent
    """

    def __init__(self, r, N: int, kappa: float = 0.0):
        r = np.asarray(r, dtype=float)
        if r[0] < 0.0 or np.any(np.diff(r) <= 0):
            raise ValueError("mesh must be nonnegative and strictly increasing")
        self.r = r
        self.N = N
        self.kappa = kappa
        faces = 0.5 * (r[1:] + r[:-1])
        lo = np.concatenate(([r[0]], faces))
        hi = np.concatenate((faces, [r[-1]]))
        self.faces = faces
        self.log_vol = _log_int(lo, hi, N, kappa, +1)
        lc = -_log_int(r[:-1], r[1:], N, kappa, -1)
        if N > 1 and r[0] == 0.0:
            # int dr / r^(N-1) diverges at the origin; use the face value there
            lc[0] = log_weight(faces[0], N, kappa) - math.log(r[1])
        self.log_cond = lc
        n = len(r)
        self.up = np.zeros(n)
        self.dn = np.zeros(n)
        self.up[:-1] = np.exp(lc - self.log_vol[:-1])
        self.dn[1:] = np.exp(lc - self.log_vol[1:])

    @property
    def vol(self):
        return np.exp(self.log_vol)

    @property
    def cond(self):
        return np.exp(self.log_cond)

    def apply(self, f):
        """``(1/m)(m f')'`` at every node (the last row uses a zero outer flux)."""
        out = np.zeros_like(f)
        d = f[1:] - f[:-1]
        out[:-1] += self.up[:-1] * d
        out[1:] -= self.dn[1:] * d
        return out

    def banded(self):
        """``(3, n)`` diagonal-ordered matrix of :meth:`apply` for ``solve_banded``."""
        n = len(self.r)
        ab = np.zeros((3, n))
        ab[1] = -(self.up + self.dn)
        ab[0, 1:] = self.up[:-1]
        ab[2, :-1] = self.dn[1:]
        return ab
