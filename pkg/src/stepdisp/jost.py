"""Faddeev solutions m_plus / m_minus for H = -d^2/dx^2 + 1_+ + V.

m_plus solves   m'' + 2 i rho m' = (V - 1_-) m,   m -> 1 as x -> +oo,
m_minus solves  m'' - 2 i z  m' = (V + 1_+) m,   m -> 1 as x -> -oo,

with rho = (z^2 - 1)^{1/2} on the upper branch.  Outside the potential's
support the tail data (m, m') = (1, 0) is exact, so solutions are obtained
by marching inward from the tail.  Two independent integrators are
provided: an adaptive Runge-Kutta (scipy) and a fixed-step 4th-order
Magnus scheme vectorized over frequency batches, with exact
constant-coefficient propagation across stretches where V vanishes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .core import DomainError, PotentialSample, SpectralPoint, rho_plus, rho_plus_value

__all__ = [
    "FaddeevSolution", "JostBoundReport", "solve_faddeev", "faddeev_batch",
    "second_solution_gplus", "verify_jost_bounds", "ode_residual",
]


class IntegrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class FaddeevSolution:
    """m (and derivatives) on a grid; f is recovered as f = e^{+-i(...)x} m."""

    side: str                    # 'plus' | 'minus' | 'gplus'
    z: SpectralPoint
    grid: np.ndarray
    m: np.ndarray
    dm_dx: np.ndarray
    dm_dlambda: np.ndarray | None = None
    anchor: float | None = None

    def f_values(self):
        """Jost solution f on the grid (for side gplus, m already is g)."""
        if self.side == "plus":
            return np.exp(1j * self.z.rho_plus * self.grid) * self.m
        if self.side == "minus":
            return np.exp(-1j * self.z.z * self.grid) * self.m
        return self.m

    def f_derivatives(self):
        if self.side == "plus":
            e = np.exp(1j * self.z.rho_plus * self.grid)
            return e * (self.dm_dx + 1j * self.z.rho_plus * self.m)
        if self.side == "minus":
            e = np.exp(-1j * self.z.z * self.grid)
            return e * (self.dm_dx - 1j * self.z.z * self.m)
        return self.dm_dx


def _coeffs(side: str, z: complex, delta: float):
    """(w, q) with the first-order form Y' = [[0,1],[q(x), w]] Y."""
    if side == "plus":
        rho = rho_plus_value(z, delta=delta)
        return -2j * rho, None
    if side == "minus":
        return 2j * z, None
    raise DomainError(f"unknown side {side!r}")


def _q_func(side: str, V: PotentialSample, delta: float):
    d2 = delta * delta
    if side == "plus":
        return lambda x: V(x) - d2 * (np.asarray(x) < 0)
    return lambda x: V(x) + d2 * (np.asarray(x) >= 0)


def _anchor(side: str, V: PotentialSample):
    if side == "plus":
        return max(V.grid[-1], 0.0)
    return min(V.grid[0], 0.0)


# ---------------------------------------------------------------------------
# vectorized Magnus marcher
# ---------------------------------------------------------------------------

def _expm2(M):
    """Matrix exponential of a (..., 2, 2) stack, closed form."""
    tr2 = 0.5 * (M[..., 0, 0] + M[..., 1, 1])
    d00 = M[..., 0, 0] - tr2
    s2 = d00 * d00 + M[..., 0, 1] * M[..., 1, 0]
    s = np.sqrt(s2.astype(complex))
    small = np.abs(s) < 1e-8
    safe = np.where(small, 1.0, s)
    ch = np.cosh(safe)
    shs = np.sinh(safe) / safe
    ch = np.where(small, 1.0 + s2 / 2.0, ch)
    shs = np.where(small, 1.0 + s2 / 6.0, shs)
    out = np.empty_like(M, dtype=complex)
    out[..., 0, 0] = ch + shs * d00
    out[..., 0, 1] = shs * M[..., 0, 1]
    out[..., 1, 0] = shs * M[..., 1, 0]
    out[..., 1, 1] = ch - shs * d00
    return np.exp(tr2)[..., None, None] * out


_G1 = 0.5 - math.sqrt(3.0) / 6.0
_G2 = 0.5 + math.sqrt(3.0) / 6.0


def _magnus_step(Y, w, q1, q2, h):
    """One 4th-order Magnus step for Y' = [[0,1],[q(x), w]] Y (h may be < 0)."""
    c = math.sqrt(3.0) * h * h / 12.0
    dq = q1 - q2
    n = Y.shape[0]
    Om = np.empty((n, 2, 2), dtype=complex)
    Om[:, 0, 0] = c * dq
    Om[:, 0, 1] = h
    Om[:, 1, 0] = 0.5 * h * (q1 + q2) + c * w * dq
    Om[:, 1, 1] = h * w - c * dq
    E = _expm2(Om)
    return np.einsum("nij,nj->ni", E, Y)


def _const_jump(Y, w, q, dx):
    """Exact propagation over a stretch with constant coefficient q."""
    n = Y.shape[0]
    M = np.empty((n, 2, 2), dtype=complex)
    M[:, 0, 0] = 0.0
    M[:, 0, 1] = dx
    M[:, 1, 0] = q * dx
    M[:, 1, 1] = w * dx
    return np.einsum("nij,nj->ni", _expm2(M), Y)


def faddeev_batch(side: str, zs, V: PotentialSample, pts, delta: float = 1.0,
                  h_ode: float | None = None):
    """m, m' at the sorted points `pts` for a batch of frequencies.

    Fixed-step Magnus inside the support of V, exact jumps elsewhere
    (the background indicator is piecewise constant).  zs may be complex
    (upper half plane).
    """
    zs = np.asarray(zs, dtype=complex)
    pts = np.asarray(pts, dtype=float)
    if np.any(np.diff(pts) < 0):
        raise DomainError("pts must be sorted ascending")
    n = len(zs)
    if side == "plus":
        rho = rho_plus_value(zs, delta=delta) if n else zs
        w = -2j * np.atleast_1d(rho)
    else:
        w = 2j * zs
    q = _q_func(side, V, delta)
    x0 = _anchor(side, V)
    vlo, vhi = V.support
    if h_ode is None:
        h_ode = min(0.02, 0.5 / (1.0 + float(np.max(np.abs(zs)) if n else 1.0)))

    m_out = np.ones((n, len(pts)), dtype=complex)
    dm_out = np.zeros((n, len(pts)), dtype=complex)

    # walk from the anchor toward the far end, recording requested points
    if side == "plus":
        order = np.argsort(-pts, kind="stable")     # descending
        direction = -1.0
        todo = [i for i in order if pts[i] < x0]
    else:
        order = np.argsort(pts, kind="stable")
        direction = +1.0
        todo = [i for i in order if pts[i] > x0]

    stops = sorted({vlo, vhi, 0.0} | {pts[i] for i in todo} | {x0})
    if side == "plus":
        stops = [s for s in stops if s <= x0][::-1]
    else:
        stops = [s for s in stops if s >= x0]

    Y = np.zeros((n, 2), dtype=complex)
    Y[:, 0] = 1.0
    pt_map = {}
    for i in todo:
        pt_map.setdefault(pts[i], []).append(i)

    pos = x0
    for s in stops[1:]:
        seg_lo, seg_hi = (s, pos) if side == "plus" else (pos, s)
        active = not (seg_hi <= vlo or seg_lo >= vhi) and not V.is_zero()
        length = abs(s - pos)
        if active:
            nsub = max(1, int(math.ceil(length / h_ode)))
            h = direction * length / nsub
            xs = pos + h * np.arange(nsub)
            g1 = q(xs + _G1 * h)
            g2 = q(xs + _G2 * h)
            for k in range(nsub):
                Y = _magnus_step(Y, w, g1[k], g2[k], h)
        elif length > 0:
            qc = q(np.array([0.5 * (seg_lo + seg_hi)]))[0]
            Y = _const_jump(Y, w, qc, direction * length)
        pos = s
        if s in pt_map:
            for i in pt_map[s]:
                m_out[:, i] = Y[:, 0]
                dm_out[:, i] = Y[:, 1]
    return m_out, dm_out


# ---------------------------------------------------------------------------
# adaptive single-frequency solver (with the variational lambda-derivative)
# ---------------------------------------------------------------------------

def _default_grid(V: PotentialSample, z: complex, pad: float = 2.0):
    lo = min(V.grid[0], 0.0) - pad
    hi = max(V.grid[-1], 0.0) + pad
    step = min(0.01, 0.1 / max(abs(z), 1.0))
    n = int(math.ceil((hi - lo) / step))
    base = np.linspace(lo, hi, n + 1)
    return np.unique(np.concatenate([base, V.grid, [0.0]]))


def solve_faddeev(side: str, z, V: PotentialSample, delta: float = 1.0,
                  x_eval=None, with_dlambda: bool = True,
                  rtol: float = 1e-11, atol: float = 1e-12) -> FaddeevSolution:
    """Adaptive integration of the Faddeev equation from the exact tail.

    For real z = lam != +-1 the variational equation for d m / d lam is
    integrated alongside (the derivative blows up like |1 - lam^2|^{-1/2}
    at the band edges, where it is skipped).
    """
    if side not in ("plus", "minus"):
        raise DomainError(f"unknown side {side!r}")
    sp = z if isinstance(z, SpectralPoint) else rho_plus(z, delta=delta)
    zc = sp.z
    rho = sp.rho_plus
    if zc.imag < 0:
        raise DomainError("Im z >= 0 required")
    grid = _default_grid(V, zc) if x_eval is None else np.asarray(x_eval, dtype=float)
    q = _q_func(side, V, delta)
    x0 = _anchor(side, V)
    want_dl = (with_dlambda and zc.imag == 0.0
               and abs(abs(zc.real) - delta) > 1e-12)

    if side == "plus":
        w = -2j * rho
        dw = -2j * (zc / rho) if want_dl and rho != 0 else 0.0
    else:
        w = 2j * zc
        dw = 2j

    def rhs(x, Y):
        qq = q(np.array([x]))[0]
        out = np.empty_like(Y)
        out[0] = Y[1]
        out[1] = qq * Y[0] + w * Y[1]
        if len(Y) == 4:
            out[2] = Y[3]
            out[3] = qq * Y[2] + w * Y[3] + dw * Y[1]
        return out

    y0 = np.array([1.0, 0.0, 0.0, 0.0], dtype=complex) if want_dl else \
        np.array([1.0, 0.0], dtype=complex)

    m = np.ones(len(grid), dtype=complex)
    dm = np.zeros(len(grid), dtype=complex)
    dl = np.zeros(len(grid), dtype=complex) if want_dl else None

    if side == "plus":
        inward = grid[grid < x0]
        targets = inward[::-1]
    else:
        inward = grid[grid > x0]
        targets = inward
    if len(targets):
        sol = solve_ivp(rhs, (x0, targets[-1]), y0, t_eval=targets,
                        method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise IntegrationError(f"Faddeev integration failed: {sol.message}")
        idx = np.searchsorted(grid, sol.t)
        m[idx] = sol.y[0]
        dm[idx] = sol.y[1]
        if want_dl:
            dl[idx] = sol.y[2]
    return FaddeevSolution(side=side, z=sp, grid=grid, m=m, dm_dx=dm,
                           dm_dlambda=dl, anchor=x0)


def ode_residual(sol: FaddeevSolution, V: PotentialSample, delta: float = 1.0,
                 h: float = 0.004, exclude: float = 0.02) -> float:
    """Max |m'' + w m' - q m| via 4th-order finite differences.

    Independent of the integrator; evaluated on a uniform fine grid with
    windows around the discontinuities of the coefficient excluded.
    Returned scaled by 1/(1 + |z|^2).
    """
    zc = sol.z.z
    side = sol.side
    w, _ = _coeffs(side, zc, delta)
    q = _q_func(side, V, delta)
    lo, hi = sol.grid[0], sol.grid[-1]
    xs = np.arange(lo, hi, h)
    mvals, dmvals = faddeev_batch(side, [zc], V, xs, delta=delta, h_ode=0.004)
    m = mvals[0]
    # 4th order second derivative
    m2 = (-m[:-4] + 16 * m[1:-3] - 30 * m[2:-2] + 16 * m[3:-1] - m[4:]) / (12 * h * h)
    m1 = (m[:-4] - 8 * m[1:-3] + 8 * m[3:-1] - m[4:]) / (12 * h)
    xc = xs[2:-2]
    res = np.abs(m2 - w * m1 - q(xc) * m[2:-2])
    keep = np.ones_like(xc, dtype=bool)
    for b in (V.support[0], V.support[1], 0.0):
        keep &= np.abs(xc - b) > exclude
    scale = np.max(np.abs(m)) * (1.0 + abs(zc) ** 2)
    return float(np.max(res[keep]) / scale)


# ---------------------------------------------------------------------------
# second solution on the right half line (|lam| < 1)
# ---------------------------------------------------------------------------

def second_solution_gplus(lam: float, a: float, V: PotentialSample,
                          delta: float = 1.0, n_grid: int = 2001,
                          x_max: float | None = None) -> FaddeevSolution:
    """g(lam, x) = 2 sqrt(1-lam^2) f_plus(x) int_a^x f_plus(y)^{-2} dy.

    Defined for |lam| < 1 on x >= a, where f_plus must be positive; this
    is certified pointwise (DomainError otherwise).  W[g, f_plus] equals
    2 sqrt(1 - lam^2) and g(lam, a) = 0.
    """
    if not abs(lam) < 1:
        raise DomainError("second solution defined for |lam| < 1")
    if x_max is None:
        x_max = max(V.grid[-1], 0.0) + 6.0
    grid = np.linspace(a, x_max, n_grid)
    mv, dmv = faddeev_batch("plus", [complex(lam)], V, grid, delta=delta)
    kt = math.sqrt(1.0 - lam * lam)
    fp = np.exp(-kt * grid) * mv[0]
    dfp = np.exp(-kt * grid) * (dmv[0] - kt * mv[0])
    if np.any(np.abs(fp.imag) > 1e-10 * np.max(np.abs(fp))) or np.any(fp.real <= 0):
        raise DomainError(
            f"f_plus not certified positive on [{a}, {x_max}]; raise the base point a")
    fp = fp.real
    dfp = dfp.real
    inv2 = 1.0 / fp**2
    from scipy.integrate import cumulative_simpson
    integral = cumulative_simpson(inv2, x=grid, initial=0.0)
    g = 2.0 * kt * fp * integral
    dg = 2.0 * kt * (dfp * integral + 1.0 / fp)
    sp = rho_plus(complex(lam), delta=delta)
    return FaddeevSolution(side="gplus", z=sp, grid=grid, m=g.astype(complex),
                           dm_dx=dg.astype(complex), anchor=a)


# ---------------------------------------------------------------------------
# certification of the structural bounds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class JostBoundReport:
    K: float                 # |m_plus - 1|, |d m_plus/dx| <= K sigma_V
    a_threshold: float       # right of this, 1/2 <= m_plus <= 3/2 certified
    c_v: float               # sup bounds of m and its lambda-derivative, x >= 0
    phi_envelope_x: np.ndarray
    phi_envelope: np.ndarray # empirical envelope for x <= 0


def verify_jost_bounds(V: PotentialSample, lam_samples, x_samples,
                       delta: float = 1.0) -> JostBoundReport:
    """Smallest constants making the tail/derivative bounds hold on a sample.

    Violations that no finite constant can repair (a nonzero m - 1 where
    sigma_V vanishes) indicate an integrator defect and raise.
    """
    lam_samples = [l for l in np.asarray(lam_samples, dtype=float)
                   if abs(abs(l) - delta) > 1e-9]
    xs = np.asarray(sorted(x_samples), dtype=float)
    sigma = V.sigma(xs)
    right = xs >= 0

    K = 0.0
    c_v = 0.0
    env = np.zeros_like(xs)
    for lam in lam_samples:
        sol = solve_faddeev("plus", complex(lam), V, delta=delta, x_eval=xs)
        dev = np.abs(sol.m - 1.0)
        ddev = np.abs(sol.dm_dx)
        pos = sigma > 1e-13 * (1.0 + V.norm_w2)
        bad = ~pos & right & ((dev > 1e-7) | (ddev > 1e-7))
        if np.any(bad):
            raise IntegrationError(
                f"tail bound violated where sigma_V = 0 at lam={lam}: "
                f"max dev {np.max(dev[bad]):.3e}")
        if np.any(pos & right):
            K = max(K, float(np.max(dev[pos & right] / sigma[pos & right])))
        if np.any(pos):
            K = max(K, float(np.max(ddev[pos] / sigma[pos])))
        c_v = max(c_v, float(np.max(np.abs(sol.m[right]))))
        if sol.dm_dlambda is not None:
            w = math.sqrt(abs(1.0 - lam * lam)) / max(abs(lam), 1e-30)
            c_v = max(c_v, float(np.max(np.abs(sol.dm_dlambda[right])) * w))
            env = np.maximum(env, np.abs(sol.dm_dlambda) * w)
        env = np.maximum(env, np.abs(sol.m))

    # smallest grid abscissa with K * sigma_V <= 1/2 (then m in [1/2, 3/2])
    ok = K * sigma <= 0.5
    a_threshold = float(xs[np.argmax(ok)]) if np.any(ok) else float(xs[-1])
    for lam in lam_samples:
        sol = solve_faddeev("plus", complex(lam), V, delta=delta,
                            x_eval=xs[xs > a_threshold], with_dlambda=False)
        if np.any(np.abs(sol.m - 1.0) > 0.5 + 1e-9):
            raise IntegrationError(
                f"containment 1/2 <= m <= 3/2 fails right of {a_threshold} at lam={lam}")
    left = xs <= 0
    return JostBoundReport(K=K, a_threshold=a_threshold, c_v=c_v,
                           phi_envelope_x=xs[left], phi_envelope=env[left])
