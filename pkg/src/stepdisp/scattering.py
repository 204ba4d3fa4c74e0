"""Wronskians, scattering coefficients, spectral classification, bound states.

Conventions.  W[u, v] = u v' - v u' throughout, and W(z) = W[f_plus, f_minus]
evaluated at x = 0 (any x gives the same value; this is verified).  For the
pure step W(lam) = -i (lam + rho).  The expansion coefficients are defined
by the linear combinations they enter,

    f_minus = a_plus  conj(f_plus)  + b_plus  f_plus      (lam > 1),
    f_plus  = a_minus conj(f_minus) + b_minus f_minus     (lam != 0),
    f_minus = A g_plus + B f_plus                         (|lam| < 1, x >= a),

which fixes a_plus = -W/(2 i rho), a_minus = -W/(2 i lam), A = W/(2 kt)
with kt = (1 - lam^2)^{1/2}; the reconstruction residual is the test.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import DomainError, PotentialSample, SpectralPoint, WavePacket, rho_plus, rho_plus_value
from .jost import IntegrationError, faddeev_batch, second_solution_gplus

__all__ = [
    "ScatteringData", "SpectralClassification", "BoundState",
    "wronskian", "wronskian_span", "scattering_coefficients",
    "coefficients_AB", "classify", "bound_states", "project_ac",
]


def _jost_at(z, V, delta, pts, h_ode=0.004):
    """(f_plus, f_plus', f_minus, f_minus') at the given points."""
    zc = complex(z)
    rho = rho_plus_value(zc, delta=delta)
    pts = np.asarray(pts, dtype=float)
    mp, dmp = faddeev_batch("plus", [zc], V, pts, delta=delta, h_ode=h_ode)
    mm, dmm = faddeev_batch("minus", [zc], V, pts, delta=delta, h_ode=h_ode)
    ep = np.exp(1j * rho * pts)
    em = np.exp(-1j * zc * pts)
    fp = ep * mp[0]
    dfp = ep * (dmp[0] + 1j * rho * mp[0])
    fm = em * mm[0]
    dfm = em * (dmm[0] - 1j * zc * mm[0])
    return fp, dfp, fm, dfm


def wronskian_span(z, V: PotentialSample, delta: float = 1.0, pts=(-1.0, 0.0, 1.0)):
    """W[f_plus, f_minus] evaluated at several x (constant in exact arithmetic)."""
    fp, dfp, fm, dfm = _jost_at(z, V, delta, np.asarray(pts, dtype=float))
    return fp * dfm - fm * dfp


def wronskian(z, V: PotentialSample, delta: float = 1.0,
              check_tol: float = 1e-8) -> complex:
    """W(z) = W[f_plus, f_minus]; x-independence verified to check_tol."""
    zc = z.z if isinstance(z, SpectralPoint) else complex(z)
    if zc.imag < 0:
        raise DomainError("Im z >= 0 required")
    Ws = wronskian_span(zc, V, delta)
    scale = max(np.max(np.abs(Ws)), 1e-300)
    if np.max(np.abs(Ws - Ws[1])) > check_tol * scale:
        raise IntegrationError(
            f"Wronskian varies with x beyond tolerance at z={zc}: {Ws}")
    return complex(Ws[1])


def _wronskian_batch(zs, V: PotentialSample, delta: float = 1.0):
    zs = np.asarray(zs, dtype=complex)
    x0 = np.array([0.0])
    mp, dmp = faddeev_batch("plus", zs, V, x0, delta=delta)
    mm, dmm = faddeev_batch("minus", zs, V, x0, delta=delta)
    rho = rho_plus_value(zs, delta=delta)
    fp = mp[:, 0]
    dfp = dmp[:, 0] + 1j * rho * mp[:, 0]
    fm = mm[:, 0]
    dfm = dmm[:, 0] - 1j * zs * mm[:, 0]
    return fp * dfm - fm * dfp


# ---------------------------------------------------------------------------
# scattering coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScatteringData:
    lam: float
    W: complex
    W1: complex              # W[conj f_plus, f_minus]
    W2: complex              # W[f_plus, conj f_minus]
    a_plus: complex | None
    b_plus: complex | None
    a_minus: complex | None
    b_minus: complex | None
    A: complex | None = None
    B: complex | None = None

    @property
    def flux_residual(self) -> float:
        """|rho (|a+|^2 - |b+|^2) - lam| for lam > 1, else nan."""
        if self.a_plus is None:
            return math.nan
        rho = float(np.real(rho_plus_value(complex(self.lam))))
        return abs(rho * (abs(self.a_plus) ** 2 - abs(self.b_plus) ** 2) - self.lam)


def scattering_coefficients(lam: float, V: PotentialSample,
                            delta: float = 1.0) -> ScatteringData:
    """Wronskian data and expansion coefficients at a real frequency."""
    if lam == 0:
        raise DomainError("coefficients undefined at the threshold lam = 0")
    fp, dfp, fm, dfm = _jost_at(complex(lam), V, delta, np.array([0.0]))
    fp, dfp, fm, dfm = fp[0], dfp[0], fm[0], dfm[0]
    W = fp * dfm - fm * dfp
    W1 = np.conj(fp) * dfm - fm * np.conj(dfp)
    W2 = fp * np.conj(dfm) - np.conj(fm) * dfp
    rho = rho_plus_value(complex(lam), delta=delta)
    a_plus = b_plus = None
    if abs(lam) > delta:
        a_plus = -W / (2j * rho)
        b_plus = W1 / (2j * rho)
    a_minus = -W / (2j * lam)
    b_minus = W2 / (2j * lam)
    A = B = None
    if abs(lam) < delta:
        A = W / (2.0 * math.sqrt(delta**2 - lam**2))
    return ScatteringData(lam=float(lam), W=complex(W), W1=complex(W1),
                          W2=complex(W2), a_plus=a_plus, b_plus=b_plus,
                          a_minus=a_minus, b_minus=b_minus, A=A, B=B)


def coefficients_AB(lam: float, a: float, V: PotentialSample,
                    delta: float = 1.0, resid_tol: float = 1e-6):
    """(A, B) of f_minus = A g_plus + B f_plus on x >= a, |lam| < 1.

    A comes from the Wronskian identity W = 2 (1-lam^2)^{1/2} A; B from
    g_plus(a) = 0.  The reconstruction residual is verified on [a, grid end].
    """
    if not abs(lam) < delta:
        raise DomainError("A, B defined for |lam| < 1")
    g = second_solution_gplus(lam, a, V, delta=delta)
    grid = g.grid
    fp, dfp, fm, dfm = _jost_at(complex(lam), V, delta, grid)
    W = fp * dfm - fm * dfp
    kt = math.sqrt(delta**2 - lam * lam)
    A = complex(W[0]) / (2.0 * kt)
    B = complex(fm[0] / fp[0])
    resid = np.max(np.abs(fm - A * g.m - B * fp)) / max(np.max(np.abs(fm)), 1e-300)
    if resid > resid_tol:
        raise IntegrationError(
            f"f_minus reconstruction residual {resid:.2e} > {resid_tol:.0e}")
    return A, B


# ---------------------------------------------------------------------------
# classification at the threshold
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralClassification:
    kind: str                    # 'generic' | 'exceptional' | 'indeterminate'
    W0: complex
    gamma: float | None = None


def classify(V: PotentialSample, delta: float = 1.0,
             eps_list=(1e-3, 1e-4, 1e-5)) -> SpectralClassification:
    """Generic/exceptional type from the z -> 0 limit of the Wronskian.

    W(0) is Richardson-extrapolated along the real axis; in the
    exceptional case the derivative limit W(z)/z is required to agree
    between real and imaginary approach to 10%.  A band around the
    threshold is flagged indeterminate rather than misclassified.
    """
    eps = sorted(eps_list, reverse=True)
    Wr = _wronskian_batch([complex(e) for e in eps], V, delta=delta)
    # two-point Richardson in the smallest pair: W(z) = W0 + c z + O(z^2)
    h1, h2 = eps[-2], eps[-1]
    W0 = (h1 * Wr[-1] - h2 * Wr[-2]) / (h1 - h2)
    thr = 1e-6 * (1.0 + V.norm_l1)
    mag = abs(W0)
    if mag >= 10.0 * thr:
        return SpectralClassification(kind="generic", W0=complex(W0))
    if mag > 0.1 * thr:
        return SpectralClassification(kind="indeterminate", W0=complex(W0))
    e = eps[-1]
    Wi = _wronskian_batch([1j * e], V, delta=delta)[0]
    g_imag = -Wi.real / e         # W(i eps) = i gamma (i eps) = -gamma eps
    g_real = (Wr[-1] / (1j * e))
    if abs(g_real - g_imag) > 0.1 * max(abs(g_imag), 1e-300):
        return SpectralClassification(kind="indeterminate", W0=complex(W0))
    return SpectralClassification(kind="exceptional", W0=complex(W0),
                                  gamma=float(np.real(0.5 * (g_real + g_imag))))


# ---------------------------------------------------------------------------
# bound states and the absolutely continuous projection
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BoundState:
    kappa: float
    energy: float
    eigenfunction: WavePacket
    residual: float


def _eigenfunction(kappa: float, V: PotentialSample, delta: float,
                   dx: float = 0.004) -> tuple[WavePacket, float]:
    gp = math.sqrt(delta**2 + kappa**2)       # right decay rate
    xb = min(V.grid[0], 0.0)                  # left edge of the interaction region
    lo = xb - min(28.0 / kappa, 2000.0)
    hi = max(V.grid[-1], 0.0) + min(28.0 / gp, 2000.0)
    xs_r = np.arange(xb, hi, dx)
    z = 1j * kappa
    m, dm = faddeev_batch("plus", [z], V, xs_r, delta=delta)
    rho = rho_plus_value(z, delta=delta)
    psi_r = np.exp(1j * rho * xs_r) * m[0]
    # left of the interaction region the decaying branch is exact; the
    # marched solution would amplify the eigenvalue error exponentially
    xs_l = np.arange(lo, xb, dx)
    psi_l = psi_r[0] * np.exp(kappa * (xs_l - xb))
    xs = np.concatenate([xs_l, xs_r])
    psi = np.concatenate([psi_l, psi_r])
    # residual of (H - E) psi via 4th-order differences, jumps excluded
    q = V(xs) + delta**2 * (xs >= 0) + kappa**2
    p2 = (-psi[:-4] + 16 * psi[1:-3] - 30 * psi[2:-2] + 16 * psi[3:-1] - psi[4:]) / (12 * dx * dx)
    res = np.abs(-p2 + q[2:-2] * psi[2:-2])
    keep = np.ones(len(xs) - 4, dtype=bool)
    xc = xs[2:-2]
    for b in (V.support[0], V.support[1], 0.0, xb):
        keep &= np.abs(xc - b) > 3 * dx
    # L2 norms with exact analytic tail corrections
    norm2 = float(np.trapezoid(np.abs(psi) ** 2, xs))
    norm2 += abs(psi[-1]) ** 2 / (2 * gp) + abs(psi[0]) ** 2 / (2 * kappa)
    norm = math.sqrt(norm2)
    resid_l2 = float(np.sqrt(np.trapezoid(res[keep] ** 2, xc[keep]))) / norm
    wp = WavePacket(xs, psi / norm)
    return wp, resid_l2


def bound_states(V: PotentialSample, delta: float = 1.0,
                 n_scan: int = 2000, max_expand: int = 3) -> list[BoundState]:
    """Negative eigenvalues E = -kappa^2 as roots of the real map W(i kappa).

    Scan plus bisection to 1e-10; the scan window is doubled when a root
    lands at the boundary.  Eigenfunctions are L2-normalized with analytic
    tail corrections.
    """
    if V.is_zero():
        return []
    kappa_max = math.sqrt(max(0.0, -float(np.min(V.values)))) + 1.0
    for _ in range(max_expand + 1):
        ks = np.linspace(1e-6, kappa_max, n_scan)
        Wv = _wronskian_batch(1j * ks, V, delta=delta)
        if np.max(np.abs(Wv.imag)) > 1e-6 * np.max(np.abs(Wv)):
            raise IntegrationError("W(i kappa) acquired an imaginary part")
        g = Wv.real
        sign_change = np.where(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]
        if len(sign_change) and sign_change[-1] >= n_scan - 2:
            kappa_max *= 2.0
            continue
        break
    roots = []
    for i in sign_change:
        a, b = ks[i], ks[i + 1]
        fa = g[i]
        for _ in range(200):
            mid = 0.5 * (a + b)
            fm = _wronskian_batch([1j * mid], V, delta=delta)[0].real
            if fa * fm <= 0:
                b = mid
            else:
                a, fa = mid, fm
            if b - a < 1e-10:
                break
        roots.append(0.5 * (a + b))
    out = []
    for k in roots:
        if any(abs(k - s.kappa) < 1e-8 for s in out):
            continue
        wp, resid = _eigenfunction(k, V, delta)
        out.append(BoundState(kappa=float(k), energy=-float(k) ** 2,
                              eigenfunction=wp, residual=resid))
    return out


def project_ac(f: WavePacket, states: list[BoundState],
               ortho_tol: float = 1e-6, trim: float = 1e-13) -> WavePacket:
    """P_ac f = f - sum_j <psi_j, f> psi_j; states must be orthonormal.

    All inner products use one quadrature on the union grid (coefficients
    normalized by the same-quadrature <psi|psi>), which makes the
    projection idempotent to roundoff.  The result is trimmed where it
    vanishes so downstream quadratures keep a tight support.
    """
    if not states:
        return f
    for i, si in enumerate(states):
        gi = si.eigenfunction
        for j, sj in enumerate(states[:i]):
            gj = sj.eigenfunction
            ip = np.trapezoid(np.conj(gi.values) * gj.interp(gi.grid), gi.grid)
            if abs(ip) > ortho_tol:
                raise DomainError(
                    f"bound states {i},{j} not orthogonal: <i|j> = {ip:.3e}")
    ug = np.unique(np.concatenate([f.grid] + [s.eigenfunction.grid for s in states]))
    vals = f.interp(ug) if f.func is None else np.asarray(f.func(ug), dtype=complex)
    coefs = []
    for s in states:
        g = s.eigenfunction.interp(ug)
        c = np.trapezoid(np.conj(g) * vals, ug) / np.trapezoid(np.abs(g) ** 2, ug)
        coefs.append(c)
        vals = vals - c * g
    mag = np.abs(vals)
    keep = mag > trim * max(mag.max(), 1e-300)
    if np.any(keep):
        i0 = max(int(np.argmax(keep)) - 1, 0)
        i1 = min(len(ug) - int(np.argmax(keep[::-1])) + 1, len(ug))
    else:
        i0, i1 = 0, len(ug)
    func = None
    if f.func is not None:
        def func(x, base=f.func, cs=tuple(coefs), sts=tuple(states)):
            out = np.asarray(base(x), dtype=complex)
            for c, s in zip(cs, sts):
                out = out - c * s.eigenfunction.interp(x)
            return out
    return WavePacket(ug[i0:i1], vals[i0:i1], func=func, breaks=f.breaks)
