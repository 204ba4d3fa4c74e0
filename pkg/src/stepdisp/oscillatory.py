"""Oscillatory-integral quadrature for phases t*lam^2 + A*rho_plus(lam) + B*lam.

The integrator is a panel-wise Filon scheme.  On each panel the amplitude
is interpolated at 9 Chebyshev nodes; the quadratic-plus-linear part of the
phase is integrated exactly through one of three moment branches chosen for
numerical stability:

  * mild phase        -> dense Gauss-Legendre moments (exact to machine),
  * strongly quadratic -> complex Fresnel moments via the error function
                          with a forward recurrence (stationary point near
                          or inside the panel),
  * strongly linear    -> Levin collocation (no stationary point; solves
                          p' + i*phi'*p = g and uses boundary terms only).

Intervals are pre-split at the branch points lam = +-1, and on |lam| > 1
the substitution mu = rho_plus(lam) removes the square-root derivative
singularity, so the remaining amplitude is smooth.

Also provides numerically certified checks of the explicit-constant
inequalities used by the decay estimates (van der Corput with constant 10,
its oscillation-counting refinement with 60*N, the four-case 30-constant
lemma for the step phase family, and the two |A|^{-1/2} / |A|^{-3/2}
stationary-phase lemmas with constant 5).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf as _cerf

from .core import DomainError, rho_plus_value

__all__ = [
    "PhaseSpec", "OscIntegralResult", "OscIntegralError", "BoundViolation",
    "osc_integral", "filon_quad", "dense_reference", "oscillation_count",
    "vdc_bound", "vdc_refined_bound", "vdcadv_check", "appendix_phase_bound",
    "lemma_vdc_check",
]


# ---------------------------------------------------------------------------
# fixed quadrature data (degree-8 Chebyshev interpolation per panel)
# ---------------------------------------------------------------------------

_N = 9
_S = np.cos((2 * np.arange(_N) + 1) * np.pi / (2 * _N))        # first-kind nodes
_BW = (-1.0) ** np.arange(_N) * np.sin((2 * np.arange(_N) + 1) * np.pi / (2 * _N))

_MONO = np.linalg.inv(np.vander(_S, _N, increasing=True))       # values -> monomial coeffs


def _bary_row(x):
    d = x - _S
    if np.any(d == 0):
        row = np.zeros(_N)
        row[np.argmin(np.abs(d))] = 1.0
        return row
    w = _BW / d
    return w / w.sum()


_ROW_P1 = _bary_row(1.0)
_ROW_M1 = _bary_row(-1.0)

# differentiation matrix on the Chebyshev nodes
_D = np.zeros((_N, _N))
for _j in range(_N):
    for _k in range(_N):
        if _j != _k:
            _D[_j, _k] = (_BW[_k] / _BW[_j]) / (_S[_j] - _S[_k])
    _D[_j, _j] = -np.sum(_D[_j, :])

# dense Gauss-Legendre rule for the mild-phase branch
_GLN = 400
_GLX, _GLW = np.polynomial.legendre.leggauss(_GLN)
_INTERP_GL = np.array([_bary_row(x) for x in _GLX])             # (400, 9)

# branch thresholds
_A1_GL = 500.0
_A2_GL = 15.0
_ERF_RATIO = 12.0            # erf branch while |a1| <= 12 |a2|
_H_CAP_A2 = 200.0            # mesh cap: |a2| = |p2| h^2 <= 200


class OscIntegralError(RuntimeError):
    """Quadrature did not converge within the panel budget."""

    def __init__(self, message, best=None, est_error=None):
        super().__init__(message)
        self.best = best
        self.est_error = est_error


class BoundViolation(AssertionError):
    """An explicit-constant inequality failed numerically."""

    def __init__(self, name, lhs, rhs):
        super().__init__(f"{name}: lhs = {lhs:.6g} > rhs = {rhs:.6g}")
        self.lhs = lhs
        self.rhs = rhs


# ---------------------------------------------------------------------------
# panel moment branches
# ---------------------------------------------------------------------------

def _values_gl(a2, a1, gvals):
    """Mild phase: amplitude interpolated onto a dense GL rule."""
    P = gvals @ _INTERP_GL.T                                   # (n, 400)
    E = np.exp(1j * (np.multiply.outer(a2, _GLX**2) + np.multiply.outer(a1, _GLX)))
    return (P * E) @ _GLW


def _values_erf(a2, a1, gvals):
    """Quadratic-dominated phase: exact Fresnel moments + forward recurrence."""
    a2 = np.asarray(a2, dtype=float)
    a1 = np.asarray(a1, dtype=float)
    beta = np.sqrt(-1j * a2)
    s0 = a1 / (2.0 * a2)
    m = np.empty(a2.shape + (_N,), dtype=complex)
    pref = np.exp(-1j * a1 * a1 / (4.0 * a2)) * math.sqrt(math.pi) / (2.0 * beta)
    m[..., 0] = pref * (_cerf(beta * (1.0 + s0)) - _cerf(beta * (-1.0 + s0)))
    ep = np.exp(1j * (a2 + a1))
    em = np.exp(1j * (a2 - a1))
    # m_{k+1} = (B_k - k m_{k-1} - i a1 m_k) / (2 i a2),  B_k = [s^k e^{i phi}]
    mkm1 = np.zeros_like(m[..., 0])
    for k in range(_N - 1):
        Bk = ep - em if k % 2 == 0 else ep + em
        mk = m[..., k]
        m[..., k + 1] = (Bk - (k * mkm1 if k else 0.0) - 1j * a1 * mk) / (2j * a2)
        mkm1 = mk
    coeffs = gvals @ _MONO.T
    return np.einsum("...k,...k->...", coeffs, m)


def _values_levin(a2, a1, gvals):
    """Linear-dominated phase, no stationary point: Levin collocation."""
    n = len(a1)
    phip = 2.0 * np.multiply.outer(a2, _S) + a1[:, None]       # (n, 9)
    A = np.broadcast_to(_D, (n, _N, _N)).copy().astype(complex)
    idx = np.arange(_N)
    A[:, idx, idx] += 1j * phip
    p = np.linalg.solve(A, gvals.astype(complex)[..., None])[..., 0]
    return (p @ _ROW_P1) * np.exp(1j * (a2 + a1)) - (p @ _ROW_M1) * np.exp(1j * (a2 - a1))


def _panel_values(p2, p1, centers, halfw, gvals):
    """Integrals of g(lam) e^{i(p2 lam^2 + p1 lam)} over panels [c-h, c+h].

    gvals holds amplitude values at the panel Chebyshev nodes, shape (n, 9).
    """
    c = np.asarray(centers, dtype=float)
    h = np.asarray(halfw, dtype=float)
    a2 = p2 * h * h
    a1 = (2.0 * p2 * c + p1) * h
    out = np.empty(len(c), dtype=complex)

    gl = (np.abs(a1) <= _A1_GL) & (np.abs(a2) <= _A2_GL)
    er = ~gl & (np.abs(a2) > _A2_GL) & (np.abs(a1) <= _ERF_RATIO * np.abs(a2))
    lv = ~gl & ~er
    if np.any(gl):
        out[gl] = _values_gl(a2[gl], a1[gl], gvals[gl])
    if np.any(er):
        out[er] = _values_erf(a2[er], a1[er], gvals[er])
    if np.any(lv):
        out[lv] = _values_levin(a2[lv], a1[lv], gvals[lv])
    return out * h * np.exp(1j * (p2 * c * c + p1 * c))


def _eval_panels(g, centers, halfw):
    nodes = centers[:, None] + halfw[:, None] * _S[None, :]
    vals = np.asarray(g(nodes.ravel()), dtype=complex).reshape(nodes.shape)
    if not np.all(np.isfinite(vals)):
        raise OscIntegralError("amplitude returned non-finite values")
    return vals


# ---------------------------------------------------------------------------
# adaptive scalar driver
# ---------------------------------------------------------------------------

def filon_quad(g, a, b, p2=0.0, p1=0.0, tol=1e-9, max_panels=2**20, max_depth=60):
    """Adaptive Filon integration of g(x) e^{i(p2 x^2 + p1 x)} over [a, b].

    Returns (value, est_error, panels_used).  Panels are bisected until the
    parent/children mismatch is below a length-proportional share of `tol`.
    """
    if b <= a:
        return 0.0 + 0.0j, 0.0, 0
    length = b - a
    h_cap = math.sqrt(_H_CAP_A2 / abs(p2)) if p2 else math.inf
    n0 = max(4, int(math.ceil(length / (2.0 * h_cap))))
    edges = np.linspace(a, b, n0 + 1)
    centers = 0.5 * (edges[1:] + edges[:-1])
    halfw = 0.5 * np.diff(edges)
    values = _panel_values(p2, p1, centers, halfw, _eval_panels(g, centers, halfw))

    total = 0.0 + 0.0j
    err_total = 0.0
    panels_used = n0
    depth = np.zeros(n0, dtype=int)

    while len(centers):
        cl = centers - halfw / 2
        cr = centers + halfw / 2
        hh = np.repeat(halfw / 2, 2)
        cc = np.empty(2 * len(centers))
        cc[0::2] = cl
        cc[1::2] = cr
        panels_used += len(cc)
        if panels_used > max_panels:
            best = total + values.sum()
            raise OscIntegralError(
                f"panel budget {max_panels} exhausted", best=best,
                est_error=err_total + np.abs(values).sum())
        child_vals = _panel_values(p2, p1, cc, hh, _eval_panels(g, cc, hh))
        sums = child_vals[0::2] + child_vals[1::2]
        errs = np.abs(values - sums)
        tol_panel = 0.5 * tol * (2.0 * halfw / length)
        done = (errs <= tol_panel) | (depth >= max_depth) | (halfw <= 1e-15 * length)
        total += sums[done].sum()
        err_total += errs[done].sum()
        keep = ~done
        centers = cc.reshape(-1, 2)[keep].ravel()
        halfw = hh.reshape(-1, 2)[keep].ravel()
        values = child_vals.reshape(-1, 2)[keep].ravel()
        depth = np.repeat(depth[keep] + 1, 2)
    return total, err_total, panels_used


# ---------------------------------------------------------------------------
# the step phase family
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseSpec:
    """Phase e^{i t lam^2} e^{i rho_plus(lam) A} e^{i lam B} on (a, b)."""

    t: float
    A: float
    B: float
    interval: tuple[float, float]

    def phase_derivative2_floor(self) -> float:
        """Trivial lower bound used by callers certifying |phi''| >= 1."""
        return 2.0 * abs(self.t)


@dataclass(frozen=True)
class OscIntegralResult:
    value: complex
    est_error: float
    panels: int


def _hyp(mu):
    return np.sqrt(1.0 + mu * mu)


def _region_pieces(a, b):
    cuts = [a] + [p for p in (-1.0, 1.0) if a < p < b] + [b]
    return list(zip(cuts[:-1], cuts[1:]))


def osc_integral(phase: PhaseSpec, h, tol: float = 1e-9,
                 max_panels: int = 2**20) -> OscIntegralResult:
    """Integrate e^{i t lam^2} e^{i rho A} e^{i B lam} h(lam) over phase.interval.

    h must accept numpy arrays of lam.  Pieces with |lam| > 1 are computed
    in the variable mu = rho_plus(lam) so that the phase is exactly
    quadratic-plus-linear there; for |lam| < 1 the factor e^{i rho A}
    is a real exponential and is treated as amplitude.
    """
    a, b = phase.interval
    if not b > a:
        raise DomainError("empty integration interval")
    t, A, B = phase.t, phase.A, phase.B
    pieces = _region_pieces(a, b)
    tol_piece = tol / len(pieces)
    value = 0.0 + 0.0j
    est = 0.0
    panels = 0
    eit = np.exp(1j * t)
    for (la, lb) in pieces:
        mid = 0.5 * (la + lb)
        if mid > 1.0:
            mu_a = math.sqrt(max(la * la - 1.0, 0.0))
            mu_b = math.sqrt(lb * lb - 1.0)

            def g(mu):
                lam = _hyp(mu)
                return h(lam) * np.exp(1j * B * lam) * (mu / lam)

            v, e, n = filon_quad(g, mu_a, mu_b, p2=t, p1=A,
                                 tol=tol_piece, max_panels=max_panels)
            value += eit * v
        elif mid < -1.0:
            mu_a = -math.sqrt(la * la - 1.0)
            mu_b = -math.sqrt(max(lb * lb - 1.0, 0.0))

            def g(mu):
                lam = _hyp(mu)
                return h(-lam) * np.exp(-1j * B * lam) * (-mu / lam)

            v, e, n = filon_quad(g, mu_a, mu_b, p2=t, p1=A,
                                 tol=tol_piece, max_panels=max_panels)
            value += eit * v
        else:
            def g(lam):
                return h(lam) * np.exp(-A * np.sqrt(np.clip(1.0 - lam * lam, 0.0, None)))

            v, e, n = filon_quad(g, la, lb, p2=t, p1=B,
                                 tol=tol_piece, max_panels=max_panels)
            value += v
        est += e
        panels += n
    return OscIntegralResult(value=value, est_error=est, panels=panels)


def dense_reference(phase: PhaseSpec, h, n: int = 2_000_000, rule: str = "trapezoid"):
    """Brute-force reference on a dense grid (independent oracle).

    Evaluates the full integrand including all phase factors; pieces are
    split at +-1 with geometric clustering toward the branch points.
    """
    a, b = phase.interval
    t, A, B = phase.t, phase.A, phase.B
    pieces = _region_pieces(a, b)
    total = 0.0 + 0.0j
    length = b - a
    for (la, lb) in pieces:
        npts = max(2000, int(n * (lb - la) / length))
        grid = np.linspace(la, lb, npts)
        extra = []
        for endpoint, sgn in ((la, +1), (lb, -1)):
            if abs(abs(endpoint) - 1.0) < 1e-12:
                offs = np.geomspace(1e-12, min(0.1, (lb - la) / 4), 2000)
                extra.append(endpoint + sgn * offs)
        if extra:
            grid = np.unique(np.concatenate([grid] + extra))
        rho = rho_plus_value(grid)
        integrand = h(grid) * np.exp(1j * (t * grid**2 + B * grid)) * np.exp(1j * A * rho)
        if rule == "simpson":
            from scipy.integrate import simpson
            total += simpson(integrand, x=grid)
        else:
            total += np.trapezoid(integrand, grid)
    return total


# ---------------------------------------------------------------------------
# oscillation counting
# ---------------------------------------------------------------------------

def _monotone_pieces(vals, floor):
    d = np.diff(vals)
    d = d[np.abs(d) > floor]
    if d.size == 0:
        return 1
    signs = np.sign(d)
    return 1 + int(np.sum(signs[1:] != signs[:-1]))


def oscillation_count(amp, interval, n: int = 10_000) -> int:
    """Number of monotonicity pieces of Re/Im of the amplitude on interval.

    Counted as sign changes of the sampled finite differences plus one,
    with a relative noise floor; returns max over real and imaginary part.
    """
    a, b = interval
    x = np.linspace(a, b, n)
    # keep clear of branch-point endpoints where amplitudes may be singular
    eps = (b - a) * 1e-9
    x[0] += eps
    x[-1] -= eps
    v = np.asarray(amp(x), dtype=complex)
    scale = np.max(np.abs(v)) + 1e-300
    floor = 1e-8 * scale
    return max(_monotone_pieces(v.real, floor), _monotone_pieces(v.imag, floor))


# ---------------------------------------------------------------------------
# explicit-constant bound checks
# ---------------------------------------------------------------------------

def _amp_norms(amp, interval, n=20001):
    """(sup |amp|, ||amp'||_L1, |amp(b)|) by dense sampling."""
    a, b = interval
    x = np.linspace(a, b, n)
    eps = (b - a) * 1e-9
    x[0] += eps
    x[-1] -= eps
    v = np.asarray(amp(x), dtype=complex)
    sup = float(np.max(np.abs(v)))
    dv = np.abs(np.diff(v)).sum()          # total variation == ||amp'||_L1
    return sup, float(dv), abs(v[-1])


def vdc_bound(phase: PhaseSpec, psi, tol: float = 1e-9):
    """Van der Corput bound with explicit constant 10.

    lhs = |int e^{i phi(lam) t} psi dlam| with the phase family of `phase`;
    rhs = 10 |t|^{-1/2} [ |psi(b)| + int |psi'| ].  The caller certifies
    |phi''| >= 1 on the interval (true for the phase choices used here,
    where phi'' >= 2).  Raises BoundViolation if lhs > rhs.
    """
    if phase.t == 0:
        raise DomainError("van der Corput bound needs t != 0")
    lhs = abs(osc_integral(phase, psi, tol=tol).value)
    sup, var, endval = _amp_norms(psi, phase.interval)
    rhs = 10.0 * abs(phase.t) ** -0.5 * (endval + var)
    if lhs > rhs + 1e-12:
        raise BoundViolation("van der Corput (10)", lhs, rhs)
    return lhs, rhs


def vdc_refined_bound(phase: PhaseSpec, psi, N: int | None = None,
                      tol: float = 1e-9):
    """Oscillation-counting refinement: lhs <= 60 N ||psi||_inf |t|^{-1/2}.

    N is the maximal number of monotone pieces of Re psi and Im psi on the
    interval; counted numerically when not supplied.
    """
    if phase.t == 0:
        raise DomainError("refined van der Corput bound needs t != 0")
    if N is None:
        N = oscillation_count(psi, phase.interval)
    lhs = abs(osc_integral(phase, psi, tol=tol).value)
    sup, _, _ = _amp_norms(psi, phase.interval)
    rhs = 60.0 * N * sup * abs(phase.t) ** -0.5
    if lhs > rhs + 1e-12:
        raise BoundViolation(f"refined van der Corput (60N, N={N})", lhs, rhs)
    return lhs, rhs


_VDCADV_CASES = {
    "i": lambda A, B, a, b: (A <= 0 and 1 <= a < b, "requires A <= 0 and 1 <= a < b"),
    "ii": lambda A, B, a, b: (B >= 0 and 1 <= a < b, "requires B >= 0 and 1 <= a < b"),
    "iii": lambda A, B, a, b: (A >= 0 and a < b <= 1, "requires A >= 0 and a < b <= 1"),
    "iv": lambda A, B, a, b: (B <= 0 and a < b <= -1, "requires B <= 0 and a < b <= -1"),
}


def vdcadv_check(case: str, A: float, B: float, h, interval, t: float,
                 tol: float = 1e-9):
    """Four-case estimate for the full step phase family, constant 30.

    lhs = |int_a^b e^{i t lam^2} e^{i rho A} e^{i lam B} h dlam|,
    rhs = 30 [ ||h||_inf + ||h'||_L1 ] t^{-1/2}, valid under the sign
    conditions of the respective case (checked, DomainError otherwise).
    """
    if case not in _VDCADV_CASES:
        raise DomainError(f"unknown case {case!r}")
    if t <= 0:
        raise DomainError("t > 0 required")
    a, b = interval
    ok, msg = _VDCADV_CASES[case](A, B, a, b)
    if not ok:
        raise DomainError(f"case ({case}) {msg}; got A={A}, B={B}, (a,b)=({a},{b})")
    phase = PhaseSpec(t=t, A=A, B=B, interval=(a, b))
    lhs = abs(osc_integral(phase, h, tol=tol).value)
    sup, var, _ = _amp_norms(h, interval)
    rhs = 30.0 * (sup + var) * t ** -0.5
    if lhs > rhs + 1e-12:
        raise BoundViolation(f"step-phase estimate case ({case}) (30)", lhs, rhs)
    return lhs, rhs


def lemma_vdc_check(b: float, x: float, y: float, t: float, sign: int = +1,
                    tol: float = 1e-9):
    """Transmission-amplitude bound on (1, b): lhs <= 15 |t|^{-1/2}.

    lhs = |int_1^b lam/(rho+lam) e^{i rho x} e^{i lam y} e^{+-i t lam^2} dlam|
    for x, y > 0 and b > 1.
    """
    if not (b > 1 and x > 0 and y > 0 and t != 0):
        raise DomainError("need b > 1, x, y > 0, t != 0")

    def amp(lam):
        rho = np.sqrt(np.clip(lam * lam - 1.0, 0.0, None))
        return lam / (rho + lam)

    phase = PhaseSpec(t=sign * t, A=x, B=y, interval=(1.0, b))
    lhs = abs(osc_integral(phase, amp, tol=tol).value)
    rhs = 15.0 * abs(t) ** -0.5
    if lhs > rhs + 1e-12:
        raise BoundViolation("transmission-amplitude lemma (15)", lhs, rhs)
    return lhs, rhs


def appendix_phase_bound(chi, A: float, power: float, support: tuple[float, float],
                         dchi=None, d2chi=None, tol: float = 1e-10):
    """Stationary-phase lemmas with constant 5 for lam^{+-1/2} amplitudes.

    power = -1/2:  lhs = |int_0^oo e^{i lam A} chi lam^{-1/2} dlam|,
                   rhs = 5 ||chi'||_L1 |A|^{-1/2};
    power = +1/2:  rhs = 5 ||chi''/2 + lam chi'||_L1 |A|^{-3/2}.

    chi is compactly supported in `support` (within [0, oo)); the
    substitution lam = u^2 turns lhs into a quadratic-phase integral.
    """
    if A == 0:
        raise DomainError("A must be nonzero")
    if power not in (-0.5, 0.5):
        raise DomainError("power must be -1/2 or +1/2")
    lo, hi = support
    lo = max(lo, 0.0)
    u_hi = math.sqrt(hi)

    if power == -0.5:
        def g(u):
            return 2.0 * np.asarray(chi(u * u), dtype=complex)
    else:
        def g(u):
            return 2.0 * u * u * np.asarray(chi(u * u), dtype=complex)

    v, e, n = filon_quad(g, 0.0, u_hi, p2=A, p1=0.0, tol=tol)
    lhs = abs(v)

    x = np.linspace(lo, hi, 40001)
    if dchi is not None:
        d1 = np.asarray(dchi(x), dtype=float)
    else:
        d1 = np.gradient(np.asarray(chi(x), dtype=float), x)
    if power == -0.5:
        norm = np.trapezoid(np.abs(d1), x)
        rhs = 5.0 * norm * abs(A) ** -0.5
        name = "half-power phase lemma (5, |A|^-1/2)"
    else:
        if d2chi is not None:
            d2 = np.asarray(d2chi(x), dtype=float)
        else:
            d2 = np.gradient(d1, x)
        norm = np.trapezoid(np.abs(0.5 * d2 + x * d1), x)
        rhs = 5.0 * norm * abs(A) ** -1.5
        name = "half-power phase lemma (5, |A|^-3/2)"
    if lhs > rhs + 1e-12:
        raise BoundViolation(name, lhs, rhs)
    return lhs, rhs
