"""Explicit resolvent kernels and the propagator for the unperturbed step.

The operator is H0 = -d^2/dx^2 + 1_+(x) (after normalization), with left
momentum z and right momentum rho = (z^2 - 1)^{1/2}.  The outgoing kernel
is built from the two Jost solutions

    f_plus(z, x)  = e^{i rho x}            (x >= 0),
    f_minus(z, x) = e^{-i z x}             (x <= 0),

continued across the interface in closed form, divided by their Wronskian
W = -i (z + rho).  The sign convention is fixed by the resolvent residual
(H0 - z^2) R = Id, not by any display convention.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._synth import DegenerateModel, FreeStepModel, SynthesisEngine, _sinc
from .core import CutoffChi, DomainError, SpectralPoint, WavePacket, rho_plus_value
from .oscillatory import PhaseSpec, osc_integral

__all__ = [
    "KernelValue", "free_resolvent_kernel", "boundary_kernel",
    "free_step_evolve", "FreeStepEvolver", "apply_spectral_function",
    "free_ptw_check", "analytic_free_gaussian",
]


@dataclass(frozen=True)
class KernelValue:
    value: complex
    regime: str


def _regime(x: float, y: float) -> str:
    lo, hi = min(x, y), max(x, y)
    if hi < 0:
        return "y<x<0"
    if lo > 0:
        return "0<y<x"
    return "y<0<x"


def _fplus(z, rho, x):
    """Closed-form f_plus, stable near z = 0 (no 1/z)."""
    if x >= 0:
        return np.exp(1j * rho * x)
    return complex(np.cos(z * x) + 1j * rho * x * _sinc(np.asarray(z * x)))


def _fminus(z, rho, x):
    if x <= 0:
        return np.exp(-1j * z * x)
    return complex(np.cos(rho * x) - 1j * z * x * _sinc(np.asarray(rho * x)))


def free_resolvent_kernel(z, x: float, y: float, delta: float = 1.0) -> KernelValue:
    """Kernel of (H0 - z^2)^{-1} at (x, y); z in the closed upper half plane.

    For real z this is the outgoing boundary value (limit from above).
    Symmetric in (x, y) by construction.
    """
    zc = complex(z.z) if isinstance(z, SpectralPoint) else complex(z)
    if zc.imag < 0:
        raise DomainError("spectral root must satisfy Im z >= 0")
    rho = rho_plus_value(zc, delta=delta)
    W = -1j * (zc + rho)
    hi, lo = max(x, y), min(x, y)
    val = _fplus(zc, rho, hi) * _fminus(zc, rho, lo) / W
    return KernelValue(value=complex(val), regime=_regime(x, y))


def boundary_kernel(lam: float, x: float, y: float, delta: float = 1.0) -> KernelValue:
    """Limiting-absorption kernel K_lam = lim_{eps->0} K at z = lam + i*eps."""
    if lam == 0:
        raise DomainError("boundary kernel undefined at the threshold lam = 0")
    return free_resolvent_kernel(complex(lam), x, y, delta=delta)


# ---------------------------------------------------------------------------
# propagator
# ---------------------------------------------------------------------------

def _conj_packet(f: WavePacket) -> WavePacket:
    func = None
    if f.func is not None:
        func = lambda x, g=f.func: np.conj(g(x))
    return WavePacket(f.grid, np.conj(f.values), func=func, breaks=f.breaks)


class FreeStepEvolver:
    """Cached evolver u(t) = chi_M(H0) e^{i t H0} f for the pure step.

    Set delta = 0.0 for the degenerate (flat) background.  Negative times
    are handled by conjugation.
    """

    def __init__(self, f: WavePacket, M: float = 8.0, delta: float = 1.0,
                 x_out=None, t_max: float = 64.0, kind: str = "quintic"):
        self.chi = CutoffChi(M=M, kind=kind)
        if x_out is None:
            x_out = f.grid
        model = DegenerateModel() if delta == 0.0 else FreeStepModel()
        self._fwd = SynthesisEngine(model, f, self.chi, self.chi.support,
                                    x_out, t_max=t_max)
        self._bwd_data = _conj_packet(f)
        self._bwd = None
        self._model = model
        self._x_out = x_out
        self._t_max = t_max

    def evolve(self, t: float) -> WavePacket:
        if t >= 0:
            return self._fwd.evolve(t)
        if self._bwd is None:
            self._bwd = SynthesisEngine(self._model, self._bwd_data, self.chi,
                                        self.chi.support, self._x_out,
                                        t_max=self._t_max)
        w = self._bwd.evolve(-t)
        return WavePacket(w.grid, np.conj(w.values))


def free_step_evolve(f: WavePacket, t: float, M: float = 8.0,
                     delta: float = 1.0, x_out=None,
                     kind: str = "quintic") -> WavePacket:
    """Single-shot evolution under the pure step (or flat) background."""
    ev = FreeStepEvolver(f, M=M, delta=delta, x_out=x_out,
                         t_max=max(abs(t), 1e-6), kind=kind)
    return ev.evolve(t)


def apply_spectral_function(f: WavePacket, weight, lam_max: float,
                            x_out=None, delta: float = 1.0) -> WavePacket:
    """phi(H0) f through the boundary-kernel spectral formula.

    `weight` is phi as a function of lam (i.e. phi(lam^2) pre-composed);
    it must vanish for |lam| >= lam_max.
    """
    if x_out is None:
        x_out = f.grid
    model = DegenerateModel() if delta == 0.0 else FreeStepModel()
    eng = SynthesisEngine(model, f, weight, lam_max, x_out, t_max=1e-6)
    return eng.evolve(0.0)


def analytic_free_gaussian(center: float, width: float, scale: complex,
                           t: float, x):
    """Closed-form e^{i t H} of a Gaussian for H = -d^2/dx^2 (no potential)."""
    x = np.asarray(x, dtype=float)
    s2 = width * width - 2j * t
    return scale * width / np.sqrt(s2) * np.exp(-((x - center) ** 2) / (2.0 * s2))


# ---------------------------------------------------------------------------
# pointwise dispersive check
# ---------------------------------------------------------------------------

def free_ptw_check(t: float, x: float, y: float, M: float = 4.0,
                   tol: float = 1e-9, kind: str = "quintic"):
    """(lhs, rhs-scale) for the pointwise kernel-integral decay.

    lhs = |int e^{i t lam^2} lam chi_M(lam) K_lam(x, y) dlam| computed by
    splitting the kernel into its exponential terms; returns
    (lhs, lhs * sqrt(t)).
    """
    if t <= 0:
        raise DomainError("t > 0 required")
    chi = CutoffChi(M=M, kind=kind)
    L = chi.support
    hi, lo = max(x, y), min(x, y)

    def rho_of(lam):
        return rho_plus_value(lam)

    terms = []
    if hi <= 0:
        # [e^{i lam (hi-lo)} + r(lam) e^{-i lam (hi+lo)}] * i/(2 lam) * lam
        terms.append((0.0, hi - lo, lambda lam: 0.5j * chi(lam) * np.ones_like(lam)))

        def amp_refl(lam):
            rho = rho_of(lam)
            return 0.5j * chi(lam) * (lam - rho) / (lam + rho)

        terms.append((0.0, -(hi + lo), amp_refl))
    elif lo >= 0:
        def amp_dir(lam):
            return 0.5j * chi(lam) * lam / rho_of(lam)

        def amp_refl(lam):
            rho = rho_of(lam)
            return -0.5j * chi(lam) * (lam / rho) * (lam - rho) / (lam + rho)

        terms.append((hi - lo, 0.0, amp_dir))
        terms.append((hi + lo, 0.0, amp_refl))
    else:
        def amp_mid(lam):
            return 1j * chi(lam) * lam / (rho_of(lam) + lam)

        terms.append((hi, -lo, amp_mid))

    total = 0.0 + 0.0j
    for (A, B, amp) in terms:
        res = osc_integral(PhaseSpec(t=t, A=A, B=B, interval=(-L, L)), amp, tol=tol)
        total += res.value
    lhs = abs(total)
    return lhs, lhs * math.sqrt(t)
