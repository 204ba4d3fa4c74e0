"""Grids, potentials, cutoff functions and spectral branch functions.

Everything downstream works in the normalized problem

    H = -d^2/dx^2 + 1_+(x) + V(x),      1_+ = indicator of [0, +oo),

obtained from a general two-level background (V_-, V_+) by a gauge
transform and a rescaling.  The right-side momentum over the raised step
is rho_plus(z) = (z^2 - 1)^{1/2}, taken on the branch with nonnegative
imaginary part.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""


# ---------------------------------------------------------------------------
# spectral branch function
# ---------------------------------------------------------------------------

def rho_plus_value(z, delta: float = 1.0):
    """Branch of (z^2 - delta^2)^{1/2} with nonnegative imaginary part.

    On the real axis this is the three-branch boundary value from the
    upper half plane:

        rho = sqrt(lam^2 - d^2)      for lam > d,
        rho = i sqrt(d^2 - lam^2)    for |lam| < d,
        rho = -sqrt(lam^2 - d^2)     for lam < -d.

    Accepts scalars or arrays; Im z < 0 is rejected.
    """
    z_arr = np.asarray(z, dtype=complex)
    if np.any(z_arr.imag < 0):
        raise DomainError("rho_plus is defined on the closed upper half plane only")
    if delta == 0.0:
        return z_arr if z_arr.ndim else complex(z_arr)

    d2 = delta * delta
    out = np.empty_like(z_arr)

    on_axis = z_arr.imag == 0
    lam = z_arr.real
    if np.any(on_axis):
        lam_ax = lam[on_axis]
        r = np.empty_like(lam_ax, dtype=complex)
        mid = np.abs(lam_ax) <= delta
        r[mid] = 1j * np.sqrt(d2 - lam_ax[mid] ** 2)
        hi = lam_ax > delta
        r[hi] = np.sqrt(lam_ax[hi] ** 2 - d2)
        lo = lam_ax < -delta
        r[lo] = -np.sqrt(lam_ax[lo] ** 2 - d2)
        out[on_axis] = r

    off = ~on_axis
    if np.any(off):
        w = z_arr[off] ** 2 - d2
        r = np.sqrt(w)
        r = np.where(r.imag < 0, -r, r)
        out[off] = r

    return out if out.ndim else complex(out)


@dataclass(frozen=True)
class SpectralPoint:
    """A spectral parameter z (Im z >= 0) with its branch values.

    ``z`` doubles as the left momentum (the Im >= 0 root of z^2) and
    ``rho_plus`` is the right momentum over the unit step.
    """

    z: complex
    sqrt_z: complex
    rho_plus: complex


def rho_plus(z, delta: float = 1.0) -> SpectralPoint:
    """Build the SpectralPoint for z in the closed upper half plane."""
    zc = complex(z)
    if zc.imag < 0:
        raise DomainError(f"Im z = {zc.imag} < 0")
    return SpectralPoint(z=zc, sqrt_z=zc, rho_plus=rho_plus_value(zc, delta=delta))


# ---------------------------------------------------------------------------
# background normalization
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepBackground:
    """Two-level background V_- (x<0), V_+ (x>0) and its normalization data.

    The solution map: if w solves the normalized problem
    i w_s - w_xx + 1_+ w = 0 with w(0, xi) = f(xi / scale), then

        u(t, x) = exp(i * gauge_phase * t) * w(scale^2 t, scale * x)

    solves the original one with initial datum f.
    """

    v_minus: float
    v_plus: float
    gauge_phase: float
    scale: float

    def normalized_time(self, t: float) -> float:
        return self.scale ** 2 * t

    def normalized_x(self, x):
        return self.scale * np.asarray(x)

    def denormalize_values(self, t: float, w_values):
        """Map values w(scale^2 t, scale*x) to u(t, x)."""
        return np.exp(1j * self.gauge_phase * t) * np.asarray(w_values)


def normalize_background(v_minus: float, v_plus: float) -> StepBackground:
    if not v_plus > v_minus:
        raise DomainError(f"need v_plus > v_minus, got {v_minus}, {v_plus}")
    return StepBackground(
        v_minus=float(v_minus),
        v_plus=float(v_plus),
        gauge_phase=float(v_minus),
        scale=math.sqrt(v_plus - v_minus),
    )


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------

def _right_cumulative(weights, grid):
    """Trapezoid of `weights` from x to grid end, evaluated at grid points."""
    seg = 0.5 * (weights[1:] + weights[:-1]) * np.diff(grid)
    out = np.zeros_like(grid, dtype=float)
    out[:-1] = np.cumsum(seg[::-1])[::-1]
    return out


@dataclass(frozen=True)
class PotentialSample:
    """Perturbation V sampled on a strictly increasing grid, V = 0 off-grid.

    Carries the weighted norms ||V||_1, ||(1+x^2)V||_1 and the tail weight
    sigma(x) = int_x^oo (1+|y|)|V(y)| dy as a piecewise-linear function.
    """

    grid: np.ndarray
    values: np.ndarray
    norm_l1: float = field(init=False)
    norm_w2: float = field(init=False)
    _sigma_nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if grid.ndim != 1 or grid.size < 2:
            raise DomainError("potential grid must be 1D with at least 2 points")
        if not np.all(np.diff(grid) > 0):
            raise DomainError("potential grid must be strictly increasing")
        if values.shape != grid.shape:
            raise DomainError("grid/values shape mismatch")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        absv = np.abs(values)
        object.__setattr__(self, "norm_l1", float(np.trapezoid(absv, grid)))
        object.__setattr__(self, "norm_w2", float(np.trapezoid((1 + grid**2) * absv, grid)))
        object.__setattr__(self, "_sigma_nodes", _right_cumulative((1 + np.abs(grid)) * absv, grid))

    def __call__(self, x):
        """V(x) by linear interpolation, identically 0 outside the grid."""
        return np.interp(np.asarray(x, dtype=float), self.grid, self.values, left=0.0, right=0.0)

    def sigma(self, x):
        """Tail weight sigma_V(x); constant left of the grid, 0 to the right."""
        return np.interp(np.asarray(x, dtype=float), self.grid, self._sigma_nodes,
                         left=self._sigma_nodes[0], right=0.0)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.grid[0]), float(self.grid[-1])

    def is_zero(self) -> bool:
        return bool(np.all(self.values == 0.0))

    # -- constructors -------------------------------------------------------

    @staticmethod
    def zero(lo: float = -1.0, hi: float = 1.0, n: int = 9) -> "PotentialSample":
        g = np.linspace(lo, hi, n)
        return PotentialSample(g, np.zeros_like(g))

    @staticmethod
    def box(height: float, lo: float, hi: float, n: int = 801) -> "PotentialSample":
        g = np.linspace(lo, hi, n)
        return PotentialSample(g, np.full_like(g, float(height)))

    @staticmethod
    def gaussian_bump(amplitude: float, center: float = 0.0, width: float = 1.0,
                      cut: float = 8.0, n: int = 1601) -> "PotentialSample":
        g = np.linspace(center - cut * width, center + cut * width, n)
        return PotentialSample(g, amplitude * np.exp(-((g - center) / width) ** 2))


def weighted_norms(V: PotentialSample):
    """(||V||_1, ||(1+x^2)V||_1, sigma evaluator) for a sampled potential."""
    return V.norm_l1, V.norm_w2, V.sigma


# -- CSV round trip ---------------------------------------------------------

def save_potential_csv(path, V: PotentialSample, v_minus: float = 0.0, v_plus: float = 1.0):
    with open(path, "w") as fh:
        fh.write(f"# v_minus={v_minus!r} v_plus={v_plus!r}\n")
        for x, v in zip(V.grid, V.values):
            fh.write(f"{x!r},{v!r}\n")


def load_potential_csv(path):
    """Read a potential file; returns (PotentialSample, v_minus, v_plus).

    Format: a header line '# v_minus=<f> v_plus=<f>' then rows 'x,V'.
    Non-monotone grids are rejected.
    """
    v_minus, v_plus = 0.0, 1.0
    xs, vs = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    if tok.startswith("v_minus="):
                        v_minus = float(tok.split("=", 1)[1])
                    elif tok.startswith("v_plus="):
                        v_plus = float(tok.split("=", 1)[1])
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DomainError(f"{path}:{lineno}: expected 'x,V', got {line!r}")
            try:
                xs.append(float(parts[0]))
                vs.append(float(parts[1]))
            except ValueError as exc:
                raise DomainError(f"{path}:{lineno}: {exc}") from exc
    if len(xs) < 2:
        raise DomainError(f"{path}: potential file needs at least 2 rows")
    xs = np.asarray(xs)
    if not np.all(np.diff(xs) > 0):
        bad = int(np.argmin(np.diff(xs))) + 2
        raise DomainError(f"{path}: grid not strictly increasing near row {bad}")
    return PotentialSample(xs, np.asarray(vs)), v_minus, v_plus


# ---------------------------------------------------------------------------
# cutoff functions
# ---------------------------------------------------------------------------

def _smoothstep5(t):
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def _smoothstep5_d1(t):
    return 30.0 * t * t * (1.0 - t) ** 2


def _smoothstep5_d2(t):
    return 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)


def _smoothstep7(t):
    return t**4 * (35.0 + t * (-84.0 + t * (70.0 - 20.0 * t)))


def _smoothstep7_d1(t):
    return 140.0 * t**3 * (1.0 - t) ** 3


def _smoothstep7_d2(t):
    return 420.0 * t**2 * (1.0 - t) ** 2 * (1.0 - 2.0 * t)


_STEPS = {
    "quintic": (_smoothstep5, _smoothstep5_d1, _smoothstep5_d2),
    "septic": (_smoothstep7, _smoothstep7_d1, _smoothstep7_d2),
}


@dataclass(frozen=True)
class CutoffChi:
    """Even cutoff chi_M(lam) = chi(lam/M): 1 on |lam|<=4M, 0 on |lam|>=8M.

    The taper on [4,8] is a polynomial smoothstep, so |chi'| <= 1 and
    |chi''| <= 1 hold for every scale M >= 1.  Two admissible shapes
    ('quintic', 'septic') are provided; results must not depend on the
    choice.
    """

    M: float = 1.0
    kind: str = "quintic"

    def __post_init__(self):
        if self.M < 1.0:
            raise DomainError(f"cutoff scale M must be >= 1, got {self.M}")
        if self.kind not in _STEPS:
            raise DomainError(f"unknown cutoff kind {self.kind!r}")

    @property
    def plateau(self) -> float:
        return 4.0 * self.M

    @property
    def support(self) -> float:
        return 8.0 * self.M

    def __call__(self, lam):
        s, _, _ = _STEPS[self.kind]
        u = np.abs(np.asarray(lam, dtype=float)) / self.M
        t = np.clip((u - 4.0) / 4.0, 0.0, 1.0)
        return 1.0 - s(t)

    def deriv(self, lam, order: int = 1):
        s, d1, d2 = _STEPS[self.kind]
        lam = np.asarray(lam, dtype=float)
        u = np.abs(lam) / self.M
        inside = (u > 4.0) & (u < 8.0)
        t = np.clip((u - 4.0) / 4.0, 0.0, 1.0)
        sign = np.sign(lam)
        if order == 1:
            out = -d1(t) / (4.0 * self.M) * sign
        elif order == 2:
            out = -d2(t) / (16.0 * self.M**2)
        else:
            raise DomainError("derivatives available up to order 2")
        return np.where(inside, out, 0.0)

    def complement(self, lam):
        """psi = 1 - chi_M."""
        return 1.0 - self(lam)


def split_cutoff(lambda0: float, kind: str = "quintic") -> CutoffChi:
    """Cutoff whose plateau edge sits exactly at lambda0 (support 2*lambda0)."""
    return CutoffChi(M=lambda0 / 4.0, kind=kind)


# ---------------------------------------------------------------------------
# wave packets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WavePacket:
    """Complex state on a grid with its L1/L2 norms (trapezoid).

    `func` (optional) evaluates the state exactly off-grid; `breaks` lists
    discontinuity locations so quadratures can align panels with them.
    """

    grid: np.ndarray
    values: np.ndarray
    func: object = None
    breaks: tuple = ()
    norm_l1: float = field(init=False)
    norm_l2: float = field(init=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        if grid.shape != values.shape:
            raise DomainError("grid/values shape mismatch")
        if not np.all(np.diff(grid) > 0):
            raise DomainError("wave packet grid must be strictly increasing")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)
        absv = np.abs(values)
        object.__setattr__(self, "norm_l1", float(np.trapezoid(absv, grid)))
        object.__setattr__(self, "norm_l2", float(np.sqrt(np.trapezoid(absv**2, grid))))

    def interp(self, x):
        xr = np.interp(x, self.grid, self.values.real, left=0.0, right=0.0)
        xi = np.interp(x, self.grid, self.values.imag, left=0.0, right=0.0)
        return xr + 1j * xi

    def rel_l2_diff(self, other: "WavePacket", window=None) -> float:
        """Relative L2 difference on self.grid (other interpolated)."""
        g = self.grid
        mask = np.ones_like(g, dtype=bool)
        if window is not None:
            mask = (g >= window[0]) & (g <= window[1])
        d = np.abs(self.values - other.interp(g))[mask]
        ref = np.abs(self.values)[mask]
        num = np.sqrt(np.trapezoid(d**2, g[mask]))
        den = np.sqrt(np.trapezoid(ref**2, g[mask]))
        return float(num / den) if den > 0 else float(num)

    @staticmethod
    def gaussian(center: float = 0.0, width: float = 1.0, grid=None,
                 normalize: str = "l1") -> "WavePacket":
        if grid is None:
            grid = np.linspace(center - 12 * width, center + 12 * width, 2001)
        grid = np.asarray(grid, dtype=float)

        def raw(x):
            return np.exp(-((np.asarray(x, dtype=float) - center) / width) ** 2 / 2.0)

        scale = 1.0
        wp = WavePacket(grid, raw(grid).astype(complex))
        if normalize == "l1":
            scale = 1.0 / wp.norm_l1
        elif normalize == "l2":
            scale = 1.0 / wp.norm_l2
        return WavePacket(grid, scale * raw(grid).astype(complex),
                          func=lambda x, s=scale: s * raw(x).astype(complex))

    @staticmethod
    def box(lo: float = -1.0, hi: float = 1.0, grid=None,
            normalize: str = "l1") -> "WavePacket":
        if grid is None:
            grid = np.linspace(lo - 4.0, hi + 4.0, 2001)
        grid = np.asarray(grid, dtype=float)

        def raw(x):
            x = np.asarray(x, dtype=float)
            return ((x >= lo) & (x <= hi)).astype(complex)

        scale = 1.0
        wp = WavePacket(grid, raw(grid))
        if normalize == "l1":
            scale = 1.0 / wp.norm_l1
        elif normalize == "l2":
            scale = 1.0 / wp.norm_l2
        return WavePacket(grid, scale * raw(grid),
                          func=lambda x, s=scale: s * raw(x), breaks=(lo, hi))


# ---------------------------------------------------------------------------
# Regge-Wheeler potential (Schwarzschild radial background)
# ---------------------------------------------------------------------------

class NewtonError(RuntimeError):
    pass


def tortoise_coordinate(r, M: float):
    """s(r) = r + 2M log((r - 2M)/(2M)); requires r > 2M."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 2 * M):
        raise DomainError("tortoise coordinate requires r > 2M (outside the horizon)")
    return r + 2 * M * np.log((r - 2 * M) / (2 * M))


def radius_from_tortoise(s, M: float, tol: float = 1e-12, max_iter: int = 100):
    """Invert the tortoise coordinate by a damped Newton iteration."""
    s = np.asarray(s, dtype=float)
    r = np.maximum(2 * M + 1e-8, s.copy())
    # exponential seed improves the far-left tail
    left = s < 2 * M
    r[left] = 2 * M * (1.0 + np.exp((s[left] - 2 * M) / (2 * M)))
    for _ in range(max_iter):
        F = r + 2 * M * np.log((r - 2 * M) / (2 * M)) - s
        if np.all(np.abs(F) <= tol * (1.0 + np.abs(s))):
            return r
        step = -F * (r - 2 * M) / r
        r_new = r + step
        bad = r_new <= 2 * M
        r_new[bad] = 0.5 * (r[bad] + 2 * M)
        r = r_new
    worst = int(np.argmax(np.abs(r + 2 * M * np.log((r - 2 * M) / (2 * M)) - s)))
    raise NewtonError(f"tortoise inversion did not converge at s = {s.flat[worst]}")


@dataclass(frozen=True)
class AsymptoteReport:
    """Log-slope fits of the Regge-Wheeler potential tails."""

    mass_limit: float            # v(s) -> field_mass^2 as s -> +oo
    power_exponent: float        # fitted d log|v - m^2| / d log s on the right tail
    exp_rate: float              # fitted d log v / d s on the left tail


def regge_wheeler_potential(M: float, field_mass: float, s_grid):
    """v(s) = (m^2 + 2M/r^3)(1 - 2M/r) on a tortoise grid, with tail fits.

    Returns (PotentialSample of the raw samples, AsymptoteReport).  The
    left tail decays like exp(s/(2M)); the right tail approaches m^2
    with a power-law residual (s^-3 for m = 0, s^-1 otherwise).
    """
    if M <= 0:
        raise DomainError("black-hole mass M must be positive")
    if field_mass < 0:
        raise DomainError("field mass must be nonnegative")
    s = np.asarray(s_grid, dtype=float)
    r = radius_from_tortoise(s, M)
    v = (field_mass**2 + 2 * M / r**3) * (1 - 2 * M / r)

    m2 = field_mass**2
    right = s > max(20 * M, 10.0)
    if right.sum() >= 4:
        resid = np.abs(v[right] - m2)
        ok = resid > 0
        slope = np.polyfit(np.log(s[right][ok]), np.log(resid[ok]), 1)[0]
    else:
        slope = math.nan
    left = s < -max(8 * M, 4.0)
    if left.sum() >= 4:
        rate = np.polyfit(s[left], np.log(v[left]), 1)[0]
    else:
        rate = math.nan
    return PotentialSample(s, v), AsymptoteReport(mass_limit=m2, power_exponent=float(slope),
                                                  exp_rate=float(rate))
