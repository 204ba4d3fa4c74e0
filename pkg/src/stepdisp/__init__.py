"""Scattering and dispersive-decay toolkit for the 1D Schrodinger operator
with a steplike potential H = -d^2/dx^2 + 1_+(x) + V(x)."""

from .core import (
    CutoffChi,
    DomainError,
    PotentialSample,
    SpectralPoint,
    StepBackground,
    WavePacket,
    load_potential_csv,
    normalize_background,
    regge_wheeler_potential,
    rho_plus,
    rho_plus_value,
    save_potential_csv,
    split_cutoff,
    weighted_norms,
)
from .oscillatory import (
    BoundViolation,
    OscIntegralError,
    OscIntegralResult,
    PhaseSpec,
    appendix_phase_bound,
    dense_reference,
    lemma_vdc_check,
    osc_integral,
    oscillation_count,
    vdc_bound,
    vdc_refined_bound,
    vdcadv_check,
)

__version__ = "0.1.0"
