"""Pseudo-spectral solver and diagnostics for the damped anisotropic Navier-Stokes system."""

__version__ = "0.1.0"

from .spectral import GridSpec, PhysicalField, SpectralField, SpectralVelocityField, make_grid  # noqa: E402
from .dynamics import BlowUpError, DampingMode, PhysicsParams, Scheme, StepperConfig, step, integrate  # noqa: E402
from .diagnostics import DiagnosticsRecord, VerticalBudgetReport, compute_record  # noqa: E402
from .inequalities import InequalityReport  # noqa: E402
from .stability import GronwallReport, TwinRunRecord, twin_run, gronwall_envelope  # noqa: E402

__all__ = [
    "__version__",
    "GridSpec",
    "PhysicalField",
    "SpectralField",
    "SpectralVelocityField",
    "make_grid",
    "BlowUpError",
    "DampingMode",
    "PhysicsParams",
    "Scheme",
    "StepperConfig",
    "step",
    "integrate",
    "DiagnosticsRecord",
    "VerticalBudgetReport",
    "compute_record",
    "InequalityReport",
    "GronwallReport",
    "TwinRunRecord",
    "twin_run",
    "gronwall_envelope",
]
