"""Driven NV center in the rotating frame: drive Hamiltonians, dressed basis,
resonance-condition matching and linewidth budgets.

The rotating frame is defined by the zero-field splitting term D Sz^2 with
the rotating-wave approximation dropping terms oscillating at 2D.  Phases x,
y and -y follow the convention phi = 0, pi/2, -pi/2; the y-phase generator is
the Syy matrix below, which differs from Sy in the sign of its lower block.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import constants
from .spincore import TransitionRow, TransitionTable, spin_operators

NV_SX, NV_SY, NV_SZ = spin_operators(1.0)
NV_SZ2 = NV_SZ @ NV_SZ

# y-phase rotating-frame generator ("Syy"): like Sx but with -i/+i pattern
# repeated in both off-diagonal blocks, unlike Sy whose lower block flips sign.
SYY = np.array(
    [[0.0, -1.0j, 0.0], [1.0j, 0.0, 1.0j], [0.0, -1.0j, 0.0]], dtype=complex
) / np.sqrt(2.0)

RABI_POWER_WARN_MHZ = 1000.0

PHASE_ALIASES = {"x": 0.0, "y": np.pi / 2.0, "-y": -np.pi / 2.0, "minus_y": -np.pi / 2.0}


@dataclass(frozen=True)
class NVCenter:
    """NV sensor parameters: splitting, gyromagnetic ratio and relaxation times."""

    d_mhz: float = constants.NV_ZERO_FIELD_SPLITTING_MHZ
    gamma_mhz_per_g: float = constants.NV_GYROMAGNETIC_MHZ_PER_G
    t2star_us: float = 0.1
    t1rho_us: float = 70.0

    def __post_init__(self):
        if self.d_mhz <= 0:
            raise ValueError("zero-field splitting must be positive")
        if self.t2star_us <= 0 or self.t1rho_us <= 0:
            raise ValueError("relaxation times must be positive")


@dataclass(frozen=True)
class DriveField:
    """Microwave drive: Rabi power (MHz), phase (x, y, -y or radians), carrier (MHz).

    carrier_mhz=None means on resonance with the NV splitting.
    """

    omega_mhz: float
    phase: str | float = "x"
    carrier_mhz: float | None = None

    def __post_init__(self):
        if self.omega_mhz < 0:
            raise ValueError("drive power must be non-negative")
        if isinstance(self.phase, str) and self.phase not in PHASE_ALIASES:
            raise ValueError(f"unknown phase {self.phase!r}; use x, y, -y or radians")

    @property
    def phase_rad(self) -> float:
        if isinstance(self.phase, str):
            return PHASE_ALIASES[self.phase]
        return float(self.phase)


def rotating_frame_hamiltonian(drive: DriveField, d_mhz: float = constants.NV_ZERO_FIELD_SPLITTING_MHZ) -> np.ndarray:
    """Rotating-frame NV drive Hamiltonian in MHz.

    Phase x gives (Omega/2) Sx, y gives (Omega/2) Syy, -y its negative; a
    general phase phi fills the off-diagonals with exp(+-i phi).  An
    off-resonant carrier adds the detuning term (D - f) Sz^2.
    """
    phi = drive.phase_rad
    om = drive.omega_mhz
    h = (om / (2.0 * np.sqrt(2.0))) * np.array(
        [
            [0.0, np.exp(-1j * phi), 0.0],
            [np.exp(1j * phi), 0.0, np.exp(1j * phi)],
            [0.0, np.exp(-1j * phi), 0.0],
        ],
        dtype=complex,
    )
    if drive.carrier_mhz is not None:
        h = h + (d_mhz - drive.carrier_mhz) * NV_SZ2
    return h


@dataclass(frozen=True)
class DressedBasis:
    """The three dressed eigenvectors of the x-phase drive, with energies
    (-Omega/2, 0, +Omega/2) in MHz.  Columns of `states` are ordered the same
    way; the coefficient pattern is fixed (1/2, -1/sqrt2, 1/2), etc."""

    omega_mhz: float
    energies: np.ndarray
    states: np.ndarray

    @property
    def locked(self) -> np.ndarray:
        """The lowest dressed state, the one the locking sequence prepares."""
        return self.states[:, 0]


_D_MINUS = np.array([0.5, -1.0 / np.sqrt(2.0), 0.5], dtype=complex)
_D_ZERO = np.array([-1.0 / np.sqrt(2.0), 0.0, 1.0 / np.sqrt(2.0)], dtype=complex)
_D_PLUS = np.array([0.5, 1.0 / np.sqrt(2.0), 0.5], dtype=complex)


def dressed_basis(omega_mhz: float) -> DressedBasis:
    """Dressed basis of the resonant x-phase drive at power omega_mhz."""
    if omega_mhz <= 0:
        raise ValueError("dressed basis undefined for zero drive power")
    energies = np.array([-omega_mhz / 2.0, 0.0, omega_mhz / 2.0])
    states = np.column_stack([_D_MINUS, _D_ZERO, _D_PLUS])
    return DressedBasis(omega_mhz=float(omega_mhz), energies=energies, states=states)


@dataclass(frozen=True)
class ResonancePower:
    """A matched drive power (MHz) and the target transition it addresses."""

    omega_mhz: float
    transition: TransitionRow


def resonance_powers(table: TransitionTable) -> list[ResonancePower]:
    """Drive powers meeting the flip-flop condition Omega = 2 * frequency,
    one entry per observable transition."""
    return [
        ResonancePower(omega_mhz=2.0 * row.frequency_mhz, transition=row)
        for row in table.observable_rows()
    ]


def distinct_resonance_powers(table: TransitionTable, tol: float = 1e-6) -> list[tuple[float, float]]:
    """(power, summed weight) pairs for the distinct observable lines."""
    return [(2.0 * f, w) for f, w in table.distinct_frequencies(tol)]


@dataclass(frozen=True)
class LinewidthBudget:
    """Resonance line broadening contributions in MHz."""

    dephasing_mhz: float
    zeeman_splitting_mhz: float


def linewidth_budget(
    nv: NVCenter, target_t2star_us: float, residual_field_g: float = 0.0
) -> LinewidthBudget:
    """Dephasing linewidth 1/(pi T2*) of the target plus the residual-field
    Zeeman line splitting 2 |gamma| B, reported separately."""
    if target_t2star_us <= 0:
        raise ValueError("target dephasing time must be positive")
    dephasing = 0.0 if np.isinf(target_t2star_us) else 1.0 / (np.pi * target_t2star_us)
    splitting = 2.0 * abs(nv.gamma_mhz_per_g) * abs(residual_field_g)
    return LinewidthBudget(dephasing_mhz=dephasing, zeeman_splitting_mhz=splitting)


def check_drive_power(omega_mhz: float, budget: LinewidthBudget | None = None) -> None:
    """Warn when a drive power is outside the practically usable band."""
    if omega_mhz > RABI_POWER_WARN_MHZ:
        warnings.warn(
            f"drive power {omega_mhz:g} MHz exceeds the {RABI_POWER_WARN_MHZ:g} MHz "
            "practical bound set by the NV zero-field splitting",
            stacklevel=2,
        )
    if budget is not None and omega_mhz < budget.dephasing_mhz:
        warnings.warn(
            f"drive power {omega_mhz:g} MHz is below the dephasing linewidth "
            f"{budget.dephasing_mhz:.3g} MHz; resonances are unresolvable there",
            stacklevel=2,
        )
