"""Zero-field ESR sensing simulator.

Simulates dressed-state resonance spectroscopy of hyperfine-coupled electron
spins near an NV center: zero-field eigensystems and transition tables,
drive-power resonance matching, density-matrix pulse sequences with
relaxation, spectrum synthesis and Gaussian-fit inversion, and the
detection-area signal budget.
"""

__version__ = "0.1.0"

from .spincore import (
    HyperfineTensor,
    SpinSpecies,
    TargetSpinSystem,
    analytic_half_half_eigensystem,
    diagonalize,
    hyperfine_hamiltonian,
    p1_15n_system,
    rotate_tensor,
    spin_operators,
    transition_table,
    zero_field_transitions,
)
from .dressed import (
    DressedBasis,
    DriveField,
    NVCenter,
    dressed_basis,
    linewidth_budget,
    resonance_powers,
    rotating_frame_hamiltonian,
)
from .dynamics import (
    DipolarCoupling,
    PulseSequence,
    RelaxationChannels,
    T1RhoModel,
    dipolar_hamiltonian,
    flip_flop_transfer,
    propagate,
    rabi_trace,
    run_sequence,
    spinlock_sequence,
)
from .spectra import (
    BackgroundModel,
    EnsembleSpec,
    FitResult,
    PeakModel,
    Spectrum,
    calibrate_baseline,
    deer_spectrum,
    extract_hyperfine,
    fit_gaussian_peaks,
    zf_spectrum,
)
from .detection import (
    DetectionAreaParams,
    dominance_fraction,
    eta_sq_monte_carlo,
    expected_spin_count,
    outer_signal,
    per_spin_signal,
)
