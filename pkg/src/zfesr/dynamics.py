"""Density-matrix pulse-sequence simulation for the driven NV sensor, alone or
jointly with one hyperfine-coupled target spin system.

Propagation is piecewise constant: each segment Hamiltonian is exponentiated
exactly (unitary conjugation without relaxation, a Liouville-space
superoperator exponential with it).  Hamiltonians are ordinary frequencies in
MHz and times are microseconds, so propagators carry the 2*pi explicitly;
relaxation rates are ordinary rates in 1/us and enter without 2*pi.

Relaxation channel policy during sequences:
  * the locked-state leakage channel (nv_t1rho) acts during x-phase drive
    segments, as one-way jumps out of the lowest dressed state of that
    segment's drive, split between the two other dressed states by
    branch_p1 (readout is insensitive to the split);
  * NV dephasing (nv_t2star) acts only during free evolution, since the
    continuous drive suppresses it;
  * target dephasing (target_gamma) acts during every timed segment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from . import constants
from .dressed import DriveField, NVCenter, dressed_basis, rotating_frame_hamiltonian
from .spincore import (
    MAX_JOINT_DIM,
    TargetSpinSystem,
    hyperfine_hamiltonian,
    spin_operators,
)

TRACE_TOL = 1e-10
PSD_TOL = -1e-10


@dataclass(frozen=True)
class RelaxationChannels:
    """Phenomenological decay parameters; None disables a channel.

    target_gamma_mhz is the target dephasing rate (1/T2* of the target, an
    ordinary rate in 1/us).  branch_p1 splits T1rho leakage between the
    central and upper dressed states.
    """

    nv_t1rho_us: float | None = None
    nv_t2star_us: float | None = None
    target_gamma_mhz: float | None = None
    branch_p1: float = 0.5

    def __post_init__(self):
        for name in ("nv_t1rho_us", "nv_t2star_us", "target_gamma_mhz"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive when set")
        if not 0.0 <= self.branch_p1 <= 1.0:
            raise ValueError("branch_p1 must lie in [0, 1]")


class T1RhoModel:
    """Locking relaxation time as a function of drive power.

    Either a constant or linear interpolation of a (power, T1rho) table; the
    table is clamped at its ends.
    """

    def __init__(self, constant_us: float | None = 70.0, table: tuple | None = None):
        if table is not None:
            omegas, values = (np.asarray(c, dtype=float) for c in table)
            if len(omegas) != len(values) or len(omegas) < 2:
                raise ValueError("T1rho table needs >= 2 (power, value) pairs")
            if np.any(np.diff(omegas) <= 0):
                raise ValueError("T1rho table powers must be strictly increasing")
            if np.any(values <= 0):
                raise ValueError("T1rho values must be positive")
            self._omegas, self._values = omegas, values
            self._constant = None
        else:
            if constant_us is None or constant_us <= 0:
                raise ValueError("constant T1rho must be positive")
            self._constant = float(constant_us)
            self._omegas = self._values = None

    def __call__(self, omega_mhz):
        if self._constant is not None:
            return self._constant if np.isscalar(omega_mhz) else np.full_like(
                np.asarray(omega_mhz, dtype=float), self._constant
            )
        return np.interp(omega_mhz, self._omegas, self._values)


# --- sequence segments ---


@dataclass(frozen=True)
class Polarize:
    """Laser reset: NV to |0><0|, any target to the maximally mixed state."""


@dataclass(frozen=True)
class MwPulse:
    power_mhz: float
    phase: str | float
    duration_us: float

    def __post_init__(self):
        if self.power_mhz < 0 or self.duration_us < 0:
            raise ValueError("pulse power and duration must be non-negative")


@dataclass(frozen=True)
class Wait:
    duration_us: float

    def __post_init__(self):
        if self.duration_us < 0:
            raise ValueError("wait duration must be non-negative")


@dataclass(frozen=True)
class Readout:
    """Normalized photoluminescence readout: the NV |0> population."""


Segment = Polarize | MwPulse | Wait | Readout


@dataclass(frozen=True)
class PulseSequence:
    segments: tuple[Segment, ...]

    def __post_init__(self):
        segs = self.segments
        if len(segs) < 2 or not isinstance(segs[0], Polarize) or not isinstance(segs[-1], Readout):
            raise ValueError("sequence must begin with polarize and end with readout")
        for s in segs[1:-1]:
            if isinstance(s, (Polarize, Readout)):
                raise ValueError("polarize/readout allowed only at the sequence ends")


def rabi_sequence(omega_mhz: float, duration_us: float) -> PulseSequence:
    return PulseSequence((Polarize(), MwPulse(omega_mhz, "x", duration_us), Readout()))


def spinlock_sequence(
    lock_omega_mhz: float, tau_us: float, pulse_omega_mhz: float | None = None
) -> PulseSequence:
    """Locking sequence: y-phase pi/2 pulse, x-phase hold, -y-phase pi/2 pulse.

    The pi/2 pulses run at their own power (default: the locking power) for
    the quarter-period 1/(4 Omega0).
    """
    om0 = lock_omega_mhz if pulse_omega_mhz is None else pulse_omega_mhz
    if om0 <= 0:
        raise ValueError("pi/2 pulse power must be positive")
    t_half_pi = 1.0 / (4.0 * om0)
    return PulseSequence(
        (
            Polarize(),
            MwPulse(om0, "y", t_half_pi),
            MwPulse(lock_omega_mhz, "x", tau_us),
            MwPulse(om0, "-y", t_half_pi),
            Readout(),
        )
    )


# --- state helpers ---


def polarized_state(target_dim: int = 1) -> np.ndarray:
    """NV in |0><0| tensored with a maximally mixed target of dimension target_dim."""
    nv = np.zeros((3, 3), dtype=complex)
    nv[1, 1] = 1.0
    if target_dim == 1:
        return nv
    return np.kron(nv, np.eye(target_dim, dtype=complex) / target_dim)


def assert_density_matrix(rho: np.ndarray, trace_tol: float = TRACE_TOL, psd_tol: float = PSD_TOL):
    if abs(np.trace(rho).real - 1.0) > trace_tol:
        raise ValueError(f"trace deviates from 1 by {abs(np.trace(rho).real - 1.0):.3e}")
    if np.max(np.abs(rho - rho.conj().T)) > 1e-9:
        raise ValueError("density matrix is not Hermitian")
    if np.min(np.linalg.eigvalsh((rho + rho.conj().T) / 2.0)) < psd_tol:
        raise ValueError("density matrix has a significantly negative eigenvalue")


def nv_population(rho: np.ndarray, level: int = 1) -> float:
    """Population of one bare NV level (0:|+1>, 1:|0>, 2:|-1>), tracing out targets."""
    dim = rho.shape[0]
    target_dim = dim // 3
    r = rho.reshape(3, target_dim, 3, target_dim)
    nv_rho = np.einsum("atbt->ab", r)
    return float(nv_rho[level, level].real)


# --- relaxation operators ---


def collapse_operators(
    channels: RelaxationChannels | None,
    target_dim: int = 1,
    lock_omega_mhz: float | None = None,
    driven: bool = False,
    target_electron_dim: int = 2,
) -> list[np.ndarray]:
    """Lindblad jump operators for the active channels on the NV x target space.

    A jump L enters the master equation as L rho L+ - {L+L, rho}/2.  Dephasing
    channels use sqrt(2*Gamma) Sz so a single-quantum coherence decays at
    exactly Gamma.  The T1rho channel is emitted only when lock_omega_mhz is
    given (an x-phase drive segment); NV dephasing only when not driven.
    """
    if channels is None:
        return []
    eye_t = np.eye(target_dim, dtype=complex)
    ops: list[np.ndarray] = []
    if channels.nv_t1rho_us is not None and lock_omega_mhz is not None and lock_omega_mhz > 0:
        basis = dressed_basis(lock_omega_mhz)
        locked = basis.states[:, 0]
        rate = 1.0 / channels.nv_t1rho_us
        for k, p in ((1, channels.branch_p1), (2, 1.0 - channels.branch_p1)):
            if p > 0:
                jump = np.sqrt(p * rate) * np.outer(basis.states[:, k], locked.conj())
                ops.append(np.kron(jump, eye_t))
    if channels.nv_t2star_us is not None and not driven:
        _, _, sz = spin_operators(1.0)
        ops.append(np.sqrt(2.0 / channels.nv_t2star_us) * np.kron(sz, eye_t))
    if channels.target_gamma_mhz is not None and target_dim > 1:
        # Dephasing acts on the target electron spin only.
        de = target_electron_dim
        if target_dim % de != 0:
            raise ValueError("target dimension is not divisible by the electron dimension")
        dn = target_dim // de
        _, _, sz_e = spin_operators((de - 1) / 2.0)
        op = np.kron(sz_e, np.eye(dn, dtype=complex))
        ops.append(np.sqrt(2.0 * channels.target_gamma_mhz) * np.kron(np.eye(3, dtype=complex), op))
    return ops


# --- propagation ---


def _liouvillian(h_mhz: np.ndarray, collapse: list[np.ndarray]) -> np.ndarray:
    """Superoperator on column-stacked density matrices, in 1/us."""
    d = h_mhz.shape[0]
    eye = np.eye(d, dtype=complex)
    lv = -2.0j * np.pi * (np.kron(eye, h_mhz) - np.kron(h_mhz.T, eye))
    for c in collapse:
        cdc = c.conj().T @ c
        lv += np.kron(c.conj(), c) - 0.5 * (np.kron(eye, cdc) + np.kron(cdc.T, eye))
    return lv


def propagate(
    rho: np.ndarray,
    h_mhz: np.ndarray,
    t_us: float,
    collapse: list[np.ndarray] | tuple = (),
) -> np.ndarray:
    """Evolve a density matrix under a constant Hamiltonian for t_us.

    Exact matrix exponential in both branches; with no collapse operators the
    evolution is the plain unitary conjugation.
    """
    if rho.shape != h_mhz.shape:
        raise ValueError("density matrix and Hamiltonian dimensions differ")
    if t_us < 0:
        raise ValueError("propagation time must be non-negative")
    if t_us == 0:
        return rho.copy()
    if len(collapse) == 0:
        u = expm(-2.0j * np.pi * h_mhz * t_us)
        return u @ rho @ u.conj().T
    lv = _liouvillian(h_mhz, list(collapse))
    vec = rho.reshape(-1, order="F")
    out = expm(lv * t_us) @ vec
    return out.reshape(rho.shape, order="F")


# --- dipolar coupling ---


@dataclass(frozen=True)
class DipolarCoupling:
    """Point dipole-dipole coupling geometry between the NV and the target electron.

    separation_nm is the vector from the NV to the target in the NV frame
    (z along the NV axis); c0_angular_mhz_nm3 carries its 2*pi.
    """

    separation_nm: tuple[float, float, float]
    c0_angular_mhz_nm3: float = constants.DIPOLAR_C0_ANGULAR_MHZ_NM3

    def __post_init__(self):
        if self.distance_nm <= 0:
            raise ValueError("separation must be nonzero")

    @property
    def distance_nm(self) -> float:
        return float(np.linalg.norm(self.separation_nm))

    @property
    def direction(self) -> np.ndarray:
        return np.asarray(self.separation_nm, dtype=float) / self.distance_nm

    @classmethod
    def at_distance(
        cls,
        r_nm: float,
        direction: tuple[float, float, float] = (0.0, 0.0, 1.0),
        c0_angular_mhz_nm3: float = constants.DIPOLAR_C0_ANGULAR_MHZ_NM3,
    ) -> "DipolarCoupling":
        n = np.asarray(direction, dtype=float)
        n = n / np.linalg.norm(n)
        return cls(tuple(r_nm * n), c0_angular_mhz_nm3)


def dipolar_coupling_matrix(coupling: DipolarCoupling) -> np.ndarray:
    """3x3 coupling tensor D_ab in ordinary MHz: (C0/2pi/r^3) (delta_ab - 3 n_a n_b)."""
    n = coupling.direction
    scale = coupling.c0_angular_mhz_nm3 / (2.0 * np.pi) / coupling.distance_nm**3
    return scale * (np.eye(3) - 3.0 * np.outer(n, n))


def dipolar_hamiltonian(
    coupling: DipolarCoupling,
    system: TargetSpinSystem,
    nv_axis: tuple[float, float, float] = (0.0, 0.0, 1.0),
    secular: bool = True,
) -> np.ndarray:
    """Dipole-dipole Hamiltonian between the NV and the target electron spin
    on the NV x electron x nucleus product space, in MHz.

    With secular=True only the NV-axis row survives (terms S_z^NV S_b^target
    for b in x, y, z); the NV transverse terms oscillate at the NV splitting
    and are dropped.  The target-side components are all retained.
    """
    d_ab = dipolar_coupling_matrix(coupling)
    joint_dim = 3 * system.dim
    if joint_dim > MAX_JOINT_DIM:
        raise ValueError(f"joint dimension {joint_dim} exceeds {MAX_JOINT_DIM}")
    axis = np.asarray(nv_axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    nv_ops = spin_operators(1.0)
    e_ops = [np.kron(op, np.eye(system.nucleus.dim, dtype=complex)) for op in spin_operators(system.electron)]
    h = np.zeros((joint_dim, joint_dim), dtype=complex)
    if secular:
        nv_sz = sum(axis[a] * nv_ops[a] for a in range(3))
        row = axis @ d_ab
        for b in range(3):
            if row[b] != 0.0:
                h += row[b] * np.kron(nv_sz, e_ops[b])
    else:
        for a in range(3):
            for b in range(3):
                if d_ab[a, b] != 0.0:
                    h += d_ab[a, b] * np.kron(nv_ops[a], e_ops[b])
    return h


# --- sequence runner ---


def run_sequence(
    seq: PulseSequence,
    nv: NVCenter | None = None,
    channels: RelaxationChannels | None = None,
    system: TargetSpinSystem | None = None,
    coupling: DipolarCoupling | None = None,
    return_state: bool = False,
):
    """Run a pulse sequence and return the normalized photoluminescence.

    With a target system and coupling the simulation runs on the joint space
    (NV x electron x nucleus); the target evolves under its own zero-field
    Hamiltonian plus the NV-secular dipolar coupling throughout.  Readout is
    the NV |0> population, which for the locking sequence equals 1 - P with P
    the population that left the locked dressed state.
    """
    nv = nv or NVCenter()
    target_dim = system.dim if system is not None else 1
    if system is not None and coupling is None:
        raise ValueError("a target system requires a coupling geometry")
    h_static = np.zeros((3 * target_dim, 3 * target_dim), dtype=complex)
    if system is not None:
        h_static += np.kron(np.eye(3, dtype=complex), hyperfine_hamiltonian(system))
        h_static += dipolar_hamiltonian(coupling, system)

    electron_dim = system.electron.dim if system is not None else 2
    rho = polarized_state(target_dim)
    for seg in seq.segments[1:-1]:
        if isinstance(seg, MwPulse):
            drive = DriveField(seg.power_mhz, seg.phase)
            h = np.kron(rotating_frame_hamiltonian(drive, nv.d_mhz), np.eye(target_dim, dtype=complex))
            h = h + h_static
            locking = drive.phase_rad == 0.0 and seg.power_mhz > 0
            ops = collapse_operators(
                channels,
                target_dim,
                lock_omega_mhz=seg.power_mhz if locking else None,
                driven=True,
                target_electron_dim=electron_dim,
            )
            rho = propagate(rho, h, seg.duration_us, ops)
        elif isinstance(seg, Wait):
            ops = collapse_operators(
                channels, target_dim, driven=False, target_electron_dim=electron_dim
            )
            rho = propagate(rho, h_static, seg.duration_us, ops)
    pl = nv_population(rho, level=1)
    if return_state:
        return pl, rho
    return pl


@dataclass(frozen=True)
class EnsembleModulation:
    """Relative drive amplitudes and weights over NV orientation families,
    producing the slow beat envelope on Rabi traces."""

    scales: tuple[float, ...]
    weights: tuple[float, ...]

    def __post_init__(self):
        if len(self.scales) != len(self.weights) or not self.scales:
            raise ValueError("scales and weights must be equal-length and non-empty")
        if any(w < 0 for w in self.weights) or sum(self.weights) <= 0:
            raise ValueError("weights must be non-negative with a positive sum")


def rabi_trace(
    omega_mhz: float,
    durations_us: np.ndarray,
    ensemble_modulation: EnsembleModulation | None = None,
    nv: NVCenter | None = None,
    channels: RelaxationChannels | None = None,
) -> np.ndarray:
    """Normalized PL versus drive duration; oscillates at the Rabi frequency.

    The optional ensemble modulation averages traces over scaled drive
    amplitudes, one per NV orientation family.
    """
    if omega_mhz <= 0:
        raise ValueError("Rabi power must be positive")
    durations = np.asarray(durations_us, dtype=float)
    if ensemble_modulation is None:
        members = [(1.0, omega_mhz)]
    else:
        wsum = sum(ensemble_modulation.weights)
        members = [
            (w / wsum, s * omega_mhz)
            for s, w in zip(ensemble_modulation.scales, ensemble_modulation.weights)
        ]
    out = np.zeros_like(durations)
    for weight, om in members:
        trace = np.array(
            [run_sequence(rabi_sequence(om, t), nv, channels) for t in durations]
        )
        out += weight * trace
    return out


def spinlock_trace(
    lock_omega_mhz: float,
    taus_us: np.ndarray,
    nv: NVCenter | None = None,
    channels: RelaxationChannels | None = None,
    pulse_omega_mhz: float | None = None,
) -> np.ndarray:
    """Normalized PL versus locking duration (the spin-locking decay curve)."""
    return np.array(
        [
            run_sequence(spinlock_sequence(lock_omega_mhz, t, pulse_omega_mhz), nv, channels)
            for t in np.asarray(taus_us, dtype=float)
        ]
    )


def flip_flop_transfer(
    nv: NVCenter,
    system: TargetSpinSystem,
    coupling: DipolarCoupling,
    omega_mhz: float,
    tau_us: float,
    channels: RelaxationChannels | None = None,
    pulse_omega_mhz: float | None = None,
) -> float:
    """Locked-state leakage P for the full locking sequence on the joint space.

    P peaks when the drive power matches twice a target transition frequency,
    within the dephasing linewidth.
    """
    seq = spinlock_sequence(omega_mhz, tau_us, pulse_omega_mhz)
    pl = run_sequence(seq, nv, channels, system=system, coupling=coupling)
    return 1.0 - pl
