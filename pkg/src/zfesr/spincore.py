"""Spin operator algebra, hyperfine Hamiltonians, exact diagonalization and
zero-field transition tables for small electron-nuclear spin systems.

All returned operators are plain complex ndarrays in MHz (ordinary
frequency).  Values are treated as immutable after construction and are safe
to share across threads; every operation here is a pure function of its
inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SUPPORTED_SPINS = (0.5, 1.0, 1.5)

# Joint Hilbert spaces larger than this are rejected (exact dense solvers only).
MAX_JOINT_DIM = 64

HERMITICITY_TOL = 1e-12
DEGENERACY_TOL_MHZ = 1e-6
FORBIDDEN_WEIGHT_TOL = 1e-10


class NonHermitianError(ValueError):
    """Raised when an operator expected to be Hermitian is not."""


@dataclass(frozen=True)
class SpinSpecies:
    """A spin-S particle with its gyromagnetic ratio (MHz per gauss, signed)."""

    spin: float
    gyromagnetic_mhz_per_g: float = 0.0

    def __post_init__(self):
        if self.spin not in SUPPORTED_SPINS:
            raise ValueError(
                f"unsupported spin quantum number {self.spin}; "
                f"supported values are {SUPPORTED_SPINS}"
            )

    @property
    def dim(self) -> int:
        return int(round(2.0 * self.spin + 1.0))


def spin_operators(species: SpinSpecies | float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Angular-momentum operators (Sx, Sy, Sz) for one spin.

    Basis ordering is m = S, S-1, ..., -S.  The matrices satisfy
    [Sx, Sy] = i Sz and Sx^2 + Sy^2 + Sz^2 = S(S+1) * 1.
    """
    s = species.spin if isinstance(species, SpinSpecies) else float(species)
    if s not in SUPPORTED_SPINS:
        raise ValueError(f"unsupported spin quantum number {s}")
    dim = int(round(2 * s + 1))
    m = s - np.arange(dim)
    sz = np.diag(m).astype(complex)
    sp = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        sp[k - 1, k] = np.sqrt(s * (s + 1) - m[k] * (m[k] + 1))
    sx = (sp + sp.conj().T) / 2.0
    sy = (sp - sp.conj().T) / 2.0j
    return sx, sy, sz


def rotation_matrix_zyz(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Rotation matrix for z-y-z Euler angles in radians: Rz(a) Ry(b) Rz(g)."""
    ca, sa = np.cos(alpha), np.sin(alpha)
    cb, sb = np.cos(beta), np.sin(beta)
    cg, sg = np.cos(gamma), np.sin(gamma)
    rz_a = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    ry_b = np.array([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]])
    rz_g = np.array([[cg, -sg, 0.0], [sg, cg, 0.0], [0.0, 0.0, 1.0]])
    return rz_a @ ry_b @ rz_g


@dataclass(frozen=True)
class HyperfineTensor:
    """Hyperfine coupling tensor given by principal values and orientation.

    principal_mhz holds (Axx, Ayy, Azz) in MHz; euler_rad are z-y-z Euler
    angles rotating the principal axis frame into the lab frame.
    """

    principal_mhz: tuple[float, float, float]
    euler_rad: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def principal_matrix(self) -> np.ndarray:
        return np.diag(np.asarray(self.principal_mhz, dtype=float))

    def lab_matrix(self) -> np.ndarray:
        return rotate_tensor(self)

    def rotated(self, euler_rad: tuple[float, float, float]) -> "HyperfineTensor":
        return HyperfineTensor(self.principal_mhz, tuple(float(a) for a in euler_rad))

    @property
    def axial(self) -> bool:
        axx, ayy, _ = self.principal_mhz
        return abs(axx - ayy) < 1e-12


def rotate_tensor(tensor: HyperfineTensor, euler_rad: tuple[float, float, float] | None = None) -> np.ndarray:
    """Tensor in the rotated frame: R diag(A) R^T for z-y-z Euler angles.

    Uses the tensor's own orientation when euler_rad is None.  The result is
    real symmetric with the same eigenvalues as the principal values.
    """
    angles = tensor.euler_rad if euler_rad is None else euler_rad
    r = rotation_matrix_zyz(*angles)
    a = r @ tensor.principal_matrix() @ r.T
    return (a + a.T) / 2.0


@dataclass(frozen=True)
class TargetSpinSystem:
    """Electron spin coupled to one nuclear spin through a hyperfine tensor.

    quadrupole_mhz adds an optional nuclear P * Iz'^2 term along the tensor's
    principal z axis (relevant for I >= 1, default 0).
    """

    electron: SpinSpecies
    nucleus: SpinSpecies
    hyperfine: HyperfineTensor
    quadrupole_mhz: float = 0.0

    @property
    def dim(self) -> int:
        return self.electron.dim * self.nucleus.dim

    def rotated(self, euler_rad: tuple[float, float, float]) -> "TargetSpinSystem":
        return TargetSpinSystem(
            self.electron, self.nucleus, self.hyperfine.rotated(euler_rad), self.quadrupole_mhz
        )


def p1_15n_system(
    a_perp_mhz: float = 114.0,
    a_zz_mhz: float = 159.9,
    euler_rad: tuple[float, float, float] = (0.0, 0.0, 0.0),
) -> TargetSpinSystem:
    """S=1/2 electron with a 15N (I=1/2) nucleus and an axial hyperfine tensor."""
    return TargetSpinSystem(
        electron=SpinSpecies(0.5, 2.803),
        nucleus=SpinSpecies(0.5),
        hyperfine=HyperfineTensor((a_perp_mhz, a_perp_mhz, a_zz_mhz), euler_rad),
    )


def is_hermitian(h: np.ndarray, tol: float = HERMITICITY_TOL) -> bool:
    scale = max(1.0, float(np.max(np.abs(h))) if h.size else 1.0)
    return bool(np.max(np.abs(h - h.conj().T)) <= tol * scale)


def hyperfine_hamiltonian(system: TargetSpinSystem, lab_frame: bool = True) -> np.ndarray:
    """Zero-field Hamiltonian sum_ab A_ab Sa x Ib (+ optional quadrupole term).

    lab_frame=True applies the tensor orientation; False stays in the
    principal axis frame.  Output is Hermitian and traceless in MHz.
    """
    if system.dim > MAX_JOINT_DIM:
        raise ValueError(f"joint dimension {system.dim} exceeds {MAX_JOINT_DIM}")
    a = system.hyperfine.lab_matrix() if lab_frame else system.hyperfine.principal_matrix()
    s_ops = spin_operators(system.electron)
    i_ops = spin_operators(system.nucleus)
    de, dn = system.electron.dim, system.nucleus.dim
    h = np.zeros((de * dn, de * dn), dtype=complex)
    for ia in range(3):
        for ib in range(3):
            if a[ia, ib] != 0.0:
                h += a[ia, ib] * np.kron(s_ops[ia], i_ops[ib])
    if system.quadrupole_mhz != 0.0:
        # Quadrupole axis follows the hyperfine principal z axis.
        r = rotation_matrix_zyz(*system.hyperfine.euler_rad) if lab_frame else np.eye(3)
        u = r[:, 2]
        iz_p = u[0] * i_ops[0] + u[1] * i_ops[1] + u[2] * i_ops[2]
        h += system.quadrupole_mhz * np.kron(np.eye(de), iz_p @ iz_p)
        h -= (np.trace(h) / h.shape[0]) * np.eye(h.shape[0])
    return h


def electron_operators(system: TargetSpinSystem) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Electron spin operators embedded in the electron x nucleus product space."""
    eye_n = np.eye(system.nucleus.dim)
    return tuple(np.kron(op, eye_n) for op in spin_operators(system.electron))


@dataclass(frozen=True)
class EigenSystem:
    """Energies in ascending order (MHz) and unitary matrix of column eigenvectors."""

    energies: np.ndarray
    states: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.energies)

    def degenerate_clusters(self, tol: float = DEGENERACY_TOL_MHZ) -> list[int]:
        """Cluster index per level; levels within tol of each other share a cluster."""
        labels = [0]
        for k in range(1, self.dim):
            if self.energies[k] - self.energies[k - 1] <= tol:
                labels.append(labels[-1])
            else:
                labels.append(labels[-1] + 1)
        return labels


def _fix_phases(states: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude component of each column real positive.

    Ties in magnitude resolve to the lowest index (argmax behavior).
    """
    out = states.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        idx = int(np.argmax(np.abs(col)))
        pivot = col[idx]
        if np.abs(pivot) > 0.0:
            out[:, k] = col * (np.conj(pivot) / np.abs(pivot))
    return out


def diagonalize(h: np.ndarray, tol: float = HERMITICITY_TOL) -> EigenSystem:
    """Exact eigensystem of a Hermitian matrix with a deterministic phase convention."""
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("Hamiltonian must be a square matrix")
    if not is_hermitian(h, tol):
        raise NonHermitianError("matrix is not Hermitian within tolerance")
    energies, states = np.linalg.eigh((h + h.conj().T) / 2.0)
    return EigenSystem(energies=energies, states=_fix_phases(states))


# Eigenstates of the diagonal-tensor S=1/2, I=1/2 Hamiltonian: the singlet,
# the symmetric combination and the two up-up/down-down combinations, in the
# basis (uu, ud, du, dd) with the electron first.
_SQ2 = 1.0 / np.sqrt(2.0)
_HALF_HALF_STATES = np.array(
    [
        [0.0, 0.0, _SQ2, _SQ2],
        [_SQ2, _SQ2, 0.0, 0.0],
        [-_SQ2, _SQ2, 0.0, 0.0],
        [0.0, 0.0, -_SQ2, _SQ2],
    ]
)


def analytic_half_half_eigensystem(tensor: HyperfineTensor) -> EigenSystem:
    """Closed-form eigensystem for S=1/2, I=1/2 in the principal axis frame.

    Energies are the four quarter-sum combinations of the principal values;
    states are the fixed singlet/triplet-like combinations, returned sorted
    ascending in energy.
    """
    axx, ayy, azz = tensor.principal_mhz
    energies = np.array(
        [
            0.25 * (-axx - ayy - azz),
            0.25 * (axx + ayy - azz),
            0.25 * (-axx + ayy + azz),
            0.25 * (axx - ayy + azz),
        ]
    )
    order = np.argsort(energies, kind="stable")
    states = _HALF_HALF_STATES[:, order].astype(complex)
    return EigenSystem(energies=energies[order], states=_fix_phases(states))


@dataclass(frozen=True)
class TransitionRow:
    """One level pair with its frequency (MHz) and squared electron dipole elements."""

    i: int
    j: int
    frequency_mhz: float
    weight_x: float
    weight_y: float
    weight_z: float
    element_x: complex
    element_y: complex
    element_z: complex
    forbidden: bool
    intra_degenerate: bool

    @property
    def total_weight(self) -> float:
        return self.weight_x + self.weight_y + self.weight_z

    @property
    def observable(self) -> bool:
        return not self.forbidden and not self.intra_degenerate


@dataclass(frozen=True)
class TransitionTable:
    """All level pairs of an eigensystem with magnetic dipole weights."""

    rows: tuple[TransitionRow, ...]
    energies: np.ndarray = field(repr=False, default=None)

    def observable_rows(self) -> list[TransitionRow]:
        return [r for r in self.rows if r.observable]

    def distinct_frequencies(self, tol: float = DEGENERACY_TOL_MHZ) -> list[tuple[float, float]]:
        """Observable frequencies merged within tol, with summed total weights."""
        rows = sorted(self.observable_rows(), key=lambda r: r.frequency_mhz)
        merged: list[tuple[float, float]] = []
        for r in rows:
            if merged and abs(r.frequency_mhz - merged[-1][0]) <= tol:
                f0, w0 = merged[-1]
                merged[-1] = (f0, w0 + r.total_weight)
            else:
                merged.append((r.frequency_mhz, r.total_weight))
        return merged


def transition_table(
    eig: EigenSystem,
    ops: tuple[np.ndarray, np.ndarray, np.ndarray],
    degeneracy_tol: float = DEGENERACY_TOL_MHZ,
    weight_tol: float = FORBIDDEN_WEIGHT_TOL,
) -> TransitionTable:
    """Table of all level pairs i<j with frequencies and dipole weights.

    ops are the electron spin operators on the same space as the eigensystem.
    Pairs inside a degenerate cluster are marked intra_degenerate and excluded
    from observable spectra; pairs whose x, y and z weights all fall below
    weight_tol are flagged forbidden.
    """
    dim = eig.dim
    if any(op.shape != (dim, dim) for op in ops):
        raise ValueError("operator dimensions do not match the eigensystem")
    clusters = eig.degenerate_clusters(degeneracy_tol)
    v = eig.states
    elements = [v.conj().T @ op @ v for op in ops]
    rows = []
    for i in range(dim):
        for j in range(i + 1, dim):
            ex, ey, ez = (el[j, i] for el in elements)
            wx, wy, wz = abs(ex) ** 2, abs(ey) ** 2, abs(ez) ** 2
            rows.append(
                TransitionRow(
                    i=i,
                    j=j,
                    frequency_mhz=float(eig.energies[j] - eig.energies[i]),
                    weight_x=float(wx),
                    weight_y=float(wy),
                    weight_z=float(wz),
                    element_x=complex(ex),
                    element_y=complex(ey),
                    element_z=complex(ez),
                    forbidden=bool(max(wx, wy, wz) < weight_tol),
                    intra_degenerate=clusters[i] == clusters[j],
                )
            )
    return TransitionTable(rows=tuple(rows), energies=eig.energies)


def zero_field_transitions(system: TargetSpinSystem) -> TransitionTable:
    """Transition table of a target system's zero-field Hamiltonian."""
    eig = diagonalize(hyperfine_hamiltonian(system))
    return transition_table(eig, electron_operators(system))
