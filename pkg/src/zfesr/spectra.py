"""Spectrum synthesis and inversion: power-swept zero-field spectra, DEER
frequency-swept spectra, surface-bath background lines, baseline calibration,
Gaussian peak fitting and hyperfine extraction.

Spectra are normalized photoluminescence versus a MHz axis (drive power for
the zero-field sweep, probe frequency for DEER).  Resonances are dips below
the unit baseline; depths are stored positive.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks, peak_widths, savgol_filter

from . import constants, detection
from .dynamics import (
    DipolarCoupling,
    NVCenter,
    RelaxationChannels,
    T1RhoModel,
    flip_flop_transfer,
)
from .spincore import (
    SpinSpecies,
    TargetSpinSystem,
    HyperfineTensor,
    zero_field_transitions,
    diagonalize,
    hyperfine_hamiltonian,
    electron_operators,
    spin_operators,
    transition_table,
)

GAUSS_SIGMA_PER_FWHM = 1.0 / np.sqrt(8.0 * np.log(2.0))

DEFAULT_FWHM_MHZ = 8.0
DEFAULT_ZF_AXIS = (2.0, 400.0, 1.0)


class FitError(RuntimeError):
    """Raised when a nonlinear fit fails to converge."""


class InconsistentPeaksError(ValueError):
    """Raised when measured peak centers cannot come from one hyperfine tensor."""


@dataclass(frozen=True)
class Spectrum:
    """A swept measurement: axis (MHz), normalized PL values, optional s.e.m."""

    axis_mhz: np.ndarray
    values: np.ndarray
    sem: np.ndarray | None = None
    calibrated: bool = False

    def __post_init__(self):
        axis = np.asarray(self.axis_mhz, dtype=float)
        vals = np.asarray(self.values, dtype=float)
        if axis.shape != vals.shape or axis.ndim != 1:
            raise ValueError("axis and values must be 1-d arrays of equal length")
        if len(axis) > 1 and np.any(np.diff(axis) <= 0):
            raise ValueError("axis must be strictly increasing")
        if self.sem is not None and np.asarray(self.sem).shape != axis.shape:
            raise ValueError("sem length must match the axis")
        object.__setattr__(self, "axis_mhz", axis)
        object.__setattr__(self, "values", vals)
        if self.sem is not None:
            object.__setattr__(self, "sem", np.asarray(self.sem, dtype=float))

    @property
    def grid_step(self) -> float:
        return float(np.min(np.diff(self.axis_mhz))) if len(self.axis_mhz) > 1 else 0.0


def write_spectrum_csv(path, spec: Spectrum, axis_name: str = "axis_MHz") -> None:
    cols = f"{axis_name},pl" + (",sem" if spec.sem is not None else "")
    lines = [f"# columns: {cols}", cols]
    for k in range(len(spec.axis_mhz)):
        row = f"{spec.axis_mhz[k]:.12g},{spec.values[k]:.12g}"
        if spec.sem is not None:
            row += f",{spec.sem[k]:.12g}"
        lines.append(row)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_spectrum_csv(path) -> Spectrum:
    axis, vals, sems = [], [], []
    with open(path) as fh:
        for raw in fh:
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            try:
                nums = [float(p) for p in parts]
            except ValueError:
                continue  # header row
            axis.append(nums[0])
            vals.append(nums[1])
            if len(nums) > 2:
                sems.append(nums[2])
    sem = np.array(sems) if len(sems) == len(axis) and sems else None
    return Spectrum(np.array(axis), np.array(vals), sem)


@dataclass(frozen=True)
class PeakModel:
    """One Gaussian resonance dip."""

    center_mhz: float
    fwhm_mhz: float
    depth: float

    def __post_init__(self):
        if self.fwhm_mhz <= 0:
            raise ValueError("fwhm must be positive")
        if not 0.0 < self.depth < 1.0:
            raise ValueError("depth must lie in (0, 1)")


def _gaussian_dip(axis, center, fwhm, depth):
    sigma = max(fwhm * GAUSS_SIGMA_PER_FWHM, 1e-12)
    return depth * np.exp(-0.5 * ((axis - center) / sigma) ** 2)


def apply_shot_noise(spec: Spectrum, repetitions: int, rng: np.random.Generator) -> Spectrum:
    """Binomial photon shot noise for the given per-point repetition count,
    with the resulting standard error of the mean attached."""
    if repetitions <= 0:
        return spec
    p = np.clip(spec.values, 0.0, 1.0)
    values = rng.binomial(repetitions, p) / repetitions
    sem = np.sqrt(np.clip(values * (1.0 - values), 0.0, None) / repetitions)
    return Spectrum(spec.axis_mhz, values, sem, calibrated=spec.calibrated)


@dataclass(frozen=True)
class HyperfineEstimate:
    """Principal values recovered from peak centers, with propagated errors."""

    model: str
    a_perp_mhz: float | None = None
    a_zz_mhz: float | None = None
    a_perp_err_mhz: float | None = None
    a_zz_err_mhz: float | None = None
    axx_mhz: float | None = None
    ayy_mhz: float | None = None
    azz_mhz: float | None = None
    errors_mhz: tuple | None = None
    residual_mhz: float = 0.0
    used_classes: tuple = ()

    def report(self) -> dict:
        out = {"model": self.model, "residual_MHz": self.residual_mhz}
        if self.a_perp_mhz is not None:
            out["A_perp_MHz"] = self.a_perp_mhz
            out["A_perp_err_MHz"] = self.a_perp_err_mhz
            out["A_zz_MHz"] = self.a_zz_mhz
            out["A_zz_err_MHz"] = self.a_zz_err_mhz
        if self.axx_mhz is not None:
            out["Axx_MHz"] = self.axx_mhz
            out["Ayy_MHz"] = self.ayy_mhz
            out["Azz_MHz"] = self.azz_mhz
        return out


@dataclass(frozen=True)
class FitResult:
    """Gaussian peak fit output, optionally carrying the hyperfine inversion."""

    peaks: tuple[PeakModel, ...]
    residual_norm: float
    degenerate: bool
    hyperfine: HyperfineEstimate | None = None

    def centers(self) -> np.ndarray:
        return np.array([p.center_mhz for p in self.peaks])

    def center_sigmas(self) -> np.ndarray:
        """Center uncertainties: half the fitted linewidths."""
        return np.array([p.fwhm_mhz / 2.0 for p in self.peaks])

    def report(self) -> dict:
        out = {
            "peaks": [
                {"center_MHz": p.center_mhz, "fwhm_MHz": p.fwhm_mhz, "depth": p.depth}
                for p in self.peaks
            ],
            "residual_norm": self.residual_norm,
            "degenerate": self.degenerate,
        }
        if self.hyperfine is not None:
            out["hyperfine"] = self.hyperfine.report()
        return out


# --- ensembles ---


@dataclass(frozen=True)
class SpinPlacement:
    """One target spin: distance, tensor orientation and separation direction."""

    r_nm: float
    euler_rad: tuple[float, float, float]
    direction: tuple[float, float, float]


@dataclass(frozen=True)
class EnsembleSpec:
    """Sampling rules for a set of target spins around the sensor.

    orientation_rule "fixed" cycles through `orientations`; "random" draws
    Haar-uniform rotations.  radial_rule "fixed" places all spins at r_nm;
    "annulus" draws areal-uniform radii in [r_min_nm, r_max_nm].  Separation
    directions are fixed or drawn uniformly on the sphere.
    """

    count: int = 1
    orientation_rule: str = "fixed"
    orientations: tuple = ((0.0, 0.0, 0.0),)
    radial_rule: str = "fixed"
    r_nm: float = 5.0
    r_min_nm: float = 5.0
    r_max_nm: float = 15.0
    direction_rule: str = "fixed"
    direction: tuple = (0.0, 0.0, 1.0)
    seed: int | None = None

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("ensemble count must be >= 1")
        if self.orientation_rule not in ("fixed", "random"):
            raise ValueError("orientation_rule must be 'fixed' or 'random'")
        if self.radial_rule not in ("fixed", "annulus"):
            raise ValueError("radial_rule must be 'fixed' or 'annulus'")
        if self.direction_rule not in ("fixed", "random"):
            raise ValueError("direction_rule must be 'fixed' or 'random'")

    def sample(self, rng: np.random.Generator | None = None) -> list[SpinPlacement]:
        rng = rng or np.random.default_rng(self.seed)
        out = []
        for k in range(self.count):
            if self.orientation_rule == "random":
                euler = (
                    float(rng.uniform(0, 2 * np.pi)),
                    float(np.arccos(rng.uniform(-1, 1))),
                    float(rng.uniform(0, 2 * np.pi)),
                )
            else:
                euler = tuple(float(a) for a in self.orientations[k % len(self.orientations)])
            if self.radial_rule == "annulus":
                u = rng.uniform()
                r = float(np.sqrt(self.r_min_nm**2 + u * (self.r_max_nm**2 - self.r_min_nm**2)))
            else:
                r = self.r_nm
            if self.direction_rule == "random":
                v = rng.normal(size=3)
                v /= np.linalg.norm(v)
                direction = tuple(float(x) for x in v)
            else:
                direction = tuple(float(x) for x in self.direction)
            out.append(SpinPlacement(r_nm=r, euler_rad=euler, direction=direction))
        return out


def nitroxide_system(euler_rad=(0.0, 0.0, 0.0), gamma_mhz_per_g: float = 2.803) -> TargetSpinSystem:
    """Nitroxide radical: S=1/2 electron, 14N (I=1) nucleus, axial tensor."""
    return TargetSpinSystem(
        electron=SpinSpecies(0.5, gamma_mhz_per_g),
        nucleus=SpinSpecies(1.0),
        hyperfine=HyperfineTensor(constants.NITROXIDE_A_MHZ, tuple(euler_rad)),
    )


# --- transition weights ---


def _dipolar_row(direction) -> np.ndarray:
    """NV-secular dipolar angular coefficients (d_x, d_y, d_z) for a unit separation."""
    n = np.asarray(direction, dtype=float)
    n = n / np.linalg.norm(n)
    return np.array([-3.0 * n[2] * n[0], -3.0 * n[2] * n[1], 1.0 - 3.0 * n[2] ** 2])


def _paper_weight(row) -> float:
    """Per-transition weight from the orientation-averaged constants: the
    z-driven class carries 3/4, each transverse-driven transition 5/8 (the
    degenerate pair of an axial tensor then totals 5/4)."""
    if row.weight_z >= row.weight_x + row.weight_y:
        return constants.ETA_SQ_MIDDLE
    return constants.ETA_SQ_LEFT_RIGHT / 2.0


def _geometric_weight(row, direction) -> float:
    """Squared NV-secular coupling coefficient for one transition and geometry,
    normalized so spin-element magnitudes of 1/2 give (d . u)^2."""
    d = _dipolar_row(direction)
    amp = d[0] * row.element_x + d[1] * row.element_y + d[2] * row.element_z
    return 4.0 * abs(amp) ** 2


# --- zero-field spectrum ---


def zf_spectrum(
    system: TargetSpinSystem,
    ensemble: EnsembleSpec | list[SpinPlacement] | None,
    channels: RelaxationChannels | None,
    tau_us: float,
    axis_mhz: np.ndarray,
    mode: str = "fast",
    weight_mode: str = "paper",
    fwhm_mhz: float = DEFAULT_FWHM_MHZ,
    contrast: float | None = None,
    t1rho_model: T1RhoModel | None = None,
    nuisance_peaks: tuple[PeakModel, ...] = (),
    background: "BackgroundModel | None" = None,
    repetitions: int = 0,
    rng: np.random.Generator | None = None,
    nv: NVCenter | None = None,
) -> Spectrum:
    """Power-swept zero-field spectrum of target spins around the sensor.

    Fast mode places Gaussian dips at twice each observable transition
    frequency, with per-spin strengths C0^2 eta^2 tau / (8 Gamma r^6) and the
    power-dependent locking baseline exp(-tau / T1rho(power)) multiplied in.
    weight_mode "paper" uses the orientation-averaged class constants;
    "geometric" evaluates the squared secular coupling coefficient for each
    member's actual direction and orientation.  Exact mode runs the full
    joint-space locking simulation per axis point.

    contrast, when given, rescales the summed dips so the deepest feature has
    that depth.  repetitions > 0 adds photon shot noise and a sem column.
    """
    axis = np.asarray(axis_mhz, dtype=float)
    if axis.size == 0:
        raise ValueError("axis must not be empty")
    if tau_us <= 0:
        raise ValueError("driving time must be positive")
    if mode not in ("fast", "exact"):
        raise ValueError("mode must be 'fast' or 'exact'")
    if weight_mode not in ("paper", "geometric"):
        raise ValueError("weight_mode must be 'paper' or 'geometric'")
    channels = channels or RelaxationChannels(nv_t1rho_us=70.0, target_gamma_mhz=10.0)
    gamma = channels.target_gamma_mhz if channels.target_gamma_mhz else 10.0
    if t1rho_model is None:
        t1rho_model = T1RhoModel(constant_us=channels.nv_t1rho_us or 70.0)
    if isinstance(ensemble, EnsembleSpec):
        members = ensemble.sample(rng)
    else:
        members = list(ensemble) if ensemble is not None else []

    baseline = np.exp(-tau_us / np.asarray(t1rho_model(axis), dtype=float))

    if mode == "exact":
        values = baseline.copy()
        nv = nv or NVCenter()
        for member in members:
            sys_m = system.rotated(member.euler_rad)
            coupling = DipolarCoupling.at_distance(member.r_nm, member.direction)
            for k, om in enumerate(axis):
                ch = replace(channels, nv_t1rho_us=float(t1rho_model(om)))
                p = flip_flop_transfer(nv, sys_m, coupling, om, tau_us, ch)
                base = np.exp(-tau_us / float(t1rho_model(om)))
                values[k] *= (1.0 - p) / base if base > 0 else 1.0
        values = np.clip(values, 0.0, 1.0)
    else:
        dips = np.zeros_like(axis)
        for member in members:
            table = zero_field_transitions(system.rotated(member.euler_rad))
            scale = detection.per_spin_signal(
                member.r_nm,
                detection.DetectionAreaParams(
                    eta_sq_mean=1.0, gamma_p1_per_us=gamma, tau_us=tau_us
                ),
            )
            for row in table.observable_rows():
                w = (
                    _paper_weight(row)
                    if weight_mode == "paper"
                    else _geometric_weight(row, member.direction)
                )
                dips += _gaussian_dip(axis, 2.0 * row.frequency_mhz, fwhm_mhz, scale * w)
        if contrast is not None and np.max(dips) > 0:
            dips *= contrast / np.max(dips)
        for peak in nuisance_peaks:
            dips += _gaussian_dip(axis, peak.center_mhz, peak.fwhm_mhz, peak.depth)
        if background is not None:
            dips += background_lines(background, "zf", 0.0, axis).values
        values = np.clip(baseline * (1.0 - dips), 0.0, 1.0)

    spec = Spectrum(axis, values)
    if repetitions > 0:
        spec = apply_shot_noise(spec, repetitions, rng or np.random.default_rng())
    return spec


# --- DEER spectrum ---


def deer_spectrum(
    system: TargetSpinSystem,
    b_field_g: float,
    axis_mhz: np.ndarray,
    orientations: list[tuple] | None = None,
    ensemble: EnsembleSpec | list[SpinPlacement] | None = None,
    fwhm_mhz: float = DEFAULT_FWHM_MHZ,
    depth: float = 0.03,
    background: "BackgroundModel | None" = None,
    repetitions: int = 0,
    rng: np.random.Generator | None = None,
) -> Spectrum:
    """Probe-frequency-swept spectrum with a static field along the NV axis.

    Each member's target Hamiltonian gamma_e B Sz + S . A(theta) . I is
    diagonalized; lines sit at the allowed transition frequencies with
    transverse dipole weights, so positions move with orientation (unlike the
    zero-field case).  The deepest feature is normalized to `depth`.
    """
    if b_field_g <= 0:
        raise ValueError("DEER needs a positive static field")
    axis = np.asarray(axis_mhz, dtype=float)
    if orientations is not None:
        members = [SpinPlacement(5.0, tuple(e), (0.0, 0.0, 1.0)) for e in orientations]
    elif isinstance(ensemble, EnsembleSpec):
        members = ensemble.sample(rng)
    elif ensemble is not None:
        members = list(ensemble)
    else:
        members = [SpinPlacement(5.0, (0.0, 0.0, 0.0), (0.0, 0.0, 1.0))]

    dips = np.zeros_like(axis)
    gamma_e = system.electron.gyromagnetic_mhz_per_g
    for member in members:
        sys_m = system.rotated(member.euler_rad)
        s_ops = electron_operators(sys_m)
        h = hyperfine_hamiltonian(sys_m) + abs(gamma_e) * b_field_g * s_ops[2]
        table = transition_table(diagonalize(h), s_ops)
        for row in table.observable_rows():
            w = row.weight_x + row.weight_y
            if w > 1e-10:
                dips += _gaussian_dip(axis, row.frequency_mhz, fwhm_mhz, w)
    if np.max(dips) > 0:
        dips *= depth / np.max(dips)
    if background is not None:
        dips += background_lines(background, "deer", b_field_g, axis).values
    spec = Spectrum(axis, np.clip(1.0 - dips, 0.0, 1.0))
    if repetitions > 0:
        spec = apply_shot_noise(spec, repetitions, rng or np.random.default_rng())
    return spec


def deer_line_positions(
    system: TargetSpinSystem, b_field_g: float, euler_rad=(0.0, 0.0, 0.0), weight_tol: float = 1e-3
) -> np.ndarray:
    """Transition frequencies with non-negligible transverse weight at field B."""
    sys_m = system.rotated(tuple(euler_rad))
    s_ops = electron_operators(sys_m)
    h = hyperfine_hamiltonian(sys_m) + abs(system.electron.gyromagnetic_mhz_per_g) * b_field_g * s_ops[2]
    table = transition_table(diagonalize(h), s_ops)
    rows = [r for r in table.observable_rows() if r.weight_x + r.weight_y > weight_tol]
    return np.array(sorted(r.frequency_mhz for r in rows))


# --- background ---


@dataclass(frozen=True)
class BackgroundModel:
    """Surface electron-spin bath: a broad line at the free-radical frequency in
    a field, a characterless low-frequency shoulder at zero field.  The
    zero-field shoulder shape is a declared placeholder (exponential by
    default) because only its monotone low-frequency character is known."""

    density_nm2: float = 0.01
    g_factor: float = constants.FREE_ELECTRON_G
    correlation_linewidth_mhz: float = 30.0
    depth: float = 0.01
    zf_shape: str = "exponential"

    def __post_init__(self):
        if self.density_nm2 <= 0 or self.g_factor <= 0 or self.correlation_linewidth_mhz < 0:
            raise ValueError("background parameters must be positive")
        if self.zf_shape not in ("exponential", "lorentzian"):
            raise ValueError("zf_shape must be 'exponential' or 'lorentzian'")


def background_lines(model: BackgroundModel, mode: str, b_field_g: float, axis_mhz) -> Spectrum:
    """Bath contribution: dip depths on the given axis (not baselined).

    DEER mode: one broad Gaussian at g * (Bohr frequency per gauss) * B.
    ZF mode: a monotone shoulder decaying over the correlation linewidth.
    """
    axis = np.asarray(axis_mhz, dtype=float)
    if mode == "deer":
        center = model.g_factor * constants.BOHR_MHZ_PER_G * b_field_g
        vals = _gaussian_dip(axis, center, max(model.correlation_linewidth_mhz, 1e-9), model.depth)
    elif mode == "zf":
        lam = max(model.correlation_linewidth_mhz, 1e-9)
        if model.zf_shape == "exponential":
            vals = model.depth * np.exp(-np.abs(axis) / lam)
        else:
            vals = model.depth / (1.0 + (axis / lam) ** 2)
    else:
        raise ValueError("mode must be 'deer' or 'zf'")
    return Spectrum(axis, vals)


# --- baseline calibration ---


def calibrate_baseline(
    raw: Spectrum,
    t1rho_model: T1RhoModel | None = None,
    tau_us: float | None = None,
) -> Spectrum:
    """Divide out the power-dependent locking baseline so off-peak PL is unity.

    With a T1rho model (and the driving time) the modeled baseline
    exp(-tau/T1rho) is divided out exactly; otherwise a smooth baseline is
    self-calibrated from off-peak regions by iterative dip masking.  Already
    calibrated spectra pass through unchanged, so calibration is idempotent.
    """
    if raw.calibrated:
        return raw
    axis, values = raw.axis_mhz, raw.values
    if t1rho_model is not None:
        if tau_us is None:
            raise ValueError("the modeled baseline needs the driving time tau_us")
        base = np.exp(-tau_us / np.asarray(t1rho_model(axis), dtype=float))
    else:
        base = _self_calibrated_baseline(axis, values)
    sem = raw.sem / base if raw.sem is not None else None
    return Spectrum(axis, values / base, sem, calibrated=True)


def _self_calibrated_baseline(axis, values, degree: int = 3, n_iter: int = 15) -> np.ndarray:
    x = (axis - axis.mean()) / max(axis.std(), 1e-12)
    mask = np.ones(len(axis), dtype=bool)
    fit = np.full_like(values, values.mean())
    for _ in range(n_iter):
        coef = np.polyfit(x[mask], values[mask], degree)
        fit = np.polyval(coef, x)
        resid = values - fit
        sigma = 1.4826 * np.median(np.abs(resid[mask] - np.median(resid[mask])))
        new_mask = resid > -2.5 * max(sigma, 1e-12)
        if new_mask.sum() < 0.3 * len(axis):
            raise ValueError("no off-peak region to self-calibrate the baseline")
        if np.array_equal(new_mask, mask):
            break
        mask = new_mask
    return fit


# --- Gaussian peak fitting ---


def _peak_fit_model(params, axis):
    vals = np.ones_like(axis)
    for k in range(0, len(params), 3):
        c, w, d = params[k : k + 3]
        vals -= _gaussian_dip(axis, c, w, d)
    return vals


def evaluate_peaks(peaks, axis_mhz) -> np.ndarray:
    """Unit baseline minus the given Gaussian dips, evaluated on an axis."""
    params = np.array([v for p in peaks for v in (p.center_mhz, p.fwhm_mhz, p.depth)])
    return _peak_fit_model(params, np.asarray(axis_mhz, dtype=float))


def _initial_peaks(spec: Spectrum, n_peaks: int, fwhm_guess: float) -> np.ndarray:
    axis, values = spec.axis_mhz, spec.values
    dx = spec.grid_step or 1.0
    window = int(np.clip(2 * round(fwhm_guess / dx / 2) + 1, 5, max(5, len(values) // 2 * 2 - 1)))
    smooth = savgol_filter(values, window, 2) if len(values) > window else values
    dips = np.max(smooth) - smooth
    distance = max(1, int(round(0.8 * fwhm_guess / dx)))
    idx, props = find_peaks(dips, distance=distance, prominence=0.05 * np.max(dips))
    order = np.argsort(props["prominences"])[::-1]
    idx = idx[order][:n_peaks]
    params = []
    for i in sorted(idx):
        try:
            widths = peak_widths(dips, [i], rel_height=0.5)[0]
            fwhm = float(np.clip(widths[0] * dx, dx, axis[-1] - axis[0]))
        except Exception:
            fwhm = fwhm_guess
        params.extend([axis[i], fwhm, max(dips[i], 1e-4)])
    # Not enough detected minima: place remaining starts at the deepest
    # residual points away from already chosen centers.
    while len(params) < 3 * n_peaks:
        model = _peak_fit_model(np.array(params), axis) if params else np.ones_like(axis)
        resid = model - values
        for c in params[0::3]:
            resid[np.abs(axis - c) < fwhm_guess] = -np.inf
        i = int(np.argmax(resid))
        params.extend([axis[i], fwhm_guess, max(resid[i], 1e-4)])
    return np.array(params)


def fit_gaussian_peaks(
    spec: Spectrum,
    n_peaks: int,
    init: list[PeakModel] | None = None,
    fwhm_guess: float = DEFAULT_FWHM_MHZ,
    max_nfev: int = 5000,
) -> FitResult:
    """Nonlinear least squares of a unit baseline minus n Gaussian dips.

    Default initialization takes the n deepest local minima of the smoothed
    spectrum.  Residuals are weighted by the s.e.m. column when present.
    Overlapping or vanishing fitted peaks set the `degenerate` flag.
    """
    if n_peaks < 1:
        raise ValueError("n_peaks must be >= 1")
    axis, values = spec.axis_mhz, spec.values
    if init is not None:
        if len(init) != n_peaks:
            raise ValueError("init must provide one PeakModel per requested peak")
        p0 = np.array([v for p in init for v in (p.center_mhz, p.fwhm_mhz, p.depth)])
    else:
        p0 = _initial_peaks(spec, n_peaks, fwhm_guess)

    weights = None
    if spec.sem is not None and np.all(spec.sem > 0):
        weights = 1.0 / spec.sem

    def residuals(params):
        r = _peak_fit_model(params, axis) - values
        return r * weights if weights is not None else r

    span = axis[-1] - axis[0]
    lo = np.tile([axis[0], 1e-6, 0.0], n_peaks)
    hi = np.tile([axis[-1], span, 1.0], n_peaks)
    p0 = np.clip(p0, lo + 1e-12, hi - 1e-12)
    result = least_squares(residuals, p0, bounds=(lo, hi), max_nfev=max_nfev)
    if result.status <= 0:
        raise FitError(f"peak fit did not converge: {result.message}")
    params = result.x
    peaks = sorted(
        (
            PeakModel(float(params[k]), float(params[k + 1]), float(min(max(params[k + 2], 1e-12), 1 - 1e-12)))
            for k in range(0, len(params), 3)
        ),
        key=lambda p: p.center_mhz,
    )
    max_depth = max(p.depth for p in peaks)
    degenerate = any(p.depth < 0.01 * max_depth for p in peaks)
    for a, b in zip(peaks, peaks[1:]):
        if b.center_mhz - a.center_mhz < 0.5 * min(a.fwhm_mhz, b.fwhm_mhz):
            degenerate = True
    resid = residuals(params)
    return FitResult(
        peaks=tuple(peaks),
        residual_norm=float(np.sqrt(np.mean(resid**2))),
        degenerate=degenerate,
    )


# --- hyperfine inversion ---

AXIAL_CLASSES = ("left", "middle", "right")

# Resonance power (= 2 * transition frequency) rows in terms of
# (Axx, Ayy, Azz), valid under the ordering 0 < Axx <= Ayy <= Azz.
FULL_MODEL_ROWS = {
    "12": (1.0, 1.0, 0.0),
    "34": (-1.0, 1.0, 0.0),
    "13": (0.0, 1.0, 1.0),
    "24": (0.0, -1.0, 1.0),
    "14": (1.0, 0.0, 1.0),
    "23": (-1.0, 0.0, 1.0),
}


def extract_hyperfine(
    centers_mhz,
    sigmas_mhz=None,
    model: str = "axial",
    classes: tuple | None = None,
    consistency_factor: float = 3.0,
) -> HyperfineEstimate:
    """Invert measured resonance powers into hyperfine principal values.

    Axial model: the three observable powers are (Azz - Aperp, 2 Aperp,
    Aperp + Azz) in ascending order for the physical range Aperp < Azz <
    3 Aperp.  The estimate solves the two lower-power peaks exactly (they
    determine both constants and sit where the locking baseline is
    flattest); the remaining peak only re-checks the sum rule and its
    residual gates the inconsistency error.  Any two labeled peaks determine
    the constants, so two-center input with explicit classes is accepted.

    Full model: three or more centers labeled by level pair ("12", "34",
    "13", "24", "14", "23") are solved by weighted linear least squares for
    (Axx, Ayy, Azz).

    Center uncertainties default to half the default linewidth; reported
    errors are the center uncertainties propagated through the linear map.
    """
    centers = np.atleast_1d(np.asarray(centers_mhz, dtype=float))
    if sigmas_mhz is None:
        sigmas = np.full(len(centers), DEFAULT_FWHM_MHZ / 2.0)
    else:
        sigmas = np.atleast_1d(np.asarray(sigmas_mhz, dtype=float))
        if len(sigmas) != len(centers):
            raise ValueError("sigmas length must match centers")
    if model == "axial":
        return _extract_axial(centers, sigmas, classes, consistency_factor)
    if model == "full":
        return _extract_full(centers, sigmas, classes)
    raise ValueError("model must be 'axial' or 'full'")


def _extract_axial(centers, sigmas, classes, consistency_factor) -> HyperfineEstimate:
    if classes is None:
        if len(centers) != 3:
            raise ValueError("axial inversion without class labels needs exactly 3 centers")
        order = np.argsort(centers)
        centers, sigmas = centers[order], sigmas[order]
        classes = AXIAL_CLASSES
    else:
        classes = tuple(classes)
        if len(classes) != len(centers):
            raise ValueError("classes length must match centers")
        if any(c not in AXIAL_CLASSES for c in classes):
            raise ValueError(f"axial classes must be among {AXIAL_CLASSES}")
        if len(set(classes)) != len(classes):
            raise ValueError("duplicate class labels")
    if len(centers) < 2:
        raise ValueError("axial inversion needs at least 2 peak centers")
    by = dict(zip(classes, zip(centers, sigmas)))

    if "left" in by and "middle" in by:
        (l, sl), (m, sm) = by["left"], by["middle"]
        a_perp = m / 2.0
        a_zz = l + m / 2.0
        a_err = sm / 2.0
        z_err = float(np.hypot(sl, sm / 2.0))
        used = ("left", "middle")
    elif "middle" in by and "right" in by:
        (m, sm), (r, sr) = by["middle"], by["right"]
        a_perp = m / 2.0
        a_zz = r - m / 2.0
        a_err = sm / 2.0
        z_err = float(np.hypot(sr, sm / 2.0))
        used = ("middle", "right")
    else:
        (l, sl), (r, sr) = by["left"], by["right"]
        a_perp = (r - l) / 2.0
        a_zz = (r + l) / 2.0
        a_err = float(np.hypot(sl, sr) / 2.0)
        z_err = a_err
        used = ("left", "right")

    predicted = {"left": a_zz - a_perp, "middle": 2.0 * a_perp, "right": a_perp + a_zz}
    residual = 0.0
    for cls, (c, s) in by.items():
        if cls in used:
            continue
        resid = c - predicted[cls]
        residual = max(residual, abs(resid))
        threshold = consistency_factor * float(np.sqrt(np.sum(sigmas**2)))
        if abs(resid) > threshold:
            raise InconsistentPeaksError(
                f"{cls} peak at {c:g} MHz deviates from the sum rule by {resid:+.3g} MHz "
                f"(threshold {threshold:.3g} MHz)"
            )
    if a_perp <= 0 or a_zz <= 0:
        raise InconsistentPeaksError("inverted principal values are not positive")
    return HyperfineEstimate(
        model="axial",
        a_perp_mhz=float(a_perp),
        a_zz_mhz=float(a_zz),
        a_perp_err_mhz=float(a_err),
        a_zz_err_mhz=float(z_err),
        axx_mhz=float(a_perp),
        ayy_mhz=float(a_perp),
        azz_mhz=float(a_zz),
        residual_mhz=float(residual),
        used_classes=used,
    )


def _extract_full(centers, sigmas, classes) -> HyperfineEstimate:
    if classes is None or len(classes) != len(centers):
        raise ValueError("full-model inversion needs one level-pair label per center")
    if len(centers) < 3:
        raise ValueError("full-model inversion needs at least 3 centers")
    try:
        m = np.array([FULL_MODEL_ROWS[c] for c in classes])
    except KeyError as exc:
        raise ValueError(f"unknown level-pair label {exc.args[0]!r}") from None
    w = np.diag(1.0 / sigmas**2)
    normal = m.T @ w @ m
    if np.linalg.matrix_rank(normal) < 3:
        raise InconsistentPeaksError("labeled centers do not determine all three principal values")
    cov = np.linalg.inv(normal)
    sol = cov @ m.T @ w @ centers
    resid = m @ sol - centers
    errors = np.sqrt(np.diag(cov))
    return HyperfineEstimate(
        model="full",
        a_perp_mhz=None,
        a_zz_mhz=None,
        axx_mhz=float(sol[0]),
        ayy_mhz=float(sol[1]),
        azz_mhz=float(sol[2]),
        errors_mhz=tuple(float(e) for e in errors),
        residual_mhz=float(np.max(np.abs(resid))),
        used_classes=tuple(classes),
    )


def invert_fit(fit: FitResult, model: str = "axial") -> FitResult:
    """Attach the hyperfine inversion of a fit's peak centers to the result."""
    estimate = extract_hyperfine(fit.centers(), fit.center_sigmas(), model=model)
    return replace(fit, hyperfine=estimate)
