"""Command-line interface: config-driven runs of the simulation and analysis
pipeline with deterministic CSV/JSON outputs and gnuplot-ready data files.

Subcommands: rabi, spinlock, zf-sweep, deer, fit, invert, budget, peaks.
Every run writes a data file (CSV or JSON per --format), a run report JSON,
a two-column .dat plot file and a small gnuplot script.  With a fixed config
and seed the data files are byte-identical across runs.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, detection, spectra
from .config import (
    ConfigError,
    ExperimentConfig,
    axis_from_range,
    default_config_text,
    parse_config_text,
)
from .dressed import NVCenter, distinct_resonance_powers, linewidth_budget
from .dynamics import (
    MwPulse,
    Polarize,
    PulseSequence,
    Readout,
    RelaxationChannels,
    T1RhoModel,
    Wait,
    rabi_trace,
    run_sequence,
    spinlock_trace,
)
from .spincore import HyperfineTensor, SpinSpecies, TargetSpinSystem, zero_field_transitions

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_VALIDATION = 3
EXIT_IO = 4


def build_system(cfg: ExperimentConfig) -> TargetSpinSystem:
    t = cfg.target
    euler = tuple(math.radians(a) for a in t.orientation_deg)
    return TargetSpinSystem(
        electron=SpinSpecies(t.electron_spin, t.gamma_mhz_per_g),
        nucleus=SpinSpecies(t.nuclear_spin),
        hyperfine=HyperfineTensor(tuple(t.a_principal_mhz), euler),
        quadrupole_mhz=t.quadrupole_mhz,
    )


def build_nv(cfg: ExperimentConfig) -> NVCenter:
    return NVCenter(
        d_mhz=cfg.nv.d_mhz,
        gamma_mhz_per_g=cfg.nv.gamma_mhz_per_g,
        t2star_us=cfg.nv.t2star_us,
        t1rho_us=cfg.nv.t1rho_us,
    )


def build_channels(cfg: ExperimentConfig) -> RelaxationChannels:
    return RelaxationChannels(
        nv_t1rho_us=cfg.nv.t1rho_us,
        nv_t2star_us=cfg.nv.t2star_us,
        target_gamma_mhz=1.0 / cfg.target.t2star_us,
    )


def build_ensemble(cfg: ExperimentConfig) -> spectra.EnsembleSpec:
    e = cfg.ensemble
    return spectra.EnsembleSpec(
        count=e.count,
        orientation_rule=e.orientation,
        orientations=tuple(tuple(math.radians(a) for a in t) for t in e.orientations_deg),
        radial_rule=e.radial,
        r_nm=e.r_nm,
        r_min_nm=e.r_min_nm,
        r_max_nm=e.r_max_nm,
        direction_rule=e.direction_rule,
        direction=tuple(e.direction),
        seed=cfg.noise.seed,
    )


def build_t1rho(cfg: ExperimentConfig) -> T1RhoModel:
    if cfg.sweep.t1rho_table_us is not None:
        xs = [p[0] for p in cfg.sweep.t1rho_table_us]
        ys = [p[1] for p in cfg.sweep.t1rho_table_us]
        return T1RhoModel(table=(xs, ys))
    return T1RhoModel(constant_us=cfg.nv.t1rho_us)


# --- output emission ---


def _fmt(x) -> str:
    return f"{x:.12g}"


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.bool_):
        return bool(obj)
    return str(obj)


def emit_table(path: Path, header: list[str], rows: list[tuple]) -> None:
    lines = ["# columns: " + ", ".join(header), ",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def emit_plot_files(stem: Path, x, y, xlabel: str, ylabel: str) -> list[Path]:
    dat = stem.with_suffix(".dat")
    gp = stem.with_suffix(".gp")
    lines = [f"# {xlabel}  {ylabel}"]
    lines += [f"{_fmt(float(a))}  {_fmt(float(b))}" for a, b in zip(x, y)]
    dat.write_text("\n".join(lines) + "\n")
    gp.write_text(
        "\n".join(
            [
                f'set xlabel "{xlabel}"',
                f'set ylabel "{ylabel}"',
                "set grid",
                f'plot "{dat.name}" using 1:2 with lines notitle',
                "pause -1",
            ]
        )
        + "\n"
    )
    return [dat, gp]


class Emitter:
    """Writes the per-subcommand artifact set with deterministic names."""

    def __init__(self, out_dir: Path, subcommand: str, digest: str, fmt: str, mkdir: bool = True):
        if not out_dir.exists():
            if mkdir:
                out_dir.mkdir(parents=True, exist_ok=True)
            else:
                raise FileNotFoundError(f"output directory {out_dir} does not exist")
        self.out_dir = out_dir
        self.stem = out_dir / f"{subcommand}-{digest}"
        self.fmt = fmt
        self.outputs: list[str] = []
        self.t0 = time.perf_counter()

    def data_spectrum(self, spec: spectra.Spectrum, axis_name: str) -> None:
        if self.fmt == "json":
            path = self.stem.with_suffix(".json")
            payload = {
                axis_name: [float(v) for v in spec.axis_mhz],
                "pl": [float(v) for v in spec.values],
            }
            if spec.sem is not None:
                payload["sem"] = [float(v) for v in spec.sem]
            path.write_text(json.dumps(payload, indent=1) + "\n")
        else:
            path = self.stem.with_suffix(".csv")
            spectra.write_spectrum_csv(path, spec, axis_name=axis_name)
        self.outputs.append(str(path))
        self.outputs += [
            str(p)
            for p in emit_plot_files(self.stem, spec.axis_mhz, spec.values, axis_name, "normalized_pl")
        ]

    def data_table(self, header: list[str], rows: list[tuple], plot_cols: tuple[int, int] | None = None) -> None:
        if self.fmt == "json":
            path = self.stem.with_suffix(".json")
            payload = [dict(zip(header, row)) for row in rows]
            path.write_text(json.dumps(payload, indent=1, default=_json_default) + "\n")
        else:
            path = self.stem.with_suffix(".csv")
            emit_table(path, header, rows)
        self.outputs.append(str(path))
        if plot_cols is not None and rows:
            x = [row[plot_cols[0]] for row in rows]
            y = [row[plot_cols[1]] for row in rows]
            self.outputs += [
                str(p) for p in emit_plot_files(self.stem, x, y, header[plot_cols[0]], header[plot_cols[1]])
            ]

    def report(self, cfg: ExperimentConfig, subcommand: str, parameters: dict, results: dict) -> Path:
        path = Path(str(self.stem) + "-report.json")
        payload = {
            "subcommand": subcommand,
            "config_digest": cfg.digest(),
            "parameters": parameters,
            "results": results,
            "outputs": self.outputs,
            "timing_s": round(time.perf_counter() - self.t0, 6),
            "versions": {
                "zfesr": __version__,
                "numpy": np.__version__,
                "python": sys.version.split()[0],
            },
        }
        path.write_text(json.dumps(payload, indent=1, default=_json_default) + "\n")
        return path


# --- subcommand handlers ---


def cmd_peaks(cfg: ExperimentConfig, args, emitter: Emitter) -> dict:
    system = build_system(cfg)
    table = zero_field_transitions(system)
    lines = distinct_resonance_powers(table)
    rows = [(p / 2.0, p, w) for p, w in lines]
    emitter.data_table(["frequency_MHz", "power_MHz", "weight"], rows, plot_cols=(1, 2))
    budget = linewidth_budget(build_nv(cfg), cfg.target.t2star_us)
    return {
        "transition_frequencies_MHz": [r[0] for r in rows],
        "resonance_powers_MHz": [r[1] for r in rows],
        "weights": [r[2] for r in rows],
        "dephasing_linewidth_MHz": budget.dephasing_mhz,
    }


def cmd_budget(cfg: ExperimentConfig, args, emitter: Emitter) -> dict:
    b = cfg.budget
    r0 = args.r0 if args.r0 is not None else b.r0_nm
    contrast = args.contrast if args.contrast is not None else b.contrast
    params = detection.DetectionAreaParams(
        areal_density_nm2=b.areal_density_nm2,
        gamma_p1_per_us=b.gamma_p1_per_us,
        tau_us=b.tau_us,
        r0_nm=r0,
    )
    rows = detection.signal_budget(params, r0_nm=r0, contrast=contrast)
    table = [
        (
            r.peak_class,
            r.eta_sq,
            r.outer_signal,
            100.0 * r.outer_signal,
            r.dominance if r.dominance is not None else float("nan"),
        )
        for r in rows
    ]
    emitter.data_table(["peak", "eta_sq", "outer_signal", "outer_signal_percent", "dominance"], table)
    count = detection.expected_spin_count(b.areal_density_nm2, r0)
    return {
        "r0_nm": r0,
        "contrast": contrast,
        "expected_spin_count": count,
        "outer_signal_percent": {r.peak_class: 100.0 * r.outer_signal for r in rows},
        "dominance": {r.peak_class: r.dominance for r in rows},
    }


def cmd_rabi(cfg: ExperimentConfig, args, emitter: Emitter) -> dict:
    power = args.power if args.power is not None else cfg.sequence.lock_power_mhz
    durations = axis_from_range(cfg.sequence.durations_us)
    trace = rabi_trace(power, durations, nv=build_nv(cfg))
    spec = _trace_spectrum(durations, trace, cfg)
    emitter.data_spectrum(spec, axis_name="time_us")
    return {"power_MHz": power, "points": len(durations)}


def cmd_spinlock(cfg: ExperimentConfig, args, emitter: Emitter) -> dict:
    seq_cfg = cfg.sequence
    if seq_cfg.segments:
        pl = run_sequence(
            _sequence_from_config(seq_cfg.segments),
            build_nv(cfg),
            RelaxationChannels(nv_t1rho_us=cfg.nv.t1rho_us),
        )
        emitter.data_table(["tau_us", "pl"], [(seq_cfg.tau_us, pl)], plot_cols=(0, 1))
        return {"pl": pl, "segments": len(seq_cfg.segments)}
    taus = axis_from_range(seq_cfg.durations_us)
    trace = spinlock_trace(
        seq_cfg.lock_power_mhz,
        taus,
        nv=build_nv(cfg),
        channels=RelaxationChannels(nv_t1rho_us=cfg.nv.t1rho_us),
        pulse_omega_mhz=seq_cfg.pulse_power_mhz,
    )
    spec = _trace_spectrum(taus, trace, cfg)
    emitter.data_spectrum(spec, axis_name="time_us")
    return {
        "lock_power_MHz": seq_cfg.lock_power_mhz,
        "pulse_power_MHz": seq_cfg.pulse_power_mhz,
        "points": len(taus),
    }


def _sequence_from_config(segments) -> PulseSequence:
    segs: list = [Polarize()]
    for seg in segments:
        if seg[0] == "mw":
            segs.append(MwPulse(seg[1], seg[2], seg[3]))
        else:
            segs.append(Wait(seg[1]))
    segs.append(Readout())
    return PulseSequence(tuple(segs))


def _trace_spectrum(times, values, cfg: ExperimentConfig) -> spectra.Spectrum:
    spec = spectra.Spectrum(np.asarray(times, dtype=float), values)
    if cfg.noise.repetitions > 0:
        spec = spectra.apply_shot_noise(
            spec, cfg.noise.repetitions, np.random.default_rng(cfg.noise.seed)
        )
    return spec


def _zf_compute(cfg: ExperimentConfig, axis, mode: str, repetitions: int) -> spectra.Spectrum:
    return spectra.zf_spectrum(
        build_system(cfg),
        build_ensemble(cfg),
        build_channels(cfg),
        cfg.sweep.tau_us,
        axis,
        mode=mode,
        weight_mode=cfg.sweep.weight_mode,
        fwhm_mhz=cfg.sweep.fwhm_mhz,
        contrast=cfg.sweep.contrast,
        t1rho_model=build_t1rho(cfg),
        repetitions=repetitions,
        rng=np.random.default_rng(cfg.noise.seed),
        nv=build_nv(cfg),
    )


def _zf_chunk(payload) -> list[float]:
    """Worker entry for exact-mode sweeps; payload must stay picklable."""
    cfg, axis = payload
    spec = _zf_compute(cfg, np.asarray(axis), mode="exact", repetitions=0)
    return [float(v) for v in spec.values]


def cmd_zf_sweep(cfg: ExperimentConfig, args, emitter: Emitter, workers: int) -> dict:
    axis = axis_from_range(cfg.sweep.axis_mhz)
    mode = args.mode if args.mode else cfg.sweep.mode
    if mode == "exact" and workers > 1:
        chunks = [c for c in np.array_split(axis, workers) if len(c)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_zf_chunk, [(cfg, list(c)) for c in chunks]))
        values = np.concatenate([np.asarray(p) for p in parts])
        spec = spectra.Spectrum(axis, values)
        if cfg.noise.repetitions > 0:
            spec = spectra.apply_shot_noise(
                spec, cfg.noise.repetitions, np.random.default_rng(cfg.noise.seed)
            )
    else:
        spec = _zf_compute(cfg, axis, mode, cfg.noise.repetitions)
    emitter.data_spectrum(spec, axis_name="power_MHz")
    return {"mode": mode, "points": len(axis), "tau_us": cfg.sweep.tau_us}


def cmd_deer(cfg: ExperimentConfig, args, emitter: Emitter) -> dict:
    axis = axis_from_range(cfg.deer.axis_mhz)
    spec = spectra.deer_spectrum(
        build_system(cfg),
        cfg.deer.field_g,
        axis,
        ensemble=build_ensemble(cfg),
        fwhm_mhz=cfg.sweep.fwhm_mhz,
        repetitions=cfg.noise.repetitions,
        rng=np.random.default_rng(cfg.noise.seed),
    )
    emitter.data_spectrum(spec, axis_name="frequency_MHz")
    return {"field_G": cfg.deer.field_g, "points": len(axis)}


def cmd_fit(cfg: ExperimentConfig, args, emitter: Emitter) -> dict:
    spec = spectra.read_spectrum_csv(args.spectrum)
    fit = spectra.fit_gaussian_peaks(spec, args.n_peaks, fwhm_guess=cfg.sweep.fwhm_mhz)
    model_vals = spectra.evaluate_peaks(fit.peaks, spec.axis_mhz)
    emitter.data_spectrum(spectra.Spectrum(spec.axis_mhz, model_vals), axis_name="power_MHz")
    return fit.report()


def cmd_invert(cfg: ExperimentConfig, args, emitter: Emitter) -> dict:
    if args.fit_report:
        report = json.loads(Path(args.fit_report).read_text())
        peaks = report["peaks"] if "peaks" in report else report["results"]["peaks"]
        centers = [p["center_MHz"] for p in peaks]
        sigmas = [p["fwhm_MHz"] / 2.0 for p in peaks]
    elif args.centers:
        centers = [float(c) for c in args.centers.split(",")]
        sigmas = [float(s) for s in args.sigmas.split(",")] if args.sigmas else None
    else:
        raise ValueError("invert needs --centers or --fit-report")
    classes = tuple(args.classes.split(",")) if args.classes else None
    estimate = spectra.extract_hyperfine(centers, sigmas, model=args.model, classes=classes)
    emitter.data_table(["center_MHz"], [(c,) for c in centers])
    return estimate.report()


# --- main ---


def _make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zfesr",
        description="Zero-field ESR sensing simulator (dressed-state resonance spectroscopy)",
    )
    parser.add_argument("--config", type=Path, help="experiment config file")
    parser.add_argument("--out-dir", type=Path, default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override the config random seed")
    parser.add_argument("--workers", type=int, default=1, help="worker processes for exact sweeps")
    parser.add_argument("--format", choices=("csv", "json"), default=None, help="data file format")
    parser.add_argument("--print-defaults", action="store_true", help="print the default config and exit")
    parser.add_argument("--no-mkdir", action="store_true", help="fail instead of creating the output directory")
    sub = parser.add_subparsers(dest="subcommand")

    sub.add_parser("peaks", help="zero-field transition table and matching drive powers")
    p = sub.add_parser("budget", help="detection-area signal budget")
    p.add_argument("--r0", type=float, default=None, help="detection radius in nm")
    p.add_argument("--contrast", type=float, default=None, help="observed contrast (fraction)")
    p = sub.add_parser("rabi", help="Rabi oscillation trace")
    p.add_argument("--power", type=float, default=None, help="drive power in MHz")
    sub.add_parser("spinlock", help="spin-locking decay trace")
    p = sub.add_parser("zf-sweep", help="power-swept zero-field spectrum")
    p.add_argument("--mode", choices=("fast", "exact"), default=None)
    sub.add_parser("deer", help="field-on frequency-swept spectrum")
    p = sub.add_parser("fit", help="Gaussian peak fit of a spectrum CSV")
    p.add_argument("--spectrum", required=True, help="spectrum CSV path")
    p.add_argument("--n-peaks", type=int, default=3)
    p = sub.add_parser("invert", help="hyperfine principal values from peak centers")
    p.add_argument("--centers", help="comma-separated resonance powers in MHz")
    p.add_argument("--sigmas", help="comma-separated center uncertainties in MHz")
    p.add_argument("--fit-report", help="fit report JSON to invert")
    p.add_argument("--model", choices=("axial", "full"), default="axial")
    p.add_argument("--classes", help="comma-separated class labels")
    return parser


_HANDLERS = {
    "peaks": cmd_peaks,
    "budget": cmd_budget,
    "rabi": cmd_rabi,
    "spinlock": cmd_spinlock,
    "deer": cmd_deer,
    "fit": cmd_fit,
    "invert": cmd_invert,
}


def _fail(category: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": category, "message": message}) + "\n")
    return code


def _cli_params(args) -> dict:
    skip = {"config", "out_dir", "print_defaults", "no_mkdir"}
    return {
        k: (str(v) if isinstance(v, Path) else v)
        for k, v in vars(args).items()
        if k not in skip and v is not None
    }


def main(argv=None) -> int:
    parser = _make_parser()
    args = parser.parse_args(argv)
    if args.print_defaults:
        sys.stdout.write(default_config_text())
        return EXIT_OK
    if not args.subcommand:
        parser.print_usage(sys.stderr)
        return _fail("usage", "a subcommand is required", EXIT_CONFIG)
    try:
        if args.config is not None:
            cfg = parse_config_text(Path(args.config).read_text(), source=str(args.config))
        else:
            cfg = ExperimentConfig()
        if args.seed is not None:
            cfg = replace(cfg, noise=replace(cfg.noise, seed=args.seed))
        out_dir = args.out_dir if args.out_dir is not None else Path(cfg.output.dir)
        fmt = args.format if args.format is not None else cfg.output.format
        emitter = Emitter(out_dir, args.subcommand, cfg.digest(), fmt, mkdir=not args.no_mkdir)
        if args.subcommand == "zf-sweep":
            results = cmd_zf_sweep(cfg, args, emitter, max(1, args.workers))
        else:
            results = _HANDLERS[args.subcommand](cfg, args, emitter)
        report_path = emitter.report(cfg, args.subcommand, _cli_params(args), results)
        sys.stdout.write(
            json.dumps({"report": str(report_path), "results": results}, default=_json_default, indent=1)
            + "\n"
        )
        return EXIT_OK
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except (spectra.FitError, spectra.InconsistentPeaksError) as exc:
        return _fail("analysis", str(exc), EXIT_VALIDATION)
    except ValueError as exc:
        return _fail("validation", str(exc), EXIT_VALIDATION)
    except FileNotFoundError as exc:
        return _fail("io", str(exc), EXIT_IO)
    except OSError as exc:
        return _fail("io", str(exc), EXIT_IO)
    except Exception as exc:  # pragma: no cover
        return _fail("unexpected", f"{type(exc).__name__}: {exc}", EXIT_UNEXPECTED)


if __name__ == "__main__":
    sys.exit(main())
