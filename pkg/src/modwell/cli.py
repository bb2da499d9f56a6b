"""Reproducible experiment runner.

Reads a key=value config, dispatches one experiment, and writes
figure-ready CSV files plus a manifest.json recording the config hash,
derived seeds, package versions, wall time, and a sha256 for every
emitted file.  Exit codes: 0 ok, 2 config error, 3 numerical error.

Seed policy: one master seed in the config; each task k uses the stream
numpy SeedSequence([master, k]) with k fixed per experiment stage, so
results are reproducible regardless of how work is batched.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigurationError, ModwellError
from .model import (LatticeParams, adiabatic_spectrum, build_spin_matrices,
                    gauge_correction, zeta_grid)

EXPERIMENTS = ("spectrum", "poincare", "lyapunov", "evolve", "compare",
               "rho_positivity", "ked", "resonances", "calibrate")

_REQUIRED = ("u0", "theta_l_deg", "bx")

_SCHEMA = {
    # key: (type, default, validator)
    "u0": (float, None, lambda v: v != 0),
    "theta_l_deg": (float, None, lambda v: 0 < v < 180),
    "bx": (float, None, lambda v: v >= 0),
    "f_spin": (int, 4, lambda v: v >= 1),
    "n_periods": (int, 1, lambda v: v >= 1),
    "grid_n": (int, 256, lambda v: v >= 32 and (v & (v - 1)) == 0),
    "experiment": (str, "spectrum", lambda v: v in EXPERIMENTS),
    "out_dir": (str, "out", lambda v: len(v) > 0),
    "seed": (int, 1, lambda v: 0 <= v < 2 ** 64),
    "dtau_classical": (float, 2.5e-4, lambda v: 0 < v < 0.1),
    "dtau_quantum": (float, 2e-5, lambda v: 0 < v < 0.01),
    "ensemble_size": (int, 20000, lambda v: v >= 1000),
    "n_max": (int, 48, lambda v: 4 <= v <= 200),
    "reg": (float, 1e-3, lambda v: 0 < v < 1),
    "section_energy": (float, -186.8, lambda v: True),
    "section_seeds": (int, 24, lambda v: 1 <= v <= 10000),
    "tau_max": (float, 120.0, lambda v: v > 0),
    "tau_total": (float, 300.0, lambda v: v > 0),
    "tau_span": (float, 7.0, lambda v: v > 0),
    "n_times": (int, 36, lambda v: 2 <= v <= 100000),
    "ratios": (str, "4", lambda v: len(v) > 0),
}


@dataclass(frozen=True)
class RunConfig:
    values: dict = field(repr=False)

    def __getattr__(self, key):
        try:
            return self.values[key]
        except KeyError:
            raise AttributeError(key) from None

    @property
    def params(self) -> LatticeParams:
        return LatticeParams(u0=self.values["u0"],
                             theta_l=math.radians(self.values["theta_l_deg"]),
                             bx=self.values["bx"],
                             f_spin=self.values["f_spin"],
                             n_periods=self.values["n_periods"])

    def seed_for(self, task: int) -> np.random.SeedSequence:
        return np.random.SeedSequence([self.values["seed"], task])


def parse_config_text(text: str) -> dict:
    """key=value lines; '#' comments; strict unknown-key rejection."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigurationError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, val = stripped.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _SCHEMA:
            raise ConfigurationError(f"line {lineno}: unknown key {key!r}")
        if key in raw:
            raise ConfigurationError(f"line {lineno}: duplicate key {key!r}")
        typ = _SCHEMA[key][0]
        try:
            raw[key] = typ(val)
        except ValueError:
            raise ConfigurationError(
                f"line {lineno}: cannot parse {key!r} as {typ.__name__}: {val!r}") from None
    return raw


def build_config(raw: dict, overrides: dict | None = None) -> RunConfig:
    merged = dict(raw)
    for key, val in (overrides or {}).items():
        if val is not None:
            merged[key] = val
    for key in _REQUIRED:
        if key not in merged:
            raise ConfigurationError(f"missing required key {key!r}")
    values = {}
    for key, (typ, default, check) in _SCHEMA.items():
        val = merged.get(key, default)
        if val is None:
            raise ConfigurationError(f"missing required key {key!r}")
        val = typ(val)
        if not check(val):
            raise ConfigurationError(f"key {key!r}: value {val!r} out of range")
        values[key] = val
    return RunConfig(values=values)


# ------------------------------------------------------------------ outputs

def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer, bool, np.bool_)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path: Path, header: list[str], columns) -> None:
    rows = zip(*columns)
    with open(path, "w") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(_fmt(x) for x in row) + "\n")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


class Emitter:
    def __init__(self, out_dir: Path, config: RunConfig):
        self.out_dir = out_dir
        self.config = config
        self.files: dict[str, str] = {}
        self.t0 = time.time()
        out_dir.mkdir(parents=True, exist_ok=True)

    def csv(self, name: str, header: list[str], columns) -> Path:
        path = self.out_dir / name
        write_csv(path, header, columns)
        self.files[name] = _sha256(path)
        return path

    def text(self, name: str, content: str) -> Path:
        path = self.out_dir / name
        path.write_text(content)
        self.files[name] = _sha256(path)
        return path

    def finish(self) -> Path:
        cfg_json = json.dumps(self.config.values, sort_keys=True)
        manifest = {
            "config": self.config.values,
            "config_sha256": hashlib.sha256(cfg_json.encode()).hexdigest(),
            "seed": self.config.values["seed"],
            "versions": {"modwell": __version__, "numpy": np.__version__,
                         "python": sys.version.split()[0]},
            "wall_time_s": round(time.time() - self.t0, 3),
            "files": dict(sorted(self.files.items())),
        }
        path = self.out_dir / "manifest.json"
        prev = None
        if path.exists():
            try:
                prev = json.loads(path.read_text())
            except json.JSONDecodeError:
                prev = None
        if prev is not None and prev.get("config_sha256") == manifest["config_sha256"]:
            manifest["reproduced_previous"] = prev.get("files") == manifest["files"]
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
        return path


# -------------------------------------------------------------- experiments

def _run_spectrum(cfg: RunConfig, em: Emitter):
    params = cfg.params
    spin = build_spin_matrices(params.f_spin)
    grid = zeta_grid(params, cfg.grid_n)
    spec = adiabatic_spectrum(params, spin, grid)
    phi1 = gauge_correction(spec, 1)
    header = ["zeta"] + [f"V_{i + 1}" for i in range(spec.n_bands)] + ["Phi_1"]
    cols = [grid] + [spec.v[:, i] for i in range(spec.n_bands)] + [phi1]
    em.csv("spectrum.csv", header, cols)


def _run_poincare(cfg: RunConfig, em: Emitter):
    from .classical import poincare_section, section_arrays

    pts = poincare_section(cfg.params, cfg.section_energy, cfg.section_seeds,
                           cfg.tau_max, rng_seed=cfg.seed,
                           dtau=cfg.dtau_classical)
    phi, nz, zeta, tau, seed_ix = section_arrays(pts)
    em.csv("section.csv", ["phi", "n_z", "zeta", "tau", "seed"],
           [phi, nz, zeta, tau, seed_ix])


def _run_lyapunov(cfg: RunConfig, em: Emitter):
    from .classical import ClassicalState, lyapunov
    from .quantum import initial_state, observables

    params = cfg.params
    psi = initial_state(params, grid_n=cfg.grid_n)
    e_mean = observables(params, psi)["energy"]
    rng = np.random.default_rng(cfg.seed_for(2))
    from .classical import _shell_point

    results = []
    for trial in range(6):
        got = None
        while got is None:
            phi = rng.uniform(0, 2 * math.pi)
            nz = rng.uniform(-0.7, 0.7)
            got = _shell_point(params, e_mean, phi, nz, rng)
        state = ClassicalState(got[0], 0.0, tuple(got[1]))
        results.append(lyapunov(params, state, cfg.tau_total,
                                dtau=cfg.dtau_classical))
    best = max(results, key=lambda r: r.lam)
    em.csv("lyapunov_trace.csv", ["tau", "lambda_running"],
           [best.times, best.running])
    em.csv("lyapunov_summary.csv",
           ["trial", "lambda_dimless", "lambda_per_s", "converged"],
           [np.arange(len(results)),
            np.array([r.lam for r in results]),
            np.array([r.lam_per_second for r in results]),
            np.array([int(r.converged) for r in results])])


def _run_evolve(cfg: RunConfig, em: Emitter):
    from .quantum import (band_populations, evolve, find_cat_time,
                          initial_state, kinetic_energy_density,
                          observable_series)

    params = cfg.params
    psi = initial_state(params, grid_n=cfg.grid_n)
    taus = np.linspace(0.0, cfg.tau_span, cfg.n_times)
    series = observable_series(params, psi, taus, dtau=cfg.dtau_quantum)
    fz = series["fz"]
    em.csv("timeseries.csv", ["tau", "Fz", "E", "norm"],
           [taus, fz, series["energy"], series["norm"]])
    cat = find_cat_time(taus, fz)
    _, snaps = evolve(params, psi, cat, dtau=cfg.dtau_quantum)
    spin = build_spin_matrices(params.f_spin)
    spec = adiabatic_spectrum(params, spin, psi.grid)
    ked = kinetic_energy_density(params, snaps[-1], spec)
    pops = band_populations(snaps[-1], spec)
    em.csv("densities.csv", ["zeta", "psi2", "T", "P_1", "P_2"],
           [psi.grid, snaps[-1].position_density(), ked.t_of_z,
            pops.p_of_z[:, 0], pops.p_of_z[:, 1]])
    em.text("landmarks.txt",
            f"cat_time_tau = {cat!r}\nenergy = {series['energy'][0]!r}\n")


def _run_compare(cfg: RunConfig, em: Emitter):
    from .phasespace import compare_magnetization

    taus = np.linspace(0.0, cfg.tau_span, cfg.n_times)
    comp = compare_magnetization(cfg.params, taus, cfg.ensemble_size,
                                 seed=cfg.seed, dtau_quantum=cfg.dtau_quantum,
                                 dtau_classical=cfg.dtau_classical)
    em.csv("compare.csv", ["tau", "fz_q", "fz_c", "err"],
           [comp.taus, comp.fz_quantum, comp.fz_classical, comp.mc_err])
    em.text("divergence.txt", f"divergence_time_tau = {comp.divergence_time!r}\n"
                              f"estimator_sign = {comp.sign!r}\n")


def _run_rho_positivity(cfg: RunConfig, em: Emitter):
    from .phasespace import (classical_q_values, default_frame, q_values,
                             alpha_from_phase_point, metropolis_sample)
    from .quantum import evolve, first_zero_crossing, fz_series, initial_state
    from .reconstruct import (build_probes, calibrate_noise_floor,
                              reconstruct_pseudo_density)

    params = cfg.params
    psi = initial_state(params, grid_n=cfg.grid_n)
    frame = default_frame(params)
    taus = np.linspace(0.0, cfg.tau_span, cfg.n_times)
    fz = fz_series(params, psi, taus, dtau=cfg.dtau_quantum)
    tq = first_zero_crossing(taus, fz)
    snapshot_tau = float(tq) if tq is not None else cfg.tau_span / 4.0

    ens = metropolis_sample(params, psi, max(4000, cfg.ensemble_size // 5),
                            seed=int(cfg.seed_for(3).generate_state(1)[0]))
    from .phasespace import propagate_ensemble

    moved = propagate_ensemble(params, ens, snapshot_tau, dtau=cfg.dtau_classical)
    alpha_cloud = np.concatenate([
        alpha_from_phase_point(frame, ens.zeta, ens.p),
        alpha_from_phase_point(frame, moved.zeta, moved.p)])
    probes = build_probes(frame, alpha_cloud, n_alpha_side=12, n_spin=72)

    _, snaps = evolve(params, psi, snapshot_tau, dtau=cfg.dtau_quantum)
    controls = {"initial": psi, "quantum_evolved": snaps[-1]}
    floor = calibrate_noise_floor(params, frame, probes, controls,
                                  n_max=cfg.n_max, reg=cfg.reg)
    a, t, p = probes.joint()
    q_cl = classical_q_values(params, psi, frame, a, t, p, snapshot_tau,
                              dtau=cfg.dtau_classical).reshape(probes.shape)
    pd = reconstruct_pseudo_density(q_cl, probes, params.f_spin,
                                    n_max=cfg.n_max, reg=cfg.reg)
    em.csv("eigenvalues_classical.csv", ["index", "eigenvalue"],
           [np.arange(len(pd.eigenvalues)), pd.eigenvalues])
    em.csv("eigenvalue_floors_control.csv", ["state", "floor"],
           [list(floor.floors.keys()), np.array(list(floor.floors.values()))])
    em.text("rho_positivity.txt",
            f"snapshot_tau = {snapshot_tau!r}\n"
            f"eps_rec = {floor.eps_rec!r}\n"
            f"min_eigenvalue_classical = {pd.min_eigenvalue!r}\n"
            f"violation = {pd.min_eigenvalue < -5 * floor.eps_rec!r}\n")


def _run_ked(cfg: RunConfig, em: Emitter):
    _run_evolve(cfg, em)


def _run_resonances(cfg: RunConfig, em: Emitter):
    from .classical import resonance_scan

    ratios = [float(r) for r in str(cfg.ratios).split(",") if r.strip()]
    hits = resonance_scan(cfg.params, ratios, energy_value=cfg.section_energy,
                          alpha_range=(0.0, 1.4))
    em.csv("resonances.csv", ["variable", "value", "ratio"],
           [[h.variable for h in hits], np.array([h.value for h in hits]),
            np.array([h.ratio for h in hits])])


def _run_calibrate(cfg: RunConfig, em: Emitter):
    from .calibrate import calibrate

    res = calibrate()
    em.text("calibration.txt",
            f"u0 = {res.params.u0!r}\n"
            f"theta_l_deg = {math.degrees(res.params.theta_l)!r}\n"
            f"bx = {res.params.bx!r}\n"
            f"barrier = {res.barrier!r}\n"
            f"energy_offset = {res.energy_offset!r}\n"
            f"splitting_exact = {res.splitting_exact!r}\n"
            f"splitting_bo_gauge = {res.splitting_bo_gauge!r}\n")
    em.text("calibration_report.txt",
            "\n".join(str(r) for r in res.report) + "\n")


_RUNNERS = {
    "spectrum": _run_spectrum,
    "poincare": _run_poincare,
    "lyapunov": _run_lyapunov,
    "evolve": _run_evolve,
    "compare": _run_compare,
    "rho_positivity": _run_rho_positivity,
    "ked": _run_ked,
    "resonances": _run_resonances,
    "calibrate": _run_calibrate,
}


def run(config: RunConfig) -> Path:
    """Execute the configured experiment; returns the manifest path."""
    em = Emitter(Path(config.out_dir), config)
    _RUNNERS[config.experiment](config, em)
    return em.finish()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="modwell",
        description="Magneto-optical double-well simulator: reproducible "
                    "experiment runner.")
    parser.add_argument("--config", type=str, help="key=value config file")
    parser.add_argument("--experiment", type=str, choices=EXPERIMENTS)
    parser.add_argument("--out", type=str, help="output directory")
    parser.add_argument("--seed", type=int, help="master seed")
    args = parser.parse_args(argv)

    try:
        raw = {}
        if args.config:
            path = Path(args.config)
            if not path.exists():
                raise ConfigurationError(f"config file not found: {path}")
            raw = parse_config_text(path.read_text())
        overrides = {"experiment": args.experiment, "out_dir": args.out,
                     "seed": args.seed}
        cfg = build_config(raw, overrides)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        manifest = run(cfg)
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ModwellError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3
    print(manifest)
    return 0


if __name__ == "__main__":
    sys.exit(main())
