"""Command-line harness: config in, deterministic result bundles out.

Subcommands
    derive   all derived quantities as JSON (plus a reference comparison
             table when the config carries `reference_values`)
    cool     three-axis phonon trajectories + steady-state/rate summary
    collide  collision experiment: event/detection logs and histogram data
    fit      species mixture inference from a detections CSV
    budget   ground-state feasibility report

Every command writes `manifest.json` (config hash, seed, flags, version,
backend, timestamp) next to its artifacts; numeric artifacts are formatted
to 12 significant digits, so re-running with the same config, seed, and
backend reproduces them byte for byte.  Failures exit nonzero and print a
machine-readable error JSON to stdout.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import math
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, _kernels, collisions, coupling, dynamics
from . import noise as noise_mod
from .config import (AXIS_NAMES, ConfigError, SystemConfig, config_sha256,
                     load_config, linewidth_from_finesse, mode_volumes,
                     polarizability, resolve_linewidth, rms_amplitude,
                     sphere_mass, zero_point_fluctuation)

EXIT_USAGE = 2
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3
EXIT_DATA = 4
EXIT_SCHEMA = 5

MIN_FIT_EVENTS = collisions.MIN_FIT_EVENTS
DECAY_FIT_FOLDS = 6.0      # e-folds of the energy decay used for the rate fit


class CliError(Exception):
    """Carries the machine-readable error payload to main()."""

    def __init__(self, exit_code: int, kind: str, message: str, **extra):
        super().__init__(message)
        self.exit_code = exit_code
        self.kind = kind
        self.extra = extra


class _Parser(argparse.ArgumentParser):
    def error(self, message):   # route usage errors through the JSON path
        raise CliError(EXIT_USAGE, "usage", message)


# ---------------------------------------------------------------------------
# deterministic serialization

def _quantize(obj):
    """Round every float to 12 significant digits, recursively."""
    if isinstance(obj, dict):
        return {k: _quantize(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_quantize(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        value = float(obj)
        if not math.isfinite(value):     # strict JSON has no NaN/Infinity
            return None
        return float(f"{value:.12g}")
    if isinstance(obj, np.ndarray):
        return _quantize(obj.tolist())
    return obj


def write_json(path: Path, obj: dict) -> None:
    text = json.dumps(_quantize(obj), indent=2, sort_keys=True) + "\n"
    path.write_text(text, encoding="utf-8")


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return str(value)


def write_csv(path: Path, header: list, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


# ---------------------------------------------------------------------------
# schemas

def load_schema(name: str) -> dict:
    text = resources.files("levicool").joinpath(f"schemas/{name}.schema.json") \
        .read_text(encoding="utf-8")
    return json.loads(text)


def validate_json_file(path, schema_name: str) -> None:
    """Validate a JSON artifact against its bundled schema (raises on failure)."""
    import jsonschema
    with open(path, "r", encoding="utf-8") as fh:
        obj = json.load(fh)
    jsonschema.validate(obj, load_schema(schema_name))


_CSV_CASTS = {"float": float, "int": int, "str": str}


def read_csv_checked(path, schema_name: str) -> list[dict]:
    """Parse a CSV artifact, enforcing its column schema row by row.

    Raises CliError (schema class, exit 5) naming the offending line on a
    bad header, a wrong cell count, an uncastable value, or an enum miss.
    """
    schema = load_schema(schema_name)
    columns = schema["columns"]
    names = [c["name"] for c in columns]
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != names:
            raise CliError(EXIT_SCHEMA, "schema",
                           f"{path}: line 1: expected header {','.join(names)}",
                           line=1)
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(columns):
                raise CliError(
                    EXIT_SCHEMA, "schema",
                    f"{path}: line {lineno}: expected {len(columns)} fields, "
                    f"got {len(raw)}", line=lineno)
            row = {}
            for col, cell in zip(columns, raw):
                try:
                    value = _CSV_CASTS[col["type"]](cell)
                except ValueError:
                    raise CliError(
                        EXIT_SCHEMA, "schema",
                        f"{path}: line {lineno}: column {col['name']!r} "
                        f"expects {col['type']}, got {cell!r}",
                        line=lineno) from None
                if "enum" in col and value not in col["enum"]:
                    raise CliError(
                        EXIT_SCHEMA, "schema",
                        f"{path}: line {lineno}: column {col['name']!r} "
                        f"must be one of {col['enum']}, got {value!r}",
                        line=lineno)
                row[col["name"]] = value
            rows.append(row)
    return rows


def bundled_config(name: str) -> Path:
    """Path of a packaged example config (``baseline`` or ``mixture``)."""
    return Path(str(resources.files("levicool").joinpath(f"data/{name}.cfg")))


# ---------------------------------------------------------------------------
# shared plumbing

def _write_manifest(out: Path, args, extra_flags: dict) -> None:
    manifest = {
        "schema": "levicool/manifest/1",
        "version": __version__,
        "command": args.command,
        "flags": extra_flags,
        "config_path": str(args.config),
        "config_sha256": config_sha256(args.config),
        "seed": getattr(args, "seed", None),
        "backend": _kernels.active_backend(),
        "timestamp": datetime.datetime.now(datetime.timezone.utc)
        .isoformat(timespec="seconds"),
    }
    write_json(out / "manifest.json", manifest)


def _prepare(args) -> tuple[SystemConfig, Path]:
    config = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return config, out


def _collect_pairs(config: SystemConfig):
    """Build the driven pairs, funnelling regime warnings to the caller."""
    caught = []
    with warnings.catch_warnings(record=True) as wlist:
        warnings.simplefilter("always")
        pairs = coupling.build_pairs(config)
        caught = [str(w.message) for w in wlist]
    for message in caught:
        print(f"warning: {message}", file=sys.stderr)
    return sorted(pairs, key=lambda p: p.axis), caught


# ---------------------------------------------------------------------------
# derive

_REFERENCE_UNITS = {
    "mass_kg": "kg", "zpf_z_m": "m", "zpf_x_m": "m", "zpf_y_m": "m",
    "g_z_rad_per_s": "rad/s", "g_x_rad_per_s": "rad/s",
    "g_y_rad_per_s": "rad/s", "kappa_rad_per_s": "rad/s",
    "collision_rate_per_s": "1/s",
}


def _derived_document(config: SystemConfig) -> dict:
    mass = sphere_mass(config.sphere)
    zpf = [zero_point_fluctuation(mass, w) for w in config.trap.frequencies]
    kappa, source, disc = resolve_linewidth(config.cavity)
    try:
        kappa_fin = linewidth_from_finesse(config.cavity)
    except ValueError:
        kappa_fin = None
    volumes = mode_volumes(config.cavity)
    rms = [rms_amplitude(mass, w, config.gas.temperature, config.cavity)
           for w in config.trap.frequencies]

    pairs, warn_msgs = _collect_pairs(config)
    pair_docs = []
    couplings = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for pair in pairs:
            strength = coupling.coupling_strength(
                config.cavity, config.sphere, config.trap, pair.mode)
            verdict = dynamics.stability_check(pair)
            couplings[AXIS_NAMES[pair.axis]] = pair.g
            pair_docs.append({
                "mode": pair.mode,
                "axis": pair.axis,
                "axis_name": AXIS_NAMES[pair.axis],
                "mechanical_frequency_rad_per_s": pair.omega_m,
                "coupling_rad_per_s": pair.g,
                "cross_gradient_ratio": strength.cross_gradient_ratio,
                "detuning_rad_per_s": pair.detuning,
                "effective_detuning_rad_per_s": pair.effective_detuning,
                "drive_strength_rad_per_s": pair.drive_strength,
                "photon_number": pair.n_photons,
                "light_enhanced_coupling_rad_per_s": pair.light_enhanced_coupling,
                "cooling_rate_per_s": dynamics.cooling_rate(
                    pair.g, pair.alpha, pair.kappa, pair.omega_m),
                "sideband_floor_phonons": dynamics.final_phonon_number(
                    pair.omega_m, pair.effective_detuning, pair.kappa),
                "pulse_time_constant_s": dynamics.phonon_decay_time(
                    pair.g, pair.alpha, pair.kappa),
                "stability": {"s1": verdict.s1, "s2": verdict.s2,
                              "stable": verdict.stable,
                              "critical_amplitude": verdict.critical_amplitude},
            })
        rates = collisions.collision_rate(config.gas, config.sphere)
        omega = np.asarray(config.trap.frequencies)
        mean_kicks = [[collisions.mean_elastic_kick(
            sp.mass, config.gas.temperature, mass, w) for w in omega]
            for sp in config.gas.species]
        taus = {AXIS_NAMES[p.axis]: dynamics.phonon_decay_time(
            p.g, p.alpha, p.kappa) for p in pairs}
        tau_vec = np.array([taus.get(name, math.inf) for name in AXIS_NAMES])
        detect = collisions.detectability_report(
            config.gas, config.sphere, omega, tau_vec, float(rates), mass)

    derived = {
        "schema": "levicool/derived/1",
        "sphere": {"mass_kg": mass,
                   "volume_m3": 4.0 / 3.0 * math.pi * config.sphere.radius ** 3,
                   "polarizability_si": polarizability(config.sphere)},
        "trap": {"axes": list(AXIS_NAMES),
                 "frequencies_rad_per_s": list(config.trap.frequencies),
                 "zero_point_fluctuation_m": zpf,
                 "rms_amplitude_m": [r[0] for r in rms],
                 "point_dipole_ok": [bool(r[1]) for r in rms]},
        "cavity": {"mode_frequency_rad_per_s": config.cavity.mode_frequency,
                   "wavenumber_rad_per_m": config.cavity.wavenumber,
                   "linewidth_rad_per_s": kappa,
                   "linewidth_source": source,
                   "linewidth_from_finesse_rad_per_s": kappa_fin,
                   "linewidth_discrepancy_factor": disc,
                   "mode_volumes_m3": {"TEM00": volumes[0],
                                       "TEM01": volumes[1],
                                       "TEM10": volumes[2]}},
        "pairs": pair_docs,
        "gas": {"collision_rate_per_s": float(rates),
                "per_species_rate_per_s": list(rates.per_species),
                "species_mass_kg": [sp.mass for sp in config.gas.species],
                "mean_elastic_kick_phonons": mean_kicks,
                "detectability": [{
                    "axis": d.axis,
                    "axis_name": AXIS_NAMES[d.axis],
                    "resolvable": d.resolvable,
                    "resolvability_margin": d.resolvability_margin,
                    "elastic_detectable": [bool(b) for b in d.elastic_detectable],
                    "elastic_margin": list(d.elastic_margin),
                    "inelastic_detectable": [bool(b)
                                             for b in d.inelastic_detectable],
                    "inelastic_margin": list(d.inelastic_margin)}
                    for d in detect]},
        "warnings": warn_msgs,
    }

    comparables = {
        "mass_kg": mass,
        "zpf_z_m": zpf[0], "zpf_x_m": zpf[1], "zpf_y_m": zpf[2],
        "g_z_rad_per_s": abs(couplings.get("z", math.nan)),
        "g_x_rad_per_s": abs(couplings.get("x", math.nan)),
        "g_y_rad_per_s": abs(couplings.get("y", math.nan)),
        "kappa_rad_per_s": kappa,
        "collision_rate_per_s": float(rates),
    }
    comparison = []
    for name in sorted(config.reference_values):
        ref = float(config.reference_values[name])
        value = comparables.get(name)
        if value is not None and math.isnan(value):
            value = None
        comparison.append({"name": name, "reference": ref, "computed": value,
                           "ratio": None if (value is None or ref == 0)
                           else value / ref})
    derived["reference_comparison"] = comparison
    return derived


def cmd_derive(args) -> int:
    config, out = _prepare(args)
    derived = _derived_document(config)
    write_json(out / "derived.json", derived)
    _write_manifest(out, args, {"config": str(args.config),
                                "out": str(args.out)})
    print(f"derived.json written to {out}")
    for entry in derived["reference_comparison"]:
        ratio = entry["ratio"]
        print(f"  {entry['name']}: computed "
              f"{_fmt(entry['computed']) if entry['computed'] is not None else 'n/a'}"
              f" reference {_fmt(entry['reference'])}"
              f" ratio {_fmt(ratio) if ratio is not None else 'n/a'}")
    return 0


# ---------------------------------------------------------------------------
# cool

def _fit_decay_rate(times, values, floor) -> float:
    """Slope of log(n - floor) over the first DECAY_FIT_FOLDS e-folds."""
    excess = np.asarray(values) - floor
    start = excess[0]
    if start <= 0.0:
        return 0.0
    keep = excess > max(start * math.exp(-DECAY_FIT_FOLDS), 1e-300)
    if keep.sum() < 2:
        return 0.0
    return -float(np.polyfit(np.asarray(times)[keep],
                             np.log(excess[keep]), 1)[0])


def cmd_cool(args) -> int:
    config, out = _prepare(args)
    pairs, _ = _collect_pairs(config)
    if not pairs:
        raise CliError(EXIT_CONFIG, "config", "config declares no drives")

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rates = [dynamics.cooling_rate(p.g, p.alpha, p.kappa, p.omega_m)
                 for p in pairs]
    positive = [r for r in rates if r > 0.0]
    t_end = args.t_end
    if t_end is None:
        if not positive:
            raise CliError(EXIT_CONFIG, "config",
                           "no positive cooling rate; pass --t-end explicitly")
        t_end = 10.0 / (4.0 * min(positive))

    rows = []
    summary = []
    for pair, rate in zip(pairs, rates):
        dd = dynamics.build_drift_diffusion(pair)
        verdict = dynamics.stability_check(pair)
        try:
            steady = dynamics.steady_state_covariance(dd, verdict)
        except dynamics.UnstableSystemError as exc:
            raise CliError(
                EXIT_UNSTABLE, "unstable",
                f"axis {AXIS_NAMES[pair.axis]} ({pair.mode}): {exc}",
                details={"axis": AXIS_NAMES[pair.axis], "s1": verdict.s1,
                         "s2": verdict.s2,
                         "critical_amplitude": verdict.critical_amplitude}) \
                from exc
        n_steady = steady.phonon_number
        state = dynamics.initial_state(config.experiment.initial_phonons, 0.0)
        records = dynamics.propagate_covariance(dd, state, t_end)
        name = AXIS_NAMES[pair.axis]
        times = [r.time for r in records]
        phonons = [r.phonon_number for r in records]
        for rec, t, n in zip(records, times, phonons):
            rows.append((t, name, n, rec.cavity_number))
        fitted = _fit_decay_rate(times, phonons, n_steady)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            floor = dynamics.final_phonon_number(
                pair.omega_m, pair.effective_detuning, pair.kappa)
        summary.append({
            "axis": name, "mode": pair.mode,
            "initial_phonons": config.experiment.initial_phonons,
            "final_phonons": phonons[-1],
            "steady_state_phonons": n_steady,
            "sideband_floor_phonons": floor,
            "cooling_rate_per_s": rate,
            "energy_decay_fit_per_s": fitted,
            "cooling_rate_fit_per_s": fitted / 4.0,
            "fit_to_formula_ratio": (fitted / 4.0) / rate if rate > 0 else None,
        })

    rows.sort(key=lambda r: (r[0], AXIS_NAMES.index(r[1])))
    write_csv(out / "timeseries.csv", ["time_s", "axis", "phonons", "photons"],
              rows)
    _write_manifest(out, args, {"config": str(args.config),
                                "out": str(args.out), "seed": args.seed,
                                "t_end": t_end})
    print(f"timeseries.csv written to {out} (t_end = {_fmt(t_end)} s)")
    for s in summary:
        print(f"  axis {s['axis']} ({s['mode']}): n {_fmt(s['initial_phonons'])}"
              f" -> {_fmt(s['final_phonons'])}"
              f" (steady {_fmt(s['steady_state_phonons'])},"
              f" floor {_fmt(s['sideband_floor_phonons'])});"
              f" rate fit {_fmt(s['cooling_rate_fit_per_s'])} /s"
              f" vs formula {_fmt(s['cooling_rate_per_s'])} /s")
    print(json.dumps({"summary": _quantize(summary)}, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# collide

def cmd_collide(args) -> int:
    config, out = _prepare(args)
    if args.duration < 0:
        raise CliError(EXIT_CONFIG, "config", "--duration must be >= 0")
    pairs, _ = _collect_pairs(config)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        taus = np.full(3, math.inf)
        for pair in pairs:
            taus[pair.axis] = dynamics.phonon_decay_time(
                pair.g, pair.alpha, pair.kappa)
        mass = sphere_mass(config.sphere)
        omega = np.asarray(config.trap.frequencies)
        rates = collisions.collision_rate(config.gas, config.sphere)
        detect = collisions.detectability_report(
            config.gas, config.sphere, omega, taus, float(rates), mass)
    for d in detect:
        if not d.resolvable:
            print(f"warning: axis {AXIS_NAMES[d.axis]}: pulses not resolvable "
                  f"(margin {d.resolvability_margin:.3g})", file=sys.stderr)
        for k, sp in enumerate(config.gas.species):
            if not d.elastic_detectable[k]:
                print(f"warning: axis {AXIS_NAMES[d.axis]}: elastic kicks of "
                      f"species {k} (mass {sp.mass:.4g} kg) below one phonon",
                      file=sys.stderr)

    result = collisions.run_experiment(config, args.duration, args.seed,
                                       taus=taus)

    species_mass = [sp.mass for sp in config.gas.species]
    write_csv(out / "events.csv",
              ["time_s", "species_mass_kg", "kind",
               "kick_z", "kick_x", "kick_y"],
              [(ev.time, species_mass[ev.species], ev.kind,
                ev.kicks[0], ev.kicks[1], ev.kicks[2])
               for ev in result.events])
    write_csv(out / "detections.csv",
              ["axis", "pulse_start_s", "duration_s", "count", "merged"],
              [(AXIS_NAMES[r.axis], r.pulse_start, r.duration, r.count,
                int(r.merged)) for r in result.records])
    write_json(out / "histograms.json",
               {"schema": "levicool/histograms/1", **result.histograms})
    _write_manifest(out, args, {"config": str(args.config),
                                "out": str(args.out), "seed": args.seed,
                                "duration": args.duration})
    print(f"{len(result.events)} events, {len(result.records)} detection "
          f"records written to {out}")
    return 0


# ---------------------------------------------------------------------------
# fit

def _triples_from_detections(rows) -> np.ndarray:
    """Rebuild per-event (z, x, y) count rows from per-axis pulse records.

    An unmerged event contributes one row per axis, all stamped with the
    same pulse start time; groups missing an axis (lost to a merge) or
    containing a merged row are dropped, matching what a real analysis
    could resolve.
    """
    groups: dict[str, dict] = {}
    order = []
    for row in rows:
        key = _fmt(row["pulse_start_s"])
        if key not in groups:
            groups[key] = {"start": row["pulse_start_s"], "axes": {},
                           "merged": False}
            order.append(key)
        entry = groups[key]
        entry["merged"] = entry["merged"] or bool(row["merged"])
        entry["axes"][row["axis"]] = row["count"]
    triples = []
    for key in sorted(order, key=lambda k: groups[k]["start"]):
        entry = groups[key]
        if entry["merged"] or set(entry["axes"]) != set(AXIS_NAMES):
            continue
        triples.append([entry["axes"][name] for name in AXIS_NAMES])
    return np.asarray(triples, dtype=int).reshape(-1, 3)


def cmd_fit(args) -> int:
    config = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = read_csv_checked(args.detections, "detections-1")
    counts = _triples_from_detections(rows)
    if len(counts) < MIN_FIT_EVENTS:
        raise CliError(
            EXIT_DATA, "insufficient_events",
            f"species inference needs at least {MIN_FIT_EVENTS} resolved "
            f"events, got {len(counts)}",
            details={"events": len(counts), "required": MIN_FIT_EVENTS})

    mass = sphere_mass(config.sphere)
    omega = np.asarray(config.trap.frequencies)
    with warnings.catch_warnings(record=True) as wlist:
        warnings.simplefilter("always")
        fit = collisions.fit_species(counts, args.species,
                                     config.gas.temperature, mass, omega)
    for w in wlist:
        print(f"warning: {w.message}", file=sys.stderr)

    surface = None
    if config.experiment.inelastic_fraction > 0.0 and args.species == 1:
        est = collisions.surface_temperature_estimate(
            counts, fit.masses[0], config.gas.temperature, mass, omega)
        surface = {"t_sur_k": est.t_sur, "interval_k": list(est.interval),
                   "log_likelihood": est.log_likelihood,
                   "bound_only": est.bound_only}

    document = {
        "schema": "levicool/fit/1",
        "n_species": args.species,
        "n_events": fit.n_events,
        "masses_kg": fit.masses.tolist(),
        "weights": fit.weights.tolist(),
        "mass_intervals_kg": fit.mass_intervals.tolist(),
        "mean_kicks_phonons": fit.mean_kicks.tolist(),
        "log_likelihood": fit.log_likelihood,
        "converged": fit.converged,
        "surface_temperature": surface,
    }
    write_json(out / "fit.json", document)
    _write_manifest(out, args, {"config": str(args.config),
                                "out": str(args.out),
                                "detections": str(args.detections),
                                "species": args.species})
    print(f"fit.json written to {out}")
    for k in range(len(fit.masses)):
        lo, hi = fit.mass_intervals[k]
        print(f"  species {k}: mass {_fmt(fit.masses[k])} kg "
              f"[{_fmt(lo)}, {_fmt(hi)}] weight {_fmt(fit.weights[k])}")
    return 0


# ---------------------------------------------------------------------------
# budget

def cmd_budget(args) -> int:
    config, out = _prepare(args)
    pairs, _ = _collect_pairs(config)
    report = noise_mod.budget(config, pairs)
    write_json(out / "budget.json",
               {"schema": "levicool/budget/1", **report.to_dict()})
    _write_manifest(out, args, {"config": str(args.config),
                                "out": str(args.out)})
    head = (f"{'axis':<6}{'mode':<8}{'floor':>12}{'n_phase':>12}"
            f"{'G_eps[1/s]':>12}{'(ordinary)':>12}{'G_pt[ph/s]':>12}"
            f"{'(ordinary)':>12}{'verdict':>9}")
    print(head)
    for a in report.axes:
        print(f"{AXIS_NAMES[a.axis]:<6}{a.mode:<8}{a.total_floor:>12.4g}"
              f"{a.phase_floor:>12.4g}{a.intensity_efold:>12.4g}"
              f"{a.intensity_efold_ordinary:>12.4g}{a.pointing_rate:>12.4g}"
              f"{a.pointing_rate_ordinary:>12.4g}"
              f"{'pass' if a.ok else 'FAIL':>9}")
        for violation in a.violations:
            print(f"       violated: {violation}")
    if report.reference is not None:
        print(f"phase-noise floor at reference frequency "
              f"{_fmt(report.reference['frequency'])} rad/s: "
              f"{report.reference['phase_floor']:.4g}")
    print(f"overall: {'pass' if report.ok else 'FAIL'}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing / entry point

def _build_parser() -> _Parser:
    parser = _Parser(prog="levicool",
                     description="cavity cooling + collision-detection toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=False):
        p.add_argument("--config", required=True, help="config file (JSON)")
        p.add_argument("--out", default="levicool-out",
                       help="output directory (default: ./levicool-out)")
        p.add_argument("--threads", type=int, default=None,
                       help="cap worker threads for ensemble kernels")
        if seed:
            p.add_argument("--seed", type=_seed, default=0,
                           help="64-bit master seed (default 0)")

    p = sub.add_parser("derive", help="emit all derived quantities")
    common(p)
    p.set_defaults(func=cmd_derive)

    p = sub.add_parser("cool", help="three-axis cooling trajectories")
    common(p, seed=True)
    p.add_argument("--t-end", type=float, default=None,
                   help="simulated time span in seconds (default: 10 energy "
                        "e-folds of the slowest axis)")
    p.set_defaults(func=cmd_cool)

    p = sub.add_parser("collide", help="collision experiment logs")
    common(p, seed=True)
    p.add_argument("--duration", type=float, default=100.0,
                   help="experiment duration in seconds (default 100)")
    p.set_defaults(func=cmd_collide)

    p = sub.add_parser("fit", help="species mixture from detections.csv")
    p.add_argument("detections", help="detections.csv produced by collide")
    common(p, seed=True)
    p.add_argument("--species", type=int, default=1,
                   help="number of mixture components (default 1)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("budget", help="ground-state feasibility report")
    common(p)
    p.set_defaults(func=cmd_budget)
    return parser


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _emit_error(exc: CliError) -> int:
    payload = {"type": exc.kind, "message": str(exc),
               "exit_code": exc.exit_code}
    payload.update(exc.extra)
    print(json.dumps({"error": _quantize(payload)}, sort_keys=True))
    print(f"error: {exc}", file=sys.stderr)
    return exc.exit_code


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.threads is not None:
            if args.threads < 1:
                raise CliError(EXIT_USAGE, "usage", "--threads must be >= 1")
            if _kernels.active_backend() == "numba":
                import numba
                numba.set_num_threads(args.threads)
        if getattr(args, "species", None) is not None and args.species < 1:
            raise CliError(EXIT_USAGE, "usage", "--species must be >= 1")
        return args.func(args)
    except CliError as exc:
        return _emit_error(exc)
    except ConfigError as exc:
        return _emit_error(CliError(EXIT_CONFIG, "config", str(exc)))
    except FileNotFoundError as exc:
        return _emit_error(CliError(EXIT_CONFIG, "config",
                                    f"cannot open {exc.filename}"))
    except json.JSONDecodeError as exc:
        return _emit_error(CliError(EXIT_CONFIG, "config",
                                    f"config is not valid JSON: {exc}"))
    except coupling.BistabilityError as exc:
        return _emit_error(CliError(EXIT_UNSTABLE, "bistable", str(exc)))
    except dynamics.UnstableSystemError as exc:
        return _emit_error(CliError(EXIT_UNSTABLE, "unstable", str(exc)))


if __name__ == "__main__":
    sys.exit(main())
