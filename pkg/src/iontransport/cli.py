"""Scenario-driven command line front end.

Scenario files are flat INI-style key-value text with a handful of fixed
sections. Each run writes one CSV (first column is the time or scan
coordinate; values carry 17 significant digits, Unix line endings) plus a
plain-text metadata sidecar. Identical scenario and seed give byte-identical
CSV output for any worker count.
"""

from __future__ import annotations

import argparse
import configparser
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from . import __version__, engines, ion_chain, network, observables

__all__ = ["Scenario", "ScenarioError", "EXPERIMENTS", "parse_scenario", "run_scenario", "main"]

EXPERIMENTS = (
    "transfer",
    "long-time",
    "alpha-fit",
    "disorder-sweep",
    "telegraph-sweep",
    "trace-distance",
    "driven-steady",
    "off-resonant",
)

# regularization exponent standing in for "alpha = 0" in driven steady-state
# scans: the exact complete graph has a symmetry-degenerate stationary
# subspace, while any infinitesimal range tilt selects the saturated branch
ALPHA_ZERO_REGULARIZATION = 0.005


class ScenarioError(ValueError):
    """Scenario file rejected; carries every violation found."""

    def __init__(self, violations: list[str]):
        super().__init__("invalid scenario:\n  " + "\n  ".join(violations))
        self.violations = violations


def _parse_float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.replace(",", " ").split()]


# key -> (section, parser, default); defaults of None are experiment-dependent
_SCHEMA = {
    "name": ("scenario", str, None),
    "experiment": ("scenario", str, None),
    "n": ("network", int, 10),
    "i_source": ("network", int, None),
    "i_sink": ("network", int, None),
    "gamma_sink": ("network", float, 1.0),
    "gamma": ("network", float, 0.0),
    "gammas": ("network", _parse_float_list, None),
    "kind": ("coupling", str, "ideal"),
    "kinds": ("coupling", str.split, None),
    "alpha": ("coupling", float, 1.0),
    "ratio": ("coupling", float, 20.0),
    "detuning": ("coupling", float, None),
    "alphas": ("scan", _parse_float_list, None),
    "t_max": ("scan", float, 10.0),
    "t_points": ("scan", int, 101),
    "t_eval": ("scan", float, None),
    "w_min": ("scan", float, 0.1),
    "w_max": ("scan", float, 100.0),
    "w_points": ("scan", int, 17),
    "omega_gk": ("scan", float, 4.0),
    "omega_gks": ("scan", _parse_float_list, None),
    "lambdas": ("scan", _parse_float_list, None),
    "gs_min": ("scan", float, 1e-2),
    "gs_max": ("scan", float, 1e3),
    "gs_points": ("scan", int, 16),
    "omega_consts": ("scan", _parse_float_list, None),
    "cutoff": ("scan", int, 3),
    "frac_min": ("scan", float, 1.001),
    "frac_max": ("scan", float, 10.0),
    "frac_points": ("scan", int, 25),
    "site": ("scan", int, 2),
    "samples": ("run", int, 100),
    "seed": ("run", int, 1),
    "workers": ("run", int, 1),
    "out": ("run", str, "out"),
}

_EXPERIMENT_KEYS = {
    "transfer": {"n", "i_source", "i_sink", "gamma_sink", "gamma", "kinds", "ratio",
                 "alphas", "t_max", "t_points"},
    "long-time": {"n", "i_source", "i_sink", "gamma_sink", "gammas", "t_max", "t_points"},
    "alpha-fit": {"n", "ratio", "frac_min", "frac_max", "frac_points"},
    "disorder-sweep": {"n", "i_source", "i_sink", "gamma_sink", "gammas", "w_min", "w_max",
                       "w_points", "t_eval", "samples", "seed", "workers"},
    "telegraph-sweep": {"n", "i_source", "i_sink", "gamma_sink", "omega_gks", "lambdas",
                        "t_eval", "samples", "seed", "workers"},
    "trace-distance": {"n", "i_sink", "gamma_sink", "omega_gk", "lambdas", "site",
                       "t_max", "t_points", "samples", "seed", "workers"},
    "driven-steady": {"n", "i_source", "i_sink", "gamma_sink", "kind", "ratio", "alphas",
                      "gs_min", "gs_max", "gs_points", "workers"},
    "off-resonant": {"n", "i_source", "i_sink", "gamma_sink", "alpha", "omega_consts",
                     "cutoff", "t_max", "t_points"},
}
_COMMON_KEYS = {"name", "experiment", "out"}

_EXPERIMENT_DEFAULTS = {
    "transfer": {"kinds": ["ideal"], "alphas": [0.8, 1.0, 1.2], "t_points": 201},
    "long-time": {"gammas": [0.0, 0.1], "t_max": 200.0, "t_points": 201},
    "alpha-fit": {"ratio": 50.0},
    "disorder-sweep": {"gammas": [0.0], "t_eval": 10.0, "samples": 1000},
    "telegraph-sweep": {"omega_gks": [4.0, 8.0, 16.0, 32.0, 64.0],
                        "lambdas": [0.1, 0.316, 1.0, 3.16, 10.0, 31.6, 100.0],
                        "t_eval": 2.5, "samples": 500},
    "trace-distance": {"lambdas": [0.1, 1.0, 10.0, 100.0], "t_points": 41, "samples": 150},
    "driven-steady": {"n": 6, "alphas": [0.0, 1.5, 3.0]},
    "off-resonant": {"n": 6, "omega_consts": [1.0, 2.0, 10.0], "alpha": 1.0},
}


@dataclass(frozen=True)
class Scenario:
    """Validated experiment description with defaults filled in."""

    experiment: str
    name: str
    params: dict = field(repr=False)

    def __getitem__(self, key: str):
        return self.params[key]


def _default_sites(n: int) -> tuple[int, int]:
    i_source = n // 5 + 1
    i_sink = 7 if n == 10 else int(round(4 * n / 5))
    return i_source, i_sink


def parse_scenario(path: str | Path) -> Scenario:
    """Read and validate a scenario file; report every violation at once."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    violations: list[str] = []
    try:
        parser.read_string(path.read_text())
    except configparser.Error as exc:
        raise ScenarioError([f"unparseable file: {exc}"]) from exc

    raw: dict[str, str] = {}
    for section in parser.sections():
        if section not in {"scenario", "network", "coupling", "scan", "run"}:
            violations.append(f"unknown section [{section}]")
            continue
        for key, value in parser.items(section):
            if key not in _SCHEMA:
                violations.append(f"unknown key {key!r} in [{section}]")
            elif _SCHEMA[key][0] != section:
                violations.append(f"key {key!r} belongs in [{_SCHEMA[key][0]}], found in [{section}]")
            else:
                raw[key] = value

    experiment = raw.pop("experiment", None)
    if experiment is None:
        violations.append("missing required key 'experiment' in [scenario]")
    elif experiment not in EXPERIMENTS:
        violations.append(f"unknown experiment {experiment!r}; choose from {', '.join(EXPERIMENTS)}")
    if violations and (experiment is None or experiment not in EXPERIMENTS):
        raise ScenarioError(violations)

    allowed = _EXPERIMENT_KEYS[experiment] | _COMMON_KEYS
    params: dict = {}
    for key, value in raw.items():
        if key not in allowed and key != "name":
            violations.append(f"key {key!r} does not apply to experiment {experiment!r}")
            continue
        parse = _SCHEMA[key][1]
        try:
            params[key] = parse(value)
        except ValueError:
            violations.append(f"key {key!r}: cannot parse {value!r}")

    merged = {k: v for k, (_, _, v) in _SCHEMA.items() if v is not None}
    merged.update(_EXPERIMENT_DEFAULTS.get(experiment, {}))
    merged.update(params)
    n = merged.get("n", 10)
    src_default, sink_default = _default_sites(n)
    merged.setdefault("i_source", src_default)
    merged.setdefault("i_sink", sink_default)

    _validate_params(experiment, merged, violations)
    if violations:
        raise ScenarioError(violations)
    name = merged.pop("name", experiment)
    return Scenario(experiment=experiment, name=name, params=merged)


def _validate_params(experiment: str, p: dict, violations: list[str]) -> None:
    n = p.get("n", 10)
    if n < 2:
        violations.append("n must be at least 2")
    for key in ("i_source", "i_sink", "site"):
        if key in p and key in _EXPERIMENT_KEYS[experiment] | {"i_source", "i_sink"}:
            if not 1 <= p[key] <= n:
                violations.append(f"{key}={p[key]} outside 1..{n}")
    if experiment != "alpha-fit" and p.get("i_sink") == p.get("i_source") and experiment != "trace-distance":
        violations.append("i_sink must differ from i_source")
    if experiment == "trace-distance" and p.get("site") == p.get("i_sink"):
        violations.append("site must differ from i_sink")
    for key in ("gamma_sink", "gamma", "t_max", "omega_gk"):
        if key in p and p[key] < 0:
            violations.append(f"{key} must be >= 0")
    if p.get("samples", 2) < 2 and experiment in {"disorder-sweep", "telegraph-sweep", "trace-distance"}:
        violations.append("samples must be at least 2")
    if not 0 <= p.get("seed", 1) < 2**64:
        violations.append("seed must fit in 64 bits")
    kinds = p.get("kinds", [p.get("kind", "ideal")])
    for kind in kinds:
        if kind not in {"ideal", "ms", "fully-connected"}:
            violations.append(f"unknown coupling kind {kind!r}")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _label(x: float) -> str:
    return format(float(x), "g")


def _write_csv(path: Path, header: list[str], rows: list[list[float]]) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", newline="\n")


def _write_meta(path: Path, scenario: Scenario, seed, workers: int,
                wall_time: float, extra: dict | None = None) -> None:
    lines = [
        f"scenario = {scenario.name}",
        f"experiment = {scenario.experiment}",
        f"seed = {seed}",
        f"workers = {workers}",
        f"wall_time_s = {wall_time:.3f}",
        f"iontransport_version = {__version__}",
        f"numpy_version = {np.__version__}",
        f"scipy_version = {scipy.__version__}",
        f"adaptive_tol = {engines.DEFAULT_TOL:g}",
        f"steady_state_residual = {engines.STEADY_STATE_RESIDUAL:g}",
    ]
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value}")
    path.write_text("\n".join(lines) + "\n", newline="\n")


def _coupling_for(kind: str, n: int, alpha: float, ratio: float) -> ion_chain.CouplingMatrix:
    if kind == "fully-connected" or (kind == "ideal" and alpha == 0.0):
        return ion_chain.fully_connected(n)
    if kind == "ideal":
        return ion_chain.ideal_power_law(n, alpha)
    if kind == "ms":
        modes = ion_chain.transverse_modes(ion_chain.equilibrium_positions(n), ratio)
        detuning = ion_chain.detuning_for_exponent(modes, alpha)
        return ion_chain.ms_coupling_matrix(modes, detuning)
    raise ValueError(f"unknown coupling kind {kind!r}")


def _transfer_rows(scenario: Scenario):
    p = scenario.params
    times = np.linspace(0.0, p["t_max"], p["t_points"])
    header = ["t"]
    columns = [times]
    for kind in p["kinds"]:
        for alpha in p["alphas"]:
            coupling = _coupling_for(kind, p["n"], alpha, p["ratio"])
            dephasing = (network.MarkovianDephasing.uniform(p["gamma"], p["n"])
                         if p["gamma"] > 0 else None)
            spec = network.NetworkSpec(coupling=coupling, i_source=p["i_source"],
                                       i_sink=p["i_sink"], gamma_sink=p["gamma_sink"],
                                       dephasing=dephasing)
            gen = network.build_sector_generator(spec)
            rho0 = network.initial_state(spec, "single_excitation_at_source")
            result = engines.propagate(gen, rho0, engines.TimeGrid(times[1:]), method="expm")
            curve = np.concatenate([[0.0], result.states[:, 0, 0].real])
            header.append(f"p_{kind}_alpha_{_label(alpha)}")
            columns.append(curve)
    return header, [list(row) for row in np.column_stack(columns)], {}


def _long_time_rows(scenario: Scenario):
    p = scenario.params
    times = np.linspace(0.0, p["t_max"], p["t_points"])
    header = ["t"]
    columns = [times]
    extra = {}
    coupling = ion_chain.fully_connected(p["n"])
    for gamma in p["gammas"]:
        dephasing = network.MarkovianDephasing.uniform(gamma, p["n"]) if gamma > 0 else None
        spec = network.NetworkSpec(coupling=coupling, i_source=p["i_source"],
                                   i_sink=p["i_sink"], gamma_sink=p["gamma_sink"],
                                   dephasing=dephasing)
        gen = network.build_sector_generator(spec)
        rho0 = network.initial_state(spec, "single_excitation_at_source")
        result = engines.propagate(gen, rho0, engines.TimeGrid(times[1:]), method="expm")
        curve = np.concatenate([[0.0], result.states[:, 0, 0].real])
        header.append(f"p_gamma_{_label(gamma)}")
        columns.append(curve)
        rate = abs(curve[-1] - curve[-2]) / (times[-1] - times[-2])
        extra[f"stationary_gamma_{_label(gamma)}"] = (
            f"|dP/dt|={rate:.3e} at t={times[-1]:g} "
            f"({'stationary' if rate < 1e-6 else 'NOT stationary'} at 1e-6)"
        )
    return header, [list(row) for row in np.column_stack(columns)], extra


def _alpha_fit_rows(scenario: Scenario):
    p = scenario.params
    modes = ion_chain.transverse_modes(ion_chain.equilibrium_positions(p["n"]), p["ratio"])
    nu_max = modes.mode_freqs[-1]
    fracs = np.logspace(np.log10(p["frac_min"]), np.log10(p["frac_max"]), p["frac_points"])
    rows = []
    for frac in fracs:
        detuning = frac * nu_max
        alpha, chi2 = ion_chain.fit_alpha(ion_chain.ms_coupling_matrix(modes, detuning))
        rows.append([detuning, frac, alpha, chi2])
    return ["detuning", "detuning_over_nu_max", "alpha", "chi2"], rows, {
        "nu_max": f"{nu_max:.12g}"
    }


def _disorder_rows(scenario: Scenario, workers: int, seed: int):
    p = scenario.params
    grid = engines.TimeGrid([p["t_eval"]])
    widths = np.concatenate([[0.0], np.logspace(np.log10(p["w_min"]), np.log10(p["w_max"]),
                                                p["w_points"])])
    header = ["w"]
    columns = [widths]
    observable = [("p_abs", observables.AbsorptionProbability())]
    for gamma in p["gammas"]:
        dephasing = network.MarkovianDephasing.uniform(gamma, p["n"]) if gamma > 0 else None
        spec = network.NetworkSpec(coupling=ion_chain.fully_connected(p["n"]),
                                   i_source=p["i_source"], i_sink=p["i_sink"],
                                   gamma_sink=p["gamma_sink"], dephasing=dephasing)
        psi0 = network.initial_state_vector(spec, "single_excitation_at_source")
        means, errs = [], []
        for width in widths:
            if width == 0.0:
                gen = network.build_sector_generator(spec)
                rho0 = network.initial_state(spec, "single_excitation_at_source")
                value = engines.propagate(gen, rho0, grid, method="expm").states[0, 0, 0].real
                means.append(value)
                errs.append(0.0)
                continue
            disorder = network.DisorderSpec(width=width, n_samples=p["samples"], seed=seed)
            result = engines.run_ensemble(spec, disorder, psi0, grid, observable,
                                          n_workers=workers)
            means.append(result.means[0][0])
            errs.append(result.stderrs[0][0])
        header.extend([f"mean_gamma_{_label(gamma)}", f"stderr_gamma_{_label(gamma)}"])
        columns.extend([np.array(means), np.array(errs)])
    return header, [list(row) for row in np.column_stack(columns)], {}


def _telegraph_rows(scenario: Scenario, workers: int, seed: int):
    p = scenario.params
    grid = engines.TimeGrid([p["t_eval"]])
    spec = network.NetworkSpec(coupling=ion_chain.fully_connected(p["n"]),
                               i_source=p["i_source"], i_sink=p["i_sink"],
                               gamma_sink=p["gamma_sink"])
    psi0 = network.initial_state_vector(spec, "single_excitation_at_source")
    observable = [("p_abs", observables.AbsorptionProbability())]
    header = ["lambda"]
    columns = [np.array(p["lambdas"], dtype=float)]
    for omega in p["omega_gks"]:
        means, errs, markov = [], [], []
        for lam in p["lambdas"]:
            noise = network.TelegraphDephasing(omega_gk=omega, flip_rate=lam)
            ensemble = engines.TelegraphEnsemble(noise=noise, n_samples=p["samples"], seed=seed)
            result = engines.run_ensemble(spec, ensemble, psi0, grid, observable,
                                          n_workers=workers)
            means.append(result.means[0][0])
            errs.append(result.stderrs[0][0])
            mspec = network.NetworkSpec(
                coupling=spec.coupling, i_source=p["i_source"], i_sink=p["i_sink"],
                gamma_sink=p["gamma_sink"],
                dephasing=network.MarkovianDephasing.uniform(noise.markovian_rate(), p["n"]),
            )
            rho0 = network.initial_state(mspec, "single_excitation_at_source")
            ref = engines.propagate(network.build_sector_generator(mspec), rho0, grid,
                                    method="expm").states[0, 0, 0].real
            markov.append(ref)
        tag = _label(omega)
        header.extend([f"mean_wgk_{tag}", f"stderr_wgk_{tag}", f"markov_wgk_{tag}"])
        columns.extend([np.array(means), np.array(errs), np.array(markov)])
    return header, [list(row) for row in np.column_stack(columns)], {}


def _trace_distance_rows(scenario: Scenario, workers: int, seed: int):
    p = scenario.params
    times = np.linspace(0.0, p["t_max"], p["t_points"])
    grid = engines.TimeGrid(times)
    src = p["site"] if p["site"] != p["i_sink"] else p["site"] + 1
    spec = network.NetworkSpec(coupling=ion_chain.fully_connected(p["n"]), i_source=src,
                               i_sink=p["i_sink"], gamma_sink=p["gamma_sink"])
    psi1 = np.zeros(p["n"] + 1, dtype=complex)
    psi1[p["site"]] = 1.0
    psi2 = network.initial_state_vector(spec, "superposition_half_site", site=p["site"])
    header = ["t"]
    columns = [times]
    for lam in p["lambdas"]:
        noise = network.TelegraphDephasing(omega_gk=p["omega_gk"], flip_rate=lam)
        states_a = engines.telegraph_state_ensemble(spec, noise, psi1, grid, p["samples"],
                                                    seed, n_workers=workers)
        states_b = engines.telegraph_state_ensemble(spec, noise, psi2, grid, p["samples"],
                                                    seed, n_workers=workers)
        curve = observables.trace_distance_curve(times, states_a, states_b)
        tag = _label(lam)
        header.extend([f"mean_lambda_{tag}", f"stderr_lambda_{tag}"])
        columns.extend([curve.values, curve.stderr])
    return header, [list(row) for row in np.column_stack(columns)], {}


def _driven_point(args):
    spec, gamma_source = args
    steady, space = observables.driven_stationary_state(spec, gamma_source)
    rate = observables.absorption_rate(steady, spec.gamma_sink, spec.i_sink, space)
    n_exc = observables.total_excitations(steady, space)
    pops = observables.site_populations(steady, space)
    return [rate, n_exc, *pops]


def _driven_rows(scenario: Scenario, workers: int):
    p = scenario.params
    gs_grid = np.logspace(np.log10(p["gs_min"]), np.log10(p["gs_max"]), p["gs_points"])
    header = ["gamma_source"]
    columns = [gs_grid]
    extra = {}
    for alpha in p["alphas"]:
        effective_alpha = alpha
        if p["kind"] == "ideal" and alpha == 0.0:
            effective_alpha = ALPHA_ZERO_REGULARIZATION
            extra["alpha_zero_regularization"] = _label(ALPHA_ZERO_REGULARIZATION)
        coupling = (ion_chain.ideal_power_law(p["n"], effective_alpha) if p["kind"] == "ideal"
                    else _coupling_for(p["kind"], p["n"], effective_alpha, p["ratio"]))
        spec = network.NetworkSpec(coupling=coupling, i_source=p["i_source"],
                                   i_sink=p["i_sink"], gamma_sink=p["gamma_sink"])
        tasks = [(spec, gs) for gs in gs_grid]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=min(workers, len(tasks))) as pool:
                results = list(pool.map(_driven_point, tasks))
        else:
            results = [_driven_point(task) for task in tasks]
        table = np.array(results)
        tag = _label(alpha)
        header.extend([f"rate_alpha_{tag}", f"nexc_alpha_{tag}"])
        header.extend([f"pop{site}_alpha_{tag}" for site in range(1, p["n"] + 1)])
        columns.extend(table.T)
    return header, [list(row) for row in np.column_stack(columns)], extra


def _off_resonant_rows(scenario: Scenario):
    p = scenario.params
    times = np.linspace(0.0, p["t_max"], p["t_points"])
    coupling = _coupling_for("ideal", p["n"], p["alpha"], 20.0)
    spec = network.NetworkSpec(coupling=coupling, i_source=p["i_source"], i_sink=p["i_sink"],
                               gamma_sink=p["gamma_sink"])
    gen = network.build_sector_generator(spec)
    rho0 = network.initial_state(spec, "single_excitation_at_source")
    ideal = engines.propagate(gen, rho0, engines.TimeGrid(times[1:]), method="expm")
    header = ["t", "p_ideal"]
    columns = [times, np.concatenate([[0.0], ideal.states[:, 0, 0].real])]
    extra = {}
    for omega in p["omega_consts"]:
        full = network.build_offresonant_generator(coupling, omega, i_sink=p["i_sink"],
                                                   gamma_sink=p["gamma_sink"],
                                                   max_excitations=p["cutoff"])
        rho0_full = full.space.embed_sector_matrix(rho0)
        result = engines.propagate(full, rho0_full, engines.TimeGrid(times))
        columns.append(result.states[:, 0, 0].real)
        header.append(f"p_wconst_{_label(omega)}")
        check = network.build_offresonant_generator(coupling, omega, i_sink=p["i_sink"],
                                                    gamma_sink=p["gamma_sink"],
                                                    max_excitations=min(p["cutoff"] + 1, p["n"]))
        rho0_check = check.space.embed_sector_matrix(rho0)
        probe = engines.TimeGrid(times[:: max(1, (len(times) - 1) // 4)][1:])
        coarse = engines.propagate(check, rho0_check, probe).states[:, 0, 0].real
        fine = engines.propagate(full, rho0_full, probe).states[:, 0, 0].real
        extra[f"cutoff_convergence_wconst_{_label(omega)}"] = (
            f"max|P(cutoff={p['cutoff']})-P(cutoff={min(p['cutoff'] + 1, p['n'])})|"
            f"={np.max(np.abs(coarse - fine)):.2e}"
        )
    return header, [list(row) for row in np.column_stack(columns)], extra


def run_scenario(scenario: Scenario, out_dir: str | Path | None = None,
                 workers: int | None = None, seed: int | None = None) -> list[Path]:
    """Execute a scenario; returns the paths of the files written."""
    p = scenario.params
    out = Path(out_dir if out_dir is not None else p.get("out", "out"))
    out.mkdir(parents=True, exist_ok=True)
    n_workers = workers if workers is not None else p.get("workers", 1)
    if n_workers == 0:
        import os

        n_workers = os.cpu_count() or 1
    run_seed = seed if seed is not None else p.get("seed", 1)

    start = time.perf_counter()
    if scenario.experiment == "transfer":
        header, rows, extra = _transfer_rows(scenario)
    elif scenario.experiment == "long-time":
        header, rows, extra = _long_time_rows(scenario)
    elif scenario.experiment == "alpha-fit":
        header, rows, extra = _alpha_fit_rows(scenario)
    elif scenario.experiment == "disorder-sweep":
        header, rows, extra = _disorder_rows(scenario, n_workers, run_seed)
    elif scenario.experiment == "telegraph-sweep":
        header, rows, extra = _telegraph_rows(scenario, n_workers, run_seed)
    elif scenario.experiment == "trace-distance":
        header, rows, extra = _trace_distance_rows(scenario, n_workers, run_seed)
    elif scenario.experiment == "driven-steady":
        header, rows, extra = _driven_rows(scenario, n_workers)
    elif scenario.experiment == "off-resonant":
        header, rows, extra = _off_resonant_rows(scenario)
    else:  # pragma: no cover - parse_scenario guards this
        raise ValueError(f"unknown experiment {scenario.experiment!r}")
    wall = time.perf_counter() - start

    csv_path = out / f"{scenario.name}.csv"
    meta_path = out / f"{scenario.name}.meta.txt"
    _write_csv(csv_path, header, rows)
    _write_meta(meta_path, scenario, run_seed, n_workers, wall, extra)
    return [csv_path, meta_path]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="iontransport",
        description="Excitation-transport scenarios for open spin networks",
    )
    parser.add_argument("--scenario", help="path to a scenario file")
    parser.add_argument("--out", help="output directory (overrides the scenario)")
    parser.add_argument("--workers", type=int, default=None,
                        help="worker processes; 0 means all cores")
    parser.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    parser.add_argument("--list-experiments", action="store_true",
                        help="list available experiment kinds and exit")
    args = parser.parse_args(argv)

    if args.list_experiments:
        for kind in EXPERIMENTS:
            print(kind)
        return 0
    if not args.scenario:
        parser.error("--scenario is required unless --list-experiments is given")
    try:
        scenario = parse_scenario(args.scenario)
    except (ScenarioError, FileNotFoundError) as exc:
        print(exc, file=sys.stderr)
        return 2
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("seed must fit in 64 bits", file=sys.stderr)
        return 2
    try:
        paths = run_scenario(scenario, out_dir=args.out, workers=args.workers, seed=args.seed)
    except Exception as exc:  # engine errors surface with scenario context
        print(f"scenario {scenario.name!r} ({scenario.experiment}) failed: {exc}",
              file=sys.stderr)
        return 1
    for path in paths:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
