"""Diagnostics computed from states and trajectories.

Sector states are (N+1) x (N+1) density matrices with the vacuum at index 0;
full-space observables take the :class:`~iontransport.network.TruncatedSpace`
describing the basis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import engines
from .network import NetworkSpec, TruncatedSpace, build_full_generator

__all__ = [
    "TransferCurve",
    "AbsorptionProbability",
    "SitePopulation",
    "TotalExcitations",
    "absorption_probability",
    "site_populations",
    "total_excitations",
    "absorption_rate",
    "driven_stationary_state",
    "optimal_source_rate",
    "trace_distance",
    "trace_distance_curve",
    "detect_recurrences",
    "decay_correction",
    "decay_correction_inverse",
]


@dataclass(frozen=True, eq=False)
class TransferCurve:
    """Absorbed-probability values over time, optionally with standard errors."""

    times: np.ndarray
    values: np.ndarray
    stderr: np.ndarray | None = None

    def __post_init__(self):
        if self.values.shape != self.times.shape:
            raise ValueError("values and times must have matching shapes")
        if self.stderr is not None and self.stderr.shape != self.times.shape:
            raise ValueError("stderr and times must have matching shapes")


def absorption_probability(state: np.ndarray, initial_vacuum_weight: float = 0.0) -> float:
    """Probability absorbed at the sink: vacuum population gained since t0."""
    return float(state[0, 0].real - initial_vacuum_weight)


@dataclass(frozen=True)
class AbsorptionProbability:
    """Picklable observable: vacuum gain relative to the initial weight."""

    initial_vacuum_weight: float = 0.0

    def __call__(self, state: np.ndarray) -> float:
        return absorption_probability(state, self.initial_vacuum_weight)


@dataclass(frozen=True)
class SitePopulation:
    """Picklable observable: excitation population of one site (1-based)."""

    site: int

    def __call__(self, state: np.ndarray) -> float:
        return float(state[self.site, self.site].real)


@dataclass(frozen=True)
class TotalExcitations:
    def __call__(self, state: np.ndarray) -> float:
        return float(np.trace(state).real - state[0, 0].real)


def site_populations(state: np.ndarray, space: TruncatedSpace | None = None) -> np.ndarray:
    """Per-site excitation populations; entry i-1 belongs to site i."""
    diag = np.diag(state).real
    if space is None:
        return diag[1:].copy()
    return np.array([
        float(np.sum(space.number_diag(site) * diag)) for site in range(1, space.n_sites + 1)
    ])


def total_excitations(state: np.ndarray, space: TruncatedSpace | None = None) -> float:
    if space is None:
        return float(np.sum(np.diag(state).real[1:]))
    return float(np.sum(space.total_number_diag() * np.diag(state).real))


def absorption_rate(steady: np.ndarray, gamma_sink: float, i_sink: int,
                    space: TruncatedSpace | None = None) -> float:
    """Rate of excitation removal at the sink in a (steady) state."""
    if space is None:
        population = float(steady[i_sink, i_sink].real)
    else:
        population = float(np.sum(space.number_diag(i_sink) * np.diag(steady).real))
    return gamma_sink * population


def driven_stationary_state(spec: NetworkSpec, gamma_source: float,
                            max_excitations: int | None = None):
    """Stationary state of the driven network, resolved from the empty network.

    Uses the unique steady state when there is one; symmetric graphs (the
    complete graph in particular) have degenerate stationary subspaces, in
    which case the long-time limit of the initially empty network is taken.
    Returns ``(state, space)``.
    """
    import dataclasses

    cutoff = spec.n_sites if max_excitations is None else max_excitations
    generator = build_full_generator(
        dataclasses.replace(spec, gamma_source=gamma_source), cutoff
    )
    try:
        steady = engines.steady_state(generator)
    except engines.DegenerateSteadyStateError:
        vacuum = np.zeros((generator.dim, generator.dim), dtype=complex)
        vacuum[0, 0] = 1.0
        steady = engines.stationary_state_from(generator, vacuum)
    return steady, generator.space


def _driven_rate(spec: NetworkSpec, gamma_source: float, max_excitations: int) -> float:
    steady, space = driven_stationary_state(spec, gamma_source, max_excitations)
    return absorption_rate(steady, spec.gamma_sink, spec.i_sink, space)


def optimal_source_rate(
    spec: NetworkSpec,
    scan_range: tuple[float, float],
    points_per_decade: int = 25,
    rel_tol: float = 1e-3,
    max_excitations: int | None = None,
) -> tuple[float, float]:
    """Source rate maximizing the steady-state absorption rate.

    Scans a log-spaced grid over ``scan_range`` and refines the best interior
    bracket by golden-section search on log(rate) to the requested relative
    tolerance. Warns if the maximum sits on the scan boundary.
    """
    lo, hi = scan_range
    if not 0.0 < lo <= hi:
        raise ValueError("scan range must be positive and ordered")
    cutoff = spec.n_sites if max_excitations is None else max_excitations
    if lo == hi:
        return lo, _driven_rate(spec, lo, cutoff)
    n_points = max(2, int(np.ceil(np.log10(hi / lo) * points_per_decade)) + 1)
    grid = np.logspace(np.log10(lo), np.log10(hi), n_points)
    rates = np.array([_driven_rate(spec, g, cutoff) for g in grid])
    best = int(np.argmax(rates))
    if best in (0, n_points - 1):
        warnings.warn("absorption-rate maximum lies on the scan boundary", stacklevel=2)
        return float(grid[best]), float(rates[best])

    # golden-section refinement on log(gamma_source)
    phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = np.log(grid[best - 1]), np.log(grid[best + 1])
    c, d = b - phi * (b - a), a + phi * (b - a)
    fc, fd = _driven_rate(spec, np.exp(c), cutoff), _driven_rate(spec, np.exp(d), cutoff)
    while (b - a) > rel_tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = _driven_rate(spec, np.exp(c), cutoff)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = _driven_rate(spec, np.exp(d), cutoff)
    x = np.exp(0.5 * (a + b))
    return float(x), float(_driven_rate(spec, x, cutoff))


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Half the trace norm of the difference of two density matrices."""
    if rho.shape != sigma.shape:
        raise ValueError("states must have the same dimensions")
    eigenvalues = scipy.linalg.eigvalsh(rho - sigma)
    return float(0.5 * np.sum(np.abs(eigenvalues)))


def trace_distance_curve(times: np.ndarray, states_a: np.ndarray,
                         states_b: np.ndarray) -> TransferCurve:
    """Trace distance between two sample-averaged evolutions, with errors.

    ``states_a`` and ``states_b`` hold per-sample states, shape
    (n_samples, n_times, d, d), paired sample by sample. The value at each
    time is the trace distance of the two ensemble means; the standard error
    comes from leave-one-out jackknife resampling.
    """
    n = states_a.shape[0]
    if states_b.shape[0] != n:
        raise ValueError("ensembles must have the same sample count")
    mean_a = states_a.mean(axis=0)
    mean_b = states_b.mean(axis=0)
    values = np.array([trace_distance(mean_a[k], mean_b[k]) for k in range(len(times))])
    if n < 2:
        return TransferCurve(times=np.asarray(times), values=values)
    stderr = np.empty(len(times))
    for k in range(len(times)):
        loo = np.empty(n)
        for s in range(n):
            loo_a = (n * mean_a[k] - states_a[s, k]) / (n - 1)
            loo_b = (n * mean_b[k] - states_b[s, k]) / (n - 1)
            loo[s] = trace_distance(loo_a, loo_b)
        stderr[k] = np.sqrt((n - 1) / n * np.sum((loo - loo.mean()) ** 2))
    return TransferCurve(times=np.asarray(times), values=values, stderr=stderr)


def detect_recurrences(curve: TransferCurve, threshold_factor: float = 5.0) -> np.ndarray:
    """Indices k where the curve rises from k to k+1 beyond the noise floor.

    An increment counts as a recurrence when it exceeds ``threshold_factor``
    times the pooled standard error of the two points.
    """
    if curve.stderr is None:
        raise ValueError("recurrence detection needs standard errors")
    increments = np.diff(curve.values)
    pooled = np.sqrt(curve.stderr[:-1] ** 2 + curve.stderr[1:] ** 2)
    return np.flatnonzero(increments > threshold_factor * pooled)


def decay_correction(curve: TransferCurve, tau1: float, t0: float = 0.0) -> TransferCurve:
    """Remove a uniform spontaneous-decay background from a transfer curve.

    Maps P to 1 - exp(-(t - t0)/tau1) (1 - P) pointwise, the probability of
    the excitation being gone when every site also decays with lifetime tau1.
    """
    if tau1 <= 0.0:
        raise ValueError("tau1 must be positive")
    factor = np.exp(-(curve.times - t0) / tau1)
    values = 1.0 - factor * (1.0 - curve.values)
    stderr = None if curve.stderr is None else factor * curve.stderr
    return TransferCurve(times=curve.times, values=values, stderr=stderr)


def decay_correction_inverse(curve: TransferCurve, tau1: float, t0: float = 0.0) -> TransferCurve:
    """Exact inverse of :func:`decay_correction`."""
    if tau1 <= 0.0:
        raise ValueError("tau1 must be positive")
    factor = np.exp((curve.times - t0) / tau1)
    values = 1.0 - factor * (1.0 - curve.values)
    stderr = None if curve.stderr is None else factor * curve.stderr
    return TransferCurve(times=curve.times, values=values, stderr=stderr)
