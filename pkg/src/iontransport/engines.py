"""Time propagation, Monte-Carlo ensembles, and steady states.

Two propagation routes exist for every time-independent generator: adaptive
embedded Runge-Kutta stepping and an exact matrix-exponential path on the
vectorized generator; they must agree to within an order of magnitude of the
local tolerance. Noise and disorder ensembles evaluate each sample as a pure
function of (seed, sample index), so results are independent of execution
order and worker count; sample reductions use fixed-order pairwise summation.
"""

from __future__ import annotations

import dataclasses
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply

from .network import (
    DisorderSpec,
    FullGenerator,
    NetworkSpec,
    SectorGenerator,
    TelegraphDephasing,
    TelegraphPath,
    build_sector_generator,
    sample_disorder,
    sample_telegraph,
)

__all__ = [
    "TimeGrid",
    "PropagationResult",
    "EnsembleResult",
    "TelegraphEnsemble",
    "InvariantViolationError",
    "SteadyStateError",
    "DegenerateSteadyStateError",
    "propagate",
    "propagate_telegraph_trajectory",
    "reconstruct_sector_density",
    "telegraph_state_ensemble",
    "run_ensemble",
    "steady_state",
    "stationary_state_from",
    "kraus_decay_step",
    "trotterized_sink_evolution",
]

DEFAULT_TOL = 1e-8
STEADY_STATE_RESIDUAL = 1e-10
PSD_SLACK = 1e-9


class InvariantViolationError(RuntimeError):
    """A propagated state left the physical manifold beyond tolerance."""


class SteadyStateError(RuntimeError):
    """Steady-state solve failed."""


class DegenerateSteadyStateError(SteadyStateError):
    """The generator has more than one steady state."""

    def __init__(self, null_dimension: int):
        super().__init__(f"steady state is degenerate: null-space dimension {null_dimension}")
        self.null_dimension = null_dimension


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly ascending evaluation times, starting at or after t = 0."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=float))
        object.__setattr__(self, "points", pts)
        if pts.size == 0 or pts[0] < 0.0 or np.any(np.diff(pts) <= 0.0):
            raise ValueError("grid points must be strictly ascending and >= 0")

    @classmethod
    def linear(cls, t_max: float, n_points: int, t_min: float = 0.0) -> "TimeGrid":
        return cls(np.linspace(t_min, t_max, n_points))

    def __len__(self) -> int:
        return self.points.size


def _as_grid(grid) -> TimeGrid:
    return grid if isinstance(grid, TimeGrid) else TimeGrid(grid)


@dataclass(frozen=True, eq=False)
class PropagationResult:
    times: np.ndarray
    states: np.ndarray  # (n_times, dim, dim)
    absorbed: np.ndarray  # cumulative sink absorption, zero when no sink


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    """Per-time-point observable means and standard errors over samples."""

    times: np.ndarray
    names: tuple[str, ...]
    means: np.ndarray  # (n_observables, n_times)
    stderrs: np.ndarray
    n_samples: int

    def mean(self, name: str) -> np.ndarray:
        return self.means[self.names.index(name)]

    def stderr(self, name: str) -> np.ndarray:
        return self.stderrs[self.names.index(name)]


@dataclass(frozen=True)
class TelegraphEnsemble:
    """Telegraph-noise ensemble: noise model, sample count, and base seed."""

    noise: TelegraphDephasing
    n_samples: int
    seed: int

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("need at least one sample")


def _sink_population_weights(generator) -> np.ndarray | None:
    """Diagonal weights w with d(absorbed)/dt = gamma * sum_k w_k rho_kk."""
    if isinstance(generator, SectorGenerator):
        if generator.gamma_sink == 0.0:
            return None
        w = np.zeros(generator.dim)
        w[generator.i_sink] = generator.gamma_sink
        return w
    diag = generator.sink_number_diag()
    if diag is None or generator.gamma_sink == 0.0:
        return None
    return generator.gamma_sink * diag


def _validate_density(rho: np.ndarray, where: str) -> np.ndarray:
    defect = np.max(np.abs(rho - rho.conj().T))
    if defect > 1e-8:
        raise InvariantViolationError(f"{where}: hermiticity defect {defect:.3e}")
    rho = 0.5 * (rho + rho.conj().T)
    trace_defect = abs(np.trace(rho).real - 1.0)
    if trace_defect > 1e-9:
        raise InvariantViolationError(f"{where}: trace deviates by {trace_defect:.3e}")
    min_eig = scipy.linalg.eigvalsh(rho)[0]
    if min_eig < -PSD_SLACK:
        raise InvariantViolationError(f"{where}: negative eigenvalue {min_eig:.3e}")
    return rho


def propagate(generator, state0: np.ndarray, grid, tol: float = DEFAULT_TOL,
              method: str = "adaptive", validate: bool = True) -> PropagationResult:
    """Propagate a density matrix from t = 0 to every grid point.

    ``method="adaptive"`` uses embedded Runge-Kutta stepping with local
    relative tolerance ``tol``; ``method="expm"`` takes exact matrix
    exponentials of the vectorized generator (time-independent only).
    Cumulative sink absorption is integrated alongside the state.
    """
    grid = _as_grid(grid)
    times = grid.points
    dim = state0.shape[0]
    rho0 = np.asarray(state0, dtype=complex)
    weights = _sink_population_weights(generator)
    diag_idx = np.arange(dim) * dim + np.arange(dim)

    if method == "expm":
        if getattr(generator, "time_dependent", False):
            raise ValueError("matrix-exponential path needs a time-independent generator")
        sup = generator.to_superoperator()
        m = sup.shape[0]
        aug = np.zeros((m + 1, m + 1), dtype=complex)
        aug[:m, :m] = sup
        if weights is not None:
            aug[m, diag_idx] = weights
        y = np.zeros(m + 1, dtype=complex)
        y[:m] = rho0.reshape(-1)
        states = np.empty((len(times), dim, dim), dtype=complex)
        absorbed = np.zeros(len(times))
        t_prev = 0.0
        step_cache: dict[float, np.ndarray] = {}
        for k, t in enumerate(times):
            dt = t - t_prev
            if dt > 0.0:
                u = step_cache.get(dt)
                if u is None:
                    u = scipy.linalg.expm(aug * dt)
                    step_cache[dt] = u
                y = u @ y
            states[k] = y[:m].reshape(dim, dim)
            absorbed[k] = y[m].real
            t_prev = t
    elif method == "adaptive":
        def rhs(t, y):
            rho = y[:-1].reshape(dim, dim)
            drho = generator.apply(rho, t)
            dabs = 0.0
            if weights is not None:
                dabs = float(np.real(np.sum(weights * np.diag(rho))))
            return np.concatenate([drho.reshape(-1), [dabs]])

        y0 = np.concatenate([rho0.reshape(-1), [0.0j]])
        t_end = times[-1] if times[-1] > 0.0 else 1e-12
        sol = solve_ivp(rhs, (0.0, t_end), y0, t_eval=np.maximum(times, 0.0),
                        method="DOP853", rtol=tol, atol=tol * 1e-4)
        if not sol.success:
            raise InvariantViolationError(f"adaptive propagation failed: {sol.message}")
        states = sol.y[:-1].T.reshape(len(times), dim, dim)
        absorbed = sol.y[-1].real
    else:
        raise ValueError(f"unknown method {method!r}")

    if validate:
        states = np.stack([
            _validate_density(states[k], f"t={times[k]:g}") for k in range(len(times))
        ])
    return PropagationResult(times=times, states=states, absorbed=absorbed)


class _PiecewiseConstantPropagator:
    """Exact step propagator for H_eff = H_hop + diag(energies) - (i/2) sink projector.

    ``energies`` replace the site diagonal wholesale (static part included).
    Caches the spectral decomposition per distinct diagonal, keyed by the
    telegraph sign configuration.
    """

    def __init__(self, spec: NetworkSpec):
        base = build_sector_generator(spec.without_dephasing())
        self.dim = base.dim
        h = base.h.copy()
        idx = np.arange(1, self.dim)
        h[idx, idx] = 0.0  # callers pass the full site diagonal per step
        sink = np.zeros(self.dim)
        sink[spec.i_sink] = 1.0
        self.h_eff_base = h - 0.5j * spec.gamma_sink * np.diag(sink)
        self._cache: dict[tuple, tuple] = {}

    def _decomposition(self, key: tuple, energies: np.ndarray):
        entry = self._cache.get(key)
        if entry is None:
            h = self.h_eff_base.copy()
            idx = np.arange(1, self.dim)
            h[idx, idx] += energies
            w, v = np.linalg.eig(h)
            entry = (w, v, np.linalg.inv(v))
            self._cache[key] = entry
        return entry

    def step(self, psi: np.ndarray, duration: float, key: tuple, energies: np.ndarray) -> np.ndarray:
        w, v, v_inv = self._decomposition(key, energies)
        return v @ (np.exp(-1j * w * duration) * (v_inv @ psi))


def propagate_telegraph_trajectory(
    spec: NetworkSpec,
    path: TelegraphPath,
    state0: np.ndarray,
    grid,
    _propagator: _PiecewiseConstantPropagator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Pure-state evolution under one telegraph-noise realization.

    Between switch times the amplitude vector evolves under the
    piecewise-constant non-Hermitian generator (hopping + fluctuating site
    energies - i/2 sink projector) by exact exponentials; switch times and
    grid points are both step boundaries. Returns the amplitude trajectory
    and the absorbed weight 1 - |psi|^2 at each grid point. The unconditional
    density matrix is recovered by :func:`reconstruct_sector_density`; this is
    exact because the only jump lands in the stationary vacuum.
    """
    if spec.gamma_source != 0.0:
        raise ValueError("trajectory evolution requires gamma_source = 0")
    if not isinstance(spec.dephasing, TelegraphDephasing):
        raise ValueError("spec must carry the telegraph noise model")
    grid = _as_grid(grid)
    times = grid.points
    omega = spec.dephasing.omega_gk
    prop = _propagator if _propagator is not None else _PiecewiseConstantPropagator(spec)

    # one merged event sweep: switches flip one site each, grid points emit
    t_end = times[-1]
    flip_times = np.concatenate(path.switch_times) if path.n_sites else np.empty(0)
    flip_sites = np.concatenate([
        np.full(len(s), i) for i, s in enumerate(path.switch_times)
    ]) if path.n_sites else np.empty(0, dtype=int)
    keep = flip_times < t_end
    flip_times, flip_sites = flip_times[keep], flip_sites[keep].astype(int)
    event_times = np.concatenate([flip_times, times])
    # grid events sort after flips at equal times so emission sees the new sign
    event_kind = np.concatenate([np.full(len(flip_times), 0), np.full(len(times), 1)])
    event_payload = np.concatenate([flip_sites, np.arange(len(times))])
    order = np.lexsort((event_kind, event_times))

    signs = path.initial_signs.astype(float).copy()
    base_energies = spec.site_energies
    psi = np.asarray(state0, dtype=complex).copy()
    out = np.empty((len(times), psi.size), dtype=complex)
    t_now = 0.0
    key = tuple(signs)
    for idx in order:
        t_event = event_times[idx]
        if t_event > t_now:
            psi = prop.step(psi, t_event - t_now, key, base_energies + 0.5 * omega * signs)
            t_now = t_event
        if event_kind[idx] == 0:
            signs[event_payload[idx]] *= -1.0
            key = tuple(signs)
        else:
            out[event_payload[idx]] = psi
    absorbed = 1.0 - np.einsum("ki,ki->k", out, out.conj()).real
    return out, absorbed


def reconstruct_sector_density(psi: np.ndarray) -> np.ndarray:
    """Unconditional density matrix of a sink-damped pure trajectory."""
    rho = np.outer(psi, psi.conj())
    rho[0, 0] += 1.0 - np.vdot(psi, psi).real
    return rho


def _static_pure_trajectory(spec: NetworkSpec, energies: np.ndarray,
                            state0: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Amplitude trajectory for static site energies (no dephasing)."""
    prop = _PiecewiseConstantPropagator(spec)
    psi0 = np.asarray(state0, dtype=complex)
    key = ("static",)
    out = np.empty((len(times), psi0.size), dtype=complex)
    for k, t in enumerate(times):
        out[k] = prop.step(psi0, t, key, energies) if t > 0.0 else psi0
    return out


def _pairwise_sum(values: np.ndarray) -> np.ndarray:
    """Fixed-order pairwise reduction along axis 0 (worker-count independent)."""
    arr = np.asarray(values)
    while arr.shape[0] > 1:
        n = arr.shape[0]
        even = arr[: n - n % 2]
        reduced = even[0::2] + even[1::2]
        if n % 2:
            reduced = np.concatenate([reduced, arr[-1:]], axis=0)
        arr = reduced
    return arr[0]


def _expm_action_states(generator, rho0: np.ndarray, times: np.ndarray) -> np.ndarray:
    """Exact evolution via the exponential action on the vectorized state.

    Cheaper than forming the full step propagator when only one initial state
    is evolved, as in ensemble members.
    """
    dim = rho0.shape[0]
    sup = scipy.sparse.csr_matrix(generator.to_superoperator())
    y = rho0.reshape(-1).astype(complex)
    states = np.empty((len(times), dim, dim), dtype=complex)
    t_prev = 0.0
    for k, t in enumerate(times):
        if t > t_prev:
            y = expm_multiply(sup * (t - t_prev), y)
        states[k] = y.reshape(dim, dim)
        t_prev = t
    return states


def _ensemble_sample_states(spec: NetworkSpec, variation, state0, times: np.ndarray,
                            sample_index: int, shared: dict | None = None) -> np.ndarray:
    """Sector density matrices of one ensemble member at the grid times."""
    shared = shared or {}
    if isinstance(variation, DisorderSpec):
        energies = spec.site_energies + sample_disorder(variation, sample_index, spec.n_sites)
        if spec.dephasing is None and np.asarray(state0).ndim == 1:
            psis = _static_pure_trajectory(spec, energies, state0, times)
            return np.stack([reconstruct_sector_density(p) for p in psis])
        sample_spec = spec.with_site_energies(energies)
        gen = build_sector_generator(sample_spec)
        rho0 = state0 if np.asarray(state0).ndim == 2 else np.outer(state0, np.conj(state0))
        return _expm_action_states(gen, rho0, times)
    if isinstance(variation, TelegraphEnsemble):
        if np.asarray(state0).ndim != 1:
            raise ValueError("telegraph ensembles evolve pure states; pass an amplitude vector")
        path = sample_telegraph(variation.noise, float(times[-1]) or 1.0,
                                variation.seed, sample_index, spec.n_sites)
        noisy_spec = shared.get("spec") or dataclasses.replace(spec, dephasing=variation.noise)
        psis, _ = propagate_telegraph_trajectory(noisy_spec, path, state0, TimeGrid(times),
                                                 _propagator=shared.get("prop"))
        return np.stack([reconstruct_sector_density(p) for p in psis])
    raise TypeError(f"unsupported variation {type(variation).__name__}")


def _ensemble_worker(args) -> np.ndarray:
    spec, variation, state0, times, observables, start, stop = args
    out = np.empty((stop - start, len(observables), len(times)))
    shared = {}
    if isinstance(variation, TelegraphEnsemble):
        noisy_spec = dataclasses.replace(spec, dephasing=variation.noise)
        shared["spec"] = noisy_spec
        shared["prop"] = _PiecewiseConstantPropagator(noisy_spec)
    for s in range(start, stop):
        states = _ensemble_sample_states(spec, variation, state0, times, s, shared)
        for i, (_, fn) in enumerate(observables):
            out[s - start, i] = [fn(states[k]) for k in range(len(times))]
    return out


def _run_workers(args_builder, n_tasks: int, n_workers: int):
    """Map index chunks to workers; results come back in chunk order."""
    if n_workers <= 1 or n_tasks == 1:
        return [args_builder(0, n_tasks)], None
    n_workers = min(n_workers, n_tasks)
    bounds = np.linspace(0, n_tasks, n_workers + 1).astype(int)
    chunks = [args_builder(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    return chunks, n_workers


def run_ensemble(spec: NetworkSpec, variation, state0, grid, observables,
                 n_workers: int = 1) -> EnsembleResult:
    """Observable means and standard errors over a disorder or noise ensemble.

    ``observables`` is a list of (name, callable) pairs evaluated on the
    sector density matrix at every grid point. The reduction over samples is
    a fixed-order pairwise sum over the sample index, so the result is
    bitwise-identical for any worker count.
    """
    grid = _as_grid(grid)
    times = grid.points
    if isinstance(variation, DisorderSpec):
        n_samples = variation.n_samples
    elif isinstance(variation, TelegraphEnsemble):
        n_samples = variation.n_samples
    else:
        raise TypeError(f"unsupported variation {type(variation).__name__}")
    if n_samples < 2:
        raise ValueError("ensembles need at least 2 samples")

    def build(start, stop):
        return (spec, variation, state0, times, list(observables), start, stop)

    chunks, pool_size = _run_workers(build, n_samples, n_workers)
    if pool_size is None:
        blocks = [_ensemble_worker(chunks[0])]
    else:
        with ProcessPoolExecutor(max_workers=pool_size) as pool:
            blocks = list(pool.map(_ensemble_worker, chunks))
    samples = np.concatenate(blocks, axis=0)  # (n_samples, n_obs, n_times)

    means = _pairwise_sum(samples) / n_samples
    deviations = (samples - means) ** 2
    variances = _pairwise_sum(deviations) / (n_samples - 1)
    stderrs = np.sqrt(variances / n_samples)
    return EnsembleResult(times=times, names=tuple(name for name, _ in observables),
                          means=means, stderrs=stderrs, n_samples=n_samples)


def _telegraph_states_worker(args) -> np.ndarray:
    spec, noise, state0, times, seed, start, stop = args
    dim = spec.n_sites + 1
    out = np.empty((stop - start, len(times), dim, dim), dtype=complex)
    noisy_spec = dataclasses.replace(spec, dephasing=noise)
    prop = _PiecewiseConstantPropagator(noisy_spec)
    for s in range(start, stop):
        path = sample_telegraph(noise, float(times[-1]) or 1.0, seed, s, spec.n_sites)
        psis, _ = propagate_telegraph_trajectory(noisy_spec, path, state0, TimeGrid(times),
                                                 _propagator=prop)
        for k in range(len(times)):
            out[s - start, k] = reconstruct_sector_density(psis[k])
    return out


def telegraph_state_ensemble(spec: NetworkSpec, noise: TelegraphDephasing, state0: np.ndarray,
                             grid, n_samples: int, seed: int,
                             n_workers: int = 1) -> np.ndarray:
    """Per-sample reconstructed sector states, shape (n_samples, n_times, d, d).

    Two calls with the same seed see identical noise paths sample by sample,
    which pairs the realizations when comparing different initial states.
    """
    grid = _as_grid(grid)
    times = grid.points

    def build(start, stop):
        return (spec, noise, state0, times, seed, start, stop)

    chunks, pool_size = _run_workers(build, n_samples, n_workers)
    if pool_size is None:
        blocks = [_telegraph_states_worker(chunks[0])]
    else:
        with ProcessPoolExecutor(max_workers=pool_size) as pool:
            blocks = list(pool.map(_telegraph_states_worker, chunks))
    return np.concatenate(blocks, axis=0)


def _bordered_solve(matrix: np.ndarray, trace_vec: np.ndarray) -> np.ndarray:
    """Solve matrix @ x = 0 with trace_vec @ x = 1 via one bordered system.

    The border column is the vectorized identity, which trace preservation
    keeps out of the generator's range. The border is scaled to the matrix
    norm so widely separated rates do not wreck the conditioning.
    """
    m = matrix.shape[0]
    scale = np.linalg.norm(matrix, ord=np.inf)
    scale = scale if scale > 0.0 else 1.0
    bordered = np.zeros((m + 1, m + 1), dtype=complex)
    bordered[:m, :m] = matrix
    bordered[:m, m] = scale * trace_vec.conj()
    bordered[m, :m] = scale * trace_vec
    rhs = np.zeros(m + 1, dtype=complex)
    rhs[m] = scale
    with warnings.catch_warnings():
        # conditioning chatter is covered by the uniqueness and residual checks
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        solution = scipy.linalg.solve(bordered, rhs)
    return solution[:m]


def _null_space_dimension(matrix: np.ndarray) -> int:
    singular = scipy.linalg.svdvals(matrix)
    scale = singular[0] if singular[0] > 0 else 1.0
    return int(np.sum(singular < 1e-10 * scale))


def _solve_unique_steady(matrix: np.ndarray, trace_vec: np.ndarray) -> np.ndarray:
    """Null vector with unit trace, verified unique.

    A kernel of dimension above one makes the bordered system singular for
    any border column, so uniqueness is certified by re-solving with an
    independent border column (a rank-one update of the factored system,
    nearly free) and demanding agreement. The singular-value count runs only
    on suspicion, to report the degeneracy dimension.
    """
    m = matrix.shape[0]
    scale = np.linalg.norm(matrix, ord=np.inf)
    scale = scale if scale > 0.0 else 1.0
    bordered = np.zeros((m + 1, m + 1), dtype=complex)
    bordered[:m, :m] = matrix
    bordered[:m, m] = scale * trace_vec.conj()
    bordered[m, :m] = scale * trace_vec
    rhs = np.zeros(m + 1, dtype=complex)
    rhs[m] = scale
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            factored = scipy.linalg.lu_factor(bordered)
            pivots = np.abs(np.diag(factored[0]))
            if pivots.min() <= 1e-14 * pivots.max():
                raise SteadyStateError("bordered system is numerically singular")
            x_full = scipy.linalg.lu_solve(factored, rhs)
            # Sherman-Morrison: swap the border column for a fixed probe
            probe = np.random.default_rng(0x5EED).standard_normal(m) + 0.3
            delta = np.zeros(m + 1, dtype=complex)
            delta[:m] = scale * (probe - trace_vec.conj())
            u = scipy.linalg.lu_solve(factored, delta)
            denominator = 1.0 + u[m]
            if abs(denominator) < 1e-10:
                raise SteadyStateError("uniqueness probe is degenerate")
            x_probe = x_full - u * (x_full[m] / denominator)
        mismatch = np.linalg.norm(x_full[:m] - x_probe[:m]) / max(
            np.linalg.norm(x_full[:m]), 1e-300)
        if not np.all(np.isfinite(x_full)) or mismatch > 1e-8:
            raise SteadyStateError(f"border solves disagree by {mismatch:.2e}")
    except (scipy.linalg.LinAlgError, ValueError, SteadyStateError) as exc:
        null_dim = _null_space_dimension(matrix)
        if null_dim > 1:
            raise DegenerateSteadyStateError(null_dim) from exc
        raise SteadyStateError(f"steady-state solve failed: {exc}") from exc
    return x_full[:m]


def _finalize_steady_state(generator, rho: np.ndarray) -> np.ndarray:
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.trace(rho).real
    residual = np.linalg.norm(generator.apply(rho))
    if residual > STEADY_STATE_RESIDUAL:
        raise SteadyStateError(f"steady-state residual {residual:.3e} above tolerance")
    min_eig = scipy.linalg.eigvalsh(rho)[0]
    if min_eig < -PSD_SLACK:
        raise SteadyStateError(f"steady state not positive: eigenvalue {min_eig:.3e}")
    return rho


def _blocked_generator_matrix(generator: FullGenerator) -> tuple[np.ndarray, np.ndarray]:
    """Generator restricted to the excitation-difference-zero coordinates.

    The Hamiltonian conserves excitation number and every jump operator
    shifts it uniformly, so density-matrix blocks with a fixed excitation
    difference decouple; the steady state is block-diagonal in the excitation
    number. Assembled from per-block Kronecker products (the layout matches
    the row-major vectorization of :meth:`FullGenerator.to_superoperator`).
    Returns the restricted matrix and the flat density-matrix indices of the
    retained coordinates.
    """
    counts = generator.space.excitation_counts
    dim = generator.dim
    blocks = [np.flatnonzero(counts == c) for c in range(counts.max() + 1)]
    sizes = [len(b) ** 2 for b in blocks]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    flat = np.concatenate([(b[:, None] * dim + b[None, :]).reshape(-1) for b in blocks])
    matrix = np.zeros((offsets[-1], offsets[-1]), dtype=complex)
    h = generator.h0
    for c, b in enumerate(blocks):
        eye = np.eye(len(b))
        h_c = h[np.ix_(b, b)]
        part = -1j * (np.kron(h_c, eye) - np.kron(eye, h_c.T))
        if generator._k is not None:
            k_c = generator._k[np.ix_(b, b)]
            part -= 0.5 * (np.kron(k_c, eye) + np.kron(eye, k_c.T))
        sl = slice(offsets[c], offsets[c + 1])
        matrix[sl, sl] += part
    for op in generator.jump_ops:
        rows, cols = np.nonzero(op)
        if rows.size == 0:
            continue
        shift = int(counts[rows[0]] - counts[cols[0]])
        for c_src, b_src in enumerate(blocks):
            c_dst = c_src + shift
            if not 0 <= c_dst < len(blocks):
                continue
            sub = op[np.ix_(blocks[c_dst], b_src)]
            if not np.any(sub):
                continue
            matrix[offsets[c_dst]:offsets[c_dst + 1], offsets[c_src]:offsets[c_src + 1]] += (
                np.kron(sub, sub.conj())
            )
    return matrix, flat


def _steady_state_blocked(generator: FullGenerator) -> np.ndarray:
    matrix, flat = _blocked_generator_matrix(generator)
    dim = generator.dim
    trace_vec = np.zeros(len(flat), dtype=complex)
    trace_vec[flat % dim == flat // dim] = 1.0
    x = _solve_unique_steady(matrix, trace_vec)
    rho = np.zeros((dim, dim), dtype=complex)
    rho.reshape(-1)[flat] = x
    return rho


def stationary_state_from(generator, rho0: np.ndarray) -> np.ndarray:
    """Long-time limit of the evolution started at ``rho0``.

    Projects the initial state onto the kernel of the generator through a
    biorthogonal right/left null basis, which stays well defined when the
    steady state is degenerate (then the limit depends on ``rho0``, e.g. the
    initially empty network). Equals :func:`steady_state` whenever that one
    is unique.
    """
    if getattr(generator, "time_dependent", False):
        raise ValueError("stationary states need a time-independent generator")
    if isinstance(generator, FullGenerator):
        matrix, flat = _blocked_generator_matrix(generator)
        dim = generator.dim
        x0 = np.asarray(rho0, dtype=complex).reshape(-1)[flat]
        off_block = np.linalg.norm(rho0) ** 2 - np.linalg.norm(x0) ** 2
        if off_block > 1e-20:
            raise ValueError("initial state must be block-diagonal in excitation number")
    else:
        matrix = generator.to_superoperator()
        dim = int(np.sqrt(matrix.shape[0]))
        flat = np.arange(dim * dim)
        x0 = np.asarray(rho0, dtype=complex).reshape(-1)
    u, singular, vh = scipy.linalg.svd(matrix)
    cut = 1e-10 * (singular[0] if singular[0] > 0 else 1.0)
    null_idx = np.flatnonzero(singular < cut)
    if null_idx.size == 0:
        raise SteadyStateError("generator kernel is empty at the working precision")
    right = vh[null_idx].conj().T  # columns: right null vectors
    left = u[:, null_idx]
    overlap = left.conj().T @ right
    coeffs = scipy.linalg.solve(overlap, left.conj().T @ x0)
    x_inf = right @ coeffs
    rho = np.zeros((dim, dim), dtype=complex)
    rho.reshape(-1)[flat] = x_inf
    return _finalize_steady_state(generator, rho)


def steady_state(generator) -> np.ndarray:
    """Steady state of a time-independent generator, trace-normalized.

    Solves the vectorized null-space problem subject to unit trace through a
    bordered linear system; generators with an excitation-block structure use
    a reduced solve on the block-diagonal coordinates. The residual is always
    checked against the full generator. Raises
    :class:`DegenerateSteadyStateError` when the null space has dimension
    above one.
    """
    if getattr(generator, "time_dependent", False):
        raise ValueError("steady states need a time-independent generator")
    if isinstance(generator, FullGenerator):
        try:
            return _finalize_steady_state(generator, _steady_state_blocked(generator))
        except DegenerateSteadyStateError:
            raise
        except SteadyStateError:
            pass  # fall back to the dense solve
    sup = generator.to_superoperator()
    dim = int(np.sqrt(sup.shape[0]))
    trace_vec = np.zeros(sup.shape[0], dtype=complex)
    trace_vec[np.arange(dim) * dim + np.arange(dim)] = 1.0
    x = _solve_unique_steady(sup, trace_vec)
    return _finalize_steady_state(generator, x.reshape(dim, dim))


def kraus_decay_step(state: np.ndarray, p_decay: float, i_sink: int) -> np.ndarray:
    """One discrete amplitude-damping step on the sink site (sector basis).

    Applies the two-operator Kraus map that removes probability ``p_decay``
    from the sink population into the vacuum and scales sink coherences by
    sqrt(1 - p_decay). Trace-preserving for any p in [0, 1].
    """
    if not 0.0 <= p_decay <= 1.0:
        raise ValueError("p_decay must lie in [0, 1]")
    if not 1 <= i_sink < state.shape[0]:
        raise ValueError("sink index outside the sector basis")
    out = np.array(state, dtype=complex, copy=True)
    s = i_sink
    keep = np.sqrt(1.0 - p_decay)
    sink_pop = out[s, s].copy()
    out[s, :] *= keep
    out[:, s] *= keep
    out[s, s] = (1.0 - p_decay) * sink_pop
    out[0, 0] += p_decay * sink_pop
    return out


def trotterized_sink_evolution(spec: NetworkSpec, state0: np.ndarray, dt: float,
                               grid) -> PropagationResult:
    """Alternate exact sink-free evolution over ``dt`` with a Kraus decay step.

    Converges to the continuous sink dissipator linearly in ``dt``. Grid
    points must be multiples of ``dt``.
    """
    grid = _as_grid(grid)
    times = grid.points
    sink_free = dataclasses.replace(spec, gamma_sink=0.0)
    gen = build_sector_generator(sink_free)
    step = scipy.linalg.expm(gen.to_superoperator() * dt)
    p = spec.gamma_sink * dt
    if not 0.0 <= p <= 1.0:
        raise ValueError("gamma_sink * dt must lie in [0, 1]")
    dim = gen.dim
    rho = np.asarray(state0, dtype=complex).copy()
    states = np.empty((len(times), dim, dim), dtype=complex)
    absorbed = np.zeros(len(times))
    vac0 = rho[0, 0].real
    t = 0.0
    for k, target in enumerate(times):
        n_steps = int(round((target - t) / dt)) if target > t else 0
        if abs(t + n_steps * dt - target) > 1e-9 * max(1.0, target):
            raise ValueError("grid points must be multiples of dt")
        for _ in range(n_steps):
            rho = (step @ rho.reshape(-1)).reshape(dim, dim)
            rho = kraus_decay_step(rho, p, spec.i_sink)
        t = target
        states[k] = rho
        absorbed[k] = rho[0, 0].real - vac0
    return PropagationResult(times=times, states=states, absorbed=absorbed)
