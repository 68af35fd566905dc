"""Open-network model assembly.

Builds the generators of the excitation-transport master equation from a
declarative :class:`NetworkSpec`: coherent hopping plus on-site energies, an
absorbing sink, an incoherent source, and site dephasing that is either
Markovian (Lindblad) or driven by sampled dichotomic telegraph noise.

Sites are numbered 1..N. The reduced "sector" representation acts on the
(N+1)-dimensional space {vacuum, excitation at site 1, ..., site N}, valid
whenever the source drive is off. The full representation acts on the spin
product space truncated at a maximum excitation number.

All rates and energies are in units of the largest hopping amplitude; time is
measured in its inverse.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .ion_chain import CouplingMatrix

__all__ = [
    "stream_rng",
    "DisorderSpec",
    "MarkovianDephasing",
    "TelegraphDephasing",
    "TelegraphPath",
    "NetworkSpec",
    "SectorGenerator",
    "TruncatedSpace",
    "FullGenerator",
    "OffResonantHamiltonian",
    "sample_disorder",
    "sample_telegraph",
    "build_sector_generator",
    "build_full_generator",
    "build_offresonant_hamiltonian",
    "build_offresonant_generator",
    "initial_state",
    "initial_state_vector",
]

_DISORDER_STREAM = 0
# telegraph site i uses stream id i (site indices start at 1)


def stream_rng(seed: int, sample_index: int, stream_id: int = 0) -> np.random.Generator:
    """Counter-based RNG: a pure function of (seed, sample_index, stream_id).

    Parallel consumers can draw from disjoint streams in any order and still
    reproduce the same numbers.
    """
    return np.random.default_rng([int(seed), int(sample_index), int(stream_id)])


@dataclass(frozen=True)
class DisorderSpec:
    """Static on-site disorder: uniform on [-width, width], per site."""

    width: float
    n_samples: int
    seed: int

    def __post_init__(self):
        if self.width < 0.0:
            raise ValueError("disorder width must be >= 0")
        if self.n_samples < 1:
            raise ValueError("need at least one sample")


@dataclass(frozen=True)
class MarkovianDephasing:
    """Lindblad dephasing with per-site rates."""

    rates: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rates", np.asarray(self.rates, dtype=float))
        if np.any(self.rates < 0.0):
            raise ValueError("dephasing rates must be >= 0")

    @classmethod
    def uniform(cls, gamma: float, n_sites: int) -> "MarkovianDephasing":
        return cls(rates=np.full(n_sites, float(gamma)))


@dataclass(frozen=True)
class TelegraphDephasing:
    """Dichotomic telegraph noise: site energies +-omega_gk/2, flip rate lam.

    In the fast-flipping limit this reduces to Markovian dephasing with rate
    omega_gk**2 / (2 lam).
    """

    omega_gk: float
    flip_rate: float

    def __post_init__(self):
        if self.omega_gk < 0.0 or self.flip_rate < 0.0:
            raise ValueError("telegraph parameters must be >= 0")

    def markovian_rate(self) -> float:
        if self.flip_rate == 0.0:
            raise ValueError("frozen noise has no Markovian limit")
        return self.omega_gk**2 / (2.0 * self.flip_rate)


@dataclass(frozen=True, eq=False)
class TelegraphPath:
    """One realization of independent per-site telegraph processes on [0, horizon]."""

    horizon: float
    initial_signs: np.ndarray
    switch_times: tuple[np.ndarray, ...]

    @property
    def n_sites(self) -> int:
        return self.initial_signs.size

    def signs_at(self, t: float) -> np.ndarray:
        flips = np.array([np.searchsorted(s, t, side="right") for s in self.switch_times])
        return self.initial_signs * np.where(flips % 2 == 0, 1, -1)

    def all_switch_times(self) -> np.ndarray:
        if not self.switch_times:
            return np.empty(0)
        merged = np.concatenate(self.switch_times) if len(self.switch_times) else np.empty(0)
        return np.unique(merged[merged < self.horizon])


def sample_disorder(spec: DisorderSpec, sample_index: int, n_sites: int) -> np.ndarray:
    """Draw one static-disorder realization of on-site energies."""
    if not 0 <= sample_index < spec.n_samples:
        raise ValueError(f"sample_index {sample_index} outside 0..{spec.n_samples - 1}")
    rng = stream_rng(spec.seed, sample_index, _DISORDER_STREAM)
    return rng.uniform(-spec.width, spec.width, n_sites)


def sample_telegraph(
    noise: TelegraphDephasing,
    horizon: float,
    seed: int,
    sample_index: int,
    n_sites: int,
) -> TelegraphPath:
    """Draw one telegraph-noise realization for ``n_sites`` independent sites.

    Each site starts from the equilibrium distribution (sign equiprobable) and
    flips after exponential waiting times of rate ``flip_rate``. Each site has
    its own RNG stream, so paths are reproducible site by site.
    """
    if horizon <= 0.0:
        raise ValueError("horizon must be positive")
    signs = np.empty(n_sites, dtype=int)
    switches = []
    for site in range(1, n_sites + 1):
        rng = stream_rng(seed, sample_index, site)
        signs[site - 1] = 1 if rng.random() < 0.5 else -1
        if noise.flip_rate == 0.0:
            switches.append(np.empty(0))
            continue
        times = []
        t = 0.0
        block = max(8, int(noise.flip_rate * horizon * 1.5) + 8)
        while t < horizon:
            waits = rng.exponential(1.0 / noise.flip_rate, size=block)
            for w in waits:
                t += w
                if t >= horizon:
                    break
                times.append(t)
        switches.append(np.array(times))
    return TelegraphPath(horizon=horizon, initial_signs=signs, switch_times=tuple(switches))


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """Full description of the open network.

    ``i_source`` and ``i_sink`` are 1-based site indices. ``gamma_sink`` is
    the absorption rate at the sink; ``gamma_source`` couples the source site
    to an infinite-temperature bath (both raising and lowering channels at
    half that rate).
    """

    coupling: CouplingMatrix
    site_energies: np.ndarray | None = None
    i_source: int = 1
    i_sink: int = 2
    gamma_sink: float = 1.0
    gamma_source: float = 0.0
    dephasing: MarkovianDephasing | TelegraphDephasing | None = None

    def __post_init__(self):
        n = self.coupling.n_sites
        energies = self.site_energies
        energies = np.zeros(n) if energies is None else np.asarray(energies, dtype=float)
        object.__setattr__(self, "site_energies", energies)
        if energies.shape != (n,):
            raise ValueError(f"site_energies must have length {n}")
        for name, idx in (("i_source", self.i_source), ("i_sink", self.i_sink)):
            if not 1 <= idx <= n:
                raise ValueError(f"{name}={idx} outside 1..{n}")
        if self.i_source == self.i_sink:
            raise ValueError("source and sink must be distinct sites")
        if self.gamma_sink < 0.0 or self.gamma_source < 0.0:
            raise ValueError("rates must be >= 0")

    @property
    def n_sites(self) -> int:
        return self.coupling.n_sites

    def with_site_energies(self, energies: np.ndarray) -> "NetworkSpec":
        return dataclasses.replace(self, site_energies=np.asarray(energies, dtype=float))

    def without_dephasing(self) -> "NetworkSpec":
        return dataclasses.replace(self, dephasing=None)

    def markovian_rates(self) -> np.ndarray:
        if isinstance(self.dephasing, MarkovianDephasing):
            rates = self.dephasing.rates
            if rates.shape != (self.n_sites,):
                raise ValueError("dephasing rates must match the number of sites")
            return rates
        return np.zeros(self.n_sites)


class SectorGenerator:
    """Master-equation generator on the vacuum + single-excitation space.

    Basis index 0 is the vacuum, index i (1..N) the excitation at site i.
    The coherent part hops between sites; the sink moves population from
    site ``i_sink`` to the vacuum at ``gamma_sink`` while damping sink
    coherences at half that rate; Markovian dephasing damps inter-site
    coherences at (gamma_i + gamma_j)/2 and site-vacuum coherences at
    gamma_i/2. Trace-preserving and completely positive by construction.
    """

    time_dependent = False

    def __init__(self, hamiltonian: np.ndarray, gamma_sink: float, i_sink: int,
                 deph_rates: np.ndarray):
        self.h = np.asarray(hamiltonian, dtype=complex)
        self.dim = self.h.shape[0]
        self.n_sites = self.dim - 1
        self.gamma_sink = float(gamma_sink)
        self.i_sink = int(i_sink)  # 1-based site == sector index
        self.deph_rates = np.asarray(deph_rates, dtype=float)
        gamma_ext = np.concatenate([[0.0], self.deph_rates])  # vacuum never dephases
        damp = 0.5 * (gamma_ext[:, None] + gamma_ext[None, :])
        np.fill_diagonal(damp, 0.0)
        self._damp = damp if np.any(damp) else None

    def apply(self, rho: np.ndarray, t: float = 0.0) -> np.ndarray:
        out = -1j * (self.h @ rho - rho @ self.h)
        if self.gamma_sink:
            s = self.i_sink
            out[0, 0] += self.gamma_sink * rho[s, s]
            out[s, :] -= 0.5 * self.gamma_sink * rho[s, :]
            out[:, s] -= 0.5 * self.gamma_sink * rho[:, s]
        if self._damp is not None:
            out -= self._damp * rho
        return out

    def with_site_energies(self, energies: np.ndarray) -> "SectorGenerator":
        h = self.h.copy()
        h[np.arange(1, self.dim), np.arange(1, self.dim)] = np.asarray(energies, dtype=float)
        return SectorGenerator(h, self.gamma_sink, self.i_sink, self.deph_rates)

    def to_superoperator(self) -> np.ndarray:
        """Dense matrix acting on row-major-vectorized density matrices."""
        d = self.dim
        eye = np.eye(d)
        sup = -1j * (np.kron(self.h, eye) - np.kron(eye, self.h.T))
        if self.gamma_sink:
            s = self.i_sink
            jump = np.zeros((d, d))
            jump[0, s] = 1.0
            proj = np.zeros((d, d))
            proj[s, s] = 1.0
            sup += self.gamma_sink * (
                np.kron(jump, jump.conj())
                - 0.5 * (np.kron(proj, eye) + np.kron(eye, proj.T))
            )
        if self._damp is not None:
            sup -= np.diag(self._damp.reshape(-1).astype(complex))
        return sup


def build_sector_generator(spec: NetworkSpec) -> SectorGenerator:
    """Generator of the master equation restricted to the reduced sector.

    Requires ``gamma_source == 0`` (driving leaves the sector). Telegraph
    dephasing is not a static generator; sample paths and use the trajectory
    engine instead.
    """
    if spec.gamma_source != 0.0:
        raise ValueError("sector dynamics requires gamma_source = 0")
    if isinstance(spec.dephasing, TelegraphDephasing):
        raise ValueError(
            "telegraph noise enters through sampled paths; build the generator "
            "from a spec without dephasing and supply time-dependent site energies"
        )
    n = spec.n_sites
    h = np.zeros((n + 1, n + 1), dtype=complex)
    h[1:, 1:] = spec.coupling.entries
    h[np.arange(1, n + 1), np.arange(1, n + 1)] = spec.site_energies
    return SectorGenerator(h, spec.gamma_sink, spec.i_sink, spec.markovian_rates())


class TruncatedSpace:
    """Spin-chain product basis truncated at a maximum excitation number.

    Basis states are bitmasks (bit i-1 set = excitation at site i), ordered
    by excitation count and then by bitmask value, so the vacuum comes first
    and the single-excitation block follows in site order.
    """

    def __init__(self, n_sites: int, max_excitations: int):
        if not 1 <= max_excitations <= n_sites:
            raise ValueError(f"max_excitations must be within 1..{n_sites}")
        self.n_sites = n_sites
        self.max_excitations = max_excitations
        states = [
            mask for mask in range(1 << n_sites)
            if bin(mask).count("1") <= max_excitations
        ]
        states.sort(key=lambda m: (bin(m).count("1"), m))
        self.states = np.array(states, dtype=np.int64)
        self.dim = len(states)
        self.index = {mask: k for k, mask in enumerate(states)}
        self.excitation_counts = np.array([bin(m).count("1") for m in states])

    def number_diag(self, site: int) -> np.ndarray:
        bit = 1 << (site - 1)
        return ((self.states & bit) != 0).astype(float)

    def total_number_diag(self) -> np.ndarray:
        return self.excitation_counts.astype(float)

    def lowering(self, site: int) -> np.ndarray:
        op = np.zeros((self.dim, self.dim))
        bit = 1 << (site - 1)
        for k, mask in enumerate(self.states):
            if mask & bit:
                op[self.index[mask ^ bit], k] = 1.0
        return op

    def raising(self, site: int) -> np.ndarray:
        # truncated: transitions leaving the space are dropped
        op = np.zeros((self.dim, self.dim))
        bit = 1 << (site - 1)
        for k, mask in enumerate(self.states):
            if not mask & bit:
                target = int(mask) | bit
                if target in self.index:
                    op[self.index[target], k] = 1.0
        return op

    def flipflop_hamiltonian(self, coupling: np.ndarray, site_energies: np.ndarray) -> np.ndarray:
        h = np.zeros((self.dim, self.dim), dtype=complex)
        n = self.n_sites
        for k, mask in enumerate(self.states):
            h[k, k] = sum(site_energies[i] for i in range(n) if mask & (1 << i))
            for i, j in combinations(range(n), 2):
                bi, bj = 1 << i, 1 << j
                if (mask & bi) and not (mask & bj):
                    h[self.index[(mask ^ bi) | bj], k] += coupling[i, j]
                elif (mask & bj) and not (mask & bi):
                    h[self.index[(mask ^ bj) | bi], k] += coupling[i, j]
        return h

    def counter_rotating(self, coupling: np.ndarray) -> np.ndarray:
        """Pair-creation part sum_{i<j} J_ij sigma+_i sigma+_j on this space."""
        c = np.zeros((self.dim, self.dim), dtype=complex)
        for k, mask in enumerate(self.states):
            for i, j in combinations(range(self.n_sites), 2):
                bi, bj = 1 << i, 1 << j
                if not (mask & bi) and not (mask & bj):
                    target = int(mask) | bi | bj
                    if target in self.index:
                        c[self.index[target], k] += coupling[i, j]
        return c

    def embed_sector_matrix(self, rho_sector: np.ndarray) -> np.ndarray:
        """Embed a reduced-sector density matrix into this space."""
        n = self.n_sites
        if rho_sector.shape != (n + 1, n + 1):
            raise ValueError("sector state has wrong dimension")
        idx = [self.index[0]] + [self.index[1 << (i - 1)] for i in range(1, n + 1)]
        rho = np.zeros((self.dim, self.dim), dtype=complex)
        rho[np.ix_(idx, idx)] = rho_sector
        return rho


class FullGenerator:
    """Master-equation generator on a :class:`TruncatedSpace`.

    Optionally carries a counter-rotating Hamiltonian piece oscillating at a
    fixed frequency (rotating-frame representation of pair creation terms),
    which makes the generator time-dependent.
    """

    def __init__(self, space: TruncatedSpace, hamiltonian: np.ndarray,
                 jump_ops: list[np.ndarray], gamma_sink: float = 0.0,
                 i_sink: int | None = None,
                 counter: np.ndarray | None = None, counter_freq: float = 0.0):
        self.space = space
        self.dim = space.dim
        self.h0 = np.asarray(hamiltonian, dtype=complex)
        self.jump_ops = [np.asarray(op, dtype=complex) for op in jump_ops]
        self._k = sum(op.conj().T @ op for op in self.jump_ops) if self.jump_ops else None
        self.gamma_sink = float(gamma_sink)
        self.i_sink = i_sink
        self.counter = None if counter is None else np.asarray(counter, dtype=complex)
        self.counter_freq = float(counter_freq)

    @property
    def time_dependent(self) -> bool:
        return self.counter is not None

    def hamiltonian(self, t: float = 0.0) -> np.ndarray:
        if self.counter is None:
            return self.h0
        phase = np.exp(2j * self.counter_freq * t)
        return self.h0 + phase * self.counter + np.conj(phase) * self.counter.conj().T

    def apply(self, rho: np.ndarray, t: float = 0.0) -> np.ndarray:
        h = self.hamiltonian(t)
        out = -1j * (h @ rho - rho @ h)
        if self.jump_ops:
            for op in self.jump_ops:
                out += op @ rho @ op.conj().T
            out -= 0.5 * (self._k @ rho + rho @ self._k)
        return out

    def sink_number_diag(self) -> np.ndarray | None:
        if self.i_sink is None:
            return None
        return self.space.number_diag(self.i_sink)

    def to_superoperator(self) -> np.ndarray:
        if self.time_dependent:
            raise ValueError("no static superoperator for a time-dependent generator")
        eye = np.eye(self.dim)
        sup = -1j * (np.kron(self.h0, eye) - np.kron(eye, self.h0.T))
        for op in self.jump_ops:
            sup += np.kron(op, op.conj())
        if self._k is not None:
            sup -= 0.5 * (np.kron(self._k, eye) + np.kron(eye, self._k.T))
        return sup


def build_full_generator(spec: NetworkSpec, max_excitations: int) -> FullGenerator:
    """Generator on the excitation-number-truncated many-body space.

    Carries the hopping Hamiltonian with on-site energies, the sink
    dissipator, Markovian dephasing, and the infinite-temperature source
    (raising and lowering channels, each at half ``gamma_source``).
    """
    if isinstance(spec.dephasing, TelegraphDephasing):
        raise ValueError("telegraph noise enters through sampled paths, not the static generator")
    space = TruncatedSpace(spec.n_sites, max_excitations)
    h = space.flipflop_hamiltonian(spec.coupling.entries, spec.site_energies)
    jumps = []
    if spec.gamma_sink > 0.0:
        jumps.append(np.sqrt(spec.gamma_sink) * space.lowering(spec.i_sink))
    for site, rate in enumerate(spec.markovian_rates(), start=1):
        if rate > 0.0:
            jumps.append(np.sqrt(rate) * np.diag(space.number_diag(site)))
    if spec.gamma_source > 0.0:
        jumps.append(np.sqrt(spec.gamma_source / 2.0) * space.lowering(spec.i_source))
        jumps.append(np.sqrt(spec.gamma_source / 2.0) * space.raising(spec.i_source))
    return FullGenerator(space, h, jumps, gamma_sink=spec.gamma_sink, i_sink=spec.i_sink)


@dataclass(frozen=True, eq=False)
class OffResonantHamiltonian:
    """Rotating-frame Hamiltonian of the full spin-spin interaction.

    The excitation-conserving part equals the hopping Hamiltonian; the
    counter-rotating pair terms oscillate at twice the constant on-site
    energy, so excitation number is not conserved.
    """

    space: TruncatedSpace
    static: np.ndarray
    counter: np.ndarray
    omega_const: float

    def matrix(self, t: float = 0.0) -> np.ndarray:
        phase = np.exp(2j * self.omega_const * t)
        return self.static + phase * self.counter + np.conj(phase) * self.counter.conj().T


def build_offresonant_hamiltonian(
    coupling: CouplingMatrix,
    omega_const: float,
    max_excitations: int = 3,
) -> OffResonantHamiltonian:
    """Rotating-frame form of H = sum J_ij sigma^x_i sigma^x_j + const on-site terms."""
    if omega_const < 0.0:
        raise ValueError("omega_const must be >= 0")
    space = TruncatedSpace(coupling.n_sites, max_excitations)
    static = space.flipflop_hamiltonian(coupling.entries, np.zeros(coupling.n_sites))
    counter = space.counter_rotating(coupling.entries)
    return OffResonantHamiltonian(space=space, static=static, counter=counter,
                                  omega_const=omega_const)


def build_offresonant_generator(
    coupling: CouplingMatrix,
    omega_const: float,
    i_sink: int,
    gamma_sink: float,
    max_excitations: int = 3,
) -> FullGenerator:
    """Off-resonant Hamiltonian combined with the absorbing sink."""
    h = build_offresonant_hamiltonian(coupling, omega_const, max_excitations)
    jumps = []
    if gamma_sink > 0.0:
        jumps.append(np.sqrt(gamma_sink) * h.space.lowering(i_sink))
    return FullGenerator(h.space, h.static, jumps, gamma_sink=gamma_sink, i_sink=i_sink,
                         counter=h.counter, counter_freq=h.omega_const)


def initial_state_vector(spec: NetworkSpec, kind: str, site: int | None = None) -> np.ndarray:
    """Pure initial state as amplitudes on the reduced sector basis.

    Kinds: ``single_excitation_at_source``, ``vacuum``, and
    ``superposition_half_site`` which puts (|vac> + |site>)/sqrt(2).
    """
    n = spec.n_sites
    psi = np.zeros(n + 1, dtype=complex)
    if kind == "single_excitation_at_source":
        psi[spec.i_source] = 1.0
    elif kind == "vacuum":
        psi[0] = 1.0
    elif kind == "superposition_half_site":
        if site is None or not 1 <= site <= n:
            raise ValueError(f"superposition_half_site needs a site within 1..{n}")
        psi[0] = 1.0 / np.sqrt(2.0)
        psi[site] = 1.0 / np.sqrt(2.0)
    else:
        raise ValueError(f"unknown initial state kind {kind!r}")
    return psi


def initial_state(spec: NetworkSpec, kind: str, site: int | None = None) -> np.ndarray:
    """Pure initial state as a density matrix on the reduced sector."""
    psi = initial_state_vector(spec, kind, site)
    return np.outer(psi, psi.conj())
