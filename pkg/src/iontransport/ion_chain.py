"""Coupling matrices for linear ion chains and their range analysis.

Everything is expressed in dimensionless trap units: axial positions in
Coulomb-crystal length units, mode frequencies in units of the axial trap
frequency, and coupling matrices normalized so that the largest hopping
amplitude is 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize_scalar

__all__ = [
    "TrapParams",
    "ChainModes",
    "CouplingMeta",
    "CouplingMatrix",
    "EquilibriumError",
    "StructuralInstabilityError",
    "equilibrium_positions",
    "chain_modes",
    "transverse_modes",
    "ms_coupling_matrix",
    "ideal_power_law",
    "fully_connected",
    "fit_alpha",
    "avg_group_velocity",
    "detuning_for_exponent",
]


class EquilibriumError(RuntimeError):
    """Root solve for the crystal equilibrium failed to converge."""


class StructuralInstabilityError(ValueError):
    """A transverse mode has non-positive squared frequency (zig-zag onset)."""


@dataclass(frozen=True)
class TrapParams:
    """Linear Paul trap described by ion count and transverse/axial ratio."""

    n_ions: int
    ratio: float

    def __post_init__(self):
        if self.n_ions < 1:
            raise ValueError("n_ions must be >= 1")
        if not self.ratio > 1.0:
            raise ValueError("transverse confinement must be stiffer than axial (ratio > 1)")


@dataclass(frozen=True, eq=False)
class ChainModes:
    """Equilibrium positions plus transverse normal-mode data of a chain.

    ``mode_freqs`` is ascending; ``mode_matrix[:, n]`` is the orthonormal
    eigenvector of mode ``n``.
    """

    positions: np.ndarray
    mode_freqs: np.ndarray
    mode_matrix: np.ndarray

    @property
    def n_ions(self) -> int:
        return self.positions.size


@dataclass(frozen=True)
class CouplingMeta:
    """Provenance of a coupling matrix.

    ``kind`` is one of ``ideal-power-law``, ``ms-detuning``,
    ``fully-connected``. For phonon-mediated matrices the chain positions are
    kept so range fits can use physical inter-ion distances.
    """

    kind: str
    alpha: float | None = None
    detuning: float | None = None
    ratio: float | None = None
    positions: np.ndarray | None = field(default=None, repr=False)

    def tag(self) -> str:
        if self.kind == "ideal-power-law":
            return f"ideal-power-law alpha={self.alpha:g}"
        if self.kind == "ms-detuning":
            return f"ms-detuning delta={self.detuning:g} ratio={self.ratio:g}"
        return self.kind


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """Symmetric hopping matrix with zero diagonal, normalized to max |J| = 1."""

    entries: np.ndarray
    meta: CouplingMeta

    def __post_init__(self):
        j = self.entries
        if j.ndim != 2 or j.shape[0] != j.shape[1] or j.shape[0] < 2:
            raise ValueError("coupling matrix must be square with at least 2 sites")
        if not np.allclose(j, j.T, atol=1e-12):
            raise ValueError("coupling matrix must be symmetric")
        if np.max(np.abs(np.diag(j))) > 1e-12:
            raise ValueError("coupling matrix must have zero diagonal")
        if abs(np.max(np.abs(j)) - 1.0) > 1e-10:
            raise ValueError("coupling matrix must be normalized to max |J| = 1")

    @property
    def n_sites(self) -> int:
        return self.entries.shape[0]


def _coulomb_force(u: np.ndarray) -> np.ndarray:
    # net dimensionless force (harmonic + Coulomb) on each ion
    d = u[:, None] - u[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        pairwise = np.where(d != 0.0, np.sign(d) / d**2, 0.0)
    return -u + pairwise.sum(axis=1)


def _force_jacobian(u: np.ndarray) -> np.ndarray:
    d = u[:, None] - u[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv3 = np.where(d != 0.0, 1.0 / np.abs(d) ** 3, 0.0)
    jac = 2.0 * inv3
    np.fill_diagonal(jac, -1.0 - 2.0 * inv3.sum(axis=1))
    return jac


def equilibrium_positions(n_ions: int, max_iter: int = 200) -> np.ndarray:
    """Equilibrium positions of ``n_ions`` ions in a harmonic axial trap.

    Damped Newton iteration from a uniform-spacing ansatz; the returned
    positions are sorted ascending, antisymmetric about the trap center, and
    balance the net force on every ion to below 1e-12.
    """
    if n_ions < 1:
        raise ValueError("n_ions must be >= 1")
    if n_ions == 1:
        return np.zeros(1)
    spacing = 2.018 / n_ions**0.559
    u = (np.arange(n_ions) - (n_ions - 1) / 2.0) * spacing
    f = _coulomb_force(u)
    for _ in range(max_iter):
        if np.max(np.abs(f)) < 5e-13:
            break
        step = np.linalg.solve(_force_jacobian(u), -f)
        norm0 = np.linalg.norm(f)
        lam, improved = 1.0, False
        while lam > 1e-6:
            trial = u + lam * step
            if np.all(np.diff(trial) > 0.0):
                f_trial = _coulomb_force(trial)
                if np.linalg.norm(f_trial) < norm0:
                    u, f, improved = trial, f_trial, True
                    break
            lam *= 0.5
        if not improved:
            break  # line search exhausted; accept if residual is good enough
    u = 0.5 * (u - u[::-1])  # exact antisymmetry about the trap center
    residual = np.max(np.abs(_coulomb_force(u)))
    if residual >= 1e-12:
        raise EquilibriumError(
            f"equilibrium solve did not converge for N={n_ions}: max residual force {residual:.3e}"
        )
    return u


def _transverse_hessian(positions: np.ndarray, ratio: float) -> np.ndarray:
    d = positions[:, None] - positions[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        inv3 = np.where(d != 0.0, 1.0 / np.abs(d) ** 3, 0.0)
    a = inv3.copy()
    np.fill_diagonal(a, ratio**2 - inv3.sum(axis=1))
    return a


def transverse_modes(positions: np.ndarray, ratio: float) -> ChainModes:
    """Transverse normal modes of a chain at the given equilibrium positions.

    Diagonalizes the transverse Hessian; mode frequencies come out in units
    of the axial trap frequency, ascending, with the center-of-mass mode at
    exactly ``ratio`` on top.
    """
    positions = np.asarray(positions, dtype=float)
    if not ratio > 1.0:
        raise ValueError("ratio must exceed 1")
    hessian = _transverse_hessian(positions, ratio)
    freqs_sq, vectors = np.linalg.eigh(hessian)
    if np.any(freqs_sq <= 0.0):
        bad = int(np.argmin(freqs_sq))
        raise StructuralInstabilityError(
            f"transverse mode {bad} has non-positive squared frequency "
            f"{freqs_sq[bad]:.6g}; chain is past the zig-zag transition"
        )
    return ChainModes(positions=positions, mode_freqs=np.sqrt(freqs_sq), mode_matrix=vectors)


def chain_modes(trap: TrapParams) -> ChainModes:
    """Equilibrium positions and transverse modes for a trap in one call."""
    return transverse_modes(equilibrium_positions(trap.n_ions), trap.ratio)


def ms_coupling_matrix(modes: ChainModes, detuning: float) -> CouplingMatrix:
    """Phonon-mediated spin-spin couplings of a bichromatically driven chain.

    Couplings are resonantly enhanced near the transverse modes,
    J_ij ~ sum_n b_in b_jn / (detuning^2 - nu_n^2), and are returned with
    their sign structure intact, normalized to max |J| = 1.
    """
    nu = modes.mode_freqs
    if np.min(np.abs(detuning - nu)) <= 1e-6:
        raise ValueError(
            f"detuning {detuning:g} is resonant with a transverse mode "
            f"(closest: {nu[np.argmin(np.abs(detuning - nu))]:.9g})"
        )
    b = modes.mode_matrix
    raw = (b / (detuning**2 - nu**2)) @ b.T
    np.fill_diagonal(raw, 0.0)
    raw /= np.max(np.abs(raw))
    return CouplingMatrix(
        entries=raw,
        meta=CouplingMeta(
            kind="ms-detuning",
            detuning=detuning,
            ratio=float(nu[-1]),
            positions=modes.positions.copy(),
        ),
    )


def _power_law_entries(distances: np.ndarray, alpha: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        j = np.where(distances > 0.0, distances ** (-alpha), 0.0)
    return j / np.max(j)


def ideal_power_law(n_ions: int, alpha: float) -> CouplingMatrix:
    """All-positive couplings falling off as |i - j|^-alpha."""
    if n_ions < 2:
        raise ValueError("need at least 2 sites")
    if alpha < 0.0:
        raise ValueError("alpha must be >= 0")
    idx = np.arange(float(n_ions))
    distances = np.abs(idx[:, None] - idx[None, :])
    return CouplingMatrix(
        entries=_power_law_entries(distances, alpha),
        meta=CouplingMeta(kind="ideal-power-law", alpha=alpha),
    )


def fully_connected(n_ions: int) -> CouplingMatrix:
    """Complete graph with all off-diagonal couplings equal to 1."""
    if n_ions < 2:
        raise ValueError("need at least 2 sites")
    entries = np.ones((n_ions, n_ions)) - np.eye(n_ions)
    return CouplingMatrix(entries=entries, meta=CouplingMeta(kind="fully-connected", alpha=0.0))


def _fit_distances(coupling: CouplingMatrix) -> np.ndarray:
    # phonon-mediated matrices are fit over physical inter-ion distances;
    # index distance is exact for the synthetic families
    if coupling.meta.positions is not None:
        u = coupling.meta.positions
        return np.abs(u[:, None] - u[None, :])
    idx = np.arange(float(coupling.n_sites))
    return np.abs(idx[:, None] - idx[None, :])


def fit_alpha(coupling: CouplingMatrix) -> tuple[float, float]:
    """Best power-law exponent for a coupling matrix, from its spectrum.

    Minimizes the squared distance between the ascending eigenvalues of the
    input (already normalized to max |J| = 1) and those of a power-law matrix
    over the same geometry. One-dimensional bounded search over
    alpha in [0, 6] to 1e-6. Returns ``(alpha, chi2)``.
    """
    if coupling.n_sites < 3:
        raise ValueError("need at least 3 sites for a range fit")
    distances = _fit_distances(coupling)
    target = np.sort(np.linalg.eigvalsh(coupling.entries))

    def chi2(alpha: float) -> float:
        trial = np.sort(np.linalg.eigvalsh(_power_law_entries(distances, alpha)))
        return float(np.sum((target - trial) ** 2))

    result = minimize_scalar(chi2, bounds=(0.0, 6.0), method="bounded", options={"xatol": 1e-6})
    return float(result.x), float(result.fun)


def avg_group_velocity(coupling: CouplingMatrix) -> float:
    """Average spin-wave group velocity (N-1)(w_max - w_min)/pi."""
    if coupling.n_sites < 2:
        raise ValueError("need at least 2 sites")
    eigenvalues = np.linalg.eigvalsh(coupling.entries)
    return (coupling.n_sites - 1) * (eigenvalues[-1] - eigenvalues[0]) / np.pi


def detuning_for_exponent(
    modes: ChainModes,
    alpha: float,
    frac_lo: float = 1e-4,
    frac_hi: float = 30.0,
) -> float:
    """Detuning above the top transverse mode whose fitted exponent is ``alpha``.

    The fitted exponent grows monotonically with detuning from ~0 (just above
    the center-of-mass mode) towards 3 (dipolar limit), so a bracketed root
    solve applies. Raises if ``alpha`` is outside the reachable range.
    """
    nu_max = modes.mode_freqs[-1]

    def mismatch(delta: float) -> float:
        return fit_alpha(ms_coupling_matrix(modes, delta))[0] - alpha

    lo, hi = nu_max * (1.0 + frac_lo), nu_max * frac_hi
    f_lo, f_hi = mismatch(lo), mismatch(hi)
    if f_lo * f_hi > 0.0:
        raise ValueError(
            f"exponent {alpha:g} not reachable: fitted range is "
            f"[{f_lo + alpha:.3f}, {f_hi + alpha:.3f}] for this chain"
        )
    return brentq(mismatch, lo, hi, xtol=1e-10 * nu_max)
