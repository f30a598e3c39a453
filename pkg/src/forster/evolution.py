"""Unitary evolution of the collective state under a static Hamiltonian.

Phase convention: exp(-i·2π·E·t) with E in MHz and t in µs.
"""

from __future__ import annotations

import numpy as np

from .basis import CollectiveBasis
from .interaction import InteractionHamiltonian

TWO_PI = 2.0 * np.pi
MIN_RK4_STEP = 1e-9  # µs


class PropagationError(RuntimeError):
    pass


def _matrix(h) -> np.ndarray:
    return h.entries if isinstance(h, InteractionHamiltonian) else np.asarray(h)


def initial_state(basis: CollectiveBasis) -> np.ndarray:
    """All atoms in P, which is always basis state 0."""
    psi = np.zeros(basis.dim, dtype=complex)
    psi[0] = 1.0
    return psi


def propagate(h, psi0: np.ndarray, t: float) -> np.ndarray:
    """Exact propagation through the Hermitian eigendecomposition of ``h``."""
    if t < 0:
        raise ValueError(f"interaction time must be >= 0, got {t}")
    mat = _matrix(h)
    psi0 = np.asarray(psi0, dtype=complex)
    try:
        energies, vecs = np.linalg.eigh(mat)
    except np.linalg.LinAlgError as exc:
        raise PropagationError(
            f"eigendecomposition failed for {mat.shape[0]}x{mat.shape[0]} matrix "
            f"(max |entry| {np.abs(mat).max():.3g} MHz, "
            f"hermiticity defect {np.abs(mat - mat.conj().T).max():.3g}): {exc}"
        ) from exc
    phases = np.exp(-1j * TWO_PI * energies * t)
    return vecs @ (phases * (vecs.conj().T @ psi0))


def propagate_rk4(h, psi0: np.ndarray, t: float, max_phase_step: float = 0.01) -> np.ndarray:
    """Fixed-step RK4 integration of dψ/dt = -i·2π·H·ψ, without renormalisation.

    The step is chosen so that 2π·‖H‖₂·dt <= max_phase_step (at most 0.05).
    """
    if t < 0:
        raise ValueError(f"interaction time must be >= 0, got {t}")
    if not 0 < max_phase_step <= 0.05:
        raise ValueError("max_phase_step must lie in (0, 0.05]")
    mat = _matrix(h)
    psi = np.array(psi0, dtype=complex)
    if t == 0:
        return psi
    norm = np.linalg.norm(mat, 2)
    n_steps = max(1, int(np.ceil(TWO_PI * norm * t / max_phase_step)))
    dt = t / n_steps
    if dt < MIN_RK4_STEP:
        raise PropagationError(f"RK4 step {dt:.3g} µs underflows the {MIN_RK4_STEP} µs floor (‖H‖ = {norm:.3g} MHz)")
    gen = -1j * TWO_PI * mat
    for _ in range(n_steps):
        k1 = gen @ psi
        k2 = gen @ (psi + 0.5 * dt * k1)
        k3 = gen @ (psi + 0.5 * dt * k2)
        k4 = gen @ (psi + dt * k3)
        psi = psi + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return psi


def transfer_fraction(psi: np.ndarray, basis: CollectiveBasis) -> float:
    """Expected fraction of atoms in 37S: Σ |c|²·m / i."""
    return float(np.sum(np.abs(psi) ** 2 * basis.flip_counts()) / basis.i)
